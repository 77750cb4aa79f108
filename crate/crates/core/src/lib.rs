//! Threshold secret petitions.
//!
//! Signatures on a petition stay encrypted until `n` of them exist. Each
//! accepted signature publishes one additive fragment of the decryption key,
//! so the key becomes public exactly when the `n`-th fragment appears.

pub mod chain;
pub mod dist_hash;
pub mod dkg;
pub mod elgamal;
pub mod encoding;
pub mod error;
pub mod group;
pub mod params;
pub mod protocol;
pub mod setup;
pub mod vss;

pub use error::{Error, Result};
