//! Prime-order group abstraction used by every protocol layer.
//!
//! The protocol is written in multiplicative notation: the group operation is
//! [`Group::mul`] and repeated application is [`Group::exp`]. Two backends are
//! provided:
//!
//! - [`Ristretto255`], a ~252-bit prime-order group for real use;
//! - [`ToyGroup`], the order-11 subgroup of `(Z/23Z)^*` generated by 2, small
//!   enough that discrete logarithms and key spaces can be brute forced in tests.
//!
//! Scalars encode as fixed-width big-endian bytes, elements with the backend's
//! canonical compressed encoding. Both appear as lowercase hex in text formats.

mod ristretto;
mod toy;

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha512};

use crate::error::{Error, Result};

pub use ristretto::Ristretto255;
pub use toy::{ToyElement, ToyGroup, ToyScalar};

/// Integers modulo the group order `q`.
pub trait ScalarField:
    Copy
    + Eq
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    /// Width of the canonical big-endian encoding.
    const ENCODED_LEN: usize;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    /// Multiplicative inverse, `None` for zero.
    fn invert(&self) -> Option<Self>;
    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self;
    /// Reduces 64 uniformly distributed bytes into the field.
    fn from_wide_bytes(bytes: &[u8; 64]) -> Self;
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self>;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    fn random_nonzero<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }
}

/// Canonical byte encoding of a group element.
pub trait GroupEncoding: Copy + Eq + Debug + Send + Sync + 'static {
    const ENCODED_LEN: usize;

    fn to_bytes(&self) -> Vec<u8>;
    /// Rejects anything that is not the canonical encoding of a group element.
    fn from_bytes(bytes: &[u8]) -> Result<Self>;
}

/// A cyclic group of prime order `q` with a fixed generator `g`.
pub trait Group: Copy + Clone + Debug + Default + Eq + Send + Sync + 'static {
    type Scalar: ScalarField;
    type Element: GroupEncoding;

    /// Backend identifier recorded in petition headers.
    const ID: &'static str;

    /// The group order as big-endian bytes.
    fn order_bytes() -> Vec<u8>;
    fn generator() -> Self::Element;
    fn identity() -> Self::Element;
    fn mul(a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn invert(a: &Self::Element) -> Self::Element;
    fn exp(base: &Self::Element, e: &Self::Scalar) -> Self::Element;

    /// Maps `(domain_tag, data)` to a group element whose discrete logarithm
    /// with respect to [`Group::generator`] is unknown.
    fn hash_to_group(domain_tag: &[u8], data: &[u8]) -> Self::Element;

    fn exp_g(e: &Self::Scalar) -> Self::Element {
        Self::exp(&Self::generator(), e)
    }

    fn is_identity(a: &Self::Element) -> bool {
        *a == Self::identity()
    }

    fn hash_to_scalar(domain_tag: &[u8], data: &[u8]) -> Self::Scalar {
        Self::Scalar::from_wide_bytes(&wide_hash(b"scalar", domain_tag, data, 0))
    }

    fn product<'a, I>(elements: I) -> Self::Element
    where
        I: IntoIterator<Item = &'a Self::Element>,
    {
        elements
            .into_iter()
            .fold(Self::identity(), |acc, e| Self::mul(&acc, e))
    }

    fn desc() -> GroupDesc {
        GroupDesc {
            id: Self::ID.to_string(),
            order: hex::encode(Self::order_bytes()),
            generator: hex::encode(Self::generator().to_bytes()),
        }
    }
}

/// Public description of the group a petition lives in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDesc {
    pub id: String,
    /// Big-endian hex of `q`.
    pub order: String,
    /// Hex encoding of `g`.
    pub generator: String,
}

impl GroupDesc {
    /// Checks that this description names the backend `G` exactly.
    pub fn check<G: Group>(&self) -> Result<()> {
        if *self != G::desc() {
            return Err(Error::Decode(format!(
                "group description {} does not match backend {}",
                self.id,
                G::ID
            )));
        }
        Ok(())
    }
}

/// The four field operations, for callers that pick the operation at runtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarOp {
    Add,
    Sub,
    Mul,
    Inv,
}

/// Applies `op` to `a` (and `b` for binary operations).
pub fn scalar_arith<S: ScalarField>(a: S, b: S, op: ScalarOp) -> Result<S> {
    Ok(match op {
        ScalarOp::Add => a + b,
        ScalarOp::Sub => a - b,
        ScalarOp::Mul => a * b,
        ScalarOp::Inv => a.invert().ok_or(Error::NonInvertible)?,
    })
}

/// SHA-512 over a length-prefixed domain tag, the data and a counter.
pub(crate) fn wide_hash(purpose: &[u8], domain_tag: &[u8], data: &[u8], counter: u32) -> [u8; 64] {
    let mut h = Sha512::new();
    h.update(b"threshold-petition/v1/");
    h.update(purpose);
    h.update((domain_tag.len() as u64).to_be_bytes());
    h.update(domain_tag);
    h.update((data.len() as u64).to_be_bytes());
    h.update(data);
    h.update(counter.to_be_bytes());
    h.finalize().into()
}

pub fn scalar_to_hex<S: ScalarField>(s: &S) -> String {
    hex::encode(s.to_bytes())
}

pub fn scalar_from_hex<S: ScalarField>(s: &str) -> Result<S> {
    S::from_bytes(&decode_hex(s)?)
}

pub fn element_to_hex<E: GroupEncoding>(e: &E) -> String {
    hex::encode(e.to_bytes())
}

pub fn element_from_hex<E: GroupEncoding>(s: &str) -> Result<E> {
    E::from_bytes(&decode_hex(s)?)
}

/// Strict lowercase hex decoding; text formats are canonical so uppercase is rejected.
pub fn decode_hex(s: &str) -> Result<Vec<u8>> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(Error::Decode("hex must be lowercase".into()));
    }
    hex::decode(s).map_err(|e| Error::Decode(format!("bad hex: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn homomorphism<G: Group>() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = G::Scalar::random(&mut rng);
            let b = G::Scalar::random(&mut rng);
            assert_eq!(G::mul(&G::exp_g(&a), &G::exp_g(&b)), G::exp_g(&(a + b)));
        }
    }

    fn exponent_law<G: Group>() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = G::Scalar::random(&mut rng);
            let b = G::Scalar::random(&mut rng);
            assert_eq!(G::exp(&G::exp_g(&a), &b), G::exp_g(&(a * b)));
        }
        assert_eq!(G::exp_g(&G::Scalar::zero()), G::identity());
    }

    fn roundtrip<G: Group>() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = G::Scalar::random(&mut rng);
            let bytes = s.to_bytes();
            assert_eq!(bytes.len(), G::Scalar::ENCODED_LEN);
            assert_eq!(G::Scalar::from_bytes(&bytes).unwrap(), s);
            let e = G::exp_g(&s);
            let eb = e.to_bytes();
            assert_eq!(eb.len(), G::Element::ENCODED_LEN);
            assert_eq!(G::Element::from_bytes(&eb).unwrap(), e);
        }
        let id = G::identity();
        assert_eq!(G::Element::from_bytes(&id.to_bytes()).unwrap(), id);
        G::desc().check::<G>().unwrap();
    }

    fn hashing<G: Group>() {
        let a = G::hash_to_scalar(b"tag-a", b"data");
        assert_eq!(a, G::hash_to_scalar(b"tag-a", b"data"));
        let h = G::hash_to_group(b"tag", b"data");
        assert_eq!(h, G::hash_to_group(b"tag", b"data"));
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut data = [0u8; 16];
            rng.fill_bytes(&mut data);
            assert!(!G::is_identity(&G::hash_to_group(b"tag", &data)));
        }
    }

    #[test]
    fn toy_homomorphism() {
        homomorphism::<ToyGroup>();
        exponent_law::<ToyGroup>();
        roundtrip::<ToyGroup>();
        hashing::<ToyGroup>();
    }

    #[test]
    fn ristretto_homomorphism() {
        homomorphism::<Ristretto255>();
        exponent_law::<Ristretto255>();
        roundtrip::<Ristretto255>();
        hashing::<Ristretto255>();
    }

    #[test]
    fn ristretto_domain_separation() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut data = [0u8; 32];
            rng.fill_bytes(&mut data);
            let a = Ristretto255::hash_to_scalar(b"one", &data);
            let b = Ristretto255::hash_to_scalar(b"two", &data);
            assert_ne!(a, b);
        }
    }

    #[test]
    fn toy_domain_separation_is_statistical() {
        // 11 outputs: two independent functions agree about 1/11 of the time.
        let mut agree = 0;
        let trials = 11_000;
        for i in 0u32..trials {
            let d = i.to_be_bytes();
            if ToyGroup::hash_to_scalar(b"one", &d) == ToyGroup::hash_to_scalar(b"two", &d) {
                agree += 1;
            }
        }
        assert!((700..1300).contains(&agree), "agreement count {agree}");
    }

    #[test]
    fn scalar_arith_small_field() {
        let s = ToyScalar::new;
        assert_eq!(scalar_arith(s(7), s(8), ScalarOp::Add).unwrap(), s(4));
        assert_eq!(scalar_arith(s(9), s(0), ScalarOp::Inv).unwrap(), s(5));
        assert_eq!(scalar_arith(s(3), s(5), ScalarOp::Sub).unwrap(), s(9));
        assert_eq!(scalar_arith(s(6), s(1), ScalarOp::Mul).unwrap(), s(6));
        assert!(matches!(
            scalar_arith(s(0), s(0), ScalarOp::Inv),
            Err(Error::NonInvertible)
        ));
        assert_eq!(Error::NonInvertible.to_string(), "non-invertible");
    }

    #[test]
    fn inverse_brute_force_oracle() {
        for a in 1..11u64 {
            let brute = (1..11u64).find(|x| (a * x) % 11 == 1).unwrap();
            assert_eq!(ToyScalar::from_u64(a).invert().unwrap(), ToyScalar::from_u64(brute));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for _ in 0..100 {
            let a = <Ristretto255 as Group>::Scalar::random_nonzero(&mut rng);
            let inv = scalar_arith(a, a, ScalarOp::Inv).unwrap();
            let one = <<Ristretto255 as Group>::Scalar as ScalarField>::one();
            assert_eq!(a * inv, one);
            assert_eq!(a * one, a);
        }
    }

    #[test]
    fn hex_is_strict() {
        assert!(decode_hex("AB").is_err());
        assert!(decode_hex("0").is_err());
        assert_eq!(decode_hex("ab").unwrap(), vec![0xab]);
    }
}
