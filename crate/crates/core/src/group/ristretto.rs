use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::traits::Identity;
use curve25519_dalek::Scalar;
use rand::RngCore;

use super::{wide_hash, Group, GroupEncoding, ScalarField};
use crate::error::{Error, Result};

/// `2^252 + 27742317777372353535851937790883648493`, big-endian.
const ORDER_HEX: &str = "1000000000000000000000000000000014def9dea2f79cd65812631a5cf5d3ed";

/// The ristretto255 prime-order group over Curve25519.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ristretto255;

impl ScalarField for Scalar {
    const ENCODED_LEN: usize = 32;

    fn zero() -> Self {
        Scalar::ZERO
    }

    fn one() -> Self {
        Scalar::ONE
    }

    fn from_u64(v: u64) -> Self {
        Scalar::from(v)
    }

    fn invert(&self) -> Option<Self> {
        if *self == Scalar::ZERO {
            None
        } else {
            Some(Scalar::invert(self))
        }
    }

    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    fn from_wide_bytes(bytes: &[u8; 64]) -> Self {
        Scalar::from_bytes_mod_order_wide(bytes)
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut b = Scalar::to_bytes(self);
        b.reverse();
        b.to_vec()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut le: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Decode("scalar must be 32 bytes".into()))?;
        le.reverse();
        Option::from(Scalar::from_canonical_bytes(le))
            .ok_or_else(|| Error::Decode("non-canonical scalar".into()))
    }
}

impl GroupEncoding for RistrettoPoint {
    const ENCODED_LEN: usize = 32;

    fn to_bytes(&self) -> Vec<u8> {
        self.compress().to_bytes().to_vec()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        CompressedRistretto::from_slice(bytes)
            .ok()
            .and_then(|c| c.decompress())
            .ok_or_else(|| Error::Decode("invalid ristretto encoding".into()))
    }
}

impl Group for Ristretto255 {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    const ID: &'static str = "ristretto255";

    fn order_bytes() -> Vec<u8> {
        hex::decode(ORDER_HEX).expect("constant")
    }

    fn generator() -> RistrettoPoint {
        RISTRETTO_BASEPOINT_POINT
    }

    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn mul(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn invert(a: &RistrettoPoint) -> RistrettoPoint {
        -a
    }

    fn exp(base: &RistrettoPoint, e: &Scalar) -> RistrettoPoint {
        if *base == RISTRETTO_BASEPOINT_POINT {
            RistrettoPoint::mul_base(e)
        } else {
            base * e
        }
    }

    fn hash_to_group(domain_tag: &[u8], data: &[u8]) -> RistrettoPoint {
        RistrettoPoint::from_uniform_bytes(&wide_hash(b"group", domain_tag, data, 0))
    }
}
