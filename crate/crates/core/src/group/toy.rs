//! The order-11 subgroup of `(Z/23Z)^*`, generated by 2.
//!
//! Only useful for tests: every secret in this group can be found by exhaustive
//! search, which is exactly what the oracle tests do.

use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, RngCore};

use super::{wide_hash, Group, GroupEncoding, ScalarField};
use crate::error::{Error, Result};

/// Modulus of the ambient group.
pub const TOY_MODULUS: u64 = 23;
/// Order of the subgroup, and therefore of the scalar field.
pub const TOY_ORDER: u64 = 11;
/// `(TOY_MODULUS - 1) / TOY_ORDER`.
pub const TOY_COFACTOR: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyScalar(u8);

impl ToyScalar {
    pub fn new(v: u64) -> Self {
        Self((v % TOY_ORDER) as u8)
    }

    pub fn value(self) -> u64 {
        self.0 as u64
    }
}

impl Add for ToyScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value() + rhs.value())
    }
}

impl Sub for ToyScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value() + TOY_ORDER - rhs.value())
    }
}

impl Mul for ToyScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.value() * rhs.value())
    }
}

impl Neg for ToyScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(TOY_ORDER - self.value())
    }
}

impl ScalarField for ToyScalar {
    const ENCODED_LEN: usize = 1;

    fn zero() -> Self {
        Self(0)
    }

    fn one() -> Self {
        Self(1)
    }

    fn from_u64(v: u64) -> Self {
        Self::new(v)
    }

    fn invert(&self) -> Option<Self> {
        if self.0 == 0 {
            return None;
        }
        // Fermat: a^(q-2).
        Some(Self(pow_mod(self.value(), TOY_ORDER - 2, TOY_ORDER) as u8))
    }

    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen_range(0..TOY_ORDER) as u8)
    }

    fn from_wide_bytes(bytes: &[u8; 64]) -> Self {
        Self::new(reduce_be(bytes, TOY_ORDER))
    }

    fn to_bytes(&self) -> Vec<u8> {
        vec![self.0]
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes {
            [b] if (*b as u64) < TOY_ORDER => Ok(Self(*b)),
            _ => Err(Error::Decode("non-canonical toy scalar".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToyElement(u8);

impl ToyElement {
    pub fn value(self) -> u64 {
        self.0 as u64
    }

    /// Accepts exactly the members of the order-11 subgroup.
    pub fn from_u64(v: u64) -> Result<Self> {
        if v == 0 || v >= TOY_MODULUS || pow_mod(v, TOY_ORDER, TOY_MODULUS) != 1 {
            return Err(Error::Decode(format!("{v} is not in the toy subgroup")));
        }
        Ok(Self(v as u8))
    }
}

impl GroupEncoding for ToyElement {
    const ENCODED_LEN: usize = 1;

    fn to_bytes(&self) -> Vec<u8> {
        vec![self.0]
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes {
            [b] => Self::from_u64(*b as u64),
            _ => Err(Error::Decode("toy element must be one byte".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ToyGroup;

impl Group for ToyGroup {
    type Scalar = ToyScalar;
    type Element = ToyElement;

    const ID: &'static str = "toy-z23-q11";

    fn order_bytes() -> Vec<u8> {
        vec![TOY_ORDER as u8]
    }

    fn generator() -> ToyElement {
        ToyElement(2)
    }

    fn identity() -> ToyElement {
        ToyElement(1)
    }

    fn mul(a: &ToyElement, b: &ToyElement) -> ToyElement {
        ToyElement(((a.value() * b.value()) % TOY_MODULUS) as u8)
    }

    fn invert(a: &ToyElement) -> ToyElement {
        ToyElement(pow_mod(a.value(), TOY_MODULUS - 2, TOY_MODULUS) as u8)
    }

    fn exp(base: &ToyElement, e: &ToyScalar) -> ToyElement {
        ToyElement(pow_mod(base.value(), e.value(), TOY_MODULUS) as u8)
    }

    fn hash_to_group(domain_tag: &[u8], data: &[u8]) -> ToyElement {
        let mut counter = 0;
        loop {
            let candidate = toy_hash_candidate(domain_tag, data, counter);
            let element = pow_mod(candidate, TOY_COFACTOR, TOY_MODULUS);
            if element != 1 {
                return ToyElement(element as u8);
            }
            counter += 1;
        }
    }
}

/// A hashed member of `(Z/23Z)^*`; `hash_to_group` raises it to the cofactor.
pub(crate) fn toy_hash_candidate(domain_tag: &[u8], data: &[u8], counter: u32) -> u64 {
    1 + reduce_be(&wide_hash(b"group", domain_tag, data, counter), TOY_MODULUS - 1)
}

fn reduce_be(bytes: &[u8], m: u64) -> u64 {
    bytes.iter().fold(0, |acc, b| (acc * 256 + *b as u64) % m)
}

fn pow_mod(mut base: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_pow(b: u64, e: u64) -> u64 {
        (0..e).fold(1, |acc, _| acc * b % TOY_MODULUS)
    }

    #[test]
    fn exp_matches_repeated_multiplication() {
        assert_eq!(brute_pow(2, 7), 13);
        assert_eq!(ToyGroup::exp_g(&ToyScalar::new(7)).value(), 13);
        assert_eq!(ToyGroup::exp_g(&ToyScalar::new(0)), ToyGroup::identity());
    }

    #[test]
    fn discrete_log_by_exhaustive_search() {
        for e in 0..TOY_ORDER {
            let target = ToyGroup::exp_g(&ToyScalar::new(e));
            let found = (0..TOY_ORDER)
                .find(|x| brute_pow(2, *x) == target.value())
                .unwrap();
            assert_eq!(found, e);
        }
    }

    #[test]
    fn generator_has_order_eleven() {
        let g = ToyGroup::generator();
        let mut acc = g;
        for i in 1..TOY_ORDER {
            assert_ne!(acc, ToyGroup::identity(), "order divides {i}");
            acc = ToyGroup::mul(&acc, &g);
        }
        assert_eq!(acc, ToyGroup::identity());
    }

    #[test]
    fn decoding_rejects_non_members() {
        // Quadratic non-residues mod 23 are outside the subgroup.
        for v in [0u8, 5, 7, 10, 11, 22, 23, 200] {
            assert!(ToyElement::from_bytes(&[v]).is_err(), "{v}");
        }
        assert!(ToyScalar::from_bytes(&[11]).is_err());
        assert!(ToyElement::from_bytes(&[2, 0]).is_err());
        let members: Vec<u64> = (1..23).filter(|v| ToyElement::from_u64(*v).is_ok()).collect();
        assert_eq!(members, vec![1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18]);
    }

    #[test]
    fn hash_to_group_powers_a_rejection_sampled_candidate() {
        for i in 0u32..500 {
            let data = i.to_be_bytes();
            let out = ToyGroup::hash_to_group(b"petition-hash", &data);
            let mut counter = 0;
            let expected = loop {
                let c = toy_hash_candidate(b"petition-hash", &data, counter);
                assert!((1..23).contains(&c));
                let sq = (c * c) % 23;
                if sq != 1 {
                    break sq;
                }
                counter += 1;
            };
            assert_eq!(out.value(), expected);
        }
    }

    #[test]
    fn hash_to_group_is_not_generator_power_of_hashed_scalar() {
        // The two derivations are independent; they must disagree on a
        // substantial share of inputs (agreement would be ~1/10 by chance).
        let differing = (0u32..1000)
            .filter(|i| {
                let d = i.to_be_bytes();
                ToyGroup::hash_to_group(b"t", &d) != ToyGroup::exp_g(&ToyGroup::hash_to_scalar(b"t", &d))
            })
            .count();
        assert!(differing > 800, "{differing}");
    }
}
