//! Shamir secret sharing with Feldman commitments.
//!
//! A dealer picks a random polynomial `f` of degree `t - 1` with `f(0)` equal to
//! the secret, hands party `i` the evaluation `f(i)` and publishes `g^{a_l}` for
//! every coefficient `a_l`. Anyone holding a share can then check
//! `g^{f(i)} = ∏_l C_l^{i^l}` without learning anything about `f(0)` beyond
//! `C_0 = g^{f(0)}`.

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::encoding;
use crate::error::{Error, Result};
use crate::group::{Group, ScalarField};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ShamirShare<G: Group> {
    pub index: u32,
    #[serde(with = "encoding::scalar")]
    pub value: G::Scalar,
}

impl<G: Group> Copy for ShamirShare<G> {}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeldmanCommitment<G: Group> {
    #[serde(with = "encoding::elements")]
    pub coeff_commits: Vec<G::Element>,
}

impl<G: Group> FeldmanCommitment<G> {
    pub fn threshold(&self) -> usize {
        self.coeff_commits.len()
    }

    /// `g^{f(0)}`.
    pub fn secret_commitment(&self) -> G::Element {
        self.coeff_commits.first().copied().unwrap_or_else(G::identity)
    }

    /// `g^{f(index)}`, computed from the public coefficients.
    pub fn evaluate(&self, index: u32) -> G::Element {
        let x = G::Scalar::from_u64(index as u64);
        let mut power = G::Scalar::one();
        let mut acc = G::identity();
        for c in &self.coeff_commits {
            acc = G::mul(&acc, &G::exp(c, &power));
            power = power * x;
        }
        acc
    }
}

/// Checks `1 <= t <= k < q`.
pub fn check_threshold<G: Group>(t: usize, k: usize) -> Result<()> {
    if t == 0 || t > k {
        return Err(Error::InvalidParameters(format!(
            "threshold t={t} must satisfy 1 <= t <= k={k}"
        )));
    }
    if (k as u128) >= order_saturating::<G>() {
        return Err(Error::InvalidParameters(format!(
            "k={k} must be smaller than the group order"
        )));
    }
    Ok(())
}

fn order_saturating<G: Group>() -> u128 {
    let bytes = G::order_bytes();
    let significant: Vec<u8> = bytes.into_iter().skip_while(|b| *b == 0).collect();
    if significant.len() > 16 {
        return u128::MAX;
    }
    significant.iter().fold(0u128, |acc, b| (acc << 8) | *b as u128)
}

fn evaluate_poly<G: Group>(coeffs: &[G::Scalar], x: u32) -> G::Scalar {
    let x = G::Scalar::from_u64(x as u64);
    coeffs
        .iter()
        .rev()
        .fold(G::Scalar::zero(), |acc, c| acc * x + *c)
}

/// Shares `secret` among parties `1..=k` so that any `t` of them can reconstruct it.
pub fn share<G: Group, R: RngCore + ?Sized>(
    secret: &G::Scalar,
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<ShamirShare<G>>, FeldmanCommitment<G>)> {
    check_threshold::<G>(t, k)?;
    let mut coeffs = Vec::with_capacity(t);
    coeffs.push(*secret);
    coeffs.extend((1..t).map(|_| G::Scalar::random(rng)));
    share_with_coefficients::<G>(&coeffs, k)
}

/// Deterministic sharing with explicit coefficients `coeffs[0] = secret, …`.
pub fn share_with_coefficients<G: Group>(
    coeffs: &[G::Scalar],
    k: usize,
) -> Result<(Vec<ShamirShare<G>>, FeldmanCommitment<G>)> {
    check_threshold::<G>(coeffs.len(), k)?;
    let shares = (1..=k as u32)
        .map(|index| ShamirShare {
            index,
            value: evaluate_poly::<G>(coeffs, index),
        })
        .collect();
    let commitment = FeldmanCommitment {
        coeff_commits: coeffs.iter().map(G::exp_g).collect(),
    };
    Ok((shares, commitment))
}

pub fn verify_share<G: Group>(share: &ShamirShare<G>, comm: &FeldmanCommitment<G>) -> bool {
    if share.index == 0 || comm.coeff_commits.is_empty() {
        return false;
    }
    G::exp_g(&share.value) == comm.evaluate(share.index)
}

fn check_indices<G: Group>(indices: &[u32]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &i in indices {
        if G::Scalar::from_u64(i as u64).is_zero() {
            return Err(Error::InvalidParameters(format!("share index {i} is zero mod q")));
        }
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// Lagrange coefficients for interpolation at zero:
/// `λ_i = ∏_{j≠i} x_j / (x_j - x_i)`.
pub fn lagrange_coefficients<G: Group>(indices: &[u32]) -> Result<Vec<G::Scalar>> {
    if indices.is_empty() {
        return Err(Error::InsufficientShares {
            needed: 1,
            available: 0,
        });
    }
    check_indices::<G>(indices)?;
    let xs: Vec<G::Scalar> = indices
        .iter()
        .map(|i| G::Scalar::from_u64(*i as u64))
        .collect();
    xs.iter()
        .enumerate()
        .map(|(a, xi)| {
            let mut num = G::Scalar::one();
            let mut den = G::Scalar::one();
            for (b, xj) in xs.iter().enumerate() {
                if a != b {
                    num = num * *xj;
                    den = den * (*xj - *xi);
                }
            }
            Ok(num * den.invert().ok_or(Error::NonInvertible)?)
        })
        .collect()
}

/// Interpolates `f(0)` from the first `t` shares.
pub fn reconstruct<G: Group>(shares: &[ShamirShare<G>], t: usize) -> Result<G::Scalar> {
    if t == 0 || shares.len() < t {
        return Err(Error::InsufficientShares {
            needed: t,
            available: shares.len(),
        });
    }
    check_indices::<G>(&shares.iter().map(|s| s.index).collect::<Vec<_>>())?;
    let used = &shares[..t];
    let indices: Vec<u32> = used.iter().map(|s| s.index).collect();
    let lambdas = lagrange_coefficients::<G>(&indices)?;
    Ok(used
        .iter()
        .zip(lambdas)
        .fold(G::Scalar::zero(), |acc, (s, l)| acc + s.value * l))
}

/// Like [`reconstruct`] but on points `(i, B^{f(i)})`, yielding `B^{f(0)}`.
pub fn reconstruct_in_exponent<G: Group>(
    points: &[(u32, G::Element)],
    t: usize,
) -> Result<G::Element> {
    if t == 0 || points.len() < t {
        return Err(Error::InsufficientShares {
            needed: t,
            available: points.len(),
        });
    }
    check_indices::<G>(&points.iter().map(|p| p.0).collect::<Vec<_>>())?;
    let used = &points[..t];
    let indices: Vec<u32> = used.iter().map(|p| p.0).collect();
    let lambdas = lagrange_coefficients::<G>(&indices)?;
    Ok(used
        .iter()
        .zip(lambdas)
        .fold(G::identity(), |acc, ((_, e), l)| G::mul(&acc, &G::exp(e, &l))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Ristretto255, ToyGroup, ToyScalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type T = ToyGroup;

    fn ts(v: u64) -> ToyScalar {
        ToyScalar::new(v)
    }

    fn sh(index: u32, v: u64) -> ShamirShare<T> {
        ShamirShare { index, value: ts(v) }
    }

    #[test]
    fn degree_zero_polynomial() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (shares, comm) = share::<T, _>(&ts(7), 1, 5, &mut rng).unwrap();
        assert!(shares.iter().all(|s| s.value == ts(7)));
        assert_eq!(comm.coeff_commits.len(), 1);
    }

    #[test]
    fn known_polynomial_evaluations() {
        // f(x) = 5 + 3x mod 11
        let oracle: Vec<u64> = (1..=3).map(|x| (5 + 3 * x) % 11).collect();
        assert_eq!(oracle, vec![8, 0, 3]);
        let (shares, comm) = share_with_coefficients::<T>(&[ts(5), ts(3)], 3).unwrap();
        assert_eq!(shares, vec![sh(1, 8), sh(2, 0), sh(3, 3)]);
        assert_eq!(comm.secret_commitment(), T::exp_g(&ts(5)));
        assert!(shares.iter().all(|s| verify_share(s, &comm)));
    }

    #[test]
    fn parameter_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert!(matches!(share::<T, _>(&ts(1), 4, 3, &mut rng), Err(Error::InvalidParameters(_))));
        assert!(matches!(share::<T, _>(&ts(1), 0, 3, &mut rng), Err(Error::InvalidParameters(_))));
        assert!(matches!(share::<T, _>(&ts(1), 2, 11, &mut rng), Err(Error::InvalidParameters(_))));
        assert!(share::<T, _>(&ts(1), 2, 10, &mut rng).is_ok());
    }

    #[test]
    fn verify_rejects_tampering() {
        let (shares, comm) = share_with_coefficients::<T>(&[ts(5), ts(3)], 3).unwrap();
        let bumped = ShamirShare { index: 1, value: shares[0].value + ts(1) };
        assert!(!verify_share(&bumped, &comm));
        assert!(!verify_share(&sh(0, 5), &comm));
    }

    #[test]
    fn swapped_indices_fail_exhaustively_in_toy_group() {
        // For every degree-1 polynomial with a nonzero slope, swapping the
        // values of shares 1 and 2 must fail verification.
        for a0 in 0..11 {
            for a1 in 1..11 {
                let (shares, comm) = share_with_coefficients::<T>(&[ts(a0), ts(a1)], 3).unwrap();
                let s1 = ShamirShare { index: 1, value: shares[1].value };
                let s2 = ShamirShare { index: 2, value: shares[0].value };
                assert!(!verify_share(&s1, &comm));
                assert!(!verify_share(&s2, &comm));
            }
        }
    }

    #[test]
    fn lagrange_examples() {
        assert_eq!(lagrange_coefficients::<T>(&[4]).unwrap(), vec![ts(1)]);
        // 3 · (3-1)^-1 = 3·6 = 7 and 1 · (1-3)^-1 = 9^-1 = 5 (mod 11).
        assert_eq!(lagrange_coefficients::<T>(&[1, 3]).unwrap(), vec![ts(7), ts(5)]);
        assert_eq!(ts(7) * ts(8) + ts(5) * ts(3), ts(5));
        assert_eq!(lagrange_coefficients::<T>(&[1, 1]), Err(Error::DuplicateIndex(1)));
        assert!(lagrange_coefficients::<T>(&[0, 1]).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        assert_eq!(reconstruct::<T>(&[sh(1, 8), sh(3, 3)], 2).unwrap(), ts(5));
        assert_eq!(
            reconstruct::<T>(&[sh(1, 8)], 2),
            Err(Error::InsufficientShares { needed: 2, available: 1 })
        );
        assert!(Error::InsufficientShares { needed: 2, available: 1 }
            .to_string()
            .starts_with("insufficient shares"));
        assert_eq!(
            reconstruct::<T>(&[sh(1, 8), sh(1, 8)], 2),
            Err(Error::DuplicateIndex(1))
        );
    }

    #[test]
    fn completeness_random_trials() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for trial in 0..500 {
            let k = 1 + trial % 7;
            let t = 1 + trial % k;
            let secret = <Ristretto255 as Group>::Scalar::random(&mut rng);
            let (shares, comm) = share::<Ristretto255, _>(&secret, t, k, &mut rng).unwrap();
            assert!(shares.iter().all(|s| verify_share(s, &comm)));
            assert_eq!(reconstruct::<Ristretto255>(&shares, t).unwrap(), secret);
            let mut rev = shares.clone();
            rev.reverse();
            assert_eq!(reconstruct::<Ristretto255>(&rev, t).unwrap(), secret);
        }
    }

    #[test]
    fn exponent_examples() {
        let (shares, _) = share_with_coefficients::<T>(&[ts(5), ts(3)], 3).unwrap();
        let points: Vec<_> = shares.iter().map(|s| (s.index, T::exp_g(&s.value))).collect();
        assert_eq!(reconstruct_in_exponent::<T>(&points, 2).unwrap(), T::exp_g(&ts(5)));
        let single = [(2, T::exp_g(&ts(9)))];
        assert_eq!(reconstruct_in_exponent::<T>(&single, 1).unwrap(), single[0].1);
    }

    #[test]
    fn hiding_chi_square() {
        // t = 3: any two shares of a fixed secret are uniform over Z_11^2.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut counts = [[0u32; 11]; 11];
        let trials = 10_000;
        for _ in 0..trials {
            let (shares, _) = share::<T, _>(&ts(4), 3, 5, &mut rng).unwrap();
            let a = shares[1].value.value() as usize;
            let b = shares[3].value.value() as usize;
            counts[a][b] += 1;
        }
        let expected = trials as f64 / 121.0;
        let chi2: f64 = counts
            .iter()
            .flatten()
            .map(|c| (*c as f64 - expected).powi(2) / expected)
            .sum();
        // 120 degrees of freedom, p = 0.001 critical value ≈ 173.6.
        assert!(chi2 < 173.6, "chi2 = {chi2}");
    }
}
