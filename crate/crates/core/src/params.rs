//! The public petition header.

use serde::{Deserialize, Serialize};

use crate::dkg::PetitionPublicKey;
use crate::elgamal::HYBRID_ALG_NAME;
use crate::encoding;
use crate::error::{Error, Result};
use crate::group::{Group, GroupDesc};
use crate::vss::{check_threshold, FeldmanCommitment};

/// Domain tag of the petition-specific generator used by the duplicate hash.
pub const HASH_GENERATOR_TAG: &[u8] = b"petition-hash";

/// Everything published about a petition before anyone signs it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PetitionParams<G: Group> {
    #[serde(with = "encoding::bytes")]
    pub petition_text: Vec<u8>,
    /// Random identifier separating petitions that share the same text.
    #[serde(with = "encoding::bytes")]
    pub petition_id: Vec<u8>,
    pub group: GroupDesc,
    #[serde(with = "encoding::element")]
    pub public_key: G::Element,
    #[serde(with = "encoding::elements")]
    pub fragment_publics: Vec<G::Element>,
    pub n: u32,
    pub k: u32,
    pub t: u32,
    pub v: u32,
    pub expiry: Option<u64>,
    /// Sorted thresholds `n_1 < … < n_r` of a multi-threshold petition.
    pub thresholds: Option<Vec<u32>>,
    /// Identifiers of the validators whose records the rabbits accept.
    pub validators: Vec<u32>,
    #[serde(with = "encoding::element")]
    pub hash_generator: G::Element,
    pub hash_key_commitment: FeldmanCommitment<G>,
    pub hybrid_alg: String,
}

/// Header fields chosen by the author before the ceremony runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PetitionConfig {
    pub petition_text: Vec<u8>,
    pub n: u32,
    pub k: u32,
    pub t: u32,
    pub v: u32,
    pub expiry: Option<u64>,
    pub thresholds: Option<Vec<u32>>,
    pub validators: Vec<u32>,
}

impl PetitionConfig {
    pub fn new(text: impl Into<Vec<u8>>, n: u32, k: u32, t: u32, v: u32) -> Self {
        Self {
            petition_text: text.into(),
            n,
            k,
            t,
            v,
            expiry: None,
            thresholds: None,
            validators: (1..=v).collect(),
        }
    }

    pub fn validate<G: Group>(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        check_threshold::<G>(self.t as usize, self.k as usize)?;
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.v == 0 {
            return bad("v must be at least 1".into());
        }
        if (self.validators.len() as u32) < self.v {
            return bad(format!(
                "{} validators cannot supply v={} distinct validations",
                self.validators.len(),
                self.v
            ));
        }
        let mut sorted = self.validators.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.validators.len() {
            return bad("validator ids must be distinct".into());
        }
        if let Some(th) = &self.thresholds {
            if th.is_empty() {
                return bad("threshold list is empty".into());
            }
            if th.windows(2).any(|w| w[0] >= w[1]) {
                return bad("thresholds must be strictly increasing".into());
            }
            if th[0] == 0 || *th.last().unwrap() > self.n {
                return bad(format!("thresholds must lie in [1, n={}]", self.n));
            }
        }
        Ok(())
    }
}

impl<G: Group> PetitionParams<G> {
    pub fn config(&self) -> PetitionConfig {
        PetitionConfig {
            petition_text: self.petition_text.clone(),
            n: self.n,
            k: self.k,
            t: self.t,
            v: self.v,
            expiry: self.expiry,
            thresholds: self.thresholds.clone(),
            validators: self.validators.clone(),
        }
    }

    /// Checks the header's own invariants (not the ceremony behind it).
    pub fn validate(&self) -> Result<()> {
        self.group.check::<G>()?;
        self.config().validate::<G>()?;
        if self.fragment_publics.len() != self.n as usize {
            return Err(Error::InvalidParameters(format!(
                "{} fragment publics for n={}",
                self.fragment_publics.len(),
                self.n
            )));
        }
        if G::product(self.fragment_publics.iter()) != self.public_key {
            return Err(Error::InvalidParameters(
                "public key is not the product of the fragment publics".into(),
            ));
        }
        if G::is_identity(&self.public_key) {
            return Err(Error::DegenerateKey);
        }
        if self.hash_key_commitment.threshold() != self.t as usize {
            return Err(Error::InvalidParameters("hash key commitment length != t".into()));
        }
        if self.hybrid_alg != HYBRID_ALG_NAME {
            return Err(Error::InvalidParameters(format!(
                "unsupported hybrid algorithm {}",
                self.hybrid_alg
            )));
        }
        Ok(())
    }

    pub fn is_multi_threshold(&self) -> bool {
        self.thresholds.is_some()
    }

    /// The threshold a signature is bound to; single-threshold petitions use `n`.
    pub fn effective_threshold(&self, requested: Option<u32>) -> Result<u32> {
        match (&self.thresholds, requested) {
            (None, None) => Ok(self.n),
            (None, Some(_)) => Err(Error::InvalidParameters(
                "per-signature thresholds need a multi-threshold petition".into(),
            )),
            (Some(_), None) => Err(Error::InvalidParameters(
                "multi-threshold petitions need a per-signature threshold".into(),
            )),
            (Some(list), Some(n_u)) if list.contains(&n_u) => Ok(n_u),
            (Some(list), Some(n_u)) => Err(Error::InvalidParameters(format!(
                "threshold {n_u} is not one of {list:?}"
            ))),
        }
    }

    pub fn public(&self) -> PetitionPublicKey<G> {
        PetitionPublicKey {
            p: self.public_key,
            fragment_publics: self.fragment_publics.clone(),
        }
    }

    /// `p_m = ∏_{j ≤ m} F_j`, the key for signatures with threshold `m`.
    pub fn composed_key(&self, m: u32) -> G::Element {
        G::product(self.fragment_publics.iter().take(m as usize))
    }

    pub fn expected_hash_generator(&self) -> G::Element {
        G::hash_to_group(HASH_GENERATOR_TAG, &self.petition_id)
    }
}

/// Domain tag of validator `id`'s public hash function `h_V`.
pub fn validator_tag(id: u32) -> Vec<u8> {
    format!("validator/{id}").into_bytes()
}
