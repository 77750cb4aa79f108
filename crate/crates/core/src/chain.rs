//! The signature chain: an append-only, hash-linked log of petition records.
//!
//! On disk a chain is one canonical JSON object per line. Record 0 is the
//! header (petition parameters plus the ceremony transcript); each later line
//! links to its predecessor's hash. Loading a chain replays every append
//! rule, so a file that loads is a file whose every public check passed.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dist_hash::local_hash_oracle;
use crate::dkg::{verify_ceremony, ContributionCommitment, KeyFragment};
use crate::elgamal::{hybrid_decrypt, hybrid_encrypt, HybridCiphertext};
use crate::encoding;
use crate::error::{Error, Result};
use crate::group::{Group, GroupEncoding, ScalarField};
use crate::params::PetitionParams;
use crate::vss::{self, ShamirShare};

pub const GENESIS_PREV: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HeaderBody<G: Group> {
    pub params: PetitionParams<G>,
    pub ceremony: Vec<ContributionCommitment<G>>,
}

/// `(E(u_1), …, E(u_k), h_P(u))` published by the rabbits for one validator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ValidationRecord<G: Group> {
    pub validator: u32,
    #[serde(with = "encoding::element")]
    pub dup_hash: G::Element,
    pub encrypted_shares: Vec<HybridCiphertext<G>>,
    /// `n_U` in a multi-threshold petition.
    pub threshold: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Cyphersignature<G: Group> {
    pub testimony: HybridCiphertext<G>,
    pub encrypted_shares: Vec<HybridCiphertext<G>>,
    #[serde(with = "encoding::element")]
    pub dup_hash: G::Element,
    pub fragment: Option<KeyFragment<G>>,
    pub threshold: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpiryRecord {
    pub at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecordBody<G: Group> {
    Header(Box<HeaderBody<G>>),
    Validation(ValidationRecord<G>),
    Cyphersignature(Cyphersignature<G>),
    Expired(ExpiryRecord),
}

impl<G: Group> RecordBody<G> {
    pub fn kind(&self) -> &'static str {
        match self {
            RecordBody::Header(_) => "header",
            RecordBody::Validation(_) => "validation",
            RecordBody::Cyphersignature(_) => "cyphersignature",
            RecordBody::Expired(_) => "expired",
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            RecordBody::Header(b) => serde_json::to_value(b),
            RecordBody::Validation(b) => serde_json::to_value(b),
            RecordBody::Cyphersignature(b) => serde_json::to_value(b),
            RecordBody::Expired(b) => serde_json::to_value(b),
        };
        v.expect("record bodies always serialize")
    }

    fn from_value(kind: &str, v: Value) -> Result<Self> {
        fn de<T: DeserializeOwned>(v: Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| Error::MalformedRecord(e.to_string()))
        }
        Ok(match kind {
            "header" => RecordBody::Header(Box::new(de(v)?)),
            "validation" => RecordBody::Validation(de(v)?),
            "cyphersignature" => RecordBody::Cyphersignature(de(v)?),
            "expired" => RecordBody::Expired(de(v)?),
            other => return Err(Error::MalformedRecord(format!("unknown record kind {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainRecord<G: Group> {
    pub index: u64,
    pub prev: String,
    pub hash: String,
    pub body: RecordBody<G>,
}

fn record_hash(index: u64, kind: &str, prev: &str, body: &Value) -> String {
    let unsigned = json!({ "body": body, "index": index, "kind": kind, "prev": prev });
    hex::encode(Sha256::digest(unsigned.to_string().as_bytes()))
}

fn render_line(index: u64, kind: &str, prev: &str, hash: &str, body: Value) -> String {
    json!({ "body": body, "hash": hash, "index": index, "kind": kind, "prev": prev }).to_string()
}

/// Plaintext of one encrypted identity share: `index (u32 BE) ‖ value`.
pub fn encode_identity_share<G: Group>(share: &ShamirShare<G>) -> Vec<u8> {
    let mut out = share.index.to_be_bytes().to_vec();
    out.extend(share.value.to_bytes());
    out
}

pub fn decode_identity_share<G: Group>(bytes: &[u8]) -> Result<ShamirShare<G>> {
    if bytes.len() != 4 + G::Scalar::ENCODED_LEN {
        return Err(Error::Decode("identity share has the wrong length".into()));
    }
    let (index, value) = bytes.split_at(4);
    Ok(ShamirShare {
        index: u32::from_be_bytes(index.try_into().unwrap()),
        value: G::Scalar::from_bytes(value)?,
    })
}

pub fn encrypt_identity_share<G: Group, R: RngCore + ?Sized>(
    key: &G::Element,
    share: &ShamirShare<G>,
    rng: &mut R,
) -> Result<HybridCiphertext<G>> {
    hybrid_encrypt::<G, R>(key, &encode_identity_share(share), rng)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerReport {
    pub signatures: usize,
    pub released: Vec<u32>,
    /// All `n` fragments are public, so the whole key `s` is.
    pub triggered: bool,
    /// Largest `m` with at least `m` signatures of threshold `≤ m` (multi-threshold only).
    pub m_star: Option<u32>,
    /// Chain indices of the cyphersignatures that can be decrypted now.
    pub decryptable: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecryptedSignature<G: Group> {
    pub record: u64,
    pub threshold: Option<u32>,
    pub identity: G::Scalar,
    pub testimony: Vec<u8>,
}

/// Per-record decryption result; a failed record does not stop the others.
pub type RecordDecryption<G> = (u64, Result<DecryptedSignature<G>>);

#[derive(Clone, Debug, Default)]
struct HashStats {
    validators: Vec<u32>,
    signed: bool,
}

#[derive(Clone, Debug)]
pub struct SignatureChain<G: Group> {
    header: HeaderBody<G>,
    records: Vec<ChainRecord<G>>,
    lines: Vec<String>,
    released: BTreeMap<u32, G::Scalar>,
    hashes: BTreeMap<Vec<u8>, HashStats>,
    expired: bool,
}

impl<G: Group> SignatureChain<G> {
    /// Starts a chain after auditing the ceremony behind `params`.
    pub fn new(params: PetitionParams<G>, ceremony: Vec<ContributionCommitment<G>>) -> Result<Self> {
        let report = verify_ceremony(&params, &ceremony);
        if !report.ok {
            return Err(Error::ChainVerification {
                index: 0,
                reason: report.problems.join("; "),
            });
        }
        Ok(Self::new_unchecked(params, ceremony))
    }

    /// Starts a chain without auditing the ceremony. Such a chain will not load back.
    pub fn new_unchecked(params: PetitionParams<G>, ceremony: Vec<ContributionCommitment<G>>) -> Self {
        let header = HeaderBody { params, ceremony };
        let mut chain = Self {
            header: header.clone(),
            records: Vec::new(),
            lines: Vec::new(),
            released: BTreeMap::new(),
            hashes: BTreeMap::new(),
            expired: false,
        };
        chain.push(RecordBody::Header(Box::new(header)));
        chain
    }

    pub fn params(&self) -> &PetitionParams<G> {
        &self.header.params
    }

    pub fn ceremony(&self) -> &[ContributionCommitment<G>] {
        &self.header.ceremony
    }

    pub fn records(&self) -> &[ChainRecord<G>] {
        &self.records
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_expired(&self) -> bool {
        self.expired
    }

    pub fn head_hash(&self) -> &str {
        &self.records.last().expect("header always present").hash
    }

    pub fn released_fragments(&self) -> Vec<KeyFragment<G>> {
        self.released
            .iter()
            .map(|(&index, &value)| KeyFragment { index, value })
            .collect()
    }

    pub fn cyphersignatures(&self) -> impl Iterator<Item = (u64, &Cyphersignature<G>)> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Cyphersignature(c) => Some((r.index, c)),
            _ => None,
        })
    }

    pub fn validations(&self) -> impl Iterator<Item = (u64, &ValidationRecord<G>)> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Validation(v) => Some((r.index, v)),
            _ => None,
        })
    }

    pub fn signature_count(&self) -> usize {
        self.cyphersignatures().count()
    }

    pub fn to_text(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    fn push(&mut self, body: RecordBody<G>) -> u64 {
        let index = self.records.len() as u64;
        let prev = self
            .records
            .last()
            .map(|r| r.hash.clone())
            .unwrap_or_else(|| GENESIS_PREV.to_string());
        let value = body.to_value();
        let hash = record_hash(index, body.kind(), &prev, &value);
        self.lines.push(render_line(index, body.kind(), &prev, &hash, value));
        self.records.push(ChainRecord { index, prev, hash, body });
        index
    }

    fn ensure_open(&self) -> Result<()> {
        if self.expired {
            Err(Error::Expired)
        } else {
            Ok(())
        }
    }

    fn check_threshold_field(&self, threshold: Option<u32>) -> Result<()> {
        self.header
            .params
            .effective_threshold(threshold)
            .map(|_| ())
            .map_err(|e| Error::MalformedRecord(e.to_string()))
    }

    fn check_share_count(&self, count: usize) -> Result<()> {
        let k = self.header.params.k as usize;
        if count != k {
            return Err(Error::MalformedRecord(format!(
                "{count} encrypted identity shares, expected k={k}"
            )));
        }
        Ok(())
    }

    /// Whether another validation record for `h` may be published.
    ///
    /// Rejects once `h` has a cyphersignature, or when one more record would
    /// push the number of validation records for `h` past `v`.
    pub fn check_duplicate(&self, h: &G::Element) -> bool {
        match self.hashes.get(&h.to_bytes()) {
            None => true,
            Some(stats) => !stats.signed && stats.validators.len() < self.header.params.v as usize,
        }
    }

    /// Distinct validators with a validation record for `h`.
    pub fn validators_for(&self, h: &G::Element) -> Vec<u32> {
        self.hashes
            .get(&h.to_bytes())
            .map(|s| s.validators.clone())
            .unwrap_or_default()
    }

    pub fn has_cyphersignature(&self, h: &G::Element) -> bool {
        self.hashes.get(&h.to_bytes()).is_some_and(|s| s.signed)
    }

    pub fn append_validation(&mut self, record: ValidationRecord<G>) -> Result<u64> {
        self.ensure_open()?;
        self.check_share_count(record.encrypted_shares.len())?;
        self.check_threshold_field(record.threshold)?;
        if !self.header.params.validators.contains(&record.validator) {
            return Err(Error::MalformedRecord(format!(
                "validator {} is not listed in the header",
                record.validator
            )));
        }
        if G::is_identity(&record.dup_hash) {
            return Err(Error::MalformedRecord("duplicate hash is the identity".into()));
        }
        if !self.check_duplicate(&record.dup_hash)
            || self.validators_for(&record.dup_hash).contains(&record.validator)
        {
            return Err(Error::DuplicateUser);
        }
        self.hashes
            .entry(record.dup_hash.to_bytes())
            .or_default()
            .validators
            .push(record.validator);
        Ok(self.push(RecordBody::Validation(record)))
    }

    /// Largest unreleased `j ≤ n_U`; single-threshold petitions use `n_U = n`.
    ///
    /// Once `s_1 … s_{n_U}` are all public the signature releases the smallest
    /// unreleased `j > n_U` instead, so it still counts toward higher levels.
    pub fn select_fragment(&self, threshold: Option<u32>) -> Option<u32> {
        let n = self.header.params.n;
        let top = threshold.unwrap_or(n).min(n);
        let free = |j: &u32| !self.released.contains_key(j);
        (1..=top).rev().find(free).or_else(|| (top + 1..=n).find(free))
    }

    pub fn append_cyphersignature(&mut self, sig: Cyphersignature<G>) -> Result<u64> {
        self.ensure_open()?;
        self.check_share_count(sig.encrypted_shares.len())?;
        self.check_threshold_field(sig.threshold)?;
        if self.has_cyphersignature(&sig.dup_hash) {
            return Err(Error::DuplicateUser);
        }
        let distinct = self.validators_for(&sig.dup_hash).len();
        let needed = self.header.params.v as usize;
        if distinct < needed {
            return Err(Error::InsufficientValidations { distinct, needed });
        }
        match (&sig.fragment, self.select_fragment(sig.threshold)) {
            (Some(f), _) if self.released.contains_key(&f.index) => {
                return Err(Error::FragmentAlreadyReleased(f.index));
            }
            (Some(f), Some(j)) if f.index == j => {
                let public = self.header.params.public();
                let expected = public
                    .fragment_public(j)
                    .ok_or(Error::FragmentVerificationFailed(j))?;
                if G::exp_g(&f.value) != *expected {
                    return Err(Error::FragmentVerificationFailed(j));
                }
            }
            (None, None) => {}
            (got, want) => {
                return Err(Error::MalformedRecord(format!(
                    "fragment {:?} does not follow the selection rule (expected {want:?})",
                    got.map(|f| f.index)
                )));
            }
        }
        if let Some(f) = &sig.fragment {
            self.released.insert(f.index, f.value);
        }
        self.hashes.entry(sig.dup_hash.to_bytes()).or_default().signed = true;
        Ok(self.push(RecordBody::Cyphersignature(sig)))
    }

    pub fn trigger_check(&self) -> TriggerReport {
        let params = &self.header.params;
        let sigs: Vec<(u64, Option<u32>)> = self
            .cyphersignatures()
            .map(|(i, c)| (i, c.threshold))
            .collect();
        let triggered = self.released.len() == params.n as usize;
        let (m_star, decryptable) = if params.is_multi_threshold() {
            let m_star = cascade_level(sigs.iter().filter_map(|s| s.1)).min(params.n);
            let decryptable = sigs
                .iter()
                .filter(|(_, th)| th.is_some_and(|n_u| n_u <= m_star))
                .map(|s| s.0)
                .collect();
            (Some(m_star), decryptable)
        } else if triggered {
            (None, sigs.iter().map(|s| s.0).collect())
        } else {
            (None, Vec::new())
        };
        TriggerReport {
            signatures: sigs.len(),
            released: self.released.keys().copied().collect(),
            triggered,
            m_star,
            decryptable,
        }
    }

    /// Whether fragments `s_1 … s_m` are all public.
    pub fn prefix_released(&self, m: u32) -> bool {
        (1..=m).all(|j| self.released.contains_key(&j))
    }

    /// `Σ_{j ≤ m} s_j` if those fragments are public.
    pub fn prefix_secret(&self, m: u32) -> Option<G::Scalar> {
        (1..=m)
            .map(|j| self.released.get(&j).copied())
            .try_fold(G::Scalar::zero(), |acc, s| s.map(|s| acc + s))
    }

    /// Key encrypting records of threshold `n_U` (`p` for single-threshold petitions).
    pub fn record_key(&self, threshold: Option<u32>) -> G::Element {
        match threshold {
            Some(m) => self.header.params.composed_key(m),
            None => self.header.params.public_key,
        }
    }

    /// Decrypts every cyphersignature whose key is public.
    ///
    /// Identities are rebuilt from every `t`-subset of the decrypted shares
    /// and all subsets must agree. With `hash_key` the identity is also
    /// checked against the record's duplicate hash.
    pub fn decrypt_chain(&self, hash_key: Option<&G::Scalar>) -> Result<Vec<RecordDecryption<G>>> {
        let report = self.trigger_check();
        if report.decryptable.is_empty() {
            return Err(Error::NotTriggered);
        }
        let wanted: BTreeSet<u64> = report.decryptable.into_iter().collect();
        Ok(self
            .cyphersignatures()
            .filter(|(i, _)| wanted.contains(i))
            .map(|(i, sig)| (i, self.decrypt_record(i, sig, hash_key)))
            .collect())
    }

    fn decrypt_record(
        &self,
        record: u64,
        sig: &Cyphersignature<G>,
        hash_key: Option<&G::Scalar>,
    ) -> Result<DecryptedSignature<G>> {
        let params = &self.header.params;
        let m = sig.threshold.unwrap_or(params.n);
        let s = self.prefix_secret(m).ok_or(Error::NotTriggered)?;
        let mut shares = Vec::with_capacity(sig.encrypted_shares.len());
        for (pos, ct) in sig.encrypted_shares.iter().enumerate() {
            let share = decode_identity_share::<G>(&hybrid_decrypt(&s, ct)?)?;
            if share.index as usize != pos + 1 {
                return Err(Error::ShareInconsistency);
            }
            shares.push(share);
        }
        let identity = consistent_reconstruction::<G>(&shares, params.t as usize)?;
        if identity.is_zero() {
            return Err(Error::ShareInconsistency);
        }
        if let Some(key) = hash_key {
            if local_hash_oracle::<G>(&identity, key, &params.hash_generator) != sig.dup_hash {
                return Err(Error::ShareInconsistency);
            }
        }
        let testimony = hybrid_decrypt(&s, &sig.testimony)?;
        Ok(DecryptedSignature {
            record,
            threshold: sig.threshold,
            identity,
            testimony,
        })
    }

    /// Freezes the chain. Later appends fail with [`Error::Expired`].
    pub fn expire(&mut self, now: u64) -> Result<u64> {
        self.ensure_open()?;
        if self.trigger_check().triggered {
            return Err(Error::AlreadyTriggered);
        }
        match self.header.params.expiry {
            None => Err(Error::NotExpired("petition has no expiry".into())),
            Some(at) if now < at => Err(Error::NotExpired(format!("expiry is at {at}, now is {now}"))),
            Some(_) => {
                self.expired = true;
                Ok(self.push(RecordBody::Expired(ExpiryRecord { at: now })))
            }
        }
    }

    /// Loads a chain file, replaying and re-checking every record.
    pub fn from_text(text: &str) -> Result<Self> {
        let fail = |index: usize, reason: String| Error::ChainVerification { index, reason };
        if !text.ends_with('\n') {
            return Err(fail(0, "file does not end with a newline".into()));
        }
        let mut chain: Option<Self> = None;
        for (index, line) in text[..text.len() - 1].split('\n').enumerate() {
            let value: Value = serde_json::from_str(line).map_err(|e| fail(index, format!("not JSON: {e}")))?;
            if serde_json::to_string(&value).ok().as_deref() != Some(line) {
                return Err(fail(index, "not in canonical form".into()));
            }
            let obj = value
                .as_object()
                .filter(|o| o.len() == 5)
                .ok_or_else(|| fail(index, "record must have exactly body, hash, index, kind, prev".into()))?;
            let field = |name: &str| obj.get(name).ok_or_else(|| fail(index, format!("missing {name}")));
            let kind = field("kind")?.as_str().ok_or_else(|| fail(index, "kind is not a string".into()))?;
            if field("index")?.as_u64() != Some(index as u64) {
                return Err(fail(index, "index out of sequence".into()));
            }
            let prev = field("prev")?.as_str().ok_or_else(|| fail(index, "prev is not a string".into()))?;
            let expected_prev = chain.as_ref().map_or(GENESIS_PREV, |c| c.head_hash());
            if prev != expected_prev {
                return Err(fail(index, "broken link to previous record".into()));
            }
            let hash = field("hash")?.as_str().ok_or_else(|| fail(index, "hash is not a string".into()))?;
            let body_value = field("body")?.clone();
            if record_hash(index as u64, kind, prev, &body_value) != hash {
                return Err(fail(index, "record hash mismatch".into()));
            }
            let body = RecordBody::<G>::from_value(kind, body_value).map_err(|e| fail(index, e.to_string()))?;
            match (&mut chain, body) {
                (None, RecordBody::Header(h)) => {
                    chain = Some(Self::new(h.params, h.ceremony).map_err(|e| match e {
                        Error::ChainVerification { .. } => e,
                        other => fail(0, other.to_string()),
                    })?);
                }
                (None, _) => return Err(fail(index, "first record must be the header".into())),
                (Some(_), RecordBody::Header(_)) => return Err(fail(index, "second header".into())),
                (Some(c), RecordBody::Validation(v)) => {
                    c.append_validation(v).map_err(|e| fail(index, e.to_string()))?;
                }
                (Some(c), RecordBody::Cyphersignature(s)) => {
                    c.append_cyphersignature(s).map_err(|e| fail(index, e.to_string()))?;
                }
                (Some(c), RecordBody::Expired(x)) => {
                    c.expire(x.at).map_err(|e| fail(index, e.to_string()))?;
                }
            }
            let c = chain.as_ref().expect("set above");
            if c.lines[index] != line {
                return Err(fail(index, "record does not re-encode identically".into()));
            }
        }
        chain.ok_or_else(|| fail(0, "empty chain".into()))
    }
}

/// Reads the backend id from a chain file's header without choosing a backend.
pub fn peek_group_id(text: &str) -> Result<String> {
    let first = text.lines().next().ok_or_else(|| Error::ChainVerification {
        index: 0,
        reason: "empty chain".into(),
    })?;
    let value: Value = serde_json::from_str(first).map_err(|e| Error::ChainVerification {
        index: 0,
        reason: format!("not JSON: {e}"),
    })?;
    value
        .pointer("/body/params/group/id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::ChainVerification {
            index: 0,
            reason: "header has no group id".into(),
        })
}

/// `max{m : #{n_U ≤ m} ≥ m}`, or 0 when no such `m ≥ 1` exists.
pub fn cascade_level(thresholds: impl IntoIterator<Item = u32>) -> u32 {
    let mut sorted: Vec<u32> = thresholds.into_iter().collect();
    sorted.sort_unstable();
    let mut best = 0;
    for m in 1..=sorted.len() as u32 {
        let count = sorted.iter().filter(|&&n_u| n_u <= m).count() as u32;
        if count >= m {
            best = m;
        }
    }
    best
}

/// Reconstructs from every `t`-subset of `shares` and requires one answer.
pub fn consistent_reconstruction<G: Group>(shares: &[ShamirShare<G>], t: usize) -> Result<G::Scalar> {
    if shares.len() < t || t == 0 {
        return Err(Error::InsufficientShares {
            needed: t,
            available: shares.len(),
        });
    }
    let mut answer = None;
    for subset in subsets(shares.len(), t) {
        let picked: Vec<_> = subset.iter().map(|&i| shares[i]).collect();
        let value = vss::reconstruct::<G>(&picked, t)?;
        match answer {
            None => answer = Some(value),
            Some(a) if a != value => return Err(Error::ShareInconsistency),
            Some(_) => {}
        }
    }
    Ok(answer.expect("at least one subset"))
}

/// All size-`t` subsets of `0..k`, in lexicographic order.
pub fn subsets(k: usize, t: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, t: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == t {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            if k - i < t - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, k, t, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, t, &mut Vec::new(), &mut out);
    out
}
