//! Key generation ceremony.
//!
//! For every fragment `j` each rabbit `i` draws `x_{i,j}`, Feldman-shares it
//! among all `k` rabbits (itself included) and publishes the commitment. The
//! fragment is `s_j = Σ_i x_{i,j}` with public value `F_j = ∏_i g^{x_{i,j}}`,
//! and the petition key is `p = ∏_j F_j = g^{Σ_j s_j}`. Nobody ever holds an
//! `s_j`; any `t` rabbits can rebuild it from their shares when it is due.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::encoding;
use crate::error::{Error, Result};
use crate::group::{Group, ScalarField};
use crate::params::PetitionParams;
use crate::vss::{self, FeldmanCommitment, ShamirShare};

#[derive(Clone, Debug)]
pub struct FragmentContribution<G: Group> {
    pub rabbit: u32,
    pub fragment: u32,
    pub secret: G::Scalar,
    pub commitment: FeldmanCommitment<G>,
    /// Share `l` goes to rabbit `l`.
    pub outgoing_shares: Vec<ShamirShare<G>>,
}

impl<G: Group> FragmentContribution<G> {
    pub fn public(&self) -> ContributionCommitment<G> {
        ContributionCommitment {
            rabbit: self.rabbit,
            fragment: self.fragment,
            commitment: self.commitment.clone(),
        }
    }
}

/// The published part of a contribution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ContributionCommitment<G: Group> {
    pub rabbit: u32,
    pub fragment: u32,
    pub commitment: FeldmanCommitment<G>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KeyFragment<G: Group> {
    pub index: u32,
    #[serde(with = "encoding::scalar")]
    pub value: G::Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PetitionPublicKey<G: Group> {
    pub p: G::Element,
    pub fragment_publics: Vec<G::Element>,
}

impl<G: Group> PetitionPublicKey<G> {
    pub fn fragment_public(&self, j: u32) -> Option<&G::Element> {
        j.checked_sub(1)
            .and_then(|i| self.fragment_publics.get(i as usize))
    }
}

pub fn contribute<G: Group, R: RngCore + ?Sized>(
    rabbit: u32,
    fragment: u32,
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<FragmentContribution<G>> {
    let secret = G::Scalar::random(rng);
    contribute_with_secret(rabbit, fragment, secret, t, k, rng)
}

/// [`contribute`] with a caller-chosen `x_{i,j}`.
pub fn contribute_with_secret<G: Group, R: RngCore + ?Sized>(
    rabbit: u32,
    fragment: u32,
    secret: G::Scalar,
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<FragmentContribution<G>> {
    if rabbit == 0 || rabbit as usize > k || fragment == 0 {
        return Err(Error::InvalidParameters(format!(
            "contribution index ({rabbit}, {fragment}) out of range"
        )));
    }
    let (outgoing_shares, commitment) = vss::share::<G, R>(&secret, t, k, rng)?;
    Ok(FragmentContribution {
        rabbit,
        fragment,
        secret,
        commitment,
        outgoing_shares,
    })
}

/// Recomputes `F_j` and `p` from the published commitments.
///
/// Every prefix key `∏_{l ≤ m} F_l` must be non-trivial: prefix keys encrypt
/// multi-threshold signatures, and the unreleased fragments of a
/// single-threshold petition always form such a prefix.
pub fn aggregate_public<G: Group>(
    n: u32,
    k: u32,
    commitments: &[ContributionCommitment<G>],
) -> Result<PetitionPublicKey<G>> {
    let mut by_slot: BTreeMap<(u32, u32), &ContributionCommitment<G>> = BTreeMap::new();
    for c in commitments {
        if c.rabbit == 0 || c.rabbit > k || c.fragment == 0 || c.fragment > n {
            return Err(Error::IncompleteCeremony(format!(
                "unexpected contribution ({}, {})",
                c.rabbit, c.fragment
            )));
        }
        if by_slot.insert((c.fragment, c.rabbit), c).is_some() {
            return Err(Error::IncompleteCeremony(format!(
                "duplicate contribution ({}, {})",
                c.rabbit, c.fragment
            )));
        }
    }
    let mut fragment_publics = Vec::with_capacity(n as usize);
    for j in 1..=n {
        let mut f = G::identity();
        for i in 1..=k {
            let c = by_slot.get(&(j, i)).ok_or_else(|| {
                Error::IncompleteCeremony(format!("missing contribution of rabbit {i} to fragment {j}"))
            })?;
            f = G::mul(&f, &c.commitment.secret_commitment());
        }
        fragment_publics.push(f);
    }
    let mut prefix = G::identity();
    for f in &fragment_publics {
        prefix = G::mul(&prefix, f);
        if G::is_identity(&prefix) {
            return Err(Error::DegenerateKey);
        }
    }
    Ok(PetitionPublicKey {
        p: prefix,
        fragment_publics,
    })
}

/// One share held by a rabbit: its evaluation of `contributor`'s polynomial for `fragment`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HeldShare<G: Group> {
    pub contributor: u32,
    pub fragment: u32,
    pub share: ShamirShare<G>,
}

/// A rabbit's ceremony output: one share per `(contributor, fragment)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RabbitShareStore<G: Group> {
    pub rabbit: u32,
    pub shares: Vec<HeldShare<G>>,
}

impl<G: Group> RabbitShareStore<G> {
    pub fn new(rabbit: u32) -> Self {
        Self {
            rabbit,
            shares: Vec::new(),
        }
    }

    /// Verifies and stores a dealt share; an invalid share names its dealer.
    pub fn receive(
        &mut self,
        commitment: &ContributionCommitment<G>,
        share: ShamirShare<G>,
    ) -> std::result::Result<(), u32> {
        if share.index != self.rabbit || !vss::verify_share(&share, &commitment.commitment) {
            return Err(commitment.rabbit);
        }
        self.shares.push(HeldShare {
            contributor: commitment.rabbit,
            fragment: commitment.fragment,
            share,
        });
        Ok(())
    }

    pub fn shares_for_fragment(&self, fragment: u32) -> impl Iterator<Item = &HeldShare<G>> {
        self.shares.iter().filter(move |h| h.fragment == fragment)
    }

    pub fn erase(&mut self) {
        self.shares.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }
}

/// Groups the shares several rabbits hold for fragment `j` by contributor.
pub fn collect_fragment_shares<'a, G: Group>(
    fragment: u32,
    stores: impl IntoIterator<Item = &'a RabbitShareStore<G>>,
) -> BTreeMap<u32, Vec<ShamirShare<G>>> {
    let mut out: BTreeMap<u32, Vec<ShamirShare<G>>> = BTreeMap::new();
    for store in stores {
        for held in store.shares_for_fragment(fragment) {
            out.entry(held.contributor).or_default().push(held.share);
        }
    }
    out
}

/// Rebuilds `s_j = Σ_i x_{i,j}` and checks it against `F_j` before returning it.
pub fn reconstruct_fragment<G: Group>(
    fragment: u32,
    t: usize,
    k: u32,
    share_sets: &BTreeMap<u32, Vec<ShamirShare<G>>>,
    public: &PetitionPublicKey<G>,
) -> Result<KeyFragment<G>> {
    let expected = public
        .fragment_public(fragment)
        .ok_or_else(|| Error::InvalidParameters(format!("no fragment {fragment}")))?;
    let mut value = G::Scalar::zero();
    for contributor in 1..=k {
        let shares = share_sets.get(&contributor).map(Vec::as_slice).unwrap_or(&[]);
        value = value + vss::reconstruct::<G>(shares, t)?;
    }
    if G::exp_g(&value) != *expected {
        return Err(Error::FragmentVerificationFailed(fragment));
    }
    Ok(KeyFragment {
        index: fragment,
        value,
    })
}

/// Scripted misbehaviour during a ceremony.
#[derive(Clone, Debug, Default)]
pub struct CeremonyFaults {
    /// Dealer → victim: the dealer hands the victim an inconsistent share.
    pub bad_dealers: BTreeMap<u32, u32>,
}

#[derive(Clone, Debug)]
pub struct CeremonyOutcome<G: Group> {
    pub public: PetitionPublicKey<G>,
    pub transcript: Vec<ContributionCommitment<G>>,
    pub stores: Vec<RabbitShareStore<G>>,
    /// How many times a fragment was redrawn because a prefix key was trivial.
    pub redraws: u32,
}

/// Runs all `n · k` contributions and their share deliveries.
///
/// Each recipient verifies every share it receives; any failure aborts with
/// the list of dealers whose shares failed. A fragment whose prefix key is
/// the identity is redrawn by all rabbits.
pub fn run_ceremony<G: Group, R: RngCore + ?Sized>(
    n: u32,
    k: u32,
    t: u32,
    rng: &mut R,
    faults: &CeremonyFaults,
) -> Result<CeremonyOutcome<G>> {
    vss::check_threshold::<G>(t as usize, k as usize)?;
    if n == 0 {
        return Err(Error::InvalidParameters("n must be at least 1".into()));
    }
    let mut stores: Vec<RabbitShareStore<G>> = (1..=k).map(RabbitShareStore::new).collect();
    let mut transcript = Vec::with_capacity((n * k) as usize);
    let mut prefix = G::identity();
    let mut redraws = 0;
    for j in 1..=n {
        let contributions = loop {
            let contributions = (1..=k)
                .map(|i| contribute::<G, R>(i, j, t as usize, k as usize, rng))
                .collect::<Result<Vec<_>>>()?;
            let f_j = G::product(
                contributions
                    .iter()
                    .map(|c| c.commitment.secret_commitment())
                    .collect::<Vec<_>>()
                    .iter(),
            );
            let next = G::mul(&prefix, &f_j);
            if G::is_identity(&next) {
                redraws += 1;
                continue;
            }
            prefix = next;
            break contributions;
        };
        let mut culprits = BTreeSet::new();
        for c in &contributions {
            let public = c.public();
            for mut share in c.outgoing_shares.iter().copied() {
                if faults.bad_dealers.get(&c.rabbit) == Some(&share.index) {
                    share.value = share.value + G::Scalar::one();
                }
                let recipient = &mut stores[(share.index - 1) as usize];
                if let Err(dealer) = recipient.receive(&public, share) {
                    culprits.insert(dealer);
                }
            }
            transcript.push(public);
        }
        if !culprits.is_empty() {
            return Err(Error::CeremonyAborted {
                culprits: culprits.into_iter().collect(),
            });
        }
    }
    let public = aggregate_public(n, k, &transcript)?;
    Ok(CeremonyOutcome {
        public,
        transcript,
        stores,
        redraws,
    })
}

/// Result of publicly auditing a ceremony.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CeremonyReport {
    pub ok: bool,
    pub problems: Vec<String>,
}

/// Public audit of a header against its ceremony transcript.
///
/// Passes iff the header is well formed, every `(rabbit, fragment)` slot has
/// exactly one commitment of length `t`, each `F_j` and `p` recompute from the
/// commitments, and every fragment combines contributions of all `k` rabbits.
pub fn verify_ceremony<G: Group>(
    header: &PetitionParams<G>,
    transcript: &[ContributionCommitment<G>],
) -> CeremonyReport {
    let mut problems = Vec::new();
    if let Err(e) = header.validate() {
        problems.push(format!("header: {e}"));
    }
    if header.hash_generator != header.expected_hash_generator() {
        problems.push("hash generator is not derived from the petition id".into());
    }
    for c in transcript {
        if c.commitment.threshold() != header.t as usize {
            problems.push(format!(
                "commitment ({}, {}) has length {} instead of t={}",
                c.rabbit,
                c.fragment,
                c.commitment.threshold(),
                header.t
            ));
        }
    }
    match aggregate_public(header.n, header.k, transcript) {
        Ok(public) => {
            if public.p != header.public_key {
                problems.push("public key does not match the commitment product".into());
            }
            for (j, (ours, theirs)) in public
                .fragment_publics
                .iter()
                .zip(&header.fragment_publics)
                .enumerate()
            {
                if ours != theirs {
                    problems.push(format!("fragment public F_{} does not match commitments", j + 1));
                }
            }
            if public.fragment_publics.len() != header.fragment_publics.len() {
                problems.push("fragment public count mismatch".into());
            }
        }
        Err(e) => problems.push(format!("transcript: {e}")),
    }
    if header.k < 2 {
        problems.push("a single rabbit knows the whole key".into());
    }
    CeremonyReport {
        ok: problems.is_empty(),
        problems,
    }
}
