//! Duplicate-detection hash `h_P(u) = g_P^{k_P·u}`.
//!
//! The key `k_P` and the identifier `u` are both Shamir-shared among the
//! rabbits. One Beaver triple turns the shared product `k_P·u` into shares
//! `z_i`, and the output is reconstructed in the exponent of `g_P`, so the
//! rabbits learn `h_P(u)` without learning `u`, `k_P` or `k_P·u`.

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::encoding;
use crate::error::{Error, Result};
use crate::group::{Group, ScalarField};
use crate::params::HASH_GENERATOR_TAG;
use crate::vss::{self, FeldmanCommitment, ShamirShare};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HashKeyShare<G: Group> {
    pub rabbit: u32,
    pub share: ShamirShare<G>,
    pub commitment: FeldmanCommitment<G>,
}

impl<G: Group> HashKeyShare<G> {
    pub fn verify(&self) -> bool {
        self.share.index == self.rabbit && vss::verify_share(&self.share, &self.commitment)
    }
}

/// `g_P` for the petition with identifier `petition_id`.
pub fn hash_generator<G: Group>(petition_id: &[u8]) -> G::Element {
    G::hash_to_group(HASH_GENERATOR_TAG, petition_id)
}

/// Deals a fresh hash key. Returns one share per rabbit and `g_P`.
pub fn hash_setup<G: Group, R: RngCore + ?Sized>(
    t: usize,
    k: usize,
    petition_id: &[u8],
    rng: &mut R,
) -> Result<(Vec<HashKeyShare<G>>, G::Element)> {
    hash_setup_with(t, k, petition_id, rng, |r| G::Scalar::random(r))
}

/// [`hash_setup`] drawing `k_P` from `draw`; a zero draw is discarded and redrawn.
pub fn hash_setup_with<G: Group, R: RngCore + ?Sized>(
    t: usize,
    k: usize,
    petition_id: &[u8],
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> G::Scalar,
) -> Result<(Vec<HashKeyShare<G>>, G::Element)> {
    vss::check_threshold::<G>(t, k)?;
    let key = loop {
        let candidate = draw(rng);
        if !candidate.is_zero() {
            break candidate;
        }
    };
    let (shares, commitment) = vss::share::<G, R>(&key, t, k, rng)?;
    let out = shares
        .into_iter()
        .map(|share| HashKeyShare {
            rabbit: share.index,
            share,
            commitment: commitment.clone(),
        })
        .collect();
    Ok((out, hash_generator::<G>(petition_id)))
}

/// Rabbit `share.index`'s part of a Beaver triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TripleShare<G: Group> {
    pub id: u64,
    pub a: ShamirShare<G>,
    pub b: ShamirShare<G>,
    pub c: ShamirShare<G>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeaverTriple<G: Group> {
    pub id: u64,
    /// Entry `i - 1` belongs to rabbit `i`.
    pub shares: Vec<TripleShare<G>>,
}

/// Dealer-generated triple `(a, b, ab)`, each value shared with threshold `t`.
pub fn triple_gen<G: Group, R: RngCore + ?Sized>(
    id: u64,
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<BeaverTriple<G>> {
    let a = G::Scalar::random(rng);
    let b = G::Scalar::random(rng);
    triple_from_values(id, a, b, t, k, rng)
}

pub fn triple_from_values<G: Group, R: RngCore + ?Sized>(
    id: u64,
    a: G::Scalar,
    b: G::Scalar,
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<BeaverTriple<G>> {
    let (sa, _) = vss::share::<G, R>(&a, t, k, rng)?;
    let (sb, _) = vss::share::<G, R>(&b, t, k, rng)?;
    let (sc, _) = vss::share::<G, R>(&(a * b), t, k, rng)?;
    let shares = sa
        .into_iter()
        .zip(sb)
        .zip(sc)
        .map(|((a, b), c)| TripleShare { id, a, b, c })
        .collect();
    Ok(BeaverTriple { id, shares })
}

/// Triples held by one rabbit. A triple id can be claimed once.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TriplePool<G: Group> {
    pub available: Vec<TripleShare<G>>,
    pub consumed: BTreeSet<u64>,
}

impl<G: Group> TriplePool<G> {
    pub fn new(available: Vec<TripleShare<G>>) -> Self {
        Self {
            available,
            consumed: BTreeSet::new(),
        }
    }

    /// Lowest unconsumed triple id, if any.
    pub fn next_id(&self) -> Option<u64> {
        self.available.iter().map(|s| s.id).find(|id| !self.consumed.contains(id))
    }

    pub fn claim(&mut self, id: u64) -> Result<TripleShare<G>> {
        if self.consumed.contains(&id) {
            return Err(Error::TripleReuse(id));
        }
        let share = *self
            .available
            .iter()
            .find(|s| s.id == id)
            .ok_or(Error::InsufficientTriples)?;
        self.consumed.insert(id);
        Ok(share)
    }

    pub fn remaining(&self) -> usize {
        self.available.iter().filter(|s| !self.consumed.contains(&s.id)).count()
    }
}

/// Splits dealt triples into per-rabbit pools.
pub fn provision_pools<G: Group>(k: usize, triples: &[BeaverTriple<G>]) -> Vec<TriplePool<G>> {
    (0..k)
        .map(|i| TriplePool::new(triples.iter().map(|t| t.shares[i]).collect()))
        .collect()
}

/// Rabbit `index`'s masked openings `d_i = u_i - a_i`, `e_i = k_i - b_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HashOpening<G: Group> {
    pub index: u32,
    #[serde(with = "encoding::scalar")]
    pub d: G::Scalar,
    #[serde(with = "encoding::scalar")]
    pub e: G::Scalar,
}

pub fn open<G: Group>(
    u_share: &ShamirShare<G>,
    key_share: &ShamirShare<G>,
    triple: &TripleShare<G>,
) -> Result<HashOpening<G>> {
    let index = u_share.index;
    if key_share.index != index || triple.a.index != index {
        return Err(Error::SessionMismatch(format!(
            "share indices disagree for rabbit {index}"
        )));
    }
    Ok(HashOpening {
        index,
        d: u_share.value - triple.a.value,
        e: key_share.value - triple.b.value,
    })
}

/// Reconstructs the public values `d = u - a` and `e = k_P - b`.
pub fn combine_openings<G: Group>(
    openings: &[HashOpening<G>],
    t: usize,
) -> Result<(G::Scalar, G::Scalar)> {
    let ds: Vec<_> = openings
        .iter()
        .map(|o| ShamirShare { index: o.index, value: o.d })
        .collect();
    let es: Vec<_> = openings
        .iter()
        .map(|o| ShamirShare { index: o.index, value: o.e })
        .collect();
    Ok((vss::reconstruct::<G>(&ds, t)?, vss::reconstruct::<G>(&es, t)?))
}

/// `z_i = c_i + d·b_i + e·a_i + d·e`, a share of `k_P·u`.
pub fn product_share<G: Group>(d: &G::Scalar, e: &G::Scalar, triple: &TripleShare<G>) -> ShamirShare<G> {
    ShamirShare {
        index: triple.c.index,
        value: triple.c.value + *d * triple.b.value + *e * triple.a.value + *d * *e,
    }
}

/// `(i, g_P^{z_i})`.
pub fn partial<G: Group>(
    d: &G::Scalar,
    e: &G::Scalar,
    triple: &TripleShare<G>,
    generator: &G::Element,
) -> (u32, G::Element) {
    let z = product_share(d, e, triple);
    (z.index, G::exp(generator, &z.value))
}

pub fn combine_partials<G: Group>(points: &[(u32, G::Element)], t: usize) -> Result<G::Element> {
    vss::reconstruct_in_exponent::<G>(points, t)
}

/// One rabbit's inputs to an evaluation.
#[derive(Clone, Debug)]
pub struct HashParticipant<G: Group> {
    pub session: Vec<u8>,
    pub key_share: HashKeyShare<G>,
    pub u_share: ShamirShare<G>,
}

#[derive(Clone, Debug)]
pub struct HashEvalSession<G: Group> {
    pub session: Vec<u8>,
    pub triple_id: u64,
    pub participants: Vec<HashParticipant<G>>,
}

/// Runs every step of an evaluation for the given participants, claiming
/// `session.triple_id` from each participant's pool.
pub fn dist_hash_eval<G: Group>(
    session: &HashEvalSession<G>,
    t: usize,
    generator: &G::Element,
    pools: &mut [TriplePool<G>],
) -> Result<G::Element> {
    if session.participants.len() < t {
        return Err(Error::InsufficientParticipants {
            needed: t,
            available: session.participants.len(),
        });
    }
    for p in &session.participants {
        if p.session != session.session {
            return Err(Error::SessionMismatch(format!(
                "rabbit {} holds a share for another session",
                p.key_share.rabbit
            )));
        }
    }
    let mut triples = Vec::with_capacity(session.participants.len());
    for p in &session.participants {
        let pool = pools
            .get_mut(p.key_share.rabbit as usize - 1)
            .ok_or(Error::InsufficientTriples)?;
        if pool.consumed.contains(&session.triple_id) {
            return Err(Error::TripleReuse(session.triple_id));
        }
        triples.push(pool.claim(session.triple_id)?);
    }
    let openings = session
        .participants
        .iter()
        .zip(&triples)
        .map(|(p, tr)| open(&p.u_share, &p.key_share.share, tr))
        .collect::<Result<Vec<_>>>()?;
    let (d, e) = combine_openings::<G>(&openings, t)?;
    let points: Vec<_> = triples.iter().map(|tr| partial(&d, &e, tr, generator)).collect();
    combine_partials::<G>(&points, t)
}

/// Centralized reference evaluation.
pub fn local_hash_oracle<G: Group>(u: &G::Scalar, key: &G::Scalar, generator: &G::Element) -> G::Element {
    G::exp(generator, &(*key * *u))
}

/// Whether some degree-`(t-1)` polynomial passes through `shares` and `(0, secret)`.
pub fn consistent_secret<G: Group>(shares: &[ShamirShare<G>], t: usize, secret: &G::Scalar) -> bool {
    let mut points = vec![ShamirShare { index: 0, value: *secret }];
    points.extend_from_slice(shares);
    if points.len() <= t {
        return true;
    }
    let basis: Vec<_> = points[..t].to_vec();
    let xs: Vec<G::Scalar> = basis.iter().map(|p| G::Scalar::from_u64(p.index as u64)).collect();
    points[t..].iter().all(|p| {
        let x = G::Scalar::from_u64(p.index as u64);
        // Lagrange evaluation of the basis polynomial at x.
        let mut acc = G::Scalar::zero();
        for (i, b) in basis.iter().enumerate() {
            let mut num = G::Scalar::one();
            let mut den = G::Scalar::one();
            for (j, xj) in xs.iter().enumerate() {
                if i != j {
                    num = num * (x - *xj);
                    den = den * (xs[i] - *xj);
                }
            }
            match den.invert() {
                Some(inv) => acc = acc + b.value * num * inv,
                None => return false,
            }
        }
        acc == p.value
    })
}
