//! What a coalition of corrupted parties can actually do with what it holds.
//!
//! Every verdict in an [`AdversaryReport`] comes from running the attack, not
//! from comparing the coalition size against `t`. Candidate counting needs a
//! brute-forceable scalar field and is skipped on the production backend; it
//! only uses share information, so it ignores that toy discrete logs are easy.

use std::collections::{BTreeMap, BTreeSet};

use petition_core::chain::{consistent_reconstruction, decode_identity_share, SignatureChain};
use petition_core::dist_hash::{consistent_secret, local_hash_oracle};
use petition_core::dkg::{collect_fragment_shares, reconstruct_fragment, KeyFragment};
use petition_core::elgamal::hybrid_decrypt;
use petition_core::group::{scalar_to_hex, Group, GroupEncoding, ScalarField};
use petition_core::protocol::{
    session_hash, signed_payload, Message, PartyId, RabbitState, SessionId, ValidatorState,
};
use petition_core::vss::{self, ShamirShare};
use serde::{Deserialize, Serialize};

use crate::router::Envelope;

/// Testimonies a curious validator tries when linking sessions to the petition.
pub const TESTIMONY_GUESSES: &[&str] = &["", "yes", "agree", "I agree", "signed", "support"];

/// Largest group order for which candidate secrets are enumerated.
const ENUMERATION_LIMIT: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentAttempt {
    pub fragment: u32,
    pub success: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeAttempt {
    /// Hex of the challenge identifier `u*`.
    pub challenge: String,
    pub success: bool,
    /// Distinct values of `h_P(u*)` consistent with the coalition's view.
    pub candidates: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationAttempt {
    /// `validator:session` label, or `record:<index>` for a chain record.
    pub target: String,
    pub method: String,
    pub success: bool,
    pub candidates: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorView {
    pub validator: u32,
    /// Hex identifiers this validator issued.
    pub issued: Vec<String>,
    pub sessions: usize,
    /// Sessions the validator could tie to this petition by guessing testimonies.
    pub linked_to_petition: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryReport {
    pub tick: u64,
    pub rabbits: Vec<u32>,
    pub validators: Vec<u32>,
    pub fragment_theft: Vec<FragmentAttempt>,
    pub hash_challenge: ChallengeAttempt,
    pub identification: Vec<IdentificationAttempt>,
    pub validator_views: Vec<ValidatorView>,
    /// Secure messages in the coalition's view with no corrupted endpoint. Always zero.
    pub foreign_secure_messages: usize,
    pub observed_messages: usize,
    pub preimages_seen: usize,
}

impl AdversaryReport {
    pub fn stole_any_fragment(&self) -> bool {
        self.fragment_theft.iter().any(|f| f.success)
    }

    pub fn identified_anyone(&self) -> bool {
        self.identification.iter().any(|i| i.success)
    }
}

/// Ground truth the harness uses to grade attacks. Never shown to the coalition.
#[derive(Clone, Debug)]
pub struct Truth<G: Group> {
    pub hash_key: Option<G::Scalar>,
    /// Identifier behind each `validator:session` label.
    pub identities: BTreeMap<String, G::Scalar>,
}

pub struct Coalition<'a, G: Group> {
    pub tick: u64,
    pub rabbits: Vec<&'a RabbitState<G>>,
    pub validators: Vec<&'a ValidatorState<G>>,
    pub members: BTreeSet<PartyId>,
    pub view: Vec<&'a Envelope>,
    pub chain: &'a SignatureChain<G>,
}

pub fn label(validator: u32, session: &SessionId) -> String {
    format!("{validator}:{session}")
}

/// Every scalar of the field, when it is small enough to list.
pub fn enumerable_scalars<G: Group>() -> Option<Vec<G::Scalar>> {
    let order = G::order_bytes();
    if order.len() > 8 {
        return None;
    }
    let mut buf = [0u8; 8];
    buf[8 - order.len()..].copy_from_slice(&order);
    let q = u64::from_be_bytes(buf);
    (q <= ENUMERATION_LIMIT).then(|| (0..q).map(G::Scalar::from_u64).collect())
}

/// Challenge identifier no honest user will ever present.
pub fn challenge_identifier<G: Group>(tick: u64) -> G::Scalar {
    let mut tag = 0u64;
    loop {
        let u = G::hash_to_scalar(b"adversary-challenge", format!("{tick}/{tag}").as_bytes());
        if !u.is_zero() {
            return u;
        }
        tag += 1;
    }
}

struct Transcript<G: Group> {
    /// Triple id assigned to each session label.
    triples: BTreeMap<String, u64>,
    /// Opened `(d, e)` per session label.
    openings: BTreeMap<String, (G::Scalar, G::Scalar)>,
}

fn read_transcript<G: Group>(view: &[&Envelope]) -> Transcript<G> {
    let mut t = Transcript {
        triples: BTreeMap::new(),
        openings: BTreeMap::new(),
    };
    for env in view {
        match serde_json::from_slice::<Message<G>>(&env.payload) {
            Ok(Message::HashStart { validator, session, triple, .. }) => {
                t.triples.insert(label(validator, &session), triple);
            }
            Ok(Message::HashOpened { validator, session, d, e }) => {
                t.openings.insert(label(validator, &session), (d, e));
            }
            _ => {}
        }
    }
    t
}

/// Coalition shares of triple component `pick` for triple `id`.
fn triple_shares<G: Group>(
    rabbits: &[&RabbitState<G>],
    id: u64,
    pick: impl Fn(&petition_core::dist_hash::TripleShare<G>) -> ShamirShare<G>,
) -> Vec<ShamirShare<G>> {
    rabbits
        .iter()
        .filter_map(|r| r.secrets.triples.available.iter().find(|s| s.id == id).map(&pick))
        .collect()
}

pub fn attack<G: Group>(c: &Coalition<'_, G>, truth: &Truth<G>) -> AdversaryReport {
    let params = c.chain.params();
    let transcript = read_transcript::<G>(&c.view);

    let fragment_theft = steal_fragments(c);
    let stolen: BTreeMap<u32, G::Scalar> = fragment_theft
        .1
        .iter()
        .map(|f| (f.index, f.value))
        .chain(c.chain.released_fragments().iter().map(|f| (f.index, f.value)))
        .collect();

    let hash_challenge = challenge(c, truth, &transcript);
    let mut identification = identify_by_shares(c, truth, &transcript);
    identification.extend(identify_by_records(c, truth, &stolen));
    identification.extend(identify_by_collusion(c, truth));

    let validator_views = c
        .validators
        .iter()
        .map(|v| {
            let linked = v
                .issued
                .iter()
                .filter(|i| {
                    TESTIMONY_GUESSES.iter().any(|g| {
                        session_hash(v.id, &signed_payload(&params.petition_text, g.as_bytes())) == i.session
                    })
                })
                .count();
            ValidatorView {
                validator: v.id,
                issued: v.issued.iter().map(|i| scalar_to_hex(&i.identifier)).collect(),
                sessions: v.issued.len(),
                linked_to_petition: linked,
            }
        })
        .collect();

    AdversaryReport {
        tick: c.tick,
        rabbits: c.rabbits.iter().map(|r| r.index()).collect(),
        validators: c.validators.iter().map(|v| v.id).collect(),
        fragment_theft: fragment_theft.0,
        hash_challenge,
        identification,
        validator_views,
        foreign_secure_messages: c.view.iter().filter(|e| !e.visible_to(&c.members)).count(),
        observed_messages: c.view.len(),
        preimages_seen: c.rabbits.iter().map(|r| r.preimages().len()).sum(),
    }
}

fn steal_fragments<G: Group>(c: &Coalition<'_, G>) -> (Vec<FragmentAttempt>, Vec<KeyFragment<G>>) {
    let params = c.chain.params();
    let released: BTreeSet<u32> = c.chain.released_fragments().iter().map(|f| f.index).collect();
    let public = params.public();
    let mut attempts = Vec::new();
    let mut stolen = Vec::new();
    for j in (1..=params.n).filter(|j| !released.contains(j)) {
        let sets = collect_fragment_shares(j, c.rabbits.iter().map(|r| &r.secrets.store));
        match reconstruct_fragment(j, params.t as usize, params.k, &sets, &public) {
            Ok(f) => {
                attempts.push(FragmentAttempt {
                    fragment: j,
                    success: true,
                    detail: "reconstructed and matched the published fragment key".into(),
                });
                stolen.push(f);
            }
            Err(e) => attempts.push(FragmentAttempt {
                fragment: j,
                success: false,
                detail: e.to_string(),
            }),
        }
    }
    (attempts, stolen)
}

fn challenge<G: Group>(c: &Coalition<'_, G>, truth: &Truth<G>, tr: &Transcript<G>) -> ChallengeAttempt {
    let params = c.chain.params();
    let t = params.t as usize;
    let u_star = challenge_identifier::<G>(c.tick);
    let actual = truth
        .hash_key
        .map(|k| local_hash_oracle::<G>(&u_star, &k, &params.hash_generator));
    let key_shares: Vec<ShamirShare<G>> = c
        .rabbits
        .iter()
        .filter_map(|r| r.secrets.hash_key.as_ref().map(|k| k.share))
        .collect();
    let challenge = scalar_to_hex(&u_star);

    if key_shares.len() >= t {
        let guess = vss::reconstruct::<G>(&key_shares, t)
            .map(|k| local_hash_oracle::<G>(&u_star, &k, &params.hash_generator));
        let success = matches!((&guess, &actual), (Ok(g), Some(a)) if g == a);
        return ChallengeAttempt {
            challenge,
            success,
            candidates: Some(1),
            detail: format!("reconstructed the hash key from {} shares", key_shares.len()),
        };
    }
    let Some(field) = enumerable_scalars::<G>() else {
        return ChallengeAttempt {
            challenge,
            success: false,
            candidates: None,
            detail: format!("{} of {t} hash key shares; field too large to enumerate", key_shares.len()),
        };
    };
    // Keys consistent with the held key shares and every opened e = k - b.
    let candidates: BTreeSet<Vec<u8>> = field
        .iter()
        .filter(|k| consistent_secret::<G>(&key_shares, t, k))
        .filter(|k| {
            tr.openings.iter().all(|(session, (_, e))| match tr.triples.get(session) {
                Some(&id) => {
                    let b = triple_shares(&c.rabbits, id, |s| s.b);
                    consistent_secret::<G>(&b, t, &(**k - *e))
                }
                None => true,
            })
        })
        .map(|k| local_hash_oracle::<G>(&u_star, k, &params.hash_generator).to_bytes())
        .collect();
    let success = candidates.len() == 1
        && actual.is_some_and(|a| candidates.contains(&a.to_bytes()));
    ChallengeAttempt {
        challenge,
        success,
        candidates: Some(candidates.len()),
        detail: format!("{} of {t} hash key shares", key_shares.len()),
    }
}

fn identify_by_shares<G: Group>(
    c: &Coalition<'_, G>,
    truth: &Truth<G>,
    tr: &Transcript<G>,
) -> Vec<IdentificationAttempt> {
    let t = c.chain.params().t as usize;
    let mut pooled: BTreeMap<String, Vec<ShamirShare<G>>> = BTreeMap::new();
    for r in &c.rabbits {
        for (v, session, share) in r.identity_shares() {
            pooled.entry(label(v, &session)).or_default().push(share);
        }
    }
    let field = enumerable_scalars::<G>();
    pooled
        .into_iter()
        .map(|(target, shares)| {
            let actual = truth.identities.get(&target);
            if shares.len() >= t {
                let guess = vss::reconstruct::<G>(&shares, t).ok();
                return IdentificationAttempt {
                    success: guess.is_some() && guess.as_ref() == actual,
                    target,
                    method: "identity_shares".into(),
                    candidates: Some(1),
                    detail: format!("interpolated {} shares", shares.len()),
                };
            }
            let candidates = field.as_ref().map(|field| {
                let opened = tr.openings.get(&target).zip(tr.triples.get(&target));
                field
                    .iter()
                    .filter(|u| !u.is_zero() && consistent_secret::<G>(&shares, t, u))
                    .filter(|u| match opened {
                        Some(((d, _), &id)) => {
                            let a = triple_shares(&c.rabbits, id, |s| s.a);
                            consistent_secret::<G>(&a, t, &(**u - *d))
                        }
                        None => true,
                    })
                    .count()
            });
            IdentificationAttempt {
                target,
                method: "identity_shares".into(),
                success: false,
                candidates,
                detail: format!("{} of {t} identity shares", shares.len()),
            }
        })
        .collect()
}

/// Decrypts cyphersignatures that are not yet public using stolen fragments.
fn identify_by_records<G: Group>(
    c: &Coalition<'_, G>,
    truth: &Truth<G>,
    known: &BTreeMap<u32, G::Scalar>,
) -> Vec<IdentificationAttempt> {
    let params = c.chain.params();
    let public: BTreeSet<u64> = c.chain.trigger_check().decryptable.into_iter().collect();
    c.chain
        .cyphersignatures()
        .filter(|(i, _)| !public.contains(i))
        .map(|(i, sig)| {
            let m = sig.threshold.unwrap_or(params.n);
            let target = format!("record:{i}");
            let key = (1..=m).try_fold(G::Scalar::zero(), |acc, j| known.get(&j).map(|s| acc + *s));
            let Some(key) = key else {
                let missing = (1..=m).filter(|j| !known.contains_key(j)).count();
                return IdentificationAttempt {
                    target,
                    method: "decrypt_record".into(),
                    success: false,
                    candidates: None,
                    detail: format!("{missing} key fragments missing"),
                };
            };
            let identity = sig
                .encrypted_shares
                .iter()
                .map(|ct| hybrid_decrypt::<G>(&key, ct).and_then(|b| decode_identity_share::<G>(&b)))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|shares| consistent_reconstruction::<G>(&shares, params.t as usize));
            let success = match (&identity, truth.hash_key) {
                (Ok(u), Some(k)) => local_hash_oracle::<G>(u, &k, &params.hash_generator) == sig.dup_hash,
                _ => false,
            };
            IdentificationAttempt {
                target,
                method: "decrypt_record".into(),
                success,
                candidates: Some(1),
                detail: match identity {
                    Ok(_) => "decrypted with stolen fragments".into(),
                    Err(e) => e.to_string(),
                },
            }
        })
        .collect()
}

/// A corrupted validator knows `u` for its sessions; a corrupted rabbit knows
/// which sessions carry this petition. Together they link the two.
fn identify_by_collusion<G: Group>(c: &Coalition<'_, G>, truth: &Truth<G>) -> Vec<IdentificationAttempt> {
    let seen: BTreeSet<String> = c
        .rabbits
        .iter()
        .flat_map(|r| r.identity_shares())
        .map(|(v, s, _)| label(v, &s))
        .collect();
    let mut out = Vec::new();
    for v in &c.validators {
        for issued in &v.issued {
            let target = label(v.id, &issued.session);
            if seen.contains(&target) {
                out.push(IdentificationAttempt {
                    success: truth.identities.get(&target) == Some(&issued.identifier),
                    target,
                    method: "validator_rabbit_link".into(),
                    candidates: Some(1),
                    detail: "validator's issued session matched a rabbit's preimage".into(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use petition_core::group::{Ristretto255, ToyGroup};

    #[test]
    fn toy_field_is_enumerable() {
        let all = enumerable_scalars::<ToyGroup>().unwrap();
        assert_eq!(all.len(), 11);
        assert!(enumerable_scalars::<Ristretto255>().is_none());
    }

    #[test]
    fn challenge_is_never_zero() {
        for tick in 0..50 {
            assert!(!challenge_identifier::<ToyGroup>(tick).is_zero());
        }
    }
}
