//! Party state machines for the signing flow.
//!
//! A user sends `h_V(p_U)` to each validator and `p_U` to every rabbit. A
//! validator derives `u` from the user's identity evidence and deals shares
//! of it to the rabbits. Once all `k` rabbits hold a matching share and
//! preimage, the coordinating rabbit runs the distributed hash, publishes a
//! validation record and, after `v` distinct validators vouched for the same
//! `h_P(u)`, gathers one key fragment and publishes the cyphersignature.
//!
//! Handlers never block: they read the public chain, append to it, and queue
//! outgoing messages in a [`Ctx`]. Delivery order is the caller's business.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{encrypt_identity_share, Cyphersignature, SignatureChain, ValidationRecord};
use crate::dist_hash::{self, HashKeyShare, HashOpening, TriplePool};
use crate::dkg::{collect_fragment_shares, reconstruct_fragment, verify_ceremony, HeldShare, RabbitShareStore};
use crate::elgamal::{hybrid_encrypt, HybridCiphertext};
use crate::encoding;
use crate::error::{Error, Result};
use crate::group::{Group, GroupEncoding, ScalarField};
use crate::params::validator_tag;
use crate::vss::{self, FeldmanCommitment, ShamirShare};

pub const IDENTITY_TAG: &[u8] = b"identity";
pub const MAX_EVIDENCE_LEN: usize = 256;
/// Bytes of randomness used as testimony when a user supplies none.
pub const RANDOM_TESTIMONY_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyId {
    Author,
    User(u32),
    Validator(u32),
    Rabbit(u32),
    Chain,
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartyId::Author => write!(f, "author"),
            PartyId::User(i) => write!(f, "user-{i}"),
            PartyId::Validator(i) => write!(f, "validator-{i}"),
            PartyId::Rabbit(i) => write!(f, "rabbit-{i}"),
            PartyId::Chain => write!(f, "chain"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Secure,
    Public,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "", tag = "type", rename_all = "snake_case")]
pub enum Message<G: Group> {
    SignRequest {
        evidence: String,
        session: SessionId,
        threshold: Option<u32>,
    },
    IdentityShare {
        validator: u32,
        session: SessionId,
        share: ShamirShare<G>,
        commitment: FeldmanCommitment<G>,
        threshold: Option<u32>,
    },
    Preimage {
        validator: u32,
        session: SessionId,
        #[serde(with = "encoding::bytes")]
        preimage: Vec<u8>,
        threshold: Option<u32>,
    },
    SessionReady {
        validator: u32,
        session: SessionId,
    },
    HashStart {
        validator: u32,
        session: SessionId,
        triple: u64,
        participants: Vec<u32>,
    },
    HashOpening {
        validator: u32,
        session: SessionId,
        opening: HashOpening<G>,
    },
    HashOpened {
        validator: u32,
        session: SessionId,
        #[serde(with = "encoding::scalar")]
        d: G::Scalar,
        #[serde(with = "encoding::scalar")]
        e: G::Scalar,
    },
    HashPartial {
        validator: u32,
        session: SessionId,
        index: u32,
        #[serde(with = "encoding::element")]
        partial: G::Element,
        validation_share: HybridCiphertext<G>,
        signature_share: HybridCiphertext<G>,
    },
    SessionAbort {
        validator: u32,
        session: SessionId,
        reason: String,
    },
    ReleaseTimer,
    FragmentRequest {
        fragment: u32,
    },
    FragmentShares {
        fragment: u32,
        shares: Vec<HeldShare<G>>,
    },
    DeleteSecrets,
}

impl<G: Group> Message<G> {
    pub fn type_tag(&self) -> &'static str {
        match self {
            Message::SignRequest { .. } => "sign_request",
            Message::IdentityShare { .. } => "identity_share",
            Message::Preimage { .. } => "preimage",
            Message::SessionReady { .. } => "session_ready",
            Message::HashStart { .. } => "hash_start",
            Message::HashOpening { .. } => "hash_opening",
            Message::HashOpened { .. } => "hash_opened",
            Message::HashPartial { .. } => "hash_partial",
            Message::SessionAbort { .. } => "session_abort",
            Message::ReleaseTimer => "release_timer",
            Message::FragmentRequest { .. } => "fragment_request",
            Message::FragmentShares { .. } => "fragment_shares",
            Message::DeleteSecrets => "delete_secrets",
        }
    }
}

/// Observable protocol milestones, in the order they happen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProtocolEvent {
    SigningRefused { user: u32, reason: String },
    IdentityIssued { validator: u32, session: String },
    EvidenceRejected { validator: u32, reason: String },
    SessionRejected { rabbit: u32, validator: u32, session: String, reason: String },
    DuplicateRejected { validator: u32, session: String },
    ValidationPublished { index: u64, validator: u32, session: String },
    SignatureQueued { session: String, ready_at: u64 },
    CyphersignaturePublished { index: u64, session: String, fragment: Option<u32> },
    FragmentUnavailable { session: String, fragment: u32, reason: String },
    PublishRejected { session: String, reason: String },
    Triggered { index: u64 },
    SecretsDeleted { rabbit: u32 },
    Ignored { party: String, reason: String },
}

#[derive(Clone, Debug)]
pub struct Outgoing<G: Group> {
    pub to: PartyId,
    pub channel: Channel,
    pub msg: Message<G>,
    /// Extra ticks before delivery.
    pub delay: u64,
}

/// What a handler may touch: the public chain, its own randomness, and an outbox.
pub struct Ctx<'a, G: Group> {
    pub now: u64,
    pub me: PartyId,
    pub chain: &'a mut SignatureChain<G>,
    pub rng: &'a mut dyn RngCore,
    pub live_rabbits: &'a [u32],
    pub outbox: Vec<Outgoing<G>>,
    pub events: Vec<ProtocolEvent>,
    /// Chain indices appended by this handler.
    pub published: Vec<u64>,
}

impl<'a, G: Group> Ctx<'a, G> {
    pub fn new(
        now: u64,
        me: PartyId,
        chain: &'a mut SignatureChain<G>,
        rng: &'a mut dyn RngCore,
        live_rabbits: &'a [u32],
    ) -> Self {
        Self {
            now,
            me,
            chain,
            rng,
            live_rabbits,
            outbox: Vec::new(),
            events: Vec::new(),
            published: Vec::new(),
        }
    }

    pub fn send(&mut self, to: PartyId, msg: Message<G>) {
        self.outbox.push(Outgoing {
            to,
            channel: Channel::Secure,
            msg,
            delay: 0,
        });
    }

    pub fn send_later(&mut self, to: PartyId, msg: Message<G>, delay: u64) {
        self.outbox.push(Outgoing {
            to,
            channel: Channel::Secure,
            msg,
            delay,
        });
    }

    pub fn broadcast(&mut self, to: PartyId, msg: Message<G>) {
        self.outbox.push(Outgoing {
            to,
            channel: Channel::Public,
            msg,
            delay: 0,
        });
    }

    pub fn event(&mut self, e: ProtocolEvent) {
        self.events.push(e);
    }

    /// Lowest-indexed live rabbit.
    pub fn coordinator(&self) -> Option<u32> {
        self.live_rabbits.iter().copied().min()
    }
}

/// Canonical identifier `u` for identity evidence, never zero.
pub fn derive_identifier<G: Group>(evidence: &str) -> Result<G::Scalar> {
    check_evidence(evidence)?;
    let mut counter = 0u32;
    loop {
        let mut data = evidence.as_bytes().to_vec();
        if counter > 0 {
            data.extend_from_slice(format!("#{counter}").as_bytes());
        }
        let u = G::hash_to_scalar(IDENTITY_TAG, &data);
        if !u.is_zero() {
            return Ok(u);
        }
        counter += 1;
    }
}

pub fn check_evidence(evidence: &str) -> Result<()> {
    let bad = |m: &str| Err(Error::MalformedEvidence(m.to_string()));
    if evidence.is_empty() {
        return bad("empty");
    }
    if evidence.len() > MAX_EVIDENCE_LEN {
        return bad("too long");
    }
    if evidence.trim() != evidence {
        return bad("leading or trailing whitespace");
    }
    if evidence.chars().any(char::is_control) {
        return bad("control characters");
    }
    Ok(())
}

/// Session identifier `h_V(p_U)`, a validator-keyed SHA-256 of the signed payload.
///
/// It is a byte string rather than a scalar so that sessions stay distinct
/// even over the toy group.
pub fn session_hash(validator: u32, preimage: &[u8]) -> SessionId {
    let tag = validator_tag(validator);
    let mut h = Sha256::new();
    h.update(b"session");
    h.update((tag.len() as u64).to_be_bytes());
    h.update(&tag);
    h.update(preimage);
    SessionId(h.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SessionId(pub [u8; 32]);

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl std::fmt::Debug for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SessionId({self})")
    }
}

impl std::str::FromStr for SessionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = crate::group::decode_hex(s)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Decode("session id must be 32 bytes".into()))?;
        Ok(SessionId(arr))
    }
}

impl Serialize for SessionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SessionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `p_U = Pet ‖ m_U`.
pub fn signed_payload(petition_text: &[u8], testimony: &[u8]) -> Vec<u8> {
    let mut p = petition_text.to_vec();
    p.extend_from_slice(testimony);
    p
}

fn session_label(validator: u32, session: &SessionId) -> String {
    format!("{validator}:{session}")
}

type SessionKey = (u32, SessionId);

fn session_key(validator: u32, session: &SessionId) -> SessionKey {
    (validator, *session)
}

#[derive(Clone, Debug)]
pub struct UserState {
    pub id: u32,
    pub evidence: String,
    pub testimony: Vec<u8>,
    pub threshold: Option<u32>,
    pub validators: Vec<u32>,
}

impl UserState {
    /// An empty testimony is replaced by random bytes so `p_U` stays unguessable.
    pub fn new(
        id: u32,
        evidence: impl Into<String>,
        testimony: Vec<u8>,
        threshold: Option<u32>,
        validators: Vec<u32>,
        rng: &mut dyn RngCore,
    ) -> Self {
        let testimony = if testimony.is_empty() {
            let mut random = vec![0u8; RANDOM_TESTIMONY_LEN];
            rng.fill_bytes(&mut random);
            random
        } else {
            testimony
        };
        Self {
            id,
            evidence: evidence.into(),
            testimony,
            threshold,
            validators,
        }
    }

    pub fn payload(&self, petition_text: &[u8]) -> Vec<u8> {
        signed_payload(petition_text, &self.testimony)
    }

    /// Session hashes this user will use, one per validator.
    pub fn sessions<G: Group>(&self, petition_text: &[u8]) -> Vec<(u32, SessionId)> {
        let p_u = self.payload(petition_text);
        self.validators
            .iter()
            .map(|&v| (v, session_hash(v, &p_u)))
            .collect()
    }

    /// Audits the petition, then contacts every validator and every rabbit.
    pub fn start<G: Group>(&self, ctx: &mut Ctx<'_, G>) {
        if ctx.chain.is_expired() {
            ctx.event(ProtocolEvent::SigningRefused {
                user: self.id,
                reason: Error::Expired.to_string(),
            });
            return;
        }
        let report = verify_ceremony(ctx.chain.params(), ctx.chain.ceremony());
        if !report.ok {
            ctx.event(ProtocolEvent::SigningRefused {
                user: self.id,
                reason: report.problems.join("; "),
            });
            return;
        }
        let params = ctx.chain.params().clone();
        let p_u = self.payload(&params.petition_text);
        for &v in &self.validators {
            let session = session_hash(v, &p_u);
            ctx.send(
                PartyId::Validator(v),
                Message::SignRequest {
                    evidence: self.evidence.clone(),
                    session,
                    threshold: self.threshold,
                },
            );
            for r in 1..=params.k {
                ctx.send(
                    PartyId::Rabbit(r),
                    Message::Preimage {
                        validator: v,
                        session,
                        preimage: p_u.clone(),
                        threshold: self.threshold,
                    },
                );
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct IssuedIdentity<G: Group> {
    #[serde(with = "encoding::scalar")]
    pub identifier: G::Scalar,
    pub session: SessionId,
}

#[derive(Clone, Debug)]
pub struct ValidatorState<G: Group> {
    pub id: u32,
    pub registry: BTreeMap<String, G::Scalar>,
    pub issued: Vec<IssuedIdentity<G>>,
}

impl<G: Group> ValidatorState<G> {
    pub fn new(id: u32) -> Self {
        Self {
            id,
            registry: BTreeMap::new(),
            issued: Vec::new(),
        }
    }

    /// Checks the evidence and returns the user's identifier.
    pub fn validate_user(&mut self, evidence: &str) -> Result<G::Scalar> {
        let u = derive_identifier::<G>(evidence)?;
        self.registry.insert(evidence.to_string(), u);
        Ok(u)
    }

    /// Shares `u` among the rabbits, tagged with the user's session hash.
    pub fn distribute(
        &mut self,
        ctx: &mut Ctx<'_, G>,
        u: G::Scalar,
        session: SessionId,
        threshold: Option<u32>,
    ) -> Result<()> {
        let (t, k) = (ctx.chain.params().t as usize, ctx.chain.params().k as usize);
        let (shares, commitment) = vss::share::<G, dyn RngCore>(&u, t, k, ctx.rng)?;
        for share in shares {
            ctx.send(
                PartyId::Rabbit(share.index),
                Message::IdentityShare {
                    validator: self.id,
                    session,
                    share,
                    commitment: commitment.clone(),
                    threshold,
                },
            );
        }
        self.issued.push(IssuedIdentity { identifier: u, session });
        ctx.event(ProtocolEvent::IdentityIssued {
            validator: self.id,
            session: session_label(self.id, &session),
        });
        Ok(())
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_, G>, from: PartyId, msg: Message<G>) {
        let Message::SignRequest { evidence, session, threshold } = msg else {
            ctx.event(ProtocolEvent::Ignored {
                party: ctx.me.to_string(),
                reason: format!("unexpected {} from {from}", msg.type_tag()),
            });
            return;
        };
        if self.issued.iter().any(|i| i.session == session) {
            ctx.event(ProtocolEvent::Ignored {
                party: ctx.me.to_string(),
                reason: "repeated session".into(),
            });
            return;
        }
        let result = self
            .validate_user(&evidence)
            .and_then(|u| self.distribute(ctx, u, session, threshold));
        if let Err(e) = result {
            ctx.event(ProtocolEvent::EvidenceRejected {
                validator: self.id,
                reason: e.to_string(),
            });
        }
    }
}

/// A rabbit's long-lived secrets; everything else it holds is per-session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RabbitSecrets<G: Group> {
    pub index: u32,
    pub store: RabbitShareStore<G>,
    pub hash_key: Option<HashKeyShare<G>>,
    pub triples: TriplePool<G>,
}

#[derive(Clone, Debug, Default)]
struct RabbitSession<G: Group> {
    share: Option<(ShamirShare<G>, FeldmanCommitment<G>, Option<u32>)>,
    preimage: Option<Vec<u8>>,
    threshold: Option<u32>,
    ready_sent: bool,
    rejected: bool,
    triple: Option<dist_hash::TripleShare<G>>,
}

/// A participant's `g_P^{z_i}` and its two encryptions of `u_i`.
type PartialOutput<G> = (<G as Group>::Element, HybridCiphertext<G>, HybridCiphertext<G>);

#[derive(Clone, Debug)]
struct CoordSession<G: Group> {
    ready: BTreeSet<u32>,
    participants: Vec<u32>,
    openings: BTreeMap<u32, HashOpening<G>>,
    partials: BTreeMap<u32, PartialOutput<G>>,
    started: bool,
    opened: bool,
    finished: bool,
}

impl<G: Group> Default for CoordSession<G> {
    fn default() -> Self {
        Self {
            ready: BTreeSet::new(),
            participants: Vec::new(),
            openings: BTreeMap::new(),
            partials: BTreeMap::new(),
            started: false,
            opened: false,
            finished: false,
        }
    }
}

#[derive(Clone, Debug)]
struct PendingSignature<G: Group> {
    label: String,
    dup_hash: G::Element,
    threshold: Option<u32>,
    testimony: Vec<u8>,
    shares: Vec<HybridCiphertext<G>>,
    ready_at: u64,
}

#[derive(Clone, Debug)]
struct ActiveRelease<G: Group> {
    pending: PendingSignature<G>,
    fragment: u32,
    asked: BTreeSet<u32>,
    responses: BTreeMap<u32, Vec<HeldShare<G>>>,
}

#[derive(Clone, Debug, Default)]
struct Coordinator<G: Group> {
    sessions: BTreeMap<SessionKey, CoordSession<G>>,
    assigned_triples: BTreeSet<u64>,
    queue: VecDeque<PendingSignature<G>>,
    queued_hashes: BTreeSet<Vec<u8>>,
    active: Option<ActiveRelease<G>>,
}

#[derive(Clone, Debug)]
pub struct RabbitState<G: Group> {
    pub secrets: RabbitSecrets<G>,
    /// Upper bound of the uniform delay before a cyphersignature is published.
    pub max_delay: u64,
    pub erased: bool,
    sessions: BTreeMap<SessionKey, RabbitSession<G>>,
    coord: Coordinator<G>,
}

impl<G: Group> RabbitState<G> {
    pub fn new(secrets: RabbitSecrets<G>, max_delay: u64) -> Self {
        Self {
            secrets,
            max_delay,
            erased: false,
            sessions: BTreeMap::new(),
            coord: Coordinator::default(),
        }
    }

    pub fn index(&self) -> u32 {
        self.secrets.index
    }

    /// Every scalar this rabbit currently stores, for leakage audits.
    pub fn stored_scalars(&self) -> Vec<G::Scalar> {
        let mut out: Vec<G::Scalar> = self.secrets.store.shares.iter().map(|h| h.share.value).collect();
        if let Some(k) = &self.secrets.hash_key {
            out.push(k.share.value);
        }
        for t in &self.secrets.triples.available {
            out.extend([t.a.value, t.b.value, t.c.value]);
        }
        for s in self.sessions.values() {
            if let Some((share, _, _)) = &s.share {
                out.push(share.value);
            }
        }
        out
    }

    /// The identity shares this rabbit holds, by validator and session.
    pub fn identity_shares(&self) -> Vec<(u32, SessionId, ShamirShare<G>)> {
        self.sessions
            .iter()
            .filter_map(|((v, session), s)| s.share.as_ref().map(|(sh, _, _)| (*v, *session, *sh)))
            .collect()
    }

    /// Preimages this rabbit has seen.
    pub fn preimages(&self) -> Vec<Vec<u8>> {
        self.sessions.values().filter_map(|s| s.preimage.clone()).collect()
    }

    pub fn erase(&mut self) {
        self.secrets.store.erase();
        self.secrets.hash_key = None;
        self.secrets.triples = TriplePool::default();
        self.sessions.clear();
        self.coord = Coordinator::default();
        self.erased = true;
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_, G>, from: PartyId, msg: Message<G>) {
        if let Message::DeleteSecrets = msg {
            self.erase();
            ctx.event(ProtocolEvent::SecretsDeleted { rabbit: self.index() });
            return;
        }
        if self.erased && !matches!(msg, Message::FragmentRequest { .. }) {
            ctx.event(ProtocolEvent::Ignored {
                party: ctx.me.to_string(),
                reason: format!("{} after secrets were deleted", msg.type_tag()),
            });
            return;
        }
        let result = match msg {
            Message::IdentityShare { validator, session, share, commitment, threshold } => {
                self.on_identity_share(ctx, validator, session, share, commitment, threshold)
            }
            Message::Preimage { validator, session, preimage, threshold } => {
                self.on_preimage(ctx, validator, session, preimage, threshold)
            }
            Message::SessionReady { validator, session } => self.on_ready(ctx, from, validator, session),
            Message::HashStart { validator, session, triple, participants } => {
                self.on_hash_start(ctx, validator, session, triple, participants)
            }
            Message::HashOpening { validator, session, opening } => {
                self.on_opening(ctx, validator, session, opening)
            }
            Message::HashOpened { validator, session, d, e } => self.on_opened(ctx, validator, session, d, e),
            Message::HashPartial {
                validator,
                session,
                index,
                partial,
                validation_share,
                signature_share,
            } => self.on_partial(ctx, validator, session, index, partial, validation_share, signature_share),
            Message::SessionAbort { validator, session, reason } => {
                if let Some(s) = self.coord.sessions.get_mut(&session_key(validator, &session)) {
                    s.finished = true;
                }
                ctx.event(ProtocolEvent::SessionRejected {
                    rabbit: self.index(),
                    validator,
                    session: session_label(validator, &session),
                    reason,
                });
                Ok(())
            }
            Message::ReleaseTimer => {
                self.pump_releases(ctx);
                Ok(())
            }
            Message::FragmentRequest { fragment } => {
                let shares = self.secrets.store.shares_for_fragment(fragment).cloned().collect();
                ctx.send(from, Message::FragmentShares { fragment, shares });
                Ok(())
            }
            Message::FragmentShares { fragment, shares } => {
                self.on_fragment_shares(ctx, from, fragment, shares);
                Ok(())
            }
            other => Err(Error::SessionMismatch(format!("unexpected {}", other.type_tag()))),
        };
        if let Err(e) = result {
            ctx.event(ProtocolEvent::Ignored {
                party: ctx.me.to_string(),
                reason: e.to_string(),
            });
        }
    }

    fn reject(&mut self, ctx: &mut Ctx<'_, G>, validator: u32, session: &SessionId, reason: Error) {
        if let Some(s) = self.sessions.get_mut(&session_key(validator, session)) {
            s.rejected = true;
            s.share = None;
        }
        ctx.event(ProtocolEvent::SessionRejected {
            rabbit: self.index(),
            validator,
            session: session_label(validator, session),
            reason: reason.to_string(),
        });
    }

    fn on_identity_share(
        &mut self,
        ctx: &mut Ctx<'_, G>,
        validator: u32,
        session: SessionId,
        share: ShamirShare<G>,
        commitment: FeldmanCommitment<G>,
        threshold: Option<u32>,
    ) -> Result<()> {
        let params = ctx.chain.params();
        if !params.validators.contains(&validator) {
            self.reject(ctx, validator, &session, Error::UnvalidatedUser);
            return Ok(());
        }
        if share.index != self.index()
            || commitment.threshold() != params.t as usize
            || !vss::verify_share(&share, &commitment)
        {
            self.reject(ctx, validator, &session, Error::FragmentVerificationFailed(share.index));
            return Ok(());
        }
        let s = self.sessions.entry(session_key(validator, &session)).or_default();
        if s.rejected || s.share.is_some() {
            return Err(Error::SessionMismatch("identity share already received".into()));
        }
        s.share = Some((share, commitment, threshold));
        self.maybe_ready(ctx, validator, session);
        Ok(())
    }

    fn on_preimage(
        &mut self,
        ctx: &mut Ctx<'_, G>,
        validator: u32,
        session: SessionId,
        preimage: Vec<u8>,
        threshold: Option<u32>,
    ) -> Result<()> {
        let params = ctx.chain.params();
        if session_hash(validator, &preimage) != session {
            self.reject(ctx, validator, &session, Error::PreimageMismatch);
            return Ok(());
        }
        if !preimage.starts_with(&params.petition_text) {
            self.reject(ctx, validator, &session, Error::UnknownPetition);
            return Ok(());
        }
        if let Err(e) = params.effective_threshold(threshold) {
            self.reject(ctx, validator, &session, e);
            return Ok(());
        }
        let s = self.sessions.entry(session_key(validator, &session)).or_default();
        if s.rejected || s.preimage.is_some() {
            return Err(Error::SessionMismatch("preimage already received".into()));
        }
        s.preimage = Some(preimage);
        s.threshold = threshold;
        self.maybe_ready(ctx, validator, session);
        Ok(())
    }

    fn maybe_ready(&mut self, ctx: &mut Ctx<'_, G>, validator: u32, session: SessionId) {
        let key = session_key(validator, &session);
        let Some(s) = self.sessions.get_mut(&key) else { return };
        let Some((_, _, share_threshold)) = &s.share else { return };
        if s.preimage.is_none() || s.ready_sent || s.rejected {
            return;
        }
        if *share_threshold != s.threshold {
            self.reject(ctx, validator, &session, Error::SessionMismatch("threshold differs".into()));
            return;
        }
        s.ready_sent = true;
        match ctx.coordinator() {
            Some(c) => ctx.send(PartyId::Rabbit(c), Message::SessionReady { validator, session }),
            None => self.reject(ctx, validator, &session, Error::InsufficientParticipants { needed: 1, available: 0 }),
        }
    }

    fn on_ready(&mut self, ctx: &mut Ctx<'_, G>, from: PartyId, validator: u32, session: SessionId) -> Result<()> {
        let PartyId::Rabbit(r) = from else {
            return Err(Error::SessionMismatch("session ready from a non-rabbit".into()));
        };
        let k = ctx.chain.params().k;
        let key = session_key(validator, &session);
        let cs = self.coord.sessions.entry(key).or_default();
        cs.ready.insert(r);
        if cs.started || cs.ready.len() < k as usize {
            return Ok(());
        }
        // All k rabbits hold a verified share and the matching preimage.
        let pool = &self.secrets.triples;
        let triple = pool
            .available
            .iter()
            .map(|t| t.id)
            .find(|id| !pool.consumed.contains(id) && !self.coord.assigned_triples.contains(id));
        let Some(triple) = triple else {
            cs.finished = true;
            ctx.event(ProtocolEvent::SessionRejected {
                rabbit: self.secrets.index,
                validator,
                session: session_label(validator, &session),
                reason: Error::InsufficientTriples.to_string(),
            });
            return Ok(());
        };
        self.coord.assigned_triples.insert(triple);
        cs.started = true;
        cs.participants = cs.ready.iter().copied().collect();
        for &p in &cs.participants.clone() {
            ctx.send(
                PartyId::Rabbit(p),
                Message::HashStart {
                    validator,
                    session,
                    triple,
                    participants: cs.participants.clone(),
                },
            );
        }
        Ok(())
    }

    fn on_hash_start(
        &mut self,
        ctx: &mut Ctx<'_, G>,
        validator: u32,
        session: SessionId,
        triple: u64,
        _participants: Vec<u32>,
    ) -> Result<()> {
        let key = session_key(validator, &session);
        let s = self.sessions.get_mut(&key).ok_or(Error::UnknownSession)?;
        let (u_share, _, _) = s.share.as_ref().ok_or(Error::UnknownSession)?;
        let key_share = self.secrets.hash_key.as_ref().ok_or(Error::InsufficientShares { needed: 1, available: 0 })?;
        let outcome = self
            .secrets
            .triples
            .claim(triple)
            .and_then(|tr| dist_hash::open(u_share, &key_share.share, &tr).map(|o| (tr, o)));
        let coordinator = ctx.coordinator().unwrap_or(self.secrets.index);
        match outcome {
            Ok((tr, opening)) => {
                s.triple = Some(tr);
                ctx.send(PartyId::Rabbit(coordinator), Message::HashOpening { validator, session, opening });
            }
            Err(e) => {
                ctx.send(
                    PartyId::Rabbit(coordinator),
                    Message::SessionAbort { validator, session, reason: e.to_string() },
                );
            }
        }
        Ok(())
    }

    fn on_opening(&mut self, ctx: &mut Ctx<'_, G>, validator: u32, session: SessionId, opening: HashOpening<G>) -> Result<()> {
        let t = ctx.chain.params().t as usize;
        let cs = self
            .coord
            .sessions
            .get_mut(&session_key(validator, &session))
            .ok_or(Error::UnknownSession)?;
        if cs.finished || cs.opened {
            return Ok(());
        }
        cs.openings.insert(opening.index, opening);
        if cs.openings.len() < cs.participants.len() {
            return Ok(());
        }
        let openings: Vec<_> = cs.openings.values().copied().collect();
        let (d, e) = dist_hash::combine_openings::<G>(&openings, t)?;
        cs.opened = true;
        for &p in &cs.participants {
            ctx.send(PartyId::Rabbit(p), Message::HashOpened { validator, session, d, e });
        }
        Ok(())
    }

    fn on_opened(&mut self, ctx: &mut Ctx<'_, G>, validator: u32, session: SessionId, d: G::Scalar, e: G::Scalar) -> Result<()> {
        let key = session_key(validator, &session);
        let s = self.sessions.get_mut(&key).ok_or(Error::UnknownSession)?;
        let tr = s.triple.take().ok_or(Error::UnknownSession)?;
        let (u_share, _, _) = *s.share.as_ref().ok_or(Error::UnknownSession)?;
        let record_key = ctx.chain.record_key(s.threshold);
        let generator = ctx.chain.params().hash_generator;
        let (index, partial) = dist_hash::partial(&d, &e, &tr, &generator);
        let validation_share = encrypt_identity_share::<G, dyn RngCore>(&record_key, &u_share, ctx.rng)?;
        let signature_share = encrypt_identity_share::<G, dyn RngCore>(&record_key, &u_share, ctx.rng)?;
        let coordinator = ctx.coordinator().unwrap_or(self.secrets.index);
        ctx.send(
            PartyId::Rabbit(coordinator),
            Message::HashPartial { validator, session, index, partial, validation_share, signature_share },
        );
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn on_partial(
        &mut self,
        ctx: &mut Ctx<'_, G>,
        validator: u32,
        session: SessionId,
        index: u32,
        partial: G::Element,
        validation_share: HybridCiphertext<G>,
        signature_share: HybridCiphertext<G>,
    ) -> Result<()> {
        let t = ctx.chain.params().t as usize;
        let v = ctx.chain.params().v as usize;
        let key = session_key(validator, &session);
        let label = session_label(validator, &session);
        let cs = self.coord.sessions.get_mut(&key).ok_or(Error::UnknownSession)?;
        if cs.finished {
            return Ok(());
        }
        cs.partials.insert(index, (partial, validation_share, signature_share));
        if cs.partials.len() < cs.participants.len() {
            return Ok(());
        }
        cs.finished = true;
        let points: Vec<_> = cs.partials.iter().map(|(i, p)| (*i, p.0)).collect();
        let dup_hash = dist_hash::combine_partials::<G>(&points, t)?;
        let validation_shares: Vec<_> = cs.partials.values().map(|p| p.1.clone()).collect();
        let signature_shares: Vec<_> = cs.partials.values().map(|p| p.2.clone()).collect();

        let own = self.sessions.get(&key).ok_or(Error::UnknownSession)?;
        let threshold = own.threshold;
        let preimage = own.preimage.clone().ok_or(Error::UnknownSession)?;

        if !ctx.chain.check_duplicate(&dup_hash) || ctx.chain.validators_for(&dup_hash).contains(&validator) {
            ctx.event(ProtocolEvent::DuplicateRejected { validator, session: label });
            return Ok(());
        }
        let record = ValidationRecord {
            validator,
            dup_hash,
            encrypted_shares: validation_shares,
            threshold,
        };
        match ctx.chain.append_validation(record) {
            Ok(index) => {
                ctx.published.push(index);
                ctx.event(ProtocolEvent::ValidationPublished { index, validator, session: label.clone() });
            }
            Err(e) => {
                ctx.event(ProtocolEvent::PublishRejected { session: label, reason: e.to_string() });
                return Ok(());
            }
        }
        let hash_bytes = dup_hash.to_bytes();
        if ctx.chain.validators_for(&dup_hash).len() >= v
            && !ctx.chain.has_cyphersignature(&dup_hash)
            && !self.coord.queued_hashes.contains(&hash_bytes)
        {
            let petition_len = ctx.chain.params().petition_text.len();
            let delay = if self.max_delay == 0 { 0 } else { ctx.rng.gen_range(0..=self.max_delay) };
            let ready_at = ctx.now + delay;
            self.coord.queued_hashes.insert(hash_bytes);
            self.coord.queue.push_back(PendingSignature {
                label: label.clone(),
                dup_hash,
                threshold,
                testimony: preimage[petition_len..].to_vec(),
                shares: signature_shares,
                ready_at,
            });
            ctx.event(ProtocolEvent::SignatureQueued { session: label, ready_at });
            let me = ctx.me;
            ctx.send_later(me, Message::ReleaseTimer, delay);
        }
        Ok(())
    }

    /// Starts the next due release if none is running.
    fn pump_releases(&mut self, ctx: &mut Ctx<'_, G>) {
        while self.coord.active.is_none() {
            let due = self
                .coord
                .queue
                .iter()
                .enumerate()
                .filter(|(_, p)| p.ready_at <= ctx.now)
                .min_by_key(|(i, p)| (p.ready_at, *i))
                .map(|(i, _)| i);
            let Some(i) = due else { return };
            let pending = self.coord.queue.remove(i).expect("index from enumerate");
            match ctx.chain.select_fragment(pending.threshold) {
                None => self.publish_signature(ctx, pending, None),
                Some(fragment) => {
                    let asked: BTreeSet<u32> = ctx.live_rabbits.iter().copied().collect();
                    for &r in &asked {
                        ctx.send(PartyId::Rabbit(r), Message::FragmentRequest { fragment });
                    }
                    self.coord.active = Some(ActiveRelease {
                        pending,
                        fragment,
                        asked,
                        responses: BTreeMap::new(),
                    });
                }
            }
        }
    }

    fn on_fragment_shares(&mut self, ctx: &mut Ctx<'_, G>, from: PartyId, fragment: u32, shares: Vec<HeldShare<G>>) {
        let PartyId::Rabbit(r) = from else { return };
        let Some(active) = self.coord.active.as_mut() else { return };
        if active.fragment != fragment || !active.asked.contains(&r) {
            return;
        }
        active.responses.insert(r, shares);
        if active.responses.len() < active.asked.len() {
            return;
        }
        let active = self.coord.active.take().expect("checked above");
        let params = ctx.chain.params();
        let (t, k) = (params.t, params.k);
        let public = params.public();
        let responders: Vec<u32> = active.responses.keys().copied().collect();
        let mut result = Err(Error::InsufficientShares { needed: t as usize, available: 0 });
        // Any t responders suffice; try subsets so one bad responder cannot block release.
        for subset in crate::chain::subsets(responders.len(), (t as usize).min(responders.len())) {
            let stores: Vec<RabbitShareStore<G>> = subset
                .iter()
                .map(|&i| RabbitShareStore {
                    rabbit: responders[i],
                    shares: active.responses[&responders[i]].clone(),
                })
                .collect();
            let sets = collect_fragment_shares(fragment, stores.iter());
            result = reconstruct_fragment(fragment, t as usize, k, &sets, &public);
            if result.is_ok() {
                break;
            }
        }
        match result {
            Ok(f) => self.publish_signature(ctx, active.pending, Some(f)),
            Err(e) => {
                self.coord.queued_hashes.remove(&active.pending.dup_hash.to_bytes());
                ctx.event(ProtocolEvent::FragmentUnavailable {
                    session: active.pending.label,
                    fragment,
                    reason: e.to_string(),
                });
            }
        }
        self.pump_releases(ctx);
    }

    fn publish_signature(
        &mut self,
        ctx: &mut Ctx<'_, G>,
        pending: PendingSignature<G>,
        fragment: Option<crate::dkg::KeyFragment<G>>,
    ) {
        self.coord.queued_hashes.remove(&pending.dup_hash.to_bytes());
        let key = ctx.chain.record_key(pending.threshold);
        let testimony = match hybrid_encrypt::<G, dyn RngCore>(&key, &pending.testimony, ctx.rng) {
            Ok(c) => c,
            Err(e) => {
                ctx.event(ProtocolEvent::PublishRejected { session: pending.label, reason: e.to_string() });
                return;
            }
        };
        let was_triggered = ctx.chain.trigger_check().triggered;
        let sig = Cyphersignature {
            testimony,
            encrypted_shares: pending.shares,
            dup_hash: pending.dup_hash,
            fragment,
            threshold: pending.threshold,
        };
        let fragment_index = sig.fragment.map(|f| f.index);
        match ctx.chain.append_cyphersignature(sig) {
            Ok(index) => {
                ctx.published.push(index);
                ctx.event(ProtocolEvent::CyphersignaturePublished {
                    index,
                    session: pending.label,
                    fragment: fragment_index,
                });
                if !was_triggered && ctx.chain.trigger_check().triggered {
                    ctx.event(ProtocolEvent::Triggered { index });
                }
            }
            Err(e) => ctx.event(ProtocolEvent::PublishRejected { session: pending.label, reason: e.to_string() }),
        }
    }
}

/// Rabbit secrets out of a petition setup, one entry per rabbit.
pub fn rabbit_secrets<G: Group>(setup: &crate::setup::PetitionSetup<G>) -> Vec<RabbitSecrets<G>> {
    let k = setup.params.k as usize;
    let pools = dist_hash::provision_pools(k, &setup.triples);
    setup
        .stores
        .iter()
        .zip(&setup.hash_keys)
        .zip(pools)
        .map(|((store, key), triples)| RabbitSecrets {
            index: store.rabbit,
            store: store.clone(),
            hash_key: Some(key.clone()),
            triples,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Ristretto255, ToyGroup};
    use crate::params::PetitionConfig;
    use crate::setup::create_petition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// FIFO delivery of every message, all parties online.
    struct Bench<G: Group> {
        chain: SignatureChain<G>,
        validators: BTreeMap<u32, ValidatorState<G>>,
        rabbits: Vec<RabbitState<G>>,
        rng: ChaCha20Rng,
        queue: VecDeque<(PartyId, Outgoing<G>)>,
        events: Vec<ProtocolEvent>,
        census: BTreeMap<(String, String), usize>,
        hash_key: G::Scalar,
    }

    fn role(p: PartyId) -> String {
        match p {
            PartyId::User(_) => "user",
            PartyId::Validator(_) => "validator",
            PartyId::Rabbit(_) => "rabbit",
            PartyId::Author => "author",
            PartyId::Chain => "chain",
        }
        .into()
    }

    impl<G: Group> Bench<G> {
        fn new(config: PetitionConfig, seed: u64) -> Self {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let setup = create_petition::<G, _>(&config, 20, &mut rng).unwrap();
            let keys: Vec<_> = setup.hash_keys.iter().map(|k| k.share).collect();
            let hash_key = vss::reconstruct::<G>(&keys, config.t as usize).unwrap();
            let chain = SignatureChain::new(setup.params.clone(), setup.transcript.clone()).unwrap();
            let rabbits = rabbit_secrets(&setup).into_iter().map(|s| RabbitState::new(s, 0)).collect();
            let validators = config.validators.iter().map(|&v| (v, ValidatorState::new(v))).collect();
            Self {
                chain,
                validators,
                rabbits,
                rng,
                queue: VecDeque::new(),
                events: Vec::new(),
                census: BTreeMap::new(),
                hash_key,
            }
        }

        fn live(&self) -> Vec<u32> {
            self.rabbits.iter().map(|r| r.index()).collect()
        }

        fn absorb(&mut self, from: PartyId, outbox: Vec<Outgoing<G>>, events: Vec<ProtocolEvent>, published: usize) {
            for o in outbox {
                if o.to != from {
                    *self.census.entry((role(from), role(o.to))).or_default() += 1;
                }
                self.queue.push_back((from, o));
            }
            if published > 0 {
                *self.census.entry((role(from), "chain".into())).or_default() += published;
            }
            self.events.extend(events);
        }

        fn sign(&mut self, user: &UserState) {
            let live = self.live();
            let mut ctx = Ctx::new(0, PartyId::User(user.id), &mut self.chain, &mut self.rng, &live);
            user.start(&mut ctx);
            let (o, e, p) = (ctx.outbox, ctx.events, ctx.published.len());
            self.absorb(PartyId::User(user.id), o, e, p);
            self.run();
        }

        fn run(&mut self) {
            while let Some((from, o)) = self.queue.pop_front() {
                let live = self.live();
                let mut ctx = Ctx::new(0, o.to, &mut self.chain, &mut self.rng, &live);
                match o.to {
                    PartyId::Validator(v) => self.validators.get_mut(&v).unwrap().handle(&mut ctx, from, o.msg),
                    PartyId::Rabbit(r) => self.rabbits[r as usize - 1].handle(&mut ctx, from, o.msg),
                    _ => {}
                }
                let (out, ev, p) = (ctx.outbox, ctx.events, ctx.published.len());
                self.absorb(o.to, out, ev, p);
            }
        }

        fn user(&mut self, id: u32, evidence: &str, testimony: &[u8], threshold: Option<u32>, validators: Vec<u32>) -> UserState {
            UserState::new(id, evidence, testimony.to_vec(), threshold, validators, &mut self.rng)
        }
    }

    #[test]
    fn identifiers_are_validator_independent() {
        let mut a = ValidatorState::<ToyGroup>::new(1);
        let mut b = ValidatorState::<ToyGroup>::new(2);
        assert_eq!(a.validate_user("alice").unwrap(), b.validate_user("alice").unwrap());
        let x = derive_identifier::<Ristretto255>("alice").unwrap();
        let y = derive_identifier::<Ristretto255>("bob").unwrap();
        assert_ne!(x, y);
        assert!(derive_identifier::<ToyGroup>("").is_err());
        assert!(derive_identifier::<ToyGroup>(" alice").is_err());
        assert!(derive_identifier::<ToyGroup>("al\nice").is_err());
    }

    #[test]
    fn zero_identifier_is_resampled() {
        let evidence = (0..)
            .map(|i| format!("person-{i}"))
            .find(|e| ToyGroup::hash_to_scalar(IDENTITY_TAG, e.as_bytes()).is_zero())
            .unwrap();
        let u = derive_identifier::<ToyGroup>(&evidence).unwrap();
        assert!(!u.is_zero());
        let mut suffixed = evidence.clone().into_bytes();
        suffixed.extend_from_slice(b"#1");
        let direct = ToyGroup::hash_to_scalar(IDENTITY_TAG, &suffixed);
        if !direct.is_zero() {
            assert_eq!(u, direct);
        }
    }

    #[test]
    fn session_hash_is_deterministic_and_validator_specific() {
        let p = signed_payload(b"Pet", b"m");
        assert_eq!(session_hash(1, &p), session_hash(1, &p));
        assert_ne!(session_hash(1, &p), session_hash(2, &p));
        assert_eq!(p, b"Petm");
    }

    #[test]
    fn empty_testimony_becomes_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let u = UserState::new(1, "x", Vec::new(), None, vec![1], &mut rng);
        assert_eq!(u.testimony.len(), RANDOM_TESTIMONY_LEN);
        assert!(u.payload(b"Pet").starts_with(b"Pet"));
    }

    #[test]
    fn honest_flow_matches_message_census() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 3, 3, 2, 1), 2);
        let user = bench.user(1, "alice", b"hello", None, vec![1]);
        bench.sign(&user);
        let c = |a: &str, b: &str| bench.census.get(&(a.into(), b.into())).copied().unwrap_or(0);
        assert_eq!(c("user", "validator"), 1);
        assert_eq!(c("validator", "rabbit"), 3);
        assert_eq!(c("user", "rabbit"), 3);
        assert_eq!(c("rabbit", "chain"), 2);
        assert_eq!(bench.chain.validations().count(), 1);
        assert_eq!(bench.chain.signature_count(), 1);
    }

    #[test]
    fn full_petition_decrypts() {
        let mut bench = Bench::<Ristretto255>::new(PetitionConfig::new("Pet", 3, 3, 2, 1), 3);
        let names = ["alice", "bob", "carol"];
        for (i, n) in names.iter().enumerate() {
            let user = bench.user(i as u32, n, format!("testimony of {n}").as_bytes(), None, vec![1]);
            bench.sign(&user);
        }
        assert!(bench.events.iter().any(|e| matches!(e, ProtocolEvent::Triggered { .. })));
        let key = bench.hash_key;
        let out = bench.chain.decrypt_chain(Some(&key)).unwrap();
        for ((_, r), n) in out.iter().zip(names) {
            let d = r.as_ref().unwrap();
            assert_eq!(d.identity, derive_identifier::<Ristretto255>(n).unwrap());
            assert_eq!(d.testimony, format!("testimony of {n}").into_bytes());
        }
    }

    #[test]
    fn repeat_signer_is_rejected_before_release() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 3, 3, 2, 1), 4);
        let first = bench.user(1, "alice", b"one", None, vec![1]);
        bench.sign(&first);
        let again = bench.user(2, "alice", b"two", None, vec![1]);
        bench.sign(&again);
        assert_eq!(bench.chain.signature_count(), 1);
        assert_eq!(bench.chain.validations().count(), 1);
        assert_eq!(bench.chain.released_fragments().len(), 1);
        assert!(bench.events.iter().any(|e| matches!(e, ProtocolEvent::DuplicateRejected { .. })));
    }

    #[test]
    fn two_validators_needed_when_v_is_two() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 3, 3, 2, 2), 5);
        let lone = bench.user(1, "alice", b"one", None, vec![1]);
        bench.sign(&lone);
        assert_eq!(bench.chain.signature_count(), 0);
        let both = bench.user(2, "bob", b"two", None, vec![1, 2]);
        bench.sign(&both);
        assert_eq!(bench.chain.signature_count(), 1);
        assert_eq!(bench.chain.validations().count(), 3);
    }

    #[test]
    fn bad_preimages_are_rejected() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 3, 3, 2, 1), 6);
        let live = bench.live();
        let session = session_hash(1, b"Petx");
        let mut ctx = Ctx::new(0, PartyId::Rabbit(1), &mut bench.chain, &mut bench.rng, &live);
        bench.rabbits[0].handle(
            &mut ctx,
            PartyId::User(1),
            Message::Preimage { validator: 1, session, preimage: b"Pety".to_vec(), threshold: None },
        );
        let other = session_hash(1, b"Other petition");
        bench.rabbits[1].handle(
            &mut ctx,
            PartyId::User(1),
            Message::Preimage { validator: 1, session: other, preimage: b"Other petition".to_vec(), threshold: None },
        );
        let reasons: Vec<_> = ctx
            .events
            .iter()
            .filter_map(|e| match e {
                ProtocolEvent::SessionRejected { reason, .. } => Some(reason.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(reasons, vec![Error::PreimageMismatch.to_string(), Error::UnknownPetition.to_string()]);
    }

    #[test]
    fn rabbits_never_hold_the_identifier() {
        let mut bench = Bench::<Ristretto255>::new(PetitionConfig::new("Pet", 2, 3, 2, 1), 7);
        let user = bench.user(1, "alice", b"one", None, vec![1]);
        let u = derive_identifier::<Ristretto255>("alice").unwrap();
        bench.sign(&user);
        for r in &bench.rabbits {
            assert!(!r.stored_scalars().contains(&u));
        }
    }

    #[test]
    fn validator_shares_reconstruct_identifier() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 3, 3, 2, 1), 8);
        let user = bench.user(1, "dora", b"x", None, vec![1]);
        bench.sign(&user);
        let shares: Vec<_> = bench.rabbits.iter().map(|r| r.identity_shares()[0].2).collect();
        let u = derive_identifier::<ToyGroup>("dora").unwrap();
        for pair in crate::chain::subsets(3, 2) {
            let picked: Vec<_> = pair.iter().map(|&i| shares[i]).collect();
            assert_eq!(vss::reconstruct::<ToyGroup>(&picked, 2).unwrap(), u);
        }
    }

    #[test]
    fn multi_threshold_record_carries_threshold() {
        let mut config = PetitionConfig::new("Pet", 3, 3, 2, 1);
        config.thresholds = Some(vec![1, 2, 3]);
        let mut bench = Bench::<ToyGroup>::new(config, 9);
        let user = bench.user(1, "erin", b"x", Some(2), vec![1]);
        bench.sign(&user);
        let (_, sig) = bench.chain.cyphersignatures().next().unwrap();
        assert_eq!(sig.threshold, Some(2));
        assert_eq!(sig.fragment.unwrap().index, 2);
    }

    #[test]
    fn honeypot_makes_users_refuse() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 2, 3, 2, 1), 10);
        let mut params = bench.chain.params().clone();
        params.fragment_publics.swap(0, 1);
        params.fragment_publics[0] = ToyGroup::generator();
        params.public_key = ToyGroup::product(params.fragment_publics.iter());
        bench.chain = SignatureChain::new_unchecked(params, bench.chain.ceremony().to_vec());
        let user = bench.user(1, "fay", b"x", None, vec![1]);
        bench.sign(&user);
        assert!(matches!(bench.events[0], ProtocolEvent::SigningRefused { .. }));
        assert!(bench.census.is_empty());
    }

    #[test]
    fn deleted_secrets_stop_sessions() {
        let mut bench = Bench::<ToyGroup>::new(PetitionConfig::new("Pet", 3, 3, 2, 1), 11);
        for r in &mut bench.rabbits {
            r.erase();
        }
        let user = bench.user(1, "gus", b"x", None, vec![1]);
        bench.sign(&user);
        assert_eq!(bench.chain.len(), 1);
        assert!(bench.rabbits.iter().all(|r| r.stored_scalars().is_empty()));
    }

    #[test]
    fn messages_roundtrip_through_json() {
        let msg: Message<ToyGroup> = Message::SignRequest {
            evidence: "a".into(),
            session: session_hash(1, b"Petx"),
            threshold: Some(2),
        };
        let text = serde_json::to_string(&msg).unwrap();
        assert!(text.contains("\"type\":\"sign_request\""));
        assert_eq!(serde_json::from_str::<Message<ToyGroup>>(&text).unwrap(), msg);
    }
}
