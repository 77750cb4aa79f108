//! A simulated deployment: every party, the chain, and a deterministic clock.
//!
//! The world owns all party state and moves serialized messages between
//! parties in `(tick, sequence)` order. Each party draws from its own rng,
//! seeded from the scenario seed and the party's name, so a scenario always
//! produces the same chain bytes and the same event log.

use std::collections::{BTreeMap, BTreeSet};

use petition_core::chain::{encrypt_identity_share, SignatureChain, TriggerReport};
use petition_core::dkg::{collect_fragment_shares, reconstruct_fragment, CeremonyFaults};
use petition_core::group::{scalar_to_hex, Group, ScalarField};
use petition_core::params::PetitionParams;
use petition_core::protocol::{
    derive_identifier, rabbit_secrets, Channel, Ctx, Message, Outgoing, PartyId, ProtocolEvent, RabbitSecrets,
    RabbitState, UserState, ValidatorState,
};
use petition_core::setup::{create_petition_with_faults, default_triples, PetitionSetup};
use petition_core::vss::{self, ShamirShare};
use petition_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::adversary::{self, label, AdversaryReport, Coalition, Truth};
use crate::router::Router;
use crate::scenario::{Action, HoneypotMode, ScenarioScript, ScriptEvent};
use crate::SimError;

fn role(p: PartyId) -> &'static str {
    match p {
        PartyId::User(_) => "user",
        PartyId::Validator(_) => "validator",
        PartyId::Rabbit(_) => "rabbit",
        PartyId::Author => "author",
        PartyId::Chain => "chain",
    }
}

/// Per-party rng derived from the scenario seed.
pub fn party_rng(seed: u64, party: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"simnet-party-rng");
    h.update(seed.to_be_bytes());
    h.update(party.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SignStatus {
    Signed { record: u64 },
    Duplicate,
    Refused { reason: String },
    Rejected { reason: String },
    /// Validations published, cyphersignature not (yet) on the chain.
    Pending { validations: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignResult {
    pub user: String,
    pub at: u64,
    pub sessions: Vec<String>,
    #[serde(flatten)]
    pub status: SignStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoneypotOutcome {
    pub mode: HoneypotMode,
    /// Whether the published key passes the ceremony audit.
    pub audit_ok: bool,
    pub problems: Vec<String>,
    pub refusals: usize,
    pub signatures: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SabotageOutcome {
    pub deleted: Vec<u32>,
    pub k: u32,
    pub t: u32,
    /// Fragments still unreleased that the remaining rabbits can rebuild.
    pub recoverable: Vec<u32>,
    pub unrecoverable: Vec<u32>,
    pub triggered: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpiryOutcome {
    pub at: u64,
    pub result: Result<u64, String>,
    pub erased: Vec<u32>,
    /// Scalars still stored across all rabbits after the run.
    pub residual_scalars: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecryptedRecord {
    pub record: u64,
    pub threshold: Option<u32>,
    pub identity: String,
    pub user: Option<String>,
    pub testimony: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub chain_text: String,
    pub event_log: String,
    pub ceremony_abort: Option<Vec<u32>>,
    pub honeypot: Option<HoneypotOutcome>,
    pub signs: Vec<SignResult>,
    pub trigger: Option<TriggerReport>,
    pub decrypted: Vec<DecryptedRecord>,
    pub decryption_errors: Vec<(u64, String)>,
    pub adversary: Vec<AdversaryReport>,
    pub sabotage: Option<SabotageOutcome>,
    pub expiry: Option<ExpiryOutcome>,
    /// Messages sent between roles plus chain appends, keyed `from->to`.
    pub census: BTreeMap<String, usize>,
    pub ticks: u64,
    pub dropped: u64,
    pub undelivered: usize,
}

#[derive(Clone, Debug)]
struct Attempt {
    user: String,
    at: u64,
    sessions: Vec<String>,
    refused: Option<String>,
}

pub struct World<G: Group> {
    seed: u64,
    publication_delay: u64,
    max_ticks: u64,
    timeline: Vec<ScriptEvent>,
    cursor: usize,
    tick: u64,
    chain: SignatureChain<G>,
    validators: BTreeMap<u32, ValidatorState<G>>,
    rabbits: BTreeMap<u32, RabbitState<G>>,
    users: BTreeMap<String, u32>,
    attempts: Vec<Attempt>,
    session_thresholds: BTreeMap<String, Option<u32>>,
    rngs: BTreeMap<PartyId, ChaCha20Rng>,
    router: Router,
    offline: BTreeSet<PartyId>,
    corrupt_rabbits: BTreeSet<u32>,
    corrupt_validators: BTreeSet<u32>,
    bad_share_rabbits: BTreeSet<u32>,
    deleted: BTreeSet<u32>,
    events: Vec<(u64, PartyId, ProtocolEvent)>,
    log: Vec<String>,
    census: BTreeMap<String, usize>,
    hash_key: Option<G::Scalar>,
    reports: Vec<AdversaryReport>,
    honeypot: Option<(HoneypotMode, Vec<String>)>,
    expiry: Option<(u64, Result<u64, String>)>,
}

impl<G: Group> World<G> {
    /// Runs the ceremony and setup described by `script`. A failed ceremony is an error.
    pub fn from_script(script: &ScenarioScript) -> Result<Self, SimError> {
        script.validate()?;
        let config = script.petition.config();
        let mut author_rng = party_rng(script.seed, &PartyId::Author.to_string());
        let faults = CeremonyFaults {
            bad_dealers: script.ceremony_faults.iter().map(|f| (f.dealer, f.victim)).collect(),
        };
        let triples = script.triples.unwrap_or_else(|| default_triples(config.n));
        let mut setup: PetitionSetup<G> = create_petition_with_faults(&config, triples, &mut author_rng, &faults)?;
        let keys: Vec<ShamirShare<G>> = setup.hash_keys.iter().map(|k| k.share).collect();
        let hash_key = vss::reconstruct::<G>(&keys, config.t as usize)?;

        let (chain, honeypot) = match script.honeypot {
            None => (SignatureChain::new(setup.params.clone(), setup.transcript.clone())?, None),
            Some(mode) => {
                rig_key(&mut setup.params, mode, &mut author_rng);
                let report = petition_core::dkg::verify_ceremony(&setup.params, &setup.transcript);
                (
                    SignatureChain::new_unchecked(setup.params.clone(), setup.transcript.clone()),
                    Some((mode, report.problems)),
                )
            }
        };
        let mut world = Self::assemble(
            chain,
            rabbit_secrets(&setup),
            script.seed,
            script.publication_delay,
            Some(hash_key),
        );
        world.max_ticks = script.max_ticks;
        world.timeline = script.timeline();
        world.honeypot = honeypot;
        Ok(world)
    }

    /// Rebuilds a world around an existing chain and persisted rabbit secrets.
    pub fn resume(
        chain: SignatureChain<G>,
        secrets: Vec<RabbitSecrets<G>>,
        seed: u64,
        now: u64,
        publication_delay: u64,
    ) -> Self {
        let mut w = Self::assemble(chain, secrets, seed, publication_delay, None);
        w.tick = now;
        w
    }

    fn assemble(
        chain: SignatureChain<G>,
        secrets: Vec<RabbitSecrets<G>>,
        seed: u64,
        publication_delay: u64,
        hash_key: Option<G::Scalar>,
    ) -> Self {
        let validators = chain
            .params()
            .validators
            .iter()
            .map(|&v| (v, ValidatorState::new(v)))
            .collect();
        let rabbits = secrets
            .into_iter()
            .map(|s| (s.index, RabbitState::new(s, publication_delay)))
            .collect();
        Self {
            seed,
            publication_delay,
            max_ticks: u64::MAX,
            timeline: Vec::new(),
            cursor: 0,
            tick: 0,
            chain,
            validators,
            rabbits,
            users: BTreeMap::new(),
            attempts: Vec::new(),
            session_thresholds: BTreeMap::new(),
            rngs: BTreeMap::new(),
            router: Router::new(),
            offline: BTreeSet::new(),
            corrupt_rabbits: BTreeSet::new(),
            corrupt_validators: BTreeSet::new(),
            bad_share_rabbits: BTreeSet::new(),
            deleted: BTreeSet::new(),
            events: Vec::new(),
            log: Vec::new(),
            census: BTreeMap::new(),
            hash_key,
            reports: Vec::new(),
            honeypot: None,
            expiry: None,
        }
    }

    pub fn chain(&self) -> &SignatureChain<G> {
        &self.chain
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn publication_delay(&self) -> u64 {
        self.publication_delay
    }

    pub fn rabbit(&self, index: u32) -> Option<&RabbitState<G>> {
        self.rabbits.get(&index)
    }

    pub fn rabbits(&self) -> impl Iterator<Item = &RabbitState<G>> {
        self.rabbits.values()
    }

    pub fn validator(&self, id: u32) -> Option<&ValidatorState<G>> {
        self.validators.get(&id)
    }

    /// Current rabbit secrets, for persisting between runs.
    pub fn rabbit_secrets(&self) -> Vec<RabbitSecrets<G>> {
        self.rabbits.values().map(|r| r.secrets.clone()).collect()
    }

    /// The combined hash key, known only to the harness.
    pub fn hash_key(&self) -> Option<&G::Scalar> {
        self.hash_key.as_ref()
    }

    pub fn events(&self) -> &[(u64, PartyId, ProtocolEvent)] {
        &self.events
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn census(&self) -> &BTreeMap<String, usize> {
        &self.census
    }

    pub fn reports(&self) -> &[AdversaryReport] {
        &self.reports
    }

    pub fn event_log(&self) -> String {
        let mut s = self.log.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    fn rng(&mut self, party: PartyId) -> &mut ChaCha20Rng {
        let seed = self.seed;
        self.rngs
            .entry(party)
            .or_insert_with(|| party_rng(seed, &party.to_string()))
    }

    fn live_rabbits(&self) -> Vec<u32> {
        self.rabbits
            .keys()
            .copied()
            .filter(|r| !self.offline.contains(&PartyId::Rabbit(*r)))
            .collect()
    }

    fn record(&mut self, entry: Value) {
        self.log.push(entry.to_string());
    }

    fn count(&mut self, from: PartyId, to: PartyId, n: usize) {
        if n > 0 {
            *self.census.entry(format!("{}->{}", role(from), role(to))).or_default() += n;
        }
    }

    /// Runs the script until nothing is left to do or `max_ticks` passes.
    pub fn run(&mut self) -> Result<(), SimError> {
        loop {
            let next_script = self.timeline.get(self.cursor).map(|e| e.at);
            let next = match (next_script, self.router.next_tick()) {
                (None, None) => break,
                (a, b) => a.into_iter().chain(b).min().expect("one side is set"),
            };
            if next > self.max_ticks {
                self.record(json!({"tick": self.tick, "kind": "halt", "reason": "max ticks reached"}));
                break;
            }
            self.tick = self.tick.max(next);
            while let Some(ev) = self.timeline.get(self.cursor).filter(|e| e.at <= self.tick).cloned() {
                self.cursor += 1;
                self.apply(ev.action)?;
            }
            self.deliver_due();
        }
        let corrupted = !self.corrupt_rabbits.is_empty() || !self.corrupt_validators.is_empty();
        if corrupted && self.reports.last().map(|r| r.tick) != Some(self.tick) {
            self.attack();
        }
        Ok(())
    }

    /// Delivers messages until the network is quiet, ignoring the script.
    pub fn settle(&mut self) {
        while let Some(next) = self.router.next_tick() {
            self.tick = self.tick.max(next);
            self.deliver_due();
        }
    }

    fn deliver_due(&mut self) {
        while let Some(env) = self.router.pop_due(self.tick) {
            if self.offline.contains(&env.to) {
                self.record(json!({"tick": self.tick, "kind": "held", "seq": env.seq, "to": env.to.to_string()}));
                self.router.hold(env);
                continue;
            }
            self.record(json!({
                "tick": self.tick,
                "kind": "deliver",
                "seq": env.seq,
                "from": env.from.to_string(),
                "to": env.to.to_string(),
                "channel": env.channel,
                "type": env.payload_type,
                "bytes": env.payload.len(),
                "sent": env.timestamp,
            }));
            let msg: Message<G> = match serde_json::from_slice(&env.payload) {
                Ok(m) => m,
                Err(e) => {
                    self.record(json!({"tick": self.tick, "kind": "undecodable", "seq": env.seq, "error": e.to_string()}));
                    continue;
                }
            };
            self.dispatch(env.from, env.to, msg);
        }
    }

    fn dispatch(&mut self, from: PartyId, to: PartyId, msg: Message<G>) {
        let live = self.live_rabbits();
        let mut rng = self.rng(to).clone();
        let mut ctx = Ctx::new(self.tick, to, &mut self.chain, &mut rng, &live);
        match to {
            PartyId::Validator(v) => match self.validators.get_mut(&v) {
                Some(state) => state.handle(&mut ctx, from, msg),
                None => return,
            },
            PartyId::Rabbit(r) => match self.rabbits.get_mut(&r) {
                Some(state) => state.handle(&mut ctx, from, msg),
                None => return,
            },
            _ => return,
        }
        let (outbox, events, published) = (ctx.outbox, ctx.events, ctx.published);
        self.rngs.insert(to, rng);
        self.absorb(to, outbox, events, published);
    }

    fn absorb(&mut self, from: PartyId, outbox: Vec<Outgoing<G>>, events: Vec<ProtocolEvent>, published: Vec<u64>) {
        for mut o in outbox {
            if let (PartyId::Rabbit(r), Message::HashPartial { .. }) = (from, &o.msg) {
                if self.bad_share_rabbits.contains(&r) {
                    self.spoil_partial(r, &mut o.msg);
                }
            }
            if o.to != from {
                self.count(from, o.to, 1);
            }
            let payload = serde_json::to_vec(&o.msg).expect("messages always serialize");
            self.router
                .send(from, o.to, o.channel, o.msg.type_tag(), payload, self.tick, o.delay);
        }
        self.count(from, PartyId::Chain, published.len());
        for index in published {
            let kind = self.chain.records()[index as usize].body.kind();
            self.record(json!({"tick": self.tick, "kind": "append", "party": from.to_string(), "index": index, "record": kind}));
        }
        for e in events {
            self.record(json!({"tick": self.tick, "kind": "event", "party": from.to_string(), "event": e}));
            self.events.push((self.tick, from, e));
        }
    }

    /// Replaces a rabbit's encrypted identity shares with encryptions of a wrong share.
    fn spoil_partial(&mut self, rabbit: u32, msg: &mut Message<G>) {
        let Message::HashPartial { validator, session, index, validation_share, signature_share, .. } = msg else {
            return;
        };
        let threshold = self
            .session_thresholds
            .get(&label(*validator, session))
            .copied()
            .flatten();
        let key = self.chain.record_key(threshold);
        let index = *index;
        let rng = self.rng(PartyId::Rabbit(rabbit));
        let bogus = ShamirShare::<G> {
            index,
            value: G::Scalar::random(rng),
        };
        if let Ok(ct) = encrypt_identity_share::<G, _>(&key, &bogus, rng) {
            *validation_share = ct.clone();
            *signature_share = ct;
        }
    }

    /// Applies one scripted action at the current tick.
    pub fn apply(&mut self, action: Action) -> Result<(), SimError> {
        self.record(json!({"tick": self.tick, "kind": "script", "action": action}));
        match action {
            Action::Sign { user, testimony, threshold, validators } => {
                let validators = validators.unwrap_or_else(|| {
                    let p = self.chain.params();
                    p.validators.iter().copied().take(p.v as usize).collect()
                });
                self.sign(&user, testimony.into_bytes(), threshold, validators);
            }
            Action::Expire => self.expire(),
            Action::CorruptRabbits { rabbits } => self.corrupt_rabbits.extend(rabbits),
            Action::CorruptValidator { validator } => {
                self.corrupt_validators.insert(validator);
            }
            Action::DeleteShares { rabbits } => {
                for r in rabbits {
                    if let Some(state) = self.rabbits.get_mut(&r) {
                        state.secrets.store.erase();
                        self.deleted.insert(r);
                    }
                }
            }
            Action::Offline { party } => {
                self.offline.insert(party);
            }
            Action::Online { party } => {
                self.offline.remove(&party);
                self.router.release(party, self.tick);
            }
            Action::DropMessages { to, count } => self.router.drop_next(to, count),
            Action::BadShares { rabbit } => {
                self.bad_share_rabbits.insert(rabbit);
            }
            Action::Attack => self.attack(),
        }
        Ok(())
    }

    /// Starts a signing attempt for `user`, whose name doubles as identity evidence.
    pub fn sign(&mut self, user: &str, testimony: Vec<u8>, threshold: Option<u32>, validators: Vec<u32>) {
        let next_id = self.users.len() as u32 + 1;
        let id = *self.users.entry(user.to_string()).or_insert(next_id);
        let party = PartyId::User(id);
        let state = UserState::new(id, user, testimony, threshold, validators, self.rng(party));
        let text = self.chain.params().petition_text.clone();
        let sessions: Vec<String> = state
            .sessions::<G>(&text)
            .iter()
            .map(|(v, s)| label(*v, s))
            .collect();
        for s in &sessions {
            self.session_thresholds.insert(s.clone(), threshold);
        }
        let live = self.live_rabbits();
        let mut rng = self.rng(party).clone();
        let mut ctx = Ctx::new(self.tick, party, &mut self.chain, &mut rng, &live);
        state.start(&mut ctx);
        let (outbox, events, published) = (ctx.outbox, ctx.events, ctx.published);
        self.rngs.insert(party, rng);
        let refused = events.iter().find_map(|e| match e {
            ProtocolEvent::SigningRefused { reason, .. } => Some(reason.clone()),
            _ => None,
        });
        self.attempts.push(Attempt {
            user: user.to_string(),
            at: self.tick,
            sessions,
            refused,
        });
        self.absorb(party, outbox, events, published);
    }

    /// The author closes the petition; rabbits are told to delete their secrets.
    pub fn expire(&mut self) {
        let result = self.chain.expire(self.tick).map_err(|e| e.to_string());
        if let Ok(index) = result {
            self.count(PartyId::Author, PartyId::Chain, 1);
            self.record(json!({"tick": self.tick, "kind": "append", "party": "author", "index": index, "record": "expired"}));
            let rabbits: Vec<u32> = self.rabbits.keys().copied().collect();
            let outbox = rabbits
                .into_iter()
                .map(|r| Outgoing {
                    to: PartyId::Rabbit(r),
                    channel: Channel::Public,
                    msg: Message::DeleteSecrets,
                    delay: 0,
                })
                .collect();
            self.absorb(PartyId::Author, outbox, Vec::new(), Vec::new());
        } else if let Err(e) = &result {
            self.record(json!({"tick": self.tick, "kind": "expire_rejected", "reason": e}));
        }
        self.expiry = Some((self.tick, result));
    }

    /// Lets the corrupted coalition try its attacks on the current state.
    pub fn attack(&mut self) {
        let mut members: BTreeSet<PartyId> = self.corrupt_rabbits.iter().map(|r| PartyId::Rabbit(*r)).collect();
        members.extend(self.corrupt_validators.iter().map(|v| PartyId::Validator(*v)));
        let truth = Truth {
            hash_key: self.hash_key,
            identities: self
                .validators
                .values()
                .flat_map(|v| v.issued.iter().map(|i| (label(v.id, &i.session), i.identifier)))
                .collect(),
        };
        let coalition = Coalition {
            tick: self.tick,
            rabbits: self
                .corrupt_rabbits
                .iter()
                .filter_map(|r| self.rabbits.get(r))
                .collect(),
            validators: self
                .corrupt_validators
                .iter()
                .filter_map(|v| self.validators.get(v))
                .collect(),
            view: self.router.view(&members),
            members,
            chain: &self.chain,
        };
        let report = adversary::attack(&coalition, &truth);
        self.record(json!({
            "tick": self.tick,
            "kind": "attack",
            "fragments_stolen": report.fragment_theft.iter().filter(|f| f.success).count(),
            "hash_challenge": report.hash_challenge.success,
            "identified": report.identification.iter().filter(|i| i.success).count(),
        }));
        self.reports.push(report);
    }

    pub fn sign_results(&self) -> Vec<SignResult> {
        self.attempts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                // Same testimony through the same validator is the same session;
                // rabbits drop the copy, so its events belong to the first attempt.
                let replay = self.attempts[..i].iter().any(|b| b.sessions.iter().any(|s| a.sessions.contains(s)));
                if replay && a.refused.is_none() {
                    SignResult {
                        user: a.user.clone(),
                        at: a.at,
                        sessions: a.sessions.clone(),
                        status: SignStatus::Rejected {
                            reason: "replayed session".into(),
                        },
                    }
                } else {
                    self.sign_result(a)
                }
            })
            .collect()
    }

    fn sign_result(&self, a: &Attempt) -> SignResult {
        let mine = |s: &String| a.sessions.contains(s);
        let later = self.events.iter().filter(|(tick, _, _)| *tick >= a.at).map(|(_, _, e)| e);
        let mut validations = 0;
        let mut duplicate = false;
        let mut rejected = None;
        let mut signed = None;
        for e in later {
            match e {
                ProtocolEvent::CyphersignaturePublished { index, session, .. } if mine(session) => signed = Some(*index),
                ProtocolEvent::ValidationPublished { session, .. } if mine(session) => validations += 1,
                ProtocolEvent::DuplicateRejected { session, .. } if mine(session) => duplicate = true,
                ProtocolEvent::PublishRejected { session, reason } if mine(session) => {
                    if reason == &Error::DuplicateUser.to_string() {
                        duplicate = true;
                    } else {
                        rejected.get_or_insert(reason.clone());
                    }
                }
                ProtocolEvent::SessionRejected { session, reason, .. }
                | ProtocolEvent::FragmentUnavailable { session, reason, .. }
                    if mine(session) =>
                {
                    rejected.get_or_insert(reason.clone());
                }
                _ => {}
            }
        }
        let status = if let Some(reason) = &a.refused {
            SignStatus::Refused { reason: reason.clone() }
        } else if let Some(record) = signed {
            SignStatus::Signed { record }
        } else if duplicate {
            SignStatus::Duplicate
        } else if let Some(reason) = rejected {
            SignStatus::Rejected { reason }
        } else {
            SignStatus::Pending { validations }
        };
        SignResult {
            user: a.user.clone(),
            at: a.at,
            sessions: a.sessions.clone(),
            status,
        }
    }

    fn sabotage(&self) -> Option<SabotageOutcome> {
        if self.deleted.is_empty() {
            return None;
        }
        let params = self.chain.params();
        let released: BTreeSet<u32> = self.chain.released_fragments().iter().map(|f| f.index).collect();
        let public = params.public();
        let (mut recoverable, mut unrecoverable) = (Vec::new(), Vec::new());
        for j in (1..=params.n).filter(|j| !released.contains(j)) {
            let sets = collect_fragment_shares(j, self.rabbits.values().map(|r| &r.secrets.store));
            match reconstruct_fragment(j, params.t as usize, params.k, &sets, &public) {
                Ok(_) => recoverable.push(j),
                Err(_) => unrecoverable.push(j),
            }
        }
        Some(SabotageOutcome {
            deleted: self.deleted.iter().copied().collect(),
            k: params.k,
            t: params.t,
            recoverable,
            unrecoverable,
            triggered: self.chain.trigger_check().triggered,
        })
    }

    pub fn outcome(&self) -> ScenarioOutcome {
        let (decrypted, decryption_errors) = match self.chain.decrypt_chain(self.hash_key.as_ref()) {
            Ok(results) => {
                let names: BTreeMap<Vec<u8>, String> = self
                    .users
                    .keys()
                    .filter_map(|name| derive_identifier::<G>(name).ok().map(|u| (u.to_bytes(), name.clone())))
                    .collect();
                let mut ok = Vec::new();
                let mut bad = Vec::new();
                for (index, r) in results {
                    match r {
                        Ok(d) => ok.push(DecryptedRecord {
                            record: d.record,
                            threshold: d.threshold,
                            identity: scalar_to_hex(&d.identity),
                            user: names.get(&d.identity.to_bytes()).cloned(),
                            testimony: String::from_utf8_lossy(&d.testimony).into_owned(),
                        }),
                        Err(e) => bad.push((index, e.to_string())),
                    }
                }
                (ok, bad)
            }
            Err(_) => (Vec::new(), Vec::new()),
        };
        let honeypot = self.honeypot.as_ref().map(|(mode, problems)| HoneypotOutcome {
            mode: *mode,
            audit_ok: problems.is_empty(),
            problems: problems.clone(),
            refusals: self.attempts.iter().filter(|a| a.refused.is_some()).count(),
            signatures: self.chain.signature_count(),
        });
        let expiry = self.expiry.as_ref().map(|(at, result)| ExpiryOutcome {
            at: *at,
            result: result.clone(),
            erased: self.rabbits.values().filter(|r| r.erased).map(|r| r.index()).collect(),
            residual_scalars: self.rabbits.values().map(|r| r.stored_scalars().len()).sum(),
        });
        ScenarioOutcome {
            chain_text: self.chain.to_text(),
            event_log: self.event_log(),
            ceremony_abort: None,
            honeypot,
            signs: self.sign_results(),
            trigger: Some(self.chain.trigger_check()),
            decrypted,
            decryption_errors,
            adversary: self.reports.clone(),
            sabotage: self.sabotage(),
            expiry,
            census: self.census.clone(),
            ticks: self.tick,
            dropped: self.router.dropped(),
            undelivered: self.router.held_count(),
        }
    }
}

/// Rigs the header so the author could decrypt everything on their own.
fn rig_key<G: Group>(params: &mut PetitionParams<G>, mode: HoneypotMode, rng: &mut ChaCha20Rng) {
    let n = params.fragment_publics.len();
    // In a small group a random draw can land on the honest value, which would rig nothing.
    let honest = match mode {
        HoneypotMode::SubstituteKey => params.public_key,
        HoneypotMode::ForgeFragment => params.fragment_publics[0],
    };
    let known = loop {
        let candidate = G::Scalar::random_nonzero(rng);
        if G::exp_g(&candidate) != honest {
            break candidate;
        }
    };
    match mode {
        HoneypotMode::SubstituteKey => {
            params.public_key = G::exp_g(&known);
            let rest = G::product(&params.fragment_publics[..n - 1]);
            params.fragment_publics[n - 1] = G::mul(&params.public_key, &G::invert(&rest));
        }
        HoneypotMode::ForgeFragment => {
            params.fragment_publics[0] = G::exp_g(&known);
            params.public_key = G::product(&params.fragment_publics);
        }
    }
}

/// Runs a script to completion and collects everything observable.
pub fn run_world<G: Group>(script: &ScenarioScript) -> Result<ScenarioOutcome, SimError> {
    let mut world = match World::<G>::from_script(script) {
        Ok(w) => w,
        Err(SimError::Core(Error::CeremonyAborted { culprits })) => {
            return Ok(ScenarioOutcome {
                chain_text: String::new(),
                event_log: json!({"tick": 0, "kind": "ceremony_aborted", "culprits": culprits}).to_string() + "\n",
                ceremony_abort: Some(culprits),
                honeypot: None,
                signs: Vec::new(),
                trigger: None,
                decrypted: Vec::new(),
                decryption_errors: Vec::new(),
                adversary: Vec::new(),
                sabotage: None,
                expiry: None,
                census: BTreeMap::new(),
                ticks: 0,
                dropped: 0,
                undelivered: 0,
            })
        }
        Err(e) => return Err(e),
    };
    world.run()?;
    Ok(world.outcome())
}
