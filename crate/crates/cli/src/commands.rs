use std::time::{SystemTime, UNIX_EPOCH};

use petition_core::chain::{peek_group_id, SignatureChain};
use petition_core::group::{scalar_to_hex, Group, Ristretto255, ToyGroup};
use petition_core::params::PetitionConfig;
use petition_core::protocol::{check_evidence, derive_identifier, ProtocolEvent};
use petition_core::setup::{create_petition, default_triples};
use petition_core::Error;
use petition_simnet::{run_scenario, Backend, ScenarioScript, SignStatus, World};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::store;
use crate::{BackendArg, Cli, CliError, Command, NewArgs, Output, SignArgs, SimulateArgs};

pub fn run(cli: &Cli, out: &Output) -> Result<(), CliError> {
    match &cli.command {
        Command::New(args) => match cli.backend.unwrap_or(BackendArg::Prod) {
            BackendArg::Toy => new::<ToyGroup>(cli, args, out),
            BackendArg::Prod => new::<Ristretto255>(cli, args, out),
        },
        Command::Simulate(args) => simulate(cli, args, out),
        _ => {
            let text = store::read_text(&cli.chain)?;
            match backend_of(cli, &text)? {
                BackendArg::Toy => existing::<ToyGroup>(cli, &text, out),
                BackendArg::Prod => existing::<Ristretto255>(cli, &text, out),
            }
        }
    }
}

fn backend_of(cli: &Cli, text: &str) -> Result<BackendArg, CliError> {
    let id = peek_group_id(text)?;
    let found = if id == ToyGroup::ID {
        BackendArg::Toy
    } else if id == Ristretto255::ID {
        BackendArg::Prod
    } else {
        return Err(Error::ChainVerification {
            index: 0,
            reason: format!("unknown group {id}"),
        }
        .into());
    };
    match cli.backend {
        Some(b) if b != found => Err(CliError::params(format!("chain uses backend {id}, not {b:?}"))),
        _ => Ok(found),
    }
}

fn existing<G: Group>(cli: &Cli, text: &str, out: &Output) -> Result<(), CliError> {
    // Every command refuses a chain that does not verify.
    let chain = SignatureChain::<G>::from_text(text)?;
    match &cli.command {
        Command::Sign(args) => sign(cli, chain, args, out),
        Command::Status => status(&chain, out),
        Command::Verify => verify(&chain, out),
        Command::Decrypt => decrypt(cli, &chain, out),
        Command::Expire(args) => expire(cli, chain, args.now, out),
        Command::New(_) | Command::Simulate(_) => unreachable!("dispatched earlier"),
    }
}

/// Seed for one command: the user's `--seed` (or fresh randomness) bound to
/// the chain state and the command, so repeated commands never reuse randomness.
fn command_seed(cli: &Cli, context: &[&[u8]]) -> u64 {
    let base = cli.seed.unwrap_or_else(rand::random);
    let mut h = Sha256::new();
    h.update(b"petition-cli");
    h.update(base.to_be_bytes());
    for c in context {
        h.update((c.len() as u64).to_be_bytes());
        h.update(c);
    }
    u64::from_be_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn now_or_clock(now: Option<u64>) -> u64 {
    now.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

fn new<G: Group>(cli: &Cli, args: &NewArgs, out: &Output) -> Result<(), CliError> {
    if cli.chain.exists() && !args.force {
        return Err(CliError::params(format!("{} already exists (use --force)", cli.chain.display())));
    }
    let mut config = PetitionConfig::new(args.text.as_bytes().to_vec(), args.n, args.k, args.t, args.v);
    config.thresholds = args.thresholds.clone();
    config.expiry = args.expiry;
    if let Some(v) = &args.validators {
        config.validators = v.clone();
    }
    config.validate::<G>()?;
    let triples = args.triples.unwrap_or_else(|| default_triples(args.n));
    let seed = command_seed(cli, &[b"new", args.text.as_bytes()]);
    let setup = create_petition::<G, _>(&config, triples, &mut StdRng::seed_from_u64(seed))?;
    let chain = SignatureChain::new(setup.params.clone(), setup.transcript.clone())?;

    // Keys first: a chain without key files would be unusable.
    store::save_rabbits(&cli.chain, &petition_core::protocol::rabbit_secrets(&setup))?;
    store::save_directory(&cli.chain, &Default::default())?;
    store::write_atomic(&cli.chain, chain.to_text().as_bytes())?;

    let p = chain.params();
    out.emit(
        format!(
            "created petition {} on {} (n={} k={} t={} v={}{})\nchain {} head {}",
            hex_id(&p.petition_id),
            G::ID,
            p.n,
            p.k,
            p.t,
            p.v,
            p.thresholds
                .as_ref()
                .map(|t| format!(" thresholds={}", join(t)))
                .unwrap_or_default(),
            cli.chain.display(),
            chain.head_hash()
        ),
        json!({
            "kind": "created",
            "petition_id": hex_id(&p.petition_id),
            "backend": G::ID,
            "n": p.n, "k": p.k, "t": p.t, "v": p.v,
            "thresholds": p.thresholds,
            "expiry": p.expiry,
            "validators": p.validators,
            "triples": triples,
            "chain": cli.chain.display().to_string(),
            "head": chain.head_hash(),
        }),
    );
    Ok(())
}

fn hex_id(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn sign<G: Group>(cli: &Cli, chain: SignatureChain<G>, args: &SignArgs, out: &Output) -> Result<(), CliError> {
    if chain.is_expired() {
        return Err(Error::Expired.into());
    }
    check_evidence(&args.identity)?;
    let params = chain.params().clone();
    params.effective_threshold(args.threshold)?;
    let validators = args
        .validators
        .clone()
        .unwrap_or_else(|| params.validators.iter().copied().take(params.v as usize).collect());
    if let Some(v) = validators.iter().find(|v| !params.validators.contains(v)) {
        return Err(CliError::params(format!("validator {v} is not listed in the header")));
    }
    let secrets = store::load_rabbits::<G>(&cli.chain, params.k)?;
    let before = chain.len();
    let now = now_or_clock(args.time.now);
    let seed = command_seed(cli, &[b"sign", chain.head_hash().as_bytes(), args.identity.as_bytes()]);

    let mut world = World::resume(chain, secrets, seed, now, args.delay);
    world.sign(&args.identity, args.testimony.as_bytes().to_vec(), args.threshold, validators);
    world.settle();

    store::save_rabbits(&cli.chain, &world.rabbit_secrets())?;
    let chain = world.chain();
    if chain.len() != before {
        let mut directory = store::load_directory(&cli.chain);
        let u = derive_identifier::<G>(&args.identity)?;
        directory.insert(scalar_to_hex(&u), args.identity.clone());
        store::save_directory(&cli.chain, &directory)?;
        store::write_atomic(&cli.chain, chain.to_text().as_bytes())?;
    }

    for (_, _, e) in world.events() {
        match e {
            ProtocolEvent::ValidationPublished { index, validator, .. } => out.emit(
                format!("record {index}: validation by validator {validator}"),
                json!({"kind": "record", "index": index, "record": "validation", "validator": validator}),
            ),
            ProtocolEvent::CyphersignaturePublished { index, fragment, .. } => out.emit(
                format!(
                    "record {index}: cyphersignature{}",
                    fragment.map(|f| format!(" releasing fragment {f}")).unwrap_or_default()
                ),
                json!({"kind": "record", "index": index, "record": "cyphersignature", "fragment": fragment, "threshold": args.threshold}),
            ),
            _ => {}
        }
    }
    let result = world.sign_results().pop().expect("one attempt was made");
    match result.status {
        SignStatus::Signed { .. } => {
            report_trigger(chain, out);
            Ok(())
        }
        SignStatus::Duplicate => Err(Error::DuplicateUser.into()),
        SignStatus::Refused { reason } if reason == Error::Expired.to_string() => Err(Error::Expired.into()),
        SignStatus::Refused { reason } => Err(CliError::new(4, format!("refused to sign: {reason}"))),
        SignStatus::Rejected { reason } => Err(CliError::rejected(reason)),
        SignStatus::Pending { validations } => Err(Error::InsufficientValidations {
            distinct: validations,
            needed: params.v as usize,
        }
        .into()),
    }
}

fn report_trigger<G: Group>(chain: &SignatureChain<G>, out: &Output) {
    let r = chain.trigger_check();
    let state = if r.triggered { "TRIGGERED" } else { "NOT_TRIGGERED" };
    let mut text = format!("{state} ({} signatures, {} of {} fragments released)", r.signatures, r.released.len(), chain.params().n);
    if let Some(m) = r.m_star {
        text.push_str(&format!("\nm* = {m}, decryptable records: {}", r.decryptable.len()));
    }
    out.emit(
        text,
        json!({"kind": "trigger", "state": state, "signatures": r.signatures, "released": r.released,
               "m_star": r.m_star, "decryptable": r.decryptable}),
    );
}

fn status<G: Group>(chain: &SignatureChain<G>, out: &Output) -> Result<(), CliError> {
    let p = chain.params();
    let validations = chain.validations().count();
    out.emit(
        format!(
            "petition {} on {}: n={} k={} t={} v={}{}\nrecords {} (validations {}, signatures {}){}",
            hex_id(&p.petition_id),
            G::ID,
            p.n,
            p.k,
            p.t,
            p.v,
            p.thresholds.as_ref().map(|t| format!(" thresholds={}", join(t))).unwrap_or_default(),
            chain.len(),
            validations,
            chain.signature_count(),
            if chain.is_expired() { "\nEXPIRED" } else { "" },
        ),
        json!({"kind": "status", "petition_id": hex_id(&p.petition_id), "backend": G::ID,
               "records": chain.len(), "validations": validations, "signatures": chain.signature_count(),
               "expired": chain.is_expired(), "head": chain.head_hash()}),
    );
    report_trigger(chain, out);
    Ok(())
}

fn verify<G: Group>(chain: &SignatureChain<G>, out: &Output) -> Result<(), CliError> {
    // Loading already replayed every record and re-audited the ceremony.
    out.emit(
        format!("OK: {} records verified, head {}", chain.len(), chain.head_hash()),
        json!({"kind": "verified", "records": chain.len(), "head": chain.head_hash()}),
    );
    Ok(())
}

fn decrypt<G: Group>(cli: &Cli, chain: &SignatureChain<G>, out: &Output) -> Result<(), CliError> {
    let results = chain.decrypt_chain(None)?;
    let directory = store::load_directory(&cli.chain);
    let mut failures = 0;
    for (index, r) in results {
        match r {
            Ok(d) => {
                let id = scalar_to_hex(&d.identity);
                let who = directory.get(&id).cloned();
                let testimony = String::from_utf8_lossy(&d.testimony).into_owned();
                out.emit(
                    format!(
                        "record {index}: identity {id}{} testimony {testimony:?}",
                        who.as_ref().map(|w| format!(" ({w})")).unwrap_or_default()
                    ),
                    json!({"kind": "signer", "index": index, "identity": id, "name": who,
                           "testimony": testimony, "threshold": d.threshold}),
                );
            }
            Err(e) => {
                failures += 1;
                out.emit(
                    format!("record {index}: {e}"),
                    json!({"kind": "undecryptable", "index": index, "error": e.to_string()}),
                );
            }
        }
    }
    if failures > 0 {
        return Err(CliError::new(4, format!("{failures} records failed to decrypt")));
    }
    Ok(())
}

fn expire<G: Group>(cli: &Cli, mut chain: SignatureChain<G>, now: Option<u64>, out: &Output) -> Result<(), CliError> {
    let index = chain.expire(now_or_clock(now))?;
    store::write_atomic(&cli.chain, chain.to_text().as_bytes())?;
    let erased = store::erase_rabbits(&cli.chain, chain.params().k)?;
    out.emit(
        format!("record {index}: expired; {erased} rabbit key files deleted"),
        json!({"kind": "expired", "index": index, "erased": erased}),
    );
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs, out: &Output) -> Result<(), CliError> {
    let text = store::read_text(&args.script)?;
    let mut script = ScenarioScript::from_json(&text)?;
    if let Some(seed) = cli.seed {
        script.seed = seed;
    }
    match cli.backend {
        Some(BackendArg::Toy) => script.backend = Backend::Toy,
        Some(BackendArg::Prod) => script.backend = Backend::Prod,
        None => {}
    }
    let outcome = run_scenario(&script)?;
    if let Some(culprits) = &outcome.ceremony_abort {
        return Err(Error::CeremonyAborted { culprits: culprits.clone() }.into());
    }
    if args.write_chain {
        store::write_atomic(&cli.chain, outcome.chain_text.as_bytes())?;
    }
    if let Some(path) = &args.log {
        store::write_atomic(path, outcome.event_log.as_bytes())?;
    }
    if let Some(path) = &args.report {
        let json = serde_json::to_vec_pretty(&outcome).expect("outcomes always serialize");
        store::write_atomic(path, &json)?;
    }
    summarize(&outcome, out);
    Ok(())
}

fn summarize(o: &petition_simnet::ScenarioOutcome, out: &Output) {
    for s in &o.signs {
        let text = match &s.status {
            SignStatus::Signed { record } => format!("signed (record {record})"),
            SignStatus::Duplicate => "duplicate user".into(),
            SignStatus::Refused { reason } => format!("refused: {reason}"),
            SignStatus::Rejected { reason } => format!("rejected: {reason}"),
            SignStatus::Pending { validations } => format!("pending ({validations} validations)"),
        };
        out.emit(
            format!("t={} {}: {text}", s.at, s.user),
            json!({"kind": "sign", "user": s.user, "at": s.at, "status": s.status}),
        );
    }
    if let Some(r) = &o.trigger {
        let state = if r.triggered { "TRIGGERED" } else { "NOT_TRIGGERED" };
        let mut text = format!("{state} ({} signatures, fragments released {:?})", r.signatures, r.released);
        if let Some(m) = r.m_star {
            text.push_str(&format!(", m* = {m}"));
        }
        out.emit(text, json!({"kind": "trigger", "state": state, "report": r}));
    }
    for d in &o.decrypted {
        out.emit(
            format!(
                "record {}: {} testimony {:?}",
                d.record,
                d.user.clone().unwrap_or_else(|| d.identity.clone()),
                d.testimony
            ),
            json!({"kind": "signer", "record": d})
        );
    }
    for (index, e) in &o.decryption_errors {
        out.emit(format!("record {index}: {e}"), json!({"kind": "undecryptable", "index": index, "error": e}));
    }
    if let Some(h) = &o.honeypot {
        out.emit(
            format!("honeypot {:?}: audit {}, {} refusals", h.mode, if h.audit_ok { "passed" } else { "FAILED" }, h.refusals),
            json!({"kind": "honeypot", "outcome": h}),
        );
    }
    if let Some(s) = &o.sabotage {
        out.emit(
            format!("sabotage: rabbits {:?} deleted shares; unrecoverable fragments {:?}", s.deleted, s.unrecoverable),
            json!({"kind": "sabotage", "outcome": s}),
        );
    }
    if let Some(e) = &o.expiry {
        out.emit(
            format!("expiry at {}: {:?}; rabbits erased {:?}", e.at, e.result, e.erased),
            json!({"kind": "expiry", "outcome": e}),
        );
    }
    for r in &o.adversary {
        out.emit(
            format!(
                "attack at t={} by rabbits {:?} validators {:?}: fragments stolen {}, h_P challenge {}, signers identified {}",
                r.tick,
                r.rabbits,
                r.validators,
                r.fragment_theft.iter().filter(|f| f.success).count(),
                if r.hash_challenge.success { "won" } else { "lost" },
                r.identification.iter().filter(|i| i.success).count()
            ),
            json!({"kind": "attack", "report": r}),
        );
    }
    out.emit(
        format!("{} records after {} ticks", o.chain_text.lines().count(), o.ticks),
        json!({"kind": "summary", "records": o.chain_text.lines().count(), "ticks": o.ticks, "census": o.census}),
    );
}
