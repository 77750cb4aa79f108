use petition_core::chain::SignatureChain;
use petition_core::group::ToyGroup;
use petition_core::protocol::PartyId;
use petition_simnet::scenario::BadDealer;
use petition_simnet::{run_scenario, Action, Backend, HoneypotMode, PetitionSpec, ScenarioScript, SignStatus};

fn spec(n: u32, k: u32, t: u32, v: u32) -> PetitionSpec {
    PetitionSpec {
        text: "Reinstate the night bus".into(),
        n,
        k,
        t,
        v,
        expiry: None,
        thresholds: None,
        validators: None,
    }
}

fn sign(user: &str, testimony: &str) -> Action {
    Action::Sign {
        user: user.into(),
        testimony: testimony.into(),
        threshold: None,
        validators: None,
    }
}

fn script(seed: u64, p: PetitionSpec, signers: &[&str]) -> ScenarioScript {
    let mut s = ScenarioScript::new(seed, Backend::Toy, p);
    for (i, u) in signers.iter().enumerate() {
        s.push(i as u64 * 20, sign(u, &format!("testimony of {u}")));
    }
    s
}

#[test]
fn honest_run_triggers_and_names_every_signer() {
    let out = run_scenario(&script(1, spec(3, 3, 2, 1), &["alice", "bob", "carol"])).unwrap();
    let trigger = out.trigger.unwrap();
    assert!(trigger.triggered);
    assert_eq!(trigger.signatures, 3);
    let mut names: Vec<_> = out.decrypted.iter().map(|d| d.user.clone().unwrap()).collect();
    names.sort();
    assert_eq!(names, vec!["alice", "bob", "carol"]);
    assert!(out.decrypted.iter().any(|d| d.testimony == "testimony of bob"));
    assert!(out.decryption_errors.is_empty());
    assert!(out.signs.iter().all(|s| matches!(s.status, SignStatus::Signed { .. })));
    SignatureChain::<ToyGroup>::from_text(&out.chain_text).unwrap();
}

#[test]
fn one_signature_message_census() {
    let out = run_scenario(&script(2, spec(3, 3, 2, 1), &["alice"])).unwrap();
    let c = &out.census;
    assert_eq!(c["user->validator"], 1);
    assert_eq!(c["user->rabbit"], 3);
    assert_eq!(c["validator->rabbit"], 3);
    assert_eq!(c["rabbit->chain"], 2);
}

#[test]
fn same_script_same_bytes() {
    let s = script(9, spec(3, 3, 2, 1), &["alice", "bob"]);
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    assert_eq!(a.chain_text, b.chain_text);
    assert_eq!(a.event_log, b.event_log);
    let c = run_scenario(&script(10, spec(3, 3, 2, 1), &["alice", "bob"])).unwrap();
    assert_ne!(a.chain_text, c.chain_text);
}

#[test]
fn repeat_signer_is_rejected() {
    let mut s = script(3, spec(3, 3, 2, 1), &["alice"]);
    s.push(40, sign("alice", "again"));
    let out = run_scenario(&s).unwrap();
    assert!(matches!(out.signs[0].status, SignStatus::Signed { .. }));
    assert_eq!(out.signs[1].status, SignStatus::Duplicate);
    assert_eq!(out.trigger.unwrap().signatures, 1);
}

#[test]
fn offline_rabbit_delays_but_does_not_lose_a_signature() {
    let mut s = script(4, spec(2, 3, 2, 1), &["alice"]);
    s.push(0, Action::Offline { party: PartyId::Rabbit(3) });
    s.push(100, Action::Online { party: PartyId::Rabbit(3) });
    let out = run_scenario(&s).unwrap();
    assert!(matches!(out.signs[0].status, SignStatus::Signed { .. }));
    assert!(out.event_log.contains("\"kind\":\"held\""));
    assert!(out.ticks >= 100);
}

#[test]
fn dropped_messages_leave_the_signature_pending() {
    let mut s = script(5, spec(2, 3, 2, 1), &["alice"]);
    s.push(0, Action::DropMessages { to: PartyId::Rabbit(2), count: 1 });
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.dropped, 1);
    assert_eq!(out.signs[0].status, SignStatus::Pending { validations: 0 });
}

#[test]
fn expiry_freezes_the_chain_and_erases_rabbits() {
    let mut p = spec(3, 3, 2, 1);
    p.expiry = Some(50);
    let mut s = script(6, p, &["alice", "bob"]);
    s.push(50, Action::Expire);
    s.push(60, sign("carol", "late"));
    let out = run_scenario(&s).unwrap();
    let expiry = out.expiry.unwrap();
    assert!(expiry.result.is_ok());
    assert_eq!(expiry.erased, vec![1, 2, 3]);
    assert_eq!(expiry.residual_scalars, 0);
    assert!(matches!(out.signs[2].status, SignStatus::Refused { .. }));
    let trigger = out.trigger.unwrap();
    assert!(!trigger.triggered);
    assert_eq!(trigger.signatures, 2);
    assert!(out.decrypted.is_empty());
}

#[test]
fn early_expiry_is_refused() {
    let mut p = spec(3, 3, 2, 1);
    p.expiry = Some(500);
    let mut s = script(6, p, &["alice"]);
    s.push(10, Action::Expire);
    let out = run_scenario(&s).unwrap();
    assert!(out.expiry.unwrap().result.is_err());
}

#[test]
fn share_deletion_blocks_trigger_only_below_threshold() {
    for (deleted, expect_trigger) in [(vec![4], true), (vec![3, 4], true), (vec![2, 3, 4], false)] {
        let mut s = script(7, spec(2, 4, 2, 1), &["alice", "bob"]);
        s.push(0, Action::DeleteShares { rabbits: deleted.clone() });
        let out = run_scenario(&s).unwrap();
        let sabotage = out.sabotage.unwrap();
        assert_eq!(sabotage.triggered, expect_trigger, "deleted {deleted:?}");
        assert_eq!(4 - deleted.len() >= 2, expect_trigger);
        if !expect_trigger {
            assert_eq!(sabotage.unrecoverable, vec![1, 2]);
        }
    }
}

#[test]
fn honeypot_keys_are_refused() {
    for mode in [HoneypotMode::SubstituteKey, HoneypotMode::ForgeFragment] {
        let mut s = script(8, spec(3, 3, 2, 1), &["alice", "bob"]);
        s.honeypot = Some(mode);
        let out = run_scenario(&s).unwrap();
        let h = out.honeypot.unwrap();
        assert!(!h.audit_ok);
        assert_eq!(h.refusals, 2);
        assert_eq!(h.signatures, 0);
        assert!(SignatureChain::<ToyGroup>::from_text(&out.chain_text).is_err());
    }
}

#[test]
fn small_coalition_learns_nothing() {
    let mut s = script(11, spec(3, 4, 3, 1), &["alice", "bob"]);
    s.push(0, Action::CorruptRabbits { rabbits: vec![2, 4] });
    s.push(100, Action::Attack);
    let out = run_scenario(&s).unwrap();
    let r = &out.adversary[0];
    assert!(!r.stole_any_fragment());
    assert!(!r.hash_challenge.success);
    assert!(r.hash_challenge.candidates.unwrap() > 1);
    assert!(!r.identified_anyone());
    assert!(r.identification.iter().filter(|i| i.method == "identity_shares").all(|i| i.candidates.unwrap() > 1));
    assert_eq!(r.foreign_secure_messages, 0);
    assert_eq!(r.preimages_seen, 4);
}

#[test]
fn threshold_coalition_breaks_everything() {
    let mut s = script(12, spec(3, 4, 2, 1), &["alice", "bob"]);
    s.push(0, Action::CorruptRabbits { rabbits: vec![1, 3] });
    s.push(100, Action::Attack);
    let out = run_scenario(&s).unwrap();
    let r = &out.adversary[0];
    assert!(r.fragment_theft.iter().all(|f| f.success));
    assert!(r.hash_challenge.success);
    assert!(r.identification.iter().all(|i| i.success));
    assert!(r.identification.iter().any(|i| i.method == "decrypt_record"));
}

#[test]
fn validator_knows_identifiers_but_not_petitions() {
    let mut s = script(13, spec(3, 3, 2, 1), &["alice", "bob"]);
    s.push(0, Action::CorruptValidator { validator: 1 });
    s.push(100, Action::Attack);
    let out = run_scenario(&s).unwrap();
    let view = &out.adversary[0].validator_views[0];
    assert_eq!(view.issued.len(), 2);
    assert_eq!(view.linked_to_petition, 0);
    assert!(!out.adversary[0].identified_anyone());

    // A guessable testimony is linkable.
    let mut s = script(13, spec(3, 3, 2, 1), &[]);
    s.push(0, sign("dora", "yes"));
    s.push(0, Action::CorruptValidator { validator: 1 });
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.adversary[0].validator_views[0].linked_to_petition, 1);
}

#[test]
fn garbage_identity_shares_are_caught_at_decryption() {
    let mut s = script(14, spec(2, 3, 2, 1), &["alice", "bob"]);
    s.push(0, Action::BadShares { rabbit: 2 });
    let out = run_scenario(&s).unwrap();
    assert!(out.trigger.unwrap().triggered);
    assert_eq!(out.decryption_errors.len(), 2);
    assert!(out.decryption_errors.iter().all(|(_, e)| e == "share inconsistency"));
}

#[test]
fn bad_dealer_aborts_the_ceremony() {
    let mut s = script(15, spec(3, 3, 2, 1), &["alice"]);
    s.ceremony_faults = vec![BadDealer { dealer: 2, victim: 3 }];
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.ceremony_abort, Some(vec![2]));
    assert!(out.chain_text.is_empty());
}

#[test]
fn multi_threshold_cascade() {
    let mut p = spec(4, 3, 2, 1);
    p.thresholds = Some(vec![2, 4]);
    let mut s = ScenarioScript::new(16, Backend::Toy, p);
    for (i, (u, th)) in [("a", 2), ("b", 2), ("c", 4)].into_iter().enumerate() {
        s.push(
            i as u64 * 20,
            Action::Sign {
                user: u.into(),
                testimony: format!("{u} signs"),
                threshold: Some(th),
                validators: None,
            },
        );
    }
    let out = run_scenario(&s).unwrap();
    let trigger = out.trigger.unwrap();
    assert_eq!(trigger.m_star, Some(2));
    assert!(!trigger.triggered);
    let mut names: Vec<_> = out.decrypted.iter().filter_map(|d| d.user.clone()).collect();
    names.sort();
    assert_eq!(names, vec!["a", "b"]);
}

#[test]
fn production_backend_round_trip() {
    let mut s = script(17, spec(2, 3, 2, 2), &["alice", "bob"]);
    s.backend = Backend::Prod;
    s.publication_delay = 5;
    let out = run_scenario(&s).unwrap();
    assert!(out.trigger.unwrap().triggered);
    assert_eq!(out.decrypted.len(), 2);
    assert_eq!(out.census["validator->rabbit"], 2 * 2 * 3);
}
