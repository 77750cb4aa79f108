//! Scenario scripts: a petition, its participants and a timeline of actions.

use petition_core::params::PetitionConfig;
use petition_core::protocol::PartyId;
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Order-11 test group; insecure, small enough to brute force.
    #[default]
    Toy,
    /// Ristretto255.
    Prod,
}

impl std::str::FromStr for Backend {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "toy" => Ok(Backend::Toy),
            "prod" => Ok(Backend::Prod),
            other => Err(SimError::Script(format!("unknown backend {other:?}"))),
        }
    }
}

/// How a dishonest author rigs the published key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoneypotMode {
    /// Publishes `p = g^s` for an `s` the author knows, adjusting the last fragment key.
    SubstituteKey,
    /// Replaces one fragment public key and recomputes `p` from the forged list.
    ForgeFragment,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PetitionSpec {
    pub text: String,
    pub n: u32,
    pub k: u32,
    pub t: u32,
    pub v: u32,
    #[serde(default)]
    pub expiry: Option<u64>,
    #[serde(default)]
    pub thresholds: Option<Vec<u32>>,
    /// Defaults to validators `1..=v`.
    #[serde(default)]
    pub validators: Option<Vec<u32>>,
}

impl PetitionSpec {
    pub fn config(&self) -> PetitionConfig {
        let mut c = PetitionConfig::new(self.text.as_bytes().to_vec(), self.n, self.k, self.t, self.v);
        c.expiry = self.expiry;
        c.thresholds = self.thresholds.clone();
        if let Some(v) = &self.validators {
            c.validators = v.clone();
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadDealer {
    pub dealer: u32,
    pub victim: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Sign {
        user: String,
        #[serde(default)]
        testimony: String,
        #[serde(default)]
        threshold: Option<u32>,
        /// Defaults to the first `v` validators listed in the header.
        #[serde(default)]
        validators: Option<Vec<u32>>,
    },
    Expire,
    CorruptRabbits {
        rabbits: Vec<u32>,
    },
    CorruptValidator {
        validator: u32,
    },
    /// Rabbits silently erase their key-fragment shares.
    DeleteShares {
        rabbits: Vec<u32>,
    },
    Offline {
        party: PartyId,
    },
    Online {
        party: PartyId,
    },
    DropMessages {
        to: PartyId,
        count: u32,
    },
    /// The rabbit encrypts garbage instead of its identity share from now on.
    BadShares {
        rabbit: u32,
    },
    /// The corrupted coalition tries everything it can with what it holds.
    Attack,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub at: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub seed: u64,
    #[serde(default)]
    pub backend: Backend,
    pub petition: PetitionSpec,
    /// Beaver triples dealt at setup; defaults to `max(4n, 32)`.
    #[serde(default)]
    pub triples: Option<usize>,
    /// Upper bound of the random delay before a cyphersignature is published.
    #[serde(default)]
    pub publication_delay: u64,
    #[serde(default)]
    pub honeypot: Option<HoneypotMode>,
    #[serde(default)]
    pub ceremony_faults: Vec<BadDealer>,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
}

fn default_max_ticks() -> u64 {
    1_000_000
}

impl ScenarioScript {
    pub fn new(seed: u64, backend: Backend, petition: PetitionSpec) -> Self {
        Self {
            seed,
            backend,
            petition,
            triples: None,
            publication_delay: 0,
            honeypot: None,
            ceremony_faults: Vec::new(),
            events: Vec::new(),
            max_ticks: default_max_ticks(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let script: Self = serde_json::from_str(text).map_err(|e| SimError::Script(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scripts always serialize")
    }

    pub fn push(&mut self, at: u64, action: Action) -> &mut Self {
        self.events.push(ScriptEvent { at, action });
        self
    }

    /// Events in the order they run: by tick, ties kept in script order.
    pub fn timeline(&self) -> Vec<ScriptEvent> {
        let mut ev = self.events.clone();
        ev.sort_by_key(|e| e.at);
        ev
    }

    pub fn validators(&self) -> Vec<u32> {
        self.petition.config().validators
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Script(m));
        let p = &self.petition;
        let rabbit_ok = |r: u32| (1..=p.k).contains(&r);
        let validators = self.validators();
        let party_ok = |party: &PartyId| match party {
            PartyId::Rabbit(r) => rabbit_ok(*r),
            PartyId::Validator(v) => validators.contains(v),
            _ => true,
        };
        for f in &self.ceremony_faults {
            if !rabbit_ok(f.dealer) || !rabbit_ok(f.victim) || f.dealer == f.victim {
                return bad(format!("bad ceremony fault {f:?}"));
            }
        }
        for e in &self.events {
            match &e.action {
                Action::Sign { user, validators: Some(vs), .. } => {
                    if vs.iter().any(|v| !validators.contains(v)) {
                        return bad(format!("{user} asks an unknown validator"));
                    }
                }
                Action::CorruptRabbits { rabbits } | Action::DeleteShares { rabbits } => {
                    if let Some(r) = rabbits.iter().find(|&&r| !rabbit_ok(r)) {
                        return bad(format!("no rabbit {r}"));
                    }
                }
                Action::BadShares { rabbit } if !rabbit_ok(*rabbit) => return bad(format!("no rabbit {rabbit}")),
                Action::CorruptValidator { validator } if !validators.contains(validator) => {
                    return bad(format!("no validator {validator}"))
                }
                Action::Offline { party } | Action::Online { party } | Action::DropMessages { to: party, .. }
                    if !party_ok(party) =>
                {
                    return bad(format!("no party {party}"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_script() {
        let s = ScenarioScript::from_json(
            r#"{"seed":3,"petition":{"text":"P","n":3,"k":3,"t":2,"v":1},
                "events":[{"at":2,"action":"sign","user":"bob"},
                          {"at":0,"action":"offline","party":{"rabbit":2}},
                          {"at":0,"action":"sign","user":"alice","testimony":"hi"}]}"#,
        )
        .unwrap();
        assert_eq!(s.backend, Backend::Toy);
        let order: Vec<_> = s.timeline().into_iter().map(|e| e.at).collect();
        assert_eq!(order, vec![0, 0, 2]);
        assert!(matches!(s.timeline()[0].action, Action::Offline { party: PartyId::Rabbit(2) }));
        assert_eq!(ScenarioScript::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_parties() {
        let mut s = ScenarioScript::new(
            1,
            Backend::Toy,
            PetitionSpec {
                text: "P".into(),
                n: 2,
                k: 3,
                t: 2,
                v: 1,
                expiry: None,
                thresholds: None,
                validators: None,
            },
        );
        s.push(0, Action::CorruptRabbits { rabbits: vec![4] });
        assert!(s.validate().is_err());
        s.events.clear();
        s.push(0, Action::CorruptValidator { validator: 2 });
        assert!(s.validate().is_err());
        assert!(ScenarioScript::from_json(r#"{"seed":1,"petition":{"text":"P","n":1,"k":2,"t":2,"v":1},"bogus":1}"#).is_err());
    }
}
