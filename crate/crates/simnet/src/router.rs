//! Message envelopes and the delivery queue.
//!
//! Every message crosses the router as serialized bytes. A party's view of the
//! traffic is the public messages plus the secure messages it sent or
//! received; nothing else is reachable through [`Router::view`].

use std::collections::{BTreeMap, BTreeSet};

use petition_core::protocol::{Channel, PartyId};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub channel: Channel,
    pub payload_type: String,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    /// Tick at which the envelope was sent.
    pub timestamp: u64,
    pub deliver_at: u64,
}

impl Envelope {
    pub fn visible_to(&self, observers: &BTreeSet<PartyId>) -> bool {
        self.channel == Channel::Public || observers.contains(&self.from) || observers.contains(&self.to)
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Pending envelopes keyed by `(deliver_at, seq)`, plus a log of everything sent.
#[derive(Debug, Default)]
pub struct Router {
    pending: BTreeMap<(u64, u64), Envelope>,
    held: BTreeMap<PartyId, Vec<Envelope>>,
    log: Vec<Envelope>,
    next_seq: u64,
    drops: BTreeMap<PartyId, u32>,
    dropped: u64,
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues a message. It arrives one tick after `now`, plus `delay`.
    #[allow(clippy::too_many_arguments)]
    pub fn send(
        &mut self,
        from: PartyId,
        to: PartyId,
        channel: Channel,
        payload_type: &str,
        payload: Vec<u8>,
        now: u64,
        delay: u64,
    ) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        let env = Envelope {
            seq,
            from,
            to,
            channel,
            payload_type: payload_type.to_string(),
            payload,
            timestamp: now,
            deliver_at: now + 1 + delay,
        };
        self.log.push(env.clone());
        if let Some(n) = self.drops.get_mut(&to) {
            if *n > 0 {
                *n -= 1;
                self.dropped += 1;
                return seq;
            }
        }
        self.pending.insert((env.deliver_at, seq), env);
        seq
    }

    /// Silently discards the next `count` messages addressed to `to`.
    pub fn drop_next(&mut self, to: PartyId, count: u32) {
        *self.drops.entry(to).or_default() += count;
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn next_tick(&self) -> Option<u64> {
        self.pending.keys().next().map(|k| k.0)
    }

    /// Removes the earliest envelope due at or before `tick`.
    pub fn pop_due(&mut self, tick: u64) -> Option<Envelope> {
        let key = *self.pending.keys().next()?;
        if key.0 > tick {
            return None;
        }
        self.pending.remove(&key)
    }

    /// Parks an envelope for an offline recipient.
    pub fn hold(&mut self, env: Envelope) {
        self.held.entry(env.to).or_default().push(env);
    }

    /// Requeues everything held for `party`, due at `tick`, in original order.
    pub fn release(&mut self, party: PartyId, tick: u64) {
        for mut env in self.held.remove(&party).unwrap_or_default() {
            env.deliver_at = tick;
            self.pending.insert((tick, env.seq), env);
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn held_count(&self) -> usize {
        self.held.values().map(Vec::len).sum()
    }

    pub fn log(&self) -> &[Envelope] {
        &self.log
    }

    /// All traffic a coalition can see.
    pub fn view(&self, observers: &BTreeSet<PartyId>) -> Vec<&Envelope> {
        self.log.iter().filter(|e| e.visible_to(observers)).collect()
    }
}
