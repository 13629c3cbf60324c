//! Deterministic simulation of vehicles, terminals and the server over an
//! adversarial vehicle↔terminal channel and an ideal terminal↔server line.
//!
//! Time is simulated: all agents read one [`SimClock`], and events at equal
//! times run in the order they were scheduled. Given the same seed, schedule
//! and script, a run produces a byte-identical transcript.

mod adversary;
pub mod script;
mod transcript;
mod world;

use serde::{Deserialize, Serialize};

use crate::crypto::{Block128, Key256, PrngState};
use crate::protocol::{GroupKey, Timestamp, VehicleCredentials};
use crate::registry::Registry;

pub use adversary::{Adversary, Delivery};
pub use script::{
    Action, AdversaryScript, CloneSpec, Occurrence, ReplayTarget, Rule, Scenario, Schedule, ScheduleEvent,
    ScheduledEvent, TamperOp, Trigger,
};
pub use transcript::{contains, AdversaryAction, Channel, Direction, Transcript, TranscriptEntry};
pub use world::{
    run_scenario, LookupVerdict, ScenarioOutcome, SessionOutcome, StepReport, TerminalRun, World,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("script line {line}: {msg}")]
    Script { line: usize, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
}

/// Shared simulated clock; never moves backwards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now: Timestamp,
}

impl SimClock {
    pub fn new(start: Timestamp) -> Self {
        Self { now: start }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn advance_by(&mut self, delta_ms: u64) -> Timestamp {
        self.now = self.now.saturating_add(delta_ms);
        self.now
    }

    /// Move forward to `t`; earlier targets leave the clock where it is.
    pub fn advance_to(&mut self, t: Timestamp) -> Timestamp {
        if t > self.now {
            self.now = t;
        }
        self.now
    }
}

/// Independent seed for `(domain, index)` derived from one run seed.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut x = seed
        ^ domain.wrapping_mul(0xd6e8_feb8_6659_fd93)
        ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    crate::crypto::prng_splitmix(&mut x)
}

/// A registry holding `count` freshly keyed vehicles, each opened with
/// `balance`, plus the matching vehicle-side credentials. Deterministic in
/// `seed`.
pub fn provision_fleet(
    seed: u64,
    count: usize,
    tariff_per_second: u64,
    balance: i64,
) -> (Registry, Vec<VehicleCredentials>) {
    let mut prng = PrngState::from_seed(derive_seed(seed, 0, 0));
    let mut draw = |buf: &mut [u8]| {
        prng.fill_bytes(buf)
            .expect("seeded generator never reaches the zero state")
    };
    let mut g = [0u8; 32];
    draw(&mut g);
    let mut registry = Registry::new(GroupKey(Key256(g)), tariff_per_second);
    let mut creds = Vec::with_capacity(count);
    while creds.len() < count {
        let mut id = [0u8; 16];
        let mut k = [0u8; 32];
        draw(&mut id);
        draw(&mut k);
        let c = VehicleCredentials {
            id_a: Block128(id),
            k_a: Key256(k),
        };
        let label = format!("vehicle-{}", creds.len());
        if registry.register_vehicle(c.id_a, c.k_a, balance, label).is_ok() {
            creds.push(c);
        }
    }
    (registry, creds)
}

/// Provision the fleet a scenario describes. Ordinary vehicles are
/// registered with `balance`; clones are not registered and carry copies of
/// their source's secrets (or only its id plus a fresh key).
pub fn provision_scenario(
    scenario: &Scenario,
    seed: u64,
    tariff_per_second: u64,
    balance: i64,
) -> (Registry, Vec<VehicleCredentials>) {
    let n = scenario.vehicle_count();
    let (fleet, mut creds) = provision_fleet(seed, n, tariff_per_second, balance);
    for c in &scenario.clones {
        let src = creds[c.source].clone();
        let own_key = creds[c.vehicle].k_a;
        creds[c.vehicle] = VehicleCredentials {
            id_a: src.id_a,
            k_a: if c.with_key { src.k_a } else { own_key },
        };
    }
    let mut registry = Registry::new(fleet.group_key, tariff_per_second);
    for (i, rec) in fleet.vehicles.into_iter().enumerate() {
        if scenario.clone_of(i).is_none() {
            registry
                .register_vehicle(rec.id_a, rec.k_a, balance, rec.owner_label)
                .expect("fleet records are unique");
        }
    }
    (registry, creds)
}
