//! Server-side vehicle database, replay-nonce store, revocation and billing.
//!
//! [`Registry`] is the plain persisted document. [`Server`] wraps it behind a
//! mutex so that the nonce check-and-record of a lookup is one atomic step,
//! and optionally writes every mutation through to a JSON file.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::crypto::{encrypt_block, Block128, Key256, Nonce128};
use crate::protocol::{ChargeReport, FailureReason, GroupKey, LookupReply, LookupRequest, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("vehicle already registered")]
    DuplicateVehicle,
    #[error("vehicle not found")]
    NotFound,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid charge report: t5 {t5} precedes t1 {t1}")]
    InvalidReport { t1: Timestamp, t5: Timestamp },
    #[error("storage error: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleRecord {
    /// `E(id_a, k_a)`; recomputed and checked on load.
    pub lookup_key: Block128,
    pub id_a: Block128,
    pub k_a: Key256,
    pub used_nonces: BTreeSet<Nonce128>,
    pub revoked: bool,
    /// Minor currency units; negative after a post-paid overrun.
    pub balance: i64,
    pub owner_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub id_a: Block128,
    pub t1: Timestamp,
    pub t5: Timestamp,
    pub duration_ms: u64,
    pub amount: u64,
    pub issued_at: Timestamp,
}

/// `ceil(duration_ms / 1000) * tariff_per_second`.
pub fn invoice_amount(duration_ms: u64, tariff_per_second: u64) -> u64 {
    duration_ms.div_ceil(1000).saturating_mul(tariff_per_second)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub group_key: GroupKey,
    pub tariff_per_second: u64,
    pub vehicles: Vec<VehicleRecord>,
    pub invoices: Vec<Invoice>,
    #[serde(skip)]
    index: HashMap<Block128, usize>,
}

impl Registry {
    pub fn new(group_key: GroupKey, tariff_per_second: u64) -> Self {
        Self {
            group_key,
            tariff_per_second,
            vehicles: Vec::new(),
            invoices: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn record(&self, lookup_key: &Block128) -> Option<&VehicleRecord> {
        self.index.get(lookup_key).map(|&i| &self.vehicles[i])
    }

    pub fn record_by_id(&self, id_a: &Block128) -> Option<&VehicleRecord> {
        self.vehicles.iter().find(|r| &r.id_a == id_a)
    }

    pub fn register_vehicle(
        &mut self,
        id_a: Block128,
        k_a: Key256,
        opening_balance: i64,
        owner_label: impl Into<String>,
    ) -> Result<&VehicleRecord, RegistryError> {
        if opening_balance < 0 {
            return Err(RegistryError::InvalidInput(
                "opening balance must be non-negative".into(),
            ));
        }
        let lookup_key = encrypt_block(&id_a, &k_a);
        if self.index.contains_key(&lookup_key) || self.record_by_id(&id_a).is_some() {
            return Err(RegistryError::DuplicateVehicle);
        }
        self.vehicles.push(VehicleRecord {
            lookup_key,
            id_a,
            k_a,
            used_nonces: BTreeSet::new(),
            revoked: false,
            balance: opening_balance,
            owner_label: owner_label.into(),
        });
        let i = self.vehicles.len() - 1;
        self.index.insert(lookup_key, i);
        Ok(&self.vehicles[i])
    }

    /// Idempotent. Revoked records answer lookups exactly like absent ones.
    pub fn revoke_vehicle(&mut self, id_a: &Block128) -> Result<(), RegistryError> {
        let rec = self
            .vehicles
            .iter_mut()
            .find(|r| &r.id_a == id_a)
            .ok_or(RegistryError::NotFound)?;
        rec.revoked = true;
        Ok(())
    }

    /// Step 3. Returns the reply and whether a nonce was recorded.
    pub fn server_step3(&mut self, req: &LookupRequest) -> (LookupReply, bool) {
        let Some(&i) = self.index.get(&req.m5) else {
            return (Self::rejected(FailureReason::UnknownVehicle), false);
        };
        let rec = &mut self.vehicles[i];
        if rec.revoked {
            return (Self::rejected(FailureReason::UnknownVehicle), false);
        }
        if !rec.used_nonces.insert(req.n_a) {
            return (Self::rejected(FailureReason::ReplayDetected), false);
        }
        (
            LookupReply::Accepted {
                id_a: rec.id_a,
                k_a: rec.k_a,
            },
            true,
        )
    }

    fn rejected(reason: FailureReason) -> LookupReply {
        LookupReply::Rejected { reason }
    }

    /// Step 8. The balance may go negative.
    pub fn bill(&mut self, report: &ChargeReport, now: Timestamp) -> Result<Invoice, RegistryError> {
        if report.t5 < report.t1 {
            return Err(RegistryError::InvalidReport {
                t1: report.t1,
                t5: report.t5,
            });
        }
        let tariff = self.tariff_per_second;
        let rec = self
            .vehicles
            .iter_mut()
            .find(|r| r.id_a == report.id_a)
            .ok_or(RegistryError::NotFound)?;
        let duration_ms = report.t5.0 - report.t1.0;
        let amount = invoice_amount(duration_ms, tariff);
        let delta = i64::try_from(amount)
            .map_err(|_| RegistryError::InvalidInput("invoice amount overflows".into()))?;
        rec.balance = rec.balance.saturating_sub(delta);
        let invoice = Invoice {
            id_a: report.id_a,
            t1: report.t1,
            t5: report.t5,
            duration_ms,
            amount,
            issued_at: now,
        };
        log::info!(
            "invoice for {} ({}): {} ms, amount {}, balance {}",
            rec.owner_label,
            report.id_a.to_hex(),
            duration_ms,
            amount,
            rec.balance
        );
        self.invoices.push(invoice.clone());
        Ok(invoice)
    }

    /// Rebuild the lookup index and check every invariant a loaded document
    /// must satisfy.
    fn validate(&mut self) -> Result<(), RegistryError> {
        self.index.clear();
        let mut ids = BTreeSet::new();
        for (i, rec) in self.vehicles.iter().enumerate() {
            let name = |msg: &str| {
                RegistryError::Storage(format!("vehicle record {i} ({}): {msg}", rec.id_a.to_hex()))
            };
            if encrypt_block(&rec.id_a, &rec.k_a) != rec.lookup_key {
                return Err(name("lookup_key does not match E(id_a, k_a)"));
            }
            if self.index.insert(rec.lookup_key, i).is_some() {
                return Err(name("duplicate lookup_key"));
            }
            if !ids.insert(rec.id_a) {
                return Err(name("duplicate id_a"));
            }
        }
        for (i, inv) in self.invoices.iter().enumerate() {
            if inv.t5 < inv.t1 || inv.duration_ms != inv.t5.0 - inv.t1.0 {
                return Err(RegistryError::Storage(format!(
                    "invoice {i}: duration does not match t5 - t1"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Registry, RegistryError> {
        let mut reg: Registry = serde_json::from_str(text)
            .map_err(|e| RegistryError::Storage(format!("malformed registry document: {e}")))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    /// Invoices as JSON Lines, one per line.
    pub fn invoices_jsonl(&self) -> String {
        invoices_jsonl(&self.invoices)
    }
}

pub fn invoices_jsonl(invoices: &[Invoice]) -> String {
    let mut out = String::new();
    for inv in invoices {
        out.push_str(&serde_json::to_string(inv).expect("invoice serializes"));
        out.push('\n');
    }
    out
}

pub fn load_registry(path: &Path) -> Result<Registry, RegistryError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RegistryError::Storage(format!("{}: {e}", path.display())))?;
    Registry::from_json(&text)
}

/// Write atomically via a sibling temp file.
pub fn save_registry(registry: &Registry, path: &Path) -> Result<(), RegistryError> {
    let tmp = path.with_extension("tmp");
    let io = |e: std::io::Error| RegistryError::Storage(format!("{}: {e}", path.display()));
    std::fs::write(&tmp, registry.to_json()).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

/// Linearizable front for the registry, shared by every terminal.
#[derive(Debug)]
pub struct Server {
    state: Mutex<Registry>,
    store: Option<PathBuf>,
}

impl Server {
    pub fn in_memory(registry: Registry) -> Self {
        Self {
            state: Mutex::new(registry),
            store: None,
        }
    }

    /// Persist every mutation to `path`.
    pub fn with_store(registry: Registry, path: impl Into<PathBuf>) -> Self {
        Self {
            state: Mutex::new(registry),
            store: Some(path.into()),
        }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let path = path.into();
        let reg = load_registry(&path)?;
        Ok(Self::with_store(reg, path))
    }

    pub fn snapshot(&self) -> Registry {
        self.lock().clone()
    }

    pub fn into_registry(self) -> Registry {
        self.state.into_inner().unwrap_or_else(|p| p.into_inner())
    }

    pub fn group_key(&self) -> GroupKey {
        self.lock().group_key
    }

    pub fn tariff(&self) -> u64 {
        self.lock().tariff_per_second
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn persist(&self, reg: &Registry) -> Result<(), RegistryError> {
        match &self.store {
            Some(path) => save_registry(reg, path),
            None => Ok(()),
        }
    }

    /// Step 3 as one atomic check-record-persist. A failed write rolls the
    /// nonce back out.
    pub fn lookup(&self, req: &LookupRequest) -> Result<LookupReply, RegistryError> {
        let mut reg = self.lock();
        let (reply, recorded) = reg.server_step3(req);
        if recorded {
            if let Err(e) = self.persist(&reg) {
                let i = reg.index[&req.m5];
                reg.vehicles[i].used_nonces.remove(&req.n_a);
                return Err(e);
            }
        }
        Ok(reply)
    }

    pub fn bill(&self, report: &ChargeReport, now: Timestamp) -> Result<Invoice, RegistryError> {
        let mut reg = self.lock();
        let before = reg.clone();
        let invoice = reg.bill(report, now)?;
        if let Err(e) = self.persist(&reg) {
            *reg = before;
            return Err(e);
        }
        Ok(invoice)
    }

    pub fn revoke(&self, id_a: &Block128) -> Result<(), RegistryError> {
        let mut reg = self.lock();
        let before = reg.clone();
        reg.revoke_vehicle(id_a)?;
        if let Err(e) = self.persist(&reg) {
            *reg = before;
            return Err(e);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> Registry {
        Registry::new(GroupKey(Key256([9; 32])), 2)
    }

    fn id(n: u8) -> Block128 {
        Block128([n; 16])
    }

    fn key(n: u8) -> Key256 {
        Key256([n; 32])
    }

    fn lookup(r: &mut Registry, m5: Block128, n: u8) -> LookupReply {
        r.server_step3(&LookupRequest {
            m5,
            n_a: Nonce128([n; 16]),
        })
        .0
    }

    #[test]
    fn register_then_lookup() {
        let mut r = reg();
        let lk = r.register_vehicle(id(1), key(1), 100, "alice").unwrap().lookup_key;
        assert_eq!(lk, encrypt_block(&id(1), &key(1)));
        assert_eq!(
            lookup(&mut r, lk, 7),
            LookupReply::Accepted {
                id_a: id(1),
                k_a: key(1)
            }
        );
        assert_eq!(
            lookup(&mut r, lk, 7),
            LookupReply::Rejected {
                reason: FailureReason::ReplayDetected
            }
        );
        assert_eq!(
            lookup(&mut r, id(99), 8),
            LookupReply::Rejected {
                reason: FailureReason::UnknownVehicle
            }
        );
    }

    #[test]
    fn duplicates_and_bad_balance() {
        let mut r = reg();
        r.register_vehicle(id(1), key(1), 0, "a").unwrap();
        assert_eq!(
            r.register_vehicle(id(1), key(1), 0, "a").unwrap_err(),
            RegistryError::DuplicateVehicle
        );
        assert_eq!(
            r.register_vehicle(id(1), key(2), 0, "a").unwrap_err(),
            RegistryError::DuplicateVehicle
        );
        assert!(matches!(
            r.register_vehicle(id(2), key(2), -1, "b"),
            Err(RegistryError::InvalidInput(_))
        ));
        assert_eq!(r.vehicles.len(), 1);
    }

    #[test]
    fn revoked_looks_absent() {
        let mut r = reg();
        let lk = r.register_vehicle(id(1), key(1), 0, "a").unwrap().lookup_key;
        r.revoke_vehicle(&id(1)).unwrap();
        r.revoke_vehicle(&id(1)).unwrap();
        assert_eq!(
            lookup(&mut r, lk, 1),
            LookupReply::Rejected {
                reason: FailureReason::UnknownVehicle
            }
        );
        assert!(r.vehicles[0].used_nonces.is_empty());
        assert_eq!(r.revoke_vehicle(&id(5)), Err(RegistryError::NotFound));
    }

    #[test]
    fn billing_formula() {
        let mut r = reg();
        r.register_vehicle(id(1), key(1), 500, "a").unwrap();
        let rep = |t1, t5| ChargeReport {
            id_a: id(1),
            t1: Timestamp(t1),
            t5: Timestamp(t5),
        };
        assert_eq!(r.bill(&rep(5, 5), Timestamp(5)).unwrap().amount, 0);
        assert_eq!(r.bill(&rep(0, 90_000), Timestamp(0)).unwrap().amount, 180);
        assert_eq!(r.bill(&rep(0, 90_001), Timestamp(0)).unwrap().amount, 182);
        assert_eq!(r.vehicles[0].balance, 500 - 362);
        assert!(matches!(
            r.bill(&rep(10, 9), Timestamp(0)),
            Err(RegistryError::InvalidReport { .. })
        ));
        let unknown = ChargeReport {
            id_a: id(7),
            ..rep(0, 1)
        };
        assert_eq!(r.bill(&unknown, Timestamp(0)), Err(RegistryError::NotFound));
        r.bill(&rep(0, 1_000_000), Timestamp(0)).unwrap();
        assert!(r.vehicles[0].balance < 0, "overrun is recorded, not blocked");
        assert_eq!(r.invoices.len(), 4);
    }

    #[test]
    fn json_roundtrip_and_corruption() {
        let mut r = reg();
        let lk = r.register_vehicle(id(1), key(1), 10, "a").unwrap().lookup_key;
        r.register_vehicle(id(2), key(2), 10, "b").unwrap();
        lookup(&mut r, lk, 3);
        let text = r.to_json();
        assert_eq!(Registry::from_json(&text).unwrap(), r);

        let hex = r.vehicles[1].lookup_key.to_hex();
        let flipped = format!(
            "{}{}",
            if &hex[..1] == "0" { "1" } else { "0" },
            &hex[1..]
        );
        let bad = text.replace(&hex, &flipped);
        let err = Registry::from_json(&bad).unwrap_err();
        let RegistryError::Storage(msg) = err else {
            panic!("expected storage error");
        };
        assert!(msg.contains("record 1"), "{msg}");
        assert!(msg.contains(&id(2).to_hex()), "{msg}");
    }

    #[test]
    fn empty_registry_loads() {
        let r = reg();
        assert_eq!(Registry::from_json(&r.to_json()).unwrap(), r);
        assert!(matches!(
            Registry::from_json("{not json"),
            Err(RegistryError::Storage(_))
        ));
    }

    #[test]
    fn jsonl_field_order() {
        let inv = Invoice {
            id_a: id(1),
            t1: Timestamp(1),
            t5: Timestamp(2),
            duration_ms: 1,
            amount: 2,
            issued_at: Timestamp(3),
        };
        let line = invoices_jsonl(&[inv]);
        let keys: Vec<usize> = ["id_a", "t1", "t5", "duration_ms", "amount", "issued_at"]
            .iter()
            .map(|k| line.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(line.ends_with('\n'));
    }
}
