//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails, so `cargo test` reports it.

#[path = "common/oracle.rs"]
mod oracle;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Barrier};

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

use evabs_core::crypto::{compute_mac, decrypt_block, encrypt_block, verify_mac};
use evabs_core::protocol::{
    ChargeReport, EndTrigger, FailureReason, LookupReply, LookupRequest, SessionPhase, Timestamp,
    Variant, WireMessage,
};
use evabs_core::registry::{Registry, Server};
use evabs_core::sim::{
    contains, provision_fleet, run_scenario, AdversaryAction, LookupVerdict, Scenario,
    ScenarioOutcome, Schedule, ScheduleEvent, World,
};
use evabs_core::{Block128, GroupKey, Key256, VehicleCredentials};

// Pinned tolerances.
const MONOBIT_RANGE: std::ops::RangeInclusive<f64> = 0.49..=0.51;
const HONEST_SESSIONS: usize = 1000;
const FORGED_REQUESTS: u64 = 10_000;
const DOS_REQUESTS: u64 = 1000;
const BILLING_CASES: usize = 100;
const CONCURRENT_SUBMISSIONS: usize = 64;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_creds(rng: &mut StdRng) -> VehicleCredentials {
    let mut id = [0u8; 16];
    let mut k = [0u8; 32];
    rng.fill_bytes(&mut id);
    rng.fill_bytes(&mut k);
    VehicleCredentials {
        id_a: Block128(id),
        k_a: Key256(k),
    }
}

fn random_registry(rng: &mut StdRng, n: usize, tariff: u64) -> (Registry, Vec<VehicleCredentials>) {
    let mut g = [0u8; 32];
    rng.fill_bytes(&mut g);
    let mut reg = Registry::new(GroupKey(Key256(g)), tariff);
    let creds: Vec<_> = (0..n).map(|_| random_creds(rng)).collect();
    for (i, c) in creds.iter().enumerate() {
        reg.register_vehicle(c.id_a, c.k_a, 0, format!("v{i}")).unwrap();
    }
    (reg, creds)
}

fn session_scenario(duration: u64) -> Scenario {
    Scenario {
        schedule: Schedule::new().session(0, 0, 0, duration),
        ..Scenario::default()
    }
}

fn run_text(text: &str, vehicles: usize, seed: u64) -> (ScenarioOutcome, Vec<VehicleCredentials>, Registry) {
    let sc = Scenario::parse(text).expect("scenario parses");
    let (reg, creds) = provision_fleet(seed, vehicles, 2, 10_000);
    let initial = reg.clone();
    let out = run_scenario(creds.clone(), Server::in_memory(reg), &sc, seed).expect("scenario runs");
    (out, creds, initial)
}

fn hex(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap()
}

fn pad32(key: &[u8]) -> Key256 {
    let mut k = [0u8; 32];
    k[..key.len()].copy_from_slice(key);
    Key256(k)
}

fn c1_crypto_oracles() -> Outcome {
    let key = Key256::from_slice(&(0u8..32).collect::<Vec<_>>()).unwrap();
    let pt = Block128::from_hex("00112233445566778899aabbccddeeff").unwrap();
    let ct = Block128::from_hex("8ea2b7ca516745bfeafc49904b496089").unwrap();
    check(encrypt_block(&pt, &key) == ct, || "AES-256 known-answer encrypt".into())?;
    check(decrypt_block(&ct, &key) == pt, || "AES-256 known-answer decrypt".into())?;

    let cases: [(Vec<u8>, Vec<u8>, &str); 4] = [
        (
            vec![0x0b; 20],
            b"Hi There".to_vec(),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7",
        ),
        (
            b"Jefe".to_vec(),
            b"what do ya want for nothing?".to_vec(),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843",
        ),
        (
            vec![0xaa; 20],
            vec![0xdd; 50],
            "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe",
        ),
        (
            (1u8..=25).collect(),
            vec![0xcd; 50],
            "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b",
        ),
    ];
    for (i, (k, data, want)) in cases.iter().enumerate() {
        // keys shorter than the hash block are zero-padded by HMAC itself,
        // so padding to 32 bytes leaves the tag unchanged
        let tag = compute_mac(&pad32(k), data).map_err(|e| e.to_string())?;
        check(tag.0.to_vec() == hex(want), || format!("HMAC known-answer case {}", i + 1))?;
        check(oracle::hmac_sha256(k, data).to_vec() == hex(want), || {
            format!("oracle HMAC case {}", i + 1)
        })?;
    }

    let mut rng = StdRng::seed_from_u64(0xc1);
    for i in 0..1000 {
        let mut k = [0u8; 32];
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut k);
        rng.fill_bytes(&mut b);
        let key = Key256(k);
        let block = Block128(b);
        let c = encrypt_block(&block, &key);
        check(decrypt_block(&c, &key) == block, || format!("round trip {i}"))?;
        check(c.0 == oracle::aes256_encrypt(&k, &b), || format!("oracle AES {i}"))?;
        let len = rng.gen_range(1..200);
        let mut data = vec![0u8; len];
        rng.fill_bytes(&mut data);
        let tag = compute_mac(&key, &data).map_err(|e| e.to_string())?;
        check(tag.0 == oracle::hmac_sha256(&k, &data), || format!("oracle HMAC {i}"))?;
        check(verify_mac(&key, &data, &tag), || format!("verify {i}"))?;
    }
    Ok("FIPS-197 C.3, RFC 4231 cases 1-4, 1000 random round trips agree with the oracle".into())
}

fn c2_handshake_algebra() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xc2);
    for i in 0..HONEST_SESSIONS {
        let tariff = rng.gen_range(1..10);
        let (reg, creds) = random_registry(&mut rng, 1, tariff);
        let duration = rng.gen_range(0..5000);
        let seed = rng.gen();
        let out = run_scenario(creds.clone(), Server::in_memory(reg), &session_scenario(duration), seed)
            .map_err(|e| e.to_string())?;
        let tr = out.merged_trace(0).ok_or("no trace")?;
        let c = &creds[0];
        let want_m5 = Block128(oracle::aes256_encrypt(&c.k_a.0, &c.id_a.0));
        check(tr.m5 == Some(want_m5), || format!("session {i}: m5 != E(id_a, k_a)"))?;
        check(tr.m1 == Some(want_m5), || format!("session {i}: m1 != E(id_a, k_a)"))?;
        check(tr.t1.is_some() && tr.t1 == tr.t2, || format!("session {i}: t2 != t1"))?;
        check(out.mutually_verified(0), || format!("session {i} did not verify"))?;
    }
    Ok(format!("{HONEST_SESSIONS} sessions: m5 = E(id_a, k_a) and t2 = t1 in every trace"))
}

fn c3_replay_after_each_step() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xc3);
    let mut rejected = 0;
    for step in 1..=8u8 {
        for trial in 0..5 {
            let (reg, creds) = random_registry(&mut rng, 1, 2);
            let sc = Scenario {
                terminals: 2,
                schedule: Schedule::new().session(0, 0, 0, rng.gen_range(0..3000)),
                ..Scenario::default()
            };
            let mut w = World::new(creds, Server::in_memory(reg), &sc, rng.gen())
                .map_err(|e| e.to_string())?;
            loop {
                let r = w.step().map_err(|e| e.to_string())?.ok_or("ran out of events")?;
                if r.protocol_step == Some(step) {
                    break;
                }
            }
            let seq = w
                .transcript()
                .first_insecure(Variant::AuthRequest)
                .ok_or("no request recorded")?
                .seq;
            w.replay(seq, Some(1)).map_err(|e| e.to_string())?;
            let out = w.run_to_completion().map_err(|e| e.to_string())?;
            let replay_run = out
                .terminal_runs
                .iter()
                .find(|r| r.terminal == 1)
                .ok_or_else(|| format!("step {step}: replay never reached a lookup"))?;
            check(
                replay_run.lookup
                    == Some(LookupVerdict::Rejected {
                        reason: FailureReason::ReplayDetected,
                    }),
                || format!("step {step} trial {trial}: replay got {:?}", replay_run.lookup),
            )?;
            check(out.mutually_verified(0), || {
                format!("step {step} trial {trial}: original session disturbed")
            })?;
            check(out.accepted_lookups() == 1, || format!("step {step}: extra acceptance"))?;
            rejected += 1;
        }
    }
    Ok(format!("{rejected} replays injected after steps 1-8, all ReplayDetected"))
}

fn c4_tamper_sweep() -> Outcome {
    let masks = [0x01u8, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0xff];
    let mut runs = 0;
    for variant in ["auth-request", "start-charge"] {
        for index in 0..65 {
            for mask in masks {
                let text = format!(
                    "timeout 1000\nsession at 0 vehicle 0 terminal 0 duration 1000\n\
                     on insecure {variant} #1 -> tamper {index} xor {mask:02x}"
                );
                let (out, _, _) = run_text(&text, 1, 0xc4 + index as u64);
                runs += 1;
                let energized = out.terminal_runs.iter().any(|r| r.energy_started);
                let vehicle_verified = out.sessions[0].reached_charging;
                check(!(energized && vehicle_verified), || {
                    format!("{variant} byte {index} mask {mask:02x}: both sides verified")
                })?;
                if variant == "auth-request" {
                    check(!energized, || format!("m3 byte {index}: terminal energized"))?;
                } else if index > 0 {
                    check(
                        out.sessions[0].phase
                            == SessionPhase::Failed {
                                reason: FailureReason::MacInvalid,
                            },
                        || format!("m8 byte {index} mask {mask:02x}: {:?}", out.sessions[0].phase),
                    )?;
                }
            }
        }
    }
    Ok(format!(
        "{runs} single-byte tampers over both 65-byte frames; none verified, every altered start payload gave MacInvalid"
    ))
}

fn c5_forgery() -> Outcome {
    let text = format!(
        "at 0 -> forge auth-request count {FORGED_REQUESTS} every 1\n\
         session at {} vehicle 0 terminal 0 duration 100",
        FORGED_REQUESTS + 10
    );
    let (out, _, _) = run_text(&text, 3, 0xc5);
    let forged: Vec<_> = out
        .terminal_runs
        .iter()
        .filter(|r| {
            out.transcript.get(r.request_seq).map(|e| e.adversary_action)
                == Some(AdversaryAction::Injected)
        })
        .collect();
    check(forged.len() as u64 == FORGED_REQUESTS, || {
        format!("only {} forged requests reached a lookup", forged.len())
    })?;
    let accepted = forged
        .iter()
        .filter(|r| matches!(r.lookup, Some(LookupVerdict::Accepted { .. })))
        .count();
    check(accepted == 0, || format!("{accepted} forged requests accepted"))?;
    check(out.accepted_lookups() == 1, || "honest session not accepted".into())?;
    Ok(format!("{FORGED_REQUESTS} forged requests, 0 accepted"))
}

fn c6_secrecy() -> Outcome {
    let vehicles = 10;
    let mut text = String::from("terminals 4\n");
    for i in 0..HONEST_SESSIONS {
        text.push_str(&format!(
            "session at {} vehicle {} terminal {} duration {}\n",
            (i / 4) * 1000,
            i % vehicles,
            i % 4,
            100 + (i % 7) * 50
        ));
    }
    let sc = Scenario::parse(&text).map_err(|e| e.to_string())?;
    let (reg, creds) = provision_fleet(0xc6, vehicles, 2, 0);
    let g = reg.group_key;
    let out = run_scenario(creds.clone(), Server::in_memory(reg), &sc, 0xc6).map_err(|e| e.to_string())?;
    let completed = (0..out.sessions.len()).filter(|&s| out.mutually_verified(s)).count();
    check(completed == HONEST_SESSIONS, || format!("only {completed} sessions completed"))?;
    let mut needles: Vec<Vec<u8>> = vec![g.0 .0.to_vec()];
    for c in &creds {
        needles.push(c.id_a.0.to_vec());
        needles.push(c.k_a.0.to_vec());
    }
    // half-length windows too: a partial leak is still a leak
    let halves: Vec<Vec<u8>> = needles
        .iter()
        .flat_map(|n| n.chunks(n.len() / 2).map(<[u8]>::to_vec).collect::<Vec<_>>())
        .collect();
    let mut frames = 0;
    for e in out.transcript.insecure() {
        frames += 1;
        for n in needles.iter().chain(&halves) {
            check(!contains(&e.frame, n), || format!("secret bytes in seq {}", e.seq))?;
        }
    }
    Ok(format!("{frames} open-channel frames from {completed} sessions, 0 occurrences"))
}

fn c7_untraceability() -> Outcome {
    let mut text = String::new();
    for i in 0..HONEST_SESSIONS {
        text.push_str(&format!("session at {} vehicle 0 terminal 0 duration 10\n", i * 100));
    }
    let (out, _, _) = run_text(&text, 1, 0xc7);
    let mut triples = HashSet::new();
    let mut ones = 0u64;
    let mut bits = 0u64;
    for frame in out.insecure_frames(Variant::AuthRequest) {
        let Ok(WireMessage::AuthRequest(r)) = WireMessage::decode(&frame) else {
            return Err("undecodable request".into());
        };
        check(triples.insert((r.m3, r.mac, r.n_a)), || "repeated triple".into())?;
        ones += r.n_a.0.iter().map(|b| b.count_ones() as u64).sum::<u64>();
        bits += 128;
    }
    check(triples.len() == HONEST_SESSIONS, || format!("{} triples", triples.len()))?;
    let frac = ones as f64 / bits as f64;
    check(MONOBIT_RANGE.contains(&frac), || format!("monobit {frac:.4}"))?;
    Ok(format!("{} distinct (m3, mac, n_a) triples, nonce monobit {frac:.4}", triples.len()))
}

/// Registry after a run differs from `before` only by recorded nonces of
/// accepted lookups and by billed amounts.
fn registry_changed_by_rules(before: &Registry, out: &ScenarioOutcome) -> Result<(), String> {
    let accepted = out.accepted_lookups();
    let recorded: usize = out.registry.vehicles.iter().map(|r| r.used_nonces.len()).sum::<usize>()
        - before.vehicles.iter().map(|r| r.used_nonces.len()).sum::<usize>();
    check(recorded == accepted, || format!("{recorded} nonces vs {accepted} acceptances"))?;
    check(out.registry.invoices == out.invoices, || "invoice log mismatch".into())?;
    for b in &before.vehicles {
        let a = out.registry.record_by_id(&b.id_a).ok_or("record lost")?;
        let billed: u64 = out.invoices.iter().filter(|i| i.id_a == b.id_a).map(|i| i.amount).sum();
        check(a.balance == b.balance - billed as i64, || "balance drift".into())?;
        check(a.lookup_key == b.lookup_key && a.k_a == b.k_a && a.revoked == b.revoked, || {
            "record fields changed".into()
        })?;
        check(a.used_nonces.is_superset(&b.used_nonces), || "nonce lost".into())?;
    }
    Ok(())
}

fn c8_desync_dos() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xc8);
    for step in 1..=8u8 {
        let (reg, creds) = random_registry(&mut rng, 1, 3);
        let before = reg.clone();
        let sc = Scenario {
            vehicle_timeout_ms: 1000,
            schedule: Schedule::new()
                .session(0, 0, 0, 2000)
                .session(10_000, 0, 0, 700),
            ..Scenario::default()
        };
        let mut w = World::new(creds, Server::in_memory(reg), &sc, rng.gen()).map_err(|e| e.to_string())?;
        loop {
            let r = w.step().map_err(|e| e.to_string())?.ok_or("ran out of events")?;
            if r.protocol_step == Some(step) {
                break;
            }
        }
        // abort: spoofed failure notice, garbage request, cable pulled
        w.inject(vec![0x06, FailureReason::Timeout.code()], 0);
        let mut junk = vec![0u8; 65];
        rng.fill_bytes(&mut junk);
        junk[0] = 0x01;
        w.inject(junk, 0);
        w.unplug(0);
        let out = w.run_to_completion().map_err(|e| e.to_string())?;
        check(out.sessions.len() == 2, || format!("step {step}: second session not started"))?;
        check(out.mutually_verified(1), || {
            format!("step {step}: clean session after abort failed: {:?}", out.sessions[1].phase)
        })?;
        check(
            matches!(out.sessions[1].phase, SessionPhase::Completed { .. }),
            || format!("step {step}: clean session did not complete"),
        )?;
        registry_changed_by_rules(&before, &out).map_err(|e| format!("step {step}: {e}"))?;
    }

    let text = format!(
        "at 0 -> forge auth-request count {DOS_REQUESTS} every 1\n\
         session at {} vehicle 0 terminal 0 duration 500",
        DOS_REQUESTS + 1
    );
    let sc = Scenario::parse(&text).map_err(|e| e.to_string())?;
    let (reg, creds) = provision_fleet(0xc8, 2, 2, 100);
    let before = reg.clone();
    let out = run_scenario(creds, Server::in_memory(reg), &sc, 0xc8).map_err(|e| e.to_string())?;
    check(out.mutually_verified(0), || "session after flood failed".into())?;
    check(out.accepted_lookups() == 1, || "flood accepted".into())?;
    registry_changed_by_rules(&before, &out).map_err(|e| format!("flood: {e}"))?;
    Ok(format!(
        "clean session completes after aborts at steps 1-8 and after {DOS_REQUESTS} bogus requests; registry moved only by lookup and billing"
    ))
}

fn c9_billing() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xc9);
    for case in 0..BILLING_CASES {
        let tariff: u64 = rng.gen_range(0..100);
        let duration: u64 = rng.gen_range(0..300_000);
        let (reg, creds) = random_registry(&mut rng, 1, tariff);
        let out = run_scenario(creds, Server::in_memory(reg), &session_scenario(duration), rng.gen())
            .map_err(|e| e.to_string())?;
        let inv = out.invoices.first().ok_or_else(|| format!("case {case}: no invoice"))?;
        let expected = (duration + 999) / 1000 * tariff;
        check(inv.duration_ms == duration && inv.amount == expected, || {
            format!("case {case}: {duration} ms at {tariff}/s billed {}", inv.amount)
        })?;
        let tr = out.merged_trace(0).ok_or("no trace")?;
        check(tr.t4 == Some(inv.t5.0 - inv.t1.0), || format!("case {case}: t4 != t5 - t1"))?;
    }

    for case in 0..BILLING_CASES {
        let tariff: u64 = rng.gen_range(1..1000);
        let budget: u64 = rng.gen_range(1..500);
        let (reg, creds) = random_registry(&mut rng, 1, tariff);
        let sc = Scenario {
            schedule: Schedule::new().push(
                0,
                ScheduleEvent::Session {
                    vehicle: 0,
                    terminal: 0,
                    duration_ms: None,
                    budget: Some(budget),
                },
            ),
            ..Scenario::default()
        };
        let out = run_scenario(creds, Server::in_memory(reg), &sc, rng.gen()).map_err(|e| e.to_string())?;
        let run = out.run_for(0).ok_or("no terminal run")?;
        check(run.end == Some(EndTrigger::BudgetExhausted), || format!("cutoff case {case}: {:?}", run.end))?;
        let c = out.invoices[0].duration_ms as u128;
        // accrued cost at c ms is c * tariff / 1000
        let reached = c * tariff as u128 >= budget as u128 * 1000;
        let not_before = c == 0 || (c - 1) * (tariff as u128) < budget as u128 * 1000;
        check(reached && not_before, || {
            format!("cutoff case {case}: budget {budget} tariff {tariff} cut at {c} ms")
        })?;
    }

    // the documented example: budget 4 at 2/s
    let (reg, creds) = random_registry(&mut rng, 1, 2);
    let sc = Scenario::parse("session at 0 vehicle 0 terminal 0 budget 4").map_err(|e| e.to_string())?;
    let out = run_scenario(creds, Server::in_memory(reg), &sc, 9).map_err(|e| e.to_string())?;
    check(out.invoices[0].duration_ms == 2000 && out.invoices[0].amount == 4, || {
        "budget 4 at 2/s".into()
    })?;
    Ok(format!(
        "{BILLING_CASES} random duration/tariff pairs billed ceil-seconds with t4 = t5 - t1; {BILLING_CASES} budget cutoffs at the first instant cost >= budget"
    ))
}

fn c10_revocation() -> Outcome {
    for seed in 0..10u64 {
        let text = "terminals 3\nclone vehicle 1 of 0\n\
                    session at 0 vehicle 0 terminal 0 duration 500\n\
                    revoke at 1000 vehicle 0\n\
                    session at 2000 vehicle 0 terminal 0 duration 500\n\
                    session at 2000 vehicle 1 terminal 1 duration 500\n\
                    at 3000 -> replay first auth-request to terminal 2\n\
                    session at 5000 vehicle 0 terminal 0 duration 500\n\
                    session at 8000 vehicle 1 terminal 1 budget 10\n\
                    at 9000 -> replay last auth-request to terminal 2\n";
        let sc = Scenario::parse(text).map_err(|e| e.to_string())?;
        let (reg, creds) = evabs_core::sim::provision_scenario(&sc, seed, 2, 100);
        let id = creds[0].id_a;
        let out = run_scenario(creds, Server::in_memory(reg), &sc, seed).map_err(|e| e.to_string())?;
        let after: Vec<_> = out
            .terminal_runs
            .iter()
            .filter(|r| r.started_at >= Timestamp(1000))
            .collect();
        check(after.len() >= 4, || format!("seed {seed}: only {} attempts", after.len()))?;
        for r in &after {
            check(!matches!(r.lookup, Some(LookupVerdict::Accepted { .. })), || {
                format!("seed {seed}: revoked vehicle accepted at {}", r.started_at)
            })?;
            check(!r.energy_started, || format!("seed {seed}: energy after revocation"))?;
        }
        let billed = out.invoices.iter().filter(|i| i.id_a == id && i.t1 >= Timestamp(1000)).count();
        check(billed == 0, || format!("seed {seed}: {billed} invoices after revocation"))?;
        check(out.invoices.len() == 1, || "pre-revocation invoice missing".into())?;
    }
    Ok("10 runs: revoked vehicle, its full clone and replays never authenticate or accrue invoices".into())
}

fn c11_determinism_concurrency() -> Outcome {
    let scripts = [
        "terminals 2\nsession at 0 vehicle 0 terminal 0 duration 900\nsession at 3 vehicle 1 terminal 1 budget 3\n\
         on insecure start-charge #2 -> tamper 9 xor 10\nat 2000 -> forge auth-request count 50 every 2 to terminal 1\n\
         at 2500 -> replay first auth-request to terminal 0",
        "timeout 300\nsession at 0 vehicle 0 terminal 0 duration 100\non insecure any #* -> delay 1\n\
         session at 1000 vehicle 1 terminal 0 duration 100",
    ];
    for (i, s) in scripts.iter().enumerate() {
        for seed in [0u64, 7, u64::MAX] {
            let a = run_text(s, 2, seed).0.transcript.to_jsonl();
            let b = run_text(s, 2, seed).0.transcript.to_jsonl();
            check(a == b, || format!("script {i} seed {seed}: transcripts differ"))?;
        }
        let a = run_text(s, 2, 1).0.transcript.to_jsonl();
        let b = run_text(s, 2, 2).0.transcript.to_jsonl();
        check(a != b, || format!("script {i}: seed has no effect"))?;
    }

    let mut rng = StdRng::seed_from_u64(0xcb);
    for trial in 0..20 {
        let (reg, creds) = random_registry(&mut rng, 4, 2);
        let c = &creds[trial % 4];
        let mut n = [0u8; 16];
        rng.fill_bytes(&mut n);
        let req = LookupRequest {
            m5: encrypt_block(&c.id_a, &c.k_a),
            n_a: evabs_core::Nonce128(n),
        };
        let server = Arc::new(Server::in_memory(reg));
        let barrier = Arc::new(Barrier::new(CONCURRENT_SUBMISSIONS));
        let replies: Vec<LookupReply> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..CONCURRENT_SUBMISSIONS)
                .map(|_| {
                    let server = Arc::clone(&server);
                    let barrier = Arc::clone(&barrier);
                    s.spawn(move || {
                        barrier.wait();
                        server.lookup(&req).unwrap()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let accepted = replies.iter().filter(|r| matches!(r, LookupReply::Accepted { .. })).count();
        let replays = replies
            .iter()
            .filter(|r| {
                **r == LookupReply::Rejected {
                    reason: FailureReason::ReplayDetected,
                }
            })
            .count();
        check(accepted == 1 && replays == CONCURRENT_SUBMISSIONS - 1, || {
            format!("trial {trial}: {accepted} accepted, {replays} replays")
        })?;
    }
    // billing stays correct when interleaved with lookups of other records
    let (reg, creds) = random_registry(&mut rng, 2, 1);
    let server = Server::in_memory(reg);
    std::thread::scope(|s| {
        s.spawn(|| {
            for i in 0..200u64 {
                let r = ChargeReport {
                    id_a: creds[0].id_a,
                    t1: Timestamp(0),
                    t5: Timestamp(i * 10),
                };
                server.bill(&r, Timestamp(i)).unwrap();
            }
        });
        s.spawn(|| {
            for i in 0..200u8 {
                let req = LookupRequest {
                    m5: encrypt_block(&creds[1].id_a, &creds[1].k_a),
                    n_a: evabs_core::Nonce128([i; 16]),
                };
                server.lookup(&req).unwrap();
            }
        });
    });
    let snap = server.snapshot();
    check(snap.invoices.len() == 200, || "lost invoices".into())?;
    check(snap.vehicles[1].used_nonces.len() == 200, || "lost nonces".into())?;
    Ok(format!(
        "transcripts byte-identical per seed; {CONCURRENT_SUBMISSIONS} concurrent submissions gave exactly one Accepted in 20 trials"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("crypto oracle equivalence", c1_crypto_oracles),
        ("handshake algebra", c2_handshake_algebra),
        ("replay rejection after every step", c3_replay_after_each_step),
        ("integrity under single-byte tampering", c4_tamper_sweep),
        ("impersonation without keys", c5_forgery),
        ("secrecy of identities and keys", c6_secrecy),
        ("untraceability", c7_untraceability),
        ("desynchronization and denial of service", c8_desync_dos),
        ("billing and budget cutoff", c9_billing),
        ("revocation", c10_revocation),
        ("determinism and concurrency", c11_determinism_concurrency),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = std::time::Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
