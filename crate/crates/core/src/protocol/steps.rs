//! The handshake and billing steps as pure functions.
//!
//! Server lookup and billing (steps 3 and 8) live in [`crate::registry`].

use crate::crypto::{
    compute_mac, concat, decrypt_block, encrypt_block, next_nonce, verify_mac, xor_blocks,
    Block128, Key256, PrngState,
};

use super::{
    AuthRequest, ChargeReport, FailureNotice, FailureReason, GroupKey, HandshakeTrace,
    ProtocolError, StartCharge, Timestamp, VehicleCredentials,
};

/// What the terminal keeps between step 2 and step 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingLookup {
    pub request: AuthRequest,
    pub m4: Block128,
    pub m5: Block128,
}

/// Step 1: build `AuthRequest{m3, mac, n_a}`.
pub fn vehicle_step1(
    creds: &VehicleCredentials,
    g: &GroupKey,
    prng: PrngState,
) -> Result<(AuthRequest, PrngState, HandshakeTrace), ProtocolError> {
    let (n_a, prng) = next_nonce(prng)?;
    let (req, trace) = vehicle_step1_with_nonce(creds, g, n_a);
    Ok((req, prng, trace))
}

/// Step 1 with the nonce supplied by the caller.
pub fn vehicle_step1_with_nonce(
    creds: &VehicleCredentials,
    g: &GroupKey,
    n_a: crate::crypto::Nonce128,
) -> (AuthRequest, HandshakeTrace) {
    let m1 = encrypt_block(&creds.id_a, &creds.k_a);
    let m2 = xor_blocks(&m1, &n_a.as_block());
    let m3 = encrypt_block(&m2, &g.0);
    let mac = compute_mac(&creds.k_a, &concat(&m3.0, &n_a.0)).expect("32-byte MAC input");
    let trace = HandshakeTrace {
        m1: Some(m1),
        m2: Some(m2),
        m3: Some(m3),
        n_a: Some(n_a),
        ..Default::default()
    };
    (AuthRequest { m3, mac, n_a }, trace)
}

/// Step 2: strip the group layer and the nonce to recover the lookup key.
pub fn terminal_step2(req: &AuthRequest, g: &GroupKey) -> (super::LookupRequest, PendingLookup) {
    let m4 = decrypt_block(&req.m3, &g.0);
    let m5 = xor_blocks(&m4, &req.n_a.as_block());
    (
        super::LookupRequest { m5, n_a: req.n_a },
        PendingLookup {
            request: *req,
            m4,
            m5,
        },
    )
}

/// Step 4. Verifies the step-1 MAC with the `k_a` the server just released,
/// then encrypts `t1 ⊕ N_t` under `k_a` and `k_g`.
pub fn terminal_step4(
    k_a: &Key256,
    pending: &PendingLookup,
    g: &GroupKey,
    clock: Timestamp,
    prng: PrngState,
) -> Result<(StartCharge, PrngState, HandshakeTrace), ProtocolError> {
    let req = &pending.request;
    if !verify_mac(k_a, &concat(&req.m3.0, &req.n_a.0), &req.mac) {
        return Err(ProtocolError::Failed(FailureReason::MacInvalid));
    }
    let t1 = clock;
    let (n_t, prng) = next_nonce(prng)?;
    let m6 = xor_blocks(&t1.to_block(), &n_t.as_block());
    let m7 = encrypt_block(&m6, k_a);
    let m8 = encrypt_block(&m7, &g.0);
    let mac = compute_mac(k_a, &concat(&m8.0, &n_t.0))?;
    let trace = HandshakeTrace {
        m4: Some(pending.m4),
        m5: Some(pending.m5),
        m6: Some(m6),
        m7: Some(m7),
        m8: Some(m8),
        n_t: Some(n_t),
        t1: Some(t1),
        ..Default::default()
    };
    Ok((StartCharge { m8, mac, n_t }, prng, trace))
}

/// Step 5: authenticate the start message and recover `t2`.
pub fn vehicle_step5(
    msg: &StartCharge,
    creds: &VehicleCredentials,
    g: &GroupKey,
) -> Result<(Timestamp, HandshakeTrace), ProtocolError> {
    if !verify_mac(&creds.k_a, &concat(&msg.m8.0, &msg.n_t.0), &msg.mac) {
        return Err(ProtocolError::Failed(FailureReason::MacInvalid));
    }
    let m9 = decrypt_block(&msg.m8, &g.0);
    let m10 = decrypt_block(&m9, &creds.k_a);
    let t2 = Timestamp::from_block(&xor_blocks(&m10, &msg.n_t.as_block()))
        .ok_or(ProtocolError::Failed(FailureReason::MalformedTimestamp))?;
    let trace = HandshakeTrace {
        m9: Some(m9),
        m10: Some(m10),
        n_t: Some(msg.n_t),
        t2: Some(t2),
        ..Default::default()
    };
    Ok((t2, trace))
}

/// Step 6: elapsed charge time `t4 = t3 - t2`.
pub fn vehicle_step6(t2: Timestamp, clock: Timestamp) -> Result<u64, ProtocolError> {
    clock
        .0
        .checked_sub(t2.0)
        .ok_or(ProtocolError::ClockSkew { t2, t3: clock })
}

/// Step 7: report start and end times to the server.
pub fn terminal_step7(t1: Timestamp, clock: Timestamp, id_a: Block128) -> ChargeReport {
    ChargeReport {
        id_a,
        t1,
        t5: clock,
    }
}

/// Failure branch of step 3 as seen by the terminal: the notice forwarded to
/// the vehicle carries only the reason code.
pub fn terminal_handle_rejection(reason: FailureReason) -> FailureNotice {
    FailureNotice { reason }
}
