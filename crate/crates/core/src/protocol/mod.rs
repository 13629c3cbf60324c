//! Vehicle, terminal and server protocol steps.
//!
//! [`steps`] holds the eight steps as pure functions over explicit inputs;
//! [`Vehicle`] and [`Terminal`] wrap them in state machines that enforce the
//! legal [`SessionPhase`] transitions.

mod agents;
mod phase;
pub mod steps;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::crypto::{Block128, CryptoError, Key256, Nonce128};

pub use agents::{ChargePlan, EndTrigger, Terminal, TerminalAction, Vehicle};
pub use phase::SessionPhase;
pub use wire::{
    AuthRequest, ChargeReport, FailureNotice, FailureReason, LookupReply, LookupRequest,
    StartCharge, Variant, WireError, WireMessage,
};

/// Milliseconds since the simulation epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    /// Left-pad to a block: 8 zero bytes then the big-endian value.
    pub fn to_block(self) -> Block128 {
        let mut b = [0u8; 16];
        b[8..].copy_from_slice(&self.0.to_be_bytes());
        Block128(b)
    }

    /// Inverse of [`to_block`](Self::to_block); nonzero padding means the
    /// block was tampered with or decrypted under the wrong key.
    pub fn from_block(block: &Block128) -> Option<Timestamp> {
        if block.0[..8].iter().any(|&b| b != 0) {
            return None;
        }
        Some(Timestamp(u64::from_be_bytes(
            block.0[8..].try_into().expect("8 bytes"),
        )))
    }

    pub fn saturating_add(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Secrets provisioned on a vehicle.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleCredentials {
    pub id_a: Block128,
    pub k_a: Key256,
}

impl std::fmt::Debug for VehicleCredentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VehicleCredentials")
            .field("id_a", &self.id_a)
            .finish_non_exhaustive()
    }
}

/// Group secret shared by every enrolled vehicle and terminal.
#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupKey(pub Key256);

impl std::fmt::Debug for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GroupKey(..)")
    }
}

/// Intermediate values of one handshake, filled in as each side computes
/// them. Vehicle and terminal each hold a partial trace; [`merge`](Self::merge)
/// joins them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeTrace {
    pub m1: Option<Block128>,
    pub m2: Option<Block128>,
    pub m3: Option<Block128>,
    pub m4: Option<Block128>,
    pub m5: Option<Block128>,
    pub m6: Option<Block128>,
    pub m7: Option<Block128>,
    pub m8: Option<Block128>,
    pub m9: Option<Block128>,
    pub m10: Option<Block128>,
    pub n_a: Option<Nonce128>,
    pub n_t: Option<Nonce128>,
    pub t1: Option<Timestamp>,
    pub t2: Option<Timestamp>,
    pub t3: Option<Timestamp>,
    /// Elapsed charge time shown to the owner (`t3 - t2`).
    pub t4: Option<u64>,
    pub t5: Option<Timestamp>,
}

impl HandshakeTrace {
    pub fn merge(&self, other: &HandshakeTrace) -> HandshakeTrace {
        HandshakeTrace {
            m1: self.m1.or(other.m1),
            m2: self.m2.or(other.m2),
            m3: self.m3.or(other.m3),
            m4: self.m4.or(other.m4),
            m5: self.m5.or(other.m5),
            m6: self.m6.or(other.m6),
            m7: self.m7.or(other.m7),
            m8: self.m8.or(other.m8),
            m9: self.m9.or(other.m9),
            m10: self.m10.or(other.m10),
            n_a: self.n_a.or(other.n_a),
            n_t: self.n_t.or(other.n_t),
            t1: self.t1.or(other.t1),
            t2: self.t2.or(other.t2),
            t3: self.t3.or(other.t3),
            t4: self.t4.or(other.t4),
            t5: self.t5.or(other.t5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("session failed: {0}")]
    Failed(FailureReason),
    #[error("clock skew: t3 {t3} precedes t2 {t2}")]
    ClockSkew { t2: Timestamp, t3: Timestamp },
    #[error("illegal phase transition {from:?} -> {to:?}")]
    IllegalTransition {
        from: SessionPhase,
        to: SessionPhase,
    },
    #[error("message not expected in phase {0:?}")]
    UnexpectedMessage(SessionPhase),
    #[error("a session is already in progress")]
    Busy,
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn timestamp_padding() {
        let b = Timestamp(0x0102).to_block();
        assert_eq!(&b.0[..8], &[0; 8]);
        assert_eq!(&b.0[14..], &[1, 2]);
        let mut bad = b;
        bad.0[0] = 1;
        assert_eq!(Timestamp::from_block(&bad), None);
    }

    proptest! {
        #[test]
        fn timestamp_block_roundtrip(t in any::<u64>()) {
            prop_assert_eq!(Timestamp::from_block(&Timestamp(t).to_block()), Some(Timestamp(t)));
        }
    }

    #[test]
    fn credentials_debug_hides_key() {
        let creds = VehicleCredentials {
            id_a: Block128([1; 16]),
            k_a: Key256([0xcd; 32]),
        };
        assert!(!format!("{creds:?}").contains("cdcd"));
        assert!(!format!("{:?}", GroupKey(Key256([0xcd; 32]))).contains("cdcd"));
    }
}
