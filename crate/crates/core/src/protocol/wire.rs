//! Tagged binary frames for every message the agents exchange.
//!
//! Layout: one tag byte followed by fixed-width fields in declaration order.
//! Timestamps are big-endian `u64` milliseconds; blocks, keys, nonces and tags
//! are raw bytes.
//!
//! | tag  | message        | body                                         | len |
//! |------|----------------|----------------------------------------------|-----|
//! | 0x01 | AuthRequest    | m3[16] mac[32] n_a[16]                       | 65  |
//! | 0x02 | LookupRequest  | m5[16] n_a[16]                               | 33  |
//! | 0x03 | LookupReply    | 0x00 id_a[16] k_a[32] / 0x01 reason[1]       | 50/3|
//! | 0x04 | StartCharge    | m8[16] mac[32] n_t[16]                       | 65  |
//! | 0x05 | ChargeReport   | id_a[16] t1[8] t5[8]                         | 33  |
//! | 0x06 | FailureNotice  | reason[1]                                    | 2   |

use std::fmt;

use serde::{Deserialize, Serialize};

use super::Timestamp;
use crate::crypto::{Block128, Key256, MacTag, Nonce128};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("empty frame")]
    Empty,
    #[error("unknown frame tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("frame 0x{tag:02x} has length {got}, expected {expected}")]
    Length { tag: u8, expected: usize, got: usize },
    #[error("unknown reason code {0}")]
    UnknownReason(u8),
    #[error("unknown lookup reply status {0}")]
    UnknownStatus(u8),
}

/// Why a session did not complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    UnknownVehicle,
    ReplayDetected,
    MacInvalid,
    MalformedTimestamp,
    Timeout,
    ServerError,
}

impl FailureReason {
    pub fn code(self) -> u8 {
        match self {
            FailureReason::UnknownVehicle => 1,
            FailureReason::ReplayDetected => 2,
            FailureReason::MacInvalid => 3,
            FailureReason::MalformedTimestamp => 4,
            FailureReason::Timeout => 5,
            FailureReason::ServerError => 6,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, WireError> {
        Ok(match code {
            1 => FailureReason::UnknownVehicle,
            2 => FailureReason::ReplayDetected,
            3 => FailureReason::MacInvalid,
            4 => FailureReason::MalformedTimestamp,
            5 => FailureReason::Timeout,
            6 => FailureReason::ServerError,
            other => return Err(WireError::UnknownReason(other)),
        })
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthRequest {
    pub m3: Block128,
    pub mac: MacTag,
    pub n_a: Nonce128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupRequest {
    pub m5: Block128,
    pub n_a: Nonce128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupReply {
    Accepted { id_a: Block128, k_a: Key256 },
    Rejected { reason: FailureReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartCharge {
    pub m8: Block128,
    pub mac: MacTag,
    pub n_t: Nonce128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeReport {
    pub id_a: Block128,
    pub t1: Timestamp,
    pub t5: Timestamp,
}

/// Plain, unauthenticated failure notice from terminal to vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureNotice {
    pub reason: FailureReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireMessage {
    AuthRequest(AuthRequest),
    LookupRequest(LookupRequest),
    LookupReply(LookupReply),
    StartCharge(StartCharge),
    ChargeReport(ChargeReport),
    FailureNotice(FailureNotice),
}

/// Message kind without payload, used by adversary triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    AuthRequest,
    LookupRequest,
    LookupReply,
    StartCharge,
    ChargeReport,
    FailureNotice,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::AuthRequest,
        Variant::LookupRequest,
        Variant::LookupReply,
        Variant::StartCharge,
        Variant::ChargeReport,
        Variant::FailureNotice,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Variant::AuthRequest => 0x01,
            Variant::LookupRequest => 0x02,
            Variant::LookupReply => 0x03,
            Variant::StartCharge => 0x04,
            Variant::ChargeReport => 0x05,
            Variant::FailureNotice => 0x06,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.tag() == tag)
    }

    /// Kebab-case name used by scenario scripts.
    pub fn name(self) -> &'static str {
        match self {
            Variant::AuthRequest => "auth-request",
            Variant::LookupRequest => "lookup-request",
            Variant::LookupReply => "lookup-reply",
            Variant::StartCharge => "start-charge",
            Variant::ChargeReport => "charge-report",
            Variant::FailureNotice => "failure-notice",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }
}

pub const AUTH_REQUEST_LEN: usize = 65;
pub const START_CHARGE_LEN: usize = 65;

fn expect_len(frame: &[u8], expected: usize) -> Result<(), WireError> {
    if frame.len() != expected {
        return Err(WireError::Length {
            tag: frame[0],
            expected,
            got: frame.len(),
        });
    }
    Ok(())
}

fn arr<const N: usize>(bytes: &[u8]) -> [u8; N] {
    bytes.try_into().expect("length checked by caller")
}

impl WireMessage {
    pub fn variant(&self) -> Variant {
        match self {
            WireMessage::AuthRequest(_) => Variant::AuthRequest,
            WireMessage::LookupRequest(_) => Variant::LookupRequest,
            WireMessage::LookupReply(_) => Variant::LookupReply,
            WireMessage::StartCharge(_) => Variant::StartCharge,
            WireMessage::ChargeReport(_) => Variant::ChargeReport,
            WireMessage::FailureNotice(_) => Variant::FailureNotice,
        }
    }

    /// Only these two ever travel vehicle↔terminal, plus the failure notice.
    pub fn is_insecure_variant(&self) -> bool {
        matches!(
            self,
            WireMessage::AuthRequest(_) | WireMessage::StartCharge(_) | WireMessage::FailureNotice(_)
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.variant().tag()];
        match self {
            WireMessage::AuthRequest(m) => {
                out.extend_from_slice(&m.m3.0);
                out.extend_from_slice(&m.mac.0);
                out.extend_from_slice(&m.n_a.0);
            }
            WireMessage::LookupRequest(m) => {
                out.extend_from_slice(&m.m5.0);
                out.extend_from_slice(&m.n_a.0);
            }
            WireMessage::LookupReply(LookupReply::Accepted { id_a, k_a }) => {
                out.push(0x00);
                out.extend_from_slice(&id_a.0);
                out.extend_from_slice(&k_a.0);
            }
            WireMessage::LookupReply(LookupReply::Rejected { reason }) => {
                out.push(0x01);
                out.push(reason.code());
            }
            WireMessage::StartCharge(m) => {
                out.extend_from_slice(&m.m8.0);
                out.extend_from_slice(&m.mac.0);
                out.extend_from_slice(&m.n_t.0);
            }
            WireMessage::ChargeReport(m) => {
                out.extend_from_slice(&m.id_a.0);
                out.extend_from_slice(&m.t1.0.to_be_bytes());
                out.extend_from_slice(&m.t5.0.to_be_bytes());
            }
            WireMessage::FailureNotice(m) => out.push(m.reason.code()),
        }
        out
    }

    pub fn decode(frame: &[u8]) -> Result<WireMessage, WireError> {
        let (&tag, body) = frame.split_first().ok_or(WireError::Empty)?;
        let variant = Variant::from_tag(tag).ok_or(WireError::UnknownTag(tag))?;
        Ok(match variant {
            Variant::AuthRequest => {
                expect_len(frame, AUTH_REQUEST_LEN)?;
                WireMessage::AuthRequest(AuthRequest {
                    m3: Block128(arr(&body[..16])),
                    mac: MacTag(arr(&body[16..48])),
                    n_a: Nonce128(arr(&body[48..64])),
                })
            }
            Variant::LookupRequest => {
                expect_len(frame, 33)?;
                WireMessage::LookupRequest(LookupRequest {
                    m5: Block128(arr(&body[..16])),
                    n_a: Nonce128(arr(&body[16..32])),
                })
            }
            Variant::LookupReply => match body.first() {
                Some(0x00) => {
                    expect_len(frame, 50)?;
                    WireMessage::LookupReply(LookupReply::Accepted {
                        id_a: Block128(arr(&body[1..17])),
                        k_a: Key256(arr(&body[17..49])),
                    })
                }
                Some(0x01) => {
                    expect_len(frame, 3)?;
                    WireMessage::LookupReply(LookupReply::Rejected {
                        reason: FailureReason::from_code(body[1])?,
                    })
                }
                Some(&other) => return Err(WireError::UnknownStatus(other)),
                None => {
                    return Err(WireError::Length {
                        tag,
                        expected: 3,
                        got: 1,
                    })
                }
            },
            Variant::StartCharge => {
                expect_len(frame, START_CHARGE_LEN)?;
                WireMessage::StartCharge(StartCharge {
                    m8: Block128(arr(&body[..16])),
                    mac: MacTag(arr(&body[16..48])),
                    n_t: Nonce128(arr(&body[48..64])),
                })
            }
            Variant::ChargeReport => {
                expect_len(frame, 33)?;
                WireMessage::ChargeReport(ChargeReport {
                    id_a: Block128(arr(&body[..16])),
                    t1: Timestamp(u64::from_be_bytes(arr(&body[16..24]))),
                    t5: Timestamp(u64::from_be_bytes(arr(&body[24..32]))),
                })
            }
            Variant::FailureNotice => {
                expect_len(frame, 2)?;
                WireMessage::FailureNotice(FailureNotice {
                    reason: FailureReason::from_code(body[0])?,
                })
            }
        })
    }
}
