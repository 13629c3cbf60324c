use serde::{Deserialize, Serialize};

use crate::protocol::{Timestamp, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Insecure,
    Secure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    VehicleToTerminal,
    TerminalToVehicle,
    TerminalToServer,
    ServerToTerminal,
}

impl Direction {
    pub fn channel(self) -> Channel {
        match self {
            Direction::VehicleToTerminal | Direction::TerminalToVehicle => Channel::Insecure,
            Direction::TerminalToServer | Direction::ServerToTerminal => Channel::Secure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryAction {
    None,
    Dropped,
    Delayed { until: Timestamp },
    Tampered { byte_index: usize, old: u8, new: u8 },
    Injected,
    Replayed { of_seq: u64 },
}

/// One frame as it crossed a channel. `frame` is the exact encoding the
/// sender emitted; for tampered entries the receiver saw it with
/// `byte_index` rewritten.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub time: Timestamp,
    pub channel: Channel,
    pub direction: Direction,
    pub terminal: usize,
    #[serde(with = "hex::serde")]
    pub frame: Vec<u8>,
    pub adversary_action: AdversaryAction,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub redacted: bool,
}

impl TranscriptEntry {
    pub fn variant(&self) -> Option<Variant> {
        self.frame.first().and_then(|&t| Variant::from_tag(t))
    }

    /// Bytes the receiver actually got.
    pub fn delivered_frame(&self) -> Vec<u8> {
        let mut f = self.frame.clone();
        if let AdversaryAction::Tampered { byte_index, new, .. } = self.adversary_action {
            f[byte_index] = new;
        }
        f
    }
}

/// Append-only log of every frame sent during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

// k_a occupies bytes 18..50 of an accepted lookup reply
const REPLY_KEY_RANGE: std::ops::Range<usize> = 18..50;

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, seq: u64) -> Option<&TranscriptEntry> {
        // seq numbers start at 1 and are dense
        seq.checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
    }

    pub(crate) fn push(
        &mut self,
        time: Timestamp,
        direction: Direction,
        terminal: usize,
        frame: Vec<u8>,
        adversary_action: AdversaryAction,
    ) -> u64 {
        let seq = self.entries.len() as u64 + 1;
        self.entries.push(TranscriptEntry {
            seq,
            time,
            channel: direction.channel(),
            direction,
            terminal,
            frame,
            adversary_action,
            redacted: false,
        });
        seq
    }

    pub fn insecure(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries
            .iter()
            .filter(|e| e.channel == Channel::Insecure)
    }

    /// Every frame variant the adversary could observe, in order.
    pub fn last_insecure(&self, variant: Variant) -> Option<&TranscriptEntry> {
        self.insecure().filter(|e| e.variant() == Some(variant)).last()
    }

    pub fn first_insecure(&self, variant: Variant) -> Option<&TranscriptEntry> {
        self.insecure().find(|e| e.variant() == Some(variant))
    }

    /// Copy with the vehicle key blanked out of accepted lookup replies.
    /// Secure-line frames are otherwise left intact.
    pub fn redacted(&self) -> Transcript {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if e.channel == Channel::Secure
                    && e.variant() == Some(Variant::LookupReply)
                    && e.frame.len() == 50
                    && e.frame[1] == 0x00
                {
                    e.frame[REPLY_KEY_RANGE].fill(0);
                    e.redacted = true;
                }
                e
            })
            .collect();
        Transcript { entries }
    }

    /// JSON Lines export, one entry per line, keys redacted.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.redacted().entries {
            out.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    /// True if `needle` occurs contiguously in any insecure-channel frame,
    /// as sent or as delivered.
    pub fn insecure_contains(&self, needle: &[u8]) -> bool {
        self.insecure().any(|e| {
            contains(&e.frame, needle) || contains(&e.delivered_frame(), needle)
        })
    }
}

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redaction_blanks_only_the_key() {
        let mut t = Transcript::new();
        let mut frame = vec![0x03, 0x00];
        frame.extend([0x11; 16]);
        frame.extend([0x22; 32]);
        t.push(Timestamp(0), Direction::ServerToTerminal, 0, frame, AdversaryAction::None);
        let line = t.to_jsonl();
        assert!(!line.contains(&"22".repeat(32)));
        assert!(line.contains(&"11".repeat(16)));
        assert!(line.contains("\"redacted\":true"));
        // in-memory transcript keeps the exact bytes
        assert!(contains(&t.entries()[0].frame, &[0x22; 32]));
    }

    #[test]
    fn delivered_frame_applies_tamper() {
        let mut t = Transcript::new();
        t.push(
            Timestamp(0),
            Direction::VehicleToTerminal,
            0,
            vec![1, 2, 3],
            AdversaryAction::Tampered {
                byte_index: 1,
                old: 2,
                new: 9,
            },
        );
        assert_eq!(t.entries()[0].delivered_frame(), vec![1, 9, 3]);
        assert!(t.insecure_contains(&[9, 3]));
        assert_eq!(t.get(1).unwrap().seq, 1);
        assert!(t.get(0).is_none());
    }
}
