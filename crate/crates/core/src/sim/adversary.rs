use crate::crypto::PrngState;
use crate::protocol::{Timestamp, Variant};

use super::script::{Action, AdversaryScript, Occurrence, ReplayTarget, Trigger};
use super::transcript::{AdversaryAction, Channel, Direction, Transcript};
use super::ScenarioError;

/// A frame on its way to a receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub seq: u64,
    pub at: Timestamp,
    pub direction: Direction,
    pub terminal: usize,
    /// Bytes the receiver will see.
    pub frame: Vec<u8>,
}

/// Direction an injected frame travels, judged from its tag byte.
pub(crate) fn injected_direction(frame: &[u8], default: Direction) -> Direction {
    match frame.first().and_then(|&t| Variant::from_tag(t)) {
        Some(Variant::AuthRequest) => Direction::VehicleToTerminal,
        Some(Variant::StartCharge) | Some(Variant::FailureNotice) => Direction::TerminalToVehicle,
        _ => default,
    }
}

/// Dolev-Yao adversary driven by a script. It sees frame bytes, can use the
/// public primitives and its own generator, and holds no protocol secrets.
#[derive(Debug, Clone)]
pub struct Adversary {
    script: AdversaryScript,
    counters: Vec<u64>,
    pub(crate) prng: PrngState,
}

impl Adversary {
    pub fn new(script: AdversaryScript, prng: PrngState) -> Self {
        let counters = vec![0; script.rules.len()];
        Self {
            script,
            counters,
            prng,
        }
    }

    pub fn script(&self) -> &AdversaryScript {
        &self.script
    }

    /// Send `frame` over a channel, letting the script act on insecure
    /// traffic. Every frame (original and adversarial) is appended to the
    /// transcript; the returned deliveries are what receivers will get.
    pub fn deliver(
        &mut self,
        transcript: &mut Transcript,
        now: Timestamp,
        direction: Direction,
        terminal: usize,
        frame: Vec<u8>,
    ) -> Result<Vec<Delivery>, ScenarioError> {
        let channel = direction.channel();
        if channel == Channel::Secure {
            let seq = transcript.push(now, direction, terminal, frame.clone(), AdversaryAction::None);
            return Ok(vec![Delivery {
                seq,
                at: now,
                direction,
                terminal,
                frame,
            }]);
        }

        let observed = frame.first().and_then(|&t| Variant::from_tag(t));
        let mut chosen = None;
        for (i, rule) in self.script.rules.iter().enumerate() {
            let Trigger::Frame {
                channel: want_channel,
                variant,
                occurrence,
            } = &rule.trigger
            else {
                continue;
            };
            if want_channel.is_some_and(|c| c != channel) {
                continue;
            }
            if variant.is_some() && *variant != observed {
                continue;
            }
            self.counters[i] += 1;
            let fires = match occurrence {
                Occurrence::Every => true,
                Occurrence::Nth(n) => self.counters[i] == *n,
            };
            if fires && chosen.is_none() {
                chosen = Some(i);
            }
        }

        let Some(rule_idx) = chosen else {
            let seq = transcript.push(now, direction, terminal, frame.clone(), AdversaryAction::None);
            return Ok(vec![Delivery {
                seq,
                at: now,
                direction,
                terminal,
                frame,
            }]);
        };
        let action = self.script.rules[rule_idx].action.clone();
        let line = self.script.rules[rule_idx].line;
        let mut out = Vec::new();
        match action {
            Action::Drop => {
                transcript.push(now, direction, terminal, frame, AdversaryAction::Dropped);
            }
            Action::Delay(ms) => {
                let until = now.saturating_add(ms);
                let seq = transcript.push(
                    now,
                    direction,
                    terminal,
                    frame.clone(),
                    AdversaryAction::Delayed { until },
                );
                out.push(Delivery {
                    seq,
                    at: until,
                    direction,
                    terminal,
                    frame,
                });
            }
            Action::Tamper { index, op } => {
                if index < frame.len() {
                    let old = frame[index];
                    let new = op.apply(old);
                    let seq = transcript.push(
                        now,
                        direction,
                        terminal,
                        frame.clone(),
                        AdversaryAction::Tampered {
                            byte_index: index,
                            old,
                            new,
                        },
                    );
                    let mut delivered = frame;
                    delivered[index] = new;
                    out.push(Delivery {
                        seq,
                        at: now,
                        direction,
                        terminal,
                        frame: delivered,
                    });
                } else {
                    let seq =
                        transcript.push(now, direction, terminal, frame.clone(), AdversaryAction::None);
                    out.push(Delivery {
                        seq,
                        at: now,
                        direction,
                        terminal,
                        frame,
                    });
                }
            }
            Action::Inject {
                frame: extra,
                terminal: to,
            } => {
                let seq = transcript.push(now, direction, terminal, frame.clone(), AdversaryAction::None);
                out.push(Delivery {
                    seq,
                    at: now,
                    direction,
                    terminal,
                    frame,
                });
                out.push(self.inject(transcript, now, extra, to.unwrap_or(terminal), direction));
            }
            Action::Replay {
                target,
                terminal: to,
            } => {
                // resolve before recording the trigger frame so `last` means
                // the last frame seen before this one
                let replayed = self.replay(transcript, now, target, to, line)?;
                let seq = transcript.push(now, direction, terminal, frame.clone(), AdversaryAction::None);
                out.push(Delivery {
                    seq,
                    at: now,
                    direction,
                    terminal,
                    frame,
                });
                out.push(replayed);
            }
            Action::Forge { .. } => {
                return Err(ScenarioError::Script {
                    line,
                    msg: "forge needs a timed trigger".into(),
                })
            }
        }
        Ok(out)
    }

    pub(crate) fn inject(
        &mut self,
        transcript: &mut Transcript,
        now: Timestamp,
        frame: Vec<u8>,
        terminal: usize,
        default: Direction,
    ) -> Delivery {
        let direction = injected_direction(&frame, default);
        let seq = transcript.push(now, direction, terminal, frame.clone(), AdversaryAction::Injected);
        Delivery {
            seq,
            at: now,
            direction,
            terminal,
            frame,
        }
    }

    /// Re-send a recorded insecure frame. Secure-line frames are invisible
    /// to the adversary and cannot be replayed.
    pub(crate) fn replay(
        &mut self,
        transcript: &mut Transcript,
        now: Timestamp,
        target: ReplayTarget,
        to: Option<usize>,
        line: usize,
    ) -> Result<Delivery, ScenarioError> {
        let entry = match target {
            ReplayTarget::Seq(n) => transcript.get(n),
            ReplayTarget::Last(v) => transcript.last_insecure(v),
            ReplayTarget::First(v) => transcript.first_insecure(v),
        };
        let entry = entry
            .filter(|e| e.channel == Channel::Insecure)
            .ok_or_else(|| ScenarioError::Script {
                line,
                msg: format!("replay target {target:?} has not been observed"),
            })?;
        let of_seq = entry.seq;
        let frame = entry.frame.clone();
        let direction = entry.direction;
        let terminal = to.unwrap_or(entry.terminal);
        let seq = transcript.push(
            now,
            direction,
            terminal,
            frame.clone(),
            AdversaryAction::Replayed { of_seq },
        );
        Ok(Delivery {
            seq,
            at: now,
            direction,
            terminal,
            frame,
        })
    }

    /// Random frame of the given shape, built without any key material.
    pub(crate) fn forge_frame(&mut self, variant: Variant) -> Vec<u8> {
        let len = match variant {
            Variant::AuthRequest | Variant::StartCharge => 65,
            Variant::LookupRequest | Variant::ChargeReport => 33,
            Variant::LookupReply => 50,
            Variant::FailureNotice => 2,
        };
        let mut frame = vec![0u8; len];
        frame[0] = variant.tag();
        self.prng
            .fill_bytes(&mut frame[1..])
            .expect("adversary generator seeded nonzero");
        if variant == Variant::FailureNotice {
            frame[1] = 1 + frame[1] % 6;
        }
        frame
    }
}
