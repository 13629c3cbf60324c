//! Declarative scenario files: a session schedule plus an adversary script.
//!
//! One directive per line. A `#` at line start or followed by whitespace
//! begins a comment, so `#3` and `#*` stay occurrence markers. Times are
//! simulated milliseconds.
//!
//! ```text
//! terminals N                                   number of charging terminals (default 1)
//! vehicles N                                    fleet size (default: highest index used + 1)
//! clone vehicle J of I                          J carries a copy of I's id and key, unregistered
//! spoof vehicle J of I                          J carries I's id with a fresh, unregistered key
//! timeout MS                                    vehicle gives up waiting after MS (default 10000)
//! session at MS vehicle I terminal J [duration MS] [budget N]
//! unplug at MS terminal J                       owner pulls the cable
//! revoke at MS vehicle I                        server disables the registration
//!
//! on CHANNEL VARIANT OCC -> ACTION              fire on an observed frame
//! at MS -> ACTION                               fire at a fixed time
//!
//! CHANNEL := insecure | secure | any
//! VARIANT := auth-request | start-charge | failure-notice | lookup-request
//!          | lookup-reply | charge-report | any
//! OCC     := #N (N-th matching frame, 1-based) | #* (every matching frame)
//!
//! ACTION  := drop                                (frame triggers only)
//!          | delay MS                            (frame triggers only)
//!          | tamper INDEX (xor|set) HH           (frame triggers only)
//!          | inject HEX [to terminal J]
//!          | replay (seq N | last VARIANT | first VARIANT) [to terminal J]
//!          | forge VARIANT count N [every MS] [to terminal J]   (timed only)
//! ```
//!
//! Actions on the secure channel are parsed but never applied. Frame
//! triggers see only tag bytes and counts; the adversary holds no keys.

use crate::protocol::Variant;

use super::transcript::Channel;
use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occurrence {
    Nth(u64),
    Every,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    Frame {
        channel: Option<Channel>,
        variant: Option<Variant>,
        occurrence: Occurrence,
    },
    At(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperOp {
    Xor(u8),
    Set(u8),
}

impl TamperOp {
    pub fn apply(self, byte: u8) -> u8 {
        match self {
            TamperOp::Xor(m) => byte ^ m,
            TamperOp::Set(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayTarget {
    Seq(u64),
    Last(Variant),
    First(Variant),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Drop,
    Delay(u64),
    Tamper { index: usize, op: TamperOp },
    Inject { frame: Vec<u8>, terminal: Option<usize> },
    Replay { target: ReplayTarget, terminal: Option<usize> },
    Forge {
        variant: Variant,
        count: u64,
        every_ms: u64,
        terminal: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub trigger: Trigger,
    pub action: Action,
    /// Source line, for diagnostics.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdversaryScript {
    pub rules: Vec<Rule>,
}

impl AdversaryScript {
    pub fn passive() -> Self {
        Self::default()
    }

    pub fn with_rule(mut self, trigger: Trigger, action: Action) -> Self {
        self.rules.push(Rule {
            trigger,
            action,
            line: 0,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleEvent {
    Session {
        vehicle: usize,
        terminal: usize,
        duration_ms: Option<u64>,
        budget: Option<u64>,
    },
    Unplug { terminal: usize },
    Revoke { vehicle: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub at: u64,
    pub event: ScheduleEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    pub events: Vec<ScheduledEvent>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session(mut self, at: u64, vehicle: usize, terminal: usize, duration_ms: u64) -> Self {
        self.events.push(ScheduledEvent {
            at,
            event: ScheduleEvent::Session {
                vehicle,
                terminal,
                duration_ms: Some(duration_ms),
                budget: None,
            },
        });
        self
    }

    pub fn push(mut self, at: u64, event: ScheduleEvent) -> Self {
        self.events.push(ScheduledEvent { at, event });
        self
    }
}

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

/// A vehicle provisioned from another vehicle's secrets instead of being
/// registered itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CloneSpec {
    pub vehicle: usize,
    pub source: usize,
    /// Copy the key as well as the id.
    pub with_key: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub terminals: usize,
    pub vehicles: Option<usize>,
    pub clones: Vec<CloneSpec>,
    pub vehicle_timeout_ms: u64,
    pub schedule: Schedule,
    pub script: AdversaryScript,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            terminals: 1,
            vehicles: None,
            clones: Vec::new(),
            vehicle_timeout_ms: DEFAULT_TIMEOUT_MS,
            schedule: Schedule::default(),
            script: AdversaryScript::default(),
        }
    }
}

struct Tokens<'a> {
    words: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn err(&self, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Script {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ScenarioError> {
        self.words
            .next()
            .ok_or_else(|| self.err(format!("expected {what}")))
    }

    fn expect(&mut self, word: &str) -> Result<(), ScenarioError> {
        let got = self.next(word)?;
        if got != word {
            return Err(self.err(format!("expected `{word}`, found `{got}`")));
        }
        Ok(())
    }

    fn number(&mut self, what: &str) -> Result<u64, ScenarioError> {
        let w = self.next(what)?;
        w.parse()
            .map_err(|_| self.err(format!("{what}: `{w}` is not a non-negative integer")))
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.words.peek() == Some(&word) {
            self.words.next();
            true
        } else {
            false
        }
    }

    fn variant(&mut self) -> Result<Variant, ScenarioError> {
        let w = self.next("message variant")?;
        Variant::from_name(w).ok_or_else(|| self.err(format!("unknown variant `{w}`")))
    }

    fn finish(&mut self) -> Result<(), ScenarioError> {
        match self.words.next() {
            None => Ok(()),
            Some(w) => Err(self.err(format!("unexpected `{w}`"))),
        }
    }

    fn target_terminal(&mut self) -> Result<Option<usize>, ScenarioError> {
        if self.eat("to") {
            self.expect("terminal")?;
            Ok(Some(self.number("terminal index")? as usize))
        } else {
            Ok(None)
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let content = strip_comment(raw);
            let mut t = Tokens {
                words: content.split_whitespace().peekable(),
                line: i + 1,
            };
            let Some(head) = t.words.next() else { continue };
            match head {
                "terminals" => {
                    let n = t.number("terminal count")?;
                    if n == 0 {
                        return Err(t.err("need at least one terminal"));
                    }
                    sc.terminals = n as usize;
                    t.finish()?;
                }
                "vehicles" => {
                    sc.vehicles = Some(t.number("vehicle count")? as usize);
                    t.finish()?;
                }
                "clone" | "spoof" => {
                    t.expect("vehicle")?;
                    let vehicle = t.number("vehicle index")? as usize;
                    t.expect("of")?;
                    let source = t.number("vehicle index")? as usize;
                    t.finish()?;
                    if vehicle == source {
                        return Err(t.err("a vehicle cannot clone itself"));
                    }
                    if sc.clones.iter().any(|c| c.vehicle == vehicle || c.vehicle == source) {
                        return Err(t.err(format!("vehicle {vehicle} or {source} is already a clone")));
                    }
                    sc.clones.push(CloneSpec {
                        vehicle,
                        source,
                        with_key: head == "clone",
                    });
                }
                "timeout" => {
                    sc.vehicle_timeout_ms = t.number("timeout")?;
                    t.finish()?;
                }
                "session" => {
                    t.expect("at")?;
                    let at = t.number("time")?;
                    t.expect("vehicle")?;
                    let vehicle = t.number("vehicle index")? as usize;
                    t.expect("terminal")?;
                    let terminal = t.number("terminal index")? as usize;
                    let mut duration_ms = None;
                    let mut budget = None;
                    while let Some(w) = t.words.next() {
                        match w {
                            "duration" => duration_ms = Some(t.number("duration")?),
                            "budget" => budget = Some(t.number("budget")?),
                            other => return Err(t.err(format!("unexpected `{other}`"))),
                        }
                    }
                    sc.schedule.events.push(ScheduledEvent {
                        at,
                        event: ScheduleEvent::Session {
                            vehicle,
                            terminal,
                            duration_ms,
                            budget,
                        },
                    });
                }
                "unplug" => {
                    t.expect("at")?;
                    let at = t.number("time")?;
                    t.expect("terminal")?;
                    let terminal = t.number("terminal index")? as usize;
                    t.finish()?;
                    sc.schedule.events.push(ScheduledEvent {
                        at,
                        event: ScheduleEvent::Unplug { terminal },
                    });
                }
                "revoke" => {
                    t.expect("at")?;
                    let at = t.number("time")?;
                    t.expect("vehicle")?;
                    let vehicle = t.number("vehicle index")? as usize;
                    t.finish()?;
                    sc.schedule.events.push(ScheduledEvent {
                        at,
                        event: ScheduleEvent::Revoke { vehicle },
                    });
                }
                "on" => {
                    let channel = match t.next("channel")? {
                        "insecure" => Some(Channel::Insecure),
                        "secure" => Some(Channel::Secure),
                        "any" => None,
                        other => return Err(t.err(format!("unknown channel `{other}`"))),
                    };
                    let variant = if t.eat("any") { None } else { Some(t.variant()?) };
                    let occ = t.next("occurrence")?;
                    let occurrence = match occ.strip_prefix('#') {
                        Some("*") => Occurrence::Every,
                        Some(n) => match n.parse::<u64>() {
                            Ok(n) if n >= 1 => Occurrence::Nth(n),
                            _ => return Err(t.err(format!("bad occurrence `{occ}`"))),
                        },
                        None => return Err(t.err(format!("bad occurrence `{occ}`"))),
                    };
                    t.expect("->")?;
                    let action = parse_action(&mut t, false)?;
                    sc.script.rules.push(Rule {
                        trigger: Trigger::Frame {
                            channel,
                            variant,
                            occurrence,
                        },
                        action,
                        line: i + 1,
                    });
                }
                "at" => {
                    let at = t.number("time")?;
                    t.expect("->")?;
                    let action = parse_action(&mut t, true)?;
                    sc.script.rules.push(Rule {
                        trigger: Trigger::At(at),
                        action,
                        line: i + 1,
                    });
                }
                other => return Err(t.err(format!("unknown directive `{other}`"))),
            }
        }
        Ok(sc)
    }

    /// Fleet size implied by the schedule, the clone list and `vehicles`.
    pub fn vehicle_count(&self) -> usize {
        let scheduled = self.schedule.events.iter().map(|e| match e.event {
            ScheduleEvent::Session { vehicle, .. } | ScheduleEvent::Revoke { vehicle } => vehicle + 1,
            ScheduleEvent::Unplug { .. } => 0,
        });
        let cloned = self.clones.iter().map(|c| c.vehicle.max(c.source) + 1);
        scheduled
            .chain(cloned)
            .chain(self.vehicles)
            .max()
            .unwrap_or(0)
    }

    pub fn clone_of(&self, vehicle: usize) -> Option<CloneSpec> {
        self.clones.iter().copied().find(|c| c.vehicle == vehicle)
    }
}

/// `#` opens a comment at line start or when followed by whitespace, so
/// occurrence markers like `#2` survive.
fn strip_comment(line: &str) -> &str {
    if line.trim_start().starts_with('#') {
        return "";
    }
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && bytes.get(i + 1).map_or(true, |c| c.is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn parse_action(t: &mut Tokens<'_>, timed: bool) -> Result<Action, ScenarioError> {
    let word = t.next("action")?;
    let action = match word {
        "drop" | "delay" | "tamper" if timed => {
            return Err(t.err(format!("`{word}` needs a frame trigger")))
        }
        "drop" => Action::Drop,
        "delay" => Action::Delay(t.number("delay")?),
        "tamper" => {
            let index = t.number("byte index")? as usize;
            let op = t.next("xor|set")?;
            let hx = t.next("byte value")?;
            let v = u8::from_str_radix(hx, 16)
                .map_err(|_| t.err(format!("`{hx}` is not a hex byte")))?;
            let op = match op {
                "xor" => TamperOp::Xor(v),
                "set" => TamperOp::Set(v),
                other => return Err(t.err(format!("unknown tamper op `{other}`"))),
            };
            Action::Tamper { index, op }
        }
        "inject" => {
            let hx = t.next("frame hex")?;
            let frame = hex::decode(hx).map_err(|e| t.err(format!("frame hex: {e}")))?;
            if frame.is_empty() {
                return Err(t.err("empty frame"));
            }
            Action::Inject {
                frame,
                terminal: t.target_terminal()?,
            }
        }
        "replay" => {
            let target = match t.next("seq|last|first")? {
                "seq" => ReplayTarget::Seq(t.number("sequence number")?),
                "last" => ReplayTarget::Last(t.variant()?),
                "first" => ReplayTarget::First(t.variant()?),
                other => return Err(t.err(format!("unknown replay target `{other}`"))),
            };
            Action::Replay {
                target,
                terminal: t.target_terminal()?,
            }
        }
        "forge" => {
            if !timed {
                return Err(t.err("`forge` needs a timed trigger"));
            }
            let variant = t.variant()?;
            t.expect("count")?;
            let count = t.number("count")?;
            let every_ms = if t.eat("every") { t.number("interval")? } else { 0 };
            Action::Forge {
                variant,
                count,
                every_ms,
                terminal: t.target_terminal()?,
            }
        }
        other => return Err(t.err(format!("unknown action `{other}`"))),
    };
    t.finish()?;
    Ok(action)
}
