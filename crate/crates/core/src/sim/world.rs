use std::collections::BTreeMap;

use serde::Serialize;

use crate::crypto::{Block128, Nonce128, PrngState};
use crate::protocol::{
    ChargePlan, ChargeReport, EndTrigger, FailureReason, HandshakeTrace, LookupReply,
    ProtocolError, SessionPhase, Terminal, TerminalAction, Timestamp, Variant, Vehicle,
    VehicleCredentials, WireMessage,
};
use crate::registry::{Invoice, Registry, Server};

use super::adversary::{Adversary, Delivery};
use super::script::{Action, Scenario, ScheduleEvent, Trigger};
use super::transcript::{Channel, Direction, Transcript};
use super::{derive_seed, ScenarioError, SimClock};

const DOMAIN_VEHICLE: u64 = 1;
const DOMAIN_TERMINAL: u64 = 2;
const DOMAIN_ADVERSARY: u64 = 3;

const MAX_EVENTS: u64 = 50_000_000;

#[derive(Debug, Clone)]
enum Event {
    StartSession {
        vehicle: usize,
        terminal: usize,
        plan: ChargePlan,
    },
    Arrive {
        delivery: Delivery,
        run: Option<usize>,
    },
    PowerCut {
        terminal: usize,
        epoch: u64,
        cause: EndTrigger,
    },
    TerminalStop {
        terminal: usize,
        epoch: u64,
        cause: EndTrigger,
    },
    Unplug {
        terminal: usize,
    },
    VehicleTimeout {
        vehicle: usize,
        session: usize,
    },
    Revoke {
        vehicle: usize,
    },
    Timed {
        rule: usize,
    },
    Forge {
        variant: Variant,
        remaining: u64,
        every_ms: u64,
        terminal: usize,
    },
}

/// Server answer to one lookup, without the released key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LookupVerdict {
    Accepted { id_a: Block128 },
    Rejected { reason: FailureReason },
}

/// Vehicle-side view of one scheduled session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionOutcome {
    pub session: usize,
    pub vehicle: usize,
    pub terminal: usize,
    pub started_at: Timestamp,
    pub phase: SessionPhase,
    /// Vehicle verified the start message and began charging.
    pub reached_charging: bool,
    pub trace: HandshakeTrace,
}

/// Terminal-side view of one authentication attempt, honest or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TerminalRun {
    pub terminal: usize,
    pub started_at: Timestamp,
    /// Transcript seq of the request frame that opened this run.
    pub request_seq: u64,
    pub n_a: Nonce128,
    pub lookup: Option<LookupVerdict>,
    pub phase: SessionPhase,
    pub energy_started: bool,
    pub end: Option<EndTrigger>,
    pub report: Option<ChargeReport>,
    pub invoice: Option<Invoice>,
    pub trace: HandshakeTrace,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub transcript: Transcript,
    pub sessions: Vec<SessionOutcome>,
    pub terminal_runs: Vec<TerminalRun>,
    pub invoices: Vec<Invoice>,
    pub registry: Registry,
    /// Non-fatal anomalies: ignored frames, busy terminals, storage errors.
    pub notes: Vec<String>,
}

impl ScenarioOutcome {
    pub fn accepted_lookups(&self) -> usize {
        self.terminal_runs
            .iter()
            .filter(|r| matches!(r.lookup, Some(LookupVerdict::Accepted { .. })))
            .count()
    }

    /// First terminal run that served this session's request.
    pub fn run_for(&self, session: usize) -> Option<&TerminalRun> {
        let n_a = self.sessions.get(session)?.trace.n_a?;
        self.terminal_runs.iter().find(|r| r.n_a == n_a)
    }

    /// Vehicle and terminal traces of one session joined together.
    pub fn merged_trace(&self, session: usize) -> Option<HandshakeTrace> {
        let s = self.sessions.get(session)?;
        Some(match self.run_for(session) {
            Some(run) => s.trace.merge(&run.trace),
            None => s.trace.clone(),
        })
    }

    /// Both sides authenticated each other and energy is flowing.
    pub fn mutually_verified(&self, session: usize) -> bool {
        let Some(s) = self.sessions.get(session) else {
            return false;
        };
        s.reached_charging
            && self
                .run_for(session)
                .is_some_and(|r| r.energy_started)
    }
}

/// What one call to [`World::step`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    pub time: Timestamp,
    /// Protocol step (1..=8) this event executed, if any.
    pub protocol_step: Option<u8>,
    pub summary: String,
}

#[derive(Debug, Clone)]
struct TerminalSlot {
    agent: Terminal,
    plugged: Option<usize>,
    epoch: u64,
    run: Option<usize>,
}

/// Event loop driving every agent. Use [`run_scenario`] for whole runs or
/// [`World::step`] to interleave custom adversary actions between events.
#[derive(Debug)]
pub struct World {
    clock: SimClock,
    server: Server,
    tariff: u64,
    vehicles: Vec<Vehicle>,
    vehicle_session: Vec<Option<usize>>,
    terminals: Vec<TerminalSlot>,
    adversary: Adversary,
    queue: BTreeMap<(Timestamp, u64), Event>,
    next_id: u64,
    timeout_ms: u64,
    transcript: Transcript,
    sessions: Vec<SessionOutcome>,
    runs: Vec<TerminalRun>,
    invoices: Vec<Invoice>,
    notes: Vec<String>,
    processed: u64,
}

impl World {
    pub fn new(
        vehicles: Vec<VehicleCredentials>,
        server: Server,
        scenario: &Scenario,
        seed: u64,
    ) -> Result<World, ScenarioError> {
        let group_key = server.group_key();
        let tariff = server.tariff();
        let terminal_count = scenario.terminals;
        let check_terminal = |t: usize, what: &str| {
            if t >= terminal_count {
                Err(ScenarioError::Config(format!(
                    "{what} references terminal {t}, but only {terminal_count} exist"
                )))
            } else {
                Ok(())
            }
        };
        let vehicle_count = vehicles.len();
        let check_vehicle = |v: usize| {
            if v >= vehicle_count {
                Err(ScenarioError::Config(format!(
                    "schedule references unknown vehicle {v} ({vehicle_count} provisioned)"
                )))
            } else {
                Ok(())
            }
        };

        let mut world = World {
            clock: SimClock::default(),
            server,
            tariff,
            vehicle_session: vec![None; vehicles.len()],
            vehicles: vehicles
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    Vehicle::new(
                        c,
                        group_key,
                        PrngState::from_seed(derive_seed(seed, DOMAIN_VEHICLE, i as u64)),
                    )
                })
                .collect(),
            terminals: (0..terminal_count)
                .map(|j| TerminalSlot {
                    agent: Terminal::new(
                        group_key,
                        PrngState::from_seed(derive_seed(seed, DOMAIN_TERMINAL, j as u64)),
                    ),
                    plugged: None,
                    epoch: 0,
                    run: None,
                })
                .collect(),
            adversary: Adversary::new(
                scenario.script.clone(),
                PrngState::from_seed(derive_seed(seed, DOMAIN_ADVERSARY, 0)),
            ),
            queue: BTreeMap::new(),
            next_id: 0,
            timeout_ms: scenario.vehicle_timeout_ms,
            transcript: Transcript::new(),
            sessions: Vec::new(),
            runs: Vec::new(),
            invoices: Vec::new(),
            notes: Vec::new(),
            processed: 0,
        };

        for ev in &scenario.schedule.events {
            let at = Timestamp(ev.at);
            let event = match ev.event {
                ScheduleEvent::Session {
                    vehicle,
                    terminal,
                    duration_ms,
                    budget,
                } => {
                    check_vehicle(vehicle)?;
                    check_terminal(terminal, "session")?;
                    Event::StartSession {
                        vehicle,
                        terminal,
                        plan: ChargePlan {
                            target_ms: duration_ms,
                            budget,
                        },
                    }
                }
                ScheduleEvent::Unplug { terminal } => {
                    check_terminal(terminal, "unplug")?;
                    Event::Unplug { terminal }
                }
                ScheduleEvent::Revoke { vehicle } => {
                    check_vehicle(vehicle)?;
                    Event::Revoke { vehicle }
                }
            };
            world.enqueue(at, event);
        }
        for (i, rule) in scenario.script.rules.iter().enumerate() {
            let to = match &rule.action {
                Action::Inject { terminal, .. }
                | Action::Replay { terminal, .. }
                | Action::Forge { terminal, .. } => *terminal,
                _ => None,
            };
            if let Some(t) = to {
                check_terminal(t, &format!("script line {}", rule.line))?;
            }
            if let Trigger::At(at) = rule.trigger {
                world.enqueue(Timestamp(at), Event::Timed { rule: i });
            }
        }
        Ok(world)
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn vehicle(&self, i: usize) -> &Vehicle {
        &self.vehicles[i]
    }

    pub fn terminal(&self, j: usize) -> &Terminal {
        &self.terminals[j].agent
    }

    pub fn sessions(&self) -> &[SessionOutcome] {
        &self.sessions
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn enqueue(&mut self, at: Timestamp, event: Event) {
        let at = at.max(self.clock.now());
        self.queue.insert((at, self.next_id), event);
        self.next_id += 1;
    }

    fn note(&mut self, msg: String) {
        log::debug!("[{}] {msg}", self.clock.now());
        self.notes.push(msg);
    }

    fn send(
        &mut self,
        direction: Direction,
        terminal: usize,
        frame: Vec<u8>,
        run: Option<usize>,
    ) -> Result<(), ScenarioError> {
        let now = self.clock.now();
        let deliveries = self
            .adversary
            .deliver(&mut self.transcript, now, direction, terminal, frame)?;
        for d in deliveries {
            if d.terminal >= self.terminals.len() {
                return Err(ScenarioError::Config(format!(
                    "frame routed to missing terminal {}",
                    d.terminal
                )));
            }
            let at = d.at;
            self.enqueue(at, Event::Arrive { delivery: d, run });
        }
        Ok(())
    }

    /// Adversary sends `frame` to terminal `terminal` right now (or to the
    /// vehicle plugged there, if the tag says so).
    pub fn inject(&mut self, frame: Vec<u8>, terminal: usize) {
        let now = self.clock.now();
        let d = self.adversary.inject(
            &mut self.transcript,
            now,
            frame,
            terminal,
            Direction::VehicleToTerminal,
        );
        self.enqueue(now, Event::Arrive {
            delivery: d,
            run: None,
        });
    }

    /// Adversary re-sends transcript entry `seq`, optionally to another
    /// terminal.
    pub fn replay(&mut self, seq: u64, terminal: Option<usize>) -> Result<(), ScenarioError> {
        let now = self.clock.now();
        let d = self.adversary.replay(
            &mut self.transcript,
            now,
            super::ReplayTarget::Seq(seq),
            terminal,
            0,
        )?;
        self.enqueue(now, Event::Arrive {
            delivery: d,
            run: None,
        });
        Ok(())
    }

    /// The owner pulls the cable at terminal `terminal` right now.
    pub fn unplug(&mut self, terminal: usize) {
        let now = self.clock.now();
        self.enqueue(now, Event::Unplug { terminal });
    }

    /// Process the next event. `None` once the queue is empty.
    pub fn step(&mut self) -> Result<Option<StepReport>, ScenarioError> {
        let Some(((at, _), event)) = self.queue.pop_first() else {
            return Ok(None);
        };
        self.processed += 1;
        if self.processed > MAX_EVENTS {
            return Err(ScenarioError::Config("event budget exhausted".into()));
        }
        self.clock.advance_to(at);
        let (protocol_step, summary) = self.handle(event)?;
        Ok(Some(StepReport {
            time: self.clock.now(),
            protocol_step,
            summary,
        }))
    }

    pub fn run_to_completion(mut self) -> Result<ScenarioOutcome, ScenarioError> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    pub fn finish(self) -> ScenarioOutcome {
        ScenarioOutcome {
            transcript: self.transcript,
            sessions: self.sessions,
            terminal_runs: self.runs,
            invoices: self.invoices,
            registry: self.server.into_registry(),
            notes: self.notes,
        }
    }

    fn sync_session(&mut self, vehicle: usize) {
        if let Some(sid) = self.vehicle_session[vehicle] {
            let v = &self.vehicles[vehicle];
            let s = &mut self.sessions[sid];
            s.phase = v.phase();
            s.trace = v.trace().clone();
            if matches!(v.phase(), SessionPhase::Charging { .. }) {
                s.reached_charging = true;
            }
        }
    }

    fn sync_run(&mut self, terminal: usize, run: usize) {
        let agent = &self.terminals[terminal].agent;
        let r = &mut self.runs[run];
        r.phase = agent.phase();
        r.trace = agent.trace().clone();
    }

    /// A vehicle that gave up while its terminal still supplies energy
    /// stops drawing current; the terminal sees that as a power cut.
    fn refuse_if_charging(&mut self, vehicle: usize) {
        for j in 0..self.terminals.len() {
            let slot = &self.terminals[j];
            if slot.plugged == Some(vehicle) && slot.agent.energy_flow() {
                let epoch = slot.epoch;
                let now = self.clock.now();
                self.enqueue(now, Event::PowerCut {
                    terminal: j,
                    epoch,
                    cause: EndTrigger::VehicleRefused,
                });
            }
        }
    }

    fn handle(&mut self, event: Event) -> Result<(Option<u8>, String), ScenarioError> {
        let now = self.clock.now();
        match event {
            Event::StartSession {
                vehicle,
                terminal,
                plan,
            } => {
                for slot in &mut self.terminals {
                    if slot.plugged == Some(vehicle) {
                        slot.plugged = None;
                    }
                }
                let slot = &mut self.terminals[terminal];
                slot.plugged = Some(vehicle);
                if slot.agent.phase().is_ready() {
                    slot.agent.set_plan(plan);
                }
                let req = match self.vehicles[vehicle].start_session() {
                    Ok(req) => req,
                    Err(e) => {
                        self.note(format!("vehicle {vehicle} could not start a session: {e}"));
                        return Ok((None, "session start refused".into()));
                    }
                };
                let sid = self.sessions.len();
                self.sessions.push(SessionOutcome {
                    session: sid,
                    vehicle,
                    terminal,
                    started_at: now,
                    phase: SessionPhase::AwaitingLookup,
                    reached_charging: false,
                    trace: HandshakeTrace::default(),
                });
                self.vehicle_session[vehicle] = Some(sid);
                self.sync_session(vehicle);
                self.send(
                    Direction::VehicleToTerminal,
                    terminal,
                    WireMessage::AuthRequest(req).encode(),
                    None,
                )?;
                let deadline = now.saturating_add(self.timeout_ms);
                self.enqueue(deadline, Event::VehicleTimeout {
                    vehicle,
                    session: sid,
                });
                Ok((Some(1), format!("vehicle {vehicle} sends auth request to terminal {terminal}")))
            }
            Event::Arrive { delivery, run } => self.arrive(delivery, run),
            Event::PowerCut {
                terminal,
                epoch,
                cause,
            } => {
                let slot = &self.terminals[terminal];
                if slot.epoch != epoch || !slot.agent.energy_flow() {
                    return Ok((None, "stale power cut".into()));
                }
                let mut step = None;
                if let Some(v) = slot.plugged {
                    if matches!(self.vehicles[v].phase(), SessionPhase::Charging { .. }) {
                        match self.vehicles[v].on_power_cut(now) {
                            Ok(_) => step = Some(6),
                            Err(e) => self.note(format!("vehicle {v} step 6 failed: {e}")),
                        }
                        self.sync_session(v);
                    }
                }
                self.enqueue(now, Event::TerminalStop {
                    terminal,
                    epoch,
                    cause,
                });
                Ok((step, format!("power cut at terminal {terminal} ({cause:?})")))
            }
            Event::TerminalStop {
                terminal,
                epoch,
                cause,
            } => {
                let slot = &mut self.terminals[terminal];
                if slot.epoch != epoch {
                    return Ok((None, "stale stop".into()));
                }
                let report = match slot.agent.stop_charging(now) {
                    Ok(r) => r,
                    Err(_) => return Ok((None, "terminal not charging".into())),
                };
                let run = slot.run;
                if let Some(r) = run {
                    self.runs[r].end = Some(cause);
                    self.runs[r].report = Some(report);
                    self.sync_run(terminal, r);
                }
                self.send(
                    Direction::TerminalToServer,
                    terminal,
                    WireMessage::ChargeReport(report).encode(),
                    run,
                )?;
                Ok((Some(7), format!("terminal {terminal} reports charge")))
            }
            Event::Unplug { terminal } => {
                let epoch = self.terminals[terminal].epoch;
                self.enqueue(now, Event::PowerCut {
                    terminal,
                    epoch,
                    cause: EndTrigger::CableRemoved,
                });
                Ok((None, format!("cable removed at terminal {terminal}")))
            }
            Event::VehicleTimeout { vehicle, session } => {
                if self.vehicle_session[vehicle] == Some(session)
                    && self.vehicles[vehicle].abort(FailureReason::Timeout)
                {
                    self.sync_session(vehicle);
                    self.refuse_if_charging(vehicle);
                    return Ok((None, format!("vehicle {vehicle} timed out")));
                }
                Ok((None, "timeout not needed".into()))
            }
            Event::Revoke { vehicle } => {
                let id = self.vehicles[vehicle].id();
                if let Err(e) = self.server.revoke(&id) {
                    self.note(format!("revoke of vehicle {vehicle} failed: {e}"));
                }
                Ok((None, format!("vehicle {vehicle} revoked")))
            }
            Event::Timed { rule } => {
                let r = self.adversary.script().rules[rule].clone();
                match r.action {
                    Action::Inject { frame, terminal } => {
                        self.inject(frame, terminal.unwrap_or(0));
                    }
                    Action::Replay { target, terminal } => {
                        let d = self.adversary.replay(
                            &mut self.transcript,
                            now,
                            target,
                            terminal,
                            r.line,
                        )?;
                        self.enqueue(now, Event::Arrive {
                            delivery: d,
                            run: None,
                        });
                    }
                    Action::Forge {
                        variant,
                        count,
                        every_ms,
                        terminal,
                    } => self.enqueue(now, Event::Forge {
                        variant,
                        remaining: count,
                        every_ms,
                        terminal: terminal.unwrap_or(0),
                    }),
                    other => {
                        return Err(ScenarioError::Script {
                            line: r.line,
                            msg: format!("{other:?} needs a frame trigger"),
                        })
                    }
                }
                Ok((None, format!("adversary rule on line {}", r.line)))
            }
            Event::Forge {
                variant,
                remaining,
                every_ms,
                terminal,
            } => {
                if remaining == 0 {
                    return Ok((None, "forge done".into()));
                }
                let frame = self.adversary.forge_frame(variant);
                self.inject(frame, terminal);
                self.enqueue(now.saturating_add(every_ms), Event::Forge {
                    variant,
                    remaining: remaining - 1,
                    every_ms,
                    terminal,
                });
                Ok((None, "adversary forges a frame".into()))
            }
        }
    }

    fn arrive(
        &mut self,
        d: Delivery,
        run: Option<usize>,
    ) -> Result<(Option<u8>, String), ScenarioError> {
        let now = self.clock.now();
        let j = d.terminal;
        let msg = match WireMessage::decode(&d.frame) {
            Ok(m) => m,
            Err(e) => {
                self.note(format!("seq {}: undecodable frame dropped by receiver: {e}", d.seq));
                return Ok((None, "malformed frame".into()));
            }
        };
        match (d.direction, msg) {
            (Direction::VehicleToTerminal, WireMessage::AuthRequest(req)) => {
                match self.terminals[j].agent.on_auth_request(&req) {
                    Ok(lookup) => {
                        let r = self.runs.len();
                        self.runs.push(TerminalRun {
                            terminal: j,
                            started_at: now,
                            request_seq: d.seq,
                            n_a: req.n_a,
                            lookup: None,
                            phase: SessionPhase::AwaitingLookup,
                            energy_started: false,
                            end: None,
                            report: None,
                            invoice: None,
                            trace: HandshakeTrace::default(),
                        });
                        self.terminals[j].run = Some(r);
                        self.sync_run(j, r);
                        self.send(
                            Direction::TerminalToServer,
                            j,
                            WireMessage::LookupRequest(lookup).encode(),
                            Some(r),
                        )?;
                        Ok((Some(2), format!("terminal {j} forwards lookup")))
                    }
                    Err(e) => {
                        self.note(format!("seq {}: terminal {j} ignored request: {e}", d.seq));
                        Ok((None, "request ignored".into()))
                    }
                }
            }
            (Direction::TerminalToServer, WireMessage::LookupRequest(req)) => {
                let reply = match self.server.lookup(&req) {
                    Ok(reply) => reply,
                    Err(e) => {
                        self.note(format!("lookup failed: {e}"));
                        LookupReply::Rejected {
                            reason: FailureReason::ServerError,
                        }
                    }
                };
                if let Some(r) = run {
                    self.runs[r].lookup = Some(match reply {
                        LookupReply::Accepted { id_a, .. } => LookupVerdict::Accepted { id_a },
                        LookupReply::Rejected { reason } => LookupVerdict::Rejected { reason },
                    });
                }
                self.send(
                    Direction::ServerToTerminal,
                    j,
                    WireMessage::LookupReply(reply).encode(),
                    run,
                )?;
                Ok((Some(3), "server answers lookup".into()))
            }
            (Direction::ServerToTerminal, WireMessage::LookupReply(reply)) => {
                let action = match self.terminals[j].agent.on_lookup_reply(&reply, now) {
                    Ok(a) => a,
                    Err(e) => {
                        self.note(format!("terminal {j} rejected lookup reply: {e}"));
                        return Ok((None, "reply ignored".into()));
                    }
                };
                if let Some(r) = run {
                    self.sync_run(j, r);
                }
                match action {
                    TerminalAction::StartCharge(sc) => {
                        let slot = &mut self.terminals[j];
                        slot.epoch += 1;
                        let epoch = slot.epoch;
                        if let Some(r) = run {
                            self.runs[r].energy_started = true;
                        }
                        let cutoff = slot.agent.plan().cutoff(self.tariff);
                        // sent first so a zero-length charge still reaches
                        // the vehicle before the power cut
                        self.send(
                            Direction::TerminalToVehicle,
                            j,
                            WireMessage::StartCharge(sc).encode(),
                            run,
                        )?;
                        if let Some((ms, cause)) = cutoff {
                            self.enqueue(now.saturating_add(ms), Event::PowerCut {
                                terminal: j,
                                epoch,
                                cause,
                            });
                        }
                        Ok((Some(4), format!("terminal {j} starts energy flow")))
                    }
                    TerminalAction::Notify(notice) => {
                        self.send(
                            Direction::TerminalToVehicle,
                            j,
                            WireMessage::FailureNotice(notice).encode(),
                            run,
                        )?;
                        Ok((None, format!("terminal {j} reports failure {}", notice.reason)))
                    }
                }
            }
            (Direction::TerminalToVehicle, msg @ (WireMessage::StartCharge(_) | WireMessage::FailureNotice(_))) => {
                let Some(v) = self.terminals[j].plugged else {
                    self.note(format!("seq {}: no vehicle at terminal {j}", d.seq));
                    return Ok((None, "nobody listening".into()));
                };
                let result = match msg {
                    WireMessage::StartCharge(sc) => self.vehicles[v].on_start_charge(&sc).map(|_| Some(5)),
                    WireMessage::FailureNotice(n) => self.vehicles[v].on_failure_notice(&n).map(|_| None),
                    _ => unreachable!(),
                };
                self.sync_session(v);
                // a vehicle that is not charging draws no current
                if !matches!(self.vehicles[v].phase(), SessionPhase::Charging { .. }) {
                    self.refuse_if_charging(v);
                }
                match result {
                    Ok(step) => Ok((step, format!("vehicle {v} handles {:?}", msg.variant()))),
                    Err(ProtocolError::Failed(reason)) => {
                        Ok((None, format!("vehicle {v} failed: {reason}")))
                    }
                    Err(e) => {
                        self.note(format!("seq {}: vehicle {v} ignored frame: {e}", d.seq));
                        Ok((None, "frame ignored".into()))
                    }
                }
            }
            (Direction::TerminalToServer, WireMessage::ChargeReport(report)) => {
                match self.server.bill(&report, now) {
                    Ok(inv) => {
                        if let Some(r) = run {
                            self.runs[r].invoice = Some(inv.clone());
                        }
                        self.invoices.push(inv);
                        Ok((Some(8), "server issues invoice".into()))
                    }
                    Err(e) => {
                        self.note(format!("billing failed: {e}"));
                        Ok((None, "billing failed".into()))
                    }
                }
            }
            (dir, msg) => {
                self.note(format!(
                    "seq {}: {:?} arriving {:?} ignored",
                    d.seq,
                    msg.variant(),
                    dir
                ));
                Ok((None, "unexpected frame".into()))
            }
        }
    }
}

/// Run a whole scenario. `vehicles[i]` is the vehicle the schedule calls `i`.
pub fn run_scenario(
    vehicles: Vec<VehicleCredentials>,
    server: Server,
    scenario: &Scenario,
    seed: u64,
) -> Result<ScenarioOutcome, ScenarioError> {
    World::new(vehicles, server, scenario, seed)?.run_to_completion()
}

impl ScenarioOutcome {
    /// Insecure-channel frames of one variant, as delivered.
    pub fn insecure_frames(&self, variant: Variant) -> Vec<Vec<u8>> {
        self.transcript
            .entries()
            .iter()
            .filter(|e| e.channel == Channel::Insecure && e.variant() == Some(variant))
            .map(|e| e.delivered_frame())
            .collect()
    }
}
