use crate::crypto::{Block128, PrngState};

use super::steps::{self, PendingLookup};
use super::{
    AuthRequest, ChargeReport, FailureNotice, FailureReason, GroupKey, HandshakeTrace,
    LookupReply, LookupRequest, ProtocolError, SessionPhase, StartCharge, Timestamp,
    VehicleCredentials,
};

/// Record `next` as the new phase, keeping the full history for audit.
fn transition(
    phase: &mut SessionPhase,
    history: &mut Vec<SessionPhase>,
    next: SessionPhase,
) -> Result<(), ProtocolError> {
    phase.advance(next)?;
    history.push(next);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    creds: VehicleCredentials,
    group_key: GroupKey,
    prng: PrngState,
    phase: SessionPhase,
    history: Vec<SessionPhase>,
    trace: HandshakeTrace,
}

impl Vehicle {
    pub fn new(creds: VehicleCredentials, group_key: GroupKey, prng: PrngState) -> Self {
        Self {
            creds,
            group_key,
            prng,
            phase: SessionPhase::Idle,
            history: vec![SessionPhase::Idle],
            trace: HandshakeTrace::default(),
        }
    }

    pub fn id(&self) -> Block128 {
        self.creds.id_a
    }

    pub fn credentials(&self) -> &VehicleCredentials {
        &self.creds
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn history(&self) -> &[SessionPhase] {
        &self.history
    }

    /// Trace of the current (or last) session.
    pub fn trace(&self) -> &HandshakeTrace {
        &self.trace
    }

    pub fn prng(&self) -> PrngState {
        self.prng
    }

    /// Step 1.
    pub fn start_session(&mut self) -> Result<AuthRequest, ProtocolError> {
        if !self.phase.is_ready() {
            return Err(ProtocolError::Busy);
        }
        let (req, prng, trace) = steps::vehicle_step1(&self.creds, &self.group_key, self.prng)?;
        if self.phase.is_terminal() {
            transition(&mut self.phase, &mut self.history, SessionPhase::Idle)?;
        }
        transition(&mut self.phase, &mut self.history, SessionPhase::AwaitingLookup)?;
        self.prng = prng;
        self.trace = trace;
        Ok(req)
    }

    /// Step 5. A MAC or padding failure ends the session.
    pub fn on_start_charge(&mut self, msg: &StartCharge) -> Result<Timestamp, ProtocolError> {
        if self.phase != SessionPhase::AwaitingLookup {
            return Err(ProtocolError::UnexpectedMessage(self.phase));
        }
        match steps::vehicle_step5(msg, &self.creds, &self.group_key) {
            Ok((t2, trace)) => {
                self.trace = self.trace.merge(&trace);
                transition(
                    &mut self.phase,
                    &mut self.history,
                    SessionPhase::Charging {
                        t1: t2,
                        budget: None,
                    },
                )?;
                Ok(t2)
            }
            Err(ProtocolError::Failed(reason)) => {
                self.fail(reason)?;
                Err(ProtocolError::Failed(reason))
            }
            Err(e) => Err(e),
        }
    }

    /// Unauthenticated notice; anyone on the channel can send one.
    pub fn on_failure_notice(&mut self, notice: &FailureNotice) -> Result<(), ProtocolError> {
        if self.phase != SessionPhase::AwaitingLookup {
            return Err(ProtocolError::UnexpectedMessage(self.phase));
        }
        self.fail(notice.reason)
    }

    /// Step 6, run when the vehicle sees energy flow stop. Returns `t4`.
    pub fn on_power_cut(&mut self, clock: Timestamp) -> Result<u64, ProtocolError> {
        let SessionPhase::Charging { t1: t2, .. } = self.phase else {
            return Err(ProtocolError::UnexpectedMessage(self.phase));
        };
        let t4 = match steps::vehicle_step6(t2, clock) {
            Ok(t4) => t4,
            Err(e) => {
                self.fail(FailureReason::MalformedTimestamp)?;
                return Err(e);
            }
        };
        self.trace.t3 = Some(clock);
        self.trace.t4 = Some(t4);
        transition(
            &mut self.phase,
            &mut self.history,
            SessionPhase::Completed { t5: clock },
        )?;
        Ok(t4)
    }

    /// Give up on a session still waiting for the terminal.
    pub fn abort(&mut self, reason: FailureReason) -> bool {
        self.phase == SessionPhase::AwaitingLookup && self.fail(reason).is_ok()
    }

    fn fail(&mut self, reason: FailureReason) -> Result<(), ProtocolError> {
        transition(
            &mut self.phase,
            &mut self.history,
            SessionPhase::Failed { reason },
        )
    }
}

/// Owner-selected charge limits entered at the terminal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChargePlan {
    pub target_ms: Option<u64>,
    /// Prepaid amount in minor units.
    pub budget: Option<u64>,
}

impl ChargePlan {
    /// Milliseconds after `t1` at which the terminal cuts power, and why.
    ///
    /// Cost accrues linearly at `tariff_per_second / 1000` per millisecond;
    /// the budget trigger fires at the first whole millisecond where accrued
    /// cost reaches the budget. Ties go to the target.
    pub fn cutoff(&self, tariff_per_second: u64) -> Option<(u64, EndTrigger)> {
        let budget_cut = self.budget.and_then(|b| {
            if b == 0 {
                Some(0)
            } else if tariff_per_second == 0 {
                None
            } else {
                Some((b as u128 * 1000).div_ceil(tariff_per_second as u128) as u64)
            }
        });
        match (self.target_ms, budget_cut) {
            (Some(a), Some(b)) if b < a => Some((b, EndTrigger::BudgetExhausted)),
            (Some(a), _) => Some((a, EndTrigger::TargetReached)),
            (None, Some(b)) => Some((b, EndTrigger::BudgetExhausted)),
            (None, None) => None,
        }
    }

    pub fn cutoff_ms(&self, tariff_per_second: u64) -> Option<u64> {
        self.cutoff(tariff_per_second).map(|(ms, _)| ms)
    }
}

/// What ended a charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EndTrigger {
    TargetReached,
    BudgetExhausted,
    CableRemoved,
    /// The vehicle rejected the session and stopped drawing current.
    VehicleRefused,
}

/// Terminal reaction to a lookup reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalAction {
    StartCharge(StartCharge),
    Notify(FailureNotice),
}

#[derive(Debug, Clone)]
pub struct Terminal {
    group_key: GroupKey,
    prng: PrngState,
    phase: SessionPhase,
    history: Vec<SessionPhase>,
    pending: Option<PendingLookup>,
    active_id: Option<Block128>,
    energy_flow: bool,
    plan: ChargePlan,
    trace: HandshakeTrace,
}

impl Terminal {
    pub fn new(group_key: GroupKey, prng: PrngState) -> Self {
        Self {
            group_key,
            prng,
            phase: SessionPhase::Idle,
            history: vec![SessionPhase::Idle],
            pending: None,
            active_id: None,
            energy_flow: false,
            plan: ChargePlan::default(),
            trace: HandshakeTrace::default(),
        }
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn history(&self) -> &[SessionPhase] {
        &self.history
    }

    pub fn trace(&self) -> &HandshakeTrace {
        &self.trace
    }

    pub fn energy_flow(&self) -> bool {
        self.energy_flow
    }

    pub fn plan(&self) -> ChargePlan {
        self.plan
    }

    /// Vehicle authenticated by the server for the active session.
    pub fn active_vehicle(&self) -> Option<Block128> {
        self.active_id
    }

    pub fn set_plan(&mut self, plan: ChargePlan) {
        self.plan = plan;
    }

    /// Step 2. A terminal mid-session ignores further requests.
    pub fn on_auth_request(&mut self, req: &AuthRequest) -> Result<LookupRequest, ProtocolError> {
        if !self.phase.is_ready() {
            return Err(ProtocolError::Busy);
        }
        if self.phase.is_terminal() {
            transition(&mut self.phase, &mut self.history, SessionPhase::Idle)?;
        }
        let (lookup, pending) = steps::terminal_step2(req, &self.group_key);
        transition(&mut self.phase, &mut self.history, SessionPhase::AwaitingLookup)?;
        self.trace = HandshakeTrace {
            m3: Some(req.m3),
            n_a: Some(req.n_a),
            m4: Some(pending.m4),
            m5: Some(pending.m5),
            ..Default::default()
        };
        self.active_id = None;
        self.pending = Some(pending);
        Ok(lookup)
    }

    /// Step 4 on acceptance, failure forwarding on rejection.
    pub fn on_lookup_reply(
        &mut self,
        reply: &LookupReply,
        clock: Timestamp,
    ) -> Result<TerminalAction, ProtocolError> {
        if self.phase != SessionPhase::AwaitingLookup {
            return Err(ProtocolError::UnexpectedMessage(self.phase));
        }
        let pending = self.pending.take().expect("pending set in AwaitingLookup");
        match reply {
            LookupReply::Accepted { id_a, k_a } => {
                match steps::terminal_step4(k_a, &pending, &self.group_key, clock, self.prng) {
                    Ok((sc, prng, trace)) => {
                        self.prng = prng;
                        self.trace = self.trace.merge(&trace);
                        transition(
                            &mut self.phase,
                            &mut self.history,
                            SessionPhase::Charging {
                                t1: clock,
                                budget: self.plan.budget,
                            },
                        )?;
                        self.energy_flow = true;
                        self.active_id = Some(*id_a);
                        Ok(TerminalAction::StartCharge(sc))
                    }
                    Err(ProtocolError::Failed(reason)) => self.reject(reason),
                    Err(e) => Err(e),
                }
            }
            LookupReply::Rejected { reason } => self.reject(*reason),
        }
    }

    /// Step 7, on any power-cut trigger.
    pub fn stop_charging(&mut self, clock: Timestamp) -> Result<ChargeReport, ProtocolError> {
        let SessionPhase::Charging { t1, .. } = self.phase else {
            return Err(ProtocolError::UnexpectedMessage(self.phase));
        };
        let id_a = self.active_id.expect("charging implies authenticated vehicle");
        let report = steps::terminal_step7(t1, clock, id_a);
        transition(
            &mut self.phase,
            &mut self.history,
            SessionPhase::Completed { t5: clock },
        )?;
        self.energy_flow = false;
        self.trace.t5 = Some(clock);
        self.plan = ChargePlan::default();
        Ok(report)
    }

    fn reject(&mut self, reason: FailureReason) -> Result<TerminalAction, ProtocolError> {
        transition(
            &mut self.phase,
            &mut self.history,
            SessionPhase::Failed { reason },
        )?;
        self.energy_flow = false;
        self.plan = ChargePlan::default();
        Ok(TerminalAction::Notify(steps::terminal_handle_rejection(
            reason,
        )))
    }
}
