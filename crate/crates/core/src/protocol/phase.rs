use serde::{Deserialize, Serialize};

use super::{FailureReason, ProtocolError, Timestamp};

/// Lifecycle of one charging session on either agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPhase {
    Idle,
    AwaitingLookup,
    Charging { t1: Timestamp, budget: Option<u64> },
    Completed { t5: Timestamp },
    Failed { reason: FailureReason },
}

impl SessionPhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionPhase::Completed { .. } | SessionPhase::Failed { .. })
    }

    /// A new session may begin from here.
    pub fn is_ready(&self) -> bool {
        matches!(self, SessionPhase::Idle) || self.is_terminal()
    }

    pub fn can_transition_to(&self, next: &SessionPhase) -> bool {
        use SessionPhase::*;
        matches!(
            (self, next),
            (Idle, AwaitingLookup)
                | (AwaitingLookup, Charging { .. })
                | (AwaitingLookup, Failed { .. })
                | (Charging { .. }, Completed { .. })
                | (Charging { .. }, Failed { .. })
                | (Completed { .. }, Idle)
                | (Failed { .. }, Idle)
        )
    }

    pub(crate) fn advance(&mut self, next: SessionPhase) -> Result<(), ProtocolError> {
        if !self.can_transition_to(&next) {
            return Err(ProtocolError::IllegalTransition {
                from: *self,
                to: next,
            });
        }
        *self = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legal_path() {
        let mut p = SessionPhase::Idle;
        p.advance(SessionPhase::AwaitingLookup).unwrap();
        p.advance(SessionPhase::Charging {
            t1: Timestamp(5),
            budget: None,
        })
        .unwrap();
        p.advance(SessionPhase::Completed { t5: Timestamp(9) }).unwrap();
        assert!(p.is_ready());
        p.advance(SessionPhase::Idle).unwrap();
    }

    #[test]
    fn illegal_jumps_rejected() {
        let mut p = SessionPhase::Idle;
        assert!(p
            .advance(SessionPhase::Charging {
                t1: Timestamp(0),
                budget: None
            })
            .is_err());
        assert_eq!(p, SessionPhase::Idle);
        let mut failed = SessionPhase::Failed {
            reason: FailureReason::MacInvalid,
        };
        assert!(failed.advance(SessionPhase::AwaitingLookup).is_err());
        assert!(failed
            .advance(SessionPhase::Completed { t5: Timestamp(0) })
            .is_err());
    }
}
