//! Conversation schedules: how many questions the learner may ask each round.
//!
//! A schedule is a nondecreasing budget function b(t) with b(0) = 0; at round
//! t the learner may ask `b(t) - b(t-1)` questions. Both families used in
//! practice are integer-valued, so no flooring of differences is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Budget function family.
///
/// `Log` uses the natural logarithm. Note that `Log` budgets arrive in
/// bursts of `q_l` questions whenever floor(ln t) steps, so b(t) can exceed
/// t at small t (b(3) = q_l); only the `Linear` family with q_l <= q_q keeps
/// b(t) <= t for every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConversationSchedule {
    /// b(t) = q_l * floor(ln t)
    Log { q_l: u32 },
    /// b(t) = q_l * floor(t / q_q)
    Linear { q_l: u32, q_q: u32 },
    /// b(t) = 0: never converses.
    None,
}

impl ConversationSchedule {
    /// Rejects zero parameters; `None` is always valid.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConversationSchedule::Log { q_l: 0 } => {
                Err(Error::Config("schedule q_l must be positive".into()))
            }
            ConversationSchedule::Linear { q_l, q_q } if q_l == 0 || q_q == 0 => {
                Err(Error::Config("schedule q_l and q_q must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// b(t). Integer-valued for both families; b(0) = 0.
    pub fn b(&self, t: usize) -> u64 {
        if t == 0 {
            return 0;
        }
        match *self {
            ConversationSchedule::Log { q_l } => q_l as u64 * (t as f64).ln().floor() as u64,
            ConversationSchedule::Linear { q_l, q_q } => q_l as u64 * (t as u64 / q_q as u64),
            ConversationSchedule::None => 0,
        }
    }

    /// Questions allowed at round t: b(t) - b(t-1).
    pub fn budget(&self, t: usize) -> u64 {
        assert!(t >= 1, "rounds are 1-based");
        self.b(t) - self.b(t - 1)
    }

    /// Indicator q(t): whether any conversation happens at round t.
    pub fn converses_at(&self, t: usize) -> bool {
        self.budget(t) > 0
    }

    /// Short label used in reports, e.g. `log:5` or `lin:5:50`.
    pub fn label(&self) -> String {
        match *self {
            ConversationSchedule::Log { q_l } => format!("log:{q_l}"),
            ConversationSchedule::Linear { q_l, q_q } => format!("lin:{q_l}:{q_q}"),
            ConversationSchedule::None => "none".into(),
        }
    }

    /// Parses a [`label`](Self::label) back into a schedule: `none`,
    /// `log:Q`, or `lin:Q:P`.
    pub fn parse_label(text: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown schedule {text:?}; expected none, log:Q, or lin:Q:P"
            ))
        };
        let mut parts = text.trim().split(':');
        let schedule = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("none"), None, ..) => ConversationSchedule::None,
            (Some("log"), Some(q), None, _) => ConversationSchedule::Log {
                q_l: q.parse().map_err(|_| bad())?,
            },
            (Some("lin"), Some(q), Some(p), None) => ConversationSchedule::Linear {
                q_l: q.parse().map_err(|_| bad())?,
                q_q: p.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}
