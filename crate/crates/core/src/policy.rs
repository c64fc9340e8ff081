//! The adaptive player adversary: decides, whenever an idle process is
//! scheduled, whether it starts a tryLock attempt and with which locks.
//!
//! A decision is a deterministic function of (history so far, process,
//! seed). The built-in policies ignore the history; the hook still
//! receives the strict prefix of events before the current tick so
//! custom adversaries can use it.

use serde::{Deserialize, Serialize};

use crate::history::History;
use crate::mem::{ASetId, ProcId};

/// What an idle process does with its next step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyDecision {
    /// Start an attempt. `locks: None` means the workload's default lock
    /// set for the process.
    Start { locks: Option<Vec<ASetId>> },
    /// Think for `ticks` local steps (at least 1), then ask again.
    Think { ticks: u32 },
    /// Never attempt again; the process parks after its remaining steps.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlayerPolicy {
    /// Start a new attempt the moment the previous one finishes.
    ImmediateRetry,
    /// Think for a uniform number of ticks in `[min_think, max_think]`
    /// between attempts.
    RandomThink { seed: u64, min_think: u32, max_think: u32 },
    /// Per-process scripts: each entry is one attempt, optionally with a
    /// lock-set override and a think delay before it starts. When a
    /// process's script runs out it stops.
    Scripted { scripts: Vec<Vec<ScriptedAttempt>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedAttempt {
    pub think_before: u32,
    pub locks: Option<Vec<ASetId>>,
}

impl PlayerPolicy {
    /// Decide for `proc`, which has completed `attempts_done` attempts.
    /// `think_rng` is the process's private policy stream, split from the
    /// run seed; the scheduler never observes it.
    pub fn decide(
        &self,
        _history: &History,
        proc: ProcId,
        attempts_done: u64,
        think_rng: &mut impl rand::Rng,
    ) -> PolicyDecision {
        match self {
            PlayerPolicy::ImmediateRetry => PolicyDecision::Start { locks: None },
            PlayerPolicy::RandomThink { min_think, max_think, .. } => {
                let lo = *min_think;
                let hi = (*max_think).max(lo);
                let ticks = think_rng.gen_range(lo..=hi);
                if ticks == 0 {
                    PolicyDecision::Start { locks: None }
                } else {
                    PolicyDecision::Think { ticks }
                }
            }
            PlayerPolicy::Scripted { scripts } => {
                let script = match scripts.get(proc.0 as usize) {
                    Some(s) => s,
                    None => return PolicyDecision::Stop,
                };
                match script.get(attempts_done as usize) {
                    Some(a) if a.think_before > 0 => PolicyDecision::Think { ticks: a.think_before },
                    Some(a) => PolicyDecision::Start { locks: a.locks.clone() },
                    None => PolicyDecision::Stop,
                }
            }
        }
    }

    /// After a think interval ends, scripted attempts must not re-apply
    /// their think delay. The loop frame uses this to start directly.
    pub fn decide_after_think(
        &self,
        history: &History,
        proc: ProcId,
        attempts_done: u64,
        think_rng: &mut impl rand::Rng,
    ) -> PolicyDecision {
        match self {
            PlayerPolicy::Scripted { scripts } => {
                let locks = scripts
                    .get(proc.0 as usize)
                    .and_then(|s| s.get(attempts_done as usize))
                    .and_then(|a| a.locks.clone());
                PolicyDecision::Start { locks }
            }
            PlayerPolicy::RandomThink { .. } => PolicyDecision::Start { locks: None },
            _ => self.decide(history, proc, attempts_done, think_rng),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            PlayerPolicy::RandomThink { seed, .. } => *seed,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn immediate_retry_always_starts() {
        let p = PlayerPolicy::ImmediateRetry;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = History::new(1, 0);
        assert_eq!(p.decide(&h, ProcId(0), 5, &mut rng), PolicyDecision::Start { locks: None });
    }

    #[test]
    fn random_think_is_deterministic_per_seed() {
        let p = PlayerPolicy::RandomThink { seed: 9, min_think: 1, max_think: 10 };
        let h = History::new(1, 0);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for i in 0..20 {
            assert_eq!(
                p.decide(&h, ProcId(0), i, &mut a),
                p.decide(&h, ProcId(0), i, &mut b)
            );
        }
    }

    #[test]
    fn scripted_stops_when_exhausted() {
        let p = PlayerPolicy::Scripted {
            scripts: vec![vec![ScriptedAttempt { think_before: 0, locks: None }]],
        };
        let h = History::new(1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.decide(&h, ProcId(0), 0, &mut rng), PolicyDecision::Start { locks: None });
        assert_eq!(p.decide(&h, ProcId(0), 1, &mut rng), PolicyDecision::Stop);
    }
}
