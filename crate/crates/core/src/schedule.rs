//! Oblivious scheduler scripts: a schedule is a function from tick to
//! process, fully determined before the run begins. The engine consumes
//! it in order and never mutates it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mem::ProcId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    RoundRobin,
    UniformRandom,
    Scripted,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("scripted schedule requires a non-empty script")]
    EmptyScript,
    #[error("script entry {index} names process {proc}, but P = {procs}")]
    ProcOutOfRange { index: usize, proc: u32, procs: u32 },
    #[error("schedule requires P >= 1 and horizon >= 1")]
    BadParams,
}

/// An immutable scheduler script. Replayable bit-exactly from
/// `(kind, seed, P, horizon)` (plus the script for scripted kind).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub seed: u64,
    pub procs: u32,
    pub horizon: u64,
    pub script: Option<Vec<ProcId>>,
}

impl Schedule {
    pub fn round_robin(procs: u32, horizon: u64) -> Self {
        Schedule { kind: ScheduleKind::RoundRobin, seed: 0, procs, horizon, script: None }
    }

    pub fn uniform_random(seed: u64, procs: u32, horizon: u64) -> Self {
        Schedule { kind: ScheduleKind::UniformRandom, seed, procs, horizon, script: None }
    }

    pub fn scripted(script: Vec<ProcId>) -> Result<Self, ScheduleError> {
        if script.is_empty() {
            return Err(ScheduleError::EmptyScript);
        }
        let procs = script.iter().map(|p| p.0 + 1).max().unwrap_or(1);
        let horizon = script.len() as u64;
        Ok(Schedule { kind: ScheduleKind::Scripted, seed: 0, procs, horizon, script: Some(script) })
    }

    pub fn validate(&self, procs: u32) -> Result<(), ScheduleError> {
        if procs == 0 || self.horizon == 0 {
            return Err(ScheduleError::BadParams);
        }
        if self.kind == ScheduleKind::Scripted {
            let script = self.script.as_deref().ok_or(ScheduleError::EmptyScript)?;
            if script.is_empty() {
                return Err(ScheduleError::EmptyScript);
            }
            for (index, p) in script.iter().enumerate() {
                if p.0 >= procs {
                    return Err(ScheduleError::ProcOutOfRange { index, proc: p.0, procs });
                }
            }
        }
        Ok(())
    }

    pub fn cursor(&self) -> ScheduleCursor {
        let rng = ChaCha8Rng::seed_from_u64(self.seed);
        ScheduleCursor { pos: 0, rng }
    }
}

/// Consumption state for one run over an immutable [`Schedule`].
#[derive(Debug, Clone)]
pub struct ScheduleCursor {
    pos: u64,
    rng: ChaCha8Rng,
}

impl ScheduleCursor {
    /// Next scheduled process, or `None` when the script is exhausted.
    /// The horizon is enforced by the engine, not here.
    pub fn next(&mut self, schedule: &Schedule) -> Option<ProcId> {
        let p = match schedule.kind {
            ScheduleKind::RoundRobin => ProcId((self.pos % schedule.procs as u64) as u32),
            ScheduleKind::UniformRandom => ProcId(self.rng.gen_range(0..schedule.procs)),
            ScheduleKind::Scripted => {
                let script = schedule.script.as_deref().expect("validated");
                *script.get(self.pos as usize)?
            }
        };
        self.pos += 1;
        Some(p)
    }

    pub fn consumed(&self) -> u64 {
        self.pos
    }
}

/// `make_schedule` in operation terms: build and validate in one step.
pub fn make_schedule(
    kind: ScheduleKind,
    seed: u64,
    procs: u32,
    horizon: u64,
    script: Option<Vec<ProcId>>,
) -> Result<Schedule, ScheduleError> {
    let s = match kind {
        ScheduleKind::RoundRobin => {
            let mut s = Schedule::round_robin(procs, horizon);
            s.seed = seed;
            s
        }
        ScheduleKind::UniformRandom => Schedule::uniform_random(seed, procs, horizon),
        ScheduleKind::Scripted => {
            let mut s = Schedule::scripted(script.unwrap_or_default())?;
            s.seed = seed;
            s.procs = procs;
            s
        }
    };
    s.validate(procs)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(s: &Schedule, n: usize) -> Vec<u32> {
        let mut c = s.cursor();
        (0..n).filter_map(|_| c.next(s)).map(|p| p.0).collect()
    }

    #[test]
    fn round_robin_cycles() {
        let s = make_schedule(ScheduleKind::RoundRobin, 0, 3, 6, None).unwrap();
        assert_eq!(drain(&s, 6), vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn uniform_random_replays_identically() {
        let s = make_schedule(ScheduleKind::UniformRandom, 42, 2, 10, None).unwrap();
        assert_eq!(drain(&s, 10), drain(&s, 10));
    }

    #[test]
    fn scripted_replays_exactly_then_ends() {
        let script = vec![ProcId(0), ProcId(0), ProcId(1)];
        let s = make_schedule(ScheduleKind::Scripted, 0, 2, 3, Some(script)).unwrap();
        let mut c = s.cursor();
        assert_eq!(c.next(&s), Some(ProcId(0)));
        assert_eq!(c.next(&s), Some(ProcId(0)));
        assert_eq!(c.next(&s), Some(ProcId(1)));
        assert_eq!(c.next(&s), None);
    }

    #[test]
    fn empty_script_is_a_configuration_error() {
        assert_eq!(
            make_schedule(ScheduleKind::Scripted, 0, 2, 1, Some(vec![])),
            Err(ScheduleError::EmptyScript)
        );
    }

    #[test]
    fn script_entries_must_be_in_range() {
        let err = make_schedule(ScheduleKind::Scripted, 0, 1, 1, Some(vec![ProcId(3)])).unwrap_err();
        assert!(matches!(err, ScheduleError::ProcOutOfRange { proc: 3, .. }));
    }
}
