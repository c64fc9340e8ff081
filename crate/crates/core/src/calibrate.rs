//! Delay-constant calibration.
//!
//! The delay formulas fix T0 = c0·kappa²·L²·T and T1 = c1·kappa·L·T; the
//! constants only need to be "sufficiently large". The oracle makes that
//! reproducible: run a saturated worst-case workload (kappa processes all
//! contending for the same L locks with maximal-length thunks, immediate
//! retry) in probe mode, where attempts reveal without delay, measure the
//! largest organic pre-reveal and post-reveal initiator step counts, and
//! pick the smallest powers of two whose T0/T1 dominate twice those
//! maxima. A validation pass re-runs the same workload with delays
//! enabled and doubles a constant if any delay target is overrun.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{run_sim, FaultKind, SimConfig, SimFault};
use crate::history::{EventKind, History, OpDesc, RetVal};
use crate::lock::LockSetup;
use crate::policy::PlayerPolicy;
use crate::schedule::Schedule;
use crate::verify::check_fixed_steps;
use crate::workload;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub kappa: u64,
    pub max_locks: u64,
    pub thunk_ticks: u64,
    pub c0: u64,
    pub c1: u64,
    pub t0: u64,
    pub t1: u64,
    pub max_pre_observed: u64,
    pub max_post_observed: u64,
    pub attempts_measured: u64,
    pub validation_runs: u64,
}

/// Largest (pre, post) initiator step counts over completed attempts.
pub fn measure_attempt_phases(history: &History) -> (u64, u64, u64) {
    let mut reveals = std::collections::HashMap::new();
    for ev in history.iter() {
        if let EventKind::Reveal { desc, .. } = &ev.kind {
            reveals.entry(*desc).or_insert(ev.local_step);
        }
    }
    let (mut max_pre, mut max_post, mut n) = (0u64, 0u64, 0u64);
    for s in crate::verify::spans(history) {
        let OpDesc::TryLocks { desc, .. } = &s.op else { continue };
        let (Some(resp_local), Some(RetVal::Bool(_))) = (s.resp_local, &s.ret) else { continue };
        let Some(&reveal) = reveals.get(desc) else { continue };
        max_pre = max_pre.max(reveal - s.inv_local);
        max_post = max_post.max(resp_local - reveal);
        n += 1;
    }
    (max_pre, max_post, n)
}

fn pow2_at_least(x: u64) -> u64 {
    x.max(1).next_power_of_two()
}

/// Calibrate the known-bounds lock for the given contention shape.
/// `thunk_pad` pads the probe thunk to the longest template the workload
/// will run. Deterministic in `seeds`.
pub fn calibrate_known(
    kappa: u64,
    max_locks: u64,
    thunk_pad: usize,
    seeds: &[u64],
    attempts_per_run: u64,
) -> Result<(LockSetup, CalibrationReport), SimFault> {
    let thunk_ticks = workload::increment_thunk(thunk_pad).solo_ticks();
    let probe_setup = LockSetup::known(kappa, max_locks, thunk_ticks)
        .with_priority_range_for(kappa as u32)
        .as_probe();
    let probe = Arc::new(workload::saturated(probe_setup, thunk_pad));
    let procs = probe.procs();

    let (mut max_pre, mut max_post, mut measured) = (0u64, 0u64, 0u64);
    let run_one = |schedule: &Schedule| -> Result<(u64, u64, u64), SimFault> {
        let cfg = SimConfig::until_attempts(schedule.seed, u64::MAX, attempts_per_run);
        let out = run_sim(schedule, &PlayerPolicy::ImmediateRetry, &probe, &cfg)?;
        Ok(measure_attempt_phases(&out.history))
    };
    let (p, q, n) = run_one(&Schedule::round_robin(procs, u64::MAX))?;
    max_pre = max_pre.max(p);
    max_post = max_post.max(q);
    measured += n;
    for &seed in seeds {
        let (p, q, n) = run_one(&Schedule::uniform_random(seed, procs, u64::MAX))?;
        max_pre = max_pre.max(p);
        max_post = max_post.max(q);
        measured += n;
    }

    let base0 = kappa * kappa * max_locks * max_locks * thunk_ticks;
    let base1 = kappa * max_locks * thunk_ticks;
    let mut c0 = pow2_at_least((2 * max_pre).div_ceil(base0));
    let mut c1 = pow2_at_least((2 * max_post).div_ceil(base1));

    // Validation with delays enabled: any overrun doubles the offending
    // constant; fixed-step violations are implementation bugs.
    let mut validation_runs = 0u64;
    'outer: for _ in 0..8 {
        let setup = LockSetup::known(kappa, max_locks, thunk_ticks)
            .with_priority_range_for(kappa as u32)
            .with_constants(c0, c1);
        let w = Arc::new(workload::saturated(setup.clone(), thunk_pad));
        for &seed in seeds {
            validation_runs += 1;
            let cfg = SimConfig::until_attempts(seed, u64::MAX, attempts_per_run);
            let schedule = Schedule::uniform_random(seed, procs, u64::MAX);
            match run_sim(&schedule, &PlayerPolicy::ImmediateRetry, &w, &cfg) {
                Ok(out) => {
                    let v = check_fixed_steps(&out.history, setup.t0(), setup.t1());
                    if !v.ok {
                        return Err(SimFault {
                            kind: FaultKind::Config(format!(
                                "calibration validation failed the fixed-step check: {:?}",
                                v.violations.first()
                            )),
                            tick: 0,
                            proc: crate::mem::ProcId(0),
                        });
                    }
                }
                Err(f) if matches!(f.kind, FaultKind::DelayOverrun { .. }) => {
                    // Not enough headroom: grow both and revalidate.
                    c0 *= 2;
                    c1 *= 2;
                    continue 'outer;
                }
                Err(f) => return Err(f),
            }
        }
        let setup = LockSetup::known(kappa, max_locks, thunk_ticks)
            .with_priority_range_for(kappa as u32)
            .with_constants(c0, c1);
        let report = CalibrationReport {
            kappa,
            max_locks,
            thunk_ticks,
            c0,
            c1,
            t0: setup.t0(),
            t1: setup.t1(),
            max_pre_observed: max_pre,
            max_post_observed: max_post,
            attempts_measured: measured,
            validation_runs,
        };
        return Ok((setup, report));
    }
    Err(SimFault {
        kind: FaultKind::Config("calibration did not converge in 8 doublings".into()),
        tick: 0,
        proc: crate::mem::ProcId(0),
    })
}
