//! Fix-propagate-repair dives.
//!
//! A dive walks an LP-guided fixing order, propagating after every fixing.
//! Conflicts trigger a bounded repair: the offending level is retried once
//! with the nearest alternative value, and if that also fails the level is
//! abandoned and the dive moves on. Dives that fix every integer finish by
//! completing the continuous variables with a short PDHG run on the
//! restricted LP.

use crate::lp::PdhgSolver;
use crate::model::ProblemInstance;
use crate::pool::SolutionPool;
use crate::propagate::{propagate, DomainBox};
use crate::util::{clamp, round_half_up, WallClock};
use std::sync::Arc;

pub const DEFAULT_CONFLICT_BUDGET: usize = 20;
const COMPLETION_CHECKPOINTS: [usize; 2] = [1_000, 10_000];

#[derive(Clone, Debug, PartialEq)]
pub enum DiveOutcome {
    Feasible(Vec<f64>),
    Partial { point: Vec<f64>, violation: f64 },
    Abort,
}

#[derive(Clone, Debug)]
pub struct DiveResult {
    pub outcome: DiveOutcome,
    pub backtracks: usize,
    pub abandoned: usize,
}

#[derive(Clone, Debug)]
pub enum Completion {
    Feasible(Vec<f64>),
    Infeasible(Vec<f64>),
}

/// Integer variables sorted most-decided first: ascending distance from
/// the guide to its rounding, ties by descending reduced-cost magnitude,
/// then by index. Target values are the roundings clipped into the
/// instance domain.
pub fn fixing_order(
    inst: &ProblemInstance,
    guide: &[f64],
    rc: Option<&[f64]>,
) -> Vec<(usize, f64)> {
    assert_eq!(guide.len(), inst.n());
    let mut keyed: Vec<(f64, f64, usize)> = (0..inst.n())
        .filter(|&j| inst.integer[j])
        .map(|j| {
            let dist = (guide[j] - round_half_up(guide[j])).abs();
            let pull = rc.map_or(0.0, |r| r[j].abs());
            (dist, pull, j)
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    keyed
        .into_iter()
        .map(|(_, _, j)| {
            let v = clamp(round_half_up(guide[j]), inst.lower[j], inst.upper[j]);
            (j, v)
        })
        .collect()
}

/// Nearest in-domain integer different from `taken`, leaning toward the
/// guide when both neighbors qualify.
fn alternative_value(dom: &DomainBox, j: usize, taken: f64, guide: f64) -> Option<f64> {
    let down = taken - 1.0;
    let up = taken + 1.0;
    let down_ok = down >= dom.lower[j] - 1e-9;
    let up_ok = up <= dom.upper[j] + 1e-9;
    match (down_ok, up_ok) {
        (true, true) => Some(if guide > taken { up } else { down }),
        (true, false) => Some(down),
        (false, true) => Some(up),
        (false, false) => None,
    }
}

fn build_candidate(
    inst: &ProblemInstance,
    dom: &DomainBox,
    guide: &[f64],
    order: &[(usize, f64)],
) -> Vec<f64> {
    let mut target = vec![f64::NAN; inst.n()];
    for &(j, v) in order {
        target[j] = v;
    }
    (0..inst.n())
        .map(|j| {
            if inst.integer[j] {
                if dom.is_fixed(j) {
                    dom.lower[j]
                } else {
                    let t = if target[j].is_nan() {
                        round_half_up(guide[j])
                    } else {
                        target[j]
                    };
                    clamp(t, dom.lower[j], dom.upper[j])
                }
            } else {
                clamp(guide[j], dom.lower[j], dom.upper[j])
            }
        })
        .collect()
}

/// Runs one dive. Feasible results are submitted to the pool here; partial
/// results are returned for the caller to rank and submit.
pub fn fpr_dive(
    inst: &ProblemInstance,
    order: &[(usize, f64)],
    guide: &[f64],
    pool: &SolutionPool,
    conflict_budget: usize,
) -> DiveResult {
    assert_eq!(guide.len(), inst.n());
    let mut dom = DomainBox::from_instance(inst);
    let mut budget = conflict_budget;
    let mut backtracks = 0;
    let mut abandoned = 0;
    let feas_tol = crate::FEAS_TOL;

    if propagate(inst, &mut dom, feas_tol).conflict_row().is_some() {
        return DiveResult {
            outcome: DiveOutcome::Abort,
            backtracks,
            abandoned,
        };
    }

    let partial = |dom: &DomainBox, backtracks, abandoned| {
        let point = build_candidate(inst, dom, guide, order);
        let violation = inst.violation_measure(&point);
        DiveResult {
            outcome: DiveOutcome::Partial { point, violation },
            backtracks,
            abandoned,
        }
    };

    for &(j, preferred) in order {
        if dom.is_fixed(j) {
            continue;
        }
        let saved = dom.clone();
        let first = clamp(preferred, dom.lower[j], dom.upper[j]);
        dom.fix(j, first);
        if propagate(inst, &mut dom, feas_tol).conflict_row().is_none() {
            continue;
        }
        if budget == 0 {
            return partial(&saved, backtracks, abandoned);
        }
        budget -= 1;
        backtracks += 1;
        dom = saved.clone();
        let retry = alternative_value(&dom, j, first, guide[j]);
        let retried_ok = match retry {
            Some(v) => {
                dom.fix(j, v);
                propagate(inst, &mut dom, feas_tol).conflict_row().is_none()
            }
            None => false,
        };
        if retried_ok {
            continue;
        }
        if retry.is_some() {
            if budget == 0 {
                return partial(&saved, backtracks, abandoned);
            }
            budget -= 1;
            backtracks += 1;
        }
        dom = saved;
        abandoned += 1;
    }

    let candidate = build_candidate(inst, &dom, guide, order);
    let all_fixed = (0..inst.n()).all(|j| !inst.integer[j] || dom.is_fixed(j));
    let finished = if all_fixed {
        match complete_continuous(inst, &candidate, || pool.is_closed()) {
            Completion::Feasible(p) => p,
            Completion::Infeasible(p) => p,
        }
    } else {
        candidate
    };

    if inst.validate_default(&finished).is_feasible() {
        pool.submit_feasible(finished.clone(), "fpr");
        return DiveResult {
            outcome: DiveOutcome::Feasible(finished),
            backtracks,
            abandoned,
        };
    }
    let violation = inst.violation_measure(&finished);
    DiveResult {
        outcome: DiveOutcome::Partial {
            point: finished,
            violation,
        },
        backtracks,
        abandoned,
    }
}

/// Completes the continuous part of a point whose integer entries are
/// already fixed, by solving the restricted LP with integer bounds pinned.
pub fn complete_continuous(
    inst: &ProblemInstance,
    point: &[f64],
    should_stop: impl FnMut() -> bool,
) -> Completion {
    assert_eq!(point.len(), inst.n());
    debug_assert!((0..inst.n())
        .filter(|&j| inst.integer[j])
        .all(|j| (point[j] - round_half_up(point[j])).abs() <= crate::INT_TOL));

    if !inst.integer.iter().any(|&b| !b) {
        return if inst.validate_default(point).is_feasible() {
            Completion::Feasible(point.to_vec())
        } else {
            Completion::Infeasible(point.to_vec())
        };
    }

    let mut restricted = inst.clone();
    for j in 0..inst.n() {
        if inst.integer[j] {
            restricted.lower[j] = point[j];
            restricted.upper[j] = point[j];
        }
    }
    let mut solver = PdhgSolver::new(Arc::new(restricted), Arc::new(WallClock::new()));
    let snap = solver.run(&COMPLETION_CHECKPOINTS, should_stop, |_| {});
    let mut completed = snap.primal;
    for j in 0..inst.n() {
        if inst.integer[j] {
            completed[j] = point[j];
        }
    }
    if inst.validate_default(&completed).is_feasible() {
        Completion::Feasible(completed)
    } else {
        Completion::Infeasible(completed)
    }
}
