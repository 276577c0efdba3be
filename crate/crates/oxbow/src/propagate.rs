//! Activity-based domain propagation over the normalized <= rows.
//!
//! Each row's minimal activity (coefficients times their favorable bound)
//! either proves a conflict or yields per-variable bound tightenings.
//! Rounds repeat until bounds stop moving or a round cap is hit.

use crate::model::ProblemInstance;

const CHANGE_TOL: f64 = 1e-9;
const MAX_ROUNDS: usize = 50;

/// Working copy of the variable domains during a dive.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
}

impl DomainBox {
    pub fn from_instance(inst: &ProblemInstance) -> DomainBox {
        DomainBox {
            lower: inst.lower.clone(),
            upper: inst.upper.clone(),
            integer: inst.integer.clone(),
        }
    }

    pub fn fix(&mut self, j: usize, v: f64) {
        self.lower[j] = v;
        self.upper[j] = v;
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(j, &v)| v >= self.lower[j] - 1e-9 && v <= self.upper[j] + 1e-9)
    }

    /// Clamp a point into the box.
    pub fn project(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.max(self.lower[j]).min(self.upper[j]);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Propagation {
    /// Bounds reached a fixpoint (or the round cap); counts are for
    /// diagnostics.
    Fixpoint { rounds: usize, tightenings: usize },
    /// Row `row` cannot be satisfied by any point in the box.
    Conflict { row: usize },
}

impl Propagation {
    pub fn conflict_row(&self) -> Option<usize> {
        match self {
            Propagation::Conflict { row } => Some(*row),
            Propagation::Fixpoint { .. } => None,
        }
    }
}

/// Tightens `dom` in place to the propagation fixpoint of `inst`'s rows,
/// or reports the first conflicting row.
pub fn propagate(inst: &ProblemInstance, dom: &mut DomainBox, feas_tol: f64) -> Propagation {
    let mut tightenings = 0usize;
    for round in 1..=MAX_ROUNDS {
        let mut changed = false;
        for i in 0..inst.m() {
            match propagate_row(inst, dom, i, feas_tol) {
                RowOutcome::Conflict => return Propagation::Conflict { row: i },
                RowOutcome::Tightened(k) => {
                    tightenings += k;
                    changed = true;
                }
                RowOutcome::Unchanged => {}
            }
        }
        if !changed {
            return Propagation::Fixpoint {
                rounds: round,
                tightenings,
            };
        }
    }
    Propagation::Fixpoint {
        rounds: MAX_ROUNDS,
        tightenings,
    }
}

enum RowOutcome {
    Conflict,
    Tightened(usize),
    Unchanged,
}

fn propagate_row(
    inst: &ProblemInstance,
    dom: &mut DomainBox,
    i: usize,
    feas_tol: f64,
) -> RowOutcome {
    // Minimal activity with the single-infinity bookkeeping: one infinite
    // contribution still allows tightening the variable that carries it,
    // two or more make the row vacuous for now.
    let mut finite = 0.0;
    let mut infinities = 0usize;
    let mut inf_var = usize::MAX;
    for (j, a) in inst.row(i) {
        let contrib = if a > 0.0 {
            a * dom.lower[j]
        } else {
            a * dom.upper[j]
        };
        if contrib.is_finite() {
            finite += contrib;
        } else {
            infinities += 1;
            inf_var = j;
        }
    }
    let b = inst.rhs[i];
    if infinities >= 2 {
        return RowOutcome::Unchanged;
    }
    if infinities == 0 && finite > b + feas_tol {
        return RowOutcome::Conflict;
    }

    let mut count = 0usize;
    if infinities == 1 {
        // Only the infinite-bound variable can be tightened: the rest of
        // the row contributes `finite`.
        let a = inst
            .row(i)
            .find(|&(j, _)| j == inf_var)
            .map(|(_, v)| v)
            .unwrap();
        match tighten(dom, inf_var, a, b - finite) {
            Tighten::Conflict => return RowOutcome::Conflict,
            Tighten::Changed => count += 1,
            Tighten::Unchanged => {}
        }
        return if count > 0 {
            RowOutcome::Tightened(count)
        } else {
            RowOutcome::Unchanged
        };
    }

    let slack = b - finite;
    for (j, a) in inst.row(i) {
        // Residual capacity for j alone: take its own contribution back
        // out of the minimal activity.
        let own = if a > 0.0 {
            a * dom.lower[j]
        } else {
            a * dom.upper[j]
        };
        match tighten(dom, j, a, slack + own) {
            Tighten::Conflict => return RowOutcome::Conflict,
            Tighten::Changed => count += 1,
            Tighten::Unchanged => {}
        }
    }
    if count > 0 {
        RowOutcome::Tightened(count)
    } else {
        RowOutcome::Unchanged
    }
}

enum Tighten {
    Changed,
    Unchanged,
    Conflict,
}

/// Applies a*x_j <= cap to the box, rounding integer bounds inward.
fn tighten(dom: &mut DomainBox, j: usize, a: f64, cap: f64) -> Tighten {
    if !cap.is_finite() {
        return Tighten::Unchanged;
    }
    if a > 0.0 {
        let mut ub = cap / a;
        if dom.integer[j] {
            ub = (ub + 1e-9).floor();
        }
        if ub < dom.upper[j] - CHANGE_TOL {
            dom.upper[j] = ub;
            if dom.lower[j] > dom.upper[j] + CHANGE_TOL {
                return Tighten::Conflict;
            }
            return Tighten::Changed;
        }
    } else {
        let mut lb = cap / a;
        if dom.integer[j] {
            lb = (lb - 1e-9).ceil();
        }
        if lb > dom.lower[j] + CHANGE_TOL {
            dom.lower[j] = lb;
            if dom.lower[j] > dom.upper[j] + CHANGE_TOL {
                return Tighten::Conflict;
            }
            return Tighten::Changed;
        }
    }
    Tighten::Unchanged
}
