//! Constraint-weighted move scoring over maintained residuals.
//!
//! A candidate move (set variable j to a new value) is scored row by row:
//! each row contributes a penalty depending on how its residual r = a.x - b
//! changes. Satisfaction is tested as r <= 0 with no tolerance; the weighted
//! cases are
//!
//! * satisfied -> violated: -w
//! * violated -> satisfied: +w
//! * violated -> violated, strictly less violated: +w/2
//! * violated -> violated, strictly more violated: -w/2
//! * otherwise: 0
//!
//! The state keeps residuals, the violated-row count (at the feasibility
//! tolerance), the objective, and a packed bit mirror of the binary
//! variables, all updated incrementally per move. An optional cutoff row
//! `objective <= z* - delta` is scored and weighted like any other row.

use crate::model::ProblemInstance;
use crate::util::map_index;
use crate::{FEAS_TOL, INT_TOL};

/// Per-row positive weights, plus the cutoff row's weight, capped.
#[derive(Clone, Debug)]
pub struct Weights {
    pub row: Vec<f64>,
    pub cutoff: f64,
    pub cap: f64,
}

pub const WEIGHT_CAP: f64 = 1e6;

impl Weights {
    pub fn new(m: usize) -> Weights {
        Weights {
            row: vec![1.0; m],
            cutoff: 1.0,
            cap: WEIGHT_CAP,
        }
    }
}

/// The objective cutoff constraint `c.x + offset <= rhs`.
#[derive(Clone, Copy, Debug)]
pub struct CutoffRow {
    pub rhs: f64,
    /// Maintained residual `objective - rhs`.
    pub residual: f64,
}

/// Cutoff right-hand side for an incumbent of value z: z - 1e-6 * max(1, |z|).
pub fn cutoff_rhs(z: f64) -> f64 {
    z - 1e-6 * z.abs().max(1.0)
}

/// One penalty case for a row of weight `w` whose residual moves from
/// `r_old` to `r_new`.
pub fn penalty(w: f64, r_old: f64, r_new: f64) -> f64 {
    let sat_old = r_old <= 0.0;
    let sat_new = r_new <= 0.0;
    if sat_old {
        if sat_new {
            0.0
        } else {
            -w
        }
    } else if sat_new {
        w
    } else if r_new < r_old {
        0.5 * w
    } else if r_new > r_old {
        -0.5 * w
    } else {
        0.0
    }
}

/// Incumbent point with maintained residuals and bookkeeping.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Rows with residual above tol * max(1, |b_i|).
    pub violated: usize,
    /// Internal objective c.x + offset.
    pub objective: f64,
    pub cutoff: Option<CutoffRow>,
    pub feas_tol: f64,
    thresholds: Vec<f64>,
    /// Packed mirror of the binary variables, one bit per entry of
    /// `inst.binaries`.
    bits: Vec<u64>,
    /// Variable index -> position in `inst.binaries`, or -1.
    bin_slot: Vec<i32>,
    /// Integer variables currently away from a whole number.
    frac_int: Vec<bool>,
    pub frac_int_count: usize,
}

impl SearchState {
    pub fn new(inst: &ProblemInstance, x: Vec<f64>, feas_tol: f64) -> SearchState {
        let m = inst.m();
        let n = inst.n();
        assert_eq!(x.len(), n);
        let thresholds: Vec<f64> = (0..m)
            .map(|i| inst.violation_threshold(i, feas_tol))
            .collect();
        let mut bin_slot = vec![-1i32; n];
        for (k, &j) in inst.binaries.iter().enumerate() {
            bin_slot[j] = k as i32;
        }
        let mut st = SearchState {
            x,
            residuals: vec![0.0; m],
            violated: 0,
            objective: 0.0,
            cutoff: None,
            feas_tol,
            thresholds,
            bits: vec![0u64; inst.binaries.len().div_ceil(64)],
            bin_slot,
            frac_int: vec![false; n],
            frac_int_count: 0,
        };
        st.recompute(inst);
        st
    }

    /// Recomputes residuals, counts, objective, bits, and the cutoff
    /// residual from the point. Used at construction, after restarts, and by
    /// drift checks.
    pub fn recompute(&mut self, inst: &ProblemInstance) {
        self.residuals = inst.residuals(&self.x);
        self.violated = (0..inst.m())
            .filter(|&i| self.residuals[i] > self.thresholds[i])
            .count();
        self.objective = inst.objective(&self.x);
        if let Some(cut) = &mut self.cutoff {
            cut.residual = self.objective - cut.rhs;
        }
        for w in &mut self.bits {
            *w = 0;
        }
        for (k, &j) in inst.binaries.iter().enumerate() {
            if self.x[j] == 1.0 {
                self.bits[k / 64] |= 1u64 << (k % 64);
            }
        }
        self.frac_int_count = 0;
        for j in 0..inst.n() {
            self.frac_int[j] =
                inst.integer[j] && (self.x[j] - self.x[j].round()).abs() > INT_TOL;
            if self.frac_int[j] {
                self.frac_int_count += 1;
            }
        }
    }

    /// Replaces the point and recomputes everything; the cutoff row is kept.
    pub fn set_point(&mut self, inst: &ProblemInstance, x: Vec<f64>) {
        self.x = x;
        self.recompute(inst);
    }

    /// Installs or tightens the cutoff row for incumbent value `z`.
    pub fn set_cutoff_for(&mut self, z: f64) {
        let rhs = cutoff_rhs(z);
        match &mut self.cutoff {
            Some(cut) => {
                if rhs < cut.rhs {
                    cut.rhs = rhs;
                    cut.residual = self.objective - rhs;
                }
            }
            None => {
                self.cutoff = Some(CutoffRow {
                    rhs,
                    residual: self.objective - rhs,
                });
            }
        }
    }

    pub fn bit(&self, slot: usize) -> bool {
        self.bits[slot / 64] >> (slot % 64) & 1 == 1
    }

    pub fn binary_bits(&self) -> &[u64] {
        &self.bits
    }

    /// True when the cutoff row (if any) is satisfied.
    pub fn cutoff_ok(&self) -> bool {
        self.cutoff.map_or(true, |c| c.residual <= 0.0)
    }

    /// Rows feasible at tolerance, integers whole, cutoff satisfied.
    pub fn is_feasible(&self) -> bool {
        self.violated == 0 && self.frac_int_count == 0 && self.cutoff_ok()
    }

    pub fn row_violated(&self, i: usize) -> bool {
        self.residuals[i] > self.thresholds[i]
    }

    /// Indices of rows violated at the feasibility tolerance.
    pub fn violated_rows(&self) -> Vec<usize> {
        (0..self.residuals.len())
            .filter(|&i| self.row_violated(i))
            .collect()
    }

    pub fn cutoff_violated(&self) -> bool {
        self.cutoff
            .map_or(false, |c| c.residual > self.feas_tol * c.rhs.abs().max(1.0))
    }
}

/// Score of moving variable j to `target`: the sum of the row penalties over
/// j's column, plus the cutoff row when it is active and c_j is nonzero.
pub fn score_move(
    inst: &ProblemInstance,
    state: &SearchState,
    weights: &Weights,
    j: usize,
    target: f64,
) -> f64 {
    let dx = target - state.x[j];
    let mut s = 0.0;
    for (i, a) in inst.col(j) {
        let r = state.residuals[i];
        s += penalty(weights.row[i], r, r + a * dx);
    }
    if let Some(cut) = state.cutoff {
        let c = inst.obj[j];
        if c != 0.0 {
            s += penalty(weights.cutoff, cut.residual, cut.residual + c * dx);
        }
    }
    s
}

/// How batched flip scoring sweeps the matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipSweep {
    /// One pass over the nonzeros in row order, accumulating into per-column
    /// slots; reads each residual and weight once.
    RowWise,
    /// Per-column rescoring (the benchmark alternative).
    ColumnWise,
}

#[derive(Clone, Copy, Debug)]
pub struct BatchOptions {
    pub sweep: FlipSweep,
    pub parallel: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            sweep: FlipSweep::RowWise,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

/// Builds the column -> slot map used by [`flip_scores_batch`].
pub fn build_slot_map(n: usize, cols: &[usize]) -> Vec<i32> {
    let mut slot = vec![-1i32; n];
    for (k, &j) in cols.iter().enumerate() {
        slot[j] = k as i32;
    }
    slot
}

const ROW_CHUNK: usize = 512;

/// Scores the 0<->1 flip of every listed binary column in one sweep.
///
/// `slot_of` must map each listed column to its position in `cols` (see
/// [`build_slot_map`]); `out` is resized to `cols.len()`.
pub fn flip_scores_batch(
    inst: &ProblemInstance,
    state: &SearchState,
    weights: &Weights,
    cols: &[usize],
    slot_of: &[i32],
    opts: BatchOptions,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.resize(cols.len(), 0.0);
    if cols.is_empty() {
        return;
    }
    let dx: Vec<f64> = cols.iter().map(|&j| 1.0 - 2.0 * state.x[j]).collect();

    match opts.sweep {
        FlipSweep::ColumnWise => {
            let scores = map_index(cols.len(), opts.parallel, |k| {
                let j = cols[k];
                let mut s = 0.0;
                for (i, a) in inst.col(j) {
                    let r = state.residuals[i];
                    s += penalty(weights.row[i], r, r + a * dx[k]);
                }
                if let Some(cut) = state.cutoff {
                    let c = inst.obj[j];
                    if c != 0.0 {
                        s += penalty(weights.cutoff, cut.residual, cut.residual + c * dx[k]);
                    }
                }
                s
            });
            out.copy_from_slice(&scores);
        }
        FlipSweep::RowWise => {
            let m = inst.m();
            let sweep_chunk = |range: std::ops::Range<usize>, acc: &mut [f64]| {
                for i in range {
                    let r = state.residuals[i];
                    let w = weights.row[i];
                    for (j, a) in inst.row(i) {
                        let s = slot_of[j];
                        if s >= 0 {
                            let k = s as usize;
                            acc[k] += penalty(w, r, r + a * dx[k]);
                        }
                    }
                }
            };
            if opts.parallel && m > ROW_CHUNK {
                let partials = row_chunk_partials(m, cols.len(), &sweep_chunk);
                for part in partials {
                    for (slot, v) in part.iter().enumerate() {
                        out[slot] += v;
                    }
                }
            } else {
                sweep_chunk(0..m, out);
            }
            if let Some(cut) = state.cutoff {
                for (k, &j) in cols.iter().enumerate() {
                    let c = inst.obj[j];
                    if c != 0.0 {
                        out[k] += penalty(weights.cutoff, cut.residual, cut.residual + c * dx[k]);
                    }
                }
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn row_chunk_partials<F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync>(
    m: usize,
    width: usize,
    sweep: &F,
) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    let starts: Vec<usize> = (0..m).step_by(ROW_CHUNK).collect();
    starts
        .into_par_iter()
        .map(|lo| {
            let mut acc = vec![0.0; width];
            sweep(lo..(lo + ROW_CHUNK).min(m), &mut acc);
            acc
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn row_chunk_partials<F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync>(
    m: usize,
    width: usize,
    sweep: &F,
) -> Vec<Vec<f64>> {
    let mut acc = vec![0.0; width];
    sweep(0..m, &mut acc);
    vec![acc]
}

/// Applies the move `x_j := target`, updating residuals, the violated-row
/// count, objective, cutoff residual, bits, and integrality bookkeeping in
/// O(nnz of column j).
pub fn apply_move(inst: &ProblemInstance, state: &mut SearchState, j: usize, target: f64) {
    let dx = target - state.x[j];
    if dx == 0.0 {
        return;
    }
    for (i, a) in inst.col(j) {
        let old = state.residuals[i];
        let new = old + a * dx;
        state.residuals[i] = new;
        let was = old > state.thresholds[i];
        let is = new > state.thresholds[i];
        if was != is {
            if is {
                state.violated += 1;
            } else {
                state.violated -= 1;
            }
        }
    }
    let c = inst.obj[j];
    if c != 0.0 {
        state.objective += c * dx;
        if let Some(cut) = &mut state.cutoff {
            cut.residual += c * dx;
        }
    }
    state.x[j] = target;
    let slot = state.bin_slot[j];
    if slot >= 0 {
        let k = slot as usize;
        let mask = 1u64 << (k % 64);
        if target == 1.0 {
            state.bits[k / 64] |= mask;
        } else {
            state.bits[k / 64] &= !mask;
        }
    }
    if inst.integer[j] {
        let frac = (target - target.round()).abs() > INT_TOL;
        if frac != state.frac_int[j] {
            state.frac_int[j] = frac;
            if frac {
                state.frac_int_count += 1;
            } else {
                state.frac_int_count -= 1;
            }
        }
    }
}

/// Additively bumps the weight of every violated row (and the cutoff row
/// when requested and violated), capped. Called when the search is stuck.
pub fn update_weights(state: &SearchState, weights: &mut Weights, include_cutoff: bool) {
    for i in 0..weights.row.len() {
        if state.row_violated(i) {
            weights.row[i] = (weights.row[i] + 1.0).min(weights.cap);
        }
    }
    if include_cutoff && state.cutoff_violated() {
        weights.cutoff = (weights.cutoff + 1.0).min(weights.cap);
    }
}

pub fn default_feas_tol() -> f64 {
    FEAS_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_row_inst() -> ProblemInstance {
        // 2x1 + x2 <= 2 and x1 - x2 <= 0, binaries.
        ProblemInstance::from_parts(
            "t",
            vec![1.0, -1.0],
            vec![
                (vec![(0, 2.0), (1, 1.0)], 2.0),
                (vec![(0, 1.0), (1, -1.0)], 0.0),
            ],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        )
        .unwrap()
    }

    #[test]
    fn penalty_covers_all_five_cases() {
        assert_eq!(penalty(1.0, -1.0, 1.0), -1.0); // satisfied -> violated
        assert_eq!(penalty(2.0, 2.0, 0.0), 2.0); // violated -> satisfied
        assert_eq!(penalty(2.0, 2.0, 1.0), 1.0); // less violated
        assert_eq!(penalty(1.0, 2.0, 3.0), -0.5); // more violated
        assert_eq!(penalty(1.0, -1.0, -0.5), 0.0); // stays satisfied
        assert_eq!(penalty(3.0, 2.0, 2.0), 0.0); // equally violated
    }

    #[test]
    fn satisfaction_boundary_is_exactly_zero() {
        assert_eq!(penalty(1.0, 0.0, 1e-12), -1.0);
        assert_eq!(penalty(1.0, 1e-12, 0.0), 1.0);
        assert_eq!(penalty(1.0, 0.0, -1.0), 0.0);
    }

    #[test]
    fn score_move_sums_per_row_penalties() {
        let inst = two_row_inst();
        let mut w = Weights::new(2);
        w.row = vec![1.5, 2.0];
        let state = SearchState::new(&inst, vec![1.0, 0.0], 1e-6);
        // Residuals: r1 = 0, r2 = 1.
        assert_eq!(state.residuals, vec![0.0, 1.0]);
        // Flip x1 -> 0: r1 0 -> -2 stays satisfied (0), r2 1 -> 0 becomes
        // satisfied (+2).
        let expected = penalty(1.5, 0.0, -2.0) + penalty(2.0, 1.0, 0.0);
        assert_eq!(score_move(&inst, &state, &w, 0, 0.0), expected);
        assert_eq!(expected, 2.0);
    }

    #[test]
    fn empty_column_scores_zero() {
        let inst = ProblemInstance::from_parts(
            "t",
            vec![0.0, 0.0],
            vec![(vec![(0, 1.0)], 1.0)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        )
        .unwrap();
        let w = Weights::new(1);
        let state = SearchState::new(&inst, vec![0.0, 0.0], 1e-6);
        assert_eq!(score_move(&inst, &state, &w, 1, 1.0), 0.0);
    }

    #[test]
    fn cutoff_row_is_scored_when_active() {
        let inst = two_row_inst();
        let w = Weights::new(2);
        let mut state = SearchState::new(&inst, vec![0.0, 0.0], 1e-6);
        let base = score_move(&inst, &state, &w, 0, 1.0);
        // Incumbent value 0: cutoff objective <= -1e-6. Raising x1 takes the
        // objective from 0 (violated by 1e-6) to 1 (more violated): -w/2.
        state.set_cutoff_for(0.0);
        assert!(state.cutoff_violated() == false); // within tolerance of its rhs
        let with_cut = score_move(&inst, &state, &w, 0, 1.0);
        assert_eq!(with_cut, base - 0.5);
    }

    #[test]
    fn batch_matches_scalar_on_both_sweeps() {
        let inst = two_row_inst();
        let mut w = Weights::new(2);
        w.row = vec![1.5, 2.0];
        let mut state = SearchState::new(&inst, vec![1.0, 1.0], 1e-6);
        state.set_cutoff_for(5.0);
        let cols = vec![0usize, 1];
        let slot = build_slot_map(inst.n(), &cols);
        let mut row_wise = Vec::new();
        let mut col_wise = Vec::new();
        flip_scores_batch(
            &inst,
            &state,
            &w,
            &cols,
            &slot,
            BatchOptions {
                sweep: FlipSweep::RowWise,
                parallel: false,
            },
            &mut row_wise,
        );
        flip_scores_batch(
            &inst,
            &state,
            &w,
            &cols,
            &slot,
            BatchOptions {
                sweep: FlipSweep::ColumnWise,
                parallel: false,
            },
            &mut col_wise,
        );
        for k in 0..cols.len() {
            let scalar = score_move(&inst, &state, &w, cols[k], 1.0 - state.x[cols[k]]);
            assert!((row_wise[k] - scalar).abs() <= 1e-9);
            assert!((col_wise[k] - scalar).abs() <= 1e-9);
        }
    }

    #[test]
    fn apply_move_updates_bookkeeping_incrementally() {
        let inst = two_row_inst();
        let mut state = SearchState::new(&inst, vec![1.0, 0.0], 1e-6);
        assert_eq!(state.violated, 1);
        assert!(state.bit(0));
        assert!(!state.bit(1));
        apply_move(&inst, &mut state, 0, 0.0);
        assert_eq!(state.residuals, vec![-2.0, 0.0]);
        assert_eq!(state.violated, 0);
        assert_eq!(state.objective, 0.0);
        assert!(!state.bit(0));
        let mut fresh = state.clone();
        fresh.recompute(&inst);
        for i in 0..inst.m() {
            assert!((state.residuals[i] - fresh.residuals[i]).abs() <= 1e-9);
        }
        assert_eq!(state.violated, fresh.violated);
    }

    #[test]
    fn apply_move_roundtrip_restores_state() {
        let inst = two_row_inst();
        let mut state = SearchState::new(&inst, vec![1.0, 0.0], 1e-6);
        let before = state.clone();
        apply_move(&inst, &mut state, 1, 1.0);
        apply_move(&inst, &mut state, 1, 0.0);
        assert_eq!(state.x, before.x);
        assert_eq!(state.violated, before.violated);
        for i in 0..inst.m() {
            assert!((state.residuals[i] - before.residuals[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn update_weights_bumps_only_violated_rows_and_caps() {
        let inst = two_row_inst();
        let state = SearchState::new(&inst, vec![1.0, 0.0], 1e-6);
        let mut w = Weights::new(2);
        update_weights(&state, &mut w, false);
        assert_eq!(w.row, vec![1.0, 2.0]);
        w.row[1] = w.cap;
        update_weights(&state, &mut w, false);
        assert_eq!(w.row[1], w.cap);
    }

    #[test]
    fn cutoff_weight_update_honors_flag() {
        let inst = two_row_inst();
        let mut state = SearchState::new(&inst, vec![1.0, 0.0], 1e-6);
        state.set_cutoff_for(-3.0);
        assert!(state.cutoff_violated());
        let mut w = Weights::new(2);
        update_weights(&state, &mut w, false);
        assert_eq!(w.cutoff, 1.0);
        update_weights(&state, &mut w, true);
        assert_eq!(w.cutoff, 2.0);
    }

    #[test]
    fn cutoff_tightens_monotonically() {
        let inst = two_row_inst();
        let mut state = SearchState::new(&inst, vec![0.0, 0.0], 1e-6);
        state.set_cutoff_for(10.0);
        let first = state.cutoff.unwrap().rhs;
        state.set_cutoff_for(20.0);
        assert_eq!(state.cutoff.unwrap().rhs, first);
        state.set_cutoff_for(5.0);
        assert!(state.cutoff.unwrap().rhs < first);
    }

    #[test]
    fn fractional_integer_bookkeeping() {
        let inst = ProblemInstance::from_parts(
            "t",
            vec![0.0],
            vec![(vec![(0, 1.0)], 5.0)],
            vec![0.0],
            vec![4.0],
            vec![true],
        )
        .unwrap();
        let mut state = SearchState::new(&inst, vec![0.5], 1e-6);
        assert_eq!(state.frac_int_count, 1);
        assert!(!state.is_feasible());
        apply_move(&inst, &mut state, 0, 2.0);
        assert_eq!(state.frac_int_count, 0);
        assert!(state.is_feasible());
    }
}
