//! Best value shift per column via sort-scan-argmax over breakpoint
//! triplets.
//!
//! For a single non-binary variable j, every row it touches contributes one
//! breakpoint: the value of x_j at which the row flips between satisfied and
//! violated (holding all other variables at the incumbent). Each row emits
//! up to two `(value, marker, delta)` triplets plus constant adjustments to
//! a base score `beta` and an incumbent-side adjustment `alpha`; after
//! sorting the triplets by `(value, marker)` and prefix-summing the deltas,
//! the score of candidate value v is
//!
//! `sigma = beta + prefix + alpha * [v > incumbent]`
//!
//! and the best admissible move is the argmax over marker -1 entries inside
//! the bounds, excluding the incumbent itself. The batched form runs the
//! same three phases (segmented sort, segmented inclusive scan, segmented
//! argmax) over the concatenated triplet arrays of many columns; short
//! segments are sorted by fixed compare-exchange networks, longer ones fall
//! back to a general sort.

use crate::model::ProblemInstance;
use crate::scoring::{SearchState, Weights};
use crate::util::{for_each_item, map_index, split_segments};

/// One breakpoint entry. Marker -1 entries are move candidates and carry
/// deltas >= 0; marker +1 entries apply penalties past their value and
/// carry deltas <= 0. At equal value, -1 sorts before +1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub value: f64,
    pub marker: i8,
    pub delta: f64,
}

impl Triplet {
    fn new(value: f64, marker: i8, delta: f64) -> Triplet {
        // Normalize -0.0 so IEEE-equal values never split under sorting.
        let value = if value == 0.0 { 0.0 } else { value };
        Triplet {
            value,
            marker,
            delta,
        }
    }

    fn key_less(&self, other: &Triplet) -> bool {
        self.value < other.value || (self.value == other.value && self.marker < other.marker)
    }
}

fn cmp_triplet(a: &Triplet, b: &Triplet) -> std::cmp::Ordering {
    a.value
        .partial_cmp(&b.value)
        .unwrap()
        .then(a.marker.cmp(&b.marker))
}

/// Value of x_j at which a row with coefficient `a` and residual `r` flips
/// satisfaction, given incumbent value `x_j`; integer columns round to the
/// last admissible whole number (floor for a > 0, ceil for a < 0).
pub fn breakpoint_value(x_j: f64, r: f64, a: f64, integer: bool) -> f64 {
    debug_assert!(a != 0.0);
    let t = x_j - r / a;
    if integer {
        if a > 0.0 {
            t.floor()
        } else {
            t.ceil()
        }
    } else {
        t
    }
}

/// Breakpoint of row i for column j at the current state.
pub fn breakpoint(inst: &ProblemInstance, state: &SearchState, i: usize, j: usize) -> f64 {
    let a = inst
        .row(i)
        .find(|&(col, _)| col == j)
        .map(|(_, v)| v)
        .expect("row does not touch column");
    breakpoint_value(state.x[j], state.residuals[i], a, inst.integer[j])
}

/// The per-column shift problem: accumulators plus unsorted triplets.
#[derive(Clone, Debug)]
pub struct ColumnProblem {
    pub beta: f64,
    pub alpha: f64,
    pub incumbent: f64,
    pub lower: f64,
    pub upper: f64,
    pub triplets: Vec<Triplet>,
}

/// Builds the shift problem for a non-binary column. Binary columns are
/// handled by flip scoring and are rejected here.
pub fn build_column_problem(
    inst: &ProblemInstance,
    state: &SearchState,
    weights: &Weights,
    j: usize,
) -> ColumnProblem {
    assert!(
        !(inst.integer[j] && inst.lower[j] == 0.0 && inst.upper[j] == 1.0),
        "binary column {j} belongs to flip scoring, not shift scoring"
    );
    let x = state.x[j];
    let is_int = inst.integer[j];
    let mut cp = ColumnProblem {
        beta: 0.0,
        alpha: 0.0,
        incumbent: x,
        lower: inst.lower[j],
        upper: inst.upper[j],
        triplets: Vec::with_capacity(inst.col_nnz(j) + 2),
    };
    for (i, a) in inst.col(j) {
        emit_row(&mut cp, x, state.residuals[i], a, weights.row[i], is_int);
    }
    if let Some(cut) = state.cutoff {
        let c = inst.obj[j];
        if c != 0.0 {
            emit_row(&mut cp, x, cut.residual, c, weights.cutoff, is_int);
        }
    }
    // Bound entries. An infinite bound is replaced by the most extreme
    // emitted breakpoint moved one further out, or omitted when the column
    // has no breakpoints: unbounded moves with positive score only arise
    // from violated rows, whose breakpoints are finite.
    let bp_min = cp
        .triplets
        .iter()
        .map(|t| t.value)
        .fold(f64::INFINITY, f64::min);
    let bp_max = cp
        .triplets
        .iter()
        .map(|t| t.value)
        .fold(f64::NEG_INFINITY, f64::max);
    if cp.lower.is_finite() {
        cp.triplets.push(Triplet::new(cp.lower, -1, 0.0));
    } else if bp_min.is_finite() {
        cp.triplets.push(Triplet::new(bp_min - 1.0, -1, 0.0));
    }
    if cp.upper.is_finite() {
        cp.triplets.push(Triplet::new(cp.upper, -1, 0.0));
    } else if bp_max.is_finite() {
        cp.triplets.push(Triplet::new(bp_max + 1.0, -1, 0.0));
    }
    cp
}

fn emit_row(cp: &mut ColumnProblem, x: f64, r: f64, a: f64, w: f64, is_int: bool) {
    let t = breakpoint_value(x, r, a, is_int);
    if a < 0.0 {
        // Row demands x_j >= t.
        if x < t {
            cp.beta -= 0.5 * w;
            cp.alpha += w;
            cp.triplets.push(Triplet::new(t, -1, 0.5 * w));
        } else if x > t {
            cp.beta -= w;
            cp.triplets.push(Triplet::new(t, -1, w));
        } else {
            cp.beta -= w;
            cp.alpha += w;
        }
    } else {
        // Row demands x_j <= t.
        if x > t {
            cp.beta += w;
            cp.alpha -= w;
            cp.triplets.push(Triplet::new(t, -1, 0.0));
            cp.triplets.push(Triplet::new(t, 1, -0.5 * w));
        } else if x < t {
            cp.triplets.push(Triplet::new(t, -1, 0.0));
            cp.triplets.push(Triplet::new(t, 1, -w));
        } else {
            cp.alpha -= w;
        }
    }
}

/// Longest segment handled by the fixed compare-exchange networks.
pub const NETWORK_MAX: usize = 16;

/// Batcher odd-even merge sort as a data-independent compare-exchange
/// sequence; indices past the segment length act as virtual +infinity
/// sentinels and are skipped.
fn network_sort(seg: &mut [Triplet]) {
    let len = seg.len();
    if len < 2 {
        return;
    }
    let n = len.next_power_of_two();
    let mut p = 1;
    while p < n {
        let mut k = p;
        while k >= 1 {
            let mut j = k % p;
            while j + k < n {
                for i in 0..k {
                    let a = i + j;
                    let b = i + j + k;
                    if b >= n {
                        break;
                    }
                    if a / (2 * p) == b / (2 * p) && b < len && seg[b].key_less(&seg[a]) {
                        seg.swap(a, b);
                    }
                }
                j += 2 * k;
            }
            k /= 2;
        }
        p *= 2;
    }
}

fn sort_segment(seg: &mut [Triplet], force_general: bool) {
    if !force_general && seg.len() <= NETWORK_MAX {
        network_sort(seg);
    } else {
        seg.sort_unstable_by(cmp_triplet);
    }
}

/// Inclusive scan of deltas, then sigma per entry.
fn scan_sigma(cp_beta: f64, cp_alpha: f64, incumbent: f64, seg: &[Triplet], sigma: &mut [f64]) {
    let mut prefix = 0.0;
    for (k, t) in seg.iter().enumerate() {
        prefix += t.delta;
        let side = if t.value > incumbent { cp_alpha } else { 0.0 };
        sigma[k] = cp_beta + prefix + side;
    }
}

/// Argmax over marker -1 entries within bounds, excluding the incumbent;
/// ties prefer the value closest to the incumbent, then the smaller value.
/// A winning score <= 0 collapses to (incumbent, 0).
fn arg_best(
    incumbent: f64,
    lower: f64,
    upper: f64,
    seg: &[Triplet],
    sigma: &[f64],
) -> (f64, f64) {
    let mut best: Option<(f64, f64)> = None;
    for (k, t) in seg.iter().enumerate() {
        if t.marker != -1 || t.value == incumbent || t.value < lower || t.value > upper {
            continue;
        }
        let s = sigma[k];
        let better = match best {
            None => true,
            Some((bs, bv)) => {
                s > bs
                    || (s == bs
                        && ((t.value - incumbent).abs() < (bv - incumbent).abs()
                            || ((t.value - incumbent).abs() == (bv - incumbent).abs()
                                && t.value < bv)))
            }
        };
        if better {
            best = Some((s, t.value));
        }
    }
    match best {
        Some((s, v)) if s > 0.0 => (v, s),
        _ => (incumbent, 0.0),
    }
}

/// Solves one column: the best (value, score) move for variable j, or
/// (incumbent, 0) when nothing scores positive.
pub fn solve_column(
    inst: &ProblemInstance,
    state: &SearchState,
    weights: &Weights,
    j: usize,
) -> (f64, f64) {
    let mut cp = build_column_problem(inst, state, weights, j);
    sort_segment(&mut cp.triplets, false);
    let mut sigma = vec![0.0; cp.triplets.len()];
    scan_sigma(cp.beta, cp.alpha, cp.incumbent, &cp.triplets, &mut sigma);
    arg_best(cp.incumbent, cp.lower, cp.upper, &cp.triplets, &sigma)
}

#[derive(Clone, Copy, Debug)]
pub struct ShiftOptions {
    pub parallel: bool,
    /// Route every segment through the general sort (the network path's
    /// equivalence partner in tests and benches).
    pub force_general_sort: bool,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            parallel: cfg!(feature = "parallel"),
            force_general_sort: false,
        }
    }
}

/// Best shifts for many columns at once: segmented sort, segmented scan,
/// segmented argmax over one concatenated triplet array. Results are
/// identical to per-column [`solve_column`].
pub fn best_shifts_batch(
    inst: &ProblemInstance,
    state: &SearchState,
    weights: &Weights,
    cols: &[usize],
    opts: ShiftOptions,
) -> Vec<(f64, f64)> {
    let probs = map_index(cols.len(), opts.parallel, |k| {
        build_column_problem(inst, state, weights, cols[k])
    });

    let mut seg_ptr = Vec::with_capacity(cols.len() + 1);
    seg_ptr.push(0usize);
    for cp in &probs {
        seg_ptr.push(seg_ptr.last().unwrap() + cp.triplets.len());
    }
    let total = *seg_ptr.last().unwrap();
    let mut triplets = Vec::with_capacity(total);
    for cp in &probs {
        triplets.extend_from_slice(&cp.triplets);
    }

    // Phase 1: segmented sort with length-bucketed dispatch.
    let force = opts.force_general_sort;
    for_each_item(
        split_segments(&mut triplets, &seg_ptr),
        opts.parallel,
        |seg| sort_segment(seg, force),
    );

    // Phase 2: segmented inclusive scan into sigma.
    let mut sigma = vec![0.0; total];
    let sig_segs: Vec<(usize, &mut [f64])> = split_segments(&mut sigma, &seg_ptr)
        .into_iter()
        .enumerate()
        .collect();
    let trip_ref = &triplets;
    let probs_ref = &probs;
    let ptr_ref = &seg_ptr;
    for_each_item(sig_segs, opts.parallel, |(k, seg)| {
        let cp = &probs_ref[k];
        scan_sigma(
            cp.beta,
            cp.alpha,
            cp.incumbent,
            &trip_ref[ptr_ref[k]..ptr_ref[k + 1]],
            seg,
        );
    });

    // Phase 3: segmented argmax.
    map_index(cols.len(), opts.parallel, |k| {
        let cp = &probs[k];
        arg_best(
            cp.incumbent,
            cp.lower,
            cp.upper,
            &triplets[seg_ptr[k]..seg_ptr[k + 1]],
            &sigma[seg_ptr[k]..seg_ptr[k + 1]],
        )
    })
}
