//! Instance generators, brute-force oracles, and the bundled MPS fixture
//! set. Everything here exists to check the real solver components against
//! independent references, so the implementations favor obviousness over
//! speed and stay at enumeration scale.

use crate::model::{ModelError, ProblemInstance};
use crate::scoring::{score_move, SearchState, Weights};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

/// Shape of a generated random instance. All draws are integral so that
/// scores and residuals stay exactly representable.
#[derive(Clone, Debug)]
pub struct RandomMipConfig {
    pub n_range: (usize, usize),
    pub m_range: (usize, usize),
    /// Bounds are drawn inside [-bound_abs, bound_abs].
    pub bound_abs: i64,
    /// Nonzero coefficients are drawn from [-coeff_abs, coeff_abs].
    pub coeff_abs: i64,
    /// Probability that a variable is integer.
    pub integer_share: f64,
    /// Probability that an integer variable is binary.
    pub binary_share: f64,
    /// Fill probability for matrix entries beyond the mandatory ones.
    pub density: f64,
    /// Pick a secret point and give every row enough right-hand side to
    /// admit it.
    pub ensure_feasible: bool,
}

impl RandomMipConfig {
    /// Enumeration-scale mixed instances for the shift and flip oracles.
    pub fn small_integer() -> RandomMipConfig {
        RandomMipConfig {
            n_range: (1, 6),
            m_range: (1, 8),
            bound_abs: 4,
            coeff_abs: 3,
            integer_share: 0.8,
            binary_share: 0.3,
            density: 0.4,
            ensure_feasible: false,
        }
    }

    /// Feasible all-binary instances for the pump tests.
    pub fn binary_pump() -> RandomMipConfig {
        RandomMipConfig {
            n_range: (5, 15),
            m_range: (3, 10),
            bound_abs: 1,
            coeff_abs: 3,
            integer_share: 1.0,
            binary_share: 1.0,
            density: 0.5,
            ensure_feasible: true,
        }
    }

    /// Tiny boxes whose integer grids can be enumerated outright.
    pub fn enumerable_box() -> RandomMipConfig {
        RandomMipConfig {
            n_range: (1, 4),
            m_range: (1, 6),
            bound_abs: 2,
            coeff_abs: 3,
            integer_share: 1.0,
            binary_share: 0.0,
            density: 0.5,
            ensure_feasible: false,
        }
    }

    /// Feasible bounded all-continuous instances for the LP solver.
    pub fn lp_box() -> RandomMipConfig {
        RandomMipConfig {
            n_range: (2, 6),
            m_range: (2, 8),
            bound_abs: 5,
            coeff_abs: 3,
            integer_share: 0.0,
            binary_share: 0.0,
            density: 0.6,
            ensure_feasible: true,
        }
    }
}

/// Reproducible random instance. Every variable appears in at least one
/// row and every row has at least one entry.
pub fn gen_random_mip(seed: u64, cfg: &RandomMipConfig) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(cfg.n_range.0..=cfg.n_range.1);
    let m = rng.gen_range(cfg.m_range.0..=cfg.m_range.1);

    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut integer = Vec::with_capacity(n);
    for _ in 0..n {
        let is_int = rng.gen_bool(cfg.integer_share);
        if is_int && rng.gen_bool(cfg.binary_share) {
            lower.push(0.0);
            upper.push(1.0);
        } else {
            let lo = rng.gen_range(-cfg.bound_abs..=cfg.bound_abs);
            let hi = rng.gen_range(lo..=cfg.bound_abs);
            lower.push(lo as f64);
            upper.push(hi as f64);
        }
        integer.push(is_int);
    }
    let obj: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(-cfg.coeff_abs..=cfg.coeff_abs) as f64)
        .collect();

    let mut present = vec![vec![false; n]; m];
    for j in 0..n {
        present[j % m][j] = true;
    }
    for row in present.iter_mut() {
        if !row.iter().any(|&p| p) {
            row[rng.gen_range(0..n)] = true;
        }
    }
    for row in present.iter_mut() {
        for cell in row.iter_mut() {
            if !*cell && rng.gen_bool(cfg.density) {
                *cell = true;
            }
        }
    }
    let coeff = |rng: &mut ChaCha8Rng| {
        let mag = rng.gen_range(1..=cfg.coeff_abs);
        if rng.gen_bool(0.5) {
            mag as f64
        } else {
            -mag as f64
        }
    };
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(m);
    for row in present.iter() {
        let entries: Vec<(usize, f64)> = (0..n)
            .filter(|&j| row[j])
            .map(|j| (j, coeff(&mut rng)))
            .collect();
        rows.push((entries, 0.0));
    }

    let probe: Vec<f64> = (0..n)
        .map(|j| rng.gen_range(lower[j] as i64..=upper[j] as i64) as f64)
        .collect();
    for (entries, b) in rows.iter_mut() {
        let act: f64 = entries.iter().map(|&(j, a)| a * probe[j]).sum();
        *b = if cfg.ensure_feasible {
            act + rng.gen_range(0..=2) as f64
        } else {
            act + rng.gen_range(-3..=3) as f64
        };
    }

    ProblemInstance::from_parts(&format!("rand-{seed:016x}"), obj, rows, lower, upper, integer)
        .expect("generated instance must build")
}

/// Uniform point inside the box, integral on integer variables. Infinite
/// bounds are clamped to a small window first.
pub fn random_point<R: Rng>(rng: &mut R, inst: &ProblemInstance) -> Vec<f64> {
    (0..inst.n())
        .map(|j| {
            let lo = inst.lower[j].max(-6.0);
            let hi = inst.upper[j].min(6.0).max(lo);
            if inst.integer[j] {
                rng.gen_range(lo as i64..=hi as i64) as f64
            } else {
                let quarters = ((hi - lo) * 4.0).round() as i64;
                lo + rng.gen_range(0..=quarters) as f64 * 0.25
            }
        })
        .collect()
}

/// Reference for the shift kernel: evaluates score_move at every row
/// breakpoint clamped into the bounds plus the finite bounds themselves,
/// excluding the incumbent. Ties prefer the value closest to the
/// incumbent, then the smaller value; no positive score means stay put.
pub fn brute_force_best_shift(
    inst: &ProblemInstance,
    state: &SearchState,
    weights: &Weights,
    j: usize,
) -> (f64, f64) {
    let x = state.x[j];
    let (lo, hi) = (inst.lower[j], inst.upper[j]);
    let is_int = inst.integer[j];
    let clip = |t: f64| t.max(lo).min(hi);
    let mut candidates = Vec::new();
    for (i, a) in inst.col(j) {
        let t = x - state.residuals[i] / a;
        let t = if is_int {
            if a > 0.0 {
                t.floor()
            } else {
                t.ceil()
            }
        } else {
            t
        };
        candidates.push(clip(t));
    }
    if let Some(cut) = state.cutoff {
        let c = inst.obj[j];
        if c != 0.0 {
            let t = x - cut.residual / c;
            let t = if is_int {
                if c > 0.0 {
                    t.floor()
                } else {
                    t.ceil()
                }
            } else {
                t
            };
            candidates.push(clip(t));
        }
    }
    if lo.is_finite() {
        candidates.push(lo);
    }
    if hi.is_finite() {
        candidates.push(hi);
    }

    let mut best: Option<(f64, f64)> = None;
    for &v in &candidates {
        if v == x || !v.is_finite() {
            continue;
        }
        let s = score_move(inst, state, weights, j, v);
        let better = match best {
            None => true,
            Some((bs, bv)) => {
                s > bs
                    || (s == bs
                        && ((v - x).abs() < (bv - x).abs()
                            || ((v - x).abs() == (bv - x).abs() && v < bv)))
            }
        };
        if better {
            best = Some((s, v));
        }
    }
    match best {
        Some((s, v)) if s > 0.0 => (v, s),
        _ => (x, 0.0),
    }
}

const GRID_LIMIT: u64 = 1_000_000;

/// Exhaustive optimum by integer-grid enumeration with single-variable
/// line-search completion for the continuous part. Returns the minimizing
/// point and its internal objective, or None when no grid point is
/// feasible. Panics when the grid exceeds a million points or more than
/// one continuous variable is present (an all-continuous instance
/// delegates to [`lp_vertex_opt`]).
pub fn brute_force_mip_opt(inst: &ProblemInstance) -> Option<(Vec<f64>, f64)> {
    let ints: Vec<usize> = (0..inst.n()).filter(|&j| inst.integer[j]).collect();
    let conts: Vec<usize> = (0..inst.n()).filter(|&j| !inst.integer[j]).collect();
    if ints.is_empty() && conts.len() > 1 {
        return lp_vertex_opt(inst);
    }
    assert!(
        conts.len() <= 1,
        "brute force supports at most one continuous variable alongside integers"
    );
    let mut grid: u64 = 1;
    for &j in &ints {
        assert!(
            inst.lower[j].is_finite() && inst.upper[j].is_finite(),
            "integer variable {j} must have finite bounds for enumeration"
        );
        let span = (inst.upper[j] - inst.lower[j]) as u64 + 1;
        grid = grid.saturating_mul(span);
        assert!(grid <= GRID_LIMIT, "integer grid exceeds {GRID_LIMIT} points");
    }

    let mut x = vec![0.0; inst.n()];
    let mut digits: Vec<i64> = ints.iter().map(|&j| inst.lower[j] as i64).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        for (d, &j) in digits.iter().zip(&ints) {
            x[j] = *d as f64;
        }
        if let Some(obj) = complete_assignment(inst, &mut x, &conts) {
            if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                best = Some((x.clone(), obj));
            }
        }
        // Odometer step.
        let mut k = 0;
        loop {
            if k == digits.len() {
                return best;
            }
            digits[k] += 1;
            if digits[k] <= inst.upper[ints[k]] as i64 {
                break;
            }
            digits[k] = inst.lower[ints[k]] as i64;
            k += 1;
        }
    }
}

/// Fills in the single continuous variable (if any) optimally for the
/// fixed integer part, returning the internal objective of the completed
/// point or None when the fixing is infeasible.
fn complete_assignment(inst: &ProblemInstance, x: &mut [f64], conts: &[usize]) -> Option<f64> {
    const EPS: f64 = 1e-9;
    if conts.is_empty() {
        for i in 0..inst.m() {
            if inst.row_activity(i, x) > inst.rhs[i] + EPS {
                return None;
            }
        }
        return Some(inst.objective(x));
    }
    let k = conts[0];
    let mut glo = inst.lower[k];
    let mut ghi = inst.upper[k];
    for i in 0..inst.m() {
        let mut a = 0.0;
        let mut act = 0.0;
        for (j, v) in inst.row(i) {
            if j == k {
                a = v;
            } else {
                act += v * x[j];
            }
        }
        if a == 0.0 {
            if act > inst.rhs[i] + EPS {
                return None;
            }
        } else if a > 0.0 {
            ghi = ghi.min((inst.rhs[i] - act) / a);
        } else {
            glo = glo.max((inst.rhs[i] - act) / a);
        }
    }
    if glo > ghi + EPS {
        return None;
    }
    let c = inst.obj[k];
    let pick = if c > 0.0 {
        glo
    } else if c < 0.0 {
        ghi
    } else if glo.is_finite() {
        glo
    } else if ghi.is_finite() {
        ghi
    } else {
        0.0
    };
    assert!(pick.is_finite(), "continuous completion is unbounded");
    x[k] = pick;
    Some(inst.objective(x))
}

/// LP optimum by vertex enumeration over row and bound constraints.
/// Requires a finite box so the feasible set is a polytope; every vertex
/// is the intersection of n tight constraints, so the minimum over all
/// feasible intersection points is the LP optimum.
pub fn lp_vertex_opt(inst: &ProblemInstance) -> Option<(Vec<f64>, f64)> {
    let n = inst.n();
    assert!(
        (0..n).all(|j| inst.lower[j].is_finite() && inst.upper[j].is_finite()),
        "vertex enumeration needs a finite box"
    );
    if n == 0 {
        return Some((vec![], inst.objective(&[])));
    }
    // Constraint list as dense (normal, rhs) pairs: rows, then upper
    // bounds, then negated lower bounds.
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..inst.m() {
        let mut a = vec![0.0; n];
        for (j, v) in inst.row(i) {
            a[j] += v;
        }
        normals.push(a);
        rhs.push(inst.rhs[i]);
    }
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        normals.push(a);
        rhs.push(inst.upper[j]);
        let mut a = vec![0.0; n];
        a[j] = -1.0;
        normals.push(a);
        rhs.push(-inst.lower[j]);
    }

    let total = normals.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut pick = vec![0usize; n];
    enumerate_subsets(total, n, &mut pick, 0, 0, &mut |subset| {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| normals[i].clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| rhs[i]).collect();
        if let Some(x) = solve_dense(a, b) {
            if is_lp_feasible(&normals, &rhs, &x) {
                let obj = inst.objective(&x);
                if best.as_ref().map_or(true, |(_, bo)| obj < *bo) {
                    best = Some((x, obj));
                }
            }
        }
    });
    best
}

fn enumerate_subsets(
    total: usize,
    k: usize,
    pick: &mut Vec<usize>,
    depth: usize,
    start: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        f(pick);
        return;
    }
    for i in start..total {
        if total - i < k - depth {
            break;
        }
        pick[depth] = i;
        enumerate_subsets(total, k, pick, depth + 1, i + 1, f);
    }
}

fn is_lp_feasible(normals: &[Vec<f64>], rhs: &[f64], x: &[f64]) -> bool {
    normals.iter().zip(rhs).all(|(a, &b)| {
        let act: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
        act <= b + 1e-7 * b.abs().max(1.0)
    })
}

/// Gaussian elimination with partial pivoting; None on (near) singular
/// systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| {
            a[r][col]
                .abs()
                .partial_cmp(&a[s][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col][c] * x[c];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Names of the bundled MPS fixtures, in the order used by end-to-end
/// runs. `infeas` is the only infeasible one.
pub fn fixture_names() -> [&'static str; 10] {
    [
        "knapsack", "setcover", "setpart", "eqheavy", "ranged", "freebnd", "maxobj", "contlp",
        "infeas", "chain",
    ]
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(format!("{name}.mps"))
}

pub fn load_fixture(name: &str) -> Result<ProblemInstance, ModelError> {
    let raw = crate::model::parse_mps_file(&fixture_path(name))?;
    crate::model::normalize(&raw)
}
