//! Restarted primal-dual hybrid gradient (PDHG) for the LP relaxation.
//!
//! The solver alternates a projected primal gradient step with a projected
//! dual ascent step over the normalized rows (duals stay nonnegative),
//! keeps running averages, and restarts the iterate to the average on a
//! fixed period. Snapshots are built from the averages and streamed out at
//! an absolute-iteration checkpoint schedule; a run can stop and resume
//! without changing any emitted bit, because all state lives in
//! [`PdhgSolver`] and restarts key off the global iteration count.

use crate::model::ProblemInstance;
use crate::util::{clamp, Clock};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [100, 1_000, 10_000, 100_000];
pub const RESTART_PERIOD: usize = 400;
pub const KKT_TOL: f64 = 1e-8;
const NORM_ITERS: usize = 100;

/// One streamed LP iterate. `checkpoint` is the configured schedule value
/// the snapshot was emitted for; `iterations` is the actual iteration
/// count, which is smaller when the solver converged early and emitted the
/// remaining schedule immediately. Off-schedule snapshots (deadline,
/// divergence) use the iteration count as their checkpoint id.
#[derive(Clone, Debug)]
pub struct LpSnapshot {
    pub checkpoint: usize,
    pub iterations: usize,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    /// c - A^T y, stored for downstream variable ordering.
    pub reduced_costs: Vec<f64>,
    /// Infinity norm of max(0, Ax - b).
    pub primal_residual: f64,
    /// Normalized duality-gap estimate.
    pub gap: f64,
    pub elapsed: f64,
}

impl LpSnapshot {
    pub fn is_usable(&self) -> bool {
        self.primal_residual.is_finite() && self.primal.iter().all(|v| v.is_finite())
    }
}

/// c - A^T y.
pub fn reduced_costs(inst: &ProblemInstance, y: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), inst.m(), "dual vector length mismatch");
    (0..inst.n())
        .map(|j| {
            let aty: f64 = inst.col(j).map(|(i, a)| a * y[i]).sum();
            inst.obj[j] - aty
        })
        .collect()
}

/// Power iteration estimate of the spectral norm of A. Always a lower
/// bound on the true norm; returns 0 for a zero matrix.
pub fn estimate_operator_norm(inst: &ProblemInstance, iters: usize) -> f64 {
    assert!(iters >= 1);
    let (n, m) = (inst.n(), inst.m());
    if n == 0 || m == 0 || inst.nnz() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    let mut w = vec![0.0; m];
    for _ in 0..iters {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = inst.row(i).map(|(j, a)| a * v[j]).sum();
        }
        let mut u = vec![0.0; n];
        for (j, uj) in u.iter_mut().enumerate() {
            *uj = inst.col(j).map(|(i, a)| a * w[i]).sum();
        }
        lambda = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lambda == 0.0 {
            return 0.0;
        }
        for (vj, uj) in v.iter_mut().zip(&u) {
            *vj = uj / lambda;
        }
    }
    lambda.sqrt()
}

/// Persistent PDHG state. Checkpoints refer to the lifetime iteration
/// count, so `run(&[100, 1000])` in one call and `run(&[100])` followed by
/// `run(&[1000])` perform identical arithmetic.
pub struct PdhgSolver {
    inst: Arc<ProblemInstance>,
    clock: Arc<dyn Clock>,
    x: Vec<f64>,
    y: Vec<f64>,
    sum_x: Vec<f64>,
    sum_y: Vec<f64>,
    avg_len: usize,
    step: f64,
    norm: f64,
    iterations: usize,
    converged: bool,
    diverged: bool,
}

impl PdhgSolver {
    pub fn new(inst: Arc<ProblemInstance>, clock: Arc<dyn Clock>) -> PdhgSolver {
        let norm = estimate_operator_norm(&inst, NORM_ITERS);
        let step = if norm > 0.0 { 0.9 / norm } else { 0.0 };
        debug_assert!(step * step * norm * norm <= 0.99);
        let n = inst.n();
        let m = inst.m();
        let x: Vec<f64> = (0..n)
            .map(|j| clamp(0.0, inst.lower[j], inst.upper[j]))
            .collect();
        PdhgSolver {
            inst,
            clock,
            x,
            y: vec![0.0; m],
            sum_x: vec![0.0; n],
            sum_y: vec![0.0; m],
            avg_len: 0,
            step,
            norm,
            iterations: 0,
            converged: false,
            diverged: false,
        }
    }

    /// Seeds the iterate from an external primal/dual pair (for example a
    /// pool snapshot) and clears the averages. This is an approximate warm
    /// start; exact continuation needs the same solver value that produced
    /// the earlier snapshots.
    pub fn warm_start_from(&mut self, primal: &[f64], duals: &[f64]) {
        assert_eq!(primal.len(), self.inst.n());
        assert_eq!(duals.len(), self.inst.m());
        for (j, v) in primal.iter().enumerate() {
            self.x[j] = clamp(*v, self.inst.lower[j], self.inst.upper[j]);
        }
        for (i, v) in duals.iter().enumerate() {
            self.y[i] = v.max(0.0);
        }
        self.sum_x.iter_mut().for_each(|v| *v = 0.0);
        self.sum_y.iter_mut().for_each(|v| *v = 0.0);
        self.avg_len = 0;
        self.converged = false;
        self.diverged = false;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn operator_norm(&self) -> f64 {
        self.norm
    }

    /// Runs the schedule, emitting one snapshot per checkpoint beyond the
    /// current iteration count. Convergence below [`KKT_TOL`] (checked at
    /// checkpoint boundaries) emits the remaining schedule immediately
    /// from the converged state; `should_stop` aborts between iterations
    /// with an off-schedule snapshot. Returns the last snapshot.
    pub fn run(
        &mut self,
        checkpoints: &[usize],
        mut should_stop: impl FnMut() -> bool,
        mut sink: impl FnMut(LpSnapshot),
    ) -> LpSnapshot {
        debug_assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
        if self.diverged {
            let snap = self.diagnostic_snapshot();
            sink(snap.clone());
            return snap;
        }
        if self.norm == 0.0 {
            // No constraint matrix to speak of: the box optimum is exact.
            for j in 0..self.inst.n() {
                let c = self.inst.obj[j];
                self.x[j] = if c > 0.0 {
                    self.inst.lower[j]
                } else if c < 0.0 {
                    self.inst.upper[j]
                } else {
                    clamp(0.0, self.inst.lower[j], self.inst.upper[j])
                };
                if !self.x[j].is_finite() {
                    self.diverged = true;
                    let snap = self.diagnostic_snapshot();
                    sink(snap.clone());
                    return snap;
                }
            }
            self.converged = true;
        }

        let mut last: Option<LpSnapshot> = None;
        for &cp in checkpoints {
            if cp <= self.iterations && !self.converged {
                continue;
            }
            while self.iterations < cp && !self.converged {
                if should_stop() {
                    let snap = self.snapshot(self.iterations);
                    sink(snap.clone());
                    return snap;
                }
                self.iterate();
                if self.diverged {
                    let snap = self.diagnostic_snapshot();
                    sink(snap.clone());
                    return snap;
                }
                if self.iterations % RESTART_PERIOD == 0 && self.iterations != cp {
                    self.restart_to_average();
                }
            }
            let snap = self.snapshot(cp);
            if !self.converged && self.kkt_residual(&snap) < KKT_TOL {
                self.converged = true;
            }
            sink(snap.clone());
            last = Some(snap);
            if self.iterations % RESTART_PERIOD == 0 {
                self.restart_to_average();
            }
        }
        last.unwrap_or_else(|| self.snapshot(self.iterations))
    }

    fn iterate(&mut self) {
        let inst = &self.inst;
        let n = inst.n();
        // x' = proj_box(x - step * (c + A^T y))
        let mut x_new = vec![0.0; n];
        for (j, xn) in x_new.iter_mut().enumerate() {
            let aty: f64 = inst.col(j).map(|(i, a)| a * self.y[i]).sum();
            *xn = clamp(
                self.x[j] - self.step * (inst.obj[j] + aty),
                inst.lower[j],
                inst.upper[j],
            );
        }
        // y = proj_{>=0}(y + step * (A(2x' - x) - b))
        for i in 0..inst.m() {
            let act: f64 = inst
                .row(i)
                .map(|(j, a)| a * (2.0 * x_new[j] - self.x[j]))
                .sum();
            self.y[i] = (self.y[i] + self.step * (act - inst.rhs[i])).max(0.0);
            if !self.y[i].is_finite() {
                self.diverged = true;
            }
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            self.diverged = true;
        }
        self.x = x_new;
        self.iterations += 1;
        for (s, v) in self.sum_x.iter_mut().zip(&self.x) {
            *s += v;
        }
        for (s, v) in self.sum_y.iter_mut().zip(&self.y) {
            *s += v;
        }
        self.avg_len += 1;
    }

    fn restart_to_average(&mut self) {
        if self.avg_len == 0 {
            return;
        }
        let len = self.avg_len as f64;
        for (x, s) in self.x.iter_mut().zip(&self.sum_x) {
            *x = s / len;
        }
        for (y, s) in self.y.iter_mut().zip(&self.sum_y) {
            *y = (s / len).max(0.0);
        }
        self.sum_x.iter_mut().for_each(|v| *v = 0.0);
        self.sum_y.iter_mut().for_each(|v| *v = 0.0);
        self.avg_len = 0;
    }

    fn averages(&self) -> (Vec<f64>, Vec<f64>) {
        if self.avg_len == 0 {
            return (self.x.clone(), self.y.clone());
        }
        let len = self.avg_len as f64;
        (
            self.sum_x.iter().map(|s| s / len).collect(),
            self.sum_y.iter().map(|s| s / len).collect(),
        )
    }

    fn snapshot(&self, checkpoint: usize) -> LpSnapshot {
        let (px, py) = self.averages();
        let rc = reduced_costs(&self.inst, &py);
        let primal_residual = (0..self.inst.m())
            .map(|i| (self.inst.row_activity(i, &px) - self.inst.rhs[i]).max(0.0))
            .fold(0.0, f64::max);
        let gap = self.gap_estimate(&px, &py);
        LpSnapshot {
            checkpoint,
            iterations: self.iterations,
            primal: px,
            duals: py,
            reduced_costs: rc,
            primal_residual,
            gap,
            elapsed: self.clock.elapsed(),
        }
    }

    fn diagnostic_snapshot(&self) -> LpSnapshot {
        let mut snap = self.snapshot(self.iterations);
        snap.primal_residual = f64::INFINITY;
        snap.gap = f64::INFINITY;
        snap
    }

    /// Lagrangian dual value of y over the box (used only for the gap
    /// estimate; -inf when an unbounded direction is exposed).
    fn dual_value(&self, y: &[f64]) -> f64 {
        let inst = &self.inst;
        let mut val: f64 = -(0..inst.m()).map(|i| inst.rhs[i] * y[i]).sum::<f64>();
        for j in 0..inst.n() {
            let aty: f64 = inst.col(j).map(|(i, a)| a * y[i]).sum();
            let q = inst.obj[j] + aty;
            if q > 0.0 {
                val += q * inst.lower[j];
            } else if q < 0.0 {
                val += q * inst.upper[j];
            }
            if val.is_nan() {
                return f64::NEG_INFINITY;
            }
        }
        val
    }

    /// Normalized duality gap |c'x - g(y)| / (1 + |c'x| + |g(y)|).
    fn gap_estimate(&self, px: &[f64], py: &[f64]) -> f64 {
        let pobj = self.inst.objective(px);
        let dobj = self.dual_value(py);
        (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs())
    }

    fn kkt_residual(&self, snap: &LpSnapshot) -> f64 {
        let inst = &self.inst;
        let b_scale = 1.0 + inst.rhs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let primal = snap.primal_residual / b_scale;

        // Projected-gradient stationarity over the box.
        let c_scale = 1.0 + inst.obj.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let mut dual: f64 = 0.0;
        for j in 0..inst.n() {
            let aty: f64 = inst.col(j).map(|(i, a)| a * snap.duals[i]).sum();
            let q = inst.obj[j] + aty;
            let x = snap.primal[j];
            let at_lower = x <= inst.lower[j] + 1e-12;
            let at_upper = x >= inst.upper[j] - 1e-12;
            let viol = if at_lower && at_upper {
                0.0
            } else if at_lower {
                (-q).max(0.0)
            } else if at_upper {
                q.max(0.0)
            } else {
                q.abs()
            };
            dual = dual.max(viol / c_scale);
        }

        let gap = self.gap_estimate(&snap.primal, &snap.duals);
        primal.max(dual).max(gap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::WallClock;

    fn solver(inst: ProblemInstance) -> PdhgSolver {
        PdhgSolver::new(Arc::new(inst), Arc::new(WallClock::new()))
    }

    fn lp(
        obj: Vec<f64>,
        rows: Vec<(Vec<(usize, f64)>, f64)>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> ProblemInstance {
        let n = obj.len();
        ProblemInstance::from_parts("lp", obj, rows, lower, upper, vec![false; n]).unwrap()
    }

    #[test]
    fn operator_norm_matches_known_spectra() {
        let eye = lp(
            vec![0.0; 3],
            vec![
                (vec![(0, 1.0)], 1.0),
                (vec![(1, 1.0)], 1.0),
                (vec![(2, 1.0)], 1.0),
            ],
            vec![0.0; 3],
            vec![1.0; 3],
        );
        assert!((estimate_operator_norm(&eye, 100) - 1.0).abs() < 1e-6);

        let single = lp(vec![0.0], vec![(vec![(0, 3.0)], 1.0)], vec![0.0], vec![1.0]);
        assert!((estimate_operator_norm(&single, 100) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn operator_norm_tracks_dense_svd() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (m, n) = (20usize, 30usize);
            let mut rows = Vec::new();
            let mut dense = nalgebra::DMatrix::<f64>::zeros(m, n);
            for i in 0..m {
                let mut entries = Vec::new();
                for j in 0..n {
                    if rng.gen_bool(0.4) {
                        let v = rng.gen_range(-3.0..3.0);
                        entries.push((j, v));
                        dense[(i, j)] = v;
                    }
                }
                if entries.is_empty() {
                    entries.push((0, 1.0));
                    dense[(i, 0)] = 1.0;
                }
                rows.push((entries, 0.0));
            }
            let inst = lp(vec![0.0; n], rows, vec![0.0; n], vec![1.0; n]);
            let est = estimate_operator_norm(&inst, 100);
            let exact = dense.svd(false, false).singular_values[0];
            assert!(est <= exact * (1.0 + 1e-9), "estimate above true norm");
            assert!(est >= exact * 0.99, "estimate {est} vs svd {exact}");
        }
    }

    #[test]
    fn zero_matrix_norm_is_zero_and_solves_by_box() {
        let inst = lp(
            vec![1.0, -2.0, 0.0],
            vec![(vec![(0, 0.0), (1, 0.0), (2, 0.0)], 1.0)],
            vec![-1.0; 3],
            vec![4.0; 3],
        );
        assert_eq!(estimate_operator_norm(&inst, 100), 0.0);
        let mut s = solver(inst);
        let mut snaps = Vec::new();
        let fin = s.run(&[100, 1000], || false, |sn| snaps.push(sn));
        assert_eq!(snaps.len(), 2);
        assert_eq!(fin.primal, vec![-1.0, 4.0, 0.0]);
        assert!(s.is_converged());
    }

    #[test]
    fn one_dimensional_lp_converges_to_its_bound() {
        // min x s.t. -x <= -1, x in [0, 10]: optimum 1.
        let inst = lp(vec![1.0], vec![(vec![(0, -1.0)], -1.0)], vec![0.0], vec![10.0]);
        let mut s = solver(inst);
        let mut snaps = Vec::new();
        let fin = s.run(&DEFAULT_CHECKPOINTS[..3], || false, |sn| snaps.push(sn));
        assert!((fin.primal[0] - 1.0).abs() <= 1e-4, "got {}", fin.primal[0]);
        assert_eq!(snaps.len(), 3);
    }

    #[test]
    fn snapshots_follow_the_configured_schedule() {
        let inst = lp(
            vec![-1.0, -2.0],
            vec![
                (vec![(0, 1.0), (1, 1.0)], 4.0),
                (vec![(0, 1.0), (1, 3.0)], 6.0),
            ],
            vec![0.0, 0.0],
            vec![3.0, 3.0],
        );
        let mut s = solver(inst);
        let mut snaps = Vec::new();
        s.run(&[100, 1000, 10000], || false, |sn| snaps.push(sn));
        assert_eq!(
            snaps.iter().map(|s| s.checkpoint).collect::<Vec<_>>(),
            vec![100, 1000, 10000]
        );
        // Either the full schedule ran or convergence froze the count.
        for sn in &snaps {
            assert!(sn.iterations <= sn.checkpoint);
        }
    }

    #[test]
    fn reduced_cost_invariant_holds_on_every_snapshot() {
        let inst = lp(
            vec![1.0, -1.0],
            vec![
                (vec![(0, 2.0), (1, 1.0)], 5.0),
                (vec![(0, -1.0), (1, 2.0)], 3.0),
            ],
            vec![0.0, 0.0],
            vec![4.0, 4.0],
        );
        let check = inst.clone();
        let mut s = solver(inst);
        s.run(&[100, 1000], || false, |sn| {
            let rc = reduced_costs(&check, &sn.duals);
            for (a, b) in rc.iter().zip(&sn.reduced_costs) {
                assert!((a - b).abs() < 1e-12);
            }
        });
    }

    #[test]
    fn reduced_costs_basics() {
        let inst = lp(vec![1.0], vec![(vec![(0, 2.0)], 1.0)], vec![0.0], vec![1.0]);
        assert_eq!(reduced_costs(&inst, &[0.0]), vec![1.0]);
        assert_eq!(reduced_costs(&inst, &[0.5]), vec![0.0]);
    }

    #[test]
    fn warm_start_split_run_is_bit_identical() {
        let inst = lp(
            vec![-1.0, -2.0, 1.0],
            vec![
                (vec![(0, 1.0), (1, 1.0), (2, -1.0)], 4.0),
                (vec![(0, 1.0), (1, 3.0)], 6.0),
                (vec![(1, 1.0), (2, 1.0)], 5.0),
            ],
            vec![0.0; 3],
            vec![3.0; 3],
        );
        let mut one = solver(inst.clone());
        let mut snaps_one = Vec::new();
        one.run(&[100, 1000], || false, |sn| snaps_one.push(sn));

        let mut two = solver(inst);
        let mut snaps_two = Vec::new();
        two.run(&[100], || false, |sn| snaps_two.push(sn));
        two.run(&[1000], || false, |sn| snaps_two.push(sn));

        assert_eq!(snaps_one.len(), snaps_two.len());
        for (a, b) in snaps_one.iter().zip(&snaps_two) {
            assert_eq!(a.checkpoint, b.checkpoint);
            assert_eq!(a.iterations, b.iterations);
            assert_eq!(a.primal, b.primal, "primal iterates diverged");
            assert_eq!(a.duals, b.duals, "dual iterates diverged");
            assert_eq!(a.reduced_costs, b.reduced_costs);
        }
    }

    #[test]
    fn deadline_stops_early_with_an_off_schedule_snapshot() {
        let inst = lp(
            vec![-1.0, -2.0],
            vec![
                (vec![(0, 1.0), (1, 1.0)], 4.0),
                (vec![(0, 1.0), (1, 3.0)], 6.0),
            ],
            vec![0.0, 0.0],
            vec![3.0, 3.0],
        );
        let mut s = solver(inst);
        let mut count = 0;
        let fin = s.run(
            &[100_000],
            move || {
                count += 1;
                count > 50
            },
            |_| {},
        );
        assert!(fin.iterations <= 50);
        assert_eq!(fin.checkpoint, fin.iterations);
    }

    #[test]
    fn random_boxes_reach_the_vertex_optimum() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let inst = crate::fixtures::gen_random_mip(
                rng.gen(),
                &crate::fixtures::RandomMipConfig::lp_box(),
            );
            let (_, want) = crate::fixtures::lp_vertex_opt(&inst).expect("feasible by design");
            let check = inst.clone();
            let mut s = solver(inst);
            let fin = s.run(&DEFAULT_CHECKPOINTS, || false, |_| {});
            let got = check.objective(&fin.primal);
            let rel = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-3, "objective {got} vs {want} (rel {rel})");
        }
        // Typical accuracy is much better than the acceptance bar.
        assert!(worst <= 1e-3);
    }
}
