//! Objective feasibility pump.
//!
//! Alternates two moves: rounding the current LP point with a
//! conflict-budget-1 fix-propagate dive, and projecting the rounded point
//! back onto the relaxation with a distance LP that blends the original
//! objective in with a geometrically decaying weight. Cycles over the
//! rounded points are broken by flipping the most fractional binaries.
//! The same loop repairs tabu partials, seeded from the partial instead
//! of an LP snapshot.

use crate::fpr::{fixing_order, fpr_dive, DiveOutcome};
use crate::lp::{LpSnapshot, PdhgSolver};
use crate::model::ProblemInstance;
use crate::pool::SolutionPool;
use crate::util::{clamp, point_key, round_half_up, WallClock};
use rand::Rng;
use std::collections::VecDeque;
use std::sync::Arc;

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_REPAIR_ITERS: usize = 10;
const CYCLE_WINDOW: usize = 30;
const PROJECTION_CHECKPOINTS: [usize; 1] = [1_000];
const FRAC_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum PumpOutcome {
    Feasible(Vec<f64>),
    Partial { point: Vec<f64>, violation: f64 },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PumpStats {
    pub iterations: usize,
    pub projections: usize,
    pub flips: usize,
    pub alpha: f64,
}

/// Phase 1: pump from an LP snapshot.
pub fn pump(
    inst: &ProblemInstance,
    seed: &LpSnapshot,
    pool: &SolutionPool,
    max_iters: usize,
    rng: &mut impl Rng,
    should_stop: impl FnMut() -> bool,
) -> (PumpOutcome, PumpStats) {
    let x_lp: Vec<f64> = seed
        .primal
        .iter()
        .enumerate()
        .map(|(j, &v)| clamp(v, inst.lower[j], inst.upper[j]))
        .collect();
    pump_core(
        inst,
        pool,
        Some(x_lp),
        None,
        Some(&seed.reduced_costs),
        max_iters,
        rng,
        should_stop,
    )
}

/// Phase 2: repair a tabu partial with a few pump iterations, starting
/// from the projection step (the partial plays the role of the rounding).
pub fn repair_partial(
    inst: &ProblemInstance,
    partial: &[f64],
    pool: &SolutionPool,
    iter_cap: usize,
    rng: &mut impl Rng,
    should_stop: impl FnMut() -> bool,
) -> (PumpOutcome, PumpStats) {
    if inst.validate_default(partial).is_feasible() {
        pool.submit_feasible(partial.to_vec(), "pump");
        return (
            PumpOutcome::Feasible(partial.to_vec()),
            PumpStats::default(),
        );
    }
    if iter_cap == 0 {
        let violation = inst.violation_measure(partial);
        return (
            PumpOutcome::Partial {
                point: partial.to_vec(),
                violation,
            },
            PumpStats::default(),
        );
    }
    let seeded = plain_round(inst, partial);
    pump_core(inst, pool, None, Some(seeded), None, iter_cap, rng, should_stop)
}

fn plain_round(inst: &ProblemInstance, x: &[f64]) -> Vec<f64> {
    (0..inst.n())
        .map(|j| {
            let v = if inst.integer[j] {
                round_half_up(x[j])
            } else {
                x[j]
            };
            clamp(v, inst.lower[j], inst.upper[j])
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn pump_core(
    inst: &ProblemInstance,
    pool: &SolutionPool,
    mut x_lp: Option<Vec<f64>>,
    x_tilde0: Option<Vec<f64>>,
    rc: Option<&[f64]>,
    max_iters: usize,
    rng: &mut impl Rng,
    mut should_stop: impl FnMut() -> bool,
) -> (PumpOutcome, PumpStats) {
    let mut stats = PumpStats {
        alpha: 1.0,
        ..PumpStats::default()
    };
    let mut ring: VecDeque<u64> = VecDeque::with_capacity(CYCLE_WINDOW + 1);
    let mut x_tilde = x_tilde0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let note = |point: &[f64], viol: f64, best: &mut Option<(Vec<f64>, f64)>| {
        if best.as_ref().map_or(true, |(_, bv)| viol < *bv) {
            *best = Some((point.to_vec(), viol));
        }
    };
    if let Some(t) = &x_tilde {
        note(t, inst.violation_measure(t), &mut best);
    }

    for k in 0..max_iters {
        if should_stop() {
            break;
        }
        stats.iterations = k + 1;
        stats.alpha *= 0.9;

        if let Some(lp) = x_lp.take() {
            let order = fixing_order(inst, &lp, rc);
            let dive = fpr_dive(inst, &order, &lp, pool, 1);
            match dive.outcome {
                DiveOutcome::Feasible(p) => return (PumpOutcome::Feasible(p), stats),
                DiveOutcome::Partial { point, violation } => {
                    note(&point, violation, &mut best);
                    x_tilde = Some(point);
                }
                DiveOutcome::Abort => {
                    let rounded = plain_round(inst, &lp);
                    if inst.validate_default(&rounded).is_feasible() {
                        pool.submit_feasible(rounded.clone(), "pump");
                        return (PumpOutcome::Feasible(rounded), stats);
                    }
                    note(&rounded, inst.violation_measure(&rounded), &mut best);
                    x_tilde = Some(rounded);
                }
            }
        }

        let mut target = x_tilde.clone().expect("rounded point set by now");
        let key = point_key(&target);
        if ring.contains(&key) {
            flip_binaries(inst, &mut target, x_lp.as_deref(), rng);
            stats.flips += 1;
            note(&target, inst.violation_measure(&target), &mut best);
        }
        ring.push_back(point_key(&target));
        while ring.len() > CYCLE_WINDOW {
            ring.pop_front();
        }
        x_tilde = Some(target.clone());

        let projected = projection_lp(inst, &target, stats.alpha, &mut should_stop);
        stats.projections += 1;
        x_lp = Some(projected);
    }

    match best {
        Some((point, violation)) => {
            pool.submit_partial(point.clone(), "pump");
            (PumpOutcome::Partial { point, violation }, stats)
        }
        None => {
            // max_iters = 0 with an LP seed: round it once, without diving.
            let point = plain_round(inst, &x_lp.expect("either seed or rounding exists"));
            let violation = inst.violation_measure(&point);
            (PumpOutcome::Partial { point, violation }, stats)
        }
    }
}

/// Flip the T most fractional binaries of `target` (T random in
/// [ceil(n_frac/2), n_frac]); with nothing fractional, flip a few random
/// ones instead. Instances without binaries nudge one random integer.
fn flip_binaries(
    inst: &ProblemInstance,
    target: &mut [f64],
    x_lp: Option<&[f64]>,
    rng: &mut impl Rng,
) {
    let bins = &inst.binaries;
    if bins.is_empty() {
        let ints: Vec<usize> = (0..inst.n()).filter(|&j| inst.integer[j]).collect();
        if let Some(&j) = ints.get(rng.gen_range(0..ints.len().max(1)).min(ints.len().saturating_sub(1))) {
            let down = target[j] - 1.0 >= inst.lower[j] - 1e-9;
            let up = target[j] + 1.0 <= inst.upper[j] + 1e-9;
            if up && (!down || rng.gen_bool(0.5)) {
                target[j] += 1.0;
            } else if down {
                target[j] -= 1.0;
            }
        }
        return;
    }
    let mut fracs: Vec<(f64, usize)> = bins
        .iter()
        .map(|&j| {
            let f = x_lp.map_or(0.0, |lp| (lp[j] - round_half_up(lp[j])).abs());
            (f, j)
        })
        .filter(|&(f, _)| f > FRAC_TOL)
        .collect();
    if fracs.is_empty() {
        let t = rng.gen_range(1..=(bins.len() / 10).max(1));
        let mut picks = bins.clone();
        for i in 0..t.min(picks.len()) {
            let swap = rng.gen_range(i..picks.len());
            picks.swap(i, swap);
            let j = picks[i];
            target[j] = 1.0 - target[j];
        }
        return;
    }
    fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let n_frac = fracs.len();
    let t = rng.gen_range((n_frac + 1) / 2..=n_frac);
    for &(_, j) in fracs.iter().take(t) {
        target[j] = 1.0 - target[j];
    }
}

/// Distance LP toward the rounded point: binaries contribute linearly,
/// general integers through a nonnegative slack pair tied by an equality
/// split, and the original objective is blended in with weight alpha.
/// Both parts are normalized by their coefficient norms.
fn projection_lp(
    inst: &ProblemInstance,
    x_tilde: &[f64],
    alpha: f64,
    should_stop: &mut impl FnMut() -> bool,
) -> Vec<f64> {
    let n = inst.n();
    let is_binary = {
        let mut mask = vec![false; n];
        for &j in &inst.binaries {
            mask[j] = true;
        }
        mask
    };
    let gen_ints: Vec<usize> = (0..n)
        .filter(|&j| inst.integer[j] && !is_binary[j])
        .collect();

    let dist_norm = ((inst.binaries.len() + 2 * gen_ints.len()) as f64).sqrt();
    let obj_norm = inst.obj.iter().map(|c| c * c).sum::<f64>().sqrt();
    let w_dist = (1.0 - alpha) / dist_norm.max(1.0);
    let w_obj = alpha / obj_norm.max(1.0);

    let total = n + 2 * gen_ints.len();
    let mut obj = vec![0.0; total];
    let mut lower = vec![0.0; total];
    let mut upper = vec![f64::INFINITY; total];
    for j in 0..n {
        obj[j] = w_obj * inst.obj[j];
        lower[j] = inst.lower[j];
        upper[j] = inst.upper[j];
        if is_binary[j] {
            obj[j] += if x_tilde[j] <= 0.5 { w_dist } else { -w_dist };
        }
    }
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = (0..inst.m())
        .map(|i| (inst.row(i).collect(), inst.rhs[i]))
        .collect();
    for (k, &j) in gen_ints.iter().enumerate() {
        let plus = n + 2 * k;
        let minus = n + 2 * k + 1;
        obj[plus] = w_dist;
        obj[minus] = w_dist;
        // x_j - d+ + d- = x~_j as a pair of inequalities.
        rows.push((vec![(j, 1.0), (plus, -1.0), (minus, 1.0)], x_tilde[j]));
        rows.push((vec![(j, -1.0), (plus, 1.0), (minus, -1.0)], -x_tilde[j]));
    }

    let ext = ProblemInstance::from_parts("projection", obj, rows, lower, upper, vec![false; total])
        .expect("projection LP construction is well-formed");
    let mut solver = PdhgSolver::new(Arc::new(ext), Arc::new(WallClock::new()));
    let snap = solver.run(&PROJECTION_CHECKPOINTS, &mut *should_stop, |_| {});
    (0..n)
        .map(|j| clamp(snap.primal[j], inst.lower[j], inst.upper[j]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::WallClock;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mip(
        obj: Vec<f64>,
        rows: Vec<(Vec<(usize, f64)>, f64)>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        integer: Vec<bool>,
    ) -> ProblemInstance {
        ProblemInstance::from_parts("pump-test", obj, rows, lower, upper, integer).unwrap()
    }

    fn pool_for(inst: &ProblemInstance) -> SolutionPool {
        SolutionPool::new(Arc::new(inst.clone()), Arc::new(WallClock::new()))
    }

    fn snapshot_of(primal: Vec<f64>, m: usize) -> LpSnapshot {
        let n = primal.len();
        LpSnapshot {
            checkpoint: 100,
            iterations: 100,
            primal,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            primal_residual: 0.0,
            gap: 0.0,
            elapsed: 0.0,
        }
    }

    #[test]
    fn integral_feasible_snapshot_returns_without_projection() {
        let inst = mip(
            vec![1.0, 1.0],
            vec![(vec![(0, -1.0), (1, -1.0)], -1.0)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (out, stats) = pump(
            &inst,
            &snapshot_of(vec![1.0, 1.0], 1),
            &pool,
            100,
            &mut rng,
            || false,
        );
        assert!(matches!(out, PumpOutcome::Feasible(_)));
        assert_eq!(stats.projections, 0);
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn half_integral_seed_is_rounded_feasible_in_one_iteration() {
        let inst = mip(
            vec![1.0, 1.0],
            vec![(vec![(0, -1.0), (1, -1.0)], -1.0)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, stats) = pump(
            &inst,
            &snapshot_of(vec![0.5, 0.5], 1),
            &pool,
            100,
            &mut rng,
            || false,
        );
        match out {
            PumpOutcome::Feasible(p) => assert!(inst.validate_default(&p).is_feasible()),
            other => panic!("expected feasible, got {other:?}"),
        }
        assert_eq!(stats.iterations, 1);
        assert_eq!(pool.feasible_len(), 1);
    }

    /// x1 = x2 paired with x1 + x2 = 1 has a unique LP point (0.5, 0.5)
    /// and no integer point, so the rounded point repeats and the cycle
    /// flip must fire.
    #[test]
    fn cycling_instance_triggers_a_flip() {
        let inst = mip(
            vec![0.0, 0.0],
            vec![
                (vec![(0, 1.0), (1, -1.0)], 0.0),
                (vec![(0, -1.0), (1, 1.0)], 0.0),
                (vec![(0, 1.0), (1, 1.0)], 1.0),
                (vec![(0, -1.0), (1, -1.0)], -1.0),
            ],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (out, stats) = pump(
            &inst,
            &snapshot_of(vec![0.5, 0.5], 4),
            &pool,
            8,
            &mut rng,
            || false,
        );
        assert!(stats.flips >= 1, "cycle flip never fired: {stats:?}");
        match out {
            PumpOutcome::Partial { violation, .. } => assert!(violation > 0.0),
            other => panic!("instance is integer-infeasible, got {other:?}"),
        }
        assert!(pool.partial_len() >= 1);
    }

    #[test]
    fn alpha_decays_geometrically() {
        let inst = mip(
            vec![0.0, 0.0],
            vec![
                (vec![(0, 1.0), (1, -1.0)], 0.0),
                (vec![(0, -1.0), (1, 1.0)], 0.0),
                (vec![(0, 1.0), (1, 1.0)], 1.0),
                (vec![(0, -1.0), (1, -1.0)], -1.0),
            ],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, stats) = pump(
            &inst,
            &snapshot_of(vec![0.5, 0.5], 4),
            &pool,
            5,
            &mut rng,
            || false,
        );
        assert_eq!(stats.iterations, 5);
        let mut expect = 1.0f64;
        for _ in 0..5 {
            expect *= 0.9;
        }
        assert_eq!(stats.alpha, expect);
    }

    #[test]
    fn repair_returns_feasible_partial_immediately() {
        let inst = mip(
            vec![1.0, 1.0],
            vec![(vec![(0, 1.0), (1, 1.0)], 2.0)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (out, stats) = repair_partial(&inst, &[1.0, 0.0], &pool, 10, &mut rng, || false);
        assert_eq!(out, PumpOutcome::Feasible(vec![1.0, 0.0]));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn repair_fixes_a_one_flip_partial() {
        // x1 + x2 >= 1; (0,0) is one flip away.
        let inst = mip(
            vec![1.0, 2.0],
            vec![(vec![(0, -1.0), (1, -1.0)], -1.0)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (out, stats) = repair_partial(&inst, &[0.0, 0.0], &pool, 10, &mut rng, || false);
        match out {
            PumpOutcome::Feasible(p) => assert!(inst.validate_default(&p).is_feasible()),
            other => panic!("expected feasible, got {other:?}"),
        }
        assert!(stats.iterations <= 2, "took {} iterations", stats.iterations);
    }

    #[test]
    fn repair_with_zero_cap_returns_the_partial_unchanged() {
        let inst = mip(
            vec![1.0, 1.0],
            vec![(vec![(0, -1.0), (1, -1.0)], -1.0)],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![true, true],
        );
        let pool = pool_for(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (out, _) = repair_partial(&inst, &[0.0, 0.0], &pool, 0, &mut rng, || false);
        match out {
            PumpOutcome::Partial { point, violation } => {
                assert_eq!(point, vec![0.0, 0.0]);
                assert_eq!(violation, 1.0);
            }
            other => panic!("expected unchanged partial, got {other:?}"),
        }
    }

    #[test]
    fn returned_partial_is_no_worse_than_the_seed_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let inst = crate::fixtures::gen_random_mip(
                1000 + trial,
                &crate::fixtures::RandomMipConfig::binary_pump(),
            );
            let pool = pool_for(&inst);
            let mut solver = PdhgSolver::new(
                Arc::new(inst.clone()),
                Arc::new(WallClock::new()),
            );
            let snap = solver.run(&[1000], || false, |_| {});
            let seed_viol = inst.violation_measure(&plain_round(&inst, &snap.primal));
            let (out, _) = pump(&inst, &snap, &pool, 25, &mut rng, || false);
            match out {
                PumpOutcome::Feasible(p) => {
                    assert!(inst.validate_default(&p).is_feasible())
                }
                PumpOutcome::Partial { violation, .. } => {
                    assert!(violation <= seed_viol + 1e-9);
                }
            }
        }
    }

    #[test]
    fn general_integer_distance_uses_slack_columns() {
        // min distance to x~ = 3 for an integer in [0, 5] with x <= 2:
        // the projection should land at the cap, x = 2.
        let inst = mip(
            vec![0.0],
            vec![(vec![(0, 1.0)], 2.0)],
            vec![0.0],
            vec![5.0],
            vec![true],
        );
        let got = projection_lp(&inst, &[3.0], 0.1, &mut || false);
        assert!((got[0] - 2.0).abs() <= 1e-3, "projection gave {}", got[0]);
    }
}
