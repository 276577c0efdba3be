//! Evaluation metrics over incumbent traces: primal gap, primal integral,
//! and shifted geometric means, plus the plain-text trace format the
//! solver emits and the eval subcommand reads back.

use std::io::{BufRead, Write};
use std::path::Path;

/// One incumbent improvement: when it happened, the objective in the
/// user's original sense, and which worker produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub elapsed: f64,
    pub objective: f64,
    pub source: String,
}

/// Relative distance of objective z from reference z_ref, clamped to
/// [0, 1]: zero when both are zero, one on a sign conflict, otherwise
/// |z_ref - z| / max(|z_ref|, |z|).
pub fn primal_gap(z: f64, z_ref: f64) -> f64 {
    if z == 0.0 && z_ref == 0.0 {
        return 0.0;
    }
    if z * z_ref < 0.0 {
        return 1.0;
    }
    (z_ref - z).abs() / z_ref.abs().max(z.abs())
}

/// Exact step integral of a gap function given as (time, gap) breakpoints:
/// gap is 1 before the first entry and holds each entry's value until the
/// next. Accumulation is strictly left to right so results are
/// reproducible digit for digit.
pub fn integrate_gap_steps(steps: &[(f64, f64)], horizon: f64) -> f64 {
    let mut acc = 0.0;
    let mut t_prev = 0.0;
    let mut g_prev = 1.0;
    for &(t, g) in steps {
        let t = t.min(horizon).max(t_prev);
        acc += (t - t_prev) * g_prev;
        t_prev = t;
        g_prev = g;
    }
    acc += (horizon - t_prev).max(0.0) * g_prev;
    acc
}

/// Primal integral of an incumbent trace against a reference objective:
/// the integral of the step-wise primal gap over [0, horizon], counting
/// gap 1 before the first incumbent. An empty trace therefore integrates
/// to the horizon itself.
pub fn primal_integral(trace: &[TraceEntry], z_ref: f64, horizon: f64) -> f64 {
    let steps: Vec<(f64, f64)> = trace
        .iter()
        .map(|e| (e.elapsed, primal_gap(e.objective, z_ref)))
        .collect();
    integrate_gap_steps(&steps, horizon)
}

/// exp(mean(ln(v + shift))) - shift over a nonempty list.
pub fn shifted_geomean(values: &[f64], shift: f64) -> f64 {
    assert!(!values.is_empty(), "geometric mean of an empty list");
    assert!(shift > 0.0, "shift must be positive");
    let mean = values.iter().map(|v| (v + shift).ln()).sum::<f64>() / values.len() as f64;
    mean.exp() - shift
}

/// Writes a trace as newline-delimited `elapsed objective source` records.
/// Numbers use the shortest round-trip decimal form.
pub fn write_trace(path: &Path, trace: &[TraceEntry]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in trace {
        writeln!(out, "{} {} {}", e.elapsed, e.objective, e.source)?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> std::io::Result<Vec<TraceEntry>> {
    let file = std::fs::File::open(path)?;
    let mut trace = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let parse = |tok: Option<&str>| -> std::io::Result<f64> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("trace line {}: expected 'elapsed objective source'", lineno + 1),
                )
            })
        };
        let elapsed = parse(toks.next())?;
        let objective = parse(toks.next())?;
        let source = toks.next().unwrap_or("unknown").to_string();
        trace.push(TraceEntry {
            elapsed,
            objective,
            source,
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_basics() {
        assert_eq!(primal_gap(1.0, 1.0), 0.0);
        assert_eq!(primal_gap(0.0, 0.0), 0.0);
        assert_eq!(primal_gap(2.0, 1.0), 0.5);
        assert_eq!(primal_gap(-1.0, 1.0), 1.0);
        assert_eq!(primal_gap(0.0, 5.0), 1.0);
        assert_eq!(primal_gap(-2.0, -1.0), 0.5);
    }

    #[test]
    fn hand_integral_is_exact() {
        let steps = [(1.0, 0.5), (3.0, 0.1)];
        assert_eq!(integrate_gap_steps(&steps, 5.0), 2.2);
    }

    #[test]
    fn empty_trace_integrates_to_horizon() {
        assert_eq!(integrate_gap_steps(&[], 300.0), 300.0);
        assert_eq!(primal_integral(&[], 7.0, 300.0), 300.0);
    }

    #[test]
    fn immediate_optimum_integrates_to_zero() {
        let trace = vec![TraceEntry {
            elapsed: 0.0,
            objective: 3.0,
            source: "tabu0".into(),
        }];
        assert_eq!(primal_integral(&trace, 3.0, 100.0), 0.0);
    }

    #[test]
    fn entries_past_the_horizon_are_ignored() {
        let steps = [(1.0, 0.5), (10.0, 0.0)];
        assert_eq!(integrate_gap_steps(&steps, 5.0), 1.0 + 4.0 * 0.5);
    }

    #[test]
    fn geomean_examples() {
        assert!((shifted_geomean(&[1.0, 3.0], 1.0) - (8.0f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((shifted_geomean(&[5.0, 5.0, 5.0], 2.0) - 5.0).abs() < 1e-12);
        assert!(shifted_geomean(&[0.0], 1.0).abs() < 1e-15);
    }

    #[test]
    fn trace_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.trace");
        let trace = vec![
            TraceEntry {
                elapsed: 0.0301,
                objective: -15.000000000000002,
                source: "tabu1".into(),
            },
            TraceEntry {
                elapsed: 1.5,
                objective: -17.0,
                source: "fpr".into(),
            },
        ];
        write_trace(&path, &trace).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
    }
}
