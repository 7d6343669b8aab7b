//! Executes a validated experiment and collects its artifacts.

use enhq::coherent::{AffineFamily, CanonicalFamily, SpinFamily};
use enhq::dynamics::{
    integrate, permute_state, permuted_deviation, rotsym_integrate, FlowSpec, Hamiltonian, PhaseState, Status, Trajectory,
};
use enhq::geometry::{curvature_table, gaussian_curvature, CoherentMap, CurvatureReport, SpinCanonicalChart};
use enhq::hilbert::Spin;
use enhq::inequality::{scan_alpha, AlphaScan, InequalityReport, Verdict};
use enhq::report::CsvTable;
use enhq::selftest::{self, CheckResult, SelftestReport};
use enhq::wcp::{classical_limit, hbar_scaling_fit, EnhancedHamiltonian, HamiltonianSpec, ScalingFit};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::options::{
    DynamicsConfig, ExperimentConfig, FamilyName, InequalityConfig, MetricConfig, RotsymConfig, SelftestConfig,
    SpinChart, WcpConfig,
};

/// Result of a run: named tables, a JSON result block and a one-line verdict.
pub struct Outcome {
    pub tables: Vec<(String, CsvTable)>,
    pub result: Value,
    pub verdict: String,
    /// A run that completed but whose checks failed.
    pub failed: bool,
}

fn to_json(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("results serialize to JSON")
}

pub fn execute(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    match config {
        ExperimentConfig::Metric(c) => metric(c),
        ExperimentConfig::Wcp(c) => wcp(c),
        ExperimentConfig::Dynamics(c) => dynamics(c),
        ExperimentConfig::Rotsym(c) => rotsym(c),
        ExperimentConfig::Inequality(c) => inequality(c),
        ExperimentConfig::Selftest(c) => run_selftest(c),
    }
}

fn grid(u: &[f64], v: &[f64]) -> Vec<(f64, f64)> {
    u.iter().flat_map(|&a| v.iter().map(move |&b| (a, b))).collect()
}

fn build_map(c: &MetricConfig) -> Result<Box<dyn CoherentMap>, CliError> {
    Ok(match c.family {
        FamilyName::Canonical => Box::new(CanonicalFamily::new(c.n, c.hbar)?),
        FamilyName::Affine => Box::new(AffineFamily::new(c.beta, c.hbar, c.nodes)?),
        FamilyName::Spin => {
            let fam = SpinFamily::new(Spin::new(c.s)?, c.hbar)?;
            match c.chart {
                SpinChart::Angles => Box::new(fam),
                SpinChart::Canonical => Box::new(SpinCanonicalChart(fam)),
            }
        }
    })
}

fn metric(c: &MetricConfig) -> Result<Outcome, CliError> {
    let map = build_map(c)?;
    let points = grid(&c.u, &c.v);
    let margin = 2.0 * (c.steps.stencil_step + c.steps.metric_step);
    let mut bad = Vec::new();
    for &(u, v) in &points {
        if let Err(e) = map.check_interior(u, v, margin) {
            bad.push(e.to_string());
        }
    }
    if !bad.is_empty() {
        return Err(CliError::Validation(bad.join("; ")));
    }
    let reports: Vec<CurvatureReport> = points
        .par_iter()
        .map(|&(u, v)| gaussian_curvature(map.as_ref(), u, v, c.steps))
        .collect::<Result<_, _>>()?;
    let [lu, lv] = c.coordinates;
    let verdict = if let [r] = reports.as_slice() {
        let [a, b, cc] = r.metric.components();
        format!(
            "K = {:.6} (error estimate {:.1e}), scalar curvature R = 2K = {:.6} at ({lu}, {lv}) = ({}, {}); g = [{a:.6}, {b:.6}, {cc:.6}]",
            r.k,
            r.error_estimate,
            r.scalar_curvature(),
            r.u,
            r.v
        )
    } else {
        let (lo, hi) = reports.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.k), hi.max(r.k)));
        let err = reports.iter().map(|r| r.error_estimate).fold(0.0, f64::max);
        format!("K in [{lo:.6}, {hi:.6}] over {} points (max error estimate {err:.1e})", reports.len())
    };
    let mut table = curvature_table(&reports);
    table.header[1] = lu.into();
    table.header[2] = lv.into();
    Ok(Outcome {
        tables: vec![("metric".into(), table)],
        result: json!({ "points": reports }),
        verdict,
        failed: false,
    })
}

fn wcp(c: &WcpConfig) -> Result<Outcome, CliError> {
    let spec = HamiltonianSpec::parse(&c.spec)?;
    let classical = classical_limit(&spec)?;
    let h = EnhancedHamiltonian::new(spec.clone(), c.params.build(c.hbar)?)?;
    let points = grid(&c.u, &c.v);
    let rows: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|&(u, v)| -> Result<_, enhq::Error> {
            let e = h.eval(u, v)?;
            let cl = classical.eval_on(&c.params, c.hbar, u, v)?;
            Ok((u, v, e, cl))
        })
        .collect::<Result<_, _>>()?;
    let [lu, lv] = c.coordinates;
    let mut surface = CsvTable::new([lu, lv, "H", "H_classical", "difference"]);
    for &(u, v, e, cl) in &rows {
        surface.push(vec![u.into(), v.into(), e.into(), cl.into(), (e - cl).into()]);
    }
    let [su, sv] = c.scale_at;
    let scaling = hbar_scaling_fit(&spec, &c.params, su, sv, &c.hbars)?;
    let mut sweep = CsvTable::new(["hbar", "H", "H_classical", "difference"]);
    for i in 0..scaling.hbars.len() {
        sweep.push(vec![
            scaling.hbars[i].into(),
            scaling.enhanced[i].into(),
            scaling.classical_values[i].into(),
            scaling.differences[i].into(),
        ]);
    }
    let fit = match scaling.fit {
        ScalingFit::Exact => "H = H_classical exactly".to_string(),
        ScalingFit::Power {
            exponent,
            prefactor,
            r_squared,
        } => format!("|H - H_classical| ~ {prefactor:.4} hbar^{exponent:.4} (R^2 = {r_squared:.6})"),
    };
    Ok(Outcome {
        tables: vec![("wcp".into(), surface), ("wcp_scaling".into(), sweep)],
        result: json!({ "classical": classical.to_string(), "scaling": scaling }),
        verdict: format!("{}: H_classical = {classical}; {fit} at ({lu}, {lv}) = ({su}, {sv})", c.spec),
        failed: false,
    })
}

fn run_verdict(flow: &FlowSpec, initial: &PhaseState, t: &Trajectory) -> String {
    match *flow {
        FlowSpec::ToyGravity { hbar, c, .. } => {
            let label = format!("hbar={hbar}");
            match t.status {
                Status::SingularityReached { hit_time } => format!("{label}: singularity at t≈{hit_time:.3}"),
                Status::Completed => {
                    let e = flow.energy(&initial.p, &initial.q);
                    let min_q = t.min_q.unwrap_or(f64::NAN);
                    if c > 0.0 && e > 0.0 {
                        format!(
                            "{label}: no singularity, min q = {min_q:.6e} vs hbar^2 C'/E = {:.6e}, drift {:.1e}",
                            c / e,
                            t.max_drift
                        )
                    } else {
                        format!("{label}: no singularity, min q = {min_q:.6e}, drift {:.1e}", t.max_drift)
                    }
                }
            }
        }
        _ => format!("{}: completed at t={}, drift {:.1e}", flow.name(), t.final_time(), t.max_drift),
    }
}

fn dynamics(c: &DynamicsConfig) -> Result<Outcome, CliError> {
    let trajectories: Vec<Trajectory> = c
        .flows
        .par_iter()
        .map(|f| integrate(f, &c.initial, c.t_end, &c.controls))
        .collect::<Result<_, _>>()?;
    let single = trajectories.len() == 1;
    let mut tables = Vec::new();
    let mut runs = Vec::new();
    let mut verdicts = Vec::new();
    for (i, (flow, t)) in c.flows.iter().zip(&trajectories).enumerate() {
        let stem = if single { "dynamics".to_string() } else { format!("dynamics_{i}") };
        tables.push((stem, t.to_table()));
        runs.push(json!({ "flow": flow, "summary": t.summary() }));
        verdicts.push(run_verdict(flow, &c.initial, t));
    }
    Ok(Outcome {
        tables,
        result: json!({ "runs": runs }),
        verdict: verdicts.join("; "),
        failed: false,
    })
}

/// Sends `support[i] → target[i]` and the remaining modes to the remaining slots in order.
fn relabeling(n: usize, support: &[usize], target: &[usize]) -> Vec<usize> {
    let mut perm = vec![usize::MAX; n];
    for (&s, &t) in support.iter().zip(target) {
        perm[s - 1] = t - 1;
    }
    let mut free = (0..n).filter(|j| !target.contains(&(j + 1)));
    for slot in perm.iter_mut().filter(|p| **p == usize::MAX) {
        *slot = free.next().expect("as many free slots as free modes");
    }
    perm
}

fn rotsym(c: &RotsymConfig) -> Result<Outcome, CliError> {
    let mut p = vec![0.0; c.n];
    let mut q = vec![0.0; c.n];
    for (k, &s) in c.support.iter().enumerate() {
        p[s - 1] = c.p_init[k];
        q[s - 1] = c.q_init[k];
    }
    let init = PhaseState::new(p, q);
    let perm = relabeling(c.n, &c.support, &c.target);
    let relabeled = permute_state(&init, &perm)?;
    let (a, b) = rayon::join(
        || rotsym_integrate(c.n, c.m0, c.g0, &init, c.t_end, &c.controls),
        || rotsym_integrate(c.n, c.m0, c.g0, &relabeled, c.t_end, &c.controls),
    );
    let (a, b) = (a?, b?);
    let deviation = permuted_deviation(&a, &b, &perm)?;
    let holds = deviation < 1e-9;
    let fmt = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    Ok(Outcome {
        tables: vec![("rotsym".into(), a.to_table()), ("rotsym_relabeled".into(), b.to_table())],
        result: json!({
            "permutation": perm,
            "max_deviation": deviation,
            "original": a.summary(),
            "relabeled": b.summary(),
            "equations": "dq_n/dt = 2 p_n, dp_n/dt = -2 m0^2 q_n - 4 g0 (sum q^2) q_n",
        }),
        verdict: format!(
            "shuffle symmetry {}: max deviation {deviation:.1e} after relabeling {{{}}} -> {{{}}} (N={}, drift {:.1e})",
            if holds { "holds" } else { "VIOLATED" },
            fmt(&c.support),
            fmt(&c.target),
            c.n,
            a.max_drift.max(b.max_drift)
        ),
        failed: !holds,
    })
}

fn alpha_verdict(r: &AlphaScan) -> String {
    let side = |v: Verdict, slope: f64, expected: f64| match v {
        Verdict::Diverges => format!("diverges (slope {slope:.3}, power counting {expected:.3})"),
        Verdict::Converges => "converges".to_string(),
    };
    format!(
        "alpha={}: lhs {}, rhs {}, ratio x{:.3} over the sweep",
        r.alpha,
        side(r.lhs_verdict, r.lhs_tail_slope, r.lhs_expected_slope),
        side(r.rhs_verdict, r.rhs_tail_slope, r.rhs_expected_slope),
        r.ratio_growth
    )
}

fn inequality(c: &InequalityConfig) -> Result<Outcome, CliError> {
    let rows: Vec<AlphaScan> = c
        .alpha
        .par_iter()
        .map(|&a| scan_alpha(c.n, a, &c.eps, c.m0))
        .collect::<Result<_, _>>()?;
    let report = InequalityReport::from_rows(c.n, c.m0, &c.eps, rows);
    let head = match (report.envelope, report.bounded) {
        (Some(env), Some(true)) => format!("n={}: ratio bounded, max {:.4} within envelope {env:.4} + 10%", c.n, report.max_ratio),
        (Some(env), _) => format!("n={}: ratio {:.4} EXCEEDS envelope {env:.4} + 10%", c.n, report.max_ratio),
        (None, _) => format!("n={}: no finite constant expected", c.n),
    };
    let details: Vec<String> = report.rows.iter().map(alpha_verdict).collect();
    let verdicts: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "alpha": r.alpha,
                "lhs": r.lhs_verdict,
                "rhs": r.rhs_verdict,
                "lhs_slope": r.lhs_fit.slope,
                "lhs_r_squared": r.lhs_fit.r_squared,
                "rhs_slope": r.rhs_fit.slope,
                "rhs_r_squared": r.rhs_fit.r_squared,
                "lhs_tail_slope": r.lhs_tail_slope,
                "rhs_tail_slope": r.rhs_tail_slope,
                "lhs_expected_slope": r.lhs_expected_slope,
                "rhs_expected_slope": r.rhs_expected_slope,
                "ratio_growth": r.ratio_growth,
                "rhs_cauchy": r.rhs_cauchy,
            })
        })
        .collect();
    Ok(Outcome {
        tables: vec![("inequality".into(), report.to_table())],
        result: json!({ "verdicts": verdicts, "report": report }),
        verdict: format!("{head}; {}", details.join("; ")),
        failed: false,
    })
}

fn run_selftest(c: &SelftestConfig) -> Result<Outcome, CliError> {
    let checks: Vec<_> = selftest::checks()
        .into_iter()
        .filter(|k| c.module.as_deref().is_none_or(|m| m == k.module))
        .collect();
    let results: Vec<CheckResult> = checks.par_iter().map(|k| k.evaluate()).collect();
    let report = SelftestReport::from_results(results);
    let failing: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}/{}", c.module, c.name))
        .collect();
    let verdict = if failing.is_empty() {
        format!("selftest: {}/{} checks passed", report.passed, report.checks.len())
    } else {
        format!(
            "selftest: {}/{} checks passed; failing: {}",
            report.passed,
            report.checks.len(),
            failing.join(", ")
        )
    };
    Ok(Outcome {
        tables: vec![("selftest".into(), report.to_table())],
        failed: !report.all_passed(),
        result: to_json(&report),
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeling_is_a_permutation() {
        let p = relabeling(6, &[1, 2, 3], &[4, 5, 6]);
        assert_eq!(p, vec![3, 4, 5, 0, 1, 2]);
        let p = relabeling(5, &[2, 3], &[3, 5]);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        assert_eq!((p[1], p[2]), (2, 4));
    }
}
