//! Aggregated invariant checks across all modules.
//!
//! Each check measures an error and compares it with a tolerance. A check
//! that fails to run is reported as failed with the error message.

use serde::Serialize;
use statrs::function::gamma::gamma_ui;

use crate::coherent::{affine_moment, AffineFamily, AffineOp, CanonicalFamily, Family, SpinFamily, DEFAULT_AFFINE_NODES};
use crate::dynamics::{
    energy_drift, integrate, permute_state, permuted_deviation, rotsym_integrate, singularity_report, Controls, FlowSpec,
    PhaseState,
};
use crate::geometry::{fs_metric, gaussian_curvature, CurvatureSteps, DEFAULT_METRIC_STEP};
use crate::hilbert::{momentum_operator, position_operator, HilbertSpace, Operator, Spin};
use crate::inequality::{default_eps_sequence, lhs, scan, scan_alpha, sphere_area, RadialField, Verdict};
use crate::report::CsvTable;
use crate::wcp::{cprime, default_canonical, enhanced_hamiltonian, HamiltonianSpec};
use crate::{Result, C64};

/// Measured error and the tolerance it is held to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub error: f64,
    pub tolerance: f64,
}

fn within(error: f64, tolerance: f64) -> Result<Measurement> {
    Ok(Measurement { error, tolerance })
}

/// A named check.
#[derive(Clone, Copy)]
pub struct SelfCheck {
    pub module: &'static str,
    pub name: &'static str,
    run: fn() -> Result<Measurement>,
}

impl SelfCheck {
    pub fn evaluate(&self) -> CheckResult {
        match (self.run)() {
            Ok(m) => CheckResult {
                module: self.module,
                name: self.name,
                error: m.error,
                tolerance: m.tolerance,
                passed: m.error <= m.tolerance,
                detail: None,
            },
            Err(e) => CheckResult {
                module: self.module,
                name: self.name,
                error: f64::NAN,
                tolerance: f64::NAN,
                passed: false,
                detail: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
    pub passed: usize,
    pub failed: usize,
}

impl SelftestReport {
    pub fn from_results(checks: Vec<CheckResult>) -> Self {
        let passed = checks.iter().filter(|c| c.passed).count();
        SelftestReport {
            failed: checks.len() - passed,
            passed,
            checks,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    /// Columns `module, name, error, tolerance, passed`.
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["module", "name", "error", "tolerance", "passed"]);
        for c in &self.checks {
            t.push(vec![
                c.module.into(),
                c.name.into(),
                c.error.into(),
                c.tolerance.into(),
                (if c.passed { "true" } else { "false" }).into(),
            ]);
        }
        t
    }
}

/// All checks, in a fixed order.
pub fn checks() -> Vec<SelfCheck> {
    macro_rules! c {
        ($m:literal, $n:literal, $f:ident) => {
            SelfCheck { module: $m, name: $n, run: $f }
        };
    }
    vec![
        c!("hilbert", "ccr-low-sector", ccr_low_sector),
        c!("coherent", "canonical-norm", canonical_norm),
        c!("coherent", "affine-expectations", affine_expectations),
        c!("coherent", "affine-moments", affine_moments),
        c!("geometry", "canonical-metric", canonical_metric),
        c!("geometry", "affine-metric", affine_metric),
        c!("geometry", "spin-metric", spin_metric),
        c!("geometry", "canonical-curvature", canonical_curvature),
        c!("geometry", "affine-curvature", affine_curvature),
        c!("geometry", "spin-curvature", spin_curvature),
        c!("wcp", "oscillator-offset", oscillator_offset),
        c!("wcp", "cprime-closed-form", cprime_closed_form),
        c!("wcp", "toygravity-p-independence", toygravity_p_independence),
        c!("dynamics", "classical-hit-time", classical_hit_time),
        c!("dynamics", "enhanced-min-q", enhanced_min_q),
        c!("dynamics", "oscillator-drift", oscillator_drift),
        c!("dynamics", "shuffle-symmetry", shuffle_symmetry),
        c!("inequality", "gaussian-oracle", gaussian_oracle),
        c!("inequality", "n3-bounded", n3_bounded),
        c!("inequality", "n5-lhs-diverges", n5_lhs_diverges),
    ]
}

/// Runs every check sequentially.
pub fn run() -> SelftestReport {
    SelftestReport::from_results(checks().iter().map(SelfCheck::evaluate).collect())
}

fn ccr_low_sector() -> Result<Measurement> {
    let hbar = 0.7;
    let space = HilbertSpace::fock(40, hbar)?;
    let (q, p) = (position_operator(space)?, momentum_operator(space)?);
    let defect = q.commutator(&p)?.add(&Operator::identity(space).scale(C64::new(0.0, -hbar)))?;
    within(defect.max_abs_leading_block(space.low_sector()), 1e-12)
}

fn canonical_norm() -> Result<Measurement> {
    let fam = CanonicalFamily::new(100, 1.0)?;
    let worst = [(0.0, 0.0), (1.5, -2.0), (-3.0, 0.5)]
        .iter()
        .map(|&(p, q)| (fam.state(p, q).norm() - 1.0).abs())
        .fold(0.0, f64::max);
    within(worst, 1e-10)
}

fn affine_expectations() -> Result<Measurement> {
    let (p, q) = (0.4, 1.5);
    let s = AffineFamily::new(1.0, 1.0, DEFAULT_AFFINE_NODES)?.state(p, q)?;
    let err = (s.expect_word(&[AffineOp::Q]) - q).norm() + (s.expect_word(&[AffineOp::D]) - p * q).norm();
    within(err, 1e-8)
}

fn affine_moments() -> Result<Measurement> {
    let (beta, hbar) = (1.0, 0.25);
    let f = AffineFamily::new(beta, hbar, DEFAULT_AFFINE_NODES)?.fiducial()?;
    let mut worst = 0.0f64;
    for n in -1..=4 {
        let word = if n < 0 { vec![AffineOp::QInv] } else { vec![AffineOp::Q; n as usize] };
        let exact = affine_moment(beta, hbar, n)?;
        worst = worst.max((f.expect_word(&word).re / exact - 1.0).abs());
    }
    within(worst, 1e-7)
}

fn canonical_metric() -> Result<Measurement> {
    let fam = CanonicalFamily::new(100, 0.25)?;
    within(fs_metric(&fam, 0.5, -0.5, DEFAULT_METRIC_STEP)?.max_diff([1.0, 0.0, 1.0]), 1e-6)
}

fn affine_metric() -> Result<Measurement> {
    let (beta, p, q) = (2.0, 0.3, 1.2);
    let fam = AffineFamily::new(beta, 1.0, DEFAULT_AFFINE_NODES)?;
    let m = fs_metric(&fam, p, q, DEFAULT_METRIC_STEP)?;
    within(m.max_diff([q * q / beta, 0.0, beta / (q * q)]), 1e-5)
}

fn spin_metric() -> Result<Measurement> {
    let (s, hbar, theta) = (1.5, 1.0, 1.1);
    let fam = SpinFamily::new(Spin::new(s)?, hbar)?;
    let m = fs_metric(&fam, theta, 0.4, DEFAULT_METRIC_STEP)?;
    let sh = s * hbar;
    within(m.max_diff([sh, 0.0, sh * theta.sin().powi(2)]), 1e-6)
}

fn canonical_curvature() -> Result<Measurement> {
    let fam = CanonicalFamily::new(100, 1.0)?;
    within(gaussian_curvature(&fam, 0.3, -0.2, CurvatureSteps::default())?.k.abs(), 1e-4)
}

fn affine_curvature() -> Result<Measurement> {
    // Gaussian curvature −1/β (scalar curvature −2/β)
    let beta = 1.0;
    let fam = AffineFamily::new(beta, 1.0, DEFAULT_AFFINE_NODES)?;
    let k = gaussian_curvature(&fam, 0.0, 1.0, CurvatureSteps::default())?.k;
    within((k * beta + 1.0).abs(), 1e-3)
}

fn spin_curvature() -> Result<Measurement> {
    let (s, hbar) = (1.0, 1.0);
    let fam = SpinFamily::new(Spin::new(s)?, hbar)?;
    let k = gaussian_curvature(&fam, 1.2, 0.5, CurvatureSteps::default())?.k;
    within((k * s * hbar - 1.0).abs(), 1e-3)
}

fn oscillator_offset() -> Result<Measurement> {
    let h: HamiltonianSpec = "0.5*P.P + 0.5*Q.Q".parse()?;
    let hbar = 0.25;
    let fam = default_canonical(hbar)?;
    let mut worst = 0.0f64;
    for &(p, q) in &[(0.0, 0.0), (1.0, -1.0), (-1.5, 0.5)] {
        let v = enhanced_hamiltonian(&h, &fam, p, q)?;
        worst = worst.max((v - 0.5 * (p * p + q * q) - 0.5 * hbar).abs());
    }
    within(worst, 1e-8)
}

fn cprime_closed_form() -> Result<Measurement> {
    let (beta, hbar) = (1.0, 0.25);
    let k = 2.0 * beta / hbar;
    within((cprime(beta, hbar)? / (k * k / (4.0 * (k - 1.0))) - 1.0).abs(), 1e-8)
}

fn toygravity_p_independence() -> Result<Measurement> {
    let h: HamiltonianSpec = "D.Qinv.D".parse()?;
    let fam = Family::Affine(AffineFamily::new(1.0, 1.0, DEFAULT_AFFINE_NODES)?);
    let q = 0.8;
    let residual = |p: f64| enhanced_hamiltonian(&h, &fam, p, q).map(|v| v - q * p * p);
    let r0 = residual(0.0)?;
    let mut worst = 0.0f64;
    for p in [-2.0, -1.0, 1.0, 2.0] {
        worst = worst.max((residual(p)? - r0).abs());
    }
    within(worst, 1e-6)
}

fn classical_hit_time() -> Result<Measurement> {
    let flow = FlowSpec::toy_gravity(0.0, 1.0)?;
    let r = singularity_report(&flow, &PhaseState::scalar(-1.0, 1.0), 2.0, &Controls::default())?;
    within(r.hit_time.map_or(f64::INFINITY, |t| (t - 1.0).abs()), 1e-4)
}

fn enhanced_min_q() -> Result<Measurement> {
    let flow = FlowSpec::toy_gravity(1.0, 1.0)?;
    let r = singularity_report(&flow, &PhaseState::scalar(-1.0, 1.0), 10.0, &Controls::default())?;
    if r.hit_time.is_some() {
        return within(f64::INFINITY, 1e-6);
    }
    within((r.min_q * r.energy - r.c).abs(), 1e-6)
}

fn oscillator_drift() -> Result<Measurement> {
    let flow = FlowSpec::Oscillator;
    let traj = integrate(&flow, &PhaseState::scalar(0.3, 1.0), 100.0, &Controls::fixed(1e-3))?;
    within(energy_drift(&traj, &flow)?, 1e-8)
}

fn shuffle_symmetry() -> Result<Measurement> {
    let n = 6;
    let init = PhaseState::new(vec![0.1, -0.2, 0.3, 0.0, 0.0, 0.0], vec![0.5, 0.4, -0.3, 0.0, 0.0, 0.0]);
    let perm = [3, 4, 5, 0, 1, 2];
    let c = Controls::default();
    let a = rotsym_integrate(n, 1.0, 1.0, &init, 2.0, &c)?;
    let b = rotsym_integrate(n, 1.0, 1.0, &permute_state(&init, &perm)?, 2.0, &c)?;
    within(permuted_deviation(&a, &b, &perm)?, 1e-9)
}

fn gaussian_oracle() -> Result<Measurement> {
    let (n, eps) = (3u32, 1e-3);
    let field = RadialField::new(n, 0.0)?;
    let h = 0.5 * n as f64;
    let oracle = (sphere_area(n) * gamma_ui(h, 4.0 * eps * eps) / (2.0 * 4f64.powf(h))).sqrt();
    within((lhs(&field, 1.0, eps)? / oracle - 1.0).abs(), 1e-8)
}

fn n3_bounded() -> Result<Measurement> {
    let alphas: Vec<f64> = (0..=7).map(|k| 0.07 * k as f64).collect();
    let r = scan(3, &alphas, &default_eps_sequence(), 1.0)?;
    let env = r.envelope.unwrap_or(f64::NAN);
    within(r.max_ratio / env, 1.1)
}

fn n5_lhs_diverges() -> Result<Measurement> {
    let a = scan_alpha(5, 1.3, &default_eps_sequence(), 1.0)?;
    let miss = if a.lhs_verdict == Verdict::Diverges { 0.0 } else { 1.0 };
    within(miss + (a.lhs_tail_slope - a.lhs_expected_slope).abs(), 0.05)
}
