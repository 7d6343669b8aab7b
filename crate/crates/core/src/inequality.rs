//! Radial quadrature of the multiplicative field inequality
//! `{∫φ⁴ dⁿx}^{1/2} ≤ C_n ∫[(∇φ)² + m₀²φ²] dⁿx`
//! for the singular family `φ(r) = A r^{−α} e^{−r²}` with an inner cutoff `ε`.

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::fit::{log_log_fit, LinearFit};
use crate::quadrature::integrate_adaptive;
use crate::report::CsvTable;
use crate::{Error, Result};

pub const QUADRATURE_RTOL: f64 = 1e-10;
/// Beyond this radius `e^{−2r²}` is below `1e−100`.
const R_MAX: f64 = 11.0;
const MAX_INTERVALS: usize = 20_000;
/// A side diverges when its fitted slope is below this and the fit is clean.
pub const DIVERGENCE_SLOPE: f64 = -0.05;
pub const DIVERGENCE_R2: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadialField {
    pub n: u32,
    pub alpha: f64,
    pub amplitude: f64,
}

impl RadialField {
    pub fn new(n: u32, alpha: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("dimension must be at least 2, got {n}")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        Ok(RadialField { n, alpha, amplitude: 1.0 })
    }

    pub fn scaled(self, c: f64) -> Self {
        RadialField {
            amplitude: self.amplitude * c,
            ..self
        }
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.amplitude * r.powf(-self.alpha) * (-r * r).exp()
    }

    /// `φ′(r) = (−α/r − 2r) φ(r)`.
    pub fn dphi(&self, r: f64) -> f64 {
        (-self.alpha / r - 2.0 * r) * self.phi(r)
    }

    /// The gradient term is integrable at the origin iff `α < (n−2)/2`.
    pub fn rhs_integrable(&self) -> bool {
        self.alpha < 0.5 * (self.n as f64 - 2.0)
    }

    /// `∫φ⁴` is integrable at the origin iff `α < n/4`.
    pub fn lhs_integrable(&self) -> bool {
        self.alpha < 0.25 * self.n as f64
    }

    /// Power-counting slope of `ln lhs` against `ln ε` as `ε → 0`.
    pub fn lhs_expected_slope(&self) -> f64 {
        (-(4.0 * self.alpha - self.n as f64) / 2.0).min(0.0)
    }

    /// Power-counting slope of `ln rhs` against `ln ε` as `ε → 0`.
    pub fn rhs_expected_slope(&self) -> f64 {
        (-(2.0 * self.alpha + 2.0 - self.n as f64)).min(0.0)
    }
}

/// Area of the unit sphere in `ℝⁿ`: `2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: u32) -> f64 {
    let h = 0.5 * n as f64;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// `∫_ε^∞ f(r) dr` by adaptive quadrature in `u = ln r`.
fn radial_integral(f: impl Fn(f64) -> f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) || !(eps < R_MAX) {
        return Err(Error::invalid(format!("cutoff must be in (0, {R_MAX}), got {eps}")));
    }
    let g = |u: f64| {
        let r = u.exp();
        f(r) * r
    };
    let (a, b) = (eps.ln(), R_MAX.ln());
    let mut total = 0.0;
    // split at r = 1 so the Gaussian bulk and the power-law core get separate panels
    let pieces: &[(f64, f64)] = if a < 0.0 { &[(a, 0.0), (0.0, b)] } else { &[(a, b)] };
    for &(lo, hi) in pieces {
        total += integrate_adaptive(g, lo, hi, QUADRATURE_RTOL * 1e-2, 0.0, MAX_INTERVALS)?.value;
    }
    Ok(total)
}

/// `lhs`: `{ω_n ∫_ε^∞ φ⁴ r^{n−1} dr}^{1/2}`.
pub fn lhs(field: &RadialField, _m0: f64, eps: f64) -> Result<f64> {
    let n = field.n as i32;
    let i = radial_integral(|r| field.phi(r).powi(4) * r.powi(n - 1), eps)?;
    Ok((sphere_area(field.n) * i).sqrt())
}

/// `rhs`: `ω_n ∫_ε^∞ [φ′² + m₀²φ²] r^{n−1} dr`.
pub fn rhs(field: &RadialField, m0: f64, eps: f64) -> Result<f64> {
    let n = field.n as i32;
    let i = radial_integral(
        |r| {
            let (p, dp) = (field.phi(r), field.dphi(r));
            (dp * dp + m0 * m0 * p * p) * r.powi(n - 1)
        },
        eps,
    )?;
    Ok(sphere_area(field.n) * i)
}

/// Default cutoffs: 6 points, geometric from `1e−2` to `1e−7`.
pub fn default_eps_sequence() -> Vec<f64> {
    (0..6).map(|k| 10f64.powi(-2 - k)).collect()
}

/// `C_n = (4/3) m₀^{(n−4)/2}` for `n ≤ 4`.
pub fn envelope(n: u32, m0: f64) -> Option<f64> {
    (n <= 4).then(|| 4.0 / 3.0 * m0.powf((n as f64 - 4.0) / 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Diverges,
    Converges,
}

fn verdict(fit: &LinearFit) -> Verdict {
    if fit.slope < DIVERGENCE_SLOPE && fit.r_squared > DIVERGENCE_R2 {
        Verdict::Diverges
    } else {
        Verdict::Converges
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaScan {
    pub alpha: f64,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Fit over the whole cutoff sequence; drives the verdict.
    pub lhs_fit: LinearFit,
    pub rhs_fit: LinearFit,
    pub lhs_verdict: Verdict,
    pub rhs_verdict: Verdict,
    /// Slopes from the three smallest cutoffs.
    pub lhs_tail_slope: f64,
    pub rhs_tail_slope: f64,
    pub lhs_expected_slope: f64,
    pub rhs_expected_slope: f64,
    /// `ratio(ε_last) / ratio(ε_first)`.
    pub ratio_growth: f64,
    pub max_ratio: f64,
    /// Successive rhs differences shrink monotonically.
    pub rhs_cauchy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub n: u32,
    pub m0: f64,
    pub eps: Vec<f64>,
    pub rows: Vec<AlphaScan>,
    pub envelope: Option<f64>,
    pub max_ratio: f64,
    /// For `n ≤ 4`: every ratio is below the envelope plus 10%.
    pub bounded: Option<bool>,
}

impl InequalityReport {
    /// Columns `n, alpha, eps, lhs, rhs, ratio`.
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["n", "alpha", "eps", "lhs", "rhs", "ratio"]);
        for row in &self.rows {
            for (k, &e) in self.eps.iter().enumerate() {
                t.push(vec![
                    (self.n as usize).into(),
                    row.alpha.into(),
                    e.into(),
                    row.lhs[k].into(),
                    row.rhs[k].into(),
                    row.ratio[k].into(),
                ]);
            }
        }
        t
    }
}

fn tail_slope(eps: &[f64], ys: &[f64]) -> Result<f64> {
    let k = eps.len().saturating_sub(3);
    Ok(log_log_fit(&eps[k..], &ys[k..])?.slope)
}

/// Scan of one `α` over the cutoff sequence.
pub fn scan_alpha(n: u32, alpha: f64, eps: &[f64], m0: f64) -> Result<AlphaScan> {
    let field = RadialField::new(n, alpha)?;
    let l: Vec<f64> = eps.iter().map(|&e| lhs(&field, m0, e)).collect::<Result<_>>()?;
    let r: Vec<f64> = eps.iter().map(|&e| rhs(&field, m0, e)).collect::<Result<_>>()?;
    let ratio: Vec<f64> = l.iter().zip(&r).map(|(a, b)| a / b).collect();
    let lhs_fit = log_log_fit(eps, &l)?;
    let rhs_fit = log_log_fit(eps, &r)?;
    let diffs: Vec<f64> = r.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok(AlphaScan {
        alpha,
        lhs_verdict: verdict(&lhs_fit),
        rhs_verdict: verdict(&rhs_fit),
        lhs_tail_slope: tail_slope(eps, &l)?,
        rhs_tail_slope: tail_slope(eps, &r)?,
        lhs_expected_slope: field.lhs_expected_slope(),
        rhs_expected_slope: field.rhs_expected_slope(),
        ratio_growth: ratio[ratio.len() - 1] / ratio[0],
        max_ratio: ratio.iter().copied().fold(0.0, f64::max),
        rhs_cauchy: diffs.windows(2).all(|w| w[1] <= w[0]),
        lhs: l,
        rhs: r,
        ratio,
        lhs_fit,
        rhs_fit,
    })
}

/// Checks the inputs of [`scan`], reporting every problem at once.
pub fn validate_scan(n: u32, alphas: &[f64], eps: &[f64], m0: f64) -> Result<()> {
    let mut problems = Vec::new();
    if n < 2 {
        problems.push(format!("dimension must be at least 2, got {n}"));
    }
    if alphas.is_empty() {
        problems.push("alpha grid is empty".to_string());
    }
    if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        problems.push("alpha values must be non-negative".to_string());
    }
    if eps.len() < 3 {
        problems.push(format!("need at least 3 cutoffs, got {}", eps.len()));
    }
    if !eps.windows(2).all(|w| w[1] < w[0]) {
        problems.push("cutoffs must be strictly decreasing".to_string());
    }
    if eps.iter().any(|&e| !(e >= 1e-8) || !(e < R_MAX)) {
        problems.push(format!("cutoffs must lie in [1e-8, {R_MAX})"));
    }
    if !(m0 >= 0.0) || !m0.is_finite() {
        problems.push(format!("m0 must be non-negative, got {m0}"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(problems.join("; ")))
    }
}

impl InequalityReport {
    /// Assembles a report from per-`α` scans over the same cutoffs.
    pub fn from_rows(n: u32, m0: f64, eps: &[f64], rows: Vec<AlphaScan>) -> Self {
        let max_ratio = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
        let env = envelope(n, m0);
        InequalityReport {
            n,
            m0,
            eps: eps.to_vec(),
            envelope: env,
            bounded: env.map(|c| max_ratio <= 1.1 * c),
            max_ratio,
            rows,
        }
    }
}

/// `scan`: both sides over an `α` grid and a decreasing cutoff sequence.
pub fn scan(n: u32, alphas: &[f64], eps: &[f64], m0: f64) -> Result<InequalityReport> {
    validate_scan(n, alphas, eps, m0)?;
    let rows: Vec<AlphaScan> = alphas.iter().map(|&a| scan_alpha(n, a, eps, m0)).collect::<Result<_>>()?;
    Ok(InequalityReport::from_rows(n, m0, eps, rows))
}
