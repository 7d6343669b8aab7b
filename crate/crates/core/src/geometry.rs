//! Fubini–Study geometry of coherent-state families.
//!
//! The metric is the 2ħ-scaled ray metric
//! `dσ² = 2ħ[‖dψ‖² − |<ψ|dψ>|²]`, evaluated from fourth-order central
//! differences of the state map. Gaussian curvature comes from the Brioschi
//! formula applied to fourth-order finite-difference derivatives of the
//! metric on a 5×5 stencil, repeated at half the stencil step for an error
//! estimate.

use nalgebra::DVector;
use serde::Serialize;

use crate::coherent::{AffineFamily, CanonicalFamily, SpinFamily};
use crate::hilbert::{expectation, momentum_operator, position_operator, StateVector};
use crate::report::CsvTable;
use crate::{Error, Result, C64};

/// Default step for state derivatives (chart units).
pub const DEFAULT_METRIC_STEP: f64 = 1e-3;
/// Default stencil step for metric derivatives.
pub const DEFAULT_STENCIL_STEP: f64 = 1e-2;
/// Largest allowed deviation of a stencil state's norm from one.
pub const NORM_LOSS_TOL: f64 = 1e-6;
/// Spin curvature is only evaluated for θ in `[SPIN_POLE_GUARD, π − SPIN_POLE_GUARD]`.
pub const SPIN_POLE_GUARD: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    /// `(p, q) ∈ ℝ²`
    Canonical,
    /// `(p, q) ∈ ℝ × ℝ⁺`
    Affine,
    /// `(θ, φ)`
    SpinAngles,
    /// `p = sqrt(sħ) cos θ`, `q = sqrt(sħ) φ`
    SpinCanonical,
}

impl Chart {
    pub fn name(self) -> &'static str {
        match self {
            Chart::Canonical => "canonical",
            Chart::Affine => "affine",
            Chart::SpinAngles => "spin-angles",
            Chart::SpinCanonical => "spin-canonical",
        }
    }

    pub fn labels(self) -> (&'static str, &'static str) {
        match self {
            Chart::SpinAngles => ("theta", "phi"),
            _ => ("p", "q"),
        }
    }
}

/// A two-parameter family of unit vectors over a chart.
pub trait CoherentMap: Sync {
    fn chart(&self) -> Chart;
    fn hbar(&self) -> f64;
    /// Rejects points whose `margin`-neighbourhood leaves the chart.
    fn check_interior(&self, u: f64, v: f64, margin: f64) -> Result<()>;
    /// Amplitudes of the state at `(u, v)` in an orthonormal frame.
    fn amplitudes(&self, u: f64, v: f64) -> Result<DVector<C64>>;
}

impl CoherentMap for CanonicalFamily {
    fn chart(&self) -> Chart {
        Chart::Canonical
    }
    fn hbar(&self) -> f64 {
        CanonicalFamily::hbar(self)
    }
    fn check_interior(&self, u: f64, v: f64, _margin: f64) -> Result<()> {
        if u.is_finite() && v.is_finite() {
            Ok(())
        } else {
            Err(Error::ChartBoundary("non-finite chart point".into()))
        }
    }
    fn amplitudes(&self, u: f64, v: f64) -> Result<DVector<C64>> {
        Ok(CanonicalFamily::amplitudes(self, u, v))
    }
}

impl CoherentMap for AffineFamily {
    fn chart(&self) -> Chart {
        Chart::Affine
    }
    fn hbar(&self) -> f64 {
        AffineFamily::hbar(self)
    }
    fn check_interior(&self, u: f64, v: f64, margin: f64) -> Result<()> {
        if !u.is_finite() || !(v - margin > 0.0) {
            return Err(Error::ChartBoundary(format!(
                "affine point (p={u}, q={v}) too close to q = 0 for step {margin}"
            )));
        }
        Ok(())
    }
    fn amplitudes(&self, u: f64, v: f64) -> Result<DVector<C64>> {
        Ok(self.state(u, v)?.samples().clone())
    }
}

impl CoherentMap for SpinFamily {
    fn chart(&self) -> Chart {
        Chart::SpinAngles
    }
    fn hbar(&self) -> f64 {
        SpinFamily::hbar(self)
    }
    fn check_interior(&self, u: f64, v: f64, margin: f64) -> Result<()> {
        if !(u - margin > 0.0 && u + margin < std::f64::consts::PI) || !v.is_finite() {
            return Err(Error::ChartBoundary(format!(
                "theta = {u} within {margin} of a coordinate pole"
            )));
        }
        Ok(())
    }
    fn amplitudes(&self, u: f64, v: f64) -> Result<DVector<C64>> {
        Ok(SpinFamily::amplitudes(self, u, v))
    }
}

/// Spin family in the chart `p = sqrt(sħ) cos θ`, `q = sqrt(sħ) φ`.
#[derive(Clone, Debug)]
pub struct SpinCanonicalChart(pub SpinFamily);

impl SpinCanonicalChart {
    fn radius(&self) -> f64 {
        (self.0.spin().value() * self.0.hbar()).sqrt()
    }

    /// `(θ, φ)` of a chart point.
    pub fn angles(&self, p: f64, q: f64) -> (f64, f64) {
        let r = self.radius();
        ((p / r).clamp(-1.0, 1.0).acos(), q / r)
    }
}

impl CoherentMap for SpinCanonicalChart {
    fn chart(&self) -> Chart {
        Chart::SpinCanonical
    }
    fn hbar(&self) -> f64 {
        self.0.hbar()
    }
    fn check_interior(&self, u: f64, v: f64, margin: f64) -> Result<()> {
        if !(u.abs() + margin < self.radius()) || !v.is_finite() {
            return Err(Error::ChartBoundary(format!(
                "|p| = {} within {margin} of the chart edge sqrt(s hbar) = {}",
                u.abs(),
                self.radius()
            )));
        }
        Ok(())
    }
    fn amplitudes(&self, u: f64, v: f64) -> Result<DVector<C64>> {
        let (theta, phi) = self.angles(u, v);
        Ok(self.0.amplitudes(theta, phi))
    }
}

/// Multiplies every state of a map by a point-dependent phase `e^{iα(u,v)}`.
pub struct Rephased<'a, M, F> {
    pub map: &'a M,
    pub phase: F,
}

impl<M: CoherentMap, F: Fn(f64, f64) -> f64 + Sync> CoherentMap for Rephased<'_, M, F> {
    fn chart(&self) -> Chart {
        self.map.chart()
    }
    fn hbar(&self) -> f64 {
        self.map.hbar()
    }
    fn check_interior(&self, u: f64, v: f64, margin: f64) -> Result<()> {
        self.map.check_interior(u, v, margin)
    }
    fn amplitudes(&self, u: f64, v: f64) -> Result<DVector<C64>> {
        Ok(self.map.amplitudes(u, v)? * C64::from_polar(1.0, (self.phase)(u, v)))
    }
}

/// Symmetric 2×2 metric at one chart point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metric2D {
    pub chart: Chart,
    pub u: f64,
    pub v: f64,
    pub g_pp: f64,
    pub g_pq: f64,
    pub g_qq: f64,
}

impl Metric2D {
    pub fn det(&self) -> f64 {
        self.g_pp * self.g_qq - self.g_pq * self.g_pq
    }

    pub fn trace(&self) -> f64 {
        self.g_pp + self.g_qq
    }

    pub fn is_positive_definite(&self) -> bool {
        self.det() > 0.0 && self.trace() > 0.0
    }

    pub fn components(&self) -> [f64; 3] {
        [self.g_pp, self.g_pq, self.g_qq]
    }

    /// Largest componentwise difference.
    pub fn max_diff(&self, other: [f64; 3]) -> f64 {
        self.components()
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn central4(fm2: &DVector<C64>, fm1: &DVector<C64>, fp1: &DVector<C64>, fp2: &DVector<C64>, h: f64) -> DVector<C64> {
    (fm2 - fp2 + (fp1 - fm1) * C64::from(8.0)) / C64::from(12.0 * h)
}

/// `fs_metric`: 2ħ-scaled Fubini–Study metric at `(u, v)`.
pub fn fs_metric<M: CoherentMap + ?Sized>(map: &M, u: f64, v: f64, step: f64) -> Result<Metric2D> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("metric step must be positive, got {step}")));
    }
    map.check_interior(u, v, 2.0 * step)?;
    let psi = map.amplitudes(u, v)?;
    let mut stencil = Vec::with_capacity(8);
    for (du, dv) in [
        (-2.0, 0.0),
        (-1.0, 0.0),
        (1.0, 0.0),
        (2.0, 0.0),
        (0.0, -2.0),
        (0.0, -1.0),
        (0.0, 1.0),
        (0.0, 2.0),
    ] {
        stencil.push(map.amplitudes(u + du * step, v + dv * step)?);
    }
    for s in std::iter::once(&psi).chain(&stencil) {
        let loss = (s.norm() - 1.0).abs();
        if loss > NORM_LOSS_TOL {
            return Err(Error::Numerical(format!("norm loss {loss:.2e} on the metric stencil")));
        }
    }
    let du = central4(&stencil[0], &stencil[1], &stencil[2], &stencil[3], step);
    let dv = central4(&stencil[4], &stencil[5], &stencil[6], &stencil[7], step);
    let a_u = psi.dotc(&du);
    let a_v = psi.dotc(&dv);
    let scale = 2.0 * map.hbar();
    let g = |x: &DVector<C64>, ax: C64, y: &DVector<C64>, ay: C64| scale * (x.dotc(y) - ax.conj() * ay).re;
    Ok(Metric2D {
        chart: map.chart(),
        u,
        v,
        g_pp: g(&du, a_u, &du, a_u),
        g_pq: g(&du, a_u, &dv, a_v),
        g_qq: g(&dv, a_v, &dv, a_v),
    })
}

/// Variance coefficients `(A, B, C)` of a canonical fiducial:
/// `A = <(ΔQ)²>`, `B = <ΔQΔP + ΔPΔQ>`, `C = <(ΔP)²>`.
pub fn fiducial_metric_coeffs(fiducial: &StateVector) -> Result<(f64, f64, f64)> {
    let space = fiducial.space();
    let q = position_operator(space)?;
    let p = momentum_operator(space)?;
    let mq = expectation(fiducial, &q)?.re;
    let mp = expectation(fiducial, &p)?.re;
    let shift = |op: &crate::hilbert::Operator, m: f64| {
        op.add(&crate::hilbert::Operator::identity(space).scale(C64::from(-m)))
    };
    let dq = shift(&q, mq)?;
    let dp = shift(&p, mp)?;
    let a = expectation(fiducial, &dq.mul(&dq)?)?.re;
    let c = expectation(fiducial, &dp.mul(&dp)?)?.re;
    let b = expectation(fiducial, &dq.mul(&dp)?.add(&dp.mul(&dq)?)?)?.re;
    Ok((a, b, c))
}

/// Metric components `[g_pp, g_pq, g_qq]` generated by a fiducial with
/// variance coefficients `(A, B, C)`.
///
/// `g_pp = 2A/ħ` and `g_qq = 2C/ħ`. The off-diagonal entry is `−B/ħ`: with
/// `|p,q> = e^{−iqP/ħ} e^{ipQ/ħ}|η>` one has `∂_p ~ (i/ħ)ΔQ` and
/// `∂_q ~ −(i/ħ)ΔP`, whose real cross term is `−B/(2ħ²)`.
pub fn metric_from_coeffs(a: f64, b: f64, c: f64, hbar: f64) -> [f64; 3] {
    [2.0 * a / hbar, -b / hbar, 2.0 * c / hbar]
}

/// Metric components and their first and second derivatives at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricJet {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub f_u: f64,
    pub f_v: f64,
    pub g_u: f64,
    pub g_v: f64,
    pub e_vv: f64,
    pub f_uv: f64,
    pub g_uu: f64,
}

/// Brioschi formula for the Gaussian curvature of `E du² + 2F du dv + G dv²`.
pub fn brioschi(j: &MetricJet) -> f64 {
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let first = [
        [-0.5 * j.e_vv + j.f_uv - 0.5 * j.g_uu, 0.5 * j.e_u, j.f_u - 0.5 * j.e_v],
        [j.f_v - 0.5 * j.g_u, j.e, j.f],
        [0.5 * j.g_v, j.f, j.g],
    ];
    let second = [[0.0, 0.5 * j.e_v, 0.5 * j.g_u], [0.5 * j.e_v, j.e, j.f], [0.5 * j.g_u, j.f, j.g]];
    let w = j.e * j.g - j.f * j.f;
    (det3(first) - det3(second)) / (w * w)
}

const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0]; // /12h
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0]; // /12h²

/// Metric jet from a 5×5 stencil of spacing `h` around `(u, v)`.
pub fn metric_jet(metric: impl Fn(f64, f64) -> Result<[f64; 3]>, u: f64, v: f64, h: f64) -> Result<MetricJet> {
    let mut grid = [[[0.0f64; 3]; 5]; 5];
    for (i, row) in grid.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = metric(u + (i as f64 - 2.0) * h, v + (k as f64 - 2.0) * h)?;
        }
    }
    let d_u = |c: usize| (0..5).map(|i| D1[i] * grid[i][2][c]).sum::<f64>() / (12.0 * h);
    let d_v = |c: usize| (0..5).map(|k| D1[k] * grid[2][k][c]).sum::<f64>() / (12.0 * h);
    let d_uu = |c: usize| (0..5).map(|i| D2[i] * grid[i][2][c]).sum::<f64>() / (12.0 * h * h);
    let d_vv = |c: usize| (0..5).map(|k| D2[k] * grid[2][k][c]).sum::<f64>() / (12.0 * h * h);
    let d_uv = |c: usize| {
        let mut s = 0.0;
        for i in 0..5 {
            for k in 0..5 {
                s += D1[i] * D1[k] * grid[i][k][c];
            }
        }
        s / (144.0 * h * h)
    };
    Ok(MetricJet {
        e: grid[2][2][0],
        f: grid[2][2][1],
        g: grid[2][2][2],
        e_u: d_u(0),
        e_v: d_v(0),
        f_u: d_u(1),
        f_v: d_v(1),
        g_u: d_u(2),
        g_v: d_v(2),
        e_vv: d_vv(0),
        f_uv: d_uv(1),
        g_uu: d_uu(2),
    })
}

/// Step sizes for [`gaussian_curvature`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureSteps {
    pub metric_step: f64,
    pub stencil_step: f64,
}

impl Default for CurvatureSteps {
    fn default() -> Self {
        CurvatureSteps {
            metric_step: DEFAULT_METRIC_STEP,
            stencil_step: DEFAULT_STENCIL_STEP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub chart: Chart,
    pub u: f64,
    pub v: f64,
    /// Gaussian curvature at the halved stencil step.
    pub k: f64,
    /// Gaussian curvature at the full stencil step.
    pub k_coarse: f64,
    /// `|k − k_coarse|`.
    pub error_estimate: f64,
    pub metric: Metric2D,
    pub steps: CurvatureSteps,
}

impl CurvatureReport {
    /// Scalar curvature `R = 2K` of the surface.
    pub fn scalar_curvature(&self) -> f64 {
        2.0 * self.k
    }
}

/// `gaussian_curvature`: Brioschi curvature with a step-halving error estimate.
pub fn gaussian_curvature<M: CoherentMap + ?Sized>(
    map: &M,
    u: f64,
    v: f64,
    steps: CurvatureSteps,
) -> Result<CurvatureReport> {
    if !(steps.stencil_step > 0.0) || !(steps.metric_step > 0.0) {
        return Err(Error::invalid("curvature steps must be positive"));
    }
    if map.chart() == Chart::SpinAngles && !(SPIN_POLE_GUARD..=std::f64::consts::PI - SPIN_POLE_GUARD).contains(&u) {
        return Err(Error::ChartBoundary(format!(
            "spin curvature restricted to theta in [{SPIN_POLE_GUARD}, pi - {SPIN_POLE_GUARD}], got {u}"
        )));
    }
    map.check_interior(u, v, 2.0 * steps.stencil_step + 2.0 * steps.metric_step)?;
    let metric_at = |a: f64, b: f64| fs_metric(map, a, b, steps.metric_step).map(|m| m.components());
    let coarse = brioschi(&metric_jet(metric_at, u, v, steps.stencil_step)?);
    let fine = brioschi(&metric_jet(metric_at, u, v, 0.5 * steps.stencil_step)?);
    if !fine.is_finite() {
        return Err(Error::Numerical("non-finite curvature (degenerate metric)".into()));
    }
    Ok(CurvatureReport {
        chart: map.chart(),
        u,
        v,
        k: fine,
        k_coarse: coarse,
        error_estimate: (fine - coarse).abs(),
        metric: fs_metric(map, u, v, steps.metric_step)?,
        steps,
    })
}

/// Columns `chart, u, v, g_pp, g_pq, g_qq, K, R, error`.
pub fn curvature_table(reports: &[CurvatureReport]) -> CsvTable {
    let mut t = CsvTable::new(["chart", "u", "v", "g_pp", "g_pq", "g_qq", "K", "R", "error"]);
    for r in reports {
        let [a, b, c] = r.metric.components();
        t.push(vec![
            r.chart.name().into(),
            r.u.into(),
            r.v.into(),
            a.into(),
            b.into(),
            c.into(),
            r.k.into(),
            r.scalar_curvature().into(),
            r.error_estimate.into(),
        ]);
    }
    t
}
