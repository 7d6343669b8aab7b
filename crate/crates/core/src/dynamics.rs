//! Classical and enhanced classical Hamiltonian flows.
//!
//! States are stored as `y = (p₁…p_N, q₁…q_N)` with `ṗ = −∂H/∂q` and
//! `q̇ = ∂H/∂p`. The primary integrator is the implicit midpoint rule with a
//! fixed-point solve. Near a chart singularity the step is capped at a fixed
//! fraction of the local time scale `|y|/|ẏ|`; everywhere else the nominal
//! step is used. A Dormand–Prince 5(4) run over the same interval serves as
//! an independent cross-check.

use serde::{Deserialize, Serialize};

use crate::report::{CsvTable, Cell};
use crate::wcp::cprime;
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-13;
/// `q ≤ Q_FLOOR` counts as reaching the singularity at `q = 0`.
pub const Q_FLOOR: f64 = 1e-12;
/// Largest number of degrees of freedom accepted by [`rotsym_integrate`].
pub const ROTSYM_MAX_N: usize = 128;

/// Hamiltonian vector field on `(p, q)`.
pub trait Hamiltonian: Sync {
    fn dof(&self) -> usize;
    fn energy(&self, p: &[f64], q: &[f64]) -> f64;
    /// Writes `(ṗ, q̇)` for the state `y = (p, q)` into `dy`.
    fn vector_field(&self, y: &[f64], dy: &mut [f64]);
    /// States with `q₁ ≤ floor` are outside the chart.
    fn q_floor(&self) -> Option<f64> {
        None
    }
}

/// The shipped flows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FlowSpec {
    /// `H = q p² + c/q` with `c = ħ²C′(β, ħ)`.
    ToyGravity { hbar: f64, beta: f64, c: f64 },
    /// `H = (p² + q²)/2`.
    Oscillator,
    /// `H = Σ(p_n² + m₀² q_n²) + g₀ (Σ q_n²)²`.
    RotSym { n: usize, m0: f64, g0: f64 },
}

impl FlowSpec {
    /// Toy gravity at `ħ` (classical when `ħ = 0`), with `C′` from [`cprime`].
    pub fn toy_gravity(hbar: f64, beta: f64) -> Result<Self> {
        if !(hbar >= 0.0) || !hbar.is_finite() {
            return Err(Error::invalid(format!("hbar must be non-negative, got {hbar}")));
        }
        let c = if hbar == 0.0 { 0.0 } else { hbar * hbar * cprime(beta, hbar)? };
        Ok(FlowSpec::ToyGravity { hbar, beta, c })
    }

    pub fn rotsym(n: usize, m0: f64, g0: f64) -> Result<Self> {
        if n == 0 || n > ROTSYM_MAX_N {
            return Err(Error::invalid(format!("N must be in 1..={ROTSYM_MAX_N}, got {n}")));
        }
        if !m0.is_finite() || !g0.is_finite() || g0 < 0.0 {
            return Err(Error::invalid("m0 must be finite and g0 finite and non-negative"));
        }
        Ok(FlowSpec::RotSym { n, m0, g0 })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowSpec::ToyGravity { .. } => "toygravity",
            FlowSpec::Oscillator => "oscillator",
            FlowSpec::RotSym { .. } => "rotsym",
        }
    }

    fn validate_initial(&self, init: &PhaseState) -> Result<()> {
        if init.p.len() != self.dof() || init.q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                left: init.p.len().max(init.q.len()),
                right: self.dof(),
            });
        }
        if init.p.iter().chain(&init.q).any(|x| !x.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        if let Some(floor) = self.q_floor() {
            if !(init.q[0] > floor) {
                return Err(Error::ChartBoundary(format!("initial q = {} must exceed {floor}", init.q[0])));
            }
        }
        Ok(())
    }
}

impl Hamiltonian for FlowSpec {
    fn dof(&self) -> usize {
        match self {
            FlowSpec::RotSym { n, .. } => *n,
            _ => 1,
        }
    }

    fn energy(&self, p: &[f64], q: &[f64]) -> f64 {
        match *self {
            FlowSpec::ToyGravity { c, .. } => q[0] * p[0] * p[0] + c / q[0],
            FlowSpec::Oscillator => 0.5 * (p[0] * p[0] + q[0] * q[0]),
            FlowSpec::RotSym { m0, g0, .. } => {
                let r2: f64 = q.iter().map(|x| x * x).sum();
                p.iter().map(|x| x * x).sum::<f64>() + m0 * m0 * r2 + g0 * r2 * r2
            }
        }
    }

    fn vector_field(&self, y: &[f64], dy: &mut [f64]) {
        match *self {
            FlowSpec::ToyGravity { c, .. } => {
                let (p, q) = (y[0], y[1]);
                dy[0] = -p * p + c / (q * q);
                dy[1] = 2.0 * q * p;
            }
            FlowSpec::Oscillator => {
                dy[0] = -y[1];
                dy[1] = y[0];
            }
            FlowSpec::RotSym { n, m0, g0 } => {
                let (p, q) = y.split_at(n);
                let r2: f64 = q.iter().map(|x| x * x).sum();
                let k = 2.0 * m0 * m0 + 4.0 * g0 * r2;
                let (dp, dq) = dy.split_at_mut(n);
                for i in 0..n {
                    dp[i] = -k * q[i];
                    dq[i] = 2.0 * p[i];
                }
            }
        }
    }

    fn q_floor(&self) -> Option<f64> {
        match self {
            FlowSpec::ToyGravity { .. } => Some(Q_FLOOR),
            _ => None,
        }
    }
}

/// A point `(p⃗, q⃗)` of phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PhaseState {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Self {
        PhaseState { p, q }
    }

    pub fn scalar(p: f64, q: f64) -> Self {
        PhaseState { p: vec![p], q: vec![q] }
    }

    fn packed(&self) -> Vec<f64> {
        self.p.iter().chain(&self.q).copied().collect()
    }

    fn unpack(y: &[f64]) -> Self {
        let n = y.len() / 2;
        PhaseState {
            p: y[..n].to_vec(),
            q: y[n..].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Nominal step.
    pub dt: f64,
    /// Fixed-point tolerance of the midpoint solve (relative to `1 + |y|`).
    pub tol: f64,
    pub max_iter: usize,
    /// Cap each step at `safety · |y|/|ẏ|` (only used for flows with a chart floor).
    pub adaptive: bool,
    pub safety: f64,
    /// Keep every `record_every`-th step (the first and last state are always kept).
    pub record_every: usize,
    /// Run the embedded Runge–Kutta cross-check.
    pub shadow: bool,
    pub shadow_rtol: f64,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            dt: DEFAULT_DT,
            tol: DEFAULT_FIXED_POINT_TOL,
            max_iter: 60,
            adaptive: true,
            safety: 2e-5,
            record_every: 10,
            shadow: true,
            shadow_rtol: 1e-11,
        }
    }
}

impl Controls {
    pub fn fixed(dt: f64) -> Self {
        Controls {
            dt,
            adaptive: false,
            ..Controls::default()
        }
    }

    /// Checks every field, reporting all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            problems.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tol > 0.0) {
            problems.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            problems.push("max_iter must be positive".to_string());
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            problems.push(format!("safety must be in (0, 1), got {}", self.safety));
        }
        if self.record_every == 0 {
            problems.push("record_every must be positive".to_string());
        }
        if !(self.shadow_rtol > 0.0) {
            problems.push(format!("shadow_rtol must be positive, got {}", self.shadow_rtol));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status {
    Completed,
    SingularityReached { hit_time: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShadowReport {
    pub method: &'static str,
    pub rtol: f64,
    pub steps: usize,
    /// Time of the comparison.
    pub time: f64,
    /// Largest `|y_mid − y_rk| / max(1, |y_rk|)` at `time`.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub flow: FlowSpec,
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub energy: Vec<f64>,
    pub status: Status,
    /// Refined minimum of `q₁` over all steps (one-degree-of-freedom flows).
    pub min_q: Option<f64>,
    /// Largest relative energy drift over all steps, recorded or not.
    pub max_drift: f64,
    pub method: &'static str,
    pub dt: f64,
    pub tol: f64,
    pub steps: usize,
    pub shadow: Option<ShadowReport>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn final_state(&self) -> &PhaseState {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn hit_time(&self) -> Option<f64> {
        match self.status {
            Status::SingularityReached { hit_time } => Some(hit_time),
            Status::Completed => None,
        }
    }

    /// Columns `t, p…, q…, H, drift`.
    pub fn to_table(&self) -> CsvTable {
        let n = self.states[0].p.len();
        let (pn, qn): (Vec<String>, Vec<String>) = if n == 1 {
            (vec!["p".into()], vec!["q".into()])
        } else {
            ((1..=n).map(|i| format!("p_{i}")).collect(), (1..=n).map(|i| format!("q_{i}")).collect())
        };
        let header = std::iter::once("t".to_string())
            .chain(pn)
            .chain(qn)
            .chain(["H".to_string(), "drift".to_string()]);
        let mut table = CsvTable::new(header);
        let e0 = self.energy[0];
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.energy) {
            let mut row: Vec<Cell> = vec![(*t).into()];
            row.extend(s.p.iter().chain(&s.q).map(|x| Cell::from(*x)));
            row.push((*e).into());
            row.push(relative_drift(e0, *e).into());
            table.push(row);
        }
        table
    }

    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            status: match self.status {
                Status::Completed => "completed",
                Status::SingularityReached { .. } => "singularity-reached",
            },
            hit_time: self.hit_time(),
            min_q: self.min_q,
            drift: self.max_drift,
            method: self.method,
            dt: self.dt,
            steps: self.steps,
            final_time: self.final_time(),
            shadow_deviation: self.shadow.map(|s| s.max_deviation),
        }
    }
}

/// Compact JSON-ready summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub status: &'static str,
    pub hit_time: Option<f64>,
    pub min_q: Option<f64>,
    pub drift: f64,
    pub method: &'static str,
    pub dt: f64,
    pub steps: usize,
    pub final_time: f64,
    pub shadow_deviation: Option<f64>,
}

fn relative_drift(e0: f64, e: f64) -> f64 {
    if e0 == 0.0 {
        (e - e0).abs()
    } else {
        ((e - e0) / e0).abs()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Workspace {
    mid: Vec<f64>,
    f: Vec<f64>,
    next: Vec<f64>,
}

/// One implicit-midpoint step; `None` if the fixed-point iteration stalls.
fn midpoint_step<H: Hamiltonian + ?Sized>(
    flow: &H,
    y: &[f64],
    h: f64,
    c: &Controls,
    ws: &mut Workspace,
) -> Option<Vec<f64>> {
    flow.vector_field(y, &mut ws.f);
    let mut y1: Vec<f64> = y.iter().zip(&ws.f).map(|(a, b)| a + h * b).collect();
    for _ in 0..c.max_iter {
        for i in 0..y.len() {
            ws.mid[i] = 0.5 * (y[i] + y1[i]);
        }
        flow.vector_field(&ws.mid, &mut ws.f);
        let mut delta = 0.0f64;
        for i in 0..y.len() {
            ws.next[i] = y[i] + h * ws.f[i];
            delta = delta.max((ws.next[i] - y1[i]).abs() / (1.0 + ws.next[i].abs()));
        }
        std::mem::swap(&mut y1, &mut ws.next);
        if !delta.is_finite() {
            return None;
        }
        if delta <= c.tol {
            // two more contractions push the residual well below rounding, so the
            // result no longer depends on when the stopping test happened to fire
            for _ in 0..2 {
                for i in 0..y.len() {
                    ws.mid[i] = 0.5 * (y[i] + y1[i]);
                }
                flow.vector_field(&ws.mid, &mut ws.f);
                for i in 0..y.len() {
                    y1[i] = y[i] + h * ws.f[i];
                }
            }
            return Some(y1);
        }
    }
    None
}

/// Vertex of the parabola through three points, if it is a minimum inside the bracket.
fn parabola_min(t: [f64; 3], q: [f64; 3]) -> Option<f64> {
    let d1 = (q[1] - q[0]) / (t[1] - t[0]);
    let d2 = (q[2] - q[1]) / (t[2] - t[1]);
    let a = (d2 - d1) / (t[2] - t[0]);
    if !(a > 0.0) {
        return None;
    }
    let b = d1 - a * (t[0] + t[1]);
    let tv = -b / (2.0 * a);
    if tv < t[0] || tv > t[2] {
        return None;
    }
    // Newton form: q(t) = q0 + d1 (t − t0) + a (t − t0)(t − t1)
    Some(q[0] + d1 * (tv - t[0]) + a * (tv - t[0]) * (tv - t[1]))
}

/// `integrate`: implicit-midpoint trajectory of `flow` from `initial` to `t_end`.
pub fn integrate(flow: &FlowSpec, initial: &PhaseState, t_end: f64, controls: &Controls) -> Result<Trajectory> {
    controls.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("t_end must be positive, got {t_end}")));
    }
    flow.validate_initial(initial)?;
    let n = flow.dof();
    let mut y = initial.packed();
    let e0 = flow.energy(&initial.p, &initial.q);
    let mut ws = Workspace {
        mid: vec![0.0; 2 * n],
        f: vec![0.0; 2 * n],
        next: vec![0.0; 2 * n],
    };
    let floor = flow.q_floor();
    let adaptive = controls.adaptive && floor.is_some();
    let min_step = controls.dt * 1e-12;

    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let mut energy = vec![e0];
    let mut max_drift = 0.0f64;
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut status = Status::Completed;

    let track_min = n == 1;
    let mut window: Vec<(f64, f64)> = vec![(0.0, y[1])];
    let mut min_q = y[n];

    // uniform steps that land exactly on t_end
    let n_uniform = (t_end / controls.dt * (1.0 - 1e-12)).ceil().max(1.0);
    let h0 = t_end / n_uniform;
    let mut uniform = true;
    while t < t_end {
        let remaining = t_end - t;
        let mut h = h0.min(remaining);
        if adaptive {
            flow.vector_field(&y, &mut ws.f);
            let rate = norm(&ws.f) / norm(&y).max(f64::MIN_POSITIVE);
            if rate * h > controls.safety {
                h = controls.safety / rate;
                uniform = false;
            }
        }
        let y1 = loop {
            match midpoint_step(flow, &y, h, controls, &mut ws) {
                Some(y1) => break y1,
                None if adaptive && h > min_step => h *= 0.5,
                None => {
                    return Err(Error::Integrator(format!(
                        "fixed-point iteration did not converge at t = {t} with step {h}"
                    )))
                }
            }
        };
        steps += 1;
        let t1 = if h == h0 && uniform {
            if steps as f64 >= n_uniform {
                t_end
            } else {
                steps as f64 * h0
            }
        } else {
            uniform = false;
            let t1 = t + h;
            if t_end - t1 <= 1e-12 * t_end { t_end } else { t1 }
        };
        if let Some(fl) = floor {
            if !(y1[n] > fl) {
                // linear interpolation of q to the floor inside the last step
                let (qa, qb) = (y[n], y1[n]);
                let frac = if qa > qb { ((qa - fl) / (qa - qb)).clamp(0.0, 1.0) } else { 1.0 };
                status = Status::SingularityReached { hit_time: t + frac * h };
                min_q = min_q.min(fl);
                t = t1;
                times.push(t);
                states.push(PhaseState::unpack(&y1));
                energy.push(f64::NAN);
                break;
            }
        }
        y = y1;
        t = t1;
        let (p, q) = y.split_at(n);
        let e = flow.energy(p, q);
        if !e.is_finite() {
            return Err(Error::Integrator(format!("energy became non-finite at t = {t}")));
        }
        max_drift = max_drift.max(relative_drift(e0, e));
        if track_min {
            window.push((t, q[0]));
            if window.len() > 3 {
                window.remove(0);
            }
            min_q = min_q.min(q[0]);
            if window.len() == 3 && window[1].1 <= window[0].1 && window[1].1 <= window[2].1 {
                let tw = [window[0].0, window[1].0, window[2].0];
                let qw = [window[0].1, window[1].1, window[2].1];
                if let Some(v) = parabola_min(tw, qw) {
                    min_q = min_q.min(v);
                }
            }
        }
        if steps.is_multiple_of(controls.record_every) || t >= t_end {
            times.push(t);
            states.push(PhaseState::unpack(&y));
            energy.push(e);
        }
    }

    let shadow = if controls.shadow {
        // Near the pole both methods lose digits to the blow-up of p, so singular
        // runs are compared at the last sample with q₁ above 1e-4·q₁(0).
        let idx = match status {
            Status::Completed => states.len() - 1,
            Status::SingularityReached { .. } => (0..states.len() - 1)
                .rev()
                .find(|&i| states[i].q[0] >= 1e-4 * initial.q[0])
                .unwrap_or(0),
        };
        let reference = states[idx].packed();
        let (yr, rk_steps) = dormand_prince(flow, &initial.packed(), times[idx], controls.shadow_rtol)?;
        let dev = reference
            .iter()
            .zip(&yr)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        Some(ShadowReport {
            method: "dormand-prince-5(4)",
            rtol: controls.shadow_rtol,
            steps: rk_steps,
            time: times[idx],
            max_deviation: dev,
        })
    } else {
        None
    };

    Ok(Trajectory {
        flow: *flow,
        times,
        states,
        energy,
        status,
        min_q: track_min.then_some(min_q),
        max_drift,
        method: "implicit-midpoint",
        dt: controls.dt,
        tol: controls.tol,
        steps,
        shadow,
    })
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4) from `t = 0` to `t_end`; returns the final state and step count.
pub fn dormand_prince<H: Hamiltonian + ?Sized>(flow: &H, y0: &[f64], t_end: f64, rtol: f64) -> Result<(Vec<f64>, usize)> {
    let m = y0.len();
    let atol = rtol * 1e-2;
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = (t_end * 1e-3).max(1e-8).min(t_end);
    let mut k = vec![vec![0.0; m]; 7];
    let mut stage = vec![0.0; m];
    let mut steps = 0usize;
    if t_end <= 0.0 {
        return Ok((y, 0));
    }
    while t < t_end {
        if steps > 50_000_000 {
            return Err(Error::Integrator("Runge-Kutta cross-check exceeded its step budget".into()));
        }
        h = h.min(t_end - t);
        flow.vector_field(&y, &mut k[0]);
        for s in 1..7 {
            for i in 0..m {
                stage[i] = y[i] + h * (0..s).map(|j| DP_A[s][j] * k[j][i]).sum::<f64>();
            }
            flow.vector_field(&stage, &mut k[s]);
        }
        let mut err = 0.0f64;
        let mut y_new = vec![0.0; m];
        for i in 0..m {
            y_new[i] = y[i] + h * (0..7).map(|s| DP_B[s] * k[s][i]).sum::<f64>();
            let e = h * (0..7).map(|s| DP_E[s] * k[s][i]).sum::<f64>();
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        let chart_ok = flow.q_floor().is_none_or(|fl| y_new[m / 2] > fl);
        if err <= 1.0 && err.is_finite() && chart_ok {
            t = if h == t_end - t { t_end } else { t + h };
            y = y_new;
            steps += 1;
        }
        let factor = if err.is_finite() && err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= if chart_ok { factor.clamp(0.2, 5.0) } else { 0.2 };
        if h < 1e-300 {
            return Err(Error::Integrator(format!("Runge-Kutta step underflow at t = {t}")));
        }
    }
    Ok((y, steps))
}

/// `classical_toy_solution`: `q(t) = q₀(1 + p₀t)²`, `p(t) = p₀/(1 + p₀t)` for `H = qp²`.
pub fn classical_toy_solution(p0: f64, q0: f64, t: f64) -> Result<(f64, f64)> {
    let s = 1.0 + p0 * t;
    if s.abs() <= f64::EPSILON {
        return Err(Error::ChartBoundary(format!("t = {t} is the pole -1/p0 of the classical solution")));
    }
    Ok((p0 / s, q0 * s * s))
}

/// `energy_drift`: largest relative deviation of `H` from its initial value over the samples
/// (absolute deviation when `H(0) = 0`).
pub fn energy_drift<H: Hamiltonian + ?Sized>(traj: &Trajectory, flow: &H) -> Result<f64> {
    let first = traj.states.first().ok_or_else(|| Error::invalid("empty trajectory"))?;
    let e0 = flow.energy(&first.p, &first.q);
    Ok(traj
        .states
        .iter()
        .filter(|s| flow.q_floor().is_none_or(|fl| s.q[0] > fl))
        .map(|s| relative_drift(e0, flow.energy(&s.p, &s.q)))
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SingularityReport {
    pub energy: f64,
    pub c: f64,
    pub min_q: f64,
    pub hit_time: Option<f64>,
    /// `ħ²C′/E` for enhanced flows with positive energy.
    pub min_q_bound: Option<f64>,
    pub drift: f64,
}

/// `singularity_report`: minimum of `q` and the time the chart floor is hit, if ever.
pub fn singularity_report(flow: &FlowSpec, initial: &PhaseState, t_end: f64, controls: &Controls) -> Result<SingularityReport> {
    let FlowSpec::ToyGravity { c, .. } = *flow else {
        return Err(Error::invalid("singularity reports are defined for toy-gravity flows"));
    };
    let traj = integrate(flow, initial, t_end, controls)?;
    let energy = flow.energy(&initial.p, &initial.q);
    Ok(SingularityReport {
        energy,
        c,
        min_q: traj.min_q.expect("one degree of freedom"),
        hit_time: traj.hit_time(),
        min_q_bound: (c > 0.0 && energy > 0.0).then(|| c / energy),
        drift: traj.max_drift,
    })
}

/// `rotsym_integrate`: the `2N`-dimensional rotationally symmetric flow.
pub fn rotsym_integrate(
    n: usize,
    m0: f64,
    g0: f64,
    initial: &PhaseState,
    t_end: f64,
    controls: &Controls,
) -> Result<Trajectory> {
    integrate(&FlowSpec::rotsym(n, m0, g0)?, initial, t_end, controls)
}

/// `perm[i]` is the new index of coordinate `i`.
pub fn permute_state(state: &PhaseState, perm: &[usize]) -> Result<PhaseState> {
    let n = state.p.len();
    check_permutation(perm, n)?;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (i, &j) in perm.iter().enumerate() {
        p[j] = state.p[i];
        q[j] = state.q[i];
    }
    Ok(PhaseState { p, q })
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            left: perm.len(),
            right: n,
        });
    }
    for &j in perm {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(Error::invalid("not a permutation"));
        }
    }
    Ok(())
}

/// Largest difference between `b` and `a` with its coordinates permuted by `perm`.
pub fn permuted_deviation(a: &Trajectory, b: &Trajectory, perm: &[usize]) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::invalid("trajectories are sampled at different times"));
    }
    let mut worst = 0.0f64;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        let pa = permute_state(sa, perm)?;
        for (x, y) in pa.p.iter().chain(&pa.q).zip(sb.p.iter().chain(&sb.q)) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_toy_solution() {
        assert_eq!(classical_toy_solution(-1.0, 1.0, 0.0).unwrap(), (-1.0, 1.0));
        let (p, q) = classical_toy_solution(-1.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(q, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p, -2.0, epsilon = 1e-15);
        for &t in &[0.1, 0.7, 0.99, 3.0] {
            let (p, q) = classical_toy_solution(0.8, 2.0, t).unwrap();
            assert_abs_diff_eq!(q * p * p, 2.0 * 0.64, epsilon = 1e-12);
        }
        assert!(classical_toy_solution(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sampled_exact_solution_has_no_drift() {
        let flow = FlowSpec::toy_gravity(0.0, 1.0).unwrap();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.018).collect();
        let states: Vec<PhaseState> = times
            .iter()
            .map(|&t| {
                let (p, q) = classical_toy_solution(-1.0, 1.0, t).unwrap();
                PhaseState::scalar(p, q)
            })
            .collect();
        let traj = Trajectory {
            flow,
            energy: states.iter().map(|s| flow.energy(&s.p, &s.q)).collect(),
            times,
            states,
            status: Status::Completed,
            min_q: None,
            max_drift: 0.0,
            method: "exact",
            dt: 0.0,
            tol: 0.0,
            steps: 0,
            shadow: None,
        };
        assert!(energy_drift(&traj, &flow).unwrap() < 1e-12);
    }

    #[test]
    fn oscillator_period() {
        let c = Controls {
            record_every: 1000,
            ..Controls::default()
        };
        let traj = integrate(&FlowSpec::Oscillator, &PhaseState::scalar(1.0, 0.0), 2.0 * PI, &c).unwrap();
        let end = traj.final_state();
        assert_abs_diff_eq!(traj.final_time(), 2.0 * PI, epsilon = 1e-15);
        assert!((end.p[0] - 1.0).abs() < 1e-6 && end.q[0].abs() < 1e-6, "{end:?}");
        assert!(traj.shadow.unwrap().max_deviation < 1e-6);
    }

    #[test]
    fn oscillator_drift_and_refinement() {
        let fine = integrate(&FlowSpec::Oscillator, &PhaseState::scalar(1.0, 0.0), 100.0, &Controls::fixed(1e-3)).unwrap();
        assert!(fine.max_drift < 1e-8, "{}", fine.max_drift);
        // the midpoint rule conserves quadratic energies exactly, so refinement is
        // checked on the cubic toy-gravity energy
        let flow = FlowSpec::toy_gravity(1.0, 1.0).unwrap();
        let start = PhaseState::scalar(-1.0, 1.0);
        let coarse = integrate(&flow, &start, 10.0, &Controls::fixed(0.1)).unwrap();
        let fine = integrate(&flow, &start, 10.0, &Controls::fixed(1e-3)).unwrap();
        assert!(energy_drift(&coarse, &flow).unwrap() > energy_drift(&fine, &flow).unwrap());
    }

    #[test]
    fn classical_toy_gravity_hits_the_pole() {
        let flow = FlowSpec::toy_gravity(0.0, 1.0).unwrap();
        let traj = integrate(&flow, &PhaseState::scalar(-1.0, 1.0), 2.0, &Controls::default()).unwrap();
        let hit = traj.hit_time().expect("singularity");
        assert_abs_diff_eq!(hit, 1.0, epsilon = 1e-4);
        assert!(traj.max_drift < 1e-8, "{}", traj.max_drift);
        assert!(traj.shadow.unwrap().max_deviation < 1e-6, "{:?}", traj.shadow);
    }

    #[test]
    fn zero_energy_is_static() {
        let flow = FlowSpec::toy_gravity(0.0, 1.0).unwrap();
        let r = singularity_report(&flow, &PhaseState::scalar(0.0, 1.3), 5.0, &Controls::default()).unwrap();
        assert!(r.hit_time.is_none());
        assert_abs_diff_eq!(r.min_q, 1.3, epsilon = 1e-15);
    }

    #[test]
    fn enhanced_toy_gravity_turns_around() {
        let flow = FlowSpec::toy_gravity(1.0, 1.0).unwrap();
        let r = singularity_report(&flow, &PhaseState::scalar(-1.0, 1.0), 10.0, &Controls::default()).unwrap();
        assert!(r.hit_time.is_none());
        let bound = r.min_q_bound.unwrap();
        assert_abs_diff_eq!(r.min_q, bound, epsilon = 1e-6);
        assert!(r.drift < 1e-8, "{}", r.drift);
    }

    #[test]
    fn second_order_convergence() {
        let flow = FlowSpec::toy_gravity(0.0, 1.0).unwrap();
        let err = |dt: f64| {
            let c = Controls {
                record_every: 1,
                shadow: false,
                ..Controls::fixed(dt)
            };
            let traj = integrate(&flow, &PhaseState::scalar(-1.0, 1.0), 0.9, &c).unwrap();
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(&t, s)| {
                    let (p, q) = classical_toy_solution(-1.0, 1.0, t).unwrap();
                    (s.p[0] - p).abs().max((s.q[0] - q).abs())
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(2e-3) / err(1e-3);
        assert_abs_diff_eq!(ratio, 4.0, epsilon = 0.3);
    }

    #[test]
    fn rotsym_free_oscillators() {
        let (m0, n) = (1.3, 4);
        let init = PhaseState::new(vec![0.2, -0.1, 0.0, 0.5], vec![1.0, 0.3, -0.7, 0.0]);
        let c = Controls {
            record_every: 500,
            ..Controls::default()
        };
        let traj = rotsym_integrate(n, m0, 0.0, &init, 3.0, &c).unwrap();
        let w = 2.0 * m0;
        for (t, s) in traj.times.iter().zip(&traj.states) {
            for i in 0..n {
                let q = init.q[i] * (w * t).cos() + init.p[i] / m0 * (w * t).sin();
                assert_abs_diff_eq!(s.q[i], q, epsilon = 1e-7);
            }
        }
        assert!(traj.max_drift < 1e-8);
    }

    #[test]
    fn rotsym_shuffle_symmetry() {
        let n = 6;
        let base = PhaseState::new(vec![0.3, -0.2, 0.1, 0.0, 0.0, 0.0], vec![1.0, 0.5, -0.4, 0.0, 0.0, 0.0]);
        let perm = [3, 4, 5, 0, 1, 2];
        let c = Controls {
            record_every: 100,
            ..Controls::default()
        };
        let a = rotsym_integrate(n, 1.0, 1.0, &base, 2.0, &c).unwrap();
        let b = rotsym_integrate(n, 1.0, 1.0, &permute_state(&base, &perm).unwrap(), 2.0, &c).unwrap();
        assert!(permuted_deviation(&a, &b, &perm).unwrap() < 1e-9);
    }

    #[test]
    fn rotsym_energy_drift() {
        let init = PhaseState::new(vec![0.1, -0.1, 0.2, 0.0], vec![0.5, 0.3, -0.2, 0.0]);
        let drift = |dt: f64| {
            let c = Controls {
                record_every: 1000,
                shadow: false,
                ..Controls::fixed(dt)
            };
            rotsym_integrate(4, 1.0, 1.0, &init, 5.0, &c).unwrap().max_drift
        };
        let d = drift(DEFAULT_DT);
        assert!(d < 1e-8, "{d}");
        assert_abs_diff_eq!(drift(4e-3) / drift(2e-3), 4.0, epsilon = 0.3);
    }

    #[test]
    fn validation() {
        assert!(FlowSpec::rotsym(0, 1.0, 0.0).is_err());
        assert!(FlowSpec::rotsym(ROTSYM_MAX_N + 1, 1.0, 0.0).is_err());
        let flow = FlowSpec::toy_gravity(0.0, 1.0).unwrap();
        assert!(matches!(
            integrate(&flow, &PhaseState::scalar(1.0, 0.0), 1.0, &Controls::default()),
            Err(Error::ChartBoundary(_))
        ));
        assert!(integrate(&flow, &PhaseState::scalar(1.0, 1.0), -1.0, &Controls::default()).is_err());
        assert!(integrate(&flow, &PhaseState::scalar(1.0, 1.0), 1.0, &Controls::fixed(0.0)).is_err());
        assert!(permute_state(&PhaseState::scalar(1.0, 1.0), &[1]).is_err());
    }

    #[test]
    fn csv_columns() {
        let c = Controls {
            record_every: 5000,
            ..Controls::default()
        };
        let traj = rotsym_integrate(2, 1.0, 0.0, &PhaseState::new(vec![0.0, 1.0], vec![1.0, 0.0]), 1.0, &c).unwrap();
        let t = traj.to_table();
        assert_eq!(t.header, ["t", "p_1", "p_2", "q_1", "q_2", "H", "drift"]);
        assert_eq!(t.rows.len(), 3);
    }
}
