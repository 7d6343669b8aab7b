//! Flags, config files, and their resolution into validated experiment configs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use enhq::coherent::{FamilyKind, FamilyParams, DEFAULT_AFFINE_NODES};
use enhq::dynamics::{Controls, FlowSpec, PhaseState};
use enhq::geometry::{CurvatureSteps, DEFAULT_METRIC_STEP, DEFAULT_STENCIL_STEP, SPIN_POLE_GUARD};
use enhq::hilbert::DEFAULT_FOCK_DIM;
use enhq::inequality::{default_eps_sequence, validate_scan};
use enhq::selftest;
use enhq::wcp::{default_hbar_sweep, model, HamiltonianSpec, MODELS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Problems};
use crate::output::Format;

/// Declares an options struct whose fields are all optional, so that the
/// same type parses flags and config files, plus a field-wise overlay.
macro_rules! options {
    ($(#[$m:meta])* pub struct $name:ident { $($(#[$fm:meta])* pub $f:ident: $t:ty,)* }) => {
        $(#[$m])*
        #[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
        #[command(allow_negative_numbers = true)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* pub $f: Option<$t>,)*
        }

        impl $name {
            /// Values set here win over `base`.
            pub fn overlay(self, base: Self) -> Self {
                Self { $($f: self.$f.or(base.$f),)* }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Canonical,
    Affine,
    Spin,
}

impl From<FamilyKind> for FamilyName {
    fn from(k: FamilyKind) -> Self {
        match k {
            FamilyKind::Canonical => FamilyName::Canonical,
            FamilyKind::Affine => FamilyName::Affine,
            FamilyKind::Spin => FamilyName::Spin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinChart {
    /// `(θ, φ)`
    Angles,
    /// `p = sqrt(sħ) cos θ`, `q = sqrt(sħ) φ`
    Canonical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowModel {
    Toygravity,
    Oscillator,
}

options! {
    /// Fubini–Study metric and curvature over a grid of chart points.
    pub struct MetricOptions {
        /// Coherent-state family [default: canonical]
        #[arg(long, value_enum)]
        pub family: FamilyName,
        /// Planck constant [default: 1]
        #[arg(long)]
        pub hbar: f64,
        /// Affine fiducial parameter [default: 1]
        #[arg(long)]
        pub beta: f64,
        /// Spin, a positive half-integer [default: 0.5]
        #[arg(long)]
        pub s: f64,
        /// Fock truncation of the canonical family [default: 100]
        #[arg(long)]
        pub n: usize,
        /// Quadrature nodes of the affine family [default: 400]
        #[arg(long)]
        pub nodes: usize,
        /// Chart of the spin family [default: angles]
        #[arg(long, value_enum)]
        pub chart: SpinChart,
        /// Momentum coordinates, comma separated [default: 0]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub p: Vec<f64>,
        /// Position coordinates [default: 0, or 1 for affine]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub q: Vec<f64>,
        /// Polar angles of the spin angle chart [default: pi/2]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub theta: Vec<f64>,
        /// Azimuths of the spin angle chart [default: 0]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub phi: Vec<f64>,
        /// Finite-difference step of the metric [default: 1e-3]
        #[arg(long)]
        pub metric_step: f64,
        /// Stencil step of the curvature [default: 1e-2]
        #[arg(long)]
        pub stencil_step: f64,
    }
}

options! {
    /// Enhanced Hamiltonian surface and its hbar scaling.
    pub struct WcpOptions {
        /// Shipped model: oscillator, quartic, toygravity, spin-z [default: oscillator]
        #[arg(long)]
        pub model: String,
        /// Operator spec, e.g. "0.5*P.P + 0.5*Q.Q" (instead of --model)
        #[arg(long, allow_hyphen_values = true)]
        pub spec: String,
        /// Family [default: the one matching the spec's letters]
        #[arg(long, value_enum)]
        pub family: FamilyName,
        /// Planck constant of the surface [default: 1]
        #[arg(long)]
        pub hbar: f64,
        #[arg(long)]
        pub beta: f64,
        #[arg(long)]
        pub s: f64,
        #[arg(long)]
        pub n: usize,
        #[arg(long)]
        pub nodes: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub p: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub q: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub theta: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub phi: Vec<f64>,
        /// hbar values of the scaling fit [default: 1, 1/2, ..., 1/64]
        #[arg(long, value_delimiter = ',')]
        pub hbars: Vec<f64>,
        /// Chart point of the scaling fit [default: first grid point]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub scale_at: Vec<f64>,
    }
}

options! {
    /// Classical and enhanced trajectories with a singularity report.
    pub struct DynamicsOptions {
        /// Flow [default: toygravity]
        #[arg(long, value_enum)]
        pub model: FlowModel,
        /// Planck constants, one run each; 0 is the classical flow [default: 0]
        #[arg(long, value_delimiter = ',')]
        pub hbar: Vec<f64>,
        #[arg(long)]
        pub beta: f64,
        /// Initial momentum [default: -1]
        #[arg(long, allow_hyphen_values = true)]
        pub p0: f64,
        /// Initial position [default: 1]
        #[arg(long, allow_hyphen_values = true)]
        pub q0: f64,
        /// Final time [default: 10]
        #[arg(long)]
        pub t_end: f64,
        #[arg(long)]
        pub dt: f64,
        #[arg(long)]
        pub tol: f64,
        #[arg(long)]
        pub max_iter: usize,
        /// Cap steps at safety * |y|/|y'| near the chart floor
        #[arg(long)]
        pub adaptive: bool,
        #[arg(long)]
        pub safety: f64,
        #[arg(long)]
        pub record_every: usize,
        /// Run the Runge–Kutta cross-check
        #[arg(long)]
        pub shadow: bool,
        #[arg(long)]
        pub shadow_rtol: f64,
    }
}

options! {
    /// Shuffle symmetry of the rotationally symmetric flow.
    pub struct RotsymOptions {
        /// Number of modes [default: 6]
        #[arg(long)]
        pub n: usize,
        #[arg(long, allow_hyphen_values = true)]
        pub m0: f64,
        #[arg(long)]
        pub g0: f64,
        /// 1-based modes carrying the initial data [default: 1,2,3]
        #[arg(long, value_delimiter = ',')]
        pub support: Vec<usize>,
        /// 1-based modes of the relabeled run [default: 4,5,6]
        #[arg(long, value_delimiter = ',')]
        pub target: Vec<usize>,
        /// Initial momenta on the support [default: 0.1,-0.2,0.3]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub p_init: Vec<f64>,
        /// Initial positions on the support [default: 0.5,0.4,-0.3]
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub q_init: Vec<f64>,
        /// Final time [default: 5]
        #[arg(long)]
        pub t_end: f64,
        #[arg(long)]
        pub dt: f64,
        #[arg(long)]
        pub tol: f64,
        #[arg(long)]
        pub record_every: usize,
    }
}

options! {
    /// Both sides of the field inequality over an alpha grid and cutoff sweep.
    pub struct InequalityOptions {
        /// Dimension [default: 5]
        #[arg(long)]
        pub n: u32,
        /// Exponents, comma separated [default: 1.3]
        #[arg(long, value_delimiter = ',')]
        pub alpha: Vec<f64>,
        /// Decreasing inner cutoffs [default: 1e-2, 1e-3, ..., 1e-7]
        #[arg(long, value_delimiter = ',')]
        pub eps: Vec<f64>,
        /// Mass [default: 1]
        #[arg(long)]
        pub m0: f64,
    }
}

options! {
    /// Invariant checks of every module.
    pub struct SelftestOptions {
        /// Only run the checks of this module
        #[arg(long)]
        pub module: String,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricConfig {
    pub family: FamilyName,
    pub hbar: f64,
    pub beta: f64,
    pub s: f64,
    pub n: usize,
    pub nodes: usize,
    pub chart: SpinChart,
    pub coordinates: [&'static str; 2],
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: CurvatureSteps,
}

#[derive(Clone, Debug, Serialize)]
pub struct WcpConfig {
    pub spec: String,
    pub model: Option<String>,
    pub params: FamilyParams,
    pub hbar: f64,
    pub coordinates: [&'static str; 2],
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub hbars: Vec<f64>,
    pub scale_at: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct DynamicsConfig {
    pub model: FlowModel,
    pub beta: f64,
    pub initial: PhaseState,
    pub t_end: f64,
    pub controls: Controls,
    pub flows: Vec<FlowSpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RotsymConfig {
    pub n: usize,
    pub m0: f64,
    pub g0: f64,
    pub support: Vec<usize>,
    pub target: Vec<usize>,
    pub p_init: Vec<f64>,
    pub q_init: Vec<f64>,
    pub t_end: f64,
    pub controls: Controls,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityConfig {
    pub n: u32,
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    pub m0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestConfig {
    pub module: Option<String>,
}

/// A fully validated experiment.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum ExperimentConfig {
    Metric(MetricConfig),
    Wcp(WcpConfig),
    Dynamics(DynamicsConfig),
    Rotsym(RotsymConfig),
    Inequality(InequalityConfig),
    Selftest(SelftestConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Metric(_) => "metric",
            ExperimentConfig::Wcp(_) => "wcp",
            ExperimentConfig::Dynamics(_) => "dynamics",
            ExperimentConfig::Rotsym(_) => "rotsym",
            ExperimentConfig::Inequality(_) => "inequality",
            ExperimentConfig::Selftest(_) => "selftest",
        }
    }
}

/// Settings a config file may carry next to the command options.
#[derive(Debug, Default)]
pub struct FileSettings {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Reads a JSON config file for `command`: the options plus optional `command`, `out` and `format` keys.
pub fn load_file<T: DeserializeOwned>(path: &Path, command: &str) -> Result<(T, FileSettings), CliError> {
    let bad = |m: String| CliError::Validation(format!("config file {}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut map: Map<String, Value> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if let Some(c) = map.remove("command") {
        if c.as_str() != Some(command) {
            return Err(bad(format!("written for command {c}, not '{command}'")));
        }
    }
    let settings = FileSettings {
        out: map.remove("out").map(serde_json::from_value).transpose().map_err(|e| bad(e.to_string()))?,
        format: map.remove("format").map(serde_json::from_value).transpose().map_err(|e| bad(e.to_string()))?,
    };
    let opts = serde_json::from_value(Value::Object(map)).map_err(|e| bad(e.to_string()))?;
    Ok((opts, settings))
}

fn finite_list(p: &mut Problems, name: &str, xs: &[f64]) {
    p.require(!xs.is_empty(), || format!("{name} must not be empty"));
    p.require(xs.iter().all(|x| x.is_finite()), || format!("{name} values must be finite"));
}

fn positive(p: &mut Problems, name: &str, x: f64) {
    p.require(x > 0.0 && x.is_finite(), || format!("{name} must be positive, got {x}"));
}

fn half_integer(p: &mut Problems, s: f64) {
    p.require(s > 0.0 && (2.0 * s).fract() == 0.0 && s <= 64.0, || {
        format!("s must be a positive half-integer up to 64, got {s}")
    });
}

/// Chart coordinates for a family: `(θ, φ)` on the spin angle chart, `(p, q)` otherwise.
#[allow(clippy::too_many_arguments)]
fn chart_points(
    pr: &mut Problems,
    angles: bool,
    p: Option<Vec<f64>>,
    q: Option<Vec<f64>>,
    theta: Option<Vec<f64>>,
    phi: Option<Vec<f64>>,
    defaults: (Vec<f64>, Vec<f64>),
) -> ([&'static str; 2], Vec<f64>, Vec<f64>) {
    let (labels, u, v, other) = if angles {
        (["theta", "phi"], theta, phi, p.is_some() || q.is_some())
    } else {
        (["p", "q"], p, q, theta.is_some() || phi.is_some())
    };
    pr.require(!other, || {
        if angles {
            "the spin angle chart takes --theta/--phi, not --p/--q".to_string()
        } else {
            "--theta/--phi only apply to the spin angle chart".to_string()
        }
    });
    let u = u.unwrap_or(defaults.0);
    let v = v.unwrap_or(defaults.1);
    finite_list(pr, labels[0], &u);
    finite_list(pr, labels[1], &v);
    (labels, u, v)
}

impl MetricOptions {
    pub fn resolve(self) -> Result<MetricConfig, CliError> {
        let mut pr = Problems::default();
        let family = self.family.unwrap_or(FamilyName::Canonical);
        let chart = self.chart.unwrap_or(SpinChart::Angles);
        let hbar = self.hbar.unwrap_or(1.0);
        let beta = self.beta.unwrap_or(1.0);
        let s = self.s.unwrap_or(0.5);
        let n = self.n.unwrap_or(DEFAULT_FOCK_DIM);
        let nodes = self.nodes.unwrap_or(DEFAULT_AFFINE_NODES);
        positive(&mut pr, "hbar", hbar);
        positive(&mut pr, "beta", beta);
        half_integer(&mut pr, s);
        pr.require(n >= 2, || format!("n must be at least 2, got {n}"));
        pr.require(nodes >= 8, || format!("nodes must be at least 8, got {nodes}"));
        pr.require(self.chart.is_none() || family == FamilyName::Spin, || "--chart only applies to the spin family".into());
        let angles = family == FamilyName::Spin && chart == SpinChart::Angles;
        let defaults = match family {
            FamilyName::Affine => (vec![0.0], vec![1.0]),
            _ if angles => (vec![FRAC_PI_2], vec![0.0]),
            _ => (vec![0.0], vec![0.0]),
        };
        let (coordinates, u, v) = chart_points(&mut pr, angles, self.p, self.q, self.theta, self.phi, defaults);
        if angles {
            pr.require(u.iter().all(|t| (SPIN_POLE_GUARD..=PI - SPIN_POLE_GUARD).contains(t)), || {
                format!("theta must lie in [{SPIN_POLE_GUARD}, pi - {SPIN_POLE_GUARD}] for curvature")
            });
        }
        if family == FamilyName::Affine {
            pr.require(v.iter().all(|&q| q > 0.0), || "affine q must be positive".into());
        }
        let steps = CurvatureSteps {
            metric_step: self.metric_step.unwrap_or(DEFAULT_METRIC_STEP),
            stencil_step: self.stencil_step.unwrap_or(DEFAULT_STENCIL_STEP),
        };
        positive(&mut pr, "metric_step", steps.metric_step);
        positive(&mut pr, "stencil_step", steps.stencil_step);
        pr.finish()?;
        Ok(MetricConfig {
            family,
            hbar,
            beta,
            s,
            n,
            nodes,
            chart,
            coordinates,
            u,
            v,
            steps,
        })
    }
}

impl WcpOptions {
    pub fn resolve(self) -> Result<WcpConfig, CliError> {
        let mut pr = Problems::default();
        if self.model.is_some() && self.spec.is_some() {
            return Err(CliError::Validation("give either --model or --spec, not both".into()));
        }
        let (text, model_name) = match (&self.spec, &self.model) {
            (Some(t), _) => (t.clone(), None),
            (None, m) => {
                let name = m.clone().unwrap_or_else(|| "oscillator".into());
                match model(&name) {
                    Some(m) => (m.text.to_string(), Some(name)),
                    None => {
                        let known: Vec<&str> = MODELS.iter().map(|m| m.name).collect();
                        return Err(CliError::Validation(format!(
                            "unknown model '{name}' (known: {})",
                            known.join(", ")
                        )));
                    }
                }
            }
        };
        let spec = HamiltonianSpec::parse(&text)?;
        let family = match self.family {
            Some(f) => f,
            None => spec.natural_kind()?.into(),
        };
        let hbar = self.hbar.unwrap_or(1.0);
        let beta = self.beta.unwrap_or(1.0);
        let s = self.s.unwrap_or(0.5);
        positive(&mut pr, "hbar", hbar);
        positive(&mut pr, "beta", beta);
        half_integer(&mut pr, s);
        let params = match family {
            FamilyName::Canonical => FamilyParams::Canonical {
                n: self.n.unwrap_or(DEFAULT_FOCK_DIM),
            },
            FamilyName::Affine => FamilyParams::Affine {
                beta,
                nodes: self.nodes.unwrap_or(DEFAULT_AFFINE_NODES),
            },
            FamilyName::Spin => FamilyParams::Spin { s },
        };
        pr.require(spec.compatible_with(params.kind()), || {
            format!("'{spec}' is not expressible on the {} family", params.kind().name())
        });
        let angles = family == FamilyName::Spin;
        let defaults = match family {
            FamilyName::Canonical => (vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 1.0]),
            FamilyName::Affine => (vec![-1.0, 0.0, 1.0], vec![0.5, 1.0, 2.0]),
            FamilyName::Spin => (vec![0.5, 1.0, 1.5], vec![0.0, 1.0]),
        };
        let (coordinates, u, v) = chart_points(&mut pr, angles, self.p, self.q, self.theta, self.phi, defaults);
        if family == FamilyName::Affine {
            pr.require(v.iter().all(|&q| q > 0.0), || "affine q must be positive".into());
        }
        let hbars = self.hbars.unwrap_or_else(default_hbar_sweep);
        pr.require(hbars.len() >= 4, || format!("need at least 4 hbars, got {}", hbars.len()));
        pr.require(hbars.iter().all(|h| *h > 0.0 && h.is_finite()), || "hbars must be positive".into());
        let (lo, hi) = hbars.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &h| (lo.min(h), hi.max(h)));
        pr.require(hi / lo >= 10.0 - 1e-12, || "hbars must span at least a decade".into());
        let scale_at = match self.scale_at.as_deref() {
            None => [u.first().copied().unwrap_or(0.0), v.first().copied().unwrap_or(1.0)],
            Some(&[a, b]) => [a, b],
            Some(other) => {
                pr.push(format!("scale_at needs two coordinates, got {}", other.len()));
                [0.0, 1.0]
            }
        };
        // build every family once so bad parameters surface before the run
        if pr.is_empty() {
            for &h in std::iter::once(&hbar).chain(&hbars) {
                let built = params.build(h).and_then(|fam| enhq::wcp::EnhancedHamiltonian::new(spec.clone(), fam));
                if pr.check(built).is_none() {
                    break;
                }
            }
        }
        pr.finish()?;
        Ok(WcpConfig {
            spec: spec.to_string(),
            model: model_name,
            params,
            hbar,
            coordinates,
            u,
            v,
            hbars,
            scale_at,
        })
    }
}

fn controls(
    pr: &mut Problems,
    base: Controls,
    dt: Option<f64>,
    tol: Option<f64>,
    record_every: Option<usize>,
) -> Controls {
    let c = Controls {
        dt: dt.unwrap_or(base.dt),
        tol: tol.unwrap_or(base.tol),
        record_every: record_every.unwrap_or(base.record_every),
        ..base
    };
    pr.check(c.validate());
    c
}

impl DynamicsOptions {
    pub fn resolve(self) -> Result<DynamicsConfig, CliError> {
        let mut pr = Problems::default();
        let model = self.model.unwrap_or(FlowModel::Toygravity);
        let beta = self.beta.unwrap_or(1.0);
        let (p0, q0) = (self.p0.unwrap_or(-1.0), self.q0.unwrap_or(1.0));
        let t_end = self.t_end.unwrap_or(10.0);
        positive(&mut pr, "t_end", t_end);
        pr.require(p0.is_finite() && q0.is_finite(), || "p0 and q0 must be finite".into());
        let base = Controls {
            max_iter: self.max_iter.unwrap_or(Controls::default().max_iter),
            adaptive: self.adaptive.unwrap_or(true),
            safety: self.safety.unwrap_or(Controls::default().safety),
            shadow: self.shadow.unwrap_or(true),
            shadow_rtol: self.shadow_rtol.unwrap_or(Controls::default().shadow_rtol),
            ..Controls::default()
        };
        let controls = controls(&mut pr, base, self.dt, self.tol, self.record_every);
        let flows = match model {
            FlowModel::Oscillator => {
                pr.require(self.hbar.is_none(), || "the oscillator flow takes no hbar".into());
                vec![FlowSpec::Oscillator]
            }
            FlowModel::Toygravity => {
                positive(&mut pr, "beta", beta);
                pr.require(q0 > 0.0, || format!("toy gravity needs q0 > 0, got {q0}"));
                let hbars = self.hbar.unwrap_or_else(|| vec![0.0]);
                pr.require(!hbars.is_empty(), || "hbar must not be empty".into());
                hbars.iter().filter_map(|&h| pr.check(FlowSpec::toy_gravity(h, beta))).collect()
            }
        };
        pr.finish()?;
        Ok(DynamicsConfig {
            model,
            beta,
            initial: PhaseState::scalar(p0, q0),
            t_end,
            controls,
            flows,
        })
    }
}

impl RotsymOptions {
    pub fn resolve(self) -> Result<RotsymConfig, CliError> {
        let mut pr = Problems::default();
        let n = self.n.unwrap_or(6);
        let (m0, g0) = (self.m0.unwrap_or(1.0), self.g0.unwrap_or(1.0));
        pr.check(FlowSpec::rotsym(n, m0, g0));
        let support = self.support.unwrap_or_else(|| vec![1, 2, 3]);
        let target = self.target.unwrap_or_else(|| vec![4, 5, 6]);
        let p_init = self.p_init.unwrap_or_else(|| vec![0.1, -0.2, 0.3]);
        let q_init = self.q_init.unwrap_or_else(|| vec![0.5, 0.4, -0.3]);
        let k = support.len();
        pr.require(k > 0, || "support must not be empty".into());
        pr.require(target.len() == k && p_init.len() == k && q_init.len() == k, || {
            format!(
                "support ({k}), target ({}), p_init ({}) and q_init ({}) must have equal lengths",
                target.len(),
                p_init.len(),
                q_init.len()
            )
        });
        for (name, idx) in [("support", &support), ("target", &target)] {
            pr.require(idx.iter().all(|&i| (1..=n).contains(&i)), || format!("{name} modes must lie in 1..={n}"));
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            pr.require(sorted.len() == idx.len(), || format!("{name} modes must be distinct"));
        }
        finite_list(&mut pr, "p_init", &p_init);
        finite_list(&mut pr, "q_init", &q_init);
        let t_end = self.t_end.unwrap_or(5.0);
        positive(&mut pr, "t_end", t_end);
        let controls = controls(&mut pr, Controls::default(), self.dt, self.tol, self.record_every);
        pr.finish()?;
        Ok(RotsymConfig {
            n,
            m0,
            g0,
            support,
            target,
            p_init,
            q_init,
            t_end,
            controls,
        })
    }
}

impl InequalityOptions {
    pub fn resolve(self) -> Result<InequalityConfig, CliError> {
        let n = self.n.unwrap_or(5);
        let alpha = self.alpha.unwrap_or_else(|| vec![1.3]);
        let eps = self.eps.unwrap_or_else(default_eps_sequence);
        let m0 = self.m0.unwrap_or(1.0);
        validate_scan(n, &alpha, &eps, m0)?;
        Ok(InequalityConfig { n, alpha, eps, m0 })
    }
}

impl SelftestOptions {
    pub fn resolve(self) -> Result<SelftestConfig, CliError> {
        if let Some(m) = &self.module {
            let mut known: Vec<&str> = selftest::checks().iter().map(|c| c.module).collect();
            known.dedup();
            if !known.contains(&m.as_str()) {
                return Err(CliError::Validation(format!("unknown module '{m}' (known: {})", known.join(", "))));
            }
        }
        Ok(SelftestConfig { module: self.module })
    }
}
