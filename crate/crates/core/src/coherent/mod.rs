//! Coherent-state families.
//!
//! * canonical: `|p,q> = exp(−iqP/ħ) exp(ipQ/ħ)|η>` on a truncated Fock basis,
//!   with `|η> = |0>` by default;
//! * affine: `|p,q> = exp(ipQ/ħ) exp(−i ln(q) D/ħ)|β>` sampled on a
//!   Gauss–Laguerre grid on `x > 0`;
//! * spin: `|θ,φ> = exp(−iφS3/ħ) exp(−iθS2/ħ)|s,s>`.

mod affine;
mod canonical;
mod spin;

pub use affine::{affine_coherent, affine_fiducial, affine_moment, AffineFamily, AffineOp, AffineState};
pub use canonical::{
    canonical_coherent, canonical_xrep, fock_to_xrep, number_state, squeezed_vacuum, trapezoid,
    CanonicalFamily,
};
pub use spin::{spin_coherent, SpinFamily};

use serde::{Deserialize, Serialize};

use crate::hilbert::{Spin, StateVector, DEFAULT_FOCK_DIM};
use crate::{Error, Result, C64};

/// Default number of Gauss–Laguerre nodes for affine states.
pub const DEFAULT_AFFINE_NODES: usize = 400;

/// Phase-space label `(p, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub p: f64,
    pub q: f64,
}

impl PhasePoint {
    pub fn new(p: f64, q: f64) -> Self {
        PhasePoint { p, q }
    }
}

/// Spin chart label `(θ, φ)` with `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinPoint {
    pub theta: f64,
    pub phi: f64,
}

impl SpinPoint {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::ChartBoundary(format!("theta = {theta} outside [0, pi]")));
        }
        if !(0.0..2.0 * std::f64::consts::PI).contains(&phi) {
            return Err(Error::ChartBoundary(format!("phi = {phi} outside [0, 2pi)")));
        }
        Ok(SpinPoint { theta, phi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Canonical,
    Affine,
    Spin,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Canonical => "canonical",
            FamilyKind::Affine => "affine",
            FamilyKind::Spin => "spin",
        }
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(FamilyKind::Canonical),
            "affine" => Ok(FamilyKind::Affine),
            "spin" => Ok(FamilyKind::Spin),
            other => Err(Error::invalid(format!("unknown family '{other}'"))),
        }
    }
}

/// Everything needed to build a family except ħ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilyParams {
    Canonical { n: usize },
    Affine { beta: f64, nodes: usize },
    Spin { s: f64 },
}

impl FamilyParams {
    pub fn canonical() -> Self {
        FamilyParams::Canonical { n: DEFAULT_FOCK_DIM }
    }

    pub fn affine(beta: f64) -> Self {
        FamilyParams::Affine {
            beta,
            nodes: DEFAULT_AFFINE_NODES,
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            FamilyParams::Canonical { .. } => FamilyKind::Canonical,
            FamilyParams::Affine { .. } => FamilyKind::Affine,
            FamilyParams::Spin { .. } => FamilyKind::Spin,
        }
    }

    pub fn build(&self, hbar: f64) -> Result<Family> {
        Ok(match *self {
            FamilyParams::Canonical { n } => Family::Canonical(CanonicalFamily::new(n, hbar)?),
            FamilyParams::Affine { beta, nodes } => Family::Affine(AffineFamily::new(beta, hbar, nodes)?),
            FamilyParams::Spin { s } => Family::Spin(SpinFamily::new(Spin::new(s)?, hbar)?),
        })
    }

    /// Same parameters with the Fock truncation doubled (canonical only).
    pub fn doubled_truncation(&self) -> Option<Self> {
        match *self {
            FamilyParams::Canonical { n } => Some(FamilyParams::Canonical { n: 2 * n }),
            _ => None,
        }
    }
}

/// A built coherent-state family.
#[derive(Clone, Debug)]
pub enum Family {
    Canonical(CanonicalFamily),
    Affine(AffineFamily),
    Spin(SpinFamily),
}

impl Family {
    pub fn kind(&self) -> FamilyKind {
        match self {
            Family::Canonical(_) => FamilyKind::Canonical,
            Family::Affine(_) => FamilyKind::Affine,
            Family::Spin(_) => FamilyKind::Spin,
        }
    }

    pub fn hbar(&self) -> f64 {
        match self {
            Family::Canonical(f) => f.hbar(),
            Family::Affine(f) => f.hbar(),
            Family::Spin(f) => f.hbar(),
        }
    }
}

/// Inner products between states of one family.
pub trait Ket {
    /// `<self|other>`.
    fn overlap_with(&self, other: &Self) -> Result<C64>;
}

impl Ket for StateVector {
    fn overlap_with(&self, other: &Self) -> Result<C64> {
        if self.space() != other.space() {
            return Err(Error::invalid("states live in different spaces"));
        }
        self.inner(other)
    }
}

/// `<ψ1|ψ2>`.
pub fn overlap<K: Ket>(psi1: &K, psi2: &K) -> Result<C64> {
    psi1.overlap_with(psi2)
}
