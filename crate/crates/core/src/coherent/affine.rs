//! Affine coherent states on the half line.
//!
//! With `k = 2β/ħ`, the fiducial `β(x) = M x^{β/ħ−1/2} e^{−βx/ħ}` has
//! `|β(x)|²` equal to the Gamma density with shape and rate `k`. Every state
//! of the family, and every state reachable from one by `Q`, `Q⁻¹` and
//! `D = −iħ(x d/dx + 1/2)`, has the closed form
//!
//! ```text
//! ψ(x) = C · L(x) · x^{(k−1)/2} · e^{−z x},   L a Laurent polynomial,
//! ```
//!
//! which [`AffineState`] carries next to its samples. Samples live on the
//! Gauss–Laguerre grid for the weight `x^{k−2} e^{−kx}` (or `x^{k−1} e^{−kx}`
//! when `k ≤ 1`) and are stored as `sqrt(W_i) ψ(x_i)` with `W_i` the
//! `dx`-weights, so inner products are plain sums. With the first weight all
//! moments `<Q^n>` with `n ≥ −1` of the fiducial are polynomial integrands
//! and hence exact.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use statrs::function::gamma::ln_gamma;

use super::Ket;
use crate::hilbert::HilbertSpace;
use crate::quadrature::LaguerreRule;
use crate::{Error, Result, C64};

/// Largest tolerated deviation of the quadrature norm from one.
pub const AFFINE_NORM_TOL: f64 = 1e-8;

#[derive(Debug)]
struct Grid {
    nodes: Vec<f64>,
    half_ln_weights: Vec<f64>,
}

/// Affine family for fixed `β` and `ħ` on a fixed quadrature grid.
#[derive(Clone, Debug)]
pub struct AffineFamily {
    beta: f64,
    space: HilbertSpace,
    k: f64,
    alpha: f64,
    grid: Arc<Grid>,
}

impl AffineFamily {
    pub fn new(beta: f64, hbar: f64, nodes: usize) -> Result<Self> {
        let space = HilbertSpace::halfline_grid(nodes, hbar)?;
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let k = 2.0 * beta / hbar;
        // x^{k−2} keeps <Q⁻¹> exact; for k ≤ 1 it is not integrable and
        // the density weight x^{k−1} is used instead.
        let alpha = if k > 1.0 { k - 2.0 } else { k - 1.0 };
        let rule = LaguerreRule::new(nodes, alpha)?;
        let ln_k = k.ln();
        let nodes_x: Vec<f64> = rule.nodes().iter().map(|t| t / k).collect();
        let half_ln_weights = rule.ln_weights().iter().map(|lw| 0.5 * (lw - (alpha + 1.0) * ln_k)).collect();
        Ok(AffineFamily {
            beta,
            space,
            k,
            alpha,
            grid: Arc::new(Grid {
                nodes: nodes_x,
                half_ln_weights,
            }),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn hbar(&self) -> f64 {
        self.space.hbar()
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    /// `ln M` with `M² = k^k / Γ(k)`.
    fn ln_m(&self) -> f64 {
        0.5 * (self.k * self.k.ln() - ln_gamma(self.k))
    }

    pub fn fiducial(&self) -> Result<AffineState> {
        self.state(0.0, 1.0)
    }

    /// `|p,q>` realized as `q^{−1/2} e^{ipx/ħ} β(x/q)`.
    pub fn state(&self, p: f64, q: f64) -> Result<AffineState> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::ChartBoundary(format!("affine chart requires q > 0, got q = {q}")));
        }
        let a = 0.5 * (self.k - 1.0);
        let form = Form {
            ln_c: -0.5 * q.ln() - a * q.ln() + self.ln_m(),
            z: C64::new(self.k / (2.0 * q), -p / self.hbar()),
            coeffs: BTreeMap::from([(0, C64::new(1.0, 0.0))]),
        };
        let samples = self.sample(&form);
        let norm2 = samples.norm_squared();
        if (norm2 - 1.0).abs() > AFFINE_NORM_TOL {
            return Err(Error::Quadrature(format!(
                "grid does not resolve |p={p}, q={q}> (quadrature norm² {norm2:.12})"
            )));
        }
        Ok(AffineState {
            family: self.clone(),
            form,
            samples,
        })
    }

    /// Weighted samples `sqrt(W_i) ψ(x_i)` of a closed-form state.
    fn sample(&self, form: &Form) -> DVector<C64> {
        let shift = form.z.re - 0.5 * self.k;
        let power = 0.5 * (self.k - 1.0 - self.alpha);
        DVector::from_iterator(
            self.grid.nodes.len(),
            self.grid.nodes.iter().zip(&self.grid.half_ln_weights).map(|(&x, &hlw)| {
                let poly: C64 = form.coeffs.iter().map(|(&j, &c)| c * x.powi(j)).sum();
                let modulus = (hlw + form.ln_c + power * x.ln() - shift * x).exp();
                C64::from_polar(modulus, -form.z.im * x) * poly
            }),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Form {
    ln_c: f64,
    z: C64,
    coeffs: BTreeMap<i32, C64>,
}

/// One letter of an affine operator word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AffineOp {
    Q,
    QInv,
    D,
}

/// A state on the affine quadrature grid, with its closed form.
#[derive(Clone, Debug)]
pub struct AffineState {
    family: AffineFamily,
    form: Form,
    samples: DVector<C64>,
}

impl AffineState {
    pub fn family(&self) -> &AffineFamily {
        &self.family
    }

    /// Weighted samples `sqrt(W_i) ψ(x_i)`.
    pub fn samples(&self) -> &DVector<C64> {
        &self.samples
    }

    pub fn nodes(&self) -> &[f64] {
        self.family.nodes()
    }

    /// `ψ(x)` from the closed form.
    pub fn wavefunction(&self, x: f64) -> C64 {
        if x <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let a = 0.5 * (self.family.k - 1.0);
        let poly: C64 = self.form.coeffs.iter().map(|(&j, &c)| c * x.powi(j)).sum();
        let modulus = (self.form.ln_c + a * x.ln() - self.form.z.re * x).exp();
        poly * C64::from_polar(modulus, -self.form.z.im * x)
    }

    pub fn norm(&self) -> f64 {
        self.samples.norm()
    }

    fn same_grid(&self, other: &AffineState) -> Result<()> {
        if Arc::ptr_eq(&self.family.grid, &other.family.grid) {
            Ok(())
        } else {
            Err(Error::invalid("affine states live on different quadrature grids"))
        }
    }

    /// Multiplication by `x`.
    pub fn apply_q(&self) -> AffineState {
        let mut out = self.clone();
        out.form.coeffs = self.form.coeffs.iter().map(|(&j, &c)| (j + 1, c)).collect();
        for (s, &x) in out.samples.iter_mut().zip(self.nodes()) {
            *s *= x;
        }
        out
    }

    /// Pointwise multiplication by `1/x`.
    pub fn apply_qinv(&self) -> AffineState {
        let mut out = self.clone();
        out.form.coeffs = self.form.coeffs.iter().map(|(&j, &c)| (j - 1, c)).collect();
        for (s, &x) in out.samples.iter_mut().zip(self.nodes()) {
            *s /= x;
        }
        out
    }

    /// `D = −iħ(x d/dx + 1/2)`, differentiated on the closed form and resampled.
    pub fn apply_d(&self) -> AffineState {
        let half_k = 0.5 * self.family.k; // (k−1)/2 + 1/2
        let minus_i_hbar = C64::new(0.0, -self.family.hbar());
        let mut coeffs: BTreeMap<i32, C64> = BTreeMap::new();
        for (&j, &c) in &self.form.coeffs {
            *coeffs.entry(j).or_default() += minus_i_hbar * c * (j as f64 + half_k);
            *coeffs.entry(j + 1).or_default() -= minus_i_hbar * c * self.form.z;
        }
        let form = Form {
            coeffs,
            ..self.form.clone()
        };
        let samples = self.family.sample(&form);
        AffineState {
            family: self.family.clone(),
            form,
            samples,
        }
    }

    pub fn apply(&self, op: AffineOp) -> AffineState {
        match op {
            AffineOp::Q => self.apply_q(),
            AffineOp::QInv => self.apply_qinv(),
            AffineOp::D => self.apply_d(),
        }
    }

    /// Applies an operator word, rightmost letter first.
    pub fn apply_word(&self, word: &[AffineOp]) -> AffineState {
        word.iter().rev().fold(self.clone(), |psi, &op| psi.apply(op))
    }

    /// `<ψ|W|ψ>` for an operator word `W`.
    pub fn expect_word(&self, word: &[AffineOp]) -> C64 {
        self.samples.dotc(self.apply_word(word).samples())
    }

    /// Norm of `[(Q − 1) + iD/β]|ψ>`.
    pub fn eigen_residual(&self) -> f64 {
        let d = self.apply_d();
        let q = self.apply_q();
        let i_over_beta = C64::new(0.0, 1.0 / self.family.beta);
        (q.samples - &self.samples + d.samples * i_over_beta).norm()
    }
}

impl Ket for AffineState {
    fn overlap_with(&self, other: &Self) -> Result<C64> {
        self.same_grid(other)?;
        Ok(self.samples.dotc(&other.samples))
    }
}

/// Fiducial `|β>` of a family.
pub fn affine_fiducial(family: &AffineFamily) -> Result<AffineState> {
    family.fiducial()
}

/// `exp(ipQ/ħ) exp(−i ln(q) D/ħ)|β>`.
pub fn affine_coherent(family: &AffineFamily, p: f64, q: f64) -> Result<AffineState> {
    family.state(p, q)
}

/// `<β|Q^n|β> = Γ(k + n) / (Γ(k) k^n)` with `k = 2β/ħ`.
pub fn affine_moment(beta: f64, hbar: f64, n: i32) -> Result<f64> {
    if !(beta > 0.0) || !(hbar > 0.0) {
        return Err(Error::invalid("beta and hbar must be positive"));
    }
    if n < -1 {
        return Err(Error::invalid(format!("moment order must be >= -1, got {n}")));
    }
    let k = 2.0 * beta / hbar;
    if !(k + n as f64 > 0.0) {
        return Err(Error::invalid(format!("Gamma pole: 2beta/hbar + n = {} <= 0", k + n as f64)));
    }
    // Γ(k+n)/Γ(k) as a finite product for integer n
    Ok(if n >= 0 {
        (0..n).map(|j| (k + j as f64) / k).product()
    } else {
        k / (k - 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::overlap;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fiducial_properties() {
        for &(beta, hbar) in &[(1.0, 1.0), (1.0, 0.25), (0.5, 0.9), (2.0, 1.0 / 64.0)] {
            let fam = AffineFamily::new(beta, hbar, 400).unwrap();
            let f = fam.fiducial().unwrap();
            assert_abs_diff_eq!(f.norm(), 1.0, epsilon = 1e-10);
            assert!(f.eigen_residual() < 1e-8, "residual {}", f.eigen_residual());
            assert_abs_diff_eq!(f.expect_word(&[AffineOp::Q]).re, 1.0, epsilon = 1e-8);
            assert!(f.expect_word(&[AffineOp::D]).norm() < 1e-8);
            let q2 = f.expect_word(&[AffineOp::Q, AffineOp::Q]).re;
            assert_abs_diff_eq!(q2, 1.0 + hbar / (2.0 * beta), epsilon = 1e-8);
        }
    }

    #[test]
    fn moments_match_gamma_law() {
        let fam = AffineFamily::new(1.0, 0.1, 400).unwrap();
        let f = fam.fiducial().unwrap();
        let inv = f.expect_word(&[AffineOp::QInv]).re;
        assert_abs_diff_eq!(affine_moment(1.0, 0.1, -1).unwrap(), 20.0 / 19.0, epsilon = 1e-14);
        assert_abs_diff_eq!(inv, 20.0 / 19.0, epsilon = 1e-10);
        assert_abs_diff_eq!(affine_moment(1.0, 1.0, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(affine_moment(1.0, 1.0, 1).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_moment_exact_close_to_the_pole() {
        for beta in [0.55, 0.6, 0.75] {
            let f = AffineFamily::new(beta, 1.0, 400).unwrap().fiducial().unwrap();
            let exact = affine_moment(beta, 1.0, -1).unwrap();
            assert_abs_diff_eq!(f.expect_word(&[AffineOp::QInv]).re / exact, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn moment_rejects_pole() {
        assert!(affine_moment(1.0, 1.0, -2).is_err());
        assert!(affine_moment(0.2, 1.0, -1).is_err());
    }

    #[test]
    fn small_beta_families() {
        assert!(AffineFamily::new(-1.0, 1.0, 50).is_err());
        assert!(AffineFamily::new(0.0, 1.0, 50).is_err());
        for beta in [0.3, 0.5, 0.7] {
            let fam = AffineFamily::new(beta, 1.0, 400).unwrap();
            let st = fam.state(0.4, 1.5).unwrap();
            assert_abs_diff_eq!(st.norm(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(st.expect_word(&[AffineOp::Q]).re, 1.5, epsilon = 1e-10);
            assert_abs_diff_eq!(st.expect_word(&[AffineOp::D]).re, 0.6, epsilon = 1e-10);
        }
        assert!(affine_moment(0.5, 1.0, -1).is_err());
    }

    #[test]
    fn coherent_state_properties() {
        let fam = AffineFamily::new(1.0, 1.0, 400).unwrap();
        let f = fam.fiducial().unwrap();
        let s = affine_coherent(&fam, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(overlap(&f, &s).unwrap().re, 1.0, epsilon = 1e-14);

        let s = affine_coherent(&fam, 3.0, 0.2).unwrap();
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-10);
        for &(p, q) in &[(0.5, 0.5), (-2.0, 2.0), (1.0, 3.0)] {
            let s = affine_coherent(&fam, p, q).unwrap();
            assert_abs_diff_eq!(s.expect_word(&[AffineOp::Q]).re, q, epsilon = 1e-8);
            let d = s.expect_word(&[AffineOp::D]);
            assert_abs_diff_eq!(d.re, p * q, epsilon = 1e-8);
            assert!(d.im.abs() < 1e-10);
        }
        assert!(matches!(affine_coherent(&fam, 0.0, 0.0), Err(Error::ChartBoundary(_))));
        assert!(affine_coherent(&fam, 0.0, -1.0).is_err());
    }

    #[test]
    fn samples_agree_with_closed_form() {
        let fam = AffineFamily::new(1.0, 0.5, 60).unwrap();
        let s = affine_coherent(&fam, 0.7, 1.3).unwrap();
        let d = s.apply_d();
        // dx-weights recovered from the fiducial samples
        let f = fam.fiducial().unwrap();
        for i in 0..10 {
            let x = fam.nodes()[i];
            let w = (f.samples()[i] / f.wavefunction(x)).norm();
            assert_abs_diff_eq!((d.samples()[i] / w - d.wavefunction(x)).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn different_grids_do_not_mix() {
        let a = AffineFamily::new(1.0, 1.0, 50).unwrap().fiducial().unwrap();
        let b = AffineFamily::new(1.0, 1.0, 50).unwrap().fiducial().unwrap();
        assert!(overlap(&a, &b).is_err());
    }
}
