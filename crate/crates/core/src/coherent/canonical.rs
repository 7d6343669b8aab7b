use std::sync::Arc;

use nalgebra::DVector;

use crate::hilbert::{
    momentum_operator, position_operator, HermitianSpectrum, HilbertSpace, Operator, SpaceKind, StateVector,
};
use crate::{Error, Result, C64};

#[derive(Debug)]
struct Inner {
    space: HilbertSpace,
    fiducial: StateVector,
    vacuum_fiducial: bool,
    q: Operator,
    p: Operator,
    q_spectrum: HermitianSpectrum,
    p_spectrum: HermitianSpectrum,
}

/// Canonical coherent states on a truncated Fock basis.
///
/// The spectra of `Q` and `P` are computed once, so each state costs two
/// dense matrix–vector products.
#[derive(Clone, Debug)]
pub struct CanonicalFamily {
    inner: Arc<Inner>,
}

impl CanonicalFamily {
    /// Family with the Gaussian fiducial `|0>`.
    pub fn new(n: usize, hbar: f64) -> Result<Self> {
        let space = HilbertSpace::fock(n, hbar)?;
        let vacuum = StateVector::basis(space, 0)?;
        Self::build(space, vacuum, true)
    }

    /// Family generated from an arbitrary normalized fiducial `|η>`.
    pub fn with_fiducial(fiducial: StateVector) -> Result<Self> {
        let space = fiducial.space();
        space.expect_kind(SpaceKind::Fock)?;
        let fiducial = StateVector::new(space, fiducial.coeffs().clone())?;
        Self::build(space, fiducial, false)
    }

    fn build(space: HilbertSpace, fiducial: StateVector, vacuum_fiducial: bool) -> Result<Self> {
        let q = position_operator(space)?;
        let p = momentum_operator(space)?;
        let q_spectrum = HermitianSpectrum::of(&q)?;
        // P = U Q U† with U = diag(i^n)
        let rotation = DVector::from_fn(space.dim(), |n, _| C64::new(0.0, 1.0).powu(n as u32));
        let p_spectrum = q_spectrum.conjugated_by_diagonal(&rotation);
        Ok(CanonicalFamily {
            inner: Arc::new(Inner {
                space,
                fiducial,
                vacuum_fiducial,
                q,
                p,
                q_spectrum,
                p_spectrum,
            }),
        })
    }

    pub fn space(&self) -> HilbertSpace {
        self.inner.space
    }

    pub fn hbar(&self) -> f64 {
        self.inner.space.hbar()
    }

    pub fn dim(&self) -> usize {
        self.inner.space.dim()
    }

    pub fn fiducial(&self) -> &StateVector {
        &self.inner.fiducial
    }

    pub fn has_vacuum_fiducial(&self) -> bool {
        self.inner.vacuum_fiducial
    }

    pub fn position(&self) -> &Operator {
        &self.inner.q
    }

    pub fn momentum(&self) -> &Operator {
        &self.inner.p
    }

    /// Norm of `(Q + iP)|η>`; zero for the vacuum fiducial.
    pub fn fiducial_residual(&self) -> f64 {
        let b = self
            .inner
            .q
            .add(&self.inner.p.scale(C64::new(0.0, 1.0)))
            .expect("same space");
        b.apply(&self.inner.fiducial).expect("same space").norm()
    }

    /// Coefficients of `|p,q>`.
    pub fn amplitudes(&self, p: f64, q: f64) -> DVector<C64> {
        let h = self.hbar();
        let boosted = self.inner.q_spectrum.apply_exp_i(p / h, self.inner.fiducial.coeffs());
        self.inner.p_spectrum.apply_exp_i(-q / h, &boosted)
    }

    pub fn state(&self, p: f64, q: f64) -> StateVector {
        StateVector::from_unit(self.inner.space, self.amplitudes(p, q))
    }
}

/// `|p,q> = exp(−iqP/ħ) exp(ipQ/ħ)|η>`.
pub fn canonical_coherent(family: &CanonicalFamily, p: f64, q: f64) -> StateVector {
    family.state(p, q)
}

/// Trapezoidal `∫ f dx` on a strictly increasing grid.
pub fn trapezoid(xgrid: &[f64], values: &[f64]) -> f64 {
    xgrid
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
        .sum()
}

fn check_grid(xgrid: &[f64]) -> Result<()> {
    if xgrid.len() < 2 {
        return Err(Error::invalid("x grid needs at least two points"));
    }
    if xgrid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("x grid must be strictly increasing"));
    }
    Ok(())
}

/// Position-space samples of `|p,q>` for the vacuum fiducial:
/// `e^{ip(x−q)/ħ} η(x−q)` with `η(x) = (πħ)^{−1/4} e^{−x²/2ħ}`.
///
/// Rejects grids on which the trapezoidal norm differs from one by more
/// than `1e-3`.
pub fn canonical_xrep(family: &CanonicalFamily, p: f64, q: f64, xgrid: &[f64]) -> Result<Vec<C64>> {
    if !family.has_vacuum_fiducial() {
        return Err(Error::invalid("x representation requires the Gaussian fiducial"));
    }
    check_grid(xgrid)?;
    let h = family.hbar();
    let norm = (std::f64::consts::PI * h).powf(-0.25);
    let samples: Vec<C64> = xgrid
        .iter()
        .map(|&x| {
            let y = x - q;
            C64::from_polar(norm * (-y * y / (2.0 * h)).exp(), p * y / h)
        })
        .collect();
    let dens: Vec<f64> = samples.iter().map(|z| z.norm_sqr()).collect();
    let total = trapezoid(xgrid, &dens);
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::invalid(format!(
            "x grid does not cover the state support (norm {total:.6})"
        )));
    }
    Ok(samples)
}

/// Basis change from Fock coefficients to position samples through the
/// Hermite functions `<x|n>`.
pub fn fock_to_xrep(state: &StateVector, xgrid: &[f64]) -> Result<Vec<C64>> {
    state.space().expect_kind(SpaceKind::Fock)?;
    check_grid(xgrid)?;
    let h = state.space().hbar();
    let c = state.coeffs();
    let n = c.len();
    let norm = (std::f64::consts::PI * h).powf(-0.25);
    Ok(xgrid
        .iter()
        .map(|&x| {
            let xi = x / h.sqrt();
            let mut prev = 0.0;
            let mut cur = norm * (-0.5 * xi * xi).exp();
            let mut acc = c[0] * cur;
            for k in 0..n - 1 {
                let kf = k as f64;
                let next = (2.0 / (kf + 1.0)).sqrt() * xi * cur - (kf / (kf + 1.0)).sqrt() * prev;
                prev = cur;
                cur = next;
                acc += c[k + 1] * cur;
            }
            acc
        })
        .collect())
}

/// Ground state of `Q/λ + iλP`, i.e. a Gaussian with `<(ΔQ)²> = λ²ħ/2`.
///
/// Built from the two-term recurrence `c_{2m+2} = t sqrt((2m+1)/(2m+2)) c_{2m}`
/// with `t = (λ² − 1)/(λ² + 1)`.
pub fn squeezed_vacuum(space: HilbertSpace, lambda: f64) -> Result<StateVector> {
    space.expect_kind(SpaceKind::Fock)?;
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("squeeze parameter must be positive, got {lambda}")));
    }
    let t = (lambda * lambda - 1.0) / (lambda * lambda + 1.0);
    let mut coeffs = DVector::zeros(space.dim());
    let mut c = 1.0;
    let mut m = 0usize;
    while 2 * m < space.dim() {
        coeffs[2 * m] = C64::new(c, 0.0);
        let mf = m as f64;
        c *= t * ((2.0 * mf + 1.0) / (2.0 * mf + 2.0)).sqrt();
        m += 1;
    }
    StateVector::new(space, coeffs)
}

/// Fock state `|n>`.
pub fn number_state(space: HilbertSpace, n: usize) -> Result<StateVector> {
    space.expect_kind(SpaceKind::Fock)?;
    StateVector::basis(space, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::overlap;
    use crate::hilbert::expectation;
    use approx::assert_abs_diff_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn momentum_spectrum_from_rotated_position() {
        let fam = CanonicalFamily::new(30, 0.7).unwrap();
        let direct = crate::hilbert::unitary_from_hermitian(fam.momentum(), 0.9).unwrap();
        let rotated = fam.inner.p_spectrum.exp_i(0.9);
        let diff = direct.add(&rotated.scale(C64::from(-1.0))).unwrap();
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn origin_is_fiducial() {
        let fam = CanonicalFamily::new(100, 1.0).unwrap();
        let s = canonical_coherent(&fam, 0.0, 0.0);
        assert_abs_diff_eq!((s.coeffs()[0] - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert!(fam.fiducial_residual() < 1e-15);
    }

    #[test]
    fn mean_values_follow_label() {
        let fam = CanonicalFamily::new(100, 1.0).unwrap();
        let s = canonical_coherent(&fam, 1.0, 2.0);
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
        let q = expectation(&s, fam.position()).unwrap();
        let p = expectation(&s, fam.momentum()).unwrap();
        assert_abs_diff_eq!(q.re, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.re, 1.0, epsilon = 1e-6);
        assert!(q.im.abs() < 1e-10 && p.im.abs() < 1e-10);
    }

    #[test]
    fn vacuum_overlap_is_gaussian() {
        for hbar in [1.0, 0.5] {
            let fam = CanonicalFamily::new(100, hbar).unwrap();
            let vac = canonical_coherent(&fam, 0.0, 0.0);
            for &(p, q) in &[(1.0, 0.0), (0.5, -1.5), (2.0, 1.0)] {
                let s = canonical_coherent(&fam, p, q);
                let o = overlap(&vac, &s).unwrap();
                let oracle = (-(p * p + q * q) / (4.0 * hbar)).exp();
                assert_abs_diff_eq!(o.norm(), oracle, epsilon = 1e-6);
                let back = overlap(&s, &vac).unwrap();
                assert_abs_diff_eq!((back - o.conj()).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn xrep_matches_fock_construction() {
        let fam = CanonicalFamily::new(100, 1.0).unwrap();
        let xs = grid(-12.0, 12.0, 2401);
        let direct = canonical_xrep(&fam, 1.0, 1.0, &xs).unwrap();
        let via_fock = fock_to_xrep(&canonical_coherent(&fam, 1.0, 1.0), &xs).unwrap();
        let worst = direct
            .iter()
            .zip(&via_fock)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "pointwise error {worst}");
        let integrand_re: Vec<f64> = direct.iter().zip(&via_fock).map(|(a, b)| (a.conj() * b).re).collect();
        let integrand_im: Vec<f64> = direct.iter().zip(&via_fock).map(|(a, b)| (a.conj() * b).im).collect();
        let ov = C64::new(trapezoid(&xs, &integrand_re), trapezoid(&xs, &integrand_im));
        assert_abs_diff_eq!((ov - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn xrep_modulus_independent_of_p() {
        let fam = CanonicalFamily::new(20, 1.0).unwrap();
        let xs = grid(-10.0, 10.0, 801);
        let a = canonical_xrep(&fam, 0.0, 0.7, &xs).unwrap();
        let b = canonical_xrep(&fam, 3.0, 0.7, &xs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x.norm(), y.norm(), epsilon = 1e-15);
        }
    }

    #[test]
    fn xrep_detects_short_grid() {
        let fam = CanonicalFamily::new(20, 1.0).unwrap();
        let xs = grid(-1.0, 1.0, 201);
        assert!(canonical_xrep(&fam, 0.0, 0.0, &xs).is_err());
        assert!(canonical_xrep(&fam, 0.0, 0.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn squeezed_variance() {
        let space = HilbertSpace::fock(120, 1.0).unwrap();
        let lambda = 1.3;
        let eta = squeezed_vacuum(space, lambda).unwrap();
        let q = position_operator(space).unwrap();
        let p = momentum_operator(space).unwrap();
        let q2 = expectation(&eta, &q.mul(&q).unwrap()).unwrap().re;
        let p2 = expectation(&eta, &p.mul(&p).unwrap()).unwrap().re;
        assert_abs_diff_eq!(q2, lambda * lambda / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p2, 1.0 / (2.0 * lambda * lambda), epsilon = 1e-10);
        let b = q.scale(C64::new(1.0 / lambda, 0.0)).add(&p.scale(C64::new(0.0, lambda))).unwrap();
        let resid = b.apply(&eta).unwrap();
        assert!(resid.rows(0, 100).norm() < 1e-10);
    }

    #[test]
    fn continuity_in_label() {
        let fam = CanonicalFamily::new(100, 1.0).unwrap();
        let base = fam.amplitudes(0.4, -0.3);
        let d1 = (fam.amplitudes(0.4 + 1e-3, -0.3) - &base).norm();
        let d2 = (fam.amplitudes(0.4 + 1e-4, -0.3) - &base).norm();
        assert!((d1 / d2 - 10.0).abs() < 0.01, "ratio {}", d1 / d2);
    }
}
