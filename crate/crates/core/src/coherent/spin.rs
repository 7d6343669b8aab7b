use std::sync::Arc;

use nalgebra::DVector;

use super::SpinPoint;
use crate::hilbert::{spin_operators, HermitianSpectrum, HilbertSpace, Operator, Spin, StateVector};
use crate::{Result, C64};

#[derive(Debug)]
struct Inner {
    s: Spin,
    ops: [Operator; 3],
    s2_spectrum: HermitianSpectrum,
    s3_spectrum: HermitianSpectrum,
    top: StateVector,
}

/// Spin coherent states `|θ,φ>` built on the highest-weight vector `|s,s>`.
#[derive(Clone, Debug)]
pub struct SpinFamily {
    inner: Arc<Inner>,
}

impl SpinFamily {
    pub fn new(s: Spin, hbar: f64) -> Result<Self> {
        let (s1, s2, s3) = spin_operators(s, hbar)?;
        let s2_spectrum = HermitianSpectrum::of(&s2)?;
        let s3_spectrum = HermitianSpectrum::of(&s3)?;
        let top = StateVector::basis(s3.space(), 0)?;
        Ok(SpinFamily {
            inner: Arc::new(Inner {
                s,
                ops: [s1, s2, s3],
                s2_spectrum,
                s3_spectrum,
                top,
            }),
        })
    }

    pub fn spin(&self) -> Spin {
        self.inner.s
    }

    pub fn space(&self) -> HilbertSpace {
        self.inner.top.space()
    }

    pub fn hbar(&self) -> f64 {
        self.space().hbar()
    }

    /// `(S1, S2, S3)`.
    pub fn operators(&self) -> (&Operator, &Operator, &Operator) {
        let [a, b, c] = &self.inner.ops;
        (a, b, c)
    }

    pub fn fiducial(&self) -> &StateVector {
        &self.inner.top
    }

    /// Amplitudes for arbitrary real angles; the range check lives in
    /// [`spin_coherent`]. Finite-difference stencils may step outside
    /// `[0, 2π)` in `φ`, which must not be wrapped (half-integer spins
    /// change sign under `φ → φ + 2π`).
    pub fn amplitudes(&self, theta: f64, phi: f64) -> DVector<C64> {
        let h = self.hbar();
        let tilted = self.inner.s2_spectrum.apply_exp_i(-theta / h, self.inner.top.coeffs());
        self.inner.s3_spectrum.apply_exp_i(-phi / h, &tilted)
    }
}

/// `|θ,φ> = e^{−iφS3/ħ} e^{−iθS2/ħ} |s,s>`.
pub fn spin_coherent(family: &SpinFamily, theta: f64, phi: f64) -> Result<StateVector> {
    let pt = SpinPoint::new(theta, phi)?;
    Ok(StateVector::from_unit(family.space(), family.amplitudes(pt.theta, pt.phi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::expectation;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn north_pole_is_fiducial() {
        let fam = SpinFamily::new(Spin::new(1.5).unwrap(), 1.0).unwrap();
        let s = spin_coherent(&fam, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!((s.coeffs()[0] - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bloch_sphere_for_spin_half() {
        let hbar = 0.8;
        let fam = SpinFamily::new(Spin::new(0.5).unwrap(), hbar).unwrap();
        let (s1, s2, s3) = fam.operators();
        for &(th, ph) in &[(0.3, 0.0), (1.2, 2.0), (PI, 5.0), (2.0, 6.0)] {
            let st = spin_coherent(&fam, th, ph).unwrap();
            // |θ,φ> = e^{−iφ/2} cos(θ/2)|↑> + e^{iφ/2} sin(θ/2)|↓>
            let up = C64::from_polar((th / 2.0).cos(), -ph / 2.0);
            let down = C64::from_polar((th / 2.0).sin(), ph / 2.0);
            assert_abs_diff_eq!((st.coeffs()[0] - up).norm(), 0.0, epsilon = 1e-13);
            assert_abs_diff_eq!((st.coeffs()[1] - down).norm(), 0.0, epsilon = 1e-13);
            let e3 = expectation(&st, s3).unwrap().re;
            assert_abs_diff_eq!(e3, 0.5 * hbar * th.cos(), epsilon = 1e-12);
            let e1 = expectation(&st, s1).unwrap().re;
            let e2 = expectation(&st, s2).unwrap().re;
            assert_abs_diff_eq!(e1, 0.5 * hbar * th.sin() * ph.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(e2, 0.5 * hbar * th.sin() * ph.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn mean_spin_has_full_length() {
        for twice in 1..=8 {
            let s = Spin::from_twice(twice).unwrap();
            let fam = SpinFamily::new(s, 1.0).unwrap();
            let (s1, s2, s3) = fam.operators();
            for &(th, ph) in &[(0.4, 1.0), (2.2, 4.4), (1.0, 0.0)] {
                let st = spin_coherent(&fam, th, ph).unwrap();
                let v: Vec<f64> = [s1, s2, s3].iter().map(|o| expectation(&st, o).unwrap().re).collect();
                let len2: f64 = v.iter().map(|x| x * x).sum();
                assert_abs_diff_eq!(len2, s.value() * s.value(), epsilon = 1e-10);
                assert_abs_diff_eq!(v[2], s.value() * th.cos(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn angles_out_of_range() {
        let fam = SpinFamily::new(Spin::new(1.0).unwrap(), 1.0).unwrap();
        assert!(spin_coherent(&fam, -0.1, 0.0).is_err());
        assert!(spin_coherent(&fam, 3.2, 0.0).is_err());
        assert!(spin_coherent(&fam, 1.0, 2.0 * PI).is_err());
    }
}
