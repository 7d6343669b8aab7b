//! Finite-dimensional Hilbert spaces and the operators living on them.
//!
//! Fock spaces carry the canonical pair `Q`, `P` built from a truncated
//! ladder `a|n> = sqrt(n)|n-1>` with the convention `a = (Q + iP)/sqrt(2ħ)`,
//! so the ground state is annihilated by `Q + iP` exactly. Spin spaces carry
//! `S1, S2, S3` in the basis `m = s, s-1, ..., -s`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result, C64};

/// Elementwise tolerance for Hermiticity, relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default Fock truncation.
pub const DEFAULT_FOCK_DIM: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    Fock,
    Spin,
    HalflineGrid,
}

impl SpaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SpaceKind::Fock => "fock",
            SpaceKind::Spin => "spin",
            SpaceKind::HalflineGrid => "halfline-grid",
        }
    }
}

/// Dimension, ħ and kind of a finite basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HilbertSpace {
    dim: usize,
    hbar: f64,
    kind: SpaceKind,
}

impl HilbertSpace {
    fn checked(dim: usize, hbar: f64, kind: SpaceKind) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!("dimension must be >= 2, got {dim}")));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::invalid(format!("hbar must be positive, got {hbar}")));
        }
        Ok(HilbertSpace { dim, hbar, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    /// Truncated Fock space with basis `|0>, ..., |N-1>`.
    pub fn fock(n: usize, hbar: f64) -> Result<Self> {
        Self::checked(n, hbar, SpaceKind::Fock)
    }

    /// Spin-`s` space of dimension `2s + 1`.
    pub fn spin(s: Spin, hbar: f64) -> Result<Self> {
        Self::checked(s.dim(), hbar, SpaceKind::Spin)
    }

    /// Space of wavefunctions sampled at `nodes` quadrature points on `x > 0`.
    pub fn halfline_grid(nodes: usize, hbar: f64) -> Result<Self> {
        Self::checked(nodes, hbar, SpaceKind::HalflineGrid)
    }

    pub(crate) fn expect_kind(&self, kind: SpaceKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    /// Number of leading basis states unaffected by the truncation boundary.
    ///
    /// The top 10% of the basis (rounded up) is excluded.
    pub fn low_sector(&self) -> usize {
        self.dim - self.dim.div_ceil(10)
    }
}

/// `make_fock_space`: validated Fock space.
pub fn make_fock_space(n: usize, hbar: f64) -> Result<HilbertSpace> {
    HilbertSpace::fock(n, hbar)
}

/// Spin quantum number stored as `2s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Spin {
    twice: u32,
}

impl Spin {
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 {
            return Err(Error::invalid("spin must be at least 1/2"));
        }
        Ok(Spin { twice })
    }

    /// Accepts `s` in `{1/2, 1, 3/2, ...}`.
    pub fn new(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if !twice.is_finite() || twice < 1.0 || (twice - twice.round()).abs() > 1e-12 {
            return Err(Error::invalid(format!("spin must be a positive half-integer, got {s}")));
        }
        Self::from_twice(twice.round() as u32)
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn twice(self) -> u32 {
        self.twice
    }

    pub fn dim(self) -> usize {
        self.twice as usize + 1
    }

    /// Magnetic quantum number of basis index `k` (`k = 0` is `m = s`).
    pub fn m(self, k: usize) -> f64 {
        self.value() - k as f64
    }
}

/// Dense operator on a finite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
    space: HilbertSpace,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows().max(matrix.ncols()),
                right: space.dim(),
            });
        }
        Ok(Operator { matrix, space })
    }

    pub fn identity(space: HilbertSpace) -> Self {
        Operator {
            matrix: DMatrix::identity(space.dim(), space.dim()),
            space,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    fn check_same(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            space: self.space,
        }
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Operator {
            matrix: &self.matrix * &other.matrix,
            space: self.space,
        })
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Operator {
            matrix: &self.matrix + &other.matrix,
            space: self.space,
        })
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator {
            matrix: &self.matrix * c,
            space: self.space,
        }
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Operator {
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
            space: self.space,
        })
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest `|A_ij|`.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|A_ij|` over the leading `k × k` block.
    pub fn max_abs_leading_block(&self, k: usize) -> f64 {
        let k = k.min(self.dim());
        self.matrix.view((0, 0), (k, k)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|A_ij − conj(A_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL * self.max_abs().max(1.0)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: psi.dim(),
                right: self.dim(),
            });
        }
        Ok(&self.matrix * psi.coeffs())
    }
}

/// Unit vector on a finite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    coeffs: DVector<C64>,
    space: HilbertSpace,
}

impl StateVector {
    /// Normalizes `coeffs`; rejects zero vectors and wrong lengths.
    pub fn new(space: HilbertSpace, coeffs: DVector<C64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                left: coeffs.len(),
                right: space.dim(),
            });
        }
        let norm = coeffs.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical(format!("cannot normalize vector of norm {norm}")));
        }
        Ok(StateVector {
            coeffs: coeffs / C64::from(norm),
            space,
        })
    }

    /// Basis vector `|k>`.
    pub fn basis(space: HilbertSpace, k: usize) -> Result<Self> {
        if k >= space.dim() {
            return Err(Error::invalid(format!("basis index {k} outside dimension {}", space.dim())));
        }
        let mut v = DVector::zeros(space.dim());
        v[k] = C64::new(1.0, 0.0);
        Ok(StateVector { coeffs: v, space })
    }

    pub(crate) fn from_unit(space: HilbertSpace, coeffs: DVector<C64>) -> Self {
        debug_assert_eq!(coeffs.len(), space.dim());
        StateVector { coeffs, space }
    }

    pub fn coeffs(&self) -> &DVector<C64> {
        &self.coeffs
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.coeffs.dotc(&other.coeffs))
    }
}

/// Truncated annihilation operator `a|n> = sqrt(n)|n-1>`.
pub fn annihilation(space: HilbertSpace) -> Result<Operator> {
    space.expect_kind(SpaceKind::Fock)?;
    let n = space.dim();
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Ok(Operator { matrix: a, space })
}

/// `Q = sqrt(ħ/2)(a + a†)`.
pub fn position_operator(space: HilbertSpace) -> Result<Operator> {
    let a = annihilation(space)?;
    let c = (space.hbar() / 2.0).sqrt();
    Ok(Operator {
        matrix: (a.matrix() + a.matrix().adjoint()) * C64::new(c, 0.0),
        space,
    })
}

/// `P = −i sqrt(ħ/2)(a − a†)`.
pub fn momentum_operator(space: HilbertSpace) -> Result<Operator> {
    let a = annihilation(space)?;
    let c = (space.hbar() / 2.0).sqrt();
    Ok(Operator {
        matrix: (a.matrix() - a.matrix().adjoint()) * C64::new(0.0, -c),
        space,
    })
}

/// `D = (QP + PQ)/2`, formed from the truncated `Q` and `P`.
pub fn dilation_operator(space: HilbertSpace) -> Result<Operator> {
    let q = position_operator(space)?;
    let p = momentum_operator(space)?;
    let qp = q.mul(&p)?;
    let pq = p.mul(&q)?;
    Ok(qp.add(&pq)?.scale(C64::new(0.5, 0.0)))
}

/// `(S1, S2, S3)` for spin `s` in the basis `m = s, ..., −s`.
pub fn spin_operators(s: Spin, hbar: f64) -> Result<(Operator, Operator, Operator)> {
    let space = HilbertSpace::spin(s, hbar)?;
    let n = s.dim();
    let sv = s.value();
    let mut raise = DMatrix::<C64>::zeros(n, n);
    let mut s3 = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let m = s.m(k);
        s3[(k, k)] = C64::new(m * hbar, 0.0);
        if k > 0 {
            // S+ |s,m> = ħ sqrt(s(s+1) − m(m+1)) |s,m+1>, and |s,m+1> has index k−1.
            raise[(k - 1, k)] = C64::new(hbar * (sv * (sv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let lower = raise.adjoint();
    let s1 = (&raise + &lower) * C64::new(0.5, 0.0);
    let s2 = (&raise - &lower) * C64::new(0.0, -0.5);
    Ok((
        Operator { matrix: s1, space },
        Operator { matrix: s2, space },
        Operator { matrix: s3, space },
    ))
}

/// Eigendecomposition `A = V diag(λ) V†` of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<C64>,
    space: HilbertSpace,
}

impl HermitianSpectrum {
    pub fn of(a: &Operator) -> Result<Self> {
        if !a.is_hermitian() {
            return Err(Error::NotHermitian {
                max_deviation: a.hermitian_deviation(),
            });
        }
        let m = a.matrix();
        let (values, vectors) = if m.iter().all(|z| z.im == 0.0) {
            // real symmetric input: the real solver is several times faster
            let eig = m.map(|z| z.re).symmetric_eigen();
            (eig.eigenvalues, eig.eigenvectors.map(C64::from))
        } else {
            let eig = m.clone().symmetric_eigen();
            (eig.eigenvalues, eig.eigenvectors)
        };
        Ok(HermitianSpectrum {
            values,
            vectors,
            space: a.space(),
        })
    }

    /// Spectrum of `U A U†` for a diagonal unitary `U = diag(d)`.
    pub(crate) fn conjugated_by_diagonal(&self, d: &DVector<C64>) -> Self {
        let mut vectors = self.vectors.clone();
        for (mut row, dn) in vectors.row_iter_mut().zip(d.iter()) {
            row *= *dn;
        }
        HermitianSpectrum {
            values: self.values.clone(),
            vectors,
            space: self.space,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    fn phases(&self, c: f64) -> DVector<C64> {
        self.values.map(|l| C64::from_polar(1.0, c * l))
    }

    /// `exp(icA)` as a matrix.
    pub fn exp_i(&self, c: f64) -> Operator {
        let phases = self.phases(c);
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Operator {
            matrix: scaled * self.vectors.adjoint(),
            space: self.space,
        }
    }

    /// `exp(icA) v` without forming the full matrix.
    pub fn apply_exp_i(&self, c: f64, v: &DVector<C64>) -> DVector<C64> {
        let mut w = self.vectors.ad_mul(v);
        for (wi, ph) in w.iter_mut().zip(self.phases(c).iter()) {
            *wi *= ph;
        }
        &self.vectors * w
    }
}

/// `exp(icA)` for Hermitian `A`, by eigendecomposition.
pub fn unitary_from_hermitian(a: &Operator, c: f64) -> Result<Operator> {
    Ok(HermitianSpectrum::of(a)?.exp_i(c))
}

/// `<ψ|A|ψ>`.
pub fn expectation(psi: &StateVector, a: &Operator) -> Result<C64> {
    let v = a.apply(psi)?;
    Ok(psi.coeffs().dotc(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn i() -> C64 {
        C64::new(0.0, 1.0)
    }

    #[test]
    fn smallest_ladder() {
        let space = make_fock_space(2, 1.0).unwrap();
        let a = annihilation(space).unwrap();
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        );
        assert_eq!(a.matrix(), &expected);
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(make_fock_space(0, 1.0).is_err());
        assert!(make_fock_space(1, 1.0).is_err());
        assert!(make_fock_space(10, 0.0).is_err());
        assert!(make_fock_space(10, -1.0).is_err());
        assert!(Spin::new(0.75).is_err());
        assert!(Spin::new(0.0).is_err());
        assert!(Spin::new(2.5).is_ok());
    }

    #[test]
    fn canonical_commutator_on_low_sector() {
        let space = make_fock_space(100, 1.0).unwrap();
        let q = position_operator(space).unwrap();
        let p = momentum_operator(space).unwrap();
        let defect = q
            .commutator(&p)
            .unwrap()
            .add(&Operator::identity(space).scale(-i()))
            .unwrap();
        assert_eq!(space.low_sector(), 90);
        assert!(defect.max_abs_leading_block(90) < 1e-10);
        // the truncation corrupts the last diagonal entry only
        assert!(defect.max_abs() > 1.0);
    }

    #[test]
    fn fiducial_is_annihilated_exactly() {
        let space = make_fock_space(100, 1.0).unwrap();
        let q = position_operator(space).unwrap();
        let p = momentum_operator(space).unwrap();
        let b = q.add(&p.scale(i())).unwrap();
        for r in 0..100 {
            assert_eq!(b.matrix()[(r, 0)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn ground_state_variances() {
        let space = make_fock_space(100, 0.5).unwrap();
        let vac = StateVector::basis(space, 0).unwrap();
        let q = position_operator(space).unwrap();
        let p = momentum_operator(space).unwrap();
        let q2 = expectation(&vac, &q.mul(&q).unwrap()).unwrap();
        let p2 = expectation(&vac, &p.mul(&p).unwrap()).unwrap();
        assert_abs_diff_eq!(q2.re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p2.re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(expectation(&vac, &q).unwrap().norm(), 0.0, epsilon = 1e-15);

        let space = make_fock_space(100, 1.0).unwrap();
        let vac = StateVector::basis(space, 0).unwrap();
        let q = position_operator(space).unwrap();
        let p = momentum_operator(space).unwrap();
        let h = q.mul(&q).unwrap().add(&p.mul(&p).unwrap()).unwrap();
        assert_abs_diff_eq!(expectation(&vac, &h).unwrap().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dilation_algebra() {
        let space = make_fock_space(100, 1.0).unwrap();
        let q = position_operator(space).unwrap();
        let d = dilation_operator(space).unwrap();
        assert!(d.is_hermitian());
        let defect = q.commutator(&d).unwrap().add(&q.scale(-i())).unwrap();
        assert!(defect.max_abs_leading_block(80) < 1e-8);
        assert!(d.trace().norm() < 1e-12);
        let vac = StateVector::basis(space, 0).unwrap();
        assert!(expectation(&vac, &d).unwrap().norm() < 1e-15);
        for n in [2, 3, 7, 20] {
            let d = dilation_operator(make_fock_space(n, 0.3).unwrap()).unwrap();
            assert!(d.trace().norm() < 1e-12, "N={n}");
        }
    }

    #[test]
    fn wrong_kind_rejected() {
        let spin = HilbertSpace::spin(Spin::new(1.0).unwrap(), 1.0).unwrap();
        assert!(matches!(position_operator(spin), Err(Error::KindMismatch { .. })));
        assert!(momentum_operator(spin).is_err());
        assert!(dilation_operator(spin).is_err());
    }

    #[test]
    fn spin_half_and_casimir() {
        let (s1, s2, s3) = spin_operators(Spin::new(0.5).unwrap(), 1.0).unwrap();
        assert_eq!(s3.matrix()[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(s3.matrix()[(1, 1)], C64::new(-0.5, 0.0));
        let raise = s1.add(&s2.scale(i())).unwrap();
        let up = StateVector::basis(s1.space(), 0).unwrap();
        assert!(raise.apply(&up).unwrap().norm() < 1e-15);

        let (s1, s2, s3) = spin_operators(Spin::new(1.0).unwrap(), 1.0).unwrap();
        let cas = s1
            .mul(&s1)
            .unwrap()
            .add(&s2.mul(&s2).unwrap())
            .unwrap()
            .add(&s3.mul(&s3).unwrap())
            .unwrap();
        let diff = cas.add(&Operator::identity(cas.space()).scale(C64::new(-2.0, 0.0))).unwrap();
        assert!(diff.max_abs() < 1e-15);
    }

    #[test]
    fn spin_commutation_relations() {
        let hbar = 0.7;
        let (s1, s2, s3) = spin_operators(Spin::new(2.5).unwrap(), hbar).unwrap();
        let ih = C64::new(0.0, hbar);
        for (a, b, c) in [(&s1, &s2, &s3), (&s2, &s3, &s1), (&s3, &s1, &s2)] {
            let d = a.commutator(b).unwrap().add(&c.scale(-ih)).unwrap();
            assert!(d.max_abs() < 1e-12);
        }
        let top = StateVector::basis(s3.space(), 0).unwrap();
        assert_abs_diff_eq!(expectation(&top, &s3).unwrap().re, 2.5 * hbar, epsilon = 1e-14);
    }

    #[test]
    fn unitary_basics() {
        let (_, _, s3) = spin_operators(Spin::new(0.5).unwrap(), 1.0).unwrap();
        let u0 = unitary_from_hermitian(&s3, 0.0).unwrap();
        assert!(u0.add(&Operator::identity(s3.space()).scale(C64::new(-1.0, 0.0))).unwrap().max_abs() < 1e-15);
        let u = unitary_from_hermitian(&s3, 2.0 * std::f64::consts::PI).unwrap();
        let minus = u.add(&Operator::identity(s3.space())).unwrap();
        assert!(minus.max_abs() < 1e-12);

        let space = make_fock_space(60, 1.0).unwrap();
        let p = momentum_operator(space).unwrap();
        let spec = HermitianSpectrum::of(&p).unwrap();
        let prod = spec.exp_i(0.8).mul(&spec.exp_i(-0.8)).unwrap();
        let defect = prod.add(&Operator::identity(space).scale(C64::new(-1.0, 0.0))).unwrap();
        assert!(defect.max_abs() < 1e-10);
    }

    #[test]
    fn non_hermitian_rejected() {
        let space = make_fock_space(5, 1.0).unwrap();
        let a = annihilation(space).unwrap();
        assert!(matches!(unitary_from_hermitian(&a, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let s = make_fock_space(5, 1.0).unwrap();
        let t = make_fock_space(6, 1.0).unwrap();
        let psi = StateVector::basis(s, 0).unwrap();
        let q = position_operator(t).unwrap();
        assert!(matches!(expectation(&psi, &q), Err(Error::DimensionMismatch { .. })));
    }
}
