//! Weak correspondence: `H(p,q) = <p,q|𝓗|p,q>`.
//!
//! Operator Hamiltonians are written as sums of monomials over the letters
//! `P`, `Q` (canonical), `D`, `Q`, `Qinv` (affine) or `S1`, `S2`, `S3`
//! (spin), e.g. `0.5*P.P + 0.5*Q.Q` or `D.Qinv.D`. Words are evaluated
//! literally, left to right as written, so symmetrized words must be spelled
//! out.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::coherent::{
    spin_coherent, AffineFamily, AffineOp, CanonicalFamily, Family, FamilyKind, FamilyParams, SpinFamily,
};
use crate::fit::log_log_fit;
use crate::hilbert::{expectation, Operator};
use crate::quadrature::integrate_adaptive;
use crate::{Error, Result, C64};

/// Largest tolerated Hermiticity defect of a spec matrix.
pub const SPEC_HERMITIAN_TOL: f64 = 1e-10;
/// Largest tolerated imaginary part of an enhanced Hamiltonian value.
pub const IMAG_TOL: f64 = 1e-10;
/// Differences below this are reported as exact.
pub const EXACT_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Letter {
    P,
    Q,
    D,
    QInv,
    S1,
    S2,
    S3,
}

impl Letter {
    pub fn symbol(self) -> &'static str {
        match self {
            Letter::P => "P",
            Letter::Q => "Q",
            Letter::D => "D",
            Letter::QInv => "Qinv",
            Letter::S1 => "S1",
            Letter::S2 => "S2",
            Letter::S3 => "S3",
        }
    }

    fn parse(s: &str) -> Option<Letter> {
        Some(match s {
            "P" => Letter::P,
            "Q" => Letter::Q,
            "D" => Letter::D,
            "Qinv" => Letter::QInv,
            "S1" => Letter::S1,
            "S2" => Letter::S2,
            "S3" => Letter::S3,
            _ => return None,
        })
    }

    fn allowed_in(self, kind: FamilyKind) -> bool {
        match kind {
            FamilyKind::Canonical => matches!(self, Letter::P | Letter::Q),
            FamilyKind::Affine => matches!(self, Letter::Q | Letter::D | Letter::QInv),
            FamilyKind::Spin => matches!(self, Letter::S1 | Letter::S2 | Letter::S3),
        }
    }
}

/// `coeff · w₁w₂…` (an empty word is the identity).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Term {
    pub coeff: f64,
    pub word: Vec<Letter>,
}

/// An operator Hamiltonian as an ordered list of monomials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HamiltonianSpec {
    pub terms: Vec<Term>,
}

fn parse_err(column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        column,
        message: message.into(),
    }
}

impl FromStr for HamiltonianSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        #[derive(Debug, PartialEq)]
        enum Tok {
            Num(f64),
            Name(String),
            Star,
            Dot,
            Sign(f64),
        }
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let (col, c) = chars[i];
            match c {
                c if c.is_whitespace() => i += 1,
                '*' => (toks.push((col, Tok::Star)), i += 1).1,
                '.' if !chars.get(i + 1).is_some_and(|(_, d)| d.is_ascii_digit()) => {
                    toks.push((col, Tok::Dot));
                    i += 1;
                }
                '+' => (toks.push((col, Tok::Sign(1.0))), i += 1).1,
                '-' => (toks.push((col, Tok::Sign(-1.0))), i += 1).1,
                c if c.is_ascii_digit() || c == '.' => {
                    let start = i;
                    while i < chars.len() {
                        let d = chars[i].1;
                        let after_exp = i > start && matches!(chars[i - 1].1, 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || (after_exp && (d == '+' || d == '-'))
                        {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                    let s: String = chars[start..i].iter().map(|(_, c)| c).collect();
                    let v = s.parse::<f64>().map_err(|_| parse_err(col, format!("bad number '{s}'")))?;
                    toks.push((col, Tok::Num(v)));
                }
                c if c.is_ascii_alphabetic() => {
                    let start = i;
                    while i < chars.len() && chars[i].1.is_ascii_alphanumeric() {
                        i += 1;
                    }
                    toks.push((col, Tok::Name(chars[start..i].iter().map(|(_, c)| c).collect())));
                }
                other => return Err(parse_err(col, format!("unexpected character '{other}'"))),
            }
        }

        let end = text.len();
        let mut terms = Vec::new();
        let mut pos = 0;
        let mut first = true;
        while pos < toks.len() || first {
            let mut sign = 1.0;
            match toks.get(pos) {
                Some((_, Tok::Sign(s))) => {
                    sign = *s;
                    pos += 1;
                }
                Some((col, t)) if !first => return Err(parse_err(*col, format!("expected '+' or '-', found {t:?}"))),
                _ => {}
            }
            first = false;
            let mut coeff = sign;
            let mut word = Vec::new();
            let mut want_letter = false;
            if let Some((_, Tok::Num(v))) = toks.get(pos) {
                coeff *= v;
                pos += 1;
                match toks.get(pos) {
                    Some((_, Tok::Star)) => {
                        pos += 1;
                        want_letter = true;
                    }
                    Some((_, Tok::Sign(_))) | None => {}
                    Some((col, t)) => return Err(parse_err(*col, format!("expected '*', found {t:?}"))),
                }
            } else {
                want_letter = true;
            }
            if want_letter {
                loop {
                    match toks.get(pos) {
                        Some((col, Tok::Name(n))) => {
                            word.push(Letter::parse(n).ok_or_else(|| parse_err(*col, format!("unknown operator '{n}'")))?);
                            pos += 1;
                        }
                        Some((col, t)) => return Err(parse_err(*col, format!("expected an operator, found {t:?}"))),
                        None => return Err(parse_err(end, "expected an operator")),
                    }
                    if let Some((_, Tok::Dot)) = toks.get(pos) {
                        pos += 1;
                    } else {
                        break;
                    }
                }
            }
            terms.push(Term { coeff, word });
        }
        if terms.is_empty() {
            return Err(parse_err(0, "empty Hamiltonian"));
        }
        Ok(HamiltonianSpec { terms })
    }
}

impl fmt::Display for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            let c = if i == 0 {
                t.coeff
            } else if t.coeff < 0.0 {
                write!(f, " - ")?;
                -t.coeff
            } else {
                write!(f, " + ")?;
                t.coeff
            };
            let word: Vec<&str> = t.word.iter().map(|l| l.symbol()).collect();
            match (word.is_empty(), c == 1.0) {
                (true, _) => write!(f, "{c}")?,
                (false, true) => write!(f, "{}", word.join("."))?,
                (false, false) => write!(f, "{c}*{}", word.join("."))?,
            }
        }
        Ok(())
    }
}

impl HamiltonianSpec {
    pub fn parse(text: &str) -> Result<Self> {
        text.parse()
    }

    fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        self.terms.iter().flat_map(|t| t.word.iter().copied())
    }

    pub fn compatible_with(&self, kind: FamilyKind) -> bool {
        self.letters().all(|l| l.allowed_in(kind))
    }

    /// The family kind the letters belong to.
    pub fn natural_kind(&self) -> Result<FamilyKind> {
        let kind = if self.letters().any(|l| matches!(l, Letter::S1 | Letter::S2 | Letter::S3)) {
            FamilyKind::Spin
        } else if self.letters().any(|l| matches!(l, Letter::D | Letter::QInv)) {
            FamilyKind::Affine
        } else {
            FamilyKind::Canonical
        };
        if self.compatible_with(kind) {
            Ok(kind)
        } else {
            Err(Error::UnsupportedWord(format!("'{self}' mixes operator alphabets")))
        }
    }

    /// Coefficients summed per word.
    fn collected(&self) -> BTreeMap<Vec<Letter>, f64> {
        let mut m = BTreeMap::new();
        for t in &self.terms {
            *m.entry(t.word.clone()).or_insert(0.0) += t.coeff;
        }
        m
    }

    /// Largest coefficient mismatch between the spec and its formal adjoint
    /// (every letter is self-adjoint, so the adjoint reverses each word).
    pub fn symbolic_adjoint_defect(&self) -> f64 {
        let m = self.collected();
        m.iter()
            .map(|(w, &c)| {
                let rev: Vec<Letter> = w.iter().rev().copied().collect();
                (c - m.get(&rev).copied().unwrap_or(0.0)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `𝓗(P + p𝟙, Q + q𝟙)` expanded into monomials (canonical specs only).
    pub fn displaced(&self, p: f64, q: f64) -> Result<Self> {
        if !self.compatible_with(FamilyKind::Canonical) {
            return Err(Error::UnsupportedWord("displacement needs a canonical spec".into()));
        }
        let mut terms = Vec::new();
        for t in &self.terms {
            let n = t.word.len();
            for mask in 0u64..(1u64 << n) {
                let mut coeff = t.coeff;
                let mut word = Vec::new();
                for (i, &l) in t.word.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        coeff *= if l == Letter::P { p } else { q };
                    } else {
                        word.push(l);
                    }
                }
                if coeff != 0.0 {
                    terms.push(Term { coeff, word });
                }
            }
        }
        if terms.is_empty() {
            terms.push(Term {
                coeff: 0.0,
                word: Vec::new(),
            });
        }
        Ok(HamiltonianSpec { terms })
    }

    fn matrix(&self, letter_op: impl Fn(Letter) -> Operator, identity: Operator) -> Result<Operator> {
        let mut total = identity.scale(C64::new(0.0, 0.0));
        for t in &self.terms {
            let mut m = identity.clone();
            for &l in &t.word {
                m = m.mul(&letter_op(l))?;
            }
            total = total.add(&m.scale(C64::from(t.coeff)))?;
        }
        let dev = total.hermitian_deviation();
        if dev > SPEC_HERMITIAN_TOL * total.max_abs().max(1.0) {
            return Err(Error::NotHermitian { max_deviation: dev });
        }
        Ok(total)
    }
}

/// A shipped model Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Model {
    pub name: &'static str,
    pub text: &'static str,
    pub kind: FamilyKind,
}

pub const MODELS: [Model; 4] = [
    Model {
        name: "oscillator",
        text: "0.5*P.P + 0.5*Q.Q",
        kind: FamilyKind::Canonical,
    },
    Model {
        name: "quartic",
        text: "0.5*P.P + 0.5*Q.Q + 0.25*Q.Q.Q.Q",
        kind: FamilyKind::Canonical,
    },
    Model {
        name: "toygravity",
        text: "D.Qinv.D",
        kind: FamilyKind::Affine,
    },
    Model {
        name: "spin-z",
        text: "S3",
        kind: FamilyKind::Spin,
    },
];

pub fn model(name: &str) -> Option<Model> {
    MODELS.iter().copied().find(|m| m.name == name)
}

impl Model {
    pub fn spec(&self) -> HamiltonianSpec {
        self.text.parse().expect("shipped models parse")
    }
}

enum Evaluator {
    Matrix(Operator),
    /// Letter matrices and words as indices into them, applied to the state.
    Words(Vec<Operator>, Vec<(f64, Vec<usize>)>),
    Affine(Vec<(f64, Vec<AffineOp>)>),
}

/// The surface `H(u, v)` for one spec on one family.
pub struct EnhancedHamiltonian {
    spec: HamiltonianSpec,
    family: Family,
    eval: Evaluator,
}

impl EnhancedHamiltonian {
    pub fn new(spec: HamiltonianSpec, family: Family) -> Result<Self> {
        if !spec.compatible_with(family.kind()) {
            return Err(Error::UnsupportedWord(format!(
                "'{spec}' is not expressible on a {} family",
                family.kind().name()
            )));
        }
        let symmetric = spec.symbolic_adjoint_defect() <= SPEC_HERMITIAN_TOL;
        let matrix_eval = |letters: Vec<(Letter, Operator)>, identity: Operator| -> Result<Evaluator> {
            let index = |l: Letter| letters.iter().position(|(k, _)| *k == l).expect("letter in alphabet");
            if symmetric {
                // a palindromic spec over Hermitian matrices is Hermitian as a matrix
                let terms = spec.terms.iter().map(|t| (t.coeff, t.word.iter().map(|&l| index(l)).collect())).collect();
                Ok(Evaluator::Words(letters.iter().map(|(_, m)| m.clone()).collect(), terms))
            } else {
                Ok(Evaluator::Matrix(spec.matrix(|l| letters[index(l)].1.clone(), identity)?))
            }
        };
        let eval = match &family {
            Family::Canonical(f) => matrix_eval(
                vec![(Letter::P, f.momentum().clone()), (Letter::Q, f.position().clone())],
                Operator::identity(f.space()),
            )?,
            Family::Spin(f) => {
                let (s1, s2, s3) = f.operators();
                matrix_eval(
                    vec![(Letter::S1, s1.clone()), (Letter::S2, s2.clone()), (Letter::S3, s3.clone())],
                    Operator::identity(f.space()),
                )?
            }
            Family::Affine(f) => {
                if !symmetric {
                    return Err(Error::NotHermitian {
                        max_deviation: spec.symbolic_adjoint_defect(),
                    });
                }
                // <ψ|W|ψ> behaves like x^{k−1+m} at the origin, m the net power of Q
                let k = 2.0 * f.beta() / f.hbar();
                for t in &spec.terms {
                    let m: i32 = t.word.iter().map(|l| match l {
                        Letter::Q => 1,
                        Letter::QInv => -1,
                        _ => 0,
                    }).sum();
                    if !(k + m as f64 > 0.0) {
                        return Err(Error::invalid(format!(
                            "expectation of '{}' diverges for 2beta/hbar = {k}",
                            HamiltonianSpec { terms: vec![t.clone()] }
                        )));
                    }
                }
                let to_op = |l| match l {
                    Letter::D => AffineOp::D,
                    Letter::QInv => AffineOp::QInv,
                    _ => AffineOp::Q,
                };
                Evaluator::Affine(
                    spec.terms
                        .iter()
                        .map(|t| (t.coeff, t.word.iter().map(|&l| to_op(l)).collect()))
                        .collect(),
                )
            }
        };
        Ok(EnhancedHamiltonian { spec, family, eval })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn hbar(&self) -> f64 {
        self.family.hbar()
    }

    /// `<u,v|𝓗|u,v>` before the reality check.
    pub fn eval_complex(&self, u: f64, v: f64) -> Result<C64> {
        let psi = match &self.family {
            Family::Canonical(f) => f.state(u, v),
            Family::Spin(f) => spin_coherent(f, u, v)?,
            Family::Affine(f) => {
                let Evaluator::Affine(terms) = &self.eval else {
                    unreachable!("affine families use the affine evaluator")
                };
                let psi = f.state(u, v)?;
                return Ok(terms
                    .iter()
                    .map(|(c, w)| {
                        let e = if w.is_empty() {
                            C64::from(psi.samples().norm_squared())
                        } else {
                            psi.expect_word(w)
                        };
                        e * c
                    })
                    .sum());
            }
        };
        match &self.eval {
            Evaluator::Matrix(h) => expectation(&psi, h),
            Evaluator::Words(ops, terms) => Ok(terms
                .iter()
                .map(|(c, w)| {
                    let image = w.iter().rev().fold(psi.coeffs().clone(), |acc, &i| ops[i].matrix() * acc);
                    psi.coeffs().dotc(&image) * c
                })
                .sum()),
            Evaluator::Affine(_) => unreachable!("affine evaluator only on affine families"),
        }
    }

    /// `H(u, v)`; `(u, v)` is `(p, q)` or `(θ, φ)` for spin.
    pub fn eval(&self, u: f64, v: f64) -> Result<f64> {
        let z = self.eval_complex(u, v)?;
        if z.im.abs() > IMAG_TOL * z.re.abs().max(1.0) {
            return Err(Error::Numerical(format!("enhanced Hamiltonian has imaginary part {:.3e}", z.im)));
        }
        Ok(z.re)
    }
}

/// `enhanced_hamiltonian`: `H(u, v) = <u,v|𝓗|u,v>`.
pub fn enhanced_hamiltonian(spec: &HamiltonianSpec, family: &Family, u: f64, v: f64) -> Result<f64> {
    EnhancedHamiltonian::new(spec.clone(), family.clone())?.eval(u, v)
}

/// `C′(β, ħ)` defined by `<β|D Q⁻¹ D|β> = ħ²C′`, from adaptive quadrature of
/// `|Dβ(x)|²/x` over the half line.
pub fn cprime(beta: f64, hbar: f64) -> Result<f64> {
    if !(beta > 0.0) || !(hbar > 0.0) {
        return Err(Error::invalid("beta and hbar must be positive"));
    }
    let k = 2.0 * beta / hbar;
    if !(k > 1.0) {
        return Err(Error::invalid(format!(
            "beta/hbar = {} must exceed 1/2 for <D Q^-1 D> to be finite",
            beta / hbar
        )));
    }
    // only the closed form of Dβ is used; a small grid suffices to build it
    let fam = AffineFamily::new(beta, hbar, 8)?;
    let d_beta = fam.fiducial()?.apply_d();
    let f = |x: f64| d_beta.wavefunction(x).norm_sqr() / x;
    // near 0, f ~ x^{k−2}; x = t^{1/(k−1)} makes the integrand bounded on [0, 1]
    let e = 1.0 / (k - 1.0);
    let head = integrate_adaptive(|t| if t > 0.0 { f(t.powf(e)) * e * t.powf(e - 1.0) } else { 0.0 }, 0.0, 1.0, 1e-13, 0.0, 20_000)?;
    let upper = 1.0 + 800.0 / k;
    let tail = integrate_adaptive(f, 1.0, upper, 1e-13, 0.0, 20_000)?;
    Ok((head.value + tail.value) / (hbar * hbar))
}

/// A commutative monomial `c · p^a q^b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseMonomial {
    pub coeff: f64,
    pub p_pow: i32,
    pub q_pow: i32,
}

/// A monomial `c · (sħ)^{a+b+c} n₁^a n₂^b n₃^c` on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpinMonomial {
    pub coeff: f64,
    pub powers: [u32; 3],
}

/// The `ħ → 0` surface of a spec.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "chart", rename_all = "lowercase")]
pub enum ClassicalHamiltonian {
    PhaseSpace {
        kind: FamilyKind,
        terms: Vec<PhaseMonomial>,
    },
    Spin {
        terms: Vec<SpinMonomial>,
    },
}

impl ClassicalHamiltonian {
    /// Value at `(p, q)` (canonical or affine).
    pub fn eval_pq(&self, p: f64, q: f64) -> Result<f64> {
        match self {
            ClassicalHamiltonian::PhaseSpace { terms, .. } => {
                Ok(terms.iter().map(|m| m.coeff * p.powi(m.p_pow) * q.powi(m.q_pow)).sum())
            }
            ClassicalHamiltonian::Spin { .. } => Err(Error::KindMismatch {
                expected: "phase-space",
                found: "spin",
            }),
        }
    }

    /// Value at `(θ, φ)` on the sphere of radius `sħ`.
    pub fn eval_spin(&self, theta: f64, phi: f64, s_hbar: f64) -> Result<f64> {
        match self {
            ClassicalHamiltonian::Spin { terms } => {
                let n = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                Ok(terms
                    .iter()
                    .map(|m| {
                        let deg: u32 = m.powers.iter().sum();
                        m.coeff
                            * s_hbar.powi(deg as i32)
                            * (0..3).map(|j| n[j].powi(m.powers[j] as i32)).product::<f64>()
                    })
                    .sum())
            }
            ClassicalHamiltonian::PhaseSpace { .. } => Err(Error::KindMismatch {
                expected: "spin",
                found: "phase-space",
            }),
        }
    }

    /// Value in the spin chart `p = sqrt(sħ) cos θ`, `q = sqrt(sħ) φ`.
    pub fn eval_spin_chart(&self, p: f64, q: f64, s_hbar: f64) -> Result<f64> {
        let r = s_hbar.sqrt();
        if !(p.abs() <= r) {
            return Err(Error::ChartBoundary(format!("|p| = {} exceeds sqrt(s hbar) = {r}", p.abs())));
        }
        self.eval_spin((p / r).acos(), q / r, s_hbar)
    }

    /// Value at a chart point of a family with the given parameters and ħ.
    pub fn eval_on(&self, params: &FamilyParams, hbar: f64, u: f64, v: f64) -> Result<f64> {
        match (self, params) {
            (ClassicalHamiltonian::Spin { .. }, FamilyParams::Spin { s }) => self.eval_spin(u, v, s * hbar),
            (ClassicalHamiltonian::PhaseSpace { .. }, FamilyParams::Canonical { .. } | FamilyParams::Affine { .. }) => {
                self.eval_pq(u, v)
            }
            _ => Err(Error::KindMismatch {
                expected: if matches!(self, ClassicalHamiltonian::Spin { .. }) { "spin" } else { "phase-space" },
                found: params.kind().name(),
            }),
        }
    }
}

fn fmt_coeff(f: &mut fmt::Formatter<'_>, c: f64, first: bool, has_factors: bool) -> fmt::Result {
    let mag = if first {
        if c < 0.0 {
            write!(f, "-")?;
        }
        c.abs()
    } else {
        write!(f, "{}", if c < 0.0 { " - " } else { " + " })?;
        c.abs()
    };
    if !has_factors {
        write!(f, "{mag}")
    } else if mag != 1.0 {
        write!(f, "{mag}*")
    } else {
        Ok(())
    }
}

fn fmt_power(name: &str, k: i64) -> Option<String> {
    match k {
        0 => None,
        1 => Some(name.to_string()),
        _ => Some(format!("{name}^{k}")),
    }
}

impl fmt::Display for ClassicalHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        match self {
            ClassicalHamiltonian::PhaseSpace { terms, .. } => {
                for m in terms {
                    let factors: Vec<String> =
                        [fmt_power("q", m.q_pow as i64), fmt_power("p", m.p_pow as i64)].into_iter().flatten().collect();
                    fmt_coeff(f, m.coeff, first, !factors.is_empty())?;
                    write!(f, "{}", factors.join("*"))?;
                    first = false;
                }
            }
            ClassicalHamiltonian::Spin { terms } => {
                for m in terms {
                    let deg: u32 = m.powers.iter().sum();
                    let names = ["sin(theta)cos(phi)", "sin(theta)sin(phi)", "cos(theta)"];
                    let factors: Vec<String> = std::iter::once(fmt_power("(s*hbar)", deg as i64))
                        .chain((0..3).map(|j| fmt_power(names[j], m.powers[j] as i64)))
                        .flatten()
                        .collect();
                    fmt_coeff(f, m.coeff, first, !factors.is_empty())?;
                    write!(f, "{}", factors.join("*"))?;
                    first = false;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// `classical_limit`: replace `P → p`, `Q → q` (canonical), `D → pq`,
/// `Q → q`, `Qinv → 1/q` (affine), `S_j → sħ n_j` (spin).
pub fn classical_limit(spec: &HamiltonianSpec) -> Result<ClassicalHamiltonian> {
    let kind = spec.natural_kind()?;
    if kind == FamilyKind::Spin {
        let mut acc: BTreeMap<[u32; 3], f64> = BTreeMap::new();
        for t in &spec.terms {
            let mut pw = [0u32; 3];
            for &l in &t.word {
                pw[match l {
                    Letter::S1 => 0,
                    Letter::S2 => 1,
                    _ => 2,
                }] += 1;
            }
            *acc.entry(pw).or_insert(0.0) += t.coeff;
        }
        let terms = acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(powers, coeff)| SpinMonomial { coeff, powers })
            .collect();
        return Ok(ClassicalHamiltonian::Spin { terms });
    }
    let mut acc: BTreeMap<(i32, i32), f64> = BTreeMap::new();
    for t in &spec.terms {
        let (mut a, mut b) = (0, 0);
        for &l in &t.word {
            match l {
                Letter::P => a += 1,
                Letter::Q => b += 1,
                Letter::QInv => b -= 1,
                Letter::D => {
                    a += 1;
                    b += 1;
                }
                other => return Err(Error::UnsupportedWord(other.symbol().into())),
            }
        }
        *acc.entry((a, b)).or_insert(0.0) += t.coeff;
    }
    let terms = acc
        .into_iter()
        .rev()
        .filter(|(_, c)| *c != 0.0)
        .map(|((p_pow, q_pow), coeff)| PhaseMonomial { coeff, p_pow, q_pow })
        .collect();
    Ok(ClassicalHamiltonian::PhaseSpace { kind, terms })
}

/// Power law `|H − H_cl| ≈ prefactor · ħ^exponent`, or exact agreement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ScalingFit {
    Exact,
    Power { exponent: f64, prefactor: f64, r_squared: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub spec: String,
    pub classical: String,
    pub u: f64,
    pub v: f64,
    pub hbars: Vec<f64>,
    pub enhanced: Vec<f64>,
    pub classical_values: Vec<f64>,
    /// `H − H_cl` per ħ.
    pub differences: Vec<f64>,
    /// `|H(2N) − H(N)|` per ħ for canonical families.
    pub truncation_shift: Option<Vec<f64>>,
    pub fit: ScalingFit,
}

/// Default ħ sweep: 7 points, geometric from 1 to 1/64.
pub fn default_hbar_sweep() -> Vec<f64> {
    (0..7).map(|i| 0.5f64.powi(i)).collect()
}

/// `hbar_scaling_fit`: least-squares fit of `ln|H − H_cl|` against `ln ħ`.
pub fn hbar_scaling_fit(
    spec: &HamiltonianSpec,
    params: &FamilyParams,
    u: f64,
    v: f64,
    hbars: &[f64],
) -> Result<ScalingReport> {
    if hbars.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 hbar values, got {}", hbars.len())));
    }
    if hbars.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::invalid("hbar values must be positive and finite"));
    }
    let (lo, hi) = hbars.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &h| (lo.min(h), hi.max(h)));
    if hi / lo < 10.0 - 1e-12 {
        return Err(Error::invalid("hbar values must span at least a decade"));
    }
    let classical = classical_limit(spec)?;
    let mut enhanced = Vec::with_capacity(hbars.len());
    let mut classical_values = Vec::with_capacity(hbars.len());
    let mut shift = params.doubled_truncation().map(|_| Vec::with_capacity(hbars.len()));
    for &h in hbars {
        let value = enhanced_hamiltonian(spec, &params.build(h)?, u, v)?;
        if let (Some(big), Some(s)) = (params.doubled_truncation(), shift.as_mut()) {
            s.push((enhanced_hamiltonian(spec, &big.build(h)?, u, v)? - value).abs());
        }
        enhanced.push(value);
        classical_values.push(classical.eval_on(params, h, u, v)?);
    }
    let differences: Vec<f64> = enhanced.iter().zip(&classical_values).map(|(a, b)| a - b).collect();
    let fit = if differences.iter().all(|d| d.abs() < EXACT_TOL) {
        ScalingFit::Exact
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            hbars.iter().zip(&differences).filter(|(_, d)| d.abs() >= EXACT_TOL).map(|(h, d)| (*h, d.abs())).unzip();
        let lf = log_log_fit(&xs, &ys)?;
        ScalingFit::Power {
            exponent: lf.slope,
            prefactor: lf.intercept.exp(),
            r_squared: lf.r_squared,
        }
    };
    Ok(ScalingReport {
        spec: spec.to_string(),
        classical: classical.to_string(),
        u,
        v,
        hbars: hbars.to_vec(),
        enhanced,
        classical_values,
        differences,
        truncation_shift: shift,
        fit,
    })
}

/// Canonical family used when only ħ is given.
pub fn default_canonical(hbar: f64) -> Result<Family> {
    Ok(Family::Canonical(CanonicalFamily::new(crate::hilbert::DEFAULT_FOCK_DIM, hbar)?))
}

/// Spin family for `s` and ħ.
pub fn spin_family(s: f64, hbar: f64) -> Result<Family> {
    Ok(Family::Spin(SpinFamily::new(crate::hilbert::Spin::new(s)?, hbar)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::DEFAULT_AFFINE_NODES;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn spec(s: &str) -> HamiltonianSpec {
        s.parse().unwrap()
    }

    fn canonical(hbar: f64) -> Family {
        default_canonical(hbar).unwrap()
    }

    fn affine(beta: f64, hbar: f64) -> Family {
        Family::Affine(AffineFamily::new(beta, hbar, DEFAULT_AFFINE_NODES).unwrap())
    }

    #[test]
    fn parser_accepts_the_grammar() {
        let h = spec("0.5*P.P + 0.5*Q.Q");
        assert_eq!(h.terms.len(), 2);
        assert_eq!(h.terms[0].word, vec![Letter::P, Letter::P]);
        assert_eq!(spec("D.Qinv.D").terms[0].word, vec![Letter::D, Letter::QInv, Letter::D]);
        let h = spec("-Q + 2 - 1.5e-1*S3.S3");
        assert_eq!(h.terms[0].coeff, -1.0);
        assert_eq!(h.terms[1], Term { coeff: 2.0, word: vec![] });
        assert_eq!(h.terms[2].coeff, -0.15);
        assert_eq!(spec(".25*Q").terms[0].coeff, 0.25);
        assert_eq!(spec(&spec("0.5*P.P - 2*Q + 1").to_string()), spec("0.5*P.P - 2*Q + 1"));
    }

    #[test]
    fn parser_reports_columns() {
        for (text, col) in [("0.5*X.P", 4), ("P..Q", 2), ("P Q", 2), ("", 0), ("2*", 2), ("P + $", 4)] {
            match text.parse::<HamiltonianSpec>() {
                Err(Error::Parse { column, .. }) => assert_eq!(column, col, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn oscillator_values() {
        let h = spec("0.5*P.P + 0.5*Q.Q");
        assert_abs_diff_eq!(enhanced_hamiltonian(&h, &canonical(1.0), 0.0, 0.0).unwrap(), 0.5, epsilon = 1e-12);
        for &hbar in &[1.0, 0.25] {
            for &(p, q) in &[(1.0, -0.5), (-2.0, 1.5)] {
                let v = enhanced_hamiltonian(&h, &canonical(hbar), p, q).unwrap();
                assert_abs_diff_eq!(v, 0.5 * (p * p + q * q) + 0.5 * hbar, epsilon = 1e-10);
            }
        }
        let q = spec("Q");
        assert_abs_diff_eq!(enhanced_hamiltonian(&q, &canonical(1.0), 0.7, -1.3).unwrap(), -1.3, epsilon = 1e-12);
    }

    #[test]
    fn displacement_covariance() {
        let fam = canonical(1.0);
        for text in ["0.5*P.P + 0.5*Q.Q", "0.5*P.P + 0.5*Q.Q + 0.25*Q.Q.Q.Q"] {
            let h = spec(text);
            for i in 0..5 {
                for j in 0..5 {
                    let (p, q) = (-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64);
                    let direct = enhanced_hamiltonian(&h, &fam, p, q).unwrap();
                    let shifted = enhanced_hamiltonian(&h.displaced(p, q).unwrap(), &fam, 0.0, 0.0).unwrap();
                    assert_abs_diff_eq!(direct, shifted, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn divergent_affine_expectations_rejected() {
        let toy = spec("D.Qinv.D");
        assert!(matches!(
            EnhancedHamiltonian::new(toy.clone(), affine(0.5, 1.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(EnhancedHamiltonian::new(toy, affine(0.6, 1.0)).is_ok());
        assert!(EnhancedHamiltonian::new(spec("Qinv.Qinv"), affine(0.9, 1.0)).is_err());
        assert!(EnhancedHamiltonian::new(spec("D.D"), affine(0.3, 1.0)).is_ok());
    }

    #[test]
    fn non_hermitian_specs_rejected() {
        assert!(matches!(
            EnhancedHamiltonian::new(spec("Q.P"), canonical(1.0)),
            Err(Error::NotHermitian { .. })
        ));
        assert!(EnhancedHamiltonian::new(spec("Q.P + P.Q"), canonical(1.0)).is_ok());
        assert!(matches!(
            EnhancedHamiltonian::new(spec("D.Q"), affine(1.0, 1.0)),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(
            EnhancedHamiltonian::new(spec("D.P"), affine(1.0, 1.0)),
            Err(Error::UnsupportedWord(_))
        ));
    }

    #[test]
    fn cprime_matches_gamma_oracle() {
        // |Dβ|² = (ħk/2)²(1 − x)²|β|² and E[(1−x)²/x] = 1/(k−1) under Gamma(k, k)
        let oracle = |beta: f64, hbar: f64| {
            let k = 2.0 * beta / hbar;
            k * k / (4.0 * (k - 1.0))
        };
        for &(beta, hbar) in &[(1.0, 0.25), (1.0, 1.0), (0.6, 1.0), (2.0, 0.1), (3.0, 5.0)] {
            let c = cprime(beta, hbar).unwrap();
            assert!(c > 0.0);
            assert_abs_diff_eq!(c / oracle(beta, hbar), 1.0, epsilon = 1e-9);
        }
        assert!(cprime(0.5, 1.0).is_err());
        assert!(cprime(1.0, 0.0).is_err());
        assert!(cprime(1.0, 1e-3).unwrap() * 1e-6 < 1e-2);
    }

    #[test]
    fn affine_toy_gravity_surface() {
        let h = spec("D.Qinv.D");
        for &(beta, hbar) in &[(1.0, 1.0), (1.0, 0.25)] {
            let fam = affine(beta, hbar);
            let c = cprime(beta, hbar).unwrap();
            for &q in &[0.5, 1.0, 2.0] {
                for &p in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
                    let v = enhanced_hamiltonian(&h, &fam, p, q).unwrap();
                    assert_abs_diff_eq!(v, q * p * p + hbar * hbar * c / q, epsilon = 1e-8 * (1.0 + v.abs()));
                }
            }
        }
        assert!(matches!(
            enhanced_hamiltonian(&h, &affine(1.0, 1.0), 0.0, 0.0),
            Err(Error::ChartBoundary(_))
        ));
    }

    #[test]
    fn affine_residual_is_p_independent_and_inverse_in_q() {
        let h = spec("D.Qinv.D");
        let fam = affine(1.0, 1.0);
        let residual = |p: f64, q: f64| enhanced_hamiltonian(&h, &fam, p, q).unwrap() - q * p * p;
        for &q in &[0.5, 1.0, 2.0] {
            let r0 = residual(0.0, q);
            for p in [-2.0, -1.0, 1.0, 2.0] {
                assert_abs_diff_eq!(residual(p, q), r0, epsilon = 1e-6);
            }
        }
        let qs = [0.4, 0.7, 1.0, 1.6, 2.5];
        let rs: Vec<f64> = qs.iter().map(|&q| residual(0.3, q)).collect();
        let fit = log_log_fit(&qs, &rs).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-3);
    }

    #[test]
    fn spin_expectations_are_real() {
        let fam = spin_family(1.5, 1.0).unwrap();
        let v = enhanced_hamiltonian(&spec("S3"), &fam, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(v, 1.5 * 1f64.cos(), epsilon = 1e-12);
        let v = enhanced_hamiltonian(&spec("S1.S2 + S2.S1"), &fam, 1.0, 2.0).unwrap();
        let (n1, n2) = (1f64.sin() * 2f64.cos(), 1f64.sin() * 2f64.sin());
        // <{S1,S2}> = 2 s(s − 1/2) ħ² n1 n2 in a spin coherent state
        assert_abs_diff_eq!(v, 2.0 * 1.5 * 1.0 * n1 * n2, epsilon = 1e-10);
    }

    #[test]
    fn classical_limits() {
        let cl = classical_limit(&spec("D.Qinv.D")).unwrap();
        assert_eq!(cl.to_string(), "q*p^2");
        assert_abs_diff_eq!(cl.eval_pq(-1.5, 2.0).unwrap(), 4.5);
        let cl = classical_limit(&spec("0.5*P.P + 0.5*Q.Q")).unwrap();
        assert_eq!(cl.to_string(), "0.5*p^2 + 0.5*q^2");
        let cl = classical_limit(&spec("S3")).unwrap();
        let s_hbar: f64 = 1.5;
        let p = 0.4;
        assert_abs_diff_eq!(cl.eval_spin_chart(p, 0.3, s_hbar).unwrap(), s_hbar.sqrt() * p, epsilon = 1e-14);
        assert_abs_diff_eq!(cl.eval_spin(PI / 3.0, 0.0, s_hbar).unwrap(), 0.75, epsilon = 1e-14);
        assert!(matches!(classical_limit(&spec("P.D")), Err(Error::UnsupportedWord(_))));
        assert!(matches!(classical_limit(&spec("S1.Q")), Err(Error::UnsupportedWord(_))));
    }

    #[test]
    fn scaling_fits() {
        let sweep = default_hbar_sweep();
        assert_eq!(sweep.len(), 7);
        assert_abs_diff_eq!(sweep[6], 1.0 / 64.0);

        let r = hbar_scaling_fit(&spec("0.5*P.P + 0.5*Q.Q"), &FamilyParams::canonical(), 0.5, -0.5, &sweep).unwrap();
        for (d, h) in r.differences.iter().zip(&sweep) {
            assert_abs_diff_eq!(*d, 0.5 * h, epsilon = 1e-10);
        }
        match r.fit {
            ScalingFit::Power { exponent, prefactor, .. } => {
                assert_abs_diff_eq!(exponent, 1.0, epsilon = 1e-8);
                assert_abs_diff_eq!(prefactor, 0.5, epsilon = 1e-8);
            }
            ScalingFit::Exact => panic!("oscillator is not exact"),
        }
        assert!(r.truncation_shift.unwrap().iter().all(|s| *s < 1e-10));

        let r = hbar_scaling_fit(&spec("Q"), &FamilyParams::canonical(), 0.5, -0.5, &sweep).unwrap();
        assert_eq!(r.fit, ScalingFit::Exact);

        let r = hbar_scaling_fit(&spec("D.Qinv.D"), &FamilyParams::affine(1.0), 1.0, 1.0, &sweep).unwrap();
        for (d, &h) in r.differences.iter().zip(&sweep) {
            assert_abs_diff_eq!(*d, h * h * cprime(1.0, h).unwrap(), epsilon = 1e-9);
        }
        assert!(matches!(r.fit, ScalingFit::Power { exponent, .. } if exponent >= 0.9));

        assert!(hbar_scaling_fit(&spec("Q"), &FamilyParams::canonical(), 0.0, 0.0, &[1.0, 0.5, 0.25]).is_err());
        assert!(hbar_scaling_fit(&spec("Q"), &FamilyParams::canonical(), 0.0, 0.0, &[1.0, 0.9, 0.8, 0.7]).is_err());
    }

    #[test]
    fn shipped_models_scale_at_least_linearly() {
        for m in MODELS {
            let (params, u, v) = match m.kind {
                FamilyKind::Canonical => (FamilyParams::canonical(), 0.5, -0.5),
                FamilyKind::Affine => (FamilyParams::affine(1.0), 1.0, 1.0),
                FamilyKind::Spin => (FamilyParams::Spin { s: 1.0 }, 1.0, 0.5),
            };
            let r = hbar_scaling_fit(&m.spec(), &params, u, v, &default_hbar_sweep()).unwrap();
            match r.fit {
                ScalingFit::Exact => {}
                ScalingFit::Power { exponent, .. } => assert!(exponent >= 0.9, "{}: {exponent}", m.name),
            }
        }
    }
}
