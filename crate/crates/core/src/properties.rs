use crate::coherent::{AffineFamily, CanonicalFamily, SpinFamily, DEFAULT_AFFINE_NODES};
use crate::dynamics::{permute_state, permuted_deviation, rotsym_integrate, Controls, PhaseState};
use crate::fit::linear_fit;
use crate::geometry::{fs_metric, Rephased, DEFAULT_METRIC_STEP};
use crate::hilbert::Spin;
use crate::inequality::{lhs, rhs, RadialField};
use crate::report::fmt_f64;
use crate::wcp::{HamiltonianSpec, Letter, Term};
use proptest::prelude::*;
use std::sync::OnceLock;

fn canonical() -> &'static CanonicalFamily {
    static F: OnceLock<CanonicalFamily> = OnceLock::new();
    F.get_or_init(|| CanonicalFamily::new(100, 0.5).unwrap())
}

fn affine() -> &'static AffineFamily {
    static F: OnceLock<AffineFamily> = OnceLock::new();
    F.get_or_init(|| AffineFamily::new(1.5, 1.0, DEFAULT_AFFINE_NODES).unwrap())
}

fn letter() -> impl Strategy<Value = Letter> {
    prop_oneof![
        Just(Letter::P),
        Just(Letter::Q),
        Just(Letter::D),
        Just(Letter::QInv),
        Just(Letter::S1),
        Just(Letter::S2),
        Just(Letter::S3),
    ]
}

fn term() -> impl Strategy<Value = Term> {
    let coeff = prop_oneof![Just(1.0), Just(-1.0), (-1e3f64..1e3).prop_filter("nonzero", |c| *c != 0.0)];
    (coeff, prop::collection::vec(letter(), 0..4)).prop_map(|(coeff, word)| Term { coeff, word })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonical_metric_is_flat_everywhere(p in -2.0f64..2.0, q in -2.0f64..2.0) {
        let m = fs_metric(canonical(), p, q, DEFAULT_METRIC_STEP).unwrap();
        prop_assert!(m.is_positive_definite());
        prop_assert!(m.max_diff([1.0, 0.0, 1.0]) < 1e-6);
    }

    #[test]
    fn affine_metric_is_positive_and_closed_form(p in -1.5f64..1.5, q in 0.3f64..3.0) {
        let m = fs_metric(affine(), p, q, DEFAULT_METRIC_STEP).unwrap();
        prop_assert!(m.is_positive_definite());
        prop_assert!(m.max_diff([q * q / 1.5, 0.0, 1.5 / (q * q)]) < 1e-5);
    }

    #[test]
    fn metric_ignores_local_phases(p in -1.0f64..1.0, q in -1.0f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let plain = fs_metric(canonical(), p, q, DEFAULT_METRIC_STEP).unwrap();
        let map = Rephased { map: canonical(), phase: |u: f64, v: f64| a * u * v + b * (u - v).sin() };
        let rephased = fs_metric(&map, p, q, DEFAULT_METRIC_STEP).unwrap();
        prop_assert!(plain.max_diff(rephased.components()) < 1e-7);
    }

    #[test]
    fn spin_metric_is_round(theta in 0.3f64..2.8, phi in -3.0f64..3.0, twice in 1u32..5) {
        let s = Spin::from_twice(twice).unwrap();
        let fam = SpinFamily::new(s, 1.0).unwrap();
        let m = fs_metric(&fam, theta, phi, DEFAULT_METRIC_STEP).unwrap();
        let sh = s.value();
        prop_assert!(m.max_diff([sh, 0.0, sh * theta.sin().powi(2)]) < 1e-6);
    }

    #[test]
    fn spec_display_round_trips(terms in prop::collection::vec(term(), 1..5)) {
        let spec = HamiltonianSpec { terms };
        let back: HamiltonianSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn csv_numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn line_fit_recovers_exact_lines(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let xs: Vec<f64> = (0..7).map(|i| i as f64 * 0.3 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        prop_assert!((f.slope - a).abs() < 1e-10 && (f.intercept - b).abs() < 1e-10);
    }

    #[test]
    fn both_sides_scale_quadratically(c in 0.1f64..10.0, alpha in 0.0f64..1.2, n in 3u32..6) {
        let f = RadialField::new(n, alpha).unwrap();
        let g = f.scaled(c);
        let eps = 1e-3;
        let rl = lhs(&g, 1.0, eps).unwrap() / lhs(&f, 1.0, eps).unwrap();
        let rr = rhs(&g, 1.0, eps).unwrap() / rhs(&f, 1.0, eps).unwrap();
        prop_assert!((rl / (c * c) - 1.0).abs() < 1e-9);
        prop_assert!((rr / (c * c) - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rotsym_is_permutation_equivariant(
        perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
        p in prop::collection::vec(-0.5f64..0.5, 6),
        q in prop::collection::vec(-0.5f64..0.5, 6),
        g0 in prop_oneof![Just(0.0), Just(1.0)],
    ) {
        let init = PhaseState::new(p, q);
        let c = Controls::default();
        let a = rotsym_integrate(6, 1.0, g0, &init, 0.5, &c).unwrap();
        let b = rotsym_integrate(6, 1.0, g0, &permute_state(&init, &perm).unwrap(), 0.5, &c).unwrap();
        prop_assert!(permuted_deviation(&a, &b, &perm).unwrap() < 1e-9);
    }
}
