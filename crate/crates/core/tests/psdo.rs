use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use onewave_core::medium::{Density, Domain, Medium, Slowness};
use onewave_core::psdo::{assemble_matrix, LateralGrid, SymbolTable};
use onewave_core::symbolcalc::FnSymbol;
use onewave_core::symbols::{eval_b_extended, eval_big_b, eval_damping, PhasePoint, ConeConfig, DampingConfig, Normalization, Sign};
use proptest::prelude::*;

fn grid() -> LateralGrid {
    LateralGrid::new(512, 0.025, -6.4).unwrap()
}

fn medium() -> Medium {
    Medium::analytic(
        Slowness::LateralSine { nu0: 1.0, epsilon: 0.1, period: 6.4 },
        Density::Constant { rho: 1.0 },
        Domain::new(-1.0, 1.0, -7.0, 7.0).unwrap(),
    )
    .unwrap()
}

fn cone() -> ConeConfig {
    ConeConfig::from_degrees(45.0, 70.0, 4.0).unwrap()
}

/// Smooth packet of modes well inside the inner cone.
fn packet(tau: f64) -> DVector<C64> {
    let g = grid();
    let two_pi = 2.0 * std::f64::consts::PI;
    let kmax = (0.9 * tau * 30f64.to_radians().sin() * g.length() / two_pi).floor() as i64;
    DVector::from_iterator(
        g.n,
        g.xs().iter().map(|&x| {
            (-kmax..=kmax)
                .map(|k| {
                    let w = (-(k as f64 / (0.5 * kmax as f64 + 1.0)).powi(2)).exp();
                    C64::from_polar(w, two_pi * k as f64 * x / g.length())
                })
                .sum()
        }),
    )
}

fn skew_ratio(sym: &FnSymbol, tau: f64) -> f64 {
    let a = assemble_matrix(sym, 0.0, tau, grid()).unwrap();
    let v = packet(tau);
    ((&a - a.adjoint()) * &v).norm() / (&a * &v).norm()
}

fn deviations(tau: f64) -> (f64, f64) {
    let m = Arc::new(medium());
    let c = cone();
    let (m1, m2) = (m.clone(), m);
    let two_term = FnSymbol::new(1.0, move |p| eval_big_b(&m1, p, Sign::Plus, Normalization::Unitary, Some(&c)));
    let principal = FnSymbol::new(1.0, move |p| Ok(C64::new(eval_b_extended(&m2, p, &c)?, 0.0)));
    (skew_ratio(&two_term, tau), skew_ratio(&principal, tau))
}

#[test]
fn selfadjoint_choice_is_nearly_hermitian_at_high_frequency() {
    let d: Vec<(f64, f64)> = [20.0, 40.0, 80.0].iter().map(|&t| deviations(t)).collect();
    for w in d.windows(2) {
        // the correction removes the order-0 skew part, leaving order -1
        assert!((w[1].0 / w[0].0).log2() < -1.5, "{d:?}");
    }
    assert!(d[2].0 < 0.1 * d[2].1, "{d:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn x_independent_symbols_take_the_multiplier_path(
        tau in 2.0f64..30.0,
        eta in 0.5f64..20.0,
        re in proptest::collection::vec(-1.0f64..1.0, 512),
        im in proptest::collection::vec(-1.0f64..1.0, 512),
    ) {
        let m = Medium::homogeneous(0.8, 1.0, Domain::new(-1.0, 1.0, -7.0, 7.0).unwrap()).unwrap();
        let d = DampingConfig::new(eta, cone(), 3).unwrap();
        let t = SymbolTable::from_fn(grid(), |_, x, xi| {
            Ok(C64::new(eval_damping(&m, &PhasePoint::new(0.0, x, xi, tau), &d)?, 0.0))
        })
        .unwrap();
        prop_assert!(t.is_multiplier());
        let v = DVector::from_iterator(512, re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)));
        let dense = t.to_matrix() * &v;
        let fast = t.apply(v.as_slice());
        let diff: f64 = dense.iter().zip(&fast).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-12 * dense.norm(), "{:e}", diff / dense.norm());
    }
}

