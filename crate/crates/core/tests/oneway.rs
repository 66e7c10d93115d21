use num_complex::Complex64 as C64;
use onewave_core::medium::{Density, Domain, Medium, Slowness};
use onewave_core::oneway::{march, slice_norm, step, OneWayConfig, SolverKind, Stepper};
use onewave_core::psdo::{FreqField, LateralGrid};
use onewave_core::symbols::{ConeConfig, DampingConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> LateralGrid {
    LateralGrid::new(64, 0.05, -1.6).unwrap()
}

fn cone() -> ConeConfig {
    ConeConfig::from_degrees(45.0, 70.0, 4.0).unwrap()
}

fn domain() -> Domain {
    Domain::new(-0.5, 2.0, -2.0, 2.0).unwrap()
}

fn lens() -> Medium {
    Medium::analytic(
        Slowness::GaussianLens { v0: 1.0, amplitude: 0.1, z_c: 0.3, x_c: 0.0, width: 0.4 },
        Density::ExponentialZ { rho0: 1.0, rate: 0.3 },
        domain(),
    )
    .unwrap()
}

fn lateral_sine() -> Medium {
    Medium::analytic(Slowness::LateralSine { nu0: 1.0, epsilon: 0.1, period: 1.6 }, Density::Constant { rho: 1.0 }, domain())
        .unwrap()
}

fn random_field(seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid().n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn config(tau: f64, dz: f64, steps: usize) -> OneWayConfig {
    let mut c = OneWayConfig::new(grid(), vec![tau], 0.0, dz * steps as f64, dz, cone());
    c.stepper = Stepper::CrankNicolsonMidpoint;
    c.solver = SolverKind::Direct;
    c
}

fn norms(m: &Medium, cfg: &OneWayConfig, u: Vec<C64>) -> Vec<f64> {
    let tau = cfg.taus[0];
    let u0 = FreqField::new(cfg.grid, tau, cfg.z0, u).unwrap();
    let mut out = Vec::new();
    march(&u0, cfg, m, |_, _, v| {
        out.push(slice_norm(v, &cfg.grid));
        Ok(())
    })
    .unwrap();
    out
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn undamped_marching_conserves_norm(seed in any::<u64>(), tau in 3.0f64..20.0) {
        let cfg = config(tau, 0.01, 30);
        let n = norms(&lens(), &cfg, random_field(seed));
        for w in &n {
            prop_assert!((w - n[0]).abs() <= 1e-10 * n[0], "{} vs {}", w, n[0]);
        }
    }

    #[test]
    fn damped_marching_never_gains_energy(seed in any::<u64>(), tau in 3.0f64..20.0) {
        let mut cfg = config(tau, 0.01, 30);
        cfg.damping = Some(DampingConfig::new(10.0, cone(), 3).unwrap());
        cfg.monotone_damping = true;
        let n = norms(&lens(), &cfg, random_field(seed));
        for w in n.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(n[n.len() - 1] < n[0]);
    }

    #[test]
    fn frozen_step_preserves_inner_products(s1 in any::<u64>(), s2 in any::<u64>(), tau in 3.0f64..20.0) {
        let m = lateral_sine();
        for stepper in [Stepper::CrankNicolson, Stepper::MatrixExponential] {
            let mut cfg = config(tau, 0.02, 1);
            cfg.stepper = stepper;
            let (u, v) = (random_field(s1), random_field(s2));
            let go = |w: &[C64]| step(&FreqField::new(grid(), tau, 0.0, w.to_vec()).unwrap(), &cfg, &m).unwrap().values;
            let before = inner(&u, &v);
            let after = inner(&go(&u), &go(&v));
            let scale = (inner(&u, &u).re * inner(&v, &v).re).sqrt();
            prop_assert!((after - before).norm() <= 1e-10 * scale, "{:?}: {} vs {}", stepper, after, before);
        }
    }
}

/// Plane-wave packet with all modes inside the inner cone.
fn inner_cone_packet(tau: f64) -> Vec<C64> {
    let g = grid();
    let kmax = (tau * 40f64.to_radians().sin() * g.length() / (2.0 * std::f64::consts::PI)).floor() as i64;
    g.xs()
        .iter()
        .map(|&x| {
            (-kmax..=kmax)
                .map(|k| {
                    let xi = 2.0 * std::f64::consts::PI * k as f64 / g.length();
                    C64::from_polar(1.0 / (1.0 + (k * k) as f64), xi * x + 0.3 * k as f64)
                })
                .sum()
        })
        .collect()
}

#[test]
fn damping_is_transparent_inside_the_inner_cone() {
    let m = Medium::homogeneous(1.0, 1.0, domain()).unwrap();
    for tau in [5.0, 12.0, 20.0] {
        let u0 = FreqField::new(grid(), tau, 0.0, inner_cone_packet(tau)).unwrap();
        for stepper in [Stepper::CrankNicolson, Stepper::MatrixExponential] {
            let mut cfg = config(tau, 0.01, 50);
            cfg.stepper = stepper;
            let free = march(&u0, &cfg, &m, |_, _, _| Ok(())).unwrap();
            cfg.damping = Some(DampingConfig::new(10.0, cone(), 3).unwrap());
            let damped = march(&u0, &cfg, &m, |_, _, _| Ok(())).unwrap();
            let diff: f64 = free.values.iter().zip(&damped.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let scale: f64 = free.values.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            assert!(diff <= 1e-8 * scale, "tau {tau}, {stepper:?}: {diff:e}");
        }
    }
}

#[test]
fn crank_nicolson_converges_at_second_order() {
    let m = Medium::homogeneous(1.0, 1.0, domain()).unwrap();
    let tau = 10.0;
    let u0 = FreqField::new(grid(), tau, 0.0, inner_cone_packet(tau)).unwrap();
    let run = |stepper, dz: f64| {
        let mut cfg = config(tau, dz, (0.4 / dz).round() as usize);
        cfg.stepper = stepper;
        march(&u0, &cfg, &m, |_, _, _| Ok(())).unwrap().values
    };
    let exact = run(Stepper::MatrixExponential, 0.1);
    let err = |dz| -> f64 {
        let v = run(Stepper::CrankNicolson, dz);
        v.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let e: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&dz| err(dz)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() <= 0.2, "order {order} from {e:?}");
    }
}
