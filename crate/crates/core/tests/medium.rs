use onewave_core::medium::{Density, Domain, GriddedMedium, Medium, Slowness};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn domain() -> Domain {
    Domain::new(-1.0, 2.0, -1.5, 1.5).unwrap()
}

fn presets() -> Vec<Medium> {
    let d = domain();
    let smooth = vec![
        (Slowness::Constant { nu: 0.7 }, Density::Constant { rho: 2.0 }),
        (Slowness::LinearSlowness { nu0: 1.0, dnu_dz: -0.2, dnu_dx: 0.1 }, Density::LinearZ { rho0: 1.0, drho_dz: 0.3 }),
        (Slowness::LinearVelocity { v0: 1.0, dv_dz: 0.5, dv_dx: 0.1 }, Density::ExponentialZ { rho0: 1.0, rate: 0.5 }),
        (
            Slowness::GaussianLens { v0: 1.0, amplitude: -0.1, z_c: 0.5, x_c: 0.2, width: 0.3 },
            Density::Constant { rho: 1.0 },
        ),
        (Slowness::LateralSine { nu0: 1.0, epsilon: 0.2, period: 0.8 }, Density::ExponentialZ { rho0: 2.0, rate: -0.3 }),
    ];
    let mut out: Vec<Medium> = smooth.into_iter().map(|(s, r)| Medium::analytic(s, r, d).unwrap()).collect();
    let lens = out[3].clone();
    out.push(Medium::gridded(GriddedMedium::from_medium(&lens, 61, 61, -1.0, -1.5, 0.05, 0.05).unwrap()));
    out
}

#[test]
fn million_random_points_are_positive() {
    let mut all = presets();
    all.push(
        Medium::analytic(
            Slowness::Step { nu_top: 1.0, nu_bottom: 0.5, z_step: 0.5 },
            Density::Constant { rho: 1.0 },
            domain(),
        )
        .unwrap(),
    );
    let d = domain();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in &all {
        for _ in 0..1_000_000 / all.len() + 1 {
            let z = rng.random_range(d.z_min..=d.z_max);
            let x = rng.random_range(d.x_min..=d.x_max);
            let (nu, rho) = m.eval(z, x).unwrap();
            assert!(nu > 0.0 && rho > 0.0, "{m:?} at ({z}, {x})");
        }
    }
}

fn fd_error(m: &Medium, z: f64, x: f64, h: f64) -> f64 {
    let (nx, nz, rx, rz) = m.gradients(z, x).unwrap();
    let e = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0) / (2.0 * h), (a.1 - b.1) / (2.0 * h));
    let (fnz, frz) = e(m.eval(z + h, x).unwrap(), m.eval(z - h, x).unwrap());
    let (fnx, frx) = e(m.eval(z, x + h).unwrap(), m.eval(z, x - h).unwrap());
    [fnz - nz, frz - rz, fnx - nx, frx - rx].iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_differences_at_second_order(z in -0.8f64..1.8, x in -1.3f64..1.3) {
        for m in presets() {
            let e1 = fd_error(&m, z, x, 0.02);
            let e2 = fd_error(&m, z, x, 0.01);
            if e1 > 1e-9 {
                let order = (e1 / e2).log2();
                prop_assert!(order > 1.7, "{:?}: order {} ({} -> {})", m, order, e1, e2);
            }
        }
    }

    #[test]
    fn evaluation_outside_the_domain_fails(z in 2.001f64..5.0, x in -1.0f64..1.0) {
        for m in presets() {
            prop_assert!(m.eval(z, x).is_err());
            prop_assert!(m.eval(-z, x).is_err());
        }
    }
}
