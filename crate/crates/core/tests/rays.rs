use onewave_core::medium::{Density, Domain, Medium, Slowness};
use onewave_core::rays::{on_branch, trace_ray, RayOptions, Termination};
use onewave_core::symbols::Sign;
use proptest::prelude::*;

fn domain() -> Domain {
    Domain::new(-0.5, 3.0, -5.0, 5.0).unwrap()
}

fn depth_only() -> Vec<Medium> {
    vec![
        Medium::linear_velocity(1.0, 0.5, domain()).unwrap(),
        Medium::analytic(
            Slowness::LinearSlowness { nu0: 1.0, dnu_dz: -0.2, dnu_dx: 0.0 },
            Density::ExponentialZ { rho0: 1.0, rate: 0.4 },
            domain(),
        )
        .unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn horizontal_slowness_and_frequency_are_ray_invariants(
        ratio in -0.9f64..0.9,
        tau in prop_oneof![0.5f64..20.0, -20.0f64..-0.5],
        x0 in -1.0f64..1.0,
    ) {
        for m in depth_only() {
            let start = on_branch(&m, 0.0, x0, ratio * tau.abs(), tau, Sign::Plus).unwrap();
            let ray = trace_ray(&m, &start, &RayOptions::new(6.0 / tau.abs(), 0.01 / tau.abs())).unwrap();
            for s in &ray.samples {
                prop_assert!((s.xi - start.xi).abs() <= 1e-10 * start.xi.abs().max(1.0));
                prop_assert!((s.tau - start.tau).abs() <= 1e-10 * start.tau.abs());
            }
            prop_assert!(ray.max_hamiltonian_drift(&m).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn drift_is_small_through_a_lens(angle in -50.0f64..50.0, x0 in -0.5f64..0.5) {
        let m = Medium::analytic(
            Slowness::GaussianLens { v0: 1.0, amplitude: 0.1, z_c: 1.0, x_c: 0.0, width: 0.25 },
            Density::Constant { rho: 1.0 },
            domain(),
        )
        .unwrap();
        let xi = -angle.to_radians().sin() * 4.0;
        let start = on_branch(&m, 0.0, x0, xi, 4.0, Sign::Plus).unwrap();
        let ray = trace_ray(&m, &start, &RayOptions::new(20.0, 0.05)).unwrap();
        prop_assert!(ray.max_hamiltonian_drift(&m).unwrap() <= 1e-8);
        prop_assert!(ray.end().z > start.z);
    }
}

#[test]
fn turning_depth_follows_from_snell() {
    let m = Medium::linear_velocity(1.0, 0.5, domain()).unwrap();
    for ratio in [0.5, 0.6, 0.8, 0.9] {
        let start = on_branch(&m, 0.0, 0.0, -ratio, 1.0, Sign::Plus).unwrap();
        let mut opts = RayOptions::new(20.0, 0.02);
        opts.stop_at_turning = true;
        let ray = trace_ray(&m, &start, &opts).unwrap();
        assert_eq!(ray.termination, Termination::Turning, "ratio {ratio}");
        let want = 2.0 * (1.0 / ratio - 1.0);
        assert!((ray.end().z - want).abs() < 1e-6, "ratio {ratio}: {} vs {want}", ray.end().z);
    }
}
