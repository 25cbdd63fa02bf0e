use kerrlattice::analysis::{
    collapse_residual, fit_exp_decay, fit_power_law, gap_power_law, scan_z_curves, CollapseMode, CriticalExponents,
    CriticalScales, ScalingCurve, ScanOptions,
};
use kerrlattice::gta::{
    drift_and_noise, em_step, mode_occupation_k0, order_parameter, run_trajectory, GaussianState, NoiseStream,
    Sample, Unraveling,
};
use kerrlattice::model::{build_lattice, ModelParams};
use kerrlattice::protocols::{EnsembleRecord, Schedule};
use kerrlattice::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(side: usize, delta: f64, u: f64, g: f64, j: f64, gamma: f64) -> ModelParams {
    ModelParams {
        delta,
        u_kerr: u,
        g_drive: g,
        j_hop: j,
        gamma,
        dims: vec![side, side],
        periodic: true,
    }
}

/// A random state with symmetric `u` and Hermitian, positive `v`.
fn random_state(n: usize, seed: u64) -> GaussianState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = |s: f64| C64::new(rng.random_range(-s..s), rng.random_range(-s..s));
    let alpha: Vec<C64> = (0..n).map(|_| c(1.0)).collect();
    let k: Vec<C64> = (0..n * n).map(|_| c(0.3)).collect();
    let mut s = GaussianState::coherent(alpha);
    for i in 0..n {
        for j in 0..=i {
            let uij = c(0.2);
            s.u[i * n + j] = uij;
            s.u[j * n + i] = uij;
            let vij: C64 = (0..n).map(|m| k[i * n + m] * k[j * n + m].conj()).sum();
            s.v[i * n + j] = vij;
            s.v[j * n + i] = vij.conj();
        }
        s.v[i * n + i].im = 0.0;
    }
    s
}

fn physical() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (-2.0..1.0f64, 0.0..2.0f64, 0.0..1.2f64, 0.1..2.0f64, 0.2..2.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noise_matrix_ignores_displacements((d, u, g, j, gm) in physical(), seed in any::<u64>(), theta in -3.0..3.0f64) {
        let p = params(3, d, u, g, j, gm);
        let lat = build_lattice(&p).unwrap();
        let a = random_state(9, seed);
        let mut b = a.clone();
        b.alpha = random_state(9, seed ^ 0xabc).alpha;
        let unr = Unraveling { quadrature_angle: theta };
        let da = drift_and_noise(&a, &p, &lat, unr).unwrap();
        let db = drift_and_noise(&b, &p, &lat, unr).unwrap();
        prop_assert_eq!(da.noise, db.noise);
    }

    #[test]
    fn covariances_receive_no_noise((d, u, g, j, gm) in physical(), seed in any::<u64>()) {
        let p = params(3, d, u, g, j, gm);
        let lat = build_lattice(&p).unwrap();
        let s = random_state(9, seed);
        let mut dw = vec![0.0; 9];
        NoiseStream::new(seed, 0, 9).fill(0, 1e-3, &mut dw);
        let with = em_step(&s, &p, &lat, Unraveling::default(), 1e-3, &dw);
        let without = em_step(&s, &p, &lat, Unraveling::default(), 1e-3, &[0.0; 9]);
        // Steps that fail the positivity checks fail identically.
        match (with, without) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.u, b.u);
                prop_assert_eq!(a.v, b.v);
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn mirrored_trajectory_is_exact((d, u, g, j, gm) in physical(), seed in any::<u64>(), side in 3usize..5) {
        let p = params(side, d, u, g, j, gm);
        let lat = build_lattice(&p).unwrap();
        let n = side * side;
        let init = GaussianState::coherent(random_state(n, seed).alpha);
        let times = [0.0, 0.1, 0.2, 0.3];
        let run = |state: GaussianState, mut noise: NoiseStream| {
            run_trajectory(state, &Schedule::hold(g, 0.3).unwrap(), &p, &lat, Unraveling::default(), 1e-3, &mut noise, 0, &times)
        };
        let a = run(init.clone(), NoiseStream::new(seed, 1, n));
        let b = run(init.negated(), NoiseStream::new(seed, 1, n).negated());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.samples.iter().zip(&b.samples) {
                    prop_assert!((x.order + y.order).abs() <= 1e-12);
                    prop_assert!((x.nk0 - y.nk0).abs() <= 1e-12 * x.nk0.abs().max(1.0));
                }
                prop_assert_eq!(a.state.u, b.state.u);
                prop_assert_eq!(a.state.v, b.state.v);
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn records_obey_jensen(values in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 4), 1..40)) {
        let per: Vec<Vec<Sample>> = values
            .iter()
            .map(|v| v.iter().enumerate().map(|(k, &x)| Sample { t: k as f64, order: x, nk0: x * x }).collect())
            .collect();
        let r = EnsembleRecord::from_samples(&per, 0, "").unwrap();
        r.check_invariants().unwrap();
        for k in 0..r.len() {
            prop_assert!(r.m4[k] >= r.m2[k] * r.m2[k] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn order_parameter_is_odd_and_occupation_even(seed in any::<u64>()) {
        let s = random_state(9, seed);
        prop_assert_eq!(order_parameter(&s.negated()), -order_parameter(&s));
        prop_assert_eq!(mode_occupation_k0(&s.negated()), mode_occupation_k0(&s));
    }

    #[test]
    fn exponential_fit_recovers_rate(rate in 0.01..2.0f64, amp in 0.1..10.0f64, t0 in 0.0..5.0f64) {
        let t: Vec<f64> = (0..60).map(|k| t0 + 0.1 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| amp * (-rate * t).exp()).collect();
        let fit = fit_exp_decay(&t, &y, &vec![0.0; 60], t0, None).unwrap();
        prop_assert!((fit.rate - rate).abs() <= 1e-9 * rate.max(1.0));
    }

    #[test]
    fn power_fit_recovers_exponent(x in 0.05..2.0f64, amp in 0.01..100.0f64) {
        let v: Vec<f64> = (0..12).map(|k| 10f64.powf(-2.0 + 0.25 * k as f64)).collect();
        let y: Vec<f64> = v.iter().map(|v| amp * v.powf(-x)).collect();
        let c = ScalingCurve::exact(8, v, y).unwrap();
        let fit = fit_power_law(&c, (1e-3, 1e3)).unwrap();
        prop_assert!((fit.exponent - x).abs() <= 1e-9);
    }

    #[test]
    fn gap_fit_recovers_slope(z in 1.6..2.9f64, amp in 0.1..5.0f64) {
        let g: Vec<f64> = (0..8).map(|k| 0.4 + 0.05 * k as f64).collect();
        let lam: Vec<f64> = g.iter().map(|g| amp * (0.86 - g).powf(z)).collect();
        let c = ScalingCurve::exact(6, g, lam).unwrap();
        let fit = gap_power_law(&c, &CriticalScales::default(), &CriticalExponents::ising(z), 0.0).unwrap();
        prop_assert!((fit.exponent - z).abs() <= 1e-9);
    }

    #[test]
    fn collapse_scan_recovers_z(z in 1.7..2.8f64, shape in 0.05..1.0f64) {
        let e = CriticalExponents::ising(z);
        let master = |s: f64| (1.0 + s).powf(-e.kz_exponent()) * (1.0 + shape / (1.0 + s));
        let curves: Vec<ScalingCurve> = [4usize, 6, 8]
            .iter()
            .map(|&l| {
                let lf = l as f64;
                let v: Vec<f64> = (0..14).map(|k| 10f64.powf(-1.5 + 0.25 * k as f64) / lf.powf(z + 1.0)).collect();
                let y = v.iter().map(|v| lf.powf(-0.25) * master(v * lf.powf(z + 1.0))).collect();
                ScalingCurve::exact(l, v, y).unwrap()
            })
            .collect();
        let s = CriticalScales::default();
        prop_assert!(collapse_residual(&curves, &e, &s, CollapseMode::F1).unwrap() < 1e-20);
        let scan = scan_z_curves(&curves, CollapseMode::F1, &CriticalExponents::ising(2.0), &s, &ScanOptions::default()).unwrap();
        prop_assert!((scan.z_star - z).abs() <= 0.005 + 1e-9, "{} vs {}", scan.z_star, z);
    }
}

#[test]
fn structure_survives_a_million_steps() {
    let p = ModelParams::standard(3, 0.8);
    let lat = build_lattice(&p).unwrap();
    let mut stepper = kerrlattice::gta::EmStepper::new(&p, &lat, Unraveling::default()).unwrap();
    let mut s = GaussianState::vacuum(9);
    let mut noise = NoiseStream::new(17, 0, 9);
    let mut dw = vec![0.0; 9];
    let h = 1e-4;
    for k in 0..1_000_000u64 {
        noise.fill(k, h, &mut dw);
        stepper.step(&mut s, 0.8, h, &dw).unwrap();
    }
    s.check_invariants().unwrap();
    for i in 0..9 {
        assert_eq!(s.v_at(i, i).im, 0.0);
        for j in 0..9 {
            assert_eq!(s.u_at(i, j), s.u_at(j, i));
            assert_eq!(s.v_at(i, j), s.v_at(j, i).conj());
        }
    }
    assert!(s.min_v_eigenvalue() > 0.0);
}

/// With additive Gaussian noise `sigma = 1e-3` on `2 e^{-0.3 t}`, the true
/// rate lies within two reported standard errors in at least 95% of
/// replicates (a calibrated error covers about 68% at one).
#[test]
fn exponential_fit_error_has_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t: Vec<f64> = (0..81).map(|k| 0.25 * k as f64).collect();
    let sigma = vec![1e-3; t.len()];
    let normal = |rng: &mut ChaCha8Rng| {
        let (u1, u2): (f64, f64) = (1.0 - rng.random::<f64>(), rng.random());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let trials = 2000;
    let mut hits = 0;
    for _ in 0..trials {
        let y: Vec<f64> = t
            .iter()
            .zip(&sigma)
            .map(|(t, s)| 2.0 * (-0.3 * t).exp() + s * normal(&mut rng))
            .collect();
        let fit = fit_exp_decay(&t, &y, &sigma, 0.0, None).unwrap();
        if (fit.rate - 0.3).abs() <= 2.0 * fit.stderr {
            hits += 1;
        }

    }
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}
