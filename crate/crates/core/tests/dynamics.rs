use geoanneal::exactsim::C64;
use geoanneal::fluctuations::{
    build_blocks, evolve_statistical_function, localization_susceptibility,
};
use geoanneal::instance::{generate_sk, IsingInstance};
use geoanneal::meanfield::{ea_parameter, frustration_report, integrate_meanfield, mf_energy};
use geoanneal::schedule::{linear_schedule, solve_geodesic, GeodesicParams};
use nalgebra::DMatrix;
use proptest::prelude::*;

type Amp = (f64, f64);

/// `<Z>` at the end of `i psi' = H psi` with `H = -(1-s) X - s h Z`,
/// `s = t/T`, from the `X = +1` state, by fixed-step RK4.
fn single_qubit_z(h: f64, total_time: f64, steps: usize) -> f64 {
    let deriv = |t: f64, psi: &[Amp; 2]| -> [Amp; 2] {
        let s = t / total_time;
        let (a, b) = (psi[0], psi[1]);
        // H psi with H = [[-s h, -(1-s)], [-(1-s), s h]]
        let ha = (
            -s * h * a.0 - (1.0 - s) * b.0,
            -s * h * a.1 - (1.0 - s) * b.1,
        );
        let hb = (
            -(1.0 - s) * a.0 + s * h * b.0,
            -(1.0 - s) * a.1 + s * h * b.1,
        );
        // -i (x + iy) = y - ix
        [(ha.1, -ha.0), (hb.1, -hb.0)]
    };
    let axpy = |psi: &[Amp; 2], k: &[Amp; 2], c: f64| -> [Amp; 2] {
        [
            (psi[0].0 + c * k[0].0, psi[0].1 + c * k[0].1),
            (psi[1].0 + c * k[1].0, psi[1].1 + c * k[1].1),
        ]
    };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = [(r, 0.0), (r, 0.0)];
    let dt = total_time / steps as f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = deriv(t, &psi);
        let k2 = deriv(t + dt / 2.0, &axpy(&psi, &k1, dt / 2.0));
        let k3 = deriv(t + dt / 2.0, &axpy(&psi, &k2, dt / 2.0));
        let k4 = deriv(t + dt, &axpy(&psi, &k3, dt));
        for c in 0..2 {
            psi[c].0 += dt / 6.0 * (k1[c].0 + 2.0 * k2[c].0 + 2.0 * k3[c].0 + k4[c].0);
            psi[c].1 += dt / 6.0 * (k1[c].1 + 2.0 * k2[c].1 + 2.0 * k3[c].1 + k4[c].1);
        }
    }
    let p0 = psi[0].0.powi(2) + psi[0].1.powi(2);
    let p1 = psi[1].0.powi(2) + psi[1].1.powi(2);
    (p0 - p1) / (p0 + p1)
}

fn field_only(fields: Vec<f64>) -> IsingInstance {
    let n = fields.len();
    IsingInstance::new(fields, vec![0.0; n * n], 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn free_spins_follow_the_schroedinger_equation(
        fields in prop::collection::vec(-2.0f64..2.0, 1..5),
        total_time in 4.0f64..32.0,
    ) {
        let inst = field_only(fields.clone());
        let traj = integrate_meanfield(&inst, &linear_schedule(), total_time, 1e-10).unwrap();
        for (i, &h) in fields.iter().enumerate() {
            let exact = single_qubit_z(h, total_time, 8000);
            prop_assert!((traj.final_spins()[i][2] - exact).abs() < 1e-6, "spin {}: {} vs {}", i, traj.final_spins()[i][2], exact);
        }
    }

    #[test]
    fn bloch_vectors_stay_on_the_sphere(n in 2usize..7, seed in any::<u64>(), total_time in 4.0f64..128.0) {
        let inst = generate_sk(n, seed).unwrap();
        let traj = integrate_meanfield(&inst, &linear_schedule(), total_time, 1e-8).unwrap();
        prop_assert!(traj.norm_drift() < 1e-6);
        prop_assert_eq!(traj.times.len(), traj.spins.len());
        let q = ea_parameter(&traj);
        prop_assert!(q.iter().flatten().all(|&x| (0.0..=1.0 + 1e-9).contains(&x)));
        let report = frustration_report(&traj);
        prop_assert!(report.scores.iter().all(|&f| (0.0..=1.0).contains(&f)));
        for (i, &sigma) in traj.sigma_star.iter().enumerate() {
            let nz = traj.final_spins()[i][2];
            prop_assert!(sigma == 1 || nz < 0.0);
        }
    }

    #[test]
    fn fluctuation_invariants_hold(n in 2usize..6, seed in any::<u64>(), total_time in 8.0f64..64.0) {
        let inst = generate_sk(n, seed).unwrap();
        let traj = integrate_meanfield(&inst, &linear_schedule(), total_time, 1e-8).unwrap();
        let rec = evolve_statistical_function(&inst, &traj, 1e-8).unwrap();
        prop_assert!(rec.spectrum_deviation < 1e-6, "spectrum deviation {}", rec.spectrum_deviation);
        prop_assert!(rec.min_diagonal > 1.0 - 1e-6);
        prop_assert!(rec.hermiticity_deviation < 1e-6);
        prop_assert!(rec.paramagnon.iter().flatten().all(|&x| x > -1e-6));
        prop_assert!(rec.chi.iter().flatten().all(|&x| x > -1e-6));
    }
}

#[test]
fn field_only_ensemble_matches_oracle_at_long_time() {
    let fields = vec![0.3, -1.1, 0.05, 1.7, -0.6, 0.9];
    let inst = field_only(fields.clone());
    let traj = integrate_meanfield(&inst, &linear_schedule(), 64.0, 1e-10).unwrap();
    for (i, &h) in fields.iter().enumerate() {
        let exact = single_qubit_z(h, 64.0, 20000);
        assert!((traj.final_spins()[i][2] - exact).abs() < 1e-6);
    }
}

#[test]
fn susceptibility_matches_stereographic_closed_form() {
    let inst = generate_sk(5, 17).unwrap();
    let traj = integrate_meanfield(&inst, &linear_schedule(), 48.0, 1e-8).unwrap();
    let rec = evolve_statistical_function(&inst, &traj, 1e-8).unwrap();
    let sus = localization_susceptibility(&rec, &traj).unwrap();
    for (k, &t) in rec.times.iter().enumerate() {
        let spins = traj.spins_at(t).unwrap();
        for i in 0..5 {
            if sus.flagged[k][i] {
                continue;
            }
            let sigma = f64::from(traj.sigma_star[i]);
            let nz = spins[i][2];
            // On the unit sphere 1 + |z|^2 = 2 / (1 + sigma nz).
            let expected = nz * nz * (2.0 / (1.0 + sigma * nz)).powi(2) * rec.paramagnon[k][i];
            let scale = 1.0 + expected.abs();
            assert!(
                (sus.chi[k][i] - expected).abs() < 1e-5 * scale,
                "t = {t}, spin {i}"
            );
            assert!((rec.chi[k][i] - sus.chi[k][i]).abs() < 1e-12 * scale);
        }
    }
}

#[test]
fn mean_field_energy_starts_in_the_driver_ground_state() {
    let inst = generate_sk(6, 3).unwrap();
    let traj = integrate_meanfield(&inst, &linear_schedule(), 32.0, 1e-8).unwrap();
    let e0 = mf_energy(&inst, &traj, 0.0).unwrap();
    assert!((e0 + 6.0).abs() < 1e-12, "{e0}");
    let e_end = mf_energy(&inst, &traj, 32.0).unwrap();
    assert!(e_end < 0.0);
}

#[test]
fn slower_schedule_near_localization_keeps_spins_on_sphere() {
    let inst = generate_sk(6, 8).unwrap();
    let sched = solve_geodesic(&GeodesicParams::centered(0.4)).unwrap();
    let traj = integrate_meanfield(&inst, &sched, 64.0, 1e-8).unwrap();
    assert!(traj.norm_drift() < 1e-6);
    let rec = evolve_statistical_function(&inst, &traj, 1e-8).unwrap();
    assert!(rec.spectrum_deviation < 1e-6);
}

#[test]
fn statistical_function_matches_fixed_step_rk4() {
    let inst = generate_sk(3, 21).unwrap();
    let total_time = 24.0;
    let traj = integrate_meanfield(&inst, &linear_schedule(), total_time, 1e-11).unwrap();
    let rec = evolve_statistical_function(&inst, &traj, 1e-10).unwrap();
    let minus_i = C64::new(0.0, -1.0);
    let deriv = |t: f64, f: &DMatrix<C64>| {
        let k = build_blocks(&inst, &traj, t).unwrap().sigma3_h();
        (&k * f - f * &k) * minus_i
    };
    let mut f = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(6, |k, _| {
        C64::new(0.0, if k < 3 { -1.0 } else { 1.0 })
    }));
    let steps_per_cell = 40;
    let mut worst = 0.0f64;
    for w in 0..rec.times.len() - 1 {
        let (t0, t1) = (rec.times[w], rec.times[w + 1]);
        let dt = (t1 - t0) / steps_per_cell as f64;
        for s in 0..steps_per_cell {
            let t = t0 + s as f64 * dt;
            let k1 = deriv(t, &f);
            let k2 = deriv(t + dt / 2.0, &(&f + &k1 * C64::new(dt / 2.0, 0.0)));
            let k3 = deriv(t + dt / 2.0, &(&f + &k2 * C64::new(dt / 2.0, 0.0)));
            let k4 = deriv(t + dt, &(&f + &k3 * C64::new(dt, 0.0)));
            f += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
                * C64::new(dt / 6.0, 0.0);
        }
        for i in 0..3 {
            let n_rk4 = ((C64::new(0.0, 1.0) * f[(i, i)]).re - 1.0) / 2.0;
            worst = worst.max((n_rk4 - rec.paramagnon[w + 1][i]).abs());
        }
    }
    assert!(worst < 1e-6, "largest paramagnon difference {worst}");
}

#[test]
fn paramagnon_numbers_converge_with_tolerance() {
    let inst = generate_sk(6, 40).unwrap();
    let traj = integrate_meanfield(&inst, &linear_schedule(), 64.0, 1e-8).unwrap();
    let at = |tol: f64| {
        evolve_statistical_function(&inst, &traj, tol)
            .unwrap()
            .paramagnon
    };
    let reference = at(1e-12);
    let gap = |tol: f64| {
        at(tol)
            .iter()
            .flatten()
            .zip(reference.iter().flatten())
            .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            .fold(0.0, f64::max)
    };
    let (loose, tight) = (gap(1e-8), gap(1e-10));
    assert!(tight < loose, "{tight} vs {loose}");
    assert!(loose < 1e-4 && tight < 1e-6, "{loose}, {tight}");
}
