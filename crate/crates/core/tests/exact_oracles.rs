use geoanneal::exactsim::{
    gap_profile, instantaneous_spectrum, metric_tensor, metric_terms, MetricTerms, Simulator,
    StateVector, TrotterOrder, C64, REFINED_SPACING,
};
use geoanneal::instance::{diagonal_energies, generate_sk, IsingInstance};
use geoanneal::schedule::{linear_schedule, solve_geodesic, GeodesicParams, ScheduleFunction};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Dense `H(s) = -(1-s) sum X + s diag(E)` assembled independently.
fn dense_hamiltonian(energies: &[f64], n: usize, s: f64) -> DMatrix<f64> {
    let dim = energies.len();
    let mut h = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        h[(a, a)] = s * energies[a];
        for bit in 0..n {
            h[(a ^ (1 << bit), a)] -= 1.0 - s;
        }
    }
    h
}

/// Fixed-step RK4 for `i psi' = H(s(t/T)) psi` from the uniform superposition.
fn schroedinger(
    energies: &[f64],
    n: usize,
    sched: &ScheduleFunction,
    total_time: f64,
    steps: usize,
) -> Vec<C64> {
    let dim = energies.len();
    let apply = |t: f64, psi: &[C64]| -> Vec<C64> {
        let s = sched.s(t / total_time);
        (0..dim)
            .map(|a| {
                let mut acc = psi[a] * s * energies[a];
                for bit in 0..n {
                    acc -= psi[a ^ (1 << bit)] * (1.0 - s);
                }
                acc * C64::new(0.0, -1.0)
            })
            .collect()
    };
    let axpy = |y: &[C64], k: &[C64], c: f64| -> Vec<C64> {
        y.iter().zip(k).map(|(a, b)| a + b * c).collect()
    };
    let mut psi = vec![C64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
    let dt = total_time / steps as f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = apply(t, &psi);
        let k2 = apply(t + dt / 2.0, &axpy(&psi, &k1, dt / 2.0));
        let k3 = apply(t + dt / 2.0, &axpy(&psi, &k2, dt / 2.0));
        let k4 = apply(t + dt, &axpy(&psi, &k3, dt));
        for a in 0..dim {
            psi[a] += (k1[a] + k2[a] * 2.0 + k3[a] * 2.0 + k4[a]) * (dt / 6.0);
        }
    }
    psi
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn ground_state(energies: &[f64], n: usize, s: f64) -> DVector<f64> {
    let eig = dense_hamiltonian(energies, n, s).symmetric_eigen();
    let k = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    eig.eigenvectors.column(k).into_owned()
}

fn lowest_two(energies: &[f64], n: usize, s: f64) -> (f64, f64) {
    let mut ev: Vec<f64> = dense_hamiltonian(energies, n, s)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    (ev[0], ev[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn single_spin_metric_closed_form(h in prop_oneof![-2.0f64..-0.2, 0.2f64..2.0], s in 0.01f64..0.99) {
        let inst = IsingInstance::new(vec![h], vec![0.0], 0.0).unwrap();
        let g = metric_tensor(&inst, s).unwrap();
        let r2 = (1.0 - s).powi(2) + (s * h).powi(2);
        let d = 4.0 * r2 * r2;
        let expect = [[(s * h).powi(2) / d, -h * h * s * (1.0 - s) / d], [-h * h * s * (1.0 - s) / d, (h * (1.0 - s)).powi(2) / d]];
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((g[r][c] - expect[r][c]).abs() < 1e-10 * (1.0 + expect[r][c].abs()));
            }
        }
    }

    #[test]
    fn pullback_matches_ground_state_fidelity(n in 2usize..6, seed in any::<u64>(), s in 0.1f64..0.9) {
        let inst = generate_sk(n, seed).unwrap();
        let energies = diagonal_energies(&inst);
        let terms = metric_terms(&inst, s).unwrap();
        prop_assume!(terms.gap > 1e-2);
        let ds = 1e-4;
        let a = ground_state(&energies, n, s - ds);
        let b = ground_state(&energies, n, s + ds);
        let overlap = a.dot(&b).abs().min(1.0);
        // 1 - |<psi(s-ds)|psi(s+ds)>|^2 = g (2 ds)^2 + O(ds^4)
        let fidelity_metric = (1.0 - overlap * overlap) / (4.0 * ds * ds);
        let g = MetricTerms::pullback(&terms.total);
        prop_assert!((g - fidelity_metric).abs() < 1e-3 * (1.0 + g), "{} vs {}", g, fidelity_metric);
        prop_assert!(MetricTerms::pullback(&terms.first_excited) <= g * (1.0 + 1e-12));
    }

    #[test]
    fn trotter_evolution_is_unitary(n in 1usize..8, seed in any::<u64>(), t in 0.5f64..64.0, second in any::<bool>()) {
        let inst = if n == 1 { IsingInstance::new(vec![0.7], vec![0.0], 0.0).unwrap() } else { generate_sk(n, seed).unwrap() };
        let order = if second { TrotterOrder::Second } else { TrotterOrder::First };
        let sim = Simulator::new(&inst).unwrap();
        let state = sim.evolve(&linear_schedule(), t, 64, order).unwrap();
        prop_assert!((state.norm() - 1.0).abs() < 1e-12);
        let dist = sim.eigenstate_distribution(&state);
        let mass: f64 = dist.levels.iter().map(|l| l.mass).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        let p_opt: f64 = sim.optimal_indices().iter().map(|&k| state.probabilities()[k]).sum();
        prop_assert!((sim.success_probability(&state) - p_opt).abs() < 1e-14);
    }

    #[test]
    fn gap_profile_agrees_with_dense_scan(n in 2usize..5, seed in any::<u64>()) {
        let inst = generate_sk(n, seed).unwrap();
        let energies = diagonal_energies(&inst);
        let profile = gap_profile(&inst, 5).unwrap();
        for (&s, &g) in profile.s.iter().zip(&profile.gap) {
            let (e0, e1) = lowest_two(&energies, n, s);
            prop_assert!((g - (e1 - e0)).abs() < 1e-9);
        }
        let scan_min = (0..=4096)
            .map(|k| {
                let s = k as f64 / 4096.0;
                let (e0, e1) = lowest_two(&energies, n, s);
                e1 - e0
            })
            .fold(f64::INFINITY, f64::min);
        // refinement stops at a 2^-10 bracket, which bounds the excess quadratically
        prop_assert!(profile.gap_min <= scan_min + 1e-5);
        let (e0, e1) = lowest_two(&energies, n, profile.s_star);
        prop_assert!((e1 - e0 - profile.gap_min).abs() < 1e-9);
    }
}

#[test]
fn small_systems_match_schroedinger_integration() {
    let cases = [
        (
            IsingInstance::new(vec![0.9], vec![0.0], 0.0).unwrap(),
            linear_schedule(),
        ),
        (generate_sk(2, 5).unwrap(), linear_schedule()),
        (
            generate_sk(3, 9).unwrap(),
            solve_geodesic(&GeodesicParams::centered(0.45)).unwrap(),
        ),
        (generate_sk(3, 12).unwrap(), linear_schedule()),
    ];
    for (inst, sched) in cases {
        let n = inst.n_spins();
        let energies = diagonal_energies(&inst);
        let total_time = 10.0;
        let exact = schroedinger(&energies, n, &sched, total_time, 40_000);
        let sim = Simulator::new(&inst).unwrap();
        let state = sim
            .evolve(&sched, total_time, 2560, TrotterOrder::Second)
            .unwrap();
        let err = distance(state.amplitudes(), &exact);
        assert!(err < 1e-4, "n = {n}, schedule {}: {err}", sched.id);
    }
}

#[test]
fn trotter_errors_follow_their_order() {
    let inst = generate_sk(5, 77).unwrap();
    let sim = Simulator::new(&inst).unwrap();
    let sched = linear_schedule();
    let total_time = 16.0;
    for (order, expected) in [(TrotterOrder::First, 1.0), (TrotterOrder::Second, 2.0)] {
        let reference = sim.evolve(&sched, total_time, 16 * 1024, order).unwrap();
        let errors: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&per_unit| {
                sim.evolve(&sched, total_time, 16 * per_unit, order)
                    .unwrap()
                    .distance(&reference)
            })
            .collect();
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - expected).abs() < 0.3, "{order:?}: slope {slope}");
        }
    }
}

#[test]
fn refined_bottleneck_sits_on_the_fine_grid_minimum() {
    let inst = generate_sk(4, 31).unwrap();
    let profile = gap_profile(&inst, 5).unwrap();
    let energies = diagonal_energies(&inst);
    let gap_at = |s: f64| {
        let (e0, e1) = lowest_two(&energies, 4, s);
        e1 - e0
    };
    let at_star = gap_at(profile.s_star);
    for j in 1..=2 {
        let d = j as f64 * REFINED_SPACING;
        assert!(at_star <= gap_at((profile.s_star - d).max(0.0)) + 1e-12);
        assert!(at_star <= gap_at((profile.s_star + d).min(1.0)) + 1e-12);
    }
}

#[test]
fn plus_state_is_the_driver_ground_state() {
    let inst = generate_sk(4, 2).unwrap();
    let spec = instantaneous_spectrum(&inst, 0.0, true).unwrap();
    assert!((spec.eigenvalues[0] + 4.0).abs() < 1e-12);
    let plus = StateVector::plus(4).unwrap();
    let v = spec.eigenvectors.unwrap();
    let overlap: f64 = v
        .column(0)
        .iter()
        .zip(plus.amplitudes())
        .map(|(a, b)| a * b.re)
        .sum();
    assert!((overlap.abs() - 1.0).abs() < 1e-12);
}
