mod common;

use common::random_state;
use num_complex::Complex64;
use proptest::prelude::*;
use qdimer::lindblad::{evolve, DensityMatrix, IntegratorConfig};
use qdimer::linalg::unitary_propagator;
use qdimer::mcwf::{run_ensemble, trajectory_rng, EnsembleConfig, TrajectoryPropagator, TrajectoryState};
use qdimer::model::{hamiltonian_at, DimerOperators, ModelParams};
use rand::Rng;

fn ensemble(trajectories: usize, relax: usize, measure: usize, seed: u64) -> EnsembleConfig<f64> {
    EnsembleConfig {
        trajectories,
        relax_periods: relax,
        measure_periods: measure,
        seed,
        integrator: IntegratorConfig::reference(std::f64::consts::TAU),
        stroboscopic_average: true,
    }
}

fn fock(n: usize) -> Vec<Complex64> {
    let mut psi = vec![Complex64::new(0.0, 0.0); n + 1];
    psi[n] = Complex64::new(1.0, 0.0);
    psi
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn norm_decays_between_jumps(n in 1usize..=20, u in 0.0f64..0.2, seed in any::<u64>()) {
        let p = ModelParams::<f64>::reference(u, n);
        let ops = DimerOperators::build(n).unwrap();
        let mut prop = TrajectoryPropagator::new(&p, &ops, &IntegratorConfig::reference(p.period)).unwrap();
        let mut s = TrajectoryState::new(&random_state(n + 1, seed), 0.0, seed, 0).unwrap();
        let dt = prop.dt();
        let mut last = s.norm_sq;
        for _ in 0..2000 {
            let jumped = prop.step(&mut s, dt).unwrap();
            prop_assert!(s.norm_sq > 0.0 && s.norm_sq <= 1.0 + 1e-12);
            prop_assert!(s.threshold > 0.0 && s.threshold <= 1.0);
            if jumped {
                prop_assert!((s.norm_sq - 1.0).abs() < 1e-14);
            } else {
                prop_assert!(s.norm_sq <= last + 1e-12);
                prop_assert!(s.norm_sq > s.threshold);
            }
            last = s.norm_sq;
        }
    }
}

#[test]
fn unitary_limit_matches_exact_propagator() {
    let n = 6;
    let mut p = ModelParams::<f64>::reference(0.1, n);
    p.gamma = 0.0;
    p.amplitude = 0.0;
    let ops = DimerOperators::build(n).unwrap();
    let psi0 = random_state(n + 1, 17);
    let mut prop = TrajectoryPropagator::with_steps(&p, &ops, 4000).unwrap();
    let mut s = TrajectoryState::new(&psi0, 0.0, 1, 0).unwrap();
    prop.advance(&mut s, p.period).unwrap();
    assert_eq!(s.jumps, 0);
    let h = hamiltonian_at(&p, &ops, 0.0).unwrap().to_dense();
    let u = unitary_propagator(&h, p.period).unwrap();
    let exact = u.dot(&ndarray::Array1::from(psi0));
    let psi = s.normalized();
    let overlap: Complex64 = exact.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
    assert!(1.0 - overlap.norm_sqr() < 1e-10, "infidelity {}", 1.0 - overlap.norm_sqr());
}

#[test]
fn unitary_limit_conserves_norm() {
    let n = 8;
    let mut p = ModelParams::<f64>::reference(0.1125, n);
    p.gamma = 0.0;
    let ops = DimerOperators::build(n).unwrap();
    let mut prop = TrajectoryPropagator::with_steps(&p, &ops, 40_000).unwrap();
    let mut s = TrajectoryState::new(&fock(n), 0.0, 3, 0).unwrap();
    for k in 1..=3 {
        let before = s.norm_sq;
        prop.advance(&mut s, p.period * k as f64).unwrap();
        assert!((s.norm_sq - before).abs() < 1e-10, "period {k}: {}", s.norm_sq - before);
    }
    assert_eq!(s.jumps, 0);
}

#[test]
fn streams_are_independent_and_reproducible() {
    let w: f64 = trajectory_rng(7, 0).random();
    let x: f64 = trajectory_rng(7, 0).random();
    let y: f64 = trajectory_rng(7, 1).random();
    let z: f64 = trajectory_rng(8, 0).random();
    assert_eq!(w, x);
    assert!(x != y && x != z);
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let n = 10;
    let p = ModelParams::<f64>::reference(0.1125, n);
    let ops = DimerOperators::build(n).unwrap();
    let cfg = ensemble(40, 2, 3, 99);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_ensemble(&p, &ops, &fock(n), &cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.records, b.records);
    assert_eq!(a.jumps, b.jumps);
    assert_eq!(a.rho_final.data, b.rho_final.data);
    assert_eq!(a.rho_stroboscopic.unwrap().data, b.rho_stroboscopic.unwrap().data);
}

#[test]
fn records_cover_measurement_window() {
    let n = 5;
    let p = ModelParams::<f64>::reference(0.1, n);
    let ops = DimerOperators::build(n).unwrap();
    let r = run_ensemble(&p, &ops, &fock(n), &ensemble(3, 4, 6, 1)).unwrap();
    assert_eq!(r.records.len(), 3);
    for traj in &r.records {
        let ms: Vec<usize> = traj.iter().map(|x| x.m).collect();
        assert_eq!(ms, (5..=10).collect::<Vec<_>>());
        assert!(traj.iter().all(|x| (0.0..=n as f64).contains(&x.n)));
    }
    assert!((r.rho_final.trace() - 1.0).norm() < 1e-12);
}

#[test]
fn ensemble_average_approaches_master_equation() {
    let n = 4;
    let p = ModelParams::<f64>::reference(0.1, n);
    let ops = DimerOperators::build(n).unwrap();
    let cfg = ensemble(1600, 2, 0, 5);
    let r = run_ensemble(&p, &ops, &fock(n), &cfg).unwrap();
    let exact = evolve(&p, &ops, &DensityMatrix::fock(n + 1, n), &cfg.integrator, 2.0 * p.period).unwrap();
    let dist = r.rho_final.trace_distance(&exact).unwrap();
    assert!(dist < 0.05, "trace distance {dist}");
}

#[test]
fn empty_ensemble_rejected() {
    let p = ModelParams::<f64>::reference(0.1, 3);
    let ops = DimerOperators::build(3).unwrap();
    assert!(run_ensemble(&p, &ops, &fock(3), &ensemble(0, 1, 1, 0)).is_err());
    assert!(run_ensemble(&p, &ops, &fock(2), &ensemble(1, 1, 1, 0)).is_err());
}
