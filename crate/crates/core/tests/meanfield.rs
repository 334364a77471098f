use proptest::prelude::*;
use qdimer::lindblad::IntegratorConfig;
use qdimer::meanfield::{
    bloch_rhs, find_fixed_point, multiplier_branch, spin_rhs, stroboscopic_map, wrap_angle, MeanFieldFlow,
    MeanFieldState, DEFAULT_INITIAL,
};
use qdimer::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

fn params(u: f64) -> ModelParams<f64> {
    ModelParams::<f64>::reference(u, 1)
}

/// `a - b` mapped into `[-pi, pi)`.
fn phase_gap(a: f64, b: f64) -> f64 {
    wrap_angle(a - b + PI) - PI
}

fn reference_fixed_point(u: f64) -> MeanFieldState<f64> {
    let p = params(0.05);
    let cfg = IntegratorConfig::reference(p.period);
    let x0 = MeanFieldState::new(DEFAULT_INITIAL.0, DEFAULT_INITIAL.1);
    let warm = stroboscopic_map(&p, &x0, &cfg, 1).unwrap()[0];
    let x = find_fixed_point(&p, &cfg, &warm).unwrap();
    if u == 0.05 {
        return x;
    }
    let grid: Vec<f64> = (0..=20).map(|k| 0.05 + (u - 0.05) * k as f64 / 20.0).collect();
    let last = multiplier_branch(&p, &cfg, &x, &grid).unwrap().pop().unwrap();
    MeanFieldState::new(last.theta, last.phi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn spin_length_conserved(theta in 0.2f64..2.9, phi in 0.0f64..TAU, u in 0.0f64..0.25) {
        let p = params(u);
        let mut flow = MeanFieldFlow::with_steps(&p, 4000);
        let mut s = MeanFieldState::new(theta, phi).to_spin();
        flow.advance_spin(&mut s, 0.0, 100).unwrap();
        prop_assert!((s.norm_sqr() - 0.25).abs() < 1e-8, "drift {}", s.norm_sqr() - 0.25);
    }
}

#[test]
fn bloch_and_spin_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for &u in &[0.05, 0.1125] {
        let p = params(u);
        for _ in 0..10 {
            let x = MeanFieldState::new(rng.random_range(0.3..PI - 0.3), rng.random_range(0.0..TAU));
            let t: f64 = rng.random_range(0.0..TAU);
            let (dth, dph) = bloch_rhs(&p, &x, t).unwrap();
            let d = spin_rhs(&p, &x.to_spin(), t);
            let (st, ct) = x.theta.sin_cos();
            let (sp, cp) = x.phi.sin_cos();
            let chain = [
                0.5 * (ct * cp * dth - st * sp * dph),
                0.5 * (ct * sp * dth + st * cp * dph),
                -0.5 * st * dth,
            ];
            for (a, b) in chain.iter().zip([d.sx, d.sy, d.sz]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bloch_and_spin_trajectories_agree() {
    let p = params(0.1125);
    let mut flow = MeanFieldFlow::with_steps(&p, 16_000);
    let mut x = MeanFieldState::new(1.7, 0.9);
    let mut s = x.to_spin();
    flow.advance_bloch(&mut x, 3).unwrap();
    flow.advance_spin(&mut s, 0.0, 3).unwrap();
    let back = MeanFieldState::from_spin(&s, x.time);
    assert!((back.theta - x.theta).abs() < 1e-9, "{} {}", back.theta - x.theta, phase_gap(back.phi, x.phi));
    assert!(phase_gap(back.phi, x.phi).abs() < 1e-9);
}

#[test]
fn bloch_rk4_order() {
    let p = params(0.1125);
    let run = |steps: u64| {
        let mut flow = MeanFieldFlow::with_steps(&p, steps);
        let mut x = MeanFieldState::new(1.9, 0.4);
        flow.advance_bloch(&mut x, 1).unwrap();
        x
    };
    let reference = run(32_000);
    let err = |x: MeanFieldState<f64>| (x.theta - reference.theta).hypot(x.phi - reference.phi);
    let ratio = err(run(250)) / err(run(500));
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn multipliers_vary_continuously() {
    let p = params(0.05);
    let cfg = IntegratorConfig::reference(p.period);
    let x = reference_fixed_point(0.05);
    let grid: Vec<f64> = (0..=24).map(|k| 0.05 + 0.0025 * k as f64).collect();
    let branch = multiplier_branch(&p, &cfg, &x, &grid).unwrap();
    for w in branch.windows(2) {
        let (a, b) = (w[0].multipliers[0], w[1].multipliers[0]);
        let jump = (a - b).norm().min((a - b.conj()).norm());
        assert!(jump < 0.05, "U={} jump {jump}", w[1].interaction);
        assert!((w[0].theta - w[1].theta).abs() < 0.05);
    }
    let pair = branch[0].multipliers;
    assert!((pair[0] - pair[1].conj()).norm() < 1e-8);
}

#[test]
fn rotation_near_torus_birth_matches_multiplier_argument() {
    let u = 0.108;
    let p = params(u);
    let cfg = IntegratorConfig { transient_periods: 0, ..IntegratorConfig::reference(p.period) };
    let xs = reference_fixed_point(u);
    let mu = qdimer::meanfield::ns_multipliers(&p, &cfg, &xs).unwrap()[0];
    let start = MeanFieldState::new(xs.theta + 1e-3, xs.phi);
    let iterates = stroboscopic_map(&p, &start, &cfg, 300).unwrap();
    let pts: Vec<f64> = iterates
        .iter()
        .map(|x| {
            (x.theta - xs.theta).atan2(phase_gap(x.phi, xs.phi))
        })
        .collect();
    let total: f64 = pts.windows(2).map(|w| (w[1] - w[0]).rem_euclid(TAU)).sum();
    let omega = total / ((pts.len() - 1) as f64 * TAU);
    let expected = mu.arg().abs() / TAU;
    let diff = (omega - expected).abs().min((1.0 - omega - expected).abs());
    assert!(diff < 0.05, "omega {omega} vs arg/2pi {expected}");
}

#[test]
fn pole_is_reported() {
    let p = params(0.1);
    let mut flow = MeanFieldFlow::new(&p, &IntegratorConfig::reference(p.period)).unwrap();
    let mut x = MeanFieldState::new(1e-7, 0.0);
    assert!(flow.advance_bloch(&mut x, 1).is_err());
}
