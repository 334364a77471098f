mod common;

use common::{max_abs_diff, random_density, Dense};
use proptest::prelude::*;
use qdimer::analysis::{
    bagel_diameter, bagel_diameter_slice, coherent_state, count_lobes, find_peaks, husimi, normalized_histogram,
    rotation_numbers, rotation_numbers_pooled, GridSpec, RotationFrame,
};
use qdimer::lindblad::DensityMatrix;
use qdimer::mcwf::ObservableRecord;
use std::f64::consts::{PI, TAU};

fn quadrature_weight(spec: &GridSpec, particles: usize, theta: f64) -> f64 {
    let dth = PI / spec.theta_points as f64;
    let dph = TAU / spec.phi_points as f64;
    (particles + 1) as f64 / (4.0 * PI) * theta.sin() * dth * dph
}

proptest! {
    #[test]
    fn coherent_states_are_normalized(n in 1usize..=500, theta in 0.0f64..PI, phi in 0.0f64..TAU) {
        let c = coherent_state::<f64>(n, theta, phi);
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");
    }

    #[test]
    fn rotation_numbers_are_affine_invariant(
        a in 0.1f64..10.0, b in -5.0f64..5.0, c in 0.1f64..10.0, d in -5.0f64..5.0, w in 0.05f64..0.95,
    ) {
        let base: Vec<ObservableRecord> = (0..60)
            .map(|m| {
                let ang = TAU * w * m as f64;
                ObservableRecord { m, n: 3.0 + ang.cos(), e: -1.0 + 0.5 * ang.sin() }
            })
            .collect();
        let moved: Vec<ObservableRecord> = base
            .iter()
            .map(|r| ObservableRecord { m: r.m, n: a * r.n + b, e: c * r.e + d })
            .collect();
        let x = rotation_numbers(&base).unwrap();
        let y = rotation_numbers(&moved).unwrap();
        for (p, q) in x.omegas().iter().zip(y.omegas()) {
            let diff = (p - q).abs();
            prop_assert!(diff.min(1.0 - diff) < 1e-9);
        }
    }

    #[test]
    fn bagel_measure_is_reflection_symmetric(c1 in 0.3f64..1.4, c2 in 1.7f64..2.8, h in 0.2f64..1.0) {
        let spec = GridSpec { theta_points: 301, phi_points: 4 };
        let theta = spec.thetas();
        let bump = |x: f64, c: f64| (-((x - c) / 0.15).powi(2)).exp();
        let values: Vec<f64> = theta.iter().map(|&x| bump(x, c1) * h + bump(x, c2)).collect();
        let mirrored: Vec<f64> = values.iter().rev().copied().collect();
        let a = bagel_diameter_slice(&theta, &values).unwrap();
        let b = bagel_diameter_slice(&theta, &mirrored).unwrap();
        prop_assert!((a.diameter - b.diameter).abs() < 1e-12);
        prop_assert!((a.diameter - (c2 - c1)).abs() < 0.03);
    }
}

#[test]
fn coherent_states_resolve_identity() {
    let spec = GridSpec { theta_points: 400, phi_points: 400 };
    for n in 1..=8 {
        let mut acc = Dense::zeros((n + 1, n + 1));
        for th in spec.thetas() {
            let w = quadrature_weight(&spec, n, th);
            for ph in spec.phis() {
                let c = coherent_state::<f64>(n, th, ph);
                for i in 0..=n {
                    for j in 0..=n {
                        acc[[i, j]] += c[i] * c[j].conj() * w;
                    }
                }
            }
        }
        let err = max_abs_diff(&acc, &Dense::eye(n + 1));
        assert!(err < 1e-4, "N={n} error {err}");
    }
}

#[test]
fn husimi_integrates_to_trace() {
    let spec = GridSpec { theta_points: 400, phi_points: 400 };
    for n in [1, 4, 8] {
        let rho = DensityMatrix::new(random_density(n + 1, n as u64), 0.0).unwrap();
        let grid = husimi(&rho, &spec).unwrap();
        assert!(grid.min_raw > -1e-12);
        let total: f64 = grid
            .theta
            .iter()
            .enumerate()
            .map(|(i, &th)| grid.values.row(i).sum() * grid.peak * quadrature_weight(&spec, n, th))
            .sum();
        assert!((total - 1.0).abs() < 1e-4, "N={n} total {total}");
        assert!(grid.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn coherent_state_husimi_peaks_at_its_angles() {
    let n = 40;
    let (th0, ph0) = (1.2, PI / 2.0);
    let psi = coherent_state::<f64>(n, th0, ph0);
    let rho = DensityMatrix::pure(&psi, 0.0);
    let grid = husimi(&rho, &GridSpec::default()).unwrap();
    let (mut best, mut at) = (0.0, (0, 0));
    for ((i, j), &v) in grid.values.indexed_iter() {
        if v > best {
            best = v;
            at = (i, j);
        }
    }
    assert!((grid.theta[at.0] - th0).abs() < 0.02);
    assert_eq!(at.1, grid.spec.quarter_column());
    assert!((grid.peak - 1.0).abs() < 1e-3);
    assert!(bagel_diameter(&grid).unwrap().is_unimodal);
}

#[test]
fn ring_state_has_positive_diameter() {
    let n = 60;
    let a = coherent_state::<f64>(n, 1.0, PI / 2.0);
    let b = coherent_state::<f64>(n, 2.2, PI / 2.0);
    let mut rho = Dense::zeros((n + 1, n + 1));
    for i in 0..=n {
        for j in 0..=n {
            rho[[i, j]] = 0.5 * (a[i] * a[j].conj() + b[i] * b[j].conj());
        }
    }
    let grid = husimi(&DensityMatrix::new(rho, 0.0).unwrap(), &GridSpec::default()).unwrap();
    let d = bagel_diameter(&grid).unwrap();
    assert!(!d.is_unimodal);
    assert!((d.diameter - 1.2).abs() < 0.05, "D = {}", d.diameter);
}

#[test]
fn invalid_grid_rejected() {
    let rho = DensityMatrix::<f64>::fock(3, 0);
    assert!(husimi(&rho, &GridSpec { theta_points: 0, phi_points: 8 }).is_err());
    assert!(husimi(&rho, &GridSpec { theta_points: 10, phi_points: 10 }).is_err());
}

#[test]
fn histogram_is_max_normalized() {
    let h = normalized_histogram(&[0.1, 0.1, 0.5, 0.9, 1.0, 2.0], 10, 0.0, 1.0);
    assert_eq!(h.len(), 10);
    assert_eq!(h[1], 1.0);
    assert_eq!(h[9], 1.0);
    assert_eq!(h[5], 0.5);
}

#[test]
fn plateau_peak_found_once() {
    let y = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0, 3.0, 0.0];
    let peaks = find_peaks(&y);
    assert_eq!(peaks.len(), 2);
    assert_eq!(peaks[0].index, 3);
    assert_eq!(peaks[1].prominence, 3.0);
}

#[test]
fn five_point_cycle_has_five_lobes_and_rotation_two_fifths() {
    let trajectories: Vec<Vec<ObservableRecord>> = (0..4)
        .map(|k| {
            (0..100)
                .map(|m| {
                    let ang = TAU * (0.4 * m as f64 + 0.013 * k as f64) + 0.01 * (m as f64 * 1.7).sin();
                    ObservableRecord { m, n: 10.0 + 2.0 * ang.cos(), e: 5.0 + ang.sin() }
                })
                .collect()
        })
        .collect();
    let r = rotation_numbers_pooled(&trajectories).unwrap();
    assert!((r.mean_omega - 0.4).abs() < 0.01);
    let pts: Vec<(f64, f64)> = trajectories.iter().flatten().map(|x| (x.n, x.e)).collect();
    let frame = RotationFrame::fit(&pts).unwrap();
    assert_eq!(count_lobes(&frame, &pts, 72, 0.2), 5);
}

#[test]
fn degenerate_cloud_rejected() {
    let recs: Vec<ObservableRecord> = (0..5).map(|m| ObservableRecord { m, n: 1.0, e: m as f64 }).collect();
    assert!(rotation_numbers(&recs).is_err());
}
