#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Array2<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn annihilator(cutoff: usize) -> Dense {
    let d = cutoff + 1;
    let mut a = Dense::zeros((d, d));
    for n in 1..d {
        a[[n - 1, n]] = c((n as f64).sqrt());
    }
    a
}

fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    Dense::from_shape_fn((ra * rb, ca * cb), |(i, j)| a[[i / rb, j / cb]] * b[[i % rb, j % cb]])
}

pub fn dagger(a: &Dense) -> Dense {
    a.t().mapv(|z| z.conj())
}

/// Two-mode operators built on the full tensor space and restricted to the
/// sector `n1 + n2 = N`, ordered by `n1 = 0..=N`.
pub struct TensorOracle {
    pub hop: Dense,
    pub imbalance: Dense,
    pub interaction: Dense,
    pub jump: Dense,
}

impl TensorOracle {
    pub fn new(particles: usize) -> Self {
        let d = particles + 1;
        let a = annihilator(particles);
        let id = Dense::eye(d);
        let b1 = kron(&a, &id);
        let b2 = kron(&id, &a);
        let (b1d, b2d) = (dagger(&b1), dagger(&b2));
        let n1 = b1d.dot(&b1);
        let n2 = b2d.dot(&b2);
        let full_id = Dense::eye(d * d);
        let hop = b1d.dot(&b2) + b2d.dot(&b1);
        let imbalance = &n2 - &n1;
        let interaction = n1.dot(&(&n1 - &full_id)) + n2.dot(&(&n2 - &full_id));
        let jump = (&b1d + &b2d).dot(&(&b1 - &b2));
        // |n1, n2> sits at n1 * d + n2
        let sector: Vec<usize> = (0..d).map(|n| n * d + (particles - n)).collect();
        let restrict = |m: &Dense| Dense::from_shape_fn((d, d), |(i, j)| m[[sector[i], sector[j]]]);
        Self {
            hop: restrict(&hop),
            imbalance: restrict(&imbalance),
            interaction: restrict(&interaction),
            jump: restrict(&jump),
        }
    }
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Random density matrix `G G^dag / tr`.
pub fn random_density(dim: usize, seed: u64) -> Dense {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Dense::from_shape_fn((dim, dim), |_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let rho = g.dot(&dagger(&g));
    let tr: Complex64 = rho.diag().iter().sum();
    rho.mapv(|z| z / tr)
}

/// Random normalized wave function.
pub fn random_state(dim: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// `exp(A)` for a general complex matrix by scaling and squaring with a
/// Taylor kernel.
pub fn expm(a: &Dense) -> Dense {
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let squarings = norm.max(1.0).log2().ceil() as u32 + 4;
    let scaled = a.mapv(|z| z / 2f64.powi(squarings as i32));
    let d = a.nrows();
    let mut term = Dense::eye(d);
    let mut sum = Dense::eye(d);
    for k in 1..=24 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}
