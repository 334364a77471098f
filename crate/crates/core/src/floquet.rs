//! One-period Floquet superoperator of the master equation and its spectrum.

use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{IntegratorConfig, LindbladPropagator};
use crate::linalg;
use crate::model::{DimerOperators, ModelParams};
use crate::scalar::{cr, Real, C};

/// Largest `N` accepted unless the cap is raised explicitly.
pub const DEFAULT_CAP: usize = 64;

/// How a `d x d` matrix is flattened into a vector of length `d^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vectorization {
    /// `vec[i + j d] = A[i, j]`.
    ColumnStacking,
    /// `vec[i d + j] = A[i, j]`.
    RowStacking,
}

impl Vectorization {
    #[inline]
    pub fn index(self, i: usize, j: usize, d: usize) -> usize {
        match self {
            Self::ColumnStacking => i + j * d,
            Self::RowStacking => i * d + j,
        }
    }

    pub fn vec<T: Real>(self, a: &Array2<C<T>>) -> Vec<C<T>> {
        let d = a.nrows();
        let mut v = vec![C::new(T::zero(), T::zero()); d * d];
        for ((i, j), &z) in a.indexed_iter() {
            v[self.index(i, j, d)] = z;
        }
        v
    }

    pub fn unvec<T: Real>(self, v: &[C<T>], d: usize) -> Array2<C<T>> {
        Array2::from_shape_fn((d, d), |(i, j)| v[self.index(i, j, d)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct FloquetConfig<T> {
    pub integrator: IntegratorConfig<T>,
    /// Largest admissible `N`.
    pub cap: usize,
}

impl<T: Real> FloquetConfig<T> {
    pub fn reference(period: T) -> Self {
        Self { integrator: IntegratorConfig::reference(period), cap: DEFAULT_CAP }
    }
}

/// Dense `d^2 x d^2` matrix of the period map.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetMap<T: Real> {
    pub dim: usize,
    pub convention: Vectorization,
    pub data: Array2<C<T>>,
}

impl<T: Real> FloquetMap<T> {
    /// `unvec(P vec(rho))`.
    pub fn apply(&self, rho: &Array2<C<T>>) -> Array2<C<T>> {
        let v = self.convention.vec(rho);
        let out: Vec<C<T>> = self
            .data
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&v).fold(C::new(T::zero(), T::zero()), |a, (&p, &x)| a + p * x))
            .collect();
        self.convention.unvec(&out, self.dim)
    }

    /// Same map under the other flattening.
    pub fn reindexed(&self, convention: Vectorization) -> Self {
        let d = self.dim;
        let mut data = Array2::zeros((d * d, d * d));
        for i in 0..d {
            for j in 0..d {
                let row_new = convention.index(i, j, d);
                let row_old = self.convention.index(i, j, d);
                for k in 0..d {
                    for l in 0..d {
                        data[[row_new, convention.index(k, l, d)]] = self.data[[row_old, self.convention.index(k, l, d)]];
                    }
                }
            }
        }
        Self { dim: d, convention, data }
    }
}

/// Propagates every basis matrix `E_ij = |i><j|` over one period. Only
/// `i <= j` is integrated; the rest follow from `P(E_ji) = P(E_ij)^dag`,
/// which holds because the generator commutes with taking adjoints.
pub fn build_floquet_map<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    config: &FloquetConfig<T>,
    convention: Vectorization,
) -> Result<FloquetMap<T>> {
    if params.particles > config.cap {
        return Err(Error::MemoryCap { n: params.particles, cap: config.cap });
    }
    let template = LindbladPropagator::new(params, ops, &config.integrator)?;
    let d = ops.dim;
    let period = params.period;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let images: Vec<Result<Vec<C<T>>>> = pairs
        .par_iter()
        .map_init(
            || template.clone(),
            |prop, &(i, j)| {
                let mut m = vec![C::new(T::zero(), T::zero()); d * d];
                m[i * d + j] = cr(T::one());
                prop.advance(&mut m, T::zero(), period, false)?;
                Ok(m)
            },
        )
        .collect();
    let mut data = Array2::zeros((d * d, d * d));
    for (&(i, j), img) in pairs.iter().zip(images) {
        let img = img?;
        let col = convention.index(i, j, d);
        let col_t = convention.index(j, i, d);
        for a in 0..d {
            for b in 0..d {
                let z = img[a * d + b];
                data[[convention.index(a, b, d), col]] = z;
                if i != j {
                    data[[convention.index(b, a, d), col_t]] = z.conj();
                }
            }
        }
    }
    Ok(FloquetMap { dim: d, convention, data })
}

/// Eigenvalues of a Floquet map, largest modulus first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetSpectrum {
    pub eigenvalues: Vec<Complex64>,
    /// `1 - |mu_2|`.
    pub gap: f64,
    /// `arg mu_2` in `[0, 2 pi)`; `mu_2` is the member of the slow pair with
    /// non-negative imaginary part.
    pub slow_pair_phase: f64,
    /// Largest distance from an eigenvalue to the nearest conjugate of another.
    pub pairing_error: f64,
}

impl FloquetSpectrum {
    pub fn mu(&self, k: usize) -> Complex64 {
        self.eigenvalues[k]
    }

    /// `(1 - |mu_2|)^{-1}`, in periods.
    pub fn relaxation_periods(&self) -> f64 {
        1.0 / self.gap
    }
}

/// Moduli within this relative distance are treated as one level when
/// ordering, so conjugate pairs stay adjacent with the upper member first.
const MODULUS_TIE: f64 = 1e-10;

fn sort_spectrum(w: &mut [Complex64]) {
    w.sort_by(|a, b| {
        let (ma, mb) = (a.norm(), b.norm());
        if (ma - mb).abs() <= MODULUS_TIE * ma.max(mb) {
            b.im.total_cmp(&a.im)
        } else {
            mb.total_cmp(&ma)
        }
    });
}

fn spectrum_from(mut w: Vec<Complex64>) -> Result<FloquetSpectrum> {
    if w.is_empty() {
        return Err(Error::EmptyInput("floquet map"));
    }
    sort_spectrum(&mut w);
    let pairing_error = w
        .iter()
        .map(|z| w.iter().map(|y| (y.conj() - z).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let (gap, phase) = if w.len() > 1 {
        let mu2 = w[1];
        let phase = if mu2.im.abs() <= MODULUS_TIE * mu2.norm() {
            if mu2.re < 0.0 {
                std::f64::consts::PI
            } else {
                0.0
            }
        } else {
            mu2.arg().rem_euclid(std::f64::consts::TAU)
        };
        (1.0 - mu2.norm(), phase)
    } else {
        (1.0, 0.0)
    };
    Ok(FloquetSpectrum { eigenvalues: w, gap, slow_pair_phase: phase, pairing_error })
}

/// Full dense eigendecomposition of the map.
pub fn floquet_spectrum<T: Real>(map: &FloquetMap<T>) -> Result<FloquetSpectrum> {
    spectrum_from(linalg::eigenvalues(linalg::to_c64(&map.data))?)
}

/// Eigenmatrix of the eigenvalue closest to 1, scaled to unit trace.
pub fn asymptotic_state<T: Real>(map: &FloquetMap<T>) -> Result<Array2<Complex64>> {
    let (w, v) = linalg::eigenpairs(&linalg::to_c64(&map.data))?;
    let k = (0..w.len())
        .min_by(|&a, &b| (w[a] - 1.0).norm().total_cmp(&(w[b] - 1.0).norm()))
        .ok_or(Error::EmptyInput("floquet map"))?;
    let col: Vec<Complex64> = v.column(k).to_vec();
    let m = map.convention.unvec(&col, map.dim);
    let tr: Complex64 = m.diag().iter().sum();
    Ok(m.mapv(|z| z / tr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub particles: usize,
    pub interaction: f64,
    pub gap: f64,
    pub phase: f64,
    /// `(1 - |mu_2|)^{-1}` in periods.
    pub t_relax_estimate: f64,
}

/// Spectrum summary for each `N` at fixed `U`.
pub fn gap_vs_n<T: Real>(params: &ModelParams<T>, n_list: &[usize], config: &FloquetConfig<T>) -> Result<Vec<GapRow>> {
    if n_list.is_empty() {
        return Err(Error::EmptyInput("particle-number list"));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n > config.cap) {
        return Err(Error::MemoryCap { n, cap: config.cap });
    }
    n_list
        .iter()
        .map(|&n| {
            let p = params.with_particles(n);
            let ops = DimerOperators::build(n)?;
            let map = build_floquet_map(&p, &ops, config, Vectorization::ColumnStacking)?;
            let s = floquet_spectrum(&map)?;
            Ok(GapRow {
                particles: n,
                interaction: params.interaction.as_f64(),
                gap: s.gap,
                phase: s.slow_pair_phase,
                t_relax_estimate: s.relaxation_periods(),
            })
        })
        .collect()
}

/// Writes `k,re_mu,im_mu,modulus` rows, `k` counting from 1.
pub fn write_spectrum_csv<W: Write>(out: &mut W, spectrum: &FloquetSpectrum) -> Result<()> {
    writeln!(out, "k,re_mu,im_mu,modulus")?;
    for (k, z) in spectrum.eigenvalues.iter().enumerate() {
        writeln!(out, "{},{},{},{}", k + 1, z.re, z.im, z.norm())?;
    }
    Ok(())
}

/// Writes `N,U,gap,phase,t_relax_estimate` rows.
pub fn write_gap_csv<W: Write>(out: &mut W, rows: &[GapRow]) -> Result<()> {
    writeln!(out, "N,U,gap,phase,t_relax_estimate")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.particles, r.interaction, r.gap, r.phase, r.t_relax_estimate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::DensityMatrix;

    #[test]
    fn vectorization_round_trip() {
        let a = Array2::from_shape_fn((3, 3), |(i, j)| C::new(i as f64, j as f64));
        for conv in [Vectorization::ColumnStacking, Vectorization::RowStacking] {
            assert_eq!(conv.unvec(&conv.vec(&a), 3), a);
        }
        assert_eq!(Vectorization::ColumnStacking.vec(&a)[1], a[[1, 0]]);
    }

    #[test]
    fn cap_is_enforced() {
        let p = ModelParams::<f64>::reference(0.1, 70);
        let ops = DimerOperators::build(70).unwrap();
        let cfg = FloquetConfig::reference(p.period);
        assert!(matches!(
            build_floquet_map(&p, &ops, &cfg, Vectorization::ColumnStacking),
            Err(Error::MemoryCap { n: 70, cap: 64 })
        ));
    }

    #[test]
    fn small_map_properties() {
        let p = ModelParams::<f64>::reference(0.1, 3);
        let ops = DimerOperators::build(3).unwrap();
        let cfg = FloquetConfig::reference(p.period);
        let map = build_floquet_map(&p, &ops, &cfg, Vectorization::ColumnStacking).unwrap();
        let s = floquet_spectrum(&map).unwrap();
        assert!((s.mu(0) - 1.0).norm() < 1e-8);
        assert!(s.eigenvalues.iter().all(|z| z.norm() <= 1.0 + 1e-8));
        assert!(s.pairing_error < 1e-8);
        let rho = DensityMatrix::<f64>::fock(4, 1);
        let out = map.apply(&rho.data);
        let tr: C<f64> = out.diag().iter().sum();
        assert!((tr - 1.0).norm() < 1e-9);
    }

    #[test]
    fn ordering_puts_upper_pair_member_first() {
        let mut w = vec![
            Complex64::new(0.1, 0.0),
            Complex64::new(0.5, -0.5),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.5),
        ];
        sort_spectrum(&mut w);
        assert_eq!(w[0], Complex64::new(1.0, 0.0));
        assert_eq!(w[1], Complex64::new(0.5, 0.5));
        assert_eq!(w[2], Complex64::new(0.5, -0.5));
    }
}
