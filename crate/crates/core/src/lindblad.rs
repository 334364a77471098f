//! Density-matrix propagation under the Lindblad master equation
//! `d rho/dt = -i[H(t), rho] + (gamma/N)(V rho V^dag - {V^dag V, rho}/2)`.

use std::io::{Read, Write};

use ndarray::Array2;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::band::Banded;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DimerOperators, ModelParams};
use crate::rk4::{Rk4, StepGrid};
use crate::scalar::{cr, Real, C};

/// RK4 stays stable on the imaginary axis up to `|z| = 2 sqrt 2`; step counts
/// are raised so that `dt * rho(L) <= STABILITY_LIMIT`.
pub const STABILITY_LIMIT: f64 = 2.5;

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct IntegratorConfig<T> {
    /// Requested time step; rounded so a period holds an integer step count.
    pub dt: T,
    /// Periods discarded before stroboscopic recording starts.
    pub transient_periods: usize,
}

impl<T: Real> IntegratorConfig<T> {
    /// `dt = 5e-4 T`, 100 transient periods.
    pub fn reference(period: T) -> Self {
        Self {
            dt: T::lit(5e-4) * period,
            transient_periods: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// `round(T / dt)`, at least one.
    pub fn requested_steps(&self, period: T) -> Result<u64> {
        self.validate()?;
        let ratio = (period / self.dt).round();
        let steps = ratio.to_u64().ok_or(Error::StepOverflow(ratio.as_f64()))?;
        Ok(steps.max(1))
    }
}

/// Which generator a step count has to keep stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// The Lindblad superoperator acting on `rho`.
    Lindblad,
    /// `-i (H~ - E_ref)` acting on a wave function whose mean energy is
    /// subtracted before each step.
    Trajectory,
}

/// Steps per period actually used: the requested count, raised if needed so
/// that RK4 remains stable for the given generator.
pub fn steps_per_period<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    config: &IntegratorConfig<T>,
    generator: Generator,
) -> Result<u64> {
    let requested = config.requested_steps(params.period)?;
    let floor = stability_floor(params, ops, generator);
    Ok(requested.max(floor))
}

/// Minimum steps per period for which every eigenvalue `z` of the generator
/// satisfies `|z| dt <= STABILITY_LIMIT`.
pub fn stability_floor<T: Real>(params: &ModelParams<T>, ops: &DimerOperators<T>, generator: Generator) -> u64 {
    let (_, radius, decay) = ops.spectral_bounds(params);
    let rate = params.dissipation_rate();
    let rho = match generator {
        Generator::Lindblad => T::two() * radius + T::two() * rate * decay,
        Generator::Trajectory => T::two() * radius + T::half() * rate * decay,
    };
    let steps = (params.period * rho / T::lit(STABILITY_LIMIT)).ceil();
    steps.to_u64().unwrap_or(u64::MAX).max(1)
}

/// `(N+1) x (N+1)` density matrix at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    pub data: Array2<C<T>>,
    pub time: T,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(data: Array2<C<T>>, time: T) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch { expected: data.nrows(), found: data.ncols() });
        }
        Ok(Self { data, time })
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &[C<T>], time: T) -> Self {
        let norm: T = psi.iter().map(|c| c.norm_sqr()).sum();
        let d = psi.len();
        let data = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj() / norm);
        Self { data, time }
    }

    /// Fock projector `|n><n|` in a `dim`-dimensional sector.
    pub fn fock(dim: usize, n: usize) -> Self {
        let mut data = Array2::zeros((dim, dim));
        data[[n, n]] = cr(T::one());
        Self { data, time: T::zero() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> C<T> {
        self.data.diag().iter().copied().fold(C::zero(), |a, b| a + b)
    }

    pub fn diagonal(&self) -> Vec<T> {
        self.data.diag().iter().map(|z| z.re).collect()
    }

    pub fn hermiticity_error(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.data[[i, j]] - self.data[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// `rho <- (rho + rho^dag) / 2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        symmetrize_in_place(self.data.as_slice_mut().expect("standard layout"), d);
    }

    pub fn purity(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let w = linalg::hermitian_eigenvalues(&self.data)?;
        Ok(w.first().copied().unwrap_or(0.0))
    }

    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        linalg::trace_distance(&self.data, &other.data)
    }
}

fn symmetrize_in_place<T: Real>(rho: &mut [C<T>], d: usize) {
    let half = T::half();
    for i in 0..d {
        rho[i * d + i].im = T::zero();
        for j in (i + 1)..d {
            let a = rho[i * d + j];
            let b = rho[j * d + i];
            let m = (a + b.conj()) * half;
            rho[i * d + j] = m;
            rho[j * d + i] = m.conj();
        }
    }
}

/// Banded pieces of the generator, written as
/// `L(rho) = K rho + rho K^dag + r V rho V^dag` with
/// `K(t) = -i H(t) - (r/2) V^dag V` and `r = gamma/N`.
///
/// Right products are stored diagonal by diagonal so each row of the output
/// is a handful of shifted elementwise multiply-adds.
#[derive(Debug, Clone)]
struct GeneratorBands<T: Real> {
    dim: usize,
    k_static: Banded<T>,
    /// `-i (imbalance)_n`, scaled by `eps(t)` on the diagonal of `K`.
    k_drive: Vec<C<T>>,
    /// `k_right[s + 2][j] = conj(K_static[j, j + s])`.
    k_right: Vec<Vec<C<T>>>,
    jump: Banded<T>,
    /// `v_right[s + 1][j] = r conj(V[j, j + s])`.
    v_right: Vec<Vec<C<T>>>,
    rate: T,
    params: ModelParams<T>,
}

fn right_diagonals<T: Real>(m: &Banded<T>, reach: usize, scale: T) -> Vec<Vec<C<T>>> {
    let d = m.dim();
    (0..=2 * reach)
        .map(|idx| {
            (0..d)
                .map(|j| {
                    let k = j as isize + idx as isize - reach as isize;
                    if k < 0 || k >= d as isize {
                        C::zero()
                    } else {
                        m.get(j, k as usize).conj() * scale
                    }
                })
                .collect()
        })
        .collect()
}

impl<T: Real> GeneratorBands<T> {
    fn new(params: &ModelParams<T>, ops: &DimerOperators<T>) -> Result<Self> {
        params.validate()?;
        let h0 = ops.static_hamiltonian(params)?;
        let rate = params.dissipation_rate();
        let k_static = h0
            .scale(C::new(T::zero(), -T::one()))
            .add_scaled(&ops.jump_dag_jump, cr(-rate * T::half()))?;
        Ok(Self {
            dim: ops.dim,
            k_right: right_diagonals(&k_static, 2, T::one()),
            k_static,
            k_drive: (0..ops.dim).map(|n| C::new(T::zero(), -ops.imbalance.get(n, n).re)).collect(),
            v_right: right_diagonals(&ops.jump, 1, rate),
            jump: ops.jump.clone(),
            rate,
            params: *params,
        })
    }

    /// `out = L(t)(rho)`; `scratch` needs at least `dim` entries.
    fn apply(&self, t: T, rho: &[C<T>], out: &mut [C<T>], scratch: &mut [C<T>]) {
        let d = self.dim;
        let eps = self.params.modulation(t);
        let wrow = &mut scratch[..d];
        let dissipative = self.rate != T::zero();
        for i in 0..d {
            let dst = &mut out[i * d..(i + 1) * d];
            let own = &rho[i * d..(i + 1) * d];

            // K rho: row i mixes rows i-2..=i+2 of rho.
            let (first, krow) = self.k_static.row(i);
            let mut started = false;
            for (k, &a) in krow.iter().enumerate() {
                let r = first + k;
                let coef = if r == i { a + self.k_drive[i] * eps } else { a };
                let src = &rho[r * d..(r + 1) * d];
                if started {
                    for (o, &x) in dst.iter_mut().zip(src) {
                        *o += coef * x;
                    }
                } else {
                    for (o, &x) in dst.iter_mut().zip(src) {
                        *o = coef * x;
                    }
                    started = true;
                }
            }

            // rho K^dag, diagonal by diagonal.
            for (idx, diag) in self.k_right.iter().enumerate() {
                let s = idx as isize - 2;
                shifted_mul_acc(dst, own, diag, s);
            }
            // drive part of the diagonal of K^dag: +i eps imb_j
            for ((o, &x), &kd) in dst.iter_mut().zip(own).zip(&self.k_drive) {
                *o += x * (kd.conj() * eps);
            }

            if dissipative {
                // (V rho)_i, then times V^dag.
                let (first, vrow) = self.jump.row(i);
                wrow.iter_mut().for_each(|w| *w = C::zero());
                for (k, &a) in vrow.iter().enumerate() {
                    let r = first + k;
                    let src = &rho[r * d..(r + 1) * d];
                    for (w, &x) in wrow.iter_mut().zip(src) {
                        *w += a * x;
                    }
                }
                for (idx, diag) in self.v_right.iter().enumerate() {
                    let s = idx as isize - 1;
                    shifted_mul_acc(dst, wrow, diag, s);
                }
            }
        }
    }
}

/// `dst[j] += src[j + s] * coef[j]` wherever `j + s` is in range.
#[inline]
fn shifted_mul_acc<T: Real>(dst: &mut [C<T>], src: &[C<T>], coef: &[C<T>], s: isize) {
    let d = dst.len();
    let (lo, hi) = if s >= 0 { (0, d - s as usize) } else { ((-s) as usize, d) };
    if lo >= hi {
        return;
    }
    let src_lo = (lo as isize + s) as usize;
    let src = &src[src_lo..src_lo + (hi - lo)];
    for ((o, &x), &c) in dst[lo..hi].iter_mut().zip(src).zip(&coef[lo..hi]) {
        *o += x * c;
    }
}

/// Fixed-step RK4 propagator for the Lindblad equation of one parameter point.
#[derive(Debug, Clone)]
pub struct LindbladPropagator<T: Real> {
    bands: GeneratorBands<T>,
    steps_per_period: u64,
    rk: Rk4<C<T>>,
    scratch: Vec<C<T>>,
}

impl<T: Real> LindbladPropagator<T> {
    pub fn new(params: &ModelParams<T>, ops: &DimerOperators<T>, config: &IntegratorConfig<T>) -> Result<Self> {
        let steps = steps_per_period(params, ops, config, Generator::Lindblad)?;
        Self::with_steps(params, ops, steps)
    }

    /// Propagator with an explicit step count per period (no stability floor).
    pub fn with_steps(params: &ModelParams<T>, ops: &DimerOperators<T>, steps_per_period: u64) -> Result<Self> {
        let bands = GeneratorBands::new(params, ops)?;
        let d = bands.dim;
        Ok(Self {
            bands,
            steps_per_period: steps_per_period.max(1),
            rk: Rk4::new(d * d),
            scratch: vec![C::zero(); d],
        })
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.bands.params
    }

    pub fn steps_per_period(&self) -> u64 {
        self.steps_per_period
    }

    /// Effective step `T / steps_per_period`.
    pub fn dt(&self) -> T {
        self.bands.params.period / T::from_u64(self.steps_per_period).expect("steps representable")
    }

    /// Generator applied to a row-major `dim x dim` matrix.
    pub fn rhs(&mut self, t: T, rho: &[C<T>], out: &mut [C<T>]) {
        self.bands.apply(t, rho, out, &mut self.scratch);
    }

    /// Step grid from `t0` to `t1` using the configured step, shortened
    /// uniformly when the span is not a whole number of steps.
    pub fn grid(&self, t0: T, t1: T) -> Result<StepGrid<T>> {
        step_grid(t0, t1, self.dt())
    }

    /// Advances a row-major matrix in place. With `hermitian` set the state is
    /// re-symmetrized after every step.
    pub fn advance(&mut self, rho: &mut [C<T>], t0: T, t1: T, hermitian: bool) -> Result<()> {
        let grid = self.grid(t0, t1)?;
        let d = self.bands.dim;
        let Self { bands, rk, scratch, .. } = self;
        let mut f = |t: T, y: &[C<T>], dy: &mut [C<T>]| bands.apply(t, y, dy, scratch);
        for i in 0..grid.steps {
            rk.step(&mut f, grid.time(i), grid.dt, rho);
            if hermitian {
                symmetrize_in_place(rho, d);
            }
            let tr = (0..d).fold(C::<T>::zero(), |a, k| a + rho[k * d + k]);
            if !(tr.re.is_finite() && tr.im.is_finite()) {
                return Err(Error::NonFinite { time: grid.time(i + 1).as_f64() });
            }
        }
        Ok(())
    }

    /// Propagates a density matrix to `t_final`.
    pub fn evolve(&mut self, rho: &mut DensityMatrix<T>, t_final: T) -> Result<()> {
        check_state(rho, self.bands.dim)?;
        if t_final < rho.time {
            return Err(Error::InvalidParameter(format!(
                "t_final {} precedes state time {}",
                t_final, rho.time
            )));
        }
        let t0 = rho.time;
        self.advance(rho.data.as_slice_mut().expect("standard layout"), t0, t_final, true)?;
        rho.time = t_final;
        Ok(())
    }

    /// Discards `transient` periods, then returns `n_periods` snapshots taken
    /// one period apart.
    pub fn stroboscopic(&mut self, rho0: &DensityMatrix<T>, transient: usize, n_periods: usize) -> Result<Vec<DensityMatrix<T>>> {
        if n_periods == 0 {
            return Err(Error::InvalidParameter("n_periods must be at least 1".into()));
        }
        let period = self.bands.params.period;
        let mut rho = rho0.clone();
        let t_end = rho.time + period * T::from_usize_lossy(transient);
        self.evolve(&mut rho, t_end)?;
        let mut out = Vec::with_capacity(n_periods);
        for m in 1..=n_periods {
            let t = rho0.time + period * T::from_usize_lossy(transient + m);
            self.evolve(&mut rho, t)?;
            out.push(rho.clone());
        }
        Ok(out)
    }
}

pub(crate) fn step_grid<T: Real>(t0: T, t1: T, dt: T) -> Result<StepGrid<T>> {
    let span = t1 - t0;
    if span < T::zero() {
        return Err(Error::InvalidParameter("negative integration span".into()));
    }
    let ratio = span / dt;
    if !ratio.is_finite() || ratio.as_f64() > 1e15 {
        return Err(Error::StepOverflow(ratio.as_f64()));
    }
    let nearest = ratio.round();
    let steps = if (ratio - nearest).abs() <= T::lit(1e-6) * nearest.max(T::one()) {
        nearest
    } else {
        ratio.ceil()
    };
    let steps = steps.to_u64().ok_or(Error::StepOverflow(ratio.as_f64()))?;
    let dt = if steps == 0 { dt } else { span / T::from_u64(steps).expect("steps representable") };
    Ok(StepGrid { t0, dt, steps })
}

fn check_state<T: Real>(rho: &DensityMatrix<T>, dim: usize) -> Result<()> {
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: rho.dim() });
    }
    Ok(())
}

/// `-i[H(t), rho] + D(rho)` using the banded operators.
pub fn lindblad_rhs<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    rho: &DensityMatrix<T>,
    t: T,
) -> Result<Array2<C<T>>> {
    let bands = GeneratorBands::new(params, ops)?;
    check_state(rho, ops.dim)?;
    let d = ops.dim;
    let src = rho.data.as_standard_layout();
    let mut out = vec![C::zero(); d * d];
    let mut scratch = vec![C::zero(); d];
    bands.apply(t, src.as_slice().expect("standard layout"), &mut out, &mut scratch);
    Ok(Array2::from_shape_vec((d, d), out).expect("square"))
}

/// Same generator assembled from dense matrices; reference for the banded path.
pub fn lindblad_rhs_dense<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    rho: &DensityMatrix<T>,
    t: T,
) -> Result<Array2<C<T>>> {
    check_state(rho, ops.dim)?;
    let h = crate::model::hamiltonian_at(params, ops, t)?.to_dense();
    let v = ops.jump.to_dense();
    let vd = v.t().mapv(|z| z.conj());
    let vdv = vd.dot(&v);
    let r = &rho.data;
    let comm = h.dot(r) - r.dot(&h);
    let rate = cr(params.dissipation_rate());
    let half = cr(T::half());
    let diss = (v.dot(r).dot(&vd) - (vdv.dot(r) + r.dot(&vdv)).mapv(|z| z * half)).mapv(|z| z * rate);
    Ok(comm.mapv(|z| z * C::new(T::zero(), -T::one())) + diss)
}

/// Propagates `rho0` to `t_final` with the configured step.
pub fn evolve<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    rho0: &DensityMatrix<T>,
    config: &IntegratorConfig<T>,
    t_final: T,
) -> Result<DensityMatrix<T>> {
    let mut prop = LindbladPropagator::new(params, ops, config)?;
    let mut rho = rho0.clone();
    prop.evolve(&mut rho, t_final)?;
    Ok(rho)
}

/// Snapshots `rho(mT)` for `m = 1..=n_periods` after `config.transient_periods`.
pub fn stroboscopic_run<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    rho0: &DensityMatrix<T>,
    config: &IntegratorConfig<T>,
    n_periods: usize,
) -> Result<Vec<DensityMatrix<T>>> {
    let mut prop = LindbladPropagator::new(params, ops, config)?;
    prop.stroboscopic(rho0, config.transient_periods, n_periods)
}

/// Appends `m,n,value` rows for the diagonal of each snapshot.
pub fn write_diagonal_csv<T: Real, W: Write>(out: &mut W, snapshots: &[(usize, &DensityMatrix<T>)], header: bool) -> Result<()> {
    if header {
        writeln!(out, "m,n,value")?;
    }
    for (m, rho) in snapshots {
        for (n, v) in rho.diagonal().iter().enumerate() {
            writeln!(out, "{m},{n},{v}")?;
        }
    }
    Ok(())
}

/// Binary dump: `dim` as little-endian `u64`, then `dim * dim` entries in
/// row-major order, each as little-endian `f64` real part then imaginary part.
pub fn write_binary<T: Real, W: Write>(out: &mut W, rho: &DensityMatrix<T>) -> Result<()> {
    out.write_all(&(rho.dim() as u64).to_le_bytes())?;
    for z in rho.data.iter() {
        out.write_all(&z.re.as_f64().to_le_bytes())?;
        out.write_all(&z.im.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(input: &mut R) -> Result<DensityMatrix<f64>> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let dim = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(dim * dim);
    for _ in 0..dim * dim {
        input.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        input.read_exact(&mut word)?;
        let im = f64::from_le_bytes(word);
        data.push(C::new(re, im));
    }
    DensityMatrix::new(Array2::from_shape_vec((dim, dim), data).expect("square"), 0.0)
}
