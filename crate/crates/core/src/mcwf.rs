//! Quantum-jump unraveling of the master equation.
//!
//! Each trajectory evolves under `H~ = H(t) - (i/2)(gamma/N) V^dag V` without
//! renormalization. When `<psi|psi>` falls to a random threshold drawn
//! uniformly from `(0, 1]`, the state jumps to `V psi / |V psi|` and a fresh
//! threshold is drawn. Averaging `|psi><psi| / <psi|psi>` over trajectories
//! reproduces the Lindblad solution.

use std::io::Write;

use ndarray::Array2;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::Banded;
use crate::error::{Error, Result};
use crate::lindblad::{steps_per_period, DensityMatrix, Generator, IntegratorConfig};
use crate::model::{hamiltonian_at, DimerOperators, ModelParams};
use crate::rk4::Rk4;
use crate::scalar::{cr, Real, C};

/// Trajectories are reduced in fixed blocks of this size, so the reduction
/// order never depends on the number of worker threads.
const REDUCTION_BLOCK: usize = 16;

/// Random stream of trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on `(0, 1]`.
fn draw_threshold<T: Real>(rng: &mut ChaCha8Rng) -> T {
    T::lit(1.0 - rng.random::<f64>())
}

/// Unnormalized wave function of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryState<T: Real> {
    pub psi: Vec<C<T>>,
    pub time: T,
    /// `<psi|psi>` as of the last step.
    pub norm_sq: T,
    /// Norm level that triggers the next jump.
    pub threshold: T,
    /// Stream index the generator was derived from.
    pub stream: u64,
    pub jumps: u64,
    rng: ChaCha8Rng,
}

impl<T: Real> TrajectoryState<T> {
    /// Starts from `psi0` (normalized here) and draws the first threshold.
    pub fn new(psi0: &[C<T>], time: T, seed: u64, stream: u64) -> Result<Self> {
        let norm_sq = norm_sqr(psi0);
        if !(norm_sq > T::zero()) || !norm_sq.is_finite() {
            return Err(Error::InvalidParameter("initial wave function has zero norm".into()));
        }
        let scale = norm_sq.sqrt().recip();
        let mut rng = trajectory_rng(seed, stream);
        let threshold = draw_threshold(&mut rng);
        Ok(Self {
            psi: psi0.iter().map(|&c| c * scale).collect(),
            time,
            norm_sq: T::one(),
            threshold,
            stream,
            jumps: 0,
            rng,
        })
    }

    /// `psi / |psi|`.
    pub fn normalized(&self) -> Vec<C<T>> {
        let s = norm_sqr(&self.psi).sqrt().recip();
        self.psi.iter().map(|&c| c * s).collect()
    }

    /// `<psi|A|psi> / <psi|psi>` for a banded `A`.
    pub fn expectation(&self, op: &Banded<T>) -> C<T> {
        expectation(op, &self.psi)
    }
}

/// `out[s + reach][i] = A[i, i + s]`, zero outside the matrix.
fn diagonals<T: Real>(a: &Banded<T>, reach: usize) -> Vec<Vec<C<T>>> {
    let d = a.dim();
    (0..=2 * reach)
        .map(|idx| {
            (0..d)
                .map(|i| {
                    let j = i as isize + idx as isize - reach as isize;
                    if j < 0 || j >= d as isize {
                        C::zero()
                    } else {
                        a.get(i, j as usize)
                    }
                })
                .collect()
        })
        .collect()
}

fn norm_sqr<T: Real>(psi: &[C<T>]) -> T {
    psi.iter().map(|c| c.norm_sqr()).sum()
}

fn expectation<T: Real>(op: &Banded<T>, psi: &[C<T>]) -> C<T> {
    let mut acc = C::<T>::zero();
    for (i, &bra) in psi.iter().enumerate() {
        let (first, row) = op.row(i);
        let ket = row
            .iter()
            .zip(&psi[first..first + row.len()])
            .fold(C::<T>::zero(), |a, (&m, &x)| a + m * x);
        acc += bra.conj() * ket;
    }
    acc / cr(norm_sqr(psi))
}

/// Stroboscopic observables of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    /// Period index.
    pub m: usize,
    /// Bosons on site 1.
    pub n: f64,
    /// Energy `<H(mT)>`.
    pub e: f64,
}

/// `H(t) - (i/2)(gamma/N) V^dag V`.
pub fn effective_hamiltonian<T: Real>(params: &ModelParams<T>, ops: &DimerOperators<T>, t: T) -> Result<Banded<T>> {
    let h = hamiltonian_at(params, ops, t)?;
    h.add_scaled(&ops.jump_dag_jump, C::new(T::zero(), -T::half() * params.dissipation_rate()))
}

/// Fixed-step integrator for trajectories of one parameter point.
#[derive(Debug, Clone)]
pub struct TrajectoryPropagator<T: Real> {
    params: ModelParams<T>,
    /// Diagonals of `-i (H_static - (i/2) r V^dag V)`:
    /// `generator[s + reach][i]` multiplies `psi[i + s]` in row `i`.
    generator: Vec<Vec<C<T>>>,
    reach: usize,
    hamiltonian: Banded<T>,
    imbalance: Vec<T>,
    site_one: Banded<T>,
    jump: Banded<T>,
    steps_per_period: u64,
    rk: Rk4<C<T>>,
    work: Vec<C<T>>,
}

impl<T: Real> TrajectoryPropagator<T> {
    pub fn new(params: &ModelParams<T>, ops: &DimerOperators<T>, config: &IntegratorConfig<T>) -> Result<Self> {
        let steps = steps_per_period(params, ops, config, Generator::Trajectory)?;
        Self::with_steps(params, ops, steps)
    }

    pub fn with_steps(params: &ModelParams<T>, ops: &DimerOperators<T>, steps_per_period: u64) -> Result<Self> {
        params.validate()?;
        let h0 = ops.static_hamiltonian(params)?;
        let h_eff = h0.add_scaled(&ops.jump_dag_jump, C::new(T::zero(), -T::half() * params.dissipation_rate()))?;
        let occupation: Vec<T> = (0..ops.dim).map(T::from_usize_lossy).collect();
        Ok(Self {
            params: *params,
            generator: diagonals(&h_eff.scale(C::new(T::zero(), -T::one())), 2),
            reach: 2,
            hamiltonian: h0,
            imbalance: (0..ops.dim).map(|n| ops.imbalance.get(n, n).re).collect(),
            site_one: Banded::diagonal(&occupation),
            jump: ops.jump.clone(),
            steps_per_period: steps_per_period.max(1),
            rk: Rk4::new(ops.dim),
            work: vec![C::zero(); ops.dim],
        })
    }

    pub fn steps_per_period(&self) -> u64 {
        self.steps_per_period
    }

    pub fn dt(&self) -> T {
        self.params.period / T::from_u64(self.steps_per_period).expect("steps representable")
    }

    /// `Re <H(t)>` on the current (unnormalized) state.
    fn mean_energy(&self, t: T, psi: &[C<T>]) -> T {
        let eps = self.params.modulation(t);
        let mut acc = T::zero();
        let mut norm = T::zero();
        for (i, &bra) in psi.iter().enumerate() {
            let (first, row) = self.hamiltonian.row(i);
            let ket = row
                .iter()
                .zip(&psi[first..first + row.len()])
                .fold(C::<T>::zero(), |a, (&m, &x)| a + m * x);
            acc += (bra.conj() * ket).re + eps * self.imbalance[i] * bra.norm_sqr();
            norm += bra.norm_sqr();
        }
        acc / norm
    }

    /// One RK4 step of length `dt` followed by the jump test. Returns whether
    /// a jump occurred.
    pub fn step(&mut self, state: &mut TrajectoryState<T>, dt: T) -> Result<bool> {
        let t = state.time;
        // Shifting by the mean energy only rotates the global phase, but it
        // keeps RK4 away from the edge of its stability region.
        let e_ref = self.mean_energy(t, &state.psi);
        let Self { params, generator, reach, imbalance, rk, .. } = self;
        let reach = *reach;
        let mut f = |s: T, y: &[C<T>], dy: &mut [C<T>]| {
            let eps = params.modulation(s);
            // -i (eps * imb_i - e_ref) on the diagonal
            for (((o, &x), &g), &imb) in dy.iter_mut().zip(y).zip(&generator[reach]).zip(imbalance.iter()) {
                *o = (g + C::new(T::zero(), e_ref - eps * imb)) * x;
            }
            let d = dy.len();
            for (idx, diag) in generator.iter().enumerate() {
                if idx == reach || reach.abs_diff(idx) >= d {
                    continue;
                }
                if idx > reach {
                    let k = idx - reach;
                    for ((o, &x), &g) in dy[..d - k].iter_mut().zip(&y[k..]).zip(&diag[..d - k]) {
                        *o += g * x;
                    }
                } else {
                    let k = reach - idx;
                    for ((o, &x), &g) in dy[k..].iter_mut().zip(&y[..d - k]).zip(&diag[k..]) {
                        *o += g * x;
                    }
                }
            }
        };
        rk.step(&mut f, t, dt, &mut state.psi);
        state.time = t + dt;
        state.norm_sq = norm_sqr(&state.psi);
        if !state.norm_sq.is_finite() {
            return Err(Error::NonFinite { time: state.time.as_f64() });
        }
        if state.norm_sq > state.threshold {
            return Ok(false);
        }
        self.jump.apply(&state.psi, &mut self.work);
        let vnorm = norm_sqr(&self.work);
        if !(vnorm > T::zero()) {
            return Err(Error::DarkStateJump { time: state.time.as_f64() });
        }
        let s = vnorm.sqrt().recip();
        for (p, &w) in state.psi.iter_mut().zip(&self.work) {
            *p = w * s;
        }
        state.norm_sq = T::one();
        state.threshold = draw_threshold(&mut state.rng);
        state.jumps += 1;
        Ok(true)
    }

    /// Advances to `t_final` on the step grid anchored at the state's time.
    pub fn advance(&mut self, state: &mut TrajectoryState<T>, t_final: T) -> Result<()> {
        let grid = crate::lindblad::step_grid(state.time, t_final, self.dt())?;
        let t0 = state.time;
        for i in 0..grid.steps {
            state.time = t0 + grid.dt * T::from_u64(i).expect("steps representable");
            self.step(state, grid.dt)?;
        }
        state.time = t_final;
        Ok(())
    }

    /// Observables of the normalized state at period `m`.
    pub fn observe(&self, state: &TrajectoryState<T>, m: usize) -> ObservableRecord {
        let t = self.params.period * T::from_usize_lossy(m);
        ObservableRecord {
            m,
            n: state.expectation(&self.site_one).re.as_f64(),
            e: self.mean_energy(t, &state.psi).as_f64(),
        }
    }
}

/// Single RK4 step under `H~` plus jump test, building the propagator on the fly.
pub fn step_trajectory<T: Real>(
    state: &TrajectoryState<T>,
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    config: &IntegratorConfig<T>,
) -> Result<TrajectoryState<T>> {
    let mut prop = TrajectoryPropagator::new(params, ops, config)?;
    let mut next = state.clone();
    let dt = prop.dt();
    prop.step(&mut next, dt)?;
    Ok(next)
}

/// Ensemble settings; times are in whole periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct EnsembleConfig<T> {
    pub trajectories: usize,
    pub relax_periods: usize,
    pub measure_periods: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig<T>,
    /// Also average `|psi><psi|` over every recorded period of every trajectory.
    pub stroboscopic_average: bool,
}

/// Output of [`run_ensemble`], ordered by trajectory index.
#[derive(Debug, Clone)]
pub struct EnsembleResult<T: Real> {
    pub records: Vec<Vec<ObservableRecord>>,
    pub jumps: Vec<u64>,
    /// `(1/M) sum_j |psi_j><psi_j|` at the final time.
    pub rho_final: DensityMatrix<T>,
    /// Pooled stroboscopic average over the measurement window.
    pub rho_stroboscopic: Option<DensityMatrix<T>>,
    pub steps_per_period: u64,
}

struct TrajectoryOutcome<T: Real> {
    records: Vec<ObservableRecord>,
    jumps: u64,
    psi: Vec<C<T>>,
    strob: Option<Array2<C<T>>>,
}

fn accumulate_projector<T: Real>(acc: &mut Array2<C<T>>, psi: &[C<T>]) {
    for (i, &a) in psi.iter().enumerate() {
        let mut row = acc.row_mut(i);
        for (o, &b) in row.iter_mut().zip(psi) {
            *o += a * b.conj();
        }
    }
}

/// Runs `config.trajectories` independent trajectories from `psi0` in
/// parallel: `relax_periods` unrecorded, then one record per period boundary
/// of the measurement window (`m = relax + 1 ..= relax + measure`).
pub fn run_ensemble<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    psi0: &[C<T>],
    config: &EnsembleConfig<T>,
) -> Result<EnsembleResult<T>> {
    if config.trajectories == 0 {
        return Err(Error::InvalidParameter("at least one trajectory is required".into()));
    }
    if psi0.len() != ops.dim {
        return Err(Error::DimensionMismatch { expected: ops.dim, found: psi0.len() });
    }
    let template = TrajectoryPropagator::new(params, ops, &config.integrator)?;
    let d = ops.dim;
    let period = params.period;
    let run_one = |index: usize| -> Result<TrajectoryOutcome<T>> {
        let mut prop = template.clone();
        let mut state = TrajectoryState::new(psi0, T::zero(), config.seed, index as u64)?;
        prop.advance(&mut state, period * T::from_usize_lossy(config.relax_periods))?;
        let mut records = Vec::with_capacity(config.measure_periods);
        let mut strob = config.stroboscopic_average.then(|| Array2::zeros((d, d)));
        for k in 1..=config.measure_periods {
            let m = config.relax_periods + k;
            prop.advance(&mut state, period * T::from_usize_lossy(m))?;
            records.push(prop.observe(&state, m));
            if let Some(acc) = strob.as_mut() {
                accumulate_projector(acc, &state.normalized());
            }
        }
        Ok(TrajectoryOutcome { records, jumps: state.jumps, psi: state.normalized(), strob })
    };

    let mut records = Vec::with_capacity(config.trajectories);
    let mut jumps = Vec::with_capacity(config.trajectories);
    let mut rho = Array2::<C<T>>::zeros((d, d));
    let mut strob_sum = config.stroboscopic_average.then(|| Array2::<C<T>>::zeros((d, d)));
    let indices: Vec<usize> = (0..config.trajectories).collect();
    for block in indices.chunks(REDUCTION_BLOCK) {
        let outcomes: Vec<Result<TrajectoryOutcome<T>>> = block.par_iter().map(|&i| run_one(i)).collect();
        for out in outcomes {
            let out = out?;
            accumulate_projector(&mut rho, &out.psi);
            if let (Some(acc), Some(s)) = (strob_sum.as_mut(), out.strob.as_ref()) {
                *acc += s;
            }
            records.push(out.records);
            jumps.push(out.jumps);
        }
    }

    let t_final = period * T::from_usize_lossy(config.relax_periods + config.measure_periods);
    let inv = cr(T::from_usize_lossy(config.trajectories).recip());
    let rho_final = DensityMatrix::new(rho.mapv(|z| z * inv), t_final)?;
    let rho_stroboscopic = match strob_sum {
        Some(acc) if config.measure_periods > 0 => {
            let count = T::from_usize_lossy(config.trajectories * config.measure_periods);
            let inv = cr(count.recip());
            Some(DensityMatrix::new(acc.mapv(|z| z * inv), t_final)?)
        }
        _ => None,
    };
    Ok(EnsembleResult {
        records,
        jumps,
        rho_final,
        rho_stroboscopic,
        steps_per_period: template.steps_per_period(),
    })
}

/// Writes `traj_id,m,n,e` rows.
pub fn write_observables_csv<W: Write>(out: &mut W, records: &[Vec<ObservableRecord>]) -> Result<()> {
    writeln!(out, "traj_id,m,n,e")?;
    for (id, traj) in records.iter().enumerate() {
        for r in traj {
            writeln!(out, "{id},{},{},{}", r.m, r.n, r.e)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::symmetric_state;

    fn fock_top(n: usize) -> Vec<C<f64>> {
        let mut psi = vec![C::zero(); n + 1];
        psi[n] = cr(1.0);
        psi
    }

    #[test]
    fn effective_hamiltonian_reduces_to_h_without_dissipation() {
        let mut p = ModelParams::reference(0.1, 6);
        p.gamma = 0.0;
        let ops = DimerOperators::build(6).unwrap();
        let a = effective_hamiltonian(&p, &ops, 0.7).unwrap().to_dense();
        let b = hamiltonian_at(&p, &ops, 0.7).unwrap().to_dense();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() < 1e-15));
    }

    #[test]
    fn unitary_limit_never_jumps() {
        // RK4 is not norm-preserving; at the default step the loss is of
        // order 1e-7 per period for N = 8, so a finer step is used here.
        let mut p = ModelParams::reference(0.1, 8);
        p.gamma = 0.0;
        let ops = DimerOperators::build(8).unwrap();
        let mut prop = TrajectoryPropagator::with_steps(&p, &ops, 40_000).unwrap();
        let mut s = TrajectoryState::new(&fock_top(8), 0.0, 1, 0).unwrap();
        for m in 1..=3 {
            let before = s.norm_sq;
            prop.advance(&mut s, m as f64 * p.period).unwrap();
            assert!((s.norm_sq - before).abs() < 1e-10, "{}", s.norm_sq - before);
        }
        assert_eq!(s.jumps, 0);
    }

    #[test]
    fn dark_state_stays_dark() {
        let mut p = ModelParams::reference(0.0, 10);
        p.amplitude = 0.0;
        let ops = DimerOperators::build(10).unwrap();
        let mut prop = TrajectoryPropagator::new(&p, &ops, &IntegratorConfig::reference(p.period)).unwrap();
        let mut s = TrajectoryState::new(&symmetric_state::<f64>(10), 0.0, 3, 0).unwrap();
        prop.advance(&mut s, 2.0 * p.period).unwrap();
        assert_eq!(s.jumps, 0);
        assert!((s.norm_sq - 1.0).abs() < 1e-10);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = trajectory_rng(7, 3).random();
        let b: f64 = trajectory_rng(7, 3).random();
        let c: f64 = trajectory_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ensemble_is_deterministic() {
        let p = ModelParams::reference(0.1, 6);
        let ops = DimerOperators::build(6).unwrap();
        let cfg = EnsembleConfig {
            trajectories: 5,
            relax_periods: 2,
            measure_periods: 3,
            seed: 11,
            integrator: IntegratorConfig::reference(p.period),
            stroboscopic_average: true,
        };
        let a = run_ensemble(&p, &ops, &fock_top(6), &cfg).unwrap();
        let b = run_ensemble(&p, &ops, &fock_top(6), &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.rho_final, b.rho_final);
        assert_eq!(a.records[0].len(), 3);
        assert_eq!(a.records[0][0].m, 3);
        let tr = a.rho_stroboscopic.unwrap().trace();
        assert!((tr.re - 1.0).abs() < 1e-12);
    }
}
