//! Classical mean-field dynamics of the dimer: the spin equations, their
//! Bloch-sphere form, the period-T stroboscopic map and its bifurcations.
//!
//! Spin components live on the sphere `|S| = 1/2` and relate to the Bloch
//! angles by `S = (sin th cos ph, sin th sin ph, cos th) / 2`, so the site-1
//! occupation fraction is `n/N = (1 + cos th)/2 = 1/2 + S_z`.
//!
//! The right-hand sides are the ones generated by the dimer Hamiltonian and
//! jump operator. The [`printed`] module keeps an alternative sign convention
//! for comparison; it does not conserve `S^2`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::normalized_histogram;
use crate::error::{Error, Result};
use crate::lindblad::IntegratorConfig;
use crate::model::ModelParams;
use crate::rk4::Rk4;
use crate::scalar::Real;

/// Minimum `sin th` tolerated along Bloch-angle trajectories.
pub const POLE_GUARD: f64 = 1e-6;

/// Finite-difference displacement used for Jacobians of the period map.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Default classical initial condition `(th, ph)`.
pub const DEFAULT_INITIAL: (f64, f64) = (2.0, 0.0);

/// Bins of `n/N` in bifurcation diagrams.
pub const DIAGRAM_BINS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState<T> {
    pub sx: T,
    pub sy: T,
    pub sz: T,
}

impl<T: Real> SpinState<T> {
    pub fn norm_sqr(&self) -> T {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    /// `n/N = 1/2 + S_z`.
    pub fn occupation(&self) -> T {
        T::half() + self.sz
    }

    fn to_array(self) -> [T; 3] {
        [self.sx, self.sy, self.sz]
    }

    fn from_slice(v: &[T]) -> Self {
        Self { sx: v[0], sy: v[1], sz: v[2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState<T> {
    pub theta: T,
    pub phi: T,
    pub time: T,
}

impl<T: Real> MeanFieldState<T> {
    pub fn new(theta: T, phi: T) -> Self {
        Self { theta, phi: wrap_angle(phi), time: T::zero() }
    }

    pub fn to_spin(&self) -> SpinState<T> {
        let h = T::half();
        let s = self.theta.sin();
        SpinState {
            sx: h * s * self.phi.cos(),
            sy: h * s * self.phi.sin(),
            sz: h * self.theta.cos(),
        }
    }

    /// Angles of a spin vector (its length is ignored).
    pub fn from_spin(s: &SpinState<T>, time: T) -> Self {
        let r = s.norm_sqr().sqrt();
        let c = (s.sz / r).max(-T::one()).min(T::one());
        Self { theta: c.acos(), phi: wrap_angle(s.sy.atan2(s.sx)), time }
    }

    /// `n/N = (1 + cos th)/2`.
    pub fn occupation(&self) -> T {
        (T::one() + self.theta.cos()) * T::half()
    }
}

/// Maps an angle into `[0, 2 pi)`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let w = a - T::TAU() * (a / T::TAU()).floor();
    if w >= T::TAU() {
        T::zero()
    } else {
        w
    }
}

/// Maps an angle difference into `(-pi, pi]`.
fn wrap_diff<T: Real>(a: T) -> T {
    let w = wrap_angle(a);
    if w > T::PI() {
        w - T::TAU()
    } else {
        w
    }
}

/// Time derivative of the spin vector.
pub fn spin_rhs<T: Real>(params: &ModelParams<T>, s: &SpinState<T>, t: T) -> SpinState<T> {
    let eps = params.modulation(t);
    let (j, u, g) = (params.tunneling, params.interaction, params.gamma);
    let (two, eight) = (T::two(), T::lit(8.0));
    SpinState {
        sx: two * eps * s.sy - eight * u * s.sz * s.sy + eight * g * (s.sy * s.sy + s.sz * s.sz),
        sy: -two * eps * s.sx + eight * u * s.sx * s.sz + two * j * s.sz - eight * g * s.sx * s.sy,
        sz: -two * j * s.sy - eight * g * s.sx * s.sz,
    }
}

/// `(d th/dt, d ph/dt)`; fails within [`POLE_GUARD`] of either pole.
pub fn bloch_rhs<T: Real>(params: &ModelParams<T>, x: &MeanFieldState<T>, t: T) -> Result<(T, T)> {
    let s = x.theta.sin();
    if !(s.abs() >= T::lit(POLE_GUARD)) {
        return Err(Error::PoleSingularity { theta: x.theta.as_f64(), time: t.as_f64() });
    }
    Ok(bloch_unchecked(params, x.theta, x.phi, t))
}

#[inline]
fn bloch_unchecked<T: Real>(params: &ModelParams<T>, theta: T, phi: T, t: T) -> (T, T) {
    let eps = params.modulation(t);
    let (j, u, g) = (params.tunneling, params.interaction, params.gamma);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (two, four) = (T::two(), T::lit(4.0));
    let dtheta = two * j * sp + four * g * cp * ct;
    let dphi = two * j * cp * ct / st - two * eps + four * u * ct - four * g * sp / st;
    (dtheta, dphi)
}

/// Right-hand sides with the signs of the alternative convention:
/// `dS_y` carries `-2J S_z` and the angular equations read
/// `th' = -2J sin ph + 4 g cos ph cos th`,
/// `ph' = -2J cot th - 2 eps + 4U cos th - 4 g sin ph / sin th`.
pub mod printed {
    use super::*;

    pub fn spin_rhs<T: Real>(params: &ModelParams<T>, s: &SpinState<T>, t: T) -> SpinState<T> {
        let mut d = super::spin_rhs(params, s, t);
        d.sy -= T::lit(4.0) * params.tunneling * s.sz;
        d
    }

    pub fn bloch_rhs<T: Real>(params: &ModelParams<T>, x: &MeanFieldState<T>, t: T) -> Result<(T, T)> {
        let st = x.theta.sin();
        if !(st.abs() >= T::lit(POLE_GUARD)) {
            return Err(Error::PoleSingularity { theta: x.theta.as_f64(), time: t.as_f64() });
        }
        let eps = params.modulation(t);
        let (j, u, g) = (params.tunneling, params.interaction, params.gamma);
        let ct = x.theta.cos();
        let (sp, cp) = x.phi.sin_cos();
        let (two, four) = (T::two(), T::lit(4.0));
        Ok((
            -two * j * sp + four * g * cp * ct,
            -two * j * ct / st - two * eps + four * u * ct - four * g * sp / st,
        ))
    }
}

/// RK4 integrators for both representations at one parameter point.
#[derive(Debug, Clone)]
pub struct MeanFieldFlow<T: Real> {
    params: ModelParams<T>,
    steps_per_period: u64,
    rk2: Rk4<T>,
    rk3: Rk4<T>,
}

impl<T: Real> MeanFieldFlow<T> {
    pub fn new(params: &ModelParams<T>, config: &IntegratorConfig<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self::with_steps(params, config.requested_steps(params.period)?))
    }

    pub fn with_steps(params: &ModelParams<T>, steps_per_period: u64) -> Self {
        Self {
            params: *params,
            steps_per_period: steps_per_period.max(1),
            rk2: Rk4::new(2),
            rk3: Rk4::new(3),
        }
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn dt(&self) -> T {
        self.params.period / T::from_u64(self.steps_per_period).expect("steps representable")
    }

    /// Integrates the Bloch-angle equations from `x.time` over `periods`
    /// whole periods.
    pub fn advance_bloch(&mut self, x: &mut MeanFieldState<T>, periods: usize) -> Result<()> {
        let dt = self.dt();
        let guard = T::lit(POLE_GUARD);
        let Self { params, rk2, steps_per_period, .. } = self;
        let mut f = |t: T, y: &[T], dy: &mut [T]| {
            let (a, b) = bloch_unchecked(params, y[0], y[1], t);
            dy[0] = a;
            dy[1] = b;
        };
        let mut y = [x.theta, x.phi];
        let t0 = x.time;
        let total = *steps_per_period * periods as u64;
        for i in 0..total {
            let t = t0 + dt * T::from_u64(i).expect("steps representable");
            rk2.step(&mut f, t, dt, &mut y);
            if !(y[0] > guard && y[0] < T::PI() - guard) || !y[1].is_finite() {
                return Err(Error::PoleSingularity { theta: y[0].as_f64(), time: (t + dt).as_f64() });
            }
        }
        x.theta = y[0];
        x.phi = wrap_angle(y[1]);
        x.time = t0 + params.period * T::from_usize_lossy(periods);
        Ok(())
    }

    /// Integrates the spin equations from time `t0` over `periods` periods.
    pub fn advance_spin(&mut self, s: &mut SpinState<T>, t0: T, periods: usize) -> Result<()> {
        let dt = self.dt();
        let Self { params, rk3, steps_per_period, .. } = self;
        let mut f = |t: T, y: &[T], dy: &mut [T]| {
            let d = spin_rhs(params, &SpinState::from_slice(y), t);
            dy.copy_from_slice(&d.to_array());
        };
        let mut y = s.to_array();
        let total = *steps_per_period * periods as u64;
        for i in 0..total {
            let t = t0 + dt * T::from_u64(i).expect("steps representable");
            rk3.step(&mut f, t, dt, &mut y);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { time: (t0 + params.period * T::from_usize_lossy(periods)).as_f64() });
        }
        *s = SpinState::from_slice(&y);
        Ok(())
    }

    /// Period map `F` on `(th, ph)`, always integrated over `[0, T]`.
    pub fn period_map(&mut self, theta: T, phi: T) -> Result<(T, T)> {
        let mut x = MeanFieldState::new(theta, phi);
        self.advance_bloch(&mut x, 1)?;
        Ok((x.theta, x.phi))
    }

    /// Central-difference Jacobian of `F` at `(th, ph)`, row-major.
    pub fn jacobian(&mut self, theta: T, phi: T) -> Result<[[T; 2]; 2]> {
        let h = T::lit(JACOBIAN_STEP);
        let mut column = |dth: T, dph: T| -> Result<(T, T)> {
            let plus = self.period_map(theta + dth, phi + dph)?;
            let minus = self.period_map(theta - dth, phi - dph)?;
            Ok(((plus.0 - minus.0) / (T::two() * h), wrap_diff(plus.1 - minus.1) / (T::two() * h)))
        };
        let a = column(h, T::zero())?;
        let b = column(T::zero(), h)?;
        Ok([[a.0, b.0], [a.1, b.1]])
    }
}

/// Iterates of the period map after `config.transient_periods` periods.
pub fn stroboscopic_map<T: Real>(
    params: &ModelParams<T>,
    x0: &MeanFieldState<T>,
    config: &IntegratorConfig<T>,
    n_iterates: usize,
) -> Result<Vec<MeanFieldState<T>>> {
    let mut flow = MeanFieldFlow::new(params, config)?;
    let mut x = *x0;
    flow.advance_bloch(&mut x, config.transient_periods)?;
    let mut out = Vec::with_capacity(n_iterates);
    for _ in 0..n_iterates {
        flow.advance_bloch(&mut x, 1)?;
        out.push(x);
    }
    Ok(out)
}

/// Same as [`stroboscopic_map`] but integrating the spin equations, which are
/// regular at the poles. Returned states carry the angles of the spin vector.
pub fn spin_stroboscopic<T: Real>(
    params: &ModelParams<T>,
    x0: &MeanFieldState<T>,
    config: &IntegratorConfig<T>,
    n_iterates: usize,
) -> Result<Vec<SpinState<T>>> {
    let mut flow = MeanFieldFlow::new(params, config)?;
    let mut s = x0.to_spin();
    let period = params.period;
    let mut t = x0.time;
    flow.advance_spin(&mut s, t, config.transient_periods)?;
    t += period * T::from_usize_lossy(config.transient_periods);
    let mut out = Vec::with_capacity(n_iterates);
    for _ in 0..n_iterates {
        flow.advance_spin(&mut s, t, 1)?;
        t += period;
        out.push(s);
    }
    Ok(out)
}

/// Newton iteration on `F(x) - x` with a finite-difference Jacobian.
pub fn find_fixed_point<T: Real>(
    params: &ModelParams<T>,
    config: &IntegratorConfig<T>,
    guess: &MeanFieldState<T>,
) -> Result<MeanFieldState<T>> {
    const MAX_ITER: usize = 50;
    let tol = 1e-10;
    let mut flow = MeanFieldFlow::new(params, config)?;
    let (mut th, mut ph) = (guess.theta, guess.phi);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let (fth, fph) = flow.period_map(th, ph)?;
        let g = [fth - th, wrap_diff(fph - ph)];
        residual = g[0].as_f64().hypot(g[1].as_f64());
        if residual < tol {
            return Ok(MeanFieldState::new(th, ph));
        }
        let jac = flow.jacobian(th, ph)?;
        // Solve (J - I) dx = -g.
        let a = jac[0][0] - T::one();
        let b = jac[0][1];
        let c = jac[1][0];
        let d = jac[1][1] - T::one();
        let det = a * d - b * c;
        if det == T::zero() || !det.is_finite() {
            break;
        }
        let dth = -(d * g[0] - b * g[1]) / det;
        let dph = -(-c * g[0] + a * g[1]) / det;
        th += dth;
        ph = wrap_angle(ph + dph);
    }
    Err(Error::NoConvergence { iterations: MAX_ITER, residual })
}

/// Eigenvalues of the period-map Jacobian at `x_star`, largest modulus first.
pub fn ns_multipliers<T: Real>(
    params: &ModelParams<T>,
    config: &IntegratorConfig<T>,
    x_star: &MeanFieldState<T>,
) -> Result<[Complex64; 2]> {
    let mut flow = MeanFieldFlow::new(params, config)?;
    let j = flow.jacobian(x_star.theta, x_star.phi)?;
    Ok(eigenvalues_2x2([
        [j[0][0].as_f64(), j[0][1].as_f64()],
        [j[1][0].as_f64(), j[1][1].as_f64()],
    ]))
}

fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let half = Complex64::new(tr / 2.0, 0.0);
    let (a, b) = (half + disc, half - disc);
    if a.norm() >= b.norm() {
        [a, b]
    } else {
        [b, a]
    }
}

/// Fixed point and multipliers at one interaction strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPoint {
    pub interaction: f64,
    pub theta: f64,
    pub phi: f64,
    pub multipliers: [Complex64; 2],
}

/// Continues the fixed point along `u_grid` (ascending), each Newton solve
/// starting from the previous solution.
pub fn multiplier_branch<T: Real>(
    params: &ModelParams<T>,
    config: &IntegratorConfig<T>,
    guess: &MeanFieldState<T>,
    u_grid: &[T],
) -> Result<Vec<MultiplierPoint>> {
    let mut x = *guess;
    let mut out = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let p = params.with_interaction(u);
        x = find_fixed_point(&p, config, &x)?;
        let mu = ns_multipliers(&p, config, &x)?;
        out.push(MultiplierPoint {
            interaction: u.as_f64(),
            theta: x.theta.as_f64(),
            phi: x.phi.as_f64(),
            multipliers: mu,
        });
    }
    Ok(out)
}

/// Location of a stability loss of the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub interaction: f64,
    pub multiplier: Complex64,
}

/// Finds where the leading multiplier first leaves the unit disc on `u_grid`,
/// then refines by bisection to `u_tol`.
pub fn locate_crossing<T: Real>(
    params: &ModelParams<T>,
    config: &IntegratorConfig<T>,
    guess: &MeanFieldState<T>,
    u_grid: &[T],
    u_tol: T,
) -> Result<Option<Crossing>> {
    let branch = multiplier_branch(params, config, guess, u_grid)?;
    let Some(k) = branch.iter().position(|p| p.multipliers[0].norm() > 1.0) else {
        return Ok(None);
    };
    if k == 0 {
        return Ok(Some(Crossing { interaction: branch[0].interaction, multiplier: branch[0].multipliers[0] }));
    }
    let (mut lo, mut hi) = (u_grid[k - 1], u_grid[k]);
    let mut x = MeanFieldState::new(T::lit(branch[k - 1].theta), T::lit(branch[k - 1].phi));
    let mut mu = branch[k].multipliers[0];
    while hi - lo > u_tol {
        let mid = (lo + hi) * T::half();
        let p = params.with_interaction(mid);
        let xm = find_fixed_point(&p, config, &x)?;
        let m = ns_multipliers(&p, config, &xm)?;
        if m[0].norm() > 1.0 {
            hi = mid;
            mu = m[0];
        } else {
            lo = mid;
            x = xm;
        }
    }
    Ok(Some(Crossing { interaction: ((lo + hi) * T::half()).as_f64(), multiplier: mu }))
}

/// Long-time behaviour of a sequence of stroboscopic iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitClass {
    /// Period-`p` cycle (`p = 1` is a fixed point).
    Periodic(usize),
    /// No period up to the tested maximum.
    Aperiodic,
}

/// Smallest `p <= max_period` with `|S_{k+p} - S_k| < tol` over the whole
/// sequence (Euclidean distance of spin vectors).
pub fn classify_orbit<T: Real>(iterates: &[SpinState<T>], max_period: usize, tol: f64) -> OrbitClass {
    let dist = |a: &SpinState<T>, b: &SpinState<T>| {
        let d = [a.sx - b.sx, a.sy - b.sy, a.sz - b.sz];
        d.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt()
    };
    for p in 1..=max_period.min(iterates.len().saturating_sub(1)) {
        if iterates.windows(p + 1).all(|w| dist(&w[0], &w[p]) < tol) {
            return OrbitClass::Periodic(p);
        }
    }
    OrbitClass::Aperiodic
}

/// Sweep settings for bifurcation diagrams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct SweepConfig<T> {
    pub integrator: IntegratorConfig<T>,
    pub iterates: usize,
    pub bins: usize,
    pub initial: (T, T),
}

impl<T: Real> SweepConfig<T> {
    pub fn reference(period: T) -> Self {
        Self {
            integrator: IntegratorConfig::reference(period),
            iterates: 400,
            bins: DIAGRAM_BINS,
            initial: (T::lit(DEFAULT_INITIAL.0), T::lit(DEFAULT_INITIAL.1)),
        }
    }
}

/// One column of a bifurcation diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramColumn {
    pub interaction: f64,
    /// Max-normalized histogram of `n/N`, or empty if the run failed.
    pub histogram: Vec<f64>,
    /// Stroboscopic `(th, ph)` iterates.
    pub section: Vec<(f64, f64)>,
    pub error: Option<String>,
}

/// Histograms of `n(mT)/N` over `[0, 1]` for each `U`, one column per grid
/// point in grid order. Failures are reported per column.
pub fn classical_bifurcation_diagram<T: Real>(
    params: &ModelParams<T>,
    u_grid: &[T],
    config: &SweepConfig<T>,
) -> Result<Vec<DiagramColumn>> {
    if u_grid.is_empty() {
        return Err(Error::EmptyInput("interaction grid"));
    }
    if config.bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    params.validate()?;
    let columns = u_grid
        .par_iter()
        .map(|&u| {
            let p = params.with_interaction(u);
            let x0 = MeanFieldState::new(config.initial.0, config.initial.1);
            match spin_stroboscopic(&p, &x0, &config.integrator, config.iterates) {
                Ok(states) => {
                    let occ: Vec<f64> = states.iter().map(|s| s.occupation().as_f64()).collect();
                    let section = states
                        .iter()
                        .map(|s| {
                            let x = MeanFieldState::from_spin(s, T::zero());
                            (x.theta.as_f64(), x.phi.as_f64())
                        })
                        .collect();
                    DiagramColumn {
                        interaction: u.as_f64(),
                        histogram: normalized_histogram(&occ, config.bins, 0.0, 1.0),
                        section,
                        error: None,
                    }
                }
                Err(e) => DiagramColumn {
                    interaction: u.as_f64(),
                    histogram: Vec::new(),
                    section: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(columns)
}

/// Writes `U,bin_center,normalized_count` rows.
pub fn write_diagram_csv<W: Write>(out: &mut W, columns: &[DiagramColumn]) -> Result<()> {
    writeln!(out, "U,bin_center,normalized_count")?;
    for col in columns {
        let bins = col.histogram.len();
        for (k, v) in col.histogram.iter().enumerate() {
            let center = (k as f64 + 0.5) / bins as f64;
            writeln!(out, "{},{},{}", col.interaction, center, v)?;
        }
    }
    Ok(())
}

/// Writes `U,m,theta,phi` rows; `m` counts iterates from 1.
pub fn write_poincare_csv<W: Write>(out: &mut W, columns: &[DiagramColumn]) -> Result<()> {
    writeln!(out, "U,m,theta,phi")?;
    for col in columns {
        for (m, (th, ph)) in col.section.iter().enumerate() {
            writeln!(out, "{},{},{},{}", col.interaction, m + 1, th, ph)?;
        }
    }
    Ok(())
}
