//! Phase-space diagnostics: SU(2) Husimi distributions, bagel diameter,
//! stroboscopic histograms and rotation numbers.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{DensityMatrix, IntegratorConfig, LindbladPropagator};
use crate::mcwf::ObservableRecord;
use crate::model::{ln_binomial, DimerOperators, ModelParams};
use crate::scalar::{Real, C};

/// Peaks must stand out from the surrounding minimum by this fraction of the
/// slice maximum to count as bagel maxima.
pub const BAGEL_PROMINENCE: f64 = 0.05;

/// Default angular resolution of the lobe counter.
pub const LOBE_BINS: usize = 72;

/// Default lobe prominence, as a fraction of the largest angular bin.
pub const LOBE_PROMINENCE: f64 = 0.2;

/// Bins of the rotation-number histogram over `[0, 1)`.
pub const OMEGA_BINS: usize = 100;

/// `k ln x`, with `0 ln 0 = 0`.
#[inline]
fn k_ln<T: Real>(k: usize, x: T) -> T {
    if k == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(k) * x.ln()
    }
}

/// Real amplitudes `sqrt(C(N, j)) cos(th/2)^j sin(th/2)^(N-j)`.
fn coherent_moduli<T: Real>(particles: usize, theta: T) -> Vec<T> {
    let (s, c) = (theta * T::half()).sin_cos();
    let (s, c) = (s.abs(), c.abs());
    (0..=particles)
        .map(|j| {
            let l = T::half() * ln_binomial::<T>(particles, j) + k_ln(j, c) + k_ln(particles - j, s);
            l.exp()
        })
        .collect()
}

/// Components `c_j = sqrt(C(N, j)) cos(th/2)^j (e^{i ph} sin(th/2))^(N-j)`.
pub fn coherent_state<T: Real>(particles: usize, theta: T, phi: T) -> Vec<C<T>> {
    coherent_moduli(particles, theta)
        .into_iter()
        .enumerate()
        .map(|(j, a)| C::from_polar(a, phi * T::from_usize_lossy(particles - j)))
        .collect()
}

/// Husimi grid layout. `theta` takes midpoints `(i + 1/2) pi / G_th`, `phi`
/// takes `2 pi j / G_ph`; `G_ph` must be a multiple of 4 so `ph = pi/2` is a
/// grid line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_points: usize,
    pub phi_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { theta_points: 256, phi_points: 256 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.theta_points < 3 || self.phi_points < 4 || !self.phi_points.is_multiple_of(4) {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 theta points and a multiple of 4 phi points, got {}x{}",
                self.theta_points, self.phi_points
            )));
        }
        Ok(())
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.theta_points)
            .map(|i| (i as f64 + 0.5) * PI / self.theta_points as f64)
            .collect()
    }

    pub fn phis(&self) -> Vec<f64> {
        (0..self.phi_points).map(|j| TAU * j as f64 / self.phi_points as f64).collect()
    }

    /// Column index of `ph = pi/2`.
    pub fn quarter_column(&self) -> usize {
        self.phi_points / 4
    }
}

/// `p(th, ph)` on a grid, max-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiGrid {
    pub spec: GridSpec,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `values[[i, j]]` at `(theta[i], phi[j])`.
    pub values: Array2<f64>,
    /// Largest unnormalized value.
    pub peak: f64,
    /// Most negative unnormalized value before clipping.
    pub min_raw: f64,
}

/// Projects `rho` onto coherent states over the grid.
///
/// With `c_j = a_j(th) e^{i ph (N - j)}` the quadratic form collapses to
/// `p = Re sum_d e^{i ph d} s_d(th)`, `s_d = sum_{j - k = d} a_j a_k rho_jk`,
/// so each theta row costs `O(N^2 + G_ph N)`.
pub fn husimi<T: Real>(rho: &DensityMatrix<T>, spec: &GridSpec) -> Result<HusimiGrid> {
    spec.validate()?;
    let d = rho.dim();
    let particles = d - 1;
    let thetas = spec.thetas();
    let phis = spec.phis();
    let rho64: Vec<Complex64> = rho.data.iter().map(|z| Complex64::new(z.re.as_f64(), z.im.as_f64())).collect();
    let rows: Vec<Vec<f64>> = thetas
        .par_iter()
        .map(|&th| {
            let a = coherent_moduli::<f64>(particles, th);
            // s[d + N] for d = j - k in -N..=N
            let mut s = vec![Complex64::new(0.0, 0.0); 2 * d - 1];
            for j in 0..d {
                for k in 0..d {
                    s[j + particles - k] += rho64[j * d + k] * (a[j] * a[k]);
                }
            }
            phis.iter()
                .map(|&ph| {
                    let step = Complex64::from_polar(1.0, ph);
                    // Horner in e^{i ph} over d = -N..=N
                    let mut acc = Complex64::new(0.0, 0.0);
                    for v in s.iter().rev() {
                        acc = acc * step + v;
                    }
                    (acc * Complex64::from_polar(1.0, -ph * particles as f64)).re
                })
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((spec.theta_points, spec.phi_points));
    let mut peak = f64::NEG_INFINITY;
    let mut min_raw = f64::INFINITY;
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            peak = peak.max(v);
            min_raw = min_raw.min(v);
            values[[i, j]] = v.max(0.0);
        }
    }
    if peak > 0.0 {
        values.mapv_inplace(|v| v / peak);
    }
    Ok(HusimiGrid { spec: *spec, theta: thetas, phi: phis, values, peak, min_raw })
}

/// Writes `theta,phi,value` rows.
pub fn write_husimi_csv<W: Write>(out: &mut W, grid: &HusimiGrid) -> Result<()> {
    writeln!(out, "theta,phi,value")?;
    for (i, th) in grid.theta.iter().enumerate() {
        for (j, ph) in grid.phi.iter().enumerate() {
            writeln!(out, "{th},{ph},{}", grid.values[[i, j]])?;
        }
    }
    Ok(())
}

/// Local maximum with its prominence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub prominence: f64,
}

/// Interior local maxima of `y` with their topographic prominence: height
/// above the higher of the two minima reached before meeting a higher point
/// (or an end) on either side. A flat top counts once, at its middle.
pub fn find_peaks(y: &[f64]) -> Vec<Peak> {
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !(y[i] > y[i - 1]) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || !(y[j + 1] < y[i]) {
            i = j + 1;
            continue;
        }
        let top = y[i];
        let mut left_min = top;
        for &v in y[..i].iter().rev() {
            if v > top {
                break;
            }
            left_min = left_min.min(v);
        }
        let mut right_min = top;
        for &v in &y[j + 1..] {
            if v > top {
                break;
            }
            right_min = right_min.min(v);
        }
        peaks.push(Peak { index: (i + j) / 2, prominence: top - left_min.max(right_min) });
        i = j + 1;
    }
    peaks
}

/// Peaks whose prominence reaches `fraction` of the maximum of `y`.
pub fn prominent_peaks(y: &[f64], fraction: f64) -> Vec<Peak> {
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    find_peaks(y)
        .into_iter()
        .filter(|p| p.prominence >= fraction * top)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BagelMeasure {
    /// Angular separation in `th` of the two most prominent maxima.
    pub diameter: f64,
    pub is_unimodal: bool,
}

/// Bagel diameter of a sampled slice `values(theta)`.
pub fn bagel_diameter_slice(theta: &[f64], values: &[f64]) -> Result<BagelMeasure> {
    if values.is_empty() || theta.len() != values.len() {
        return Err(Error::EmptyInput("husimi slice"));
    }
    let mut peaks = prominent_peaks(values, BAGEL_PROMINENCE);
    if peaks.len() < 2 {
        return Ok(BagelMeasure { diameter: 0.0, is_unimodal: true });
    }
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence).then(a.index.cmp(&b.index)));
    let diameter = (theta[peaks[0].index] - theta[peaks[1].index]).abs();
    Ok(BagelMeasure { diameter, is_unimodal: diameter == 0.0 })
}

/// Bagel diameter from the `ph = pi/2` section of a Husimi grid.
pub fn bagel_diameter(grid: &HusimiGrid) -> Result<BagelMeasure> {
    let col = grid.spec.quarter_column();
    let slice: Vec<f64> = grid.values.column(col).to_vec();
    bagel_diameter_slice(&grid.theta, &slice)
}

/// Histogram of `values` over `[lo, hi]` scaled so the largest bin is 1.
/// Values outside the range are dropped; `hi` falls in the last bin.
pub fn normalized_histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if !(v >= lo && v <= hi) {
            continue;
        }
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    normalize_max(&mut counts);
    counts
}

fn normalize_max(v: &mut [f64]) {
    let top = v.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        v.iter_mut().for_each(|x| *x /= top);
    }
}

/// Two-dimensional count histogram on uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `counts[i][j]` for `x` bin `i`, `y` bin `j`.
    pub counts: Vec<Vec<u64>>,
}

impl Histogram2d {
    /// Bins spanning the observed range of the points.
    pub fn from_points(points: &[(f64, f64)], x_bins: usize, y_bins: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("histogram points"));
        }
        if x_bins == 0 || y_bins == 0 {
            return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
        }
        let (xl, xh) = range(points.iter().map(|p| p.0));
        let (yl, yh) = range(points.iter().map(|p| p.1));
        let edges = |lo: f64, hi: f64, n: usize| {
            let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
            (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect::<Vec<_>>()
        };
        let x_edges = edges(xl, xh, x_bins);
        let y_edges = edges(yl, yh, y_bins);
        let mut counts = vec![vec![0u64; y_bins]; x_bins];
        let locate = |e: &[f64], v: f64| {
            let n = e.len() - 1;
            (((v - e[0]) / (e[n] - e[0]) * n as f64) as usize).min(n - 1)
        };
        for &(x, y) in points {
            counts[locate(&x_edges, x)][locate(&y_edges, y)] += 1;
        }
        Ok(Self { x_edges, y_edges, counts })
    }

    /// Writes `x_center,y_center,count` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "x_center,y_center,count")?;
        for (i, row) in self.counts.iter().enumerate() {
            let xc = 0.5 * (self.x_edges[i] + self.x_edges[i + 1]);
            for (j, c) in row.iter().enumerate() {
                let yc = 0.5 * (self.y_edges[j] + self.y_edges[j + 1]);
                writeln!(out, "{xc},{yc},{c}")?;
            }
        }
        Ok(())
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Scaled stroboscopic points `(n/N, e/N)` of a trajectory.
pub fn scaled_points(records: &[ObservableRecord], particles: usize) -> Vec<(f64, f64)> {
    let n = particles as f64;
    records.iter().map(|r| (r.n / n, r.e / n)).collect()
}

/// Affine frame mapping each coordinate's observed range onto `[-1, 1]`,
/// with the origin moved to the center of mass of the rescaled cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationFrame {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub center: (f64, f64),
}

impl RotationFrame {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::EmptyInput("rotation frame needs at least two points"));
        }
        let x_range = range(points.iter().map(|p| p.0));
        let y_range = range(points.iter().map(|p| p.1));
        for (name, (lo, hi)) in [("x", x_range), ("y", y_range)] {
            let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
            if !(hi - lo > 1e-12 * scale) {
                return Err(Error::DegenerateCloud(format!("zero {name} range")));
            }
        }
        let mut frame = Self { x_range, y_range, center: (0.0, 0.0) };
        let (sx, sy) = points.iter().fold((0.0, 0.0), |(ax, ay), &p| {
            let (x, y) = frame.rescale(p);
            (ax + x, ay + y)
        });
        let count = points.len() as f64;
        frame.center = (sx / count, sy / count);
        Ok(frame)
    }

    fn rescale(&self, p: (f64, f64)) -> (f64, f64) {
        let map = |v: f64, (lo, hi): (f64, f64)| 2.0 * (v - lo) / (hi - lo) - 1.0;
        (map(p.0, self.x_range), map(p.1, self.y_range))
    }

    /// Polar angle of `p` about the center, in `(-pi, pi]`.
    pub fn angle(&self, p: (f64, f64)) -> f64 {
        let (x, y) = self.rescale(p);
        (y - self.center.1).atan2(x - self.center.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationRecord {
    pub m: usize,
    pub theta_angle: f64,
    /// `((theta_m - theta_{m-1}) / 2 pi) mod 1`; undefined for the first record.
    pub omega: f64,
}

/// `((a1 - a0) / 2 pi) mod 1`.
pub fn winding(a0: f64, a1: f64) -> f64 {
    let w = ((a1 - a0) / TAU).rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Rotation records of one sequence in a given frame; the first point only
/// anchors the angle, so `len - 1` records are returned.
pub fn rotation_sequence(frame: &RotationFrame, points: &[(f64, f64)], ms: &[usize]) -> Vec<RotationRecord> {
    let angles: Vec<f64> = points.iter().map(|&p| frame.angle(p)).collect();
    angles
        .windows(2)
        .zip(&ms[1..])
        .map(|(w, &m)| RotationRecord { m, theta_angle: w[1], omega: winding(w[0], w[1]) })
        .collect()
}

/// Circular mean of `2 pi omega`, mapped back to `[0, 1)`.
pub fn circular_mean(omegas: &[f64]) -> Option<f64> {
    if omegas.is_empty() {
        return None;
    }
    let (s, c) = omegas
        .iter()
        .fold((0.0, 0.0), |(s, c), w| (s + (TAU * w).sin(), c + (TAU * w).cos()));
    if s == 0.0 && c == 0.0 {
        return None;
    }
    Some((s.atan2(c) / TAU).rem_euclid(1.0))
}

/// Center of the fullest bin of an `OMEGA_BINS` histogram over `[0, 1)`.
pub fn histogram_mode(omegas: &[f64]) -> Option<f64> {
    if omegas.is_empty() {
        return None;
    }
    let hist = omega_histogram(omegas, OMEGA_BINS);
    let (k, _) = hist
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
    Some((k as f64 + 0.5) / OMEGA_BINS as f64)
}

/// Max-normalized histogram of rotation numbers over `[0, 1)`.
pub fn omega_histogram(omegas: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &w in omegas {
        let k = ((w * bins as f64) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    normalize_max(&mut counts);
    counts
}

/// Rotation numbers of an ensemble in one pooled frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationAnalysis {
    pub frame: RotationFrame,
    /// Per trajectory, in trajectory order.
    pub records: Vec<Vec<RotationRecord>>,
    pub mean_omega: f64,
    pub mode_omega: f64,
}

impl RotationAnalysis {
    pub fn omegas(&self) -> Vec<f64> {
        self.records.iter().flatten().map(|r| r.omega).collect()
    }
}

/// Rotation numbers of a single record sequence.
pub fn rotation_numbers(records: &[ObservableRecord]) -> Result<RotationAnalysis> {
    rotation_numbers_pooled(std::slice::from_ref(&records.to_vec()))
}

/// Fits one frame to all stroboscopic `(n, e)` points of all trajectories,
/// then measures rotation numbers along each trajectory separately.
pub fn rotation_numbers_pooled(trajectories: &[Vec<ObservableRecord>]) -> Result<RotationAnalysis> {
    let all: Vec<(f64, f64)> = trajectories.iter().flatten().map(|r| (r.n, r.e)).collect();
    let frame = RotationFrame::fit(&all)?;
    let records: Vec<Vec<RotationRecord>> = trajectories
        .iter()
        .map(|traj| {
            let pts: Vec<(f64, f64)> = traj.iter().map(|r| (r.n, r.e)).collect();
            let ms: Vec<usize> = traj.iter().map(|r| r.m).collect();
            if pts.len() < 2 {
                Vec::new()
            } else {
                rotation_sequence(&frame, &pts, &ms)
            }
        })
        .collect();
    let omegas: Vec<f64> = records.iter().flatten().map(|r| r.omega).collect();
    let mean_omega = circular_mean(&omegas).ok_or(Error::EmptyInput("rotation records"))?;
    let mode_omega = histogram_mode(&omegas).ok_or(Error::EmptyInput("rotation records"))?;
    Ok(RotationAnalysis { frame, records, mean_omega, mode_omega })
}

/// Writes `traj_id,m,theta_angle,omega` rows.
pub fn write_rotation_csv<W: Write>(out: &mut W, analysis: &RotationAnalysis) -> Result<()> {
    writeln!(out, "traj_id,m,theta_angle,omega")?;
    for (id, recs) in analysis.records.iter().enumerate() {
        for r in recs {
            writeln!(out, "{id},{},{},{}", r.m, r.theta_angle, r.omega)?;
        }
    }
    Ok(())
}

/// Counts angular lobes of a point cloud around the frame center: peaks of a
/// circularly smoothed angular histogram whose prominence reaches
/// `prominence` times the largest bin.
pub fn count_lobes(frame: &RotationFrame, points: &[(f64, f64)], bins: usize, prominence: f64) -> usize {
    if points.is_empty() || bins < 3 {
        return 0;
    }
    let mut hist = vec![0.0; bins];
    for &p in points {
        let a = frame.angle(p).rem_euclid(TAU);
        let k = ((a / TAU * bins as f64) as usize).min(bins - 1);
        hist[k] += 1.0;
    }
    let smooth: Vec<f64> = (0..bins)
        .map(|k| (hist[(k + bins - 1) % bins] + hist[k] + hist[(k + 1) % bins]) / 3.0)
        .collect();
    circular_peaks(&smooth, prominence).len()
}

/// Prominent peaks of a periodic sequence; indices refer to the input.
pub fn circular_peaks(y: &[f64], fraction: f64) -> Vec<Peak> {
    let n = y.len();
    if n < 3 {
        return Vec::new();
    }
    // Rotate so the global minimum sits at both ends; every peak is interior.
    let start = (0..n).fold(0, |b, k| if y[k] < y[b] { k } else { b });
    let mut line: Vec<f64> = (0..n).map(|k| y[(start + k) % n]).collect();
    line.push(y[start]);
    prominent_peaks(&line, fraction)
        .into_iter()
        .map(|p| Peak { index: (p.index + start) % n, prominence: p.prominence })
        .collect()
}

/// Lindblad sweep settings for quantum bifurcation diagrams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct QuantumSweepConfig<T> {
    pub integrator: IntegratorConfig<T>,
    /// Stroboscopic snapshots accumulated after the transient.
    pub periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumColumn {
    pub interaction: f64,
    /// `sum_m rho_nn(mT)` over `n = 0..=N`, max-normalized; empty on failure.
    pub histogram: Vec<f64>,
    pub error: Option<String>,
}

/// For each `U`, propagates `|N><N|` through the transient and accumulates
/// the stroboscopic diagonals.
pub fn quantum_bifurcation_diagram<T: Real>(
    params: &ModelParams<T>,
    u_grid: &[T],
    config: &QuantumSweepConfig<T>,
) -> Result<Vec<QuantumColumn>> {
    if u_grid.is_empty() {
        return Err(Error::EmptyInput("interaction grid"));
    }
    if config.periods == 0 {
        return Err(Error::InvalidParameter("at least one recorded period is required".into()));
    }
    params.validate()?;
    let ops = DimerOperators::build(params.particles)?;
    Ok(u_grid
        .par_iter()
        .map(|&u| {
            let run = || -> Result<Vec<f64>> {
                let p = params.with_interaction(u);
                let mut prop = LindbladPropagator::new(&p, &ops, &config.integrator)?;
                let rho0 = DensityMatrix::fock(ops.dim, params.particles);
                let snaps = prop.stroboscopic(&rho0, config.integrator.transient_periods, config.periods)?;
                let mut acc = vec![0.0; ops.dim];
                for s in &snaps {
                    for (a, v) in acc.iter_mut().zip(s.diagonal()) {
                        *a += v.as_f64();
                    }
                }
                normalize_max(&mut acc);
                Ok(acc)
            };
            match run() {
                Ok(histogram) => QuantumColumn { interaction: u.as_f64(), histogram, error: None },
                Err(e) => QuantumColumn { interaction: u.as_f64(), histogram: Vec::new(), error: Some(e.to_string()) },
            }
        })
        .collect())
}

/// Writes `U,n_over_N,normalized_weight` rows.
pub fn write_quantum_diagram_csv<W: Write>(out: &mut W, columns: &[QuantumColumn]) -> Result<()> {
    writeln!(out, "U,n_over_N,normalized_weight")?;
    for col in columns {
        let particles = col.histogram.len().saturating_sub(1).max(1) as f64;
        for (n, v) in col.histogram.iter().enumerate() {
            writeln!(out, "{},{},{}", col.interaction, n as f64 / particles, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherent_state_endpoints() {
        let c = coherent_state::<f64>(5, 0.0, 1.0);
        assert!((c[5].re - 1.0).abs() < 1e-15);
        assert!(c[..5].iter().all(|z| z.norm() < 1e-15));
        let c = coherent_state::<f64>(1, 1.2, 0.4);
        let expect0 = Complex64::from_polar((0.6f64).sin(), 0.4);
        assert!((c[0] - expect0).norm() < 1e-15);
        assert!((c[1].re - (0.6f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn coherent_state_is_normalized_at_large_n() {
        for &(th, ph) in &[(0.3, 0.1), (1.5, 2.0), (2.9, 5.0)] {
            let c = coherent_state::<f64>(500, th, ph);
            let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-10, "{norm}");
        }
    }

    #[test]
    fn husimi_matches_direct_projection() {
        let n = 6;
        let psi = coherent_state::<f64>(n, 1.0, 0.5);
        let mut rho = DensityMatrix::pure(&psi, 0.0);
        // mix in a Fock component to break symmetry
        rho.data[[2, 2]] += Complex64::new(0.3, 0.0);
        rho.data.mapv_inplace(|z| z / 1.3);
        let spec = GridSpec { theta_points: 8, phi_points: 8 };
        let grid = husimi(&rho, &spec).unwrap();
        for (i, &th) in grid.theta.iter().enumerate() {
            for (j, &ph) in grid.phi.iter().enumerate() {
                let c = coherent_state::<f64>(n, th, ph);
                let mut p = Complex64::new(0.0, 0.0);
                for a in 0..=n {
                    for b in 0..=n {
                        p += c[a].conj() * rho.data[[a, b]] * c[b];
                    }
                }
                assert!((p.re / grid.peak - grid.values[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_gaussian_slice() {
        let theta: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) * PI / 400.0).collect();
        let g = |x: f64, c: f64| (-(x - c).powi(2) / (2.0 * 0.08f64.powi(2))).exp();
        let y: Vec<f64> = theta.iter().map(|&t| g(t, 1.0) + 0.8 * g(t, 1.6)).collect();
        let m = bagel_diameter_slice(&theta, &y).unwrap();
        assert!(!m.is_unimodal);
        assert!((m.diameter - 0.6).abs() < 2.0 * PI / 400.0);
        let scaled: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        assert_eq!(bagel_diameter_slice(&theta, &scaled).unwrap(), m);
    }

    #[test]
    fn single_peak_is_unimodal() {
        let theta: Vec<f64> = (0..100).map(|i| i as f64 * 0.03).collect();
        let y: Vec<f64> = theta.iter().map(|t| (-(t - 1.5f64).powi(2)).exp()).collect();
        let m = bagel_diameter_slice(&theta, &y).unwrap();
        assert!(m.is_unimodal && m.diameter == 0.0);
    }

    #[test]
    fn constant_rotation() {
        // The offset makes both coordinate ranges equal, so the rescaling
        // into [-1, 1]^2 is isotropic.
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|k| {
                let a = TAU * (0.025 + 0.3 * k as f64);
                (a.cos(), a.sin())
            })
            .collect();
        let records: Vec<ObservableRecord> = pts
            .iter()
            .enumerate()
            .map(|(m, &(n, e))| ObservableRecord { m, n, e })
            .collect();
        let r = rotation_numbers(&records).unwrap();
        assert!(r.records[0].iter().all(|x| (x.omega - 0.3).abs() < 1e-12));
        assert!((r.mean_omega - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cloud_is_rejected() {
        let recs: Vec<ObservableRecord> = (0..5).map(|m| ObservableRecord { m, n: 1.0, e: m as f64 }).collect();
        assert!(matches!(rotation_numbers(&recs), Err(Error::DegenerateCloud(_))));
    }

    #[test]
    fn circular_mean_wraps() {
        let m = circular_mean(&[0.98, 0.02]).unwrap();
        assert!(m < 1e-12 || (1.0 - m) < 1e-12);
    }

    #[test]
    fn five_lobes() {
        let mut pts = Vec::new();
        for k in 0..500 {
            let lobe = (k % 5) as f64;
            let jitter = ((k * 7919) % 101) as f64 / 101.0 - 0.5;
            let a = TAU * (lobe / 5.0) + 0.15 * jitter;
            pts.push((a.cos(), a.sin()));
        }
        let frame = RotationFrame::fit(&pts).unwrap();
        assert_eq!(count_lobes(&frame, &pts, LOBE_BINS, LOBE_PROMINENCE), 5);
    }

    #[test]
    fn peak_prominence() {
        let y = [0.0, 1.0, 0.5, 2.0, 0.0];
        let p = find_peaks(&y);
        assert_eq!(p.len(), 2);
        assert!((p[0].prominence - 0.5).abs() < 1e-15);
        assert!((p[1].prominence - 2.0).abs() < 1e-15);
    }
}
