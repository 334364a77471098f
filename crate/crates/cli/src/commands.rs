//! The six subcommands. Each has an estimator (run before anything is
//! written) and a runner that writes into an [`OutputSet`].

use std::io::Write;

use num_complex::Complex64;
use qdimer::analysis::{
    bagel_diameter, count_lobes, husimi, omega_histogram, quantum_bifurcation_diagram, rotation_numbers_pooled,
    scaled_points, write_husimi_csv, write_quantum_diagram_csv, write_rotation_csv, BagelMeasure, GridSpec,
    Histogram2d, QuantumSweepConfig, LOBE_BINS, LOBE_PROMINENCE,
};
use qdimer::floquet::{build_floquet_map, floquet_spectrum, write_gap_csv, write_spectrum_csv, FloquetConfig, GapRow};
use qdimer::lindblad::{DensityMatrix, IntegratorConfig, LindbladPropagator};
use qdimer::mcwf::{run_ensemble, write_observables_csv, EnsembleConfig};
use qdimer::meanfield::{
    classical_bifurcation_diagram, spin_stroboscopic, write_diagram_csv, write_poincare_csv, MeanFieldState,
    SweepConfig,
};
use qdimer::model::{DimerOperators, ModelParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, StateEstimate, StateMethod};
use crate::error::{CliError, Result};
use crate::estimate::{self, Estimate, LARGE_LINDBLAD_N, LARGE_RELAX_PERIODS};
use crate::manifest::OutputSet;

/// Relaxation and measurement lengths used for trajectories in long runs.
const FULL_RELAX: usize = 2000;
const FULL_MEASURE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    MeanfieldSweep,
    QuantumBifurcation,
    Husimi,
    Trajectories,
    Floquet,
    BagelDiameter,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::MeanfieldSweep => "meanfield-sweep",
            Self::QuantumBifurcation => "quantum-bifurcation",
            Self::Husimi => "husimi",
            Self::Trajectories => "trajectories",
            Self::Floquet => "floquet",
            Self::BagelDiameter => "bagel-diameter",
        }
    }

    pub fn estimate(self, cfg: &RunConfig) -> Result<Estimate> {
        match self {
            Self::MeanfieldSweep => estimate_meanfield(cfg),
            Self::QuantumBifurcation => estimate_quantum(cfg),
            Self::Husimi => estimate_husimi(cfg),
            Self::Trajectories => estimate_trajectories(cfg),
            Self::Floquet => estimate_floquet(cfg),
            Self::BagelDiameter => estimate_bagel(cfg),
        }
    }

    pub fn run(self, cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
        match self {
            Self::MeanfieldSweep => meanfield_sweep(cfg, out),
            Self::QuantumBifurcation => quantum_bifurcation(cfg, out),
            Self::Husimi => husimi_snapshot(cfg, out),
            Self::Trajectories => trajectories(cfg, out),
            Self::Floquet => floquet(cfg, out),
            Self::BagelDiameter => bagel_sweep(cfg, out),
        }
    }
}

fn with_transient(cfg: &RunConfig, transient: usize) -> IntegratorConfig<f64> {
    IntegratorConfig { transient_periods: transient, ..cfg.integrator }
}

fn write_json<T: Serialize>(out: &mut OutputSet, name: &str, value: &T) -> Result<()> {
    out.write_with(name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn fock_psi(n: usize) -> Vec<Complex64> {
    let mut psi = vec![Complex64::new(0.0, 0.0); n + 1];
    psi[n] = Complex64::new(1.0, 0.0);
    psi
}

fn note_reduced(out: &mut OutputSet, relax: usize, measure: usize) {
    if relax < FULL_RELAX || measure < FULL_MEASURE {
        out.warn(format!(
            "reduced transients: relax {relax}T, measure {measure}T (long runs use {FULL_RELAX}T and {FULL_MEASURE}T)"
        ));
    }
}

// ---- meanfield-sweep

fn estimate_meanfield(cfg: &RunConfig) -> Result<Estimate> {
    let m = &cfg.meanfield_sweep;
    let grid = m.u.values()?;
    let mut e = Estimate::default();
    e.add(estimate::meanfield(&cfg.model, &cfg.integrator, grid.len(), m.transient_periods + m.iterates)?, true);
    Ok(e)
}

fn meanfield_sweep(cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let m = &cfg.meanfield_sweep;
    let grid = m.u.values()?;
    let sweep = SweepConfig {
        integrator: with_transient(cfg, m.transient_periods),
        iterates: m.iterates,
        bins: m.bins,
        initial: m.initial,
    };
    let columns = classical_bifurcation_diagram(&cfg.model, &grid, &sweep)?;
    for c in &columns {
        if let Some(err) = &c.error {
            out.warn(format!("U = {} aborted: {err}", c.interaction));
        }
    }
    if columns.iter().all(|c| c.error.is_some()) {
        return Err(CliError::Numerical("every grid point failed".into()));
    }
    out.write_with("meanfield_diagram.csv", |w| Ok(write_diagram_csv(w, &columns)?))?;
    out.write_with("meanfield_poincare.csv", |w| Ok(write_poincare_csv(w, &columns)?))?;
    Ok(())
}

// ---- quantum-bifurcation

fn estimate_quantum(cfg: &RunConfig) -> Result<Estimate> {
    let q = &cfg.quantum_bifurcation;
    let grid = q.u.values()?;
    let p = cfg.model.with_particles(q.particles);
    let mut e = Estimate::default();
    e.add(grid.len() as f64 * estimate::lindblad(&p, &cfg.integrator, q.transient_periods + q.periods)?, true);
    if q.particles >= LARGE_LINDBLAD_N {
        e.flag(format!("Lindblad propagation at N = {}", q.particles));
    }
    Ok(e)
}

fn quantum_bifurcation(cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let q = &cfg.quantum_bifurcation;
    let grid = q.u.values()?;
    let p = cfg.model.with_particles(q.particles);
    let sweep = QuantumSweepConfig { integrator: with_transient(cfg, q.transient_periods), periods: q.periods };
    let columns = quantum_bifurcation_diagram(&p, &grid, &sweep)?;
    for c in &columns {
        if let Some(err) = &c.error {
            out.warn(format!("U = {} aborted: {err}", c.interaction));
        }
    }
    if columns.iter().all(|c| c.error.is_some()) {
        return Err(CliError::Numerical("every grid point failed".into()));
    }
    out.write_with("quantum_diagram.csv", |w| Ok(write_quantum_diagram_csv(w, &columns)?))
}

// ---- asymptotic-state estimates shared by husimi and bagel-diameter

fn estimate_state(cfg: &RunConfig, p: &ModelParams<f64>, s: &StateEstimate, e: &mut Estimate) -> Result<()> {
    match s.method {
        StateMethod::Lindblad => {
            e.add(estimate::lindblad(p, &cfg.integrator, s.periods)?, false);
            if p.particles >= LARGE_LINDBLAD_N {
                e.flag(format!("Lindblad propagation at N = {}", p.particles));
            }
        }
        StateMethod::Trajectories => {
            let periods = s.relax_periods + s.measure_periods;
            e.add(estimate::trajectories(p, &cfg.integrator, s.trajectories, periods)?, true);
            if s.relax_periods >= LARGE_RELAX_PERIODS {
                e.flag(format!("trajectory relaxation over {}T", s.relax_periods));
            }
        }
    }
    Ok(())
}

/// Stroboscopic asymptotic state at `p`, either propagated directly or
/// averaged over trajectories.
fn asymptotic_state(cfg: &RunConfig, p: &ModelParams<f64>, s: &StateEstimate) -> Result<DensityMatrix<f64>> {
    let ops = DimerOperators::build(p.particles)?;
    match s.method {
        StateMethod::Lindblad => {
            if s.periods == 0 {
                return Err(CliError::Usage("state.periods must be at least 1".into()));
            }
            let mut prop = LindbladPropagator::new(p, &ops, &cfg.integrator)?;
            let mut rho = DensityMatrix::fock(ops.dim, p.particles);
            prop.evolve(&mut rho, p.period * s.periods as f64)?;
            Ok(rho)
        }
        StateMethod::Trajectories => {
            if s.measure_periods == 0 {
                return Err(CliError::Usage("state.measure_periods must be at least 1".into()));
            }
            let ens = EnsembleConfig {
                trajectories: s.trajectories,
                relax_periods: s.relax_periods,
                measure_periods: s.measure_periods,
                seed: cfg.seed,
                integrator: cfg.integrator,
                stroboscopic_average: true,
            };
            let r = run_ensemble(p, &ops, &fock_psi(p.particles), &ens)?;
            Ok(r.rho_stroboscopic.expect("stroboscopic average requested"))
        }
    }
}

fn require_dissipation(p: &ModelParams<f64>) -> Result<()> {
    if p.gamma == 0.0 {
        return Err(CliError::Usage("gamma = 0 has no unique asymptotic state".into()));
    }
    Ok(())
}

// ---- husimi

fn estimate_husimi(cfg: &RunConfig) -> Result<Estimate> {
    let mut e = Estimate::default();
    estimate_state(cfg, &cfg.model, &cfg.husimi.state, &mut e)?;
    Ok(e)
}

#[derive(Serialize)]
struct BagelRecord {
    #[serde(rename = "N")]
    particles: usize,
    #[serde(rename = "U")]
    interaction: f64,
    method: StateMethod,
    #[serde(flatten)]
    measure: BagelMeasure,
    min_raw: f64,
}

fn husimi_snapshot(cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let h = &cfg.husimi;
    let p = cfg.model;
    require_dissipation(&p)?;
    h.grid.validate()?;
    if h.state.method == StateMethod::Trajectories {
        note_reduced(out, h.state.relax_periods, h.state.measure_periods);
    }
    let rho = asymptotic_state(cfg, &p, &h.state)?;
    let grid = husimi(&rho, &h.grid)?;
    let measure = bagel_diameter(&grid)?;
    out.write_with("husimi.csv", |w| Ok(write_husimi_csv(w, &grid)?))?;
    let record = BagelRecord {
        particles: p.particles,
        interaction: p.interaction,
        method: h.state.method,
        measure,
        min_raw: grid.min_raw,
    };
    write_json(out, "bagel.json", &record)?;
    if h.overlay_iterates > 0 {
        let x0 = MeanFieldState::new(cfg.meanfield_sweep.initial.0, cfg.meanfield_sweep.initial.1);
        let integ = with_transient(cfg, cfg.meanfield_sweep.transient_periods);
        let pts = spin_stroboscopic(&p, &x0, &integ, h.overlay_iterates)?;
        out.write_with("poincare_overlay.csv", |w| {
            writeln!(w, "m,theta,phi")?;
            for (m, s) in pts.iter().enumerate() {
                let x = MeanFieldState::from_spin(s, 0.0);
                writeln!(w, "{},{},{}", m + 1, x.theta, x.phi)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

// ---- trajectories

fn trajectory_grid(cfg: &RunConfig) -> Vec<f64> {
    if cfg.trajectories.u_values.is_empty() {
        vec![cfg.model.interaction]
    } else {
        cfg.trajectories.u_values.clone()
    }
}

fn estimate_trajectories(cfg: &RunConfig) -> Result<Estimate> {
    let t = &cfg.trajectories;
    let mut e = Estimate::default();
    for u in trajectory_grid(cfg) {
        let p = cfg.model.with_interaction(u);
        e.add(estimate::trajectories(&p, &cfg.integrator, t.trajectories, t.relax_periods + t.measure_periods)?, true);
    }
    if t.relax_periods >= LARGE_RELAX_PERIODS {
        e.flag(format!("trajectory relaxation over {}T", t.relax_periods));
    }
    Ok(e)
}

#[derive(Serialize)]
struct Edges<'a> {
    x: &'a str,
    y: &'a str,
    x_edges: &'a [f64],
    y_edges: &'a [f64],
}

fn trajectories(cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let t = &cfg.trajectories;
    if t.trajectories == 0 {
        return Err(CliError::Usage("trajectories must be at least 1".into()));
    }
    if t.measure_periods == 0 || t.histogram_bins == 0 || t.omega_bins == 0 {
        return Err(CliError::Usage("measure_periods, histogram_bins and omega_bins must be positive".into()));
    }
    note_reduced(out, t.relax_periods, t.measure_periods);
    let n = cfg.model.particles;
    let ops = DimerOperators::build(n)?;
    let mut summary = Vec::new();
    let mut omega_rows = Vec::new();
    for u in trajectory_grid(cfg) {
        let p = cfg.model.with_interaction(u);
        let ens = EnsembleConfig {
            trajectories: t.trajectories,
            relax_periods: t.relax_periods,
            measure_periods: t.measure_periods,
            seed: cfg.seed,
            integrator: cfg.integrator,
            stroboscopic_average: false,
        };
        let r = run_ensemble(&p, &ops, &fock_psi(n), &ens)?;
        let dir = format!("U{u}");
        out.write_with(&format!("{dir}/observables.csv"), |w| Ok(write_observables_csv(w, &r.records)?))?;
        let pooled: Vec<_> = r.records.iter().flat_map(|traj| scaled_points(traj, n)).collect();
        let hist = Histogram2d::from_points(&pooled, t.histogram_bins, t.histogram_bins)?;
        out.write_with(&format!("{dir}/histogram.csv"), |w| Ok(hist.write_csv(w)?))?;
        let edges = Edges { x: "n/N", y: "e/N", x_edges: &hist.x_edges, y_edges: &hist.y_edges };
        write_json(out, &format!("{dir}/histogram_edges.json"), &edges)?;
        let jumps = r.jumps.iter().sum::<u64>() as f64
            / (t.trajectories * (t.relax_periods + t.measure_periods)) as f64;
        match rotation_numbers_pooled(&r.records) {
            Ok(rot) => {
                out.write_with(&format!("{dir}/rotation.csv"), |w| Ok(write_rotation_csv(w, &rot)?))?;
                let pts: Vec<(f64, f64)> = r.records.iter().flatten().map(|x| (x.n, x.e)).collect();
                let lobes = count_lobes(&rot.frame, &pts, LOBE_BINS, LOBE_PROMINENCE);
                for (k, v) in omega_histogram(&rot.omegas(), t.omega_bins).iter().enumerate() {
                    omega_rows.push((u, (k as f64 + 0.5) / t.omega_bins as f64, *v));
                }
                summary.push((u, rot.mean_omega, rot.mode_omega, lobes as f64, jumps));
            }
            Err(e) => {
                out.warn(format!("U = {u}: no rotation numbers ({e})"));
                summary.push((u, f64::NAN, f64::NAN, f64::NAN, jumps));
            }
        }
    }
    out.write_with("rotation_summary.csv", |w| {
        writeln!(w, "U,mean_omega,mode_omega,lobes,jumps_per_period")?;
        for (u, mean, mode, lobes, jumps) in &summary {
            writeln!(w, "{u},{mean},{mode},{lobes},{jumps}")?;
        }
        Ok(())
    })?;
    out.write_with("rotation_histogram.csv", |w| {
        writeln!(w, "U,omega_center,normalized_count")?;
        for (u, c, v) in &omega_rows {
            writeln!(w, "{u},{c},{v}")?;
        }
        Ok(())
    })?;
    Ok(())
}

// ---- floquet

fn floquet_sizes(cfg: &RunConfig) -> Vec<usize> {
    let mut sizes = cfg.floquet.n_list.clone();
    if cfg.floquet.spectrum && !sizes.contains(&cfg.model.particles) {
        sizes.push(cfg.model.particles);
    }
    sizes
}

fn estimate_floquet(cfg: &RunConfig) -> Result<Estimate> {
    let mut e = Estimate::default();
    for n in floquet_sizes(cfg) {
        if n > cfg.floquet.cap {
            return Err(CliError::Usage(format!("N = {n} exceeds the Floquet cap of {}", cfg.floquet.cap)));
        }
        e.add(estimate::floquet(&cfg.model.with_particles(n), &cfg.integrator)?, true);
    }
    Ok(e)
}

#[derive(Serialize)]
struct SlowPair {
    #[serde(rename = "N")]
    particles: usize,
    #[serde(rename = "U")]
    interaction: f64,
    mu1: Complex64,
    mu2: Complex64,
    mu3: Complex64,
    gap: f64,
    phase: f64,
    pairing_error: f64,
}

fn floquet(cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let f = &cfg.floquet;
    if !f.spectrum && f.n_list.is_empty() {
        return Err(CliError::Usage("nothing to do: spectrum disabled and n_list empty".into()));
    }
    let fcfg = FloquetConfig { integrator: cfg.integrator, cap: f.cap };
    let mut rows = Vec::new();
    for n in floquet_sizes(cfg) {
        let p = cfg.model.with_particles(n);
        let ops = DimerOperators::build(n)?;
        let map = build_floquet_map(&p, &ops, &fcfg, f.stacking.into())?;
        let s = floquet_spectrum(&map)?;
        if f.spectrum && n == cfg.model.particles {
            out.write_with("spectrum.csv", |w| Ok(write_spectrum_csv(w, &s)?))?;
            let mu = |k: usize| if k < s.eigenvalues.len() { s.mu(k) } else { Complex64::new(f64::NAN, f64::NAN) };
            let pair = SlowPair {
                particles: n,
                interaction: p.interaction,
                mu1: mu(0),
                mu2: mu(1),
                mu3: mu(2),
                gap: s.gap,
                phase: s.slow_pair_phase,
                pairing_error: s.pairing_error,
            };
            write_json(out, "slow_pair.json", &pair)?;
        }
        if f.n_list.contains(&n) {
            rows.push(GapRow {
                particles: n,
                interaction: p.interaction,
                gap: s.gap,
                phase: s.slow_pair_phase,
                t_relax_estimate: s.relaxation_periods(),
            });
        }
    }
    if !rows.is_empty() {
        rows.sort_by_key(|r| f.n_list.iter().position(|&n| n == r.particles));
        out.write_with("gap.csv", |w| Ok(write_gap_csv(w, &rows)?))?;
    }
    Ok(())
}

// ---- bagel-diameter

fn bagel_points(cfg: &RunConfig) -> Result<Vec<(usize, f64)>> {
    let b = &cfg.bagel_diameter;
    if b.n_values.is_empty() {
        return Err(CliError::Usage("n_values is empty".into()));
    }
    let grid = b.u.values()?;
    Ok(b.n_values.iter().flat_map(|&n| grid.iter().map(move |&u| (n, u))).collect())
}

fn estimate_bagel(cfg: &RunConfig) -> Result<Estimate> {
    let mut e = Estimate::default();
    for (n, u) in bagel_points(cfg)? {
        let p = cfg.model.with_particles(n).with_interaction(u);
        estimate_state(cfg, &p, &cfg.bagel_diameter.state, &mut e)?;
    }
    // Points are independent and run side by side.
    e.parallel_fraction = 1.0;
    Ok(e)
}

fn bagel_sweep(cfg: &RunConfig, out: &mut OutputSet) -> Result<()> {
    let b = &cfg.bagel_diameter;
    let points = bagel_points(cfg)?;
    require_dissipation(&cfg.model)?;
    b.grid.validate()?;
    if b.state.method == StateMethod::Trajectories {
        note_reduced(out, b.state.relax_periods, b.state.measure_periods);
    }
    let spec: GridSpec = b.grid;
    let measures: Vec<Result<BagelMeasure>> = points
        .par_iter()
        .map(|&(n, u)| {
            let p = cfg.model.with_particles(n).with_interaction(u);
            let rho = asymptotic_state(cfg, &p, &b.state)?;
            Ok(bagel_diameter(&husimi(&rho, &spec)?)?)
        })
        .collect();
    let measures = measures.into_iter().collect::<Result<Vec<_>>>()?;
    out.write_with("bagel_diameter.csv", |w| {
        writeln!(w, "N,U,D,unimodal")?;
        for ((n, u), m) in points.iter().zip(&measures) {
            writeln!(w, "{n},{u},{},{}", m.diameter, m.is_unimodal)?;
        }
        Ok(())
    })?;
    out.write_with("bagel_onset.csv", |w| {
        writeln!(w, "N,U_onset")?;
        for &n in &b.n_values {
            let onset = points
                .iter()
                .zip(&measures)
                .find(|((pn, _), m)| *pn == n && !m.is_unimodal)
                .map(|((_, u), _)| u.to_string())
                .unwrap_or_default();
            writeln!(w, "{n},{onset}")?;
        }
        Ok(())
    })?;
    Ok(())
}
