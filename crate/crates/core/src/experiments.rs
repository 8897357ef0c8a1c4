//! Ensemble sweeps over hold time, gaussian-fit location of the revival time,
//! trap-frequency scans and the anharmonic-trap study.
//!
//! Randomness: realisation `r` at hold-time index `i` draws from a ChaCha8
//! generator seeded with the master seed on stream `i * n_realisations + r`.
//! Draw order within a stream is trap offset, Bloch phase, width noise (each
//! only if enabled). Work items can therefore run in any order on any thread.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::analytic::{evolve_folded, momentum_density, talbot_time, MomentumGrid, DEFAULT_N_Q};
use crate::error::{Error, Result};
use crate::fit::{fit_gaussian, GaussianFit};
use crate::model::{ExperimentConfig, SiteAmplitudes, TrapKind};
use crate::observables::{build_carpet, momentum_width, width_extrema, Carpet, WidthSample, WidthSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaSampling {
    FixedZero,
    /// Uniform on `[-1/2, 1/2]`, fresh for every realisation.
    UniformRandom,
}

/// Bloch phase at the moment of imaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlochPhase {
    /// Imaged at an integer number of Bloch periods.
    Folded,
    /// Hold time jittered within one Bloch period, so the phase is uniform on `[0, 2 pi)`.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    pub n_realisations: usize,
    pub delta_sampling: DeltaSampling,
    pub bloch_phase: BlochPhase,
    pub seed: u64,
    pub n_q: usize,
    /// Standard deviation of additive gaussian noise on each width (hbar k).
    pub dp_noise: Option<f64>,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            n_realisations: 10,
            delta_sampling: DeltaSampling::UniformRandom,
            bloch_phase: BlochPhase::UniformRandom,
            seed: 0,
            n_q: DEFAULT_N_Q,
            dp_noise: None,
        }
    }
}

impl EnsembleSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_realisations == 0 {
            return Err(Error::Validation("n_realisations must be at least 1".into()));
        }
        if self.n_q < 2 {
            return Err(Error::Validation("n_q must be at least 2".into()));
        }
        if let Some(s) = self.dp_noise {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Validation("dp_noise must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub hold_times: Vec<f64>,
    pub ensemble: EnsembleSettings,
}

impl SweepPlan {
    pub fn new(hold_times: Vec<f64>, ensemble: EnsembleSettings) -> Self {
        Self { hold_times, ensemble }
    }

    /// `n` evenly spaced hold times over `[start, end]`.
    pub fn linspace(start: f64, end: f64, n: usize, ensemble: EnsembleSettings) -> Self {
        Self::new(linspace(start, end, n), ensemble)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hold_times.is_empty() {
            return Err(Error::Validation("hold_times must be non-empty".into()));
        }
        if self.hold_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Validation("hold_times must be finite and non-negative".into()));
        }
        if self.hold_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("hold_times must be strictly increasing".into()));
        }
        self.ensemble.validate()
    }
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn realisation_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `c_j -> c_j exp(-i theta j)`: translates the momentum density by `theta / d`.
fn apply_bloch_phase(state: &mut SiteAmplitudes, theta: f64) {
    let j_min = state.j_min;
    for (i, c) in state.amps.iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -theta * (j_min + i as i64) as f64);
    }
}

fn realise(
    config: &ExperimentConfig,
    state0: &SiteAmplitudes,
    grid: &MomentumGrid,
    ensemble: &EnsembleSettings,
    t: f64,
    stream: u64,
) -> Result<WidthSample> {
    let mut rng = realisation_rng(ensemble.seed, stream);
    let delta = match ensemble.delta_sampling {
        DeltaSampling::FixedZero => 0.0,
        DeltaSampling::UniformRandom => rng.random_range(-0.5..=0.5),
    };
    let theta = match ensemble.bloch_phase {
        BlochPhase::Folded => 0.0,
        BlochPhase::UniformRandom => rng.random_range(0.0..2.0 * PI),
    };
    let mut cfg = config.clone();
    cfg.trap.delta = delta;
    let mut state = evolve_folded(state0, &cfg, t)?;
    if theta != 0.0 {
        apply_bloch_phase(&mut state, theta);
    }
    let mut dp = momentum_width(&momentum_density(&state, grid)?);
    if let Some(sigma) = ensemble.dp_noise.filter(|s| *s > 0.0) {
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Validation(e.to_string()))?;
        dp = (dp + noise.sample(&mut rng)).clamp(0.0, 2.0);
    }
    Ok(WidthSample {
        t_hold: t,
        delta_used: delta,
        bloch_phase: theta,
        dp,
    })
}

/// Width extrema of the ensemble at every hold time of the plan.
pub fn run_sweep(config: &ExperimentConfig, plan: &SweepPlan) -> Result<Vec<WidthSeries>> {
    config.validate()?;
    plan.validate()?;
    let ens = &plan.ensemble;
    let state0 = config.initial_state()?;
    let grid = MomentumGrid::for_config(config, ens.n_q)?;
    let n_r = ens.n_realisations;
    let samples = (0..plan.hold_times.len() * n_r)
        .into_par_iter()
        .map(|item| realise(config, &state0, &grid, ens, plan.hold_times[item / n_r], item as u64))
        .collect::<Result<Vec<_>>>()?;
    samples.chunks(n_r).map(width_extrema).collect()
}

/// Hold-time window for a revival scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanWindow {
    pub start: f64,
    pub end: f64,
    pub n_points: usize,
}

impl ScanWindow {
    pub const DEFAULT_RELATIVE_HALF_WIDTH: f64 = 0.15;
    pub const DEFAULT_POINTS: usize = 21;

    /// `n_points` times across `centre (1 +- relative_half_width)`.
    pub fn around(centre: f64, relative_half_width: f64, n_points: usize) -> Self {
        Self {
            start: centre * (1.0 - relative_half_width),
            end: centre * (1.0 + relative_half_width),
            n_points,
        }
    }

    /// Default window around the theoretical revival time of `config`.
    pub fn for_config(config: &ExperimentConfig) -> Result<Self> {
        Ok(Self::around(
            talbot_time(config)?,
            Self::DEFAULT_RELATIVE_HALF_WIDTH,
            Self::DEFAULT_POINTS,
        ))
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(self.start, self.end, self.n_points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && self.start >= 0.0 && self.end > self.start) {
            return Err(Error::Validation("scan window needs 0 <= start < end".into()));
        }
        if self.n_points < 5 {
            return Err(Error::Validation("scan window needs at least 5 points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TalbotScanResult {
    pub omega_z: f64,
    pub t_fit: f64,
    /// 1-sigma uncertainty of the fitted centre (s).
    pub t_sigma: f64,
    pub t_theory: f64,
    pub fit: GaussianFit,
    pub series: Vec<WidthSeries>,
}

impl TalbotScanResult {
    pub fn nu_z(&self) -> f64 {
        self.omega_z / (2.0 * PI)
    }

    pub fn relative_error(&self) -> f64 {
        (self.t_fit - self.t_theory).abs() / self.t_theory
    }
}

/// Scans the spread `D` over the window and fits a gaussian to locate its maximum.
pub fn locate_talbot_time(
    config: &ExperimentConfig,
    window: &ScanWindow,
    ensemble: &EnsembleSettings,
) -> Result<TalbotScanResult> {
    window.validate()?;
    let t_theory = talbot_time(config)?;
    let miss = |center: f64| Error::WindowMiss {
        center,
        start: window.start,
        end: window.end,
    };
    if t_theory <= window.start || t_theory >= window.end {
        return Err(miss(t_theory));
    }
    let plan = SweepPlan::new(window.times(), ensemble.clone());
    let series = run_sweep(config, &plan)?;
    let points: Vec<(f64, f64)> = series.iter().map(|s| (s.t_hold, s.d_spread)).collect();
    let fit = fit_gaussian(&points, None)?;
    let margin = 0.5 * (window.end - window.start) / (window.n_points - 1) as f64;
    let tc = fit.params.center;
    if !(tc > window.start + margin && tc < window.end - margin) || fit.params.amplitude <= 0.0 {
        return Err(miss(tc));
    }
    Ok(TalbotScanResult {
        omega_z: config.trap.omega_z,
        t_fit: tc,
        t_sigma: fit.sigma.center,
        t_theory,
        fit,
        series,
    })
}

/// One revival scan per trap frequency, each with the default window around its theory value.
pub fn omega_sweep(
    template: &ExperimentConfig,
    omegas: &[f64],
    ensemble: &EnsembleSettings,
) -> Result<Vec<TalbotScanResult>> {
    if let Some(w) = omegas.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Validation(format!("trap frequency {w} must be positive")));
    }
    omegas
        .par_iter()
        .map(|&omega| {
            let mut config = template.clone();
            config.trap.omega_z = omega;
            locate_talbot_time(&config, &ScanWindow::for_config(&config)?, ensemble)
        })
        .collect()
}

/// A spread maximum after the main revival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subrevival {
    pub index: usize,
    pub t_hold: f64,
    pub d_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnharmonicStudy {
    pub t_talbot: f64,
    pub series: Vec<WidthSeries>,
    pub carpet: Carpet,
    /// Index into `series` of the largest spread near the nominal revival.
    pub main_revival: Option<usize>,
    pub subrevivals: Vec<Subrevival>,
}

/// Same configuration with the gaussian well replaced by its harmonic approximation.
pub fn harmonic_reference(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.trap.kind = TrapKind::Harmonic;
    c
}

/// Minimum ensemble width at the nominal revival time.
pub fn revival_imperfection(config: &ExperimentConfig, ensemble: &EnsembleSettings) -> Result<f64> {
    let plan = SweepPlan::new(vec![talbot_time(config)?], ensemble.clone());
    Ok(run_sweep(config, &plan)?[0].dp_min)
}

/// Largest width difference between two sweeps over the same hold times.
pub fn max_width_deviation(a: &[WidthSeries], b: &[WidthSeries]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.samples.iter().zip(&y.samples).map(|(s, u)| (s.dp - u.dp).abs()))
        .fold(0.0, f64::max)
}

/// Index of the largest spread with `t_hold` in `[from, to]`.
pub fn main_revival(series: &[WidthSeries], from: f64, to: f64) -> Option<usize> {
    series
        .iter()
        .enumerate()
        .filter(|(_, s)| s.t_hold >= from && s.t_hold <= to)
        .max_by(|a, b| a.1.d_spread.total_cmp(&b.1.d_spread))
        .map(|(i, _)| i)
}

/// Local spread maxima after `main`, each at least a quarter of the main
/// spread and separated from the previous maximum by a dip below half its height.
pub fn find_subrevivals(series: &[WidthSeries], main: usize) -> Vec<Subrevival> {
    let d: Vec<f64> = series.iter().map(|s| s.d_spread).collect();
    let Some(&d_main) = d.get(main) else {
        return Vec::new();
    };
    let mut found = Vec::new();
    let mut last = main;
    for i in main + 1..d.len().saturating_sub(1) {
        if !(d[i] > d[i - 1] && d[i] >= d[i + 1] && d[i] >= 0.25 * d_main) {
            continue;
        }
        let dip = d[last..=i].iter().cloned().fold(f64::INFINITY, f64::min);
        if dip <= 0.5 * d[i] {
            found.push(Subrevival {
                index: i,
                t_hold: series[i].t_hold,
                d_spread: d[i],
            });
            last = i;
        }
    }
    found
}

/// Sweep plus quantum carpet for a gaussian trap.
///
/// The main revival is searched within 10% of the nominal time; subrevivals
/// are spread maxima after it.
pub fn anharmonic_study(config: &ExperimentConfig, plan: &SweepPlan, carpet_cycles: u64) -> Result<AnharmonicStudy> {
    if !matches!(config.trap.kind, TrapKind::Gaussian { .. }) {
        return Err(Error::WrongTrapKind);
    }
    let t_talbot = talbot_time(config)?;
    let series = run_sweep(config, plan)?;
    let grid = MomentumGrid::for_config(config, plan.ensemble.n_q)?;
    let carpet = build_carpet(&config.initial_state()?, config, carpet_cycles, &grid)?;
    let main = main_revival(&series, 0.9 * t_talbot, 1.1 * t_talbot);
    let subrevivals = main.map(|m| find_subrevivals(&series, m)).unwrap_or_default();
    Ok(AnharmonicStudy {
        t_talbot,
        series,
        carpet,
        main_revival: main,
        subrevivals,
    })
}
