//! Measured quantities derived from momentum densities.
//!
//! The Brillouin zone is periodic, so every comparison here (peaks, shifts,
//! carpets) wraps around the zone edge.

use rayon::prelude::*;

use crate::analytic::{bloch_period, folded_density, MomentumDensity, MomentumGrid};
use crate::error::{Error, Result};
use crate::model::{ExperimentConfig, SiteAmplitudes};

/// Peaks lower than this fraction of the global maximum in prominence are ignored.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.1;

/// Default minimum peak separation: `n_q / 24` grid steps.
pub fn default_min_separation(n_q: usize) -> usize {
    (n_q / 24).max(1)
}

/// One realisation's momentum width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthSample {
    pub t_hold: f64,
    pub delta_used: f64,
    /// Bloch phase at imaging in `[0, 2 pi)`; zero in the folded frame.
    pub bloch_phase: f64,
    /// Momentum width in units of hbar k, within `[0, 2]`.
    pub dp: f64,
}

/// Ensemble extrema of the momentum width at one hold time.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthSeries {
    pub t_hold: f64,
    pub dp_min: f64,
    pub dp_max: f64,
    /// `D = dp_max - dp_min`.
    pub d_spread: f64,
    pub n_realisations: usize,
    pub samples: Vec<WidthSample>,
}

/// `dp = 2 sqrt(<q^2>)` in units of hbar k, the second moment taken about the
/// zone centre and evaluated with the periodic trapezoidal rule.
pub fn momentum_width(density: &MomentumDensity) -> f64 {
    let g = &density.grid;
    let m2: f64 = g.unit_step()
        * density
            .density
            .iter()
            .enumerate()
            .map(|(i, rho)| g.q_over_k(i).powi(2) * rho)
            .sum::<f64>();
    2.0 * m2.sqrt()
}

/// Same as [`momentum_width`] but with the second moment taken about the mean.
pub fn central_momentum_width(density: &MomentumDensity) -> f64 {
    let g = &density.grid;
    let h = g.unit_step();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, rho) in density.density.iter().enumerate() {
        let q = g.q_over_k(i);
        m2 += q * q * rho;
        // the -k sample is shared with +k under the periodic closure; its first moment cancels
        if i > 0 {
            m1 += q * rho;
        }
    }
    m1 *= h;
    m2 *= h;
    2.0 * (m2 - m1 * m1).max(0.0).sqrt()
}

/// Min, max and spread of an ensemble at a fixed hold time.
pub fn width_extrema(samples: &[WidthSample]) -> Result<WidthSeries> {
    let first = samples.first().ok_or(Error::EmptyEnsemble)?;
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.dp), hi.max(s.dp)));
    Ok(WidthSeries {
        t_hold: first.t_hold,
        dp_min: lo,
        dp_max: hi,
        d_spread: hi - lo,
        n_realisations: samples.len(),
        samples: samples.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    /// Parabolically refined position in units of k, wrapped into `[-1, 1)`.
    pub position: f64,
    pub height: f64,
    pub prominence: f64,
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Lowest value met walking from `i` in direction `dir` until a sample higher
/// than `rho[i]` appears; `None` if the walk wraps all the way round.
fn walk_min(rho: &[f64], i: usize, dir: isize) -> Option<f64> {
    let n = rho.len() as isize;
    let mut lowest = rho[i];
    let mut pos = i as isize;
    for _ in 1..n {
        pos = (pos + dir).rem_euclid(n);
        let v = rho[pos as usize];
        if v > rho[i] {
            return Some(lowest);
        }
        lowest = lowest.min(v);
    }
    None
}

/// Local maxima of the wrapped density, filtered by topographic prominence
/// (at least `min_prominence` times the global maximum) and by a minimum
/// circular separation in grid steps. The highest peaks win separation conflicts.
pub fn find_peaks(density: &MomentumDensity, min_prominence: f64, min_separation: usize) -> Vec<Peak> {
    let rho = &density.density;
    let n = rho.len();
    let global_max = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let global_min = rho.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(global_max > global_min) {
        return Vec::new();
    }

    let mut candidates: Vec<Peak> = (0..n)
        .filter(|&i| {
            let left = rho[(i + n - 1) % n];
            let right = rho[(i + 1) % n];
            rho[i] > left && rho[i] >= right
        })
        .map(|i| {
            let base = match (walk_min(rho, i, -1), walk_min(rho, i, 1)) {
                (Some(l), Some(r)) => l.max(r),
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => global_min,
            };
            Peak {
                index: i,
                position: refine_position(density, i),
                height: rho[i],
                prominence: rho[i] - base,
            }
        })
        .filter(|p| p.prominence >= min_prominence * global_max)
        .collect();

    candidates.sort_by(|a, b| b.height.total_cmp(&a.height));
    let mut kept: Vec<Peak> = Vec::new();
    for p in candidates {
        if kept
            .iter()
            .all(|k| circular_distance(k.index, p.index, n) >= min_separation)
        {
            kept.push(p);
        }
    }
    kept.sort_by_key(|p| p.index);
    kept
}

fn refine_position(density: &MomentumDensity, i: usize) -> f64 {
    let rho = &density.density;
    let n = rho.len();
    let (l, c, r) = (rho[(i + n - 1) % n], rho[i], rho[(i + 1) % n]);
    let denom = l - 2.0 * c + r;
    let offset = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    let x = density.grid.q_over_k(i) + offset * 2.0 / n as f64;
    if x >= 1.0 {
        x - 2.0
    } else if x < -1.0 {
        x + 2.0
    } else {
        x
    }
}

pub fn count_peaks(density: &MomentumDensity, min_prominence: f64, min_separation: usize) -> usize {
    find_peaks(density, min_prominence, min_separation).len()
}

/// Circular lag (grid steps, in `[-n/2, n/2)`) by which `b` is translated relative to `a`.
///
/// The lag maximizes the cross-correlation `sum_i b_i a_{i - s}`. Lags whose
/// overlap ties the maximum to 1e-9 relative are resolved towards the smallest
/// magnitude, which matters for patterns that are themselves periodic in the zone.
pub fn pattern_shift_steps(a: &MomentumDensity, b: &MomentumDensity) -> i64 {
    let n = a.density.len();
    assert_eq!(n, b.density.len(), "densities must share a grid");
    let corr: Vec<f64> = (0..n)
        .map(|s| {
            (0..n)
                .map(|i| b.density[i] * a.density[(i + n - s) % n])
                .sum::<f64>()
        })
        .collect();
    let best = corr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half = (n / 2) as i64;
    (0..n)
        .filter(|&s| corr[s] >= best - 1e-9 * best.abs())
        .map(|s| {
            let s = s as i64;
            if s >= half {
                s - n as i64
            } else {
                s
            }
        })
        .min_by_key(|s| (s.abs(), *s))
        .unwrap_or(0)
}

/// Translation of `b` relative to `a` in units of hbar k, in `[-1, 1)`.
pub fn pattern_shift(a: &MomentumDensity, b: &MomentumDensity) -> f64 {
    let n = a.density.len() as f64;
    2.0 * pattern_shift_steps(a, b) as f64 / n
}

/// Folded momentum densities sampled at integer Bloch periods.
#[derive(Debug, Clone, PartialEq)]
pub struct Carpet {
    /// Sample times `n T_Bloch` (s).
    pub times: Vec<f64>,
    pub grid: MomentumGrid,
    pub rows: Vec<MomentumDensity>,
}

impl Carpet {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Index of the row closest in time to `t`.
    pub fn row_near(&self, t: f64) -> usize {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Rows at `t = n T_Bloch` for `n = 0 ..= n_cycles`.
pub fn build_carpet(
    state0: &SiteAmplitudes,
    config: &ExperimentConfig,
    n_cycles: u64,
    grid: &MomentumGrid,
) -> Result<Carpet> {
    let tb = bloch_period(config)?;
    let times: Vec<f64> = (0..=n_cycles).map(|n| n as f64 * tb).collect();
    let rows = times
        .par_iter()
        .map(|&t| folded_density(state0, config, t, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(Carpet {
        times,
        grid: *grid,
        rows,
    })
}
