//! Frozen-population phase evolution and quasimomentum transforms.
//!
//! With tunnelling suppressed by the tilt, each site only accumulates the phase
//! `E_j t / hbar` of its own energy
//!
//! ```text
//! E_j = F d j + V_trap(j - delta) + E_int(j)
//! ```
//!
//! and the quasimomentum wave function is the lattice sum
//! `Psi(q) = sum_j c_j exp(-i q j d)`. At integer multiples of the Bloch period
//! the tilt term drops out; the "folded" routines below omit it altogether.
//!
//! The Talbot time is `T = h/(m omega_z^2 d^2)`. With `beta_tr = m omega_z^2 d^2/2`
//! the trap phase at `t = T` is exactly `pi j^2`, so the density returns translated
//! by half the zone at odd multiples of `T` and untouched at even ones.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ExperimentConfig, SiteAmplitudes};

/// Per-site energy contributions driving the phase evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub j_min: i64,
    /// `F d j` (J).
    pub tilt: Vec<f64>,
    /// Trap energy `beta_tr (j - delta)^2`, or the gaussian well energy (J).
    pub trap: Vec<f64>,
    /// Interaction energy (J); populations are frozen so on-site terms are constant.
    pub interaction: Vec<f64>,
    hbar: f64,
}

impl PhaseMap {
    pub fn new(config: &ExperimentConfig, state0: &SiteAmplitudes) -> Self {
        let d = config.spacing();
        let mass = config.constants.mass;
        let force = config.tilt.effective_force();
        let delta = config.trap.delta;
        let sites = 0..state0.len();
        Self {
            j_min: state0.j_min,
            tilt: sites.clone().map(|i| force * d * state0.site(i) as f64).collect(),
            trap: sites
                .clone()
                .map(|i| config.trap.site_energy(state0.site(i), mass, d))
                .collect(),
            interaction: sites
                .map(|i| {
                    config
                        .interaction
                        .site_energy(state0.site(i), delta, state0.amps[i].norm_sqr())
                })
                .collect(),
            hbar: config.hbar(),
        }
    }

    /// Total phase `phi_j(t)` of every site; `with_tilt = false` folds out the Bloch term.
    pub fn phases(&self, t: f64, with_tilt: bool) -> Vec<f64> {
        (0..self.trap.len())
            .map(|i| {
                let mut e = self.trap[i] + self.interaction[i];
                if with_tilt {
                    e += self.tilt[i];
                }
                e * t / self.hbar
            })
            .collect()
    }

    fn apply(&self, state0: &SiteAmplitudes, t: f64, with_tilt: bool) -> SiteAmplitudes {
        let amps = state0
            .amps
            .iter()
            .zip(self.phases(t, with_tilt))
            .map(|(c, phi)| c * Complex64::from_polar(1.0, -phi))
            .collect();
        SiteAmplitudes::new(state0.j_min, amps)
    }
}

/// `T_Bloch = 2 pi hbar / (F d)`.
pub fn bloch_period(config: &ExperimentConfig) -> Result<f64> {
    if !config.tilt.enabled {
        return Err(Error::TiltDisabled);
    }
    Ok(2.0 * PI * config.hbar() / (config.tilt.force * config.spacing()))
}

/// `T_Talbot = h / (m omega_z^2 d^2)`.
pub fn talbot_time(config: &ExperimentConfig) -> Result<f64> {
    let omega = config.trap.omega_z;
    if !(omega > 0.0) {
        return Err(Error::ZeroFrequency);
    }
    let d = config.spacing();
    Ok(config.constants.h / (config.constants.mass * omega * omega * d * d))
}

/// Lab-frame amplitudes at time `t`, tilt phase included.
pub fn evolve_phases(state0: &SiteAmplitudes, config: &ExperimentConfig, t: f64) -> Result<SiteAmplitudes> {
    config.validate()?;
    Ok(PhaseMap::new(config, state0).apply(state0, t, true))
}

/// Amplitudes at `t` in the frame where the Bloch phase is folded out.
///
/// Identical to [`evolve_phases`] whenever `t` is an integer multiple of the
/// Bloch period.
pub fn evolve_folded(state0: &SiteAmplitudes, config: &ExperimentConfig, t: f64) -> Result<SiteAmplitudes> {
    config.validate()?;
    Ok(PhaseMap::new(config, state0).apply(state0, t, false))
}

/// Uniform quasimomentum samples `q_i = -k + 2 k i / n_q`, covering `[-k, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumGrid {
    /// Zone edge `k` (1/m).
    pub k: f64,
    pub n_q: usize,
}

/// Default number of quasimomentum samples.
pub const DEFAULT_N_Q: usize = 1024;

impl MomentumGrid {
    pub fn new(n_q: usize, k: f64) -> Result<Self> {
        if n_q < 2 {
            return Err(Error::Validation("momentum grid needs at least 2 samples".into()));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Validation("zone edge k must be positive".into()));
        }
        Ok(Self { k, n_q })
    }

    pub fn for_config(config: &ExperimentConfig, n_q: usize) -> Result<Self> {
        Self::new(n_q, config.recoil_k())
    }

    /// Grid step (1/m).
    pub fn step(&self) -> f64 {
        2.0 * self.k / self.n_q as f64
    }

    /// Grid step in units of k.
    pub fn unit_step(&self) -> f64 {
        2.0 / self.n_q as f64
    }

    /// Sample `i` in units of k.
    pub fn q_over_k(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / self.n_q as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_over_k(i) * self.k
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_q).map(|i| self.q(i)).collect()
    }

    /// Lattice spacing implied by the zone edge, `d = pi/k`.
    pub fn spacing(&self) -> f64 {
        PI / self.k
    }

    /// Wraps `q` into `[-k, k)`.
    pub fn wrap(&self, q: f64) -> f64 {
        wrap_zone(q, self.k)
    }
}

fn wrap_zone(q: f64, k: f64) -> f64 {
    let width = 2.0 * k;
    let w = q - width * ((q + k) / width).floor();
    // floor can land exactly on +k after rounding
    if w >= k {
        w - width
    } else {
        w
    }
}

/// `|Psi(q)|^2` on a grid, normalized to unit integral over `q/k` in `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumDensity {
    pub grid: MomentumGrid,
    pub density: Vec<f64>,
}

impl MomentumDensity {
    /// Normalizes `values` so that the periodic trapezoidal zone integral is 1.
    pub fn from_values(grid: MomentumGrid, values: Vec<f64>) -> Result<Self> {
        assert_eq!(values.len(), grid.n_q, "density length must match the grid");
        let total = grid.unit_step() * values.iter().sum::<f64>();
        if !(total > 0.0) {
            return Err(Error::ZeroDensity);
        }
        let density = values.into_iter().map(|v| v / total).collect();
        Ok(Self { grid, density })
    }

    /// Trapezoidal zone integral; periodic closure makes this `h sum rho_i`.
    pub fn integral(&self) -> f64 {
        self.grid.unit_step() * self.density.iter().sum::<f64>()
    }

    /// Circular translation by `shift` grid steps towards positive q.
    pub fn rolled(&self, shift: i64) -> Self {
        let n = self.density.len() as i64;
        let density = (0..n)
            .map(|i| self.density[(i - shift).rem_euclid(n) as usize])
            .collect();
        Self {
            grid: self.grid,
            density,
        }
    }

    /// Reflection `q -> -q`; sample 0 (the zone edge) maps onto itself.
    pub fn reflected(&self) -> Self {
        let n = self.density.len();
        let density = (0..n).map(|i| self.density[(n - i) % n]).collect();
        Self {
            grid: self.grid,
            density,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        self.density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }
}

/// `Psi(q) = sum_j c_j exp(-i q j d)` at each grid point, by direct summation.
pub fn quasimomentum_wavefunction(state: &SiteAmplitudes, grid: &MomentumGrid) -> Vec<Complex64> {
    let d = grid.spacing();
    (0..grid.n_q)
        .map(|i| {
            let q = grid.q(i);
            let step = Complex64::from_polar(1.0, -q * d);
            let mut phase = Complex64::from_polar(1.0, -q * d * state.j_min as f64);
            let mut sum = Complex64::new(0.0, 0.0);
            for c in &state.amps {
                sum += c * phase;
                phase *= step;
            }
            sum
        })
        .collect()
}

pub fn momentum_density(state: &SiteAmplitudes, grid: &MomentumGrid) -> Result<MomentumDensity> {
    let values = quasimomentum_wavefunction(state, grid)
        .into_iter()
        .map(|psi| psi.norm_sqr())
        .collect();
    MomentumDensity::from_values(*grid, values)
}

/// Folded momentum density at hold time `t`.
pub fn folded_density(
    state0: &SiteAmplitudes,
    config: &ExperimentConfig,
    t: f64,
    grid: &MomentumGrid,
) -> Result<MomentumDensity> {
    momentum_density(&evolve_folded(state0, config, t)?, grid)
}

/// Maps a quasimomentum onto the Bloch-swept value `q + F t / hbar`, wrapped into `[-k, k)`.
pub fn bloch_fold(q_raw: f64, t: f64, config: &ExperimentConfig) -> Result<f64> {
    if !config.tilt.enabled {
        return Err(Error::TiltDisabled);
    }
    let k = config.recoil_k();
    // sweep through whole zones is exact, so keep only the fractional cycle
    let cycles = (t / bloch_period(config)?).rem_euclid(1.0);
    Ok(wrap_zone(q_raw + 2.0 * k * cycles, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialEnvelope, InteractionMode, LatticeSpec, TrapKind};
    use approx::assert_relative_eq;

    fn zero_state(n: usize) -> SiteAmplitudes {
        let half = (n as i64 - 1) / 2;
        SiteAmplitudes::new(-half, vec![Complex64::new(0.0, 0.0); n])
    }

    /// Brute-force transform with an independent `exp` per term.
    fn brute_transform(state: &SiteAmplitudes, q: f64, d: f64) -> Complex64 {
        state
            .iter()
            .map(|(j, c)| c * Complex64::new(0.0, -q * j as f64 * d).exp())
            .sum()
    }

    #[test]
    fn bloch_period_for_cesium_in_gravity() {
        let config = ExperimentConfig::default();
        let tb = bloch_period(&config).unwrap();
        assert!((tb / 0.575e-3 - 1.0).abs() < 5e-3, "T_Bloch = {tb}");
        // h/(m g d) evaluated with CODATA constants
        assert_relative_eq!(tb, 5.752_226e-4, max_relative = 1e-6);

        let mut doubled = config.clone();
        doubled.tilt.force *= 2.0;
        assert_relative_eq!(bloch_period(&doubled).unwrap(), tb / 2.0, max_relative = 1e-15);

        let mut off = config;
        off.tilt.enabled = false;
        assert!(matches!(bloch_period(&off), Err(Error::TiltDisabled)));
    }

    #[test]
    fn talbot_time_examples() {
        let t22 = talbot_time(&ExperimentConfig::with_nu_z(22.0)).unwrap();
        assert!((t22 - 0.555).abs() < 0.010, "T_Talbot(22 Hz) = {t22}");
        let t44 = talbot_time(&ExperimentConfig::with_nu_z(44.0)).unwrap();
        assert_relative_eq!(t44, t22 / 4.0, max_relative = 1e-14);
        let t269 = talbot_time(&ExperimentConfig::with_nu_z(26.9)).unwrap();
        assert!((t269 - 0.371).abs() < 0.001, "T_Talbot(26.9 Hz) = {t269}");
        assert!(matches!(
            talbot_time(&ExperimentConfig::with_nu_z(0.0)),
            Err(Error::ZeroFrequency)
        ));
    }

    #[test]
    fn trap_phase_is_pi_j_squared_at_talbot_time() {
        let config = ExperimentConfig::default();
        let s0 = config.initial_state().unwrap();
        let map = PhaseMap::new(&config, &s0);
        let t = talbot_time(&config).unwrap();
        for (i, phi) in map.phases(t, false).into_iter().enumerate() {
            let j = s0.site(i) as f64;
            assert!((phi - PI * j * j).abs() < 1e-12 * (1.0 + j * j));
        }
        assert!(map.phases(0.0, true).iter().all(|&p| p == 0.0));
    }

    #[test]
    fn evolution_at_zero_time_is_identity() {
        let config = ExperimentConfig::default();
        let s0 = config.initial_state().unwrap();
        assert_eq!(evolve_phases(&s0, &config, 0.0).unwrap(), s0);
    }

    #[test]
    fn evolution_keeps_every_modulus() {
        let mut config = ExperimentConfig::default();
        config.trap.delta = 0.31;
        config.interaction.mode = InteractionMode::QuadraticApprox;
        config.interaction.alpha_int = 1e-34;
        let s0 = config.initial_state().unwrap();
        let s = evolve_phases(&s0, &config, 0.123_456).unwrap();
        for (a, b) in s.amps.iter().zip(&s0.amps) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn two_talbot_times_restore_the_state_and_one_flips_odd_sites() {
        let config = ExperimentConfig::default();
        let s0 = config.initial_state().unwrap();
        let t = talbot_time(&config).unwrap();
        let s2 = evolve_folded(&s0, &config, 2.0 * t).unwrap();
        assert!(s2.max_abs_diff(&s0) < 1e-11);
        let s1 = evolve_folded(&s0, &config, t).unwrap();
        for (j, c) in s1.iter() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!((c - s0.amplitude(j) * sign).norm() < 1e-11);
        }
        // brute-force transforms: the (-1)^j state is the initial one moved by k
        let d = config.spacing();
        let k = config.recoil_k();
        for q in [-0.9 * k, -0.25 * k, 0.0, 0.4 * k] {
            let a = brute_transform(&s1, q, d).norm_sqr();
            let b = brute_transform(&s0, q - k, d).norm_sqr();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn single_site_gives_flat_density() {
        let mut s = zero_state(5);
        s.amps[2] = Complex64::new(1.0, 0.0);
        let grid = MomentumGrid::new(64, 1.0).unwrap();
        let rho = momentum_density(&s, &grid).unwrap();
        for v in &rho.density {
            assert_relative_eq!(*v, 0.5, max_relative = 1e-13);
        }
    }

    #[test]
    fn two_adjacent_sites_interfere_as_cos_squared() {
        let mut s = zero_state(5);
        s.amps[2] = Complex64::new(0.5f64.sqrt(), 0.0);
        s.amps[3] = Complex64::new(0.5f64.sqrt(), 0.0);
        let grid = MomentumGrid::new(128, 2.0).unwrap();
        let psi = quasimomentum_wavefunction(&s, &grid);
        let d = grid.spacing();
        for (i, p) in psi.iter().enumerate() {
            // |1 + e^{-iqd}|^2 / 2 = 2 cos^2(qd/2)
            let expected = 2.0 * (grid.q(i) * d / 2.0).cos().powi(2);
            assert!((p.norm_sqr() - expected).abs() < 1e-13);
        }
        let rho = momentum_density(&s, &grid).unwrap();
        assert_eq!(rho.argmax(), grid.n_q / 2);
    }

    #[test]
    fn linear_phase_translates_the_transform() {
        let config = ExperimentConfig::default();
        let s0 = config.initial_state().unwrap();
        let grid = MomentumGrid::for_config(&config, 256).unwrap();
        let shift = 37;
        let q0 = shift as f64 * grid.step();
        let d = grid.spacing();
        let phased = SiteAmplitudes::new(
            s0.j_min,
            s0.iter()
                .map(|(j, c)| c * Complex64::from_polar(1.0, -q0 * j as f64 * d))
                .collect(),
        );
        let a = quasimomentum_wavefunction(&s0, &grid);
        let b = quasimomentum_wavefunction(&phased, &grid);
        let n = grid.n_q;
        for i in 0..n {
            // Psi_phased(q) = Psi(q + q0)
            assert!((b[i] - a[(i + shift) % n]).norm() < 1e-12);
        }
    }

    #[test]
    fn direct_sum_matches_brute_force() {
        let mut config = ExperimentConfig::default();
        config.trap.delta = -0.2;
        let s0 = config.initial_state().unwrap();
        let s = evolve_phases(&s0, &config, 0.0371).unwrap();
        let grid = MomentumGrid::for_config(&config, 96).unwrap();
        let psi = quasimomentum_wavefunction(&s, &grid);
        for (i, p) in psi.iter().enumerate() {
            assert!((p - brute_transform(&s, grid.q(i), grid.spacing())).norm() < 1e-12);
        }
    }

    #[test]
    fn density_is_normalized() {
        let lattice = LatticeSpec {
            n_sites: 5,
            ..LatticeSpec::default()
        };
        let s = crate::model::build_initial_state(&InitialEnvelope::Uniform { half_width: 2.0 }, &lattice).unwrap();
        let grid = MomentumGrid::new(4096, lattice.recoil_k()).unwrap();
        let rho = momentum_density(&s, &grid).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-9);
        assert!(rho.density.iter().all(|&v| v >= 0.0));
        assert!(matches!(momentum_density(&zero_state(5), &grid), Err(Error::ZeroDensity)));
    }

    #[test]
    fn initial_density_is_one_narrow_central_peak() {
        let config = ExperimentConfig::default();
        let s0 = config.initial_state().unwrap();
        let grid = MomentumGrid::for_config(&config, DEFAULT_N_Q).unwrap();
        let rho = momentum_density(&s0, &grid).unwrap();
        assert_eq!(rho.argmax(), grid.n_q / 2);
        // half maximum reached well inside the zone
        let peak = rho.density[grid.n_q / 2];
        let hw = (0..grid.n_q / 2)
            .find(|&i| rho.density[grid.n_q / 2 + i] < peak / 2.0)
            .unwrap();
        assert!((hw as f64) * grid.step() < 0.1 * grid.k);
    }

    #[test]
    fn half_talbot_time_gives_two_equal_peaks_k_apart() {
        let config = ExperimentConfig::default();
        let s0 = config.initial_state().unwrap();
        let grid = MomentumGrid::for_config(&config, DEFAULT_N_Q).unwrap();
        let t = talbot_time(&config).unwrap();
        let rho = folded_density(&s0, &config, t / 2.0, &grid).unwrap();
        let n = grid.n_q;
        // peaks at q = 0 and at the zone edge
        let centre = rho.density[n / 2];
        let edge = rho.density[0];
        assert!((centre - edge).abs() < 1e-9 * centre);
        let quarter = rho.density[n / 4];
        assert!(quarter < 1e-3 * centre);
    }

    #[test]
    fn gaussian_trap_uses_exact_well_energy() {
        let mut config = ExperimentConfig::with_nu_z(31.1);
        config.trap.kind = TrapKind::Gaussian { waist: 46e-6 };
        let s0 = config.initial_state().unwrap();
        let map = PhaseMap::new(&config, &s0);
        let d = config.spacing();
        let m = config.constants.mass;
        let v0 = config.trap.depth(m).unwrap();
        for (i, e) in map.trap.iter().enumerate() {
            let z = s0.site(i) as f64 * d;
            let expected = v0 * (1.0 - (-2.0 * z * z / (46e-6f64).powi(2)).exp());
            assert!((e - expected).abs() <= 1e-12 * expected.max(1e-40));
        }
    }

    #[test]
    fn bloch_fold_examples() {
        let config = ExperimentConfig::default();
        let tb = bloch_period(&config).unwrap();
        let k = config.recoil_k();
        for n in 0..5 {
            let q = 0.3 * k;
            assert!((bloch_fold(q, n as f64 * tb, &config).unwrap() - q).abs() < 1e-9 * k);
        }
        let edge = bloch_fold(0.0, tb / 2.0, &config).unwrap();
        assert!((edge.abs() - k).abs() < 1e-9 * k);
        assert!((bloch_fold(0.0, tb / 4.0, &config).unwrap() - k / 2.0).abs() < 1e-9 * k);
        let v = bloch_fold(0.9 * k, 0.3 * tb, &config).unwrap();
        assert!((-k..k).contains(&v));
    }

    #[test]
    fn lab_frame_at_bloch_multiples_equals_folded_frame() {
        let mut config = ExperimentConfig::default();
        config.trap.delta = 0.17;
        let s0 = config.initial_state().unwrap();
        let tb = bloch_period(&config).unwrap();
        let t = 123.0 * tb;
        let a = evolve_phases(&s0, &config, t).unwrap();
        let b = evolve_folded(&s0, &config, t).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);
    }
}
