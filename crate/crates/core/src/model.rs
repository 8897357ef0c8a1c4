//! Physical constants, configuration types and the initial lattice state.
//!
//! Everything is stored in SI units. Site indices run symmetrically around
//! `j = 0`, so a lattice of `n_sites` (odd) covers `-(n_sites-1)/2 ..= (n_sites-1)/2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unified atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of a cesium-133 atom (kg).
pub const CESIUM_133_MASS: f64 = 132.905_451_961 * ATOMIC_MASS_UNIT;
/// Planck constant (J s), exact in SI.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant (J/K), exact in SI.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Standard gravity (m/s^2).
pub const STANDARD_GRAVITY: f64 = 9.806_65;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub h: f64,
    pub hbar: f64,
    pub k_b: f64,
    /// Atomic mass (kg).
    pub mass: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
}

impl PhysicalConstants {
    /// `hbar` is always derived from `h`.
    pub fn new(h: f64, k_b: f64, mass: f64, g: f64) -> Self {
        Self {
            h,
            hbar: h / (2.0 * PI),
            k_b,
            mass,
            g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("constants.h", self.h),
            ("constants.k_b", self.k_b),
            ("constants.mass", self.mass),
            ("constants.g", self.g),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be strictly positive")));
            }
        }
        if (self.hbar - self.h / (2.0 * PI)).abs() > 4.0 * f64::EPSILON * self.hbar {
            return Err(Error::Validation("constants.hbar must equal h/(2 pi)".into()));
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::new(PLANCK, BOLTZMANN, CESIUM_133_MASS, STANDARD_GRAVITY)
    }
}

/// Vertical standing-wave lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Laser wavelength (m).
    pub wavelength: f64,
    /// Lattice depth in units of the recoil energy.
    pub depth: f64,
    /// Number of sites; odd and at least 3.
    pub n_sites: usize,
}

impl LatticeSpec {
    /// Site spacing `d = lambda/2`.
    pub fn spacing(&self) -> f64 {
        self.wavelength / 2.0
    }

    /// Lattice wavenumber `k = pi/d`; the first Brillouin zone is `[-k, k)`.
    pub fn recoil_k(&self) -> f64 {
        PI / self.spacing()
    }

    /// Largest site index, `(n_sites - 1)/2`.
    pub fn half_size(&self) -> i64 {
        (self.n_sites as i64 - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::Validation("lattice.wavelength must be positive".into()));
        }
        if !(self.depth.is_finite() && self.depth >= 0.0) {
            return Err(Error::Validation("lattice.depth must be non-negative".into()));
        }
        if self.n_sites < 3 || self.n_sites % 2 == 0 {
            return Err(Error::Validation(format!(
                "lattice.n_sites must be odd and >= 3 (got {})",
                self.n_sites
            )));
        }
        Ok(())
    }
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            wavelength: 1064.48e-9,
            depth: 8.0,
            n_sites: 81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrapKind {
    Harmonic,
    /// Gaussian dipole-trap well with the given 1/e^2 intensity waist (m).
    Gaussian { waist: f64 },
}

/// Vertical external confinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub kind: TrapKind,
    /// Angular trap frequency along z (rad/s).
    pub omega_z: f64,
    /// Offset of the trap centre from the nearest lattice site, in units of d.
    pub delta: f64,
}

impl TrapSpec {
    pub fn harmonic(omega_z: f64) -> Self {
        Self {
            kind: TrapKind::Harmonic,
            omega_z,
            delta: 0.0,
        }
    }

    pub fn gaussian(omega_z: f64, waist: f64) -> Self {
        Self {
            kind: TrapKind::Gaussian { waist },
            omega_z,
            delta: 0.0,
        }
    }

    /// Trap frequency in Hz.
    pub fn nu_z(&self) -> f64 {
        self.omega_z / (2.0 * PI)
    }

    /// Quadratic site-energy coefficient `beta_tr = m omega_z^2 d^2 / 2`.
    pub fn beta(&self, mass: f64, spacing: f64) -> f64 {
        0.5 * mass * self.omega_z * self.omega_z * spacing * spacing
    }

    /// Well depth `V0 = m omega_z^2 w^2 / 4` of the gaussian kind.
    pub fn depth(&self, mass: f64) -> Option<f64> {
        match self.kind {
            TrapKind::Harmonic => None,
            TrapKind::Gaussian { waist } => Some(0.25 * mass * self.omega_z * self.omega_z * waist * waist),
        }
    }

    /// Potential energy at displacement `z` (m) from the trap centre.
    pub fn potential(&self, z: f64, mass: f64) -> f64 {
        match self.kind {
            TrapKind::Harmonic => 0.5 * mass * self.omega_z * self.omega_z * z * z,
            TrapKind::Gaussian { waist } => {
                let v0 = 0.25 * mass * self.omega_z * self.omega_z * waist * waist;
                // 1 - exp(-x) without cancellation for the nearly harmonic regime
                -v0 * (-2.0 * z * z / (waist * waist)).exp_m1()
            }
        }
    }

    /// Trap energy of lattice site `j`.
    pub fn site_energy(&self, j: i64, mass: f64, spacing: f64) -> f64 {
        self.potential((j as f64 - self.delta) * spacing, mass)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_z.is_finite() || self.omega_z < 0.0 {
            return Err(Error::Validation("trap.omega_z must be non-negative".into()));
        }
        if !(-0.5..=0.5).contains(&self.delta) {
            return Err(Error::Validation(format!(
                "trap.delta must lie in [-1/2, 1/2] (got {})",
                self.delta
            )));
        }
        if let TrapKind::Gaussian { waist } = self.kind {
            if !(waist.is_finite() && waist > 0.0) {
                return Err(Error::Validation("trap.waist must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Linear potential along the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltSpec {
    /// Force along z (N).
    pub force: f64,
    pub enabled: bool,
}

impl TiltSpec {
    pub fn gravity(constants: &PhysicalConstants) -> Self {
        Self {
            force: constants.mass * constants.g,
            enabled: true,
        }
    }

    /// Force actually acting on the atoms (0 when disabled).
    pub fn effective_force(&self) -> f64 {
        if self.enabled {
            self.force
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.force.is_finite() && self.force > 0.0) {
            return Err(Error::Validation("tilt.force must be positive when the tilt is enabled".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InteractionMode {
    Off,
    /// Site energy `-alpha_int (j - delta)^2`.
    QuadraticApprox,
    /// Site energy `u_onsite |c_j|^2`.
    OnSiteDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub mode: InteractionMode,
    /// Coefficient of the quadratic interaction phase (J).
    pub alpha_int: f64,
    /// On-site nonlinearity (J).
    pub u_onsite: f64,
}

impl InteractionSpec {
    pub fn off() -> Self {
        Self {
            mode: InteractionMode::Off,
            alpha_int: 0.0,
            u_onsite: 0.0,
        }
    }

    /// Interaction energy of site `j` with population `population`.
    pub fn site_energy(&self, j: i64, delta: f64, population: f64) -> f64 {
        match self.mode {
            InteractionMode::Off => 0.0,
            InteractionMode::QuadraticApprox => {
                let x = j as f64 - delta;
                -self.alpha_int * x * x
            }
            InteractionMode::OnSiteDensity => self.u_onsite * population,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha_int.is_finite() || !self.u_onsite.is_finite() {
            return Err(Error::Validation("interaction coefficients must be finite".into()));
        }
        Ok(())
    }
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self::off()
    }
}

/// Shape of the initial site populations `|c_j|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialEnvelope {
    /// `|c_j|^2 ∝ max(0, 1 - (j/j_R)^2)^2`, the column-integrated 3D Thomas-Fermi profile.
    ThomasFermiSquaredParabola { half_width: f64 },
    /// `|c_j|^2 ∝ exp(-(j/j_R)^2)`.
    Gaussian { half_width: f64 },
    /// Equal populations for `|j| <= j_R`.
    Uniform { half_width: f64 },
    /// Explicit populations placed on consecutive sites starting at `-(len/2)`.
    Custom { weights: Vec<f64> },
}

impl Default for InitialEnvelope {
    fn default() -> Self {
        Self::ThomasFermiSquaredParabola { half_width: 20.0 }
    }
}

/// Complex lattice-site amplitudes `c_j`, stored from `j_min` upwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteAmplitudes {
    pub j_min: i64,
    pub amps: Vec<Complex64>,
}

impl SiteAmplitudes {
    pub fn new(j_min: i64, amps: Vec<Complex64>) -> Self {
        Self { j_min, amps }
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// Site index of entry `i`.
    pub fn site(&self, i: usize) -> i64 {
        self.j_min + i as i64
    }

    /// `(j, c_j)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.amps.iter().enumerate().map(move |(i, c)| (self.j_min + i as i64, *c))
    }

    pub fn amplitude(&self, j: i64) -> Complex64 {
        let i = j - self.j_min;
        if i < 0 || i as usize >= self.amps.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.amps[i as usize]
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest `|a_j - b_j|` over the common site range.
    pub fn max_abs_diff(&self, other: &SiteAmplitudes) -> f64 {
        let lo = self.j_min.min(other.j_min);
        let hi = (self.j_min + self.len() as i64).max(other.j_min + other.len() as i64);
        (lo..hi)
            .map(|j| (self.amplitude(j) - other.amplitude(j)).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub constants: PhysicalConstants,
    pub lattice: LatticeSpec,
    pub trap: TrapSpec,
    pub tilt: TiltSpec,
    pub interaction: InteractionSpec,
    pub envelope: InitialEnvelope,
    /// Nearest-neighbour tunnelling energy J (J).
    pub tunneling: f64,
    pub rng_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let constants = PhysicalConstants::default();
        let lattice = LatticeSpec::default();
        let tunneling = tunneling_estimate(lattice.depth).expect("default depth is deep enough")
            * recoil_energy(&constants, &lattice);
        Self {
            constants,
            lattice,
            trap: TrapSpec::harmonic(2.0 * PI * 22.0),
            tilt: TiltSpec::gravity(&constants),
            interaction: InteractionSpec::off(),
            envelope: InitialEnvelope::default(),
            tunneling,
            rng_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Default configuration at trap frequency `nu_z` (Hz).
    pub fn with_nu_z(nu_z: f64) -> Self {
        let mut config = Self::default();
        config.trap.omega_z = 2.0 * PI * nu_z;
        config
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.lattice.validate()?;
        self.trap.validate()?;
        self.tilt.validate()?;
        self.interaction.validate()?;
        if !(self.tunneling.is_finite() && self.tunneling >= 0.0) {
            return Err(Error::Validation("lattice.tunneling must be non-negative".into()));
        }
        build_initial_state(&self.envelope, &self.lattice).map(|_| ())
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing()
    }

    pub fn recoil_k(&self) -> f64 {
        self.lattice.recoil_k()
    }

    pub fn hbar(&self) -> f64 {
        self.constants.hbar
    }

    /// Initial state for this configuration.
    pub fn initial_state(&self) -> Result<SiteAmplitudes> {
        build_initial_state(&self.envelope, &self.lattice)
    }
}

/// Photon recoil energy `E_R = h^2/(2 m lambda^2)`.
pub fn recoil_energy(constants: &PhysicalConstants, lattice: &LatticeSpec) -> f64 {
    constants.h * constants.h / (2.0 * constants.mass * lattice.wavelength * lattice.wavelength)
}

/// Deep-lattice estimate of the tunnelling energy in units of `E_R`:
/// `J/E_R = (4/sqrt(pi)) s^(3/4) exp(-2 sqrt(s))`.
///
/// Only an estimate; it is used for regime checks and as the default J.
pub fn tunneling_estimate(depth: f64) -> Result<f64> {
    if !(depth >= 1.0) {
        return Err(Error::ShallowLattice(depth));
    }
    Ok(4.0 / PI.sqrt() * depth.powf(0.75) * (-2.0 * depth.sqrt()).exp())
}

/// Real, non-negative, normalized amplitudes `c_j = sqrt(w_j / sum w)` over the full lattice.
pub fn build_initial_state(envelope: &InitialEnvelope, lattice: &LatticeSpec) -> Result<SiteAmplitudes> {
    lattice.validate()?;
    let half = lattice.half_size();
    let n = lattice.n_sites;

    let check_width = |w: f64| -> Result<()> {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Validation(format!("envelope.half_width must be positive (got {w})")));
        }
        if w > half as f64 {
            return Err(Error::SupportOverflow {
                half_width: w,
                lattice_half: half,
            });
        }
        Ok(())
    };

    let weights: Vec<f64> = match envelope {
        InitialEnvelope::ThomasFermiSquaredParabola { half_width } => {
            check_width(*half_width)?;
            (-half..=half)
                .map(|j| {
                    let x = j as f64 / half_width;
                    let p = (1.0 - x * x).max(0.0);
                    p * p
                })
                .collect()
        }
        InitialEnvelope::Gaussian { half_width } => {
            check_width(*half_width)?;
            (-half..=half)
                .map(|j| {
                    let x = j as f64 / half_width;
                    (-x * x).exp()
                })
                .collect()
        }
        InitialEnvelope::Uniform { half_width } => {
            check_width(*half_width)?;
            (-half..=half)
                .map(|j| if (j as f64).abs() <= *half_width { 1.0 } else { 0.0 })
                .collect()
        }
        InitialEnvelope::Custom { weights } => {
            if weights.len() > n {
                return Err(Error::SupportOverflow {
                    half_width: weights.len() as f64 / 2.0,
                    lattice_half: half,
                });
            }
            if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::Validation("envelope weights must be finite and non-negative".into()));
            }
            let start = -(weights.len() as i64 / 2);
            let mut full = vec![0.0; n];
            for (i, w) in weights.iter().enumerate() {
                full[(start + i as i64 + half) as usize] = *w;
            }
            full
        }
    };

    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptySupport);
    }
    let amps = weights
        .iter()
        .map(|w| Complex64::new((w / total).sqrt(), 0.0))
        .collect();
    Ok(SiteAmplitudes::new(-half, amps))
}
