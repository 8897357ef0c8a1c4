//! Fixed-step RK4 integration of the discrete nonlinear lattice equation
//!
//! ```text
//! i hbar dc_j/dt = J (c_{j-1} + c_{j+1}) + E_int_j(c_j) c_j + V_j c_j,   V_j = F d j + V_trap_j
//! ```
//!
//! Sites outside the stored range have zero amplitude (hard walls).

use num_complex::Complex64;

use crate::analytic::bloch_period;
use crate::error::{Error, Result};
use crate::model::{ExperimentConfig, InteractionMode, SiteAmplitudes};

/// Norm drift beyond which an integration is aborted.
pub const NORM_DRIFT_ABORT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSpec {
    pub method: Method,
    /// Step (s).
    pub dt: f64,
    /// Final time (s).
    pub t_end: f64,
    /// Output times, ascending, within `[0, t_end]`.
    pub sample_times: Vec<f64>,
}

impl IntegratorSpec {
    /// Samples `0, t_end/n, ..., t_end`.
    pub fn uniform(dt: f64, t_end: f64, n_intervals: usize) -> Self {
        let n = n_intervals.max(1);
        Self {
            method: Method::Rk4,
            dt,
            t_end,
            sample_times: (0..=n).map(|i| t_end * i as f64 / n as f64).collect(),
        }
    }
}

/// Lattice Hamiltonian of one run, precomputed per site.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub j_min: i64,
    /// `V_j` plus the quadratic interaction term when that mode is active (J).
    pub onsite: Vec<f64>,
    pub tunneling: f64,
    /// Coefficient of `|c_j|^2` (J); zero unless on-site interactions are active.
    pub u_onsite: f64,
    hbar: f64,
    /// `+1` forward, `-1` for the negated Hamiltonian.
    sign: f64,
}

impl Hamiltonian {
    pub fn new(config: &ExperimentConfig, j_min: i64, n_sites: usize) -> Self {
        let d = config.spacing();
        let mass = config.constants.mass;
        let force = config.tilt.effective_force();
        let delta = config.trap.delta;
        let onsite = (0..n_sites as i64)
            .map(|i| {
                let j = j_min + i;
                let quad = match config.interaction.mode {
                    InteractionMode::QuadraticApprox => config.interaction.site_energy(j, delta, 0.0),
                    _ => 0.0,
                };
                force * d * j as f64 + config.trap.site_energy(j, mass, d) + quad
            })
            .collect();
        let u_onsite = match config.interaction.mode {
            InteractionMode::OnSiteDensity => config.interaction.u_onsite,
            _ => 0.0,
        };
        Self {
            j_min,
            onsite,
            tunneling: config.tunneling,
            u_onsite,
            hbar: config.hbar(),
            sign: 1.0,
        }
    }

    /// The same Hamiltonian with its sign flipped, for time-reversal checks.
    pub fn reversed(&self) -> Self {
        Self {
            sign: -self.sign,
            ..self.clone()
        }
    }

    /// `max_j |V_j|` (J).
    pub fn max_onsite(&self) -> f64 {
        self.onsite.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest step passing the phase-resolution guard `dt <= hbar / (20 max|V_j|)`.
    pub fn max_time_step(&self) -> f64 {
        let v = self.max_onsite();
        if v > 0.0 {
            self.hbar / (20.0 * v)
        } else {
            f64::INFINITY
        }
    }

    /// Writes `dc/dt` into `out`.
    pub fn derivative(&self, c: &[Complex64], out: &mut [Complex64]) {
        let n = c.len();
        let scale = Complex64::new(0.0, -self.sign / self.hbar);
        let zero = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let left = if j > 0 { c[j - 1] } else { zero };
            let right = if j + 1 < n { c[j + 1] } else { zero };
            let e = self.onsite[j] + self.u_onsite * c[j].norm_sqr();
            out[j] = scale * ((left + right) * self.tunneling + c[j] * e);
        }
    }
}

/// `dc_j/dt` for `state` under `config`; the Hamiltonian is time independent so `t` is unused.
pub fn rhs(state: &SiteAmplitudes, config: &ExperimentConfig, _t: f64) -> Vec<Complex64> {
    let h = Hamiltonian::new(config, state.j_min, state.len());
    let mut out = vec![Complex64::new(0.0, 0.0); state.len()];
    h.derivative(&state.amps, &mut out);
    out
}

/// Step choice used when none is given: `T_Bloch / 2^15`, never above the phase guard.
pub fn default_time_step(config: &ExperimentConfig, n_sites: usize) -> f64 {
    let h = Hamiltonian::new(config, -(n_sites as i64 - 1) / 2, n_sites);
    let guard = h.max_time_step();
    match bloch_period(config) {
        Ok(tb) => (tb / 32768.0).min(guard),
        Err(_) if guard.is_finite() => guard / 8.0,
        Err(_) => 1e-6,
    }
}

/// Output of [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, SiteAmplitudes)>,
    /// Largest `|sum |c_j|^2 - 1|` seen at any step.
    pub max_norm_drift: f64,
    /// Largest population observed on either boundary site.
    pub max_edge_population: f64,
    pub steps: u64,
}

struct Rk4Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn step(&mut self, h: &Hamiltonian, c: &mut [Complex64], dt: f64) {
        let n = c.len();
        h.derivative(c, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = c[i] + self.k1[i] * (0.5 * dt);
        }
        h.derivative(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = c[i] + self.k2[i] * (0.5 * dt);
        }
        h.derivative(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = c[i] + self.k3[i] * dt;
        }
        h.derivative(&self.tmp, &mut self.k4);
        let w = dt / 6.0;
        for i in 0..n {
            c[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
    }
}

fn validate_spec(spec: &IntegratorSpec, h: &Hamiltonian) -> Result<()> {
    if !(spec.dt.is_finite() && spec.dt > 0.0) {
        return Err(Error::Validation("integrator.dt must be positive".into()));
    }
    let limit = h.max_time_step();
    if spec.dt > limit {
        return Err(Error::StepTooLarge { dt: spec.dt, limit });
    }
    if !(spec.t_end.is_finite() && spec.t_end >= 0.0) {
        return Err(Error::Validation("integrator.t_end must be non-negative".into()));
    }
    let mut prev = 0.0;
    for &t in &spec.sample_times {
        if !(t >= prev && t <= spec.t_end) {
            return Err(Error::Validation(
                "integrator sample times must be ascending and inside [0, t_end]".into(),
            ));
        }
        prev = t;
    }
    Ok(())
}

/// Integrates `state0` under the Hamiltonian of `config`.
///
/// The norm is never renormalized; drift is reported, and the run aborts with
/// [`Error::NormDrift`] once it exceeds [`NORM_DRIFT_ABORT`].
pub fn integrate(state0: &SiteAmplitudes, config: &ExperimentConfig, spec: &IntegratorSpec) -> Result<Trajectory> {
    config.validate()?;
    let h = Hamiltonian::new(config, state0.j_min, state0.len());
    integrate_with(state0, &h, spec)
}

pub fn integrate_with(state0: &SiteAmplitudes, h: &Hamiltonian, spec: &IntegratorSpec) -> Result<Trajectory> {
    validate_spec(spec, h)?;
    let n = state0.len();
    let norm0 = state0.norm_sqr();
    let mut c = state0.amps.clone();
    let mut ws = Rk4Workspace::new(n);
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut max_drift: f64 = 0.0;
    let edge_pop = |c: &[Complex64]| c[0].norm_sqr().max(c[n - 1].norm_sqr());
    let mut max_edge = edge_pop(&c);
    let mut samples = Vec::with_capacity(spec.sample_times.len());

    let mut check = |c: &[Complex64], t: f64| -> Result<()> {
        let drift = (c.iter().map(|x| x.norm_sqr()).sum::<f64>() - norm0).abs();
        max_drift = max_drift.max(drift);
        max_edge = max_edge.max(edge_pop(c));
        if drift > NORM_DRIFT_ABORT {
            return Err(Error::NormDrift { drift, t });
        }
        Ok(())
    };

    for &ts in &spec.sample_times {
        let span = ts - t;
        // whole steps first, then one short step to land on the sample time
        let full = ((span / spec.dt) * (1.0 + 1e-12)).floor() as u64;
        for _ in 0..full {
            ws.step(h, &mut c, spec.dt);
            steps += 1;
            check(&c, t + spec.dt * steps as f64)?;
        }
        let rest = span - full as f64 * spec.dt;
        if rest > 1e-9 * spec.dt {
            ws.step(h, &mut c, rest);
            steps += 1;
            check(&c, ts)?;
        }
        t = ts;
        samples.push((ts, SiteAmplitudes::new(state0.j_min, c.clone())));
    }

    Ok(Trajectory {
        samples,
        max_norm_drift: max_drift,
        max_edge_population: max_edge,
        steps,
    })
}
