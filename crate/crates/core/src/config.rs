//! TOML configuration files.
//!
//! Every key is optional; missing keys take the built-in defaults. Units are
//! SI unless noted.
//!
//! ```toml
//! seed = 7                     # master RNG seed, 0 ..= 2^63 - 1
//!
//! [constants]
//! h = 6.62607015e-34           # J s
//! k_b = 1.380649e-23           # J/K
//! mass = 2.2069e-25            # kg
//! g = 9.80665                  # m/s^2
//!
//! [lattice]
//! wavelength = 1064.48e-9      # m
//! depth = 8.0                  # E_R
//! n_sites = 81                 # odd
//! tunneling = 1.1e-32          # J; or tunneling_er in E_R; default from depth
//!
//! [trap]
//! kind = "harmonic"            # or "gaussian"
//! nu_z = 22.0                  # Hz; or omega_z in rad/s
//! waist = 46e-6                # m, gaussian only
//! delta = 0.0                  # lattice units, [-1/2, 1/2]
//!
//! [tilt]
//! enabled = true
//! force = 2.167e-24            # N; default m g
//!
//! [interaction]
//! mode = "off"                 # "quadratic" or "on_site"
//! alpha_int = 0.0              # J
//! u_onsite = 0.0               # J
//!
//! [envelope]
//! shape = "thomas_fermi"       # "gaussian", "uniform" or "custom"
//! half_width = 20.0            # sites
//! weights = [1.0, 2.0, 1.0]    # custom only
//!
//! [integrator]
//! method = "rk4"
//! dt = 1.7e-8                  # s; default chosen from the Hamiltonian
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dnle::Method;
use crate::error::{Error, Result};
use crate::model::{
    recoil_energy, tunneling_estimate, ExperimentConfig, InitialEnvelope, InteractionMode, InteractionSpec,
    LatticeSpec, PhysicalConstants, TiltSpec, TrapKind, TrapSpec,
};

/// Name that resolves to the built-in configuration when no such file exists.
pub const BUILTIN_DEFAULT: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    /// `None` selects the default step for the configured Hamiltonian.
    pub dt: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: None,
        }
    }
}

/// A parsed file: the experiment plus integrator options.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigDocument {
    pub experiment: ExperimentConfig,
    pub integrator: IntegratorOptions,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<i64>,
    #[serde(default)]
    constants: ConstantsSection,
    #[serde(default)]
    lattice: LatticeSection,
    #[serde(default)]
    trap: TrapSection,
    #[serde(default)]
    tilt: TiltSection,
    #[serde(default)]
    interaction: InteractionSection,
    #[serde(default)]
    envelope: EnvelopeSection,
    #[serde(default)]
    integrator: IntegratorSection,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    wavelength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_sites: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tunneling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tunneling_er: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TrapKindName {
    Harmonic,
    Gaussian,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrapSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<TrapKindName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nu_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    waist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TiltSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    force: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InteractionName {
    Off,
    Quadratic,
    OnSite,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InteractionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<InteractionName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_int: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_onsite: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeName {
    ThomasFermi,
    Gaussian,
    Uniform,
    Custom,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<ShapeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    Rk4,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<MethodName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
}

/// 1-based line of `key = ...` inside `[section]`, or of the section header.
fn line_of(text: &str, section: &str, key: &str) -> usize {
    let mut current = "";
    let mut header_line = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim();
            if current == section {
                header_line = i + 1;
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    header_line
}

struct Ctx<'a> {
    text: &'a str,
    path: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: line_of(self.text, section, key),
            message: message.into(),
        }
    }
}

/// Parses configuration text; `path` is only used in error messages.
pub fn parse_document_str(text: &str, path: &Path) -> Result<ConfigDocument> {
    let file: FileConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let ctx = Ctx { text, path };

    let d = PhysicalConstants::default();
    let c = &file.constants;
    let constants = PhysicalConstants::new(
        c.h.unwrap_or(d.h),
        c.k_b.unwrap_or(d.k_b),
        c.mass.unwrap_or(d.mass),
        c.g.unwrap_or(d.g),
    );

    let dl = LatticeSpec::default();
    let l = &file.lattice;
    let lattice = LatticeSpec {
        wavelength: l.wavelength.unwrap_or(dl.wavelength),
        depth: l.depth.unwrap_or(dl.depth),
        n_sites: l.n_sites.map_or(dl.n_sites, |n| n as usize),
    };
    let tunneling = match (l.tunneling, l.tunneling_er) {
        (Some(_), Some(_)) => {
            return Err(ctx.err("lattice", "tunneling_er", "give either tunneling or tunneling_er, not both"))
        }
        (Some(j), None) => j,
        (None, Some(j)) => j * recoil_energy(&constants, &lattice),
        (None, None) => tunneling_estimate(lattice.depth)? * recoil_energy(&constants, &lattice),
    };

    let t = &file.trap;
    let omega_z = match (t.nu_z, t.omega_z) {
        (Some(_), Some(_)) => return Err(ctx.err("trap", "omega_z", "give either nu_z or omega_z, not both")),
        (Some(nu), None) => 2.0 * PI * nu,
        (None, Some(w)) => w,
        (None, None) => ExperimentConfig::default().trap.omega_z,
    };
    let kind = match (t.kind.unwrap_or(TrapKindName::Harmonic), t.waist) {
        (TrapKindName::Harmonic, None) => TrapKind::Harmonic,
        (TrapKindName::Harmonic, Some(_)) => {
            return Err(ctx.err("trap", "waist", "waist is only valid with kind = \"gaussian\""))
        }
        (TrapKindName::Gaussian, Some(waist)) => TrapKind::Gaussian { waist },
        (TrapKindName::Gaussian, None) => return Err(ctx.err("trap", "kind", "gaussian trap needs a waist")),
    };
    let trap = TrapSpec {
        kind,
        omega_z,
        delta: t.delta.unwrap_or(0.0),
    };

    let tilt = TiltSpec {
        force: file.tilt.force.unwrap_or(constants.mass * constants.g),
        enabled: file.tilt.enabled.unwrap_or(true),
    };

    let i = &file.interaction;
    let interaction = InteractionSpec {
        mode: match i.mode.unwrap_or(InteractionName::Off) {
            InteractionName::Off => InteractionMode::Off,
            InteractionName::Quadratic => InteractionMode::QuadraticApprox,
            InteractionName::OnSite => InteractionMode::OnSiteDensity,
        },
        alpha_int: i.alpha_int.unwrap_or(0.0),
        u_onsite: i.u_onsite.unwrap_or(0.0),
    };

    let e = &file.envelope;
    let shape = e.shape.unwrap_or(ShapeName::ThomasFermi);
    let half_width = e.half_width.unwrap_or(20.0);
    if shape == ShapeName::Custom && e.half_width.is_some() {
        return Err(ctx.err("envelope", "half_width", "custom envelopes take weights, not half_width"));
    }
    if shape != ShapeName::Custom && e.weights.is_some() {
        return Err(ctx.err("envelope", "weights", "weights are only valid with shape = \"custom\""));
    }
    let envelope = match shape {
        ShapeName::ThomasFermi => InitialEnvelope::ThomasFermiSquaredParabola { half_width },
        ShapeName::Gaussian => InitialEnvelope::Gaussian { half_width },
        ShapeName::Uniform => InitialEnvelope::Uniform { half_width },
        ShapeName::Custom => InitialEnvelope::Custom {
            weights: e
                .weights
                .clone()
                .ok_or_else(|| ctx.err("envelope", "shape", "custom envelope needs weights"))?,
        },
    };

    let rng_seed = match file.seed {
        None => 0,
        Some(s) if s >= 0 => s as u64,
        Some(s) => return Err(Error::Validation(format!("seed must be non-negative (got {s})"))),
    };

    let experiment = ExperimentConfig {
        constants,
        lattice,
        trap,
        tilt,
        interaction,
        envelope,
        tunneling,
        rng_seed,
    };
    experiment.validate()?;

    let integrator = IntegratorOptions {
        method: Method::Rk4,
        dt: file.integrator.dt,
    };
    if let Some(dt) = integrator.dt {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Validation(format!("integrator.dt must be positive (got {dt})")));
        }
    }
    Ok(ConfigDocument { experiment, integrator })
}

pub fn parse_document(path: &Path) -> Result<ConfigDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_document_str(&text, path)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_document(path).map(|d| d.experiment)
}

/// Loads `name` as a file, falling back to the built-in configuration for
/// [`BUILTIN_DEFAULT`] when no such file exists.
pub fn resolve_document(name: &str) -> Result<ConfigDocument> {
    let path = PathBuf::from(name);
    if name == BUILTIN_DEFAULT && !path.exists() {
        return Ok(ConfigDocument::default());
    }
    parse_document(&path)
}

/// Serializes a document so that parsing it back gives an identical value.
pub fn write_document(doc: &ConfigDocument) -> Result<String> {
    let c = &doc.experiment;
    let seed = i64::try_from(c.rng_seed)
        .map_err(|_| Error::Validation(format!("seed {} does not fit a signed 64-bit integer", c.rng_seed)))?;
    let (kind, waist) = match c.trap.kind {
        TrapKind::Harmonic => (TrapKindName::Harmonic, None),
        TrapKind::Gaussian { waist } => (TrapKindName::Gaussian, Some(waist)),
    };
    let (shape, half_width, weights) = match &c.envelope {
        InitialEnvelope::ThomasFermiSquaredParabola { half_width } => (ShapeName::ThomasFermi, Some(*half_width), None),
        InitialEnvelope::Gaussian { half_width } => (ShapeName::Gaussian, Some(*half_width), None),
        InitialEnvelope::Uniform { half_width } => (ShapeName::Uniform, Some(*half_width), None),
        InitialEnvelope::Custom { weights } => (ShapeName::Custom, None, Some(weights.clone())),
    };
    let file = FileConfig {
        seed: Some(seed),
        constants: ConstantsSection {
            h: Some(c.constants.h),
            k_b: Some(c.constants.k_b),
            mass: Some(c.constants.mass),
            g: Some(c.constants.g),
        },
        lattice: LatticeSection {
            wavelength: Some(c.lattice.wavelength),
            depth: Some(c.lattice.depth),
            n_sites: Some(
                u32::try_from(c.lattice.n_sites)
                    .map_err(|_| Error::Validation("lattice.n_sites is too large".into()))?,
            ),
            tunneling: Some(c.tunneling),
            tunneling_er: None,
        },
        trap: TrapSection {
            kind: Some(kind),
            nu_z: None,
            omega_z: Some(c.trap.omega_z),
            waist,
            delta: Some(c.trap.delta),
        },
        tilt: TiltSection {
            enabled: Some(c.tilt.enabled),
            force: Some(c.tilt.force),
        },
        interaction: InteractionSection {
            mode: Some(match c.interaction.mode {
                InteractionMode::Off => InteractionName::Off,
                InteractionMode::QuadraticApprox => InteractionName::Quadratic,
                InteractionMode::OnSiteDensity => InteractionName::OnSite,
            }),
            alpha_int: Some(c.interaction.alpha_int),
            u_onsite: Some(c.interaction.u_onsite),
        },
        envelope: EnvelopeSection {
            shape: Some(shape),
            half_width,
            weights,
        },
        integrator: IntegratorSection {
            method: Some(MethodName::Rk4),
            dt: doc.integrator.dt,
        },
    };
    toml::to_string(&file).map_err(|e| Error::Validation(e.to_string()))
}

pub fn write_config(config: &ExperimentConfig) -> Result<String> {
    write_document(&ConfigDocument {
        experiment: config.clone(),
        integrator: IntegratorOptions::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::talbot_time;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ConfigDocument> {
        parse_document_str(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_file_gives_the_22_hz_revival() {
        let doc = parse("[trap]\nnu_z = 22.0\n").unwrap();
        let t = talbot_time(&doc.experiment).unwrap();
        assert!((t - 0.555).abs() < 0.010, "{t}");
        assert_eq!(doc.experiment, ExperimentConfig::with_nu_z(22.0));
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(parse("").unwrap(), ConfigDocument::default());
    }

    #[test]
    fn delta_out_of_range_is_a_validation_error() {
        match parse("[trap]\ndelta = 0.7\n") {
            Err(Error::Validation(msg)) => assert!(msg.contains("trap.delta")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_report_their_line() {
        match parse("seed = 1\n\n[lattice]\ndepth = 8.0\nspacing = 5e-7\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("spacing"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("[lattices]\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn syntax_errors_report_their_line() {
        assert!(matches!(parse("[trap]\nnu_z = 22.0\ndelta = = 1\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn conflicting_keys() {
        assert!(matches!(parse("[trap]\nnu_z = 22.0\nomega_z = 100.0\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse("[trap]\nwaist = 4e-5\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("[trap]\nkind = \"gaussian\"\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("[envelope]\nweights = [1.0]\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("[trap]\nkind = \"square\"\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_a_parse_error() {
        assert!(matches!(
            parse_config(Path::new("/nonexistent/talbot.toml")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn builtin_default_resolves() {
        assert_eq!(resolve_document(BUILTIN_DEFAULT).unwrap(), ConfigDocument::default());
    }

    #[test]
    fn units_and_derived_defaults() {
        let doc = parse("[constants]\nmass = 1.0e-25\n[lattice]\ntunneling_er = 0.5\n[trap]\nomega_z = 100.0\n").unwrap();
        let c = &doc.experiment;
        assert_eq!(c.trap.omega_z, 100.0);
        assert_eq!(c.tilt.force, 1.0e-25 * c.constants.g);
        assert_eq!(c.tunneling, 0.5 * recoil_energy(&c.constants, &c.lattice));
    }

    #[test]
    fn integrator_section() {
        let doc = parse("[integrator]\nmethod = \"rk4\"\ndt = 1e-8\n").unwrap();
        assert_eq!(doc.integrator.dt, Some(1e-8));
        assert!(matches!(parse("[integrator]\ndt = -1.0\n"), Err(Error::Validation(_))));
        assert!(matches!(parse("[integrator]\nmethod = \"euler\"\n"), Err(Error::Parse { .. })));
    }

    fn envelope() -> impl Strategy<Value = InitialEnvelope> {
        prop_oneof![
            (1.0..40.0f64).prop_map(|half_width| InitialEnvelope::ThomasFermiSquaredParabola { half_width }),
            (0.5..30.0f64).prop_map(|half_width| InitialEnvelope::Gaussian { half_width }),
            (0.0..40.0f64).prop_map(|half_width| InitialEnvelope::Uniform { half_width }),
            prop::collection::vec(0.0..1.0f64, 1..20).prop_map(|mut weights| {
                weights[0] += 0.5;
                InitialEnvelope::Custom { weights }
            }),
        ]
    }

    fn config() -> impl Strategy<Value = ExperimentConfig> {
        (
            (1e-26..1e-24f64, 9.0..10.0f64, 500e-9..2000e-9f64, 1.0..30.0f64, 40usize..60),
            (1.0..300.0f64, -0.5..=0.5f64, prop::option::of(1e-5..1e-3f64)),
            (any::<bool>(), 1e-26..1e-23f64),
            (0usize..3, -1e-30..1e-30f64, -1e-30..1e-30f64),
            envelope(),
            (0.0..1e-30f64, 0u64..=i64::MAX as u64),
        )
            .prop_map(|(l, t, tilt, i, envelope, (tunneling, rng_seed))| {
                let constants = PhysicalConstants::new(6.62607015e-34, 1.380649e-23, l.0, l.1);
                ExperimentConfig {
                    constants,
                    lattice: LatticeSpec {
                        wavelength: l.2,
                        depth: l.3,
                        n_sites: 2 * l.4 + 1,
                    },
                    trap: TrapSpec {
                        kind: t.2.map_or(TrapKind::Harmonic, |waist| TrapKind::Gaussian { waist }),
                        omega_z: t.0,
                        delta: t.1,
                    },
                    tilt: TiltSpec {
                        enabled: tilt.0,
                        force: tilt.1,
                    },
                    interaction: InteractionSpec {
                        mode: [InteractionMode::Off, InteractionMode::QuadraticApprox, InteractionMode::OnSiteDensity]
                            [i.0],
                        alpha_int: i.1,
                        u_onsite: i.2,
                    },
                    envelope,
                    tunneling,
                    rng_seed,
                }
            })
    }

    proptest! {
        #[test]
        fn config_round_trips(c in config(), dt in prop::option::of(1e-10..1e-6f64)) {
            prop_assert!(c.validate().is_ok());
            let doc = ConfigDocument { experiment: c, integrator: IntegratorOptions { method: Method::Rk4, dt } };
            let text = write_document(&doc).unwrap();
            let back = parse(&text).unwrap();
            prop_assert_eq!(back, doc);
        }
    }
}
