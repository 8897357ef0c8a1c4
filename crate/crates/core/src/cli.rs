//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on validation or runtime failure, 2 on usage errors.
//! The seed is taken from `--seed`, else `TALBOT_SEED`, else the config file.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytic::{
    bloch_period, evolve_folded, folded_density, momentum_density, talbot_time, MomentumGrid, DEFAULT_N_Q,
};
use crate::config::{resolve_document, write_document, ConfigDocument};
use crate::dnle::{default_time_step, integrate, IntegratorSpec};
use crate::error::{Error, Result};
use crate::experiments::{
    anharmonic_study, harmonic_reference, locate_talbot_time, omega_sweep, revival_imperfection, run_sweep,
    BlochPhase, DeltaSampling, EnsembleSettings, ScanWindow, SweepPlan,
};
use crate::model::{TrapKind, TrapSpec};
use crate::observables::{
    count_peaks, default_min_separation, find_peaks, momentum_width, pattern_shift_steps, WidthSeries,
    DEFAULT_MIN_PROMINENCE,
};
use crate::output::{write_carpet_pgm, write_density_csv, write_table_csv, RunManifest};

pub const SEED_ENV: &str = "TALBOT_SEED";

#[derive(Debug, Parser)]
#[command(name = "talbot", version, about = "Temporal Talbot effect in a tilted optical lattice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file, or "default" for the built-in configuration.
    #[arg(long, default_value = "default")]
    pub config: String,
    /// Master seed; overrides TALBOT_SEED and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Quasimomentum grid points.
    #[arg(long, default_value_t = DEFAULT_N_Q)]
    pub n_q: usize,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 10)]
    pub realisations: usize,
    #[arg(long, value_enum, default_value_t = DeltaMode::Random)]
    pub delta: DeltaMode,
    #[arg(long, value_enum, default_value_t = PhaseMode::Random)]
    pub bloch_phase: PhaseMode,
    /// Standard deviation of additive noise on each width (hbar k).
    #[arg(long)]
    pub dp_noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeltaMode {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseMode {
    Folded,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Folded momentum densities at every Bloch period, as a PGM image.
    Carpet {
        #[command(flatten)]
        common: Common,
        /// Bloch periods to cover; defaults to the nearest integer to 2 T_Talbot / T_Bloch.
        #[arg(long)]
        cycles: Option<u64>,
        #[arg(long, default_value = "carpet.pgm")]
        out: PathBuf,
    },
    /// Densities at T_Talbot / m, one CSV per order.
    Profiles {
        #[command(flatten)]
        common: Common,
        /// Orders as "a..b" (inclusive) or a comma list.
        #[arg(long, default_value = "1..10")]
        orders: String,
        #[arg(long, default_value = "profiles")]
        out: PathBuf,
    },
    /// Ensemble width extrema against hold time.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Last hold time in units of T_Talbot.
        #[arg(long, default_value_t = 1.1)]
        t_max: f64,
        #[arg(long, default_value_t = 111)]
        points: usize,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Locates the revival by a gaussian fit to the spread around T_Talbot.
    FitTalbot {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Half width of the scan window relative to T_Talbot.
        #[arg(long, default_value_t = ScanWindow::DEFAULT_RELATIVE_HALF_WIDTH)]
        window: f64,
        #[arg(long, default_value_t = ScanWindow::DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value = "fit.csv")]
        out: PathBuf,
    },
    /// Fitted revival time for a list of trap frequencies.
    OmegaScan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Trap frequencies in Hz, comma separated.
        #[arg(long, default_value = "20,22,24,26.9,31.1", value_delimiter = ',')]
        nu: Vec<f64>,
        #[arg(long, default_value = "omega_scan.csv")]
        out: PathBuf,
    },
    /// Sweep and carpet in a gaussian trap, compared with its harmonic approximation.
    Anharmonic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Gaussian waist (m); replaces the configured trap shape.
        #[arg(long)]
        waist: Option<f64>,
        /// Trap frequency (Hz); replaces the configured value.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, default_value_t = 1.3)]
        t_max: f64,
        #[arg(long, default_value_t = 131)]
        points: usize,
        /// Carpet length in Bloch periods; defaults to cover the sweep.
        #[arg(long)]
        cycles: Option<u64>,
        #[arg(long, default_value = "anharmonic")]
        out: PathBuf,
    },
    /// Checks the configuration and runs the invariant suite against it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

/// `--seed`, then the environment, then the file.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Validation(format!("{SEED_ENV} must be an unsigned integer (got {v:?})"))),
        None => Ok(config),
    }
}

/// Parses "a..b" (inclusive) or "a,b,c".
pub fn parse_orders(spec: &str) -> Result<Vec<u32>> {
    let bad = || Error::Validation(format!("orders must be \"a..b\" or a comma list of positive integers (got {spec:?})"));
    let orders: Vec<u32> = if let Some((a, b)) = spec.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if orders.is_empty() || orders.contains(&0) {
        return Err(bad());
    }
    Ok(orders)
}

struct Session<'a> {
    argv: Vec<String>,
    doc: ConfigDocument,
    seed: u64,
    out: &'a mut dyn Write,
}

impl Session<'_> {
    fn new<'a>(argv: &[String], common: &Common, out: &'a mut dyn Write) -> Result<Session<'a>> {
        let mut doc = resolve_document(&common.config)?;
        let env = std::env::var(SEED_ENV).ok();
        let seed = resolve_seed(common.seed, env.as_deref(), doc.experiment.rng_seed)?;
        doc.experiment.rng_seed = seed;
        Ok(Session {
            argv: argv.to_vec(),
            doc,
            seed,
            out,
        })
    }

    fn ensemble(&self, args: &EnsembleArgs, n_q: usize) -> EnsembleSettings {
        EnsembleSettings {
            n_realisations: args.realisations,
            delta_sampling: match args.delta {
                DeltaMode::Zero => DeltaSampling::FixedZero,
                DeltaMode::Random => DeltaSampling::UniformRandom,
            },
            bloch_phase: match args.bloch_phase {
                PhaseMode::Folded => BlochPhase::Folded,
                PhaseMode::Random => BlochPhase::UniformRandom,
            },
            seed: self.seed,
            n_q,
            dp_noise: args.dp_noise,
        }
    }

    fn manifest(&mut self, manifest_path: &Path, outputs: &[PathBuf]) -> Result<()> {
        let mut m = RunManifest::new(self.argv.clone(), self.seed, write_document(&self.doc)?);
        m.record(outputs)?;
        m.write(manifest_path)?;
        writeln!(self.out, "manifest {}", manifest_path.display())?;
        Ok(())
    }
}

fn file_manifest(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn series_rows(series: &[WidthSeries]) -> Vec<Vec<f64>> {
    series
        .iter()
        .map(|s| vec![s.t_hold, s.dp_min, s.dp_max, s.d_spread])
        .collect()
}

const SERIES_HEADER: [&str; 4] = ["t_hold_s", "dp_min", "dp_max", "d_spread"];

/// Parses `argv` (program name first) and runs the command.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(argv, cli.command, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Entry point for the binary.
pub fn cli_dispatch(argv: &[String]) -> i32 {
    run(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn execute(argv: &[String], command: Command, out: &mut dyn Write) -> Result<bool> {
    match command {
        Command::Carpet { common, cycles, out: path } => {
            let mut s = Session::new(argv, &common, out)?;
            let c = &s.doc.experiment;
            let tb = bloch_period(c)?;
            let cycles = match cycles {
                Some(n) => n,
                None => (2.0 * talbot_time(c)? / tb).round() as u64,
            };
            let grid = MomentumGrid::for_config(c, common.n_q)?;
            let carpet = crate::observables::build_carpet(&c.initial_state()?, c, cycles, &grid)?;
            let side = write_carpet_pgm(&path, &carpet)?;
            let first = &carpet.rows[0];
            let last = &carpet.rows[carpet.n_rows() - 1];
            writeln!(
                s.out,
                "carpet {} rows x {} columns, first/last row max |diff| {:.3e}",
                carpet.n_rows(),
                grid.n_q,
                first.max_abs_diff(last)
            )?;
            s.manifest(&file_manifest(&path), &[path.clone(), side])?;
            Ok(true)
        }
        Command::Profiles { common, orders, out: dir } => {
            let orders = parse_orders(&orders)?;
            let mut s = Session::new(argv, &common, out)?;
            let c = &s.doc.experiment;
            let t_talbot = talbot_time(c)?;
            let state0 = c.initial_state()?;
            let grid = MomentumGrid::for_config(c, common.n_q)?;
            fs::create_dir_all(&dir)?;
            let mut files = Vec::new();
            let mut rows = Vec::new();
            for m in orders {
                let t = t_talbot / m as f64;
                let rho = folded_density(&state0, c, t, &grid)?;
                let peaks = count_peaks(&rho, DEFAULT_MIN_PROMINENCE, default_min_separation(grid.n_q));
                let path = dir.join(format!("profile_m{m:02}.csv"));
                write_density_csv(&path, &rho)?;
                writeln!(s.out, "m = {m:2}  t = {t:.6e} s  peaks = {peaks}  {}", path.display())?;
                files.push(path);
                rows.push(vec![m as f64, t, peaks as f64, momentum_width(&rho)]);
            }
            let summary = dir.join("peaks.csv");
            write_table_csv(&summary, &["order", "t_s", "peak_count", "dp"], &rows)?;
            files.push(summary);
            s.manifest(&dir.join("manifest.json"), &files)?;
            Ok(true)
        }
        Command::Sweep {
            common,
            ensemble,
            t_max,
            points,
            out: path,
        } => {
            let mut s = Session::new(argv, &common, out)?;
            let c = &s.doc.experiment;
            let t_talbot = talbot_time(c)?;
            let plan = SweepPlan::linspace(0.0, t_max * t_talbot, points, s.ensemble(&ensemble, common.n_q));
            let series = run_sweep(c, &plan)?;
            write_table_csv(&path, &SERIES_HEADER, &series_rows(&series))?;
            writeln!(s.out, "sweep {} hold times, T_Talbot = {t_talbot:.6e} s -> {}", series.len(), path.display())?;
            s.manifest(&file_manifest(&path), std::slice::from_ref(&path))?;
            Ok(true)
        }
        Command::FitTalbot {
            common,
            ensemble,
            window,
            points,
            out: path,
        } => {
            let mut s = Session::new(argv, &common, out)?;
            let c = &s.doc.experiment;
            let win = ScanWindow::around(talbot_time(c)?, window, points);
            let r = locate_talbot_time(c, &win, &s.ensemble(&ensemble, common.n_q))?;
            write_table_csv(&path, &SERIES_HEADER, &series_rows(&r.series))?;
            let p = &r.fit.params;
            let fit_path = {
                let mut f = path.as_os_str().to_owned();
                f.push(".fit.csv");
                PathBuf::from(f)
            };
            write_table_csv(
                &fit_path,
                &["amplitude", "center_s", "width_s", "offset", "center_sigma_s", "t_theory_s"],
                &[vec![p.amplitude, p.center, p.width, p.offset, r.t_sigma, r.t_theory]],
            )?;
            writeln!(
                s.out,
                "T_fit = {:.6e} +- {:.2e} s, theory {:.6e} s, deviation {:.3}%",
                r.t_fit,
                r.t_sigma,
                r.t_theory,
                100.0 * r.relative_error()
            )?;
            s.manifest(&file_manifest(&path), &[path.clone(), fit_path])?;
            Ok(true)
        }
        Command::OmegaScan {
            common,
            ensemble,
            nu,
            out: path,
        } => {
            let mut s = Session::new(argv, &common, out)?;
            let omegas: Vec<f64> = nu.iter().map(|n| 2.0 * PI * n).collect();
            let results = omega_sweep(&s.doc.experiment, &omegas, &s.ensemble(&ensemble, common.n_q))?;
            let rows: Vec<Vec<f64>> = results
                .iter()
                .map(|r| vec![r.nu_z(), r.omega_z, r.t_fit, r.t_sigma, r.t_theory, r.relative_error()])
                .collect();
            write_table_csv(
                &path,
                &["nu_z_hz", "omega_z_rad_s", "t_fit_s", "t_sigma_s", "t_theory_s", "relative_error"],
                &rows,
            )?;
            for r in &results {
                writeln!(
                    s.out,
                    "nu_z = {:6.2} Hz  T_fit = {:.6e} s  T_theory = {:.6e} s  ({:+.3}%)",
                    r.nu_z(),
                    r.t_fit,
                    r.t_theory,
                    100.0 * (r.t_fit / r.t_theory - 1.0)
                )?;
            }
            s.manifest(&file_manifest(&path), std::slice::from_ref(&path))?;
            Ok(true)
        }
        Command::Anharmonic {
            common,
            ensemble,
            waist,
            nu,
            t_max,
            points,
            cycles,
            out: dir,
        } => {
            let mut s = Session::new(argv, &common, out)?;
            {
                let trap = &mut s.doc.experiment.trap;
                if let Some(nu) = nu {
                    trap.omega_z = 2.0 * PI * nu;
                }
                if let Some(w) = waist {
                    *trap = TrapSpec {
                        kind: TrapKind::Gaussian { waist: w },
                        ..*trap
                    };
                }
            }
            s.doc.experiment.validate()?;
            let c = s.doc.experiment.clone();
            let ens = s.ensemble(&ensemble, common.n_q);
            let t_talbot = talbot_time(&c)?;
            let plan = SweepPlan::linspace(0.0, t_max * t_talbot, points, ens.clone());
            let cycles = match cycles {
                Some(n) => n,
                None => (t_max * t_talbot / bloch_period(&c)?).round() as u64,
            };
            let study = anharmonic_study(&c, &plan, cycles)?;
            let harmonic = harmonic_reference(&c);
            let reference = run_sweep(&harmonic, &plan)?;
            fs::create_dir_all(&dir)?;
            let series_path = dir.join("series.csv");
            let reference_path = dir.join("harmonic_series.csv");
            let carpet_path = dir.join("carpet.pgm");
            write_table_csv(&series_path, &SERIES_HEADER, &series_rows(&study.series))?;
            write_table_csv(&reference_path, &SERIES_HEADER, &series_rows(&reference))?;
            let side = write_carpet_pgm(&carpet_path, &study.carpet)?;
            let dp_g = revival_imperfection(&c, &ens)?;
            let dp_h = revival_imperfection(&harmonic, &ens)?;
            writeln!(s.out, "dp_min at T_Talbot: gaussian {dp_g:.4}, harmonic {dp_h:.4}")?;
            if let Some(m) = study.main_revival {
                writeln!(s.out, "main revival at t/T = {:.4}", study.series[m].t_hold / t_talbot)?;
            }
            for sub in &study.subrevivals {
                writeln!(s.out, "subrevival at t/T = {:.4}, D = {:.4}", sub.t_hold / t_talbot, sub.d_spread)?;
            }
            s.manifest(&dir.join("manifest.json"), &[series_path, reference_path, carpet_path, side])?;
            Ok(true)
        }
        Command::Validate { common } => {
            let s = Session::new(argv, &common, out)?;
            validate_suite(&s.doc, common.n_q, s.out)
        }
    }
}

fn report(out: &mut dyn Write, name: &str, ok: bool, detail: String) -> Result<bool> {
    writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })?;
    Ok(ok)
}

/// Invariants that must hold for any configuration: revival periodicity and
/// the half-zone translation for harmonic traps, fractional orders, the width
/// bound, and frozen-limit agreement of the integrator over one Bloch period.
fn validate_suite(doc: &ConfigDocument, n_q: usize, out: &mut dyn Write) -> Result<bool> {
    let c = &doc.experiment;
    c.validate()?;
    writeln!(out, "configuration valid")?;
    let mut all = true;
    let state0 = c.initial_state()?;
    let grid = MomentumGrid::for_config(c, n_q)?;
    let t_talbot = talbot_time(c)?;
    let rho0 = momentum_density(&state0, &grid)?;
    let harmonic = matches!(c.trap.kind, TrapKind::Harmonic) && c.interaction.mode == crate::model::InteractionMode::Off;

    if harmonic {
        let rho2 = folded_density(&state0, c, 2.0 * t_talbot, &grid)?;
        let diff = rho0.max_abs_diff(&rho2);
        all &= report(out, "revival at 2 T_Talbot", diff <= 1e-9, format!("max |diff| {diff:.3e}"))?;
        let rho1 = folded_density(&state0, c, t_talbot, &grid)?;
        // half the zone plus the trap-offset drift 2 delta k
        let expected = (0.5 + c.trap.delta) * n_q as f64;
        let lag = pattern_shift_steps(&rho0, &rho1) as f64;
        let d = (lag - expected).rem_euclid(n_q as f64);
        let err = d.min(n_q as f64 - d);
        all &= report(out, "half-zone translation at T_Talbot", err <= 1.0, format!("lag {lag} steps"))?;
        for m in 1..=4u32 {
            let rho = folded_density(&state0, c, t_talbot / m as f64, &grid)?;
            let n = find_peaks(&rho, DEFAULT_MIN_PROMINENCE, default_min_separation(n_q)).len();
            all &= report(out, &format!("fractional order {m}"), n == m as usize, format!("{n} peaks"))?;
        }
    } else {
        writeln!(out, "SKIP revival checks: trap is not harmonic or interactions are on")?;
    }

    let worst = (0..=20)
        .map(|i| {
            let t = 1.1 * t_talbot * i as f64 / 20.0;
            folded_density(&state0, c, t, &grid).map(|r| momentum_width(&r))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    all &= report(out, "width bound", worst <= 2.0 + 1e-12, format!("max dp {worst:.4}"))?;

    if c.tilt.enabled {
        let mut frozen = c.clone();
        frozen.tunneling = 0.0;
        let tb = bloch_period(c)?;
        let dt = doc.integrator.dt.unwrap_or_else(|| default_time_step(&frozen, state0.len()));
        let traj = integrate(&state0, &frozen, &IntegratorSpec::uniform(dt, tb, 1))?;
        let exact = evolve_folded(&state0, &frozen, tb)?;
        let err = traj.samples.last().map_or(f64::INFINITY, |(_, s)| s.max_abs_diff(&exact));
        all &= report(out, "integrator frozen limit over one Bloch period", err < 1e-8, format!("max |dc| {err:.3e}"))?;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("5"), 7).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some("5"), 7).unwrap(), 5);
        assert_eq!(resolve_seed(None, None, 7).unwrap(), 7);
        assert_eq!(resolve_seed(None, Some(" "), 7).unwrap(), 7);
        assert!(resolve_seed(None, Some("x"), 7).is_err());
    }

    #[test]
    fn orders() {
        assert_eq!(parse_orders("1..10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_orders("2, 3,5").unwrap(), vec![2, 3, 5]);
        assert!(parse_orders("0..3").is_err());
        assert!(parse_orders("a").is_err());
        assert!(parse_orders("4..2").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(&args("talbot carpet --bogus"), &mut o, &mut e), 2);
        assert!(!e.is_empty());
        assert_eq!(run(&args("talbot"), &mut o, &mut e), 2);
        assert_eq!(run(&args("talbot frobnicate"), &mut o, &mut e), 2);
    }

    #[test]
    fn help_exits_0() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(&args("talbot --help"), &mut o, &mut e), 0);
        assert!(String::from_utf8(o).unwrap().contains("carpet"));
    }

    #[test]
    fn runtime_errors_exit_1() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(&args("talbot validate --config /nonexistent.toml"), &mut o, &mut e), 1);
        assert!(String::from_utf8(e).unwrap().contains("nonexistent"));
    }

    #[test]
    fn default_config_validates() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(&args("talbot validate --n-q 512"), &mut o, &mut e);
        let text = String::from_utf8(o).unwrap();
        assert_eq!(code, 0, "{text}");
        assert!(!text.contains("FAIL"));
    }
}
