use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use talbot_core::analytic::bloch_period;
use talbot_core::output::{digest_file, RunManifest};
use talbot_core::ExperimentConfig;

fn talbot(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_talbot"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TALBOT_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Trap frequency whose doubled revival time is exactly `n` Bloch periods.
fn commensurate_omega(n: f64) -> f64 {
    let c = ExperimentConfig::default();
    let t = 0.5 * n * bloch_period(&c).unwrap();
    let d = c.spacing();
    (c.constants.h / (c.constants.mass * d * d * t)).sqrt()
}

fn pgm_rows(bytes: &[u8]) -> (usize, usize, Vec<&[u8]>) {
    let text = std::str::from_utf8(&bytes[..20]).unwrap_or_default();
    let mut it = text.split_ascii_whitespace();
    assert_eq!(it.next(), Some("P5"));
    let w: usize = it.next().unwrap().parse().unwrap();
    let h: usize = it.next().unwrap().parse().unwrap();
    assert_eq!(it.next(), Some("255"));
    let header = format!("P5\n{w} {h}\n255\n").len();
    let rows = bytes[header..].chunks(w).collect::<Vec<_>>();
    assert_eq!(rows.len(), h);
    (w, h, rows)
}

#[test]
fn carpet_over_two_revivals_repeats_its_first_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("[trap]\nomega_z = {}\n", commensurate_omega(1000.0))).unwrap();
    let o = talbot(
        &["carpet", "--config", "c.toml", "--cycles", "1000", "--n-q", "256", "--out", "c.pgm"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(dir.path().join("c.pgm")).unwrap();
    let (w, h, rows) = pgm_rows(&bytes);
    assert_eq!((w, h), (256, 1001));
    assert_eq!(rows[0], rows[1000]);
    assert_ne!(rows[0], rows[500]);
    assert!(dir.path().join("c.pgm.axes.txt").exists());

    let manifest = RunManifest::read(&dir.path().join("c.pgm.manifest.json")).unwrap();
    assert_eq!(manifest.outputs.len(), 2);
    // paths are recorded relative to the working directory of the run
    for out in &manifest.outputs {
        let d = digest_file(&dir.path().join(&out.path)).unwrap();
        assert_eq!(d.sha256, out.sha256);
        assert_eq!(d.bytes, out.bytes);
    }
}

#[test]
fn profiles_count_one_to_ten_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let o = talbot(&["profiles", "--orders", "1..10", "--out", "p"], dir.path());
    assert!(o.status.success());
    let p = dir.path().join("p");
    let csvs: Vec<_> = (1..=10).map(|m| p.join(format!("profile_m{m:02}.csv"))).collect();
    assert!(csvs.iter().all(|f| f.exists()));
    let summary = fs::read_to_string(p.join("peaks.csv")).unwrap();
    let counts: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts, (1..=10).map(f64::from).collect::<Vec<_>>());
    let first = fs::read_to_string(&csvs[0]).unwrap();
    assert!(first.starts_with("q_over_k,density\n"));
    assert_eq!(first.lines().count(), 1025);
    assert!(p.join("manifest.json").exists());
}

#[test]
fn sweep_output_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let mut args = vec!["sweep", "--points", "12", "--n-q", "128", "--out", name];
        args.extend_from_slice(extra);
        assert!(talbot(&args, dir.path()).status.success());
        fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.csv", &["--seed", "9"]);
    let b = run("b.csv", &["--seed", "9"]);
    let c = run("c.csv", &["--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);

    let o = Command::new(env!("CARGO_BIN_EXE_talbot"))
        .args(["sweep", "--points", "12", "--n-q", "128", "--out", "d.csv"])
        .current_dir(dir.path())
        .env("TALBOT_SEED", "9")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(dir.path().join("d.csv")).unwrap(), a);
    let m = RunManifest::read(&dir.path().join("d.csv.manifest.json")).unwrap();
    assert_eq!(m.seed, 9);
    assert!(m.config.contains("seed = 9"));
}

#[test]
fn fit_and_omega_scan_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = talbot(&["fit-talbot", "--out", "f.csv"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("T_fit"));
    let fit = fs::read_to_string(dir.path().join("f.csv.fit.csv")).unwrap();
    let centre: f64 = fit.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((centre - 0.555).abs() < 0.010);

    let o = talbot(&["omega-scan", "--nu", "20,31.1", "--out", "o.csv"], dir.path());
    assert!(o.status.success());
    let table = fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    for l in table.lines().skip(1) {
        let rel: f64 = l.split(',').last().unwrap().parse().unwrap();
        assert!(rel < 0.02);
    }
}

#[test]
fn anharmonic_needs_a_gaussian_trap() {
    let dir = tempfile::tempdir().unwrap();
    let o = talbot(&["anharmonic", "--points", "20", "--cycles", "10"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = talbot(
        &["anharmonic", "--waist", "46e-6", "--nu", "31.1", "--points", "66", "--cycles", "50", "--out", "an"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("subrevival"));
    for f in ["series.csv", "harmonic_series.csv", "carpet.pgm", "carpet.pgm.axes.txt", "manifest.json"] {
        assert!(dir.path().join("an").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(talbot(&["carpet", "--frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(talbot(&["validate"], dir.path()).status.code(), Some(0));
    fs::write(dir.path().join("bad.toml"), "[trap]\ndelta = 0.7\n").unwrap();
    let o = talbot(&["validate", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trap.delta"));
}
