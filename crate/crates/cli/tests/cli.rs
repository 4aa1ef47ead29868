use std::fs;
use std::path::Path;
use std::process::Command as Process;

use nhsync_cli::config::{parse_config, Command, InitialState, ThetaSpec};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_nhsync");

const CHECK: &str = r#"
command = "check"

[params]
n_modes = 100
omega0 = 1.0
gamma0 = 0.05
omega = 1.0
gamma = 0.1
coupling = 1.0
theta = 1.5707963267948966
"#;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn run_bin(args: &[&str]) -> (i32, String) {
    let out = Process::new(BIN).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn minimal_check_parses() {
    let cfg = parse_config(CHECK, None).unwrap();
    assert_eq!(cfg.command, Command::Check);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.params.unwrap().n_modes, 100);
    assert_eq!(cfg.theta, Some(ThetaSpec::Value(std::f64::consts::FRAC_PI_2)));
}

#[test]
fn subcommand_must_match_config() {
    assert!(parse_config(CHECK, Some(Command::Check)).is_ok());
    let e = parse_config(CHECK, Some(Command::Evolve)).unwrap_err();
    assert!(e.0.iter().any(|x| x.key == "command"));
    let no_cmd = CHECK.replace("command = \"check\"", "");
    assert!(parse_config(&no_cmd, None).is_err());
    assert_eq!(
        parse_config(&no_cmd, Some(Command::Check)).unwrap().command,
        Command::Check
    );
}

#[test]
fn negative_gamma_is_reported_by_key() {
    let text = CHECK.replace("gamma = 0.1", "gamma = -0.1");
    let e = parse_config(&text, None).unwrap_err();
    assert_eq!(e.0.len(), 1, "{e}");
    assert_eq!(e.0[0].key, "params.gamma");
}

#[test]
fn all_errors_are_collected() {
    let text = CHECK
        .replace("gamma = 0.1", "gamma = \"fast\"")
        .replace("coupling = 1.0", "coupling = -1.0\nspeed = 3")
        .replace("n_modes = 100", "n_modes = 0")
        + "\n[noise]\ntemperature = 1.0\n";
    let e = parse_config(&text, None).unwrap_err();
    let keys: Vec<&str> = e.0.iter().map(|x| x.key.as_str()).collect();
    for k in [
        "params.gamma",
        "params.coupling",
        "params.speed",
        "params.n_modes",
        "noise",
    ] {
        assert!(keys.contains(&k), "{k} missing from {keys:?}");
    }
}

#[test]
fn missing_blocks_are_errors() {
    let e = parse_config("command = \"evolve\"\n", None).unwrap_err();
    let keys: Vec<&str> = e.0.iter().map(|x| x.key.as_str()).collect();
    assert!(keys.contains(&"params") && keys.contains(&"time"), "{keys:?}");
    let e = parse_config("command = \"sweep\"\n[params]\n", None).unwrap_err();
    assert!(e.0.iter().any(|x| x.key == "sweep"));
    assert!(parse_config("not toml [", None).is_err());
}

#[test]
fn initial_defaults_depend_on_command() {
    let evolve = CHECK.replace("\"check\"", "\"evolve\"") + "[time]\nt_final = 1.0\ndt = 0.1\n";
    let cfg = parse_config(&evolve, None).unwrap();
    assert_eq!(cfg.initial, InitialState::RandomPhases { amplitude: 1.0 });
    let noise =
        CHECK.replace("\"check\"", "\"noise\"") + "[noise]\ntemperature = 0.0\nn_paths = 2\ndt = 0.1\nt_final = 1.0\n";
    let cfg = parse_config(&noise, None).unwrap();
    assert_eq!(cfg.initial, InitialState::Uniform { amplitude: 1.0 });
}

#[test]
fn check_on_anti_hermitian_parameters_synchronizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    fs::write(&cfg_path, CHECK).unwrap();
    let out = dir.path().join("out");
    let (code, err) = run_bin(&[
        "check",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let s = read_json(&out.join("check_summary.json"));
    assert_eq!(s["condition"]["verdict"], "synchronizes");
    let csv = fs::read_to_string(out.join("check.csv")).unwrap();
    assert!(csv.starts_with("label,re,im,multiplicity\n"));
}

#[test]
fn auto_theta_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    fs::write(
        &cfg_path,
        CHECK.replace("theta = 1.5707963267948966", "theta = \"auto\""),
    )
    .unwrap();
    let (code, err) = run_bin(&[
        "check",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let meta = read_json(&dir.path().join("check_meta.json"));
    let theta = meta["resolved_theta"].as_f64().unwrap();
    assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    assert_eq!(meta["config"]["theta"]["kind"], "auto");
    assert!(meta["rng_algorithm"].as_str().unwrap().contains("ChaCha20"));
}

#[test]
fn evolve_reaches_full_coherence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("coherence.toml");
    let (code, err) = run_bin(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("evolve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,mode,re,im,r,phi,z");
    let z_max = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(z_max >= 0.99);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("coherence.toml");
    for (d, threads) in [(&a, "1"), (&b, "3")] {
        let (code, err) = run_bin(&[
            "evolve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["evolve.csv", "evolve_summary.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let a = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("coherence.toml");
    let cfg = cfg.to_str().unwrap();
    run_bin(&["evolve", "--config", cfg, "--out", a.path().join("x").to_str().unwrap()]);
    run_bin(&[
        "evolve",
        "--config",
        cfg,
        "--out",
        a.path().join("y").to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let x = fs::read(a.path().join("x/evolve.csv")).unwrap();
    let y = fs::read(a.path().join("y/evolve.csv")).unwrap();
    assert_ne!(x, y);
    assert_eq!(read_json(&a.path().join("y/evolve_meta.json"))["seed"], 99);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, CHECK.replace("gamma = 0.1", "gamma = -1.0")).unwrap();
    let (code, err) = run_bin(&[
        "check",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("params.gamma"), "{err}");

    let missing = dir.path().join("nope.toml");
    assert_eq!(run_bin(&["check", "--config", missing.to_str().unwrap()]).0, 3);

    // exceptional point: Δω = 0, |Δγ| = 2g, Hermitian coupling
    let ep = dir.path().join("ep.toml");
    let text = r#"
[params]
n_modes = 4
omega0 = 1.0
gamma0 = 0.5
omega = 1.0
gamma = 0.25
coupling = 0.125
theta = 0.0

[time]
t_final = 1.0
dt = 0.1
"#;
    fs::write(&ep, text).unwrap();
    let (code, err) = run_bin(&[
        "kuramoto",
        "--config",
        ep.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");

    let blocked = dir.path().join("file");
    fs::write(&blocked, "").unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, CHECK).unwrap();
    let target = blocked.join("sub");
    let (code, _) = run_bin(&[
        "check",
        "--config",
        good.to_str().unwrap(),
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if let Err(e) = parse_config(&text, None) {
            panic!("{}: {e}", path.display());
        }
    }
}

#[test]
fn eliminate_writes_deviation_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("eliminate.toml");
    let (code, err) = run_bin(&[
        "eliminate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("eliminate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 401);
    let s = read_json(&dir.path().join("eliminate_summary.json"));
    let g = &s["effective"]["gamma_eff_1"];
    assert!((g.as_f64().unwrap() - 0.0347525).abs() < 1e-7);
}
