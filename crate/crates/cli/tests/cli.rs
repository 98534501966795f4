use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_plr-chain"));
    c.env_remove("PLR_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn header(csv: &Path) -> String {
    fs::read_to_string(csv).unwrap().lines().next().unwrap().to_owned()
}

#[test]
fn correlator_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "n = 256\nlambda = 6.0\nsamples = 50\n");
    let out = dir.path().join("out");
    let o = run(&["correlator", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("correlator.csv"));
    let csv = out.join("correlator.csv");
    assert_eq!(header(&csv), "k,mean_Q,stderr,samples");
    // Default k grid for n = 256: 8, 11, 16, 23, 32, 45, 64, 91, 128.
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 9);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("correlator.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["config"]["samples"], 50);
    assert_eq!(meta["master_seed"], 0);
    assert!(meta["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(meta["tool_version"].is_string());
}

#[test]
fn number_schema_domain_wall() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "dw.toml",
        "experiment = \"number\"\nn = 64\nlambda = 2.0\nsamples = 4\nwall = 32\nsites = [1, 2, 3, 4]\nt_points = 10\n",
    );
    let o = run(&["number", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = dir.path().join("number.csv");
    assert_eq!(header(&csv), "t,N_S,stderr,samples,bound");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 10);
}

#[test]
fn misspelled_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "n = 16\nlamda = 2\n");
    let o = run(&["correlator", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("lamda"), "{}", text(&o.stderr));
    assert!(!dir.path().join("correlator.csv").exists());
}

#[test]
fn validate_echoes_defaults_and_names_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "min.toml", "experiment = \"transport\"\nn = 128\nlambda = 1.5\n");
    let o = run(&["validate", "--config", &cfg]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let echo = text(&o.stdout);
    for line in ["halfwidth = 1.0", "envelope_exponent = 0.5", "samples = 100", "master_seed = 0", "p = 2.0"] {
        assert!(echo.contains(line), "{line} missing from\n{echo}");
    }
    let cfg = write(dir.path(), "nolambda.toml", "experiment = \"correlator\"\nn = 128\n");
    let o = run(&["validate", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("lambda"));
    let cfg = write(dir.path(), "k.toml", "experiment = \"correlator\"\nn = 128\nlambda = 1.0\nk_list = [8, 200]\n");
    let o = run(&["validate", "--config", &cfg]);
    assert!(!o.status.success());
    let err = text(&o.stderr);
    assert!(err.contains("k_list") && err.contains("200"), "{err}");
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", "n = 128\nlambda = 1.0\n");
    let out = dir.path().join("out");
    let o = run(&["plr", "--config", &cfg, "--out", out.to_str().unwrap(), "--dry-run"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("a = 0.5"));
    assert!(!out.exists());
}

#[test]
fn subcommand_must_match_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "x.toml", "experiment = \"plr\"\nn = 32\nlambda = 1.0\n");
    let o = run(&["number", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("plr"));
}

#[test]
fn sidecar_round_trip_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.toml",
        "experiment = \"transport\"\nn = 200\nlambda = 1.0\nsamples = 6\nmaster_seed = 77\nt_points = 12\n",
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let o = run(&["transport", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let o = bin()
        .args(["transport", "--config", &cfg, "--out", b.to_str().unwrap()])
        .env("PLR_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let sidecar = a.join("transport.json");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(meta["threads"], 1);
    let meta_b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.join("transport.json")).unwrap()).unwrap();
    assert_eq!(meta_b["threads"], 3);
    let o = run(&["transport", "--config", sidecar.to_str().unwrap(), "--out", c.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let first = fs::read(a.join("transport.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("transport.csv")).unwrap());
    assert_eq!(first, fs::read(c.join("transport.csv")).unwrap());
}

#[test]
fn bad_thread_settings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "n = 32\nlambda = 1.0\nsamples = 2\n");
    let o = bin()
        .args(["correlator", "--config", &cfg, "--out", dir.path().to_str().unwrap()])
        .env("PLR_THREADS", "many")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("PLR_THREADS"));
    let o = run(&["correlator", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--threads", "0"]);
    assert!(!o.status.success());
}

#[test]
fn oracle_suite_passes() {
    let o = run(&["oracle-suite"]);
    assert!(o.status.success(), "{}{}", text(&o.stdout), text(&o.stderr));
    let table = text(&o.stdout);
    assert!(table.contains("car_anticommutators") && table.contains("PASS"));
    assert!(!table.contains("FAIL"));
}

#[test]
fn boundary_guard_failure_propagates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.toml",
        "experiment = \"beta-vs-lambda\"\nn = 32\nsamples = 2\nlambda_list = [1.0]\nt_min = 1.0\nt_max = 20.0\n",
    );
    let o = run(&["beta-vs-lambda", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("increase n"), "{}", text(&o.stderr));
}
