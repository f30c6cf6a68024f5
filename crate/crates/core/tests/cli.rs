//! End-to-end runs of the `pamclt` binary.

use pamclt::field::read_dump;
use pamclt::seed::seed_derive;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pamclt"));
    c.env_remove("PAMCLT_OUT");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_rejects_riesz_beta_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[model]\nregime = \"riesz\"\nd = 1\nbeta = 1.5\n");
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("model.beta"));
    assert!(stderr(&o).contains("β ∈ (0, d ∧ 2)"));
}

#[test]
fn validate_accepts_rough_and_prints_dalang() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[model]\nregime = \"rough\"\nH = 0.3\n");
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("dalang="));
    // nothing is written by validate
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
}

#[test]
fn unknown_keys_and_missing_config_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[model]\nregime = \"white\"\nhurst = 0.3\n");
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`hurst`"), "{}", stderr(&o));

    let o = bin().arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));

    let cfg = write(dir.path(), "d.toml", "command = \"clt\"\n[model]\nregime = \"white\"\n");
    let o = bin().args(["covariance", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`command`"));
    // validate accepts a config written for any command
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn validate_checks_grid_and_experiment_guards() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[model]\nregime = \"integrable\"\n[grid]\nL = 64.0\nn_points = 4096\n\
                [experiment]\nR = [2.0, 4.0, 8.0, 16.0]\nreplicates = 100\npaths = 8\nn_pairs = 10\n";
    let cfg = write(dir.path(), "ok.toml", base);
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let cfg = write(dir.path(), "r.toml", &base.replace("16.0]", "32.0]"));
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.R"));

    let cfg = write(dir.path(), "e.toml", &base.replace("n_points = 4096", "n_points = 4096\neps = 0.00001"));
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.eps"));
    let o = bin().args(["validate", "--allow-aliasing", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn chaos_table_for_white_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 5\n[model]\nregime = \"white\"\n");
    let out = dir.path().join("out");
    let o = bin()
        .args(["chaos-table", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "11"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&out.join("chaos_table.json"));
    let h1 = doc["result"][0]["h"][0]["value"].as_f64().unwrap();
    assert!((h1 - 0.564190).abs() < 1e-6);
    assert_eq!(doc["meta"]["seed"], 11);
    assert_eq!(doc["meta"]["version"], pamclt::ARTIFACT_VERSION);
    assert_eq!(doc["meta"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["status"], "ok");
    let csv = std::fs::read_to_string(out.join("chaos_table.csv")).unwrap();
    assert!(csv.starts_with("regime,t,n,h,h_err,j,j_err,config_hash,seed,version\r\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(&format!(",11,{}", pamclt::ARTIFACT_VERSION))));
}

#[test]
fn output_directory_fallbacks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[model]\nregime = \"riesz\"\nbeta = 0.5\n");
    let env_out = dir.path().join("from-env");
    let o = bin()
        .args(["covariance", "--config"])
        .arg(&cfg)
        .env("PAMCLT_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env_out.join("covariance.json").exists());

    let cfg_out = dir.path().join("from-config");
    let cfg = write(
        dir.path(),
        "d.toml",
        &format!("out = {:?}\n[model]\nregime = \"riesz\"\nbeta = 0.5\n", cfg_out.to_str().unwrap()),
    );
    let o = bin()
        .args(["covariance", "--config"])
        .arg(&cfg)
        .env("PAMCLT_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(cfg_out.join("covariance.csv").exists());
}

#[test]
fn covariance_profile_for_integrable_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[model]\nregime = \"integrable\"\n[grid]\nL = 16.0\nn_points = 1024\n[experiment]\nt = 1.0\nn_pairs = 400\n",
    );
    let out = dir.path().join("out");
    let o = bin().args(["covariance", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&out.join("covariance.json"));
    let k = doc["result"][0]["k_limit"]["value"]["value"].as_f64().unwrap();
    let integral = doc["result"][0]["profile"]["integral"]["value"].as_f64().unwrap();
    assert!((k - 2.0 * integral).abs() < 1e-12 * k.abs());
    let rows = std::fs::read_to_string(out.join("rho_profile.csv")).unwrap();
    assert!(rows.starts_with("regime,t,s,z,rho,se,config_hash,seed,version\r\n"));
}

#[test]
fn overflow_is_a_numerical_failure_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    // very long horizon: the pair functional exceeds the exponent guard
    let cfg = write(
        dir.path(),
        "c.toml",
        "[model]\nregime = \"integrable\"\n[grid]\nL = 8.0\nn_points = 64\n[experiment]\nt = [1.0, 400.0]\nn_pairs = 4\n",
    );
    let out = dir.path().join("out");
    let o = bin().args(["covariance", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let doc = json(&out.join("covariance.json"));
    assert_eq!(doc["status"], "partial");
    assert!(doc["error"].as_str().unwrap().contains("overflow"));
    // the finished t = 1 entry was kept
    assert_eq!(doc["result"].as_array().unwrap().len(), 1);
}

#[test]
fn field_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "command = \"field-dump\"\nseed = 3\n[model]\nregime = \"rough\"\nH = 0.3\n[grid]\nL = 16.0\nn_points = 2048\n",
    );
    let out = dir.path().join("out");
    let o = bin().arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, samples) = read_dump(&out.join("field.bin")).unwrap();
    assert_eq!(header.n_points, 2048);
    assert_eq!(header.seed, seed_derive(3, &["field".into(), 0usize.into()]));
    assert_eq!(samples.len(), 2048);
    let meta = json(&out.join("field.json"));
    assert_eq!(meta["meta"]["seed"], 3);
    assert_eq!(meta["result"]["field_seed"], header.seed);
}

#[test]
fn clt_emits_the_flat_table_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "command = \"clt\"\nseed = 1\n[model]\nregime = \"integrable\"\n[grid]\nL = 32.0\nn_points = 2048\n\
         [experiment]\nt = 1.0\ns = 0.5\nR = [1.0, 2.0, 4.0, 8.0]\nreplicates = 100\npaths = 8\nn_pairs = 100\n",
    );
    let mut tables = Vec::new();
    for (i, threads) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = bin()
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("clt integrable t=1 s=1"));
        tables.push(std::fs::read(out.join("clt_report.csv")).unwrap());
        let doc = json(&out.join("clt_report.json"));
        assert_eq!(doc["result"]["schema_version"], 1);
        assert_eq!(doc["result"]["covariances"].as_array().unwrap().len(), 2);
    }
    assert_eq!(tables[0], tables[1]);
    let text = String::from_utf8(tables.remove(0)).unwrap();
    let mut lines = text.split("\r\n");
    assert_eq!(
        lines.next().unwrap(),
        "regime,t,s,R,sigma2_mc,se_mc,sigma2_rho,se_rho,ks,slope,slope_lo,slope_hi,config_hash,seed,version"
    );
    let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].starts_with("integrable,1,1,1,"));
    assert!(rows[4].starts_with("integrable,1,0.5,1,"));
}
