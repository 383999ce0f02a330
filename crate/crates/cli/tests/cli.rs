use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nelson_lab::config::LabConfig;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nelson-lab"))
}

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL: &str = r#"
[grid]
n = 32
length = 20.0
potential-oversample = 4

[fiber]
n = 64
length = 20.0
alphas = [0.0, 1.0]
"#;

#[test]
fn shipped_desk_config_matches_defaults() {
    let text = fs::read_to_string(repo_file("configs/desk.toml")).unwrap();
    let cfg: LabConfig = toml::from_str(&text).unwrap();
    assert_eq!(cfg, LabConfig::default());
}

#[test]
fn effective_writes_tables_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("out");
    let o = run(&["effective", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let listed: Vec<String> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, on_disk);
    assert!(listed.contains(&"w_0_1.csv".to_string()));
    assert_eq!(m["subcommand"], "effective");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&["effective", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        reports.push((fs::read(out.join("effective.json")).unwrap(), fs::read(out.join("w_0_1.csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn config_hash_ignores_key_order() {
    let tmp = TempDir::new().unwrap();
    let a = write_config(tmp.path(), "a.toml", "seed = 5\n[grid]\nn = 32\nlength = 20.0\npotential-oversample = 4\n");
    let b = write_config(tmp.path(), "b.toml", "[grid]\npotential-oversample = 4\nlength = 20.0\nn = 32\n\n[fock]\n");
    let b_text = fs::read_to_string(&b).unwrap();
    fs::write(&b, format!("seed = 5\n{b_text}")).unwrap();
    let mut hashes = Vec::new();
    for (cfg, name) in [(a, "oa"), (b, "ob")] {
        let out = tmp.path().join(name);
        let o = run(&["effective", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        hashes.push(manifest(&out)["config_hash"].clone());
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn zero_profile_gives_zero_tables() {
    let tmp = TempDir::new().unwrap();
    let text = format!(
        "{SMALL}\n[model]\nd = 1\nmasses = [1.0, 1.0]\nalpha = 1.0\nkappa = 1.0\n\
         [model.potential]\nfamily = \"zero\"\n\
         [[model.profiles]]\nkind = \"sharp-flat\"\nlambda = 1.0\nscale = 0.0\n\
         [[model.profiles]]\nkind = \"sharp-flat\"\nlambda = 1.0\nscale = 0.0\n"
    );
    let cfg = write_config(tmp.path(), "z.toml", &text);
    let out = tmp.path().join("out");
    let o = run(&["effective", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("w_0_1.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let w: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(w, 0.0);
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("effective.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["e_diag"], 0.0);
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let bad_type = write_config(tmp.path(), "t.toml", "[grid]\nn = \"many\"\n");
    let o = run(&["effective", "--config", bad_type.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.n"));

    let bad_value = write_config(tmp.path(), "v.toml", "[fiber]\nn = 100\n");
    let o = run(&["effective", "--config", bad_value.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fiber.n"));

    let unknown = write_config(tmp.path(), "u.toml", "[grid]\nsize = 4\n");
    let o = run(&["effective", "--config", unknown.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("size"));

    let syntax = write_config(tmp.path(), "s.toml", "[grid\n");
    let o = run(&["effective", "--config", syntax.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_and_flags_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["effective", "--budget", "huge"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn fiber_plot_has_csv_twin() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("out");
    let o = run(&["fiber", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(out.join("dispersion_plot.svg")).unwrap();
    let csv = fs::read_to_string(out.join("dispersion_plot.csv")).unwrap();
    assert_eq!(svg.matches("<circle").count(), csv.lines().count() - 1);
    assert!(out.join("dispersion_alpha_0.csv").exists());
}

#[test]
fn accept_subset_reports_each_criterion() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["accept", "--criteria", "1,2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    assert!(stdout.contains("2/2 criteria passed"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("acceptance.json")).unwrap()).unwrap();
    assert_eq!(report["report"].as_array().unwrap().len(), 2);

    let o = run(&["accept", "--criteria", "13", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
