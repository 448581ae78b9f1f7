use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l1bsde"))
}

fn run_config(dir: &Path, text: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("cfg.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.join("out");
    bin().arg("run").arg(&cfg).arg("--out").arg(&out).args(extra).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn list_prints_every_suite() {
    let out = bin().args(["run", "--list"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["oracle", "doob", "apriori", "comparison", "truncation", "stability", "rbsde", "twobsde"] {
        assert!(text.lines().any(|l| l == name), "{name} missing from {text}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bin().args(["run", "/nonexistent/cfg.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(run_config(dir.path(), "[experiment\nname=", &[]).status.code(), Some(2));
    assert_eq!(run_config(dir.path(), "[experiment]\nname = \"nope\"\n", &[]).status.code(), Some(2));
    let bad_beta = "[experiment]\nname = \"doob\"\n[params]\nbetas = [1.5]\n";
    assert_eq!(run_config(dir.path(), bad_beta, &[]).status.code(), Some(2));
}

#[test]
fn cap_violations_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let deep = "[experiment]\nname = \"twobsde\"\n[grid]\nsteps = [15]\n";
    assert_eq!(run_config(dir.path(), deep, &[]).status.code(), Some(3));
    let cfg = dir.path().join("capped.toml");
    fs::write(&cfg, "[experiment]\nname = \"apriori\"\n[grid]\nsteps = [6]\n").unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path()).env("L1BSDE_DEPTH_CAP", "4").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    // brute-force oracle beyond its enumeration size
    let big = "[experiment]\nname = \"oracle\"\n[grid]\nsteps = [5]\n";
    assert_eq!(run_config(dir.path(), big, &[]).status.code(), Some(3));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // increasing in y: the parameter-free bound is not applicable, so the row fails
    let text = "[experiment]\nname = \"apriori\"\n[grid]\nsteps = [3]\n[driver]\nspec = \"linear(0.5, 0)\"\n";
    let out = run_config(dir.path(), text, &[]);
    assert_eq!(out.status.code(), Some(1));
    let csv = dir.path().join("out/apriori.csv");
    assert!(csv_rows(&csv).iter().any(|r| r[7] == "false"));
    assert_eq!(bin().arg("verify").arg(&csv).status().unwrap().code(), Some(1));
}

#[test]
fn identical_stability_pair_has_nonnegative_slack() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[experiment]\nname = \"stability\"\ninstances = 6\n[grid]\nsteps = [3, 5]\n[params]\npair = \"identical\"\n";
    let out = run_config(dir.path(), text, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("out/stability.csv"));
    let asserted: Vec<_> = rows.iter().filter(|r| !r[6].is_empty()).collect();
    assert!(!asserted.is_empty());
    for r in asserted {
        assert!(r[6].parse::<f64>().unwrap() >= 0.0, "{r:?}");
    }
}

#[test]
fn truncation_distances_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[experiment]\nname = \"truncation\"\n[grid]\nsteps = [10]\n[claim]\nspec = \"pareto(1.5)\"\n\
                [driver]\nspec = \"linear(-0.5, 0.5)\"\n[params]\nlevels = [1.0, 2.0, 4.0, 8.0]\n";
    assert_eq!(run_config(dir.path(), text, &[]).status.code(), Some(0));
    let d: Vec<f64> = csv_rows(&dir.path().join("out/truncation.csv"))
        .iter()
        .filter(|r| r[3] == "distance")
        .map(|r| r[4].parse().unwrap())
        .collect();
    assert_eq!(d.len(), 4);
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}

#[test]
fn reports_have_schema_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[experiment]\nname = \"oracle\"\ninstances = 5\n[grid]\nsteps = [2]\n";
    assert_eq!(run_config(dir.path(), text, &[]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/oracle.csv")).unwrap();
    assert!(csv.starts_with("experiment,instance,param,quantity,value,bound,slack,pass\n"));
    assert!(!csv.contains('\r'));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/oracle.json")).unwrap()).unwrap();
    assert_eq!(json["failed"], 0);
    assert_eq!(json["quantities"]["sup_expectation_gap"]["passed"], 5);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[experiment]\nname = \"doob\"\ninstances = 3\n[grid]\nsteps = [3]\n";
    assert_eq!(run_config(dir.path(), text, &[]).status.code(), Some(0));
    let csv = dir.path().join("out/doob.csv");
    assert_eq!(bin().arg("verify").arg(&csv).status().unwrap().code(), Some(0));

    let good = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = good.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    fields[6] = "123.5".into();
    lines[1] = fields.join(",");
    let corrupted = dir.path().join("corrupted.csv");
    fs::write(&corrupted, lines.join("\n") + "\n").unwrap();
    assert_eq!(bin().arg("verify").arg(&corrupted).status().unwrap().code(), Some(1));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(bin().arg("verify").arg(&empty).status().unwrap().code(), Some(2));
    assert_eq!(bin().args(["verify", "/nonexistent.csv"]).status().unwrap().code(), Some(2));
}

#[test]
fn parallel_output_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[experiment]\nname = \"comparison\"\nseed = 5\ninstances = 12\n[grid]\nsteps = [2, 3, 4]\n";
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, text).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&a).status().unwrap().success());
    assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&b).args(["--parallel", "3"]).status().unwrap().success());
    assert_eq!(fs::read(a.join("comparison.csv")).unwrap(), fs::read(b.join("comparison.csv")).unwrap());
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        l1bsde_lab::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 12);
}
