use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use argate_core::corruption::CorruptionSpec;
use argate_core::harness::{ExperimentConfig, GridConfig};

fn argate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_argate"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn argate")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default().to_string();
    assert!(line.starts_with("error: kind="), "{stderr}");
    line
}

const EXPERIMENT: &str = r#"
name = "cli"
seeds = [1, 2]
epochs = 2
batch_size = 32
output_dir = "run"
histogram_channel = "ch0"

[dataset]
kind = "cache"
path = "clean.argd"

[model]
variant = "argate_plus"

[model.encoder]
conv_channels = [4]
kernel = 3
pool = 2
features = 8

[corruption]
failure = "uniform"
seed = 5

[corruption.scheme]
kind = "random"
n_rclean = 1
"#;

const SPEC: &str = r#"
failure = "uniform"
seed = 5

[scheme]
kind = "random"
n_rclean = 1
"#;

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(argate(&["prepare-data", "synth", "--out", "clean.argd", "--seed", "3"], d));
    assert!(out.contains("train 450, test 150"), "{out}");
    assert!(d.join("clean.manifest.csv").exists());

    std::fs::write(d.join("spec.toml"), SPEC).unwrap();
    ok(argate(
        &["corrupt", "--spec", "spec.toml", "--in", "clean.argd", "--out", "corrupt.argd", "--manifest", "test.csv"],
        d,
    ));
    assert!(d.join("test.train.csv").exists());
    let manifest = std::fs::read_to_string(d.join("test.csv")).unwrap();
    assert!(manifest.starts_with("example_index,is_clean,failing_channels,seed"));
    assert_eq!(manifest.lines().count(), 151);

    std::fs::write(d.join("exp.toml"), EXPERIMENT).unwrap();
    let out = ok(argate(&["train", "--config", "exp.toml", "--seed", "2"], d));
    assert!(out.starts_with("seed 2: test accuracy"), "{out}");
    let ckpt = d.join("run/seed_2/model.argt");
    assert!(ckpt.exists());

    let ckpt = ckpt.to_str().unwrap();
    let out = ok(argate(&["eval", "--checkpoint", ckpt, "--data", "corrupt.argd"], d));
    let acc: f64 = out.trim().strip_prefix("accuracy ").unwrap().parse().unwrap();
    assert!((0.0..=100.0).contains(&acc));

    let args = [
        "fwdist", "--checkpoint", ckpt, "--data", "corrupt.argd", "--manifest", "test.csv", "--channel", "ch0", "--out",
        "fw.csv",
    ];
    ok(argate(&args, d));
    let hist = std::fs::read_to_string(d.join("fw.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 2 * 51);
    let corrupt_mean = hist.lines().find_map(|l| l.strip_prefix("corrupt_mean,,,")).unwrap();
    let report = std::fs::read_to_string(d.join("run/report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    let from_run = report["seeds"][0]["histogram"]["corrupt"]["mean"].as_f64().unwrap();
    assert_eq!(format!("{from_run:.6}"), corrupt_mean);

    let csv = ok(argate(&["report", "--in", "run", "--format", "csv"], d));
    assert!(csv.lines().nth(1).unwrap().starts_with("argate_plus,rclean=1,uniform,1,"), "{csv}");
    let md = ok(argate(&["report", "--in", "run", "--format", "md"], d));
    assert!(md.contains("| argate_plus |"), "{md}");

    let line = error_line(&argate(&["eval", "--checkpoint", ckpt, "--data", "clean.manifest.csv"], d));
    assert!(line.contains("kind=data"), "{line}");
    let args = [
        "fwdist", "--checkpoint", ckpt, "--data", "corrupt.argd", "--manifest", "test.csv", "--channel", "nope", "--out",
        "x.csv",
    ];
    let line = error_line(&argate(&args, d));
    assert!(line.contains("kind=unknown_channel"), "{line}");
}

fn grid_toml(variants: &[&str]) -> String {
    let base = EXPERIMENT
        .replace("[dataset]", "[base.dataset]")
        .replace("[model]", "[base.model]")
        .replace("[model.encoder]", "[base.model.encoder]")
        .replace("seeds = [1, 2]", "seeds = [1]");
    let base = base[..base.find("[corruption]").unwrap()].to_string();
    format!("variants = {variants:?}\ninclude_clean = true\n\n[base]\n{base}")
}

#[test]
fn grid_runs_cells_in_subprocesses() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(argate(&["prepare-data", "synth", "--out", "clean.argd"], d));
    let grid = grid_toml(&["baseline", "net_gated"]);
    std::fs::write(d.join("grid.toml"), grid).unwrap();
    let table = ok(argate(&["grid", "--config", "grid.toml", "--out", "grid"], d));
    assert_eq!(table.lines().filter(|l| l.contains("| clean |")).count(), 2, "{table}");
    assert!(d.join("grid/table.csv").exists());
    assert!(d.join("grid/run_001/report.json").exists());

    std::fs::write(d.join("empty.toml"), grid_toml(&[])).unwrap();
    let table = ok(argate(&["grid", "--config", "empty.toml", "--out", "empty"], d));
    assert_eq!(table.lines().count(), 2, "{table}");
}

#[test]
fn failures_print_a_parsable_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let line = error_line(&argate(&["train", "--config", "missing.toml"], d));
    assert!(line.contains("kind=io") && line.contains("missing.toml"), "{line}");
    let line = error_line(&argate(&["prepare-data", "har", "--root", "nowhere", "--out", "x.argd"], d));
    assert!(line.contains("kind=data") && line.contains("y_train.txt"), "{line}");
    std::fs::write(d.join("bad.toml"), "name = 3").unwrap();
    let line = error_line(&argate(&["train", "--config", "bad.toml"], d));
    assert!(line.contains("kind=parse"), "{line}");
}

#[test]
fn shipped_configs_parse() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name.contains("grid") {
            let grid: GridConfig = toml::from_str(&text).unwrap();
            assert!(!grid.expand().is_empty(), "{name}");
        } else if name.starts_with("corruption") {
            toml::from_str::<CorruptionSpec>(&text).unwrap();
        } else {
            ExperimentConfig::from_toml(&text).unwrap().validate().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 4);
}
