use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fhnn");

const TINY: &str = r#"
name = "tiny"

[dataset]
n_train = 3
n_test = 2
duration = 2.0

[model]
coeff_hidden = [6]
stream_hidden = [6]
node_hidden = [6]

[training]
epochs = 3
batch_size = 16
n_val = 1
val_pairs = 0

[evaluation]
horizons = [1.0, 2.0]
scenarios = ["steady_vortex", "morison_wave"]
scenario_horizon = 2.0
ablation_horizon = 2.0
long_horizons = [3.0]
long_dense_max = 2
"#;

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{TINY}{extra}")).unwrap();
    p
}

fn fhnn(dir: &Path, cfg: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_lists_every_command_and_flag() {
    let o = Command::new(BIN).arg("--help").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for word in ["generate", "train", "eval", "suite", "flow", "params", "--config", "--seed", "--out"] {
        assert!(text.contains(word), "{word}");
    }
    let o = Command::new(BIN).args(["eval", "--help"]).output().unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains("--horizons"));
    let o = Command::new(BIN).args(["flow", "--help"]).output().unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains("--grid"));
}

#[test]
fn full_cycle_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let run = tmp.path().join("runs/tiny");

    let o = fhnn(tmp.path(), &cfg, &["train"]);
    assert_eq!(code(&o), 4, "train before generate");
    assert!(String::from_utf8_lossy(&o.stderr).contains("fhnn generate"));

    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["generate"])), 0);
    for f in ["config.toml", "dataset.jsonl", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let o = fhnn(tmp.path(), &cfg, &["eval"]);
    assert_eq!(code(&o), 4, "eval before train");
    assert!(String::from_utf8_lossy(&o.stderr).contains("fhnn train --variant fhnn"));

    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["train"])), 0);
    let first = std::fs::read(run.join("checkpoints/fhnn.json")).unwrap();
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["train"])), 0);
    assert_eq!(first, std::fs::read(run.join("checkpoints/fhnn.json")).unwrap(), "train is idempotent");
    let log = std::fs::read_to_string(run.join("logs/fhnn.csv")).unwrap();
    assert!(log.starts_with("epoch,lr,l_deriv,l_step,l_smooth,total,val_total"));

    let o = fhnn(tmp.path(), &cfg, &["eval", "--horizons", "1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("reports/eval_fhnn.json").exists());

    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["flow", "--grid", "-3:3:6"])), 0);
    let csv = std::fs::read_to_string(run.join("reports/flow_fhnn.csv")).unwrap();
    assert_eq!(csv.lines().count(), 37);
    assert!(csv.starts_with("x,y,u_true,v_true,u_learned,v_learned"));
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["params"])), 0);

    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["flow", "--variant", "no_flow_field"])), 2);
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["params", "--variant", "neural_ode"])), 4);
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["suite", "vs_node"])), 4);
    let o = fhnn(tmp.path(), &cfg, &["suite", "scenarios", "--train-missing"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(run.join("reports/suite_scenarios.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(run.join("reports/suite_scenarios.json").exists());
    assert!(run.join("reports/suite_scenarios_plot.csv").exists());
    assert!(!run.join(".lock").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "\n[scenario]\nomegaa = 1.0\n");
    let o = fhnn(tmp.path(), &cfg, &["generate"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("omegaa"));
    let cfg = write_config(tmp.path(), "");
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["train", "--variant", "hnn"])), 2);
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["flow", "--grid", "1:0:3"])), 2);
    assert_eq!(code(&fhnn(tmp.path(), &Path::new("/nonexistent.toml"), &["generate"])), 1);
}

#[test]
fn divergence_exits_3_and_keeps_last_good() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("epochs = 3", "epochs = 3\nlr = 1e300");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["generate"])), 0);
    let o = fhnn(tmp.path(), &cfg, &["train"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("runs/tiny/checkpoints/fhnn.last_good.json").exists());
}

#[test]
fn failed_assert_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "\n[assert]\nmax_rmse_pos = [{ horizon = 1.0, value = 1e-30 }]\n");
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["generate"])), 0);
    assert_eq!(code(&fhnn(tmp.path(), &cfg, &["train"])), 0);
    let o = fhnn(tmp.path(), &cfg, &["eval"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("assert failed"));
}
