use std::fs;
use std::path::Path;
use std::process::Command;

fn write_config(dir: &Path, sizes: &str) -> std::path::PathBuf {
    let text = format!(
        r#"
name = "cli"
seed = 1
output_dir = "out"

[dataset]
id = "synthetic"
source = "synthetic"
n = 120

[provider]
kind = "mock"
cache_dir = "cache"

[prompts]
n_system_variants = 2
n_user_variants = 2
k = 4

[posterior]
training_sizes = {sizes}
n_folds = 2

[posterior.noise]
kind = "known"
sd = 0.05

[posterior.sampler]
chains = 2
samples_per_chain = 200
warmup = 200

[script.elicitation]
means = [2.0, -1.0, 1.0]
stds = [0.1, 0.1, 0.1]

[script.completion]
kind = "echo"
"#
    );
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

fn llmprior(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_llmprior")).args(args).output().unwrap()
}

#[test]
fn fit_then_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[5, 10]");
    let config = config.to_str().unwrap();
    let recorded = dir.path().join("recorded");
    let replayed = dir.path().join("replayed");

    let out = llmprior(&["fit", "--config", config, "--out", recorded.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = llmprior(&["replay", "--experiment", "fit", "--config", config, "--out", replayed.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 network"));

    for file in ["fit/report.json", "fit/cells.csv", "fit/summary.csv", "elicited_prior.json"] {
        assert_eq!(fs::read(recorded.join(file)).unwrap(), fs::read(replayed.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn memtest_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[5]");
    let out = llmprior(&["memtest", "-c", config.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cells = fs::read_to_string(dir.path().join("out/memtest/cells.csv")).unwrap();
    assert!(cells.lines().skip(1).all(|l| l.ends_with(",0")), "{cells}");
}

#[test]
fn failed_cells_give_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[5, 500]");
    let out = llmprior(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size=500"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"x\"\nunknown_key = 1\n").unwrap();
    assert_eq!(llmprior(&["fit", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    let config = write_config(dir.path(), "[5]");
    // http provider without endpoint or credential
    let out = llmprior(&["elicit", "--config", config.to_str().unwrap(), "--provider", "http"]);
    assert_eq!(out.status.code(), Some(2));
}
