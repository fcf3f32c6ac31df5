use std::process::Command;

use multistop::cli::config::{bundled, ExperimentConfig, BUNDLED_NAMES};
use multistop::cli::{exit_code, EXIT_CONFIG, EXIT_OK};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multistop"))
}

#[test]
fn bundled_configs_validate() {
    for name in BUNDLED_NAMES {
        let cfg = ExperimentConfig::parse(&bundled(name).unwrap()).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}

#[test]
fn negative_sample_size_names_the_key() {
    let text = bundled("log_utility_n5").unwrap().replace("samples = 32768", "samples = -5");
    let err = ExperimentConfig::parse(&text).and_then(|c| c.validate()).unwrap_err();
    assert_eq!(exit_code(&err), EXIT_CONFIG);
    assert!(err.to_string().contains("training.samples"), "{err}");
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "[training]\nsamples = -1\n").unwrap();
    let out = bin().arg("run").arg(&path).env("MULTISTOP_OUT", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training.samples"));

    std::fs::write(&path, "[training]\nsampels = 10\n").unwrap();
    let out = bin().arg("run").arg(&path).env("MULTISTOP_OUT", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = bin().args(["run", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/x.cfg"));
}

#[test]
fn print_config_round_trips() {
    let out = bin().args(["print-config", "multi_put_n5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::parse(&bundled("multi_put_n5").unwrap()).unwrap());
    let out = bin().args(["print-config", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn tiny_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.cfg");
    std::fs::write(
        &path,
        "[experiment]\nname = \"tiny\"\n[solver]\nsteps = 2\n[training]\nsamples = 64\n[network]\nepochs = 2\nwarm_epochs = 1\n[evaluate]\ngrid_points = 5\nrollout_paths = 50\n",
    )
    .unwrap();
    let out = bin().arg("run").arg(&path).env("MULTISTOP_OUT", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("tiny");
    for f in ["curve.csv", "plane.csv", "summary.txt", "config.resolved.toml", "value_stack.bin", "curve.svg"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let curve = std::fs::read_to_string(run.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("x,value_nn,value_oracle"));
    assert_eq!(curve.lines().count(), 6);
}
