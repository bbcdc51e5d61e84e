use std::fs;
use std::path::Path;

use pilotnet::cli::{self, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VERIFICATION};
use pilotnet::{allocators, channel, msecore, neuralnet, SystemConfig};

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("pilotnet").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest_outputs(path: &Path) -> Vec<String> {
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    json["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn gen(dir: &Path, name: &str, count: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let code = run(&[
        "gen-data", "--K", "12", "--M", "4", "--N", "2", "--tau", "4", "--r", "500", "--zeta", "3", "--count", count,
        "--seed", seed, "--out", path_str(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    out
}

#[test]
fn gen_data_paper_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), "test.txt", "2000", "7");
    let text = fs::read_to_string(&out).unwrap();
    let lines = text.lines().collect::<Vec<_>>();
    assert_eq!(lines[0], "12 4");
    assert_eq!(lines.len(), 2001);
    assert!(lines[1..].iter().all(|l| l.split_whitespace().count() == 48));
    let manifest = dir.path().join("test.txt.manifest.json");
    let outputs = manifest_outputs(&manifest);
    assert!(outputs.contains(&path_str(&out).to_string()));
    assert!(outputs.contains(&path_str(&manifest).to_string()));

    let again = gen(dir.path(), "again.txt", "2000", "7");
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn gen_data_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.txt");
    assert_eq!(run(&["gen-data", "--count", "0", "--out", path_str(&out)]), EXIT_USAGE);
    assert_eq!(run(&["gen-data", "--bogus", "--out", path_str(&out)]), EXIT_USAGE);
    assert_eq!(run(&["gen-data", "--K", "4", "--tau", "4", "--out", path_str(&out)]), EXIT_USAGE);
    let missing = dir.path().join("nope").join("x.txt");
    assert_eq!(run(&["gen-data", "--count", "3", "--out", path_str(&missing)]), EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("scenario.cfg");
    fs::write(&cfg_path, "# small scenario\nK = 5\nM = 3\ntau = 2\n").unwrap();
    let out = dir.path().join("d.txt");
    let code = run(&[
        "gen-data", "--config", path_str(&cfg_path), "--M", "2", "--count", "4", "--seed", "1", "--out", path_str(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let data = channel::read_dataset(&out).unwrap();
    assert_eq!(data.len(), 4);
    assert_eq!(data[0].lambda.dim(), (5, 2));
}

#[test]
fn train_smoke_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("net.ckpt");
    let code = run(&[
        "train", "--iterations", "1", "--batch", "2", "--holdout-size", "20", "--checkpoint", path_str(&ckpt),
    ]);
    assert_eq!(code, EXIT_OK);
    let params = neuralnet::load_params(&ckpt).unwrap();
    assert_eq!(params.arch.layer_sizes, vec![48, 64, 128, 128, 128, 64, 48]);
    let log = fs::read_to_string(dir.path().join("net.ckpt.log.csv")).unwrap();
    let lines = log.lines().collect::<Vec<_>>();
    assert_eq!(lines[0], "iteration,loss,holdout_mean,elapsed_s");
    assert_eq!(lines.len(), 2);
    let outputs = manifest_outputs(&dir.path().join("net.ckpt.manifest.json"));
    assert_eq!(outputs.len(), 3);
}

#[test]
fn train_fails_fast_on_missing_checkpoint_dir() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("missing").join("net.ckpt");
    let log = dir.path().join("log.csv");
    let code = run(&[
        "train", "--iterations", "1000", "--checkpoint", path_str(&ckpt), "--log", path_str(&log),
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!log.exists());
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "test.txt", "40", "9");
    let ckpt = dir.path().join("net.ckpt");
    assert_eq!(
        run(&["train", "--iterations", "2", "--batch", "4", "--holdout-size", "10", "--checkpoint", path_str(&ckpt)]),
        EXIT_OK
    );
    let out = dir.path().join("eval");
    let args = [
        "eval", "--data", path_str(&data), "--checkpoint", path_str(&ckpt), "--methods", "dnn,appa,rpa,espa,contopt",
        "--espa-limit", "3", "--contopt-steps", "20", "--out-dir", path_str(&out),
    ];
    assert_eq!(run(&args), EXIT_OK);

    let cfg = SystemConfig::paper_scenario();
    let instances = channel::read_dataset(&data).unwrap();
    let appa = read_csv(&out.join("appa_per_instance.csv"));
    assert_eq!(appa.len(), 40);
    for (row, inst) in appa.iter().zip(&instances) {
        let expected = msecore::sum_mse(inst, &allocators::appa(&cfg), &cfg).unwrap();
        let got: f64 = row[1].parse().unwrap();
        assert_eq!(got, expected);
    }
    for method in ["dnn", "appa", "rpa", "espa", "contopt"] {
        let cdf = read_csv(&out.join(format!("{method}_cdf.csv")));
        let expected_rows = if method == "espa" { 3 } else { 40 };
        assert_eq!(cdf.len(), expected_rows);
        let values = cdf.iter().map(|r| r[0].parse::<f64>().unwrap()).collect::<Vec<_>>();
        let quantiles = cdf.iter().map(|r| r[1].parse::<f64>().unwrap()).collect::<Vec<_>>();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        assert!(quantiles.iter().all(|q| *q > 0.0 && *q <= 1.0));
        assert_eq!(*quantiles.last().unwrap(), 1.0);
    }
    let timing = read_csv(&out.join("timing.csv"));
    assert_eq!(timing.len(), 5);
    assert_eq!(timing[3][0], "espa");
    assert_eq!(timing[3][1], "3");

    let outputs = manifest_outputs(&out.join("manifest.json"));
    for entry in fs::read_dir(&out).unwrap() {
        let p = entry.unwrap().path();
        assert!(outputs.contains(&path_str(&p).to_string()), "{} not listed", p.display());
    }

    let out2 = dir.path().join("eval2");
    let mut args2 = args.to_vec();
    let last = args2.len() - 1;
    args2[last] = path_str(&out2);
    assert_eq!(run(&args2), EXIT_OK);
    for name in ["appa_per_instance.csv", "espa_cdf.csv", "dnn_cdf.csv", "contopt_per_instance.csv", "summary.csv"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(out2.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn eval_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "test.txt", "5", "3");
    let out = dir.path().join("e");
    assert_eq!(
        run(&["eval", "--data", path_str(&data), "--methods", "espa", "--espa-budget", "1e6", "--out-dir", path_str(&out)]),
        EXIT_RUNTIME
    );
    assert_eq!(
        run(&["eval", "--data", path_str(&data), "--methods", "dnn", "--out-dir", path_str(&out)]),
        EXIT_USAGE
    );
    assert_eq!(
        run(&["eval", "--data", path_str(&data), "--methods", "bogus", "--out-dir", path_str(&out)]),
        EXIT_USAGE
    );
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "12 4\n").unwrap();
    assert_eq!(
        run(&["eval", "--data", path_str(&empty), "--methods", "appa", "--out-dir", path_str(&out)]),
        EXIT_RUNTIME
    );
}

#[test]
fn gradcheck_exit_status() {
    assert_eq!(run(&["gradcheck"]), EXIT_OK);
    assert_eq!(run(&["gradcheck", "--tol", "1e-12"]), EXIT_VERIFICATION);
}

#[test]
fn cost_matches_formula() {
    assert_eq!(run(&["cost", "--batch", "10"]), EXIT_OK);
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["--version"]), EXIT_OK);
    assert_eq!(run(&[]), EXIT_USAGE);
}
