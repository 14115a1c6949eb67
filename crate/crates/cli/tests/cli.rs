use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use certbound::data::{save_samples, Sample};
use certbound::Network;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_certbound"));
    c.env_remove("CERTBOUND_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn certbound")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The hand-built max-margin network and a few labelled points around it.
fn fixture() -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("toy.json");
    Network::toy_max_margin().save(&model).unwrap();
    let data = dir.path().join("data.jsonl");
    let samples: Vec<Sample> = [
        ([0.1, 0.42], 1),
        ([0.0, 0.9], 1),
        ([-0.3, 0.5], 1),
        ([0.5, -0.5], 0),
        ([0.0, -0.2], 0),
        ([0.9, 0.1], 0),
        ([-0.05, 0.35], 1),
    ]
    .iter()
    .map(|(x, y)| Sample { x: x.to_vec(), y: *y })
    .collect();
    save_samples(&data, &samples).unwrap();
    (dir, model, data)
}

fn tight_fraction(out: &str) -> &str {
    out.lines()
        .find_map(|l| l.strip_prefix("tight-fraction "))
        .and_then(|l| l.split_whitespace().next())
        .expect("tight-fraction line")
}

#[test]
fn toy_is_tight_inside_the_gap() {
    let o = run(&["toy", "--b", "0.3", "--eps", "0.2", "--n", "1000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(tight_fraction(&out), "1.000");
    assert!(!out.contains("unstable neurons 0 "), "{out}");

    let o = run(&["toy", "--b", "0.3", "--eps", "0.29", "--n", "1000"]);
    assert_eq!(tight_fraction(&stdout(&o)), "1.000");
}

#[test]
fn toy_at_zero_radius_has_no_unstable_neurons() {
    let o = run(&["toy", "--eps", "0", "--n", "200"]);
    let out = stdout(&o);
    assert_eq!(tight_fraction(&out), "1.000");
    assert!(out.contains("unstable neurons 0 over 0 samples"), "{out}");
}

#[test]
fn certify_rows_are_consistent_and_stable_across_thread_counts() {
    let (dir, model, data) = fixture();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (jobs, out) in [("1", &a), ("4", &b)] {
        let o = run(&["--jobs", jobs, "certify", p(&model), p(&data), "--eps", "1/20", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("robust error"));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());

    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sample_id,label,worst_target,p_c_star,certified,d_sum,r_mean,pgd_margin,clean_margin"
    );
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], i.to_string());
        let p_c: f64 = f[3].parse().unwrap();
        let pgd: f64 = f[7].parse().unwrap();
        assert_eq!(f[4] == "true", p_c > 0.0);
        assert!(pgd >= p_c - 1e-9);
        assert!(f[5].parse::<f64>().unwrap() >= -1e-9);
    }
}

#[test]
fn certify_first_sample_matches_the_worked_example() {
    let (_dir, model, data) = fixture();
    let o = run(&["certify", p(&model), p(&data), "--eps", "0.2", "--engine", "fast-lin"]);
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let f: Vec<&str> = row.split(',').collect();
    assert!((f[3].parse::<f64>().unwrap() + 0.08).abs() < 1e-12);
    assert_eq!(f[4], "false");
    assert!(f[5].parse::<f64>().unwrap().abs() < 1e-12);
    assert!(f[6].parse::<f64>().unwrap().abs() < 1e-12);
}

#[test]
fn ibp_rows_leave_tightness_columns_empty() {
    let (_dir, model, data) = fixture();
    let o = run(&["certify", p(&model), p(&data), "--eps", "0.1", "--engine", "ibp", "--norm", "l2"]);
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let f: Vec<&str> = row.split(',').collect();
    assert_eq!((f[5], f[6]), ("", ""));
}

#[test]
fn oracle_brackets_are_ordered() {
    let (dir, model, data) = fixture();
    let out = dir.path().join("o.csv");
    let o = run(&["oracle", p(&model), p(&data), "--eps", "0.2", "--resolution", "101", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("sample_id,target,lower,exact,upper,ordered\n"));
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn attack_reports_errors() {
    let (_dir, model, data) = fixture();
    let o = run(&["attack", p(&model), p(&data), "--eps", "0.2", "--steps", "20", "--restarts", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("standard error 0/7"), "{out}");
    assert!(out.contains("pgd error (20 steps, 2 restarts)"), "{out}");
}

#[test]
fn train_writes_model_and_metrics_and_honours_the_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        "eps = \"1/10\"\nepochs = 3\nwarmup_epochs = 1\nlambda = 5e-3\ngamma = 0.5\nhidden = [4]\n\
         eval_pgd_steps = 0\n[dataset]\nkind = \"toy\"\nb = 0.3\nn = 60\n",
    )
    .unwrap();
    let train = |name: &str, seed: &str| {
        let model = dir.path().join(name);
        let o = bin()
            .args(["train", p(&cfg), "--out", p(&model)])
            .env("CERTBOUND_SEED", seed)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(model).unwrap()
    };
    let a = train("a.json", "7");
    let b = train("b.json", "7");
    let c = train("c.json", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    Network::from_json(&a).unwrap();

    let metrics = fs::read_to_string(dir.path().join("a.metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.lines().all(|l| l.starts_with("{\"epoch\":")));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["toy", "--eps", "a lot"]).status.code(), Some(1));
    assert_eq!(run(&["toy"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_inputs_exit_with_two() {
    let (dir, model, data) = fixture();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"x\": [0.1], \"y\": 0}\n").unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["certify", p(&model), p(&bad), "--eps", "0.1"]).status.code(), Some(2));
    assert_eq!(run(&["certify", p(&missing), p(&data), "--eps", "0.1"]).status.code(), Some(2));
    fs::write(&bad, "not json").unwrap();
    assert_eq!(run(&["attack", p(&model), p(&bad), "--eps", "0.1"]).status.code(), Some(2));
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "epochs = \"many\"\n").unwrap();
    let o = run(&["train", p(&cfg), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
}
