use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otx_core::nets::Mlp;
use otx_core::priors::seeded_rng;
use otx_core::sae::{Autoencoder, TrainSpec};

fn otx() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_otx"));
    c.env_remove("OTX_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    otx().args(args).output().expect("spawn otx")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The value column of a one-row divergence CSV.
fn divergence_value(o: &Output) -> f64 {
    assert_eq!(o.status.code(), Some(0), "{}", stderr(o));
    let text = stdout(o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,M,d,params,value,seconds"));
    lines
        .next()
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap()
}

const SIX_A: &str = "0.1,0.2\n0.9,0.4\n0.35,0.8\n0.6,0.05\n0.2,0.65\n0.75,0.9\n";
const SIX_B: &str = "0.55,0.3\n0.05,0.95\n0.8,0.7\n0.3,0.1\n0.95,0.15\n0.45,0.5\n";

#[test]
fn identical_inputs_give_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", SIX_A);
    let sk = divergence_value(&run(&["divergence", s(&a), s(&a), "--method", "sinkhorn"]));
    assert!(sk.abs() <= 1e-9, "{sk}");
    let mmd = divergence_value(&run(&["divergence", s(&a), s(&a), "--method", "mmd"]));
    assert!(mmd.abs() <= 1e-12, "{mmd}");
}

#[test]
fn small_epsilon_sinkhorn_matches_hungarian() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", SIX_A);
    let b = write(dir.path(), "b.csv", SIX_B);
    let sk = divergence_value(&run(&[
        "divergence",
        s(&a),
        s(&b),
        "--method",
        "sinkhorn",
        "--epsilon",
        "1e-3",
        "--iters",
        "5000",
    ]));
    let h = divergence_value(&run(&["divergence", s(&a), s(&b), "--method", "hungarian"]));
    assert!((sk - h).abs() <= 0.01 * h, "sinkhorn {sk} vs hungarian {h}");
}

#[test]
fn every_method_runs_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", SIX_A);
    let b = write(dir.path(), "b.csv", SIX_B);
    for m in ["sinkhorn", "hungarian", "sliced", "mmd", "w2gauss"] {
        let out = dir.path().join(m);
        let o = run(&[
            "divergence",
            s(&a),
            s(&b),
            "--method",
            m,
            "--projections",
            "20",
            "--out",
            s(&out),
        ]);
        let v = divergence_value(&o);
        assert!(v.is_finite() && v >= 0.0, "{m}: {v}");
        let file = fs::read_to_string(out.join("divergence.csv")).unwrap();
        assert!(file.starts_with("method,M,d,params,value,seconds\n"));
        assert!(file.contains(&format!("\n{m},6,2,")));
    }
}

#[test]
fn bad_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", SIX_A);
    let ragged = write(dir.path(), "r.csv", "1,2\n3\n");
    let text = write(dir.path(), "t.csv", "1,2\nfoo,3\n");
    let three_d = write(dir.path(), "d.csv", "1,2,3\n4,5,6\n");
    for args in [
        vec!["divergence", s(&a), s(&ragged)],
        vec!["divergence", s(&a), s(&text)],
        vec!["divergence", s(&a), s(&three_d)],
        vec!["divergence", s(&a), "/nonexistent/file.csv"],
        vec!["divergence", s(&a), s(&a), "--method", "nope"],
        vec!["divergence", s(&a), s(&a), "--epsilon", "-1"],
        vec!["frobnicate"],
        vec!["check", "nonsense"],
        vec!["swissroll-gen", "--n", "0"],
        vec!["swissroll-gen", "--noise", "-1"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn overflow_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let big = write(dir.path(), "big.csv", "1e200,0\n-1e200,1\n3,4\n");
    let small = write(dir.path(), "small.csv", "0,0\n1,1\n2,0\n");
    for m in ["sinkhorn", "w2gauss"] {
        let o = run(&["divergence", s(&big), s(&small), "--method", m]);
        assert_eq!(o.status.code(), Some(2), "{m}: {}", stderr(&o));
    }
}

#[test]
fn swiss_roll_generation_is_seeded_and_on_the_roll() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&["swissroll-gen", "--n", "50", "--seed", "7"]);
    let b = run(&["swissroll-gen", "--n", "50", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,x2"));
    let pi = std::f64::consts::PI;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let t2 = v[0] * v[0] + v[2] * v[2];
        assert!(t2 >= (1.5 * pi).powi(2) - 1e-9 && t2 <= (4.5 * pi).powi(2) + 1e-9);
    }
    let o = run(&[
        "swissroll-gen",
        "--n",
        "10",
        "--noise",
        "0.1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("swiss_roll.csv"))
            .unwrap()
            .lines()
            .count(),
        11
    );
}

const TINY_TRAIN: &str = r#"{
  "dataset": { "kind": "toy_mixture", "n": 48, "seed": 1 },
  "sae": {
    "variant": "sae", "epsilon": 0.5, "iters": 50, "beta": 1.0, "batch_size": 16,
    "prior": { "kind": "gaussian_standard", "dim": 2 },
    "encoder_hidden": [8], "decoder_hidden": [8],
    "optimizer": { "kind": "adam", "lr": 0.001 },
    "epochs": EPOCHS, "seed": 3
  }
}"#;

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &TINY_TRAIN.replace("EPOCHS", "2"));
    let (o1, o2) = (dir.path().join("r1"), dir.path().join("r2"));
    for out in [&o1, &o2] {
        let o = run(&["train", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["train_log.csv", "encoder.bin", "decoder.bin", "config.json"] {
        assert_eq!(
            fs::read(o1.join(f)).unwrap(),
            fs::read(o2.join(f)).unwrap(),
            "{f}"
        );
    }
    let log = fs::read_to_string(o1.join("train_log.csv")).unwrap();
    assert!(log.starts_with("round,D,S,total,seconds\n"));
    assert_eq!(log.lines().count(), 1 + 6);
    // the resolved config is a complete, loadable run description
    let resolved =
        TrainSpec::from_json(&fs::read_to_string(o1.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved.sae.tol, otx_core::sinkhorn::DEFAULT_TOL);
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &TINY_TRAIN.replace("EPOCHS", "0"));
    let out = dir.path().join("run");
    let o = run(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--seed",
        "11",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let spec = TrainSpec::from_json(&fs::read_to_string(&cfg).unwrap()).unwrap();
    let mut sae = spec.sae.clone();
    sae.seed = 11;
    let init = Autoencoder::init(&sae, 2, &mut seeded_rng(11)).unwrap();
    let enc = Mlp::read_checkpoint(fs::File::open(out.join("encoder.bin")).unwrap()).unwrap();
    let dec = Mlp::read_checkpoint(fs::File::open(out.join("decoder.bin")).unwrap()).unwrap();
    assert_eq!(enc, init.encoder);
    assert_eq!(dec, init.decoder);
    assert_eq!(
        fs::read_to_string(out.join("train_log.csv")).unwrap(),
        "round,D,S,total,seconds\n"
    );
}

#[test]
fn invalid_train_configs_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "u.json",
        &TINY_TRAIN
            .replace("EPOCHS", "1")
            .replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1"),
    );
    let o = run(&[
        "train",
        "--config",
        s(&unknown),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let bad = TINY_TRAIN
        .replace("EPOCHS", "1")
        .replace("\"epsilon\": 0.5", "\"epsilon\": -0.5")
        .replace("\"batch_size\": 16", "\"batch_size\": 1");
    let bad = write(dir.path(), "b.json", &bad);
    let o = run(&[
        "train",
        "--config",
        s(&bad),
        "--out",
        s(&dir.path().join("y")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("epsilon") && err.contains("batch_size"),
        "{err}"
    );
    assert!(!dir.path().join("y").exists());
}

#[test]
fn divergent_training_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY_TRAIN.replace("EPOCHS", "3").replace(
        "{ \"kind\": \"adam\", \"lr\": 0.001 }",
        "{ \"kind\": \"sgd\", \"lr\": 1e30 }",
    );
    let cfg = write(dir.path(), "c.json", &cfg);
    let o = run(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("z")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("not finite"));
}

#[test]
fn check_suites_pass_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", "sinkhorn", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count() >= 4);
    let report = fs::read_to_string(dir.path().join("check_report.csv")).unwrap();
    assert!(report.starts_with("property,passed,detail,instance\n"));
    assert!(!report.contains(",false,"));
    let o = run(&["check", "theory"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for name in [
        "triangle_inequality",
        "data_processing",
        "nat_equivalence",
        "lipschitz_bound",
    ] {
        assert!(stdout(&o).contains(&format!("PASS {name}")));
    }
}

const SMALL_SWEEP: &str =
    r#"{ "dims": [4, 8], "sigmas": [0.8, 1.0, 1.2], "m": 16, "trials": 3, "seed": 5 }"#;

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", SMALL_SWEEP);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let o = otx()
            .args(["gauss-highdim", "--config", s(&cfg), "--out", s(&out)])
            .env("OTX_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(fs::read_to_string(out.join("gauss_highdim.csv")).unwrap());
        assert!(out.join("config.json").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    let mut lines = outputs[0].lines();
    assert_eq!(
        lines.next(),
        Some("d,sigma,trial,hungarian_avg_cost,w2gauss_estimate")
    );
    assert_eq!(lines.count(), 2 * 3 * 3);
    for line in outputs[0].lines().skip(1) {
        let cost: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(cost > 0.0);
    }
}

#[test]
fn bad_thread_count_or_sweep_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", SMALL_SWEEP);
    let o = otx()
        .args(["gauss-highdim", "--config", s(&cfg)])
        .env("OTX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let bad = write(dir.path(), "b.json", r#"{ "dims": [], "m": 1 }"#);
    let o = run(&["gauss-highdim", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("dims") && err.contains("m:"), "{err}");
}
