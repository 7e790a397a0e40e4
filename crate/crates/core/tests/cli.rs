//! Runs the `robot-mirror` binary on a small configuration.

use std::path::Path;
use std::process::{Command, Output};

use robot_mirror::association::AssociativeMemory;
use robot_mirror::config::RunConfig;
use robot_mirror::kinematics::{BodyModel, PoseDataset};
use robot_mirror::perception::RandomFeatureEncoder;
use robot_mirror::vae::VaeParams;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robot-mirror"))
        .args(args)
        .arg("--out")
        .arg(out)
        .args(["--set", "dataset_size=400", "--set", "encoder_features=64"])
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(out: &Path, args: &[&str]) -> i32 {
    run(out, args).status.code().unwrap()
}

/// Small learner settings that an undertrained VAE can satisfy.
const LEARN: [&str; 6] = [
    "--set",
    "epsilon=0.001",
    "--set",
    "t=10",
    "--set",
    "tick_budget=20000",
];

#[test]
fn full_pipeline_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["babble"]);
    let csv = std::fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
    let ds = PoseDataset::read_csv(&out.join("dataset.csv"), &BodyModel::default()).unwrap();
    assert_eq!(ds.to_csv(), csv);

    let report = ok(out, &["train"]);
    assert!(report.contains("epoch 10"), "{report}");
    let w = std::fs::read_to_string(out.join("vae.weights")).unwrap();
    assert_eq!(
        VaeParams::from_text(&w, Path::new("w")).unwrap().to_text(),
        w
    );

    let mut args = vec!["learn"];
    args.extend(LEARN);
    ok(out, &args);
    let m = std::fs::read_to_string(out.join("memory.assoc")).unwrap();
    let mem = AssociativeMemory::from_text(&m, Path::new("m")).unwrap();
    assert_eq!(mem.len(), 10);
    assert_eq!(mem.to_text(), m);
    let e = std::fs::read_to_string(out.join("encoder.txt")).unwrap();
    assert_eq!(
        RandomFeatureEncoder::from_text(&e, Path::new("e"))
            .unwrap()
            .to_text(),
        e
    );
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("tick,stored,dist,pairs\n0,1,inf,1\n"));

    let imitation = ok(out, &["imitate"]);
    assert!(imitation.contains("mean NMAE"));
    assert_eq!(
        std::fs::read_to_string(out.join("imitation.csv"))
            .unwrap()
            .lines()
            .count(),
        9
    );

    let mut args = vec![
        "sweep",
        "--set",
        "sweep_t_values=4,8",
        "--set",
        "sweep_seeds=1,2",
    ];
    args.extend(LEARN);
    ok(out, &args);
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("t,d,epsilon,seed,nmae_percent,ticks\n"));
    assert_eq!(sweep.lines().count(), 5);

    let c = std::fs::read_to_string(out.join("config.txt")).unwrap();
    let cfg = RunConfig::parse(&c, Path::new("c")).unwrap();
    assert_eq!(cfg.to_text(), c);
}

#[test]
fn same_seed_same_dataset() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["babble", "--seed", "9"]);
    ok(b.path(), &["babble", "--seed", "9"]);
    let fa = std::fs::read(a.path().join("dataset.csv")).unwrap();
    let fb = std::fs::read(b.path().join("dataset.csv")).unwrap();
    assert_eq!(fa, fb);
    ok(b.path(), &["babble", "--seed", "10"]);
    assert_ne!(fa, std::fs::read(b.path().join("dataset.csv")).unwrap());
}

#[test]
fn zero_epochs_persists_untrained_weights() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["babble"]);
    let out = ok(dir.path(), &["train", "--set", "vae_epochs=0"]);
    assert!(!out.contains("epoch  1"));
    let report = std::fs::read_to_string(dir.path().join("train_report.txt")).unwrap();
    assert!(report.starts_with("epochs 0\n"));
    VaeParams::read(&dir.path().join("vae.weights")).unwrap();
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nseed = 4\ndataset_size = 25\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_robot-mirror"))
        .args(["babble", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--set", "dataset_size=12"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    let recorded = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(recorded.contains("seed = 4\n") && recorded.contains("dataset_size = 12\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(out, &["babble", "--set", "no_such_key=1"]), 2);
    assert_eq!(code(out, &["babble", "--set", "t=0"]), 2);
    assert_eq!(code(out, &["learn", "--set", "battery_size=0"]), 2);
    assert_eq!(code(out, &["frobnicate"]), 2);
    // nothing trained yet
    assert_eq!(code(out, &["learn"]), 1);

    ok(out, &["babble"]);
    ok(out, &["train"]);
    assert_eq!(
        code(
            out,
            &["learn", "--set", "epsilon=1e9", "--set", "tick_budget=200"]
        ),
        3
    );
    assert_eq!(code(out, &["imitate"]), 1);
}
