use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gridlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridlift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = gridlift(args);
    assert_eq!(code(&out), 0, "gridlift {args:?}: {}", stderr(&out));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "gen-data",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        p(&out),
    ]);
    out
}

/// Trains a small model on 120 samples and returns (run dir, data path).
fn small_run(dir: &Path, model: &str, epochs: usize) -> (PathBuf, PathBuf) {
    let data = gen(dir, "train.csv", 120, 3);
    let config = dir.join("run.json");
    std::fs::write(
        &config,
        format!(r#"{{"model": {{"latent_channels": 4, "blocks": 1, {model}}}, "training": {{"epochs": {epochs}, "batch_size": 40}}, "seed": 2}}"#),
    )
    .unwrap();
    let run = dir.join("run");
    ok(&["train", "--config", p(&config), "--out", p(&run)]);
    (run, data)
}

fn history_rows(run: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(run.join("history.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn eval_json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(args)).unwrap()
}

#[test]
fn gen_data_is_deterministic_and_records_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.csv", 100, 7);
    let b = gen(dir.path(), "b.csv", 100, 7);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.cameras.csv")).unwrap(),
        std::fs::read(dir.path().join("b.cameras.csv")).unwrap()
    );
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.config.json")).unwrap()).unwrap();
    assert_eq!(cfg["n"], 100);
    assert_eq!(cfg["seed"], 7);
    assert!(cfg["camera"]["fx"].is_number());
}

#[test]
fn gen_data_rejects_zero_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridlift(&["gen-data", "--n", "0", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gen_data_reports_unwritable_paths() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = gridlift(&["gen-data", "--n", "3", "--out", p(&blocker.join("x.csv"))]);
    assert_ne!(code(&out), 0);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn generated_data_passes_the_reprojection_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 50, 1);
    let table = ok(&["verify", "--suite", "roundtrip", "--data", p(&data)]);
    assert!(
        table.lines().any(|l| l.starts_with("PASS data.reprojection_max_px")),
        "{table}"
    );
}

#[test]
fn verify_names_the_first_failing_check() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", 5, 1);
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines
        .iter()
        .position(|l| !l.starts_with('#') && l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .unwrap();
    let mut fields: Vec<String> = lines[row].split(',').map(String::from).collect();
    let col = fields.iter().position(|f| f.contains('.')).unwrap();
    let v: f64 = fields[col].parse().unwrap();
    fields[col] = (v + 3.0).to_string();
    lines[row] = fields.join(",");
    std::fs::write(&data, lines.join("\n") + "\n").unwrap();
    let out = gridlift(&["verify", "--suite", "oracle", "--data", p(&data)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("data.reprojection_max_px"));
}

#[test]
fn verify_oracle_suite_passes() {
    let table = ok(&["verify", "--suite", "oracle"]);
    assert!(table.lines().all(|l| !l.starts_with("FAIL")), "{table}");
}

#[test]
fn train_writes_checkpoint_history_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let (run, _) = small_run(dir.path(), r#""sgt_mode": "handcrafted""#, 2);
    let rows = history_rows(&run);
    assert_eq!(
        rows[0],
        ["epoch", "lr", "loss", "train_mpjpe", "sgt_coverage", "gumbel_noise"]
    );
    assert_eq!((rows[1][1].as_str(), rows[2][1].as_str()), ("0.001", "0.00096"));
    assert!(run.join("model.ckpt").exists());
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["training"]["lr_schedule"]["kind"], "per_epoch");
    assert_eq!(resolved["model"]["kernel_plan"], "3-33-3");
    assert_eq!(resolved["training"]["batch_size"], 40);
}

#[test]
fn learnable_history_tracks_coverage_and_noise() {
    let dir = tempfile::tempdir().unwrap();
    let (run, _) = small_run(dir.path(), r#""sgt_mode": "learnable""#, 2);
    let rows = history_rows(&run);
    assert!(rows[1..].iter().all(|r| r[4].parse::<usize>().unwrap() <= 17));
    assert!(rows[1..].iter().all(|r| r[5] == "1"));
}

#[test]
fn train_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"training": {"epochs": 1, "learning_rate": 0.1}}"#).unwrap();
    let out = gridlift(&["train", "--config", p(&config)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("learning_rate"));
}

#[test]
fn runaway_training_exits_with_a_numerical_abort() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "train.csv", 80, 1);
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"model": {"latent_channels": 4, "blocks": 1}, "training": {"epochs": 3, "batch_size": 40, "base_lr": 1e300}}"#).unwrap();
    let out = gridlift(&["train", "--config", p(&config)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn eval_matches_the_final_history_row_and_alignment_only_helps() {
    let dir = tempfile::tempdir().unwrap();
    let (run, data) = small_run(dir.path(), r#""sgt_mode": "handcrafted""#, 2);
    let ckpt = run.join("model.ckpt");
    let p1 = eval_json(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data)]);
    for key in ["mpjpe_mm", "pa_mpjpe_mm", "pck_percent", "auc_percent", "per_joint"] {
        assert!(p1.get(key).is_some(), "missing {key}");
    }
    let last: f64 = history_rows(&run).last().unwrap()[3].parse().unwrap();
    assert!((p1["mpjpe_mm"].as_f64().unwrap() - last).abs() <= 1e-9);
    let p2 = eval_json(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--protocol", "p2"]);
    assert!(p2["headline_mm"].as_f64().unwrap() <= p1["headline_mm"].as_f64().unwrap());
    let rigid = eval_json(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&data),
        "--protocol",
        "p2",
        "--alignment",
        "rigid",
    ]);
    assert!(p2["pa_mpjpe_mm"].as_f64().unwrap() <= rigid["pa_mpjpe_mm"].as_f64().unwrap() + 1e-9);
}

#[test]
fn eval_rejects_mismatched_skeletons_and_targets() {
    let dir = tempfile::tempdir().unwrap();
    let (run, data) = small_run(dir.path(), r#""sgt_mode": "handcrafted""#, 1);
    let ckpt = run.join("model.ckpt");
    assert_eq!(
        code(&gridlift(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--data",
            p(&data),
            "--uvz"
        ])),
        4
    );

    let skeleton =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/h36m17_skeleton.csv"))
            .unwrap();
    let renamed = dir.path().join("skeleton.csv");
    std::fs::write(&renamed, skeleton.replace("head", "skull")).unwrap();
    let other = dir.path().join("other.csv");
    ok(&["gen-data", "--n", "10", "--topology", p(&renamed), "--out", p(&other)]);
    let out = gridlift(&["eval", "--checkpoint", p(&ckpt), "--data", p(&other)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn layout_validation_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let hand = dir.path().join("hand.csv");
    ok(&["layout", "make-handcrafted", "--out", p(&hand)]);
    ok(&["layout", "validate", "--layout", p(&hand)]);
    assert!(dir.path().join("hand.csv.config.json").exists());

    let text = std::fs::read_to_string(&hand).unwrap();
    let (cell, _) = text
        .lines()
        .find(|l| l.starts_with("0,0,"))
        .unwrap()
        .rsplit_once(',')
        .unwrap();
    let doubled = dir.path().join("doubled.csv");
    std::fs::write(&doubled, format!("{text}{cell},pelvis\n")).unwrap();
    let out = gridlift(&["layout", "validate", "--layout", p(&doubled)]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("cell (0,0) holds 2 joints"), "{}", stderr(&out));

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "row,col,joint_name\n0,zero,pelvis\n").unwrap();
    assert_eq!(code(&gridlift(&["layout", "validate", "--layout", p(&broken)])), 2);
}

#[test]
fn shuffles_and_random_layouts_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let hand = dir.path().join("hand.csv");
    ok(&["layout", "make-handcrafted", "--out", p(&hand)]);
    let shuffle = |seed: &str| {
        ok(&[
            "layout",
            "shuffle",
            "--layout",
            p(&hand),
            "--mode",
            "global",
            "--seed",
            seed,
        ])
    };
    assert_eq!(shuffle("4"), shuffle("4"));
    assert_ne!(shuffle("4"), shuffle("5"));
    let random = |seed: &str| ok(&["layout", "make-random", "--grid", "4x6", "--seed", seed]);
    assert_eq!(random("1"), random("1"));
    assert!(random("1").starts_with("# grid: 4x6"));
}

#[test]
fn dump_writes_assignment_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (run, _) = small_run(dir.path(), r#""sgt_mode": "learnable""#, 1);
    let ckpt = run.join("model.ckpt");
    let assignment = dir.path().join("s.csv");
    let scores = dir.path().join("scores.csv");
    ok(&["layout", "dump", "--checkpoint", p(&ckpt), "--out", p(&assignment)]);
    ok(&[
        "layout",
        "dump",
        "--checkpoint",
        p(&ckpt),
        "--scores",
        "--out",
        p(&scores),
    ]);
    let a = std::fs::read_to_string(&assignment).unwrap();
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 26);

    let (hand_run, _) = small_run(&dir.path().join("h"), r#""sgt_mode": "handcrafted""#, 1);
    let out = gridlift(&[
        "layout",
        "dump",
        "--checkpoint",
        p(&hand_run.join("model.ckpt")),
        "--scores",
        "--out",
        p(&scores),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn params_reports_the_default_budget() {
    let json: serde_json::Value = serde_json::from_str(&ok(&["params"])).unwrap();
    let total = json["total"].as_f64().unwrap();
    assert!((total - 4.79e6).abs() / 4.79e6 <= 0.01);
    assert!((30_000..=50_000).contains(&json["attention"].as_u64().unwrap()));
}
