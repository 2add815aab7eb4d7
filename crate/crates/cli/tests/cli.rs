use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netfense::defense::{single_target_defense, DefenseConfig, DefenseContext, PerturbationPlan};
use netfense::gcn::load_checkpoint;
use netfense::graph::{generate_sbm, FeatureModel, SbmConfig};

const SBM: &str = r#"
[dataset.sbm]
block_sizes = [25, 25]
intra_p = 0.25
inter_p = 0.03
private_homophily = 0.5
seed = 3

[dataset.sbm.features]
target_words = 3
private_words = 3
noise_words = 6
target_signal = 0.6
private_signal = 0.4
background = 0.1

[gcn]
epochs = 40
hidden_dim = 8

[split]
train = 0.3
validation = 0.2
test = 0.5

[experiment]
repeats = 1
max_targets = 3
checkpoints = 2
retrain = false
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_netfense"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn sbm_config() -> SbmConfig {
    let mut c = SbmConfig::new(vec![25, 25], 0.25, 0.03, 3);
    c.private_homophily = 0.5;
    c.features = FeatureModel {
        target_words: 3,
        private_words: 3,
        noise_words: 6,
        target_signal: 0.6,
        private_signal: 0.4,
        background: 0.1,
    };
    c
}

#[test]
fn missing_dataset_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "", &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.dir"));

    let out = run(dir.path(), "[dataset]\ndir = \"/nonexistent/cora\"", &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.dir"));

    let out = run(dir.path(), "[defense]\nbugdet = 1", &["train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g");
    fs::create_dir_all(&data).unwrap();
    fs::write(data.join("edges.txt"), "0 1\n1 x\n").unwrap();
    fs::write(data.join("features.csv"), "0,1\n1,0\n").unwrap();
    fs::write(data.join("labels.csv"), "node_id,target,private\n0,0,1\n1,1,0\n").unwrap();
    let out = run(dir.path(), &format!("[dataset]\ndir = {:?}", data), &["train"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn training_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&run(a.path(), SBM, &["train", "--seed", "5"]));
    ok(&run(b.path(), SBM, &["train", "--seed", "5"]));
    for f in ["target_model.ckpt", "private_model.ckpt", "split.json", "clean_margins.csv"] {
        assert_eq!(
            fs::read(a.path().join("out").join(f)).unwrap(),
            fs::read(b.path().join("out").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn defend_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SBM}\n[defense]\nbudget = 2\n[defend]\ntargets = [0, 30]\n");
    ok(&run(dir.path(), &cfg, &["train", "--seed", "1"]));
    ok(&run(dir.path(), &cfg, &["defend", "--seed", "1", "--strategy", "netfense"]));
    let out = dir.path().join("out");
    let tm = load_checkpoint(out.join("target_model.ckpt")).unwrap();
    let pm = load_checkpoint(out.join("private_model.ckpt")).unwrap();
    let (g, _) = generate_sbm(&sbm_config()).unwrap();
    let ctx = DefenseContext::prepare(&g, &tm, &pm, DefenseConfig { budget: 2, ..Default::default() }).unwrap();
    for v in [0, 30] {
        let plan = PerturbationPlan::load_json(out.join(format!("plans/target_{v}.json"))).unwrap();
        let lib = single_target_defense(&g, &ctx, v).unwrap();
        assert_eq!(plan, lib.plan);
    }
}

#[test]
fn zero_budget_and_random_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SBM}\n[defense]\nbudget = 0\n");
    ok(&run(dir.path(), &cfg, &["train"]));
    ok(&run(dir.path(), &cfg, &["defend"]));
    let plans = dir.path().join("out/plans");
    let files: Vec<_> = fs::read_dir(&plans).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(!files.is_empty());
    for f in &files {
        assert!(PerturbationPlan::load_json(f).unwrap().steps.is_empty());
    }

    let cfg = format!("{SBM}\n[defense]\nbudget = 3\n");
    ok(&run(dir.path(), &cfg, &["defend", "--strategy", "random", "--seed", "0"]));
    let (g, _) = generate_sbm(&sbm_config()).unwrap();
    for f in fs::read_dir(&plans).unwrap() {
        let path = f.unwrap().path();
        let plan = PerturbationPlan::load_json(&path).unwrap();
        assert!(plan.seed.is_some());
        let replayed = plan.replay(&g).unwrap();
        assert_eq!(replayed.edge_difference(&g), plan.n_perturbations());
    }
}

#[test]
fn multi_mode_defends_on_one_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SBM}\n[defense]\nbudget = 1\n[defend]\ntargets = [1, 2, 40]\n");
    ok(&run(dir.path(), &cfg, &["train", "--mode", "multi"]));
    ok(&run(dir.path(), &cfg, &["defend", "--mode", "multi"]));
    let out = dir.path().join("out");
    let plan = PerturbationPlan::load_json(out.join("plans/multi.json")).unwrap();
    let (g, _) = generate_sbm(&sbm_config()).unwrap();
    let (h, _) = netfense::graph::GraphFiles::in_dir(out.join("perturbed")).load().unwrap();
    assert_eq!(plan.replay(&g).unwrap().edge_difference(&h), 0);
}

#[test]
fn clean_evaluation_has_no_difference() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), SBM, &["evaluate", "--strategy", "clean"]));
    let out = dir.path().join("out");
    let report = netfense::eval::EvalReport::load_json(out.join("report.json")).unwrap();
    assert_eq!(report.defense.budget, 20);
    for r in report.records.iter().filter(|r| r.condition == netfense::eval::Condition::Perturbed) {
        let clean = report
            .records
            .iter()
            .find(|c| c.condition == netfense::eval::Condition::Clean && c.node == r.node && c.task == r.task)
            .unwrap();
        assert_eq!(clean.margin, r.margin);
    }
    assert!(out.join("buckets.csv").is_file());

    ok(&run(dir.path(), SBM, &["evaluate", "--strategy", "clean", "--mode", "multi"]));
    let report = netfense::eval::EvalReport::load_json(out.join("report.json")).unwrap();
    assert_eq!(report.defense.budget, 10);
    assert!(out.join("trajectory.csv").is_file());
}

#[test]
fn compare_series_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let one = format!("{SBM}\n[compare]\nn_flips = 5\nstrategies = [\"random\"]\n");
    ok(&run(dir.path(), &one, &["compare"]));
    let csv = fs::read_to_string(dir.path().join("out/ca_trajectories.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);

    let all = format!("{SBM}\n[compare]\nn_flips = 5\n");
    ok(&run(dir.path(), &all, &["compare", "--seed", "4"]));
    let first = fs::read_to_string(dir.path().join("out/ca_trajectories.csv")).unwrap();
    let series: std::collections::BTreeSet<&str> =
        first.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(series.len(), 4);
    ok(&run(dir.path(), &all, &["compare", "--seed", "4"]));
    assert_eq!(first, fs::read_to_string(dir.path().join("out/ca_trajectories.csv")).unwrap());
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SBM}\n[defense]\nbudget = 2\n[sweep]\na_d = [1.0, 2.0]\n");
    ok(&run(dir.path(), &cfg, &["sweep"]));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let out = run(dir.path(), SBM, &["sweep"]);
    assert_eq!(out.status.code(), Some(2));
}
