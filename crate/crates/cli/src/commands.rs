use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use netfense::baselines::{candidate_strategy_compare, write_trajectories_csv};
use netfense::defense::{
    select_targets, shuffled_targets, DefenseContext, PerturbationPlan, Strategy, SurrogateScores,
};
use netfense::eval::{
    budget_threshold_grid, defend_target, degree_bucket_analysis, degree_quantile_buckets,
    loss_exponent_grid, prepare_repeat, run_multi_target_experiment, run_single_target_experiment,
    sweep_hyperparams, write_buckets_csv, write_sweep_csv, Condition, Dataset, EvalReport, Mode,
    Predictions, RepeatSetup,
};
use netfense::gcn::{load_checkpoint, margins, predict_full, save_checkpoint, NormalizedAdjacency, TrainConfig};
use netfense::graph::{save_graph, AttributedGraph, DataSplit, GraphFiles, Task};
use netfense::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const TARGET_MODEL: &str = "target_model.ckpt";
pub const PRIVATE_MODEL: &str = "private_model.ckpt";
pub const SPLIT: &str = "split.json";

fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    dataset: &'a str,
    n_nodes: usize,
    n_edges: usize,
    config: &'a RunConfig,
}

fn start(cfg: &RunConfig, command: &str) -> Result<Dataset> {
    fs::create_dir_all(&cfg.out)?;
    let ds = cfg.load_dataset()?;
    log::info!("{}: {} nodes, {} edges", ds.name, ds.graph.n_nodes(), ds.graph.n_edges());
    let meta = RunMeta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        dataset: &ds.name,
        n_nodes: ds.graph.n_nodes(),
        n_edges: ds.graph.n_edges(),
        config: cfg,
    };
    write_json(&meta, cfg.out.join(format!("{command}_run.json")))?;
    Ok(ds)
}

/// Trains the target and private models on the clean graph (repeat 0 of the
/// experiment protocol) and writes the checkpoints, the split and the clean margins.
pub fn train(cfg: &RunConfig) -> Result<()> {
    let ds = start(cfg, "train")?;
    let setup = prepare_repeat(&ds, &cfg.experiment(), 0, cfg.mode)?;
    save_checkpoint(&setup.target_model, cfg.out.join(TARGET_MODEL))?;
    save_checkpoint(&setup.private_model, cfg.out.join(PRIVATE_MODEL))?;
    write_json(&setup.split, cfg.out.join(SPLIT))?;
    write_margins(&ds, &setup, cfg.out.join("clean_margins.csv"))?;
    println!("trained models written to {}", cfg.out.display());
    Ok(())
}

fn write_margins(ds: &Dataset, setup: &RepeatSetup, path: PathBuf) -> Result<()> {
    let tlc = margins(&setup.clean.target, &ds.labels.task_labels(Task::Target));
    let plc = margins(&setup.clean.private, &ds.labels.task_labels(Task::Private));
    let mut part = vec![""; ds.graph.n_nodes()];
    for (name, nodes) in [
        ("train", &setup.split.train),
        ("validation", &setup.split.validation),
        ("test", &setup.split.test),
    ] {
        for &v in nodes {
            part[v] = name;
        }
    }
    let fmt = |m: Option<f64>| m.map(|m| m.to_string()).unwrap_or_default();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "node,split,degree,tlc_margin,plc_margin")?;
    for v in 0..ds.graph.n_nodes() {
        writeln!(out, "{v},{},{},{},{}", part[v], ds.graph.degree(v), fmt(tlc[v]), fmt(plc[v]))?;
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds the repeat-0 setup from the artifacts of `train`.
fn load_setup(ds: &Dataset, cfg: &RunConfig) -> Result<RepeatSetup> {
    let dir = cfg.defend.models.clone().unwrap_or_else(|| cfg.out.clone());
    let need = |name: &str| {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::Config(format!(
                "defend.models: {} not found (run `train` first)",
                p.display()
            )))
        }
    };
    let target_model = load_checkpoint(need(TARGET_MODEL)?)?;
    let private_model = load_checkpoint(need(PRIVATE_MODEL)?)?;
    let split: DataSplit = serde_json::from_reader(File::open(need(SPLIT)?)?)?;
    if split.train.len() + split.validation.len() + split.test.len() != ds.graph.n_nodes() {
        return Err(Error::Data("split.json does not cover the dataset's nodes".into()));
    }
    let norm = NormalizedAdjacency::build(&ds.graph);
    let clean = Predictions {
        target: predict_full(&target_model, &norm, ds.graph.features())?,
        private: predict_full(&private_model, &norm, ds.graph.features())?,
    };
    let scores = SurrogateScores::new(&ds.graph, &target_model, &private_model)?;
    let targets = match &cfg.defend.targets {
        Some(t) => {
            if let Some(&bad) = t.iter().find(|&&v| v >= ds.graph.n_nodes()) {
                return Err(Error::Config(format!("defend.targets: node {bad} out of range")));
            }
            t.clone()
        }
        None => {
            let tlc = margins(&clean.target, &ds.labels.task_labels(Task::Target));
            let mut t = select_targets(&tlc, &split.test, cfg.mode == Mode::Multi, split.seed);
            if cfg.mode == Mode::Single {
                if let Some(k) = cfg.experiment.max_targets {
                    t.truncate(k);
                }
            }
            t
        }
    };
    Ok(RepeatSetup {
        repeat: 0,
        seed: split.seed,
        split,
        train: TrainConfig { seed: target_model.seed, ..cfg.gcn.clone() },
        target_model,
        private_model,
        clean,
        scores,
        targets,
    })
}

fn write_edges(graph: &AttributedGraph, path: PathBuf) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Perturbs the clean graph with the configured strategy. Single mode writes
/// one plan and one edge list per target; multi mode defends all targets in
/// seeded order on one graph and writes a single plan plus the full graph.
pub fn defend(cfg: &RunConfig) -> Result<()> {
    let ds = start(cfg, "defend")?;
    let setup = load_setup(&ds, cfg)?;
    let exp = cfg.experiment();
    let ctx = match cfg.strategy {
        Strategy::NetFense => Some(DefenseContext::prepare(
            &ds.graph,
            &setup.target_model,
            &setup.private_model,
            cfg.defense.clone(),
        )?),
        _ => None,
    };
    let plans = cfg.out.join("plans");
    fs::create_dir_all(&plans)?;
    match cfg.mode {
        Mode::Single => {
            let graphs = cfg.out.join("graphs");
            fs::create_dir_all(&graphs)?;
            for &v in &setup.targets {
                let d = defend_target(&ds.graph, &ds.labels, &setup, cfg.strategy, ctx.as_ref(), &exp, v)?;
                d.plan.save_json(plans.join(format!("target_{v}.json")))?;
                write_edges(&d.graph, graphs.join(format!("target_{v}_edges.txt")))?;
                log::info!("target {v}: {} flips", d.plan.n_perturbations());
            }
        }
        Mode::Multi => {
            let order = shuffled_targets(&setup.targets, setup.seed);
            let mut plan = PerturbationPlan::empty(cfg.strategy, order.clone(), cfg.defense.budget);
            plan.seed = Some(setup.seed);
            let mut g = ds.graph.clone();
            for &v in &order {
                let d = defend_target(&g, &ds.labels, &setup, cfg.strategy, ctx.as_ref(), &exp, v)?;
                plan.steps.extend(d.plan.steps);
                g = d.graph;
            }
            plan.save_json(plans.join("multi.json"))?;
            let dir = cfg.out.join("perturbed");
            fs::create_dir_all(&dir)?;
            save_graph(&g, &ds.labels, &GraphFiles::in_dir(&dir))?;
        }
    }
    println!(
        "{} defense of {} targets written to {}",
        cfg.strategy.as_str(),
        setup.targets.len(),
        cfg.out.display()
    );
    Ok(())
}

/// Runs the full protocol and writes the report with its CSV views.
pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let ds = start(cfg, "evaluate")?;
    let exp = cfg.experiment();
    let report = match cfg.mode {
        Mode::Single => run_single_target_experiment(&ds, cfg.strategy, &exp)?,
        Mode::Multi => run_multi_target_experiment(&ds, cfg.strategy, &exp)?,
    };
    report.save_json(cfg.out.join("report.json"))?;
    report.write_records_csv(cfg.out.join("records.csv"))?;
    match cfg.mode {
        Mode::Single => {
            let (rows, notes) = degree_bucket_analysis(&report, &degree_quantile_buckets(&report, 4));
            for n in notes {
                log::warn!("{n}");
            }
            write_buckets_csv(&rows, cfg.out.join("buckets.csv"))?;
        }
        Mode::Multi => report.write_trajectory_csv(cfg.out.join("trajectory.csv"))?,
    }
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &EvalReport) {
    for task in [Task::Target, Task::Private] {
        let clean = report.target_margins(task, Condition::Clean);
        let pert = report.target_margins(task, Condition::Perturbed);
        let fmt = |a: Option<f64>| a.map_or("-".to_string(), |a| format!("{a:.4}"));
        let acc = |c| report.accuracy(task, c);
        println!(
            "{}: margin {:.4} -> {:.4}, target-set accuracy {} -> {}, test accuracy {} -> {}",
            task.as_str(),
            clean.mean,
            pert.mean,
            fmt(acc(Condition::Clean).and_then(|a| a.set)),
            fmt(acc(Condition::Perturbed).and_then(|a| a.set)),
            fmt(acc(Condition::Clean).and_then(|a| a.overall)),
            fmt(acc(Condition::Perturbed).and_then(|a| a.overall)),
        );
    }
}

/// Candidate-strategy clustering trajectories, plus an optional margin
/// table over every defense strategy.
pub fn compare(cfg: &RunConfig) -> Result<()> {
    let ds = start(cfg, "compare")?;
    let c = &cfg.compare;
    let traj = candidate_strategy_compare(&ds.graph, &c.strategies, c.n_flips, c.alpha, cfg.seed, cfg.degree_test)?;
    write_trajectories_csv(&traj, cfg.out.join("ca_trajectories.csv"))?;
    for t in &traj {
        println!("{}: CA drop {:.5}", t.strategy.as_str(), t.ca_drop());
    }
    if c.margins {
        let exp = cfg.experiment();
        let mut out = BufWriter::new(File::create(cfg.out.join("strategy_margins.csv"))?);
        writeln!(out, "strategy,task,margin_clean,margin_perturbed,set_accuracy_clean,set_accuracy_perturbed")?;
        for s in [Strategy::Clean, Strategy::Random, Strategy::Nt, Strategy::NetFense] {
            let r = match cfg.mode {
                Mode::Single => run_single_target_experiment(&ds, s, &exp)?,
                Mode::Multi => run_multi_target_experiment(&ds, s, &exp)?,
            };
            for task in [Task::Target, Task::Private] {
                let acc = |c| r.accuracy(task, c).and_then(|a| a.set).map(|a| a.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    s.as_str(),
                    task.as_str(),
                    r.target_margins(task, Condition::Clean).mean,
                    r.target_margins(task, Condition::Perturbed).mean,
                    acc(Condition::Clean),
                    acc(Condition::Perturbed)
                )?;
            }
        }
        out.flush()?;
    }
    Ok(())
}

/// Loss-exponent and budget/threshold grids in single mode.
pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.sweep;
    let mut grid = Vec::new();
    if !s.a_d.is_empty() || !s.a_m.is_empty() {
        let a_d = if s.a_d.is_empty() { vec![cfg.defense.a_d] } else { s.a_d.clone() };
        let a_m = if s.a_m.is_empty() { vec![cfg.defense.a_m] } else { s.a_m.clone() };
        grid.extend(loss_exponent_grid(&cfg.defense, &a_d, &a_m));
    }
    if !s.budgets.is_empty() || !s.quantiles.is_empty() {
        let b = if s.budgets.is_empty() { vec![cfg.defense.budget] } else { s.budgets.clone() };
        let q = if s.quantiles.is_empty() { vec![cfg.defense.tau_quantile] } else { s.quantiles.clone() };
        grid.extend(budget_threshold_grid(&cfg.defense, &b, &q));
    }
    if grid.is_empty() {
        return Err(Error::Config(
            "sweep: set at least one of sweep.a_d, sweep.a_m, sweep.budgets, sweep.quantiles".into(),
        ));
    }
    if cfg.mode == Mode::Multi {
        log::warn!("sweep runs the single-target protocol; mode = multi only sets the default budget");
    }
    let ds = start(cfg, "sweep")?;
    let (rows, _) = sweep_hyperparams(&ds, &cfg.experiment(), &grid, cfg.strategy)?;
    write_sweep_csv(&rows, cfg.out.join("sweep.csv"))?;
    println!("{} grid points written to {}", rows.len(), cfg.out.join("sweep.csv").display());
    Ok(())
}
