use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::report::{Condition, EvalReport, Mode, NodeRecord, TrajectoryPoint};
use super::stats::mean_sd;
use crate::baselines::{attack_defense_nt, random_defense, DegreeTestConfig};
use crate::defense::{
    select_targets, shuffled_targets, single_target_defense, DefenseConfig, DefenseContext,
    Defended, PerturbationPlan, Strategy, SurrogateScores,
};
use crate::error::{Error, Result};
use crate::gcn::{argmax_rows, margins, predict_full, train_gcn, GcnModel, NormalizedAdjacency, TrainConfig};
use crate::graph::{make_split, AttributedGraph, DataSplit, LabelSet, SplitRatios, Task};

/// A graph with its labels and a display name.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: AttributedGraph,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub seed: u64,
    pub split: SplitRatios,
    pub train: TrainConfig,
    pub defense: DefenseConfig,
    pub degree_test: DegreeTestConfig,
    /// Retrain both models on each perturbed graph; otherwise reuse the
    /// clean models for inference.
    pub retrain: bool,
    /// Keep at most this many of the selected targets (single mode).
    pub max_targets: Option<usize>,
    /// Multi mode: number of evaluation checkpoints over the target order.
    pub checkpoints: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            repeats: 5,
            seed: 0,
            split: SplitRatios::default(),
            train: TrainConfig::default(),
            defense: DefenseConfig::default(),
            degree_test: DegreeTestConfig::default(),
            retrain: true,
            max_targets: None,
            checkpoints: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("experiment.repeats must be at least 1".into()));
        }
        self.split.validate()?;
        self.defense.validate()
    }
}

/// Models, predictions and targets of one repeat on the clean graph.
#[derive(Debug, Clone)]
pub struct RepeatSetup {
    pub repeat: usize,
    pub seed: u64,
    pub split: DataSplit,
    pub train: TrainConfig,
    pub target_model: GcnModel,
    pub private_model: GcnModel,
    pub clean: Predictions,
    pub scores: SurrogateScores,
    pub targets: Vec<usize>,
}

/// Full-model probabilities for both tasks on one graph.
#[derive(Debug, Clone)]
pub struct Predictions {
    pub target: Array2<f64>,
    pub private: Array2<f64>,
}

fn private_labels(labels: &LabelSet) -> Vec<Option<usize>> {
    labels.task_labels(Task::Private)
}

fn train_pair(
    graph: &AttributedGraph,
    labels: &LabelSet,
    split: &DataSplit,
    train: &TrainConfig,
) -> Result<(GcnModel, GcnModel)> {
    let norm = NormalizedAdjacency::build(graph);
    let x = graph.features();
    let tm = train_gcn(
        &norm,
        x,
        &labels.task_labels(Task::Target),
        labels.n_classes(Task::Target),
        split,
        Task::Target,
        train,
    )?;
    let pm = train_gcn(&norm, x, &private_labels(labels), 2, split, Task::Private, train)?;
    Ok((tm, pm))
}

fn predict_pair(graph: &AttributedGraph, tm: &GcnModel, pm: &GcnModel) -> Result<Predictions> {
    let norm = NormalizedAdjacency::build(graph);
    Ok(Predictions {
        target: predict_full(tm, &norm, graph.features())?,
        private: predict_full(pm, &norm, graph.features())?,
    })
}

/// Trains both models on the clean graph and picks the targets of one repeat.
pub fn prepare_repeat(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    repeat: usize,
    mode: Mode,
) -> Result<RepeatSetup> {
    let seed = cfg.seed.wrapping_add(repeat as u64);
    let split = make_split(ds.graph.n_nodes(), cfg.split, seed)?;
    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let (target_model, private_model) = train_pair(&ds.graph, &ds.labels, &split, &train)?;
    let clean = predict_pair(&ds.graph, &target_model, &private_model)?;
    let scores = SurrogateScores::new(&ds.graph, &target_model, &private_model)?;
    let tlc = margins(&clean.target, &ds.labels.task_labels(Task::Target));
    let mut targets = select_targets(&tlc, &split.test, mode == Mode::Multi, seed);
    if mode == Mode::Single {
        if let Some(k) = cfg.max_targets {
            targets.truncate(k);
        }
    }
    Ok(RepeatSetup {
        repeat,
        seed,
        split,
        train,
        target_model,
        private_model,
        clean,
        scores,
        targets,
    })
}

/// Perturbs `graph` around target `v` with `strategy`.
pub fn defend_target(
    graph: &AttributedGraph,
    labels: &LabelSet,
    setup: &RepeatSetup,
    strategy: Strategy,
    ctx: Option<&DefenseContext>,
    cfg: &ExperimentConfig,
    v: usize,
) -> Result<Defended> {
    let budget = ctx.map_or(cfg.defense.budget, |c| c.config.budget);
    match strategy {
        Strategy::Clean => Ok(Defended {
            plan: PerturbationPlan::empty(Strategy::Clean, vec![v], budget),
            graph: graph.clone(),
        }),
        Strategy::Random => random_defense(
            graph,
            v,
            budget,
            cfg.degree_test,
            setup.seed.wrapping_mul(0x9e37_79b9).wrapping_add(v as u64),
        ),
        Strategy::Nt => attack_defense_nt(graph, &setup.scores, labels, v, budget, cfg.degree_test),
        Strategy::NetFense => {
            single_target_defense(graph, ctx.expect("defense context for netfense"), v)
        }
    }
}

fn context_for(
    ds: &Dataset,
    setup: &RepeatSetup,
    strategy: Strategy,
    defense: &DefenseConfig,
) -> Result<Option<DefenseContext>> {
    if strategy != Strategy::NetFense {
        return Ok(None);
    }
    DefenseContext::prepare(&ds.graph, &setup.target_model, &setup.private_model, defense.clone())
        .map(Some)
}

fn evaluate_graph(
    ds: &Dataset,
    setup: &RepeatSetup,
    graph: &AttributedGraph,
    retrain: bool,
) -> Result<Predictions> {
    if graph.edge_difference(&ds.graph) == 0 {
        return Ok(setup.clean.clone());
    }
    if retrain {
        let (tm, pm) = train_pair(graph, &ds.labels, &setup.split, &setup.train)?;
        predict_pair(graph, &tm, &pm)
    } else {
        predict_pair(graph, &setup.target_model, &setup.private_model)
    }
}

fn record(
    ds: &Dataset,
    setup: &RepeatSetup,
    pred: &Predictions,
    v: usize,
    condition: Condition,
    target: bool,
    out: &mut Vec<NodeRecord>,
) {
    for (task, z) in [(Task::Target, &pred.target), (Task::Private, &pred.private)] {
        let Some(y) = ds.labels.label(task, v) else { continue };
        let margin = crate::gcn::classification_margin(z, v, y);
        out.push(NodeRecord {
            repeat: setup.repeat,
            node: v,
            degree: ds.graph.degree(v),
            task,
            condition,
            target,
            margin,
            correct: margin > 0.0,
        });
    }
}

fn clean_records(ds: &Dataset, setup: &RepeatSetup, out: &mut Vec<NodeRecord>) {
    for &v in &setup.split.test {
        let is_target = setup.targets.contains(&v);
        record(ds, setup, &setup.clean, v, Condition::Clean, is_target, out);
    }
}

/// Number of flips committed for one target in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipCount {
    pub repeat: usize,
    pub target: usize,
    pub flips: usize,
}

fn new_report(ds: &Dataset, strategy: Strategy, mode: Mode, cfg: &ExperimentConfig, defense: &DefenseConfig) -> EvalReport {
    let mut report = EvalReport::new(&ds.name, strategy, mode, cfg.seed);
    report.repeats = cfg.repeats;
    report.retrain = cfg.retrain;
    report.defense = defense.clone();
    report.train = cfg.train.clone();
    report
}

/// Runs one repeat of the single-target protocol for each defense
/// configuration, sharing the clean models and targets between them.
pub fn single_target_repeat(
    ds: &Dataset,
    setup: &RepeatSetup,
    strategy: Strategy,
    cfg: &ExperimentConfig,
    defenses: &[DefenseConfig],
) -> Result<Vec<(Vec<NodeRecord>, Vec<FlipCount>)>> {
    let mut out = Vec::with_capacity(defenses.len());
    for defense in defenses {
        let ctx = context_for(ds, setup, strategy, defense)?;
        let local = ExperimentConfig {
            defense: defense.clone(),
            ..cfg.clone()
        };
        let mut records = Vec::new();
        let mut flips = Vec::new();
        clean_records(ds, setup, &mut records);
        for &v in &setup.targets {
            let defended = defend_target(&ds.graph, &ds.labels, setup, strategy, ctx.as_ref(), &local, v)?;
            let pred = evaluate_graph(ds, setup, &defended.graph, cfg.retrain)?;
            record(ds, setup, &pred, v, Condition::Perturbed, true, &mut records);
            flips.push(FlipCount {
                repeat: setup.repeat,
                target: v,
                flips: defended.plan.n_perturbations(),
            });
        }
        out.push((records, flips));
    }
    Ok(out)
}

/// Single-target protocol: per repeat a fresh split, both models trained on
/// the clean graph, 40 targets each defended independently from the clean
/// graph and evaluated on their own perturbed graph.
pub fn run_single_target_experiment(
    ds: &Dataset,
    strategy: Strategy,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    let (mut reports, _) = run_single_grid(ds, strategy, cfg, std::slice::from_ref(&cfg.defense))?;
    Ok(reports.remove(0))
}

/// Reports of the single-target protocol plus the per-target flip counts,
/// one entry per defense configuration.
pub fn run_single_grid(
    ds: &Dataset,
    strategy: Strategy,
    cfg: &ExperimentConfig,
    defenses: &[DefenseConfig],
) -> Result<(Vec<EvalReport>, Vec<Vec<FlipCount>>)> {
    cfg.validate()?;
    for d in defenses {
        d.validate()?;
    }
    let mut reports: Vec<EvalReport> = defenses
        .iter()
        .map(|d| new_report(ds, strategy, Mode::Single, cfg, d))
        .collect();
    let mut counts = vec![Vec::new(); defenses.len()];
    for r in 0..cfg.repeats {
        let setup = prepare_repeat(ds, cfg, r, Mode::Single)?;
        log::info!("repeat {r}: {} targets", setup.targets.len());
        for (i, (records, flips)) in single_target_repeat(ds, &setup, strategy, cfg, defenses)?
            .into_iter()
            .enumerate()
        {
            reports[i].records.extend(records);
            counts[i].extend(flips);
        }
    }
    for report in &mut reports {
        report.accuracies = report.recount_accuracies();
    }
    Ok((reports, counts))
}

fn accuracy_of(z: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> Option<f64> {
    let pred = argmax_rows(z);
    let known: Vec<usize> = nodes.iter().copied().filter(|&v| labels[v].is_some()).collect();
    if known.is_empty() {
        return None;
    }
    let hits = known.iter().filter(|&&v| labels[v] == Some(pred[v])).count();
    Some(hits as f64 / known.len() as f64)
}

/// Multi-target protocol: every test node is a target, defended in seeded
/// random order on the accumulating graph. Accuracies are recorded at
/// `checkpoints` evenly spaced fractions of the order.
pub fn run_multi_target_experiment(
    ds: &Dataset,
    strategy: Strategy,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut report = new_report(ds, strategy, Mode::Multi, cfg, &cfg.defense);
    let tlc = ds.labels.task_labels(Task::Target);
    let plc = private_labels(&ds.labels);
    for r in 0..cfg.repeats {
        let setup = prepare_repeat(ds, cfg, r, Mode::Multi)?;
        let ctx = context_for(ds, &setup, strategy, &cfg.defense)?;
        let order = shuffled_targets(&setup.targets, setup.seed);
        let n = order.len();
        let steps = cfg.checkpoints.max(1);
        let mut marks: Vec<usize> = (0..=steps).map(|i| (i * n + steps / 2) / steps).collect();
        marks.dedup();

        let mut g = ds.graph.clone();
        let mut done = 0;
        let mut last = setup.clean.clone();
        for &mark in &marks {
            while done < mark {
                let v = order[done];
                g = defend_target(&g, &ds.labels, &setup, strategy, ctx.as_ref(), cfg, v)?.graph;
                done += 1;
            }
            last = evaluate_graph(ds, &setup, &g, cfg.retrain)?;
            for (task, z, labels) in [(Task::Target, &last.target, &tlc), (Task::Private, &last.private, &plc)] {
                report.trajectory.push(TrajectoryPoint {
                    repeat: r,
                    ratio: if n == 0 { 0.0 } else { done as f64 / n as f64 },
                    n_defended: done,
                    task,
                    set: accuracy_of(z, labels, &order[..done]),
                    overall: accuracy_of(z, labels, &setup.split.test).unwrap_or(f64::NAN),
                });
            }
        }
        clean_records(ds, &setup, &mut report.records);
        for &v in &setup.split.test {
            record(ds, &setup, &last, v, Condition::Perturbed, true, &mut report.records);
        }
    }
    report.accuracies = report.recount_accuracies();
    Ok(report)
}

/// One row of a hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a_d: f64,
    pub a_m: f64,
    pub budget: usize,
    pub tau_quantile: f64,
    pub tlc_margin_clean: f64,
    pub tlc_margin_perturbed: f64,
    pub plc_margin_clean: f64,
    pub plc_margin_perturbed: f64,
    pub plc_abs_margin_perturbed: f64,
    pub tlc_set_accuracy: Option<f64>,
    pub plc_set_accuracy: Option<f64>,
    pub mean_flips: f64,
}

/// The single-target protocol at every grid point (NetFense unless another
/// strategy is given), sharing clean models across points.
pub fn sweep_hyperparams(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    grid: &[DefenseConfig],
    strategy: Strategy,
) -> Result<(Vec<SweepRow>, Vec<EvalReport>)> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let (reports, counts) = run_single_grid(ds, strategy, cfg, grid)?;
    let rows = reports
        .iter()
        .zip(&counts)
        .map(|(rep, c)| {
            let m = |t, k| rep.target_margins(t, k);
            let acc = |t| rep.accuracy(t, Condition::Perturbed).and_then(|a| a.set);
            let flips: Vec<f64> = c.iter().map(|f| f.flips as f64).collect();
            SweepRow {
                a_d: rep.defense.a_d,
                a_m: rep.defense.a_m,
                budget: rep.defense.budget,
                tau_quantile: rep.defense.tau_quantile,
                tlc_margin_clean: m(Task::Target, Condition::Clean).mean,
                tlc_margin_perturbed: m(Task::Target, Condition::Perturbed).mean,
                plc_margin_clean: m(Task::Private, Condition::Clean).mean,
                plc_margin_perturbed: m(Task::Private, Condition::Perturbed).mean,
                plc_abs_margin_perturbed: m(Task::Private, Condition::Perturbed).mean_abs,
                tlc_set_accuracy: acc(Task::Target),
                plc_set_accuracy: acc(Task::Private),
                mean_flips: mean_sd(&flips).0,
            }
        })
        .collect();
    Ok((rows, reports))
}

/// Grid over `(a_d, a_m)` with everything else from `base`.
pub fn loss_exponent_grid(base: &DefenseConfig, a_d: &[f64], a_m: &[f64]) -> Vec<DefenseConfig> {
    let mut out = Vec::new();
    for &d in a_d {
        for &m in a_m {
            out.push(DefenseConfig {
                a_d: d,
                a_m: m,
                ..base.clone()
            });
        }
    }
    out
}

/// Grid over `(budget, tau_quantile)` with everything else from `base`.
pub fn budget_threshold_grid(base: &DefenseConfig, budgets: &[usize], quantiles: &[f64]) -> Vec<DefenseConfig> {
    let mut out = Vec::new();
    for &b in budgets {
        for &q in quantiles {
            out.push(DefenseConfig {
                budget: b,
                tau_quantile: q,
                ..base.clone()
            });
        }
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("csv: {e}")))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Mean (clean − perturbed) margin of targets whose degree lies in one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketDelta {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub tlc_delta: f64,
    pub plc_delta: f64,
}

/// Per-bucket margin deltas over targets with both a clean and a perturbed
/// record; buckets are inclusive degree ranges. Empty buckets are omitted
/// and named in the returned notes.
pub fn degree_bucket_analysis(
    report: &EvalReport,
    buckets: &[(usize, usize)],
) -> (Vec<BucketDelta>, Vec<String>) {
    use std::collections::HashMap;
    let mut clean: HashMap<(usize, usize, Task), f64> = HashMap::new();
    for r in report.records_for(Task::Target, Condition::Clean).chain(report.records_for(Task::Private, Condition::Clean)) {
        clean.insert((r.repeat, r.node, r.task), r.margin);
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &(lo, hi) in buckets {
        let mut tlc = Vec::new();
        let mut plc = Vec::new();
        for r in report.records.iter().filter(|r| {
            r.condition == Condition::Perturbed && r.target && (lo..=hi).contains(&r.degree)
        }) {
            if let Some(c) = clean.get(&(r.repeat, r.node, r.task)) {
                match r.task {
                    Task::Target => tlc.push(c - r.margin),
                    Task::Private => plc.push(c - r.margin),
                }
            }
        }
        if tlc.is_empty() && plc.is_empty() {
            notes.push(format!("degree bucket [{lo}, {hi}] is empty"));
            continue;
        }
        rows.push(BucketDelta {
            lo,
            hi,
            count: tlc.len().max(plc.len()),
            tlc_delta: mean_sd(&tlc).0,
            plc_delta: mean_sd(&plc).0,
        });
    }
    (rows, notes)
}

/// Inclusive degree ranges splitting the perturbed targets into `k`
/// groups of (nearly) equal size by degree.
pub fn degree_quantile_buckets(report: &EvalReport, k: usize) -> Vec<(usize, usize)> {
    let mut degrees: Vec<usize> = report
        .records
        .iter()
        .filter(|r| r.condition == Condition::Perturbed && r.target)
        .map(|r| r.degree)
        .collect();
    if degrees.is_empty() || k == 0 {
        return Vec::new();
    }
    degrees.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut lo = degrees[0];
    for i in 1..=k {
        let idx = (i * degrees.len()).div_ceil(k) - 1;
        let hi = degrees[idx.min(degrees.len() - 1)];
        if hi < lo {
            continue;
        }
        out.push((lo, hi));
        lo = hi + 1;
    }
    out
}

/// Writes bucket rows as `lo,hi,count,tlc_delta,plc_delta`.
pub fn write_buckets_csv(rows: &[BucketDelta], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "lo,hi,count,tlc_delta,plc_delta")?;
    for b in rows {
        writeln!(out, "{},{},{},{},{}", b.lo, b.hi, b.count, b.tlc_delta, b.plc_delta)?;
    }
    out.flush()?;
    Ok(())
}
