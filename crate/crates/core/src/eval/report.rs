use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::mean_sd;
use crate::defense::{DefenseConfig, Strategy};
use crate::error::{Error, Result};
use crate::gcn::TrainConfig;
use crate::graph::Task;

/// JSON schema version of [`EvalReport`].
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clean,
    Perturbed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Clean => "clean",
            Condition::Perturbed => "perturbed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Single,
    Multi,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Multi => "multi",
        }
    }

    /// Default per-target budget: 20 when targets are defended one at a
    /// time, 10 when they are defended jointly.
    pub fn default_budget(self) -> usize {
        match self {
            Mode::Single => 20,
            Mode::Multi => 10,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "multi" => Ok(Mode::Multi),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected single or multi)"
            ))),
        }
    }
}

/// One node's margin for one task under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub repeat: usize,
    pub node: usize,
    /// Degree on the clean graph.
    pub degree: usize,
    pub task: Task,
    pub condition: Condition,
    /// Whether the node was a defended target.
    pub target: bool,
    pub margin: f64,
    pub correct: bool,
}

/// Accuracy over the targets (`set`) and over all recorded test nodes
/// (`overall`). `overall` is absent for perturbed single-target runs, where
/// each target lives on its own graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub task: Task,
    pub condition: Condition,
    pub set: Option<f64>,
    pub overall: Option<f64>,
}

/// Accuracies after a fraction of the targets has been defended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub repeat: usize,
    pub ratio: f64,
    pub n_defended: usize,
    pub task: Task,
    pub set: Option<f64>,
    pub overall: f64,
}

/// Mean and standard deviation of margins for one task and condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub task: Task,
    pub condition: Condition,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub dataset: String,
    pub strategy: Strategy,
    pub mode: Mode,
    pub seed: u64,
    pub repeats: usize,
    pub retrain: bool,
    pub defense: DefenseConfig,
    pub train: TrainConfig,
    pub records: Vec<NodeRecord>,
    pub accuracies: Vec<Accuracy>,
    #[serde(default)]
    pub trajectory: Vec<TrajectoryPoint>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(dataset: &str, strategy: Strategy, mode: Mode, seed: u64) -> Self {
        EvalReport {
            version: REPORT_VERSION,
            dataset: dataset.to_string(),
            strategy,
            mode,
            seed,
            repeats: 0,
            retrain: true,
            defense: DefenseConfig::default(),
            train: TrainConfig::default(),
            records: Vec::new(),
            accuracies: Vec::new(),
            trajectory: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn records_for(
        &self,
        task: Task,
        condition: Condition,
    ) -> impl Iterator<Item = &NodeRecord> + '_ {
        self.records
            .iter()
            .filter(move |r| r.task == task && r.condition == condition)
    }

    /// Margin statistics over the targets.
    pub fn target_margins(&self, task: Task, condition: Condition) -> MarginSummary {
        let m: Vec<f64> = self
            .records_for(task, condition)
            .filter(|r| r.target)
            .map(|r| r.margin)
            .collect();
        let (mean, sd) = mean_sd(&m);
        let abs: Vec<f64> = m.iter().map(|x| x.abs()).collect();
        MarginSummary {
            task,
            condition,
            count: m.len(),
            mean,
            sd,
            mean_abs: mean_sd(&abs).0,
        }
    }

    /// Recomputes [`Accuracy`] rows from the stored records.
    pub fn recount_accuracies(&self) -> Vec<Accuracy> {
        let frac = |it: &mut dyn Iterator<Item = &NodeRecord>| {
            let (mut n, mut k) = (0usize, 0usize);
            for r in it {
                n += 1;
                k += r.correct as usize;
            }
            (n > 0).then(|| k as f64 / n as f64)
        };
        let mut out = Vec::new();
        for task in [Task::Target, Task::Private] {
            for condition in [Condition::Clean, Condition::Perturbed] {
                let set = frac(&mut self.records_for(task, condition).filter(|r| r.target));
                let overall = if condition == Condition::Perturbed && self.mode == Mode::Single {
                    None
                } else {
                    frac(&mut self.records_for(task, condition))
                };
                if set.is_some() || overall.is_some() {
                    out.push(Accuracy {
                        task,
                        condition,
                        set,
                        overall,
                    });
                }
            }
        }
        out
    }

    pub fn accuracy(&self, task: Task, condition: Condition) -> Option<&Accuracy> {
        self.accuracies
            .iter()
            .find(|a| a.task == task && a.condition == condition)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let report: EvalReport = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        if report.version != REPORT_VERSION {
            return Err(Error::Data(format!(
                "report schema version {} is not supported",
                report.version
            )));
        }
        Ok(report)
    }

    /// Long-format per-node CSV: `repeat,node,degree,task,condition,target,margin,correct`.
    pub fn write_records_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        for r in &self.records {
            w.serialize(r).map_err(csv_error)?;
        }
        if self.records.is_empty() {
            w.write_record(CSV_HEADER).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Multi-target accuracies per checkpoint: `repeat,ratio,n_defended,task,set,overall`.
    pub fn write_trajectory_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "repeat,ratio,n_defended,task,set,overall")?;
        for p in &self.trajectory {
            let set = p.set.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{set},{}",
                p.repeat,
                p.ratio,
                p.n_defended,
                p.task.as_str(),
                p.overall
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

const CSV_HEADER: [&str; 8] = [
    "repeat",
    "node",
    "degree",
    "task",
    "condition",
    "target",
    "margin",
    "correct",
];

fn csv_error(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Reads a file written by [`EvalReport::write_records_csv`].
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<NodeRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<NodeRecord>().enumerate() {
        out.push(row.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
