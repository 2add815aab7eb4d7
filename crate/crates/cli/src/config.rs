//! The run configuration file (TOML) and its flag overrides.

use std::path::{Path, PathBuf};

use netfense::baselines::{CandidateStrategy, DegreeTestConfig};
use netfense::defense::{DefenseConfig, Strategy};
use netfense::eval::{extract_private_column, select_private_column, Dataset, ExperimentConfig, Mode};
use netfense::gcn::TrainConfig;
use netfense::graph::{generate_sbm, load_graph, make_split, SbmConfig, SplitRatios};
use netfense::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub gcn: TrainConfig,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default)]
    pub degree_test: DegreeTestConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub defend: DefendSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub compare: CompareSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("netfense-out")
}

fn default_strategy() -> Strategy {
    Strategy::NetFense
}

fn default_mode() -> Mode {
    Mode::Single
}

/// Where the graph comes from: a directory holding `edges.txt`,
/// `features.csv` and `labels.csv`, three explicit files, or a synthetic SBM.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub name: Option<String>,
    pub dir: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Binary feature column used as the private label.
    pub private_column: Option<usize>,
    /// Pick the most balanced column the private GCN can predict.
    pub auto_private_column: bool,
    pub keep_private_column: bool,
    pub sbm: Option<SbmConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub repeats: usize,
    pub retrain: bool,
    pub max_targets: Option<usize>,
    pub checkpoints: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        ExperimentSection {
            repeats: e.repeats,
            retrain: e.retrain,
            max_targets: e.max_targets,
            checkpoints: e.checkpoints,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefendSection {
    /// Explicit targets; otherwise the usual selection on the test nodes.
    pub targets: Option<Vec<usize>>,
    /// Directory with the checkpoints written by `train` (defaults to `out`).
    pub models: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub a_d: Vec<f64>,
    pub a_m: Vec<f64>,
    pub budgets: Vec<usize>,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub n_flips: usize,
    pub strategies: Vec<CandidateStrategy>,
    pub alpha: f64,
    /// Also run every defense strategy and tabulate the margins.
    pub margins: bool,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            n_flips: 50,
            strategies: CandidateStrategy::ALL.to_vec(),
            alpha: 0.1,
            margins: false,
        }
    }
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub mode: Option<Mode>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        if let Some(s) = overrides.strategy {
            cfg.strategy = s;
        }
        if let Some(m) = overrides.mode {
            cfg.mode = m;
        }
        // The budget default depends on the mode unless it was set explicitly.
        if lookup(&raw, &["defense", "budget"]).is_none() {
            cfg.defense.budget = cfg.mode.default_budget();
        }
        if let Some(sbm) = &mut cfg.dataset.sbm {
            if lookup(&raw, &["dataset", "sbm", "seed"]).is_none() {
                sbm.seed = cfg.seed;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.experiment().validate()?;
        if self.compare.strategies.is_empty() {
            return Err(Error::Config("compare.strategies is empty".into()));
        }
        if !(self.compare.alpha > 0.0 && self.compare.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "compare.alpha must lie in (0, 1], got {}",
                self.compare.alpha
            )));
        }
        Ok(())
    }

    /// The library experiment configuration this run maps to.
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            repeats: self.experiment.repeats,
            seed: self.seed,
            split: self.split,
            train: self.gcn.clone(),
            defense: self.defense.clone(),
            degree_test: self.degree_test,
            retrain: self.experiment.retrain,
            max_targets: self.experiment.max_targets,
            checkpoints: self.experiment.checkpoints,
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        let (name, graph, labels) = if let Some(sbm) = &d.sbm {
            let (g, l) = generate_sbm(sbm)?;
            (d.name.clone().unwrap_or_else(|| "sbm".into()), g, l)
        } else {
            let files = match (&d.dir, &d.edges, &d.features, &d.labels) {
                (Some(dir), None, None, None) => [dir.join("edges.txt"), dir.join("features.csv"), dir.join("labels.csv")],
                (None, Some(e), Some(f), Some(l)) => [e.clone(), f.clone(), l.clone()],
                (None, None, None, None) => {
                    return Err(Error::Config(
                        "dataset.dir: no dataset path given (set dataset.dir, all of dataset.edges/features/labels, or [dataset.sbm])"
                            .into(),
                    ))
                }
                _ => {
                    return Err(Error::Config(
                        "dataset: give either dataset.dir or all of dataset.edges, dataset.features and dataset.labels"
                            .into(),
                    ))
                }
            };
            let fields = if d.dir.is_some() {
                ["dataset.dir"; 3]
            } else {
                ["dataset.edges", "dataset.features", "dataset.labels"]
            };
            for (f, field) in files.iter().zip(fields) {
                if !f.is_file() {
                    return Err(Error::Config(format!("{field}: {} does not exist", f.display())));
                }
            }
            let (g, l) = load_graph(&files[0], &files[1], &files[2])?;
            let name = d.name.clone().unwrap_or_else(|| {
                d.dir
                    .as_ref()
                    .and_then(|p| p.file_name())
                    .map_or("graph".into(), |s| s.to_string_lossy().into_owned())
            });
            (name, g, l)
        };
        let ds = Dataset { name, graph, labels };
        match (d.private_column, d.auto_private_column) {
            (Some(_), true) => Err(Error::Config(
                "dataset.private_column and dataset.auto_private_column are exclusive".into(),
            )),
            (Some(c), false) => extract_private_column(&ds, c, d.keep_private_column),
            (None, true) => {
                let split = make_split(ds.graph.n_nodes(), self.split, self.seed)?;
                let train = TrainConfig { seed: self.seed, ..self.gcn.clone() };
                let (c, acc) = select_private_column(&ds, &split, &train, 0.6, 20)?;
                log::info!("private column {c} (test accuracy {acc:.3})");
                extract_private_column(&ds, c, d.keep_private_column)
            }
            (None, false) => Ok(ds),
        }
    }
}

fn lookup<'a>(table: &'a toml::Table, path: &[&str]) -> Option<&'a toml::Value> {
    let (last, init) = path.split_last()?;
    let mut t = table;
    for key in init {
        t = t.get(*key)?.as_table()?;
    }
    t.get(*last)
}
