use ndarray::Axis;

use super::experiment::Dataset;
use crate::error::{Error, Result};
use crate::gcn::{argmax_rows, predict_full, train_gcn, NormalizedAdjacency, TrainConfig};
use crate::graph::{DataSplit, LabelSet, Task};

/// Dataset whose private label is feature column `column`. The column is
/// dropped from the features unless `keep_column` is set.
pub fn extract_private_column(ds: &Dataset, column: usize, keep_column: bool) -> Result<Dataset> {
    let x = ds.graph.features();
    if column >= x.ncols() {
        return Err(Error::Config(format!(
            "private column {column} outside 0..{}",
            x.ncols()
        )));
    }
    let private: Vec<Option<u8>> = x.column(column).iter().map(|&b| Some(b as u8)).collect();
    let labels = LabelSet::new(ds.labels.target.clone(), private)?;
    let graph = if keep_column {
        ds.graph.clone()
    } else {
        let mut kept = x.clone();
        kept.remove_index(Axis(1), column);
        ds.graph.with_features(kept)?
    };
    Ok(Dataset {
        name: ds.name.clone(),
        graph,
        labels,
    })
}

/// Columns ordered from the most to the least balanced 0/1 ratio; ties
/// by index. Constant columns are left out.
pub fn balanced_columns(ds: &Dataset) -> Vec<usize> {
    let x = ds.graph.features();
    let n = x.nrows().max(1) as f64;
    let mut cols: Vec<(usize, f64)> = (0..x.ncols())
        .map(|c| (c, x.column(c).sum() / n))
        .filter(|&(_, r)| r > 0.0 && r < 1.0)
        .map(|(c, r)| (c, (r - 0.5).abs()))
        .collect();
    cols.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    cols.into_iter().map(|c| c.0).collect()
}

/// The most balanced binary column whose private-label GCN reaches
/// `min_accuracy` on the test nodes; at most `max_tries` columns are trained.
pub fn select_private_column(
    ds: &Dataset,
    split: &DataSplit,
    train: &TrainConfig,
    min_accuracy: f64,
    max_tries: usize,
) -> Result<(usize, f64)> {
    for column in balanced_columns(ds).into_iter().take(max_tries) {
        let candidate = extract_private_column(ds, column, false)?;
        let norm = NormalizedAdjacency::build(&candidate.graph);
        let labels = candidate.labels.task_labels(Task::Private);
        let model = train_gcn(
            &norm,
            candidate.graph.features(),
            &labels,
            2,
            split,
            Task::Private,
            train,
        )?;
        let pred = argmax_rows(&predict_full(&model, &norm, candidate.graph.features())?);
        let hits = split
            .test
            .iter()
            .filter(|&&v| labels[v] == Some(pred[v]))
            .count();
        let acc = hits as f64 / split.test.len().max(1) as f64;
        log::info!("private column {column}: test accuracy {acc:.3}");
        if acc >= min_accuracy {
            return Ok((column, acc));
        }
    }
    Err(Error::Data(format!(
        "no feature column reaches private accuracy {min_accuracy} within {max_tries} tries"
    )))
}
