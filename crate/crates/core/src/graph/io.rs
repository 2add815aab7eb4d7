//! Plain-text graph files.
//!
//! * edges: one whitespace-separated `u v` pair per line, 0-based, each
//!   undirected edge listed once. Blank lines and `#` comments are skipped.
//! * features: CSV rows `node_id,x_1,...,x_d` with 0/1 values.
//! * labels: CSV rows `node_id,target,private`; an empty field (or `?`)
//!   marks an unknown label. A header row is optional in both CSV files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{AttributedGraph, LabelSet};
use crate::error::{Error, Result};

/// Locations of the three files describing one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl GraphFiles {
    /// `edges.txt`, `features.csv` and `labels.csv` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        GraphFiles {
            edges: dir.join("edges.txt"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
        }
    }

    pub fn load(&self) -> Result<(AttributedGraph, LabelSet)> {
        load_graph(&self.edges, &self.features, &self.labels)
    }
}

pub fn load_graph(
    edge_file: impl AsRef<Path>,
    feature_file: impl AsRef<Path>,
    label_file: impl AsRef<Path>,
) -> Result<(AttributedGraph, LabelSet)> {
    let features = read_features(feature_file.as_ref())?;
    let n = features.nrows();
    let edges = read_edges(edge_file.as_ref(), n)?;
    let graph = AttributedGraph::from_edges(features, &edges)?;
    let labels = read_labels(label_file.as_ref(), n)?;
    Ok((graph, labels))
}

pub fn save_graph(graph: &AttributedGraph, labels: &LabelSet, files: &GraphFiles) -> Result<()> {
    if labels.len() != graph.n_nodes() {
        return Err(Error::Shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            graph.n_nodes()
        )));
    }
    let mut out = BufWriter::new(File::create(&files.edges)?);
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(&files.features)?);
    for (i, row) in graph.features().rows().into_iter().enumerate() {
        write!(out, "{i}")?;
        for &x in row {
            write!(out, ",{}", x as u8)?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(&files.labels)?);
    writeln!(out, "node_id,target,private")?;
    for i in 0..labels.len() {
        let t = labels.target[i].map(|t| t.to_string()).unwrap_or_default();
        let p = labels.private[i].map(|p| p.to_string()).unwrap_or_default();
        writeln!(out, "{i},{t},{p}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_error(path, lineno, format!("expected `u v`, got {content:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_error(path, lineno, format!("invalid node index {s:?}")))
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u >= n || v >= n {
            return Err(Error::Data(format!(
                "{}:{lineno}: edge ({u}, {v}) references a node outside 0..{n}",
                path.display()
            )));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn csv_records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        out.push((line, record));
    }
    // An optional header: a first row whose id column is not an integer.
    if let Some((_, first)) = out.first() {
        if first[0].parse::<usize>().is_err() {
            out.remove(0);
        }
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_error(path, line, format!("{other:?}")),
    }
}

fn read_node_id(path: &Path, line: usize, field: &str, n: usize) -> Result<usize> {
    let id = field
        .parse::<usize>()
        .map_err(|_| parse_error(path, line, format!("invalid node id {field:?}")))?;
    if id >= n {
        return Err(Error::Shape(format!(
            "{}:{line}: node id {id} outside 0..{n}",
            path.display()
        )));
    }
    Ok(id)
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    let records = csv_records(path)?;
    let n = records.len();
    let d = records.first().map_or(0, |(_, r)| r.len() - 1);
    let mut x = Array2::zeros((n, d));
    let mut seen = vec![false; n];
    for (line, record) in &records {
        if record.len() != d + 1 {
            return Err(parse_error(
                path,
                *line,
                format!("expected {} columns, got {}", d + 1, record.len()),
            ));
        }
        let id = read_node_id(path, *line, &record[0], n)?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::Data(format!(
                "{}:{line}: duplicate feature row for node {id}",
                path.display()
            )));
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            x[[id, j]] = match field {
                "0" => 0.0,
                "1" => 1.0,
                other => {
                    return Err(parse_error(
                        path,
                        *line,
                        format!("feature value {other:?} is not 0/1"),
                    ))
                }
            };
        }
    }
    Ok(x)
}

fn read_labels(path: &Path, n: usize) -> Result<LabelSet> {
    let records = csv_records(path)?;
    if records.len() != n {
        return Err(Error::Shape(format!(
            "{}: {} label rows for {n} nodes",
            path.display(),
            records.len()
        )));
    }
    let mut labels = LabelSet::unknown(n);
    let mut seen = vec![false; n];
    for (line, record) in &records {
        if record.len() != 3 {
            return Err(parse_error(
                path,
                *line,
                format!("expected `node_id,target,private`, got {} columns", record.len()),
            ));
        }
        let id = read_node_id(path, *line, &record[0], n)?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::Data(format!(
                "{}:{line}: duplicate label row for node {id}",
                path.display()
            )));
        }
        labels.target[id] = match &record[1] {
            "" | "?" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|_| parse_error(path, *line, format!("invalid target label {s:?}")))?,
            ),
        };
        labels.private[id] = match &record[2] {
            "" | "?" => None,
            "0" => Some(0),
            "1" => Some(1),
            s => {
                return Err(parse_error(
                    path,
                    *line,
                    format!("private label {s:?} is not 0/1"),
                ))
            }
        };
    }
    Ok(labels)
}
