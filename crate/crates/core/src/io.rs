//! File formats and the signal preprocessing that sits next to them.
//!
//! All CSV inputs start with a header row and carry the node label in the
//! first column:
//!
//! * prices: `node,<date>,<date>,...` then one row of closing prices per node;
//! * signals: `node,<sample>,...` then one row of observations per node;
//! * embeddings: `node,<component>,...` then one vector per node;
//! * distances: `node,<label>,<label>,...` then a square, symmetric,
//!   zero-diagonal matrix of squared distances;
//! * labels: `node,sector` then one cluster label per node.
//!
//! Learned graphs are written as a JSON document (see [`LearnedGraph`]) and
//! optionally as a flat `source,target,weight` edge list.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edges, pair_index, WeightVector};
use crate::objective::HyperParams;
use crate::side_info::{align_labels, EmbeddingSet};
use crate::solver::{SolverTrace, Termination};

/// Labelled numeric table: one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub labels: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

impl LabeledTable {
    /// Rows reordered to follow `order` (same label set required).
    pub fn aligned_to(&self, order: &[String]) -> Result<Self> {
        let perm = align_labels(&self.labels, order)?;
        Ok(Self {
            labels: order.to_vec(),
            columns: self.columns.clone(),
            values: DMatrix::from_fn(perm.len(), self.values.ncols(), |i, j| {
                self.values[(perm[i], j)]
            }),
        })
    }
}

fn parse_err(source_name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: message.into(),
    }
}

fn check_unique(labels: &[String], source_name: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for (row, l) in labels.iter().enumerate() {
        if !seen.insert(l.as_str()) {
            return Err(parse_err(
                source_name,
                row + 2,
                format!("duplicate node label {l:?}"),
            ));
        }
    }
    Ok(())
}

/// Parses a headered, labelled numeric CSV.
pub fn parse_table<R: Read>(reader: R, source_name: &str) -> Result<LabeledTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(parse_err(source_name, 1, "empty file")),
    };
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(parse_err(source_name, 1, "header has no value columns"));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != columns.len() + 1 {
            return Err(parse_err(
                source_name,
                line,
                format!("expected {} fields, found {}", columns.len() + 1, rec.len()),
            ));
        }
        let label = &rec[0];
        if label.is_empty() {
            return Err(parse_err(source_name, line, "empty node label"));
        }
        labels.push(label.to_string());
        for (col, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(parse_err(
                    source_name,
                    line,
                    format!(
                        "missing value for node {label:?}, column {:?}",
                        columns[col]
                    ),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(
                    source_name,
                    line,
                    format!("column {:?}: {cell:?} is not a number", columns[col]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    source_name,
                    line,
                    format!("column {:?}: non-finite value", columns[col]),
                ));
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(source_name, 2, "no data rows"));
    }
    check_unique(&labels, source_name)?;
    let values = DMatrix::from_row_slice(labels.len(), columns.len(), &data);
    Ok(LabeledTable {
        labels,
        columns,
        values,
    })
}

pub fn read_table(path: &Path) -> Result<LabeledTable> {
    let file = File::open(path)?;
    parse_table(BufReader::new(file), &path.display().to_string())
}

/// Writes a labelled table; numbers use Rust's shortest round-trip decimal form.
pub fn write_table<W: Write>(table: &LabeledTable, corner: &str, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec![corner.to_string()];
    header.extend(table.columns.iter().cloned());
    wtr.write_record(&header)?;
    for (i, label) in table.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(table.values.row(i).iter().map(|v| format!("{v}")));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_table_file(table: &LabeledTable, corner: &str, path: &Path) -> Result<()> {
    write_table(table, corner, BufWriter::new(File::create(path)?))
}

/// Closing prices, one row per node and one column per date.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub labels: Vec<String>,
    pub dates: Vec<String>,
    pub prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn from_table(table: LabeledTable) -> Self {
        Self {
            labels: table.labels,
            dates: table.columns,
            prices: table.values,
        }
    }
}

pub fn read_prices(path: &Path) -> Result<PricePanel> {
    Ok(PricePanel::from_table(read_table(path)?))
}

/// `X_ij = log P_ij - log P_i(j-1)`; one fewer column than the panel.
pub fn log_returns(panel: &PricePanel) -> Result<DMatrix<f64>> {
    let p = &panel.prices;
    if p.ncols() < 2 {
        return Err(Error::InvalidParameter {
            name: "prices",
            reason: "need at least two dates to form a return".into(),
        });
    }
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            if !(p[(i, j)] > 0.0) {
                return Err(Error::Parse {
                    source_name: "prices".into(),
                    line: i + 2,
                    message: format!(
                        "nonpositive price {} for node {:?} on {:?}",
                        p[(i, j)],
                        panel.labels[i],
                        panel.dates[j]
                    ),
                });
            }
        }
    }
    Ok(DMatrix::from_fn(p.nrows(), p.ncols() - 1, |i, j| {
        p[(i, j + 1)].ln() - p[(i, j)].ln()
    }))
}

/// `S = (1/n) sum_t x_t x_t^T` over the columns of `x`; rows are centered first when `center` is set.
pub fn sample_covariance(x: &DMatrix<f64>, center: bool) -> DMatrix<f64> {
    let n = x.ncols().max(1) as f64;
    let s = if center {
        let means = x.column_mean();
        let mut xc = x.clone();
        for mut col in xc.column_iter_mut() {
            col -= &means;
        }
        &xc * xc.transpose() / n
    } else {
        x * x.transpose() / n
    };
    (&s + s.transpose()) * 0.5
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let t = read_table(path)?;
    let vectors = t
        .values
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    EmbeddingSet::new(t.labels, vectors)
}

pub fn write_embeddings(emb: &EmbeddingSet, path: &Path) -> Result<()> {
    let dim = emb.dim();
    let data: Vec<f64> = emb.vectors().iter().flatten().copied().collect();
    let table = LabeledTable {
        labels: emb.labels().to_vec(),
        columns: (1..=dim).map(|d| format!("e{d}")).collect(),
        values: DMatrix::from_row_slice(emb.labels().len(), dim, &data),
    };
    write_table_file(&table, "node", path)
}

/// Reads a square distance matrix and returns its edge vector in the node order `order`.
pub fn read_distance_matrix(
    path: &Path,
    order: Option<&[String]>,
) -> Result<(Vec<String>, Vec<f64>)> {
    let t = read_table(path)?;
    distances_from_table(&t, &path.display().to_string(), order)
}

pub fn distances_from_table(
    t: &LabeledTable,
    source_name: &str,
    order: Option<&[String]>,
) -> Result<(Vec<String>, Vec<f64>)> {
    let p = t.labels.len();
    if t.columns.len() != p {
        return Err(parse_err(
            source_name,
            1,
            format!(
                "distance matrix must be square: {p} rows, {} columns",
                t.columns.len()
            ),
        ));
    }
    let col_perm = align_labels(&t.columns, &t.labels).map_err(|e| {
        parse_err(
            source_name,
            1,
            format!("column labels must match row labels: {e}"),
        )
    })?;
    let d = DMatrix::from_fn(p, p, |i, j| t.values[(i, col_perm[j])]);
    let scale = d.amax().max(f64::MIN_POSITIVE);
    for i in 0..p {
        if d[(i, i)] != 0.0 {
            return Err(parse_err(
                source_name,
                i + 2,
                format!("nonzero diagonal for {:?}", t.labels[i]),
            ));
        }
        for j in 0..i {
            if (d[(i, j)] - d[(j, i)]).abs() > crate::graph::SYMMETRY_TOL * scale {
                return Err(parse_err(
                    source_name,
                    i + 2,
                    format!(
                        "asymmetric entries for ({:?}, {:?})",
                        t.labels[i], t.labels[j]
                    ),
                ));
            }
            if d[(i, j)] < 0.0 {
                return Err(parse_err(source_name, i + 2, "negative distance"));
            }
        }
    }
    let labels = match order {
        Some(o) => o.to_vec(),
        None => t.labels.clone(),
    };
    let perm = align_labels(&t.labels, &labels)?;
    let z = edges(p)
        .map(|(i, j)| 0.5 * (d[(perm[i], perm[j])] + d[(perm[j], perm[i])]))
        .collect();
    Ok((labels, z))
}

/// Writes the edge vector `z` as a full labelled square matrix.
pub fn write_distance_matrix(labels: &[String], z: &[f64], path: &Path) -> Result<()> {
    let p = labels.len();
    let values = DMatrix::from_fn(
        p,
        p,
        |i, j| if i == j { 0.0 } else { z[pair_index(i, j, p)] },
    );
    let table = LabeledTable {
        labels: labels.to_vec(),
        columns: labels.to_vec(),
        values,
    };
    write_table_file(&table, "node", path)
}

/// `(node, cluster label)` rows.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let source_name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(parse_err(
                &source_name,
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(parse_err(&source_name, line, "empty node or cluster label"));
        }
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    let nodes: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    check_unique(&nodes, &source_name)?;
    Ok(rows)
}

pub fn write_labels(rows: &[(String, String)], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    wtr.write_record(["node", "sector"])?;
    for (n, s) in rows {
        wtr.write_record([n, s])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub iterations: usize,
    pub termination: Termination,
    pub final_objective: f64,
    pub final_delta: f64,
}

impl From<&SolverTrace> for ConvergenceSummary {
    fn from(t: &SolverTrace) -> Self {
        Self {
            iterations: t.iterations(),
            termination: t.termination,
            final_objective: t.final_objective(),
            final_delta: t.records.last().map_or(0.0, |r| r.delta_norm),
        }
    }
}

pub const GRAPH_FORMAT: &str = "graphfuse-graph";
pub const GRAPH_VERSION: u32 = 1;

/// A learned weighted graph with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparameters: Option<HyperParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSummary>,
    /// Free-form provenance (kernel-width source, centering, seed, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl LearnedGraph {
    /// Keeps edges with weight strictly above `threshold`.
    pub fn from_weights(nodes: Vec<String>, w: &WeightVector, threshold: f64) -> Result<Self> {
        if nodes.len() != w.p() {
            return Err(Error::DimensionMismatch {
                what: "node labels",
                expected: w.p(),
                found: nodes.len(),
            });
        }
        let edges = edges(w.p())
            .zip(w.as_slice())
            .filter(|(_, &x)| x > threshold && x > 0.0)
            .map(|((i, j), &x)| Edge {
                source: nodes[i].clone(),
                target: nodes[j].clone(),
                weight: x,
            })
            .collect();
        Ok(Self {
            nodes,
            edges,
            hyperparameters: None,
            convergence: None,
            metadata: BTreeMap::new(),
        })
    }

    /// Dense weight vector in the order of `self.nodes`; absent edges are zero.
    pub fn weights(&self) -> Result<WeightVector> {
        let p = self.nodes.len();
        let index: std::collections::HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut w = vec![0.0; crate::graph::edge_count(p)];
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(e.source.as_str()), index.get(e.target.as_str()))
            else {
                return Err(Error::LabelMismatch {
                    missing: vec![],
                    extra: vec![e.source.clone(), e.target.clone()],
                });
            };
            if a == b {
                return Err(Error::InvalidParameter {
                    name: "edge",
                    reason: format!("self-loop on {:?}", e.source),
                });
            }
            w[pair_index(a, b, p)] = e.weight;
        }
        WeightVector::new(p, w)
    }

    fn validate(&self) -> Result<()> {
        check_unique(&self.nodes, "graph nodes")?;
        let nodes: HashSet<&str> = self.nodes.iter().map(String::as_str).collect();
        for e in &self.edges {
            if !nodes.contains(e.source.as_str()) || !nodes.contains(e.target.as_str()) {
                return Err(Error::LabelMismatch {
                    missing: vec![],
                    extra: vec![e.source.clone(), e.target.clone()],
                });
            }
            if e.source == e.target || !(e.weight > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "edge",
                    reason: format!("bad edge {} -- {} ({})", e.source, e.target, e.weight),
                });
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct GraphDocumentOut<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    graph: &'a LearnedGraph,
}

#[derive(Deserialize)]
struct GraphDocumentIn {
    format: Option<String>,
    version: Option<u32>,
    #[serde(flatten)]
    graph: LearnedGraph,
}

pub fn write_graph<W: Write>(g: &LearnedGraph, mut out: W) -> Result<()> {
    let doc = GraphDocumentOut {
        format: GRAPH_FORMAT,
        version: GRAPH_VERSION,
        graph: g,
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn export_graph(g: &LearnedGraph, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_graph(g, &mut out)?;
    out.flush()?;
    Ok(())
}

const KNOWN_GRAPH_KEYS: &[&str] = &[
    "format",
    "version",
    "nodes",
    "edges",
    "hyperparameters",
    "convergence",
    "metadata",
];

/// Parses a graph document. Unknown top-level fields are skipped and their
/// names returned alongside the graph.
pub fn parse_graph(text: &str) -> Result<(LearnedGraph, Vec<String>)> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    let unknown: Vec<String> = raw
        .as_object()
        .map(|o| {
            o.keys()
                .filter(|k| !KNOWN_GRAPH_KEYS.contains(&k.as_str()))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    let doc: GraphDocumentIn = serde_json::from_str(text)?;
    if let Some(f) = &doc.format {
        if f != GRAPH_FORMAT {
            log::warn!("graph document declares format {f:?}, expected {GRAPH_FORMAT:?}");
        }
    }
    if let Some(v) = doc.version {
        if v > GRAPH_VERSION {
            log::warn!("graph document version {v} is newer than {GRAPH_VERSION}");
        }
    }
    for key in &unknown {
        log::warn!("ignoring unknown graph field {key:?}");
    }
    doc.graph.validate()?;
    Ok((doc.graph, unknown))
}

pub fn import_graph(path: &Path) -> Result<LearnedGraph> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_graph(&text).map(|(g, _)| g)
}

/// Flat `source,target,weight` list; weights carry 17 significant digits.
pub fn write_edge_csv<W: Write>(g: &LearnedGraph, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["source", "target", "weight"])?;
    for e in &g.edges {
        wtr.write_record([
            e.source.as_str(),
            e.target.as_str(),
            &format!("{:.16e}", e.weight),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
