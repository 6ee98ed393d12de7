//! Scoring learned graphs against a node partition.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edges, WeightVector};
use crate::objective::{HyperParams, ProblemData};
use crate::solver::{run_mm, SolverConfig};

/// Default binarization threshold, relative to the largest weight.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

/// Set of 0-based edge positions.
pub type EdgeSet = BTreeSet<usize>;

/// Cluster id per node, in node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
}

impl Partition {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self { assignment }
    }

    /// Builds a partition from `(node, cluster label)` pairs, in the node order `order`.
    /// Cluster ids follow first appearance along `order`.
    pub fn from_labels(rows: &[(String, String)], order: &[String]) -> Result<Self> {
        let have: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        let perm = crate::side_info::align_labels(&have, order)?;
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let assignment = perm
            .iter()
            .map(|&i| {
                let next = ids.len();
                *ids.entry(rows[i].1.as_str()).or_insert(next)
            })
            .collect();
        Ok(Self { assignment })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_count(&self) -> usize {
        self.assignment.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn same(&self, i: usize, j: usize) -> bool {
        self.assignment[i] == self.assignment[j]
    }
}

/// Edges with `w_k > threshold * max(w)`.
pub fn binarize(w: &WeightVector, threshold: f64) -> EdgeSet {
    let cut = threshold * w.max();
    w.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > cut && x > 0.0)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EdgeCounts {
    pub fn compare(estimated: &EdgeSet, truth: &EdgeSet) -> Self {
        let tp = estimated.intersection(truth).count();
        Self {
            tp,
            fp: estimated.len() - tp,
            fn_: truth.len() - tp,
        }
    }

    /// `2tp / (2tp + fp + fn)`; 1 when both sets are empty.
    pub fn f_score(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

pub fn f_score(estimated: &EdgeSet, truth: &EdgeSet) -> f64 {
    EdgeCounts::compare(estimated, truth).f_score()
}

/// All same-cluster node pairs.
pub fn sector_block_truth(partition: &Partition) -> EdgeSet {
    edges(partition.len())
        .enumerate()
        .filter(|(_, (i, j))| partition.same(*i, *j))
        .map(|(k, _)| k)
        .collect()
}

/// Weighted Newman modularity of `partition` on the graph with weights `w`.
pub fn modularity(w: &WeightVector, partition: &Partition) -> Result<f64> {
    if partition.len() != w.p() {
        return Err(Error::DimensionMismatch {
            what: "partition size",
            expected: w.p(),
            found: partition.len(),
        });
    }
    let mut degree = vec![0.0; w.p()];
    let clusters = partition.assignment().iter().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; clusters];
    for ((i, j), &x) in edges(w.p()).zip(w.as_slice()) {
        degree[i] += x;
        degree[j] += x;
        if partition.same(i, j) {
            internal[partition.assignment()[i]] += 2.0 * x;
        }
    }
    let two_m: f64 = degree.iter().sum();
    if !(two_m > 0.0) {
        return Err(Error::UndefinedModularity);
    }
    let mut total = vec![0.0; clusters];
    for (i, d) in degree.iter().enumerate() {
        total[partition.assignment()[i]] += d;
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(e, a)| e / two_m - (a / two_m).powi(2))
        .sum())
}

/// Connected components of the binarized graph, numbered by smallest member.
pub fn components_clustering(w: &WeightVector, threshold: f64) -> Partition {
    let p = w.p();
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let pairs: Vec<(usize, usize)> = edges(p).collect();
    for k in binarize(w, threshold) {
        let (i, j) = pairs[k];
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut ids = HashMap::new();
    let assignment = (0..p)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        })
        .collect();
    Partition::new(assignment)
}

/// Which partition modularity is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModularityTarget {
    /// The provided ground-truth partition.
    #[default]
    Truth,
    /// Connected components of the binarized estimate.
    Detected,
}

impl std::str::FromStr for ModularityTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truth" => Ok(Self::Truth),
            "detected" => Ok(Self::Detected),
            other => Err(format!(
                "unknown modularity target {other:?} (truth | detected)"
            )),
        }
    }
}

/// Scores for one weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub f_score: f64,
    pub counts: EdgeCounts,
    /// `None` when the graph has no weight.
    pub modularity: Option<f64>,
    pub clusters: usize,
}

pub fn score(
    w: &WeightVector,
    truth: &Partition,
    threshold: f64,
    target: ModularityTarget,
) -> Result<Scores> {
    if truth.len() != w.p() {
        return Err(Error::DimensionMismatch {
            what: "partition size",
            expected: w.p(),
            found: truth.len(),
        });
    }
    let counts = EdgeCounts::compare(&binarize(w, threshold), &sector_block_truth(truth));
    let detected = components_clustering(w, threshold);
    let part = match target {
        ModularityTarget::Truth => truth,
        ModularityTarget::Detected => &detected,
    };
    let modularity = match modularity(w, part) {
        Ok(q) => Some(q),
        Err(Error::UndefinedModularity) => None,
        Err(e) => return Err(e),
    };
    Ok(Scores {
        f_score: counts.f_score(),
        counts,
        modularity,
        clusters: detected.cluster_count(),
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub lambda: f64,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub scores: Scores,
    pub iterations: usize,
    pub millis: f64,
    pub termination: crate::solver::Termination,
    pub weights: WeightVector,
}

#[derive(Debug, Clone)]
pub struct SweepSpec<'a> {
    pub data: &'a ProblemData,
    /// `alpha` and `lambda` are overwritten per grid point.
    pub template: HyperParams,
    pub alphas: &'a [f64],
    pub lambdas: &'a [f64],
    pub config: &'a SolverConfig,
    pub truth: &'a Partition,
    pub threshold: f64,
    pub target: ModularityTarget,
}

/// Runs the solver at every `(alpha, lambda)` grid point, alpha-major. Rows are
/// independent; a failing row is reported in place without stopping the rest.
/// Runs on the current rayon pool; results do not depend on its size.
pub fn sweep(spec: &SweepSpec<'_>) -> Vec<SweepRow> {
    let grid: Vec<(f64, f64)> = spec
        .alphas
        .iter()
        .flat_map(|&a| spec.lambdas.iter().map(move |&l| (a, l)))
        .collect();
    grid.par_iter()
        .map(|&(alpha, lambda)| SweepRow {
            alpha,
            lambda,
            outcome: run_point(spec, alpha, lambda).map_err(|e| e.to_string()),
        })
        .collect()
}

fn run_point(spec: &SweepSpec<'_>, alpha: f64, lambda: f64) -> Result<SweepOutcome> {
    let hp = HyperParams {
        alpha,
        lambda,
        ..spec.template
    };
    hp.validate()?;
    let start = Instant::now();
    let (w, trace) = run_mm(spec.data, &hp, spec.config)?;
    let millis = start.elapsed().as_secs_f64() * 1e3;
    let scores = score(&w, spec.truth, spec.threshold, spec.target)?;
    Ok(SweepOutcome {
        scores,
        iterations: trace.iterations(),
        millis,
        termination: trace.termination,
        weights: w,
    })
}

/// `alpha_sweep` over a single sparsity level.
pub fn alpha_sweep(
    data: &ProblemData,
    template: &HyperParams,
    alphas: &[f64],
    config: &SolverConfig,
    truth: &Partition,
    threshold: f64,
) -> Vec<SweepRow> {
    sweep(&SweepSpec {
        data,
        template: *template,
        alphas,
        lambdas: &[template.lambda],
        config,
        truth,
        threshold,
        target: ModularityTarget::Truth,
    })
}

/// Report CSV. Wall time is only included when `timings` is set, so that the
/// default report is reproducible byte for byte.
pub fn write_report<W: std::io::Write>(rows: &[SweepRow], timings: bool, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["alpha", "lambda", "f_score", "modularity", "iters"];
    if timings {
        header.push("millis");
    }
    header.push("termination");
    wtr.write_record(&header)?;
    for row in rows {
        let mut rec = vec![format!("{}", row.alpha), format!("{}", row.lambda)];
        match &row.outcome {
            Ok(o) => {
                rec.push(format!("{}", o.scores.f_score));
                rec.push(
                    o.scores
                        .modularity
                        .map_or_else(String::new, |q| format!("{q}")),
                );
                rec.push(o.iterations.to_string());
                if timings {
                    rec.push(format!("{:.3}", o.millis));
                }
                rec.push(o.termination.to_string());
            }
            Err(msg) => {
                rec.extend([String::new(), String::new(), String::new()]);
                if timings {
                    rec.push(String::new());
                }
                rec.push(format!("error: {msg}"));
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
