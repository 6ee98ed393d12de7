//! Seeded synthetic instances: a clustered ground-truth graph, zero-mean
//! Gaussian signals with precision `L(w_true)`, and cluster-consistent node
//! embeddings with tunable noise.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Partition;
use crate::graph::{edges, laplacian, WeightVector};
use crate::io::{self, LabeledTable, LearnedGraph};
use crate::side_info::EmbeddingSet;

/// Name of the generator behind every synthetic instance.
pub const RNG_NAME: &str = "ChaCha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub cluster_sizes: Vec<usize>,
    /// Edge probability between two nodes of the same cluster.
    pub p_intra: f64,
    /// Edge probability between clusters, apart from the confusable pair.
    pub p_inter: f64,
    /// Two clusters that share many edges and are hard to tell apart from signals.
    pub confusable: Option<(usize, usize)>,
    pub p_confusable: f64,
    /// Intra-cluster and confusable-pair weights are uniform on this range.
    pub weight_range: (f64, f64),
    /// Weights of background inter-cluster edges are this fraction of the above.
    pub inter_weight_scale: f64,
    /// Number of signal samples.
    pub n: usize,
    pub embedding_dim: usize,
    /// Expected squared distance between two nodes of the same cluster.
    pub d_in: f64,
    /// Squared distance between cluster centroids.
    pub d_out: f64,
    /// Each embedding moves this fraction of the way toward a node of a random cluster.
    pub metadata_noise: f64,
    /// Redraws of the graph before giving up on connectivity.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cluster_sizes: vec![10, 10, 10],
            p_intra: 0.8,
            p_inter: 0.02,
            confusable: Some((1, 2)),
            p_confusable: 0.3,
            weight_range: (0.5, 1.5),
            inter_weight_scale: 0.2,
            n: 200,
            embedding_dim: 3,
            d_in: 0.5,
            d_out: 4.0,
            metadata_noise: 0.3,
            max_retries: 100,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// `p` nodes split into `clusters` near-equal clusters, larger ones first.
    pub fn equal_clusters(p: usize, clusters: usize) -> Result<Vec<usize>> {
        if clusters == 0 || clusters > p {
            return Err(Error::InvalidParameter {
                name: "clusters",
                reason: format!("need 1 <= clusters <= p, got {clusters} with p = {p}"),
            });
        }
        Ok((0..clusters)
            .map(|c| p / clusters + usize::from(c < p % clusters))
            .collect())
    }

    pub fn p(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.p() < 2 {
            return bad("p", format!("need at least 2 nodes, got {}", self.p()));
        }
        if self.cluster_sizes.contains(&0) {
            return bad("cluster_sizes", "clusters must be nonempty".into());
        }
        for (name, v) in [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("p_confusable", self.p_confusable),
            ("metadata_noise", self.metadata_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, format!("{v} is outside [0, 1]"));
            }
        }
        if let Some((a, b)) = self.confusable {
            let k = self.cluster_sizes.len();
            if a == b || a >= k || b >= k {
                return bad(
                    "confusable",
                    format!("({a}, {b}) is not a pair of distinct clusters below {k}"),
                );
            }
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(
                "weight_range",
                format!("need 0 < lo <= hi, got ({lo}, {hi})"),
            );
        }
        if !(self.inter_weight_scale > 0.0 && self.inter_weight_scale.is_finite()) {
            return bad(
                "inter_weight_scale",
                format!("{} must be positive", self.inter_weight_scale),
            );
        }
        if self.n < 1 {
            return bad("n", "need at least one sample".into());
        }
        if self.embedding_dim < 1 {
            return bad("embedding_dim", "must be at least 1".into());
        }
        if !(self.d_in >= 0.0
            && self.d_out >= 0.0
            && self.d_in.is_finite()
            && self.d_out.is_finite())
        {
            return bad(
                "d_in/d_out",
                format!(
                    "need finite nonnegative values, got {} and {}",
                    self.d_in, self.d_out
                ),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub labels: Vec<String>,
    pub cluster_names: Vec<String>,
    pub partition: Partition,
    pub truth: WeightVector,
    /// `p x n`, one column per sample.
    pub signals: DMatrix<f64>,
    pub embeddings: EmbeddingSet,
    pub seed: u64,
}

pub fn node_labels(p: usize) -> Vec<String> {
    let width = p.to_string().len();
    (1..=p).map(|i| format!("v{i:0width$}")).collect()
}

pub fn generate_instance(cfg: &SynthConfig) -> Result<SynthInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = cfg.p();
    let assignment: Vec<usize> = cfg
        .cluster_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let partition = Partition::new(assignment);

    let mut truth = None;
    for _ in 0..=cfg.max_retries {
        let w = draw_graph(cfg, &partition, &mut rng)?;
        if is_connected(&w) {
            truth = Some(w);
            break;
        }
    }
    let truth = truth.ok_or_else(|| {
        Error::Generation(format!(
            "no connected graph after {} draws; raise the edge probabilities",
            cfg.max_retries + 1
        ))
    })?;

    let signals = sample_gmrf(&truth, cfg.n, &mut rng)?;
    let labels = node_labels(p);
    let embeddings = EmbeddingSet::new(labels.clone(), draw_embeddings(cfg, &partition, &mut rng))?;
    Ok(SynthInstance {
        labels,
        cluster_names: (0..cfg.cluster_sizes.len())
            .map(|c| format!("c{c}"))
            .collect(),
        partition,
        truth,
        signals,
        embeddings,
        seed: cfg.seed,
    })
}

fn draw_graph(cfg: &SynthConfig, part: &Partition, rng: &mut ChaCha8Rng) -> Result<WeightVector> {
    let (lo, hi) = cfg.weight_range;
    let values = edges(part.len())
        .map(|(i, j)| {
            let (ci, cj) = (part.assignment()[i], part.assignment()[j]);
            let confusable = cfg
                .confusable
                .is_some_and(|(a, b)| (ci, cj) == (a, b) || (ci, cj) == (b, a));
            let (prob, scale) = if ci == cj {
                (cfg.p_intra, 1.0)
            } else if confusable {
                (cfg.p_confusable, 1.0)
            } else {
                (cfg.p_inter, cfg.inter_weight_scale)
            };
            // draw both numbers for every pair so the stream does not depend on outcomes
            let hit = rng.random::<f64>() < prob;
            let weight = scale * rng.random_range(lo..=hi);
            if hit {
                weight
            } else {
                0.0
            }
        })
        .collect();
    WeightVector::new(part.len(), values)
}

fn is_connected(w: &WeightVector) -> bool {
    crate::eval::components_clustering(w, 0.0).cluster_count() == 1
}

/// Draws `n` samples of `x ~ N(0, L^+)` as the columns of a `p x n` matrix.
pub fn sample_gmrf<R: Rng>(w: &WeightVector, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = w.p();
    let eig = SymmetricEigen::new(laplacian(w));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // the smallest eigenvalue belongs to the constant vector
    if !(eig.eigenvalues[order[1]] > 1e-12 * eig.eigenvalues[order[p - 1]]) {
        return Err(Error::Generation(
            "graph is disconnected; L has a repeated null eigenvalue".into(),
        ));
    }
    let basis: Vec<(DVector<f64>, f64)> = order[1..]
        .iter()
        .map(|&k| {
            (
                eig.eigenvectors.column(k).into_owned(),
                1.0 / eig.eigenvalues[k].sqrt(),
            )
        })
        .collect();
    let mut x = DMatrix::zeros(p, n);
    for t in 0..n {
        let mut col = DVector::zeros(p);
        for (u, s) in &basis {
            let g: f64 = rng.sample(StandardNormal);
            col.axpy(g * s, u, 1.0);
        }
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        x.set_column(t, &col);
    }
    Ok(x)
}

fn draw_embeddings(cfg: &SynthConfig, part: &Partition, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = cfg.embedding_dim;
    let k = cfg.cluster_sizes.len();
    let centroids = simplex_centroids(k, d, cfg.d_out, rng);
    let jitter = (cfg.d_in / (2.0 * d as f64)).sqrt();
    let point = |c: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        centroids[c]
            .iter()
            .map(|&m| m + jitter * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    part.assignment()
        .iter()
        .map(|&c| {
            let own = point(c, rng);
            let other = rng.random_range(0..k);
            let decoy = point(other, rng);
            own.iter()
                .zip(&decoy)
                .map(|(a, b)| (1.0 - cfg.metadata_noise) * a + cfg.metadata_noise * b)
                .collect()
        })
        .collect()
}

/// `k` points at mutual squared distance `d_out`. Uses scaled unit vectors
/// when `d >= k`, random directions otherwise.
fn simplex_centroids(k: usize, d: usize, d_out: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let s = (d_out / 2.0).sqrt();
    (0..k)
        .map(|c| {
            if d >= k {
                (0..d).map(|i| if i == c { s } else { 0.0 }).collect()
            } else {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                v.iter().map(|x| x * s / norm).collect()
            }
        })
        .collect()
}

/// Files written by [`write_instance`].
pub const INSTANCE_FILES: [&str; 5] = [
    "signals.csv",
    "prices.csv",
    "embeddings.csv",
    "labels.csv",
    "truth.json",
];

/// Prices starting at 1 whose log-returns are the columns of `signals`.
pub fn prices_from_returns(signals: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = signals.shape();
    let mut prices = DMatrix::zeros(p, n + 1);
    for i in 0..p {
        let mut level = 0.0;
        prices[(i, 0)] = 1.0;
        for t in 0..n {
            level += signals[(i, t)];
            prices[(i, t + 1)] = level.exp();
        }
    }
    prices
}

/// Writes the files in [`INSTANCE_FILES`] into `dir`.
pub fn write_instance(inst: &SynthInstance, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let signals = LabeledTable {
        labels: inst.labels.clone(),
        columns: (1..=inst.signals.ncols())
            .map(|t| format!("t{t}"))
            .collect(),
        values: inst.signals.clone(),
    };
    io::write_table_file(&signals, "node", &dir.join("signals.csv"))?;
    let prices = LabeledTable {
        labels: inst.labels.clone(),
        columns: (0..=inst.signals.ncols())
            .map(|t| format!("d{t}"))
            .collect(),
        values: prices_from_returns(&inst.signals),
    };
    io::write_table_file(&prices, "node", &dir.join("prices.csv"))?;
    io::write_embeddings(&inst.embeddings, &dir.join("embeddings.csv"))?;
    let rows: Vec<(String, String)> = inst
        .labels
        .iter()
        .zip(inst.partition.assignment())
        .map(|(l, &c)| (l.clone(), inst.cluster_names[c].clone()))
        .collect();
    io::write_labels(&rows, &dir.join("labels.csv"))?;
    let mut truth = LearnedGraph::from_weights(inst.labels.clone(), &inst.truth, 0.0)?;
    truth.metadata.insert("seed".into(), inst.seed.to_string());
    truth.metadata.insert("rng".into(), RNG_NAME.into());
    io::export_graph(&truth, &dir.join("truth.json"))
}
