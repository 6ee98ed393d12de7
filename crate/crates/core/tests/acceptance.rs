//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use graphfuse::cubic::{solve_cubic, CubicMethod};
use graphfuse::eval::{binarize, f_score, modularity, sector_block_truth, EdgeSet, Partition};
use graphfuse::graph::{adjoint_diag, edges, incidence_matrices};
use graphfuse::io::sample_covariance;
use graphfuse::objective::{f1, f2, f3, objective_parts, smooth_gradient};
use graphfuse::side_info::pairwise_sq_dists;
use graphfuse::solver::majorizer;
use graphfuse::synth::{generate_instance, sample_gmrf, write_instance, SynthConfig};
use graphfuse::{
    edge_count, edge_index, edge_pair, laplacian, run_mm, HyperParams, ProblemData, SolverConfig,
    WeightVector,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_psd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let n = p + 5;
    let x = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    &x * x.transpose() / n as f64
}

fn random_weights(rng: &mut ChaCha8Rng, p: usize, lo: f64, hi: f64) -> WeightVector {
    WeightVector::new(
        p,
        (0..edge_count(p))
            .map(|_| rng.random_range(lo..hi))
            .collect(),
    )
    .unwrap()
}

/// Laplacian by explicit double loop.
fn laplacian_oracle(w: &WeightVector) -> DMatrix<f64> {
    let p = w.p();
    let mut l = DMatrix::zeros(p, p);
    for i in 1..=p {
        for j in 1..i {
            let x = w.as_slice()[edge_index(i, j, p).unwrap() - 1];
            l[(i - 1, j - 1)] -= x;
            l[(j - 1, i - 1)] -= x;
            l[(i - 1, i - 1)] += x;
            l[(j - 1, j - 1)] += x;
        }
    }
    l
}

fn logdet_oracle(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().ln()
}

fn descent() -> Outcome {
    let start = Instant::now();
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let sizes = [5, 10, 20];
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let p = sizes[seed as usize % 3];
        let alpha = alphas[seed as usize % 5];
        let s = random_psd(&mut rng, p);
        let z: Vec<f64> = (0..edge_count(p))
            .map(|_| rng.random_range(0.0..4.0))
            .collect();
        let data = ProblemData::new(s, z).map_err(|e| e.to_string())?;
        let hp = HyperParams::new(
            alpha,
            rng.random_range(0.5..2.0),
            rng.random_range(0.01..0.5),
        )
        .unwrap();
        let (_, trace) = run_mm(&data, &hp, &SolverConfig::default())
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let objs = trace.objectives();
        for pair in objs.windows(2) {
            let excess = (pair[1] - pair[0]) / (1.0 + pair[0].abs());
            worst = worst.max(excess);
            check(excess <= 1e-9, || {
                format!(
                    "seed {seed} (p={p}, alpha={alpha}): objective rose from {} to {}",
                    pair[0], pair[1]
                )
            })?;
        }
        steps += objs.len() - 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "100 instances, {steps} steps, max relative rise {worst:.2e}, {secs:.1}s"
    ))
}

fn kernel_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut most_iters = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let p = rng.random_range(3..16);
        let z: Vec<f64> = (0..edge_count(p))
            .map(|_| rng.random_range(0.0..4.0))
            .collect();
        let sigma2 = rng.random_range(0.5..2.0);
        let data = ProblemData::metadata_only(p, z.clone()).unwrap();
        let hp = HyperParams::new(0.0, sigma2, 0.1).unwrap();
        let cfg = SolverConfig {
            maxiter: 500,
            ..SolverConfig::default()
        };
        let (w, trace) = run_mm(&data, &hp, &cfg).map_err(|e| e.to_string())?;
        let err = w
            .as_slice()
            .iter()
            .zip(&z)
            .map(|(x, zk)| (x - (-zk / sigma2).exp()).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        most_iters = most_iters.max(trace.iterations());
        check(err <= 1e-6, || format!("seed {seed}: max error {err:.3e}"))?;
        check(trace.iterations() <= 500, || {
            format!("seed {seed}: {} iterations", trace.iterations())
        })?;
    }
    Ok(format!(
        "20 instances, max error {worst:.2e}, at most {most_iters} iterations"
    ))
}

fn majorizers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let (mut tight, mut slack) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let p = rng.random_range(2..9);
        let w0 = random_weights(&mut rng, p, 0.05, 3.0);
        let w = random_weights(&mut rng, p, 0.05, 3.0);
        let data = ProblemData::new(
            random_psd(&mut rng, p),
            (0..edge_count(p))
                .map(|_| rng.random_range(0.0..3.0))
                .collect(),
        )
        .unwrap();
        let sigma2 = rng.random_range(0.2..2.0);
        let lambda = rng.random_range(0.05..1.0);
        let a = 3.7;

        // f1: the log-det bound with its constant written out
        let c1 = 1.0
            - p as f64
            - logdet_oracle(&(laplacian_oracle(&w0) + DMatrix::from_element(p, p, 1.0 / p as f64)));
        let g1 = |x: &WeightVector| majorizer::f1_surrogate(x, &w0, &data).unwrap() + c1;
        let f1_at = |x: &WeightVector| f1(x, data.covariance()).unwrap();
        // f2: no constant
        let g2 = |x: &WeightVector| majorizer::f2_surrogate(x, &w0, data.distances(), sigma2);
        let f2_at = |x: &WeightVector| f2(x, data.distances(), sigma2).unwrap();
        // f3: tangent plus its constant
        let c3 = majorizer::f3_constant(&w0, lambda, a).unwrap();
        let g3 = |x: &WeightVector| majorizer::f3_surrogate(x, &w0, lambda, a).unwrap() + c3;
        let f3_at = |x: &WeightVector| f3(x, lambda, a).unwrap();

        let pairs: [(&str, f64, f64, f64, f64); 3] = [
            ("F1", g1(&w0), f1_at(&w0), g1(&w), f1_at(&w)),
            ("F2", g2(&w0), f2_at(&w0), g2(&w), f2_at(&w)),
            ("F3", g3(&w0), f3_at(&w0), g3(&w), f3_at(&w)),
        ];
        for (name, s0, v0, s, v) in pairs {
            let gap0 = (s0 - v0).abs() / (1.0 + v0.abs());
            tight = tight.max(gap0);
            check(gap0 <= 1e-9, || {
                format!("{name} not tight at w0: {s0} vs {v0}")
            })?;
            let margin = (s - v) / (1.0 + v.abs());
            slack = slack.min(margin);
            check(margin >= -1e-9, || {
                format!("{name} surrogate {s} below objective {v}")
            })?;
        }
    }
    Ok(format!(
        "300 pairs, max touch gap {tight:.2e}, min domination margin {slack:.2e}"
    ))
}

fn cubic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let (mut worst_res, mut worst_gap) = (0.0f64, 0.0f64);
    for t in 0..10_000 {
        let a = match t % 100 {
            0 => 0.0,
            _ => 10f64.powf(rng.random_range(-1.0..1.0)),
        };
        let c = match t % 100 {
            0 => rng.random_range(0.1..10.0),
            _ => rng.random_range(-10.0..10.0),
        };
        let rhs = match t % 100 {
            1 => 0.0,
            _ => rng.random_range(0.0..10.0),
        };
        let x = solve_cubic(a, c, rhs, CubicMethod::Companion, f64::INFINITY)
            .map_err(|e| format!("{e:?}"))?;
        let y = solve_cubic(a, c, rhs, CubicMethod::Bisection, f64::INFINITY)
            .map_err(|e| format!("{e:?}"))?;
        let res = (((a * x + c) * x) * x - rhs).abs() / (1.0 + rhs.abs());
        worst_res = worst_res.max(res);
        worst_gap = worst_gap.max((x - y).abs());
        check(x >= 0.0, || {
            format!("negative root {x} for ({a}, {c}, {rhs})")
        })?;
        check(res <= 1e-10, || {
            format!("residual {res:.3e} at ({a}, {c}, {rhs}), root {x}")
        })?;
        check((x - y).abs() <= 1e-8, || {
            format!("companion {x} vs bisection {y} at ({a}, {c}, {rhs})")
        })?;
    }
    let r = solve_cubic(2.0, 3.0, 5.0, CubicMethod::Companion, f64::INFINITY).unwrap();
    check((r - 1.0).abs() <= 1e-12, || format!("(2, 3, 5) gave {r}"))?;
    Ok(format!(
        "10^4 triples, max scaled residual {worst_res:.2e}, max method gap {worst_gap:.2e}"
    ))
}

fn gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let mut worst = 0.0f64;
    for t in 0..50 {
        let p = rng.random_range(2..9);
        let data = ProblemData::new(
            random_psd(&mut rng, p),
            (0..edge_count(p))
                .map(|_| rng.random_range(0.0..3.0))
                .collect(),
        )
        .unwrap();
        let alpha = rng.random_range(0.0..1.0);
        let hp = HyperParams::new(alpha, rng.random_range(0.2..2.0), 0.1).unwrap();
        let w = random_weights(&mut rng, p, 0.2, 2.0);
        let smooth = |x: &WeightVector| {
            let parts = objective_parts(x, &data, &hp).unwrap();
            alpha * parts.f1.unwrap() + (1.0 - alpha) * parts.f2.unwrap()
        };
        let g = smooth_gradient(&w, &data, &hp).unwrap();
        let h = 1e-6;
        for k in 0..w.len() {
            let mut plus = w.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (smooth(&WeightVector::new(p, plus).unwrap())
                - smooth(&WeightVector::new(p, minus).unwrap()))
                / (2.0 * h);
            let rel = (g[k] - fd).abs() / g[k].abs().max(1.0);
            worst = worst.max(rel);
            check(rel <= 1e-5, || {
                format!("point {t}, edge {k}: analytic {} vs numeric {fd}", g[k])
            })?;
        }
    }
    Ok(format!("50 points, max relative error {worst:.2e}"))
}

fn structural() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6000);
    let mut worst = 0.0f64;
    for p in 2..=20 {
        let w = random_weights(&mut rng, p, 0.0, 2.0);
        let l = laplacian(&w);
        check((&l - laplacian_oracle(&w)).abs().max() <= 1e-12, || {
            format!("p={p}: L differs from the double-loop oracle")
        })?;
        let rows = (&l * DVector::from_element(p, 1.0)).abs().max();
        worst = worst.max(rows);
        check(rows <= 1e-12, || format!("p={p}: |L 1| = {rows:e}"))?;

        let g = incidence_matrices(p).unwrap().g;
        let mut wt = w.as_slice().to_vec();
        wt.push(1.0 / p as f64);
        let fact = &g * DMatrix::from_diagonal(&DVector::from_vec(wt)) * g.transpose();
        let lj = &l + DMatrix::from_element(p, p, 1.0 / p as f64);
        let gap = (fact - lj).abs().max();
        worst = worst.max(gap);
        check(gap <= 1e-12, || format!("p={p}: G diag G^T off by {gap:e}"))?;

        let s = random_psd(&mut rng, p);
        let lhs = (&s * &l).trace();
        let rhs: f64 = adjoint_diag(&s)
            .unwrap()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        let gap = (lhs - rhs).abs() / (1.0 + lhs.abs());
        worst = worst.max(gap);
        check(gap <= 1e-12, || {
            format!("p={p}: tr(S L) = {lhs}, adjoint gives {rhs}")
        })?;
    }
    for p in 2..=50 {
        let mut seen = BTreeSet::new();
        for i in 1..=p {
            for j in 1..i {
                let k = edge_index(i, j, p).unwrap();
                check(k >= 1 && k <= edge_count(p), || {
                    format!("p={p}: ({i},{j}) -> {k}")
                })?;
                check(edge_pair(k, p).unwrap() == (i, j), || {
                    format!("p={p}: round trip of ({i},{j}) failed")
                })?;
                seen.insert(k);
            }
        }
        check(seen.len() == edge_count(p), || {
            format!("p={p}: only {} distinct indices", seen.len())
        })?;
    }
    Ok(format!(
        "p in 2..=20 identities (max error {worst:.2e}), index bijection for p in 2..=50"
    ))
}

fn fusion_experiment() -> Outcome {
    let start = Instant::now();
    let alphas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let base = SynthConfig::default();
    let sigma2 = base.d_out / 100.0;
    let lambda = 0.1;
    let rows: Vec<Result<Vec<f64>, String>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst = generate_instance(&SynthConfig {
                seed,
                ..base.clone()
            })
            .map_err(|e| e.to_string())?;
            let data = ProblemData::new(
                sample_covariance(&inst.signals, false),
                pairwise_sq_dists(&inst.embeddings),
            )
            .map_err(|e| e.to_string())?;
            let truth = sector_block_truth(&inst.partition);
            alphas
                .iter()
                .map(|&alpha| {
                    let hp = HyperParams::new(alpha, sigma2, lambda).unwrap();
                    let (w, _) = run_mm(&data, &hp, &SolverConfig::default())
                        .map_err(|e| format!("seed {seed}, alpha {alpha}: {e}"))?;
                    Ok(f_score(&binarize(&w, 1e-4), &truth))
                })
                .collect()
        })
        .collect();
    let (mut at_least, mut strictly) = (0, 0);
    let (mut sum_ends, mut sum_best) = (0.0, 0.0);
    for row in rows {
        let f = row?;
        let ends = f[0].max(f[10]);
        let best = f[1..10].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        at_least += usize::from(best >= ends);
        strictly += usize::from(best > ends);
        sum_ends += ends;
        sum_best += best;
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "best interior alpha >= endpoints in {at_least}/20, > in {strictly}/20 (mean F {:.3} vs {:.3}), {secs:.1}s",
        sum_best / 20.0,
        sum_ends / 20.0
    );
    check(at_least >= 16 && strictly >= 10 && secs < 600.0, || {
        detail.clone()
    })?;
    Ok(detail)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = rng.random_range(2..=12);
        let w = WeightVector::new(
            p,
            (0..edge_count(p))
                .map(|_| {
                    if rng.random::<f64>() < 0.4 {
                        0.0
                    } else {
                        rng.random_range(0.0..3.0)
                    }
                })
                .collect(),
        )
        .unwrap();
        if w.max() == 0.0 {
            continue;
        }
        let labels: Vec<usize> = (0..p).map(|_| rng.random_range(0..4)).collect();
        let a = w.adjacency();
        let d: Vec<f64> = (0..p).map(|i| a.row(i).sum()).collect();
        let two_w: f64 = d.iter().sum();
        let mut brute = 0.0;
        for i in 0..p {
            for j in 0..p {
                if labels[i] == labels[j] {
                    brute += a[(i, j)] - d[i] * d[j] / two_w;
                }
            }
        }
        brute /= two_w;
        let q = modularity(&w, &Partition::new(labels)).map_err(|e| e.to_string())?;
        worst = worst.max((q - brute).abs());
        check((q - brute).abs() <= 1e-12, || {
            format!("modularity {q} vs brute force {brute}")
        })?;
    }
    // every pair of edge subsets on 4 nodes
    let m = edge_count(4);
    let subset = |mask: u32| -> EdgeSet { (0..m).filter(|k| mask >> k & 1 == 1).collect() };
    for est in 0..1u32 << m {
        for tru in 0..1u32 << m {
            let (tp, fp, fn_) = (
                (est & tru).count_ones(),
                (est & !tru).count_ones(),
                (!est & tru).count_ones(),
            );
            let expected = if tp + fp + fn_ == 0 {
                1.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            };
            let got = f_score(&subset(est), &subset(tru));
            check(got == expected, || {
                format!("subsets {est:06b}/{tru:06b}: {got} vs {expected}")
            })?;
        }
    }
    Ok(format!(
        "50 graphs, max modularity error {worst:.2e}; 4096 exhaustive F-score cases"
    ))
}

fn gmrf_sampler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9000);
    let p = 10;
    // random connected graph: a spanning path plus random extra edges
    let mut w = vec![0.0; edge_count(p)];
    for ((i, j), x) in edges(p).zip(w.iter_mut()) {
        if i == j + 1 || rng.random::<f64>() < 0.3 {
            *x = rng.random_range(0.5..2.0);
        }
    }
    let w = WeightVector::new(p, w).unwrap();
    let l = laplacian(&w);
    let n = 10_000;
    let x = sample_gmrf(&w, n, &mut rng).map_err(|e| e.to_string())?;
    let mut total = 0.0;
    let mut worst_sum = 0.0f64;
    for col in x.column_iter() {
        total += (col.transpose() * &l * col)[0];
        worst_sum = worst_sum.max(col.sum().abs());
    }
    let ratio = total / n as f64 / (p - 1) as f64;
    let detail = format!("E[x^T L x]/(p-1) = {ratio:.4}, max |1^T x| = {worst_sum:.1e}");
    check((0.95..=1.05).contains(&ratio) && worst_sum <= 1e-10, || {
        detail.clone()
    })?;
    Ok(detail)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SynthConfig {
        cluster_sizes: vec![4, 4, 4],
        n: 60,
        seed: 7,
        ..SynthConfig::default()
    };
    let inst = generate_instance(&cfg).map_err(|e| e.to_string())?;
    write_instance(&inst, dir.path()).map_err(|e| e.to_string())?;
    let run = |jobs: &str, out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_graphfuse"))
            .args(["sweep", "--signals"])
            .arg(dir.path().join("signals.csv"))
            .arg("--embeddings")
            .arg(dir.path().join("embeddings.csv"))
            .arg("--labels")
            .arg(dir.path().join("labels.csv"))
            .args([
                "--alpha-grid",
                "0:1:0.25",
                "--lambda-grid",
                "log:0.1:10:3",
                "--jobs",
                jobs,
                "--out",
            ])
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
        std::fs::read(out).map_err(|e| e.to_string())
    };
    let first = run("1", &dir.path().join("a.csv"))?;
    let second = run("1", &dir.path().join("b.csv"))?;
    let parallel = run("4", &dir.path().join("c.csv"))?;
    let rows = String::from_utf8_lossy(&first).lines().count() - 1;
    check(rows == 15, || {
        format!("expected 15 report rows, got {rows}")
    })?;
    check(first == second, || "two sequential runs differ".into())?;
    check(first == parallel, || {
        "sequential and 4-thread runs differ".into()
    })?;
    Ok(format!(
        "3 runs ({rows} rows, {} bytes) byte-identical with 1 and 4 threads",
        first.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("descent", descent),
        ("kernel oracle", kernel_oracle),
        ("majorizer suite", majorizers),
        ("cubic correctness", cubic),
        ("gradient check", gradient),
        ("structural identities", structural),
        ("synthetic fusion experiment", fusion_experiment),
        ("metric oracles", metric_oracles),
        ("GMRF sampler", gmrf_sampler),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
