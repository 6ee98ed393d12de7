//! Majorization-minimization solver for the fused objective.
//!
//! Each iteration majorizes the three objective terms at the current iterate
//! `w0`:
//!
//! * `f1` by `sum_k R_k w_k + sum_k Q_k / w_k` (plus constants), with
//!   `R = diag(E^T S E)` and `Q_k = w0_k^2 xi_k^T (L(w0) + J)^{-1} xi_k`;
//! * `f2` by `w^T z + sigma2 sum_k (w_k^2 / w0_k + (log w0_k - 2) w_k)`;
//! * `f3` by its tangent `sum_k scad'(w0_k) w_k` (plus a constant).
//!
//! The surrogate separates over edges; zeroing each partial derivative gives
//! `a_k w^3 + C_k w^2 - alpha Q_k = 0` whose positive root is the update.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubic::{solve_cubic, CubicMethod};
use crate::error::{Error, Result};
use crate::graph::{adjoint_diag_unchecked, WeightVector};
use crate::objective::{factor_lj, objective, scad, scad_grad, HyperParams, ProblemData};

/// Edge count above which a sweep is spread over the rayon pool.
const PARALLEL_EDGES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once `||w_next - w||_2 <= epsilon * min(1, ||w_next||_2)`. The
    /// scale factor keeps a step out of the weight floor from passing as convergence.
    pub epsilon: f64,
    pub maxiter: usize,
    /// Starting point; all ones when `None`.
    #[serde(skip)]
    pub w_init: Option<WeightVector>,
    /// Iterates are floored here before `log w0` and `1/w0` are formed.
    pub weight_floor: f64,
    /// Updates are capped here.
    pub weight_cap: f64,
    pub cubic_method: CubicMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            maxiter: 1000,
            w_init: None,
            weight_floor: 1e-10,
            weight_cap: 1e6,
            cubic_method: CubicMethod::Companion,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.epsilon > 0.0) {
            return bad("epsilon", format!("{} must be positive", self.epsilon));
        }
        if self.maxiter < 1 {
            return bad("maxiter", "must be at least 1".into());
        }
        if !(self.weight_floor > 0.0) || !(self.weight_cap > self.weight_floor) {
            return bad(
                "weight_floor/weight_cap",
                format!(
                    "need 0 < floor < cap, got {} and {}",
                    self.weight_floor, self.weight_cap
                ),
            );
        }
        if let Some(w) = &self.w_init {
            if w.as_slice().iter().any(|&x| !(x > 0.0)) {
                return bad("w_init", "entries must be strictly positive".into());
            }
        }
        Ok(())
    }
}

/// Quantities the surrogate is built from: `R` is fixed for a problem, `Q` is
/// refreshed at every iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorizationState {
    pub r: Vec<f64>,
    pub q_diag: Vec<f64>,
}

impl MajorizationState {
    pub fn at(w0: &WeightVector, data: &ProblemData) -> Result<Self> {
        Ok(Self {
            r: data.r().to_vec(),
            q_diag: compute_q_diag(w0)?,
        })
    }
}

/// First `m` diagonal entries of `Q`: `w0_k^2 (M_ii + M_jj - 2 M_ij)` with `M = (L(w0) + J)^{-1}`.
pub fn compute_q_diag(w0: &WeightVector) -> Result<Vec<f64>> {
    let m = factor_lj(w0)?.inverse();
    Ok(adjoint_diag_unchecked(&m)
        .into_iter()
        .zip(w0.as_slice())
        .map(|(quad, &w)| w * w * quad.max(0.0))
        .collect())
}

/// Per-edge cubic coefficients `(a, C)` at `w0`.
pub fn surrogate_coeffs(
    w0: &WeightVector,
    state: &MajorizationState,
    data: &ProblemData,
    hp: &HyperParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let alpha = hp.alpha;
    let z = data.distances();
    let mut a = Vec::with_capacity(w0.len());
    let mut c = Vec::with_capacity(w0.len());
    for (k, &w) in w0.as_slice().iter().enumerate() {
        let hprime = scad_grad(w, hp.lambda, hp.scad_a)?;
        a.push((1.0 - alpha) * 2.0 * hp.sigma2 / w);
        c.push(alpha * (state.r[k] + hprime) + (1.0 - alpha) * (z[k] + hp.sigma2 * (w.ln() - 2.0)));
    }
    Ok((a, c))
}

fn floored(w: &WeightVector, floor: f64) -> Result<WeightVector> {
    WeightVector::new(w.p(), w.as_slice().iter().map(|&x| x.max(floor)).collect())
}

/// One majorization plus per-edge minimization sweep.
pub fn mm_step(
    w0: &WeightVector,
    data: &ProblemData,
    hp: &HyperParams,
    cfg: &SolverConfig,
) -> Result<WeightVector> {
    check_sizes(w0, data)?;
    let w0 = floored(w0, cfg.weight_floor)?;
    let alpha = hp.alpha;
    let q_diag = if alpha > 0.0 {
        compute_q_diag(&w0)?
    } else {
        vec![0.0; w0.len()]
    };
    let state = MajorizationState {
        r: data.r().to_vec(),
        q_diag,
    };
    let (a, c) = surrogate_coeffs(&w0, &state, data, hp)?;

    let update = |k: usize| -> Result<f64> {
        let rhs = alpha * state.q_diag[k];
        solve_cubic(a[k], c[k], rhs, cfg.cubic_method, cfg.weight_cap).map_err(|e| {
            Error::InfeasibleUpdate {
                edge: k + 1,
                c: e.c,
                rhs: e.rhs,
            }
        })
    };
    let values = if w0.len() >= PARALLEL_EDGES {
        (0..w0.len())
            .into_par_iter()
            .map(update)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..w0.len()).map(update).collect::<Result<Vec<_>>>()?
    };
    WeightVector::new(w0.p(), values)
}

fn check_sizes(w: &WeightVector, data: &ProblemData) -> Result<()> {
    if w.p() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "node count",
            expected: data.p(),
            found: w.p(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Converged,
    MaxIter,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "maxiter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub delta_norm: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    /// Objective at the starting point.
    pub initial_objective: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_objective, |r| r.objective)
    }

    /// Objective values including the starting point.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.records.iter().map(|r| r.objective))
            .collect()
    }

    /// First step whose objective rises by more than `tol * (1 + |F|)`, if any.
    pub fn first_ascent(&self, tol: f64) -> Option<usize> {
        let f = self.objectives();
        f.windows(2)
            .position(|pair| pair[1] > pair[0] + tol * (1.0 + pair[0].abs()))
            .map(|i| i + 1)
    }

    /// One JSON object per line: iteration, objective, delta_norm, millis.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Iterates [`mm_step`] from `cfg.w_init` (all ones by default) until the step
/// norm drops to `cfg.epsilon` (scaled down for iterates of norm below 1) or
/// `cfg.maxiter` steps have run.
pub fn run_mm(
    data: &ProblemData,
    hp: &HyperParams,
    cfg: &SolverConfig,
) -> Result<(WeightVector, SolverTrace)> {
    hp.validate()?;
    cfg.validate()?;
    let mut w = match &cfg.w_init {
        Some(w) => w.clone(),
        None => WeightVector::ones(data.p())?,
    };
    check_sizes(&w, data)?;
    let initial_objective = objective(&w, data, hp)?;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIter;
    for iteration in 1..=cfg.maxiter {
        let start = Instant::now();
        let next = mm_step(&w, data, hp, cfg)?;
        let delta_norm = next
            .as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let value = objective(&next, data, hp)?;
        records.push(IterationRecord {
            iteration,
            objective: value,
            delta_norm,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        let scale = next
            .as_slice()
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .min(1.0);
        w = next;
        if delta_norm <= cfg.epsilon * scale {
            termination = Termination::Converged;
            break;
        }
    }
    log::debug!(
        "mm finished after {} iterations ({termination}), objective {}",
        records.len(),
        records.last().map_or(initial_objective, |r| r.objective)
    );
    Ok((
        w,
        SolverTrace {
            initial_objective,
            records,
            termination,
        },
    ))
}

/// Largest stationarity residual `|alpha (R_k - xi_k^T M xi_k + scad'(w_k)) + (1-alpha)(z_k + sigma2 log w_k)|`
/// over edges with `w_k > floor`, where `M = (L(w) + J)^{-1}`.
pub fn stationarity_residual(
    w: &WeightVector,
    data: &ProblemData,
    hp: &HyperParams,
    floor: f64,
) -> Result<f64> {
    check_sizes(w, data)?;
    let quad = if hp.alpha > 0.0 {
        adjoint_diag_unchecked(&factor_lj(w)?.inverse())
    } else {
        vec![0.0; w.len()]
    };
    let mut worst = 0.0f64;
    for (k, &x) in w.as_slice().iter().enumerate() {
        if x <= floor {
            continue;
        }
        let g1 = data.r()[k] - quad[k] + scad_grad(x, hp.lambda, hp.scad_a)?;
        let g2 = data.distances()[k] + hp.sigma2 * x.ln();
        worst = worst.max((hp.alpha * g1 + (1.0 - hp.alpha) * g2).abs());
    }
    Ok(worst)
}

/// Surrogates of the three objective terms built at `w0`, up to the constants
/// the minimization step ignores. Each satisfies
/// `F(w | w0) - F(w0 | w0) >= f(w) - f(w0)` for `w, w0 > 0`.
pub mod majorizer {
    use super::*;

    /// `sum_k R_k w_k + sum_k Q_k / w_k`.
    pub fn f1_surrogate(w: &WeightVector, w0: &WeightVector, data: &ProblemData) -> Result<f64> {
        let q = compute_q_diag(w0)?;
        Ok(w.as_slice()
            .iter()
            .zip(data.r())
            .zip(&q)
            .map(|((&x, &r), &qk)| r * x + qk / x)
            .sum())
    }

    /// `w^T z + sigma2 sum_k (w_k^2 / w0_k + (log w0_k - 2) w_k)`.
    pub fn f2_surrogate(w: &WeightVector, w0: &WeightVector, z: &[f64], sigma2: f64) -> f64 {
        w.as_slice()
            .iter()
            .zip(w0.as_slice())
            .zip(z)
            .map(|((&x, &x0), &zk)| zk * x + sigma2 * (x * x / x0 + (x0.ln() - 2.0) * x))
            .sum()
    }

    /// `sum_k scad'(w0_k) w_k`.
    pub fn f3_surrogate(w: &WeightVector, w0: &WeightVector, lambda: f64, a: f64) -> Result<f64> {
        w.as_slice()
            .iter()
            .zip(w0.as_slice())
            .map(|(&x, &x0)| Ok(scad_grad(x0, lambda, a)? * x))
            .sum()
    }

    /// Constant dropped from the `f3` surrogate, so that it touches `f3` at `w0`.
    pub fn f3_constant(w0: &WeightVector, lambda: f64, a: f64) -> Result<f64> {
        w0.as_slice()
            .iter()
            .map(|&x0| Ok(scad(x0, lambda, a)? - scad_grad(x0, lambda, a)? * x0))
            .sum()
    }
}
