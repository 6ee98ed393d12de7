//! The fused objective
//!
//! ```text
//! f(w) = alpha * f1(w) + (1 - alpha) * f2(w) + alpha * f3(w)
//! f1(w) = -log det(L(w) + J) + tr(S L(w))
//! f2(w) = w^T z + sigma2 * sum_k w_k (log w_k - 1)
//! f3(w) = sum_k scad(w_k)
//! ```
//!
//! `f1` is the Laplacian-constrained Gaussian negative log-likelihood, `f2` the
//! entropic kernel objective whose minimizer is `exp(-z / sigma2)`, and `f3`
//! the SCAD sparsity penalty.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    adjoint_diag_unchecked, edge_count, laplacian_plus_j, symmetrize_checked, WeightVector,
    SYMMETRY_TOL,
};

/// Default SCAD shape parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

/// Floor applied inside `w log w` when evaluating `f2`.
pub const ENTROPY_FLOOR: f64 = 1e-12;

/// Negative eigenvalues of a covariance down to `-PSD_CLIP_TOL * lambda_max` are clipped to zero.
pub const PSD_CLIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Fusion weight: 1 uses only signals, 0 only metadata.
    pub alpha: f64,
    /// Kernel width.
    pub sigma2: f64,
    /// Sparsity level.
    pub lambda: f64,
    /// SCAD shape, must exceed 2.
    pub scad_a: f64,
}

impl HyperParams {
    pub fn new(alpha: f64, sigma2: f64, lambda: f64) -> Result<Self> {
        let hp = Self {
            alpha,
            sigma2,
            lambda,
            scad_a: DEFAULT_SCAD_A,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn with_scad_a(mut self, a: f64) -> Result<Self> {
        self.scad_a = a;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", &format!("{} not in [0, 1]", self.alpha));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return bad("sigma2", &format!("{} must be positive", self.sigma2));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda", &format!("{} must be nonnegative", self.lambda));
        }
        if !(self.scad_a > 2.0) || !self.scad_a.is_finite() {
            return bad("scad_a", &format!("{} must exceed 2", self.scad_a));
        }
        Ok(())
    }
}

/// Sample covariance and metadata distances for one problem instance.
#[derive(Debug, Clone)]
pub struct ProblemData {
    s: DMatrix<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
}

impl ProblemData {
    /// Validates `s` (symmetric, PSD up to clipping) and `z` (length `m`, nonnegative).
    pub fn new(s: DMatrix<f64>, z: Vec<f64>) -> Result<Self> {
        let p = s.nrows();
        if p < 2 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("need at least 2 nodes, got {p}"),
            });
        }
        let s = repair_psd(symmetrize_checked(&s, SYMMETRY_TOL)?)?;
        if z.len() != edge_count(p) {
            return Err(Error::DimensionMismatch {
                what: "distance vector length",
                expected: edge_count(p),
                found: z.len(),
            });
        }
        if let Some(&bad) = z.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain {
                what: "metadata distance",
                value: bad,
            });
        }
        let r = adjoint_diag_unchecked(&s);
        Ok(Self { s, z, r })
    }

    /// Signals only; distances are zero (only meaningful at `alpha = 1`).
    pub fn signals_only(s: DMatrix<f64>) -> Result<Self> {
        let m = edge_count(s.nrows());
        Self::new(s, vec![0.0; m])
    }

    /// Metadata only; covariance is zero (only meaningful at `alpha = 0`).
    pub fn metadata_only(p: usize, z: Vec<f64>) -> Result<Self> {
        Self::new(DMatrix::zeros(p, p), z)
    }

    pub fn p(&self) -> usize {
        self.s.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn distances(&self) -> &[f64] {
        &self.z
    }

    /// `diag(E^T S E)`.
    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// Same data with nodes relabeled: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let p = self.p();
        let s = DMatrix::from_fn(p, p, |i, j| self.s[(perm[i], perm[j])]);
        let z = permute_edges(&self.z, perm)?;
        Self::new(s, z)
    }
}

/// Reorders an edge vector under a node relabeling (node `i` of the result is `perm[i]`).
pub fn permute_edges(v: &[f64], perm: &[usize]) -> Result<Vec<f64>> {
    let p = perm.len();
    if v.len() != edge_count(p) {
        return Err(Error::DimensionMismatch {
            what: "edge vector length",
            expected: edge_count(p),
            found: v.len(),
        });
    }
    Ok(crate::graph::edges(p)
        .map(|(i, j)| v[crate::graph::pair_index(perm[i], perm[j], p)])
        .collect())
}

fn repair_psd(s: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(s);
    }
    if min < -PSD_CLIP_TOL * max.max(0.0) {
        return Err(Error::NotPsd { min_eig: min });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let u = &eig.eigenvectors;
    let rebuilt = u * DMatrix::from_diagonal(&clipped) * u.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// SCAD penalty.
pub fn scad(x: f64, lambda: f64, a: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain {
            what: "scad argument",
            value: x,
        });
    }
    Ok(if x <= lambda {
        lambda * x
    } else if x <= a * lambda {
        (-x * x + 2.0 * a * lambda * x - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    })
}

/// Derivative of [`scad`] (right derivative at the breakpoints).
pub fn scad_grad(x: f64, lambda: f64, a: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain {
            what: "scad argument",
            value: x,
        });
    }
    Ok(if x <= lambda {
        lambda
    } else if x <= a * lambda {
        (a * lambda - x) / (a - 1.0)
    } else {
        0.0
    })
}

/// Cholesky factor of `L(w) + J`, or the not-PD error carrying `w`.
///
/// Pivots below `1e-14` times the largest diagonal entry count as singular.
pub(crate) fn factor_lj(w: &WeightVector) -> Result<Cholesky<f64, Dyn>> {
    let a = laplacian_plus_j(w);
    let scale = a.diagonal().max();
    let fail = || Error::NotPositiveDefinite {
        iterate: w.as_slice().to_vec(),
    };
    let chol = Cholesky::new(a).ok_or_else(fail)?;
    let min_pivot = chol.l_dirty().diagonal().map(|d| d * d).min();
    if !(min_pivot > 1e-14 * scale) {
        return Err(fail());
    }
    Ok(chol)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-log det(L(w) + J) + tr(S L(w))`.
pub fn f1(w: &WeightVector, s: &DMatrix<f64>) -> Result<f64> {
    if s.nrows() != w.p() {
        return Err(Error::DimensionMismatch {
            what: "covariance size",
            expected: w.p(),
            found: s.nrows(),
        });
    }
    let r = crate::graph::adjoint_diag(s)?;
    f1_from_r(w, &r)
}

fn f1_from_r(w: &WeightVector, r: &[f64]) -> Result<f64> {
    let chol = factor_lj(w)?;
    Ok(-log_det(&chol) + dot(r, w.as_slice()))
}

/// `w^T z + sigma2 * sum w (log w - 1)`, with entries below [`ENTROPY_FLOOR`] evaluated at the floor.
pub fn f2(w: &WeightVector, z: &[f64], sigma2: f64) -> Result<f64> {
    if z.len() != w.len() {
        return Err(Error::DimensionMismatch {
            what: "distance vector length",
            expected: w.len(),
            found: z.len(),
        });
    }
    let entropy: f64 = w
        .as_slice()
        .iter()
        .map(|&x| {
            let x = x.max(ENTROPY_FLOOR);
            x * (x.ln() - 1.0)
        })
        .sum();
    Ok(dot(w.as_slice(), z) + sigma2 * entropy)
}

/// Sum of SCAD over all edges.
pub fn f3(w: &WeightVector, lambda: f64, a: f64) -> Result<f64> {
    w.as_slice().iter().map(|&x| scad(x, lambda, a)).sum()
}

/// The three terms of the objective at one point; `None` for terms skipped at an `alpha` endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f3: Option<f64>,
    pub total: f64,
}

pub fn objective_parts(
    w: &WeightVector,
    data: &ProblemData,
    hp: &HyperParams,
) -> Result<ObjectiveParts> {
    let alpha = hp.alpha;
    let (f1v, f3v) = if alpha > 0.0 {
        (
            Some(f1_from_r(w, data.r())?),
            Some(f3(w, hp.lambda, hp.scad_a)?),
        )
    } else {
        (None, None)
    };
    let f2v = if alpha < 1.0 {
        Some(f2(w, data.distances(), hp.sigma2)?)
    } else {
        None
    };
    let total =
        alpha * (f1v.unwrap_or(0.0) + f3v.unwrap_or(0.0)) + (1.0 - alpha) * f2v.unwrap_or(0.0);
    Ok(ObjectiveParts {
        f1: f1v,
        f2: f2v,
        f3: f3v,
        total,
    })
}

/// `alpha f1 + (1 - alpha) f2 + alpha f3`; the `f2` term is skipped at `alpha = 1`, `f1`/`f3` at `alpha = 0`.
pub fn objective(w: &WeightVector, data: &ProblemData, hp: &HyperParams) -> Result<f64> {
    Ok(objective_parts(w, data, hp)?.total)
}

/// Gradient of the smooth part `alpha f1 + (1 - alpha) f2` (requires `w > 0`).
pub fn smooth_gradient(w: &WeightVector, data: &ProblemData, hp: &HyperParams) -> Result<Vec<f64>> {
    let alpha = hp.alpha;
    let inv_term = if alpha > 0.0 {
        let m = factor_lj(w)?.inverse();
        adjoint_diag_unchecked(&m)
    } else {
        vec![0.0; w.len()]
    };
    Ok(w.as_slice()
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let g1 = data.r()[k] - inv_term[k];
            let g2 = data.distances()[k] + hp.sigma2 * x.ln();
            alpha * g1 + (1.0 - alpha) * g2
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn scad_examples() {
        assert_eq!(scad(0.0, 1.0, 3.7).unwrap(), 0.0);
        assert_eq!(scad(0.5, 1.0, 3.7).unwrap(), 0.5);
        assert!(close(scad(5.0, 1.0, 3.7).unwrap(), 2.35, 1e-15));
        assert!(matches!(scad(-0.1, 1.0, 3.7), Err(Error::Domain { .. })));
    }

    #[test]
    fn scad_is_continuous_at_breakpoints() {
        let (l, a) = (0.7, 3.7);
        for x in [l, a * l] {
            let left = scad(x - 1e-9, l, a).unwrap();
            let right = scad(x + 1e-9, l, a).unwrap();
            assert!((left - right).abs() < 1e-8);
        }
    }

    #[test]
    fn scad_grad_examples() {
        assert_eq!(scad_grad(0.5, 1.0, 3.7).unwrap(), 1.0);
        assert!(close(scad_grad(2.0, 1.0, 3.7).unwrap(), 1.7 / 2.7, 1e-15));
        assert!((scad_grad(2.0, 1.0, 3.7).unwrap() - 0.62963).abs() < 1e-5);
        assert_eq!(scad_grad(5.0, 1.0, 3.7).unwrap(), 0.0);
        assert!(scad_grad(-1.0, 1.0, 3.7).is_err());
    }

    #[test]
    fn scad_grad_matches_finite_differences() {
        let (l, a) = (1.0, 3.7);
        let h = 1e-6;
        for x in [0.2, 0.9, 1.5, 2.0, 3.0, 3.6, 4.0, 8.0] {
            let fd = (scad(x + h, l, a).unwrap() - scad(x - h, l, a).unwrap()) / (2.0 * h);
            assert!((fd - scad_grad(x, l, a).unwrap()).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn f1_examples() {
        let s = DMatrix::identity(2, 2);
        let w = WeightVector::new(2, vec![0.5]).unwrap();
        assert!(close(f1(&w, &s).unwrap(), 1.0, 1e-14));
        let a = 1.3;
        let w = WeightVector::new(2, vec![a]).unwrap();
        assert!(close(f1(&w, &s).unwrap(), 2.0 * a - (2.0 * a).ln(), 1e-14));

        let w = WeightVector::ones(3).unwrap();
        assert!(close(
            f1(&w, &DMatrix::zeros(3, 3)).unwrap(),
            -(9.0f64).ln(),
            1e-14
        ));
    }

    #[test]
    fn f1_gradient_vanishes_at_2x2_minimizer() {
        let data = ProblemData::signals_only(DMatrix::identity(2, 2)).unwrap();
        let hp = HyperParams::new(1.0, 1.0, 0.0).unwrap();
        let g = smooth_gradient(&WeightVector::new(2, vec![0.5]).unwrap(), &data, &hp).unwrap();
        assert!(g[0].abs() < 1e-14);
    }

    #[test]
    fn f1_disconnected_graph_is_an_error() {
        let w = WeightVector::new(3, vec![1.0, 0.0, 0.0]).unwrap();
        let err = f1(&w, &DMatrix::identity(3, 3)).unwrap_err();
        match err {
            Error::NotPositiveDefinite { iterate } => assert_eq!(iterate, vec![1.0, 0.0, 0.0]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn f2_examples() {
        let one = WeightVector::new(2, vec![1.0]).unwrap();
        assert!(close(f2(&one, &[0.0], 1.0).unwrap(), -1.0, 1e-15));

        let inv_e = WeightVector::new(2, vec![(-1.0f64).exp()]).unwrap();
        let fmin = f2(&inv_e, &[1.0], 1.0).unwrap();
        assert!(close(fmin, -(-1.0f64).exp(), 1e-15));
        for x in [0.1, 0.3, 0.4, 0.5, 1.0] {
            let wx = WeightVector::new(2, vec![x]).unwrap();
            assert!(f2(&wx, &[1.0], 1.0).unwrap() >= fmin);
        }

        let w = WeightVector::new(2, vec![1.0]).unwrap();
        let mut zz = vec![2.0];
        assert!(close(f2(&w, &zz, 0.0).unwrap(), 2.0, 1e-15));
        // two edges need p = 3; pad with a zero-weight edge
        let w = WeightVector::new(3, vec![1.0, 1.0, 0.0]).unwrap();
        zz = vec![2.0, 3.0, 7.0];
        assert!(close(f2(&w, &zz, 0.0).unwrap(), 5.0, 1e-15));
    }

    #[test]
    fn f2_floor_keeps_zero_weights_finite() {
        let w = WeightVector::new(2, vec![0.0]).unwrap();
        let v = f2(&w, &[1.0], 1.0).unwrap();
        assert!(v.is_finite());
        assert!(v.abs() < 3e-11);
    }

    #[test]
    fn f3_examples() {
        let w = WeightVector::zeros(3).unwrap();
        assert_eq!(f3(&w, 1.0, 3.7).unwrap(), 0.0);
        let w = WeightVector::new(3, vec![0.5, 5.0, 0.0]).unwrap();
        assert!(close(f3(&w, 1.0, 3.7).unwrap(), 2.85, 1e-15));
        let w = WeightVector::new(3, vec![0.5, 5.0, 2.0]).unwrap();
        assert_eq!(f3(&w, 0.0, 3.7).unwrap(), 0.0);
    }

    #[test]
    fn objective_endpoints_and_midpoint() {
        let data = ProblemData::new(DMatrix::identity(2, 2), vec![1.0]).unwrap();
        let w = WeightVector::new(2, vec![1.0]).unwrap();

        let hp0 = HyperParams::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(
            objective(&w, &data, &hp0).unwrap(),
            f2(&w, &[1.0], 1.0).unwrap()
        );

        let hp1 = HyperParams::new(1.0, 1.0, 0.3).unwrap();
        let expected = f1(&w, data.covariance()).unwrap() + f3(&w, 0.3, 3.7).unwrap();
        assert_eq!(objective(&w, &data, &hp1).unwrap(), expected);

        let hp = HyperParams::new(0.5, 1.0, 0.0).unwrap();
        let expected = 0.5 * (2.0 - 2.0f64.ln());
        assert!(close(objective(&w, &data, &hp).unwrap(), expected, 1e-15));
    }

    #[test]
    fn alpha_zero_skips_factorization() {
        // a disconnected iterate is fine when only metadata is used
        let data = ProblemData::new(DMatrix::identity(3, 3), vec![1.0; 3]).unwrap();
        let w = WeightVector::zeros(3).unwrap();
        let hp = HyperParams::new(0.0, 1.0, 0.1).unwrap();
        assert!(objective(&w, &data, &hp).is_ok());
        let hp = HyperParams::new(0.5, 1.0, 0.1).unwrap();
        assert!(objective(&w, &data, &hp).is_err());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::new(1.1, 1.0, 0.0).is_err());
        assert!(HyperParams::new(0.5, 0.0, 0.0).is_err());
        assert!(HyperParams::new(0.5, 1.0, -0.1).is_err());
        assert!(HyperParams::new(0.5, 1.0, 0.1)
            .unwrap()
            .with_scad_a(2.0)
            .is_err());
    }

    #[test]
    fn psd_repair() {
        // tiny negative eigenvalue is clipped
        let mut s = DMatrix::from_element(3, 3, 1.0);
        s[(0, 0)] -= 1e-12;
        let data = ProblemData::signals_only(s).unwrap();
        let eig = SymmetricEigen::new(data.covariance().clone());
        assert!(eig.eigenvalues.min() >= -1e-15);

        let mut s = DMatrix::identity(3, 3);
        s[(2, 2)] = -0.5;
        assert!(matches!(
            ProblemData::signals_only(s),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn problem_data_validation() {
        let s = DMatrix::identity(3, 3);
        assert!(ProblemData::new(s.clone(), vec![1.0; 2]).is_err());
        assert!(ProblemData::new(s.clone(), vec![1.0, -1.0, 0.0]).is_err());
        let mut asym = s;
        asym[(0, 2)] = 0.5;
        assert!(matches!(
            ProblemData::new(asym, vec![0.0; 3]),
            Err(Error::NotSymmetric { .. })
        ));
    }

    fn random_instance(rng: &mut ChaCha8Rng, p: usize) -> ProblemData {
        let n = 2 * p;
        let x = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let s = &x * x.transpose() / n as f64;
        let z = (0..edge_count(p))
            .map(|_| rng.random_range(0.0..2.0))
            .collect();
        ProblemData::new(s, z).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let p = 2 + trial % 7;
            let data = random_instance(&mut rng, p);
            let hp = HyperParams::new(rng.random_range(0.0..=1.0), rng.random_range(0.2..2.0), 0.0)
                .unwrap();
            let w: Vec<f64> = (0..edge_count(p))
                .map(|_| rng.random_range(0.1..2.0))
                .collect();
            let wv = WeightVector::new(p, w.clone()).unwrap();
            let g = smooth_gradient(&wv, &data, &hp).unwrap();
            let h = 1e-6;
            for k in 0..w.len() {
                let mut up = w.clone();
                up[k] += h;
                let mut dn = w.clone();
                dn[k] -= h;
                let fu = objective(&WeightVector::new(p, up).unwrap(), &data, &hp).unwrap();
                let fd = objective(&WeightVector::new(p, dn).unwrap(), &data, &hp).unwrap();
                let num = (fu - fd) / (2.0 * h);
                assert!(
                    (num - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()),
                    "k = {k}: {num} vs {}",
                    g[k]
                );
            }
        }
    }

    proptest! {
        #[test]
        fn f2_strictly_convex(
            a in prop::collection::vec(0.01..3.0f64, 6),
            b in prop::collection::vec(0.01..3.0f64, 6),
            z in prop::collection::vec(0.0..2.0f64, 6),
            t in 0.05..0.95f64,
            sigma2 in 0.1..3.0f64,
        ) {
            prop_assume!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-3));
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let f = |v: Vec<f64>| f2(&WeightVector::new(4, v).unwrap(), &z, sigma2).unwrap();
            let lhs = f(mid);
            let rhs = t * f(a) + (1.0 - t) * f(b);
            prop_assert!(lhs < rhs);
        }

        #[test]
        fn scad_midpoint_concave(x in 0.0..10.0f64, y in 0.0..10.0f64, lambda in 0.0..3.0f64) {
            let a = 3.7;
            let mid = scad((x + y) / 2.0, lambda, a).unwrap();
            let avg = (scad(x, lambda, a).unwrap() + scad(y, lambda, a).unwrap()) / 2.0;
            prop_assert!(mid >= avg - 1e-12);
        }

        #[test]
        fn scad_grad_nonincreasing(x in 0.0..10.0f64, dx in 0.0..5.0f64, lambda in 0.0..3.0f64) {
            let g0 = scad_grad(x, lambda, 3.7).unwrap();
            let g1 = scad_grad(x + dx, lambda, 3.7).unwrap();
            prop_assert!(g0 >= 0.0 && g1 <= g0 + 1e-15);
        }
    }
}
