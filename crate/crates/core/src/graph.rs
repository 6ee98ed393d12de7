//! Edge-vector parameterization of combinatorial graph Laplacians.
//!
//! A graph on `p` nodes is described by its `m = p(p-1)/2` edge weights,
//! stored in a fixed order: edge `(i, j)` with `i > j` (1-based) lives at
//! position `k = i - j + (j-1)(2p - j)/2`. Column `k` of the incidence
//! matrix `E` is `e_i - e_j`, so that `L(w) = E diag(w) E^T`.
//!
//! Inside the crate everything is 0-based; [`edge_index`] and [`edge_pair`]
//! expose the 1-based convention.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative tolerance when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Number of node pairs, `p(p-1)/2`.
pub fn edge_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// 1-based edge index of the pair `(i, j)`, `i > j`.
pub fn edge_index(i: usize, j: usize, p: usize) -> Result<usize> {
    if j < 1 || i <= j || i > p {
        return Err(Error::InvalidEdge { i, j, p });
    }
    Ok(i - j + (j - 1) * (2 * p - j) / 2)
}

/// Inverse of [`edge_index`]: the 1-based pair `(i, j)`, `i > j`, stored at `k`.
pub fn edge_pair(k: usize, p: usize) -> Result<(usize, usize)> {
    let m = edge_count(p);
    if k < 1 || k > m {
        return Err(Error::InvalidEdgeIndex { k, m });
    }
    let mut offset = 0;
    for j in 1..p {
        let run = p - j;
        if k <= offset + run {
            return Ok((j + (k - offset), j));
        }
        offset += run;
    }
    unreachable!("k was range checked against m")
}

/// Iterates the 0-based pairs `(i, j)`, `i > j`, in storage order.
pub fn edges(p: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..p).flat_map(move |j| ((j + 1)..p).map(move |i| (i, j)))
}

/// 0-based storage position of the unordered pair `{a, b}`, `a != b`.
pub(crate) fn pair_index(a: usize, b: usize, p: usize) -> usize {
    let (i, j) = if a > b { (a, b) } else { (b, a) };
    debug_assert!(i != j && i < p);
    i - j - 1 + j * (2 * p - j - 1) / 2
}

/// Nonnegative edge weights of a graph on `p` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    p: usize,
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(p: usize, values: Vec<f64>) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("need at least 2 nodes, got {p}"),
            });
        }
        if values.len() != edge_count(p) {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: edge_count(p),
                found: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain {
                what: "edge weight",
                value: bad,
            });
        }
        Ok(Self { p, values })
    }

    pub fn filled(p: usize, value: f64) -> Result<Self> {
        Self::new(p, vec![value; edge_count(p)])
    }

    pub fn zeros(p: usize) -> Result<Self> {
        Self::filled(p, 0.0)
    }

    pub fn ones(p: usize) -> Result<Self> {
        Self::filled(p, 1.0)
    }

    /// Builds from a symmetric adjacency matrix, reading the strict lower triangle.
    pub fn from_adjacency(adj: &DMatrix<f64>) -> Result<Self> {
        let p = adj.nrows();
        Self::new(p, edges(p).map(|(i, j)| adj[(i, j)]).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Symmetric weighted adjacency with zero diagonal.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.p);
        for ((i, j), &w) in edges(self.p).zip(&self.values) {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }
}

/// `L(w)`: off-diagonals `-w_k`, diagonal equal to the weighted degree.
pub fn laplacian(w: &WeightVector) -> DMatrix<f64> {
    let p = w.p();
    let mut l = DMatrix::zeros(p, p);
    for ((i, j), &wk) in edges(p).zip(w.as_slice()) {
        l[(i, j)] = -wk;
        l[(j, i)] = -wk;
        l[(i, i)] += wk;
        l[(j, j)] += wk;
    }
    l
}

/// `L(w) + J` with `J = (1/p) 1 1^T`.
pub fn laplacian_plus_j(w: &WeightVector) -> DMatrix<f64> {
    let p = w.p();
    let mut l = laplacian(w);
    l.add_scalar_mut(1.0 / p as f64);
    l
}

/// Dense incidence matrices `E` (p x m) and `G = [E, 1]` (p x (m+1)).
///
/// Only meant for small graphs and for checking identities; the solver
/// never materializes them.
#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    pub e: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn incidence_matrices(p: usize) -> Result<IncidenceMatrices> {
    if p < 2 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("need at least 2 nodes, got {p}"),
        });
    }
    let m = edge_count(p);
    let mut e = DMatrix::zeros(p, m);
    for (k, (i, j)) in edges(p).enumerate() {
        e[(i, k)] = 1.0;
        e[(j, k)] = -1.0;
    }
    let mut g = DMatrix::from_element(p, m + 1, 1.0);
    g.columns_mut(0, m).copy_from(&e);
    Ok(IncidenceMatrices { e, g })
}

/// Checks symmetry to `rel_tol` (relative to the largest entry) and returns `(A + A^T)/2`.
pub fn symmetrize_checked(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            what: "matrix columns",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let max_asym = (a - a.transpose()).amax();
    if max_asym > rel_tol * scale {
        return Err(Error::NotSymmetric { max_asym });
    }
    Ok((a + a.transpose()) * 0.5)
}

/// `diag(E^T S E)`: entry `k` for edge `(i, j)` is `S_ii + S_jj - 2 S_ij`.
///
/// Satisfies `tr(S L(w)) = <adjoint_diag(S), w>`.
pub fn adjoint_diag(s: &DMatrix<f64>) -> Result<Vec<f64>> {
    let s = symmetrize_checked(s, SYMMETRY_TOL)?;
    Ok(adjoint_diag_unchecked(&s))
}

/// [`adjoint_diag`] without the symmetry check, for matrices symmetric by construction.
pub(crate) fn adjoint_diag_unchecked(s: &DMatrix<f64>) -> Vec<f64> {
    edges(s.nrows())
        .map(|(i, j)| s[(i, i)] + s[(j, j)] - 2.0 * s[(i, j)])
        .collect()
}
