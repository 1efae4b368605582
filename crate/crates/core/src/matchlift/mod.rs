//! Stage 3: pairwise evidence matrices and their convex denoising.
//!
//! The solver minimizes `-<X, X_in> + 1/2 <X, 1 1^T>` subject to `X >= 0`
//! elementwise, `X_ii = 1` and `[[m, 1^T], [1, X]]` positive semidefinite.

mod admm;
mod io;

use serde::{Deserialize, Serialize};

pub use admm::{solve_matchlift, SdpSolution, SolverParams};
pub use io::{read_matrix, write_matrix, MatrixKind};

use crate::error::{Error, Result};
use crate::linalg::{bordered, min_eigenvalue, sym_eigen, Mat};

/// Whether a pair matrix holds probabilities or 0/1 decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Soft,
    Hard,
}

const SYMMETRY_TOL: f64 = 1e-9;

/// Symmetric N x N pairwise same-face matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    n: usize,
    values: Vec<f64>,
    kind: PairKind,
}

impl PairMatrix {
    pub fn new(n: usize, values: Vec<f64>, kind: PairKind) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::SizeMismatch(values.len(), n * n));
        }
        for i in 0..n {
            if (values[i * n + i] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is {}, expected 1", values[i * n + i])));
            }
            for j in 0..n {
                let v = values[i * n + j];
                let ok = match kind {
                    PairKind::Soft => (0.0..=1.0).contains(&v),
                    PairKind::Hard => v == 0.0 || v == 1.0,
                };
                if !ok {
                    return Err(Error::InvalidInput(format!("entry ({i}, {j}) = {v} is not a valid {kind:?} value")));
                }
                if (v - values[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(PairMatrix { n, values, kind })
    }

    pub fn soft(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(n, values, PairKind::Soft)
    }

    pub fn hard(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(n, values, PairKind::Hard)
    }

    /// The matrix of a clustering: 1 where two items share a label.
    pub fn from_labels(labels: &[u32]) -> Self {
        let n = labels.len();
        let values = (0..n * n).map(|k| f64::from(u8::from(labels[k / n] == labels[k % n]))).collect();
        PairMatrix { n, values, kind: PairKind::Hard }
    }

    pub fn from_mat(m: &Mat, kind: PairKind) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::SizeMismatch(m.rows(), m.cols()));
        }
        Self::new(m.rows(), m.as_slice().to_vec(), kind)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_major(self.n, self.n, self.values.clone())
    }
}

/// Thresholds a matrix: entries `>= threshold` become 1 (ties count as "same"), others 0.
pub fn harden(x: &PairMatrix, threshold: f64) -> PairMatrix {
    let n = x.n;
    let mut values: Vec<f64> = x.values.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect();
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    PairMatrix { n, values, kind: PairKind::Hard }
}

/// Smallest ratio between consecutive eigenvalues that counts as a gap in [`estimate_m`].
pub const EIGEN_GAP_RATIO: f64 = 1.5;

/// Estimates the number of faces from the spectrum of `x`.
///
/// Among the `min(N, 30)` largest eigenvalues, finds the largest ratio between
/// consecutive ones and returns the number of eigenvalues before it. Falls back to `N`
/// when no ratio reaches [`EIGEN_GAP_RATIO`].
pub fn estimate_m(x: &PairMatrix) -> usize {
    let n = x.n;
    if n <= 1 {
        return n;
    }
    let mut values = sym_eigen(&x.to_mat()).values;
    values.reverse();
    let top = values[0];
    if top <= 0.0 {
        return n;
    }
    let floor = 1e-12 * top;
    let t = n.min(30);
    let mut best = (0.0, n);
    for k in 0..t - 1 {
        let ratio = values[k].max(floor) / values[k + 1].max(floor);
        if ratio > best.0 {
            best = (ratio, k + 1);
        }
    }
    if best.0 >= EIGEN_GAP_RATIO {
        best.1
    } else {
        n
    }
}

/// Constraint residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest `|X_ii - 1|`.
    pub max_diag_deviation: f64,
    /// Most negative entry (the smallest entry overall).
    pub min_entry: f64,
    /// Smallest eigenvalue of `[[m, 1^T], [1, X]]`.
    pub min_bordered_eigenvalue: f64,
    pub asymmetry: f64,
}

impl FeasibilityReport {
    /// True when every residual is within `tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_diag_deviation <= tol
            && self.min_entry >= -tol
            && self.min_bordered_eigenvalue >= -tol
            && self.asymmetry <= tol
    }
}

pub fn feasibility_report(x: &Mat, m: f64) -> FeasibilityReport {
    let n = x.rows();
    FeasibilityReport {
        max_diag_deviation: (0..n).map(|i| (x[(i, i)] - 1.0).abs()).fold(0.0, f64::max),
        min_entry: x.as_slice().iter().copied().fold(f64::INFINITY, f64::min),
        min_bordered_eigenvalue: min_eigenvalue(&bordered(x, m)),
        asymmetry: x.asymmetry(),
    }
}

/// `-<X, X_in> + 1/2 sum(X)`.
pub fn objective(x: &Mat, x_in: &Mat) -> f64 {
    -x.inner(x_in) + 0.5 * x.sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_labels() -> Vec<u32> {
        (0..12).map(|i| i / 2).collect()
    }

    fn blocks(m: u32, size: u32) -> Vec<u32> {
        (0..m * size).map(|i| i / size).collect()
    }

    #[test]
    fn harden_examples() {
        let ones = PairMatrix::soft(3, vec![1.0, 0.6, 0.6, 0.6, 1.0, 0.6, 0.6, 0.6, 1.0]).unwrap();
        assert!(harden(&ones, 0.5).values().iter().all(|&v| v == 1.0));
        let tie = PairMatrix::soft(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(harden(&tie, 0.5).values(), &[1.0, 1.0, 1.0, 1.0]);
        let id = PairMatrix::soft(3, Mat::identity(3).into_vec()).unwrap();
        let h = harden(&id, 0.5);
        assert_eq!(h.values(), Mat::identity(3).as_slice());
        assert_eq!(h.kind(), PairKind::Hard);
    }

    #[test]
    fn validation() {
        assert!(PairMatrix::soft(2, vec![1.0, 0.2, 0.3, 1.0]).is_err());
        assert!(PairMatrix::soft(2, vec![0.9, 0.2, 0.2, 1.0]).is_err());
        assert!(PairMatrix::soft(2, vec![1.0, 1.2, 1.2, 1.0]).is_err());
        assert!(PairMatrix::hard(2, vec![1.0, 0.5, 0.5, 1.0]).is_err());
        assert!(PairMatrix::soft(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn estimate_m_examples() {
        assert_eq!(estimate_m(&PairMatrix::from_labels(&blocks(6, 4))), 6);
        let id = PairMatrix::soft(7, Mat::identity(7).into_vec()).unwrap();
        assert_eq!(estimate_m(&id), 7);
        assert_eq!(estimate_m(&PairMatrix::from_labels(&cube_labels())), 6);
    }

    #[test]
    fn feasibility_of_ideal_matrix() {
        let x = PairMatrix::from_labels(&cube_labels()).to_mat();
        let r = feasibility_report(&x, 6.0);
        assert!(r.max_diag_deviation <= 1e-12);
        assert!(r.min_entry >= -1e-12);
        assert!(r.min_bordered_eigenvalue >= -1e-12);
        assert!(r.is_feasible(1e-12));
    }

    #[test]
    fn feasibility_reports_negative_entry() {
        let mut x = Mat::identity(3);
        x[(0, 1)] = -0.2;
        x[(1, 0)] = -0.2;
        assert_eq!(feasibility_report(&x, 3.0).min_entry, -0.2);
    }

    #[test]
    fn overestimated_m_keeps_ideal_feasible() {
        for (m, size) in [(2u32, 3u32), (3, 2), (4, 2), (1, 5)] {
            let x = PairMatrix::from_labels(&blocks(m, size)).to_mat();
            assert!(feasibility_report(&x, f64::from(m) - 0.5).min_bordered_eigenvalue < -1e-9);
            for extra in 0..4 {
                let r = feasibility_report(&x, f64::from(m + extra));
                assert!(r.min_bordered_eigenvalue >= -1e-12, "m={m} extra={extra}: {r:?}");
            }
        }
    }

    #[test]
    fn objective_of_ideal_matrix() {
        let x = PairMatrix::from_labels(&cube_labels()).to_mat();
        // 24 ones: -24 + 12.
        assert_eq!(objective(&x, &x), -12.0);
    }
}
