//! Dense matrices and a symmetric eigensolver.
//!
//! The eigensolver reduces the matrix to tridiagonal form with Householder
//! reflections and then runs implicit QL iterations with Wilkinson shifts.
//! It is used both for 3x3 PCA fits and for PSD projections in the SDP solver.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Mat { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Mat) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute difference between `a[i][j]` and `a[j][i]`.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= tol
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column-major eigenvector storage: vector `k` occupies `vectors[k*n..(k+1)*n]`.
    vectors: Vec<f64>,
    n: usize,
}

impl SymEigen {
    /// Unit eigenvector belonging to `values[k]`.
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Rebuilds `V diag(f(values)) V^T`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n, n);
        for k in 0..n {
            let w = f(self.values[k]);
            if w == 0.0 {
                continue;
            }
            add_outer(&mut out, self.vector(k), w);
        }
        out
    }
}

fn add_outer(out: &mut Mat, v: &[f64], w: f64) {
    let n = v.len();
    for i in 0..n {
        let vi = w * v[i];
        if vi == 0.0 {
            continue;
        }
        let row = &mut out.data[i * n..(i + 1) * n];
        for (o, vj) in row.iter_mut().zip(v) {
            *o += vi * vj;
        }
    }
}

/// Computes all eigenvalues and eigenvectors of a symmetric matrix.
///
/// Only the lower triangle is read. Panics if `a` is not square.
pub fn sym_eigen(a: &Mat) -> SymEigen {
    assert!(a.is_square(), "sym_eigen needs a square matrix");
    let n = a.rows();
    if n == 0 {
        return SymEigen { values: Vec::new(), vectors: Vec::new(), n };
    }
    // v is column-major: v[c*n + r] holds V[r][c].
    let mut v = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let val = if r >= c { a[(r, c)] } else { a[(c, r)] };
            v[c * n + r] = val;
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e);
    SymEigen { values: d, vectors: v, n }
}

#[inline]
fn at(n: usize, r: usize, c: usize) -> usize {
    c * n + r
}

fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[at(n, n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(n, i - 1, j)];
                v[at(n, i, j)] = 0.0;
                v[at(n, j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(n, j, i)] = f;
                g = e[j] + v[at(n, j, j)] * f;
                for k in (j + 1)..i {
                    let vkj = v[at(n, k, j)];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(n, k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(n, i - 1, j)];
                v[at(n, i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    // Accumulate transformations.
    for i in 0..n - 1 {
        v[at(n, n - 1, i)] = v[at(n, i, i)];
        v[at(n, i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(n, k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(n, k, i + 1)] * v[at(n, k, j)];
                }
                for k in 0..=i {
                    v[at(n, k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(n, k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n, n - 1, j)];
        v[at(n, n - 1, j)] = 0.0;
    }
    v[at(n, n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n always holds here.
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = v.split_at_mut((i + 1) * n);
                    let col_i = &mut lo[i * n..];
                    let col_i1 = &mut hi[..n];
                    for (a, b) in col_i.iter_mut().zip(col_i1.iter_mut()) {
                        let hk = *b;
                        *b = s * *a + c * hk;
                        *a = c * *a - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Selection sort, ascending.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for r in 0..n {
                v.swap(at(n, r, i), at(n, r, k));
            }
        }
    }
}

/// Frobenius-nearest positive semidefinite matrix: clamps negative eigenvalues to zero.
///
/// Returns the projection and the eigenvalues of the input.
pub fn project_psd(a: &Mat) -> (Mat, Vec<f64>) {
    let eig = sym_eigen(a);
    let n = eig.dim();
    let negatives = eig.values.iter().filter(|&&l| l < 0.0).count();
    let out = if negatives == 0 {
        symmetrized(a)
    } else if negatives <= n / 2 {
        // A - sum over negative eigenpairs.
        let mut out = symmetrized(a);
        for k in 0..negatives {
            add_outer(&mut out, eig.vector(k), -eig.values[k]);
        }
        out
    } else {
        eig.reconstruct(|l| l.max(0.0))
    };
    (symmetrized(&out), eig.values)
}

fn symmetrized(a: &Mat) -> Mat {
    let n = a.rows();
    Mat::from_fn(n, n, |r, c| 0.5 * (a[(r, c)] + a[(c, r)]))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Mat) -> f64 {
    sym_eigen(a).values.first().copied().unwrap_or(0.0)
}

/// `[[m, 1^T], [1, X]]`.
pub fn bordered(x: &Mat, m: f64) -> Mat {
    let n = x.rows();
    Mat::from_fn(n + 1, n + 1, |r, c| match (r, c) {
        (0, 0) => m,
        (0, _) | (_, 0) => 1.0,
        _ => x[(r - 1, c - 1)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi rotations; slow but independent of the QL path.
    fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
        let n = a.rows();
        let mut m = a.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)] * m[(p, q)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut vals: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn eigenvalues_match_jacobi() {
        for (n, seed) in [(1, 1), (2, 2), (3, 3), (7, 4), (20, 5), (41, 6)] {
            let a = random_symmetric(n, seed);
            let ours = sym_eigen(&a).values;
            let oracle = jacobi_eigenvalues(&a);
            for (x, y) in ours.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn eigenvectors_reconstruct_input() {
        let a = random_symmetric(15, 9);
        let eig = sym_eigen(&a);
        let back = eig.reconstruct(|l| l);
        for i in 0..15 {
            for j in 0..15 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-11);
            }
        }
        for k in 0..15 {
            let norm: f64 = eig.vector(k).iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_eigenvalues() {
        let mut a = Mat::zeros(24, 24);
        for b in 0..6 {
            for i in 0..4 {
                for j in 0..4 {
                    a[(4 * b + i, 4 * b + j)] = 1.0;
                }
            }
        }
        let vals = sym_eigen(&a).values;
        for v in &vals[..18] {
            assert!(v.abs() < 1e-12);
        }
        for v in &vals[18..] {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_projection_is_nearest() {
        let a = random_symmetric(12, 17);
        let (p, _) = project_psd(&a);
        assert!(min_eigenvalue(&p) >= -1e-10);
        // Direct oracle: clamp via full reconstruction.
        let direct = sym_eigen(&a).reconstruct(|l| l.max(0.0));
        for i in 0..12 {
            for j in 0..12 {
                assert!((p[(i, j)] - direct[(i, j)]).abs() < 1e-11);
            }
        }
        // Any other PSD matrix is at least as far away.
        let dist = |m: &Mat| {
            let mut s = 0.0;
            for i in 0..12 {
                for j in 0..12 {
                    s += (m[(i, j)] - a[(i, j)]).powi(2);
                }
            }
            s
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut q = p.clone();
            let v: Vec<f64> = (0..12).map(|_| rng.random_range(-0.1..0.1)).collect();
            add_outer(&mut q, &v, 1.0);
            assert!(dist(&q) >= dist(&p) - 1e-12);
        }
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Mat::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = a.matmul(&a.transpose());
        assert_eq!(p.as_slice(), &[14.0, 32.0, 32.0, 77.0]);
    }
}
