use serde::{Deserialize, Serialize};

use super::{objective, PairMatrix};
use crate::error::{Error, Result};
use crate::linalg::{project_psd, Mat};

/// ADMM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Rescale `rho` by 2 every `adapt_interval` iterations when one residual
    /// exceeds the other tenfold. 0 disables adaptation.
    pub adapt_interval: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { rho: 1.0, tol: 1e-6, max_iter: 5000, adapt_interval: 50 }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("solver: rho, tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`solve_matchlift`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    #[serde(skip, default = "empty")]
    pub x: Mat,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub m_used: usize,
    pub converged: bool,
    /// `max(primal, dual)` after every tenth iteration.
    pub residual_history: Vec<f64>,
}

fn empty() -> Mat {
    Mat::zeros(0, 0)
}

/// Projects a bordered `(N+1) x (N+1)` matrix onto `{Z_00 = m, border = 1, diag = 1, X >= 0}`.
fn project_box(z: &mut [f64], dim: usize, m: f64) {
    for r in 0..dim {
        for c in r..dim {
            let v = if r == 0 && c == 0 {
                m
            } else if r == 0 || r == c {
                1.0
            } else {
                (0.5 * (z[r * dim + c] + z[c * dim + r])).max(0.0)
            };
            z[r * dim + c] = v;
            z[c * dim + r] = v;
        }
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Solves the relaxation by consensus ADMM on the bordered variable
/// `Z = [[m, 1^T], [1, X]]`:
///
/// ```text
/// Z <- P_box(W - U - C / rho)
/// W <- P_psd(Z + U)
/// U <- U + Z - W
/// ```
///
/// with `C` holding `-X_in + 1/2 1 1^T` on the X-block and zeros on the border.
/// Stops once `max(|Z - W|_F, rho |W - W_prev|_F) <= tol`. The returned X-block is
/// taken from `Z`, so the diagonal, border and sign constraints hold exactly and the
/// PSD constraint up to the primal residual.
pub fn solve_matchlift(x_in: &PairMatrix, m: usize, params: &SolverParams) -> Result<SdpSolution> {
    params.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("solver: m must be at least 1".into()));
    }
    let n = x_in.n();
    let dim = n + 1;
    let mf = m as f64;
    let xin = x_in.values();

    let mut cost = vec![0.0; dim * dim];
    for i in 0..n {
        for j in 0..n {
            cost[(i + 1) * dim + j + 1] = 0.5 - xin[i * n + j];
        }
    }

    // Warm start from the input itself.
    let mut z = vec![0.0; dim * dim];
    for i in 0..n {
        z[(i + 1) * dim + 1..(i + 2) * dim].copy_from_slice(&xin[i * n..(i + 1) * n]);
    }
    project_box(&mut z, dim, mf);
    let mut w = project_psd(&Mat::from_row_major(dim, dim, z.clone())).0.into_vec();
    let mut u = vec![0.0; dim * dim];
    let mut rho = params.rho;

    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut history = Vec::new();
    while iterations < params.max_iter {
        iterations += 1;
        for k in 0..z.len() {
            z[k] = w[k] - u[k] - cost[k] / rho;
        }
        project_box(&mut z, dim, mf);
        let shifted: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a + b).collect();
        let w_new = project_psd(&Mat::from_row_major(dim, dim, shifted)).0.into_vec();
        for k in 0..u.len() {
            u[k] += z[k] - w_new[k];
        }
        primal = norm_diff(&z, &w_new);
        dual = rho * norm_diff(&w_new, &w);
        w = w_new;
        if iterations % 10 == 0 {
            history.push(primal.max(dual));
        }
        if primal.max(dual) <= params.tol {
            break;
        }
        if params.adapt_interval > 0 && iterations % params.adapt_interval == 0 {
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u.iter_mut().for_each(|v| *v /= factor);
            }
        }
    }

    let x = Mat::from_fn(n, n, |r, c| z[(r + 1) * dim + c + 1]);
    let converged = primal.max(dual) <= params.tol;
    let solution = SdpSolution {
        objective: objective(&x, &x_in.to_mat()),
        x,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        m_used: m,
        converged,
        residual_history: history,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}
