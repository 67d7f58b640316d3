//! RBF-kernel support vector machines trained by sequential minimal
//! optimization (SMO), with one-vs-one multiclass voting.

use crate::error::{Error, Result};
use crate::hash_row;
use crate::matrix::{sq_dist, Matrix};

/// Penalty and kernel width. The kernel is K = exp(-gamma * ||a-b||^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmHyper {
    pub c: f64,
    pub gamma: f64,
}

impl SvmHyper {
    pub fn new(c: f64, gamma: f64) -> Result<SvmHyper> {
        if c <= 0.0 || gamma <= 0.0 {
            return Err(Error::config(format!("C={c}, gamma={gamma} must be positive")));
        }
        Ok(SvmHyper { c, gamma })
    }
}

/// exp(-gamma * ||a-b||^2), in (0, 1].
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "kernel inputs of length {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok((-gamma * sq_dist(a, b)).exp())
}

/// One trained binary machine: support vectors, dual coefficients alpha*y
/// and bias, plus the full dual solution for optimality checks.
#[derive(Debug, Clone)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub hyper: SvmHyper,
}

impl BinarySvm {
    /// Decision value f(x) = sum coef_i K(sv_i, x) + b.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let mut f = self.bias;
        for (sv, &c) in self.support_vectors.iter().zip(&self.coef) {
            f += c * rbf_kernel(sv, x, self.hyper.gamma)?;
        }
        Ok(f)
    }
}

/// Raw SMO output over all training points, kept for KKT/duality checks.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// Solve the binary SVM dual by SMO with maximal-violating-pair selection.
/// Labels must be +-1; training stops when the KKT violation gap drops to
/// `eps`.
pub fn smo_solve(x: &Matrix, y: &[f64], hyper: SvmHyper, eps: f64) -> Result<SmoSolution> {
    let n = x.rows();
    if n != y.len() {
        return Err(Error::shape(format!("{} rows vs {} labels", n, y.len())));
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::data("both binary labels must be present"));
    }
    let c_bound = hyper.c;

    // full Gram matrix; problems here are desk-scale
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = rbf_kernel(x.row(i), x.row(j), hyper.gamma)?;
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let mut alpha = vec![0.0f64; n];
    // f_i = sum_j alpha_j y_j K_ij, zero at the start
    let mut f = vec![0.0f64; n];

    let in_up = |t: usize, alpha: &[f64]| {
        (y[t] > 0.0 && alpha[t] < c_bound - 1e-15) || (y[t] < 0.0 && alpha[t] > 1e-15)
    };
    let in_low = |t: usize, alpha: &[f64]| {
        (y[t] > 0.0 && alpha[t] > 1e-15) || (y[t] < 0.0 && alpha[t] < c_bound - 1e-15)
    };

    let max_iter = 200_000usize.max(200 * n);
    let mut iterations = 0;
    let bias;
    loop {
        // maximal violating pair on the gradient values y_t - f_t
        let mut m_val = f64::NEG_INFINITY;
        let mut m_idx = usize::MAX;
        let mut big_m_val = f64::INFINITY;
        let mut big_m_idx = usize::MAX;
        for t in 0..n {
            let g = y[t] - f[t];
            if in_up(t, &alpha) && g > m_val {
                m_val = g;
                m_idx = t;
            }
            if in_low(t, &alpha) && g < big_m_val {
                big_m_val = g;
                big_m_idx = t;
            }
        }
        if m_idx == usize::MAX || big_m_idx == usize::MAX || m_val - big_m_val <= eps {
            bias = if m_idx != usize::MAX && big_m_idx != usize::MAX {
                (m_val + big_m_val) / 2.0
            } else {
                0.0
            };
            break;
        }
        if iterations >= max_iter {
            bias = (m_val + big_m_val) / 2.0;
            break;
        }
        let (i, j) = (m_idx, big_m_idx);

        // two-variable subproblem along alpha_i += y_i*t, alpha_j -= y_j*t
        let quad = (gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j]).max(1e-12);
        let deriv = (f[i] - y[i]) - (f[j] - y[j]); // d/dt at t=0
        let mut step = -deriv / quad;

        // clip to the box
        let bound = |a: f64, dir: f64| {
            // a + dir*t in [0, C]
            if dir > 0.0 {
                ((0.0 - a) / dir, (c_bound - a) / dir)
            } else {
                ((c_bound - a) / dir, (0.0 - a) / dir)
            }
        };
        let (lo_i, hi_i) = bound(alpha[i], y[i]);
        let (lo_j, hi_j) = bound(alpha[j], -y[j]);
        let lo = lo_i.max(lo_j);
        let hi = hi_i.min(hi_j);
        step = step.clamp(lo, hi);
        if step.abs() < 1e-16 {
            bias = (m_val + big_m_val) / 2.0;
            break;
        }

        alpha[i] = (alpha[i] + y[i] * step).clamp(0.0, c_bound);
        alpha[j] = (alpha[j] - y[j] * step).clamp(0.0, c_bound);
        for t in 0..n {
            f[t] += step * (gram[t * n + i] - gram[t * n + j]);
        }
        iterations += 1;
    }

    Ok(SmoSolution {
        alpha,
        bias,
        iterations,
    })
}

/// Dual objective W(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
pub fn dual_objective(x: &Matrix, y: &[f64], alpha: &[f64], gamma: f64) -> Result<f64> {
    let n = x.rows();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alpha[j] == 0.0 {
                continue;
            }
            quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf_kernel(x.row(i), x.row(j), gamma)?;
        }
    }
    Ok(alpha.iter().sum::<f64>() - 0.5 * quad)
}

/// Verify the KKT conditions of a trained machine on its training data.
pub fn kkt_satisfied(
    x: &Matrix,
    y: &[f64],
    sol: &SmoSolution,
    hyper: SvmHyper,
    tol: f64,
) -> Result<bool> {
    for i in 0..x.rows() {
        let mut fx = sol.bias;
        for j in 0..x.rows() {
            if sol.alpha[j] > 0.0 {
                fx += sol.alpha[j] * y[j] * rbf_kernel(x.row(j), x.row(i), hyper.gamma)?;
            }
        }
        let margin = y[i] * fx;
        let a = sol.alpha[i];
        let ok = if a <= 1e-9 {
            margin >= 1.0 - tol
        } else if a >= hyper.c - 1e-9 {
            margin <= 1.0 + tol
        } else {
            (margin - 1.0).abs() <= tol
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Train one binary machine. `tol` is both the SMO stopping gap and the KKT
/// slack the result honors.
pub fn svm_train(x: &Matrix, y: &[f64], hyper: SvmHyper, tol: f64) -> Result<BinarySvm> {
    let sol = smo_solve(x, y, hyper, tol)?;
    let mut support_vectors = Vec::new();
    let mut coef = Vec::new();
    for i in 0..x.rows() {
        if sol.alpha[i] > 1e-12 {
            support_vectors.push(x.row(i).to_vec());
            coef.push(sol.alpha[i] * y[i]);
        }
    }
    Ok(BinarySvm {
        support_vectors,
        coef,
        bias: sol.bias,
        hyper,
    })
}

/// The class pairs of the one-vs-one decomposition, in canonical order.
/// For pair (a, b), label +1 means class a.
pub const OVO_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Three-class one-vs-one RBF-SVM.
#[derive(Debug, Clone)]
pub struct SvmModel {
    /// Binary machines in `OVO_PAIRS` order.
    pub machines: Vec<BinarySvm>,
    pub hyper: SvmHyper,
    /// FNV hash over the training rows, for provenance auditing.
    pub train_hash: u64,
}

impl SvmModel {
    pub fn input_dim(&self) -> usize {
        self.machines
            .iter()
            .flat_map(|m| m.support_vectors.first())
            .map(|sv| sv.len())
            .next()
            .unwrap_or(0)
    }

    /// Per-class scores: signed decision values accumulated toward each
    /// class over the machines involving it.
    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        let mut scores = [0.0; 3];
        for ((a, b), machine) in OVO_PAIRS.iter().zip(&self.machines) {
            let f = machine.decision(x)?;
            scores[*a] += f;
            scores[*b] -= f;
        }
        Ok(scores)
    }

    /// Majority vote over the three machines; full ties broken by the class
    /// with the largest summed |decision value| over its machines.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let mut votes = [0usize; 3];
        let mut magnitude = [0.0f64; 3];
        for ((a, b), machine) in OVO_PAIRS.iter().zip(&self.machines) {
            let f = machine.decision(x)?;
            if f >= 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
            magnitude[*a] += f.abs();
            magnitude[*b] += f.abs();
        }
        let best_votes = *votes.iter().max().unwrap();
        let tied: Vec<usize> = (0..3).filter(|&c| votes[c] == best_votes).collect();
        Ok(tied
            .into_iter()
            .max_by(|&a, &b| magnitude[a].partial_cmp(&magnitude[b]).unwrap())
            .unwrap())
    }
}

/// Train the one-vs-one multiclass model. All three classes must be present.
pub fn svm_train_multiclass(
    x: &Matrix,
    y: &[usize],
    hyper: SvmHyper,
    tol: f64,
) -> Result<SvmModel> {
    let mut machines = Vec::with_capacity(3);
    for (a, b) in OVO_PAIRS {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == a || y[i] == b).collect();
        if !idx.iter().any(|&i| y[i] == a) || !idx.iter().any(|&i| y[i] == b) {
            return Err(Error::data(format!("class {a} or {b} missing from training data")));
        }
        let sub = x.select_rows(&idx);
        let labels: Vec<f64> = idx.iter().map(|&i| if y[i] == a { 1.0 } else { -1.0 }).collect();
        machines.push(svm_train(&sub, &labels, hyper, tol)?);
    }
    let mut h = 0u64;
    for r in 0..x.rows() {
        h ^= hash_row(x.row(r)).rotate_left((r % 63) as u32);
    }
    Ok(SvmModel {
        machines,
        hyper,
        train_hash: h,
    })
}
