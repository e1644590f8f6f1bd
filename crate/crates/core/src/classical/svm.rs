//! Kernel SVMs trained with SMO (second-order working-set selection).

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::N_STYLES;

const TAU: f64 = 1e-12;
const STOP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `(1 + γ·⟨x, z⟩)³`
    CubicPolynomial,
    /// `exp(−γ·‖x − z‖²)`
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MulticlassScheme {
    OneVsOne,
    OneVsAll,
}

impl Kernel {
    pub fn eval(self, gamma: f64, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self {
            Kernel::CubicPolynomial => (1.0 + gamma * a.dot(&b)).powi(3),
            Kernel::Gaussian => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, z)| (x - z) * (x - z)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn gram(self, gamma: f64, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = x.nrows();
        let dots = x.dot(&x.t());
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = match self {
                    Kernel::CubicPolynomial => (1.0 + gamma * dots[[i, j]]).powi(3),
                    Kernel::Gaussian => {
                        let d2 = (dots[[i, i]] + dots[[j, j]] - 2.0 * dots[[i, j]]).max(0.0);
                        (-gamma * d2).exp()
                    }
                };
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }
        k
    }
}

/// Solution of one binary problem: `f(x) = Σ coef_i·K(x_i, x) − rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    /// Indices into the stored training rows.
    pub support: Vec<usize>,
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinaryMachine {
    fn decision(&self, k_row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&i, &c)| c * k_row[i])
            .sum::<f64>()
            - self.rho
    }
}

/// Solves the C-SVM dual on the subset `idx` of a precomputed Gram matrix.
///
/// `y` holds ±1 labels aligned with `idx`.
pub fn solve_binary(gram: &Array2<f64>, idx: &[usize], y: &[f64], c: f64) -> BinaryMachine {
    let n = idx.len();
    let q = |a: usize, b: usize| y[a] * y[b] * gram[[idx[a], idx[b]]];
    let qd: Vec<f64> = (0..n).map(|a| gram[[idx[a], idx[a]]]).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);

    for _ in 0..max_iter {
        // select i
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if alpha[t] < c && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if alpha[t] > 0.0 && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };

        // select j by the second-order gain
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            if y[t] > 0.0 {
                if alpha[t] > 0.0 {
                    let grad_diff = gmax + grad[t];
                    gmax2 = gmax2.max(grad[t]);
                    if grad_diff > 0.0 {
                        let quad = qd[i] + qd[t] - 2.0 * y[i] * q(i, t);
                        let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            } else if alpha[t] < c {
                let grad_diff = gmax - grad[t];
                gmax2 = gmax2.max(-grad[t]);
                if grad_diff > 0.0 {
                    let quad = qd[i] + qd[t] + 2.0 * y[i] * q(i, t);
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        if gmax + gmax2 < STOP_TOLERANCE {
            break;
        }
        let Some(j) = j_sel else { break };

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // bias from the KKT conditions
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };

    let (support, coef) = (0..n)
        .filter(|&t| alpha[t] > 0.0)
        .map(|t| (idx[t], alpha[t] * y[t]))
        .unzip();
    BinaryMachine { support, coef, rho }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    kernel: Kernel,
    scheme: MulticlassScheme,
    gamma: f64,
    train: Array2<f64>,
    /// One-vs-one: `(positive class, negative class)`; one-vs-all: `(class, class)`.
    machines: Vec<((usize, usize), BinaryMachine)>,
}

impl Svm {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize], kernel: Kernel, scheme: MulticlassScheme, c: f64) -> Self {
        let gamma = 1.0 / x.ncols().max(1) as f64;
        let gram = kernel.gram(gamma, x);
        let present: Vec<usize> = (0..N_STYLES).filter(|k| y.contains(k)).collect();
        let mut machines = Vec::new();
        match scheme {
            MulticlassScheme::OneVsOne => {
                for (a_pos, &a) in present.iter().enumerate() {
                    for &b in &present[a_pos + 1..] {
                        let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == a || y[i] == b).collect();
                        let yy: Vec<f64> = idx.iter().map(|&i| if y[i] == a { 1.0 } else { -1.0 }).collect();
                        machines.push(((a, b), solve_binary(&gram, &idx, &yy, c)));
                    }
                }
            }
            MulticlassScheme::OneVsAll => {
                let idx: Vec<usize> = (0..y.len()).collect();
                for &a in &present {
                    let yy: Vec<f64> = y.iter().map(|&l| if l == a { 1.0 } else { -1.0 }).collect();
                    machines.push(((a, a), solve_binary(&gram, &idx, &yy, c)));
                }
            }
        }
        Svm {
            kernel,
            scheme,
            gamma,
            train: x.to_owned(),
            machines,
        }
    }

    pub fn n_features(&self) -> usize {
        self.train.ncols()
    }

    /// Raw decision values, one per binary machine.
    pub fn decision_values(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let k_row: Vec<f64> = self
            .train
            .rows()
            .into_iter()
            .map(|r| self.kernel.eval(self.gamma, r, x))
            .collect();
        self.machines.iter().map(|(_, m)| m.decision(&k_row)).collect()
    }

    /// One-vs-one: share of pairwise votes. One-vs-all: positive margins
    /// normalized to sum 1, or one-hot on the largest margin when none is positive.
    pub fn predict_proba_row(&self, x: ArrayView1<'_, f64>) -> [f64; N_STYLES] {
        let values = self.decision_values(x);
        let mut p = [0.0; N_STYLES];
        match self.scheme {
            MulticlassScheme::OneVsOne => {
                for (((a, b), _), v) in self.machines.iter().zip(&values) {
                    p[if *v > 0.0 { *a } else { *b }] += 1.0;
                }
            }
            MulticlassScheme::OneVsAll => {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for (((a, _), _), &v) in self.machines.iter().zip(&values) {
                    p[*a] = v.max(0.0);
                    if v > best.0 {
                        best = (v, *a);
                    }
                }
                if p.iter().sum::<f64>() <= 0.0 {
                    p[best.1] = 1.0;
                }
            }
        }
        let total: f64 = p.iter().sum();
        p.map(|v| v / total)
    }
}
