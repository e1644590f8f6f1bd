use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::N_STYLES;

/// Relative variance floor, as a fraction of the largest feature variance.
const VAR_SMOOTHING: f64 = 1e-9;

/// Gaussian Naive Bayes with one normal density per (class, feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    log_prior: Vec<Option<f64>>,
    means: Array2<f64>,
    vars: Array2<f64>,
}

impl GaussianNb {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize]) -> Self {
        let d = x.ncols();
        let n = x.nrows() as f64;
        let mut counts = [0usize; N_STYLES];
        let mut means = Array2::zeros((N_STYLES, d));
        let mut vars = Array2::zeros((N_STYLES, d));
        for (row, &label) in x.rows().into_iter().zip(y) {
            counts[label] += 1;
            let mut m = means.row_mut(label);
            m += &row;
        }
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                means.row_mut(k).mapv_inplace(|v| v / c as f64);
            }
        }
        for (row, &label) in x.rows().into_iter().zip(y) {
            let mu = means.row(label).to_owned();
            let mut v = vars.row_mut(label);
            v.zip_mut_with(&(&row - &mu), |acc, diff| *acc += diff * diff);
        }
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                vars.row_mut(k).mapv_inplace(|v| v / c as f64);
            }
        }

        let overall: Array1<f64> = x.var_axis(ndarray::Axis(0), 0.0);
        let floor = VAR_SMOOTHING * overall.iter().cloned().fold(0.0, f64::max).max(1e-12);
        vars.mapv_inplace(|v| v + floor);

        let log_prior = counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n).ln()))
            .collect();
        GaussianNb {
            log_prior,
            means,
            vars,
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.ncols()
    }

    pub fn predict_proba_row(&self, x: ArrayView1<'_, f64>) -> [f64; N_STYLES] {
        let mut log_post = [f64::NEG_INFINITY; N_STYLES];
        for (k, prior) in self.log_prior.iter().enumerate() {
            let Some(prior) = prior else { continue };
            let mut lp = *prior;
            for ((&xi, &mu), &var) in x.iter().zip(self.means.row(k)).zip(self.vars.row(k)) {
                let d = xi - mu;
                lp -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
            }
            log_post[k] = lp;
        }
        super::softmax_finite(&log_post)
    }
}
