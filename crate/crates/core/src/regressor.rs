//! Built-in regressors behind the structural-equation interface.
//!
//! Two built-ins cover the artifact: ordinary least squares with a small
//! ridge stabilizer, and a compact feed-forward network (two ReLU hidden
//! layers) trained by seeded mini-batch Adam. External predictors plug in by
//! implementing [`FittedRegressor`].

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A fitted point predictor over a fixed-dimension feature vector.
pub trait FittedRegressor: Send + Sync {
    fn dim(&self) -> usize;
    fn predict(&self, features: &[f64]) -> Result<f64>;
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Linear model `intercept + coefs . x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefs: Vec<f64>,
    pub intercept: f64,
}

impl FittedRegressor for LinearModel {
    fn dim(&self) -> usize {
        self.coefs.len()
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        check_dim(self.coefs.len(), features.len())?;
        let mut acc = self.intercept;
        for (c, x) in self.coefs.iter().zip(features) {
            acc += c * x;
        }
        Ok(acc)
    }
}

/// Least squares with an unpenalized intercept and ridge `lambda` on the
/// remaining coefficients. `lambda = 0` surfaces exact collinearity as
/// [`Error::SingularDesign`].
pub fn fit_ols(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<LinearModel> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p = rows[0].len();
    let n = rows.len();
    check_dim(n, targets.len())?;
    // Augmented design [x, 1]; normal equations (X'X + lambda*I_p') b = X'y.
    let mut xtx = DMatrix::<f64>::zeros(p + 1, p + 1);
    let mut xty = DVector::<f64>::zeros(p + 1);
    let mut aug = vec![0.0; p + 1];
    for (row, &y) in rows.iter().zip(targets) {
        check_dim(p, row.len())?;
        aug[..p].copy_from_slice(row);
        aug[p] = 1.0;
        for i in 0..=p {
            xty[i] += aug[i] * y;
            for j in i..=p {
                xtx[(i, j)] += aug[i] * aug[j];
            }
        }
    }
    for i in 0..=p {
        for j in 0..i {
            xtx[(i, j)] = xtx[(j, i)];
        }
    }
    for i in 0..p {
        xtx[(i, i)] += lambda;
    }
    let chol = Cholesky::new(xtx).ok_or(Error::SingularDesign)?;
    let beta = chol.solve(&xty);
    Ok(LinearModel {
        coefs: beta.as_slice()[..p].to_vec(),
        intercept: beta[p],
    })
}

/// Hyperparameters for the feed-forward regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            width: 32,
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Feed-forward network with two ReLU hidden layers and standardized inputs
/// and target. Prediction is a pure function of the stored parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    dim: usize,
    width: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: f64,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl MlpModel {
    #[allow(clippy::needless_range_loop)]
    fn forward(&self, x: &[f64], h1: &mut [f64], h2: &mut [f64]) -> f64 {
        let (d, w) = (self.dim, self.width);
        for i in 0..w {
            let mut z = self.b1[i];
            for j in 0..d {
                z += self.w1[i * d + j] * (x[j] - self.x_mean[j]) / self.x_scale[j];
            }
            h1[i] = z.max(0.0);
        }
        for i in 0..w {
            let mut z = self.b2[i];
            for j in 0..w {
                z += self.w2[i * w + j] * h1[j];
            }
            h2[i] = z.max(0.0);
        }
        let mut out = self.b3;
        for j in 0..w {
            out += self.w3[j] * h2[j];
        }
        out * self.y_scale + self.y_mean
    }
}

impl FittedRegressor for MlpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        check_dim(self.dim, features.len())?;
        let mut h1 = vec![0.0; self.width];
        let mut h2 = vec![0.0; self.width];
        Ok(self.forward(features, &mut h1, &mut h2))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Train the feed-forward regressor; fully deterministic for a given config.
#[allow(clippy::needless_range_loop)]
pub fn fit_mlp(rows: &[Vec<f64>], targets: &[f64], cfg: &MlpConfig) -> Result<MlpModel> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = rows.len();
    let d = rows[0].len();
    check_dim(n, targets.len())?;
    let w = cfg.width;

    let mut x_mean = vec![0.0; d];
    let mut x_scale = vec![0.0; d];
    for row in rows {
        check_dim(d, row.len())?;
        for j in 0..d {
            x_mean[j] += row[j];
        }
    }
    for m in x_mean.iter_mut() {
        *m /= n as f64;
    }
    for row in rows {
        for j in 0..d {
            x_scale[j] += (row[j] - x_mean[j]).powi(2);
        }
    }
    for s in x_scale.iter_mut() {
        *s = (*s / n as f64).sqrt().max(1e-12);
    }
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let y_scale = (targets.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(1e-12);

    let xs: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - x_mean[j]) / x_scale[j]).collect())
        .collect();
    let ys: Vec<f64> = targets.iter().map(|y| (y - y_mean) / y_scale).collect();

    let mut rng = stream_rng(cfg.seed, "mlp/init");
    let mut init = |fan_in: usize, fan_out: usize, count: usize| -> Vec<f64> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
    };
    let mut w1 = init(d, w, w * d);
    let mut b1 = vec![0.0; w];
    let mut w2 = init(w, w, w * w);
    let mut b2 = vec![0.0; w];
    let mut w3 = init(w, 1, w);
    let mut b3 = vec![0.0; 1];

    let mut opt_w1 = Adam::new(w * d);
    let mut opt_b1 = Adam::new(w);
    let mut opt_w2 = Adam::new(w * w);
    let mut opt_b2 = Adam::new(w);
    let mut opt_w3 = Adam::new(w);
    let mut opt_b3 = Adam::new(1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = stream_rng(cfg.seed, "mlp/shuffle");
    let batch = cfg.batch_size.max(1);

    let mut g_w1 = vec![0.0; w * d];
    let mut g_b1 = vec![0.0; w];
    let mut g_w2 = vec![0.0; w * w];
    let mut g_b2 = vec![0.0; w];
    let mut g_w3 = vec![0.0; w];
    let mut g_b3 = vec![0.0; 1];
    let mut z1 = vec![0.0; w];
    let mut h1 = vec![0.0; w];
    let mut z2 = vec![0.0; w];
    let mut h2 = vec![0.0; w];
    let mut d1 = vec![0.0; w];
    let mut d2 = vec![0.0; w];

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            g_w1.iter_mut().for_each(|g| *g = 0.0);
            g_b1.iter_mut().for_each(|g| *g = 0.0);
            g_w2.iter_mut().for_each(|g| *g = 0.0);
            g_b2.iter_mut().for_each(|g| *g = 0.0);
            g_w3.iter_mut().for_each(|g| *g = 0.0);
            g_b3[0] = 0.0;
            for &idx in chunk {
                let x = &xs[idx];
                for i in 0..w {
                    let mut z = b1[i];
                    for j in 0..d {
                        z += w1[i * d + j] * x[j];
                    }
                    z1[i] = z;
                    h1[i] = z.max(0.0);
                }
                for i in 0..w {
                    let mut z = b2[i];
                    for j in 0..w {
                        z += w2[i * w + j] * h1[j];
                    }
                    z2[i] = z;
                    h2[i] = z.max(0.0);
                }
                let mut out = b3[0];
                for j in 0..w {
                    out += w3[j] * h2[j];
                }
                let dout = (out - ys[idx]) / chunk.len() as f64;
                g_b3[0] += dout;
                for j in 0..w {
                    g_w3[j] += dout * h2[j];
                    d2[j] = if z2[j] > 0.0 { dout * w3[j] } else { 0.0 };
                }
                for i in 0..w {
                    if d2[i] != 0.0 {
                        g_b2[i] += d2[i];
                        for j in 0..w {
                            g_w2[i * w + j] += d2[i] * h1[j];
                        }
                    }
                }
                for j in 0..w {
                    let mut acc = 0.0;
                    for i in 0..w {
                        if d2[i] != 0.0 {
                            acc += w2[i * w + j] * d2[i];
                        }
                    }
                    d1[j] = if z1[j] > 0.0 { acc } else { 0.0 };
                }
                for i in 0..w {
                    if d1[i] != 0.0 {
                        g_b1[i] += d1[i];
                        for j in 0..d {
                            g_w1[i * d + j] += d1[i] * x[j];
                        }
                    }
                }
            }
            opt_w1.step(&mut w1, &g_w1, cfg.learning_rate);
            opt_b1.step(&mut b1, &g_b1, cfg.learning_rate);
            opt_w2.step(&mut w2, &g_w2, cfg.learning_rate);
            opt_b2.step(&mut b2, &g_b2, cfg.learning_rate);
            opt_w3.step(&mut w3, &g_w3, cfg.learning_rate);
            opt_b3.step(&mut b3, &g_b3, cfg.learning_rate);
        }
    }

    Ok(MlpModel {
        dim: d,
        width: w,
        w1,
        b1,
        w2,
        b2,
        w3,
        b3: b3[0],
        x_mean,
        x_scale,
        y_mean,
        y_scale,
    })
}

/// Built-in regressor selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RegressorKind {
    Ols { ridge: f64 },
    Mlp(MlpConfig),
}

impl Default for RegressorKind {
    fn default() -> Self {
        RegressorKind::Ols { ridge: 1e-6 }
    }
}

impl RegressorKind {
    pub fn mlp() -> Self {
        RegressorKind::Mlp(MlpConfig::default())
    }

    pub fn fit(&self, rows: &[Vec<f64>], targets: &[f64]) -> Result<Arc<dyn FittedRegressor>> {
        match self {
            RegressorKind::Ols { ridge } => Ok(Arc::new(fit_ols(rows, targets, *ridge)?)),
            RegressorKind::Mlp(cfg) => Ok(Arc::new(fit_mlp(rows, targets, cfg)?)),
        }
    }
}
