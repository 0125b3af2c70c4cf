//! Dense ReLU regressor over the hypercube features. MISSING entries are
//! replaced by a learned per-dimension fill value that trains jointly with
//! the network weights.

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, Copy)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 256, lr: 1e-2, epochs: 100, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    /// Learned fill value per feature dimension, substituted for NaN.
    pub v_fill: Array1<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array1<f64>,
    b3: f64,
    y_mean: f64,
    y_sd: f64,
    degenerate: bool,
}

struct Grads {
    v: Array1<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array1<f64>,
    b3: f64,
}

fn fill_missing(x: &Array2<f64>, v: &Array1<f64>) -> (Array2<f64>, Vec<(usize, usize)>) {
    let mut filled = x.clone();
    let mut holes = vec![];
    for ((i, j), cell) in filled.indexed_iter_mut() {
        if cell.is_nan() {
            *cell = v[j];
            holes.push((i, j));
        }
    }
    (filled, holes)
}

impl MlpModel {
    fn init(dim: usize, config: &MlpConfig) -> Self {
        let mut rng = derive_rng(config.seed, &[0xb11d, 0x1]);
        let h = config.hidden;
        let mut mat = |rows: usize, cols: usize| {
            let std = (2.0 / (rows + cols) as f64).sqrt();
            let dist = Normal::new(0.0, std).unwrap();
            Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
        };
        let w1 = mat(dim, h);
        let w2 = mat(h, h);
        let w3 = {
            let std = (2.0 / (h + 1) as f64).sqrt();
            let dist = Normal::new(0.0, std).unwrap();
            Array1::from_shape_fn(h, |_| dist.sample(&mut rng))
        };
        Self {
            v_fill: Array1::from_elem(dim, 0.5),
            w1,
            b1: Array1::zeros(h),
            w2,
            b2: Array1::zeros(h),
            w3,
            b3: 0.0,
            y_mean: 0.0,
            y_sd: 1.0,
            degenerate: false,
        }
    }

    /// Standardized-space prediction for a feature matrix.
    fn forward(&self, x: &Array2<f64>) -> Array1<f64> {
        let (filled, _) = fill_missing(x, &self.v_fill);
        let mut h1 = filled.dot(&self.w1) + &self.b1;
        h1.mapv_inplace(|v| v.max(0.0));
        let mut h2 = h1.dot(&self.w2) + &self.b2;
        h2.mapv_inplace(|v| v.max(0.0));
        h2.dot(&self.w3) + self.b3
    }

    /// Mean-squared error on standardized targets plus its full gradient.
    fn loss_and_grad(&self, x: &Array2<f64>, z: &Array1<f64>) -> (f64, Grads) {
        let n = x.nrows() as f64;
        let (filled, holes) = fill_missing(x, &self.v_fill);
        let mut h1 = filled.dot(&self.w1) + &self.b1;
        let a1 = h1.clone();
        h1.mapv_inplace(|v| v.max(0.0));
        let mut h2 = h1.dot(&self.w2) + &self.b2;
        let a2 = h2.clone();
        h2.mapv_inplace(|v| v.max(0.0));
        let pred = h2.dot(&self.w3) + self.b3;
        let err = &pred - z;
        let loss = err.iter().map(|e| e * e).sum::<f64>() / n;

        let d_pred = err.mapv(|e| 2.0 * e / n);
        let w3_grad = h2.t().dot(&d_pred);
        let b3_grad = d_pred.sum();
        let mut d_h2 = d_pred
            .insert_axis(Axis(1))
            .dot(&self.w3.clone().insert_axis(Axis(0)));
        d_h2.zip_mut_with(&a2, |d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
        let w2_grad = h1.t().dot(&d_h2);
        let b2_grad = d_h2.sum_axis(Axis(0));
        let mut d_h1 = d_h2.dot(&self.w2.t());
        d_h1.zip_mut_with(&a1, |d, &a| {
            if a <= 0.0 {
                *d = 0.0;
            }
        });
        let w1_grad = filled.t().dot(&d_h1);
        let b1_grad = d_h1.sum_axis(Axis(0));
        let d_x = d_h1.dot(&self.w1.t());
        let mut v_grad = Array1::zeros(self.v_fill.raw_dim());
        for (i, j) in holes {
            v_grad[j] += d_x[[i, j]];
        }
        (
            loss,
            Grads {
                v: v_grad,
                w1: w1_grad,
                b1: b1_grad,
                w2: w2_grad,
                b2: b2_grad,
                w3: w3_grad,
                b3: b3_grad,
            },
        )
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            **p -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn flatten_params(model: &mut MlpModel) -> Vec<&mut f64> {
    let mut out: Vec<&mut f64> = vec![];
    out.extend(model.v_fill.iter_mut());
    out.extend(model.w1.iter_mut());
    out.extend(model.b1.iter_mut());
    out.extend(model.w2.iter_mut());
    out.extend(model.b2.iter_mut());
    out.extend(model.w3.iter_mut());
    out.push(&mut model.b3);
    out
}

fn flatten_grads(g: &Grads) -> Vec<f64> {
    let mut out: Vec<f64> = vec![];
    out.extend(g.v.iter());
    out.extend(g.w1.iter());
    out.extend(g.b1.iter());
    out.extend(g.w2.iter());
    out.extend(g.b2.iter());
    out.extend(g.w3.iter());
    out.push(g.b3);
    out
}

/// Full-batch Adam on mean-squared error over standardized targets.
pub fn mlp_fit(train: &[(Vec<f64>, f64)], config: &MlpConfig) -> Result<MlpModel> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("MLP needs training data".into()));
    }
    let dim = train[0].0.len();
    let n = train.len();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| train[i].0[j]);
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let y_sd =
        (ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n as f64).sqrt();

    let mut model = MlpModel::init(dim, config);
    model.y_mean = y_mean;
    if y_sd == 0.0 {
        // Constant objective: standardization is undefined, predict the mean.
        model.degenerate = true;
        return Ok(model);
    }
    model.y_sd = y_sd;
    let z = Array1::from_iter(ys.iter().map(|y| (y - y_mean) / y_sd));
    let n_params = flatten_params(&mut model).len();
    let mut opt = Adam::new(n_params);
    for _ in 0..config.epochs {
        let (_, grads) = model.loss_and_grad(&x, &z);
        let flat_g = flatten_grads(&grads);
        let mut flat_p = flatten_params(&mut model);
        opt.step(&mut flat_p, &flat_g, config.lr);
    }
    Ok(model)
}

/// Training loss and its gradient over every parameter, flattened in the
/// fixed order (v_fill, w1, b1, w2, b2, w3, b3). Targets are standardized
/// with the model's stored mean/sd, exactly as during fitting; exposed so
/// external gradient checks can compare against finite differences.
pub fn mlp_loss_and_flat_grad(model: &MlpModel, train: &[(Vec<f64>, f64)]) -> (f64, Vec<f64>) {
    let dim = model.v_fill.len();
    let n = train.len();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| train[i].0[j]);
    let z = Array1::from_iter(train.iter().map(|(_, y)| (y - model.y_mean) / model.y_sd));
    let (loss, grads) = model.loss_and_grad(&x, &z);
    (loss, flatten_grads(&grads))
}

/// Mutable views of every parameter, in the same order as
/// [`mlp_loss_and_flat_grad`]'s gradient.
pub fn mlp_flat_params(model: &mut MlpModel) -> Vec<&mut f64> {
    flatten_params(model)
}

pub fn mlp_predict(model: &MlpModel, fv: &[f64]) -> f64 {
    if model.degenerate {
        return model.y_mean;
    }
    let x = Array2::from_shape_fn((1, fv.len()), |(_, j)| fv[j]);
    let z = model.forward(&x)[0];
    z * model.y_sd + model.y_mean
}
