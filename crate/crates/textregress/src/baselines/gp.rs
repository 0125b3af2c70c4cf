//! Gaussian-process regressor: quantile-Gaussianized targets, Matern-5/2 ARD
//! kernel, and a MAP fit of (amplitude, lengthscales, noise) under truncated
//! log-normal priors via a small L-BFGS on the log-parameters.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal as NormalDist};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// Log-space truncation bound of the hyperparameter priors: each of
/// amplitude, lengthscale and noise lives in [e^-4, e^4].
pub const LOG_BOUND: f64 = 4.0;

// ---------------------------------------------------------------------------
// y-warp

/// Empirical-quantile map of the training objectives onto a standard normal.
/// Forward interpolates monotonically between (y_i, z_i) anchor pairs;
/// outside the training range it clamps to the extreme anchors.
#[derive(Debug, Clone)]
pub struct YWarper {
    /// Unique sorted training values.
    ys: Vec<f64>,
    /// Matching normal scores (mid-rank based, strictly increasing).
    zs: Vec<f64>,
    pub degenerate: bool,
}

pub fn y_warp(train_y: &[f64]) -> Result<YWarper> {
    if train_y.is_empty() {
        return Err(Error::InvalidConfig("y-warp needs observations".into()));
    }
    let n = train_y.len() as f64;
    let mut sorted = train_y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::standard();
    // Collapse ties onto their mid-rank so the map stays a function.
    let mut ys = vec![];
    let mut zs = vec![];
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        ys.push(sorted[i]);
        zs.push(normal.inverse_cdf((mid_rank - 0.5) / n));
        i = j + 1;
    }
    let degenerate = ys.len() < 2;
    if degenerate {
        zs[0] = 0.0;
    }
    Ok(YWarper { ys, zs, degenerate })
}

impl YWarper {
    pub fn forward(&self, y: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        match self.ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => self.zs[i],
            Err(0) => self.zs[0],
            Err(i) if i == self.ys.len() => *self.zs.last().unwrap(),
            Err(i) => {
                let t = (y - self.ys[i - 1]) / (self.ys[i] - self.ys[i - 1]);
                self.zs[i - 1] + t * (self.zs[i] - self.zs[i - 1])
            }
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        if self.degenerate {
            return self.ys[0];
        }
        match self.zs.binary_search_by(|v| v.partial_cmp(&z).unwrap()) {
            Ok(i) => self.ys[i],
            Err(0) => self.ys[0],
            Err(i) if i == self.zs.len() => *self.ys.last().unwrap(),
            Err(i) => {
                let t = (z - self.zs[i - 1]) / (self.zs[i] - self.zs[i - 1]);
                self.ys[i - 1] + t * (self.ys[i] - self.ys[i - 1])
            }
        }
    }
}

// ---------------------------------------------------------------------------
// kernel and marginal likelihood

#[derive(Debug, Clone)]
pub struct GpHyperparams {
    pub amplitude: f64,
    pub lengthscales: Vec<f64>,
    pub noise: f64,
}

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn kernel_matrix(x: &[Vec<f64>], hp: &GpHyperparams) -> Array2<f64> {
    let n = x.len();
    let a2 = hp.amplitude * hp.amplitude;
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = a2 * matern52(scaled_dist(&x[i], &x[j], &hp.lengthscales));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
        k[[i, i]] += hp.noise * hp.noise;
    }
    k
}

/// Lower-triangular Cholesky with escalating diagonal jitter (1e-10 to 1e-4).
fn cholesky_jittered(k: &Array2<f64>) -> Result<Array2<f64>> {
    let n = k.nrows();
    let mut jitter = 1e-10;
    loop {
        let mut a = k.clone();
        for i in 0..n {
            a[[i, i]] += jitter;
        }
        if let Some(l) = cholesky(&a) {
            return Ok(l);
        }
        jitter *= 10.0;
        if jitter > 1e-4 {
            return Err(Error::Numerical("kernel matrix is not positive definite".into()));
        }
    }
}

fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for t in 0..j {
                s -= l[[i, t]] * l[[j, t]];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for j in 0..i {
            let d = l[[i, j]] * x[j];
            x[i] -= d;
        }
        x[i] /= l[[i, i]];
    }
    x
}

fn solve_upper_t(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    // Solves L^T x = b for lower-triangular L.
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for j in i + 1..n {
            let d = l[[j, i]] * x[j];
            x[i] -= d;
        }
        x[i] /= l[[i, i]];
    }
    x
}

fn solve_chol(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    solve_upper_t(l, &solve_lower(l, b))
}

fn k_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        inv.column_mut(j).assign(&solve_chol(l, &e));
    }
    inv
}

/// Negative log posterior (marginal likelihood plus the log-space normal
/// prior) and its gradient with respect to theta = [log amplitude,
/// log lengthscales..., log noise].
fn neg_log_posterior(
    x: &[Vec<f64>],
    z: &Array1<f64>,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let d = x[0].len();
    let hp = GpHyperparams {
        amplitude: theta[0].exp(),
        lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
        noise: theta[d + 1].exp(),
    };
    let n = x.len();
    let k = kernel_matrix(x, &hp);
    let l = cholesky_jittered(&k)?;
    let beta = solve_chol(&l, z);
    let logdet: f64 = (0..n).map(|i| 2.0 * l[[i, i]].ln()).sum();
    let nll = 0.5 * z.dot(&beta)
        + 0.5 * logdet
        + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let prior: f64 = theta.iter().map(|t| 0.5 * t * t).sum();

    // dNLL/dtheta_k = 0.5 tr((K^-1 - beta beta^T) dK/dtheta_k)
    let kinv = k_inverse(&l);
    let a2 = hp.amplitude * hp.amplitude;
    let sqrt5 = 5f64.sqrt();
    let mut grad = vec![0.0; theta.len()];
    for i in 0..n {
        for j in 0..n {
            let w = kinv[[i, j]] - beta[i] * beta[j];
            let r = scaled_dist(&x[i], &x[j], &hp.lengthscales);
            let kern = a2 * matern52(r);
            // d/d log(amplitude): 2 * a^2 * matern
            grad[0] += 0.5 * w * 2.0 * kern;
            // d/d log(lengthscale_m): a^2 * (5/3)(1 + sqrt5 r) e^{-sqrt5 r} * d_m^2 / l_m^2
            let common = a2 * (5.0 / 3.0) * (1.0 + sqrt5 * r) * (-sqrt5 * r).exp();
            for m in 0..d {
                let dm = (x[i][m] - x[j][m]) / hp.lengthscales[m];
                grad[1 + m] += 0.5 * w * common * dm * dm;
            }
            if i == j {
                grad[d + 1] += 0.5 * w * 2.0 * hp.noise * hp.noise;
            }
        }
    }
    for (g, t) in grad.iter_mut().zip(theta) {
        *g += t; // prior gradient
    }
    Ok((nll + prior, grad))
}

// ---------------------------------------------------------------------------
// L-BFGS

/// Minimizes f over the [-LOG_BOUND, LOG_BOUND]^d box with a limited-memory
/// BFGS direction and an Armijo backtracking line search; iterates project
/// back into the box. Returns the best point and the accepted objective
/// trace (strictly non-increasing).
fn lbfgs_box<Func>(mut theta: Vec<f64>, mut f: Func) -> Result<(Vec<f64>, Vec<f64>)>
where
    Func: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let m = 5;
    let max_iter = 100;
    let (mut fx, mut gx) = f(&theta)?;
    let mut trace = vec![fx];
    let mut s_hist: Vec<Vec<f64>> = vec![];
    let mut y_hist: Vec<Vec<f64>> = vec![];
    for _ in 0..max_iter {
        let gnorm = gx.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-6 {
            break;
        }
        // Two-loop recursion.
        let mut q = gx.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0
                / s_hist[i].iter().zip(&y_hist[i]).map(|(s, y)| s * y).sum::<f64>();
            let a = rho * s_hist[i].iter().zip(&q).map(|(s, qi)| s * qi).sum::<f64>();
            alphas[i] = a;
            for (qi, yi) in q.iter_mut().zip(&y_hist[i]) {
                *qi -= a * yi;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let scale = sy / yy;
            for qi in q.iter_mut() {
                *qi *= scale;
            }
        }
        for i in 0..s_hist.len() {
            let rho = 1.0
                / s_hist[i].iter().zip(&y_hist[i]).map(|(s, y)| s * y).sum::<f64>();
            let b = rho * y_hist[i].iter().zip(&q).map(|(y, qi)| y * qi).sum::<f64>();
            for (qi, si) in q.iter_mut().zip(&s_hist[i]) {
                *qi += (alphas[i] - b) * si;
            }
        }
        let dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let slope: f64 = dir.iter().zip(&gx).map(|(d, g)| d * g).sum();
        let (dir, slope) = if slope < 0.0 {
            (dir, slope)
        } else {
            // Fall back to steepest descent if curvature info went bad.
            let d: Vec<f64> = gx.iter().map(|g| -g).collect();
            let s = -gnorm * gnorm;
            (d, s)
        };
        // Armijo backtracking with box projection.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&dir)
                .map(|(t, d)| (t + step * d).clamp(-LOG_BOUND, LOG_BOUND))
                .collect();
            match f(&cand) {
                Ok((fc, gc)) if fc <= fx + 1e-4 * step * slope => {
                    accepted = Some((cand, fc, gc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((next, fn_, gn)) = accepted else {
            break;
        };
        let s_vec: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy: f64 = s_vec.iter().zip(&y_vec).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            s_hist.push(s_vec);
            y_hist.push(y_vec);
            if s_hist.len() > m {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        theta = next;
        fx = fn_;
        gx = gn;
        trace.push(fx);
    }
    Ok((theta, trace))
}

// ---------------------------------------------------------------------------
// model

#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    beta: Array1<f64>,
    chol: Array2<f64>,
    pub hyperparams: GpHyperparams,
    pub warper: YWarper,
    /// Accepted MAP objective values, non-increasing.
    pub objective_trace: Vec<f64>,
}

/// MISSING features are imputed to the hypercube midpoint before any kernel
/// evaluation.
fn impute(fv: &[f64]) -> Vec<f64> {
    fv.iter().map(|&v| if v.is_nan() { 0.5 } else { v }).collect()
}

/// Fits the posterior with fixed hyperparameters (no MAP optimization).
pub fn gp_fit_with(train: &[(Vec<f64>, f64)], hyperparams: GpHyperparams) -> Result<GpModel> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("GP needs training data".into()));
    }
    let x: Vec<Vec<f64>> = train.iter().map(|(fv, _)| impute(fv)).collect();
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let warper = y_warp(&ys)?;
    let z = Array1::from_iter(ys.iter().map(|&y| warper.forward(y)));
    let k = kernel_matrix(&x, &hyperparams);
    let chol = cholesky_jittered(&k)?;
    let beta = solve_chol(&chol, &z);
    Ok(GpModel { x, beta, chol, hyperparams, warper, objective_trace: vec![] })
}

pub fn gp_fit_map(train: &[(Vec<f64>, f64)], seed: u64) -> Result<GpModel> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("GP needs training data".into()));
    }
    let x: Vec<Vec<f64>> = train.iter().map(|(fv, _)| impute(fv)).collect();
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let warper = y_warp(&ys)?;
    let z = Array1::from_iter(ys.iter().map(|&y| warper.forward(y)));
    let d = x[0].len();
    let _ = seed; // the MAP fit itself is deterministic
    let theta0 = vec![0.0; d + 2];
    let (theta, trace) = lbfgs_box(theta0, |t| neg_log_posterior(&x, &z, t))?;
    let hyperparams = GpHyperparams {
        amplitude: theta[0].exp(),
        lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
        noise: theta[d + 1].exp(),
    };
    let k = kernel_matrix(&x, &hyperparams);
    let chol = cholesky_jittered(&k)?;
    let beta = solve_chol(&chol, &z);
    Ok(GpModel { x, beta, chol, hyperparams, warper, objective_trace: trace })
}

/// Posterior in warped space at one point: (mean, sd of latent f).
pub fn gp_posterior(model: &GpModel, fv: &[f64]) -> (f64, f64) {
    let q = impute(fv);
    let a2 = model.hyperparams.amplitude * model.hyperparams.amplitude;
    let kstar = Array1::from_iter(model.x.iter().map(|xi| {
        a2 * matern52(scaled_dist(&q, xi, &model.hyperparams.lengthscales))
    }));
    let mean = kstar.dot(&model.beta);
    let v = solve_lower(&model.chol, &kstar);
    let var = (a2 - v.dot(&v)).max(0.0);
    (mean, var.sqrt())
}

/// Prediction in the original objective space: the mean and SD of 1000
/// posterior samples pushed through the inverse warp.
pub fn gp_predict(model: &GpModel, fv: &[f64], seed: u64) -> (f64, f64) {
    let (mean, sd) = gp_posterior(model, fv);
    let mut rng = derive_rng(seed, &[0x6b, 0x5a]);
    let dist = NormalDist::new(mean, sd.max(1e-12)).unwrap();
    let n = 1000;
    let unwarped: Vec<f64> =
        (0..n).map(|_| model.warper.inverse(dist.sample(&mut rng))).collect();
    let m = unwarped.iter().sum::<f64>() / n as f64;
    let var = unwarped.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}
