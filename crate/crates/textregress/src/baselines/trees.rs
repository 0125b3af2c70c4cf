//! In-house regression trees: gradient boosting with the usual regularizers
//! (gamma = minimum split gain, min_child_weight = minimum child count,
//! row/feature subsampling, depth cap) plus a bagged random forest sharing
//! the same tree machinery. MISSING values route with the majority branch.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        /// Where MISSING rows go: the branch that received more training rows.
        missing_left: bool,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, fv: &[f64]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split { feature, threshold, missing_left, left, right } => {
                let v = fv[*feature];
                let go_left =
                    if v.is_nan() { *missing_left } else { v <= *threshold };
                if go_left {
                    left.predict(fv)
                } else {
                    right.predict(fv)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TreeParams {
    max_depth: usize,
    min_child_weight: usize,
    gamma: f64,
}

fn mean(targets: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| targets[i]).sum::<f64>() / rows.len() as f64
}

fn sse(targets: &[f64], rows: &[usize]) -> f64 {
    let m = mean(targets, rows);
    rows.iter().map(|&i| (targets[i] - m) * (targets[i] - m)).sum()
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    gain: f64,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

fn find_split(
    x: &[Vec<f64>],
    targets: &[f64],
    rows: &[usize],
    features: &[usize],
    params: &TreeParams,
) -> Option<BestSplit> {
    let parent_sse = sse(targets, rows);
    let mut best: Option<BestSplit> = None;
    for &f in features {
        let mut present: Vec<usize> =
            rows.iter().cloned().filter(|&i| !x[i][f].is_nan()).collect();
        let missing: Vec<usize> =
            rows.iter().cloned().filter(|&i| x[i][f].is_nan()).collect();
        if present.len() < 2 {
            continue;
        }
        present.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).unwrap());
        for cut in 1..present.len() {
            let lo = x[present[cut - 1]][f];
            let hi = x[present[cut]][f];
            if lo == hi {
                continue;
            }
            let threshold = 0.5 * (lo + hi);
            let mut left_rows: Vec<usize> = present[..cut].to_vec();
            let mut right_rows: Vec<usize> = present[cut..].to_vec();
            // Majority-branch routing of MISSING rows.
            let missing_left = left_rows.len() >= right_rows.len();
            if missing_left {
                left_rows.extend_from_slice(&missing);
            } else {
                right_rows.extend_from_slice(&missing);
            }
            if left_rows.len() < params.min_child_weight
                || right_rows.len() < params.min_child_weight
            {
                continue;
            }
            let gain = parent_sse - sse(targets, &left_rows) - sse(targets, &right_rows);
            if gain < params.gamma {
                continue;
            }
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    missing_left,
                    gain,
                    left_rows,
                    right_rows,
                });
            }
        }
    }
    best
}

fn grow(
    x: &[Vec<f64>],
    targets: &[f64],
    rows: Vec<usize>,
    features: &[usize],
    depth: usize,
    params: &TreeParams,
) -> Node {
    if depth >= params.max_depth || rows.len() < 2 * params.min_child_weight {
        return Node::Leaf(mean(targets, &rows));
    }
    match find_split(x, targets, &rows, features, params) {
        Some(s) => Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            missing_left: s.missing_left,
            left: Box::new(grow(x, targets, s.left_rows, features, depth + 1, params)),
            right: Box::new(grow(x, targets, s.right_rows, features, depth + 1, params)),
        },
        None => Node::Leaf(mean(targets, &rows)),
    }
}

fn sample_features(dim: usize, frac: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = ((dim as f64 * frac).ceil() as usize).clamp(1, dim);
    let mut all: Vec<usize> = (0..dim).collect();
    all.shuffle(rng);
    all.truncate(k);
    all.sort_unstable();
    all
}

fn sample_rows(n: usize, frac: f64, bootstrap: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        let k = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(rng);
        all.truncate(k);
        all
    }
}

// ---------------------------------------------------------------------------
// gradient-boosted trees

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub min_child_weight: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub max_depth: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            learning_rate: 0.1,
            gamma: 0.0,
            min_child_weight: 1,
            subsample: 1.0,
            colsample: 1.0,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbtModel {
    base: f64,
    trees: Vec<Node>,
    learning_rate: f64,
}

pub fn gbt_fit(train: &[(Vec<f64>, f64)], params: &GbtParams, seed: u64) -> Result<GbtModel> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("GBT needs training data".into()));
    }
    let n = train.len();
    let dim = train[0].0.len();
    let x: Vec<Vec<f64>> = train.iter().map(|(fv, _)| fv.clone()).collect();
    let y: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut rng = derive_rng(seed, &[0x6b7, 0x1]);
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_child_weight: params.min_child_weight,
        gamma: params.gamma,
    };
    let mut pred = vec![base; n];
    let mut trees = vec![];
    for _ in 0..params.n_trees {
        let residuals: Vec<f64> = y.iter().zip(&pred).map(|(yi, pi)| yi - pi).collect();
        let rows = sample_rows(n, params.subsample, false, &mut rng);
        let features = sample_features(dim, params.colsample, &mut rng);
        let tree = grow(&x, &residuals, rows, &features, 0, &tp);
        for i in 0..n {
            pred[i] += params.learning_rate * tree.predict(&x[i]);
        }
        trees.push(tree);
    }
    Ok(GbtModel { base, trees, learning_rate: params.learning_rate })
}

pub fn gbt_predict(model: &GbtModel, fv: &[f64]) -> f64 {
    model.base
        + model.learning_rate * model.trees.iter().map(|t| t.predict(fv)).sum::<f64>()
}

// ---------------------------------------------------------------------------
// random forest

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_child_weight: usize,
    pub colsample: f64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self { n_trees: 50, max_depth: 12, min_child_weight: 1, colsample: 0.7 }
    }
}

#[derive(Debug, Clone)]
pub struct RfModel {
    trees: Vec<Node>,
}

pub fn rf_fit(train: &[(Vec<f64>, f64)], params: &RfParams, seed: u64) -> Result<RfModel> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("random forest needs training data".into()));
    }
    let n = train.len();
    let dim = train[0].0.len();
    let x: Vec<Vec<f64>> = train.iter().map(|(fv, _)| fv.clone()).collect();
    let y: Vec<f64> = train.iter().map(|(_, y)| *y).collect();
    let mut rng = derive_rng(seed, &[0x6b7, 0x2]);
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_child_weight: params.min_child_weight,
        gamma: 0.0,
    };
    let trees = (0..params.n_trees)
        .map(|_| {
            let rows = sample_rows(n, 1.0, true, &mut rng);
            let features = sample_features(dim, params.colsample, &mut rng);
            grow(&x, &y, rows, &features, 0, &tp)
        })
        .collect();
    Ok(RfModel { trees })
}

pub fn rf_predict(model: &RfModel, fv: &[f64]) -> f64 {
    model.trees.iter().map(|t| t.predict(fv)).sum::<f64>() / model.trees.len() as f64
}

// ---------------------------------------------------------------------------
// grid search

/// Candidate lists for the boosted-tree sweep. The default is a desk-scale
/// subset of the usual 6-way grid.
#[derive(Debug, Clone)]
pub struct GbtGrid {
    pub learning_rate: Vec<f64>,
    pub gamma: Vec<f64>,
    pub min_child_weight: Vec<usize>,
    pub subsample: Vec<f64>,
    pub colsample: Vec<f64>,
    pub max_depth: Vec<usize>,
}

impl Default for GbtGrid {
    fn default() -> Self {
        Self {
            learning_rate: vec![0.1, 0.3],
            gamma: vec![0.0, 0.1],
            min_child_weight: vec![1, 3],
            subsample: vec![1.0],
            colsample: vec![1.0],
            max_depth: vec![3, 6],
        }
    }
}

impl GbtGrid {
    pub fn configs(&self) -> Vec<GbtParams> {
        let mut out = vec![];
        for &lr in &self.learning_rate {
            for &g in &self.gamma {
                for &mcw in &self.min_child_weight {
                    for &ss in &self.subsample {
                        for &cs in &self.colsample {
                            for &d in &self.max_depth {
                                out.push(GbtParams {
                                    learning_rate: lr,
                                    gamma: g,
                                    min_child_weight: mcw,
                                    subsample: ss,
                                    colsample: cs,
                                    max_depth: d,
                                    ..Default::default()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn validation_rmse<P>(predict: P, val: &[(Vec<f64>, f64)]) -> f64
where
    P: Fn(&[f64]) -> f64,
{
    let ss: f64 = val
        .iter()
        .map(|(fv, y)| {
            let p = predict(fv);
            (p - y) * (p - y)
        })
        .sum();
    (ss / val.len() as f64).sqrt()
}

/// Fits every grid configuration on `train` and keeps the one with minimal
/// validation RMSE (ties: first in grid order).
pub fn gbt_grid_search(
    train: &[(Vec<f64>, f64)],
    val: &[(Vec<f64>, f64)],
    grid: &GbtGrid,
    seed: u64,
) -> Result<(GbtModel, GbtParams, f64)> {
    if val.is_empty() {
        return Err(Error::InvalidConfig("grid search needs validation data".into()));
    }
    let mut best: Option<(GbtModel, GbtParams, f64)> = None;
    for params in grid.configs() {
        let model = gbt_fit(train, &params, seed)?;
        let err = validation_rmse(|fv| gbt_predict(&model, fv), val);
        if best.as_ref().map_or(true, |(_, _, e)| err < *e) {
            best = Some((model, params, err));
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("empty hyperparameter grid".into()))
}

pub fn rf_grid_search(
    train: &[(Vec<f64>, f64)],
    val: &[(Vec<f64>, f64)],
    grid: &[RfParams],
    seed: u64,
) -> Result<(RfModel, RfParams, f64)> {
    if val.is_empty() {
        return Err(Error::InvalidConfig("grid search needs validation data".into()));
    }
    let mut best: Option<(RfModel, RfParams, f64)> = None;
    for &params in grid {
        let model = rf_fit(train, &params, seed)?;
        let err = validation_rmse(|fv| rf_predict(&model, fv), val);
        if best.as_ref().map_or(true, |(_, _, e)| err < *e) {
            best = Some((model, params, err));
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("empty hyperparameter grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data(n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = derive_rng(seed, &[0x57e9]);
        (0..n)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..1.0);
                let b: f64 = rng.gen_range(0.0..1.0);
                let y = if a < 0.4 { 1.0 } else { 5.0 };
                (vec![a, b], y)
            })
            .collect()
    }

    #[test]
    fn depth_zero_tree_predicts_train_mean() {
        let train = step_data(30, 1);
        let params = GbtParams { n_trees: 1, learning_rate: 1.0, max_depth: 0, ..Default::default() };
        let model = gbt_fit(&train, &params, 0).unwrap();
        let mean = train.iter().map(|(_, y)| y).sum::<f64>() / train.len() as f64;
        assert!((gbt_predict(&model, &[0.2, 0.2]) - mean).abs() < 1e-12);
        assert!((gbt_predict(&model, &[0.9, 0.9]) - mean).abs() < 1e-12);
    }

    #[test]
    fn gbt_fits_step_function() {
        let train = step_data(200, 2);
        let params = GbtParams { max_depth: 3, learning_rate: 0.3, ..Default::default() };
        let model = gbt_fit(&train, &params, 0).unwrap();
        let rmse = validation_rmse(|fv| gbt_predict(&model, fv), &train);
        assert!(rmse < 0.01, "train RMSE {rmse}");
    }

    #[test]
    fn gamma_blocks_weak_splits() {
        let train = step_data(100, 3);
        // Huge minimum gain: no split clears the bar, every tree is a stump.
        let params =
            GbtParams { n_trees: 5, gamma: 1e9, learning_rate: 1.0, ..Default::default() };
        let model = gbt_fit(&train, &params, 0).unwrap();
        let p1 = gbt_predict(&model, &[0.1, 0.5]);
        let p2 = gbt_predict(&model, &[0.9, 0.5]);
        assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn min_child_weight_respected() {
        // With min_child_weight > n/2 no split can satisfy both children.
        let train = step_data(20, 4);
        let params = GbtParams {
            n_trees: 1,
            learning_rate: 1.0,
            min_child_weight: 11,
            ..Default::default()
        };
        let model = gbt_fit(&train, &params, 0).unwrap();
        assert_eq!(gbt_predict(&model, &[0.0, 0.0]), gbt_predict(&model, &[1.0, 1.0]));
    }

    #[test]
    fn missing_routes_with_majority_branch() {
        // Feature 0 splits the data 70/30; MISSING at predict time must take
        // the 70% branch.
        let mut train = vec![];
        for i in 0..70 {
            train.push((vec![0.1 + (i as f64) * 1e-4], 1.0));
        }
        for i in 0..30 {
            train.push((vec![0.9 + (i as f64) * 1e-4], 5.0));
        }
        let params = GbtParams {
            n_trees: 1,
            learning_rate: 1.0,
            max_depth: 1,
            ..Default::default()
        };
        let model = gbt_fit(&train, &params, 0).unwrap();
        let missing = gbt_predict(&model, &[f64::NAN]);
        let left = gbt_predict(&model, &[0.1]);
        assert!((missing - left).abs() < 1e-9, "missing {missing} vs majority {left}");
    }

    #[test]
    fn rf_fits_step_function_and_is_deterministic() {
        let train = step_data(200, 5);
        let model = rf_fit(&train, &RfParams::default(), 7).unwrap();
        let rmse = validation_rmse(|fv| rf_predict(&model, fv), &train);
        assert!(rmse < 0.5, "train RMSE {rmse}");
        let again = rf_fit(&train, &RfParams::default(), 7).unwrap();
        assert_eq!(rf_predict(&model, &[0.3, 0.3]), rf_predict(&again, &[0.3, 0.3]));
    }

    #[test]
    fn grid_search_picks_min_validation_error() {
        let train = step_data(120, 6);
        let val = step_data(60, 7);
        let grid = GbtGrid {
            learning_rate: vec![0.01, 0.3],
            gamma: vec![0.0],
            min_child_weight: vec![1],
            subsample: vec![1.0],
            colsample: vec![1.0],
            max_depth: vec![2],
        };
        let (_, picked, best_err) = gbt_grid_search(&train, &val, &grid, 0).unwrap();
        // Brute-force oracle: re-evaluate every configuration independently.
        let mut errs = vec![];
        for params in grid.configs() {
            let model = gbt_fit(&train, &params, 0).unwrap();
            errs.push((params, validation_rmse(|fv| gbt_predict(&model, fv), &val)));
        }
        let oracle = errs
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(picked, oracle.0);
        assert!((best_err - oracle.1).abs() < 1e-12);
    }
}
