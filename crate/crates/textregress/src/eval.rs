//! Study-error metric, ranking metrics, uncertainty correlations and the
//! aggregations behind the experiment reports.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-study evaluation: normalized MAE plus rank agreement on the test
/// split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyEvalResult {
    pub study_id: String,
    pub study_error: f64,
    pub per_trial_errors: Vec<f64>,
    pub kendall_tau: f64,
    pub spearman: f64,
    pub pearson: f64,
    /// True when predictions or labels were constant, making the rank
    /// metrics undefined (they are reported as 0).
    pub rank_degenerate: bool,
    pub n_test: usize,
}

fn check_aligned(preds: &[f64], ys: &[f64]) -> Result<()> {
    if preds.len() != ys.len() {
        return Err(Error::InvalidConfig(format!(
            "got {} predictions for {} labels",
            preds.len(),
            ys.len()
        )));
    }
    Ok(())
}

/// Per-trial normalized absolute errors, each clipped at 1.0.
pub fn per_trial_errors(preds: &[f64], ys: &[f64], y_min: f64, y_max: f64) -> Result<Vec<f64>> {
    check_aligned(preds, ys)?;
    if y_max < y_min || !y_min.is_finite() || !y_max.is_finite() {
        return Err(Error::InvalidConfig(format!("bad y range [{y_min}, {y_max}]")));
    }
    let range = y_max - y_min;
    Ok(preds
        .iter()
        .zip(ys)
        .map(|(&p, &y)| {
            if range == 0.0 {
                // Degenerate study: all labels identical. Exactly-right
                // predictions cost nothing, anything else costs the clip.
                if p == y {
                    0.0
                } else {
                    1.0
                }
            } else {
                ((p - y).abs() / range).min(1.0)
            }
        })
        .collect())
}

/// Mean clipped normalized absolute error over the test trials.
pub fn study_error(preds: &[f64], ys: &[f64], y_min: f64, y_max: f64) -> Result<f64> {
    let errs = per_trial_errors(preds, ys, y_min, y_max)?;
    if errs.is_empty() {
        return Err(Error::InvalidConfig("no test trials".into()));
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

pub fn evaluate_study(
    study_id: impl Into<String>,
    preds: &[f64],
    ys: &[f64],
    y_min: f64,
    y_max: f64,
) -> Result<StudyEvalResult> {
    let per_trial = per_trial_errors(preds, ys, y_min, y_max)?;
    if per_trial.is_empty() {
        return Err(Error::InvalidConfig("no test trials".into()));
    }
    let error = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
    let (kendall_tau, spearman, rank_degenerate) = if preds.len() >= 2 {
        let r = ranking_metrics(preds, ys)?;
        (r.kendall_tau, r.spearman, r.degenerate)
    } else {
        (0.0, 0.0, true)
    };
    Ok(StudyEvalResult {
        study_id: study_id.into(),
        study_error: error,
        kendall_tau,
        spearman,
        pearson: pearson(preds, ys),
        rank_degenerate,
        n_test: per_trial.len(),
        per_trial_errors: per_trial,
    })
}

/// Unweighted mean of study errors.
pub fn mean_study_error(results: &[StudyEvalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidConfig("no study results".into()));
    }
    Ok(results.iter().map(|r| r.study_error).sum::<f64>() / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankMetrics {
    pub kendall_tau: f64,
    pub spearman: f64,
    pub degenerate: bool,
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Kendall's τ-b and Spearman's ρ. Constant inputs make both undefined;
/// they come back as 0 with the degenerate flag set.
pub fn ranking_metrics(preds: &[f64], ys: &[f64]) -> Result<RankMetrics> {
    check_aligned(preds, ys)?;
    let n = preds.len();
    if n < 2 {
        return Err(Error::InvalidConfig("ranking needs at least 2 points".into()));
    }
    if is_constant(preds) || is_constant(ys) {
        return Ok(RankMetrics { kendall_tau: 0.0, spearman: 0.0, degenerate: true });
    }
    Ok(RankMetrics {
        kendall_tau: kendall_tau_b(preds, ys),
        spearman: pearson(&mid_ranks(preds), &mid_ranks(ys)),
        degenerate: false,
    })
}

fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].partial_cmp(&xs[j]).unwrap();
            let dy = ys[i].partial_cmp(&ys[j]).unwrap();
            if dx.is_eq() || dy.is_eq() {
                continue;
            }
            if dx == dy {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - tie_pairs(xs)) as f64) * ((n0 - tie_pairs(ys)) as f64)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / denom
}

/// Σ t(t−1)/2 over groups of tied values.
fn tie_pairs(v: &[f64]) -> i64 {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Mid-ranks (average rank within tie groups), 1-based.
fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() != ys.len() || xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Minimum test-trial count for a study to enter the uncertainty table.
pub const DEFAULT_MIN_TEST_FOR_UNCERTAINTY: usize = 10;

/// Mean (pearson, kendall, spearman) between per-trial uncertainty and
/// absolute error, over studies with at least `min_test` test trials.
pub fn uncertainty_correlation(
    per_study: &[(Vec<f64>, Vec<f64>)],
    min_test: usize,
) -> Result<(f64, f64, f64)> {
    let mut sums = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for (uncertainty, abs_error) in per_study {
        check_aligned(uncertainty, abs_error)?;
        if uncertainty.len() < min_test {
            continue;
        }
        let r = ranking_metrics(uncertainty, abs_error)?;
        sums.0 += pearson(uncertainty, abs_error);
        sums.1 += r.kendall_tau;
        sums.2 += r.spearman;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidConfig(format!(
            "no study has >= {min_test} test trials"
        )));
    }
    let n = count as f64;
    Ok((sums.0 / n, sums.1 / n, sums.2 / n))
}

/// Default log-spaced bin edges over train-trial counts.
pub const DEFAULT_GAIN_BIN_EDGES: [usize; 7] = [1, 3, 10, 30, 100, 300, 1000];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

/// Linear-interpolation percentile of an unsorted sample, p in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

/// Per-bin percentiles of (baseline error − multitask error), binned by the
/// study's train-trial count. Counts are clamped into the edge range so
/// every study lands in exactly one bin.
pub fn multitask_gain_report(
    single_task: &[(String, f64, usize)],
    multitask: &[(String, f64)],
    edges: &[usize],
) -> Result<Vec<GainBin>> {
    if edges.len() < 2 || !edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig("bin edges must be increasing".into()));
    }
    let multi: HashMap<&str, f64> = multitask.iter().map(|(id, e)| (id.as_str(), *e)).collect();
    let mut per_bin: Vec<Vec<f64>> = vec![vec![]; edges.len() - 1];
    for (id, base_err, train_trials) in single_task {
        let Some(&multi_err) = multi.get(id.as_str()) else {
            return Err(Error::InvalidConfig(format!("study {id} missing from multitask results")));
        };
        let t = (*train_trials).clamp(edges[0], *edges.last().unwrap());
        let bin = edges[..edges.len() - 1]
            .iter()
            .rposition(|&lo| t >= lo)
            .unwrap();
        per_bin[bin].push(base_err - multi_err);
    }
    Ok(per_bin
        .into_iter()
        .enumerate()
        .filter(|(_, diffs)| !diffs.is_empty())
        .map(|(i, diffs)| GainBin {
            lo: edges[i],
            hi: edges[i + 1],
            count: diffs.len(),
            p10: percentile(&diffs, 10.0),
            p50: percentile(&diffs, 50.0),
            p90: percentile(&diffs, 90.0),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BimodalityConfig {
    /// Minimum sample mass required near each mode.
    pub min_mass: f64,
    /// Relative distance to a mode that counts as "near".
    pub rel_tol: f64,
}

impl Default for BimodalityConfig {
    fn default() -> Self {
        Self { min_mass: 0.2, rel_tol: 0.1 }
    }
}

/// PASS iff both +f_abs and −f_abs attract at least `min_mass` of the
/// samples within `rel_tol` relative distance.
pub fn bimodality_check(samples: &[f64], f_abs: f64, config: BimodalityConfig) -> bool {
    if samples.is_empty() || f_abs <= 0.0 {
        return false;
    }
    let near = |mode: f64| {
        samples.iter().filter(|&&s| (s - mode).abs() <= config.rel_tol * f_abs).count() as f64
            / samples.len() as f64
    };
    near(f_abs) >= config.min_mass && near(-f_abs) >= config.min_mass
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_studies: usize,
    pub mean_study_error: f64,
    pub mean_kendall_tau: f64,
    pub mean_spearman: f64,
}

pub fn summarize(results: &[StudyEvalResult]) -> Result<EvalSummary> {
    let n = results.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no study results".into()));
    }
    let ranked: Vec<&StudyEvalResult> = results.iter().filter(|r| !r.rank_degenerate).collect();
    let mean_over = |f: fn(&StudyEvalResult) -> f64| {
        if ranked.is_empty() {
            0.0
        } else {
            ranked.iter().map(|r| f(r)).sum::<f64>() / ranked.len() as f64
        }
    };
    Ok(EvalSummary {
        n_studies: n,
        mean_study_error: mean_study_error(results)?,
        mean_kendall_tau: mean_over(|r| r.kendall_tau),
        mean_spearman: mean_over(|r| r.spearman),
    })
}

/// One row per study: id, error, rank metrics, test count.
pub fn write_study_results_csv(path: &Path, results: &[StudyEvalResult]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "study_id,study_error,kendall_tau,spearman,pearson,rank_degenerate,n_test")?;
    for r in results {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.study_id, r.study_error, r.kendall_tau, r.spearman, r.pearson, r.rank_degenerate,
            r.n_test
        )?;
    }
    Ok(())
}

pub fn write_gain_report_csv(path: &Path, bins: &[GainBin]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "lo,hi,count,p10,p50,p90")?;
    for b in bins {
        writeln!(f, "{},{},{},{},{},{}", b.lo, b.hi, b.count, b.p10, b.p50, b.p90)?;
    }
    Ok(())
}

/// Figure-ready two-column curve (e.g. error vs num-studies).
pub fn write_curve_csv(path: &Path, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{x_name},{y_name}")?;
    for (x, y) in points {
        writeln!(f, "{x},{y}")?;
    }
    Ok(())
}
