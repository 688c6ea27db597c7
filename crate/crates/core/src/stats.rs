//! Goodness-of-fit and comparison tests used by the experiments and the
//! acceptance suite. All p-values are asymptotic.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample contains a non-positive or non-finite value at index {0}")]
    NonPositiveSample(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("argument lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("contingency table too sparse: smallest expected count {0:.3} < 5")]
    SparseCells(f64),
    #[error("empty sample")]
    EmptySample,
    #[error("bin count must be at least 2, got {0}")]
    InvalidBins(usize),
    #[error("histogram range must be finite with lo < hi")]
    InvalidRange,
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub null_description: String,
}

impl TestResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Kolmogorov survival function `Q(x) = 2 Σ (-1)^{k-1} e^{-2k²x²}`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // the alternating series converges too slowly here and Q is 1 to
        // double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sqrt_n = n_eff.sqrt();
    kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One-sample KS statistic of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// One-sample KS test against an arbitrary continuous CDF.
pub fn ks_one_sample(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    null_description: impl Into<String>,
) -> Result<TestResult, StatsError> {
    if samples.len() < 10 {
        return Err(StatsError::TooFewSamples {
            needed: 10,
            got: samples.len(),
        });
    }
    let d = ks_statistic(samples, cdf);
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, samples.len() as f64),
        n: samples.len(),
        null_description: null_description.into(),
    })
}

/// KS test of `samples` against `Exp(lambda)`.
pub fn ks_exponential(samples: &[f64], lambda: f64) -> Result<TestResult, StatsError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(StatsError::InvalidRate(lambda));
    }
    if let Some(i) = samples.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(StatsError::NonPositiveSample(i));
    }
    ks_one_sample(samples, |t| -(-lambda * t).exp_m1(), format!("Exp(rate = {lambda})"))
}

/// Two-sample KS test with effective size `n_a n_b / (n_a + n_b)`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.len() < 10 {
            return Err(StatsError::TooFewSamples {
                needed: 10,
                got: s.len(),
            });
        }
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        // step through every copy of the smaller value on both sides so ties
        // do not inflate the statistic
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n: a.len() + b.len(),
        null_description: "samples share one continuous distribution".into(),
    })
}

/// Pearson χ² test of independence on the contingency table of paired
/// categorical labels. Every expected cell count must be at least 5.
///
/// A table with a single row or column category carries no information
/// about dependence; it yields statistic 0 and p = 1.
pub fn chi2_independence<R: Ord, C: Ord>(rows: &[R], cols: &[C]) -> Result<TestResult, StatsError> {
    if rows.len() != cols.len() {
        return Err(StatsError::LengthMismatch(rows.len(), cols.len()));
    }
    if rows.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut row_ids = BTreeMap::new();
    let mut col_ids = BTreeMap::new();
    for r in rows {
        let next = row_ids.len();
        row_ids.entry(r).or_insert(next);
    }
    for c in cols {
        let next = col_ids.len();
        col_ids.entry(c).or_insert(next);
    }
    let (nr, nc) = (row_ids.len(), col_ids.len());
    let mut table = vec![vec![0.0f64; nc]; nr];
    for (r, c) in rows.iter().zip(cols) {
        table[row_ids[r]][col_ids[c]] += 1.0;
    }
    let n = rows.len() as f64;
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..nc).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let df = (nr - 1) * (nc - 1);
    if df == 0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            n: rows.len(),
            null_description: "independence (degenerate table with one category)".into(),
        });
    }
    let mut statistic = 0.0;
    let mut min_expected = f64::INFINITY;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / n;
            min_expected = min_expected.min(expected);
            statistic += (observed - expected).powi(2) / expected;
        }
    }
    if min_expected < 5.0 {
        return Err(StatsError::SparseCells(min_expected));
    }
    Ok(TestResult {
        statistic,
        p_value: chi2_survival(statistic, df as f64),
        n: rows.len(),
        null_description: format!("independence of row and column labels ({df} dof)"),
    })
}

/// Upper tail of the χ² distribution.
pub fn chi2_survival(statistic: f64, dof: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(0.5 * dof, 0.5 * statistic).clamp(0.0, 1.0)
}

/// Reference measure for [`binned_tv`].
#[derive(Debug, Clone, Copy)]
pub enum Binned<'a> {
    /// Empirical measure of point samples.
    Samples(&'a [f64]),
    /// Piecewise-linear density through `(xs[i], values[i])`, zero outside.
    GridDensity { xs: &'a [f64], values: &'a [f64] },
}

fn sample_histogram(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        if x >= lo && x <= hi {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1.0;
        }
    }
    counts.iter().map(|c| c / samples.len() as f64).collect()
}

/// Integral of the piecewise-linear interpolant over `[lo, hi]`.
fn linear_integral(xs: &[f64], values: &[f64], lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..xs.len().saturating_sub(1) {
        let (x0, x1) = (xs[k], xs[k + 1]);
        let (s, e) = (lo.max(x0), hi.min(x1));
        if e <= s {
            continue;
        }
        let at = |x: f64| values[k] + (values[k + 1] - values[k]) * (x - x0) / (x1 - x0);
        total += 0.5 * (e - s) * (at(s) + at(e));
    }
    total
}

fn grid_histogram(xs: &[f64], values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let masses: Vec<f64> = (0..bins)
        .map(|i| {
            let a = lo + i as f64 * width;
            linear_integral(xs, values, a, a + width)
        })
        .collect();
    let total = linear_integral(xs, values, f64::NEG_INFINITY, f64::INFINITY);
    masses.iter().map(|m| m / total).collect()
}

fn bin_masses(m: Binned<'_>, bins: usize, lo: f64, hi: f64) -> Result<Vec<f64>, StatsError> {
    match m {
        Binned::Samples([]) => Err(StatsError::EmptySample),
        Binned::Samples(s) => Ok(sample_histogram(s, bins, lo, hi)),
        Binned::GridDensity { xs, values } => {
            if xs.len() != values.len() {
                return Err(StatsError::LengthMismatch(xs.len(), values.len()));
            }
            if xs.len() < 2 {
                return Err(StatsError::EmptySample);
            }
            Ok(grid_histogram(xs, values, bins, lo, hi))
        }
    }
}

/// `½ Σ |p_i - q_i|` over `bins` equal bins of `[lo, hi]`. Sample mass
/// outside the range counts as a bin of its own on the sample side.
pub fn binned_tv(a: Binned<'_>, b: Binned<'_>, bins: usize, range: (f64, f64)) -> Result<f64, StatsError> {
    if bins < 2 {
        return Err(StatsError::InvalidBins(bins));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(StatsError::InvalidRange);
    }
    let p = bin_masses(a, bins, lo, hi)?;
    let q = bin_masses(b, bins, lo, hi)?;
    let outside = (1.0 - p.iter().sum::<f64>()).abs() + (1.0 - q.iter().sum::<f64>()).abs();
    let inside: f64 = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * (inside + outside)).clamp(0.0, 1.0))
}

/// Least-squares fit of `ln values` against `t`; returns `(-slope, R²)`.
pub fn fit_log_decay(t: &[f64], values: &[f64]) -> Result<(f64, f64), StatsError> {
    if t.len() != values.len() {
        return Err(StatsError::LengthMismatch(t.len(), values.len()));
    }
    if t.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: t.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(StatsError::NonPositiveSample(i));
    }
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((-slope, r2))
}

/// Index of the quartile of each value within the sample (0..4).
pub fn quartile_labels(values: &[f64]) -> Vec<u8> {
    let s = sorted(values);
    let q = |p: f64| s[((p * s.len() as f64) as usize).min(s.len() - 1)];
    let (q1, q2, q3) = (q(0.25), q(0.5), q(0.75));
    values
        .iter()
        .map(|&v| {
            if v < q1 {
                0
            } else if v < q2 {
                1
            } else if v < q3 {
                2
            } else {
                3
            }
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
