//! Ordinary least squares with inference, correlations, and mean/sd
//! summaries.
//!
//! The solver is a Householder QR on the intercept-augmented design
//! matrix. p-values come from the Student-t distribution, whose CDF is
//! evaluated through the regularized incomplete beta function (Lentz
//! continued fraction, tolerance 1e-10) — no tables, no external
//! solver.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct RegressionFit {
    /// Intercept first ("Constant"), then one name per feature.
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    /// Two-sided, Student-t with n − p − 1 degrees of freedom.
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adjusted_r2: f64,
    pub n_observations: usize,
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    /// Text table in the style of a regression results table: one row
    /// per feature with coefficient, significance stars and standard
    /// error, then Observations and Adjusted R² footer rows.
    pub fn to_table(&self, response_name: &str) -> String {
        let width = self
            .feature_names
            .iter()
            .map(|n| n.len())
            .max()
            .unwrap_or(8)
            .max("Observations".len());
        let mut out = String::new();
        out.push_str(&format!("{:<width$}  {:>12}\n", "", response_name));
        let rule = "-".repeat(width + 30);
        out.push_str(&rule);
        out.push('\n');
        // intercept printed last, as regression tables usually do
        for i in (1..self.feature_names.len()).chain([0]) {
            out.push_str(&format!(
                "{:<width$}  {:>12.6}{:<3} ({:.6})\n",
                self.feature_names[i],
                self.coefficients[i],
                significance_stars(self.p_values[i]),
                self.std_errors[i],
            ));
        }
        out.push_str(&rule);
        out.push('\n');
        out.push_str(&format!("{:<width$}  {:>12}\n", "Observations", self.n_observations));
        out.push_str(&format!("{:<width$}  {:>12.6}\n", "Adjusted R2", self.adjusted_r2));
        out.push_str(&format!("{:<width$}  {:>12.6}\n", "R2", self.r2));
        out
    }
}

/// `***` p < 0.01, `**` p < 0.05, `*` p < 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// OLS of `response` on `features` (rows are observations); an
/// intercept is prepended automatically.
pub fn ols(features: &[Vec<f64>], response: &[f64], feature_names: &[String]) -> Result<RegressionFit> {
    let n = features.len();
    let p = feature_names.len();
    if n != response.len() {
        return Err(Error::InvalidParameter(format!(
            "{n} feature rows vs {} responses",
            response.len()
        )));
    }
    if features.iter().any(|row| row.len() != p) {
        return Err(Error::InvalidParameter("ragged feature matrix".into()));
    }
    let m = p + 1;
    if n <= m {
        return Err(Error::TooFewObservations { n, needed: m + 1 });
    }
    if response.iter().any(|v| !v.is_finite())
        || features.iter().flatten().any(|v| !v.is_finite())
    {
        return Err(Error::InvalidParameter("non-finite entries in design".into()));
    }

    // column-major augmented design
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    cols.push(vec![1.0; n]);
    for j in 0..p {
        cols.push(features.iter().map(|row| row[j]).collect());
    }
    let names: Vec<String> = std::iter::once("Constant".to_owned())
        .chain(feature_names.iter().cloned())
        .collect();

    let mut qty = response.to_vec();
    // Householder QR, applied in place to the columns and to y.
    for j in 0..m {
        let norm = {
            let mut s = 0.0;
            for i in j..n {
                s += cols[j][i] * cols[j][i];
            }
            s.sqrt()
        };
        if norm == 0.0 {
            continue; // degenerate column, caught by the rcond check below
        }
        let alpha = if cols[j][j] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = vec![0.0; n];
        v[j] = cols[j][j] - alpha;
        for i in j + 1..n {
            v[i] = cols[j][i];
        }
        let vtv: f64 = v[j..].iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        for col in cols.iter_mut().skip(j) {
            let dot: f64 = v[j..].iter().zip(&col[j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vtv;
            for i in j..n {
                col[i] -= f * v[i];
            }
        }
        let dot: f64 = v[j..].iter().zip(&qty[j..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vtv;
        for i in j..n {
            qty[i] -= f * v[i];
        }
    }

    // R is the upper m×m triangle of the transformed columns.
    let r = |i: usize, j: usize| cols[j][i];
    let diag_max = (0..m).map(|j| r(j, j).abs()).fold(0.0f64, f64::max);
    let offenders: Vec<String> = (0..m)
        .filter(|&j| r(j, j).abs() < diag_max * 1e-12 || r(j, j) == 0.0)
        .map(|j| names[j].clone())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Collinear { columns: offenders });
    }

    // back substitution: R beta = Q'y
    let mut beta = vec![0.0; m];
    for j in (0..m).rev() {
        let mut s = qty[j];
        for k in j + 1..m {
            s -= r(j, k) * beta[k];
        }
        beta[j] = s / r(j, j);
    }

    // residuals against the original design
    let mut residuals = Vec::with_capacity(n);
    let mut ss_res = 0.0;
    for (i, row) in features.iter().enumerate() {
        let mut fitted = beta[0];
        for j in 0..p {
            fitted += beta[j + 1] * row[j];
        }
        let e = response[i] - fitted;
        ss_res += e * e;
        residuals.push(e);
    }
    let mean_y = response.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = response.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance("response".into()));
    }
    let r2 = 1.0 - ss_res / ss_tot;
    let dof = (n - m) as f64;
    let adjusted_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof;
    let sigma2 = ss_res / dof;

    // [(X'X)^-1]_jj = ||R^-T e_j||²  via forward substitution on R'
    let mut std_errors = Vec::with_capacity(m);
    for j in 0..m {
        let mut w = vec![0.0; m];
        for i in 0..m {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= r(k, i) * w[k];
            }
            w[i] = s / r(i, i);
        }
        let xx_inv_jj: f64 = w.iter().map(|x| x * x).sum();
        std_errors.push((sigma2 * xx_inv_jj).sqrt());
    }

    let t_values: Vec<f64> =
        beta.iter().zip(&std_errors).map(|(b, se)| b / se).collect();
    let p_values: Vec<f64> =
        t_values.iter().map(|&t| student_t_two_sided_p(t, dof)).collect();

    Ok(RegressionFit {
        feature_names: names,
        coefficients: beta,
        std_errors,
        t_values,
        p_values,
        r2,
        adjusted_r2,
        n_observations: n,
        residuals,
    })
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))
}

/// Upper-tail probability P(T > t), for one-sided tests.
pub fn student_t_upper_tail(t: f64, dof: f64) -> f64 {
    let two = student_t_two_sided_p(t.abs(), dof);
    if t >= 0.0 {
        two / 2.0
    } else {
        1.0 - two / 2.0
    }
}

/// t statistic of a correlation coefficient over n pairs.
pub fn correlation_t_stat(r: f64, n: usize) -> f64 {
    let nf = n as f64;
    r * ((nf - 2.0) / (1.0 - r * r).max(f64::MIN_POSITIVE)).sqrt()
}

const BETA_EPS: f64 = 1e-10;
const FPMIN: f64 = 1e-300;

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Correlations {
    pub pearson: f64,
    pub spearman: f64,
}

pub fn correlations(x: &[f64], y: &[f64]) -> Result<Correlations> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter("length mismatch".into()));
    }
    if x.len() < 3 {
        return Err(Error::TooFewObservations { n: x.len(), needed: 3 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite input".into()));
    }
    let spearman = pearson(&average_ranks(x), &average_ranks(y))?;
    Ok(Correlations { pearson: pearson(x, y)?, spearman })
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("correlation input".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Ranks starting at 1; ties receive the average of their rank range.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample (n−1) standard deviation.
    pub sd: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::TooFewObservations { n: values.len(), needed: 2 });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(Summary { mean, sd: (ss / (n - 1.0)).sqrt() })
}

/// Column-wise z-scoring; errors when a column is constant.
pub fn zscore_columns(features: &[Vec<f64>], names: &[String]) -> Result<Vec<Vec<f64>>> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let p = features[0].len();
    let n = features.len() as f64;
    let mut out = vec![vec![0.0; p]; features.len()];
    for j in 0..p {
        let mean = features.iter().map(|r| r[j]).sum::<f64>() / n;
        let ss: f64 = features.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum();
        let sd = (ss / (n - 1.0)).sqrt();
        if sd == 0.0 {
            return Err(Error::ZeroVariance(format!("feature '{}'", names[j])));
        }
        for (i, row) in features.iter().enumerate() {
            out[i][j] = (row[j] - mean) / sd;
        }
    }
    Ok(out)
}
