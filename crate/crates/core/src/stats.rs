//! Paired t-test, paired Cohen's d and t-based confidence intervals.
//!
//! Sample (n - 1) standard deviations throughout.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Differences whose spread is below this fraction of the data magnitude
/// are rounding noise around a constant offset.
const RELATIVE_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: usize,
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
}

fn check_values(values: &[f64], what: &str) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{what} needs at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what}: non-finite value")));
    }
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_values(a, "paired sample")?;
    check_values(b, "paired sample")?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn standardized(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64, usize)> {
    let d = differences(a, b)?;
    let (mean, sd) = mean_sd(&d);
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if sd <= RELATIVE_SPREAD * scale || sd == 0.0 {
        return Err(Error::Undefined(
            "the paired differences have zero variance; t and d are undefined \
             (identical or constant-offset samples)"
                .into(),
        ));
    }
    Ok((mean / sd, mean, sd, d.len()))
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df`
/// degrees of freedom, via the regularized incomplete beta function.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * t_two_sided_p(t, df);
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Quantile of Student's t, refined with Newton steps on the tail.
pub fn t_quantile(prob: f64, df: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) || !(df > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t quantile needs prob in (0, 1) and df > 0, got {prob}, {df}"
        )));
    }
    if prob == 0.5 {
        return Ok(0.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    // Work in the upper tail for accuracy, then mirror.
    let upper = prob.max(1.0 - prob);
    let target = 1.0 - upper;
    let mut q = dist.inverse_cdf(upper);
    for _ in 0..8 {
        let tail = 0.5 * t_two_sided_p(q, df);
        let step = (tail - target) / dist.pdf(q);
        q += step;
        if step.abs() <= 1e-15 * q.abs() {
            break;
        }
    }
    Ok(if prob < 0.5 { -q } else { q })
}

/// Paired two-sided t-test on `a - b`. Computed as `t = d * sqrt(n)`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    let (d, mean, sd, n) = standardized(a, b)?;
    let t = d * (n as f64).sqrt();
    let df = n - 1;
    Ok(TTest {
        t,
        p: t_two_sided_p(t, df as f64),
        df,
        n,
        mean_diff: mean,
        sd_diff: sd,
    })
}

/// `mean(a - b) / sd(a - b)`.
pub fn cohens_d_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(standardized(a, b)?.0)
}

/// `(mean, t_{0.975, n-1} * sd / sqrt(n))`.
pub fn mean_ci95(values: &[f64]) -> Result<(f64, f64)> {
    check_values(values, "confidence interval")?;
    let (mean, sd) = mean_sd(values);
    if sd == 0.0 {
        return Ok((mean, 0.0));
    }
    let n = values.len() as f64;
    Ok((mean, t_quantile(0.975, n - 1.0)? * sd / n.sqrt()))
}
