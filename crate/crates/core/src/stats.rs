//! Small numerical helpers shared by the estimators: compensated sums,
//! binomial/mean confidence intervals, least squares.

use serde::{Deserialize, Serialize};

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A Monte Carlo or exact estimate in the form every estimator reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub censored: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            estimate: value,
            stderr: 0.0,
            trials: 0,
            censored: 0,
        }
    }

    /// Binomial proportion `hits / (trials - censored)`.
    pub fn proportion(hits: u64, trials: u64, censored: u64) -> Self {
        let n = trials.saturating_sub(censored);
        let p = if n == 0 { f64::NAN } else { hits as f64 / n as f64 };
        let se = if n == 0 { f64::NAN } else { (p * (1.0 - p) / n as f64).sqrt() };
        Estimate {
            estimate: p,
            stderr: se,
            trials,
            censored,
        }
    }

    /// `estimate ± z·stderr`.
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.estimate - z * self.stderr, self.estimate + z * self.stderr)
    }

    /// True when `value` lies within `z` standard errors, using the binomial
    /// standard error at `value` itself when the sample one degenerates.
    pub fn agrees_with(&self, value: f64, z: f64) -> bool {
        let n = self.trials.saturating_sub(self.censored) as f64;
        let se = if n > 0.0 {
            self.stderr.max((value * (1.0 - value) / n).max(0.0).sqrt())
        } else {
            self.stderr
        };
        (self.estimate - value).abs() <= z * se + 1e-15
    }
}

/// Wilson score interval for `hits` successes in `n` trials at `z` standard
/// deviations. Stays informative when `hits` is 0 or `n`.
pub fn wilson_interval(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = KahanSum::default();
    for &x in xs {
        s.add(x);
    }
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut v = KahanSum::default();
    for &x in xs {
        v.add((x - mean) * (x - mean));
    }
    let var = v.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // a perfectly flat response has no variance to explain
    let r2 = if syy == 0.0 { 0.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LinearFit { slope, intercept, r2, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut s = KahanSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn log_add_exp_matches_direct() {
        let v = log_add_exp(2f64.ln(), 3f64.ln());
        assert!((v - 5f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.0), 1.0);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn wilson_brackets_the_proportion() {
        let (lo, hi) = wilson_interval(0, 100, 3.0);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.05 && hi < 0.1, "{hi}");
        let (lo, hi) = wilson_interval(50, 100, 2.0);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert_eq!(wilson_interval(0, 0, 3.0), (0.0, 1.0));
    }

    #[test]
    fn proportion_and_agreement() {
        let e = Estimate::proportion(50, 100, 0);
        assert_eq!(e.estimate, 0.5);
        assert!((e.stderr - 0.05).abs() < 1e-12);
        assert!(e.agrees_with(0.6, 3.0));
        assert!(!e.agrees_with(0.7, 3.0));
    }
}
