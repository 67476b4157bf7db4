//! Small numerical helpers shared by the estimators and the approximation lab.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of floats.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `ln(sum(exp(x_i)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s = compensated_sum(xs.iter().map(|&x| (x - max).exp()));
    max + s.ln()
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    // exact accumulation is cheaper and more accurate than ln_gamma for small n
    if n < 32 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// `ln Γ(x + m) − ln Γ(x)` for `x > 0`, i.e. the log rising factorial.
pub fn ln_rising_factorial(x: f64, m: u64) -> f64 {
    if m <= 64 {
        (0..m).map(|j| (x + j as f64).ln()).sum()
    } else {
        statrs::function::gamma::ln_gamma(x + m as f64) - statrs::function::gamma::ln_gamma(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn ln_factorial_matches_product() {
        assert_eq!(ln_factorial(0), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-14);
        let direct: f64 = (2..=40).map(|k| (k as f64).ln()).sum();
        assert!((ln_factorial(40) - direct).abs() < 1e-10);
    }

    #[test]
    fn rising_factorial_branches_agree() {
        let x = 3.7;
        let direct: f64 = (0..100).map(|j| (x + j as f64).ln()).sum();
        assert!((ln_rising_factorial(x, 100) - direct).abs() < 1e-9);
        assert!((ln_rising_factorial(x, 3) - (x * (x + 1.0) * (x + 2.0)).ln()).abs() < 1e-14);
    }
}
