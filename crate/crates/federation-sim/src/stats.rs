//! Quantiles and confidence intervals for the study runner.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Linear-interpolation quantile (the common "type 7" rule):
/// h = (n - 1) q, value = x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]).
/// Input must be sorted and non-empty.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample mean and 95% confidence half-width across independent
/// replications, using the Student t quantile with n-1 degrees of
/// freedom. A single replication has no spread estimate: half-width 0.
pub fn mean_and_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "confidence interval of empty sample");
    let m = mean(values);
    if n < 2 {
        return (m, 0.0);
    }
    let variance = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    let sd = variance.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    (m, t * sd / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&xs, 0.5), 2.5);
        assert_eq!(quantile_type7(&xs, 0.0), 1.0);
        assert_eq!(quantile_type7(&xs, 1.0), 4.0);
        assert!((quantile_type7(&xs, 0.75) - 3.25).abs() < 1e-12);
    }

    #[test]
    fn ci_matches_t_formula_oracle() {
        // independent oracle: t(0.975, df=2) * stdev/sqrt(3) for {1,2,3}
        // = 4.302652729696 * 1/sqrt(3) = 2.4841377117195456
        let (m, hw) = mean_and_ci95(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((hw - 2.4841377117195456).abs() < 1e-9, "got {hw}");
    }

    #[test]
    fn constant_input_has_zero_halfwidth() {
        let (m, hw) = mean_and_ci95(&[20.0; 20]);
        assert_eq!(m, 20.0);
        assert_eq!(hw, 0.0);
    }
}
