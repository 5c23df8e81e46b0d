use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} = ({x}, {y}) is not strictly positive")]
    NonPositive { index: usize, x: f64, y: f64 },
    #[error("all x values are equal")]
    Degenerate,
}

/// `y = amplitude * x^exponent`, fitted on `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * x.powf(self.exponent)
    }
}

/// Ordinary least squares on the log-log data.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some((index, &(x, y))) = points.iter().enumerate().find(|(_, &(x, y))| !(x > 0.0 && y > 0.0)) {
        return Err(FitError::NonPositive { index, x, y });
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= f64::EPSILON * n {
        return Err(FitError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(PowerLawFit { amplitude: intercept.exp(), exponent: slope, r_squared, n_points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 2.0 * x * x * x)).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.amplitude - 2.0).abs() < 1e-12);
        assert!((fit.exponent - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decaying_law() {
        let pts: Vec<(f64, f64)> = (3..=15).map(|k| (10.0 * k as f64, 2.1 / (10.0 * k as f64).powf(0.94))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.amplitude - 2.1).abs() < 1e-10);
        assert!((fit.exponent + 0.94).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]), Err(FitError::TooFewPoints(2))));
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(FitError::NonPositive { index: 1, .. })));
        assert!(matches!(fit_power_law(&[(2.0, 1.0), (2.0, 3.0), (2.0, 1.0)]), Err(FitError::Degenerate)));
    }

    #[test]
    fn noisy_data_has_imperfect_r_squared() {
        let pts = [(1.0, 1.0), (2.0, 3.0), (3.0, 2.5), (4.0, 7.0)];
        let fit = fit_power_law(&pts).unwrap();
        assert!(fit.r_squared > 0.0 && fit.r_squared < 1.0);
    }
}
