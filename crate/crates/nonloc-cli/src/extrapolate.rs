//! Weighted least squares extrapolation of the scale series to its limit at
//! zero, with either a fixed linear model or a fitted power exponent.

use nonloc_core::CoreError;

use crate::config::ModelChoice;
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug)]
pub struct FitSample {
    pub delta: f64,
    pub value: f64,
    /// Zero for deterministic evaluations.
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Fit {
    /// Value at scale zero.
    pub intercept: f64,
    pub slope: f64,
    /// Exponent of the scale term: 1 for the linear model.
    pub exponent: f64,
    /// One-sigma uncertainty of the intercept, from the input errors scaled
    /// by the reduced residual.
    pub intercept_se: f64,
    /// Weighted residual sum of squares at the solution.
    pub chi2: f64,
}

const EXPONENT_RANGE: (f64, f64) = (0.25, 3.0);

pub fn extrapolate(samples: &[FitSample], model: ModelChoice) -> Result<Fit> {
    let needed = match model {
        ModelChoice::Linear => 3,
        ModelChoice::Power => 4,
    };
    if samples.len() < needed {
        return Err(CliError::Core(CoreError::Underdetermined(format!(
            "the {} model needs at least {needed} scale samples, got {}",
            model.name(),
            samples.len()
        ))));
    }
    for s in samples {
        if !(s.delta.is_finite() && s.delta > 0.0) {
            return Err(CliError::Config(format!("bad scale {}", s.delta)));
        }
        if !s.value.is_finite() || !(s.stderr.is_finite() && s.stderr >= 0.0) {
            return Err(CliError::Config(format!(
                "bad sample at scale {}: value {}, stderr {}",
                s.delta, s.value, s.stderr
            )));
        }
    }
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            if a.delta == b.delta {
                return Err(CliError::Config(format!(
                    "duplicate scale {} in the fit input",
                    a.delta
                )));
            }
        }
    }

    let weights = fit_weights(samples);
    match model {
        ModelChoice::Linear => Ok(solve(samples, &weights, 1.0)),
        ModelChoice::Power => {
            // golden-section on the weighted residual over the exponent
            let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
            let (mut lo, mut hi) = EXPONENT_RANGE;
            let mut x1 = hi - inv_phi * (hi - lo);
            let mut x2 = lo + inv_phi * (hi - lo);
            let mut f1 = solve(samples, &weights, x1).chi2;
            let mut f2 = solve(samples, &weights, x2).chi2;
            for _ in 0..200 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - inv_phi * (hi - lo);
                    f1 = solve(samples, &weights, x1).chi2;
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + inv_phi * (hi - lo);
                    f2 = solve(samples, &weights, x2).chi2;
                }
            }
            Ok(solve(samples, &weights, 0.5 * (lo + hi)))
        }
    }
}

/// Inverse-variance weights, normalized to mean one. A run with no error
/// bars (all deterministic) falls back to uniform weights; zero error bars
/// mixed with real ones get a floor far below the smallest real bar.
fn fit_weights(samples: &[FitSample]) -> Vec<f64> {
    let max_err = samples.iter().map(|s| s.stderr).fold(0.0f64, f64::max);
    if max_err == 0.0 {
        return vec![1.0; samples.len()];
    }
    let floor = 1e-3
        * samples
            .iter()
            .map(|s| s.stderr)
            .filter(|e| *e > 0.0)
            .fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| 1.0 / s.stderr.max(floor).powi(2))
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.iter().map(|w| w / mean).collect()
}

/// Closed-form weighted fit of `y = a + b * delta^g` for a fixed exponent.
fn solve(samples: &[FitSample], weights: &[f64], g: f64) -> Fit {
    let mut sw = 0.0;
    let mut st = 0.0;
    let mut stt = 0.0;
    let mut sy = 0.0;
    let mut sty = 0.0;
    for (s, &w) in samples.iter().zip(weights) {
        let t = s.delta.powf(g);
        sw += w;
        st += w * t;
        stt += w * t * t;
        sy += w * s.value;
        sty += w * t * s.value;
    }
    let det = sw * stt - st * st;
    let (a, b) = if det.abs() < 1e-300 {
        (sy / sw, 0.0)
    } else {
        ((stt * sy - st * sty) / det, (sw * sty - st * sy) / det)
    };
    let mut chi2 = 0.0;
    for (s, &w) in samples.iter().zip(weights) {
        let r = s.value - a - b * s.delta.powf(g);
        chi2 += w * r * r;
    }
    let dof = samples.len().saturating_sub(2).max(1) as f64;
    // normalized weights make Stt/D a relative variance; the reduced
    // residual restores the scale (for uniform weights this is exactly the
    // ordinary intercept error)
    let var_a = if det.abs() < 1e-300 {
        1.0 / sw
    } else {
        stt / det
    };
    let intercept_se = (var_a * chi2 / dof).sqrt();
    Fit {
        intercept: a,
        slope: b,
        exponent: g,
        intercept_se,
        chi2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn det(delta: f64, value: f64) -> FitSample {
        FitSample {
            delta,
            value,
            stderr: 0.0,
        }
    }

    #[test]
    fn linear_synthetic_is_recovered_exactly() {
        let samples: Vec<FitSample> = [0.08, 0.04, 0.02, 0.01]
            .iter()
            .map(|&d| det(d, 0.7 - 3.2 * d))
            .collect();
        let fit = extrapolate(&samples, ModelChoice::Linear).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, -3.2, epsilon = 1e-10);
        assert!(fit.intercept_se < 1e-10);
    }

    #[test]
    fn the_three_point_series_lands_on_its_limit() {
        // hand solution of the normal equations: intercept 0.12495
        let samples = [det(0.04, 0.1253), det(0.02, 0.1251), det(0.01, 0.12505)];
        let fit = extrapolate(&samples, ModelChoice::Linear).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.12495, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.intercept, 0.1250, epsilon = 5e-4);
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let samples: Vec<FitSample> = [0.08, 0.04, 0.02].iter().map(|&d| det(d, 2.5)).collect();
        let fit = extrapolate(&samples, ModelChoice::Linear).unwrap();
        assert_abs_diff_eq!(fit.intercept, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn power_model_recovers_a_curved_series() {
        let samples: Vec<FitSample> = [0.08, 0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&d| det(d, 1.25 + 0.8 * d.powf(1.7)))
            .collect();
        let fit = extrapolate(&samples, ModelChoice::Power).unwrap();
        assert_abs_diff_eq!(fit.exponent, 1.7, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.intercept, 1.25, epsilon = 1e-7);
    }

    #[test]
    fn too_few_samples_is_an_input_error() {
        let two = [det(0.04, 1.0), det(0.02, 1.1)];
        assert!(matches!(
            extrapolate(&two, ModelChoice::Linear),
            Err(CliError::Core(CoreError::Underdetermined(_)))
        ));
        let three = [det(0.04, 1.0), det(0.02, 1.1), det(0.01, 1.15)];
        assert!(extrapolate(&three, ModelChoice::Linear).is_ok());
        assert!(matches!(
            extrapolate(&three, ModelChoice::Power),
            Err(CliError::Core(CoreError::Underdetermined(_)))
        ));
    }

    #[test]
    fn duplicate_scales_are_rejected() {
        let samples = [det(0.04, 1.0), det(0.04, 1.1), det(0.01, 1.2)];
        assert!(extrapolate(&samples, ModelChoice::Linear).is_err());
    }

    #[test]
    fn noisy_points_are_downweighted() {
        // three clean points on y = 1 + delta and one wild outlier with a
        // large error bar; the fit should stay near the clean line
        let samples = [
            FitSample {
                delta: 0.08,
                value: 1.08,
                stderr: 1e-6,
            },
            FitSample {
                delta: 0.04,
                value: 1.04,
                stderr: 1e-6,
            },
            FitSample {
                delta: 0.02,
                value: 1.02,
                stderr: 1e-6,
            },
            FitSample {
                delta: 0.01,
                value: 3.0,
                stderr: 10.0,
            },
        ];
        let fit = extrapolate(&samples, ModelChoice::Linear).unwrap();
        assert_abs_diff_eq!(fit.intercept, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn uncertainty_grows_with_scatter() {
        let clean = [det(0.08, 1.08), det(0.04, 1.04), det(0.02, 1.02)];
        let noisy = [det(0.08, 1.10), det(0.04, 1.00), det(0.02, 1.05)];
        let se_clean = extrapolate(&clean, ModelChoice::Linear)
            .unwrap()
            .intercept_se;
        let se_noisy = extrapolate(&noisy, ModelChoice::Linear)
            .unwrap()
            .intercept_se;
        assert!(se_clean < 1e-10);
        assert!(se_noisy > 1e-3);
    }
}
