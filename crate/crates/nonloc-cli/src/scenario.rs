//! Runs one configured scenario end to end: per-scale energies, the
//! extrapolated limit, the analytic prediction, and the verdict.

use nonloc_core::energy::{mix_seed, nonlocal_energy, EnergyQuadrature};
use nonloc_core::maps::{cheeger_energy_smooth, predicted_limit};
use nonloc_core::mollifiers::{KernelKind, MollifierFamily};
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::extrapolate::{extrapolate, FitSample};
use crate::registry;

/// One evaluated scale.
#[derive(Clone, Copy, Debug)]
pub struct DeltaRow {
    pub delta: f64,
    pub value: f64,
    /// Zero on deterministic quadrature paths.
    pub stderr: f64,
    /// Zero on deterministic quadrature paths.
    pub n_samples: u64,
    /// Energy over the smooth reference energy, when the latter exists and
    /// is nonzero.
    pub cheeger_ratio: Option<f64>,
}

/// Everything the report files need.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub family: String,
    pub rows: Vec<DeltaRow>,
    pub extrapolated: f64,
    pub uncertainty: f64,
    pub predicted: f64,
    pub rel_dev: f64,
    pub pass: bool,
    pub fingerprint: String,
    pub version: &'static str,
    pub cheeger: Option<f64>,
}

/// Relative deviation of the extrapolated limit from the prediction, with a
/// floor that keeps an exactly-zero prediction meaningful.
pub fn relative_deviation(extrapolated: f64, predicted: f64) -> f64 {
    (extrapolated - predicted).abs() / predicted.abs().max(1e-12)
}

/// Pass iff the deviation is within the tolerance. Monotone in the
/// tolerance by construction.
pub fn verdict(extrapolated: f64, predicted: f64, tolerance: f64) -> bool {
    relative_deviation(extrapolated, predicted) <= tolerance
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    let space = registry::space_by_name(&config.space)?;
    let map = registry::map_by_name(&config.map)?;
    let target = registry::target_for(&map, &space, config.target.as_deref())?;
    let family = MollifierFamily::new(KernelKind::from_name(&config.family)?, config.p)?;
    let quad = EnergyQuadrature {
        method: config.method.into(),
        outer_samples: config.outer_samples,
        inner_samples: config.inner_samples,
        ..EnergyQuadrature::default()
    };

    let predicted = predicted_limit(&space, &map, &target, config.p, &family)?;
    let cheeger = cheeger_energy_smooth(&space, &map, config.p)
        .ok()
        .filter(|v| v.is_finite() && *v > 0.0);

    // one derived seed per scale, fixed by grid position, so the report does
    // not depend on the worker count
    let rows: Vec<DeltaRow> = config
        .deltas
        .par_iter()
        .enumerate()
        .map(|(i, &delta)| -> Result<DeltaRow> {
            let estimate = nonlocal_energy(
                &space,
                &map,
                &target,
                config.p,
                &family,
                delta,
                &quad,
                mix_seed(config.seed, i as u64),
            )?;
            Ok(DeltaRow {
                delta,
                value: estimate.value,
                stderr: estimate.stderr,
                n_samples: estimate.n_samples,
                cheeger_ratio: cheeger.map(|c| estimate.value / c),
            })
        })
        .collect::<Result<_>>()?;

    let samples: Vec<FitSample> = rows
        .iter()
        .map(|r| FitSample {
            delta: r.delta,
            value: r.value,
            stderr: r.stderr,
        })
        .collect();
    let fit = extrapolate(&samples, config.model)?;
    let rel_dev = relative_deviation(fit.intercept, predicted);

    Ok(RunReport {
        family: config.family.clone(),
        rows,
        extrapolated: fit.intercept,
        uncertainty: fit.intercept_se,
        predicted,
        rel_dev,
        pass: rel_dev <= config.tolerance,
        fingerprint: config.fingerprint(),
        version: env!("CARGO_PKG_VERSION"),
        cheeger,
    })
}
