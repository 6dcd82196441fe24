//! Named spaces, maps, and targets, so configs and flags can refer to the
//! built-in geometries without spelling out constructors.

use nonloc_core::maps::{MapSpec, TargetSpace};
use nonloc_core::space::{Space, Weight};

use crate::error::{CliError, Result};

pub const SPACE_NAMES: [&str; 4] = ["unit_interval", "unit_square", "weighted_inv_x", "circle"];
pub const MAP_NAMES: [&str; 5] = ["identity", "x1", "square", "angle", "constant"];

pub fn space_by_name(name: &str) -> Result<Space> {
    match name {
        "unit_interval" => Ok(Space::interval(0.0, 1.0)?),
        "unit_square" => Ok(Space::unit_square()),
        // [0.1, 0.9] with w(x) = 1/x keeps the weight bounded
        "weighted_inv_x" => Ok(Space::weighted_interval(0.1, 0.9, Weight::InverseX)?),
        "circle" => Ok(Space::circle(1.0)?),
        other => Err(CliError::Config(format!(
            "unknown space '{other}' (expected one of {})",
            SPACE_NAMES.join(", ")
        ))),
    }
}

pub fn map_by_name(name: &str) -> Result<MapSpec> {
    match name {
        "identity" => Ok(MapSpec::identity()),
        // first coordinate of a planar domain
        "x1" => Ok(MapSpec::linear(vec![vec![1.0, 0.0]])?),
        "square" => Ok(MapSpec::power(2.0)?),
        // one full turn per unit length
        "angle" => Ok(MapSpec::angle_wrap_turns(1.0)?),
        "constant" => Ok(MapSpec::constant(vec![0.25])?),
        other => Err(CliError::Config(format!(
            "unknown map '{other}' (expected one of {})",
            MAP_NAMES.join(", ")
        ))),
    }
}

/// Resolves the target: explicit name if given, otherwise the unit circle
/// for angle-valued maps and Euclidean space of the map's output dimension.
pub fn target_for(map: &MapSpec, space: &Space, explicit: Option<&str>) -> Result<TargetSpace> {
    match explicit {
        None => {
            if map.is_angle_valued() {
                Ok(TargetSpace::circle(1.0)?)
            } else {
                Ok(TargetSpace::euclidean(map.output_dim(space.coord_dim()))?)
            }
        }
        Some("euclidean") => Ok(TargetSpace::euclidean(map.output_dim(space.coord_dim()))?),
        Some("circle") => Ok(TargetSpace::circle(1.0)?),
        Some(other) => Err(CliError::Config(format!(
            "unknown target '{other}' (expected euclidean or circle)"
        ))),
    }
}

/// Canonical name recorded in fingerprints when the config leaves the
/// target implicit.
pub fn target_name(map: &MapSpec, explicit: Option<&str>) -> &'static str {
    match explicit {
        Some("circle") => "circle",
        Some(_) => "euclidean",
        None => {
            if map.is_angle_valued() {
                "circle"
            } else {
                "euclidean"
            }
        }
    }
}
