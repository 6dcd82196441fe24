//! Nonlocal p-energy functionals on metric measure spaces.
//!
//! The crate provides the building blocks for evaluating and localizing
//! Bourgain-Brezis-Mironescu-type double integrals
//! `E_delta(f) = ∫∫ d_Y(f(x), f(x'))^p rho_delta(x, x') dm(x') dm(x)`:
//!
//! * [`space`]: metric measure spaces with ball-measure oracles, samplers,
//!   and doubling / local-dimension diagnostics;
//! * [`maps`]: test maps with computable codomain metrics, metric
//!   differentials, and analytic reference densities;
//! * [`mollifiers`]: the kernel families, their tail profiles and layered
//!   sandwich bounds, and the admissibility certifier;
//! * [`energy`]: deterministic and Monte Carlo evaluation of the double
//!   integrals, pointwise difference-quotient densities, extrapolation
//!   helpers, and smoothing operators.

pub mod energy;
pub mod error;
pub mod maps;
pub mod mollifiers;
pub mod quad;
pub mod space;

pub use error::{CoreError, Result};
