//! Metric measure spaces: distances, ball measures, samplers, and the
//! doubling / local-dimension diagnostics.
//!
//! Balls are closed, `B(x,r) = {x' : d(x,x') <= r}`, and always intrinsic to
//! the declared domain: a ball near the boundary is clipped, not extended.
//! All built-in measures are given by a density against length/area, so the
//! open/closed distinction never carries mass.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::quad;

/// A point of a space, at most two coordinates.
///
/// Interval and circle kinds use one coordinate (circle points are stored as
/// arc-length positions in `[0, circumference)`); box and product kinds use
/// two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    coords: [f64; 2],
    dim: u8,
}

impl Point {
    pub fn one(x: f64) -> Self {
        Point {
            coords: [x, 0.0],
            dim: 1,
        }
    }

    pub fn two(x: f64, y: f64) -> Self {
        Point {
            coords: [x, y],
            dim: 2,
        }
    }

    pub fn from_slice(c: &[f64]) -> Result<Self> {
        match c.len() {
            1 => Ok(Point::one(c[0])),
            2 => Ok(Point::two(c[0], c[1])),
            d => Err(CoreError::UnsupportedDimension {
                dim: d,
                detail: "points have one or two coordinates".into(),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    pub fn to_vec(self) -> Vec<f64> {
        self.coords().to_vec()
    }
}

/// Density of the measure on an interval factor, relative to length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Uniform,
    /// w(x) = 1/x; requires the interval to stay away from 0.
    InverseX,
    /// w(x) = x^alpha.
    Power {
        alpha: f64,
    },
    /// w(x) = exp(rate * x).
    Exponential {
        rate: f64,
    },
}

impl Weight {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Weight::Uniform => 1.0,
            Weight::InverseX => 1.0 / x,
            Weight::Power { alpha } => x.powf(*alpha),
            Weight::Exponential { rate } => (rate * x).exp(),
        }
    }

    /// An antiderivative of the density; measures of intervals are
    /// differences of this primitive.
    fn primitive(&self, x: f64) -> f64 {
        match self {
            Weight::Uniform => x,
            Weight::InverseX => x.ln(),
            Weight::Power { alpha } => {
                if (alpha + 1.0).abs() < 1e-12 {
                    x.ln()
                } else {
                    x.powf(alpha + 1.0) / (alpha + 1.0)
                }
            }
            Weight::Exponential { rate } => {
                if rate.abs() < 1e-12 {
                    x
                } else {
                    (rate * x).exp() / rate
                }
            }
        }
    }

    /// Inverse of the primitive, used by the inverse-CDF sampler.
    fn primitive_inv(&self, y: f64) -> f64 {
        match self {
            Weight::Uniform => y,
            Weight::InverseX => y.exp(),
            Weight::Power { alpha } => {
                if (alpha + 1.0).abs() < 1e-12 {
                    y.exp()
                } else {
                    ((alpha + 1.0) * y).powf(1.0 / (alpha + 1.0))
                }
            }
            Weight::Exponential { rate } => {
                if rate.abs() < 1e-12 {
                    y
                } else {
                    (rate * y).ln() / rate
                }
            }
        }
    }

    fn validate_on(&self, a: f64, b: f64) -> Result<()> {
        let positive_needed = match self {
            Weight::InverseX => true,
            Weight::Power { alpha } => *alpha < 0.0,
            _ => false,
        };
        if positive_needed && a <= 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "weight",
                detail: format!(
                    "density is singular at 0; interval [{a}, {b}] must start at a > 0"
                ),
            });
        }
        if let Weight::Power { alpha } = self {
            if !alpha.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name: "alpha",
                    detail: "power-weight exponent must be finite".into(),
                });
            }
        }
        if let Weight::Exponential { rate } = self {
            if !rate.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name: "rate",
                    detail: "exponential-weight rate must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

/// One-dimensional factor of a product space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    Interval { a: f64, b: f64, weight: Weight },
    Circle { radius: f64 },
}

impl Factor {
    fn validate(&self) -> Result<()> {
        match self {
            Factor::Interval { a, b, weight } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(CoreError::InvalidParameter {
                        name: "interval",
                        detail: format!("need finite a < b, got [{a}, {b}]"),
                    });
                }
                weight.validate_on(*a, *b)
            }
            Factor::Circle { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(CoreError::InvalidParameter {
                        name: "radius",
                        detail: format!("need a positive radius, got {radius}"),
                    });
                }
                Ok(())
            }
        }
    }

    /// Coordinate range: `[a, b]` for intervals, `[0, circumference)` for
    /// circle factors.
    fn coord_range(&self) -> (f64, f64) {
        match self {
            Factor::Interval { a, b, .. } => (*a, *b),
            Factor::Circle { radius } => (0.0, std::f64::consts::TAU * radius),
        }
    }

    fn distance(&self, s: f64, t: f64) -> f64 {
        match self {
            Factor::Interval { .. } => (s - t).abs(),
            Factor::Circle { radius } => {
                let circ = std::f64::consts::TAU * radius;
                let d = (s - t).abs() % circ;
                d.min(circ - d)
            }
        }
    }

    fn maxdist(&self, s: f64) -> f64 {
        match self {
            Factor::Interval { a, b, .. } => (s - a).max(b - s),
            Factor::Circle { radius } => std::f64::consts::PI * radius,
        }
    }

    fn diameter(&self) -> f64 {
        match self {
            Factor::Interval { a, b, .. } => b - a,
            Factor::Circle { radius } => std::f64::consts::PI * radius,
        }
    }

    fn total_measure(&self) -> f64 {
        match self {
            Factor::Interval { a, b, weight } => weight.primitive(*b) - weight.primitive(*a),
            Factor::Circle { radius } => std::f64::consts::TAU * radius,
        }
    }

    /// Measure of the 1D ball of radius `s` around coordinate `c`, clipped to
    /// the factor.
    fn ball(&self, c: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Factor::Interval { a, b, weight } => {
                let lo = (c - s).max(*a);
                let hi = (c + s).min(*b);
                if lo >= hi {
                    0.0
                } else {
                    weight.primitive(hi) - weight.primitive(lo)
                }
            }
            Factor::Circle { radius } => (2.0 * s).min(std::f64::consts::TAU * radius),
        }
    }

    fn density(&self, c: f64) -> f64 {
        match self {
            Factor::Interval { weight, .. } => weight.density(c),
            Factor::Circle { .. } => 1.0,
        }
    }

    fn contains(&self, c: f64, tol: f64) -> bool {
        match self {
            Factor::Interval { a, b, .. } => c >= a - tol && c <= b + tol,
            Factor::Circle { .. } => c.is_finite(),
        }
    }

    fn clamp(&self, c: f64) -> f64 {
        match self {
            Factor::Interval { a, b, .. } => c.clamp(*a, *b),
            Factor::Circle { radius } => {
                let circ = std::f64::consts::TAU * radius;
                c.rem_euclid(circ)
            }
        }
    }

    fn offset(&self, c: f64, delta: f64) -> f64 {
        match self {
            Factor::Interval { .. } => c + delta,
            Factor::Circle { radius } => {
                let circ = std::f64::consts::TAU * radius;
                (c + delta).rem_euclid(circ)
            }
        }
    }

    /// Largest `t >= 0` such that moving from `c` by `t * u` stays valid for
    /// the factor metric (interval bound, or half-circumference wrap cap).
    fn ray_bound(&self, c: f64, u: f64) -> f64 {
        match self {
            Factor::Interval { a, b, .. } => {
                if u > 0.0 {
                    (b - c) / u
                } else if u < 0.0 {
                    (c - a) / (-u)
                } else {
                    f64::INFINITY
                }
            }
            Factor::Circle { radius } => {
                if u == 0.0 {
                    f64::INFINITY
                } else {
                    std::f64::consts::PI * radius / u.abs()
                }
            }
        }
    }

    fn sample(&self, lo: f64, hi: f64, u: f64) -> f64 {
        match self {
            Factor::Interval { weight, .. } => {
                let fa = weight.primitive(lo);
                let fb = weight.primitive(hi);
                weight.primitive_inv(fa + u * (fb - fa))
            }
            Factor::Circle { .. } => lo + u * (hi - lo),
        }
    }

    fn range_measure(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Factor::Interval { weight, .. } => weight.primitive(hi) - weight.primitive(lo),
            Factor::Circle { .. } => hi - lo,
        }
    }
}

/// Geometry + measure recipe for the space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    /// `[a, b]` with a weight density against length.
    Interval { a: f64, b: f64, weight: Weight },
    /// Axis-aligned planar box with Lebesgue measure.
    Box2 { lo: [f64; 2], hi: [f64; 2] },
    /// Circle of the given radius with arc-length metric and measure.
    Circle { radius: f64 },
    /// Product of two one-dimensional factors with the l2 product metric and
    /// the product measure.
    Product { fx: Factor, fy: Factor },
}

/// How ball measures are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMethod {
    /// Closed-form measure.
    Analytic,
    /// Deterministic Gauss-Legendre evaluation of the defining integral.
    Quadrature,
    /// Stratified Monte Carlo hit counting (fallback; slow and noisy).
    MonteCarlo,
}

type CacheKey = (u64, u64, u64);

/// A metric measure space with a ball-measure oracle and a sampler.
///
/// The oracle caches quadrature and Monte Carlo ball masses under a key
/// quantized to 12 significant digits, because the kernel certifier hits the
/// same `(x, r/h^k)` pairs over and over. Analytic measures bypass the cache.
#[derive(Debug)]
pub struct Space {
    kind: SpaceKind,
    method: BallMethod,
    dim_override: Option<u32>,
    interior_margin: f64,
    mc_samples: usize,
    mc_seed: u64,
    cache: RwLock<HashMap<CacheKey, f64>>,
}

impl Clone for Space {
    fn clone(&self) -> Self {
        Space {
            kind: self.kind.clone(),
            method: self.method,
            dim_override: self.dim_override,
            interior_margin: self.interior_margin,
            mc_samples: self.mc_samples,
            mc_seed: self.mc_seed,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

/// One weighted sample of a region; weights over a sample sum to the region's
/// measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint {
    pub point: Point,
    pub weight: f64,
}

/// Axis-aligned sub-box of the coordinate domain (angular interval on circle
/// factors).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    dim: u8,
}

impl Region {
    pub fn one(lo: f64, hi: f64) -> Self {
        Region {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
            dim: 1,
        }
    }

    pub fn two(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Region { lo, hi, dim: 2 }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn center(&self) -> Point {
        let cx = 0.5 * (self.lo[0] + self.hi[0]);
        if self.dim == 1 {
            Point::one(cx)
        } else {
            Point::two(cx, 0.5 * (self.lo[1] + self.hi[1]))
        }
    }
}

/// Result of the doubling-constant diagnostic: the sup over sampled centers
/// and grid radii of `m(B(x,2r)) / m(B(x,r))`.
#[derive(Clone, Debug, Serialize)]
pub struct DoublingReport {
    pub constant: f64,
    pub radii: Vec<f64>,
    pub worst_center: Vec<f64>,
    pub worst_radius: f64,
    pub centers_used: usize,
}

/// Result of the local-dimension estimator.
#[derive(Clone, Debug, Serialize)]
pub struct DimensionReport {
    /// Extrapolated value of `log(m(B(x,hr))/m(B(x,r))) / log h` as r -> 0.
    pub estimate: f64,
    /// Per-radius estimates, largest radius first.
    pub samples: Vec<(f64, f64)>,
    /// False when the per-radius trend has not settled; the estimate is still
    /// returned.
    pub converged: bool,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Rounds to 12 significant digits; cache keys tolerate the floating-point
/// noise of radii produced by repeated division.
fn quantize12(v: f64) -> u64 {
    if v == 0.0 || !v.is_finite() {
        return v.to_bits();
    }
    let e = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - e);
    ((v * scale).round() / scale).to_bits()
}

impl Space {
    // ---- constructors ----

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Space::from_kind(SpaceKind::Interval {
            a,
            b,
            weight: Weight::Uniform,
        })
    }

    pub fn weighted_interval(a: f64, b: f64, weight: Weight) -> Result<Self> {
        Space::from_kind(SpaceKind::Interval { a, b, weight })
    }

    pub fn box2(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        Space::from_kind(SpaceKind::Box2 { lo, hi })
    }

    pub fn unit_square() -> Self {
        Space::box2([0.0, 0.0], [1.0, 1.0]).expect("unit square is valid")
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Space::from_kind(SpaceKind::Circle { radius })
    }

    pub fn product(fx: Factor, fy: Factor) -> Result<Self> {
        Space::from_kind(SpaceKind::Product { fx, fy })
    }

    pub fn from_kind(kind: SpaceKind) -> Result<Self> {
        match &kind {
            SpaceKind::Interval { a, b, weight } => {
                Factor::Interval {
                    a: *a,
                    b: *b,
                    weight: *weight,
                }
                .validate()?;
            }
            SpaceKind::Box2 { lo, hi } => {
                for i in 0..2 {
                    if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                        return Err(CoreError::InvalidParameter {
                            name: "box",
                            detail: format!(
                                "axis {i} needs finite lo < hi, got [{}, {}]",
                                lo[i], hi[i]
                            ),
                        });
                    }
                }
            }
            SpaceKind::Circle { radius } => {
                Factor::Circle { radius: *radius }.validate()?;
            }
            SpaceKind::Product { fx, fy } => {
                fx.validate()?;
                fy.validate()?;
            }
        }
        let method = match &kind {
            SpaceKind::Interval {
                weight: Weight::Uniform,
                ..
            } => BallMethod::Analytic,
            SpaceKind::Interval { .. } => BallMethod::Quadrature,
            SpaceKind::Box2 { .. } => BallMethod::Analytic,
            SpaceKind::Circle { .. } => BallMethod::Analytic,
            SpaceKind::Product { .. } => BallMethod::Quadrature,
        };
        Ok(Space {
            kind,
            method,
            dim_override: None,
            interior_margin: 0.0,
            mc_samples: 100_000,
            mc_seed: 0x5ba11,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Replaces the ball-measure method, when available for the kind.
    pub fn with_ball_method(mut self, method: BallMethod) -> Result<Self> {
        if method == BallMethod::Analytic && matches!(self.kind, SpaceKind::Product { .. }) {
            return Err(CoreError::InvalidParameter {
                name: "method",
                detail: "product spaces have no closed-form ball measure".into(),
            });
        }
        self.method = method;
        self.cache = RwLock::new(HashMap::new());
        Ok(self)
    }

    /// Declares how far a point must stay from the boundary to count as well
    /// contained. Must be smaller than half the smallest domain side.
    pub fn with_interior_margin(mut self, margin: f64) -> Result<Self> {
        let limit = 0.5 * self.smallest_side();
        if !(margin >= 0.0 && margin < limit) {
            return Err(CoreError::InvalidParameter {
                name: "interior_margin",
                detail: format!("need 0 <= margin < {limit}, got {margin}"),
            });
        }
        self.interior_margin = margin;
        Ok(self)
    }

    /// Overrides the declared pointwise dimension (diagnostics still measure
    /// the geometric one).
    pub fn with_dim_override(mut self, dim: u32) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidParameter {
                name: "dim",
                detail: "declared dimension must be positive".into(),
            });
        }
        self.dim_override = Some(dim);
        Ok(self)
    }

    pub fn with_mc_parameters(mut self, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(CoreError::InvalidParameter {
                name: "samples",
                detail: "need at least one sample".into(),
            });
        }
        self.mc_samples = samples;
        self.mc_seed = seed;
        self.cache = RwLock::new(HashMap::new());
        Ok(self)
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn ball_method(&self) -> BallMethod {
        self.method
    }

    pub fn interior_margin(&self) -> f64 {
        self.interior_margin
    }

    // ---- basic geometry ----

    /// Coordinate dimension (1 or 2).
    pub fn coord_dim(&self) -> usize {
        match self.kind {
            SpaceKind::Interval { .. } | SpaceKind::Circle { .. } => 1,
            SpaceKind::Box2 { .. } | SpaceKind::Product { .. } => 2,
        }
    }

    /// Declared pointwise dimension used by the limit-constant formulas.
    /// Constant for every built-in kind.
    pub fn declared_dim(&self, _x: &Point) -> u32 {
        self.dim_override.unwrap_or(self.coord_dim() as u32)
    }

    fn factors(&self) -> (Factor, Option<Factor>) {
        match &self.kind {
            SpaceKind::Interval { a, b, weight } => (
                Factor::Interval {
                    a: *a,
                    b: *b,
                    weight: *weight,
                },
                None,
            ),
            SpaceKind::Circle { radius } => (Factor::Circle { radius: *radius }, None),
            SpaceKind::Box2 { lo, hi } => (
                Factor::Interval {
                    a: lo[0],
                    b: hi[0],
                    weight: Weight::Uniform,
                },
                Some(Factor::Interval {
                    a: lo[1],
                    b: hi[1],
                    weight: Weight::Uniform,
                }),
            ),
            SpaceKind::Product { fx, fy } => (*fx, Some(*fy)),
        }
    }

    fn smallest_side(&self) -> f64 {
        let (fx, fy) = self.factors();
        match fy {
            None => fx.diameter(),
            Some(fy) => fx.diameter().min(fy.diameter()),
        }
    }

    pub fn diameter(&self) -> f64 {
        let (fx, fy) = self.factors();
        match fy {
            None => fx.diameter(),
            Some(fy) => fx.diameter().hypot(fy.diameter()),
        }
    }

    pub fn total_measure(&self) -> f64 {
        let (fx, fy) = self.factors();
        match fy {
            None => fx.total_measure(),
            Some(fy) => fx.total_measure() * fy.total_measure(),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        let (fx, fy) = self.factors();
        match fy {
            None => fx.distance(x.x(), y.x()),
            Some(fy) => fx.distance(x.x(), y.x()).hypot(fy.distance(x.y(), y.y())),
        }
    }

    /// Largest distance from `x` to any point of the domain; balls of radius
    /// at least this cover everything, so kernel suprema over the complement
    /// vanish beyond it.
    pub fn maxdist(&self, x: &Point) -> f64 {
        let (fx, fy) = self.factors();
        match fy {
            None => fx.maxdist(x.x()),
            Some(fy) => fx.maxdist(x.x()).hypot(fy.maxdist(x.y())),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        if x.dim() != self.coord_dim() {
            return false;
        }
        let tol = 1e-9 * self.diameter();
        let (fx, fy) = self.factors();
        match fy {
            None => fx.contains(x.x(), tol),
            Some(fy) => fx.contains(x.x(), tol) && fy.contains(x.y(), tol),
        }
    }

    pub fn clamp_to_domain(&self, x: &Point) -> Point {
        let (fx, fy) = self.factors();
        match fy {
            None => Point::one(fx.clamp(x.x())),
            Some(fy) => Point::two(fx.clamp(x.x()), fy.clamp(x.y())),
        }
    }

    /// Distance from `x` to the boundary (infinite for the circle, which has
    /// none).
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        let (fx, fy) = self.factors();
        let one = |f: &Factor, c: f64| match f {
            Factor::Interval { a, b, .. } => (c - a).min(b - c),
            Factor::Circle { .. } => f64::INFINITY,
        };
        match fy {
            None => one(&fx, x.x()),
            Some(fy) => one(&fx, x.x()).min(one(&fy, x.y())),
        }
    }

    /// Measure density at a point, relative to length/area in coordinates.
    pub fn weight_at(&self, x: &Point) -> f64 {
        let (fx, fy) = self.factors();
        match fy {
            None => fx.density(x.x()),
            Some(fy) => fx.density(x.x()) * fy.density(x.y()),
        }
    }

    /// Moves `x` by `t` along a 1D side (+1/-1), wrapping on circles.
    pub fn offset_1d(&self, x: &Point, side: f64, t: f64) -> Point {
        let (fx, _) = self.factors();
        Point::one(fx.offset(x.x(), side * t))
    }

    /// Moves `x` by `t * u` in coordinates, wrapping circle factors.
    pub fn offset_2d(&self, x: &Point, u: [f64; 2], t: f64) -> Point {
        let (fx, fy) = self.factors();
        let fy = fy.expect("offset_2d requires a two-dimensional kind");
        Point::two(fx.offset(x.x(), t * u[0]), fy.offset(x.y(), t * u[1]))
    }

    /// For 1D kinds: the two ray directions from `x` with their in-domain
    /// reach.
    pub fn rays_1d(&self, x: &Point) -> [(f64, f64); 2] {
        let (fx, _) = self.factors();
        [
            (1.0, fx.ray_bound(x.x(), 1.0)),
            (-1.0, fx.ray_bound(x.x(), -1.0)),
        ]
    }

    /// For 2D kinds: how far the ray `t -> x + t u` stays valid.
    pub fn ray_exit(&self, x: &Point, u: [f64; 2]) -> f64 {
        let (fx, fy) = self.factors();
        let fy = fy.expect("ray_exit requires a two-dimensional kind");
        fx.ray_bound(x.x(), u[0]).min(fy.ray_bound(x.y(), u[1]))
    }

    /// Angles (in `[0, 2pi)`) where the radial exit distance from `x` has a
    /// kink; polar quadrature splits panels there.
    pub fn corner_angles(&self, x: &Point) -> Vec<f64> {
        let (fx, fy) = self.factors();
        let fy = match fy {
            Some(f) => f,
            None => return Vec::new(),
        };
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        if let Factor::Interval { a, b, .. } = fx {
            xs.push(a - x.x());
            xs.push(b - x.x());
        }
        if let Factor::Interval { a, b, .. } = fy {
            ys.push(a - x.y());
            ys.push(b - x.y());
        }
        let mut out = Vec::new();
        for dx in &xs {
            for dy in &ys {
                out.push(dy.atan2(*dx).rem_euclid(std::f64::consts::TAU));
            }
        }
        // axis-crossing angles: exit switches between the two factors there
        for dx in &xs {
            out.push(dx.signum().atan2(0.0_f64).rem_euclid(std::f64::consts::TAU));
        }
        out.sort_by(|p, q| p.partial_cmp(q).expect("angles are finite"));
        out.dedup_by(|p, q| (*p - *q).abs() < 1e-12);
        out
    }

    /// Radii where `r -> m(B(x,r))` has a kink (boundary contacts, corner
    /// contacts, wrap-around). Quadratures over radial profiles split there.
    pub fn measure_kink_radii(&self, x: &Point) -> Vec<f64> {
        let (fx, fy) = self.factors();
        let mut out = Vec::new();
        let side_dists = |f: &Factor, c: f64, acc: &mut Vec<f64>| match f {
            Factor::Interval { a, b, .. } => {
                acc.push(c - a);
                acc.push(b - c);
            }
            Factor::Circle { radius } => {
                acc.push(std::f64::consts::PI * radius);
            }
        };
        match fy {
            None => side_dists(&fx, x.x(), &mut out),
            Some(fy) => {
                let mut dx = Vec::new();
                let mut dy = Vec::new();
                side_dists(&fx, x.x(), &mut dx);
                side_dists(&fy, x.y(), &mut dy);
                out.extend(dx.iter().copied());
                out.extend(dy.iter().copied());
                for a in &dx {
                    for b in &dy {
                        out.push(a.hypot(*b));
                    }
                }
            }
        }
        out.retain(|t| t.is_finite() && *t > 0.0);
        out.sort_by(|p, q| p.partial_cmp(q).expect("radii are finite"));
        out.dedup_by(|p, q| (*p - *q).abs() < 1e-15);
        out
    }

    // ---- ball measures ----

    /// Mass of the closed ball `B(x, r)`, intrinsic to the domain.
    pub fn ball_measure(&self, x: &Point, r: f64) -> Result<f64> {
        if !self.contains(x) {
            return Err(CoreError::OutsideDomain {
                point: x.to_vec(),
                detail: format!("domain is {:?}", self.kind),
            });
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(CoreError::InvalidRadius {
                radius: r,
                detail: "ball radius must be positive and finite".into(),
            });
        }
        Ok(self.ball_measure_unchecked(x, r))
    }

    /// Hot-path ball measure; assumes `x` in the domain and `r > 0`.
    pub(crate) fn ball_measure_unchecked(&self, x: &Point, r: f64) -> f64 {
        match self.method {
            BallMethod::Analytic => self.ball_analytic(x, r),
            BallMethod::Quadrature | BallMethod::MonteCarlo => {
                let key = match x.dim() {
                    1 => (quantize12(x.x()), 0u64, quantize12(r)),
                    _ => (quantize12(x.x()), quantize12(x.y()), quantize12(r)),
                };
                if let Some(v) = self.cache.read().expect("ball cache poisoned").get(&key) {
                    return *v;
                }
                let v = match self.method {
                    BallMethod::Quadrature => self.ball_quadrature(x, r),
                    _ => self.ball_monte_carlo(x, r, key),
                };
                self.cache
                    .write()
                    .expect("ball cache poisoned")
                    .insert(key, v);
                v
            }
        }
    }

    fn ball_analytic(&self, x: &Point, r: f64) -> f64 {
        match &self.kind {
            SpaceKind::Interval { .. } | SpaceKind::Circle { .. } => {
                let (fx, _) = self.factors();
                fx.ball(x.x(), r)
            }
            SpaceKind::Box2 { lo, hi } => disk_rect_area(
                r,
                lo[0] - x.x(),
                hi[0] - x.x(),
                lo[1] - x.y(),
                hi[1] - x.y(),
            ),
            SpaceKind::Product { .. } => {
                unreachable!("analytic method is rejected for product spaces")
            }
        }
    }

    fn ball_quadrature(&self, x: &Point, r: f64) -> f64 {
        match &self.kind {
            SpaceKind::Interval { a, b, weight } => {
                let lo = (x.x() - r).max(*a);
                let hi = (x.x() + r).min(*b);
                if lo >= hi {
                    0.0
                } else {
                    quad::integrate_adaptive(|t| weight.density(t), lo, hi, 1e-13)
                }
            }
            SpaceKind::Circle { .. } | SpaceKind::Box2 { .. } => self.ball_analytic(x, r),
            SpaceKind::Product { fx, fy } => product_ball(fx, fy, [x.x(), x.y()], r),
        }
    }

    fn ball_monte_carlo(&self, x: &Point, r: f64, key: CacheKey) -> f64 {
        let seed = self
            .mc_seed
            .wrapping_add(splitmix(key.0 ^ splitmix(key.1 ^ splitmix(key.2))));
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (fx, fy) = self.factors();
        // bounding coordinate box of the ball, clipped to the domain
        let clip = |f: &Factor, c: f64| -> (f64, f64) {
            let (a, b) = f.coord_range();
            match f {
                Factor::Interval { .. } => ((c - r).max(a), (c + r).min(b)),
                Factor::Circle { radius } => {
                    let reach = r.min(std::f64::consts::PI * radius);
                    (c - reach, c + reach)
                }
            }
        };
        match fy {
            None => {
                let (lo, hi) = clip(&fx, x.x());
                if lo >= hi {
                    return 0.0;
                }
                let n = self.mc_samples;
                let step = (hi - lo) / n as f64;
                let mut acc = 0.0;
                for i in 0..n {
                    let t = lo + step * (i as f64 + rng.gen::<f64>());
                    let p = Point::one(fx.clamp(t));
                    if fx.distance(p.x(), x.x()) <= r {
                        acc += fx.density(p.x());
                    }
                }
                acc * step
            }
            Some(fy) => {
                let (lx, hx) = clip(&fx, x.x());
                let (ly, hy) = clip(&fy, x.y());
                if lx >= hx || ly >= hy {
                    return 0.0;
                }
                let k = (self.mc_samples as f64).sqrt().ceil() as usize;
                let (sx, sy) = ((hx - lx) / k as f64, (hy - ly) / k as f64);
                let mut acc = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        let cx = lx + sx * (i as f64 + rng.gen::<f64>());
                        let cy = ly + sy * (j as f64 + rng.gen::<f64>());
                        let p = Point::two(fx.clamp(cx), fy.clamp(cy));
                        let d = fx.distance(p.x(), x.x()).hypot(fy.distance(p.y(), x.y()));
                        if d <= r {
                            acc += fx.density(p.x()) * fy.density(p.y());
                        }
                    }
                }
                acc * sx * sy
            }
        }
    }

    /// `m(B(x, s)) / s^D` with `D` the coordinate dimension, frozen below
    /// `1e-7 * diameter`. The frozen form keeps the ratio finite and smooth
    /// down to `s = 0`, where the raw quotient would lose all precision to
    /// cancellation in `x +- s`.
    pub fn ball_measure_scaled(&self, x: &Point, s: f64) -> f64 {
        let d = self.coord_dim() as i32;
        let s_safe = 1e-7 * self.diameter();
        let ss = s.max(s_safe);
        self.ball_measure_unchecked(x, ss) / ss.powi(d)
    }

    // ---- sampling ----

    pub fn full_region(&self) -> Region {
        let (fx, fy) = self.factors();
        match fy {
            None => {
                let (a, b) = fx.coord_range();
                Region::one(a, b)
            }
            Some(fy) => {
                let (ax, bx) = fx.coord_range();
                let (ay, by) = fy.coord_range();
                Region::two([ax, ay], [bx, by])
            }
        }
    }

    pub fn region_measure(&self, region: &Region) -> Result<f64> {
        self.check_region(region)?;
        let (fx, fy) = self.factors();
        Ok(match fy {
            None => fx.range_measure(region.lo[0], region.hi[0]),
            Some(fy) => {
                fx.range_measure(region.lo[0], region.hi[0])
                    * fy.range_measure(region.lo[1], region.hi[1])
            }
        })
    }

    pub(crate) fn check_region(&self, region: &Region) -> Result<()> {
        if region.dim() != self.coord_dim() {
            return Err(CoreError::InvalidRegion(format!(
                "region dimension {} does not match space dimension {}",
                region.dim(),
                self.coord_dim()
            )));
        }
        let (fx, fy) = self.factors();
        let tol = 1e-9 * self.diameter();
        let check_axis = |f: &Factor, lo: f64, hi: f64| -> Result<()> {
            let (a, b) = f.coord_range();
            if !(lo < hi) {
                return Err(CoreError::InvalidRegion(format!(
                    "empty axis range [{lo}, {hi}]"
                )));
            }
            if lo < a - tol || hi > b + tol {
                return Err(CoreError::InvalidRegion(format!(
                    "range [{lo}, {hi}] leaves the domain [{a}, {b}]"
                )));
            }
            Ok(())
        };
        check_axis(&fx, region.lo[0], region.hi[0])?;
        if let Some(fy) = fy {
            check_axis(&fy, region.lo[1], region.hi[1])?;
        }
        Ok(())
    }

    /// Draws `n` points of `region` from the normalized measure by inverse
    /// CDF, each carrying weight `m(region)/n`. Deterministic in `seed`.
    pub fn sample_points(&self, region: &Region, n: usize, seed: u64) -> Result<Vec<SamplePoint>> {
        if n == 0 {
            return Err(CoreError::InvalidParameter {
                name: "n",
                detail: "need at least one sample".into(),
            });
        }
        let mass = self.region_measure(region)?;
        if !(mass > 0.0) {
            return Err(CoreError::DegenerateMeasure(format!(
                "region has measure {mass}"
            )));
        }
        let (fx, fy) = self.factors();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let w = mass / n as f64;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let px = fx.sample(region.lo[0], region.hi[0], rng.gen::<f64>());
            let point = match fy {
                None => Point::one(px),
                Some(fy) => Point::two(px, fy.sample(region.lo[1], region.hi[1], rng.gen::<f64>())),
            };
            out.push(SamplePoint { point, weight: w });
        }
        Ok(out)
    }

    /// Integrates `f` against the measure over the whole domain with
    /// composite Gauss-Legendre panels, splitting each axis at the supplied
    /// breakpoints (out-of-range entries are ignored).
    pub fn integrate_domain<F: FnMut(&Point) -> f64>(
        &self,
        mut f: F,
        axis_breaks: [&[f64]; 2],
        panels: usize,
        order: usize,
    ) -> f64 {
        let (fx, fy) = self.factors();
        let (ax, bx) = fx.coord_range();
        let pts_x = quad::breakpoints_in(ax, bx, axis_breaks[0]);
        match fy {
            None => quad::integrate_partition(
                |t| {
                    let pt = Point::one(t);
                    f(&pt) * fx.density(t)
                },
                &pts_x,
                panels,
                order,
            ),
            Some(fy) => {
                let (ay, by) = fy.coord_range();
                let pts_y = quad::breakpoints_in(ay, by, axis_breaks[1]);
                quad::integrate_partition(
                    |u| {
                        let inner = quad::integrate_partition(
                            |v| {
                                let pt = Point::two(u, v);
                                f(&pt) * fy.density(v)
                            },
                            &pts_y,
                            panels,
                            order,
                        );
                        inner * fx.density(u)
                    },
                    &pts_x,
                    panels,
                    order,
                )
            }
        }
    }

    // ---- diagnostics ----

    /// Sup over sampled centers and the radius grid of
    /// `m(B(x,2r)) / m(B(x,r))`. Boundary-clipped balls participate; the
    /// grid should stay small next to the region for the ratio to mean local
    /// doubling.
    pub fn estimate_doubling(
        &self,
        region: &Region,
        radii: &[f64],
        n_centers: usize,
        seed: u64,
    ) -> Result<DoublingReport> {
        if radii.is_empty() {
            return Err(CoreError::InvalidParameter {
                name: "radii",
                detail: "need at least one radius".into(),
            });
        }
        for r in radii {
            if !(r.is_finite() && *r > 0.0) {
                return Err(CoreError::InvalidRadius {
                    radius: *r,
                    detail: "doubling radii must be positive and finite".into(),
                });
            }
        }
        let mut centers: Vec<Point> = vec![region.center()];
        centers.extend(
            self.sample_points(region, n_centers.max(1), seed)?
                .into_iter()
                .map(|s| s.point),
        );
        let mut best = f64::NEG_INFINITY;
        let mut worst_center = centers[0];
        let mut worst_radius = radii[0];
        for c in &centers {
            for &r in radii {
                let small = self.ball_measure_unchecked(c, r);
                if !(small > 0.0) {
                    return Err(CoreError::DegenerateMeasure(format!(
                        "ball of radius {r} at {:?} has zero mass",
                        c.coords()
                    )));
                }
                let ratio = self.ball_measure_unchecked(c, 2.0 * r) / small;
                if ratio > best {
                    best = ratio;
                    worst_center = *c;
                    worst_radius = r;
                }
            }
        }
        Ok(DoublingReport {
            constant: best,
            radii: radii.to_vec(),
            worst_center: worst_center.to_vec(),
            worst_radius,
            centers_used: centers.len(),
        })
    }

    /// Scaling exponent of `r -> m(B(x,r))`, extrapolated linearly in `r`
    /// over the grid. A diagnostic: the limit-constant formulas use the
    /// declared dimension, not this estimate.
    pub fn dimension_at(&self, x: &Point, radii: &[f64], h: f64) -> Result<DimensionReport> {
        if !self.contains(x) {
            return Err(CoreError::OutsideDomain {
                point: x.to_vec(),
                detail: "dimension probe point must lie in the domain".into(),
            });
        }
        if !(h.is_finite() && h > 1.0) {
            return Err(CoreError::InvalidParameter {
                name: "h",
                detail: format!("scale ratio must exceed 1, got {h}"),
            });
        }
        if radii.is_empty() {
            return Err(CoreError::InvalidParameter {
                name: "radii",
                detail: "need at least one radius".into(),
            });
        }
        let mut grid: Vec<f64> = radii.to_vec();
        for r in &grid {
            if !(r.is_finite() && *r > 0.0) {
                return Err(CoreError::InvalidRadius {
                    radius: *r,
                    detail: "dimension radii must be positive and finite".into(),
                });
            }
        }
        grid.sort_by(|p, q| q.partial_cmp(p).expect("radii are finite"));
        let lh = h.ln();
        let mut samples = Vec::with_capacity(grid.len());
        for &r in &grid {
            let small = self.ball_measure_unchecked(x, r);
            let big = self.ball_measure_unchecked(x, h * r);
            if !(small > 0.0 && big > 0.0) {
                return Err(CoreError::DegenerateMeasure(format!(
                    "ball of radius {r} at {:?} has zero mass",
                    x.coords()
                )));
            }
            samples.push((r, (big / small).ln() / lh));
        }
        // least-squares line est = c0 + c1 * r, read off the intercept
        let estimate = if samples.len() == 1 {
            samples[0].1
        } else {
            let n = samples.len() as f64;
            let sx: f64 = samples.iter().map(|s| s.0).sum();
            let sy: f64 = samples.iter().map(|s| s.1).sum();
            let sxx: f64 = samples.iter().map(|s| s.0 * s.0).sum();
            let sxy: f64 = samples.iter().map(|s| s.0 * s.1).sum();
            let det = n * sxx - sx * sx;
            if det.abs() < 1e-300 {
                sy / n
            } else {
                (sy * sxx - sx * sxy) / det
            }
        };
        let last = samples.last().expect("grid is nonempty").1;
        let converged =
            samples.len() >= 2 && (last - estimate).abs() <= 0.01 * estimate.abs().max(1.0);
        Ok(DimensionReport {
            estimate,
            samples,
            converged,
        })
    }
}

/// Area of the intersection of the disk of radius `r` centered at the origin
/// with the rectangle `[x1,x2] x [y1,y2]`, by exact chordwise integration.
/// The antiderivative of a chord is elementary; breakpoints are inserted
/// where the circle crosses the horizontal edges, so every piece integrates
/// a smooth expression.
fn disk_rect_area(r: f64, x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    if r <= 0.0 || x1 >= x2 || y1 >= y2 {
        return 0.0;
    }
    let lo = x1.max(-r);
    let hi = x2.min(r);
    if lo >= hi {
        return 0.0;
    }
    // antiderivative of t -> sqrt(r^2 - t^2)
    let cap = |t: f64| -> f64 {
        let t = t.clamp(-r, r);
        0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
    };
    let mut raw = Vec::new();
    for y in [y1, y2] {
        if y.abs() < r {
            let t = (r * r - y * y).sqrt();
            raw.push(t);
            raw.push(-t);
        }
    }
    let pts = quad::breakpoints_in(lo, hi, &raw);
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let c = (r * r - mid * mid).max(0.0).sqrt();
        let top = y2.min(c);
        let bot = y1.max(-c);
        if top <= bot {
            continue;
        }
        let top_int = if c <= y2 {
            cap(b) - cap(a)
        } else {
            y2 * (b - a)
        };
        let bot_int = if -c >= y1 {
            -(cap(b) - cap(a))
        } else {
            y1 * (b - a)
        };
        area += top_int - bot_int;
    }
    area
}

/// Product-space ball mass by slicing along factor one: with `u = r sin(phi)`
/// the slice at displacement `u` carries factor-two mass `m2(B(., r cos(phi)))`
/// and factor-one density `w1`. Panels split where a slice starts clipping
/// either factor, so each piece is smooth.
fn product_ball(fx: &Factor, fy: &Factor, c: [f64; 2], r: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let mut raw = Vec::new();
    // factor-one reach limits expressed as phi = asin(u/r)
    let push_u = |u: f64, raw: &mut Vec<f64>| {
        if u.abs() < r {
            raw.push((u / r).asin());
        }
    };
    match fx {
        Factor::Interval { a, b, .. } => {
            push_u(a - c[0], &mut raw);
            push_u(b - c[0], &mut raw);
        }
        Factor::Circle { radius } => {
            push_u(-std::f64::consts::PI * radius, &mut raw);
            push_u(std::f64::consts::PI * radius, &mut raw);
        }
    }
    // factor-two clipping radii expressed as phi = +-acos(s/r)
    let push_s = |s: f64, raw: &mut Vec<f64>| {
        if s > 0.0 && s < r {
            let phi = (s / r).acos();
            raw.push(phi);
            raw.push(-phi);
        }
    };
    match fy {
        Factor::Interval { a, b, .. } => {
            push_s(c[1] - a, &mut raw);
            push_s(b - c[1], &mut raw);
        }
        Factor::Circle { radius } => {
            push_s(std::f64::consts::PI * radius, &mut raw);
        }
    }
    let pts = quad::breakpoints_in(-FRAC_PI_2, FRAC_PI_2, &raw);
    let mut mass = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let u_mid = r * mid.sin();
        // skip slices that left factor one entirely
        let inside = match fx {
            Factor::Interval { a: fa, b: fb, .. } => c[0] + u_mid >= *fa && c[0] + u_mid <= *fb,
            Factor::Circle { radius } => u_mid.abs() <= std::f64::consts::PI * radius,
        };
        if !inside {
            continue;
        }
        mass += quad::integrate_composite(
            |phi| {
                let u = r * phi.sin();
                let s = r * phi.cos();
                fx.density(fx.offset(c[0], u)) * fy.ball(c[1], s) * s
            },
            a,
            b,
            4,
            16,
        );
    }
    mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_ball_measures_match_lengths() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        let m = sp.ball_measure(&Point::one(0.5), 0.1).unwrap();
        assert_relative_eq!(m, 0.2, max_relative = 1e-14);
        let clipped = sp.ball_measure(&Point::one(0.05), 0.1).unwrap();
        assert_relative_eq!(clipped, 0.15, max_relative = 1e-14);
    }

    #[test]
    fn weighted_interval_ball_matches_log_integral() {
        let sp = Space::weighted_interval(0.1, 0.9, Weight::InverseX).unwrap();
        assert_eq!(sp.ball_method(), BallMethod::Quadrature);
        let m = sp.ball_measure(&Point::one(0.5), 0.1).unwrap();
        assert_relative_eq!(m, 1.5f64.ln(), max_relative = 1e-12);
        // closed-form route agrees with the quadrature default
        let analytic = sp.clone().with_ball_method(BallMethod::Analytic).unwrap();
        let ma = analytic.ball_measure(&Point::one(0.5), 0.1).unwrap();
        assert_relative_eq!(m, ma, max_relative = 1e-12);
    }

    #[test]
    fn weighted_variants_have_consistent_primitive_and_density() {
        for w in [
            Weight::InverseX,
            Weight::Power { alpha: 1.5 },
            Weight::Power { alpha: -0.5 },
            Weight::Exponential { rate: 0.7 },
        ] {
            // derivative of the primitive is the density
            for x in [0.3, 0.55, 0.8] {
                let h = 1e-6;
                let fd = (w.primitive(x + h) - w.primitive(x - h)) / (2.0 * h);
                assert_relative_eq!(fd, w.density(x), max_relative = 1e-8);
                let y = w.primitive(x);
                assert_relative_eq!(w.primitive_inv(y), x, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn disk_in_unit_square_has_known_areas() {
        let sp = Space::unit_square();
        let pi = std::f64::consts::PI;
        let interior = sp.ball_measure(&Point::two(0.5, 0.5), 0.1).unwrap();
        assert_relative_eq!(interior, pi * 0.01, max_relative = 1e-13);
        let corner = sp.ball_measure(&Point::two(0.0, 0.0), 0.1).unwrap();
        assert_relative_eq!(corner, 0.25 * pi * 0.01, max_relative = 1e-13);
        let edge = sp.ball_measure(&Point::two(0.5, 0.0), 0.1).unwrap();
        assert_relative_eq!(edge, 0.5 * pi * 0.01, max_relative = 1e-13);
        let all = sp.ball_measure(&Point::two(0.5, 0.5), 2.0).unwrap();
        assert_relative_eq!(all, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn clipped_disk_agrees_with_monte_carlo() {
        let sp = Space::unit_square();
        let x = Point::two(0.05, 0.08);
        let exact = sp.ball_measure(&x, 0.1).unwrap();
        let mc = Space::unit_square()
            .with_ball_method(BallMethod::MonteCarlo)
            .unwrap()
            .with_mc_parameters(400_000, 11)
            .unwrap();
        let est = mc.ball_measure(&x, 0.1).unwrap();
        assert_relative_eq!(exact, est, max_relative = 5e-3);
    }

    #[test]
    fn product_of_uniform_intervals_matches_box() {
        let sp = Space::product(
            Factor::Interval {
                a: 0.0,
                b: 1.0,
                weight: Weight::Uniform,
            },
            Factor::Interval {
                a: 0.0,
                b: 1.0,
                weight: Weight::Uniform,
            },
        )
        .unwrap();
        let boxsp = Space::unit_square();
        for (x, r) in [
            (Point::two(0.5, 0.5), 0.1),
            (Point::two(0.05, 0.08), 0.1),
            (Point::two(0.9, 0.2), 0.25),
            (Point::two(0.0, 0.0), 0.3),
        ] {
            let a = sp.ball_measure(&x, r).unwrap();
            let b = boxsp.ball_measure(&x, r).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn circle_ball_saturates_at_full_circumference() {
        let sp = Space::circle(1.0).unwrap();
        let x = Point::one(0.3);
        assert_relative_eq!(sp.ball_measure(&x, 0.2).unwrap(), 0.4, max_relative = 1e-14);
        let tau = std::f64::consts::TAU;
        assert_relative_eq!(
            sp.ball_measure(&x, 10.0).unwrap(),
            tau,
            max_relative = 1e-14
        );
        // wrap-around distance
        let d = sp.distance(&Point::one(0.1), &Point::one(tau - 0.1));
        assert_relative_eq!(d, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn ball_measure_rejects_bad_input() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            sp.ball_measure(&Point::one(1.5), 0.1),
            Err(CoreError::OutsideDomain { .. })
        ));
        assert!(matches!(
            sp.ball_measure(&Point::one(0.5), -0.1),
            Err(CoreError::InvalidRadius { .. })
        ));
        assert!(matches!(
            sp.ball_measure(&Point::one(0.5), f64::NAN),
            Err(CoreError::InvalidRadius { .. })
        ));
    }

    #[test]
    fn scaled_ball_ratio_freezes_below_threshold() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        let x = Point::one(0.5);
        // interior: m(B)/s = 2 for any s smaller than the boundary distance;
        // the frozen quotient keeps ~1e-10 relative accuracy (cancellation in
        // x +- s at the freeze scale), which is all the energy code needs
        assert_relative_eq!(sp.ball_measure_scaled(&x, 1e-3), 2.0, max_relative = 1e-12);
        assert_relative_eq!(sp.ball_measure_scaled(&x, 1e-30), 2.0, max_relative = 1e-9);
        assert_relative_eq!(sp.ball_measure_scaled(&x, 0.0), 2.0, max_relative = 1e-9);
        // one-sided at the boundary
        assert_relative_eq!(
            sp.ball_measure_scaled(&Point::one(0.0), 1e-30),
            1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn sampler_is_deterministic_and_mass_preserving() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        let region = sp.full_region();
        let a = sp.sample_points(&region, 4, 7).unwrap();
        let b = sp.sample_points(&region, 4, 7).unwrap();
        assert_eq!(a, b);
        let total: f64 = a.iter().map(|s| s.weight).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let c = sp.sample_points(&region, 4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn weighted_sampler_tracks_the_log_cdf() {
        let sp = Space::weighted_interval(0.1, 0.9, Weight::InverseX).unwrap();
        let region = sp.full_region();
        let n = 4000;
        let mut xs: Vec<f64> = sp
            .sample_points(&region, n, 3)
            .unwrap()
            .iter()
            .map(|s| s.point.x())
            .collect();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let ln9 = 9f64.ln();
        let mut worst: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let emp = (i as f64 + 0.5) / n as f64;
            let cdf = (x / 0.1).ln() / ln9;
            worst = worst.max((emp - cdf).abs());
        }
        assert!(worst < 0.03, "sup CDF deviation {worst} too large");
    }

    #[test]
    fn sampler_rejects_regions_outside_the_domain() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            sp.sample_points(&Region::one(0.5, 1.5), 10, 1),
            Err(CoreError::InvalidRegion(_))
        ));
        assert!(matches!(
            sp.sample_points(&Region::one(0.7, 0.7), 10, 1),
            Err(CoreError::InvalidRegion(_))
        ));
    }

    #[test]
    fn doubling_constant_of_the_line_segment_is_two() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        let report = sp
            .estimate_doubling(&sp.full_region(), &[0.1, 0.05, 0.02], 100, 5)
            .unwrap();
        assert!(
            (report.constant - 2.0).abs() < 0.01,
            "got {}",
            report.constant
        );
    }

    #[test]
    fn doubling_constant_of_the_square_interior_is_four() {
        let sp = Space::unit_square();
        let region = Region::two([0.25, 0.25], [0.75, 0.75]);
        let report = sp.estimate_doubling(&region, &[0.05, 0.02], 60, 5).unwrap();
        assert!(
            (report.constant - 4.0).abs() < 0.05,
            "got {}",
            report.constant
        );
    }

    #[test]
    fn doubling_on_the_weighted_interval_peaks_near_the_singular_end() {
        let sp = Space::weighted_interval(0.1, 0.9, Weight::InverseX).unwrap();
        let report = sp
            .estimate_doubling(&sp.full_region(), &[0.05], 400, 5)
            .unwrap();
        // exact sup over centers: ln3/ln(5/3) at x = 0.2, decreasing in x
        let reference = 3f64.ln() / (5f64 / 3.0).ln();
        assert!(report.constant >= 2.0);
        assert!(report.constant <= reference + 1e-9);
        assert!(
            (report.constant - reference).abs() < 0.05,
            "got {} want ~{reference}",
            report.constant
        );
        assert!(report.worst_center[0] < 0.3);
    }

    #[test]
    fn dimension_estimates_match_the_ambient_dimension() {
        let interval = Space::interval(0.0, 1.0).unwrap();
        let grid = [1e-2, 5e-3, 2e-3, 1e-3];
        let r1 = interval.dimension_at(&Point::one(0.5), &grid, 2.0).unwrap();
        assert!((r1.estimate - 1.0).abs() < 0.02, "got {}", r1.estimate);
        assert!(r1.converged);
        // boundary point: one-sided balls still scale linearly
        let r0 = interval.dimension_at(&Point::one(0.0), &grid, 2.0).unwrap();
        assert!((r0.estimate - 1.0).abs() < 0.02, "got {}", r0.estimate);

        let square = Space::unit_square();
        let r2 = square
            .dimension_at(&Point::two(0.5, 0.5), &grid, 2.0)
            .unwrap();
        assert!((r2.estimate - 2.0).abs() < 0.05, "got {}", r2.estimate);
        assert!(r2.converged);
    }

    #[test]
    fn dimension_on_the_weighted_interval_converges_to_one() {
        let sp = Space::weighted_interval(0.1, 0.9, Weight::InverseX).unwrap();
        let grid = [4e-3, 2e-3, 1e-3, 5e-4];
        let rep = sp.dimension_at(&Point::one(0.5), &grid, 2.0).unwrap();
        assert!((rep.estimate - 1.0).abs() < 0.02, "got {}", rep.estimate);
    }

    #[test]
    fn maxdist_and_diameter_are_consistent() {
        let sp = Space::interval(0.0, 1.0).unwrap();
        assert_relative_eq!(sp.maxdist(&Point::one(0.3)), 0.7);
        assert_relative_eq!(sp.diameter(), 1.0);
        let sq = Space::unit_square();
        assert_relative_eq!(sq.maxdist(&Point::two(0.25, 0.25)), 0.75f64.hypot(0.75));
        let circle = Space::circle(2.0).unwrap();
        assert_relative_eq!(circle.maxdist(&Point::one(1.0)), 2.0 * std::f64::consts::PI);
        assert_relative_eq!(circle.total_measure(), 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn interior_margin_is_validated() {
        assert!(Space::interval(0.0, 1.0)
            .unwrap()
            .with_interior_margin(0.49)
            .is_ok());
        assert!(Space::interval(0.0, 1.0)
            .unwrap()
            .with_interior_margin(0.5)
            .is_err());
        assert!(Space::interval(0.0, 1.0)
            .unwrap()
            .with_interior_margin(-0.1)
            .is_err());
    }

    #[test]
    fn ray_geometry_matches_distances() {
        let sq = Space::unit_square();
        let x = Point::two(0.3, 0.4);
        let u = [
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        ];
        let t = sq.ray_exit(&x, u);
        let exit = sq.offset_2d(&x, u, t);
        assert!(sq.contains(&exit));
        assert_relative_eq!(sq.distance(&x, &exit), t, max_relative = 1e-12);
        // exit point sits on the boundary
        assert!(sq.boundary_distance(&exit).abs() < 1e-12);

        let circle = Space::circle(1.0).unwrap();
        let rays = circle.rays_1d(&Point::one(0.5));
        assert_relative_eq!(rays[0].1, std::f64::consts::PI);
        let moved = circle.offset_1d(&Point::one(0.5), 1.0, 1.0);
        assert_relative_eq!(circle.distance(&Point::one(0.5), &moved), 1.0);
    }
}
