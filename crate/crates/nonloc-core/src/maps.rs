//! Test maps into metric targets: evaluation, Jacobians, codomain distances,
//! metric differentials, unit-ball moments, and the analytic reference
//! energies the limit experiments compare against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{CoreError, Result};
use crate::mollifiers::MollifierFamily;
use crate::quad;
use crate::space::{Point, Space};

/// Codomain of a test map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetSpace {
    /// `R^m` with the Euclidean distance.
    Euclidean { dim: usize },
    /// A circle of the given radius; points are angles and the distance is
    /// the shorter arc.
    Circle { radius: f64 },
    /// Euclidean base distance raised to `alpha` in `(0, 1]`; the power keeps
    /// the triangle inequality.
    Snowflake { alpha: f64 },
    /// The 0/1 metric: zero exactly on coincident points.
    Discrete,
}

impl TargetSpace {
    pub fn euclidean(dim: usize) -> Result<Self> {
        let t = TargetSpace::Euclidean { dim };
        t.validate()?;
        Ok(t)
    }

    pub fn circle(radius: f64) -> Result<Self> {
        let t = TargetSpace::Circle { radius };
        t.validate()?;
        Ok(t)
    }

    pub fn snowflake(alpha: f64) -> Result<Self> {
        let t = TargetSpace::Snowflake { alpha };
        t.validate()?;
        Ok(t)
    }

    pub fn discrete() -> Self {
        TargetSpace::Discrete
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSpace::Euclidean { dim } => {
                if *dim == 0 {
                    return Err(CoreError::InvalidParameter {
                        name: "dim",
                        detail: "target dimension must be positive".into(),
                    });
                }
            }
            TargetSpace::Circle { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(CoreError::InvalidParameter {
                        name: "radius",
                        detail: format!("circle radius must be positive, got {radius}"),
                    });
                }
            }
            TargetSpace::Snowflake { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha <= 1.0) {
                    return Err(CoreError::InvalidParameter {
                        name: "alpha",
                        detail: format!("snowflake exponent must lie in (0,1], got {alpha}"),
                    });
                }
            }
            TargetSpace::Discrete => {}
        }
        Ok(())
    }

    /// Expected coordinate length of target points.
    pub fn point_dim(&self) -> Option<usize> {
        match self {
            TargetSpace::Euclidean { dim } => Some(*dim),
            TargetSpace::Circle { .. } => Some(1),
            // snowflake and discrete accept any coordinate length
            TargetSpace::Snowflake { .. } | TargetSpace::Discrete => None,
        }
    }

    /// Distance between two target points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "target points of lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        if let Some(d) = self.point_dim() {
            if a.len() != d {
                return Err(CoreError::DimensionMismatch(format!(
                    "target expects {d} coordinates, got {}",
                    a.len()
                )));
            }
        }
        let euclid = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b.iter())
                .map(|(s, t)| (s - t) * (s - t))
                .sum::<f64>()
                .sqrt()
        };
        Ok(match self {
            TargetSpace::Euclidean { .. } => euclid(a, b),
            TargetSpace::Circle { radius } => {
                let tau = std::f64::consts::TAU;
                let arc = (a[0] - b[0]).rem_euclid(tau);
                radius * arc.min(tau - arc)
            }
            TargetSpace::Snowflake { alpha } => euclid(a, b).powf(*alpha),
            TargetSpace::Discrete => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
        })
    }
}

/// Closed-form map rule. Rules are total on coordinates; domain membership
/// is the caller's concern.
#[derive(Clone, Debug, PartialEq)]
pub enum MapRule {
    /// `x -> x`.
    Identity,
    /// `x -> A x` for the given row-major matrix.
    Linear { rows: Vec<Vec<f64>> },
    /// `x -> x^e` on one-dimensional domains.
    Power { exponent: f64 },
    /// `x -> rate * x_1` read as an angle.
    AngleWrap { rate: f64 },
    /// Constant target point.
    Constant { value: Vec<f64> },
    /// `x -> c * f(x)`.
    Scaled { factor: f64, inner: Box<MapRule> },
}

/// A map rule plus the facts the evaluators need about it: smoothness and
/// whether the Jacobian must be obtained by finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSpec {
    rule: MapRule,
    smooth: bool,
    force_fd: bool,
}

impl MapRule {
    fn output_dim(&self, domain_dim: usize) -> usize {
        match self {
            MapRule::Identity => domain_dim,
            MapRule::Linear { rows } => rows.len(),
            MapRule::Power { .. } => 1,
            MapRule::AngleWrap { .. } => 1,
            MapRule::Constant { value } => value.len(),
            MapRule::Scaled { inner, .. } => inner.output_dim(domain_dim),
        }
    }

    fn smooth(&self) -> bool {
        match self {
            MapRule::Power { exponent } => *exponent >= 1.0,
            MapRule::Scaled { inner, .. } => inner.smooth(),
            _ => true,
        }
    }

    fn angle_valued(&self) -> bool {
        match self {
            MapRule::AngleWrap { .. } => true,
            MapRule::Scaled { inner, .. } => inner.angle_valued(),
            _ => false,
        }
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            MapRule::Identity => x.to_vec(),
            MapRule::Linear { rows } => rows
                .iter()
                .map(|row| row.iter().zip(x.iter()).map(|(a, v)| a * v).sum())
                .collect(),
            MapRule::Power { exponent } => vec![x[0].powf(*exponent)],
            MapRule::AngleWrap { rate } => vec![(rate * x[0]).rem_euclid(std::f64::consts::TAU)],
            MapRule::Constant { value } => value.clone(),
            MapRule::Scaled { factor, inner } => {
                inner.eval(x).into_iter().map(|v| factor * v).collect()
            }
        }
    }

    /// Analytic Jacobian rows at `x`, `None` when only finite differences
    /// are available.
    fn jacobian(&self, x: &[f64], domain_dim: usize) -> Option<Vec<Vec<f64>>> {
        match self {
            MapRule::Identity => Some(
                (0..domain_dim)
                    .map(|i| {
                        let mut row = vec![0.0; domain_dim];
                        row[i] = 1.0;
                        row
                    })
                    .collect(),
            ),
            MapRule::Linear { rows } => Some(rows.clone()),
            MapRule::Power { exponent } => Some(vec![vec![exponent * x[0].powf(exponent - 1.0)]]),
            MapRule::AngleWrap { rate } => {
                let mut row = vec![0.0; domain_dim];
                row[0] = *rate;
                Some(vec![row])
            }
            MapRule::Constant { value } => Some(vec![vec![0.0; domain_dim]; value.len()]),
            MapRule::Scaled { factor, inner } => inner.jacobian(x, domain_dim).map(|rows| {
                rows.into_iter()
                    .map(|row| row.into_iter().map(|a| factor * a).collect())
                    .collect()
            }),
        }
    }
}

impl MapSpec {
    pub fn identity() -> Self {
        MapSpec {
            rule: MapRule::Identity,
            smooth: true,
            force_fd: false,
        }
    }

    pub fn linear(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.is_empty()) {
            return Err(CoreError::InvalidParameter {
                name: "rows",
                detail: "linear map needs a nonempty matrix".into(),
            });
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(CoreError::InvalidParameter {
                name: "rows",
                detail: "linear map rows must share one length".into(),
            });
        }
        if rows.iter().flatten().any(|a| !a.is_finite()) {
            return Err(CoreError::InvalidParameter {
                name: "rows",
                detail: "linear map entries must be finite".into(),
            });
        }
        Ok(MapSpec {
            rule: MapRule::Linear { rows },
            smooth: true,
            force_fd: false,
        })
    }

    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "exponent",
                detail: format!("power map exponent must be positive, got {exponent}"),
            });
        }
        let rule = MapRule::Power { exponent };
        let smooth = rule.smooth();
        Ok(MapSpec {
            rule,
            smooth,
            force_fd: false,
        })
    }

    /// Angle-valued map `x -> rate * x_1` (radians per unit coordinate).
    pub fn angle_wrap(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate != 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "rate",
                detail: format!("angle rate must be finite and nonzero, got {rate}"),
            });
        }
        Ok(MapSpec {
            rule: MapRule::AngleWrap { rate },
            smooth: true,
            force_fd: false,
        })
    }

    /// Angle-valued map winding `turns` times over the unit coordinate span.
    pub fn angle_wrap_turns(turns: f64) -> Result<Self> {
        Self::angle_wrap(std::f64::consts::TAU * turns)
    }

    pub fn constant(value: Vec<f64>) -> Result<Self> {
        if value.is_empty() || value.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidParameter {
                name: "value",
                detail: "constant map needs a finite target point".into(),
            });
        }
        Ok(MapSpec {
            rule: MapRule::Constant { value },
            smooth: true,
            force_fd: false,
        })
    }

    /// Post-scales the map by `c` (Euclidean-valued composition).
    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "factor",
                detail: "scale factor must be finite".into(),
            });
        }
        let smooth = self.smooth;
        Ok(MapSpec {
            rule: MapRule::Scaled {
                factor,
                inner: Box::new(self.rule),
            },
            smooth,
            force_fd: self.force_fd,
        })
    }

    /// Drops the analytic Jacobian so evaluators exercise the
    /// finite-difference fallback.
    pub fn with_fd_jacobian(mut self) -> Self {
        self.force_fd = true;
        self
    }

    pub fn rule(&self) -> &MapRule {
        &self.rule
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn is_angle_valued(&self) -> bool {
        self.rule.angle_valued()
    }

    /// Net angular rate of an angle-valued map (outer scalings folded in),
    /// `None` for maps into linear targets.
    pub fn angle_rate(&self) -> Option<f64> {
        fn walk(rule: &MapRule, outer: f64) -> Option<f64> {
            match rule {
                MapRule::AngleWrap { rate } => Some(outer * rate),
                MapRule::Scaled { factor, inner } => walk(inner, outer * factor),
                _ => None,
            }
        }
        walk(&self.rule, 1.0)
    }

    pub fn output_dim(&self, domain_dim: usize) -> usize {
        self.rule.output_dim(domain_dim)
    }

    /// Map value at a point (coordinates only; no domain check).
    pub fn eval(&self, x: &Point) -> Vec<f64> {
        self.rule.eval(x.coords())
    }

    /// Jacobian rows at `x`: analytic when available, otherwise central
    /// finite differences with step `1e-5 * diameter` (angle differences are
    /// reduced to the principal branch first).
    pub fn jacobian(&self, space: &Space, x: &Point) -> Vec<Vec<f64>> {
        let d = space.coord_dim();
        if !self.force_fd {
            if let Some(rows) = self.rule.jacobian(x.coords(), d) {
                return rows;
            }
        }
        self.fd_jacobian(space, x)
    }

    fn fd_jacobian(&self, space: &Space, x: &Point) -> Vec<Vec<f64>> {
        let d = space.coord_dim();
        let m = self.output_dim(d);
        let h = 1e-5 * space.diameter();
        let angle = self.is_angle_valued();
        let mut rows = vec![vec![0.0; d]; m];
        let base = x.coords();
        for j in 0..d {
            let mut fwd = base.to_vec();
            let mut bwd = base.to_vec();
            fwd[j] += h;
            bwd[j] -= h;
            let vf = self.rule.eval(&fwd);
            let vb = self.rule.eval(&bwd);
            for i in 0..m {
                let mut diff = vf[i] - vb[i];
                if angle {
                    // principal branch, so the wrap at 2*pi cannot leak in
                    let tau = std::f64::consts::TAU;
                    diff = (diff + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
                }
                rows[i][j] = diff / (2.0 * h);
            }
        }
        rows
    }
}

/// `d_Y(f(x), f(x'))` for a map into the given target.
pub fn pair_distance(
    space: &Space,
    map: &MapSpec,
    target: &TargetSpace,
    x: &Point,
    xp: &Point,
) -> Result<f64> {
    target.validate()?;
    if !space.contains(x) || !space.contains(xp) {
        return Err(CoreError::OutsideDomain {
            point: if space.contains(x) {
                xp.to_vec()
            } else {
                x.to_vec()
            },
            detail: "pair distance needs both points in the domain".into(),
        });
    }
    check_output_dim(space, map, target)?;
    target.distance(&map.eval(x), &map.eval(xp))
}

fn check_output_dim(space: &Space, map: &MapSpec, target: &TargetSpace) -> Result<()> {
    if let Some(d) = target.point_dim() {
        let m = map.output_dim(space.coord_dim());
        if m != d {
            return Err(CoreError::DimensionMismatch(format!(
                "map produces {m} coordinates but the target expects {d}"
            )));
        }
    }
    Ok(())
}

/// The seminorm `v -> |J v|` in the target's infinitesimal metric. Rows are
/// already premultiplied by the target's metric speed, so evaluation is a
/// plain Euclidean norm of the row image.
#[derive(Clone, Debug)]
pub struct Seminorm {
    rows: Vec<Vec<f64>>,
    dim: usize,
    fd_fallback: bool,
}

impl Seminorm {
    /// Builds a seminorm directly from linear rows over `R^dim`.
    pub fn from_rows(rows: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.len() != dim) {
            return Err(CoreError::DimensionMismatch(format!(
                "seminorm rows must all have length {dim}"
            )));
        }
        Ok(Seminorm {
            rows,
            dim,
            fd_fallback: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn used_fd_fallback(&self) -> bool {
        self.fd_fallback
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        self.rows
            .iter()
            .map(|row| {
                let s: f64 = row.iter().zip(v.iter()).map(|(a, t)| a * t).sum();
                s * s
            })
            .sum::<f64>()
            .sqrt()
    }

    fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Metric differential of a smooth map at `x`: the seminorm
/// `v -> |J_f(x) v|` measured in the target metric (arc speed for circle
/// targets). Snowflake and discrete targets have no linear infinitesimal
/// structure and are rejected.
pub fn metric_differential(
    space: &Space,
    map: &MapSpec,
    target: &TargetSpace,
    x: &Point,
) -> Result<Seminorm> {
    target.validate()?;
    if !space.contains(x) {
        return Err(CoreError::OutsideDomain {
            point: x.to_vec(),
            detail: "metric differential needs an interior point".into(),
        });
    }
    if !map.is_smooth() {
        return Err(CoreError::SmoothnessRequired(
            "metric differential needs a smooth map".into(),
        ));
    }
    check_output_dim(space, map, target)?;
    let scale = match target {
        TargetSpace::Euclidean { .. } => 1.0,
        TargetSpace::Circle { radius } => *radius,
        TargetSpace::Snowflake { .. } => {
            return Err(CoreError::UnsupportedTarget(
                "snowflake targets have no metric differential".into(),
            ))
        }
        TargetSpace::Discrete => {
            return Err(CoreError::UnsupportedTarget(
                "the 0/1 metric has no metric differential".into(),
            ))
        }
    };
    let analytic = !map.force_fd && map.rule.jacobian(x.coords(), space.coord_dim()).is_some();
    if !analytic {
        eprintln!("warning: no analytic Jacobian for this map; using central finite differences");
    }
    let rows = map
        .jacobian(space, x)
        .into_iter()
        .map(|row| row.into_iter().map(|a| scale * a).collect())
        .collect();
    Ok(Seminorm {
        rows,
        dim: space.coord_dim(),
        fd_fallback: !analytic,
    })
}

/// Average of `md(v)^p` over the Euclidean unit ball of `R^d`.
///
/// Homogeneity reduces the radial factor exactly to `d / (d + p)`; the
/// sphere average is computed by Gauss quadrature split at the directions
/// where a row vanishes (`d <= 2`) or by fixed-seed Monte Carlo (`d = 3`,
/// two million directions, which resolves polynomial speeds to about 1e-3
/// relative).
pub fn unit_ball_moment(sem: &Seminorm, p: f64, d: u32) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(CoreError::InvalidParameter {
            name: "p",
            detail: format!("exponent must satisfy p >= 1, got {p}"),
        });
    }
    if !(1..=3).contains(&d) {
        return Err(CoreError::UnsupportedDimension {
            dim: d as usize,
            detail: "unit-ball moments are available for d in {1, 2, 3}".into(),
        });
    }
    if sem.dim() != d as usize {
        return Err(CoreError::DimensionMismatch(format!(
            "seminorm acts on R^{} but the ball sits in R^{d}",
            sem.dim()
        )));
    }
    let df = d as f64;
    let radial = df / (df + p);
    let sphere_avg = match d {
        1 => 0.5 * (sem.value(&[1.0]).powf(p) + sem.value(&[-1.0]).powf(p)),
        2 => {
            let tau = std::f64::consts::TAU;
            // |row . u(theta)|^p has a kink where the row is orthogonal to u
            let mut kinks: Vec<f64> = Vec::new();
            for row in sem.rows() {
                if row[0] != 0.0 || row[1] != 0.0 {
                    let theta = row[0].atan2(-row[1]);
                    kinks.push(theta.rem_euclid(tau));
                    kinks.push((theta + std::f64::consts::PI).rem_euclid(tau));
                }
            }
            let pts = quad::breakpoints_in(0.0, tau, &kinks);
            quad::integrate_partition(
                |theta| sem.value(&[theta.cos(), theta.sin()]).powf(p),
                &pts,
                8,
                32,
            ) / tau
        }
        _ => {
            let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_ba11);
            let n = 2_000_000usize;
            let mut acc = 0.0;
            for _ in 0..n {
                let v = sample_unit_sphere_3d(&mut rng);
                acc += sem.value(&v).powf(p);
            }
            acc / n as f64
        }
    };
    Ok(radial * sphere_avg)
}

fn sample_unit_sphere_3d<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        // Box-Muller pairs give an isotropic Gaussian to normalize
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen::<f64>().max(1e-300);
        let u4: f64 = rng.gen();
        let r1 = (-2.0 * u1.ln()).sqrt();
        let r2 = (-2.0 * u3.ln()).sqrt();
        let g = [
            r1 * (std::f64::consts::TAU * u2).cos(),
            r1 * (std::f64::consts::TAU * u2).sin(),
            r2 * (std::f64::consts::TAU * u4).cos(),
        ];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm > 1e-12 {
            return [g[0] / norm, g[1] / norm, g[2] / norm];
        }
    }
}

/// The analytic localization limit
/// `∫ Θ(D, p) · avg_{B^D} md_x[f]^p dm(x)` predicted for an admissible
/// family on a smooth map.
pub fn predicted_limit(
    space: &Space,
    map: &MapSpec,
    target: &TargetSpace,
    p: f64,
    family: &MollifierFamily,
) -> Result<f64> {
    target.validate()?;
    if !map.is_smooth() {
        return Err(CoreError::SmoothnessRequired(
            "the predicted limit is defined for smooth maps".into(),
        ));
    }
    check_output_dim(space, map, target)?;
    if matches!(
        target,
        TargetSpace::Snowflake { .. } | TargetSpace::Discrete
    ) {
        return Err(CoreError::UnsupportedTarget(
            "the predicted limit needs a target with a metric differential".into(),
        ));
    }
    if (family.p() - p).abs() > 1e-12 {
        return Err(CoreError::InvalidParameter {
            name: "p",
            detail: format!(
                "family carries exponent {} but the energy uses {p}",
                family.p()
            ),
        });
    }
    let center = space.full_region().center();
    let dim = space.declared_dim(&center);
    let theta = family.theta(dim)?;
    // validate the moment path once; inside the quadrature it cannot fail
    let probe = metric_differential(space, map, target, &center)?;
    unit_ball_moment(&probe, p, dim)?;
    let value = space.integrate_domain(
        |x| {
            let sem = metric_differential(space, map, target, x)
                .expect("validated above: smooth map, supported target");
            theta
                * unit_ball_moment(&sem, p, dim)
                    .expect("validated above: p and dimension are in range")
        },
        [&[], &[]],
        16,
        16,
    );
    Ok(value)
}

/// `∫ |grad u|^p dm` for a smooth real-valued map, the classical reference
/// energy on the smooth side of the sandwich.
pub fn cheeger_energy_smooth(space: &Space, map: &MapSpec, p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(CoreError::InvalidParameter {
            name: "p",
            detail: format!("exponent must satisfy p >= 1, got {p}"),
        });
    }
    if !map.is_smooth() {
        return Err(CoreError::SmoothnessRequired(
            "the smooth energy needs a smooth map".into(),
        ));
    }
    if map.is_angle_valued() {
        return Err(CoreError::UnsupportedTarget(
            "angle-valued maps are not real-valued".into(),
        ));
    }
    if map.output_dim(space.coord_dim()) != 1 {
        return Err(CoreError::UnsupportedTarget(
            "the smooth energy is defined for real-valued maps".into(),
        ));
    }
    Ok(space.integrate_domain(
        |x| {
            let rows = map.jacobian(space, x);
            let norm: f64 = rows[0].iter().map(|a| a * a).sum::<f64>().sqrt();
            norm.powf(p)
        },
        [&[], &[]],
        16,
        16,
    ))
}
