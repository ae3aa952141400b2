//! The normalized search space: the user's hyper-block mapped onto the unit
//! hypercube, D1 distances, random directions and line segments.

use crate::error::{invalid, Error, Result};
use crate::rng::Jkiss;
use serde::{Deserialize, Serialize};

/// Slack tolerated when checking that a point lies in the unit cube.
pub const CUBE_TOLERANCE: f64 = 1e-12;

/// Direction components below this magnitude are treated as zero.
const DIRECTION_EPS: f64 = 1e-15;

/// Per-parameter `(lower, upper)` limits in user units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    limits: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(limits: Vec<(f64, f64)>) -> Result<Self> {
        if limits.is_empty() {
            return Err(invalid("bounds", "need at least one parameter"));
        }
        for (i, &(lo, hi)) in limits.iter().enumerate() {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(invalid(
                    "bounds",
                    format!("parameter {i}: need finite lower < upper, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(Self { limits })
    }

    /// The same interval for every parameter.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    /// The unit hypercube itself.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::uniform(dim, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.limits.len()
    }

    pub fn limits(&self) -> &[(f64, f64)] {
        &self.limits
    }

    pub fn normalize(&self, user: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), user.len())?;
        user.iter()
            .zip(&self.limits)
            .enumerate()
            .map(|(index, (&v, &(lower, upper)))| {
                if !(lower..=upper).contains(&v) {
                    return Err(Error::OutOfDomain {
                        index,
                        value: v,
                        lower,
                        upper,
                    });
                }
                Ok(((v - lower) / (upper - lower)).clamp(0.0, 1.0))
            })
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), unit.len())?;
        unit.iter()
            .enumerate()
            .map(|(index, &v)| {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfDomain {
                        index,
                        value: v,
                        lower: 0.0,
                        upper: 1.0,
                    });
                }
                Ok(self.denormalize_coord(index, v))
            })
            .collect()
    }

    /// Maps one in-cube coordinate to user units without validation.
    #[inline]
    pub fn denormalize_coord(&self, index: usize, v: f64) -> f64 {
        let (lo, hi) = self.limits[index];
        if v >= 1.0 {
            hi
        } else {
            lo + v * (hi - lo)
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Manhattan distance.
pub fn d1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(manhattan(a, b))
}

#[inline]
pub(crate) fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit Euclidean length; `None` for a null vector.
pub fn unit_vector(v: &[f64]) -> Option<Vec<f64>> {
    let n = euclidean_norm(v);
    if n > 0.0 && n.is_finite() {
        Some(v.iter().map(|x| x / n).collect())
    } else {
        None
    }
}

/// Isotropic random direction: normalized vector of standard Gaussians.
pub fn random_unit_direction(rng: &mut Jkiss, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "direction needs at least one dimension");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        if let Some(u) = unit_vector(&v) {
            return u;
        }
    }
}

/// Range `[a, b]` of `t` for which `origin + t·direction` stays in the unit
/// cube, by interval clipping on each coordinate.
pub fn line_domain(origin: &[f64], direction: &[f64]) -> Result<(f64, f64)> {
    check_dim(origin.len(), direction.len())?;
    let mut a = f64::NEG_INFINITY;
    let mut b = f64::INFINITY;
    for (index, (&p, &u)) in origin.iter().zip(direction).enumerate() {
        if !(-CUBE_TOLERANCE..=1.0 + CUBE_TOLERANCE).contains(&p) {
            return Err(Error::OutOfDomain {
                index,
                value: p,
                lower: 0.0,
                upper: 1.0,
            });
        }
        if u.abs() < DIRECTION_EPS {
            continue;
        }
        let p = p.clamp(0.0, 1.0);
        let (t0, t1) = if u > 0.0 {
            (-p / u, (1.0 - p) / u)
        } else {
            ((1.0 - p) / u, -p / u)
        };
        a = a.max(t0);
        b = b.min(t1);
    }
    if a == f64::NEG_INFINITY || b == f64::INFINITY {
        return Err(invalid("direction", "null direction has no finite line domain"));
    }
    Ok((a.min(0.0), b.max(0.0)))
}

/// A chord of the unit cube: `origin + t·direction` for `t` in
/// `[t_min, t_max]`, with `t_min <= 0 <= t_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSegment {
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl LineSegment {
    /// The full chord through `origin` along the unit vector `direction`.
    pub fn through(origin: &[f64], direction: &[f64]) -> Result<Self> {
        let norm = euclidean_norm(direction);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid("direction", format!("must have unit length, got {norm}")));
        }
        let (t_min, t_max) = line_domain(origin, direction)?;
        Ok(Self {
            origin: origin.to_vec(),
            direction: direction.to_vec(),
            t_min,
            t_max,
        })
    }

    /// The chord along coordinate axis `axis`: `[-x_k, 1 - x_k]`.
    pub fn along_axis(origin: &[f64], axis: usize) -> Result<Self> {
        let dim = origin.len();
        if axis >= dim {
            return Err(invalid("axis", format!("{axis} out of range for dimension {dim}")));
        }
        let mut direction = vec![0.0; dim];
        direction[axis] = 1.0;
        Self::through(origin, &direction)
    }

    pub fn length(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn point(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= self.t_min - CUBE_TOLERANCE && t <= self.t_max + CUBE_TOLERANCE) {
            return Err(invalid(
                "t",
                format!("{t} outside segment [{}, {}]", self.t_min, self.t_max),
            ));
        }
        Ok(self.point_unchecked(t))
    }

    /// `origin + t·direction` clamped into the cube.
    #[inline]
    pub(crate) fn point_unchecked(&self, t: f64) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.direction)
            .map(|(p, u)| (p + t * u).clamp(0.0, 1.0))
            .collect()
    }

    /// As [`Self::point_unchecked`], writing into `out`.
    #[inline]
    pub(crate) fn write_point(&self, t: f64, out: &mut [f64]) {
        for ((o, p), u) in out.iter_mut().zip(&self.origin).zip(&self.direction) {
            *o = (p + t * u).clamp(0.0, 1.0);
        }
    }
}

pub fn point_on_line(seg: &LineSegment, t: f64) -> Result<Vec<f64>> {
    seg.point(t)
}
