//! Ellipse and moving-cylinder intersection geometry.
//!
//! Space-time influence zones are slanted elliptical cylinders: an ellipse
//! that travels with a velocity vector for a fixed duration. Dependence
//! between two space-time points is driven by the Lebesgue volume of the
//! intersection of their cylinders, which factorizes into a temporal overlap
//! length times an exact ellipse–ellipse overlap area.

mod overlap;
mod quartic;

pub use overlap::circle_lens_area;

use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use std::f64::consts::PI;

/// An ellipse with center, semi-axes along its rotated axes, and a
/// counterclockwise rotation from the first coordinate axis.
///
/// The representation is invariant under `rotation -> rotation + pi`;
/// `semi_x` is the semi-axis along the rotated x direction (not necessarily
/// the major one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    center: Vector2<f64>,
    semi_x: f64,
    semi_y: f64,
    rotation: f64,
}

impl Ellipse {
    pub fn new(center: Vector2<f64>, semi_x: f64, semi_y: f64, rotation: f64) -> Result<Self> {
        if !(semi_x > 0.0 && semi_x.is_finite() && semi_y > 0.0 && semi_y.is_finite()) {
            return Err(Error::Geometry(format!(
                "semi-axes must be positive and finite, got ({semi_x}, {semi_y})"
            )));
        }
        if !(center.x.is_finite() && center.y.is_finite() && rotation.is_finite()) {
            return Err(Error::Geometry("non-finite center or rotation".into()));
        }
        Ok(Ellipse {
            center,
            semi_x,
            semi_y,
            rotation,
        })
    }

    pub fn center(&self) -> Vector2<f64> {
        self.center
    }

    pub fn semi_x(&self) -> f64 {
        self.semi_x
    }

    pub fn semi_y(&self) -> f64 {
        self.semi_y
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn area(&self) -> f64 {
        PI * self.semi_x * self.semi_y
    }

    /// Same shape at a different center.
    pub fn at_center(&self, center: Vector2<f64>) -> Ellipse {
        Ellipse { center, ..*self }
    }

    fn rotation_matrix(&self) -> Matrix2<f64> {
        let (s, c) = self.rotation.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    /// Positive-definite M with boundary (p-c)' M (p-c) = 1.
    pub(crate) fn shape_matrix(&self) -> Matrix2<f64> {
        let r = self.rotation_matrix();
        let d = Matrix2::new(1.0 / (self.semi_x * self.semi_x), 0.0, 0.0, 1.0 / (self.semi_y * self.semi_y));
        r * d * r.transpose()
    }

    /// Quadratic-form value (p-c)' M (p-c) - 1: negative inside, zero on the
    /// boundary, positive outside.
    pub fn form_value(&self, p: Vector2<f64>) -> f64 {
        let w = p - self.center;
        w.dot(&(self.shape_matrix() * w)) - 1.0
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        self.form_value(p) <= 0.0
    }

    /// Boundary point at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> Vector2<f64> {
        let local = Vector2::new(self.semi_x * t.cos(), self.semi_y * t.sin());
        self.center + self.rotation_matrix() * local
    }

    /// Parametric angle of a boundary point.
    pub(crate) fn param_angle(&self, p: Vector2<f64>) -> f64 {
        let local = self.rotation_matrix().transpose() * (p - self.center);
        (local.y / self.semi_y).atan2(local.x / self.semi_x)
    }

    /// Maps canonical coordinates (this ellipse as unit circle) back to the
    /// original frame.
    pub(crate) fn from_canonical(&self, q: Vector2<f64>) -> Vector2<f64> {
        let local = Vector2::new(self.semi_x * q.x, self.semi_y * q.y);
        self.center + self.rotation_matrix() * local
    }
}

/// Area of the intersection of two ellipses, exact up to the root-finder
/// tolerance. Degenerate inputs cannot be constructed ([`Ellipse::new`]
/// rejects non-positive axes).
pub fn ellipse_overlap_area(e1: &Ellipse, e2: &Ellipse) -> f64 {
    overlap::overlap_area(e1, e2)
}

/// A space-time influence zone: an ellipse moving with constant velocity for
/// a fixed duration. The ellipse center is a shape parameter only and is
/// fixed at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderKernel {
    ellipse: Ellipse,
    duration: f64,
    velocity: Vector2<f64>,
}

impl CylinderKernel {
    pub fn new(semi_x: f64, semi_y: f64, rotation: f64, duration: f64, velocity: Vector2<f64>) -> Result<Self> {
        let ellipse = Ellipse::new(Vector2::zeros(), semi_x, semi_y, rotation)?;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Geometry(format!(
                "duration must be positive and finite, got {duration}"
            )));
        }
        if !(velocity.x.is_finite() && velocity.y.is_finite()) {
            return Err(Error::Geometry("non-finite velocity".into()));
        }
        Ok(CylinderKernel {
            ellipse,
            duration,
            velocity,
        })
    }

    pub fn ellipse(&self) -> &Ellipse {
        &self.ellipse
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn velocity(&self) -> Vector2<f64> {
        self.velocity
    }

    /// Space-time volume of the cylinder: duration x ellipse area.
    pub fn base_volume(&self) -> f64 {
        self.duration * self.ellipse.area()
    }
}

/// A planar site coordinate with a time stamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub s: Vector2<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(s: Vector2<f64>, t: f64) -> Result<Self> {
        if !(s.x.is_finite() && s.y.is_finite() && t.is_finite()) {
            return Err(Error::Geometry("non-finite space-time coordinates".into()));
        }
        Ok(SpaceTimePoint { s, t })
    }

    pub fn xy_t(x: f64, y: f64, t: f64) -> Result<Self> {
        Self::new(Vector2::new(x, y), t)
    }
}

/// Volume of the intersection of the two cylinders anchored at `x1` and
/// `x2`: the positive part of the temporal overlap times the overlap area of
/// the two ellipse cross-sections at Lagrangian offset.
///
/// The pair is canonicalized (earlier time first, spatial lexicographic
/// tie-break) so that swapping the arguments runs the identical code path.
pub fn cylinder_intersection_volume(
    x1: &SpaceTimePoint,
    x2: &SpaceTimePoint,
    k: &CylinderKernel,
) -> f64 {
    let key = |p: &SpaceTimePoint| (p.t, p.s.x, p.s.y);
    let (ka, kb) = (key(x1), key(x2));
    let (a, b) = if (ka.0, ka.1, ka.2) <= (kb.0, kb.1, kb.2) {
        (x1, x2)
    } else {
        (x2, x1)
    };
    let dt = b.t - a.t;
    if dt >= k.duration {
        return 0.0;
    }
    let time_overlap = k.duration - dt;
    // Ellipse centers drift with the velocity; within the shared time slab the
    // center offset is constant.
    let offset = (b.s - a.s) - dt * k.velocity;
    if offset == Vector2::zeros() {
        return time_overlap * k.ellipse.area();
    }
    let e0 = k.ellipse;
    let e1 = e0.at_center(offset);
    time_overlap * ellipse_overlap_area(&e0, &e1)
}
