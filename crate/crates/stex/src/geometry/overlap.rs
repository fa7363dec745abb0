//! Exact ellipse–ellipse overlap area.
//!
//! Intersection points come from the degree-4 resultant of the two quadratic
//! forms, solved in a canonical frame where the first ellipse is the unit
//! circle; the overlap area is then assembled from the inner polygon plus
//! elliptical segment bulges along whichever boundary is interior between
//! consecutive intersection points.

use nalgebra::{Matrix2, Vector2};
use std::f64::consts::TAU;

use super::quartic::real_roots;
use super::Ellipse;

/// Quadratic-form value at an arc midpoint below which the midpoint counts
/// as interior to the other ellipse.
const INSIDE_TOL: f64 = 1e-7;

/// Candidate intersection points must satisfy the normalized conics to this
/// tolerance after Newton polishing.
const POINT_TOL: f64 = 1e-9;

/// Conic coefficients a x^2 + b xy + c y^2 + d x + e y + f.
#[derive(Debug, Clone, Copy)]
struct Conic {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
}

impl Conic {
    fn eval(&self, p: Vector2<f64>) -> f64 {
        let (x, y) = (p.x, p.y);
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    fn gradient(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (p.x, p.y);
        Vector2::new(
            2.0 * self.a * x + self.b * y + self.d,
            self.b * x + 2.0 * self.c * y + self.e,
        )
    }

    fn normalized(self) -> Conic {
        let m = self
            .a
            .abs()
            .max(self.b.abs())
            .max(self.c.abs())
            .max(self.d.abs())
            .max(self.e.abs())
            .max(self.f.abs());
        Conic {
            a: self.a / m,
            b: self.b / m,
            c: self.c / m,
            d: self.d / m,
            e: self.e / m,
            f: self.f / m,
        }
    }

    fn from_ellipse(e: &Ellipse) -> Conic {
        let m = e.shape_matrix();
        let c0 = e.center();
        let mc = m * c0;
        Conic {
            a: m[(0, 0)],
            b: 2.0 * m[(0, 1)],
            c: m[(1, 1)],
            d: -2.0 * mc.x,
            e: -2.0 * mc.y,
            f: c0.dot(&mc) - 1.0,
        }
    }

    /// Conic of `e2` expressed in the canonical frame of `e1` (unit circle).
    fn in_canonical_frame(e2: &Ellipse, e1: &Ellipse) -> Conic {
        let m2 = e2.shape_matrix();
        let r1 = Matrix2::new(
            e1.rotation().cos(),
            -e1.rotation().sin(),
            e1.rotation().sin(),
            e1.rotation().cos(),
        );
        let d1 = Matrix2::new(e1.semi_x(), 0.0, 0.0, e1.semi_y());
        let w = e1.center() - e2.center();
        let rd = r1 * d1;
        let k = rd.transpose() * m2 * rd;
        let v = rd.transpose() * (m2 * w);
        Conic {
            a: k[(0, 0)],
            b: 2.0 * k[(0, 1)],
            c: k[(1, 1)],
            d: 2.0 * v.x,
            e: 2.0 * v.y,
            f: w.dot(&(m2 * w)) - 1.0,
        }
    }
}

pub fn overlap_area(e1: &Ellipse, e2: &Ellipse) -> f64 {
    let (a1, a2) = (e1.area(), e2.area());

    // Bounding-circle rejection.
    let reach = e1.semi_x().max(e1.semi_y()) + e2.semi_x().max(e2.semi_y());
    let sep = (e1.center() - e2.center()).norm();
    if sep > reach {
        return 0.0;
    }

    let q2c = Conic::in_canonical_frame(e2, e1).normalized();

    // Resultant of the unit circle x^2 + y^2 - 1 and the canonical conic,
    // eliminating x: G(y)^2 + (y^2 - 1) L(y)^2 with
    //   L(y) = b y + d,  G(y) = (c - a) y^2 + e y + (a + f).
    let (g2, g1, g0) = (q2c.c - q2c.a, q2c.e, q2c.a + q2c.f);
    let (l1, l0) = (q2c.b, q2c.d);
    let quartic = [
        g2 * g2 + l1 * l1,
        2.0 * (g2 * g1 + l1 * l0),
        g1 * g1 + 2.0 * g2 * g0 + l0 * l0 - l1 * l1,
        2.0 * (g1 * g0 - l1 * l0),
        g0 * g0 - l0 * l0,
    ];

    let Some(y_roots) = real_roots(&quartic) else {
        // Identically zero resultant: coincident boundaries.
        return a1.min(a2);
    };

    let points = intersection_points(e1, e2, &q2c, &y_roots);

    if points.len() >= 2 {
        if let Some(area) = assemble_area(e1, e2, &points) {
            return area.clamp(0.0, a1.min(a2));
        }
    }
    containment_area(e1, e2)
}

/// Extracts verified intersection points in the original frame.
fn intersection_points(
    e1: &Ellipse,
    e2: &Ellipse,
    q2c: &Conic,
    y_roots: &[f64],
) -> Vec<Vector2<f64>> {
    let q1 = Conic::from_ellipse(e1).normalized();
    let q2 = Conic::from_ellipse(e2).normalized();
    let merge_tol = 1e-9 * e1.semi_x().max(e1.semi_y());

    let mut pts: Vec<Vector2<f64>> = Vec::new();
    for &y in y_roots {
        if y.abs() > 1.0 + 1e-6 {
            continue;
        }
        let y = y.clamp(-1.0, 1.0);
        let mut cands: Vec<Vector2<f64>> = Vec::new();
        let l = q2c.b * y + q2c.d;
        if l.abs() > 1e-9 {
            let g = (q2c.c - q2c.a) * y * y + q2c.e * y + (q2c.a + q2c.f);
            cands.push(Vector2::new(-g / l, y));
        }
        let xs = (1.0 - y * y).max(0.0).sqrt();
        cands.push(Vector2::new(xs, y));
        cands.push(Vector2::new(-xs, y));

        for q in cands {
            if q.x.abs() > 1.0 + 1e-6 {
                continue;
            }
            if q2c.eval(q).abs() > 1e-5 {
                continue; // spurious root of the squared resultant
            }
            let mut p = e1.from_canonical(q);
            newton_polish(&q1, &q2, &mut p);
            if q1.eval(p).abs() > POINT_TOL || q2.eval(p).abs() > POINT_TOL {
                continue;
            }
            if pts.iter().all(|s| (s - p).norm() > merge_tol) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Joint Newton iteration on the two normalized conics.
fn newton_polish(q1: &Conic, q2: &Conic, p: &mut Vector2<f64>) {
    for _ in 0..6 {
        let f = Vector2::new(q1.eval(*p), q2.eval(*p));
        if f.norm() < 1e-15 {
            return;
        }
        let g1 = q1.gradient(*p);
        let g2 = q2.gradient(*p);
        let det = g1.x * g2.y - g1.y * g2.x;
        if det.abs() < 1e-13 {
            return; // tangential: gradients parallel, keep current point
        }
        let dx = (f.x * g2.y - f.y * g1.y) / det;
        let dy = (g1.x * f.y - g2.x * f.x) / det;
        *p -= Vector2::new(dx, dy);
    }
}

/// Convex-region assembly: polygon of the intersection points plus the
/// interior arc bulge between each consecutive pair. Returns `None` when no
/// arc qualifies for some gap (tangency without crossing), in which case the
/// configuration degenerates to containment/disjointness.
fn assemble_area(e1: &Ellipse, e2: &Ellipse, points: &[Vector2<f64>]) -> Option<f64> {
    let centroid = points.iter().sum::<Vector2<f64>>() / points.len() as f64;
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        let ta = (a.y - centroid.y).atan2(a.x - centroid.x);
        let tb = (b.y - centroid.y).atan2(b.x - centroid.x);
        ta.total_cmp(&tb)
    });

    let n = pts.len();
    let mut poly = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        poly += p.x * q.y - q.x * p.y;
    }
    let mut area = 0.5 * poly.max(0.0);

    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        area += arc_bulge(e1, e2, p, q)?;
    }
    Some(area)
}

/// Segment area of the interior arc from `p` to `q` (counterclockwise).
fn arc_bulge(e1: &Ellipse, e2: &Ellipse, p: Vector2<f64>, q: Vector2<f64>) -> Option<f64> {
    let seg = |e: &Ellipse, p: Vector2<f64>, q: Vector2<f64>| -> (f64, Vector2<f64>) {
        let t0 = e.param_angle(p);
        let dt = (e.param_angle(q) - t0).rem_euclid(TAU);
        let mid = e.point_at(t0 + 0.5 * dt);
        let area = 0.5 * e.semi_x() * e.semi_y() * (dt - dt.sin());
        (area, mid)
    };
    let (seg1, mid1) = seg(e1, p, q);
    let (seg2, mid2) = seg(e2, p, q);
    let arc1_inside = e2.form_value(mid1) <= INSIDE_TOL;
    let arc2_inside = e1.form_value(mid2) <= INSIDE_TOL;
    match (arc1_inside, arc2_inside) {
        (true, false) => Some(seg1),
        (false, true) => Some(seg2),
        // Coincident or near-coincident arcs: the inner boundary is the
        // smaller bulge.
        (true, true) => Some(seg1.min(seg2)),
        (false, false) => None,
    }
}

/// No transversal crossings: nested or disjoint, decided by center
/// membership refined with boundary sampling.
fn containment_area(e1: &Ellipse, e2: &Ellipse) -> f64 {
    let (small, large) = if e1.area() <= e2.area() { (e1, e2) } else { (e2, e1) };
    let center_in = large.form_value(small.center()) < 0.0;
    let inside = (0..16)
        .filter(|&k| {
            let p = small.point_at(TAU * k as f64 / 16.0);
            large.form_value(p) <= INSIDE_TOL
        })
        .count();
    if center_in && inside >= 8 {
        small.area()
    } else {
        0.0
    }
}

/// Closed-form lens area of two equal-radius circles, used by tests as an
/// independent oracle.
pub fn circle_lens_area(r: f64, dist: f64) -> f64 {
    if dist >= 2.0 * r {
        return 0.0;
    }
    let h = dist / (2.0 * r);
    2.0 * r * r * h.acos() - 0.5 * dist * (4.0 * r * r - dist * dist).sqrt()
}
