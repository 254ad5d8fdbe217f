//! Small planar-geometry helpers shared across the crate.

use nalgebra::{Point2, Vector2};

/// Rotate a vector by -90 degrees (clockwise).
#[inline]
pub fn rotate_cw(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(v.y, -v.x)
}

/// 2D cross product `a.x * b.y - a.y * b.x`.
#[inline]
pub fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed area of a triangle (positive for counter-clockwise vertices).
#[inline]
pub fn triangle_signed_area(p: &[Point2<f64>; 3]) -> f64 {
    0.5 * cross(p[1] - p[0], p[2] - p[0])
}

/// Shoelace area of a simple polygon (positive for counter-clockwise order).
/// Coordinates are taken relative to the first vertex so that slivers far
/// from the origin do not cancel catastrophically.
pub fn polygon_signed_area(pts: &[Point2<f64>]) -> f64 {
    let n = pts.len();
    let origin = pts[0];
    let mut acc = 0.0;
    for i in 1..n.saturating_sub(1) {
        acc += cross(pts[i] - origin, pts[i + 1] - origin);
    }
    0.5 * acc
}

/// Vertex centroid of a polygon.
pub fn polygon_centroid(pts: &[Point2<f64>]) -> Point2<f64> {
    let mut c = Vector2::zeros();
    for p in pts {
        c += p.coords;
    }
    Point2::from(c / pts.len() as f64)
}

/// Longest edge of a triangle.
pub fn triangle_diameter(p: &[Point2<f64>; 3]) -> f64 {
    let a = (p[1] - p[0]).norm();
    let b = (p[2] - p[1]).norm();
    let c = (p[0] - p[2]).norm();
    a.max(b).max(c)
}

/// Inradius of a triangle, `2A / perimeter`.
pub fn triangle_inradius(p: &[Point2<f64>; 3]) -> f64 {
    let perimeter = (p[1] - p[0]).norm() + (p[2] - p[1]).norm() + (p[0] - p[2]).norm();
    2.0 * triangle_signed_area(p).abs() / perimeter
}

/// Gradients of the three P1 hat functions on a triangle.
pub fn p1_gradients(p: &[Point2<f64>; 3]) -> [Vector2<f64>; 3] {
    let inv_2a = 1.0 / (2.0 * triangle_signed_area(p));
    let rot = |v: Vector2<f64>| Vector2::new(-v.y, v.x);
    [
        rot(p[2] - p[1]) * inv_2a,
        rot(p[0] - p[2]) * inv_2a,
        rot(p[1] - p[0]) * inv_2a,
    ]
}

/// Value of the local P1 hat function `a` at a point of the triangle.
pub fn p1_value(p: &[Point2<f64>; 3], grads: &[Vector2<f64>; 3], a: usize, x: Point2<f64>) -> f64 {
    1.0 + grads[a].dot(&(x - p[a]))
}
