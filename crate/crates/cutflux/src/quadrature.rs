//! Quadrature on triangles, convex polygons and segments.
//!
//! Triangles use symmetric Dunavant-type rules (all weights positive),
//! segments use Gauss-Legendre, and convex polygons are fan-triangulated from
//! their vertex centroid. Supported exactness degrees are 0 through 4.

use nalgebra::Point2;

use crate::error::{Error, Result};
use crate::geo;

/// Highest polynomial exactness degree served by [`triangle_rule`],
/// [`polygon_rule`] and [`segment_rule`].
pub const MAX_DEGREE: usize = 4;

/// Points and weights integrating over a region; weights carry the measure.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    /// Declared polynomial exactness degree.
    pub degree: usize,
}

impl QuadratureRule {
    /// Apply the rule to a function.
    pub fn integrate<F: FnMut(Point2<f64>) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }

    /// Total weight, i.e. the measure of the region.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn append(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree {degree} unsupported (max {MAX_DEGREE})"
        )));
    }
    Ok(())
}

/// Barycentric triangle rules: (weight, b0, b1); b2 = 1 - b0 - b1. Weights sum
/// to one and multiply the triangle area.
fn triangle_points(degree: usize) -> &'static [(f64, f64, f64)] {
    const CENTROID: [(f64, f64, f64); 1] = [(1.0, 1.0 / 3.0, 1.0 / 3.0)];
    const DEGREE2: [(f64, f64, f64); 3] = [
        (1.0 / 3.0, 2.0 / 3.0, 1.0 / 6.0),
        (1.0 / 3.0, 1.0 / 6.0, 2.0 / 3.0),
        (1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
    ];
    // Dunavant degree-4 rule, 6 points, all weights positive.
    const W1: f64 = 0.223_381_589_678_011;
    const A1: f64 = 0.445_948_490_915_965;
    const W2: f64 = 0.109_951_743_655_322;
    const A2: f64 = 0.091_576_213_509_771;
    const DEGREE4: [(f64, f64, f64); 6] = [
        (W1, A1, A1),
        (W1, 1.0 - 2.0 * A1, A1),
        (W1, A1, 1.0 - 2.0 * A1),
        (W2, A2, A2),
        (W2, 1.0 - 2.0 * A2, A2),
        (W2, A2, 1.0 - 2.0 * A2),
    ];
    match degree {
        0 | 1 => &CENTROID,
        2 => &DEGREE2,
        _ => &DEGREE4,
    }
}

/// Rule on a triangle, exact for polynomials up to `degree`.
pub fn triangle_rule(tri: &[Point2<f64>; 3], degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    let area = geo::triangle_signed_area(tri).abs();
    let entries = triangle_points(degree);
    let mut points = Vec::with_capacity(entries.len());
    let mut weights = Vec::with_capacity(entries.len());
    for &(w, b0, b1) in entries {
        let b2 = 1.0 - b0 - b1;
        let p = tri[0].coords * b0 + tri[1].coords * b1 + tri[2].coords * b2;
        points.push(Point2::from(p));
        weights.push(w * area);
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

/// Rule on a convex polygon (at least 3 vertices), fan-triangulated from the
/// vertex centroid.
pub fn polygon_rule(poly: &[Point2<f64>], degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    if poly.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "polygon needs at least 3 vertices, got {}",
            poly.len()
        )));
    }
    if poly.len() == 3 {
        return triangle_rule(&[poly[0], poly[1], poly[2]], degree);
    }
    let c = geo::polygon_centroid(poly);
    let mut rule = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
        degree,
    };
    for i in 0..poly.len() {
        let tri = [c, poly[i], poly[(i + 1) % poly.len()]];
        rule.append(triangle_rule(&tri, degree)?);
    }
    Ok(rule)
}

/// Gauss-Legendre rule on a straight segment.
pub fn segment_rule(seg: &[Point2<f64>; 2], degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    // Abscissae on [-1, 1] with reference weights summing to 2.
    let (xs, ws): (&[f64], &[f64]) = match degree {
        0 | 1 => (&[0.0], &[2.0]),
        2 | 3 => {
            const X: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
            (&[-X, X], &[1.0, 1.0])
        }
        _ => {
            const X: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
            (&[-X, 0.0, X], &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
    };
    let mid = (seg[0].coords + seg[1].coords) / 2.0;
    let half = (seg[1].coords - seg[0].coords) / 2.0;
    let half_len = half.norm();
    let points = xs
        .iter()
        .map(|&x| Point2::from(mid + x * half))
        .collect();
    let weights = ws.iter().map(|&w| w * half_len).collect();
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_triangle() -> [Point2<f64>; 3] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn constant_on_reference_triangle_is_area() {
        for degree in 0..=MAX_DEGREE {
            let rule = triangle_rule(&reference_triangle(), degree).unwrap();
            assert_relative_eq!(rule.integrate(|_| 1.0), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn x_squared_on_reference_triangle() {
        // int int x^2 over the reference triangle = 1/12.
        let rule = triangle_rule(&reference_triangle(), 2).unwrap();
        assert_relative_eq!(rule.integrate(|p| p.x * p.x), 1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn degree_four_exactness_on_triangle() {
        // int x^4 = 1/30, int x^2 y^2 = 1/180 on the reference triangle.
        let rule = triangle_rule(&reference_triangle(), 4).unwrap();
        assert_relative_eq!(rule.integrate(|p| p.x.powi(4)), 1.0 / 30.0, epsilon = 1e-14);
        assert_relative_eq!(
            rule.integrate(|p| p.x * p.x * p.y * p.y),
            1.0 / 180.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn segment_length_and_cubics() {
        let seg = [Point2::new(0.0, 0.0), Point2::new(0.6, 0.0)];
        let rule = segment_rule(&seg, 0).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0), 0.6, epsilon = 1e-15);
        let rule = segment_rule(&seg, 3).unwrap();
        assert_relative_eq!(
            rule.integrate(|p| p.x.powi(3)),
            0.6_f64.powi(4) / 4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn quad_polygon_matches_split_triangles() {
        let quad = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.5, 1.0),
            Point2::new(0.0, 1.5),
        ];
        let rule = polygon_rule(&quad, 2).unwrap();
        let t1 = triangle_rule(&[quad[0], quad[1], quad[2]], 2).unwrap();
        let t2 = triangle_rule(&[quad[0], quad[2], quad[3]], 2).unwrap();
        let f = |p: Point2<f64>| 1.0 + 2.0 * p.x - p.y + p.x * p.y;
        assert_relative_eq!(
            rule.integrate(f),
            t1.integrate(f) + t2.integrate(f),
            epsilon = 1e-13
        );
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(triangle_rule(&reference_triangle(), 5).is_err());
        assert!(segment_rule(&[Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)], 9).is_err());
    }

    #[test]
    fn weights_positive_and_sum_to_measure() {
        let quad = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        for degree in 0..=MAX_DEGREE {
            let rule = polygon_rule(&quad, degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert_relative_eq!(rule.measure(), 1.0, epsilon = 1e-14);
        }
    }

    proptest! {
        // Splitting a triangle by a line and adding the two polygon rules must
        // reproduce the whole-triangle integral for quadratics.
        #[test]
        fn split_rules_are_additive(x_cut in 0.05f64..0.95, c0 in -2.0f64..2.0,
                                    cx in -2.0f64..2.0, cxy in -2.0f64..2.0) {
            let tri = reference_triangle();
            let f = move |p: Point2<f64>| c0 + cx * p.x + cxy * p.x * p.y + p.y * p.y;
            // Clip the reference triangle with the vertical line x = x_cut.
            let y_top = 1.0 - x_cut;
            let left = [
                Point2::new(0.0, 0.0),
                Point2::new(x_cut, 0.0),
                Point2::new(x_cut, y_top),
                Point2::new(0.0, 1.0),
            ];
            let right = [
                Point2::new(x_cut, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(x_cut, y_top),
            ];
            let whole = triangle_rule(&tri, 2).unwrap().integrate(f);
            let parts = polygon_rule(&left, 2).unwrap().integrate(f)
                + triangle_rule(&right, 2).unwrap().integrate(f);
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
        }
    }
}
