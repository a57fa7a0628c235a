//! Planar convex-polygon kernels used by the layout constraints.
//!
//! Footprints are instantiated in the world frame by translating the local
//! footprint to the resource centroid. Overlap is decided with the separating
//! axis test over the edge normals of both polygons, using strict projection
//! inequalities: polygons that merely touch are reported as overlapping.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::model::{Interval, Resource};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Left-hand normal `(-dy, dx)` of an edge vector.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn lerp(self, other: Vec2, s: f64) -> Vec2 {
        self + (other - self) * s
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("resource `{resource}` has {expected} coordinates, got {actual}")]
    DimensionMismatch {
        resource: String,
        expected: usize,
        actual: usize,
    },
}

/// A convex polygon in world coordinates with its (unnormalized) edge normals.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldPolygon {
    vertices: Vec<Vec2>,
    normals: Vec<Vec2>,
}

impl WorldPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        let n = vertices.len();
        let normals = (0..n)
            .map(|k| (vertices[(k + 1) % n] - vertices[k]).perp())
            .collect();
        WorldPolygon { vertices, normals }
    }

    /// Axis-aligned rectangle centered on `center`.
    pub fn rectangle(center: Vec2, width: f64, height: f64) -> Self {
        let (hw, hh) = (width / 2.0, height / 2.0);
        WorldPolygon::new(vec![
            center + Vec2::new(-hw, -hh),
            center + Vec2::new(hw, -hh),
            center + Vec2::new(hw, hh),
            center + Vec2::new(-hw, hh),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn normals(&self) -> &[Vec2] {
        &self.normals
    }

    pub fn translated(&self, by: Vec2) -> Self {
        WorldPolygon::new(self.vertices.iter().map(|&v| v + by).collect())
    }

    /// `(min, max)` of the vertex projections onto `axis`.
    pub fn project(&self, axis: Vec2) -> (f64, f64) {
        self.vertices
            .iter()
            .map(|v| v.dot(axis))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p), hi.max(p))
            })
    }

    /// Closed containment test for a counter-clockwise convex polygon.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|k| {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            (b - a).cross(p - a) >= 0.0
        })
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|k| self.vertices[k].cross(self.vertices[(k + 1) % n]))
            .sum::<f64>()
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        self.vertices.iter().fold(
            (
                Vec2::new(f64::INFINITY, f64::INFINITY),
                Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            ),
            |(lo, hi), v| {
                (
                    Vec2::new(lo.x.min(v.x), lo.y.min(v.y)),
                    Vec2::new(hi.x.max(v.x), hi.y.max(v.y)),
                )
            },
        )
    }
}

/// True when the vertex loop is convex, counter-clockwise and has at least
/// three vertices. Collinear consecutive edges are tolerated.
pub fn is_convex_ccw(vertices: &[Vec2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let poly = WorldPolygon::new(vertices.to_vec());
    if poly.signed_area() <= 0.0 {
        return false;
    }
    (0..n).all(|k| {
        let a = vertices[k];
        let b = vertices[(k + 1) % n];
        let c = vertices[(k + 2) % n];
        (b - a).cross(c - b) >= 0.0
    })
}

/// Instantiates a resource footprint in the world frame.
///
/// Fixed resources ignore `coords` and use their stored coordinates.
pub fn place(resource: &Resource, coords: &[f64]) -> Result<WorldPolygon, GeometryError> {
    let coords = if resource.movable {
        if coords.len() != resource.coords.len() {
            return Err(GeometryError::DimensionMismatch {
                resource: resource.name.clone(),
                expected: resource.coords.len(),
                actual: coords.len(),
            });
        }
        coords
    } else {
        &resource.coords
    };
    let centroid = Vec2::new(coords[0], coords[1]);
    Ok(WorldPolygon::new(
        resource.footprint.iter().map(|&v| v + centroid).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationResult {
    pub separated: bool,
    /// Unit witness axis when `separated` holds.
    pub axis: Option<Vec2>,
}

/// Separating axis test with strict inequalities on normalized edge normals.
pub fn separated(a: &WorldPolygon, b: &WorldPolygon) -> SeparationResult {
    for normal in a.normals().iter().chain(b.normals()) {
        let len = normal.norm();
        if len == 0.0 {
            continue;
        }
        let axis = *normal * (1.0 / len);
        let (a_lo, a_hi) = a.project(axis);
        let (b_lo, b_hi) = b.project(axis);
        if a_hi < b_lo || b_hi < a_lo {
            return SeparationResult {
                separated: true,
                axis: Some(axis),
            };
        }
    }
    SeparationResult {
        separated: false,
        axis: None,
    }
}

/// Signed projection gap over all candidate axes: positive is the widest
/// separation, negative is the smallest penetration depth.
pub fn projection_gap(a: &WorldPolygon, b: &WorldPolygon) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for normal in a.normals().iter().chain(b.normals()) {
        let len = normal.norm();
        if len == 0.0 {
            continue;
        }
        let axis = *normal * (1.0 / len);
        let (a_lo, a_hi) = a.project(axis);
        let (b_lo, b_hi) = b.project(axis);
        best = best.max((b_lo - a_hi).max(a_lo - b_hi));
    }
    best
}

/// Inclusive annulus membership `d_min <= |point - center| <= d_max`.
pub fn in_annulus(point: Vec2, center: Vec2, d_min: f64, d_max: f64) -> bool {
    let d = point.distance(center);
    d_min <= d && d <= d_max
}

/// Inclusive per-coordinate bounds check. Length mismatch is never in bounds.
pub fn in_bounds(coords: &[f64], bounds: &[Interval]) -> bool {
    coords.len() == bounds.len()
        && coords
            .iter()
            .zip(bounds)
            .all(|(&c, iv)| iv.min <= c && c <= iv.max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square(cx: f64, cy: f64) -> WorldPolygon {
        WorldPolygon::rectangle(Vec2::new(cx, cy), 1.0, 1.0)
    }

    fn resource(movable: bool, coords: Vec<f64>) -> Resource {
        Resource {
            name: "r".into(),
            movable,
            coords,
            footprint: unit_square(0.0, 0.0).vertices().to_vec(),
            bounds: vec![],
        }
    }

    #[test]
    fn place_translates_footprint() {
        let r = resource(true, vec![0.0, 0.0]);
        let p = place(&r, &[3.0, 4.0]).unwrap();
        assert_eq!(p, unit_square(3.0, 4.0));
        let p0 = place(&r, &[0.0, 0.0]).unwrap();
        assert_eq!(p0.vertices(), r.footprint.as_slice());
    }

    #[test]
    fn place_fixed_resource_uses_stored_coords() {
        let r = resource(false, vec![2.0, 1.0]);
        assert_eq!(place(&r, &[9.0, 9.0]).unwrap(), unit_square(2.0, 1.0));
        assert_eq!(place(&r, &[]).unwrap(), unit_square(2.0, 1.0));
    }

    #[test]
    fn place_rejects_wrong_dimension() {
        let r = resource(true, vec![0.0, 0.0]);
        assert!(matches!(
            place(&r, &[1.0]),
            Err(GeometryError::DimensionMismatch { expected: 2, actual: 1, .. })
        ));
    }

    #[test]
    fn gap_on_x_is_separated() {
        let res = separated(&unit_square(0.0, 0.0), &unit_square(3.0, 0.0));
        assert!(res.separated);
        let axis = res.axis.unwrap();
        assert!((axis.x.abs() - 1.0).abs() < 1e-12 && axis.y.abs() < 1e-12);
    }

    #[test]
    fn overlapping_squares_are_not_separated() {
        let res = separated(&unit_square(0.0, 0.0), &unit_square(0.5, 0.0));
        assert!(!res.separated);
        assert!(res.axis.is_none());
    }

    #[test]
    fn touching_squares_count_as_overlap() {
        assert!(!separated(&unit_square(0.0, 0.0), &unit_square(1.0, 0.0)).separated);
    }

    #[test]
    fn annulus_is_inclusive() {
        let c = Vec2::new(1.0, 1.0);
        assert!(in_annulus(Vec2::new(1.5, 1.0), c, 0.5, 2.0));
        assert!(in_annulus(Vec2::new(3.0, 1.0), c, 0.5, 2.0));
        assert!(!in_annulus(c, c, 0.5, 2.0));
        assert!(in_annulus(Vec2::new(1.0, 2.25), c, 0.5, 2.0));
    }

    #[test]
    fn bounds_are_inclusive() {
        let b = vec![Interval::new(0.0, 1.0), Interval::new(-1.0, 1.0)];
        assert!(in_bounds(&[0.0, -1.0], &b));
        assert!(!in_bounds(&[0.0, 1.0 + 1e-12], &b));
        assert!(in_bounds(&[], &[]));
        assert!(!in_bounds(&[0.0], &b));
    }

    #[test]
    fn convexity_check() {
        assert!(is_convex_ccw(unit_square(0.0, 0.0).vertices()));
        let mut cw = unit_square(0.0, 0.0).vertices().to_vec();
        cw.reverse();
        assert!(!is_convex_ccw(&cw));
        let dart = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(0.5, 1.0),
        ];
        assert!(!is_convex_ccw(&dart));
        assert!(!is_convex_ccw(&dart[..2]));
    }

    fn arb_polygon() -> impl Strategy<Value = WorldPolygon> {
        (
            3usize..8,
            0.2f64..2.0,
            -3.0f64..3.0,
            -3.0f64..3.0,
            0.0f64..std::f64::consts::TAU,
        )
            .prop_map(|(n, r, cx, cy, phase)| {
                let vertices = (0..n)
                    .map(|k| {
                        let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
                        Vec2::new(cx + r * a.cos(), cy + r * a.sin())
                    })
                    .collect();
                WorldPolygon::new(vertices)
            })
    }

    proptest! {
        #[test]
        fn sat_is_symmetric(a in arb_polygon(), b in arb_polygon()) {
            prop_assert_eq!(separated(&a, &b).separated, separated(&b, &a).separated);
        }

        #[test]
        fn sat_is_translation_covariant(
            a in arb_polygon(),
            b in arb_polygon(),
            dx in -50.0f64..50.0,
            dy in -50.0f64..50.0,
        ) {
            prop_assume!(projection_gap(&a, &b).abs() > 1e-9);
            let t = Vec2::new(dx, dy);
            prop_assert_eq!(
                separated(&a, &b).separated,
                separated(&a.translated(t), &b.translated(t)).separated
            );
        }

        #[test]
        fn witness_axis_separates_projections(a in arb_polygon(), b in arb_polygon()) {
            let res = separated(&a, &b);
            if let Some(axis) = res.axis {
                let (a_lo, a_hi) = a.project(axis);
                let (b_lo, b_hi) = b.project(axis);
                prop_assert!(a_hi < b_lo || b_hi < a_lo);
            }
        }
    }
}
