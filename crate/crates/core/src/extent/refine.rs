use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PlanarPolygonSet;
use crate::annotations::EdgePoint;
use crate::region::{self, Region, Ring};
use crate::solver::PlaneSet;
use crate::ElementId;

/// Largest relative area increase an extension may cause.
pub const MAX_GROWTH: f64 = 0.1;
/// A part beyond an intersection line is cut when smaller than this fraction of its polygon.
pub const MAX_CUT_FRACTION: f64 = 0.1;

const LINE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineKind {
    Extend,
    Cut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOp {
    pub kind: RefineKind,
    pub element: ElementId,
    pub partner: ElementId,
    pub area_before: f64,
    pub area_after: f64,
    pub accepted: bool,
}

/// Unordered structural element pairs with at least one edge point, sorted.
pub fn neighbor_pairs(edge_points: &[EdgePoint], planes: &PlaneSet) -> Vec<(ElementId, ElementId)> {
    let set: BTreeSet<(ElementId, ElementId)> = edge_points
        .iter()
        .filter_map(|e| {
            let (a, b) = (
                planes.plane_owner(e.element_a)?,
                planes.plane_owner(e.element_b)?,
            );
            (a != b).then(|| (a.min(b), a.max(b)))
        })
        .collect();
    set.into_iter().collect()
}

/// The intersection line expressed in one polygon's basis: point and unit direction.
/// Coordinates along the line are measured from the same 3D point in both bases.
struct Line2 {
    a: [f64; 2],
    b: [f64; 2],
}

impl Line2 {
    fn side(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.a[0]) * self.b[1] - (p[1] - self.a[1]) * self.b[0]
    }

    fn along(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.a[0]) * self.b[0] + (p[1] - self.a[1]) * self.b[1]
    }

    fn project(&self, p: [f64; 2]) -> [f64; 2] {
        let t = self.along(p);
        [self.a[0] + t * self.b[0], self.a[1] + t * self.b[1]]
    }

    /// Coefficients of `side(p) >= 0` as `A x + B y + C >= 0`.
    fn half_plane(&self, sign: f64) -> [f64; 3] {
        let (a, b) = (self.a, self.b);
        [
            sign * b[1],
            -sign * b[0],
            sign * (a[1] * b[0] - a[0] * b[1]),
        ]
    }
}

fn lines(p: &PlanarPolygonSet, q: &PlanarPolygonSet) -> Option<(Line2, Line2)> {
    let (point, dir) = p.plane.intersection_line(&q.plane)?;
    let in_basis = |s: &PlanarPolygonSet| {
        let a = s.basis.to_2d(&point);
        let b = [dir.dot(&s.basis.e1), dir.dot(&s.basis.e2)];
        let n = (b[0] * b[0] + b[1] * b[1]).sqrt();
        Line2 {
            a,
            b: [b[0] / n, b[1] / n],
        }
    };
    Some((in_basis(p), in_basis(q)))
}

fn vertices(r: &Region) -> Vec<[f64; 2]> {
    region::to_rings(r).into_iter().flatten().collect()
}

/// Snaps the vertices within twice the gap distance onto the line.
fn extend(set: &PlanarPolygonSet, line: &Line2) -> Option<Region> {
    let sides: Vec<f64> = vertices(&set.region)
        .iter()
        .map(|p| line.side(*p))
        .collect();
    if sides.is_empty() {
        return None;
    }
    let (lo, hi) = sides
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| {
            (l.min(*s), h.max(*s))
        });
    if lo < -LINE_EPS && hi > LINE_EPS {
        return None;
    }
    let gap = lo.abs().min(hi.abs());
    if gap <= LINE_EPS {
        return None;
    }
    let rings: Vec<Ring> = region::to_rings(&set.region)
        .into_iter()
        .map(|ring| {
            ring.into_iter()
                .map(|p| {
                    if line.side(p).abs() <= 2.0 * gap {
                        line.project(p)
                    } else {
                        p
                    }
                })
                .collect()
        })
        .collect();
    Some(region::union(&set.region, &region::from_rings(&rings)))
}

fn footprint(set: &PlanarPolygonSet, line: &Line2) -> Option<(f64, f64)> {
    let v = vertices(&set.region);
    if v.is_empty() {
        return None;
    }
    Some(
        v.iter()
            .map(|p| line.along(*p))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| {
                (l.min(t), h.max(t))
            }),
    )
}

/// Removes the smaller side of `set` beyond the line when it is small enough.
fn cut(set: &PlanarPolygonSet, line: &Line2) -> Option<Region> {
    let [a, b, c] = line.half_plane(1.0);
    let pos = region::clip_half_plane(&set.region, a, b, c);
    let neg = region::clip_half_plane(&set.region, -a, -b, -c);
    let (ap, an) = (region::area(&pos), region::area(&neg));
    if ap <= 0.0 || an <= 0.0 {
        return None;
    }
    Some(if ap < an { neg } else { pos })
}

/// Extends polygons towards their neighbors' intersection lines, then cuts
/// small overhangs past them. Pairs are processed in the given order; every
/// attempted operation is logged.
pub fn refine(
    extents: &mut BTreeMap<ElementId, PlanarPolygonSet>,
    pairs: &[(ElementId, ElementId)],
) -> Vec<RefineOp> {
    let mut log = Vec::new();
    for &(i, j) in pairs {
        for (me, other) in [(i, j), (j, i)] {
            let (Some(p), Some(q)) = (extents.get(&me), extents.get(&other)) else {
                continue;
            };
            let Some((line, _)) = lines(p, q) else {
                continue;
            };
            let Some(candidate) = extend(p, &line) else {
                continue;
            };
            let before = p.area();
            let after = region::area(&candidate);
            let accepted = after <= before * (1.0 + MAX_GROWTH);
            log.push(RefineOp {
                kind: RefineKind::Extend,
                element: me,
                partner: other,
                area_before: before,
                area_after: after,
                accepted,
            });
            if accepted {
                extents.get_mut(&me).unwrap().region = candidate;
            }
        }
    }
    for &(i, j) in pairs {
        for (me, other) in [(i, j), (j, i)] {
            let (Some(p), Some(q)) = (extents.get(&me), extents.get(&other)) else {
                continue;
            };
            let Some((line_p, line_q)) = lines(p, q) else {
                continue;
            };
            let (Some(fp), Some(fq)) = (footprint(p, &line_p), footprint(q, &line_q)) else {
                continue;
            };
            if fp.1 < fq.0 || fq.1 < fp.0 {
                continue;
            }
            let Some(candidate) = cut(p, &line_p) else {
                continue;
            };
            let before = p.area();
            let after = region::area(&candidate);
            let accepted = before - after < MAX_CUT_FRACTION * before;
            log.push(RefineOp {
                kind: RefineKind::Cut,
                element: me,
                partner: other,
                area_before: before,
                area_after: after,
                accepted,
            });
            if accepted {
                extents.get_mut(&me).unwrap().region = candidate;
            }
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::StructuralClass;
    use crate::geometry::{Plane, Vec3};

    fn set(
        id: u32,
        class: StructuralClass,
        plane: Plane,
        rings_3d: &[Vec<Vec3>],
    ) -> PlanarPolygonSet {
        let mut s = PlanarPolygonSet::empty(ElementId(id), class, plane);
        let rings: Vec<Ring> = rings_3d
            .iter()
            .map(|r| r.iter().map(|p| s.basis.to_2d(p)).collect())
            .collect();
        let mut rings = rings;
        if region::signed_ring_area(&rings[0]) < 0.0 {
            rings.iter_mut().for_each(|r| r.reverse());
        }
        s.region = region::from_rings(&rings);
        s
    }

    fn wall_and_floor(wall_bottom: f64, wall_top: f64) -> BTreeMap<ElementId, PlanarPolygonSet> {
        // wall y = 3 spanning x in [0, 4]; floor z = 0 spanning y in [0, 3]
        let wall_plane = Plane::new(Vec3::new(0.0, -1.0, 0.0), 3.0, ElementId(0)).unwrap();
        let floor_plane = Plane::new(Vec3::new(0.0, 0.0, 1.0), 0.0, ElementId(1)).unwrap();
        let wall = set(
            0,
            StructuralClass::Wall,
            wall_plane,
            &[vec![
                Vec3::new(0.0, 3.0, wall_bottom),
                Vec3::new(4.0, 3.0, wall_bottom),
                Vec3::new(4.0, 3.0, wall_top),
                Vec3::new(0.0, 3.0, wall_top),
            ]],
        );
        let floor = set(
            1,
            StructuralClass::Floor,
            floor_plane,
            &[vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(4.0, 0.0, 0.0),
                Vec3::new(4.0, 3.0, 0.0),
                Vec3::new(0.0, 3.0, 0.0),
            ]],
        );
        BTreeMap::from([(ElementId(0), wall), (ElementId(1), floor)])
    }

    #[test]
    fn small_gap_is_filled() {
        // wall from z = 0.05 to 1.30 is 4 * 1.25 = 5 m^2; the gap is 0.2 m^2 = 4%
        let mut ex = wall_and_floor(0.05, 1.30);
        let log = refine(&mut ex, &[(ElementId(0), ElementId(1))]);
        let w = &ex[&ElementId(0)];
        assert!((w.area() - 5.2).abs() < 1e-6, "{}", w.area());
        let min_z = w
            .rings_3d()
            .iter()
            .flatten()
            .map(|p| p.z)
            .fold(f64::INFINITY, f64::min);
        assert!(min_z.abs() < 1e-6);
        assert!(log
            .iter()
            .any(|o| o.kind == RefineKind::Extend && o.accepted));
    }

    #[test]
    fn large_extension_is_rejected() {
        // gap 0.25 on a 1 m tall wall would add 25%
        let mut ex = wall_and_floor(0.25, 1.25);
        let before = ex[&ElementId(0)].region.clone();
        let log = refine(&mut ex, &[(ElementId(0), ElementId(1))]);
        assert_eq!(ex[&ElementId(0)].region, before);
        assert!(log
            .iter()
            .any(|o| o.kind == RefineKind::Extend && !o.accepted));
    }

    #[test]
    fn small_protrusion_is_cut() {
        // wall from z = -0.03 to 0.97: 3% below the floor
        let mut ex = wall_and_floor(-0.03, 0.97);
        refine(&mut ex, &[(ElementId(0), ElementId(1))]);
        let w = &ex[&ElementId(0)];
        assert!((w.area() - 3.88).abs() < 1e-6, "{}", w.area());
        assert!((ex[&ElementId(1)].area() - 12.0).abs() < 1e-6);
    }
}
