//! Finite extent of each plane: unprojected annotation polygons, their union,
//! contact refinement, doors and windows, and the labeled triangle mesh.

mod mesh;
mod openings;
mod refine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{FrameAnnotation, StructuralClass};
use crate::geometry::{
    intersect, pixel_ray, CameraFrame, Plane, Vec2, Vec3, MAX_DEPTH, PARALLEL_EPS,
};
use crate::region::{self, Region, Ring};
use crate::solver::PlaneSet;
use crate::tracking::ElementRegistry;
use crate::ElementId;

pub use mesh::{assemble_mesh, read_ply, triangulate, write_obj, write_ply, LayoutMesh};
pub use openings::{attach_doors_windows, find_hosts, shared_boundary_lengths, HostMap};
pub use refine::{neighbor_pairs, refine, RefineKind, RefineOp, MAX_CUT_FRACTION, MAX_GROWTH};

/// Grid used to merge near-coincident vertices before boolean operations, in meters.
pub const SNAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExtentError {
    #[error("polygon lies entirely where the plane cannot be reached from the camera")]
    FullyInvalid,
    #[error("element {element} shares no boundary with a structural element")]
    NoHost { element: ElementId },
    #[error("triangulation of element {element} failed: {reason}")]
    TriangulationFailure { element: ElementId, reason: String },
    #[error("mesh file: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh file is malformed: {0}")]
    Format(String),
}

/// Orthonormal 2D coordinate frame on a plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBasis {
    pub origin: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl PlaneBasis {
    /// Deterministic basis: the world axis least aligned with the normal, crossed with it.
    pub fn for_plane(plane: &Plane) -> Self {
        let n = plane.normal;
        let a = n.abs();
        let axis = if a.x <= a.y && a.x <= a.z {
            Vec3::x()
        } else if a.y <= a.z {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let e1 = axis.cross(&n).normalize();
        let e2 = n.cross(&e1);
        Self {
            origin: plane.anchor(),
            e1,
            e2,
        }
    }

    pub fn to_2d(&self, x: &Vec3) -> [f64; 2] {
        let d = x - self.origin;
        [d.dot(&self.e1), d.dot(&self.e2)]
    }

    pub fn to_3d(&self, p: [f64; 2]) -> Vec3 {
        self.origin + self.e1 * p[0] + self.e2 * p[1]
    }
}

/// An element's extent as planar polygons with holes, in its plane basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPolygonSet {
    pub element_id: ElementId,
    pub class: StructuralClass,
    pub plane: Plane,
    pub basis: PlaneBasis,
    pub region: Region,
}

impl PlanarPolygonSet {
    pub fn empty(element_id: ElementId, class: StructuralClass, plane: Plane) -> Self {
        Self {
            element_id,
            class,
            plane,
            basis: PlaneBasis::for_plane(&plane),
            region: region::empty(),
        }
    }

    pub fn area(&self) -> f64 {
        region::area(&self.region)
    }

    /// Ring vertices in world coordinates, outer rings first per component.
    pub fn rings_3d(&self) -> Vec<Vec<Vec3>> {
        region::to_rings(&self.region)
            .iter()
            .map(|r| r.iter().map(|p| self.basis.to_3d(*p)).collect())
            .collect()
    }
}

/// Image-space half-plane `a u + b v + c >= 0` on which unprojection onto
/// `plane` is valid for every pixel with `|K^-1 [u, v, 1]| <= ray_bound`.
pub fn valid_half_plane(plane: &Plane, camera: &CameraFrame, ray_bound: f64) -> Option<[f64; 3]> {
    let (n, d) = camera.plane_in_camera(plane);
    if d == 0.0 {
        return None;
    }
    let c = camera.inverse_intrinsics().transpose() * n;
    let sigma = -d.signum();
    let tau = PARALLEL_EPS.max(d.abs() / MAX_DEPTH) * (1.0 + 1e-9) * ray_bound;
    Some([sigma * c.x, sigma * c.y, sigma * c.z - tau])
}

/// Unprojects an image region onto `plane`, in `basis` coordinates.
///
/// The region is first clipped to the part of the image where the viewing
/// rays hit the plane in front of the camera within the depth cap.
pub fn unproject_polygon(
    polygon: &Region,
    plane: &Plane,
    camera: &CameraFrame,
    basis: &PlaneBasis,
) -> Result<Region, ExtentError> {
    let mut out_rings: Vec<Ring> = Vec::new();
    for (outer, holes) in region::components(polygon) {
        let ray_bound = outer
            .iter()
            .map(|p| camera.camera_direction(&Vec2::new(p[0], p[1])).norm())
            .fold(1.0, f64::max);
        let Some([a, b, c]) = valid_half_plane(plane, camera, ray_bound) else {
            return Err(ExtentError::FullyInvalid);
        };
        let lift = |ring: &Ring| -> Ring {
            region::clip_ring_half_plane(ring, a, b, c)
                .iter()
                .filter_map(|p| {
                    let ray = pixel_ray(camera, &Vec2::new(p[0], p[1]));
                    intersect(&ray, plane).ok().map(|s| basis.to_2d(&ray.at(s)))
                })
                .collect()
        };
        let mut outer3 = lift(&outer);
        if outer3.len() < 3 {
            continue;
        }
        let flip = region::signed_ring_area(&outer3) < 0.0;
        let mut hole3: Vec<Ring> = holes.iter().map(lift).filter(|h| h.len() >= 3).collect();
        if flip {
            outer3.reverse();
            hole3.iter_mut().for_each(|h| h.reverse());
        }
        out_rings.push(outer3);
        out_rings.extend(hole3);
    }
    let r = region::from_rings(&out_rings);
    if region::is_empty(&r) {
        return Err(ExtentError::FullyInvalid);
    }
    Ok(r)
}

/// Boolean union of per-frame regions after snapping to [`SNAP_TOLERANCE`].
pub fn union_extent<'a>(regions: impl IntoIterator<Item = &'a Region>) -> Region {
    let snapped: Vec<Region> = regions
        .into_iter()
        .map(|r| region::snap(r, SNAP_TOLERANCE))
        .collect();
    region::union_all(&snapped)
}

/// Extent of every structural element with a plane, from its amodal polygons.
///
/// Frames whose polygon is fully invalid for the current plane are skipped
/// and returned as `(element, frame)` warnings.
pub fn build_extents(
    frames: &[FrameAnnotation],
    registry: &ElementRegistry,
    planes: &PlaneSet,
    cameras: &BTreeMap<usize, CameraFrame>,
    skip: &[ElementId],
) -> (
    BTreeMap<ElementId, PlanarPolygonSet>,
    Vec<(ElementId, usize)>,
) {
    let mut per_element: BTreeMap<ElementId, Vec<Region>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for fa in frames {
        let Some(cam) = cameras.get(&fa.frame_index) else {
            continue;
        };
        for el in &fa.elements {
            let Some(g) = registry.global(fa.frame_index, el.local_id) else {
                continue;
            };
            if el.class.is_opening() || skip.contains(&g) {
                continue;
            }
            let Some(plane) = planes.planes.get(&g) else {
                continue;
            };
            let basis = PlaneBasis::for_plane(plane);
            match unproject_polygon(&el.amodal, plane, cam, &basis) {
                Ok(r) => per_element.entry(g).or_default().push(r),
                Err(_) => warnings.push((g, fa.frame_index)),
            }
        }
    }
    let extents = per_element
        .into_iter()
        .map(|(g, regions)| {
            let plane = planes.planes[&g];
            let class = planes.class(g).unwrap_or(StructuralClass::Wall);
            let mut set = PlanarPolygonSet::empty(g, class, plane);
            set.region = union_extent(&regions);
            (g, set)
        })
        .collect();
    (extents, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;
    use nalgebra::Matrix3;

    fn frontal_camera() -> CameraFrame {
        CameraFrame::pinhole(
            0,
            500.0,
            Vec2::new(320.0, 240.0),
            Matrix3::identity(),
            Vec3::zeros(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 2.0, -0.3),
            Vec3::new(-0.2, 0.1, 0.9),
        ] {
            let p = Plane::new(n, 1.3, ElementId(0)).unwrap();
            let b = PlaneBasis::for_plane(&p);
            assert!((b.e1.norm() - 1.0).abs() < 1e-12 && (b.e2.norm() - 1.0).abs() < 1e-12);
            assert!(b.e1.dot(&b.e2).abs() < 1e-12);
            assert!(b.e1.dot(&p.normal).abs() < 1e-12 && b.e2.dot(&p.normal).abs() < 1e-12);
            assert!(p.signed_distance(&b.origin).abs() < 1e-12);
        }
    }

    #[test]
    fn frontal_square_has_similar_triangle_size() {
        let cam = frontal_camera();
        let plane = Plane::new(Vec3::new(0.0, 0.0, -1.0), 4.0, ElementId(0)).unwrap();
        let basis = PlaneBasis::for_plane(&plane);
        let square = region::rect(300.0, 200.0, 400.0, 300.0);
        let r = unproject_polygon(&square, &plane, &cam, &basis).unwrap();
        let side = 4.0 * 100.0 / 500.0;
        assert!((region::area(&r) / (side * side) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beyond_horizon_is_fully_invalid() {
        let cam = frontal_camera();
        // floor one meter below the camera (y points down); its horizon is the row v = 240
        let plane = Plane::new(Vec3::new(0.0, -1.0, 0.0), 1.0, ElementId(0)).unwrap();
        let basis = PlaneBasis::for_plane(&plane);
        let sky = region::rect(0.0, 0.0, 640.0, 200.0);
        assert!(matches!(
            unproject_polygon(&sky, &plane, &cam, &basis),
            Err(ExtentError::FullyInvalid)
        ));
        let both = region::rect(0.0, 100.0, 640.0, 480.0);
        let r = unproject_polygon(&both, &plane, &cam, &basis).unwrap();
        for ring in region::to_rings(&r) {
            for p in ring {
                let px = project(&cam, &basis.to_3d(p)).unwrap();
                assert!(px.y > 240.0);
            }
        }
    }

    #[test]
    fn round_trip_matches_input_vertices() {
        let cam = frontal_camera();
        let plane = Plane::new(Vec3::new(0.3, -0.2, -1.0), 5.0, ElementId(0)).unwrap();
        let basis = PlaneBasis::for_plane(&plane);
        let poly = region::from_rings(&[vec![
            [100.0, 100.0],
            [420.0, 130.0],
            [380.0, 400.0],
            [150.0, 350.0],
        ]]);
        let r = unproject_polygon(&poly, &plane, &cam, &basis).unwrap();
        let mut back: Vec<[f64; 2]> = region::to_rings(&r)[0]
            .iter()
            .map(|p| {
                let u = project(&cam, &basis.to_3d(*p)).unwrap();
                [u.x, u.y]
            })
            .collect();
        let mut orig = region::to_rings(&poly)[0].clone();
        back.sort_by(|a, b| a.partial_cmp(b).unwrap());
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in back.iter().zip(&orig) {
            assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn union_examples() {
        let a = region::rect(0.0, 0.0, 1.0, 1.0);
        assert!((region::area(&union_extent([&a, &a])) - 1.0).abs() < 1e-9);
        let b = region::rect(0.5, 0.0, 1.5, 1.0);
        assert!((region::area(&union_extent([&a, &b])) - 1.5).abs() < 1e-9);
        let c = region::rect(3.0, 0.0, 4.0, 1.0);
        assert_eq!(union_extent([&a, &c]).0.len(), 2);
        assert!(union_extent(std::iter::empty()).0.is_empty());
    }
}
