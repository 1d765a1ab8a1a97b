//! Exact amodal annotations of ground-truth polygons as seen by a camera.

use nalgebra::Vector3;

use super::GtElement;
use crate::annotations::OcclusionEdge;
use crate::geometry::{CameraFrame, Vec2, Vec3};
use crate::region::{self, Region, Ring};

const NEAR: f64 = 0.05;
/// Pixels beyond the image border kept when clipping to the view frustum.
const MARGIN: f64 = 4.0;

fn clip3(poly: &[Vec3], h: &Vector3<f64>, k: f64) -> Vec<Vec3> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (fp, fq) = (h.dot(&p) + k, h.dot(&q) + k);
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            out.push(p + (q - p) * (fp / (fp - fq)));
        }
    }
    out
}

/// Camera-frame ring clipped to the slightly enlarged view frustum and projected.
fn project_ring(cam: &CameraFrame, ring: &[Vec3], w: f64, h: f64) -> Ring {
    let pts: Vec<Vec3> = ring.iter().map(|p| cam.to_camera(p)).collect();
    let k = &cam.intrinsics;
    let (r0, r1, r2) = (
        k.row(0).transpose(),
        k.row(1).transpose(),
        k.row(2).transpose(),
    );
    let mut poly = clip3(&pts, &Vector3::z(), -NEAR);
    for (row, bound, sign) in [
        (&r0, -MARGIN, 1.0),
        (&r0, w + MARGIN, -1.0),
        (&r1, -MARGIN, 1.0),
        (&r1, h + MARGIN, -1.0),
    ] {
        if poly.len() < 3 {
            return vec![];
        }
        // sign * (row . X - bound * r2 . X) >= 0
        let hv = (row - r2 * bound) * sign;
        poly = clip3(&poly, &hv, 0.0);
    }
    poly.iter()
        .map(|p| {
            let q = k * p;
            [q.x / q.z, q.y / q.z]
        })
        .collect()
}

/// Image region covered by an element's polygon, ignoring other elements.
pub fn footprint(cam: &CameraFrame, el: &GtElement, w: f64, h: f64) -> Region {
    let mut out = region::empty();
    for (outer, holes) in region::components(&el.set.region) {
        let lift = |r: &Ring| r.iter().map(|p| el.set.basis.to_3d(*p)).collect::<Vec<_>>();
        let o = project_ring(cam, &lift(&outer), w, h);
        if o.len() < 3 {
            continue;
        }
        let mut piece = oriented(vec![o]);
        for hole in &holes {
            let hr = project_ring(cam, &lift(hole), w, h);
            if hr.len() >= 3 {
                piece = region::difference(&piece, &oriented(vec![hr]));
            }
        }
        out = region::union(&out, &piece);
    }
    region::intersection(&out, &region::rect(0.0, 0.0, w, h))
}

fn oriented(mut rings: Vec<Ring>) -> Region {
    for r in &mut rings {
        if region::signed_ring_area(r) < 0.0 {
            r.reverse();
        }
    }
    region::from_rings(&rings)
}

/// Image half-plane `c . [u, v, 1] > 0` where element `j`'s plane is nearer
/// to the camera than element `i`'s. `None` for coplanar elements.
pub fn nearer_half_plane(cam: &CameraFrame, i: &GtElement, j: &GtElement) -> Option<[f64; 3]> {
    let o = cam.center();
    let (pi, pj) = (&i.set.plane, &j.set.plane);
    let (ai, aj) = (
        -(pi.normal.dot(&o) + pi.offset),
        -(pj.normal.dot(&o) + pj.offset),
    );
    if ai == 0.0 || aj == 0.0 {
        return None;
    }
    let g = pj.normal / aj - pi.normal / ai;
    let c = cam.inverse_intrinsics().transpose() * (cam.rotation * g);
    if c.norm() < 1e-12 * (1.0 / ai.abs() + 1.0 / aj.abs()) {
        return None;
    }
    Some([c.x, c.y, c.z])
}

pub struct FrameRender {
    pub amodal: Vec<Region>,
    pub occlusion_edges: Vec<OcclusionEdge>,
}

/// Amodal region of every element (its footprint minus whatever other
/// elements hide) and the silhouette edges where one element hides another.
pub fn render_frame(cam: &CameraFrame, elements: &[GtElement], w: f64, h: f64) -> FrameRender {
    let feet: Vec<Region> = elements.iter().map(|e| footprint(cam, e, w, h)).collect();
    let bounds = [-MARGIN, -MARGIN, w + MARGIN, h + MARGIN];
    let mut amodal = Vec::with_capacity(elements.len());
    let mut edges = Vec::new();
    for (i, ei) in elements.iter().enumerate() {
        if region::is_empty(&feet[i]) {
            amodal.push(region::empty());
            continue;
        }
        let mut hidden = region::empty();
        for (j, ej) in elements.iter().enumerate() {
            if i == j || region::is_empty(&feet[j]) {
                continue;
            }
            let Some([a, b, c]) = nearer_half_plane(cam, ei, ej) else {
                continue;
            };
            let over = region::intersection(
                &region::intersection(&feet[j], &feet[i]),
                &region::half_plane_in_box(a, b, c, bounds),
            );
            if region::is_empty(&over) || region::area(&over) < 1e-9 {
                continue;
            }
            let norm = (a * a + b * b).sqrt();
            let segs_i = region::segments(&feet[i]);
            for (p, q) in region::segments(&over) {
                let m = Vec2::new(0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]));
                let on_line = (a * m.x + b * m.y + c).abs() / norm < 0.5;
                let on_border = m.x < 0.5 || m.y < 0.5 || m.x > w - 0.5 || m.y > h - 0.5;
                let on_own =
                    region::nearest_on_segments(&segs_i, [m.x, m.y]).is_some_and(|(_, d)| d < 0.5);
                if !on_line && !on_border && !on_own {
                    edges.push(OcclusionEdge {
                        polyline: vec![Vec2::new(p[0], p[1]), Vec2::new(q[0], q[1])],
                        frame_index: cam.frame_index,
                    });
                }
            }
            hidden = region::union(&hidden, &over);
        }
        amodal.push(region::difference(&feet[i], &hidden));
    }
    FrameRender {
        amodal,
        occlusion_edges: edges,
    }
}
