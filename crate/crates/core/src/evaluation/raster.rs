use crate::extent::LayoutMesh;
use crate::geometry::{CameraFrame, Vec2, Vec3};
use crate::region::Mask;
use crate::ElementId;

/// Triangles are clipped against this camera-frame depth before projection.
pub const NEAR_PLANE: f64 = 1e-4;

/// Rendered element label and camera-frame depth per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDepthImage {
    pub width: usize,
    pub height: usize,
    pub label: Vec<Option<ElementId>>,
    pub depth: Vec<f64>,
}

impl LabelDepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            label: vec![None; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn label_at(&self, x: usize, y: usize) -> Option<ElementId> {
        self.label[y * self.width + x]
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn mask(&self, id: ElementId) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.label.iter().map(|l| *l == Some(id)).collect(),
        }
    }

    /// Element ids present in the image, ascending.
    pub fn labels(&self) -> Vec<ElementId> {
        let mut v: Vec<ElementId> = self.label.iter().flatten().copied().collect();
        v.sort();
        v.dedup();
        v
    }
}

fn clip_near(poly: &[Vec3]) -> Vec<Vec3> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (fp, fq) = (p.z - NEAR_PLANE, q.z - NEAR_PLANE);
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            out.push(p + (q - p) * (fp / (fp - fq)));
        }
    }
    out
}

#[inline]
fn edge(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Shared edges are owned by exactly one of the two triangles using them.
#[inline]
fn owns_edge(a: Vec2, b: Vec2) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn fill_triangle(
    img: &mut LabelDepthImage,
    tri: [Vec2; 3],
    plane: (Vec3, f64),
    cam: &CameraFrame,
    id: ElementId,
) {
    let mut t = tri;
    let area = edge(t[0], t[1], t[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        t.swap(1, 2);
    }
    let (w, h) = (img.width as f64, img.height as f64);
    let xmin = t.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).max(0.0);
    let xmax = t
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(w);
    let ymin = t.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).max(0.0);
    let ymax = t
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(h);
    if xmin >= xmax || ymin >= ymax {
        return;
    }
    let c0 = (xmin - 0.5).ceil().max(0.0) as usize;
    let c1 = ((xmax - 0.5).floor() as isize).min(img.width as isize - 1);
    let r0 = (ymin - 0.5).ceil().max(0.0) as usize;
    let r1 = ((ymax - 0.5).floor() as isize).min(img.height as isize - 1);
    if c1 < 0 || r1 < 0 {
        return;
    }
    let edges = [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])];
    let owned = edges.map(|(a, b)| owns_edge(a, b));
    let (n, d) = plane;
    for r in r0..=r1 as usize {
        for c in c0..=c1 as usize {
            let p = Vec2::new(c as f64 + 0.5, r as f64 + 0.5);
            let inside = edges.iter().zip(&owned).all(|((a, b), own)| {
                let e = edge(*a, *b, p);
                e > 0.0 || (e == 0.0 && *own)
            });
            if !inside {
                continue;
            }
            let ray = cam.camera_direction(&p);
            let denom = n.dot(&ray);
            if denom == 0.0 {
                continue;
            }
            let z = -d / denom * ray.z;
            let k = r * img.width + c;
            if z > 0.0 && z < img.depth[k] {
                img.depth[k] = z;
                img.label[k] = Some(id);
            }
        }
    }
}

/// Z-buffered rendering of the mesh at pixel centers. Depth is exact per pixel
/// from each triangle's plane; on equal depth the earlier triangle is kept.
pub fn rasterize(
    mesh: &LayoutMesh,
    camera: &CameraFrame,
    width: usize,
    height: usize,
) -> LabelDepthImage {
    let mut img = LabelDepthImage::new(width, height);
    for k in 0..mesh.triangles.len() {
        let cam_pts = mesh.triangle(k).map(|v| camera.to_camera(&v));
        let normal = (cam_pts[1] - cam_pts[0]).cross(&(cam_pts[2] - cam_pts[0]));
        if normal.norm() == 0.0 {
            continue;
        }
        let plane = (normal, -normal.dot(&cam_pts[0]));
        let clipped = clip_near(&cam_pts);
        if clipped.len() < 3 {
            continue;
        }
        let proj: Vec<Vec2> = clipped
            .iter()
            .map(|p| {
                let h = camera.intrinsics * p;
                Vec2::new(h.x / h.z, h.y / h.z)
            })
            .collect();
        for i in 1..proj.len() - 1 {
            fill_triangle(
                &mut img,
                [proj[0], proj[i], proj[i + 1]],
                plane,
                camera,
                mesh.element_ids[k],
            );
        }
    }
    img
}
