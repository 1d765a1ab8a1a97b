use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::extent::PlanarPolygonSet;
use crate::geometry::{intersect, pixel_ray, project, CameraFrame, Vec2, Vec3};
use crate::region;
use crate::tracking::{Sample, TrackSource, TrackingError};
use crate::ElementId;

/// Tracks that follow the exact surface point under each sample.
///
/// A point is lost in frames where it is behind the camera, outside the
/// image or hidden by a nearer ground-truth surface. Noise is drawn
/// independently per sample and frame.
pub struct OracleTrackSource {
    elements: Vec<PlanarPolygonSet>,
    cameras: BTreeMap<usize, CameraFrame>,
    size: (u32, u32),
    sigma: f64,
    seed: u64,
}

impl OracleTrackSource {
    pub fn new(
        elements: Vec<PlanarPolygonSet>,
        cameras: BTreeMap<usize, CameraFrame>,
        size: (u32, u32),
        sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            elements,
            cameras,
            size,
            sigma,
            seed,
        }
    }

    /// Nearest ground-truth surface point along the pixel's ray and its element.
    pub fn cast(&self, cam: &CameraFrame, pixel: &Vec2) -> Option<(Vec3, ElementId)> {
        let ray = pixel_ray(cam, pixel);
        let mut best: Option<(f64, ElementId)> = None;
        for el in &self.elements {
            let Ok(s) = intersect(&ray, &el.plane) else {
                continue;
            };
            if best.is_some_and(|(b, _)| b <= s) {
                continue;
            }
            let p = el.basis.to_2d(&ray.at(s));
            if region::contains(&el.region, &Vec2::new(p[0], p[1])) {
                best = Some((s, el.element_id));
            }
        }
        best.map(|(s, id)| (ray.at(s), id))
    }

    /// Exact projection of `x` in the camera when nothing hides it.
    pub fn visible_projection(&self, cam: &CameraFrame, x: &Vec3) -> Option<Vec2> {
        let p = project(cam, x).ok()?;
        let (w, h) = (self.size.0 as f64, self.size.1 as f64);
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < w && p.y < h) {
            return None;
        }
        let dist = (x - cam.center()).norm();
        match self.cast(cam, &p) {
            Some((hit, _)) if (hit - cam.center()).norm() < dist - 1e-6 * dist.max(1.0) => None,
            _ => Some(p),
        }
    }

    fn noise(&self, sample_index: usize, frame: usize) -> Vec2 {
        if self.sigma <= 0.0 {
            return Vec2::zeros();
        }
        let key = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ ((sample_index as u64) << 24)
            ^ frame as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let n = Normal::new(0.0, self.sigma).expect("positive sigma");
        Vec2::new(n.sample(&mut rng), n.sample(&mut rng))
    }
}

impl TrackSource for OracleTrackSource {
    fn advance(
        &self,
        sample: &Sample,
        sample_index: usize,
        _from: usize,
        _at: &Vec2,
        to: usize,
    ) -> Result<Option<Vec2>, TrackingError> {
        let (Some(src), Some(dst)) = (self.cameras.get(&sample.frame_index), self.cameras.get(&to))
        else {
            return Ok(None);
        };
        let Some((x, _)) = self.cast(src, &sample.pixel) else {
            return Ok(None);
        };
        Ok(self
            .visible_projection(dst, &x)
            .map(|p| p + self.noise(sample_index, to)))
    }
}
