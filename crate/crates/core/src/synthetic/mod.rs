//! Synthetic rooms with exact ground truth: planes, extents, cameras,
//! annotations, oracle point tracks and depth maps.

mod oracle;
mod presets;
mod render;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{
    annotations_to_json, without_degenerate_rings, ElementAnnotation, FrameAnnotation,
    StructuralClass,
};
use crate::evaluation::{rasterize, write_depth, DepthFormat, DepthMap, EvaluationError};
use crate::extent::{triangulate, LayoutMesh, PlanarPolygonSet};
use crate::geometry::{cameras_to_json, look_rotation, CameraFrame, Vec2, Vec3};
use crate::region::{self, Region, Ring};
use crate::tracking::{
    build_tracks, sample_points, tracks_to_json, PointTrack, SamplerConfig, TrackingError,
};
use crate::ElementId;

pub use oracle::OracleTrackSource;
pub use presets::WALL_HEIGHT;
pub use render::{footprint, render_frame};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("preset {preset:?} cannot satisfy its constraints: {reason}")]
    InfeasiblePreset { preset: Preset, reason: String },
    #[error("writing scene: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Depth(#[from] EvaluationError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
}

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Cuboid,
    Manhattan,
    Generic,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of i.i.d. track noise, pixels.
    pub track_px: f64,
    /// Standard deviation of annotation vertex jitter, pixels.
    pub jitter_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub preset: Preset,
    pub noise: NoiseModel,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub annotate_every: usize,
    /// Simulated furniture rectangles removed from visible parts, per frame at most.
    pub furniture: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Cuboid,
            noise: NoiseModel::default(),
            seed: 0,
            width: 480,
            height: 360,
            frames: 41,
            annotate_every: 5,
            furniture: 2,
        }
    }
}

/// A ground-truth element. Optional elements may be left unannotated when the
/// trajectory barely sees them.
#[derive(Debug, Clone, PartialEq)]
pub struct GtElement {
    pub set: PlanarPolygonSet,
    pub required: bool,
}

/// Smallest amodal area, in pixels, for an element to count as seen in a frame.
/// A camera path that shows a required element as a smaller sliver is
/// rejected; optional elements with slivers are left out of the scene.
pub const MIN_SEEN_AREA: f64 = 900.0;
/// In-image area below which an element covers no pixel worth scoring.
const SLIVER_FLOOR: f64 = 0.5;
const ATTEMPTS: u64 = 64;
const ORBIT_RADIUS: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SynthConfig,
    pub elements: Vec<GtElement>,
    pub cameras: Vec<CameraFrame>,
    pub annotations: Vec<FrameAnnotation>,
    /// Ground-truth element of each `(frame, local_id)` annotation.
    pub local_to_gt: BTreeMap<(usize, u32), ElementId>,
}

fn trajectory(cfg: &SynthConfig, center: Vec3, start_yaw: f64, attempt: u64) -> Vec<CameraFrame> {
    let n = cfg.frames.max(2);
    let focal = 0.4 * cfg.width as f64;
    let principal = Vec2::new(cfg.width as f64 / 2.0, cfg.height as f64 / 2.0);
    let yaw0 = start_yaw + attempt as f64 * 0.7;
    let sweep = [1.25, 1.1, 1.4][(attempt / 10 % 3) as usize] * std::f64::consts::PI;
    (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            let yaw = yaw0 + s * sweep;
            let pitch = 0.05 * (std::f64::consts::TAU * s).sin();
            // walk a circle behind the viewing direction so the camera looks across the room
            let radius = ORBIT_RADIUS * (1.0 - 0.04 * (attempt % 10) as f64);
            let c = center
                - Vec3::new(
                    radius * yaw.cos(),
                    radius * yaw.sin(),
                    -0.1 * (5.0 * s).sin(),
                );
            let fwd = Vec3::new(
                yaw.cos() * pitch.cos(),
                yaw.sin() * pitch.cos(),
                pitch.sin(),
            );
            let r = look_rotation(&fwd, &Vec3::z());
            CameraFrame::pinhole(
                k,
                focal,
                principal,
                r,
                -(r * c),
                k % cfg.annotate_every.max(1) == 0,
            )
            .expect("rotation is orthonormal")
        })
        .collect()
}

fn jitter_region(r: &Region, sigma: f64, rng: &mut ChaCha8Rng) -> Region {
    if sigma <= 0.0 {
        return r.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let rings: Vec<Ring> = region::to_rings(r)
        .into_iter()
        .map(|ring| {
            ring.into_iter()
                .map(|p| [p[0] + normal.sample(rng), p[1] + normal.sample(rng)])
                .collect()
        })
        .collect();
    region::from_rings(&rings)
}

fn furniture(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Region {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let count = rng.random_range(0..=cfg.furniture);
    let rects: Vec<Region> = (0..count)
        .map(|_| {
            let (rw, rh) = (
                rng.random_range(0.08..0.22) * w,
                rng.random_range(0.08..0.25) * h,
            );
            let x = rng.random_range(0.0..w - rw);
            let y = rng.random_range(0.4 * h..h - rh);
            region::rect(x, y, x + rw, y + rh)
        })
        .collect();
    region::union_all(&rects)
}

fn layout(preset: Preset, rng: &mut ChaCha8Rng) -> presets::Layout {
    match preset {
        Preset::Cuboid => presets::cuboid(rng),
        Preset::Manhattan => presets::manhattan(rng),
        Preset::Generic => presets::generic(rng),
        Preset::Composite => presets::composite(rng),
    }
}

/// Builds a scene for the preset. The trajectory is re-tried with shifted
/// yaw until every required element is seen in at least two annotated frames.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticScene, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = layout(cfg.preset, &mut rng);
    let origin = -shape.center;
    let shape = presets::translated(shape, origin);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut last_reason = String::new();
    for attempt in 0..ATTEMPTS {
        let cameras = trajectory(cfg, shape.center, shape.start_yaw, attempt);
        let renders: Vec<(usize, render::FrameRender)> = cameras
            .iter()
            .filter(|c| c.annotated)
            .map(|c| (c.frame_index, render_frame(c, &shape.elements, w, h)))
            .collect();
        let image = region::rect(0.0, 0.0, w, h);
        let areas: Vec<Vec<f64>> = renders
            .iter()
            .map(|(_, r)| {
                r.amodal
                    .iter()
                    .map(|a| region::area(&region::intersection(a, &image)))
                    .collect()
            })
            .collect();
        let seen: Vec<usize> = (0..shape.elements.len())
            .map(|i| areas.iter().filter(|a| a[i] >= MIN_SEEN_AREA).count())
            .collect();
        let missing: Vec<usize> = (0..shape.elements.len())
            .filter(|i| shape.elements[*i].required && seen[*i] < 2)
            .collect();
        if !missing.is_empty() {
            last_reason = format!("elements {missing:?} seen in fewer than two annotated frames");
            continue;
        }
        let broken: Vec<usize> = (0..shape.elements.len())
            .filter(|i| !contiguous(&areas, *i))
            .collect();
        if let Some(i) = broken.iter().find(|i| shape.elements[**i].required) {
            last_reason = format!("element {i} leaves the view and comes back");
            continue;
        }
        let slivers: Vec<usize> = (0..shape.elements.len())
            .filter(|i| {
                areas
                    .iter()
                    .any(|a| a[*i] > SLIVER_FLOOR && a[*i] < MIN_SEEN_AREA)
            })
            .collect();
        if let Some(i) = slivers.iter().find(|i| shape.elements[**i].required) {
            last_reason = format!("element {i} is only a sliver in some annotated frame");
            continue;
        }
        let keep: Vec<bool> = (0..shape.elements.len())
            .map(|i| seen[i] >= 2 && !broken.contains(&i) && !slivers.contains(&i))
            .collect();
        let mut frame_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        let mut annotations = Vec::new();
        let mut local_to_gt = BTreeMap::new();
        for ((frame, r), area) in renders.into_iter().zip(&areas) {
            let mut order: Vec<usize> = (0..shape.elements.len())
                .filter(|i| keep[*i] && area[*i] >= MIN_SEEN_AREA)
                .collect();
            order.shuffle(&mut frame_rng);
            let blocked = furniture(cfg, &mut frame_rng);
            let mut elements = Vec::new();
            for (local, i) in order.iter().enumerate() {
                let amodal = region::intersection(
                    &jitter_region(&r.amodal[*i], cfg.noise.jitter_px, &mut frame_rng),
                    &image,
                );
                let amodal = without_degenerate_rings(&amodal);
                if region::is_empty(&amodal) {
                    continue;
                }
                let visible = without_degenerate_rings(&region::difference(&amodal, &blocked));
                let local_id = local as u32;
                local_to_gt.insert((frame, local_id), shape.elements[*i].set.element_id);
                elements.push(ElementAnnotation {
                    local_id,
                    class: shape.elements[*i].set.class,
                    amodal,
                    visible,
                });
            }
            elements.sort_by_key(|e| e.local_id);
            annotations.push(FrameAnnotation {
                frame_index: frame,
                width: cfg.width,
                height: cfg.height,
                elements,
                occlusion_edges: r.occlusion_edges,
            });
        }
        let baseline = cameras
            .iter()
            .map(|c| (c.center() - cameras[0].center()).norm())
            .fold(0.0, f64::max);
        let depth = mean_depth(&cameras, &shape.elements, w, h);
        if baseline < 0.05 * depth {
            last_reason = format!("baseline {baseline:.3} m below 5% of mean depth {depth:.3} m");
            continue;
        }
        return Ok(SyntheticScene {
            config: *cfg,
            elements: shape.elements,
            cameras,
            annotations,
            local_to_gt,
        });
    }
    Err(SynthError::InfeasiblePreset {
        preset: cfg.preset,
        reason: last_reason,
    })
}

/// Whether the annotated frames that see element `i` form one unbroken run.
fn contiguous(areas: &[Vec<f64>], i: usize) -> bool {
    let seen: Vec<usize> = areas
        .iter()
        .enumerate()
        .filter(|(_, a)| a[i] >= MIN_SEEN_AREA)
        .map(|(k, _)| k)
        .collect();
    seen.windows(2).all(|w| w[1] == w[0] + 1)
}

fn mean_depth(cameras: &[CameraFrame], elements: &[GtElement], w: f64, h: f64) -> f64 {
    let (mesh, _) = triangulate(&elements.iter().map(|e| e.set.clone()).collect::<Vec<_>>());
    let mut sum = 0.0;
    let mut n = 0usize;
    for cam in cameras.iter().filter(|c| c.annotated) {
        // a coarse grid is enough for an average
        let coarse = rasterize(
            &mesh,
            &downscaled(cam, 8.0),
            (w / 8.0) as usize,
            (h / 8.0) as usize,
        );
        for d in coarse.depth.iter().filter(|d| d.is_finite()) {
            sum += d;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn downscaled(cam: &CameraFrame, factor: f64) -> CameraFrame {
    let mut k = cam.intrinsics;
    k.row_mut(0).scale_mut(1.0 / factor);
    k.row_mut(1).scale_mut(1.0 / factor);
    CameraFrame::new(
        cam.frame_index,
        k,
        cam.rotation,
        cam.translation,
        cam.annotated,
    )
    .expect("valid camera")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtElementRecord {
    pub id: ElementId,
    pub class: StructuralClass,
    pub normal: [f64; 3],
    pub offset: f64,
    /// World-space rings; outer rings counter-clockwise in the plane basis, holes clockwise.
    pub rings: Vec<Vec<[f64; 3]>>,
    pub annotated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtFrameRecord {
    pub frame_index: usize,
    /// Ground-truth element per local annotation id.
    pub elements: BTreeMap<u32, ElementId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub elements: Vec<GtElementRecord>,
    pub frames: Vec<GtFrameRecord>,
    pub depth_format: Option<DepthFormat>,
}

impl SyntheticScene {
    pub fn frame_indices(&self) -> Vec<usize> {
        self.cameras.iter().map(|c| c.frame_index).collect()
    }

    pub fn camera_map(&self) -> BTreeMap<usize, CameraFrame> {
        self.cameras
            .iter()
            .map(|c| (c.frame_index, c.clone()))
            .collect()
    }

    pub fn oracle(&self) -> OracleTrackSource {
        OracleTrackSource::new(
            self.elements.iter().map(|e| e.set.clone()).collect(),
            self.camera_map(),
            (self.config.width, self.config.height),
            self.config.noise.track_px,
            self.config.seed,
        )
    }

    pub fn element(&self, id: ElementId) -> Option<&GtElement> {
        self.elements.iter().find(|e| e.set.element_id == id)
    }

    /// Ground-truth elements that appear in the annotations.
    pub fn annotated_ids(&self) -> Vec<ElementId> {
        let mut v: Vec<ElementId> = self.local_to_gt.values().copied().collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn mesh(&self) -> LayoutMesh {
        triangulate(
            &self
                .elements
                .iter()
                .map(|e| e.set.clone())
                .collect::<Vec<_>>(),
        )
        .0
    }

    /// Rendered ground-truth camera depth per annotated frame; background is infinite.
    pub fn depth_maps(&self) -> BTreeMap<usize, DepthMap> {
        let mesh = self.mesh();
        let (w, h) = (self.config.width as usize, self.config.height as usize);
        self.cameras
            .iter()
            .filter(|c| c.annotated)
            .map(|c| {
                let img = rasterize(&mesh, c, w, h);
                (
                    c.frame_index,
                    DepthMap {
                        width: w,
                        height: h,
                        data: img.depth.iter().map(|d| *d as f32).collect(),
                    },
                )
            })
            .collect()
    }

    /// Oracle tracks seeded on every annotated frame at the given spacing.
    pub fn tracks(&self, spacing: f64) -> Result<Vec<PointTrack>, TrackingError> {
        let source = self.oracle();
        let mut samples = Vec::new();
        for fa in &self.annotations {
            samples.extend(sample_points(
                fa,
                &SamplerConfig {
                    target_spacing: spacing,
                    seed: self.config.seed,
                },
            )?);
        }
        build_tracks(
            &samples,
            &source,
            &self.frame_indices(),
            (self.config.width, self.config.height),
        )
    }

    pub fn ground_truth(&self, depth_format: Option<DepthFormat>) -> GroundTruth {
        let annotated = self.annotated_ids();
        let elements = self
            .elements
            .iter()
            .map(|e| {
                let p = e.set.plane;
                GtElementRecord {
                    id: e.set.element_id,
                    class: e.set.class,
                    normal: [p.normal.x, p.normal.y, p.normal.z],
                    offset: p.offset,
                    rings: e
                        .set
                        .rings_3d()
                        .iter()
                        .map(|r| r.iter().map(|v| [v.x, v.y, v.z]).collect())
                        .collect(),
                    annotated: annotated.contains(&e.set.element_id),
                }
            })
            .collect();
        let mut frames: BTreeMap<usize, BTreeMap<u32, ElementId>> = BTreeMap::new();
        for ((f, l), g) in &self.local_to_gt {
            frames.entry(*f).or_default().insert(*l, *g);
        }
        GroundTruth {
            config: self.config,
            elements,
            frames: frames
                .into_iter()
                .map(|(frame_index, elements)| GtFrameRecord {
                    frame_index,
                    elements,
                })
                .collect(),
            depth_format,
        }
    }

    /// Writes a scene directory: cameras, annotations, depth maps, ground truth
    /// and, unless `track_spacing` is `None`, a track file.
    pub fn write(
        &self,
        dir: &Path,
        track_spacing: Option<f64>,
        depth_format: Option<DepthFormat>,
    ) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("cameras.json"), cameras_to_json(&self.cameras))?;
        std::fs::write(
            dir.join("annotations.json"),
            annotations_to_json(&self.annotations),
        )?;
        if let Some(spacing) = track_spacing {
            std::fs::write(
                dir.join("tracks.json"),
                tracks_to_json(&self.tracks(spacing)?),
            )?;
        }
        if let Some(fmt) = depth_format {
            let ddir = dir.join("depth");
            std::fs::create_dir_all(&ddir)?;
            for (f, map) in self.depth_maps() {
                write_depth(&ddir.join(format!("{f:06}.{}", fmt.extension())), fmt, &map)?;
            }
        }
        let gt =
            serde_json::to_string_pretty(&self.ground_truth(depth_format)).expect("serializable");
        std::fs::write(dir.join("ground_truth.json"), gt)?;
        Ok(())
    }
}
