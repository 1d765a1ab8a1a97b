//! Rendering of layout meshes and the reprojection IoU, depth error and
//! best-run selection built on it.

mod depth;
mod raster;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::FrameAnnotation;
use crate::extent::LayoutMesh;
use crate::geometry::CameraFrame;
use crate::region;
use crate::tracking::ElementRegistry;
use crate::ElementId;

pub use depth::{read_depth, write_depth, DepthFormat, DepthMap};
pub use raster::{rasterize, LabelDepthImage, NEAR_PLANE};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no pixel has both a valid ground-truth depth and a rendered surface inside the visible masks")]
    NoValidPixels,
    #[error("depth map: {0}")]
    Io(#[from] std::io::Error),
    #[error("depth map: {0}")]
    Depth(String),
    #[error("frame {0} has no camera")]
    MissingCamera(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QCConfig {
    pub runs: usize,
    pub iou_threshold: f64,
}

impl Default for QCConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            iou_threshold: 0.8,
        }
    }
}

impl QCConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.runs == 0 {
            return Err("runs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err("iou_threshold must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouEntry {
    pub frame: usize,
    pub element: ElementId,
    /// Local id in the frame's annotation, absent when only rendered.
    pub local_id: Option<u32>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// Flat mean over (element, frame) pairs.
    pub mean: f64,
    /// Mean over frames of each frame's mean.
    pub frame_weighted_mean: f64,
    pub entries: Vec<IouEntry>,
}

fn frame_entries(
    mesh: &LayoutMesh,
    fa: &FrameAnnotation,
    registry: &ElementRegistry,
    cam: &CameraFrame,
    size: Option<(usize, usize)>,
) -> Vec<IouEntry> {
    let (w, h) = size.unwrap_or((fa.width as usize, fa.height as usize));
    let img = rasterize(mesh, cam, w, h);
    let mut annotated: BTreeMap<ElementId, (u32, region::Mask)> = BTreeMap::new();
    for el in &fa.elements {
        if let Some(g) = registry.global(fa.frame_index, el.local_id) {
            let sx = w as f64 / fa.width as f64;
            let sy = h as f64 / fa.height as f64;
            let r = if (sx, sy) == (1.0, 1.0) {
                el.amodal.clone()
            } else {
                scale_region(&el.amodal, sx, sy)
            };
            annotated.insert(g, (el.local_id, region::rasterize(&r, w, h)));
        }
    }
    let mut ids: Vec<ElementId> = annotated.keys().copied().chain(img.labels()).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter()
        .filter_map(|id| {
            let rendered = img.mask(id);
            let (local_id, iou) = match annotated.get(&id) {
                Some((l, m)) => (Some(*l), rendered.iou(m)?),
                None => (None, 0.0),
            };
            Some(IouEntry {
                frame: fa.frame_index,
                element: id,
                local_id,
                iou,
            })
        })
        .collect()
}

fn scale_region(r: &region::Region, sx: f64, sy: f64) -> region::Region {
    let rings: Vec<region::Ring> = region::to_rings(r)
        .into_iter()
        .map(|ring| ring.into_iter().map(|p| [p[0] * sx, p[1] * sy]).collect())
        .collect();
    region::from_rings(&rings)
}

/// Renders the mesh into every annotated frame and compares each element's
/// rendered mask with its rasterized amodal annotation. Pairs empty in both
/// are skipped. `size` overrides the rendering resolution.
pub fn reprojection_iou(
    mesh: &LayoutMesh,
    frames: &[FrameAnnotation],
    registry: &ElementRegistry,
    cameras: &BTreeMap<usize, CameraFrame>,
    size: Option<(usize, usize)>,
) -> Result<IouReport, EvaluationError> {
    let per_frame: Vec<Vec<IouEntry>> = frames
        .par_iter()
        .map(|fa| {
            let cam = cameras
                .get(&fa.frame_index)
                .ok_or(EvaluationError::MissingCamera(fa.frame_index))?;
            Ok(frame_entries(mesh, fa, registry, cam, size))
        })
        .collect::<Result<_, EvaluationError>>()?;
    let mean_of = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let frame_means: Vec<f64> = per_frame
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| mean_of(&f.iter().map(|e| e.iou).collect::<Vec<_>>()))
        .collect();
    let entries: Vec<IouEntry> = per_frame.into_iter().flatten().collect();
    let flat: Vec<f64> = entries.iter().map(|e| e.iou).collect();
    Ok(IouReport {
        mean: mean_of(&flat),
        frame_weighted_mean: mean_of(&frame_means),
        entries,
    })
}

/// Mean absolute difference between rendered and ground-truth depth over the
/// visible parts of all annotated elements.
pub fn depth_error(
    mesh: &LayoutMesh,
    frames: &[FrameAnnotation],
    cameras: &BTreeMap<usize, CameraFrame>,
    depth: &BTreeMap<usize, DepthMap>,
) -> Result<f64, EvaluationError> {
    let sums: Vec<(f64, usize)> = frames
        .par_iter()
        .filter_map(|fa| Some((fa, depth.get(&fa.frame_index)?)))
        .map(|(fa, gt)| {
            let cam = cameras
                .get(&fa.frame_index)
                .ok_or(EvaluationError::MissingCamera(fa.frame_index))?;
            let img = rasterize(mesh, cam, gt.width, gt.height);
            let visible = region::union_all(fa.elements.iter().map(|e| &e.visible));
            let mask = region::rasterize(&visible, gt.width, gt.height);
            let (mut sum, mut n) = (0.0, 0usize);
            for y in 0..gt.height {
                for x in 0..gt.width {
                    if !mask.get(x, y) {
                        continue;
                    }
                    let (Some(g), r) = (gt.get(x, y), img.depth_at(x, y)) else {
                        continue;
                    };
                    if r.is_finite() {
                        sum += (r - g).abs();
                        n += 1;
                    }
                }
            }
            Ok((sum, n))
        })
        .collect::<Result<_, EvaluationError>>()?;
    let (sum, n) = sums.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if n == 0 {
        return Err(EvaluationError::NoValidPixels);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcDecision {
    pub best_index: usize,
    pub best_iou: f64,
    pub accepted: bool,
}

/// Picks the run with the highest IoU (lowest index on ties) and accepts it
/// when it reaches the threshold. Failed runs should be passed as 0.
pub fn select_best_run(ious: &[f64], cfg: &QCConfig) -> Option<QcDecision> {
    let (best_index, best_iou) = ious.iter().copied().enumerate().fold(
        None,
        |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((i, v)),
        },
    )?;
    Some(QcDecision {
        best_index,
        best_iou,
        accepted: best_iou >= cfg.iou_threshold,
    })
}
