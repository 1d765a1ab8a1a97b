use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::PipelineError;
use crate::annotations::{load_annotations, FrameAnnotation};
use crate::evaluation::{read_depth, DepthFormat, DepthMap};
use crate::extent::{PlanarPolygonSet, PlaneBasis};
use crate::geometry::{load_cameras, CameraFrame, Plane, Vec3};
use crate::region::{self, Ring};
use crate::synthetic::{GroundTruth, OracleTrackSource};
use crate::tracking::{load_tracks, FileTrackSource, PointTrack, TrackSource};
use crate::ElementId;

/// Where a run's point tracks come from.
#[derive(Clone)]
pub enum TrackInput {
    /// Precomputed tracks; samples snap to the nearest one.
    File(Arc<Vec<PointTrack>>),
    /// Any in-process source, such as the synthetic oracle.
    Source(Arc<dyn TrackSource + Send + Sync>),
}

impl std::fmt::Debug for TrackInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrackInput::File(t) => write!(f, "File({} tracks)", t.len()),
            TrackInput::Source(_) => write!(f, "Source"),
        }
    }
}

/// Which tracks [`SceneBundle::load_with`] uses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum TrackChoice {
    /// `tracks.json` when present, otherwise the ground-truth oracle.
    #[default]
    Auto,
    File(PathBuf),
    /// Oracle tracks from `ground_truth.json`, ignoring any track file.
    Oracle,
    /// No tracks, for evaluating an existing mesh.
    Ignore,
}

/// Everything a reconstruction consumes.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub id: String,
    pub cameras: BTreeMap<usize, CameraFrame>,
    pub frames: Vec<FrameAnnotation>,
    pub tracks: TrackInput,
    pub depth: BTreeMap<usize, DepthMap>,
    pub warnings: Vec<String>,
}

const SCHEMA_HINT: &str = "see schema/ for the expected file layout";

fn validation(file: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(format!("{}: {e} ({SCHEMA_HINT})", file.display()))
}

impl SceneBundle {
    pub fn new(
        id: impl Into<String>,
        cameras: Vec<CameraFrame>,
        frames: Vec<FrameAnnotation>,
        tracks: TrackInput,
    ) -> Result<Self, PipelineError> {
        let bundle = Self {
            id: id.into(),
            cameras: cameras.into_iter().map(|c| (c.frame_index, c)).collect(),
            frames,
            tracks,
            depth: BTreeMap::new(),
            warnings: Vec::new(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Annotated frames must have cameras and share one image size.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.frames.is_empty() {
            return Err(PipelineError::Validation(
                "scene has no annotated frames".into(),
            ));
        }
        for fa in &self.frames {
            if !self.cameras.contains_key(&fa.frame_index) {
                return Err(PipelineError::Validation(format!(
                    "annotated frame {} has no camera",
                    fa.frame_index
                )));
            }
        }
        let size = (self.frames[0].width, self.frames[0].height);
        if let Some(fa) = self.frames.iter().find(|f| (f.width, f.height) != size) {
            return Err(PipelineError::Validation(format!(
                "frame {} is {}x{} but frame {} is {}x{}",
                fa.frame_index, fa.width, fa.height, self.frames[0].frame_index, size.0, size.1
            )));
        }
        for (f, d) in &self.depth {
            if (d.width, d.height) != (size.0 as usize, size.1 as usize) {
                return Err(PipelineError::Validation(format!(
                    "depth map for frame {f} does not match the image size"
                )));
            }
        }
        Ok(())
    }

    pub fn image_size(&self) -> (u32, u32) {
        (self.frames[0].width, self.frames[0].height)
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        self.cameras.keys().copied().collect()
    }

    pub fn source(&self, radius: f64) -> Arc<dyn TrackSource + Send + Sync> {
        match &self.tracks {
            TrackInput::File(t) => {
                Arc::new(FileTrackSource::new(t.as_ref().clone()).with_radius(radius))
            }
            TrackInput::Source(s) => s.clone(),
        }
    }

    /// Loads `cameras.json`, `annotations.json`, and `tracks.json` from a
    /// scene directory, with depth maps from `depth/`. Without a track file,
    /// a `ground_truth.json` provides oracle tracks.
    pub fn load(dir: &Path, depth_format: Option<DepthFormat>) -> Result<Self, PipelineError> {
        Self::load_with(dir, depth_format, &TrackChoice::Auto)
    }

    pub fn load_with(
        dir: &Path,
        depth_format: Option<DepthFormat>,
        tracks: &TrackChoice,
    ) -> Result<Self, PipelineError> {
        let cam_path = dir.join("cameras.json");
        let ann_path = dir.join("annotations.json");
        let cameras = load_cameras(&cam_path).map_err(|e| validation(&cam_path, e))?;
        let loaded = load_annotations(&ann_path).map_err(|e| validation(&ann_path, e))?;
        let track_path = match tracks {
            TrackChoice::File(p) => p.clone(),
            _ => dir.join("tracks.json"),
        };
        let gt_path = dir.join("ground_truth.json");
        let use_file = match tracks {
            TrackChoice::Auto => track_path.exists(),
            TrackChoice::File(_) => true,
            TrackChoice::Oracle | TrackChoice::Ignore => false,
        };
        let tracks = if *tracks == TrackChoice::Ignore {
            TrackInput::File(Arc::new(Vec::new()))
        } else if use_file {
            TrackInput::File(Arc::new(
                load_tracks(&track_path).map_err(|e| validation(&track_path, e))?,
            ))
        } else if gt_path.exists() || *tracks == TrackChoice::Oracle {
            let gt = load_ground_truth(&gt_path)?;
            let size = loaded
                .frames
                .first()
                .map_or((0, 0), |f| (f.width, f.height));
            let cams = cameras.iter().map(|c| (c.frame_index, c.clone())).collect();
            TrackInput::Source(Arc::new(OracleTrackSource::new(
                ground_truth_sets(&gt),
                cams,
                size,
                gt.config.noise.track_px,
                gt.config.seed,
            )))
        } else {
            return Err(PipelineError::Validation(format!(
                "{}: no tracks.json and no ground_truth.json to track with ({SCHEMA_HINT})",
                dir.display()
            )));
        };
        let id = dir.file_name().map_or_else(
            || dir.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        let mut bundle = Self::new(id, cameras, loaded.frames, tracks)?;
        bundle.warnings = loaded.warnings;
        let ddir = dir.join("depth");
        if ddir.is_dir() {
            bundle.depth = load_depth_dir(&ddir, &bundle, depth_format)?;
            bundle.validate()?;
        }
        Ok(bundle)
    }
}

fn load_depth_dir(
    dir: &Path,
    bundle: &SceneBundle,
    format: Option<DepthFormat>,
) -> Result<BTreeMap<usize, DepthMap>, PipelineError> {
    let (w, h) = bundle.image_size();
    let mut out = BTreeMap::new();
    for fa in &bundle.frames {
        let candidates: Vec<(PathBuf, DepthFormat)> = [DepthFormat::PngMm, DepthFormat::F32]
            .into_iter()
            .filter(|f| format.is_none_or(|want| want == *f))
            .map(|f| {
                (
                    dir.join(format!("{:06}.{}", fa.frame_index, f.extension())),
                    f,
                )
            })
            .filter(|(p, _)| p.exists())
            .collect();
        if let Some((path, fmt)) = candidates.into_iter().next() {
            let map =
                read_depth(&path, fmt, w as usize, h as usize).map_err(|e| validation(&path, e))?;
            out.insert(fa.frame_index, map);
        }
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| validation(path, e))?;
    serde_json::from_str(&text).map_err(|e| validation(path, e))
}

/// Ground-truth extents as planar polygon sets.
pub fn ground_truth_sets(gt: &GroundTruth) -> Vec<PlanarPolygonSet> {
    gt.elements
        .iter()
        .filter_map(|e| {
            let plane = Plane::new(Vec3::from(e.normal), e.offset, e.id)?;
            let basis = PlaneBasis::for_plane(&plane);
            let rings: Vec<Ring> = e
                .rings
                .iter()
                .map(|r| r.iter().map(|p| basis.to_2d(&Vec3::from(*p))).collect())
                .collect();
            Some(PlanarPolygonSet {
                element_id: e.id,
                class: e.class,
                plane,
                basis,
                region: region::from_rings(&rings),
            })
        })
        .collect()
}

/// Per-frame map from local annotation id to element id, as stored on disk.
pub fn element_map_from_records(
    records: &[crate::synthetic::GtFrameRecord],
) -> BTreeMap<(usize, u32), ElementId> {
    records
        .iter()
        .flat_map(|r| {
            r.elements
                .iter()
                .map(move |(l, g)| ((r.frame_index, *l), *g))
        })
        .collect()
}

impl SceneBundle {
    /// In-memory bundle for a generated scene, tracked by its oracle.
    pub fn from_synthetic(scene: &crate::synthetic::SyntheticScene) -> Self {
        let mut bundle = Self::new(
            format!("{:?}-{}", scene.config.preset, scene.config.seed).to_lowercase(),
            scene.cameras.clone(),
            scene.annotations.clone(),
            TrackInput::Source(Arc::new(scene.oracle())),
        )
        .expect("generated scenes are consistent");
        bundle.depth = scene.depth_maps();
        bundle
    }
}
