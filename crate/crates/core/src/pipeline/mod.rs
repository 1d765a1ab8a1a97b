//! End-to-end reconstruction with repeated seeded runs and quality control.

mod scene;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{extract_edge_points, StructuralClass};
use crate::evaluation::{
    depth_error, reprojection_iou, select_best_run, IouReport, QCConfig, QcDecision,
};
use crate::extent::{
    assemble_mesh, attach_doors_windows, build_extents, find_hosts, neighbor_pairs, refine,
    write_obj, write_ply, ExtentError, LayoutMesh, RefineOp,
};
use crate::solver::{
    optimize, LossInputs, PerpendicularPairs, PlaneSet, SolverConfig, SolverError,
};
use crate::synthetic::GtFrameRecord;
use crate::tracking::{
    assign_tracks, build_tracks, match_elements, sample_points, ElementRegistry, SamplerConfig,
    TrackingError,
};
use crate::ElementId;

pub use scene::{
    element_map_from_records, ground_truth_sets, load_ground_truth, SceneBundle, TrackChoice,
    TrackInput,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid scene: {0}")]
    Validation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Extent(#[from] ExtentError),
    #[error(transparent)]
    Evaluation(#[from] crate::evaluation::EvaluationError),
    #[error("all {runs} runs failed; first error: {first}")]
    AllRunsFailed { runs: usize, first: String },
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// True for problems with the inputs rather than with the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Validation(_) | PipelineError::Config(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub solver: SolverConfig,
    pub qc: QCConfig,
    /// Mean spacing of sampled points, pixels.
    pub sample_spacing: f64,
    /// How far a sample may snap to a precomputed track, pixels.
    pub track_radius: f64,
    /// Run `i` uses seed `base_seed + i` for sampling and the solver.
    pub base_seed: u64,
    /// Concurrent runs; 0 uses every core.
    pub jobs: usize,
    /// Rendering resolution for the IoU; `None` uses the annotation size.
    pub render_size: Option<(usize, usize)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            qc: QCConfig::default(),
            sample_spacing: SamplerConfig::default().target_spacing,
            track_radius: 5.0,
            base_seed: 0,
            jobs: 0,
            render_size: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.solver
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.qc.validate().map_err(PipelineError::Config)?;
        if !(self.sample_spacing > 0.0 && self.sample_spacing.is_finite()) {
            return Err(PipelineError::Config(
                "sample_spacing must be positive".into(),
            ));
        }
        if !(self.track_radius >= 0.0 && self.track_radius.is_finite()) {
            return Err(PipelineError::Config(
                "track_radius must be non-negative".into(),
            ));
        }
        if self.render_size.is_some_and(|(w, h)| w == 0 || h == 0) {
            return Err(PipelineError::Config("render_size must be positive".into()));
        }
        Ok(())
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// What one run produced, as written to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    /// `None` on success.
    pub error: Option<String>,
    /// Mean reprojection IoU; 0 for a failed run.
    pub iou: f64,
    pub frame_weighted_iou: f64,
    pub depth_error: Option<f64>,
    pub samples: usize,
    pub tracks: usize,
    pub assigned_tracks: usize,
    pub edge_points: usize,
    pub elements: usize,
    pub iterations: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    /// Best loss after each tenth of the iterations.
    pub loss_curve: Vec<f64>,
    pub reinitializations: usize,
    pub unconstrained: Vec<ElementId>,
    pub refine: Vec<RefineOp>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    fn new(index: usize, seed: u64) -> Self {
        Self {
            index,
            seed,
            error: None,
            iou: 0.0,
            frame_weighted_iou: 0.0,
            depth_error: None,
            samples: 0,
            tracks: 0,
            assigned_tracks: 0,
            edge_points: 0,
            elements: 0,
            iterations: 0,
            initial_loss: None,
            final_loss: None,
            loss_curve: Vec::new(),
            reinitializations: 0,
            unconstrained: Vec::new(),
            refine: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// Artifacts of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub planes: PlaneSet,
    pub mesh: LayoutMesh,
    pub registry: ElementRegistry,
    pub iou: IouReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scene: String,
    pub config: PipelineConfig,
    pub runs: Vec<RunRecord>,
    pub decision: QcDecision,
    pub accepted: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub best: RunOutput,
    pub report: Report,
}

impl ReconstructionResult {
    pub fn accepted(&self) -> bool {
        self.report.accepted
    }

    pub fn best_record(&self) -> &RunRecord {
        &self.report.runs[self.report.decision.best_index]
    }
}

fn loss_curve(history: &[f64]) -> Vec<f64> {
    if history.is_empty() {
        return Vec::new();
    }
    (1..=10)
        .map(|k| history[(history.len() * k).div_ceil(10) - 1])
        .collect()
}

/// One independent reconstruction with the given seed.
pub fn run_once(
    scene: &SceneBundle,
    cfg: &PipelineConfig,
    index: usize,
) -> (RunRecord, Result<RunOutput, PipelineError>) {
    let seed = cfg.seed(index);
    let mut rec = RunRecord::new(index, seed);
    let out = run_inner(scene, cfg, seed, &mut rec);
    if let Err(e) = &out {
        rec.error = Some(e.to_string());
        rec.iou = 0.0;
        rec.frame_weighted_iou = 0.0;
    }
    (rec, out)
}

fn run_inner(
    scene: &SceneBundle,
    cfg: &PipelineConfig,
    seed: u64,
    rec: &mut RunRecord,
) -> Result<RunOutput, PipelineError> {
    let sampler = SamplerConfig {
        target_spacing: cfg.sample_spacing,
        seed,
    };
    let mut samples = Vec::new();
    for fa in &scene.frames {
        match sample_points(fa, &sampler) {
            Ok(s) => samples.extend(s),
            Err(TrackingError::EmptyVisible { frame }) => rec
                .warnings
                .push(format!("frame {frame}: nothing visible to sample")),
            Err(e) => return Err(e.into()),
        }
    }
    rec.samples = samples.len();
    let source = scene.source(cfg.track_radius);
    let tracks = build_tracks(
        &samples,
        source.as_ref(),
        &scene.frame_indices(),
        scene.image_size(),
    )?;
    rec.tracks = tracks.len();

    let registry = match_elements(&scene.frames, &tracks);
    let assignment = assign_tracks(&tracks, &registry, &scene.frames);
    rec.assigned_tracks = assignment.len();
    rec.elements = registry.len();

    let hosts: BTreeMap<ElementId, ElementId> = find_hosts(&scene.frames, &registry)
        .into_iter()
        .filter_map(|(o, h)| h.map(|h| (o, h)))
        .collect();
    let init = PlaneSet::initial(registry.classes(), &hosts);
    let edge_points: Vec<_> = scene
        .frames
        .iter()
        .flat_map(|fa| extract_edge_points(fa, &registry.local_map(fa.frame_index)))
        .collect();
    rec.edge_points = edge_points.len();
    let pairs = PerpendicularPairs::from_planes(&init);
    let inputs = LossInputs {
        tracks: &tracks,
        assignment: &assignment,
        edge_points: &edge_points,
        pairs: &pairs,
        cameras: &scene.cameras,
    };
    let solver_cfg = SolverConfig { seed, ..cfg.solver };
    let solution = optimize(&init, &inputs, &solver_cfg)?;
    rec.iterations = solution.iterations;
    rec.initial_loss = solution.history.first().copied();
    rec.final_loss = Some(solution.final_loss);
    rec.loss_curve = loss_curve(&solution.history);
    rec.reinitializations = solution.reinitializations;
    rec.unconstrained = solution.unconstrained.clone();
    let planes = solution.planes;

    let (mut extents, skipped) = build_extents(
        &scene.frames,
        &registry,
        &planes,
        &scene.cameras,
        &solution.unconstrained,
    );
    rec.warnings.extend(skipped.iter().map(|(e, f)| {
        format!(
            "element {}: polygon in frame {f} lies beyond the horizon",
            e.0
        )
    }));
    rec.refine = refine(&mut extents, &neighbor_pairs(&edge_points, &planes));
    let (openings, errs) = attach_doors_windows(
        &mut extents,
        &scene.frames,
        &registry,
        &planes,
        &scene.cameras,
    );
    rec.warnings.extend(errs.iter().map(|e| e.to_string()));
    let (mesh, errs) = assemble_mesh(&extents, &openings, &planes.hosts);
    rec.warnings.extend(errs.iter().map(|e| e.to_string()));

    let iou = reprojection_iou(
        &mesh,
        &scene.frames,
        &registry,
        &scene.cameras,
        cfg.render_size,
    )?;
    rec.iou = iou.mean;
    rec.frame_weighted_iou = iou.frame_weighted_mean;
    if !scene.depth.is_empty() {
        match depth_error(&mesh, &scene.frames, &scene.cameras, &scene.depth) {
            Ok(e) => rec.depth_error = Some(e),
            Err(e) => rec.warnings.push(format!("depth error: {e}")),
        }
    }
    Ok(RunOutput {
        planes,
        mesh,
        registry,
        iou,
    })
}

/// Runs `cfg.qc.runs` seeded reconstructions, at most `cfg.jobs` at a time,
/// and keeps the one with the best reprojection IoU.
pub fn reconstruct(
    scene: &SceneBundle,
    cfg: &PipelineConfig,
) -> Result<ReconstructionResult, PipelineError> {
    cfg.validate()?;
    scene.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(RunRecord, Result<RunOutput, PipelineError>)> = pool.install(|| {
        (0..cfg.qc.runs)
            .into_par_iter()
            .map(|i| run_once(scene, cfg, i))
            .collect()
    });
    let ious: Vec<f64> = results.iter().map(|(r, _)| r.iou).collect();
    let (records, outputs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let ok: Vec<Option<RunOutput>> = outputs.into_iter().map(Result::ok).collect();
    if ok.iter().all(Option::is_none) {
        let first = records
            .first()
            .and_then(|r| r.error.clone())
            .unwrap_or_default();
        return Err(PipelineError::AllRunsFailed {
            runs: records.len(),
            first,
        });
    }
    // failed runs score 0, so a successful run always exists at the argmax unless every IoU is 0
    let mut decision = select_best_run(&ious, &cfg.qc).expect("at least one run");
    if ok[decision.best_index].is_none() {
        let i = ok
            .iter()
            .position(Option::is_some)
            .expect("a successful run");
        decision = QcDecision {
            best_index: i,
            best_iou: ious[i],
            accepted: ious[i] >= cfg.qc.iou_threshold,
        };
    }
    let best = ok
        .into_iter()
        .nth(decision.best_index)
        .flatten()
        .expect("selected run succeeded");
    let report = Report {
        scene: scene.id.clone(),
        config: cfg.clone(),
        runs: records,
        accepted: decision.accepted,
        decision,
        warnings: scene.warnings.clone(),
    };
    Ok(ReconstructionResult { best, report })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaneRecord {
    pub element: ElementId,
    pub class: StructuralClass,
    pub normal: [f64; 3],
    pub offset: f64,
    /// Host element for doors and windows.
    pub host: Option<ElementId>,
}

pub fn plane_records(planes: &PlaneSet) -> Vec<PlaneRecord> {
    planes
        .classes
        .iter()
        .filter_map(|(id, class)| {
            let p = planes.plane(*id)?;
            Some(PlaneRecord {
                element: *id,
                class: *class,
                normal: [p.normal.x, p.normal.y, p.normal.z],
                offset: p.offset,
                host: planes.hosts.get(id).copied(),
            })
        })
        .collect()
}

/// Local-to-global element ids per annotated frame.
pub fn element_records(scene: &SceneBundle, registry: &ElementRegistry) -> Vec<GtFrameRecord> {
    scene
        .frames
        .iter()
        .map(|fa| GtFrameRecord {
            frame_index: fa.frame_index,
            elements: registry.local_map(fa.frame_index),
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Writes `report.json`, `planes.json`, `elements.json`, `mesh.ply` and
/// `mesh.obj` into `dir`.
pub fn write_result(
    dir: &Path,
    scene: &SceneBundle,
    result: &ReconstructionResult,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), &result.report)?;
    write_json(
        &dir.join("planes.json"),
        &plane_records(&result.best.planes),
    )?;
    write_json(
        &dir.join("elements.json"),
        &element_records(scene, &result.best.registry),
    )?;
    let mut ply = std::io::BufWriter::new(std::fs::File::create(dir.join("mesh.ply"))?);
    write_ply(&result.best.mesh, &mut ply)?;
    ply.flush()?;
    let mut obj = std::io::BufWriter::new(std::fs::File::create(dir.join("mesh.obj"))?);
    write_obj(&result.best.mesh, &mut obj)?;
    obj.flush()?;
    Ok(())
}

/// Registry rebuilt from an `elements.json` listing and the scene's classes.
pub fn registry_from_records(
    scene: &SceneBundle,
    records: &[GtFrameRecord],
) -> Result<ElementRegistry, PipelineError> {
    let mut reg = ElementRegistry::default();
    for r in records {
        let Some(fa) = scene.frames.iter().find(|f| f.frame_index == r.frame_index) else {
            return Err(PipelineError::Validation(format!(
                "element map names frame {} which is not annotated",
                r.frame_index
            )));
        };
        for (local, id) in &r.elements {
            let el = fa.element(*local).ok_or_else(|| {
                PipelineError::Validation(format!(
                    "element map names element {local} missing from frame {}",
                    r.frame_index
                ))
            })?;
            reg.insert(r.frame_index, *local, *id, el.class);
        }
    }
    Ok(reg)
}
