//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector4;
use room_layout::annotations::{EdgePoint, StructuralClass};
use room_layout::geometry::{look_rotation, CameraFrame, Plane, Vec2, Vec3};
use room_layout::pipeline::ReconstructionResult;
use room_layout::solver::{LossInputs, PerpendicularPairs, PlaneSet, Problem, Weights};
use room_layout::synthetic::{generate, NoiseModel, Preset, SynthConfig, SyntheticScene};
use room_layout::tracking::{PointTrack, TrackAssignment};
use room_layout::ElementId;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub struct GradientCase {
    pub planes: PlaneSet,
    pub tracks: Vec<PointTrack>,
    pub assignment: TrackAssignment,
    pub edges: Vec<EdgePoint>,
    pub pairs: PerpendicularPairs,
    pub cameras: BTreeMap<usize, CameraFrame>,
}

/// Three planes in front of a short row of cameras, with the given pixels
/// grouped into three-frame tracks. `seed` entries are in [-1, 1].
pub fn gradient_case(seed: [f64; 12], pixels: &[(f64, f64)]) -> GradientCase {
    let cameras: BTreeMap<usize, CameraFrame> = (0..3)
        .map(|i| {
            let fwd = Vec3::new(0.2 * seed[0] + 0.1 * i as f64, 1.0, 0.1 * seed[1]);
            let r = look_rotation(&fwd, &Vec3::z());
            let c = Vec3::new(0.3 * i as f64, 0.1 * seed[2], 1.5);
            (
                i,
                CameraFrame::pinhole(i, 300.0, Vec2::new(160.0, 120.0), r, -(r * c), true).unwrap(),
            )
        })
        .collect();
    let normals = [
        Vec3::new(0.3 * seed[3], -1.0, 0.3 * seed[4]),
        Vec3::new(1.0, -0.5 + 0.2 * seed[5], 0.2 * seed[6]),
        Vec3::new(0.2 * seed[7], 0.2 * seed[8], 1.0),
    ];
    let offsets = [4.0 + seed[9], -2.0 - seed[10], -0.5 * seed[11].abs()];
    let classes = BTreeMap::from([
        (ElementId(0), StructuralClass::Wall),
        (ElementId(1), StructuralClass::Wall),
        (ElementId(2), StructuralClass::Floor),
    ]);
    let mut planes = PlaneSet::initial(&classes, &BTreeMap::new());
    for (k, (n, d)) in normals.iter().zip(offsets).enumerate() {
        planes.planes.insert(
            ElementId(k as u32),
            Plane::new(*n, d, ElementId(k as u32)).unwrap(),
        );
    }
    let mut tracks = Vec::new();
    let mut assignment = TrackAssignment::default();
    let mut edges = Vec::new();
    for (i, chunk) in pixels.chunks(3).enumerate() {
        let id = i as u32;
        let points: BTreeMap<usize, Vec2> = chunk
            .iter()
            .enumerate()
            .map(|(f, p)| (f, Vec2::new(p.0, p.1)))
            .collect();
        tracks.push(PointTrack {
            track_id: id,
            points,
        });
        assignment.map.insert(id, ElementId(id % 3));
        let p = chunk[0];
        edges.push(EdgePoint {
            pixel: Vec2::new(p.0, p.1),
            frame_index: i % 3,
            element_a: ElementId(id % 3),
            element_b: ElementId((id + 1) % 3),
        });
    }
    let pairs = PerpendicularPairs::from_planes(&planes);
    GradientCase {
        planes,
        tracks,
        assignment,
        edges,
        pairs,
        cameras,
    }
}

pub enum FdOutcome {
    /// The weighted term has nothing to average over at this point.
    Skipped,
    /// Number of coordinates compared.
    Checked(usize),
}

/// Compares the analytic gradient with central differences at raw,
/// unnormalized parameters scaled by `1 + |jitter|/2` per plane.
pub fn check_gradient(c: &GradientCase, w: Weights, jitter: &[f64]) -> Result<FdOutcome, String> {
    let inputs = LossInputs {
        tracks: &c.tracks,
        assignment: &c.assignment,
        edge_points: &c.edges,
        pairs: &c.pairs,
        cameras: &c.cameras,
    };
    let problem = Problem::new(&c.planes, &inputs);
    let params: Vec<Vector4<f64>> = problem
        .params_of(&c.planes)
        .iter()
        .enumerate()
        .map(|(k, q)| q * (1.0 + 0.5 * jitter[k].abs()))
        .collect();
    let ev = problem.evaluate(&params, w);
    if (w.tracks > 0.0 && ev.valid_tracks == 0) || (w.edges > 0.0 && ev.valid_edges == 0) {
        return Ok(FdOutcome::Skipped);
    }
    let mut compared = 0;
    for s in 0..params.len() {
        for i in 0..4 {
            let (mut hi, mut lo) = (params.clone(), params.clone());
            hi[s][i] += FD_STEP;
            lo[s][i] -= FD_STEP;
            let (eh, el) = (problem.evaluate(&hi, w), problem.evaluate(&lo, w));
            // a validity change inside the stencil makes the loss non-smooth there
            let same = |e: &room_layout::solver::Evaluation| {
                e.valid_tracks == ev.valid_tracks && e.valid_edges == ev.valid_edges
            };
            if !same(&eh) || !same(&el) {
                continue;
            }
            let fd = (eh.total - el.total) / (2.0 * FD_STEP);
            let an = ev.grad[s][i];
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
            if rel >= FD_TOLERANCE {
                return Err(format!(
                    "slot {s} coord {i}: analytic {an} vs fd {fd} (rel {rel:.2e})"
                ));
            }
            compared += 1;
        }
    }
    if compared == 0 {
        return Err("every stencil crossed a validity change".into());
    }
    Ok(FdOutcome::Checked(compared))
}

pub fn synth(preset: Preset, seed: u64, track_px: f64, jitter_px: f64) -> SyntheticScene {
    generate(&SynthConfig {
        preset,
        seed,
        noise: NoiseModel {
            track_px,
            jitter_px,
        },
        ..Default::default()
    })
    .unwrap_or_else(|e| panic!("{preset:?} seed {seed}: {e}"))
}

/// The i-th scene of a suite cycling through the three basic presets.
pub fn suite_scene(i: usize, track_px: f64, jitter_px: f64) -> SyntheticScene {
    let preset = [Preset::Cuboid, Preset::Manhattan, Preset::Generic][i % 3];
    synth(preset, (i / 3) as u64, track_px, jitter_px)
}

/// Reconstructed planes against ground truth.
#[derive(Debug, Default)]
pub struct PlaneComparison {
    pub worst_angle_deg: f64,
    pub worst_offset_rel: f64,
    /// Ground-truth elements covered by more than one reconstructed element.
    pub split: Vec<ElementId>,
    /// Annotated ground-truth elements without a reconstruction.
    pub missing: Vec<ElementId>,
}

pub fn compare_planes(scene: &SyntheticScene, result: &ReconstructionResult) -> PlaneComparison {
    let mut out = PlaneComparison::default();
    let registry = &result.best.registry;
    let planes = &result.best.planes;
    let mut owners: BTreeMap<ElementId, BTreeSet<ElementId>> = BTreeMap::new();
    for rid in registry.ids() {
        let gts: BTreeSet<ElementId> = registry
            .occurrences(rid)
            .iter()
            .map(|k| scene.local_to_gt[k])
            .collect();
        for gt in &gts {
            owners.entry(*gt).or_default().insert(rid);
        }
        // doors and windows are compared through their host's plane
        let Some(plane) = planes.plane(rid) else {
            continue;
        };
        for gt in &gts {
            let truth = scene.element(*gt).expect("ground-truth element").set.plane;
            out.worst_angle_deg = out.worst_angle_deg.max(plane.angle_to(&truth));
            let sign = plane.normal.dot(&truth.normal).signum();
            let rel = (sign * plane.offset - truth.offset).abs() / truth.offset.abs();
            out.worst_offset_rel = out.worst_offset_rel.max(rel);
        }
    }
    for gt in scene.annotated_ids() {
        match owners.get(&gt).map(BTreeSet::len) {
            None => out.missing.push(gt),
            Some(n) if n > 1 => out.split.push(gt),
            _ => {}
        }
    }
    out
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Element matching and track assignment on a synthetic scene, with every
/// matched element's plane set to its ground truth.
pub struct OracleProblem {
    pub tracks: Vec<PointTrack>,
    pub registry: room_layout::tracking::ElementRegistry,
    pub assignment: TrackAssignment,
    pub truth: PlaneSet,
    /// Ground-truth element behind each matched element.
    pub gt_of: BTreeMap<ElementId, ElementId>,
}

pub fn oracle_problem(scene: &SyntheticScene, spacing: f64) -> OracleProblem {
    use room_layout::tracking::{assign_tracks, match_elements};
    let tracks = scene.tracks(spacing).expect("oracle tracks");
    let registry = match_elements(&scene.annotations, &tracks);
    let assignment = assign_tracks(&tracks, &registry, &scene.annotations);
    let mut truth = PlaneSet::initial(registry.classes(), &BTreeMap::new());
    let mut gt_of = BTreeMap::new();
    for rid in registry.ids() {
        let gt = scene.local_to_gt[&registry.occurrences(rid)[0]];
        gt_of.insert(rid, gt);
        if let Some(p) = truth.planes.get_mut(&rid) {
            let g = scene.element(gt).expect("ground-truth element").set.plane;
            *p = Plane {
                element_id: rid,
                ..g
            };
        }
    }
    OracleProblem {
        tracks,
        registry,
        assignment,
        truth,
        gt_of,
    }
}
