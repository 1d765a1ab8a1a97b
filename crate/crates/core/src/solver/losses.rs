use std::collections::BTreeMap;

use nalgebra::Vector4;

use super::{PerpendicularPairs, PlaneSet, SolverError};
use crate::annotations::EdgePoint;
use crate::geometry::{pixel_ray, CameraFrame, Vec3, MAX_DEPTH, PARALLEL_EPS};
use crate::tracking::{PointTrack, TrackAssignment};
use crate::ElementId;

/// Everything the joint loss depends on besides the planes.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub tracks: &'a [PointTrack],
    pub assignment: &'a TrackAssignment,
    pub edge_points: &'a [EdgePoint],
    pub pairs: &'a PerpendicularPairs,
    pub cameras: &'a BTreeMap<usize, CameraFrame>,
}

#[derive(Debug, Clone, Copy)]
struct Ray {
    origin: Vec3,
    dir: Vec3,
}

#[derive(Debug, Clone, Copy)]
struct EdgeRay {
    ray: Ray,
    a: usize,
    b: usize,
}

/// Loss inputs flattened onto plane slots, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub slots: Vec<ElementId>,
    track_slot: Vec<usize>,
    track_offsets: Vec<usize>,
    track_rays: Vec<Ray>,
    edges: Vec<EdgeRay>,
    perp: Vec<(usize, usize)>,
}

/// Loss value, its terms and gradient with respect to each slot's raw 4-vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub total: f64,
    pub tracks: f64,
    pub edges: f64,
    pub perp: f64,
    pub valid_tracks: usize,
    pub valid_edges: usize,
    pub grad: Vec<Vector4<f64>>,
    /// Unprojections that succeeded per slot, tracks and edges combined.
    pub valid_per_slot: Vec<usize>,
    /// Track unprojections that succeeded per slot.
    pub track_hits: Vec<usize>,
    /// Per slot, track rays whose camera lies on the negative side of the plane.
    pub track_rays_behind: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub tracks: f64,
    pub edges: f64,
    pub perp: f64,
}

/// Intersection of a unit ray with the raw plane `q`, with `ds/dq`.
#[inline]
fn hit(q: &Vector4<f64>, ray: &Ray) -> Option<(Vec3, Vector4<f64>, f64)> {
    let n = Vec3::new(q[0], q[1], q[2]);
    let nn = n.norm();
    let denom = n.dot(&ray.dir);
    if !(nn > 0.0) || (denom / nn).abs() <= PARALLEL_EPS {
        return None;
    }
    let s = -(n.dot(&ray.origin) + q[3]) / denom;
    if !(s > 0.0 && s <= MAX_DEPTH) {
        return None;
    }
    let x = ray.origin + ray.dir * s;
    let ds = Vector4::new(x.x, x.y, x.z, 1.0) * (-1.0 / denom);
    Some((x, ds, s))
}

fn unit_or_zero(v: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vec3::zeros()
    }
}

impl Problem {
    pub fn new(planes: &PlaneSet, inputs: &LossInputs<'_>) -> Self {
        let slots: Vec<ElementId> = planes.planes.keys().copied().collect();
        let slot_of: BTreeMap<ElementId, usize> =
            slots.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let resolve = |id: ElementId| {
            planes
                .plane_owner(id)
                .and_then(|o| slot_of.get(&o).copied())
        };
        let ray = |cam: &CameraFrame, px| {
            let r = pixel_ray(cam, px);
            Ray {
                origin: r.origin,
                dir: r.direction,
            }
        };
        let mut track_slot = Vec::new();
        let mut track_offsets = vec![0];
        let mut track_rays = Vec::new();
        for t in inputs.tracks {
            let Some(slot) = inputs.assignment.get(t.track_id).and_then(resolve) else {
                continue;
            };
            let before = track_rays.len();
            for (f, px) in &t.points {
                if let Some(cam) = inputs.cameras.get(f) {
                    track_rays.push(ray(cam, px));
                }
            }
            if track_rays.len() - before >= 2 {
                track_slot.push(slot);
                track_offsets.push(track_rays.len());
            } else {
                track_rays.truncate(before);
            }
        }
        let edges = inputs
            .edge_points
            .iter()
            .filter_map(|e| {
                let (a, b) = (resolve(e.element_a)?, resolve(e.element_b)?);
                let cam = inputs.cameras.get(&e.frame_index)?;
                (a != b).then(|| EdgeRay {
                    ray: ray(cam, &e.pixel),
                    a,
                    b,
                })
            })
            .collect();
        let perp = inputs
            .pairs
            .pairs
            .iter()
            .filter_map(|(w, c)| {
                let (a, b) = (resolve(*w)?, resolve(*c)?);
                (a != b).then_some((a, b))
            })
            .collect();
        Self {
            slots,
            track_slot,
            track_offsets,
            track_rays,
            edges,
            perp,
        }
    }

    pub fn num_tracks(&self) -> usize {
        self.track_slot.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Per slot: (number of tracks, number of edge points) referencing it.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut s = vec![(0, 0); self.slots.len()];
        for &slot in &self.track_slot {
            s[slot].0 += 1;
        }
        for e in &self.edges {
            s[e.a].1 += 1;
            s[e.b].1 += 1;
        }
        s
    }

    /// Number of track rays per slot.
    pub fn track_rays_per_slot(&self) -> Vec<usize> {
        let mut n = vec![0; self.slots.len()];
        for (ti, &slot) in self.track_slot.iter().enumerate() {
            n[slot] += self.track_offsets[ti + 1] - self.track_offsets[ti];
        }
        n
    }

    /// Drops perpendicularity pairs touching a slot for which `keep` is false.
    pub fn retain_perp(&mut self, keep: impl Fn(usize) -> bool) {
        self.perp.retain(|&(a, b)| keep(a) && keep(b));
    }

    pub fn params_of(&self, planes: &PlaneSet) -> Vec<Vector4<f64>> {
        self.slots
            .iter()
            .map(|id| planes.planes[id].coefficients())
            .collect()
    }

    /// Evaluates the weighted loss and its gradient. Failed unprojections are skipped.
    pub fn evaluate(&self, params: &[Vector4<f64>], w: Weights) -> Evaluation {
        let k = self.slots.len();
        let mut grad = vec![Vector4::zeros(); k];
        let mut valid_per_slot = vec![0usize; k];
        let mut track_hits = vec![0usize; k];
        let mut track_rays_behind = vec![0usize; k];

        let (mut track_sum, mut valid_tracks) = (0.0, 0usize);
        if w.tracks > 0.0 {
            let mut hits: Vec<(Vec3, Vector4<f64>, Vec3)> = Vec::new();
            let mut units: Vec<Vec3> = Vec::new();
            let mut raw = vec![Vector4::zeros(); k];
            for (ti, &slot) in self.track_slot.iter().enumerate() {
                let q = &params[slot];
                hits.clear();
                for r in &self.track_rays[self.track_offsets[ti]..self.track_offsets[ti + 1]] {
                    if q[0] * r.origin.x + q[1] * r.origin.y + q[2] * r.origin.z + q[3] < 0.0 {
                        track_rays_behind[slot] += 1;
                    }
                    if let Some((x, ds, _)) = hit(q, r) {
                        hits.push((x, ds, r.dir));
                    }
                }
                valid_per_slot[slot] += hits.len();
                track_hits[slot] += hits.len();
                if hits.len() < 2 {
                    continue;
                }
                let n = hits.len() as f64;
                let mean = hits.iter().fold(Vec3::zeros(), |a, h| a + h.0) / n;
                units.clear();
                let mut spread = 0.0;
                for h in &hits {
                    let d = h.0 - mean;
                    let len = d.norm();
                    spread += len;
                    units.push(if len > 0.0 { d / len } else { Vec3::zeros() });
                }
                let unit_mean = units.iter().fold(Vec3::zeros(), |a, u| a + u) / n;
                let mut g = Vector4::zeros();
                for (h, u) in hits.iter().zip(&units) {
                    g += h.1 * h.2.dot(&(u - unit_mean));
                }
                track_sum += spread / n;
                valid_tracks += 1;
                raw[slot] += g / n;
            }
            if valid_tracks > 0 {
                let scale = w.tracks / valid_tracks as f64;
                for (g, r) in grad.iter_mut().zip(raw) {
                    *g += r * scale;
                }
            }
        }
        let tracks = if valid_tracks > 0 {
            track_sum / valid_tracks as f64
        } else {
            0.0
        };

        let (mut edge_sum, mut valid_edges) = (0.0, 0usize);
        if w.edges > 0.0 {
            let mut edge_grads: Vec<(usize, usize, Vector4<f64>, Vector4<f64>)> = Vec::new();
            for e in &self.edges {
                let (Some(ha), Some(hb)) = (hit(&params[e.a], &e.ray), hit(&params[e.b], &e.ray))
                else {
                    continue;
                };
                valid_per_slot[e.a] += 1;
                valid_per_slot[e.b] += 1;
                let diff = ha.0 - hb.0;
                edge_sum += diff.norm();
                valid_edges += 1;
                let c = e.ray.dir.dot(&unit_or_zero(diff));
                edge_grads.push((e.a, e.b, ha.1 * c, hb.1 * -c));
            }
            if valid_edges > 0 {
                let scale = w.edges / valid_edges as f64;
                for (a, b, ga, gb) in edge_grads {
                    grad[a] += ga * scale;
                    grad[b] += gb * scale;
                }
            }
        }
        let edges = if valid_edges > 0 {
            edge_sum / valid_edges as f64
        } else {
            0.0
        };

        let mut perp_sum = 0.0;
        if w.perp > 0.0 && !self.perp.is_empty() {
            let scale = w.perp / self.perp.len() as f64;
            for &(a, b) in &self.perp {
                let na = Vec3::new(params[a][0], params[a][1], params[a][2]);
                let nb = Vec3::new(params[b][0], params[b][1], params[b][2]);
                let (la, lb) = (na.norm(), nb.norm());
                let cos = na.dot(&nb) / (la * lb);
                perp_sum += cos.abs();
                let sign = cos.signum() * (cos != 0.0) as i32 as f64;
                let ga = (nb / (la * lb) - na * (cos / (la * la))) * sign * scale;
                let gb = (na / (la * lb) - nb * (cos / (lb * lb))) * sign * scale;
                grad[a] += Vector4::new(ga.x, ga.y, ga.z, 0.0);
                grad[b] += Vector4::new(gb.x, gb.y, gb.z, 0.0);
            }
        }
        let perp = if self.perp.is_empty() {
            0.0
        } else {
            perp_sum / self.perp.len() as f64
        };

        Evaluation {
            total: w.tracks * tracks + w.edges * edges + w.perp * perp,
            tracks,
            edges,
            perp,
            valid_tracks,
            valid_edges,
            grad,
            valid_per_slot,
            track_hits,
            track_rays_behind,
        }
    }
}

const ALL_TERMS: Weights = Weights {
    tracks: 1.0,
    edges: 1.0,
    perp: 1.0,
};

fn empty_pairs() -> &'static PerpendicularPairs {
    static EMPTY: std::sync::OnceLock<PerpendicularPairs> = std::sync::OnceLock::new();
    EMPTY.get_or_init(PerpendicularPairs::default)
}

/// Mean over tracks of the mean distance of a track's unprojections to their centroid.
pub fn loss_tracks(
    planes: &PlaneSet,
    tracks: &[PointTrack],
    assignment: &TrackAssignment,
    cameras: &BTreeMap<usize, CameraFrame>,
) -> Result<f64, SolverError> {
    let inputs = LossInputs {
        tracks,
        assignment,
        edge_points: &[],
        pairs: empty_pairs(),
        cameras,
    };
    let problem = Problem::new(planes, &inputs);
    let ev = problem.evaluate(
        &problem.params_of(planes),
        Weights {
            edges: 0.0,
            perp: 0.0,
            ..ALL_TERMS
        },
    );
    if ev.valid_tracks == 0 {
        return Err(SolverError::AllTracksDegenerate);
    }
    Ok(ev.tracks)
}

/// Mean distance between each edge point's unprojections onto its two planes.
pub fn loss_edges(
    planes: &PlaneSet,
    edge_points: &[EdgePoint],
    cameras: &BTreeMap<usize, CameraFrame>,
) -> f64 {
    let inputs = LossInputs {
        tracks: &[],
        assignment: &TrackAssignment::default(),
        edge_points,
        pairs: empty_pairs(),
        cameras,
    };
    let problem = Problem::new(planes, &inputs);
    problem
        .evaluate(
            &problem.params_of(planes),
            Weights {
                tracks: 0.0,
                perp: 0.0,
                ..ALL_TERMS
            },
        )
        .edges
}

/// Mean absolute cosine between paired normals.
pub fn loss_perp(planes: &PlaneSet, pairs: &PerpendicularPairs) -> f64 {
    let cameras = BTreeMap::new();
    let inputs = LossInputs {
        tracks: &[],
        assignment: &TrackAssignment::default(),
        edge_points: &[],
        pairs,
        cameras: &cameras,
    };
    let problem = Problem::new(planes, &inputs);
    problem
        .evaluate(
            &problem.params_of(planes),
            Weights {
                tracks: 0.0,
                edges: 0.0,
                ..ALL_TERMS
            },
        )
        .perp
}

pub(crate) fn weights(cfg: &super::SolverConfig) -> Weights {
    Weights {
        tracks: cfg.track_weight,
        edges: cfg.alpha_edge,
        perp: cfg.alpha_perp,
    }
}
