use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::losses::{weights, Problem};
use super::{Adam, LossInputs, PlaneSet, SolverConfig, SolverError};
use crate::geometry::Plane;
use crate::ElementId;

#[derive(Debug, Clone)]
pub struct Solution {
    pub planes: PlaneSet,
    pub final_loss: f64,
    pub iterations: usize,
    /// Elements with neither tracks nor edge points; left at initialization.
    pub unconstrained: Vec<ElementId>,
    /// Best loss seen so far, one entry per iteration.
    pub history: Vec<f64>,
    pub reinitializations: usize,
}

/// A plane is starved while fewer than this fraction of its track rays hit it.
const STARVED_FRACTION: f64 = 0.5;
/// A plane is also starved while more than this fraction of its track rays
/// come from cameras on its minority side. A real surface is seen from one side.
const STRADDLE_FRACTION: f64 = 0.05;
/// Re-initializations allowed per plane; afterwards a starved plane no longer holds off stopping.
const MAX_REINIT_PER_PLANE: usize = 10;

fn normalize(q: &mut Vector4<f64>) {
    let n = Vector3::new(q[0], q[1], q[2]).norm();
    if n > 0.0 && n.is_finite() {
        *q /= n;
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Minimizes the joint loss with ADAM, returning the best snapshot.
///
/// A snapshot is only eligible as best when every constrained plane has at
/// least one valid unprojection. When the best loss stalls for `patience`
/// iterations the learning rate drops tenfold and the search resumes from
/// the best snapshot, up to `plateau_decays` times.
///
/// A plane hit by fewer than half of its track rays (or, without the track
/// term, by none of its edge rays) for more than `reinit_after` consecutive
/// iterations gets a fresh random normal. While such a plane still has
/// re-initializations left, stalls are not counted.
pub fn optimize(
    init: &PlaneSet,
    inputs: &LossInputs<'_>,
    cfg: &SolverConfig,
) -> Result<Solution, SolverError> {
    cfg.validate()?;
    let w = weights(cfg);
    let mut problem = Problem::new(init, inputs);
    if w.tracks > 0.0 && problem.num_tracks() == 0 {
        return Err(SolverError::AllTracksDegenerate);
    }
    let support = problem.support();
    let effective: Vec<bool> = support
        .iter()
        .map(|&(t, e)| (t > 0 && w.tracks > 0.0) || (e > 0 && w.edges > 0.0))
        .collect();
    let unconstrained: Vec<ElementId> = problem
        .slots
        .iter()
        .zip(&support)
        .filter(|(_, s)| **s == (0, 0))
        .map(|(id, _)| *id)
        .collect();
    problem.retain_perp(|s| support[s] != (0, 0));

    let mut params = problem.params_of(init);
    params.iter_mut().for_each(normalize);
    let finish = |params: &[Vector4<f64>], loss: f64, iterations, history, reinitializations| {
        let mut planes = init.clone();
        for (id, q) in problem.slots.iter().zip(params) {
            if let Some(p) = Plane::from_coefficients(q, *id) {
                planes.planes.insert(*id, p);
            }
        }
        Solution {
            planes,
            final_loss: loss,
            iterations,
            unconstrained: unconstrained.clone(),
            history,
            reinitializations,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(params.len(), 4, cfg.learning_rate);
    let mut best: Option<(f64, Vec<Vector4<f64>>, usize)> = None;
    let mut history = Vec::new();
    let mut stall = 0usize;
    let mut decays_left = cfg.plateau_decays;
    let mut invalid_streak = vec![0usize; params.len()];
    let mut reinit_count = vec![0usize; params.len()];
    let track_rays = problem.track_rays_per_slot();
    let mut reinitializations = 0usize;
    let mut iterations = 0usize;

    while iterations < cfg.max_iterations {
        let ev = problem.evaluate(&params, w);
        if !ev.total.is_finite() {
            return Err(SolverError::Diverged {
                iteration: iterations,
            });
        }
        iterations += 1;
        let eligible = (w.tracks == 0.0 || ev.valid_tracks > 0)
            && effective
                .iter()
                .zip(&ev.valid_per_slot)
                .all(|(e, v)| !e || *v > 0);
        let starved: Vec<bool> = (0..params.len())
            .map(|s| {
                effective[s]
                    && if w.tracks > 0.0 && track_rays[s] > 0 {
                        let rays = track_rays[s] as f64;
                        let behind = ev.track_rays_behind[s];
                        let minority = behind.min(track_rays[s] - behind) as f64;
                        (ev.track_hits[s] as f64) < STARVED_FRACTION * rays
                            || minority > STRADDLE_FRACTION * rays
                    } else {
                        ev.valid_per_slot[s] == 0
                    }
            })
            .collect();
        let pending =
            (0..params.len()).any(|s| starved[s] && reinit_count[s] < MAX_REINIT_PER_PLANE);
        if eligible && best.as_ref().is_none_or(|b| ev.total < b.0) {
            best = Some((ev.total, params.clone(), iterations));
            stall = 0;
        } else if best.is_some() && !pending {
            stall += 1;
        }
        history.push(best.as_ref().map_or(f64::INFINITY, |b| b.0));

        if stall >= cfg.patience {
            if decays_left == 0 {
                break;
            }
            decays_left -= 1;
            adam.learning_rate /= 10.0;
            adam.reset();
            params.clone_from(&best.as_ref().expect("stall implies a best snapshot").1);
            stall = 0;
            continue;
        }

        for s in 0..params.len() {
            if !effective[s] {
                continue;
            }
            if starved[s] {
                invalid_streak[s] += 1;
                if invalid_streak[s] > cfg.reinit_after && reinit_count[s] < MAX_REINIT_PER_PLANE {
                    reinit_count[s] += 1;
                    let n = random_unit(&mut rng);
                    params[s] = Vector4::new(n.x, n.y, n.z, params[s][3]);
                    adam.reset_group(s);
                    invalid_streak[s] = 0;
                    reinitializations += 1;
                    continue;
                }
            } else {
                invalid_streak[s] = 0;
            }
            let g = ev.grad[s];
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            adam.step_group(s, params[s].as_mut_slice(), g.as_slice());
            normalize(&mut params[s]);
        }
    }

    match best {
        Some((loss, snapshot, _)) => Ok(finish(
            &snapshot,
            loss,
            iterations,
            history,
            reinitializations,
        )),
        None if iterations == 0 => {
            let loss = problem.evaluate(&params, w).total;
            Ok(finish(&params, loss, 0, history, 0))
        }
        None => Err(SolverError::AllTracksDegenerate),
    }
}
