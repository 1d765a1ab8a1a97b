//! Joint plane estimation: track, edge and perpendicularity losses minimized with ADAM.

mod adam;
mod losses;
mod optimize;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::StructuralClass;
use crate::geometry::Plane;
use crate::ElementId;

pub use adam::Adam;
pub use losses::{loss_edges, loss_perp, loss_tracks, Evaluation, LossInputs, Problem, Weights};
pub use optimize::{optimize, Solution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no track has two or more valid unprojections")]
    AllTracksDegenerate,
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Weight of the track term; 0 disables it (ablation only).
    pub track_weight: f64,
    pub alpha_edge: f64,
    pub alpha_perp: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub patience: usize,
    /// Times the learning rate is divided by ten when progress stalls before stopping.
    pub plateau_decays: usize,
    /// Consecutive starved iterations before a plane is re-initialized.
    pub reinit_after: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            track_weight: 1.0,
            alpha_edge: 0.1,
            alpha_perp: 0.1,
            learning_rate: 0.1,
            max_iterations: 100_000,
            patience: 500,
            plateau_decays: 4,
            reinit_after: 1000,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let weights = [self.track_weight, self.alpha_edge, self.alpha_perp];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SolverError::InvalidConfig(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SolverError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.patience == 0 {
            return Err(SolverError::InvalidConfig(
                "patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Plane per structural element; doors and windows alias their host's plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSet {
    pub planes: BTreeMap<ElementId, Plane>,
    pub classes: BTreeMap<ElementId, StructuralClass>,
    pub hosts: BTreeMap<ElementId, ElementId>,
}

impl PlaneSet {
    /// All-ones initialization normalized to a unit normal.
    pub fn initial(
        classes: &BTreeMap<ElementId, StructuralClass>,
        hosts: &BTreeMap<ElementId, ElementId>,
    ) -> Self {
        let planes = classes
            .iter()
            .filter(|(_, c)| !c.is_opening())
            .map(|(id, _)| {
                (
                    *id,
                    Plane::new(Vector3::new(1.0, 1.0, 1.0), 1.0, *id).expect("nonzero normal"),
                )
            })
            .collect();
        Self {
            planes,
            classes: classes.clone(),
            hosts: hosts.clone(),
        }
    }

    /// Id of the element whose plane `id` uses.
    pub fn plane_owner(&self, id: ElementId) -> Option<ElementId> {
        match self.classes.get(&id) {
            Some(c) if c.is_opening() => self
                .hosts
                .get(&id)
                .copied()
                .filter(|h| self.planes.contains_key(h)),
            Some(_) => self.planes.contains_key(&id).then_some(id),
            None => None,
        }
    }

    pub fn plane(&self, id: ElementId) -> Option<&Plane> {
        self.plane_owner(id).and_then(|o| self.planes.get(&o))
    }

    pub fn class(&self, id: ElementId) -> Option<StructuralClass> {
        self.classes.get(&id).copied()
    }
}

/// Wall / floor-or-ceiling pairs constrained to be perpendicular.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerpendicularPairs {
    pub pairs: Vec<(ElementId, ElementId)>,
}

impl PerpendicularPairs {
    /// Every wall paired with every floor and ceiling that has a plane. Slanted elements never appear.
    pub fn from_planes(planes: &PlaneSet) -> Self {
        let with_plane = |c: StructuralClass| -> Vec<ElementId> {
            planes
                .planes
                .keys()
                .copied()
                .filter(|id| planes.class(*id) == Some(c))
                .collect()
        };
        let walls = with_plane(StructuralClass::Wall);
        let mut horizontal = with_plane(StructuralClass::Floor);
        horizontal.extend(with_plane(StructuralClass::Ceiling));
        horizontal.sort();
        let pairs = walls
            .iter()
            .flat_map(|w| horizontal.iter().map(move |h| (*w, *h)))
            .collect();
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
