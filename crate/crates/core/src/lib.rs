//! Room layouts in 3D from 2D structural-element annotations.
//!
//! Given per-frame polygon annotations, camera parameters and 2D point
//! tracks, the crate estimates one plane per structural element, cuts each
//! plane to the region observed in the video and assembles a labeled triangle
//! mesh. Reconstructions are scored by rendering them back into the annotated
//! frames and comparing against the annotations.
//!
//! The guide in `book/` walks through each stage; its code snippets are
//! compiled and run as doctests of this crate.

use serde::{Deserialize, Serialize};

pub mod annotations;
pub mod evaluation;
pub mod extent;
pub mod geometry;
pub mod pipeline;
pub mod region;
pub mod solver;
pub mod synthetic;
pub mod tracking;

/// Video-wide identity of a structural element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl std::fmt::Display for ElementId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

// The guide's chapters, so that `cargo test` runs their code blocks.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/extent.md")]
    mod extent {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
