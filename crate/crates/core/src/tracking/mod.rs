//! Point sampling, track building, cross-frame element correspondence and
//! track-to-element assignment.

mod assign;
pub mod hungarian;
mod matching;
mod sampler;
mod source;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::Vec2;

pub use assign::{assign_tracks, TrackAssignment, CONSISTENCY_CUTOFF};
pub use matching::{correspondence_matrix, match_elements, ElementRegistry};
pub use sampler::{sample_points, Sample, SamplerConfig};
pub use source::{
    build_tracks, load_tracks, parse_tracks, tracks_to_json, FileTrackSource, TrackSource,
};

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("frame {frame}: no visible region to sample")]
    EmptyVisible { frame: usize },
    #[error("track source has no data for frame pair ({from}, {to})")]
    MissingFramePair { from: usize, to: usize },
    #[error("track file: {0}")]
    Io(#[from] std::io::Error),
    #[error("track file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("track {track}: {reason}")]
    InvalidTrack { track: u32, reason: String },
}

/// Positions of one surface point across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrack {
    pub track_id: u32,
    pub points: BTreeMap<usize, Vec2>,
}

impl PointTrack {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
