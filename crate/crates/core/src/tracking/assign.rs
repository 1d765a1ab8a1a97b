use std::collections::BTreeMap;

use super::{ElementRegistry, PointTrack};
use crate::annotations::FrameAnnotation;
use crate::ElementId;

/// Tracks whose majority label covers this fraction or less of their annotated frames are dropped.
pub const CONSISTENCY_CUTOFF: f64 = 0.5;

/// Element assigned to each retained track.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackAssignment {
    pub map: BTreeMap<u32, ElementId>,
}

impl TrackAssignment {
    pub fn get(&self, track_id: u32) -> Option<ElementId> {
        self.map.get(&track_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Majority vote over amodal labels in the annotated frames a track visits.
///
/// Frames where the point lies in no mask count against consistency. Ties go
/// to the label seen first.
pub fn assign_tracks(
    tracks: &[PointTrack],
    registry: &ElementRegistry,
    frames: &[FrameAnnotation],
) -> TrackAssignment {
    let mut out = TrackAssignment::default();
    let mut frames: Vec<&FrameAnnotation> = frames.iter().collect();
    frames.sort_by_key(|f| f.frame_index);
    for t in tracks {
        let mut touched = 0usize;
        // label -> (count, first frame position)
        let mut votes: BTreeMap<ElementId, (usize, usize)> = BTreeMap::new();
        for (k, fa) in frames.iter().enumerate() {
            let Some(p) = t.points.get(&fa.frame_index) else {
                continue;
            };
            touched += 1;
            if let Some(g) = fa
                .amodal_label(p)
                .and_then(|l| registry.global(fa.frame_index, l))
            {
                votes.entry(g).or_insert((0, k)).0 += 1;
            }
        }
        let best = votes
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)));
        if let Some((g, (count, _))) = best {
            if *count as f64 / touched as f64 > CONSISTENCY_CUTOFF {
                out.map.insert(t.track_id, *g);
            }
        }
    }
    out
}
