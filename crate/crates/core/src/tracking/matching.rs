use std::collections::BTreeMap;

use super::hungarian::max_weight_assignment;
use super::PointTrack;
use crate::annotations::{FrameAnnotation, StructuralClass};
use crate::region;
use crate::ElementId;

/// Maps per-frame local element ids to persistent global ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElementRegistry {
    map: BTreeMap<(usize, u32), ElementId>,
    classes: BTreeMap<ElementId, StructuralClass>,
}

impl ElementRegistry {
    pub fn global(&self, frame: usize, local: u32) -> Option<ElementId> {
        self.map.get(&(frame, local)).copied()
    }

    pub fn local_map(&self, frame: usize) -> BTreeMap<u32, ElementId> {
        self.map
            .range((frame, 0)..=(frame, u32::MAX))
            .map(|((_, l), g)| (*l, *g))
            .collect()
    }

    pub fn class(&self, id: ElementId) -> Option<StructuralClass> {
        self.classes.get(&id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.classes.keys().copied()
    }

    pub fn classes(&self) -> &BTreeMap<ElementId, StructuralClass> {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Occurrences `(frame, local_id)` of a global element.
    pub fn occurrences(&self, id: ElementId) -> Vec<(usize, u32)> {
        self.map
            .iter()
            .filter(|(_, g)| **g == id)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn insert(&mut self, frame: usize, local: u32, id: ElementId, class: StructuralClass) {
        self.map.insert((frame, local), id);
        self.classes.entry(id).or_insert(class);
    }

    fn fresh(&mut self, frame: usize, local: u32, class: StructuralClass) -> ElementId {
        let id = ElementId(self.classes.len() as u32);
        self.insert(frame, local, id, class);
        id
    }
}

/// Counts of tracks labeled `(rows[i], cols[j])` in frames `a` and `b`.
pub fn correspondence_matrix(
    a: &FrameAnnotation,
    b: &FrameAnnotation,
    tracks: &[PointTrack],
) -> (Vec<u32>, Vec<u32>, Vec<Vec<i64>>) {
    let rows: Vec<u32> = a.elements.iter().map(|e| e.local_id).collect();
    let cols: Vec<u32> = b.elements.iter().map(|e| e.local_id).collect();
    let mut counts = vec![vec![0i64; cols.len()]; rows.len()];
    for t in tracks {
        let (Some(pa), Some(pb)) = (t.points.get(&a.frame_index), t.points.get(&b.frame_index))
        else {
            continue;
        };
        for (i, ea) in a.elements.iter().enumerate() {
            if !region::contains(&ea.amodal, pa) {
                continue;
            }
            for (j, eb) in b.elements.iter().enumerate() {
                if region::contains(&eb.amodal, pb) {
                    counts[i][j] += 1;
                }
            }
        }
    }
    (rows, cols, counts)
}

/// Chains optimal matchings between consecutive annotated frames into global ids.
///
/// Elements left unmatched, or matched with zero shared tracks, get fresh ids.
pub fn match_elements(frames: &[FrameAnnotation], tracks: &[PointTrack]) -> ElementRegistry {
    let mut frames: Vec<&FrameAnnotation> = frames.iter().collect();
    frames.sort_by_key(|f| f.frame_index);
    let mut reg = ElementRegistry::default();
    let Some(first) = frames.first() else {
        return reg;
    };
    let mut sorted = first.elements.clone();
    sorted.sort_by_key(|e| e.local_id);
    for e in &sorted {
        reg.fresh(first.frame_index, e.local_id, e.class);
    }
    for w in frames.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (rows, cols, counts) = correspondence_matrix(a, b, tracks);
        let assignment = max_weight_assignment(&counts);
        let mut matched: BTreeMap<u32, ElementId> = BTreeMap::new();
        for (i, c) in assignment.iter().enumerate() {
            if let Some(j) = c {
                if counts[i][*j] > 0 {
                    if let Some(g) = reg.global(a.frame_index, rows[i]) {
                        matched.insert(cols[*j], g);
                    }
                }
            }
        }
        let mut elems: Vec<_> = b.elements.iter().collect();
        elems.sort_by_key(|e| e.local_id);
        for e in elems {
            match matched.get(&e.local_id) {
                Some(g) => reg.insert(b.frame_index, e.local_id, *g, e.class),
                None => {
                    reg.fresh(b.frame_index, e.local_id, e.class);
                }
            }
        }
    }
    reg
}
