//! Per-frame 2D structural-element annotations and boundary edge points.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::region::{self, Region, Ring};
use crate::ElementId;

/// Spacing of edge points along a shared boundary, pixels.
pub const EDGE_SPACING: f64 = 10.0;
/// Boundary samples closer than this to an occlusion edge are discarded, pixels.
pub const OCCLUSION_EXCLUSION: f64 = 3.0;
/// Two boundaries within this distance are considered shared, pixels.
pub const SHARED_BOUNDARY_TOL: f64 = 1.0;
/// Rings with smaller absolute area are dropped at load, px^2.
pub const MIN_RING_AREA: f64 = 1.0;

const BOUNDARY_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StructuralClass {
    Floor,
    Ceiling,
    Wall,
    Slanted,
    Door,
    Window,
}

impl StructuralClass {
    pub const ALL: [StructuralClass; 6] = [
        Self::Floor,
        Self::Ceiling,
        Self::Wall,
        Self::Slanted,
        Self::Door,
        Self::Window,
    ];

    /// Integer id used in mesh files.
    pub fn id(self) -> u8 {
        match self {
            Self::Floor => 0,
            Self::Ceiling => 1,
            Self::Wall => 2,
            Self::Slanted => 3,
            Self::Door => 4,
            Self::Window => 5,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    /// Doors and windows lie in their host's plane.
    pub fn is_opening(self) -> bool {
        matches!(self, Self::Door | Self::Window)
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Self::Floor | Self::Ceiling)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementAnnotation {
    pub local_id: u32,
    pub class: StructuralClass,
    pub amodal: Region,
    pub visible: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionEdge {
    pub polyline: Vec<Vec2>,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub frame_index: usize,
    pub width: u32,
    pub height: u32,
    pub elements: Vec<ElementAnnotation>,
    pub occlusion_edges: Vec<OcclusionEdge>,
}

impl FrameAnnotation {
    pub fn element(&self, local_id: u32) -> Option<&ElementAnnotation> {
        self.elements.iter().find(|e| e.local_id == local_id)
    }

    /// Local id of the first element whose amodal mask contains `p`.
    pub fn amodal_label(&self, p: &Vec2) -> Option<u32> {
        self.elements
            .iter()
            .find(|e| region::contains(&e.amodal, p))
            .map(|e| e.local_id)
    }

    pub fn in_image(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// A boundary point between two elements that meet in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub pixel: Vec2,
    pub frame_index: usize,
    pub element_a: ElementId,
    pub element_b: ElementId,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation file: {0}")]
    Io(#[from] std::io::Error),
    #[error("annotation file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("frame {frame}{}: {reason}", element.map(|e| format!(", element {e}")).unwrap_or_default())]
    Validation {
        frame: usize,
        element: Option<u32>,
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementRecord {
    pub local_id: u32,
    pub class: StructuralClass,
    pub amodal: Vec<Ring>,
    #[serde(default)]
    pub visible: Vec<Ring>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub width: u32,
    pub height: u32,
    pub elements: Vec<ElementRecord>,
    #[serde(default)]
    pub occlusion_edges: Vec<Vec<[f64; 2]>>,
}

/// Loaded annotations plus the non-fatal repairs applied.
#[derive(Debug, Clone)]
pub struct LoadedAnnotations {
    pub frames: Vec<FrameAnnotation>,
    pub warnings: Vec<String>,
}

fn validate_ring(frame: usize, element: u32, ring: &Ring) -> Result<(), AnnotationError> {
    if ring.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnnotationError::Validation {
            frame,
            element: Some(element),
            reason: "non-finite vertex".into(),
        });
    }
    Ok(())
}

fn clean_rings(rings: &[Ring], warn: &mut dyn FnMut()) -> Vec<Ring> {
    rings
        .iter()
        .filter(|r| {
            let ok = r.len() >= 3 && region::signed_ring_area(r).abs() >= MIN_RING_AREA;
            if !ok {
                warn();
            }
            ok
        })
        .cloned()
        .collect()
}

/// `r` without the rings that loading would drop as degenerate.
pub fn without_degenerate_rings(r: &Region) -> Region {
    let rings = region::to_rings(r);
    let kept = clean_rings(&rings, &mut || {});
    if kept.len() == rings.len() {
        r.clone()
    } else {
        region::from_rings(&kept)
    }
}

fn frame_from_record(
    rec: FrameRecord,
    warnings: &mut Vec<String>,
) -> Result<FrameAnnotation, AnnotationError> {
    let f = rec.frame_index;
    if rec.width == 0 || rec.height == 0 {
        return Err(AnnotationError::Validation {
            frame: f,
            element: None,
            reason: "zero image size".into(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut elements = Vec::new();
    for el in rec.elements {
        if !seen.insert(el.local_id) {
            return Err(AnnotationError::Validation {
                frame: f,
                element: Some(el.local_id),
                reason: "duplicate local_id".into(),
            });
        }
        for r in el.amodal.iter().chain(&el.visible) {
            validate_ring(f, el.local_id, r)?;
        }
        let id = el.local_id;
        let mut dropped = 0usize;
        let amodal = region::from_rings(&clean_rings(&el.amodal, &mut || dropped += 1));
        let visible = region::from_rings(&clean_rings(&el.visible, &mut || dropped += 1));
        for _ in 0..dropped {
            warnings.push(format!(
                "frame {f}, element {id}: dropped degenerate polygon"
            ));
        }
        if region::area(&amodal) < MIN_RING_AREA {
            warnings.push(format!(
                "frame {f}, element {id}: empty amodal mask, element dropped"
            ));
            continue;
        }
        // visible parts never leave the element
        let visible = region::intersection(&visible, &amodal);
        elements.push(ElementAnnotation {
            local_id: id,
            class: el.class,
            amodal,
            visible,
        });
    }
    let mut occlusion_edges = Vec::new();
    for line in rec.occlusion_edges {
        if line.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AnnotationError::Validation {
                frame: f,
                element: None,
                reason: "non-finite occlusion edge".into(),
            });
        }
        if line.len() < 2 {
            warnings.push(format!(
                "frame {f}: dropped occlusion edge with {} vertices",
                line.len()
            ));
            continue;
        }
        occlusion_edges.push(OcclusionEdge {
            polyline: line.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            frame_index: f,
        });
    }
    Ok(FrameAnnotation {
        frame_index: f,
        width: rec.width,
        height: rec.height,
        elements,
        occlusion_edges,
    })
}

pub fn parse_annotations(text: &str) -> Result<LoadedAnnotations, AnnotationError> {
    let records: Vec<FrameRecord> = serde_json::from_str(text)?;
    let mut warnings = Vec::new();
    let mut frames = records
        .into_iter()
        .map(|r| frame_from_record(r, &mut warnings))
        .collect::<Result<Vec<_>, _>>()?;
    frames.sort_by_key(|f| f.frame_index);
    for w in frames.windows(2) {
        if w[0].frame_index == w[1].frame_index {
            return Err(AnnotationError::Validation {
                frame: w[0].frame_index,
                element: None,
                reason: "duplicate frame".into(),
            });
        }
    }
    Ok(LoadedAnnotations { frames, warnings })
}

pub fn load_annotations(path: &Path) -> Result<LoadedAnnotations, AnnotationError> {
    parse_annotations(&std::fs::read_to_string(path)?)
}

pub fn frame_to_record(fa: &FrameAnnotation) -> FrameRecord {
    FrameRecord {
        frame_index: fa.frame_index,
        width: fa.width,
        height: fa.height,
        elements: fa
            .elements
            .iter()
            .map(|e| ElementRecord {
                local_id: e.local_id,
                class: e.class,
                amodal: region::to_rings(&e.amodal),
                visible: region::to_rings(&e.visible),
            })
            .collect(),
        occlusion_edges: fa
            .occlusion_edges
            .iter()
            .map(|o| o.polyline.iter().map(|p| [p.x, p.y]).collect())
            .collect(),
    }
}

pub fn annotations_to_json(frames: &[FrameAnnotation]) -> String {
    let recs: Vec<FrameRecord> = frames.iter().map(frame_to_record).collect();
    serde_json::to_string(&recs).expect("annotation records serialize")
}

type Segment = ([f64; 2], [f64; 2]);

/// Boundary walker: ring vertices with cumulative arc length.
struct RingPath {
    pts: Vec<[f64; 2]>,
    arc: Vec<f64>,
}

impl RingPath {
    fn new(ring: &Ring) -> Self {
        let mut pts = ring.clone();
        pts.push(ring[0]);
        let mut arc = vec![0.0];
        for w in pts.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            arc.push(arc.last().unwrap() + d);
        }
        Self { pts, arc }
    }

    fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    fn at(&self, s: f64) -> [f64; 2] {
        let len = self.length();
        let s = s.rem_euclid(len.max(f64::MIN_POSITIVE));
        let k = self
            .arc
            .partition_point(|a| *a <= s)
            .clamp(1, self.arc.len() - 1);
        let (a0, a1) = (self.arc[k - 1], self.arc[k]);
        let t = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
        let (p, q) = (self.pts[k - 1], self.pts[k]);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    }
}

fn expanded_bounds_overlap(a: &Region, b: &Region, pad: f64) -> bool {
    match (region::bounds(a), region::bounds(b)) {
        (Some(x), Some(y)) => {
            x[0] - pad <= y[2] && y[0] - pad <= x[2] && x[1] - pad <= y[3] && y[1] - pad <= x[3]
        }
        _ => false,
    }
}

/// Arc-length intervals of `ring` that run within tolerance of `other` and away from occlusion edges.
fn shared_runs(
    path: &RingPath,
    other: &[Segment],
    occlusions: &[OcclusionEdge],
) -> Vec<(f64, f64)> {
    let len = path.length();
    if len <= 0.0 {
        return vec![];
    }
    let n = (len / BOUNDARY_STEP).ceil().max(1.0) as usize;
    let step = len / n as f64;
    let good: Vec<bool> = (0..n)
        .map(|k| {
            let p = path.at((k as f64 + 0.5) * step);
            let near = region::nearest_on_segments(other, p)
                .is_some_and(|(_, d)| d <= SHARED_BOUNDARY_TOL);
            near && occlusions
                .iter()
                .all(|o| region::polyline_distance(&o.polyline, p) > OCCLUSION_EXCLUSION)
        })
        .collect();
    let mut runs = Vec::new();
    let mut k = 0;
    while k < n {
        if good[k] {
            let start = k;
            while k < n && good[k] {
                k += 1;
            }
            runs.push((start as f64 * step, k as f64 * step));
        } else {
            k += 1;
        }
    }
    // merge a run wrapping past the ring start
    if runs.len() > 1 && good[0] && good[n - 1] {
        let first = runs.remove(0);
        let last = runs.last_mut().unwrap();
        last.1 = len + first.1;
    }
    runs
}

/// Samples edge points along amodal boundaries shared by pairs of elements.
///
/// Pairs involving doors or windows are skipped, as are boundary stretches
/// within [`OCCLUSION_EXCLUSION`] of an annotated occlusion edge. Each point is
/// the midpoint between the two boundaries.
pub fn extract_edge_points(
    fa: &FrameAnnotation,
    global_ids: &BTreeMap<u32, ElementId>,
) -> Vec<EdgePoint> {
    extract_edge_points_with_spacing(fa, global_ids, EDGE_SPACING)
}

pub fn extract_edge_points_with_spacing(
    fa: &FrameAnnotation,
    global_ids: &BTreeMap<u32, ElementId>,
    spacing: f64,
) -> Vec<EdgePoint> {
    let mut els: Vec<&ElementAnnotation> = fa
        .elements
        .iter()
        .filter(|e| !e.class.is_opening() && global_ids.contains_key(&e.local_id))
        .collect();
    els.sort_by_key(|e| e.local_id);
    let seg_cache: Vec<Vec<Segment>> = els.iter().map(|e| region::segments(&e.amodal)).collect();
    let mut out = Vec::new();
    for i in 0..els.len() {
        for j in (i + 1)..els.len() {
            let (a, b) = (els[i], els[j]);
            let (ga, gb) = (global_ids[&a.local_id], global_ids[&b.local_id]);
            if ga == gb || !expanded_bounds_overlap(&a.amodal, &b.amodal, SHARED_BOUNDARY_TOL) {
                continue;
            }
            for ring in region::to_rings(&a.amodal) {
                let path = RingPath::new(&ring);
                for (s0, s1) in shared_runs(&path, &seg_cache[j], &fa.occlusion_edges) {
                    let mut s = s0 + 0.5 * spacing;
                    while s < s1 {
                        let p = path.at(s);
                        if let Some((q, _)) = region::nearest_on_segments(&seg_cache[j], p) {
                            let mid = Vec2::new(0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]));
                            out.push(EdgePoint {
                                pixel: mid,
                                frame_index: fa.frame_index,
                                element_a: ga,
                                element_b: gb,
                            });
                        }
                        s += spacing;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::rect;

    fn element(id: u32, class: StructuralClass, amodal: Region) -> ElementAnnotation {
        ElementAnnotation {
            local_id: id,
            class,
            visible: amodal.clone(),
            amodal,
        }
    }

    fn frame(
        elements: Vec<ElementAnnotation>,
        occlusion_edges: Vec<OcclusionEdge>,
    ) -> FrameAnnotation {
        FrameAnnotation {
            frame_index: 4,
            width: 400,
            height: 300,
            elements,
            occlusion_edges,
        }
    }

    fn ids(n: u32) -> BTreeMap<u32, ElementId> {
        (0..n).map(|i| (i, ElementId(i + 10))).collect()
    }

    #[test]
    fn abutting_rectangles_share_one_edge() {
        let fa = frame(
            vec![
                element(0, StructuralClass::Wall, rect(50.0, 100.0, 150.0, 200.0)),
                element(1, StructuralClass::Wall, rect(150.0, 100.0, 250.0, 200.0)),
            ],
            vec![],
        );
        let pts = extract_edge_points(&fa, &ids(2));
        assert!((9..=11).contains(&pts.len()), "{}", pts.len());
        for p in &pts {
            assert!((p.pixel.x - 150.0).abs() <= 1.0);
            assert!(p.pixel.y >= 99.0 && p.pixel.y <= 201.0);
            assert_eq!((p.element_a, p.element_b), (ElementId(10), ElementId(11)));
            assert_eq!(p.frame_index, 4);
        }
    }

    #[test]
    fn gap_gives_no_points() {
        let fa = frame(
            vec![
                element(0, StructuralClass::Wall, rect(50.0, 100.0, 150.0, 200.0)),
                element(1, StructuralClass::Floor, rect(155.0, 100.0, 250.0, 200.0)),
            ],
            vec![],
        );
        assert!(extract_edge_points(&fa, &ids(2)).is_empty());
    }

    #[test]
    fn occlusion_edge_suppresses_points() {
        let edge = OcclusionEdge {
            polyline: vec![Vec2::new(150.0, 90.0), Vec2::new(150.5, 210.0)],
            frame_index: 4,
        };
        let fa = frame(
            vec![
                element(0, StructuralClass::Wall, rect(50.0, 100.0, 150.0, 200.0)),
                element(1, StructuralClass::Wall, rect(150.0, 100.0, 250.0, 200.0)),
            ],
            vec![edge],
        );
        assert!(extract_edge_points(&fa, &ids(2)).is_empty());
    }

    #[test]
    fn openings_are_excluded() {
        let fa = frame(
            vec![
                element(0, StructuralClass::Wall, rect(50.0, 100.0, 150.0, 200.0)),
                element(1, StructuralClass::Door, rect(150.0, 100.0, 250.0, 200.0)),
            ],
            vec![],
        );
        assert!(extract_edge_points(&fa, &ids(2)).is_empty());
    }

    const TWO_FRAMES: &str = r#"[
      {"frame_index": 0, "width": 100, "height": 80,
       "elements": [{"local_id": 0, "class": "Wall", "amodal": [[[0,0],[50,0],[50,80],[0,80]]],
                     "visible": [[[10,10],[20,10],[20,20],[10,20]]]}],
       "occlusion_edges": []},
      {"frame_index": 30, "width": 100, "height": 80,
       "elements": [{"local_id": 3, "class": "Floor", "amodal": [[[0,0],[50,0],[50,80],[0,80]]], "visible": []}]}
    ]"#;

    #[test]
    fn loads_well_formed_file() {
        let loaded = parse_annotations(TWO_FRAMES).unwrap();
        assert_eq!(loaded.frames.len(), 2);
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.frames[1].elements[0].class, StructuralClass::Floor);
    }

    #[test]
    fn drops_two_vertex_polygon() {
        let text = r#"[{"frame_index": 0, "width": 100, "height": 80, "elements": [
            {"local_id": 0, "class": "Wall", "amodal": [[[0,0],[50,0],[50,80],[0,80]], [[1,1],[2,2]]]}]}]"#;
        let loaded = parse_annotations(text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!((region::area(&loaded.frames[0].elements[0].amodal) - 4000.0).abs() < 1e-9);
    }

    #[test]
    fn visible_clipped_to_amodal() {
        let text = r#"[{"frame_index": 0, "width": 100, "height": 80, "elements": [
            {"local_id": 0, "class": "Wall", "amodal": [[[10,10],[60,10],[60,60],[10,60]]],
             "visible": [[[20,20],[65,20],[65,40],[20,40]]]}]}]"#;
        let loaded = parse_annotations(text).unwrap();
        let el = &loaded.frames[0].elements[0];
        // independent clip: the visible rectangle x in [20,65] cut at x = 60
        assert!((region::area(&el.visible) - 40.0 * 20.0).abs() < 1e-9);
        assert!(region::area(&region::difference(&el.visible, &el.amodal)) < 1e-9);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            parse_annotations("[{"),
            Err(AnnotationError::Parse(_))
        ));
        let dup = r#"[{"frame_index": 0, "width": 10, "height": 10, "elements": [
            {"local_id": 1, "class": "Wall", "amodal": [[[0,0],[5,0],[5,5]]]},
            {"local_id": 1, "class": "Wall", "amodal": [[[0,0],[5,0],[5,5]]]}]}]"#;
        assert!(matches!(
            parse_annotations(dup),
            Err(AnnotationError::Validation {
                element: Some(1),
                ..
            })
        ));
        let bad_class = r#"[{"frame_index": 0, "width": 10, "height": 10, "elements": [
            {"local_id": 1, "class": "Roof", "amodal": []}]}]"#;
        assert!(parse_annotations(bad_class).is_err());
    }
}
