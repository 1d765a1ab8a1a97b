use std::collections::BTreeMap;

use super::{union_extent, unproject_polygon, ExtentError, PlanarPolygonSet, PlaneBasis};
use crate::annotations::{FrameAnnotation, SHARED_BOUNDARY_TOL};
use crate::geometry::{CameraFrame, Vec2};
use crate::region;
use crate::solver::PlaneSet;
use crate::tracking::ElementRegistry;
use crate::ElementId;

/// Host element per door or window; `None` when it touches no structural element.
pub type HostMap = BTreeMap<ElementId, Option<ElementId>>;

const PIECE: f64 = 0.25;

/// Total length, over all frames, of each opening's amodal boundary lying
/// within one pixel of each structural element's amodal region.
pub fn shared_boundary_lengths(
    frames: &[FrameAnnotation],
    registry: &ElementRegistry,
) -> BTreeMap<ElementId, BTreeMap<ElementId, f64>> {
    let mut out: BTreeMap<ElementId, BTreeMap<ElementId, f64>> = BTreeMap::new();
    for fa in frames {
        let others: Vec<(ElementId, &region::Region, Vec<([f64; 2], [f64; 2])>)> = fa
            .elements
            .iter()
            .filter(|e| !e.class.is_opening())
            .filter_map(|e| {
                let g = registry.global(fa.frame_index, e.local_id)?;
                Some((g, &e.amodal, region::segments(&e.amodal)))
            })
            .collect();
        for el in fa.elements.iter().filter(|e| e.class.is_opening()) {
            let Some(g) = registry.global(fa.frame_index, el.local_id) else {
                continue;
            };
            let entry = out.entry(g).or_default();
            for (a, b) in region::segments(&el.amodal) {
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                let n = (len / PIECE).ceil().max(1.0) as usize;
                let step = len / n as f64;
                for k in 0..n {
                    let t = (k as f64 + 0.5) / n as f64;
                    let p = Vec2::new(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
                    for (o, reg, segs) in &others {
                        if region::distance_to(reg, segs, &p) <= SHARED_BOUNDARY_TOL {
                            *entry.entry(*o).or_insert(0.0) += step;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Each door and window is hosted by the structural element sharing the
/// longest boundary with it; ties go to the lower id.
pub fn find_hosts(frames: &[FrameAnnotation], registry: &ElementRegistry) -> HostMap {
    let lengths = shared_boundary_lengths(frames, registry);
    registry
        .ids()
        .filter(|id| registry.class(*id).is_some_and(|c| c.is_opening()))
        .map(|id| {
            let host = lengths.get(&id).and_then(|m| {
                m.iter()
                    .filter(|(_, l)| **l > 0.0)
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(h, _)| *h)
            });
            (id, host)
        })
        .collect()
}

/// Unprojects each door and window onto its host plane, adds it to the
/// host's extent and returns the opening extents. Openings without a host or
/// without a host extent are returned as errors.
pub fn attach_doors_windows(
    extents: &mut BTreeMap<ElementId, PlanarPolygonSet>,
    frames: &[FrameAnnotation],
    registry: &ElementRegistry,
    planes: &PlaneSet,
    cameras: &BTreeMap<usize, CameraFrame>,
) -> (Vec<PlanarPolygonSet>, Vec<ExtentError>) {
    let mut openings = Vec::new();
    let mut errors = Vec::new();
    let openings_ids = planes
        .classes
        .iter()
        .filter(|(_, c)| c.is_opening())
        .map(|(id, _)| *id);
    for id in openings_ids {
        let id = &id;
        let Some(host) = planes.hosts.get(id) else {
            errors.push(ExtentError::NoHost { element: *id });
            continue;
        };
        let Some(host_set) = extents.get(host) else {
            errors.push(ExtentError::NoHost { element: *id });
            continue;
        };
        let basis: PlaneBasis = host_set.basis;
        let mut regions = Vec::new();
        for (frame, local) in registry.occurrences(*id) {
            let (Some(fa), Some(cam)) = (
                frames.iter().find(|f| f.frame_index == frame),
                cameras.get(&frame),
            ) else {
                continue;
            };
            let Some(el) = fa.element(local) else {
                continue;
            };
            if let Ok(r) = unproject_polygon(&el.amodal, &host_set.plane, cam, &basis) {
                regions.push(r);
            }
        }
        let region = union_extent(&regions);
        if region::is_empty(&region) {
            continue;
        }
        let class = registry.class(*id).expect("registered opening");
        let host_set = extents.get_mut(host).unwrap();
        host_set.region = region::union(&host_set.region, &region);
        openings.push(PlanarPolygonSet {
            element_id: *id,
            class,
            plane: host_set.plane,
            basis,
            region,
        });
    }
    (openings, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{ElementAnnotation, StructuralClass};

    fn el(local_id: u32, class: StructuralClass, r: region::Region) -> ElementAnnotation {
        ElementAnnotation {
            local_id,
            class,
            amodal: r.clone(),
            visible: r,
        }
    }

    fn frame(elements: Vec<ElementAnnotation>) -> FrameAnnotation {
        FrameAnnotation {
            frame_index: 0,
            width: 640,
            height: 480,
            elements,
            occlusion_edges: vec![],
        }
    }

    fn registry(fa: &FrameAnnotation) -> ElementRegistry {
        let mut reg = ElementRegistry::default();
        for e in &fa.elements {
            reg.insert(0, e.local_id, ElementId(e.local_id), e.class);
        }
        reg
    }

    #[test]
    fn window_inside_wall() {
        let fa = frame(vec![
            el(
                0,
                StructuralClass::Wall,
                region::rect(0.0, 0.0, 300.0, 300.0),
            ),
            el(
                1,
                StructuralClass::Wall,
                region::rect(300.0, 0.0, 600.0, 300.0),
            ),
            el(
                2,
                StructuralClass::Window,
                region::rect(50.0, 50.0, 150.0, 150.0),
            ),
        ]);
        let hosts = find_hosts(std::slice::from_ref(&fa), &registry(&fa));
        assert_eq!(hosts[&ElementId(2)], Some(ElementId(0)));
    }

    #[test]
    fn door_goes_to_longer_border() {
        // door 40 wide, 120 tall, between wall A (left) and wall B (below)
        let fa = frame(vec![
            el(
                0,
                StructuralClass::Wall,
                region::rect(0.0, 0.0, 100.0, 200.0),
            ),
            el(
                1,
                StructuralClass::Wall,
                region::rect(100.0, 120.0, 140.0, 200.0),
            ),
            el(
                2,
                StructuralClass::Door,
                region::rect(100.0, 0.0, 140.0, 120.0),
            ),
        ]);
        let lengths = shared_boundary_lengths(std::slice::from_ref(&fa), &registry(&fa));
        let l = &lengths[&ElementId(2)];
        // everything within one pixel counts, including the corner strips
        assert!((l[&ElementId(0)] - 122.0).abs() < 0.5, "{:?}", l);
        assert!((l[&ElementId(1)] - 42.0).abs() < 0.5, "{:?}", l);
        let hosts = find_hosts(std::slice::from_ref(&fa), &registry(&fa));
        assert_eq!(hosts[&ElementId(2)], Some(ElementId(0)));
    }

    #[test]
    fn free_floating_window_has_no_host() {
        let fa = frame(vec![
            el(
                0,
                StructuralClass::Wall,
                region::rect(0.0, 0.0, 100.0, 100.0),
            ),
            el(
                1,
                StructuralClass::Window,
                region::rect(300.0, 300.0, 350.0, 350.0),
            ),
        ]);
        let hosts = find_hosts(std::slice::from_ref(&fa), &registry(&fa));
        assert_eq!(hosts[&ElementId(1)], None);
    }
}
