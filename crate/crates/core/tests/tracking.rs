//! Assignment solver, element matching and track labeling properties.

mod common;

use std::collections::BTreeMap;

use common::{oracle_problem, synth};
use proptest::prelude::*;
use room_layout::annotations::extract_edge_points;
use room_layout::region;
use room_layout::synthetic::Preset;
use room_layout::tracking::hungarian::{
    assignment_weight, max_weight_assignment, min_cost_assignment,
};
use room_layout::tracking::{match_elements, sample_points, SamplerConfig};
use room_layout::ElementId;

fn permutations_best(w: &[Vec<i64>], better: fn(i64, i64) -> bool) -> i64 {
    // every injection of the smaller side into the larger one
    fn go(
        w: &[Vec<i64>],
        row: usize,
        used: &mut [bool],
        free_rows: usize,
        better: fn(i64, i64) -> bool,
    ) -> Option<i64> {
        if row == w.len() {
            return Some(0);
        }
        let mut best: Option<i64> = None;
        let mut keep = |v: Option<i64>| {
            if let Some(v) = v {
                if best.is_none_or(|b| better(v, b)) {
                    best = Some(v);
                }
            }
        };
        if free_rows > 0 {
            keep(go(w, row + 1, used, free_rows - 1, better));
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                keep(go(w, row + 1, used, free_rows, better).map(|v| v + w[row][c]));
                used[c] = false;
            }
        }
        best
    }
    let cols = w[0].len();
    let free_rows = w.len().saturating_sub(cols);
    go(w, 0, &mut vec![false; cols], free_rows, better).unwrap()
}

fn matrix() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (
        1usize..=8,
        1usize..=8,
        prop_oneof![Just(3i64), Just(50), Just(10_000)],
    )
        .prop_flat_map(|(n, m, hi)| prop::collection::vec(prop::collection::vec(0..hi, m), n))
}

fn check_shape(rows: &[Option<usize>], w: &[Vec<i64>]) -> Result<(), TestCaseError> {
    let cols: Vec<usize> = rows.iter().flatten().copied().collect();
    let mut sorted = cols.clone();
    sorted.sort();
    sorted.dedup();
    prop_assert_eq!(sorted.len(), cols.len(), "column used twice");
    prop_assert_eq!(cols.len(), w.len().min(w[0].len()));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn max_weight_matches_brute_force(w in matrix()) {
        let rows = max_weight_assignment(&w);
        check_shape(&rows, &w)?;
        prop_assert_eq!(assignment_weight(&w, &rows), permutations_best(&w, |a, b| a > b));
    }

    #[test]
    fn min_cost_matches_brute_force(w in matrix()) {
        let rows = min_cost_assignment(&w);
        check_shape(&rows, &w)?;
        prop_assert_eq!(assignment_weight(&w, &rows), permutations_best(&w, |a, b| a < b));
    }
}

#[test]
fn registry_is_stable_across_reruns() {
    let scene = synth(Preset::Manhattan, 2, 0.5, 1.0);
    let tracks = scene.tracks(15.0).unwrap();
    let a = match_elements(&scene.annotations, &tracks);
    let b = match_elements(&scene.annotations, &tracks);
    assert_eq!(a, b);
    assert!(!a.is_empty());
}

#[test]
fn exact_tracks_get_their_ground_truth_element() {
    let scene = synth(Preset::Cuboid, 1, 0.0, 0.0);
    let p = oracle_problem(&scene, 15.0);
    let oracle = scene.oracle();
    let cameras = scene.camera_map();
    let mut checked = 0;
    for t in &p.tracks {
        let Some(rid) = p.assignment.get(t.track_id) else {
            continue;
        };
        let (frame, pixel) = t.points.iter().next().unwrap();
        let (_, gt) = oracle
            .cast(&cameras[frame], pixel)
            .expect("tracked point lies on a surface");
        assert_eq!(p.gt_of[&rid], gt, "track {}", t.track_id);
        checked += 1;
    }
    assert!(
        checked > p.tracks.len() / 2,
        "{checked} of {}",
        p.tracks.len()
    );
}

#[test]
fn every_element_matches_one_ground_truth_element() {
    for preset in [Preset::Cuboid, Preset::Manhattan, Preset::Generic] {
        let scene = synth(preset, 0, 0.0, 0.0);
        let p = oracle_problem(&scene, 15.0);
        for rid in p.registry.ids() {
            let gts: std::collections::BTreeSet<ElementId> = p
                .registry
                .occurrences(rid)
                .iter()
                .map(|k| scene.local_to_gt[k])
                .collect();
            assert_eq!(gts.len(), 1, "{preset:?}: element {} covers {gts:?}", rid.0);
        }
    }
}

#[test]
fn edge_points_lie_within_a_pixel_of_both_elements() {
    let scene = synth(Preset::Generic, 2, 0.0, 0.0);
    let mut total = 0;
    for fa in &scene.annotations {
        let ids: BTreeMap<u32, ElementId> = fa
            .elements
            .iter()
            .map(|e| (e.local_id, ElementId(e.local_id)))
            .collect();
        let points = extract_edge_points(fa, &ids);
        assert_eq!(points, extract_edge_points(fa, &ids));
        // measured on the polygons: near the image border a thin element may cover no pixel centre
        let distance = |id: ElementId, p: &_| {
            let amodal = &fa.element(id.0).unwrap().amodal;
            region::distance_to(amodal, &region::segments(amodal), p)
        };
        for e in &points {
            assert_ne!(e.element_a, e.element_b);
            let (da, db) = (
                distance(e.element_a, &e.pixel),
                distance(e.element_b, &e.pixel),
            );
            assert!(
                da <= 1.0 && db <= 1.0,
                "frame {} point {:?}: {da} {db}",
                fa.frame_index,
                e.pixel
            );
        }
        total += points.len();
    }
    assert!(total > 0);
}

#[test]
fn samples_fall_inside_visible_parts() {
    let scene = synth(Preset::Manhattan, 0, 0.0, 0.0);
    for fa in &scene.annotations {
        for s in sample_points(
            fa,
            &SamplerConfig {
                target_spacing: 12.0,
                seed: 9,
            },
        )
        .unwrap()
        {
            let el = fa.element(s.local_id).unwrap();
            assert!(region::contains(&el.visible, &s.pixel), "{:?}", s);
        }
    }
}
