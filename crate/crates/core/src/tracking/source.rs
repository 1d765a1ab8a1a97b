use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PointTrack, Sample, TrackingError};
use crate::geometry::Vec2;

/// Supplies frame-to-frame motion of sampled points.
///
/// `advance` moves the point currently at `at` in frame `from` to frame `to`
/// (adjacent in the video). `Ok(None)` means the point was lost. `sample` and
/// `sample_index` identify the originating sample, which lets a synthetic
/// source follow the exact surface point.
pub trait TrackSource: Sync {
    /// Position the track starts from in the sample's own frame; `None` drops the sample.
    fn anchor(&self, sample: &Sample, _sample_index: usize) -> Option<Vec2> {
        Some(sample.pixel)
    }

    fn advance(
        &self,
        sample: &Sample,
        sample_index: usize,
        from: usize,
        at: &Vec2,
        to: usize,
    ) -> Result<Option<Vec2>, TrackingError>;
}

fn inside(p: &Vec2, (w, h): (u32, u32)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64
}

/// Extends each sample forward and backward through the video frames.
///
/// `frames` lists the video's frame indices in order. Tracks shorter than two
/// frames are dropped; track ids follow sample order.
pub fn build_tracks(
    samples: &[Sample],
    source: &dyn TrackSource,
    frames: &[usize],
    image_size: (u32, u32),
) -> Result<Vec<PointTrack>, TrackingError> {
    let position: HashMap<usize, usize> = frames.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let mut tracks = Vec::new();
    for (idx, s) in samples.iter().enumerate() {
        let Some(&start) = position.get(&s.frame_index) else {
            continue;
        };
        let Some(seed) = source.anchor(s, idx) else {
            continue;
        };
        let mut points = BTreeMap::new();
        points.insert(s.frame_index, seed);
        for dir in [1isize, -1] {
            let mut k = start;
            let mut at = seed;
            loop {
                let next = k as isize + dir;
                if next < 0 || next as usize >= frames.len() {
                    break;
                }
                let next = next as usize;
                match source.advance(s, idx, frames[k], &at, frames[next])? {
                    Some(p) if inside(&p, image_size) => {
                        points.insert(frames[next], p);
                        at = p;
                        k = next;
                    }
                    _ => break,
                }
            }
        }
        if points.len() >= 2 {
            tracks.push(PointTrack {
                track_id: tracks.len() as u32,
                points,
            });
        }
    }
    Ok(tracks)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackPointRecord {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: u32,
    pub points: Vec<TrackPointRecord>,
}

pub fn parse_tracks(text: &str) -> Result<Vec<PointTrack>, TrackingError> {
    let recs: Vec<TrackRecord> = serde_json::from_str(text)?;
    recs.into_iter()
        .map(|r| {
            let mut points = BTreeMap::new();
            for p in r.points {
                if !(p.x.is_finite() && p.y.is_finite()) {
                    return Err(TrackingError::InvalidTrack {
                        track: r.track_id,
                        reason: "non-finite point".into(),
                    });
                }
                if points.insert(p.frame, Vec2::new(p.x, p.y)).is_some() {
                    return Err(TrackingError::InvalidTrack {
                        track: r.track_id,
                        reason: format!("frame {} repeated", p.frame),
                    });
                }
            }
            Ok(PointTrack {
                track_id: r.track_id,
                points,
            })
        })
        .collect()
}

pub fn load_tracks(path: &Path) -> Result<Vec<PointTrack>, TrackingError> {
    parse_tracks(&std::fs::read_to_string(path)?)
}

pub fn tracks_to_json(tracks: &[PointTrack]) -> String {
    let recs: Vec<TrackRecord> = tracks
        .iter()
        .map(|t| TrackRecord {
            track_id: t.track_id,
            points: t
                .points
                .iter()
                .map(|(f, p)| TrackPointRecord {
                    frame: *f,
                    x: p.x,
                    y: p.y,
                })
                .collect(),
        })
        .collect();
    serde_json::to_string(&recs).expect("track records serialize")
}

const CELL: f64 = 8.0;

/// Precomputed tracks used as sparse flow. A sample snaps to the nearest file
/// track within [`FileTrackSource::radius`] pixels in its own frame; a query
/// point then follows the displacement of its nearest track.
pub struct FileTrackSource {
    tracks: Vec<PointTrack>,
    grid: HashMap<usize, HashMap<(i64, i64), Vec<usize>>>,
    pairs: std::collections::HashSet<(usize, usize)>,
    pub radius: f64,
}

impl FileTrackSource {
    pub fn new(tracks: Vec<PointTrack>) -> Self {
        let mut grid: HashMap<usize, HashMap<(i64, i64), Vec<usize>>> = HashMap::new();
        let mut pairs = std::collections::HashSet::new();
        for (i, t) in tracks.iter().enumerate() {
            for (f, p) in &t.points {
                let cell = ((p.x / CELL).floor() as i64, (p.y / CELL).floor() as i64);
                grid.entry(*f).or_default().entry(cell).or_default().push(i);
            }
            let frames: Vec<usize> = t.points.keys().copied().collect();
            for w in frames.windows(2) {
                pairs.insert((w[0], w[1]));
                pairs.insert((w[1], w[0]));
            }
        }
        Self {
            tracks,
            grid,
            pairs,
            radius: 2.0,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    fn nearest(&self, frame: usize, at: &Vec2) -> Option<usize> {
        let cells = self.grid.get(&frame)?;
        let (cx, cy) = ((at.x / CELL).floor() as i64, (at.y / CELL).floor() as i64);
        let reach = (self.radius / CELL).ceil() as i64;
        let mut best: Option<(usize, f64)> = None;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for &i in cells.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                    let d = (self.tracks[i].points[&frame] - at).norm();
                    if d <= self.radius && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

impl TrackSource for FileTrackSource {
    fn anchor(&self, sample: &Sample, _: usize) -> Option<Vec2> {
        self.nearest(sample.frame_index, &sample.pixel)
            .map(|i| self.tracks[i].points[&sample.frame_index])
    }

    fn advance(
        &self,
        _: &Sample,
        _: usize,
        from: usize,
        at: &Vec2,
        to: usize,
    ) -> Result<Option<Vec2>, TrackingError> {
        if !self.pairs.contains(&(from, to)) {
            return Err(TrackingError::MissingFramePair {
                from: from.min(to),
                to: from.max(to),
            });
        }
        Ok(self.nearest(from, at).and_then(|i| {
            let t = &self.tracks[i];
            t.points.get(&to).map(|q| at + (q - t.points[&from]))
        }))
    }
}
