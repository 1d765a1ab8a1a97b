use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrackingError;
use crate::annotations::FrameAnnotation;
use crate::geometry::Vec2;
use crate::region;

/// Longest usable scrambled Sobol sequence.
const MAX_SOBOL_INDEX: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Desired mean spacing between neighboring samples, pixels.
    pub target_spacing: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            target_spacing: 30.0,
            seed: 0,
        }
    }
}

/// A sampled point on an element's visible part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub pixel: Vec2,
    pub frame_index: usize,
    pub local_id: u32,
}

fn frame_seed(seed: u64, frame: usize) -> u32 {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.next_u32()
}

/// Owen-scrambled 2D Sobol points over the image, kept when they land on a
/// visible part. The count is `visible_area / spacing^2`.
pub fn sample_points(
    fa: &FrameAnnotation,
    cfg: &SamplerConfig,
) -> Result<Vec<Sample>, TrackingError> {
    assert!(cfg.target_spacing > 0.0, "target_spacing must be positive");
    let (w, h) = (fa.width as f64, fa.height as f64);
    let image = region::rect(0.0, 0.0, w, h);
    let visible: Vec<(u32, region::Region)> = {
        let mut v: Vec<_> = fa
            .elements
            .iter()
            .map(|e| (e.local_id, region::intersection(&e.visible, &image)))
            .filter(|(_, r)| !region::is_empty(r))
            .collect();
        v.sort_by_key(|(id, _)| *id);
        v
    };
    let area = region::area(&region::union_all(visible.iter().map(|(_, r)| r)));
    if area <= 0.0 {
        return Err(TrackingError::EmptyVisible {
            frame: fa.frame_index,
        });
    }
    let count = (area / (cfg.target_spacing * cfg.target_spacing)).round() as usize;
    let seed = frame_seed(cfg.seed, fa.frame_index);
    let mut out = Vec::with_capacity(count);
    for i in 0..MAX_SOBOL_INDEX {
        if out.len() >= count {
            break;
        }
        let p = Vec2::new(
            sobol_burley::sample(i, 0, seed) as f64 * w,
            sobol_burley::sample(i, 1, seed) as f64 * h,
        );
        if let Some((id, _)) = visible.iter().find(|(_, r)| region::contains(r, &p)) {
            out.push(Sample {
                pixel: p,
                frame_index: fa.frame_index,
                local_id: *id,
            });
        }
    }
    Ok(out)
}
