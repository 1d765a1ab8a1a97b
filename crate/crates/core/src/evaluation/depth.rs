use std::path::Path;

use super::EvaluationError;

/// Ground-truth depth raster in meters; non-positive or non-finite values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum DepthFormat {
    /// 16-bit grayscale PNG in millimeters, 0 = invalid.
    PngMm,
    /// Raw row-major little-endian `f32` meters.
    F32,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::PngMm => "png",
            DepthFormat::F32 => "f32",
        }
    }
}

impl DepthMap {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.data[y * self.width + x];
        (v.is_finite() && v > 0.0).then_some(v as f64)
    }
}

pub fn read_depth(
    path: &Path,
    format: DepthFormat,
    width: usize,
    height: usize,
) -> Result<DepthMap, EvaluationError> {
    let map = match format {
        DepthFormat::F32 => {
            let bytes = std::fs::read(path)?;
            if bytes.len() != width * height * 4 {
                return Err(EvaluationError::Depth(format!(
                    "{}: expected {} bytes for {width}x{height}, found {}",
                    path.display(),
                    width * height * 4,
                    bytes.len()
                )));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            DepthMap {
                width,
                height,
                data,
            }
        }
        DepthFormat::PngMm => {
            let img = image::open(path)
                .map_err(|e| EvaluationError::Depth(format!("{}: {e}", path.display())))?;
            let img = img.into_luma16();
            let data = img.pixels().map(|p| p.0[0] as f32 / 1000.0).collect();
            DepthMap {
                width: img.width() as usize,
                height: img.height() as usize,
                data,
            }
        }
    };
    if (map.width, map.height) != (width, height) {
        return Err(EvaluationError::Depth(format!(
            "{}: size {}x{} does not match frame size {width}x{height}",
            path.display(),
            map.width,
            map.height
        )));
    }
    Ok(map)
}

pub fn write_depth(
    path: &Path,
    format: DepthFormat,
    map: &DepthMap,
) -> Result<(), EvaluationError> {
    match format {
        DepthFormat::F32 => {
            let bytes: Vec<u8> = map.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            std::fs::write(path, bytes)?;
        }
        DepthFormat::PngMm => {
            let px: Vec<u16> = map
                .data
                .iter()
                .map(|v| {
                    if v.is_finite() && *v > 0.0 {
                        (*v as f64 * 1000.0).round().min(65535.0) as u16
                    } else {
                        0
                    }
                })
                .collect();
            let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
                map.width as u32,
                map.height as u32,
                px,
            )
            .expect("buffer matches dimensions");
            img.save(path)
                .map_err(|e| EvaluationError::Depth(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}
