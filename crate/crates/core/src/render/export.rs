use std::fs;
use std::path::Path;

use super::{FrameBuffers, RenderResult};
use crate::imaging::{self, Image};

/// Grayscale depth: nearest covered pixel 1, farthest 0, empty pixels 0.
pub fn depth_to_image(fb: &FrameBuffers) -> Image {
    let finite = fb.depth.iter().copied().filter(|d| d.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let span = hi - lo;
    let data = fb
        .depth
        .iter()
        .map(|&d| {
            if !d.is_finite() {
                0.0
            } else if span > 0.0 {
                // Keep the farthest surface visibly above the background.
                0.2 + 0.8 * (hi - d) / span
            } else {
                1.0
            }
        })
        .collect();
    Image::from_data(fb.width, fb.height, 1, data)
}

/// Writes `<stem>_{color,normal,depth,mask}.png` plus raw dumps of depth and normals.
pub fn save_buffers(fb: &FrameBuffers, dir: &Path, stem: &str) -> RenderResult<()> {
    fs::create_dir_all(dir).map_err(imaging::ImageError::from)?;
    let path = |suffix: &str| dir.join(format!("{stem}_{suffix}"));
    fb.color.save_png(&path("color.png"))?;
    fb.normal.save_png(&path("normal.png"))?;
    depth_to_image(fb).save_png(&path("depth.png"))?;
    fb.mask.save_png(&path("mask.png"))?;
    imaging::write_raw(&path("depth.raw"), &[fb.height, fb.width], &fb.depth)?;
    imaging::write_raw(&path("normal.raw"), &[fb.height, fb.width, 3], &fb.normal.data)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::render::{rasterize, Camera};

    #[test]
    fn writes_all_buffers() {
        let dir = tempfile::tempdir().unwrap();
        let fb = rasterize(
            &primitives::icosphere(1),
            &Camera::new(0.0, 0.3, 3.0, 0.8, 16, 16).unwrap(),
        );
        save_buffers(&fb, dir.path(), "v0").unwrap();
        for s in [
            "color.png",
            "normal.png",
            "depth.png",
            "mask.png",
            "depth.raw",
            "normal.raw",
        ] {
            assert!(dir.path().join(format!("v0_{s}")).exists(), "{s}");
        }
        let (shape, depth) = imaging::read_raw(&dir.path().join("v0_depth.raw")).unwrap();
        assert_eq!(shape, vec![16, 16]);
        assert_eq!(depth.len(), 256);
        let img = depth_to_image(&fb);
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
