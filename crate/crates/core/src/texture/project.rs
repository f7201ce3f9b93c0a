use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::atlas::{FillState, TextureAtlas};
use super::{TextureError, TextureResult};
use crate::imaging::{Image, Mask};
use crate::mesh::Mesh;
use crate::render::FrameBuffers;

/// Blending parameters for back-projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionParams {
    /// Exponent on the cosine between the face normal and the view axis.
    pub exponent: f64,
    /// Depth tolerance as a fraction of the mesh's bounding radius.
    pub depth_tolerance: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            exponent: 2.0,
            depth_tolerance: 1e-3,
        }
    }
}

/// World position of the surface point a texel stands for.
pub fn texel_position(atlas: &TextureAtlas, mesh: &Mesh, texel: usize) -> Option<Vector3<f64>> {
    let f = atlas.owner(texel)?;
    let b = atlas.texel_barycentric(texel);
    let [p0, p1, p2] = mesh.face_positions(f);
    Some(p0 * b[0] + p1 * b[1] + p2 * b[2])
}

fn check_image(img: &Image, fb: &FrameBuffers) -> TextureResult<()> {
    if img.width != fb.width || img.height != fb.height || img.channels != 3 {
        return Err(TextureError::ShapeMismatch {
            what: "projected image",
            expected: format!("{}x{}x3", fb.width, fb.height),
            got: format!("{}x{}x{}", img.width, img.height, img.channels),
        });
    }
    Ok(())
}

/// Colour and blend weight a texel receives from one view, `None` when it is not seen.
fn texel_sample(
    atlas: &TextureAtlas,
    mesh: &Mesh,
    fb: &FrameBuffers,
    image: &Image,
    params: &ProjectionParams,
    tol: f64,
    texel: usize,
) -> Option<([f64; 3], f64)> {
    let cam = &fb.camera;
    let rot = cam.rotation();
    let face = atlas.owner(texel)?;
    let cos = mesh.face_normal(face).dot(&cam.view_direction()).abs();
    let w = cos.powf(params.exponent);
    if !(w > 0.0) {
        return None;
    }
    let q = rot * (texel_position(atlas, mesh, texel)? - cam.eye());
    let (px, py, depth) = cam.project_camera_space(&q)?;
    if !(px >= 0.0 && py >= 0.0 && px < fb.width as f64 && py < fb.height as f64) {
        return None;
    }
    let ray = cam.ray(px, py);
    let (x, y) = (px - 0.5, py - 0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let mut color = [0.0; 3];
    let mut total = 0.0;
    for (dx, dy, bw) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (ix, iy) = (x0 as i64 + dx, y0 as i64 + dy);
        if ix < 0 || iy < 0 || ix >= fb.width as i64 || iy >= fb.height as i64 || bw <= 0.0 {
            continue;
        }
        let pix = iy as usize * fb.width + ix as usize;
        let g = fb.face_id[pix];
        if g < 0 {
            continue;
        }
        // Depth of the visible face's plane along this texel's ray.
        let [a, b, c] = mesh.face_positions(g as usize).map(|p| rot * (p - cam.eye()));
        let n = (b - a).cross(&(c - a));
        let denom = n.dot(&ray);
        let surface = if denom.abs() > 1e-12 * n.norm() {
            n.dot(&a) / denom
        } else {
            fb.depth[pix]
        };
        if depth - surface > tol {
            continue;
        }
        let px_color = image.pixel(ix as usize, iy as usize);
        for k in 0..3 {
            color[k] += bw * px_color[k];
        }
        total += bw;
    }
    if total <= 0.0 {
        return None;
    }
    Some((color.map(|c| c / total), w))
}

/// Blends a view's image into every texel whose surface point is visible from the buffers'
/// camera. Returns the number of texels updated.
pub fn project_view(
    atlas: &mut TextureAtlas,
    mesh: &Mesh,
    image: &Image,
    fb: &FrameBuffers,
    params: &ProjectionParams,
) -> TextureResult<usize> {
    atlas.check_binding(mesh)?;
    check_image(image, fb)?;
    let tol = params.depth_tolerance * mesh.bounding_radius();
    let shared: &TextureAtlas = atlas;
    let updates: Vec<(usize, [f64; 3], f64)> = (0..shared.texels().len())
        .into_par_iter()
        .filter_map(|t| texel_sample(shared, mesh, fb, image, params, tol, t).map(|(c, w)| (t, c, w)))
        .collect();
    for &(t, c, w) in &updates {
        let old_w = atlas.weight[t];
        let total = old_w + w;
        let old = atlas.texels[t];
        for k in 0..3 {
            atlas.texels[t][k] = ((old_w * old[k] + w * c[k]) / total).clamp(0.0, 1.0);
        }
        atlas.weight[t] = total;
        atlas.fill[t] = FillState::Painted;
    }
    Ok(updates.len())
}

/// Splits the covered pixels by the fill state of the dominant texel under each:
/// `(generate, keep)`.
pub fn view_masks(atlas: &TextureAtlas, mesh: &Mesh, fb: &FrameBuffers) -> TextureResult<(Mask, Mask)> {
    atlas.check_binding(mesh)?;
    let mut generate = Mask::new(fb.width, fb.height);
    let mut keep = Mask::new(fb.width, fb.height);
    for p in fb.covered() {
        let uv = atlas.interpolate_uv(fb.face_id[p] as usize, &fb.bary[p]);
        match atlas.fill()[atlas.taps(uv).dominant()] {
            FillState::Painted => keep.data[p] = true,
            FillState::Empty => generate.data[p] = true,
        }
    }
    Ok((generate, keep))
}
