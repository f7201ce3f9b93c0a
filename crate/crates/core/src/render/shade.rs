use serde::{Deserialize, Serialize};

use super::{FrameBuffers, RenderError, RenderResult};
use crate::imaging::Image;
use crate::mesh::Mesh;
use crate::texture::TextureAtlas;

/// Ambient plus headlight Lambertian shading. The light travels along the view axis, so the
/// diffuse term is the camera-space normal's z component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Shading {
    pub ambient: f64,
    pub diffuse: f64,
    pub background: [f64; 3],
}

impl Default for Shading {
    fn default() -> Self {
        Self {
            ambient: 0.3,
            diffuse: 0.7,
            background: [0.0; 3],
        }
    }
}

impl Shading {
    /// Texture colour only.
    pub fn unlit() -> Self {
        Self {
            ambient: 1.0,
            diffuse: 0.0,
            background: [0.0; 3],
        }
    }

    pub fn intensity(&self, normal_z: f64) -> f64 {
        self.ambient + self.diffuse * normal_z.max(0.0)
    }
}

pub(crate) fn check_binding(mesh: &Mesh, atlas: &TextureAtlas) -> RenderResult<()> {
    if atlas.bound_face_count() != mesh.face_count() {
        return Err(RenderError::AtlasMismatch {
            atlas: atlas.bound_face_count(),
            mesh: mesh.face_count(),
        });
    }
    Ok(())
}

/// Deferred shading of rasterized buffers with a bilinearly sampled texture.
pub fn shade_textured(fb: &FrameBuffers, mesh: &Mesh, atlas: &TextureAtlas, shading: &Shading) -> RenderResult<Image> {
    check_binding(mesh, atlas)?;
    let rot = fb.camera.rotation();
    let mut out = Image::new(fb.width, fb.height, 3);
    for p in 0..fb.pixel_count() {
        let px = &mut out.data[3 * p..3 * p + 3];
        let fid = fb.face_id[p];
        if fid < 0 {
            px.copy_from_slice(&shading.background);
            continue;
        }
        let f = fid as usize;
        let nz = (rot * mesh.face_normal(f)).z;
        let s = shading.intensity(nz);
        let tex = atlas.sample(atlas.interpolate_uv(f, &fb.bary[p]));
        for c in 0..3 {
            px[c] = tex[c] * s;
        }
    }
    Ok(out)
}
