use nalgebra::{Matrix3, Vector3};

use super::shade::check_binding;
use super::{FrameBuffers, RenderError, RenderResult, Shading};
use crate::imaging::Image;
use crate::mesh::Mesh;
use crate::texture::TextureAtlas;

/// Loss gradients with respect to rendered buffers. Absent buffers contribute nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelGrads<'a> {
    /// With respect to the shaded colour from [`shade_textured`](super::shade_textured).
    pub color: Option<&'a Image>,
    /// With respect to the encoded normal buffer.
    pub normal: Option<&'a Image>,
    pub depth: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub vertices: Vec<Vector3<f64>>,
    /// Present when colour gradients were supplied.
    pub texels: Option<Vec<[f64; 3]>>,
}

fn check_shape(what: &'static str, img: &Image, fb: &FrameBuffers, channels: usize) -> RenderResult<()> {
    if img.width != fb.width || img.height != fb.height || img.channels != channels {
        return Err(RenderError::ShapeMismatch {
            what,
            expected: format!("{}x{}x{channels}", fb.width, fb.height),
            got: format!("{}x{}x{}", img.width, img.height, img.channels),
        });
    }
    Ok(())
}

/// Exact gradients of the rendered buffers for the visibility recorded in `fb`.
///
/// Each covered pixel is the intersection of its centre ray with the plane of its face, so
/// barycentrics and depth are smooth functions of the three vertices; coverage changes at
/// silhouettes are not differentiated.
pub fn backprop_pixels(
    fb: &FrameBuffers,
    mesh: &Mesh,
    atlas: Option<&TextureAtlas>,
    shading: &Shading,
    grads: &PixelGrads,
) -> RenderResult<RenderGradients> {
    if let Some(g) = grads.color {
        check_shape("color gradient", g, fb, 3)?;
    }
    if let Some(g) = grads.normal {
        check_shape("normal gradient", g, fb, 3)?;
    }
    if let Some(g) = grads.depth {
        if g.len() != fb.pixel_count() {
            return Err(RenderError::ShapeMismatch {
                what: "depth gradient",
                expected: fb.pixel_count().to_string(),
                got: g.len().to_string(),
            });
        }
    }
    let atlas = match (grads.color, atlas) {
        (Some(_), None) => return Err(RenderError::Config("colour gradients need a texture atlas".into())),
        (Some(_), Some(a)) => {
            check_binding(mesh, a)?;
            Some(a)
        }
        (None, _) => None,
    };

    let cam = &fb.camera;
    let rot = cam.rotation();
    let eye = cam.eye();
    let q: Vec<Vector3<f64>> = mesh.vertices().iter().map(|p| rot * (p - eye)).collect();
    let mut g_cam = vec![Vector3::zeros(); mesh.vertex_count()];
    // Gradient with respect to each face's camera-space unit normal.
    let mut g_normal = vec![Vector3::zeros(); mesh.face_count()];
    let mut g_tex = atlas.map(|a| vec![[0.0; 3]; a.texels().len()]);

    for p in fb.covered() {
        let fi = fb.face_id[p] as usize;
        let face = mesh.faces()[fi];
        let bary = fb.bary[p];
        let mut g_bary = [0.0; 3];
        let mut g_depth = 0.0;

        if let Some(g) = grads.normal {
            let gp = &g.data[3 * p..3 * p + 3];
            g_normal[fi] += Vector3::new(gp[0], gp[1], gp[2]) * 0.5;
        }
        if let (Some(g), Some(atlas)) = (grads.color, atlas) {
            let gp = [g.data[3 * p], g.data[3 * p + 1], g.data[3 * p + 2]];
            let nz = (rot * mesh.face_normal(fi)).z;
            let s = shading.intensity(nz);
            let uv = atlas.interpolate_uv(fi, &bary);
            let taps = atlas.taps(uv);
            let texels = atlas.texels();
            let mut tex = [0.0; 3];
            let (mut g_u, mut g_v) = (0.0, 0.0);
            let gt = g_tex.as_mut().expect("allocated with the atlas");
            for k in 0..4 {
                let t = &texels[taps.index[k]];
                let dst = &mut gt[taps.index[k]];
                for c in 0..3 {
                    tex[c] += taps.weight[k] * t[c];
                    dst[c] += taps.weight[k] * s * gp[c];
                    g_u += gp[c] * s * taps.d_du[k] * t[c];
                    g_v += gp[c] * s * taps.d_dv[k] * t[c];
                }
            }
            if nz > 0.0 && shading.diffuse != 0.0 {
                let g_s: f64 = (0..3).map(|c| gp[c] * tex[c]).sum();
                g_normal[fi].z += shading.diffuse * g_s;
            }
            let uvs = &atlas.uvs()[fi];
            for i in 0..3 {
                g_bary[i] += g_u * uvs[i][0] + g_v * uvs[i][1];
            }
        }
        if let Some(g) = grads.depth {
            g_depth += g[p];
        }

        if g_bary == [0.0; 3] && g_depth == 0.0 {
            continue;
        }
        // The hit point solves q0 + l1 (q1 - q0) + l2 (q2 - q0) = t r.
        let (x, y) = ((p % fb.width) as f64 + 0.5, (p / fb.width) as f64 + 0.5);
        let ray = cam.ray(x, y);
        let [q0, q1, q2] = face.map(|v| q[v]);
        let a = Matrix3::from_columns(&[q1 - q0, q2 - q0, -ray]);
        let Some(a_inv) = a.try_inverse() else {
            continue;
        };
        let g_s = Vector3::new(g_bary[1] - g_bary[0], g_bary[2] - g_bary[0], g_depth);
        let y = a_inv.transpose() * g_s;
        for k in 0..3 {
            g_cam[face[k]] -= y * bary[k];
        }
    }

    let rt = rot.transpose();
    let mut g_world: Vec<Vector3<f64>> = g_cam.iter().map(|g| rt * g).collect();
    for (fi, g) in g_normal.iter().enumerate() {
        if *g == Vector3::zeros() {
            continue;
        }
        let g_n = rt * g;
        let [p0, p1, p2] = mesh.face_positions(fi);
        let (e1, e2) = (p1 - p0, p2 - p0);
        let c = e1.cross(&e2);
        let len = c.norm();
        let n = c / len;
        let g_c = (g_n - n * n.dot(&g_n)) / len;
        let g_e1 = e2.cross(&g_c);
        let g_e2 = g_c.cross(&e1);
        let f = mesh.faces()[fi];
        g_world[f[1]] += g_e1;
        g_world[f[2]] += g_e2;
        g_world[f[0]] -= g_e1 + g_e2;
    }
    Ok(RenderGradients {
        vertices: g_world,
        texels: g_tex,
    })
}
