use nalgebra::{Matrix3, Vector3};

use super::Camera;
use crate::imaging::{Image, Mask};
use crate::mesh::Mesh;

/// Per-pixel outputs of one rasterization pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffers {
    pub camera: Camera,
    pub width: usize,
    pub height: usize,
    /// Untextured headlight shading, for previews.
    pub color: Image,
    /// Camera-space face normals encoded as `n * 0.5 + 0.5`; 0.5 (the zero vector) where empty.
    pub normal: Image,
    /// Distance along the view axis; `+inf` where empty.
    pub depth: Vec<f64>,
    pub mask: Mask,
    pub face_id: Vec<i64>,
    /// Perspective-correct barycentrics of the visible face.
    pub bary: Vec<[f64; 3]>,
}

impl FrameBuffers {
    fn empty(camera: &Camera) -> Self {
        let (w, h) = (camera.width, camera.height);
        Self {
            camera: camera.clone(),
            width: w,
            height: h,
            color: Image::new(w, h, 3),
            normal: Image::filled(w, h, 3, 0.5),
            depth: vec![f64::INFINITY; w * h],
            mask: Mask::new(w, h),
            face_id: vec![-1; w * h],
            bary: vec![[0.0; 3]; w * h],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn covered(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.pixel_count()).filter(|&p| self.face_id[p] >= 0)
    }

    pub fn coverage(&self) -> f64 {
        self.mask.count() as f64 / self.pixel_count() as f64
    }
}

pub fn encode_normal(n: &Vector3<f64>) -> [f64; 3] {
    [n.x * 0.5 + 0.5, n.y * 0.5 + 0.5, n.z * 0.5 + 0.5]
}

pub fn decode_normal(e: &[f64]) -> Vector3<f64> {
    Vector3::new(e[0] * 2.0 - 1.0, e[1] * 2.0 - 1.0, e[2] * 2.0 - 1.0)
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Camera-space vertices of the mesh.
pub(crate) fn to_camera_space(mesh: &Mesh, rot: &Matrix3<f64>, eye: &Vector3<f64>) -> Vec<Vector3<f64>> {
    mesh.vertices().iter().map(|p| rot * (p - eye)).collect()
}

/// Z-buffered rasterization with flat normals.
///
/// Faces are visited in index order and a fragment replaces the stored one only when strictly
/// nearer, so ties go to the lower face index. Faces touching the near plane are skipped.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> FrameBuffers {
    let mut fb = FrameBuffers::empty(camera);
    let (w, h) = (camera.width, camera.height);
    let rot = camera.rotation();
    let q = to_camera_space(mesh, &rot, &camera.eye());

    for (fi, f) in mesh.faces().iter().enumerate() {
        let mut s = [(0.0, 0.0); 3];
        let mut d = [0.0; 3];
        let mut visible = true;
        for k in 0..3 {
            match camera.project_camera_space(&q[f[k]]) {
                Some((px, py, depth)) => {
                    s[k] = (px, py);
                    d[k] = depth;
                }
                None => visible = false,
            }
        }
        if !visible {
            continue;
        }
        let area = edge(s[0], s[1], s[2]);
        if area.abs() < 1e-14 {
            continue;
        }
        let min_x = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0) as i64;
        let x1 = ((max_x - 0.5).floor() as i64).min(w as i64 - 1);
        let y0 = (min_y - 0.5).ceil().max(0.0) as i64;
        let y1 = ((max_y - 0.5).floor() as i64).min(h as i64 - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let b = [
                    edge(s[1], s[2], p) / area,
                    edge(s[2], s[0], p) / area,
                    edge(s[0], s[1], p) / area,
                ];
                if b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0 {
                    continue;
                }
                let inv = [b[0] / d[0], b[1] / d[1], b[2] / d[2]];
                let sum = inv[0] + inv[1] + inv[2];
                let depth = 1.0 / sum;
                let pix = y as usize * w + x as usize;
                if depth < fb.depth[pix] {
                    fb.depth[pix] = depth;
                    fb.face_id[pix] = fi as i64;
                    fb.bary[pix] = [inv[0] / sum, inv[1] / sum, inv[2] / sum];
                }
            }
        }
    }

    let face_normals: Vec<Vector3<f64>> = (0..mesh.face_count()).map(|f| rot * mesh.face_normal(f)).collect();
    for p in 0..w * h {
        let fid = fb.face_id[p];
        if fid < 0 {
            continue;
        }
        fb.mask.data[p] = true;
        let n = face_normals[fid as usize];
        fb.normal.data[3 * p..3 * p + 3].copy_from_slice(&encode_normal(&n));
        let shade = super::Shading::default().intensity(n.z);
        fb.color.data[3 * p..3 * p + 3].fill(shade);
    }
    fb
}
