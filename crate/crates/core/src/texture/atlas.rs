use std::fs;
use std::path::Path;

use super::{TextureError, TextureResult};
use crate::imaging::{self, Image};
use crate::mesh::{CornerUvs, Mesh};

/// Empty texels are 0, painted texels are 1 in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillState {
    Empty,
    Painted,
}

/// Gutter between a generated patch and its grid cell border, in texels.
pub const PATCH_INSET: usize = 2;
/// Smallest patch leg that still gives each face a usable island.
const MIN_PATCH_LEG: usize = 4;
pub const MIN_RESOLUTION: usize = 64;

/// Up to four texels and weights of one bilinear lookup, plus the weights' derivatives with
/// respect to `u` and `v`.
#[derive(Debug, Clone, Copy)]
pub struct BilinearTaps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
    pub d_du: [f64; 4],
    pub d_dv: [f64; 4],
    /// Fractional offsets from the first texel.
    pub frac: [f64; 2],
}

impl BilinearTaps {
    /// Texel with the largest weight; the first of equals wins.
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for k in 1..4 {
            if self.weight[k] > self.weight[best] {
                best = k;
            }
        }
        self.index[best]
    }
}

/// Per-corner UVs plus an `R x R` RGB texel grid with blending state.
///
/// Texel `(i, j)` (column `i`, row `j`, row 0 at `v = 1`) covers the UV square whose centre is
/// `((i + 0.5) / R, 1 - (j + 0.5) / R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureAtlas {
    resolution: usize,
    uvs: CornerUvs,
    pub(crate) texels: Vec<[f64; 3]>,
    pub(crate) fill: Vec<FillState>,
    pub(crate) weight: Vec<f64>,
    /// Face that owns each texel, -1 for gutter texels.
    owner: Vec<i32>,
    /// Barycentrics, on the owning face, of the surface point each texel represents.
    texel_bary: Vec<[f64; 3]>,
}

/// Builds an atlas for `mesh`: authored UVs are adopted verbatim, otherwise every face gets
/// its own right-triangle patch in a uniform grid.
pub fn generate_atlas(mesh: &Mesh, resolution: usize, authored: Option<&CornerUvs>) -> TextureResult<TextureAtlas> {
    let m = mesh.face_count();
    let k = (m as f64).sqrt().ceil() as usize;
    let required = MIN_RESOLUTION.max(k * (MIN_PATCH_LEG + 2 * PATCH_INSET));
    if resolution < MIN_RESOLUTION {
        return Err(TextureError::ResolutionTooSmall {
            got: resolution,
            required,
        });
    }
    let uvs = match authored {
        Some(uvs) => {
            if uvs.len() != m {
                return Err(TextureError::Uv(format!("{} UV triangles for {m} faces", uvs.len())));
            }
            uvs.clone()
        }
        None => {
            if resolution < required {
                return Err(TextureError::ResolutionTooSmall {
                    got: resolution,
                    required,
                });
            }
            grid_uvs(m, resolution)
        }
    };
    TextureAtlas::from_uvs(uvs, resolution)
}

fn grid_uvs(m: usize, r: usize) -> CornerUvs {
    let k = (m as f64).sqrt().ceil() as usize;
    let cell = r / k;
    let g = PATCH_INSET as f64;
    let rf = r as f64;
    // Texel-space corner to UV.
    let uv = |x: f64, y: f64| [x / rf, 1.0 - y / rf];
    (0..m)
        .map(|f| {
            let (cx, cy) = ((f % k * cell) as f64, (f / k * cell) as f64);
            let far = cell as f64 - g;
            // Counter-clockwise in UV space (v points up).
            [uv(cx + g, cy + far), uv(cx + far, cy + far), uv(cx + g, cy + g)]
        })
        .collect()
}

impl TextureAtlas {
    /// Atlas over the given UVs with every texel empty and black.
    pub fn from_uvs(uvs: CornerUvs, resolution: usize) -> TextureResult<Self> {
        for (f, tri) in uvs.iter().enumerate() {
            if tri.iter().flatten().any(|c| !c.is_finite()) {
                return Err(TextureError::Uv(format!("face {f} has a non-finite UV")));
            }
        }
        let n = resolution * resolution;
        let mut atlas = Self {
            resolution,
            uvs,
            texels: vec![[0.0; 3]; n],
            fill: vec![FillState::Empty; n],
            weight: vec![0.0; n],
            owner: vec![-1; n],
            texel_bary: vec![[0.0; 3]; n],
        };
        atlas.claim_texels();
        Ok(atlas)
    }

    /// Assigns each texel within reach of a bilinear lookup on a face to that face. With
    /// overlapping islands the lower face index keeps the texel.
    fn claim_texels(&mut self) {
        let r = self.resolution;
        let reach = std::f64::consts::SQRT_2;
        for (f, tri) in self.uvs.iter().enumerate() {
            let pts = tri.map(|[u, v]| [u * r as f64, (1.0 - v) * r as f64]);
            let lo_x = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - reach;
            let hi_x = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) + reach;
            let lo_y = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - reach;
            let hi_y = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) + reach;
            let i0 = (lo_x - 0.5).ceil().max(0.0) as usize;
            let j0 = (lo_y - 0.5).ceil().max(0.0) as usize;
            let i1 = ((hi_x - 0.5).floor()).min(r as f64 - 1.0);
            let j1 = ((hi_y - 0.5).floor()).min(r as f64 - 1.0);
            if i1 < 0.0 || j1 < 0.0 {
                continue;
            }
            for j in j0..=j1 as usize {
                for i in i0..=i1 as usize {
                    let t = j * r + i;
                    if self.owner[t] >= 0 {
                        continue;
                    }
                    let p = [i as f64 + 0.5, j as f64 + 0.5];
                    let (bary, dist) = closest_point_barycentric(&pts, p);
                    if dist < reach {
                        self.owner[t] = f as i32;
                        self.texel_bary[t] = bary;
                    }
                }
            }
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bound_face_count(&self) -> usize {
        self.uvs.len()
    }

    pub fn uvs(&self) -> &CornerUvs {
        &self.uvs
    }

    pub fn texels(&self) -> &[[f64; 3]] {
        &self.texels
    }

    pub fn texels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.texels
    }

    pub fn fill(&self) -> &[FillState] {
        &self.fill
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn owner(&self, texel: usize) -> Option<usize> {
        (self.owner[texel] >= 0).then_some(self.owner[texel] as usize)
    }

    pub fn texel_barycentric(&self, texel: usize) -> [f64; 3] {
        self.texel_bary[texel]
    }

    /// Texels owned by a face.
    pub fn owned_texels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.owner.len()).filter(|&t| self.owner[t] >= 0)
    }

    pub fn check_binding(&self, mesh: &Mesh) -> TextureResult<()> {
        if self.bound_face_count() != mesh.face_count() {
            return Err(TextureError::Binding {
                atlas: self.bound_face_count(),
                mesh: mesh.face_count(),
            });
        }
        Ok(())
    }

    /// UV of a point given by barycentrics on a face.
    pub fn interpolate_uv(&self, face: usize, bary: &[f64; 3]) -> [f64; 2] {
        let t = &self.uvs[face];
        [
            bary[0] * t[0][0] + bary[1] * t[1][0] + bary[2] * t[2][0],
            bary[0] * t[0][1] + bary[1] * t[1][1] + bary[2] * t[2][1],
        ]
    }

    /// Clamp-to-edge bilinear taps at `uv`.
    pub fn taps(&self, uv: [f64; 2]) -> BilinearTaps {
        let r = self.resolution as f64;
        let x = uv[0] * r - 0.5;
        let y = (1.0 - uv[1]) * r - 0.5;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let last = self.resolution as i64 - 1;
        let cx = |i: f64| (i as i64).clamp(0, last) as usize;
        let (ix0, ix1, iy0, iy1) = (cx(x0), cx(x0 + 1.0), cx(y0), cx(y0 + 1.0));
        let row = |j: usize| j * self.resolution;
        let dx = [-(1.0 - fy), 1.0 - fy, -fy, fy];
        let dy = [-(1.0 - fx), -fx, 1.0 - fx, fx];
        BilinearTaps {
            index: [row(iy0) + ix0, row(iy0) + ix1, row(iy1) + ix0, row(iy1) + ix1],
            weight: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
            d_du: dx.map(|d| d * r),
            d_dv: dy.map(|d| -d * r),
            frac: [fx, fy],
        }
    }

    /// Bilinear lookup in nested-lerp form, which reproduces constant regions exactly.
    pub fn sample(&self, uv: [f64; 2]) -> [f64; 3] {
        let taps = self.taps(uv);
        let [fx, fy] = taps.frac;
        let [t00, t10, t01, t11] = taps.index.map(|i| self.texels[i]);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = t00[c] + fx * (t10[c] - t00[c]);
            let bottom = t01[c] + fx * (t11[c] - t01[c]);
            out[c] = top + fy * (bottom - top);
        }
        out
    }

    /// Fraction of face-owned texels that have been painted.
    pub fn coverage_fraction(&self) -> f64 {
        let (mut owned, mut painted) = (0usize, 0usize);
        for t in self.owned_texels() {
            owned += 1;
            if self.fill[t] == FillState::Painted {
                painted += 1;
            }
        }
        if owned == 0 {
            0.0
        } else {
            painted as f64 / owned as f64
        }
    }

    /// Fills every texel with one colour and marks it painted with unit weight.
    pub fn fill_constant(&mut self, color: [f64; 3]) {
        self.texels.fill(color.map(|c| c.clamp(0.0, 1.0)));
        self.fill.fill(FillState::Painted);
        self.weight.fill(1.0);
    }

    /// Clamps texels to `[0, 1]`; returns the index of the first non-finite texel, if any.
    pub fn clamp_texels(&mut self) -> Option<usize> {
        let mut bad = None;
        for (i, t) in self.texels.iter_mut().enumerate() {
            for c in t.iter_mut() {
                if !c.is_finite() {
                    bad.get_or_insert(i);
                } else {
                    *c = c.clamp(0.0, 1.0);
                }
            }
        }
        bad
    }

    pub fn texel_image(&self) -> Image {
        let r = self.resolution;
        Image::from_data(r, r, 3, self.texels.iter().flatten().copied().collect())
    }

    /// Replaces the texels with an `R x R` RGB image. Fill state and weights are untouched.
    pub fn set_texels_from_image(&mut self, img: &Image) -> TextureResult<()> {
        let r = self.resolution;
        if img.width != r || img.height != r || img.channels != 3 {
            return Err(TextureError::ShapeMismatch {
                what: "texel image",
                expected: format!("{r}x{r}x3"),
                got: format!("{}x{}x{}", img.width, img.height, img.channels),
            });
        }
        for (t, px) in self.texels.iter_mut().zip(img.data.chunks_exact(3)) {
            t.copy_from_slice(px);
        }
        Ok(())
    }

    /// Writes `<stem>.png` (texels) and `<stem>.raw` (texels, weights, fill) next to each other.
    /// The raw sidecar restores the atlas bit for bit.
    pub fn save_checkpoint(&self, dir: &Path, stem: &str) -> TextureResult<()> {
        fs::create_dir_all(dir)?;
        self.texel_image().save_png(&dir.join(format!("{stem}.png")))?;
        let r = self.resolution;
        let mut data = Vec::with_capacity(r * r * 5);
        for t in 0..r * r {
            data.extend_from_slice(&self.texels[t]);
            data.push(self.weight[t]);
            data.push(match self.fill[t] {
                FillState::Empty => 0.0,
                FillState::Painted => 1.0,
            });
        }
        imaging::write_raw(&dir.join(format!("{stem}.raw")), &[r, r, 5], &data)?;
        Ok(())
    }

    /// Restores an atlas saved with [`save_checkpoint`](Self::save_checkpoint) over the given UVs.
    pub fn load_checkpoint(uvs: CornerUvs, dir: &Path, stem: &str) -> TextureResult<Self> {
        let (shape, data) = imaging::read_raw(&dir.join(format!("{stem}.raw")))?;
        if shape.len() != 3 || shape[0] != shape[1] || shape[2] != 5 {
            return Err(TextureError::ShapeMismatch {
                what: "atlas sidecar",
                expected: "R x R x 5".into(),
                got: format!("{shape:?}"),
            });
        }
        let mut atlas = Self::from_uvs(uvs, shape[0])?;
        for (t, chunk) in data.chunks_exact(5).enumerate() {
            atlas.texels[t] = [chunk[0], chunk[1], chunk[2]];
            atlas.weight[t] = chunk[3];
            atlas.fill[t] = if chunk[4] != 0.0 {
                FillState::Painted
            } else {
                FillState::Empty
            };
        }
        Ok(atlas)
    }
}

/// Barycentrics of the point of triangle `t` closest to `p`, and the distance to it.
pub(crate) fn closest_point_barycentric(t: &[[f64; 2]; 3], p: [f64; 2]) -> ([f64; 3], f64) {
    let sub = |a: [f64; 2], b: [f64; 2]| [a[0] - b[0], a[1] - b[1]];
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let area = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    if area.abs() > 0.0 {
        let b1 = cross(sub(p, t[0]), sub(t[2], t[0])) / area;
        let b2 = cross(sub(t[1], t[0]), sub(p, t[0])) / area;
        let b0 = 1.0 - b1 - b2;
        if b0 >= 0.0 && b1 >= 0.0 && b2 >= 0.0 {
            return ([b0, b1, b2], 0.0);
        }
    }
    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        let ab = sub(b, a);
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let s = if len2 > 0.0 {
            (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        if d < best.1 {
            let mut bary = [0.0; 3];
            bary[k] = 1.0 - s;
            bary[(k + 1) % 3] = s;
            best = (bary, d);
        }
    }
    best
}
