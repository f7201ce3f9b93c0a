use nalgebra::{Matrix3, Vector3};
use sprs::{CsMat, TriMat};

use super::{Mesh, MeshError, MeshResult};

/// Piecewise-linear gradient operator, one 3x3 block per face.
///
/// Column `i` of a block is the gradient of the hat function of the face's `i`-th corner,
/// so `block * [f0, f1, f2]^T` is the gradient of the linear interpolant. Stacked over
/// faces this is the sparse `3m x n` operator `G`.
#[derive(Debug, Clone)]
pub struct TriangleGradientOperator {
    blocks: Vec<Matrix3<f64>>,
    faces: Vec<[usize; 3]>,
    vertex_count: usize,
}

impl TriangleGradientOperator {
    pub fn block(&self, face: usize) -> &Matrix3<f64> {
        &self.blocks[face]
    }

    pub fn blocks(&self) -> &[Matrix3<f64>] {
        &self.blocks
    }

    pub fn face_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Per-face gradients of a per-vertex scalar field.
    pub fn apply(&self, values: &[f64]) -> Vec<Vector3<f64>> {
        assert_eq!(values.len(), self.vertex_count);
        self.blocks
            .iter()
            .zip(&self.faces)
            .map(|(g, f)| g * Vector3::new(values[f[0]], values[f[1]], values[f[2]]))
            .collect()
    }

    /// `G^T y` for per-face 3-vectors `y`.
    pub fn apply_transpose(&self, per_face: &[Vector3<f64>]) -> Vec<f64> {
        assert_eq!(per_face.len(), self.blocks.len());
        let mut out = vec![0.0; self.vertex_count];
        for ((g, f), y) in self.blocks.iter().zip(&self.faces).zip(per_face) {
            let local = g.transpose() * y;
            for k in 0..3 {
                out[f[k]] += local[k];
            }
        }
        out
    }

    /// The stacked `3m x n` matrix in CSR form. Row `3f + c` holds coordinate `c` of face `f`.
    pub fn to_sparse(&self) -> CsMat<f64> {
        let m = self.blocks.len();
        let mut tri = TriMat::with_capacity((3 * m, self.vertex_count), 9 * m);
        for (fi, (g, f)) in self.blocks.iter().zip(&self.faces).enumerate() {
            for c in 0..3 {
                for k in 0..3 {
                    tri.add_triplet(3 * fi + c, f[k], g[(c, k)]);
                }
            }
        }
        tri.to_csr()
    }
}

/// Diagonal per-face area weights.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    areas: Vec<f64>,
}

impl MassMatrix {
    pub fn face_area(&self, face: usize) -> f64 {
        self.areas[face]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    /// The `3m` diagonal, each face area repeated once per gradient row.
    pub fn diagonal(&self) -> Vec<f64> {
        self.areas.iter().flat_map(|&a| [a, a, a]).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }
}

/// `L = G^T A G`, symmetric positive semidefinite with a constant nullspace per component.
#[derive(Debug, Clone)]
pub struct Laplacian {
    matrix: CsMat<f64>,
}

impl Laplacian {
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let mut out = vec![0.0; self.dim()];
        for (row, vec) in self.matrix.outer_iterator().enumerate() {
            out[row] = vec.iter().map(|(col, &v)| v * x[col]).sum();
        }
        out
    }
}

pub fn face_gradient_operator(mesh: &Mesh) -> MeshResult<TriangleGradientOperator> {
    let eps = mesh.area_eps();
    let mut blocks = Vec::with_capacity(mesh.face_count());
    for fi in 0..mesh.face_count() {
        let [p0, p1, p2] = mesh.face_positions(fi);
        let cross = (p1 - p0).cross(&(p2 - p0));
        let double_area = cross.norm();
        if !(0.5 * double_area > eps) {
            return Err(MeshError::DegenerateFace {
                face: fi,
                reason: format!("area {:e} is below the threshold {eps:e}", 0.5 * double_area),
            });
        }
        let normal = cross / double_area;
        // Edge opposite each corner, counter-clockwise.
        let edges = [p2 - p1, p0 - p2, p1 - p0];
        let cols: Vec<Vector3<f64>> = edges.iter().map(|e| normal.cross(e) / double_area).collect();
        blocks.push(Matrix3::from_columns(&cols));
    }
    Ok(TriangleGradientOperator {
        blocks,
        faces: mesh.faces().to_vec(),
        vertex_count: mesh.vertex_count(),
    })
}

/// Builds `(L, A, G)` with `L = G^T A G`. Assembly walks faces in index order, so the
/// resulting matrix is reproducible bit for bit.
pub fn assemble_poisson_system(mesh: &Mesh) -> MeshResult<(Laplacian, MassMatrix, TriangleGradientOperator)> {
    let grad = face_gradient_operator(mesh)?;
    let areas: Vec<f64> = (0..mesh.face_count()).map(|f| mesh.face_area(f)).collect();
    let n = mesh.vertex_count();
    let mut tri = TriMat::with_capacity((n, n), 9 * mesh.face_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let g = grad.block(fi);
        let local = g.transpose() * g * areas[fi];
        for a in 0..3 {
            for b in 0..3 {
                tri.add_triplet(f[a], f[b], local[(a, b)]);
            }
        }
    }
    Ok((Laplacian { matrix: tri.to_csr() }, MassMatrix { areas }, grad))
}
