//! Per-triangle Jacobian fields and the Poisson solve that integrates them into vertex
//! positions, plus the adjoint solve that carries vertex gradients back to the Jacobians.
//!
//! Given one target matrix `M_f` per face, the solver returns the positions `X` minimizing
//! `sum_f area_f * |X_f G_f^T - M_f|_F^2`, whose normal equations are `L X = G^T A M` with
//! `L = G^T A G`. `L` is singular (constant nullspace per connected component), so one vertex
//! per component is pinned while factoring, and each component is translated afterwards so
//! its vertex centroid matches the base mesh.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::mesh::{assemble_poisson_system, Laplacian, MassMatrix, Mesh, MeshError, TriangleGradientOperator};
use crate::sparse::{FactorError, LdlFactor};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("gauge-fixed Laplacian could not be factored: {0}")]
    Factor(#[from] FactorError),
    #[error("shape mismatch: expected {expected} {what}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid Jacobian checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type SolverResult<T> = Result<T, SolverError>;

/// One learnable 3x3 matrix per face.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianField {
    matrices: Vec<Matrix3<f64>>,
}

const JACOBIAN_MAGIC: &[u8; 8] = b"JACFLD01";

impl JacobianField {
    pub fn identity(face_count: usize) -> Self {
        Self {
            matrices: vec![Matrix3::identity(); face_count],
        }
    }

    pub fn from_matrices(matrices: Vec<Matrix3<f64>>) -> Self {
        Self { matrices }
    }

    /// The Jacobians realized by a vertex assignment: `J_f = X_f G_f^T`.
    pub fn of_positions(grad: &TriangleGradientOperator, faces: &[[usize; 3]], positions: &[Vector3<f64>]) -> Self {
        let matrices = faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let x = Matrix3::from_columns(&[positions[f[0]], positions[f[1]], positions[f[2]]]);
                x * grad.block(fi).transpose()
            })
            .collect();
        Self { matrices }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[Matrix3<f64>] {
        &self.matrices
    }

    pub fn matrices_mut(&mut self) -> &mut [Matrix3<f64>] {
        &mut self.matrices
    }

    /// Row-major flattening, 9 values per face.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(9 * self.matrices.len());
        for m in &self.matrices {
            for r in 0..3 {
                for c in 0..3 {
                    out.push(m[(r, c)]);
                }
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len() % 9, 0, "flat Jacobian length must be a multiple of 9");
        let matrices = flat.chunks_exact(9).map(Matrix3::from_row_slice).collect();
        Self { matrices }
    }

    /// Checkpoint blob: 8-byte magic, `u64` face count, then `9m` little-endian `f64`
    /// values, row-major per face.
    pub fn to_bytes(&self) -> Vec<u8> {
        let flat = self.to_flat();
        let mut out = Vec::with_capacity(16 + 8 * flat.len());
        out.extend_from_slice(JACOBIAN_MAGIC);
        out.extend_from_slice(&(self.matrices.len() as u64).to_le_bytes());
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> SolverResult<Self> {
        if bytes.len() < 16 || &bytes[..8] != JACOBIAN_MAGIC {
            return Err(SolverError::Checkpoint("bad magic".into()));
        }
        let m = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload = &bytes[16..];
        if payload.len() != m * 72 {
            return Err(SolverError::Checkpoint(format!(
                "header says {m} faces but payload holds {} bytes",
                payload.len()
            )));
        }
        let flat: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self::from_flat(&flat))
    }

    pub fn save(&self, path: &Path) -> SolverResult<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> SolverResult<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Prefactored Poisson system bound to one base mesh.
///
/// Immutable after [`PoissonSolver::new`]; `solve_positions` and `solve_adjoint` take `&self`
/// and allocate their own scratch, so they may run concurrently. Each call costs one forward
/// and one backward triangular sweep per coordinate.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    factor: LdlFactor,
    reduced: CsMat<f64>,
    laplacian: Laplacian,
    gradient: TriangleGradientOperator,
    mass: MassMatrix,
    faces: Vec<[usize; 3]>,
    component: Vec<usize>,
    component_sizes: Vec<usize>,
    pinned: Vec<usize>,
    /// Vertex -> row of the reduced system; `usize::MAX` for pinned vertices.
    reduced_index: Vec<usize>,
    base_centroids: Vec<Vector3<f64>>,
}

const PINNED: usize = usize::MAX;

impl PoissonSolver {
    pub fn new(mesh: &Mesh) -> SolverResult<Self> {
        let (laplacian, mass, gradient) = assemble_poisson_system(mesh)?;
        let n = mesh.vertex_count();
        let (component, count) = mesh.connected_components();

        // Pin the lowest-index vertex of each component.
        let mut pinned = vec![PINNED; count];
        let mut component_sizes = vec![0usize; count];
        let mut base_centroids = vec![Vector3::zeros(); count];
        for (v, &c) in component.iter().enumerate() {
            if pinned[c] == PINNED {
                pinned[c] = v;
            }
            component_sizes[c] += 1;
            base_centroids[c] += mesh.vertices()[v];
        }
        for (c, size) in component_sizes.iter().enumerate() {
            base_centroids[c] /= *size as f64;
        }
        let mut reduced_index = vec![0usize; n];
        let mut next = 0;
        for v in 0..n {
            if pinned[component[v]] == v {
                reduced_index[v] = PINNED;
            } else {
                reduced_index[v] = next;
                next += 1;
            }
        }

        let mut tri = TriMat::new((next, next));
        for (row, vec) in laplacian.matrix().outer_iterator().enumerate() {
            let r = reduced_index[row];
            if r == PINNED {
                continue;
            }
            for (col, &value) in vec.iter() {
                let c = reduced_index[col];
                if c != PINNED {
                    tri.add_triplet(r, c, value);
                }
            }
        }
        let reduced: CsMat<f64> = tri.to_csr();
        let factor = LdlFactor::factor(&reduced).map_err(|e| match e {
            // Report the pivot as a mesh vertex index.
            FactorError::NotPositiveDefinite { pivot, value } => {
                let vertex = reduced_index.iter().position(|&r| r == pivot).unwrap_or(pivot);
                SolverError::Factor(FactorError::NotPositiveDefinite { pivot: vertex, value })
            }
            other => SolverError::Factor(other),
        })?;

        Ok(Self {
            factor,
            reduced,
            laplacian,
            gradient,
            mass,
            faces: mesh.faces().to_vec(),
            component,
            component_sizes,
            pinned,
            reduced_index,
            base_centroids,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.component.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    pub fn gradient_operator(&self) -> &TriangleGradientOperator {
        &self.gradient
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    /// The gauge-fixed (pinned rows and columns removed) Laplacian that was factored.
    pub fn reduced_laplacian(&self) -> &CsMat<f64> {
        &self.reduced
    }

    /// Solves against the stored factorization of [`Self::reduced_laplacian`].
    pub fn solve_reduced(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve(rhs)
    }

    pub fn pinned_vertices(&self) -> &[usize] {
        &self.pinned
    }

    pub fn component_labels(&self) -> &[usize] {
        &self.component
    }

    pub fn base_centroids(&self) -> &[Vector3<f64>] {
        &self.base_centroids
    }

    /// Identity Jacobians for this solver's face count.
    pub fn identity_field(&self) -> JacobianField {
        JacobianField::identity(self.faces.len())
    }

    fn check_faces(&self, field: &JacobianField) -> SolverResult<()> {
        if field.len() != self.faces.len() {
            return Err(SolverError::ShapeMismatch {
                what: "Jacobians",
                expected: self.faces.len(),
                got: field.len(),
            });
        }
        Ok(())
    }

    /// Solves `L_r y = b_r` for one coordinate; pinned entries of the result are zero.
    fn solve_gauged(&self, full_rhs: &[f64], x: &mut [f64], rhs: &mut [f64], sol: &mut [f64], work: &mut [f64]) {
        for (v, &r) in self.reduced_index.iter().enumerate() {
            if r != PINNED {
                rhs[r] = full_rhs[v];
            }
        }
        self.factor.solve_into(rhs, sol, work);
        for (v, &r) in self.reduced_index.iter().enumerate() {
            x[v] = if r == PINNED { 0.0 } else { sol[r] };
        }
    }

    fn component_means(&self, values: &[f64]) -> Vec<f64> {
        let mut mean = vec![0.0; self.component_sizes.len()];
        for (v, &c) in self.component.iter().enumerate() {
            mean[c] += values[v];
        }
        for (m, &s) in mean.iter_mut().zip(&self.component_sizes) {
            *m /= s as f64;
        }
        mean
    }

    /// Positions whose per-face Jacobians are closest, in the area-weighted Frobenius norm,
    /// to `field`, with every component's vertex centroid equal to the base mesh's.
    pub fn solve_positions(&self, field: &JacobianField) -> SolverResult<Vec<Vector3<f64>>> {
        self.check_faces(field)?;
        let n = self.vertex_count();
        // rhs[coord][vertex] = (G^T A M)
        let mut rhs = vec![vec![0.0; n]; 3];
        for (fi, f) in self.faces.iter().enumerate() {
            let local = self.gradient.block(fi).transpose() * field.matrices[fi].transpose() * self.mass.face_area(fi);
            for k in 0..3 {
                for r in 0..3 {
                    rhs[r][f[k]] += local[(k, r)];
                }
            }
        }
        let m = self.factor.dim();
        let (mut rbuf, mut sol, mut work) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut out = vec![Vector3::zeros(); n];
        let mut x = vec![0.0; n];
        for r in 0..3 {
            self.solve_gauged(&rhs[r], &mut x, &mut rbuf, &mut sol, &mut work);
            let mean = self.component_means(&x);
            for v in 0..n {
                let c = self.component[v];
                out[v][r] = x[v] - mean[c] + self.base_centroids[c][r];
            }
        }
        Ok(out)
    }

    /// Pulls `dloss/dpositions` back to `dloss/dJacobians` with one adjoint solve per
    /// coordinate against the same factorization. Gradient rows that only translate a
    /// component have no effect, matching the centroid gauge.
    pub fn solve_adjoint(&self, vertex_grad: &[Vector3<f64>]) -> SolverResult<Vec<Matrix3<f64>>> {
        let n = self.vertex_count();
        if vertex_grad.len() != n {
            return Err(SolverError::ShapeMismatch {
                what: "vertex gradients",
                expected: n,
                got: vertex_grad.len(),
            });
        }
        let m = self.factor.dim();
        let (mut rbuf, mut sol, mut work) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut z = vec![vec![0.0; n]; 3];
        let mut g = vec![0.0; n];
        for r in 0..3 {
            for v in 0..n {
                g[v] = vertex_grad[v][r];
            }
            let mean = self.component_means(&g);
            for v in 0..n {
                g[v] -= mean[self.component[v]];
            }
            self.solve_gauged(&g, &mut z[r], &mut rbuf, &mut sol, &mut work);
        }
        let out = self
            .faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let block = self.gradient.block(fi);
                let area = self.mass.face_area(fi);
                let mut grad = Matrix3::zeros();
                for r in 0..3 {
                    let local = Vector3::new(z[r][f[0]], z[r][f[1]], z[r][f[2]]);
                    let row = block * local * area;
                    for c in 0..3 {
                        grad[(r, c)] = row[c];
                    }
                }
                grad
            })
            .collect();
        Ok(out)
    }
}
