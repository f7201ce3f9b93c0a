//! Indexed triangle meshes, per-face differential operators and OBJ I/O.

mod obj;
mod operators;
pub mod primitives;

use std::path::PathBuf;

use nalgebra::Vector3;
use thiserror::Error;

pub use obj::{load_mesh, parse_obj, save_mesh, write_obj, ObjData, SavedFiles};
pub use operators::{assemble_poisson_system, face_gradient_operator, Laplacian, MassMatrix, TriangleGradientOperator};

/// Per-face-corner texture coordinates, `uvs[face][corner] = [u, v]`.
pub type CornerUvs = Vec<[[f64; 2]; 3]>;

/// Relative degenerate-face threshold, scaled by the squared bounding-box diagonal.
pub const AREA_EPS_SCALE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face {face} is degenerate: {reason}")]
    DegenerateFace { face: usize, reason: String },

    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },

    #[error("a mesh needs at least 3 vertices and 1 face (got {vertices} vertices, {faces} faces)")]
    TooSmall { vertices: usize, faces: usize },

    #[error("non-finite coordinate on vertex {0}")]
    NonFinite(usize),

    #[error("{0}")]
    Uv(String),

    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write image {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type MeshResult<T> = Result<T, MeshError>;

/// An indexed triangle mesh. Faces are counter-clockwise vertex triples.
///
/// Meshes built through [`Mesh::new`] satisfy every validity invariant: indices in range,
/// no repeated corners, and every face area above [`Mesh::area_eps`]. Meshes built through
/// [`Mesh::deformed`] share a validated connectivity but skip the area check, since an
/// optimizer may transiently flatten a face.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> MeshResult<Self> {
        if vertices.len() < 3 || faces.is_empty() {
            return Err(MeshError::TooSmall {
                vertices: vertices.len(),
                faces: faces.len(),
            });
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &index in f {
                if index >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index,
                        count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: format!("repeated vertex index in {f:?}"),
                });
            }
        }
        let mesh = Self { vertices, faces };
        let eps = mesh.area_eps();
        for fi in 0..mesh.faces.len() {
            let area = mesh.face_area(fi);
            if !(area > eps) {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: format!("area {area:e} is below the threshold {eps:e}"),
                });
            }
        }
        Ok(mesh)
    }

    /// Same connectivity, new positions. Only the vertex count is checked.
    ///
    /// # Panics
    /// If `vertices.len()` differs from the current vertex count.
    pub fn deformed(&self, vertices: Vec<Vector3<f64>>) -> Self {
        assert_eq!(
            vertices.len(),
            self.vertices.len(),
            "deformed mesh must keep the vertex count"
        );
        Self {
            vertices,
            faces: self.faces.clone(),
        }
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_positions(&self, face: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal, twice the area vector.
    pub fn face_cross(&self, face: usize) -> Vector3<f64> {
        let [p0, p1, p2] = self.face_positions(face);
        (p1 - p0).cross(&(p2 - p0))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    /// Unit face normal; zero for a collapsed face.
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let c = self.face_cross(face);
        let len = c.norm();
        if len > 0.0 {
            c / len
        } else {
            Vector3::zeros()
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Degenerate-face threshold: `1e-12 * diag^2`.
    pub fn area_eps(&self) -> f64 {
        AREA_EPS_SCALE * self.bbox_diagonal().powi(2)
    }

    /// Largest distance from the bounding-box centre to any vertex.
    pub fn bounding_radius(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        let c = (lo + hi) * 0.5;
        self.vertices.iter().map(|v| (v - c).norm()).fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.vertices.iter().sum();
        sum / self.vertices.len() as f64
    }

    /// Connected components over face adjacency. Vertices referenced by no face form their
    /// own singleton components. Returns `(label per vertex, component count)`; labels are
    /// assigned in order of each component's lowest vertex index.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let a = find(&mut parent, f[0]);
                let b = find(&mut parent, f[k]);
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent[hi] = lo;
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut root_label = vec![usize::MAX; n];
        let mut count = 0;
        for (v, l) in label.iter_mut().enumerate() {
            let r = find(&mut parent, v);
            if root_label[r] == usize::MAX {
                root_label[r] = count;
                count += 1;
            }
            *l = root_label[r];
        }
        (label, count)
    }
}
