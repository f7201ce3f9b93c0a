//! Procedural test and seed meshes.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use super::Mesh;

fn build(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Mesh {
    Mesh::new(vertices, faces).expect("primitive meshes are valid by construction")
}

/// Right triangle `(0,0,0), (1,0,0), (0,1,0)` facing +z.
pub fn single_triangle() -> Mesh {
    build(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2]],
    )
}

/// Unit-edge equilateral triangle in the z = 0 plane.
pub fn equilateral_triangle() -> Mesh {
    build(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
        ],
        vec![[0, 1, 2]],
    )
}

/// Corner tetrahedron with outward-facing triangles.
pub fn tetrahedron() -> Mesh {
    build(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    )
}

/// Unit cube `[0,1]^3`, 8 vertices and 12 outward triangles.
pub fn cube() -> Mesh {
    let vertices = (0..8)
        .map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let quads = [
        [0, 2, 3, 1], // z = 0
        [4, 5, 7, 6], // z = 1
        [0, 1, 5, 4], // y = 0
        [2, 6, 7, 3], // y = 1
        [0, 4, 6, 2], // x = 0
        [1, 3, 7, 5], // x = 1
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    build(vertices, faces)
}

/// Axis-aligned square of side `size` centred at `(0, 0, z)`, facing +z.
pub fn quad(size: f64, z: f64) -> Mesh {
    let h = 0.5 * size;
    build(
        vec![
            Vector3::new(-h, -h, z),
            Vector3::new(h, -h, z),
            Vector3::new(h, h, z),
            Vector3::new(-h, h, z),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
}

fn icosahedron_raw() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

/// Unit icosphere. Level 0 is the icosahedron (12 vertices); each level splits every
/// triangle in four: level 1 has 42 vertices, level 3 has 642, level 4 has 5120 faces.
pub fn icosphere(level: u32) -> Mesh {
    let (mut vertices, mut faces) = icosahedron_raw();
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(vertices, faces)
}

/// Latitude/longitude unit sphere with poles on the y axis.
/// Face count is `2 * segments * (rings - 1)`; `uv_sphere(32, 16)` has 960 faces.
pub fn uv_sphere(segments: usize, rings: usize) -> Mesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = vec![Vector3::new(0.0, 1.0, 0.0)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push(Vector3::new(
                theta.sin() * phi.sin(),
                theta.cos(),
                theta.sin() * phi.cos(),
            ));
        }
    }
    let south = vertices.len();
    vertices.push(Vector3::new(0.0, -1.0, 0.0));
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    build(vertices, faces)
}

/// Lumpy closed surface: a level-4 icosphere (5120 faces) with a smooth radial displacement.
pub fn blob() -> Mesh {
    let base = icosphere(4);
    let vertices = base
        .vertices()
        .iter()
        .map(|p| {
            let r = 1.0
                + 0.18 * (3.0 * p.x + 0.4).sin() * (2.0 * p.y + 1.0).sin()
                + 0.10 * (4.0 * p.z - 0.3).cos() * (2.5 * p.x).cos();
            p * r
        })
        .collect();
    build(vertices, base.faces().to_vec())
}

pub fn transformed(mesh: &Mesh, linear: &Matrix3<f64>, offset: Vector3<f64>) -> Mesh {
    build(
        mesh.vertices().iter().map(|p| linear * p + offset).collect(),
        mesh.faces().to_vec(),
    )
}

pub fn translated(mesh: &Mesh, offset: Vector3<f64>) -> Mesh {
    transformed(mesh, &Matrix3::identity(), offset)
}

/// Disjoint union; the second mesh's indices are shifted past the first's vertices.
pub fn merge(a: &Mesh, b: &Mesh) -> Mesh {
    let shift = a.vertex_count();
    let mut vertices = a.vertices().to_vec();
    vertices.extend_from_slice(b.vertices());
    let mut faces = a.faces().to_vec();
    faces.extend(b.faces().iter().map(|f| [f[0] + shift, f[1] + shift, f[2] + shift]));
    build(vertices, faces)
}

/// Signed enclosed volume; positive for closed meshes with outward winding.
pub fn signed_volume(mesh: &Mesh) -> f64 {
    (0..mesh.face_count())
        .map(|f| {
            let [a, b, c] = mesh.face_positions(f);
            a.dot(&b.cross(&c)) / 6.0
        })
        .sum()
}
