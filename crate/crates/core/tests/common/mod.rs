#![allow(dead_code)]

pub mod checks;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use trimorph::mesh::{primitives, Mesh};
use trimorph::texture::{generate_atlas, texel_position, TextureAtlas};

/// Height-field grid with jittered vertices, `nx * ny` vertices.
pub fn jittered_grid<R: Rng>(rng: &mut R, nx: usize, ny: usize) -> Mesh {
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = i as f64 + rng.gen_range(-0.2..0.2);
            let y = j as f64 + rng.gen_range(-0.2..0.2);
            let z = 0.3 * (0.7 * x).sin() * (0.5 * y).cos() + rng.gen_range(-0.1..0.1);
            v.push(Vector3::new(x, y, z));
        }
    }
    let mut f = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            f.push([a, a + 1, a + nx + 1]);
            f.push([a, a + nx + 1, a + nx]);
        }
    }
    Mesh::new(v, f).unwrap()
}

/// Closed or open mesh with at most 200 vertices, sometimes with two components.
pub fn random_small_mesh<R: Rng>(rng: &mut R) -> Mesh {
    let base = match rng.gen_range(0..4) {
        0 => primitives::icosphere(1),
        1 => primitives::icosphere(2),
        2 => {
            let (nx, ny) = (rng.gen_range(3..12), rng.gen_range(3..12));
            jittered_grid(rng, nx, ny)
        }
        _ => primitives::merge(
            &primitives::icosphere(1),
            &primitives::translated(&primitives::cube(), Vector3::new(3.0, 0.0, 0.0)),
        ),
    };
    let verts = base
        .vertices()
        .iter()
        .map(|p| {
            p + Vector3::new(
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
            )
        })
        .collect();
    Mesh::new(verts, base.faces().to_vec()).unwrap()
}

pub fn random_jacobians<R: Rng>(rng: &mut R, m: usize, spread: f64) -> Vec<Matrix3<f64>> {
    (0..m)
        .map(|_| Matrix3::identity() + Matrix3::from_fn(|_, _| rng.gen_range(-spread..spread)))
        .collect()
}

/// Smooth three-colour pattern evaluated on the surface.
pub fn pattern(p: &Vector3<f64>, freq: f64) -> [f64; 3] {
    let s = (freq * p.x).sin() * (freq * p.y).sin() * (freq * p.z).sin();
    let k = 0.5 + 0.5 * s;
    [0.9 * k + 0.1 * (1.0 - k), 0.2 * k + 0.7 * (1.0 - k), 0.3 + 0.3 * k]
}

/// Hard-edged 3D checker in two colours.
pub fn checker(p: &Vector3<f64>, freq: f64) -> [f64; 3] {
    let s = (freq * p.x).sin() * (freq * p.y).sin() * (freq * p.z).sin();
    if s >= 0.0 {
        [0.9, 0.2, 0.3]
    } else {
        [0.1, 0.7, 0.3]
    }
}

/// Atlas over `mesh` whose owned texels hold `f` at their surface points.
pub fn procedural_atlas(mesh: &Mesh, resolution: usize, f: impl Fn(&Vector3<f64>) -> [f64; 3]) -> TextureAtlas {
    let mut atlas = generate_atlas(mesh, resolution, None).unwrap();
    let owned: Vec<usize> = atlas.owned_texels().collect();
    for t in owned {
        let p = texel_position(&atlas, mesh, t).unwrap();
        atlas.texels_mut()[t] = f(&p);
    }
    atlas
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
