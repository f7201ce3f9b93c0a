use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::{CornerUvs, Mesh, MeshError, MeshResult};
use crate::imaging::Image;

/// Result of [`load_mesh`]: the mesh plus per-corner UVs when the file has `vt` records.
#[derive(Debug, Clone)]
pub struct ObjData {
    pub mesh: Mesh,
    pub uvs: Option<CornerUvs>,
}

/// Paths written by [`save_mesh`].
#[derive(Debug, Clone)]
pub struct SavedFiles {
    pub obj: PathBuf,
    pub mtl: Option<PathBuf>,
    pub texture: Option<PathBuf>,
}

pub fn load_mesh(path: impl AsRef<Path>) -> MeshResult<ObjData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_obj(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats(line: usize, tokens: &[&str], min: usize, what: &str) -> MeshResult<Vec<f64>> {
    if tokens.len() < min {
        return Err(parse_err(
            line,
            format!("`{what}` needs at least {min} components, got {}", tokens.len()),
        ));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("invalid number `{t}` in `{what}` record")))
        })
        .collect()
}

/// Resolves a 1-based (or negative, relative) OBJ index against `count` records.
fn resolve_index(line: usize, token: &str, count: usize, what: &str) -> MeshResult<usize> {
    let raw: i64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} index `{token}`")))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        return Err(parse_err(
            line,
            format!("{what} index 0 is not valid (indices are 1-based)"),
        ));
    };
    if idx < 0 || idx as usize >= count {
        return Err(parse_err(
            line,
            format!("{what} index {raw} out of range ({count} defined so far)"),
        ));
    }
    Ok(idx as usize)
}

/// Parses Wavefront OBJ text. Quads are fan-triangulated, larger polygons are rejected.
/// Records other than `v`, `vt` and `f` are ignored.
pub fn parse_obj(text: &str) -> MeshResult<ObjData> {
    let mut positions: Vec<Vector3<f64>> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut corner_uvs: Vec<[Option<usize>; 3]> = Vec::new();
    // Line number of each face record, for error reporting after triangulation.
    let mut face_lines: Vec<usize> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let rest: Vec<&str> = tokens.collect();
        match tag {
            "v" => {
                let xs = parse_floats(line, &rest, 3, "v")?;
                positions.push(Vector3::new(xs[0], xs[1], xs[2]));
            }
            "vt" => {
                let xs = parse_floats(line, &rest, 1, "vt")?;
                texcoords.push([xs[0], xs.get(1).copied().unwrap_or(0.0)]);
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(line, "face needs at least 3 vertices"));
                }
                if rest.len() > 4 {
                    return Err(parse_err(
                        line,
                        format!("{}-gon faces are not supported (triangles and quads only)", rest.len()),
                    ));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for tok in &rest {
                    let mut parts = tok.split('/');
                    let v = resolve_index(line, parts.next().unwrap_or(""), positions.len(), "vertex")?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(line, s, texcoords.len(), "texture")?),
                        _ => None,
                    };
                    corners.push((v, vt));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push([tri[0].0, tri[1].0, tri[2].0]);
                    corner_uvs.push([tri[0].1, tri[1].1, tri[2].1]);
                    face_lines.push(line);
                }
            }
            _ => {}
        }
    }

    let with_uv = corner_uvs.iter().flatten().filter(|c| c.is_some()).count();
    let uvs = if with_uv == 0 {
        None
    } else if with_uv == corner_uvs.len() * 3 {
        Some(corner_uvs.iter().map(|c| c.map(|t| texcoords[t.unwrap()])).collect())
    } else {
        let face = corner_uvs
            .iter()
            .position(|c| c.iter().any(Option::is_none))
            .unwrap_or(0);
        return Err(parse_err(
            face_lines.get(face).copied().unwrap_or(0),
            "some face corners have texture coordinates and others do not",
        ));
    };

    let mesh = Mesh::new(positions, faces)?;
    Ok(ObjData { mesh, uvs })
}

/// Renders OBJ text. Positions use the shortest decimal form that round-trips exactly.
/// With UVs, one `vt` is written per face corner and faces use the `v/vt` form.
pub fn write_obj(mesh: &Mesh, uvs: Option<&[[[f64; 2]; 3]]>, mtllib: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(lib) = mtllib {
        let _ = writeln!(out, "mtllib {lib}");
    }
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(uvs) = uvs {
        for corners in uvs {
            for uv in corners {
                let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
            }
        }
        if mtllib.is_some() {
            out.push_str("usemtl material0\n");
        }
        for (fi, f) in mesh.faces().iter().enumerate() {
            let t = 3 * fi + 1;
            let _ = writeln!(
                out,
                "f {}/{} {}/{} {}/{}",
                f[0] + 1,
                t,
                f[1] + 1,
                t + 1,
                f[2] + 1,
                t + 2
            );
        }
    } else {
        for f in mesh.faces() {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> MeshResult<()> {
    fs::write(path, bytes).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `path` as OBJ. With a texture, also writes `<stem>.mtl` and `<stem>.png` next to
/// it; the MTL names the PNG through `map_Kd`.
pub fn save_mesh(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    uvs: Option<&[[[f64; 2]; 3]]>,
    texture: Option<&Image>,
) -> MeshResult<SavedFiles> {
    let path = path.as_ref();
    if let Some(uvs) = uvs {
        if uvs.len() != mesh.face_count() {
            return Err(MeshError::Uv(format!(
                "{} UV triples for {} faces",
                uvs.len(),
                mesh.face_count()
            )));
        }
    }
    let Some(texture) = texture else {
        write_file(path, write_obj(mesh, uvs, None).as_bytes())?;
        return Ok(SavedFiles {
            obj: path.to_path_buf(),
            mtl: None,
            texture: None,
        });
    };
    if uvs.is_none() {
        return Err(MeshError::Uv("a texture was given without UVs".into()));
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
    let mtl_path = path.with_file_name(format!("{stem}.mtl"));
    let png_name = format!("{stem}.png");
    let png_path = path.with_file_name(&png_name);

    let mtl = format!("newmtl material0\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {png_name}\n");
    write_file(&mtl_path, mtl.as_bytes())?;
    texture.save_png(&png_path).map_err(|e| MeshError::Image {
        path: png_path.clone(),
        message: e.to_string(),
    })?;
    write_file(path, write_obj(mesh, uvs, Some(&format!("{stem}.mtl"))).as_bytes())?;
    Ok(SavedFiles {
        obj: path.to_path_buf(),
        mtl: Some(mtl_path),
        texture: Some(png_path),
    })
}
