//! Wavefront OBJ reading and writing.
//!
//! Reader: `v`, `vn`, and `f` records; polygons are fan-triangulated;
//! negative (relative) indices supported; unknown keywords ignored.

use std::io::Write;
use std::path::Path;

use crate::complex::TessellatedMesh;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriangleMesh;

pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text, &path.display().to_string())
}

pub fn parse_obj(text: &str, path: &str) -> Result<TriangleMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut vertex_normal: Vec<Option<usize>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (line_idx, raw_line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap();
        match keyword {
            "v" | "vn" => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| {
                        Error::parse(path, line_no, format!("'{keyword}' needs 3 coordinates"))
                    })?;
                    *c = tok.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad coordinate '{tok}'"))
                    })?;
                }
                if keyword == "v" {
                    vertices.push(Vec3::from_array(coords));
                    vertex_normal.push(None);
                } else {
                    normals.push(Vec3::from_array(coords));
                }
            }
            "f" => {
                let mut face: Vec<u32> = Vec::new();
                for tok in tokens {
                    let mut parts = tok.split('/');
                    let v_str = parts.next().unwrap_or("");
                    let v_idx: i64 = v_str.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad face index '{tok}'"))
                    })?;
                    let resolved = if v_idx > 0 {
                        (v_idx - 1) as usize
                    } else if v_idx < 0 {
                        let r = vertices.len() as i64 + v_idx;
                        if r < 0 {
                            return Err(Error::parse(path, line_no, format!("relative index '{v_idx}' out of range")));
                        }
                        r as usize
                    } else {
                        return Err(Error::parse(path, line_no, "face index 0 is invalid"));
                    };
                    if resolved >= vertices.len() {
                        return Err(Error::parse(path, line_no, format!("face references vertex {} of {}", resolved + 1, vertices.len())));
                    }
                    // Optional texture then normal index.
                    let _vt = parts.next();
                    if let Some(n_str) = parts.next() {
                        if !n_str.is_empty() {
                            let n_idx: i64 = n_str.parse().map_err(|_| {
                                Error::parse(path, line_no, format!("bad normal index '{tok}'"))
                            })?;
                            let n_resolved = if n_idx > 0 {
                                (n_idx - 1) as usize
                            } else {
                                (normals.len() as i64 + n_idx).max(0) as usize
                            };
                            if n_resolved < normals.len() {
                                vertex_normal[resolved] = Some(n_resolved);
                            }
                        }
                    }
                    face.push(resolved as u32);
                }
                if face.len() < 3 {
                    return Err(Error::parse(path, line_no, "face needs at least 3 vertices"));
                }
                for k in 1..face.len() - 1 {
                    triangles.push([face[0], face[k], face[k + 1]]);
                }
            }
            _ => {} // groups, materials, smoothing: ignored
        }
    }
    if vertices.is_empty() || triangles.is_empty() {
        return Err(Error::Input(format!("{path}: no geometry found")));
    }
    let mut mesh = TriangleMesh::new(vertices, triangles);
    if !normals.is_empty() && vertex_normal.iter().all(|n| n.is_some()) {
        mesh.normals = Some(
            vertex_normal
                .into_iter()
                .map(|n| normals[n.expect("checked")])
                .collect(),
        );
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Write a welded tessellation as OBJ (`v`/`f` records, 1-based indices).
pub fn write_obj(mesh: &TessellatedMesh, path: &Path) -> Result<()> {
    write_obj_mesh(&mesh.vertices, &mesh.triangles, path)
}

pub fn write_obj_mesh(vertices: &[Vec3], triangles: &[[u32; 3]], path: &Path) -> Result<()> {
    if vertices.is_empty() || triangles.is_empty() {
        return Err(Error::Input("refusing to write empty mesh".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    out.flush()?;
    Ok(())
}
