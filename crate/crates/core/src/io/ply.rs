//! PLY reading: ascii and binary_little_endian, float32/float64 vertex
//! properties `x y z [nx ny nz]` (other scalar properties skipped), faces as
//! `list <count> <index> vertex_indices` with fan triangulation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};
use crate::mesh::{PointCloud, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

struct VertexLayout {
    /// (scalar type, slot) per property; slot 0..2 = xyz, 3..5 = normal,
    /// usize::MAX = skipped.
    properties: Vec<(Scalar, usize)>,
    count: usize,
    has_normals: bool,
}

struct FaceLayout {
    count_type: Scalar,
    index_type: Scalar,
    count: usize,
}

struct Parsed {
    vertices: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    triangles: Vec<[u32; 3]>,
}

pub fn load_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let parsed = parse_ply(path)?;
    if parsed.triangles.is_empty() {
        return Err(Error::Input(format!("{}: PLY contains no faces", path.display())));
    }
    let mut mesh = TriangleMesh::new(parsed.vertices, parsed.triangles);
    mesh.normals = parsed.normals;
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_ply_points(path: &Path) -> Result<PointCloud> {
    let parsed = parse_ply(path)?;
    Ok(PointCloud {
        points: parsed.vertices,
        normals: parsed.normals,
    })
}

fn read_header_line(
    bytes: &[u8],
    offset: &mut usize,
    line_no: &mut usize,
    name: &str,
) -> Result<String> {
    let start = *offset;
    while *offset < bytes.len() && bytes[*offset] != b'\n' {
        *offset += 1;
    }
    if *offset >= bytes.len() {
        return Err(Error::parse(name, *line_no + 1, "unexpected end of header"));
    }
    let line = String::from_utf8_lossy(&bytes[start..*offset])
        .trim_end_matches('\r')
        .to_string();
    *offset += 1;
    *line_no += 1;
    Ok(line)
}

fn parse_ply(path: &Path) -> Result<Parsed> {
    let bytes = std::fs::read(path)?;
    let name = path.display().to_string();

    // Header is always ascii lines up to end_header.
    let mut offset = 0usize;
    let mut line_no = 0usize;

    if read_header_line(&bytes, &mut offset, &mut line_no, &name)?.trim() != "ply" {
        return Err(Error::parse(&name, 1, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut vertex: Option<VertexLayout> = None;
    let mut face: Option<FaceLayout> = None;
    let mut current: Option<char> = None; // 'v' | 'f' | 'x' (ignored element)

    loop {
        let line = read_header_line(&bytes, &mut offset, &mut line_no, &name)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("comment") | Some("obj_info") | None => continue,
            Some("format") => {
                format = Some(match tokens.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    other => {
                        return Err(Error::Unsupported(format!(
                            "PLY format {other:?} (ascii and binary_little_endian supported)"
                        )))
                    }
                });
            }
            Some("element") => {
                let kind = tokens.next().unwrap_or("");
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(&name, line_no, "bad element count"))?;
                match kind {
                    "vertex" => {
                        vertex = Some(VertexLayout {
                            properties: Vec::new(),
                            count,
                            has_normals: false,
                        });
                        current = Some('v');
                    }
                    "face" => {
                        face = Some(FaceLayout {
                            count_type: Scalar::U8,
                            index_type: Scalar::I32,
                            count,
                        });
                        current = Some('f');
                    }
                    other => {
                        if count > 0 {
                            return Err(Error::Unsupported(format!("PLY element '{other}'")));
                        }
                        current = Some('x');
                    }
                }
            }
            Some("property") => match current {
                Some('v') => {
                    let layout = vertex.as_mut().expect("element vertex declared");
                    let type_name = tokens.next().unwrap_or("");
                    let scalar = Scalar::parse(type_name).ok_or_else(|| {
                        Error::Unsupported(format!("PLY vertex property type '{type_name}'"))
                    })?;
                    let prop = tokens.next().unwrap_or("");
                    let slot = match prop {
                        "x" => 0,
                        "y" => 1,
                        "z" => 2,
                        "nx" => 3,
                        "ny" => 4,
                        "nz" => 5,
                        _ => usize::MAX,
                    };
                    if slot >= 3 && slot <= 5 {
                        layout.has_normals = true;
                    }
                    layout.properties.push((scalar, slot));
                }
                Some('f') => {
                    let layout = face.as_mut().expect("element face declared");
                    let kind = tokens.next().unwrap_or("");
                    if kind != "list" {
                        return Err(Error::Unsupported("non-list face property".into()));
                    }
                    let ct = tokens.next().unwrap_or("");
                    let it = tokens.next().unwrap_or("");
                    layout.count_type = Scalar::parse(ct)
                        .ok_or_else(|| Error::Unsupported(format!("face count type '{ct}'")))?;
                    layout.index_type = Scalar::parse(it)
                        .ok_or_else(|| Error::Unsupported(format!("face index type '{it}'")))?;
                }
                _ => {}
            },
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(&name, line_no, format!("unknown header keyword '{other}'")));
            }
        }
    }

    let format = format.ok_or_else(|| Error::parse(&name, line_no, "missing format line"))?;
    let vertex = vertex.ok_or_else(|| Error::parse(&name, line_no, "missing vertex element"))?;
    if !vertex.properties.iter().any(|(_, s)| *s == 0) {
        return Err(Error::parse(&name, line_no, "vertex element lacks x/y/z properties"));
    }

    let mut vertices = Vec::with_capacity(vertex.count);
    let mut normals = if vertex.has_normals {
        Some(Vec::with_capacity(vertex.count))
    } else {
        None
    };
    let mut triangles = Vec::new();

    match format {
        Format::Ascii => {
            let body = String::from_utf8_lossy(&bytes[offset..]).to_string();
            let mut lines = body.lines();
            let mut body_line = line_no;
            for _ in 0..vertex.count {
                body_line += 1;
                let line = lines
                    .next()
                    .ok_or_else(|| Error::parse(&name, body_line, "missing vertex row"))?;
                let mut fields = [0.0f64; 6];
                let mut tokens = line.split_whitespace();
                for (scalar, slot) in &vertex.properties {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::parse(&name, body_line, "short vertex row"))?;
                    let value: f64 = tok
                        .parse()
                        .map_err(|_| Error::parse(&name, body_line, format!("bad value '{tok}'")))?;
                    let _ = scalar;
                    if *slot != usize::MAX {
                        fields[*slot] = value;
                    }
                }
                vertices.push(vec3(fields[0], fields[1], fields[2]));
                if let Some(ns) = normals.as_mut() {
                    ns.push(vec3(fields[3], fields[4], fields[5]));
                }
            }
            if let Some(face) = &face {
                for _ in 0..face.count {
                    body_line += 1;
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::parse(&name, body_line, "missing face row"))?;
                    let mut tokens = line.split_whitespace();
                    let count: usize = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::parse(&name, body_line, "bad face count"))?;
                    let mut poly = Vec::with_capacity(count);
                    for _ in 0..count {
                        let tok = tokens
                            .next()
                            .ok_or_else(|| Error::parse(&name, body_line, "short face row"))?;
                        let idx: u32 = tok
                            .parse()
                            .map_err(|_| Error::parse(&name, body_line, format!("bad index '{tok}'")))?;
                        poly.push(idx);
                    }
                    fan(&mut triangles, &poly, &name, body_line)?;
                }
            }
        }
        Format::BinaryLe => {
            let mut cursor = offset;
            let read_scalar = |cursor: &mut usize, s: Scalar| -> Result<f64> {
                let size = s.size();
                if *cursor + size > bytes.len() {
                    return Err(Error::parse(&name, line_no, "unexpected end of binary body"));
                }
                let chunk = &bytes[*cursor..*cursor + size];
                *cursor += size;
                Ok(match s {
                    Scalar::I8 => chunk[0] as i8 as f64,
                    Scalar::U8 => chunk[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([chunk[0], chunk[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([chunk[0], chunk[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes(chunk.try_into().expect("size 4")) as f64,
                    Scalar::U32 => u32::from_le_bytes(chunk.try_into().expect("size 4")) as f64,
                    Scalar::F32 => f32::from_le_bytes(chunk.try_into().expect("size 4")) as f64,
                    Scalar::F64 => f64::from_le_bytes(chunk.try_into().expect("size 8")),
                })
            };
            for _ in 0..vertex.count {
                let mut fields = [0.0f64; 6];
                for (scalar, slot) in &vertex.properties {
                    let value = read_scalar(&mut cursor, *scalar)?;
                    if *slot != usize::MAX {
                        fields[*slot] = value;
                    }
                }
                vertices.push(vec3(fields[0], fields[1], fields[2]));
                if let Some(ns) = normals.as_mut() {
                    ns.push(vec3(fields[3], fields[4], fields[5]));
                }
            }
            if let Some(face) = &face {
                for f in 0..face.count {
                    let count = read_scalar(&mut cursor, face.count_type)? as usize;
                    let mut poly = Vec::with_capacity(count);
                    for _ in 0..count {
                        poly.push(read_scalar(&mut cursor, face.index_type)? as u32);
                    }
                    fan(&mut triangles, &poly, &name, f)?;
                }
            }
        }
    }

    if vertices.is_empty() {
        return Err(Error::Input(format!("{name}: no vertices")));
    }
    Ok(Parsed {
        vertices,
        normals,
        triangles,
    })
}

fn fan(triangles: &mut Vec<[u32; 3]>, poly: &[u32], name: &str, line: usize) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::parse(name, line, "face needs at least 3 vertices"));
    }
    for k in 1..poly.len() - 1 {
        triangles.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

/// Write an ascii PLY (handy for fixtures and external checks).
pub fn write_ply_ascii(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", mesh.vertices.len())?;
    writeln!(out, "property float x")?;
    writeln!(out, "property float y")?;
    writeln!(out, "property float z")?;
    writeln!(out, "element face {}", mesh.triangles.len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    for v in &mesh.vertices {
        writeln!(out, "{} {} {}", v.x as f32, v.y as f32, v.z as f32)?;
    }
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    out.flush()?;
    Ok(())
}

/// Write a binary little-endian PLY with float32 vertices.
pub fn write_ply_binary(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        out.write_all(&(v.x as f32).to_le_bytes())?;
        out.write_all(&(v.y as f32).to_le_bytes())?;
        out.write_all(&(v.z as f32).to_le_bytes())?;
    }
    for t in &mesh.triangles {
        out.write_all(&[3u8])?;
        for &i in t {
            out.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;

    fn tmpdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("patchfit_ply_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn sample_mesh() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                vec3(0.125, 0.25, 0.5),
                vec3(1.0, 0.0, 0.0),
                vec3(0.0, 1.0, 0.0),
                vec3(0.3, 0.7, -0.2),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
    }

    #[test]
    fn ascii_and_binary_agree_within_f32_precision() {
        let dir = tmpdir();
        let mesh = sample_mesh();
        let ascii_path = dir.join("m.ascii.ply");
        let binary_path = dir.join("m.binary.ply");
        write_ply_ascii(&mesh, &ascii_path).unwrap();
        write_ply_binary(&mesh, &binary_path).unwrap();
        let a = load_ply_mesh(&ascii_path).unwrap();
        let b = load_ply_mesh(&binary_path).unwrap();
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.triangles, mesh.triangles);
        for ((va, vb), vm) in a.vertices.iter().zip(&b.vertices).zip(&mesh.vertices) {
            assert!((*va - *vb).norm() < 1e-7);
            assert!((*va - *vm).norm() < 1e-7, "f32 storage");
        }
    }

    #[test]
    fn vertex_normals_are_parsed() {
        let dir = tmpdir();
        let path = dir.join("n.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 0 0 1\n1 0 0 0 0 1\n0 1 0 0 0 1\n3 0 1 2\n",
        )
        .unwrap();
        let mesh = load_ply_mesh(&path).unwrap();
        let normals = mesh.normals.unwrap();
        assert_eq!(normals.len(), 3);
        assert_eq!(normals[0], vec3(0.0, 0.0, 1.0));
        // Point-cloud loading of the same file keeps the normals too.
        let cloud = load_ply_points(&path).unwrap();
        assert_eq!(cloud.points.len(), 3);
        assert!(cloud.normals.is_some());
    }

    #[test]
    fn malformed_ply_reports_line() {
        let dir = tmpdir();
        let path = dir.join("bad.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 zzz 0\n",
        )
        .unwrap();
        let err = load_ply_points(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 8, .. }), "{err}");
    }

    #[test]
    fn unsupported_format_is_rejected() {
        let dir = tmpdir();
        let path = dir.join("be.ply");
        std::fs::write(&path, "ply\nformat binary_big_endian 1.0\nend_header\n").unwrap();
        assert!(matches!(load_ply_points(&path), Err(Error::Unsupported(_))));
    }
}
