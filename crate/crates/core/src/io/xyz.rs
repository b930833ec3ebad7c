//! XYZ point-cloud text format: one `x y z [nx ny nz]` record per line,
//! whitespace separated. Column count must be consistent across the file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::vec3;
use crate::mesh::PointCloud;

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    parse_xyz(&text, &path.display().to_string())
}

pub fn parse_xyz(text: &str, path: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut values = [0.0f64; 6];
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            if count >= 6 {
                return Err(Error::parse(path, line_no, "too many columns (expected 3 or 6)"));
            }
            values[count] = tok
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("non-numeric token '{tok}'")))?;
            count += 1;
        }
        if count != 3 && count != 6 {
            return Err(Error::parse(path, line_no, format!("expected 3 or 6 columns, found {count}")));
        }
        match columns {
            None => columns = Some(count),
            Some(c) if c != count => {
                return Err(Error::parse(path, line_no, format!("inconsistent column count: {count} after {c}")));
            }
            _ => {}
        }
        points.push(vec3(values[0], values[1], values[2]));
        if count == 6 {
            normals.push(vec3(values[3], values[4], values[5]));
        }
    }
    if points.is_empty() {
        return Err(Error::Input(format!("{path}: no points")));
    }
    Ok(PointCloud {
        points,
        normals: if normals.is_empty() { None } else { Some(normals) },
    })
}

pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    match &cloud.normals {
        Some(normals) => {
            for (p, n) in cloud.points.iter().zip(normals) {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)?;
            }
        }
        None => {
            for p in &cloud.points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_file_parses() {
        let cloud = parse_xyz("0 0 0\n1 0 0\n0 1 0\n", "mem").unwrap();
        assert_eq!(cloud.points.len(), 3);
        assert!(cloud.normals.is_none());
    }

    #[test]
    fn six_column_file_carries_normals() {
        let cloud = parse_xyz("0 0 0 0 0 1\n1 0 0 0 1 0\n", "mem").unwrap();
        assert_eq!(cloud.points.len(), 2);
        let normals = cloud.normals.unwrap();
        assert_eq!(normals[1], vec3(0.0, 1.0, 0.0));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse_xyz("", "mem").is_err());
        assert!(parse_xyz("# only comments\n", "mem").is_err());
    }

    #[test]
    fn bad_tokens_report_line_numbers() {
        let err = parse_xyz("0 0 0\n1 oops 0\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_xyz("0 0 0\n1 2\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_xyz("0 0 0\n0 0 0 1 1 1\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "inconsistent columns");
    }
}
