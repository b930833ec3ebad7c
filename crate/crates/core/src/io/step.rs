//! Native ISO-10303-21 (STEP) writer and subset reader.
//!
//! Each patch is emitted as the standard complex entity for a rational
//! B-spline surface — the clamped-knot form of a bicubic rational Bézier
//! patch: degree (3,3), 4×4 control points, knot multiplicities (4,4) over
//! knots (0., 1.). The header declares AP214 (`AUTOMOTIVE_DESIGN`) for broad
//! CAD-viewer compatibility. Patches are exported as independent surfaces;
//! no topological shell is built.
//!
//! Coordinates and weights are printed with 17 significant digits, so a
//! write → read → write cycle is byte-identical and re-evaluation of parsed
//! grids reproduces positions exactly.

use std::collections::HashMap;
use std::path::Path;

use crate::bezier::ControlGrid;
use crate::complex::PatchComplex;
use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};

/// Product and file name used in every emitted document; fixed so that
/// documents depend only on the geometry.
pub const DOCUMENT_NAME: &str = "patchfit_surfaces";

/// In-memory STEP document (the exact file bytes).
#[derive(Debug, Clone)]
pub struct StepDocument {
    pub text: String,
    pub surface_count: usize,
}

/// 17-significant-digit STEP real.
fn fmt_real(x: f64) -> String {
    format!("{:.16E}", x)
}

/// Serialize control grids into a STEP document.
pub fn document_from_grids(grids: &[ControlGrid], name: &str) -> Result<StepDocument> {
    if grids.is_empty() {
        return Err(Error::Input("no patches to export".into()));
    }
    for (k, grid) in grids.iter().enumerate() {
        grid.validate()
            .map_err(|e| Error::Input(format!("patch {k}: {e}")))?;
    }
    let mut text = String::new();
    text.push_str("ISO-10303-21;\n");
    text.push_str("HEADER;\n");
    text.push_str("FILE_DESCRIPTION((''),'2;1');\n");
    text.push_str(&format!(
        "FILE_NAME('{name}.step','',(''),(''),'','','');\n"
    ));
    text.push_str("FILE_SCHEMA(('AUTOMOTIVE_DESIGN'));\n");
    text.push_str("ENDSEC;\n");
    text.push_str("DATA;\n");
    text.push_str("#1=APPLICATION_CONTEXT('automotive design');\n");
    text.push_str("#2=APPLICATION_PROTOCOL_DEFINITION('international standard','automotive_design',2010,#1);\n");
    text.push_str("#3=PRODUCT_CONTEXT('',#1,'mechanical');\n");
    text.push_str(&format!("#4=PRODUCT('{name}','{name}','',(#3));\n"));
    text.push_str("#5=PRODUCT_DEFINITION_FORMATION('','',#4);\n");
    text.push_str("#6=PRODUCT_DEFINITION_CONTEXT('part definition',#1,'design');\n");
    text.push_str("#7=PRODUCT_DEFINITION('design','',#5,#6);\n");
    text.push_str("#8=PRODUCT_DEFINITION_SHAPE('','',#7);\n");
    text.push_str("#9=(LENGTH_UNIT()NAMED_UNIT(*)SI_UNIT($,.METRE.));\n");
    text.push_str("#10=(NAMED_UNIT(*)PLANE_ANGLE_UNIT()SI_UNIT($,.RADIAN.));\n");
    text.push_str("#11=(NAMED_UNIT(*)SI_UNIT($,.STERADIAN.)SOLID_ANGLE_UNIT());\n");
    text.push_str("#12=UNCERTAINTY_MEASURE_WITH_UNIT(LENGTH_MEASURE(1.0E-7),#9,'distance_accuracy_value','');\n");
    text.push_str("#13=(GEOMETRIC_REPRESENTATION_CONTEXT(3)GLOBAL_UNCERTAINTY_ASSIGNED_CONTEXT((#12))GLOBAL_UNIT_ASSIGNED_CONTEXT((#9,#10,#11))REPRESENTATION_CONTEXT('',''));\n");

    let mut next_id = 14usize;
    let mut surface_ids = Vec::with_capacity(grids.len());
    for grid in grids {
        let base = next_id;
        for i in 0..4 {
            for j in 0..4 {
                let p = grid.points[i][j];
                text.push_str(&format!(
                    "#{}=CARTESIAN_POINT('',({},{},{}));\n",
                    base + i * 4 + j,
                    fmt_real(p.x),
                    fmt_real(p.y),
                    fmt_real(p.z)
                ));
            }
        }
        let surface_id = base + 16;
        let point_rows: Vec<String> = (0..4)
            .map(|i| {
                let row: Vec<String> = (0..4).map(|j| format!("#{}", base + i * 4 + j)).collect();
                format!("({})", row.join(","))
            })
            .collect();
        let weight_rows: Vec<String> = (0..4)
            .map(|i| {
                let row: Vec<String> = (0..4).map(|j| fmt_real(grid.weights[i][j])).collect();
                format!("({})", row.join(","))
            })
            .collect();
        text.push_str(&format!(
            "#{surface_id}=(BOUNDED_SURFACE()B_SPLINE_SURFACE(3,3,({}),.UNSPECIFIED.,.F.,.F.,.F.)B_SPLINE_SURFACE_WITH_KNOTS((4,4),(4,4),(0.,1.),(0.,1.),.UNSPECIFIED.)GEOMETRIC_REPRESENTATION_ITEM()RATIONAL_B_SPLINE_SURFACE(({}))REPRESENTATION_ITEM('')SURFACE());\n",
            point_rows.join(","),
            weight_rows.join(",")
        ));
        surface_ids.push(surface_id);
        next_id = surface_id + 1;
    }
    let refs: Vec<String> = surface_ids.iter().map(|id| format!("#{id}")).collect();
    text.push_str(&format!(
        "#{next_id}=SHAPE_REPRESENTATION('',({}),#13);\n",
        refs.join(",")
    ));
    text.push_str(&format!(
        "#{}=SHAPE_DEFINITION_REPRESENTATION(#8,#{next_id});\n",
        next_id + 1
    ));
    text.push_str("ENDSEC;\n");
    text.push_str("END-ISO-10303-21;\n");
    Ok(StepDocument {
        text,
        surface_count: grids.len(),
    })
}

/// Serialize a complex (current effective geometry) into a STEP document.
pub fn document_from_complex(complex: &PatchComplex, name: &str) -> Result<StepDocument> {
    document_from_grids(&complex.effective_geometry(), name)
}

/// Validity-checked STEP export to disk.
pub fn write_step(complex: &PatchComplex, path: &Path) -> Result<StepDocument> {
    let (valid, reason) = crate::metrics::validity_check(complex);
    if !valid {
        return Err(Error::Input(format!("refusing to export invalid complex: {reason}")));
    }
    let doc = document_from_complex(complex, DOCUMENT_NAME)?;
    std::fs::write(path, &doc.text)?;
    Ok(doc)
}

/// STEP export of raw grids (patch dumps), without the complex-level checks.
pub fn write_step_grids(grids: &[ControlGrid], path: &Path) -> Result<StepDocument> {
    let doc = document_from_grids(grids, DOCUMENT_NAME)?;
    std::fs::write(path, &doc.text)?;
    Ok(doc)
}

// ---------------------------------------------------------------------------
// Subset reader
// ---------------------------------------------------------------------------

/// Parsed STEP argument tree.
#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Num(f64),
    Id(usize),
    Str(String),
    Enum(String),
    Star,
    Dollar,
    List(Vec<Arg>),
    /// Typed value like `LENGTH_MEASURE(1.0E-7)`.
    Typed(String, Vec<Arg>),
}

struct Cursor<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, path: &str) -> Cursor<'a> {
        Cursor {
            text,
            bytes: text.as_bytes(),
            pos: 0,
            path: path.to_string(),
        }
    }

    fn line(&self) -> usize {
        self.text[..self.pos].matches('\n').count() + 1
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(&self.path, self.line(), message)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!(
                "expected '{}', found {:?}",
                c as char,
                self.peek().map(|b| b as char)
            )))
        }
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.pos < self.bytes.len() && pred(self.bytes[self.pos]) {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn keyword(&mut self) -> &'a str {
        self.take_while(|b| b.is_ascii_alphanumeric() || b == b'_')
    }

    fn parse_args(&mut self) -> Result<Vec<Arg>> {
        self.eat(b'(')?;
        let mut args = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(args);
                }
                Some(b',') => {
                    self.pos += 1;
                }
                Some(_) => args.push(self.parse_arg()?),
                None => return Err(self.error("unterminated argument list")),
            }
        }
    }

    fn parse_arg(&mut self) -> Result<Arg> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                let inner = self.parse_args()?;
                Ok(Arg::List(inner))
            }
            Some(b'#') => {
                self.pos += 1;
                let digits = self.take_while(|b| b.is_ascii_digit());
                digits
                    .parse()
                    .map(Arg::Id)
                    .map_err(|_| self.error("bad entity reference"))
            }
            Some(b'\'') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\'' {
                    self.pos += 1;
                }
                if self.pos >= self.bytes.len() {
                    return Err(self.error("unterminated string"));
                }
                let s = self.text[start..self.pos].to_string();
                self.pos += 1;
                Ok(Arg::Str(s))
            }
            Some(b'.') => {
                self.pos += 1;
                let word = self.take_while(|b| b != b'.');
                self.eat(b'.')?;
                Ok(Arg::Enum(word.to_string()))
            }
            Some(b'*') => {
                self.pos += 1;
                Ok(Arg::Star)
            }
            Some(b'$') => {
                self.pos += 1;
                Ok(Arg::Dollar)
            }
            Some(c) if c == b'-' || c == b'+' || c.is_ascii_digit() => {
                let tok = self.take_while(|b| {
                    b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+' || b == b'E' || b == b'e'
                });
                tok.parse()
                    .map(Arg::Num)
                    .map_err(|_| self.error(format!("bad numeric literal '{tok}'")))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.keyword().to_string();
                self.skip_ws();
                let args = if self.peek() == Some(b'(') {
                    self.parse_args()?
                } else {
                    Vec::new()
                };
                Ok(Arg::Typed(name, args))
            }
            other => Err(self.error(format!("unexpected character {:?}", other.map(|b| b as char)))),
        }
    }
}

fn arg_num(arg: &Arg) -> Result<f64> {
    match arg {
        Arg::Num(x) => Ok(*x),
        _ => Err(Error::Unsupported(format!("expected number, found {arg:?}"))),
    }
}

/// Entity names the writer emits besides the geometry; the reader accepts
/// and ignores them.
const SCAFFOLD_SIMPLE: [&str; 10] = [
    "APPLICATION_CONTEXT",
    "APPLICATION_PROTOCOL_DEFINITION",
    "PRODUCT_CONTEXT",
    "PRODUCT",
    "PRODUCT_DEFINITION_FORMATION",
    "PRODUCT_DEFINITION_CONTEXT",
    "PRODUCT_DEFINITION",
    "PRODUCT_DEFINITION_SHAPE",
    "UNCERTAINTY_MEASURE_WITH_UNIT",
    "SHAPE_REPRESENTATION",
];

const SCAFFOLD_COMPLEX_MEMBERS: [&str; 9] = [
    "LENGTH_UNIT",
    "NAMED_UNIT",
    "SI_UNIT",
    "PLANE_ANGLE_UNIT",
    "SOLID_ANGLE_UNIT",
    "GEOMETRIC_REPRESENTATION_CONTEXT",
    "GLOBAL_UNCERTAINTY_ASSIGNED_CONTEXT",
    "GLOBAL_UNIT_ASSIGNED_CONTEXT",
    "REPRESENTATION_CONTEXT",
];

const SURFACE_CLUSTER_MEMBERS: [&str; 7] = [
    "BOUNDED_SURFACE",
    "B_SPLINE_SURFACE",
    "B_SPLINE_SURFACE_WITH_KNOTS",
    "GEOMETRIC_REPRESENTATION_ITEM",
    "RATIONAL_B_SPLINE_SURFACE",
    "REPRESENTATION_ITEM",
    "SURFACE",
];

/// Recover control grids from a document produced by [`write_step`].
///
/// Entities outside the writer's grammar are rejected with an error naming
/// the entity; truncated or malformed files produce parse errors.
pub fn read_step_subset(path: &Path) -> Result<Vec<ControlGrid>> {
    let text = std::fs::read_to_string(path)?;
    parse_step_subset(&text, &path.display().to_string())
}

pub fn parse_step_subset(text: &str, path: &str) -> Result<Vec<ControlGrid>> {
    let mut cursor = Cursor::new(text, path);
    cursor.skip_ws();
    for expected in ["ISO-10303-21", ";"] {
        cursor.skip_ws();
        let got = if expected == ";" {
            cursor.eat(b';').map(|_| ";")?
        } else {
            let kw = cursor.take_while(|b| b == b'-' || b.is_ascii_alphanumeric());
            if kw != expected {
                return Err(cursor.error(format!("expected '{expected}', found '{kw}'")));
            }
            kw
        };
        let _ = got;
    }
    // Skip the header section verbatim up to the DATA keyword.
    let data_pos = cursor.text[cursor.pos..]
        .find("DATA;")
        .ok_or_else(|| cursor.error("missing DATA section"))?;
    cursor.pos += data_pos + "DATA;".len();

    let mut points: HashMap<usize, Vec3> = HashMap::new();
    // (id, point-id grid, weight grid), collected in file order.
    let mut surfaces: Vec<(usize, Vec<Vec<usize>>, Vec<Vec<f64>>)> = Vec::new();

    loop {
        cursor.skip_ws();
        if cursor.peek() != Some(b'#') {
            let kw = cursor.keyword();
            if kw == "ENDSEC" {
                cursor.skip_ws();
                cursor.eat(b';')?;
                break;
            }
            return Err(cursor.error(format!("expected entity record or ENDSEC, found '{kw}'")));
        }
        cursor.eat(b'#')?;
        let id: usize = cursor
            .take_while(|b| b.is_ascii_digit())
            .parse()
            .map_err(|_| cursor.error("bad entity id"))?;
        cursor.skip_ws();
        cursor.eat(b'=')?;
        cursor.skip_ws();

        if cursor.peek() == Some(b'(') {
            // Complex entity instance.
            cursor.eat(b'(')?;
            let mut members: Vec<(String, Vec<Arg>)> = Vec::new();
            loop {
                cursor.skip_ws();
                if cursor.peek() == Some(b')') {
                    cursor.pos += 1;
                    break;
                }
                let name = cursor.keyword().to_string();
                if name.is_empty() {
                    return Err(cursor.error("expected entity name in complex instance"));
                }
                cursor.skip_ws();
                let args = cursor.parse_args()?;
                members.push((name, args));
            }
            cursor.skip_ws();
            cursor.eat(b';')?;

            let names: Vec<&str> = members.iter().map(|(n, _)| n.as_str()).collect();
            if names.contains(&"B_SPLINE_SURFACE") {
                for name in &names {
                    if !SURFACE_CLUSTER_MEMBERS.contains(name) {
                        return Err(Error::Unsupported(name.to_string()));
                    }
                }
                let bss = &members
                    .iter()
                    .find(|(n, _)| n == "B_SPLINE_SURFACE")
                    .expect("checked above")
                    .1;
                if bss.len() < 3 || arg_num(&bss[0])? != 3.0 || arg_num(&bss[1])? != 3.0 {
                    return Err(Error::Unsupported(
                        "B_SPLINE_SURFACE with degree other than (3,3)".into(),
                    ));
                }
                let grid_ids: Vec<Vec<usize>> = match &bss[2] {
                    Arg::List(rows) => rows
                        .iter()
                        .map(|row| match row {
                            Arg::List(cells) => cells
                                .iter()
                                .map(|c| match c {
                                    Arg::Id(id) => Ok(*id),
                                    _ => Err(Error::Unsupported("non-reference control point".into())),
                                })
                                .collect(),
                            _ => Err(Error::Unsupported("malformed control point grid".into())),
                        })
                        .collect::<Result<_>>()?,
                    _ => return Err(Error::Unsupported("malformed control point grid".into())),
                };
                let rational = &members
                    .iter()
                    .find(|(n, _)| n == "RATIONAL_B_SPLINE_SURFACE")
                    .ok_or_else(|| Error::Unsupported("non-rational B_SPLINE_SURFACE".into()))?
                    .1;
                let weights: Vec<Vec<f64>> = match rational.first() {
                    Some(Arg::List(rows)) => rows
                        .iter()
                        .map(|row| match row {
                            Arg::List(cells) => cells.iter().map(arg_num).collect(),
                            _ => Err(Error::Unsupported("malformed weight grid".into())),
                        })
                        .collect::<Result<_>>()?,
                    _ => return Err(Error::Unsupported("malformed weight grid".into())),
                };
                if grid_ids.len() != 4
                    || grid_ids.iter().any(|r| r.len() != 4)
                    || weights.len() != 4
                    || weights.iter().any(|r| r.len() != 4)
                {
                    return Err(Error::Unsupported(
                        "B_SPLINE_SURFACE control net is not 4x4".into(),
                    ));
                }
                surfaces.push((id, grid_ids, weights));
            } else {
                for name in &names {
                    if !SCAFFOLD_COMPLEX_MEMBERS.contains(name) {
                        return Err(Error::Unsupported(name.to_string()));
                    }
                }
            }
        } else {
            let name = cursor.keyword().to_string();
            if name.is_empty() {
                return Err(cursor.error("expected entity name"));
            }
            cursor.skip_ws();
            let args = cursor.parse_args()?;
            cursor.skip_ws();
            cursor.eat(b';')?;
            match name.as_str() {
                "CARTESIAN_POINT" => {
                    let coords = match args.get(1) {
                        Some(Arg::List(c)) if c.len() == 3 => {
                            vec3(arg_num(&c[0])?, arg_num(&c[1])?, arg_num(&c[2])?)
                        }
                        _ => {
                            return Err(Error::Unsupported(
                                "CARTESIAN_POINT without 3 coordinates".into(),
                            ))
                        }
                    };
                    points.insert(id, coords);
                }
                "SHAPE_DEFINITION_REPRESENTATION" => {}
                other if SCAFFOLD_SIMPLE.contains(&other) => {}
                other => return Err(Error::Unsupported(other.to_string())),
            }
        }
    }
    cursor.skip_ws();
    let trailer = cursor.take_while(|b| b == b'-' || b.is_ascii_alphanumeric());
    if trailer != "END-ISO-10303-21" {
        return Err(cursor.error("missing END-ISO-10303-21 trailer"));
    }

    let mut grids = Vec::with_capacity(surfaces.len());
    for (sid, grid_ids, weights) in surfaces {
        let mut grid = ControlGrid {
            points: [[Vec3::ZERO; 4]; 4],
            weights: [[1.0; 4]; 4],
        };
        for i in 0..4 {
            for j in 0..4 {
                grid.points[i][j] = *points.get(&grid_ids[i][j]).ok_or_else(|| {
                    Error::parse(path, 0, format!("surface #{sid} references undefined point #{}", grid_ids[i][j]))
                })?;
                grid.weights[i][j] = weights[i][j];
            }
        }
        grids.push(grid);
    }
    Ok(grids)
}
