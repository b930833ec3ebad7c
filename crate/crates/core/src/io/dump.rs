//! Structured JSON dumps: fitted patch geometry and voxel grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bezier::ControlGrid;
use crate::complex::PatchComplex;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriangleMesh;
use crate::voxel::SparseVoxelGrid;

/// One patch as plain arrays: 16 control points and 16 weights in row-major
/// (i·4 + j) order with `i` along `u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRecord {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchDump {
    pub patches: Vec<PatchRecord>,
}

impl PatchDump {
    pub fn from_grids(grids: &[ControlGrid]) -> PatchDump {
        PatchDump {
            patches: grids
                .iter()
                .map(|g| PatchRecord {
                    points: (0..16)
                        .map(|k| g.points[k / 4][k % 4].to_array())
                        .collect(),
                    weights: (0..16).map(|k| g.weights[k / 4][k % 4]).collect(),
                })
                .collect(),
        }
    }

    pub fn from_complex(complex: &PatchComplex) -> PatchDump {
        PatchDump::from_grids(&complex.effective_geometry())
    }

    pub fn to_grids(&self) -> Result<Vec<ControlGrid>> {
        self.patches
            .iter()
            .enumerate()
            .map(|(idx, record)| {
                if record.points.len() != 16 || record.weights.len() != 16 {
                    return Err(Error::Input(format!(
                        "patch {idx}: expected 16 points and 16 weights"
                    )));
                }
                let mut grid = ControlGrid {
                    points: [[Vec3::ZERO; 4]; 4],
                    weights: [[1.0; 4]; 4],
                };
                for k in 0..16 {
                    grid.points[k / 4][k % 4] = Vec3::from_array(record.points[k]);
                    grid.weights[k / 4][k % 4] = record.weights[k];
                }
                grid.validate()
                    .map_err(|e| Error::Input(format!("patch {idx}: {e}")))?;
                Ok(grid)
            })
            .collect()
    }
}

pub fn write_patch_dump(complex: &PatchComplex, path: &Path) -> Result<()> {
    let dump = PatchDump::from_complex(complex);
    let mut text = serde_json::to_string_pretty(&dump).expect("dump serialization");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_patch_dump(path: &Path) -> Result<Vec<ControlGrid>> {
    let text = std::fs::read_to_string(path)?;
    let dump: PatchDump = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&path.display().to_string(), e.line(), e.to_string()))?;
    dump.to_grids()
}

/// Occupied-cell dump emitted by the `voxelize` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoxelDump {
    pub resolution: usize,
    pub cells: Vec<[i32; 3]>,
}

pub fn write_voxel_dump(grid: &SparseVoxelGrid, path: &Path) -> Result<()> {
    let dump = VoxelDump {
        resolution: grid.resolution,
        cells: grid.occupied.iter().copied().collect(),
    };
    let mut text = serde_json::to_string_pretty(&dump).expect("dump serialization");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Tessellate standalone grids (no adjacency available, so no welding) into
/// one concatenated triangle mesh.
pub fn tessellate_grids(grids: &[ControlGrid], resolution: usize) -> Result<TriangleMesh> {
    if grids.is_empty() {
        return Err(Error::Input("no patches to tessellate".into()));
    }
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for grid in grids {
        let mesh = grid.tessellate(resolution, false)?;
        let base = vertices.len() as u32;
        vertices.extend(mesh.points.iter().map(|p| p.position));
        triangles.extend(mesh.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
    Ok(TriangleMesh::new(vertices, triangles))
}
