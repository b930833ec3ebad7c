//! File formats: OBJ and PLY meshes, XYZ point clouds, STEP export with a
//! round-trip subset reader, and structured JSON dumps.

pub mod dump;
pub mod obj;
pub mod ply;
pub mod step;
pub mod xyz;

use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{PointCloud, TriangleMesh};

pub use obj::{load_obj, write_obj};
pub use ply::{load_ply_mesh, load_ply_points};
pub use step::{read_step_subset, write_step, StepDocument};
pub use xyz::load_xyz;

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

/// Load a triangle mesh by extension (obj, ply).
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match extension(path).as_str() {
        "obj" => load_obj(path),
        "ply" => load_ply_mesh(path),
        other => Err(Error::Input(format!(
            "unsupported mesh extension '{other}' for {} (expected obj or ply)",
            path.display()
        ))),
    }
}

/// Load a point cloud by extension (xyz, ply).
pub fn load_points(path: &Path) -> Result<PointCloud> {
    match extension(path).as_str() {
        "xyz" => load_xyz(path),
        "ply" => load_ply_points(path),
        other => Err(Error::Input(format!(
            "unsupported point-cloud extension '{other}' for {} (expected xyz or ply)",
            path.display()
        ))),
    }
}
