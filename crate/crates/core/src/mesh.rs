//! Triangle mesh and point cloud ingestion types.

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Indexed triangle mesh, the pipeline's mesh ingestion type.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex normals when the source file provides them.
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
        TriangleMesh {
            vertices,
            triangles,
            normals: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vertices {
            if !v.is_finite() {
                return Err(Error::Input("mesh contains non-finite vertex".into()));
            }
        }
        let n = self.vertices.len() as u32;
        for t in &self.triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::Input(format!(
                    "triangle index out of range: {t:?} with {n} vertices"
                )));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.vertices.len() {
                return Err(Error::Input("normal count does not match vertex count".into()));
            }
        }
        Ok(())
    }

    pub fn triangle_corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_corners(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    /// Geometric (non-normalized input) triangle normal; zero for degenerate
    /// triangles.
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_corners(t);
        (b - a).cross(c - a).normalized(1e-300).unwrap_or(Vec3::ZERO)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounds, or `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(&self.vertices)
    }
}

/// Point cloud with optional per-point normals.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(&self.points)
    }
}

pub(crate) fn bounds_of(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let mut it = points.iter();
    let first = *it.next()?;
    let mut lo = first;
    let mut hi = first;
    for p in it {
        lo = lo.min_components(*p);
        hi = hi.max_components(*p);
    }
    Some((lo, hi))
}
