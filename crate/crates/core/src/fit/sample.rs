//! Differentiable surface sampling: area-weighted triangle selection plus
//! uniform barycentric coordinates. Each sample keeps its (triangle,
//! barycentric) linkage so gradients flow to the triangle vertices through
//! fixed weights.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    /// Sample positions at draw time.
    pub points: Vec<Vec3>,
    /// Source triangle per sample.
    pub triangle: Vec<u32>,
    /// Barycentric weights per sample; sum to 1.
    pub barycentric: Vec<[f64; 3]>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Recompute sample positions from (possibly updated) vertices through
    /// the fixed linkage.
    pub fn positions(&self, vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
        self.triangle
            .iter()
            .zip(&self.barycentric)
            .map(|(&t, b)| {
                let tri = triangles[t as usize];
                vertices[tri[0] as usize] * b[0]
                    + vertices[tri[1] as usize] * b[1]
                    + vertices[tri[2] as usize] * b[2]
            })
            .collect()
    }

    /// Scatter per-sample cotangents onto mesh vertices through the fixed
    /// barycentric weights.
    pub fn scatter_to_vertices(
        &self,
        cotangents: &[Vec3],
        triangles: &[[u32; 3]],
        out: &mut [Vec3],
    ) {
        for ((&t, b), g) in self.triangle.iter().zip(&self.barycentric).zip(cotangents) {
            let tri = triangles[t as usize];
            for k in 0..3 {
                out[tri[k] as usize] += *g * b[k];
            }
        }
    }
}

/// Draw `n` points uniformly by area. Deterministic for a given seed.
pub fn sample_triangles(
    vertices: &[Vec3],
    triangles: &[[u32; 3]],
    n: usize,
    seed: u64,
) -> Result<SurfaceSamples> {
    if triangles.is_empty() {
        return Err(Error::Input("cannot sample an empty mesh".into()));
    }
    if n == 0 {
        return Err(Error::Input("sample count must be >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(triangles.len());
    let mut total = 0.0;
    for t in triangles {
        let a = vertices[t[0] as usize];
        let b = vertices[t[1] as usize];
        let c = vertices[t[2] as usize];
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Input("mesh has zero total area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut triangle = Vec::with_capacity(n);
    let mut barycentric = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen_range(0.0..total);
        let idx = cumulative.partition_point(|&c| c <= target).min(triangles.len() - 1);
        let r1: f64 = rng.gen();
        let r2: f64 = rng.gen();
        let s = r1.sqrt();
        let b = [1.0 - s, s * (1.0 - r2), s * r2];
        let tri = triangles[idx];
        points.push(
            vertices[tri[0] as usize] * b[0]
                + vertices[tri[1] as usize] * b[1]
                + vertices[tri[2] as usize] * b[2],
        );
        triangle.push(idx as u32);
        barycentric.push(b);
    }
    Ok(SurfaceSamples {
        points,
        triangle,
        barycentric,
    })
}
