//! Analytic desk-scale test shapes.
//!
//! Small triangle-mesh generators (sphere, torus, prismatic parts) used by
//! the test suites, the benchmarks, and quick CLI experiments. All meshes are
//! watertight enough for surface voxelization; exact watertightness is not
//! required by the pipeline.

use crate::math::{vec3, Vec3};
use crate::mesh::TriangleMesh;

/// UV sphere of given radius centered at the origin.
pub fn sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    let mut vertices = vec![vec3(0.0, 0.0, radius)];
    for ring in 1..rings {
        let phi = std::f64::consts::PI * ring as f64 / rings as f64;
        for seg in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * seg as f64 / segments as f64;
            vertices.push(vec3(
                radius * phi.sin() * theta.cos(),
                radius * phi.sin() * theta.sin(),
                radius * phi.cos(),
            ));
        }
    }
    vertices.push(vec3(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let ring_base = |ring: usize| 1 + (ring - 1) * segments;
    let mut triangles = Vec::new();
    for seg in 0..segments {
        let next = (seg + 1) % segments;
        triangles.push([0, (ring_base(1) + seg) as u32, (ring_base(1) + next) as u32]);
        triangles.push([
            south,
            (ring_base(rings - 1) + next) as u32,
            (ring_base(rings - 1) + seg) as u32,
        ]);
    }
    for ring in 1..rings - 1 {
        for seg in 0..segments {
            let next = (seg + 1) % segments;
            let a = (ring_base(ring) + seg) as u32;
            let b = (ring_base(ring) + next) as u32;
            let c = (ring_base(ring + 1) + next) as u32;
            let d = (ring_base(ring + 1) + seg) as u32;
            triangles.push([a, c, b]);
            triangles.push([a, d, c]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, major_segments: usize, minor_segments: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    for i in 0..major_segments {
        let a = 2.0 * std::f64::consts::PI * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let b = 2.0 * std::f64::consts::PI * j as f64 / minor_segments as f64;
            let r = major + minor * b.cos();
            vertices.push(vec3(r * a.cos(), r * a.sin(), minor * b.sin()));
        }
    }
    let mut triangles = Vec::new();
    for i in 0..major_segments {
        let ni = (i + 1) % major_segments;
        for j in 0..minor_segments {
            let nj = (j + 1) % minor_segments;
            let a = (i * minor_segments + j) as u32;
            let b = (ni * minor_segments + j) as u32;
            let c = (ni * minor_segments + nj) as u32;
            let d = (i * minor_segments + nj) as u32;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Extrude a simple closed polygon (CCW in the xy plane) along z.
///
/// Caps are fan-triangulated from the polygon centroid, so the polygon must
/// be star-shaped around its centroid — true for every profile used here.
pub fn extrude_polygon(profile: &[(f64, f64)], z0: f64, z1: f64) -> TriangleMesh {
    let n = profile.len();
    let centroid = {
        let (mut cx, mut cy) = (0.0, 0.0);
        for &(x, y) in profile {
            cx += x;
            cy += y;
        }
        (cx / n as f64, cy / n as f64)
    };
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for &(x, y) in profile {
        vertices.push(vec3(x, y, z0));
    }
    for &(x, y) in profile {
        vertices.push(vec3(x, y, z1));
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(vec3(centroid.0, centroid.1, z0));
    let top_center = vertices.len() as u32;
    vertices.push(vec3(centroid.0, centroid.1, z1));

    let mut triangles = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        let (b0, b1) = (i as u32, j as u32);
        let (t0, t1) = ((i + n) as u32, (j + n) as u32);
        // Side wall, outward.
        triangles.push([b0, b1, t1]);
        triangles.push([b0, t1, t0]);
        // Caps: bottom faces -z, top faces +z.
        triangles.push([bottom_center, b1, b0]);
        triangles.push([top_center, t0, t1]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Axis-aligned box given min/max corners.
pub fn boxed(lo: Vec3, hi: Vec3) -> TriangleMesh {
    let p = |mask: usize| {
        vec3(
            if mask & 1 == 0 { lo.x } else { hi.x },
            if mask & 2 == 0 { lo.y } else { hi.y },
            if mask & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let vertices: Vec<Vec3> = (0..8).map(p).collect();
    let quads = [
        [0usize, 2, 6, 4], // -x
        [1, 5, 7, 3],      // +x
        [0, 4, 5, 1],      // -y
        [2, 3, 7, 6],      // +y
        [0, 1, 3, 2],      // -z
        [4, 6, 7, 5],      // +z
    ];
    let mut triangles = Vec::new();
    for q in quads {
        triangles.push([q[0] as u32, q[1] as u32, q[2] as u32]);
        triangles.push([q[0] as u32, q[2] as u32, q[3] as u32]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Concatenate meshes into one (no vertex welding; fine for voxelization).
pub fn merge(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for m in meshes {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&m.vertices);
        triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }
    TriangleMesh::new(vertices, triangles)
}

/// Cylinder with caps along z.
pub fn capped_cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let profile: Vec<(f64, f64)> = (0..segments)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            (radius * a.cos(), radius * a.sin())
        })
        .collect();
    extrude_polygon(&profile, -height / 2.0, height / 2.0)
}

/// Capped cone (tapered cylinder) along z.
pub fn cone(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    for i in 0..segments {
        let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
        vertices.push(vec3(radius * a.cos(), radius * a.sin(), -height / 2.0));
    }
    let apex = vertices.len() as u32;
    vertices.push(vec3(0.0, 0.0, height / 2.0));
    let base_center = vertices.len() as u32;
    vertices.push(vec3(0.0, 0.0, -height / 2.0));
    let mut triangles = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        triangles.push([i as u32, j as u32, apex]);
        triangles.push([base_center, j as u32, i as u32]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// L-shaped bracket: two orthogonal slabs.
pub fn l_bracket() -> TriangleMesh {
    merge(&[
        boxed(vec3(-0.5, -0.5, -0.5), vec3(0.5, 0.0, -0.1)),
        boxed(vec3(-0.5, -0.5, -0.5), vec3(-0.1, 0.0, 0.5)),
    ])
}

/// Gear-like extrusion with radial teeth.
pub fn gear(teeth: usize, outer: f64, inner: f64, height: f64) -> TriangleMesh {
    let steps = teeth * 4;
    let profile: Vec<(f64, f64)> = (0..steps)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
            let r = if (i / 2) % 2 == 0 { outer } else { inner };
            (r * a.cos(), r * a.sin())
        })
        .collect();
    extrude_polygon(&profile, -height / 2.0, height / 2.0)
}

/// Plus-shaped extrusion.
pub fn cross_extrusion(arm: f64, thickness: f64, height: f64) -> TriangleMesh {
    let t = thickness / 2.0;
    let profile = [
        (t, t),
        (t, arm),
        (-t, arm),
        (-t, t),
        (-arm, t),
        (-arm, -t),
        (-t, -t),
        (-t, -arm),
        (t, -arm),
        (t, -t),
        (arm, -t),
        (arm, t),
    ];
    extrude_polygon(&profile, -height / 2.0, height / 2.0)
}

/// Triangular prism (ramp/wedge).
pub fn wedge(width: f64, depth: f64, height: f64) -> TriangleMesh {
    let profile = [
        (-width / 2.0, -height / 2.0),
        (width / 2.0, -height / 2.0),
        (-width / 2.0, height / 2.0),
    ];
    let mesh = extrude_polygon(&profile, -depth / 2.0, depth / 2.0);
    mesh
}

/// Hollow tube (annular extrusion) along z: outer wall, inner wall, and two
/// flat ring caps.
pub fn tube(outer: f64, inner: f64, height: f64, segments: usize) -> TriangleMesh {
    let (z0, z1) = (-height / 2.0, height / 2.0);
    let mut vertices = Vec::new();
    for &(r, z) in &[(outer, z0), (outer, z1), (inner, z0), (inner, z1)] {
        for i in 0..segments {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vertices.push(vec3(r * a.cos(), r * a.sin(), z));
        }
    }
    let ring = |k: usize, i: usize| (k * segments + i % segments) as u32;
    let mut triangles = Vec::new();
    for i in 0..segments {
        let j = i + 1;
        // Outer wall (outward).
        triangles.push([ring(0, i), ring(0, j), ring(1, j)]);
        triangles.push([ring(0, i), ring(1, j), ring(1, i)]);
        // Inner wall (faces the hole).
        triangles.push([ring(2, i), ring(3, j), ring(2, j)]);
        triangles.push([ring(2, i), ring(3, i), ring(3, j)]);
        // Bottom ring cap (-z).
        triangles.push([ring(0, i), ring(2, j), ring(0, j)]);
        triangles.push([ring(0, i), ring(2, i), ring(2, j)]);
        // Top ring cap (+z).
        triangles.push([ring(1, i), ring(1, j), ring(3, j)]);
        triangles.push([ring(1, i), ring(3, j), ring(3, i)]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// The ten-shape desk battery used by protocol-level tests and benchmarks.
pub fn desk_battery() -> Vec<(&'static str, TriangleMesh)> {
    vec![
        ("sphere", sphere(0.5, 24, 32)),
        ("torus", torus(0.34, 0.15, 36, 18)),
        ("cylinder", capped_cylinder(0.35, 0.9, 40)),
        ("l_bracket", l_bracket()),
        ("gear", gear(9, 0.48, 0.36, 0.25)),
        ("box", boxed(vec3(-0.45, -0.3, -0.25), vec3(0.45, 0.3, 0.25))),
        ("plate", boxed(vec3(-0.5, -0.35, -0.06), vec3(0.5, 0.35, 0.06))),
        ("cross", cross_extrusion(0.48, 0.22, 0.3)),
        ("wedge", wedge(0.9, 0.5, 0.6)),
        ("tube", tube(0.42, 0.26, 0.5, 36)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_meshes_are_valid_and_nondegenerate() {
        for (name, mesh) in desk_battery() {
            mesh.validate().unwrap();
            assert!(mesh.total_area() > 0.0, "{name}");
            assert!(!mesh.triangles.is_empty(), "{name}");
        }
    }

    #[test]
    fn sphere_vertices_lie_on_sphere() {
        let mesh = sphere(0.5, 12, 16);
        for v in &mesh.vertices {
            assert!((v.norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_shapes_have_closed_edge_topology() {
        for (name, mesh) in [
            ("sphere", sphere(0.5, 12, 16)),
            ("torus", torus(0.34, 0.15, 16, 8)),
            ("cylinder", capped_cylinder(0.35, 0.9, 16)),
            ("box", boxed(vec3(-0.4, -0.3, -0.2), vec3(0.4, 0.3, 0.2))),
            ("tube", tube(0.42, 0.26, 0.5, 12)),
            ("gear", gear(5, 0.48, 0.36, 0.25)),
        ] {
            let mut counts = std::collections::HashMap::new();
            for t in &mesh.triangles {
                for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                    let key = (e.0.min(e.1), e.0.max(e.1));
                    *counts.entry(key).or_insert(0u32) += 1;
                }
            }
            assert!(counts.values().all(|&c| c == 2), "{name} not closed");
        }
    }
}
