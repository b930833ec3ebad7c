//! Voxel-based initialization: mesh normalization, sparse surface
//! voxelization, exterior flood fill, and boundary quad extraction.
//!
//! The voxelization is surface-based (triangle–box intersection with closed
//! boxes, so touching counts) and therefore conservative and robust to
//! non-watertight input. Combined with the exterior flood fill it removes
//! internal faces: only faces between occupied cells and air reachable from
//! outside the grid survive.

use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::complex::{build_complex, LatticeQuad, PatchComplex, FACE_DIRS};
use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};
use crate::mesh::{PointCloud, TriangleMesh};

pub const MIN_RESOLUTION: usize = 4;
pub const MAX_RESOLUTION: usize = 256;

/// Sparse occupancy over `[0,R)³` cells covering the normalized cube
/// `[-0.5, 0.5]³`; cell size is `1/R`.
#[derive(Debug, Clone)]
pub struct SparseVoxelGrid {
    pub resolution: usize,
    pub occupied: BTreeSet<[i32; 3]>,
}

impl SparseVoxelGrid {
    pub fn contains(&self, cell: [i32; 3]) -> bool {
        self.occupied.contains(&cell)
    }

    pub fn in_range(&self, cell: [i32; 3]) -> bool {
        let r = self.resolution as i32;
        cell.iter().all(|&c| c >= 0 && c < r)
    }
}

/// Isotropic center-and-scale transform onto the normalized cube.
#[derive(Debug, Clone, Copy)]
pub struct NormalizeTransform {
    pub center: Vec3,
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn identity() -> NormalizeTransform {
        NormalizeTransform {
            center: Vec3::ZERO,
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        p / self.scale + self.center
    }
}

fn normalize_transform(bounds: Option<(Vec3, Vec3)>) -> Result<NormalizeTransform> {
    let (lo, hi) = bounds.ok_or_else(|| Error::Input("empty geometry".into()))?;
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    if !(longest > 1e-12) || !longest.is_finite() {
        return Err(Error::Input(format!("degenerate geometry: longest extent {longest}")));
    }
    Ok(NormalizeTransform {
        center: (lo + hi) * 0.5,
        scale: 1.0 / longest,
    })
}

/// Center the mesh at the origin and scale its longest bounding-box side
/// to 1. Returns the transform so results can be mapped back.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizeTransform)> {
    mesh.validate()?;
    if mesh.triangles.is_empty() || !(mesh.total_area() > 0.0) {
        return Err(Error::Input("mesh has no triangle with positive area".into()));
    }
    let transform = normalize_transform(mesh.bounds())?;
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = transform.apply(*v);
    }
    Ok((out, transform))
}

/// Point-cloud counterpart of [`normalize_mesh`].
pub fn normalize_points(cloud: &PointCloud) -> Result<(PointCloud, NormalizeTransform)> {
    if cloud.points.is_empty() {
        return Err(Error::Input("point cloud is empty".into()));
    }
    let transform = normalize_transform(cloud.bounds())?;
    let mut out = cloud.clone();
    for p in &mut out.points {
        *p = transform.apply(*p);
    }
    Ok((out, transform))
}

fn check_resolution(r: usize) -> Result<()> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&r) {
        return Err(Error::Config(format!(
            "voxel resolution {r} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
        )));
    }
    Ok(())
}

/// Triangle–box intersection via the separating axis theorem over closed
/// boxes: touching configurations count as intersecting. Axes with nearly
/// zero length are skipped, which only errs toward intersection.
///
/// The box is inflated by an absolute slack of 1e-12 so that geometry lying
/// exactly on a cell boundary (guaranteed along the longest axis after
/// normalization) is marked on both sides regardless of rounding in `1/R`.
pub fn triangle_intersects_box(tri: [Vec3; 3], center: Vec3, half: Vec3) -> bool {
    let half = half + vec3(1e-12, 1e-12, 1e-12);
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];

    // Box face normals: plain AABB overlap.
    for axis in 0..3 {
        let lo = v[0][axis].min(v[1][axis]).min(v[2][axis]);
        let hi = v[0][axis].max(v[1][axis]).max(v[2][axis]);
        if lo > half[axis] || hi < -half[axis] {
            return false;
        }
    }

    let edges = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];

    // Triangle plane.
    let n = edges[0].cross(edges[1]);
    if n.norm_squared() > 1e-24 {
        let d = n.dot(v[0]);
        let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
        if d > r || d < -r {
            return false;
        }
    }

    // Nine edge cross products.
    for axis in 0..3 {
        let unit = {
            let mut u = Vec3::ZERO;
            u[axis] = 1.0;
            u
        };
        for edge in &edges {
            let a = unit.cross(*edge);
            if a.norm_squared() < 1e-24 {
                continue;
            }
            let p0 = a.dot(v[0]);
            let p1 = a.dot(v[1]);
            let p2 = a.dot(v[2]);
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            let r = half.x * a.x.abs() + half.y * a.y.abs() + half.z * a.z.abs();
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}

/// Mark every cell whose closed box intersects any triangle of the
/// (normalized) mesh.
pub fn voxelize(mesh: &TriangleMesh, resolution: usize) -> Result<SparseVoxelGrid> {
    check_resolution(resolution)?;
    mesh.validate()?;
    let r = resolution as i32;
    let h = 1.0 / resolution as f64;
    let half = vec3(h, h, h) * 0.5;
    let cell_range = |lo: f64, hi: f64| -> (i32, i32) {
        let a = (((lo + 0.5) * resolution as f64).floor() as i32 - 1).max(0);
        let b = (((hi + 0.5) * resolution as f64).floor() as i32 + 1).min(r - 1);
        (a, b)
    };
    let per_triangle: Vec<Vec<[i32; 3]>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangle_corners(t);
            let lo = tri[0].min_components(tri[1]).min_components(tri[2]);
            let hi = tri[0].max_components(tri[1]).max_components(tri[2]);
            let (x0, x1) = cell_range(lo.x, hi.x);
            let (y0, y1) = cell_range(lo.y, hi.y);
            let (z0, z1) = cell_range(lo.z, hi.z);
            let mut cells = Vec::new();
            for x in x0..=x1 {
                for y in y0..=y1 {
                    for z in z0..=z1 {
                        let center = vec3(
                            (x as f64 + 0.5) * h - 0.5,
                            (y as f64 + 0.5) * h - 0.5,
                            (z as f64 + 0.5) * h - 0.5,
                        );
                        if triangle_intersects_box(tri, center, half) {
                            cells.push([x, y, z]);
                        }
                    }
                }
            }
            cells
        })
        .collect();
    let mut occupied = BTreeSet::new();
    for cells in per_triangle {
        occupied.extend(cells);
    }
    Ok(SparseVoxelGrid {
        resolution,
        occupied,
    })
}

/// Mark every cell containing at least one point. No density threshold.
pub fn voxelize_points(cloud: &PointCloud, resolution: usize) -> Result<SparseVoxelGrid> {
    check_resolution(resolution)?;
    if cloud.points.is_empty() {
        return Err(Error::Input("point cloud is empty".into()));
    }
    let r = resolution as i32;
    let mut occupied = BTreeSet::new();
    for p in &cloud.points {
        if !p.is_finite() {
            return Err(Error::Input("point cloud contains non-finite point".into()));
        }
        let cell_of = |x: f64| (((x + 0.5) * resolution as f64).floor() as i32).clamp(0, r - 1);
        occupied.insert([cell_of(p.x), cell_of(p.y), cell_of(p.z)]);
    }
    Ok(SparseVoxelGrid {
        resolution,
        occupied,
    })
}

/// Exterior air: unoccupied cells reachable from outside the grid.
#[derive(Debug, Clone)]
pub struct ExteriorAir {
    resolution: usize,
    reachable: Vec<bool>,
}

impl ExteriorAir {
    fn index(&self, cell: [i32; 3]) -> usize {
        let r = self.resolution;
        (cell[0] as usize * r + cell[1] as usize) * r + cell[2] as usize
    }

    /// True for in-range cells marked reachable and for every out-of-range
    /// cell (the virtual padding ring is exterior by construction).
    pub fn is_exterior(&self, cell: [i32; 3]) -> bool {
        let r = self.resolution as i32;
        if cell.iter().any(|&c| c < 0 || c >= r) {
            return true;
        }
        self.reachable[self.index(cell)]
    }

    /// In-range exterior cells, ascending.
    pub fn cells(&self) -> Vec<[i32; 3]> {
        let r = self.resolution as i32;
        let mut out = Vec::new();
        for x in 0..r {
            for y in 0..r {
                for z in 0..r {
                    if self.reachable[((x as usize * self.resolution) + y as usize) * self.resolution + z as usize] {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        self.reachable.iter().filter(|&&b| b).count()
    }
}

/// 6-connected flood fill over unoccupied cells, seeded from a one-cell
/// virtual padding ring outside `[0,R)³`. Cavity air stays unmarked.
pub fn flood_fill_exterior(grid: &SparseVoxelGrid) -> ExteriorAir {
    let r = grid.resolution as i32;
    let pr = (grid.resolution + 2) as i32;
    let pad_index = |c: [i32; 3]| -> usize {
        (((c[0] + 1) * pr + (c[1] + 1)) * pr + (c[2] + 1)) as usize
    };
    let mut visited = vec![false; (pr * pr * pr) as usize];
    let mut queue = VecDeque::new();
    let seed = [-1, -1, -1];
    visited[pad_index(seed)] = true;
    queue.push_back(seed);
    while let Some(cell) = queue.pop_front() {
        for d in FACE_DIRS {
            let next = [cell[0] + d[0], cell[1] + d[1], cell[2] + d[2]];
            if next.iter().any(|&c| c < -1 || c > r) {
                continue;
            }
            if visited[pad_index(next)] {
                continue;
            }
            let in_range = next.iter().all(|&c| c >= 0 && c < r);
            if in_range && grid.contains(next) {
                continue;
            }
            visited[pad_index(next)] = true;
            queue.push_back(next);
        }
    }
    let mut reachable = vec![false; grid.resolution * grid.resolution * grid.resolution];
    for x in 0..r {
        for y in 0..r {
            for z in 0..r {
                if visited[pad_index([x, y, z])] {
                    let idx = ((x as usize * grid.resolution) + y as usize) * grid.resolution + z as usize;
                    reachable[idx] = true;
                }
            }
        }
    }
    ExteriorAir {
        resolution: grid.resolution,
        reachable,
    }
}

/// One outward-oriented quad per face between an occupied cell and exterior
/// air (including the padding ring). Faces toward cavity air or other
/// occupied cells are omitted. Quad order follows the sorted cell order, so
/// identical grids produce identical sequences.
pub fn extract_boundary_quads(grid: &SparseVoxelGrid, exterior: &ExteriorAir) -> Vec<LatticeQuad> {
    let mut quads = Vec::new();
    for &cell in &grid.occupied {
        for (dir, d) in FACE_DIRS.iter().enumerate() {
            let neighbor = [cell[0] + d[0], cell[1] + d[1], cell[2] + d[2]];
            if grid.in_range(neighbor) && grid.contains(neighbor) {
                continue;
            }
            if exterior.is_exterior(neighbor) {
                quads.push(LatticeQuad::cell_face(cell, dir));
            }
        }
    }
    quads
}

/// Input to initialization: a triangle mesh or a raw point cloud.
pub enum VoxelSource<'a> {
    Mesh(&'a TriangleMesh),
    Cloud(&'a PointCloud),
}

/// Normalized copy of the source, for downstream target sampling.
pub enum NormalizedSource {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

/// Everything produced by initialization.
pub struct Initialized {
    /// Initial complex in normalized coordinates, deformation scale `2/R`.
    pub complex: PatchComplex,
    pub grid: SparseVoxelGrid,
    pub transform: NormalizeTransform,
    pub source: NormalizedSource,
}

/// Full initialization pipeline:
/// normalize → voxelize → flood fill → extract quads → build complex.
pub fn initialize(source: &VoxelSource, resolution: usize) -> Result<Initialized> {
    let (grid, transform, normalized) = match source {
        VoxelSource::Mesh(mesh) => {
            let (normalized, transform) = normalize_mesh(mesh)?;
            let grid = voxelize(&normalized, resolution)?;
            (grid, transform, NormalizedSource::Mesh(normalized))
        }
        VoxelSource::Cloud(cloud) => {
            let (normalized, transform) = normalize_points(cloud)?;
            let grid = voxelize_points(&normalized, resolution)?;
            (grid, transform, NormalizedSource::Cloud(normalized))
        }
    };
    let exterior = flood_fill_exterior(&grid);
    let quads = extract_boundary_quads(&grid, &exterior);
    if quads.is_empty() {
        return Err(Error::Input("no surface extracted".into()));
    }
    let mut complex = build_complex(&quads, resolution)?;
    complex.normalize_from_lattice(resolution);
    Ok(Initialized {
        complex,
        grid,
        transform,
        source: normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn quad_mesh(corners: [Vec3; 4]) -> (Vec<Vec3>, Vec<[u32; 3]>) {
        (corners.to_vec(), vec![[0, 1, 2], [0, 2, 3]])
    }

    /// Axis-aligned cube surface mesh spanning [lo, hi]³.
    fn cube_mesh(lo: f64, hi: f64) -> TriangleMesh {
        let corners = |sel: [usize; 4], flip: bool| -> (Vec<Vec3>, Vec<[u32; 3]>) {
            let pts: Vec<Vec3> = (0..8)
                .map(|k| {
                    vec3(
                        if k & 1 == 0 { lo } else { hi },
                        if k & 2 == 0 { lo } else { hi },
                        if k & 4 == 0 { lo } else { hi },
                    )
                })
                .collect();
            let mut quad = [pts[sel[0]], pts[sel[1]], pts[sel[2]], pts[sel[3]]];
            if flip {
                quad.reverse();
            }
            quad_mesh(quad)
        };
        let faces = [
            ([0usize, 2, 6, 4], false),
            ([1, 3, 7, 5], true),
            ([0, 1, 5, 4], true),
            ([2, 3, 7, 6], false),
            ([0, 1, 3, 2], false),
            ([4, 5, 7, 6], true),
        ];
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (sel, flip) in faces {
            let (vs, ts) = corners(sel, flip);
            let base = vertices.len() as u32;
            vertices.extend(vs);
            triangles.extend(ts.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        TriangleMesh::new(vertices, triangles)
    }

    #[test]
    fn normalize_centers_and_scales_cube() {
        let mesh = cube_mesh(0.0, 2.0);
        let (out, t) = normalize_mesh(&mesh).unwrap();
        let (lo, hi) = out.bounds().unwrap();
        assert!((lo - vec3(-0.5, -0.5, -0.5)).norm() < 1e-15);
        assert!((hi - vec3(0.5, 0.5, 0.5)).norm() < 1e-15);
        assert!((t.scale - 0.5).abs() < 1e-15);
        assert!((t.invert(out.vertices[0]) - mesh.vertices[0]).norm() < 1e-12);
    }

    #[test]
    fn normalize_preserves_aspect_ratio() {
        let mut mesh = cube_mesh(0.0, 2.0);
        for v in &mut mesh.vertices {
            v.y *= 0.5;
            v.z *= 0.5;
        }
        let (out, _) = normalize_mesh(&mesh).unwrap();
        let (lo, hi) = out.bounds().unwrap();
        let extent = hi - lo;
        assert!((extent - vec3(1.0, 0.5, 0.5)).norm() < 1e-15);
        assert!((lo + hi).norm() < 1e-15, "centered");
    }

    #[test]
    fn normalize_is_idempotent() {
        let mesh = cube_mesh(-0.5, 0.5);
        let (out, t) = normalize_mesh(&mesh).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.center.norm() < 1e-12);
        for (a, b) in out.vertices.iter().zip(&mesh.vertices) {
            assert!((*a - *b).norm() < 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_degenerate_mesh() {
        let mesh = TriangleMesh::new(vec![vec3(0.0, 0.0, 0.0); 3], vec![[0, 1, 2]]);
        assert!(matches!(normalize_mesh(&mesh), Err(Error::Input(_))));
    }

    #[test]
    fn plane_on_cell_boundary_marks_both_layers() {
        // z = 0 lies exactly between layers 1 and 2 at R = 4; the closed-box
        // test marks both. Oracle: all 64 cells, analytic interval check.
        let (vertices, triangles) = quad_mesh([
            vec3(-0.5, -0.5, 0.0),
            vec3(0.5, -0.5, 0.0),
            vec3(0.5, 0.5, 0.0),
            vec3(-0.5, 0.5, 0.0),
        ]);
        let mesh = TriangleMesh::new(vertices, triangles);
        let grid = voxelize(&mesh, 4).unwrap();
        assert_eq!(grid.occupied.len(), 32);
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    let zlo = z as f64 * 0.25 - 0.5;
                    let zhi = zlo + 0.25;
                    let expect = zlo <= 0.0 && 0.0 <= zhi;
                    assert_eq!(grid.contains([x, y, z]), expect, "cell ({x},{y},{z})");
                }
            }
        }
    }

    #[test]
    fn cube_surface_leaves_interior_cells_empty() {
        let mesh = cube_mesh(-0.5, 0.5);
        let grid = voxelize(&mesh, 4).unwrap();
        assert_eq!(grid.occupied.len(), 56, "64 cells minus 2×2×2 interior");
        for x in 1..3 {
            for y in 1..3 {
                for z in 1..3 {
                    assert!(!grid.contains([x, y, z]));
                }
            }
        }
    }

    #[test]
    fn tiny_triangle_occupies_single_cell() {
        let mesh = TriangleMesh::new(
            vec![
                vec3(0.01, 0.01, 0.01),
                vec3(0.02, 0.01, 0.01),
                vec3(0.01, 0.02, 0.01),
            ],
            vec![[0, 1, 2]],
        );
        let grid = voxelize(&mesh, 4).unwrap();
        assert_eq!(grid.occupied.len(), 1);
        assert!(grid.contains([2, 2, 2]));
    }

    #[test]
    fn voxelize_rejects_out_of_range_resolution() {
        let mesh = cube_mesh(-0.5, 0.5);
        assert!(matches!(voxelize(&mesh, 3), Err(Error::Config(_))));
        assert!(matches!(voxelize(&mesh, 257), Err(Error::Config(_))));
    }

    #[test]
    fn empty_grid_is_fully_exterior() {
        let grid = SparseVoxelGrid {
            resolution: 4,
            occupied: BTreeSet::new(),
        };
        let exterior = flood_fill_exterior(&grid);
        assert_eq!(exterior.count(), 64);
    }

    #[test]
    fn hollow_shell_center_is_cavity() {
        let mut occupied = BTreeSet::new();
        for x in 1..4 {
            for y in 1..4 {
                for z in 1..4 {
                    if [x, y, z] != [2, 2, 2] {
                        occupied.insert([x, y, z]);
                    }
                }
            }
        }
        let grid = SparseVoxelGrid {
            resolution: 5,
            occupied,
        };
        let exterior = flood_fill_exterior(&grid);
        assert!(!exterior.is_exterior([2, 2, 2]), "enclosed cavity");
        assert_eq!(exterior.count(), 125 - 26 - 1);
    }

    /// Independent oracle: DFS over a dense boolean array seeded from every
    /// boundary air cell.
    fn exterior_oracle(grid: &SparseVoxelGrid) -> BTreeSet<[i32; 3]> {
        let r = grid.resolution as i32;
        let mut out = BTreeSet::new();
        let mut stack = Vec::new();
        for x in 0..r {
            for y in 0..r {
                for z in 0..r {
                    let boundary = x == 0 || y == 0 || z == 0 || x == r - 1 || y == r - 1 || z == r - 1;
                    if boundary && !grid.contains([x, y, z]) {
                        stack.push([x, y, z]);
                    }
                }
            }
        }
        while let Some(cell) = stack.pop() {
            if !out.insert(cell) {
                continue;
            }
            for d in FACE_DIRS {
                let next = [cell[0] + d[0], cell[1] + d[1], cell[2] + d[2]];
                if next.iter().all(|&c| c >= 0 && c < r)
                    && !grid.contains(next)
                    && !out.contains(&next)
                {
                    stack.push(next);
                }
            }
        }
        out
    }

    #[test]
    fn flood_fill_matches_bfs_oracle_on_random_grids() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..50 {
            let r = rng.gen_range(4..=12usize);
            let mut occupied = BTreeSet::new();
            let fill = rng.gen_range(0.1..0.6);
            for x in 0..r as i32 {
                for y in 0..r as i32 {
                    for z in 0..r as i32 {
                        if rng.gen_bool(fill) {
                            occupied.insert([x, y, z]);
                        }
                    }
                }
            }
            let grid = SparseVoxelGrid {
                resolution: r,
                occupied,
            };
            let exterior = flood_fill_exterior(&grid);
            let got: BTreeSet<[i32; 3]> = exterior.cells().into_iter().collect();
            assert_eq!(got, exterior_oracle(&grid));
        }
    }

    #[test]
    fn single_voxel_exposes_six_quads() {
        let grid = SparseVoxelGrid {
            resolution: 4,
            occupied: [[1, 2, 1]].into_iter().collect(),
        };
        let quads = extract_boundary_quads(&grid, &flood_fill_exterior(&grid));
        assert_eq!(quads.len(), 6);
    }

    #[test]
    fn full_grid_exposes_only_outer_faces() {
        let mut occupied = BTreeSet::new();
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    occupied.insert([x, y, z]);
                }
            }
        }
        let grid = SparseVoxelGrid {
            resolution: 4,
            occupied,
        };
        let quads = extract_boundary_quads(&grid, &flood_fill_exterior(&grid));
        assert_eq!(quads.len(), 96, "6 sides × 16 faces");
    }

    #[test]
    fn hollow_shell_omits_cavity_faces() {
        let mut occupied = BTreeSet::new();
        for x in 1..4 {
            for y in 1..4 {
                for z in 1..4 {
                    if [x, y, z] != [2, 2, 2] {
                        occupied.insert([x, y, z]);
                    }
                }
            }
        }
        let grid = SparseVoxelGrid {
            resolution: 5,
            occupied,
        };
        let quads = extract_boundary_quads(&grid, &flood_fill_exterior(&grid));
        assert_eq!(quads.len(), 54, "9 per outer side, cavity faces excluded");
    }

    #[test]
    fn quad_complexes_are_closed_and_mostly_two_per_edge() {
        let mut rng = StdRng::seed_from_u64(33);
        for _ in 0..20 {
            let r = rng.gen_range(4..=8usize);
            let mut occupied = BTreeSet::new();
            for x in 0..r as i32 {
                for y in 0..r as i32 {
                    for z in 0..r as i32 {
                        if rng.gen_bool(0.3) {
                            occupied.insert([x, y, z]);
                        }
                    }
                }
            }
            if occupied.is_empty() {
                continue;
            }
            let grid = SparseVoxelGrid {
                resolution: r,
                occupied,
            };
            let quads = extract_boundary_quads(&grid, &flood_fill_exterior(&grid));
            let mut edge_count = std::collections::HashMap::new();
            for q in &quads {
                for k in 0..4 {
                    let a = q.corners[k];
                    let b = q.corners[(k + 1) % 4];
                    let key = if a <= b { (a, b) } else { (b, a) };
                    *edge_count.entry(key).or_insert(0u32) += 1;
                }
            }
            for (&edge, &count) in &edge_count {
                assert!(count % 2 == 0, "odd quad count {count} at edge {edge:?}");
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(34);
        let mut occupied = BTreeSet::new();
        for _ in 0..60 {
            occupied.insert([
                rng.gen_range(0..8),
                rng.gen_range(0..8),
                rng.gen_range(0..8),
            ]);
        }
        let grid = SparseVoxelGrid {
            resolution: 8,
            occupied,
        };
        let a = extract_boundary_quads(&grid, &flood_fill_exterior(&grid));
        let b = extract_boundary_quads(&grid, &flood_fill_exterior(&grid));
        assert_eq!(a, b);
    }

    #[test]
    fn initialize_voxel_cube_yields_96_patches() {
        // A cube mesh spanning the domain voxelizes to the full 4³ block.
        let mesh = cube_mesh(-0.5, 0.5);
        let init = initialize(&VoxelSource::Mesh(&mesh), 4).unwrap();
        assert_eq!(init.complex.patch_count(), 96);
        assert!((init.complex.pool.deform_scale - 0.5).abs() < 1e-15);
    }

    #[test]
    fn initialize_rejects_empty_cloud() {
        let cloud = PointCloud::default();
        assert!(initialize(&VoxelSource::Cloud(&cloud), 8).is_err());
    }

    #[test]
    fn initialized_complex_reproduces_voxel_boundary_exactly() {
        let mesh = cube_mesh(-0.5, 0.5);
        let init = initialize(&VoxelSource::Mesh(&mesh), 4).unwrap();
        for r in [2, 3, 5] {
            let tess = init.complex.tessellate(r).unwrap();
            // Every sample of a freshly initialized patch must lie exactly on
            // its source quad (bilinear/Greville linear reproduction).
            let grids = init.complex.effective_geometry();
            for (vid, origin) in tess.provenance.iter().enumerate() {
                let grid = &grids[origin.patch as usize];
                let q00 = grid.points[0][0];
                let q10 = grid.points[3][0];
                let q01 = grid.points[0][3];
                let bilinear = q00
                    + (q10 - q00) * origin.u
                    + (q01 - q00) * origin.v;
                assert!(
                    (tess.vertices[vid] - bilinear).norm() < 1e-12,
                    "vertex {vid} off its quad"
                );
            }
        }
    }
}

