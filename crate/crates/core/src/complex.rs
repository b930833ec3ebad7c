//! C⁰-continuous patch complexes.
//!
//! All patches index into one pool of control vertices, so two patches
//! adjacent across a lattice edge reference the *same* variables for the four
//! control points along that edge. Continuity is structural: no averaging, no
//! epsilon comparisons, no way for borders to drift apart during optimization.
//!
//! Optimization variables are unconstrained: effective positions are
//! `base + scale·tanh(raw_delta)` (deformation bounded to a local
//! neighborhood) and effective weights are `softplus(raw_weight)` (always
//! positive). Weight variables are pooled along with positions; tying border
//! weights keeps the full rational border curves of adjacent patches
//! identical, not just their endpoints.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::bezier::{closed_uniform_params, grid_triangles, BasisPair, ControlGrid, PatchGradients};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, softplus_inverse, vec3, Vec3};

/// Face directions on the cell lattice: -x, +x, -y, +y, -z, +z.
pub const FACE_DIRS: [[i32; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Oriented unit face on the integer lattice.
///
/// Corners are listed counter-clockwise as seen from the air side, so
/// `(c1-c0) × (c3-c0)` is the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeQuad {
    pub corners: [[i32; 3]; 4],
}

impl LatticeQuad {
    /// The `dir`-th face of `cell`, oriented outward (toward the neighbor).
    pub fn cell_face(cell: [i32; 3], dir: usize) -> LatticeQuad {
        let axis = dir / 2;
        let positive = dir % 2 == 1;
        let plane = cell[axis] + if positive { 1 } else { 0 };
        // Cyclic successor axes; swapped for negative faces so the corner
        // loop stays counter-clockwise from outside.
        let (b1, b2) = if positive {
            ((axis + 1) % 3, (axis + 2) % 3)
        } else {
            ((axis + 2) % 3, (axis + 1) % 3)
        };
        let mut c0 = cell;
        c0[axis] = plane;
        let mut c1 = c0;
        c1[b1] += 1;
        let mut c2 = c1;
        c2[b2] += 1;
        let mut c3 = c0;
        c3[b2] += 1;
        LatticeQuad {
            corners: [c0, c1, c2, c3],
        }
    }

    fn edge_steps(&self) -> Result<([i32; 3], [i32; 3])> {
        let sub = |a: [i32; 3], b: [i32; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let d1 = sub(self.corners[1], self.corners[0]);
        let d3 = sub(self.corners[3], self.corners[0]);
        let unit_axis = |d: [i32; 3]| d.iter().map(|x| x.abs()).sum::<i32>() == 1;
        let c2 = [
            self.corners[0][0] + d1[0] + d3[0],
            self.corners[0][1] + d1[1] + d3[1],
            self.corners[0][2] + d1[2] + d3[2],
        ];
        if !unit_axis(d1) || !unit_axis(d3) || d1 == d3 || c2 != self.corners[2] {
            return Err(Error::Input(format!("quad is not a unit lattice face: {:?}", self.corners)));
        }
        Ok((d1, d3))
    }

    /// Occupied cell behind this face, derived from the outward orientation.
    pub fn owner_cell(&self) -> Result<[i32; 3]> {
        let (d1, d3) = self.edge_steps()?;
        let n = [
            d1[1] * d3[2] - d1[2] * d3[1],
            d1[2] * d3[0] - d1[0] * d3[2],
            d1[0] * d3[1] - d1[1] * d3[0],
        ];
        let mut cell = [
            self.corners[0][0].min(self.corners[2][0]),
            self.corners[0][1].min(self.corners[2][1]),
            self.corners[0][2].min(self.corners[2][2]),
        ];
        for a in 0..3 {
            if n[a] > 0 {
                cell[a] -= 1;
            }
        }
        Ok(cell)
    }
}

/// Pool of control vertices shared across all patches of a complex.
#[derive(Debug, Clone)]
pub struct ControlVertexPool {
    /// Undeformed positions.
    pub base_positions: Vec<Vec3>,
    /// Unconstrained deformation variables; effective position is
    /// `base + deform_scale · tanh(raw_delta)` componentwise.
    pub raw_deltas: Vec<Vec3>,
    /// Unconstrained weight variables; effective weight is
    /// `softplus(raw_weight)`. One variable per pooled vertex, which ties
    /// the weight slots of every patch border sharing that vertex.
    pub raw_weights: Vec<f64>,
    /// Deformation bound (L∞ radius of reachable positions around base).
    pub deform_scale: f64,
}

impl ControlVertexPool {
    pub fn len(&self) -> usize {
        self.base_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_positions.is_empty()
    }

    pub fn effective_position(&self, id: usize) -> Vec3 {
        let d = self.raw_deltas[id];
        self.base_positions[id]
            + vec3(d.x.tanh(), d.y.tanh(), d.z.tanh()) * self.deform_scale
    }

    pub fn effective_weight(&self, id: usize) -> f64 {
        // softplus underflows to 0.0 below raw ≈ -745; clamp to keep the
        // weight-positivity invariant for arbitrary raw values.
        softplus(self.raw_weights[id]).max(1e-300)
    }
}

/// One bicubic patch: a 4×4 map into the pool plus an orientation flag.
///
/// `vertex_ids[i][j]` has `i` along `u` and `j` along `v`. `flipped` marks
/// patches whose geometric normal `du × dv` points inward; consumers negate
/// normals and reverse triangle windings for those.
#[derive(Debug, Clone)]
pub struct Patch {
    pub vertex_ids: [[u32; 4]; 4],
    pub flipped: bool,
}

/// Border sides of a patch in parameter space.
///
/// 0: v=0, 1: u=1, 2: v=1, 3: u=0. The running border parameter `t`
/// increases with `u` on sides 0/2 and with `v` on sides 1/3.
pub type Side = u8;

/// Parameter pair on a given side at border parameter `t`.
pub fn side_params(side: Side, t: f64) -> (f64, f64) {
    match side {
        0 => (t, 0.0),
        1 => (1.0, t),
        2 => (t, 1.0),
        3 => (0.0, t),
        _ => panic!("side out of range: {side}"),
    }
}

fn side_slots(side: Side, t: usize, r: usize) -> (usize, usize) {
    match side {
        0 => (t, 0),
        1 => (r - 1, t),
        2 => (t, r - 1),
        3 => (0, t),
        _ => panic!("side out of range: {side}"),
    }
}

fn side_vertex_ids(patch: &Patch, side: Side) -> [u32; 4] {
    let mut out = [0u32; 4];
    for (t, slot) in out.iter_mut().enumerate() {
        let (i, j) = side_slots(side, t, 4);
        *slot = patch.vertex_ids[i][j];
    }
    out
}

/// Adjacency record for one lattice edge shared by two patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedEdge {
    pub patch_a: u32,
    pub side_a: Side,
    pub patch_b: u32,
    pub side_b: Side,
    /// Border parameters run in opposite directions on the two sides.
    pub antiparallel: bool,
}

/// A set of patches over a shared control-vertex pool.
#[derive(Debug, Clone)]
pub struct PatchComplex {
    pub pool: ControlVertexPool,
    pub patches: Vec<Patch>,
    pub shared_edges: Vec<SharedEdge>,
}

/// Welded triangle mesh produced by tessellating a complex.
#[derive(Debug, Clone)]
pub struct TessellatedMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex source record: the representative patch sample the vertex
    /// was evaluated from.
    pub provenance: Vec<VertexOrigin>,
}

#[derive(Debug, Clone, Copy)]
pub struct VertexOrigin {
    pub patch: u32,
    pub u: f64,
    pub v: f64,
}

impl TessellatedMesh {
    /// Undirected edge → incident triangle count.
    pub fn edge_incidence(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (e.0.min(e.1), e.0.max(e.1));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when every edge bounds exactly two triangles.
    pub fn is_closed_edge_manifold(&self) -> bool {
        self.edge_incidence().values().all(|&c| c == 2)
    }

    /// Neighbor lists from unique undirected edges, sorted per vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut neighbors = vec![Vec::new(); self.vertices.len()];
        for key in self.edge_incidence().keys() {
            neighbors[key.0 as usize].push(key.1);
            neighbors[key.1 as usize].push(key.0);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        neighbors
    }

    pub fn to_triangle_mesh(&self) -> crate::mesh::TriangleMesh {
        crate::mesh::TriangleMesh::new(self.vertices.clone(), self.triangles.clone())
    }
}

/// Geometry-independent tessellation topology for one resolution: weld map,
/// representative slots, and triangle connectivity. Rebuilding this is the
/// expensive part of tessellation, so the fitter caches it per resolution.
#[derive(Debug, Clone)]
pub struct ComplexTessellation {
    pub resolution: usize,
    /// Representative slot per mesh vertex: (patch, iu, iv).
    vertex_slots: Vec<(u32, u16, u16)>,
    pub triangles: Vec<[u32; 3]>,
}

impl ComplexTessellation {
    pub fn vertex_count(&self) -> usize {
        self.vertex_slots.len()
    }
}

/// Cotangents with respect to the pool's raw optimization variables.
#[derive(Debug, Clone)]
pub struct PoolGradients {
    pub d_raw_deltas: Vec<Vec3>,
    pub d_raw_weights: Vec<f64>,
}

impl PoolGradients {
    pub fn zeros(n: usize) -> PoolGradients {
        PoolGradients {
            d_raw_deltas: vec![Vec3::ZERO; n],
            d_raw_weights: vec![0.0; n],
        }
    }

    pub fn add_scaled(&mut self, other: &PoolGradients, scale: f64) {
        for (a, b) in self.d_raw_deltas.iter_mut().zip(&other.d_raw_deltas) {
            *a += *b * scale;
        }
        for (a, b) in self.d_raw_weights.iter_mut().zip(&other.d_raw_weights) {
            *a += b * scale;
        }
    }
}

/// Cotangents on effective (post-reparameterization) pool geometry;
/// intermediate buffer shared by the loss terms before the single chain-rule
/// pass back to raw variables.
#[derive(Debug, Clone)]
pub struct EffectiveGradients {
    pub d_positions: Vec<Vec3>,
    pub d_weights: Vec<f64>,
}

impl EffectiveGradients {
    pub fn zeros(n: usize) -> EffectiveGradients {
        EffectiveGradients {
            d_positions: vec![Vec3::ZERO; n],
            d_weights: vec![0.0; n],
        }
    }

    /// Scatter one patch's control-net gradients into the pool buffers.
    pub fn scatter_patch(&mut self, patch: &Patch, grads: &PatchGradients, scale: f64) {
        for i in 0..4 {
            for j in 0..4 {
                let id = patch.vertex_ids[i][j] as usize;
                self.d_positions[id] += grads.d_points[i][j] * scale;
                self.d_weights[id] += grads.d_weights[i][j] * scale;
            }
        }
    }
}

/// Build a complex from oriented lattice quads.
///
/// Each quad becomes one patch whose 4×4 control net is the bilinear
/// interpolation of its corners at fractions {0, 1/3, 2/3, 1}. Control
/// vertices are deduplicated across the whole complex by the exact integer
/// key `3·corner + i·step_u + j·step_v`, so shared boundary points coincide
/// by construction. Positions are in lattice units; `initialize` maps them
/// to the normalized cube afterwards.
pub fn build_complex(quads: &[LatticeQuad], resolution: usize) -> Result<PatchComplex> {
    if quads.is_empty() {
        return Err(Error::Input("no quads to build a complex from".into()));
    }
    let r = resolution as i32;
    let mut seen = HashMap::new();
    for (idx, quad) in quads.iter().enumerate() {
        let mut key = quad.corners;
        key.sort_unstable();
        if let Some(prev) = seen.insert(key, idx) {
            return Err(Error::Input(format!("duplicate quad: #{prev} and #{idx} cover the same face")));
        }
        for c in &quad.corners {
            if c.iter().any(|&x| x < 0 || x > r) {
                return Err(Error::Input(format!(
                    "quad corner {c:?} outside the [0,{resolution}] lattice"
                )));
            }
        }
    }

    let mut pool_index: HashMap<[i32; 3], u32> = HashMap::new();
    let mut base_positions = Vec::new();
    let mut patches = Vec::with_capacity(quads.len());
    let mut owners = Vec::with_capacity(quads.len());
    for quad in quads {
        let (d1, d3) = quad.edge_steps()?;
        owners.push(quad.owner_cell()?);
        let c0 = quad.corners[0];
        let mut vertex_ids = [[0u32; 4]; 4];
        for i in 0..4usize {
            for j in 0..4usize {
                let key = [
                    3 * c0[0] + i as i32 * d1[0] + j as i32 * d3[0],
                    3 * c0[1] + i as i32 * d1[1] + j as i32 * d3[1],
                    3 * c0[2] + i as i32 * d1[2] + j as i32 * d3[2],
                ];
                let next = base_positions.len() as u32;
                let id = *pool_index.entry(key).or_insert_with(|| {
                    base_positions.push(
                        vec3(key[0] as f64, key[1] as f64, key[2] as f64) / 3.0,
                    );
                    next
                });
                vertex_ids[i][j] = id;
            }
        }
        patches.push(Patch {
            vertex_ids,
            flipped: false,
        });
    }

    let shared_edges = enumerate_shared_edges(&patches, &owners)?;
    let n = base_positions.len();
    Ok(PatchComplex {
        pool: ControlVertexPool {
            base_positions,
            raw_deltas: vec![Vec3::ZERO; n],
            raw_weights: vec![softplus_inverse(1.0); n],
            // Two voxel widths, in the lattice units build_complex works in.
            deform_scale: 2.0,
        },
        patches,
        shared_edges,
    })
}

fn enumerate_shared_edges(patches: &[Patch], owners: &[[i32; 3]]) -> Result<Vec<SharedEdge>> {
    // Group patch sides by the unordered pool-id endpoints of their lattice
    // edge. Within a group the id sequences are equal or reversed, since both
    // sides resolve to the same four pooled vertices.
    #[derive(Clone, Copy)]
    struct SideRef {
        patch: u32,
        side: Side,
        ids: [u32; 4],
    }
    let mut groups: HashMap<(u32, u32), Vec<SideRef>> = HashMap::new();
    let mut group_order: Vec<(u32, u32)> = Vec::new();
    for (p, patch) in patches.iter().enumerate() {
        for side in 0..4u8 {
            let ids = side_vertex_ids(patch, side);
            let key = (ids[0].min(ids[3]), ids[0].max(ids[3]));
            let entry = groups.entry(key).or_default();
            if entry.is_empty() {
                group_order.push(key);
            }
            entry.push(SideRef {
                patch: p as u32,
                side,
                ids,
            });
        }
    }

    let mut edges = Vec::new();
    let mut push_pair = |a: SideRef, b: SideRef| -> Result<()> {
        let antiparallel = if a.ids == b.ids {
            false
        } else {
            let mut rev = b.ids;
            rev.reverse();
            if a.ids == rev {
                true
            } else {
                return Err(Error::Input(
                    "patch sides share endpoints but not the full border".into(),
                ));
            }
        };
        edges.push(SharedEdge {
            patch_a: a.patch,
            side_a: a.side,
            patch_b: b.patch,
            side_b: b.side,
            antiparallel,
        });
        Ok(())
    };

    for key in group_order {
        let group = &groups[&key];
        match group.len() {
            1 => {} // open boundary side
            2 => push_pair(group[0], group[1])?,
            4 => {
                // Two diagonal cells exposing two faces each at this edge:
                // pair the sides belonging to the same owner cell so each
                // shell stays locally consistent.
                let mut by_owner: HashMap<[i32; 3], Vec<SideRef>> = HashMap::new();
                for s in group {
                    by_owner.entry(owners[s.patch as usize]).or_default().push(*s);
                }
                if by_owner.len() != 2 || by_owner.values().any(|v| v.len() != 2) {
                    return Err(Error::Input(
                        "unsupported 4-quad edge configuration (not a diagonal cell pair)".into(),
                    ));
                }
                let mut owner_keys: Vec<[i32; 3]> = by_owner.keys().copied().collect();
                owner_keys.sort_unstable();
                for owner in owner_keys {
                    let pair = &by_owner[&owner];
                    push_pair(pair[0], pair[1])?;
                }
            }
            n => {
                return Err(Error::Input(format!(
                    "non-manifold quad configuration: {n} sides meet at one lattice edge"
                )));
            }
        }
    }
    Ok(edges)
}

impl PatchComplex {
    /// Map lattice-unit base positions into the normalized cube
    /// `[-0.5, 0.5]³` for grid resolution `r`, rescaling the deformation
    /// bound accordingly.
    pub fn normalize_from_lattice(&mut self, r: usize) {
        let scale = 1.0 / r as f64;
        for p in &mut self.pool.base_positions {
            *p = *p * scale - vec3(0.5, 0.5, 0.5);
        }
        self.pool.deform_scale *= scale;
    }

    pub fn effective_positions(&self) -> Vec<Vec3> {
        (0..self.pool.len()).map(|i| self.pool.effective_position(i)).collect()
    }

    pub fn effective_weights(&self) -> Vec<f64> {
        (0..self.pool.len()).map(|i| self.pool.effective_weight(i)).collect()
    }

    /// Per-patch control grids under the current deformation. Shared border
    /// entries of adjacent grids are bitwise identical: they are copies of
    /// the same pooled values.
    pub fn effective_geometry(&self) -> Vec<ControlGrid> {
        let positions = self.effective_positions();
        let weights = self.effective_weights();
        self.patches
            .iter()
            .map(|p| patch_grid(p, &positions, &weights))
            .collect()
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    /// Weld topology for resolution `r`: border samples of adjacent patches
    /// collapse to one mesh vertex by shared-edge correspondence (plus corner
    /// identification through the pool, which covers pinch corners), never by
    /// coordinate proximity.
    pub fn tessellation_topology(&self, r: usize) -> Result<ComplexTessellation> {
        if r < 2 {
            return Err(Error::Config(format!("tessellation resolution must be >= 2, got {r}")));
        }
        let slots_per_patch = r * r;
        let total = self.patches.len() * slots_per_patch;
        let slot_of = |patch: usize, iu: usize, iv: usize| patch * slots_per_patch + iv * r + iu;

        // Union-find with minimum-index representatives so the first slot in
        // scan order always names the class.
        let mut parent: Vec<u32> = (0..total as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        let union = |parent: &mut Vec<u32>, a: u32, b: u32| {
            let ra = find(parent, a);
            let rb = find(parent, b);
            if ra != rb {
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent[hi as usize] = lo;
            }
        };

        for edge in &self.shared_edges {
            for t in 0..r {
                let (ia, ja) = side_slots(edge.side_a, t, r);
                let tb = if edge.antiparallel { r - 1 - t } else { t };
                let (ib, jb) = side_slots(edge.side_b, tb, r);
                union(
                    &mut parent,
                    slot_of(edge.patch_a as usize, ia, ja) as u32,
                    slot_of(edge.patch_b as usize, ib, jb) as u32,
                );
            }
        }
        // Corner samples referencing the same pooled vertex always evaluate
        // to that control point exactly, so weld them even when no chain of
        // shared edges connects them (pinch corners).
        let mut corner_first: HashMap<u32, u32> = HashMap::new();
        for (p, patch) in self.patches.iter().enumerate() {
            for (ci, cj) in [(0, 0), (3, 0), (0, 3), (3, 3)] {
                let pool_id = patch.vertex_ids[ci][cj];
                let slot = slot_of(
                    p,
                    if ci == 0 { 0 } else { r - 1 },
                    if cj == 0 { 0 } else { r - 1 },
                ) as u32;
                match corner_first.entry(pool_id) {
                    std::collections::hash_map::Entry::Occupied(first) => {
                        union(&mut parent, *first.get(), slot);
                    }
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(slot);
                    }
                }
            }
        }

        let mut slot_vertex = vec![u32::MAX; total];
        let mut vertex_slots = Vec::new();
        for slot in 0..total as u32 {
            let root = find(&mut parent, slot);
            if root == slot {
                let patch = slot as usize / slots_per_patch;
                let rem = slot as usize % slots_per_patch;
                slot_vertex[slot as usize] = vertex_slots.len() as u32;
                vertex_slots.push((patch as u32, (rem % r) as u16, (rem / r) as u16));
            } else {
                slot_vertex[slot as usize] = slot_vertex[root as usize];
            }
        }

        let mut triangles = Vec::with_capacity(self.patches.len() * 2 * (r - 1) * (r - 1));
        for (p, patch) in self.patches.iter().enumerate() {
            triangles.extend(grid_triangles(r, patch.flipped, |iu, iv| {
                slot_vertex[slot_of(p, iu, iv)]
            }));
        }

        Ok(ComplexTessellation {
            resolution: r,
            vertex_slots,
            triangles,
        })
    }

    /// Evaluate given per-patch grids through a cached weld topology.
    pub fn tessellate_with_grids(&self, topo: &ComplexTessellation, grids: &[ControlGrid]) -> TessellatedMesh {
        let r = topo.resolution;
        let params = closed_uniform_params(r);
        let bases: Vec<[f64; 4]> = params.iter().map(|&t| crate::bezier::bernstein_cubic(t)).collect();
        let vertices: Vec<Vec3> = topo
            .vertex_slots
            .par_iter()
            .map(|&(patch, iu, iv)| {
                grids[patch as usize].eval_position_with_bases(&bases[iu as usize], &bases[iv as usize])
            })
            .collect();
        let provenance: Vec<VertexOrigin> = topo
            .vertex_slots
            .iter()
            .map(|&(patch, iu, iv)| VertexOrigin {
                patch,
                u: params[iu as usize],
                v: params[iv as usize],
            })
            .collect();
        TessellatedMesh {
            vertices,
            triangles: topo.triangles.clone(),
            provenance,
        }
    }

    /// Evaluate the current geometry through a cached weld topology.
    pub fn tessellate_with(&self, topo: &ComplexTessellation) -> TessellatedMesh {
        self.tessellate_with_grids(topo, &self.effective_geometry())
    }

    /// Welded complex-level tessellation at resolution `r`.
    pub fn tessellate(&self, r: usize) -> Result<TessellatedMesh> {
        Ok(self.tessellate_with(&self.tessellation_topology(r)?))
    }

    /// Accumulate per-mesh-vertex cotangents onto effective pool geometry.
    ///
    /// Each welded vertex was evaluated from exactly one representative patch
    /// sample; since the welded samples are the same function of the same
    /// pooled variables, backpropagating through the representative is exact.
    /// Patches are processed in parallel but scattered in index order, so the
    /// accumulation is independent of thread count.
    pub fn accumulate_mesh_cotangents(
        &self,
        mesh: &TessellatedMesh,
        cotangents: &[Vec3],
        out: &mut EffectiveGradients,
    ) -> Result<()> {
        if cotangents.len() != mesh.vertices.len() {
            return Err(Error::Input(format!(
                "cotangent count {} does not match vertex count {}",
                cotangents.len(),
                mesh.vertices.len()
            )));
        }
        let grids = self.effective_geometry();
        // Vertices are ordered patch-major by construction; chunk them.
        let mut ranges: Vec<(usize, usize, usize)> = Vec::new();
        let mut start = 0usize;
        while start < mesh.provenance.len() {
            let patch = mesh.provenance[start].patch as usize;
            let mut end = start + 1;
            while end < mesh.provenance.len() && mesh.provenance[end].patch as usize == patch {
                end += 1;
            }
            ranges.push((patch, start, end));
            start = end;
        }
        let per_patch: Vec<(usize, PatchGradients)> = ranges
            .par_iter()
            .map(|&(patch, start, end)| {
                let grid = &grids[patch];
                let mut acc = PatchGradients::zero();
                for v in start..end {
                    let origin = mesh.provenance[v];
                    let b = BasisPair::at(origin.u, origin.v);
                    let g = grid.gradients_full(&b, cotangents[v], Vec3::ZERO, Vec3::ZERO);
                    for i in 0..4 {
                        for j in 0..4 {
                            acc.d_points[i][j] += g.d_points[i][j];
                            acc.d_weights[i][j] += g.d_weights[i][j];
                        }
                    }
                }
                (patch, acc)
            })
            .collect();
        for (patch, acc) in &per_patch {
            out.scatter_patch(&self.patches[*patch], acc, 1.0);
        }
        Ok(())
    }

    /// Topology-indexed variant of [`Self::accumulate_mesh_cotangents`] for
    /// the optimization loop: bases are looked up per slot instead of being
    /// recomputed, and only the position path of the reverse pass runs.
    pub fn accumulate_topo_cotangents(
        &self,
        topo: &ComplexTessellation,
        grids: &[ControlGrid],
        cotangents: &[Vec3],
        out: &mut EffectiveGradients,
    ) -> Result<()> {
        if cotangents.len() != topo.vertex_slots.len() {
            return Err(Error::Input(format!(
                "cotangent count {} does not match vertex count {}",
                cotangents.len(),
                topo.vertex_slots.len()
            )));
        }
        let params = closed_uniform_params(topo.resolution);
        let bases: Vec<[f64; 4]> = params.iter().map(|&t| crate::bezier::bernstein_cubic(t)).collect();
        // Vertices are ordered patch-major by construction; chunk them.
        let mut ranges: Vec<(usize, usize, usize)> = Vec::new();
        let mut start = 0usize;
        while start < topo.vertex_slots.len() {
            let patch = topo.vertex_slots[start].0 as usize;
            let mut end = start + 1;
            while end < topo.vertex_slots.len() && topo.vertex_slots[end].0 as usize == patch {
                end += 1;
            }
            ranges.push((patch, start, end));
            start = end;
        }
        let per_patch: Vec<(usize, PatchGradients)> = ranges
            .par_iter()
            .map(|&(patch, start, end)| {
                let grid = &grids[patch];
                let mut acc = PatchGradients::zero();
                for v in start..end {
                    let (_, iu, iv) = topo.vertex_slots[v];
                    let g = grid.gradients_position_with_bases(
                        &bases[iu as usize],
                        &bases[iv as usize],
                        cotangents[v],
                    );
                    for i in 0..4 {
                        for j in 0..4 {
                            acc.d_points[i][j] += g.d_points[i][j];
                            acc.d_weights[i][j] += g.d_weights[i][j];
                        }
                    }
                }
                (patch, acc)
            })
            .collect();
        for (patch, acc) in &per_patch {
            out.scatter_patch(&self.patches[*patch], acc, 1.0);
        }
        Ok(())
    }

    /// Chain effective-geometry cotangents through tanh/softplus back to the
    /// raw optimization variables.
    pub fn chain_to_raw(&self, eff: &EffectiveGradients) -> PoolGradients {
        let n = self.pool.len();
        let mut out = PoolGradients::zeros(n);
        let s = self.pool.deform_scale;
        for id in 0..n {
            let d = self.pool.raw_deltas[id];
            let t = vec3(d.x.tanh(), d.y.tanh(), d.z.tanh());
            let g = eff.d_positions[id];
            out.d_raw_deltas[id] = vec3(
                g.x * s * (1.0 - t.x * t.x),
                g.y * s * (1.0 - t.y * t.y),
                g.z * s * (1.0 - t.z * t.z),
            );
            out.d_raw_weights[id] = eff.d_weights[id] * sigmoid(self.pool.raw_weights[id]);
        }
        out
    }

    /// Reverse pass from mesh-vertex cotangents to raw pool variables.
    pub fn backprop_to_pool(&self, mesh: &TessellatedMesh, cotangents: &[Vec3]) -> Result<PoolGradients> {
        let mut eff = EffectiveGradients::zeros(self.pool.len());
        self.accumulate_mesh_cotangents(mesh, cotangents, &mut eff)?;
        Ok(self.chain_to_raw(&eff))
    }

    /// Evaluate a point on a patch border side at parameter `t`.
    pub fn eval_border(&self, patch: u32, side: Side, t: f64) -> Result<crate::bezier::SurfacePoint> {
        let grids = self.effective_geometry();
        let (u, v) = side_params(side, t);
        grids[patch as usize].eval(u, v)
    }
}

pub(crate) fn patch_grid(patch: &Patch, positions: &[Vec3], weights: &[f64]) -> ControlGrid {
    let mut grid = ControlGrid {
        points: [[Vec3::ZERO; 4]; 4],
        weights: [[1.0; 4]; 4],
    };
    for i in 0..4 {
        for j in 0..4 {
            let id = patch.vertex_ids[i][j] as usize;
            grid.points[i][j] = positions[id];
            grid.weights[i][j] = weights[id];
        }
    }
    grid
}
