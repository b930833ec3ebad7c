//! Loss terms with analytic gradients: Chamfer distance, tangent-continuity
//! penalty across shared edges, and uniform Laplacian smoothness.

use rayon::prelude::*;

use crate::bezier::{BasisPair, ControlGrid, PatchGradients};
use crate::complex::{side_params, EffectiveGradients, PatchComplex, PoolGradients, TessellatedMesh};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::math::Vec3;

/// Chamfer distance under the sum-of-means squared convention:
/// `mean_d min_g ‖d−g‖² + mean_g min_d ‖g−d‖²`.
#[derive(Debug, Clone)]
pub struct ChamferResult {
    pub value: f64,
    /// Cotangents on the moving (`x_d`) points.
    pub d_points: Vec<Vec3>,
}

/// Chamfer loss against a prebuilt target tree; the tree over `x_d` is built
/// per call since those points move every iteration.
pub fn chamfer_loss_with_tree(
    x_d: &[Vec3],
    x_g: &[Vec3],
    tree_g: &KdTree,
) -> Result<ChamferResult> {
    if x_d.is_empty() || x_g.is_empty() {
        return Err(Error::Input("chamfer distance of an empty point set".into()));
    }
    let n_d = x_d.len() as f64;
    let n_g = x_g.len() as f64;

    // Forward term: every moving point pulls toward its nearest target.
    let forward: Vec<(f64, Vec3)> = x_d
        .par_iter()
        .map(|&p| {
            let (idx, d2) = tree_g.nearest(p);
            (d2, (p - x_g[idx]) * (2.0 / n_d))
        })
        .collect();

    // Backward term: every target point pulls its nearest moving point.
    let tree_d = KdTree::build(x_d);
    let backward: Vec<(f64, usize, Vec3)> = x_g
        .par_iter()
        .map(|&g| {
            let (idx, d2) = tree_d.nearest(g);
            (d2, idx, (x_d[idx] - g) * (2.0 / n_g))
        })
        .collect();

    // The two directional means are separate sums added once at the end, so
    // chamfer(A,B) equals chamfer(B,A) bit for bit.
    let mut d_points = vec![Vec3::ZERO; x_d.len()];
    let mut forward_mean = 0.0;
    for (i, (d2, grad)) in forward.iter().enumerate() {
        forward_mean += d2 / n_d;
        d_points[i] += *grad;
    }
    let mut backward_mean = 0.0;
    for (d2, idx, grad) in &backward {
        backward_mean += d2 / n_g;
        d_points[*idx] += *grad;
    }
    Ok(ChamferResult {
        value: forward_mean + backward_mean,
        d_points,
    })
}

/// Chamfer loss building both spatial indices internally.
pub fn chamfer_loss(x_d: &[Vec3], x_g: &[Vec3]) -> Result<ChamferResult> {
    if x_g.is_empty() {
        return Err(Error::Input("chamfer distance of an empty point set".into()));
    }
    chamfer_loss_with_tree(x_d, x_g, &KdTree::build(x_g))
}

#[derive(Debug, Clone)]
pub struct G1Result {
    pub value: f64,
    /// Gradients on the raw pool variables (already chained).
    pub gradients: PoolGradients,
    /// Samples dropped because a patch normal degenerated.
    pub skipped: usize,
}

/// Tangent-continuity penalty against caller-supplied effective grids.
pub fn g1_loss_with_grids(
    complex: &PatchComplex,
    grids: &[ControlGrid],
    samples_per_edge: usize,
) -> Result<G1Result> {
    if complex.shared_edges.is_empty() {
        return Err(Error::Input("complex has no shared edges".into()));
    }
    if samples_per_edge == 0 {
        return Err(Error::Config("samples_per_edge must be >= 1".into()));
    }
    let orient = |patch: u32| if complex.patches[patch as usize].flipped { -1.0 } else { 1.0 };

    struct EdgeOut {
        value: f64,
        skipped: usize,
        // Unscaled gradient contributions; the 1/valid factor is applied at
        // scatter time once the global valid-sample count is known.
        contributions: Vec<(u32, PatchGradients)>,
    }

    let per_edge: Vec<EdgeOut> = complex
        .shared_edges
        .par_iter()
        .map(|edge| {
            let mut out = EdgeOut {
                value: 0.0,
                skipped: 0,
                contributions: Vec::new(),
            };
            let ga = &grids[edge.patch_a as usize];
            let gb = &grids[edge.patch_b as usize];
            let sa = orient(edge.patch_a);
            let sb = orient(edge.patch_b);
            for k in 0..samples_per_edge {
                // Midpoint rule keeps clear of patch corners, where several
                // edges meet and deformed normals may degenerate.
                let t = (k as f64 + 0.5) / samples_per_edge as f64;
                let tb = if edge.antiparallel { 1.0 - t } else { t };
                let (ua, va) = side_params(edge.side_a, t);
                let (ub, vb) = side_params(edge.side_b, tb);
                let base_a = BasisPair::at(ua, va);
                let base_b = BasisPair::at(ub, vb);
                let pa = ga.eval_with_bases(&base_a);
                let pb = gb.eval_with_bases(&base_b);
                let ca = pa.du.cross(pa.dv);
                let cb = pb.du.cross(pb.dv);
                let (la, lb) = (ca.norm(), cb.norm());
                if la < 1e-12 || lb < 1e-12 {
                    out.skipped += 1;
                    continue;
                }
                let na = ca / la;
                let nb = cb / lb;
                out.value += 1.0 - sa * sb * na.dot(nb);
                // d(1 − s·⟨na,nb⟩)/dna = −s·nb, through the normalization
                // Jacobian (I − n nᵀ)/|c|, then through the cross product.
                let g_na = nb * (-sa * sb);
                let g_ca = (g_na - na * na.dot(g_na)) / la;
                let g_nb = na * (-sa * sb);
                let g_cb = (g_nb - nb * nb.dot(g_nb)) / lb;
                out.contributions.push((
                    edge.patch_a,
                    ga.gradients_full(&base_a, Vec3::ZERO, pa.dv.cross(g_ca), g_ca.cross(pa.du)),
                ));
                out.contributions.push((
                    edge.patch_b,
                    gb.gradients_full(&base_b, Vec3::ZERO, pb.dv.cross(g_cb), g_cb.cross(pb.du)),
                ));
            }
            out
        })
        .collect();

    let total_samples = complex.shared_edges.len() * samples_per_edge;
    let skipped: usize = per_edge.iter().map(|e| e.skipped).sum();
    let valid = total_samples - skipped;
    if valid == 0 {
        return Ok(G1Result {
            value: 0.0,
            gradients: PoolGradients::zeros(complex.pool.len()),
            skipped,
        });
    }
    let inv = 1.0 / valid as f64;
    let mut value = 0.0;
    let mut eff = EffectiveGradients::zeros(complex.pool.len());
    for edge_out in &per_edge {
        value += edge_out.value * inv;
        for (patch, pg) in &edge_out.contributions {
            eff.scatter_patch(&complex.patches[*patch as usize], pg, inv);
        }
    }
    Ok(G1Result {
        value,
        gradients: complex.chain_to_raw(&eff),
        skipped,
    })
}

/// Tangent-continuity penalty: at `samples_per_edge` border parameters of
/// every shared edge, `1 − ⟨n_a, n_b⟩` between orientation-corrected unit
/// normals, averaged over valid samples.
pub fn g1_loss(complex: &PatchComplex, samples_per_edge: usize) -> Result<G1Result> {
    g1_loss_with_grids(complex, &complex.effective_geometry(), samples_per_edge)
}

#[derive(Debug, Clone)]
pub struct LaplacianResult {
    pub value: f64,
    /// Cotangents on mesh vertices.
    pub d_vertices: Vec<Vec3>,
}

/// Uniform umbrella operator: mean over non-isolated vertices of
/// `‖v − mean(1-ring)‖²`. Boundary vertices of open complexes participate
/// with their partial rings; isolated vertices are excluded.
pub fn laplacian_loss(mesh: &TessellatedMesh, neighbors: &[Vec<u32>]) -> Result<LaplacianResult> {
    if neighbors.len() != mesh.vertices.len() {
        return Err(Error::Input("neighbor table does not match mesh".into()));
    }
    let counted: usize = neighbors.iter().filter(|n| !n.is_empty()).count();
    if counted == 0 {
        return Err(Error::Input("mesh has no connected vertices".into()));
    }
    let residuals: Vec<Vec3> = mesh
        .vertices
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let ring = &neighbors[i];
            if ring.is_empty() {
                return Vec3::ZERO;
            }
            let mut centroid = Vec3::ZERO;
            for &u in ring {
                centroid += mesh.vertices[u as usize];
            }
            v - centroid / ring.len() as f64
        })
        .collect();
    let inv = 1.0 / counted as f64;
    let value: f64 = residuals.iter().map(|r| r.norm_squared()).sum::<f64>() * inv;
    let mut d_vertices = vec![Vec3::ZERO; mesh.vertices.len()];
    for (i, r) in residuals.iter().enumerate() {
        let ring = &neighbors[i];
        if ring.is_empty() {
            continue;
        }
        let g = *r * (2.0 * inv);
        d_vertices[i] += g;
        let share = g / ring.len() as f64;
        for &u in ring {
            d_vertices[u as usize] -= share;
        }
    }
    Ok(LaplacianResult { value, d_vertices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_complex, LatticeQuad};
    use crate::math::vec3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_points(rng: &mut StdRng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                vec3(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn chamfer_oracle(a: &[Vec3], b: &[Vec3]) -> f64 {
        let min_d2 = |p: Vec3, set: &[Vec3]| {
            set.iter().map(|q| (p - *q).norm_squared()).fold(f64::INFINITY, f64::min)
        };
        let fwd: f64 = a.iter().map(|&p| min_d2(p, b)).sum::<f64>() / a.len() as f64;
        let bwd: f64 = b.iter().map(|&p| min_d2(p, a)).sum::<f64>() / b.len() as f64;
        fwd + bwd
    }

    #[test]
    fn chamfer_of_identical_sets_is_zero() {
        let mut rng = StdRng::seed_from_u64(50);
        let pts = random_points(&mut rng, 40);
        let r = chamfer_loss(&pts, &pts).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn chamfer_unit_offset_pair_is_two() {
        let r = chamfer_loss(&[vec3(0.0, 0.0, 0.0)], &[vec3(1.0, 0.0, 0.0)]).unwrap();
        assert!((r.value - 2.0).abs() < 1e-15);
        // Forward gradient 2(x−g)/1 plus backward 2(x−g)/1.
        assert!((r.d_points[0] - vec3(-4.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn chamfer_matches_brute_force_oracle() {
        let mut rng = StdRng::seed_from_u64(51);
        for _ in 0..10 {
            let a = random_points(&mut rng, 50);
            let b = random_points(&mut rng, 50);
            let r = chamfer_loss(&a, &b).unwrap();
            assert!((r.value - chamfer_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn chamfer_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(52);
        let a = random_points(&mut rng, 30);
        let b = random_points(&mut rng, 45);
        let ab = chamfer_loss(&a, &b).unwrap().value;
        let ba = chamfer_loss(&b, &a).unwrap().value;
        assert_eq!(ab, ba);
    }

    #[test]
    fn chamfer_rejects_empty_sets() {
        let pts = vec![vec3(0.0, 0.0, 0.0)];
        assert!(chamfer_loss(&[], &pts).is_err());
        assert!(chamfer_loss(&pts, &[]).is_err());
    }

    #[test]
    fn chamfer_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(53);
        let a = random_points(&mut rng, 25);
        let b = random_points(&mut rng, 30);
        let r = chamfer_loss(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..a.len() {
            for axis in 0..3 {
                let mut plus = a.clone();
                plus[i][axis] += h;
                let mut minus = a.clone();
                minus[i][axis] -= h;
                let fd = (chamfer_oracle(&plus, &b) - chamfer_oracle(&minus, &b)) / (2.0 * h);
                let an = r.d_points[i][axis];
                assert!((an - fd).abs() / fd.abs().max(1e-4) < 1e-3, "{an} vs {fd}");
            }
        }
    }

    fn coplanar_pair() -> PatchComplex {
        build_complex(
            &[
                LatticeQuad {
                    corners: [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
                },
                LatticeQuad {
                    corners: [[1, 0, 0], [2, 0, 0], [2, 1, 0], [1, 1, 0]],
                },
            ],
            4,
        )
        .unwrap()
    }

    fn folded_pair() -> PatchComplex {
        // Two faces of a voxel meeting at a 90° edge.
        let quads = vec![
            LatticeQuad::cell_face([0, 0, 0], 5), // +z
            LatticeQuad::cell_face([0, 0, 0], 1), // +x
        ];
        build_complex(&quads, 2).unwrap()
    }

    #[test]
    fn g1_is_zero_for_coplanar_patches() {
        let r = g1_loss(&coplanar_pair(), 4).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn g1_is_one_for_right_angle_fold() {
        let r = g1_loss(&folded_pair(), 4).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g1_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(54);
        let mut complex = coplanar_pair();
        for d in &mut complex.pool.raw_deltas {
            *d = vec3(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
        }
        for w in &mut complex.pool.raw_weights {
            *w += rng.gen_range(-0.3..0.3);
        }
        let analytic = g1_loss(&complex, 3).unwrap();
        assert_eq!(analytic.skipped, 0);
        let h = 1e-6;
        let mut diff_sq = 0.0;
        let mut fd_sq = 0.0;
        for var in 0..complex.pool.len() {
            for axis in 0..3 {
                let mut plus = complex.clone();
                plus.pool.raw_deltas[var][axis] += h;
                let mut minus = complex.clone();
                minus.pool.raw_deltas[var][axis] -= h;
                let fd = (g1_loss(&plus, 3).unwrap().value - g1_loss(&minus, 3).unwrap().value) / (2.0 * h);
                diff_sq += (analytic.gradients.d_raw_deltas[var][axis] - fd).powi(2);
                fd_sq += fd * fd;
            }
            let mut plus = complex.clone();
            plus.pool.raw_weights[var] += h;
            let mut minus = complex.clone();
            minus.pool.raw_weights[var] -= h;
            let fd = (g1_loss(&plus, 3).unwrap().value - g1_loss(&minus, 3).unwrap().value) / (2.0 * h);
            diff_sq += (analytic.gradients.d_raw_weights[var] - fd).powi(2);
            fd_sq += fd * fd;
        }
        let rel = diff_sq.sqrt() / fd_sq.sqrt().max(1e-9);
        assert!(rel < 1e-3, "gradient rel err {rel}");
    }

    #[test]
    fn g1_requires_shared_edges() {
        let single = build_complex(
            &[LatticeQuad {
                corners: [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
            }],
            4,
        )
        .unwrap();
        assert!(g1_loss(&single, 4).is_err());
    }

    #[test]
    fn laplacian_vanishes_on_interior_of_regular_grid() {
        // 4x1 strip of coplanar quads tessellated regularly: interior
        // vertices coincide with their ring centroids.
        let quads: Vec<LatticeQuad> = (0..4)
            .map(|i| LatticeQuad {
                corners: [[i, 0, 0], [i + 1, 0, 0], [i + 1, 1, 0], [i, 1, 0]],
            })
            .collect();
        let complex = build_complex(&quads, 4).unwrap();
        let mesh = complex.tessellate(5).unwrap();
        let neighbors = mesh.vertex_neighbors();
        let r = laplacian_loss(&mesh, &neighbors).unwrap();
        // Residual per interior vertex only; verify per-vertex.
        for (i, ring) in neighbors.iter().enumerate() {
            let boundary = mesh.vertices[i].x.abs() < 1e-12
                || (mesh.vertices[i].x - 4.0).abs() < 1e-12
                || mesh.vertices[i].y.abs() < 1e-12
                || (mesh.vertices[i].y - 1.0).abs() < 1e-12;
            if !boundary && !ring.is_empty() {
                let mut centroid = Vec3::ZERO;
                for &u in ring {
                    centroid += mesh.vertices[u as usize];
                }
                let res = mesh.vertices[i] - centroid / ring.len() as f64;
                assert!(res.norm() < 1e-14, "interior vertex {i}");
            }
        }
        assert!(r.value >= 0.0);
    }

    #[test]
    fn laplacian_grows_quadratically_with_displacement() {
        let quads: Vec<LatticeQuad> = (0..2)
            .flat_map(|i| {
                (0..2).map(move |j| LatticeQuad {
                    corners: [[i, j, 0], [i + 1, j, 0], [i + 1, j + 1, 0], [i, j + 1, 0]],
                })
            })
            .collect();
        let complex = build_complex(&quads, 4).unwrap();
        let base = complex.tessellate(4).unwrap();
        let neighbors = base.vertex_neighbors();
        // Displace one interior vertex out of plane by δ.
        let interior = base
            .vertices
            .iter()
            .position(|v| (v.x - 1.0).abs() < 1e-12 && (v.y - 1.0).abs() < 1e-12)
            .unwrap();
        // Open-grid boundary vertices contribute a constant; the
        // displacement effect is quadratic on top of it.
        let base_value = laplacian_loss(&base, &neighbors).unwrap().value;
        let mut values = Vec::new();
        for &delta in &[0.2, 0.1, 0.05] {
            let mut mesh = base.clone();
            mesh.vertices[interior].z += delta;
            values.push(laplacian_loss(&mesh, &neighbors).unwrap().value - base_value);
        }
        assert!(values[0] > values[1] && values[1] > values[2] && values[2] > 0.0);
        // Quadratic decay: Δloss(δ/2) ≈ Δloss(δ)/4.
        assert!((values[1] / values[0] - 0.25).abs() < 1e-9);
        assert!((values[2] / values[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn laplacian_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(55);
        let quads: Vec<LatticeQuad> = (0..2)
            .map(|i| LatticeQuad {
                corners: [[i, 0, 0], [i + 1, 0, 0], [i + 1, 1, 0], [i, 1, 0]],
            })
            .collect();
        let complex = build_complex(&quads, 4).unwrap();
        let mut mesh = complex.tessellate(3).unwrap();
        for v in &mut mesh.vertices {
            *v += vec3(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
        }
        let neighbors = mesh.vertex_neighbors();
        let analytic = laplacian_loss(&mesh, &neighbors).unwrap();
        let h = 1e-6;
        for i in 0..mesh.vertices.len() {
            for axis in 0..3 {
                let mut plus = mesh.clone();
                plus.vertices[i][axis] += h;
                let mut minus = mesh.clone();
                minus.vertices[i][axis] -= h;
                let fd = (laplacian_loss(&plus, &neighbors).unwrap().value
                    - laplacian_loss(&minus, &neighbors).unwrap().value)
                    / (2.0 * h);
                let an = analytic.d_vertices[i][axis];
                assert!((an - fd).abs() / fd.abs().max(1e-4) < 1e-3, "v{i}[{axis}]: {an} vs {fd}");
            }
        }
    }
}
