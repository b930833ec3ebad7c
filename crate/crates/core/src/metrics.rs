//! Evaluation battery: Chamfer Distance, Hausdorff Distance, F1, Normal
//! Consistency, and the validity check behind the invalidity ratio. All
//! pairwise metrics run on uniform 8192-point samples of unit-normalized
//! shapes by default.

use serde::Serialize;

use crate::complex::PatchComplex;
use crate::error::{Error, Result};
use crate::fit::sample_triangles;
use crate::kdtree::KdTree;
use crate::math::Vec3;
use crate::mesh::TriangleMesh;

pub const EVAL_POINTS: usize = 8192;
pub const EVAL_TESSELLATION: usize = 16;
pub const DEFAULT_F1_TAU: f64 = 0.01;

/// Uniform surface sample with per-point normals from the source triangles.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

/// Scalar metric bundle for one shape pair.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub cd: f64,
    pub hd: f64,
    pub f1: f64,
    /// Absent when either side lacks normals.
    pub nc: Option<f64>,
    pub tau: f64,
    pub valid: bool,
}

/// Shapes that can be sampled for evaluation.
pub enum EvalShape<'a> {
    Mesh(&'a TriangleMesh),
    Complex(&'a PatchComplex),
    /// Pre-sampled points (e.g. an XYZ cloud), used verbatim.
    Points(&'a [Vec3], Option<&'a [Vec3]>),
}

/// Area-weighted uniform sampling with normals from the sampled triangle.
/// Complexes are tessellated at resolution 16 first, so sampling a complex
/// and sampling its r=16 tessellation with the same seed coincide.
pub fn sample_eval_points(shape: &EvalShape, n: usize, seed: u64) -> Result<EvalSample> {
    match shape {
        EvalShape::Points(points, normals) => {
            if points.is_empty() {
                return Err(Error::Input("empty point set".into()));
            }
            Ok(EvalSample {
                points: points.to_vec(),
                normals: normals.map(|n| n.to_vec()),
            })
        }
        EvalShape::Mesh(mesh) => sample_mesh(mesh, n, seed),
        EvalShape::Complex(complex) => {
            let mesh = complex.tessellate(EVAL_TESSELLATION)?.to_triangle_mesh();
            sample_mesh(&mesh, n, seed)
        }
    }
}

fn sample_mesh(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<EvalSample> {
    mesh.validate()?;
    let samples = sample_triangles(&mesh.vertices, &mesh.triangles, n, seed)?;
    let normals = samples
        .triangle
        .iter()
        .map(|&t| mesh.triangle_normal(t as usize))
        .collect();
    Ok(EvalSample {
        points: samples.points,
        normals: Some(normals),
    })
}

/// Chamfer distance: sum of mean squared nearest-neighbor distances in both
/// directions. Same convention as the fitting loss.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(crate::fit::chamfer_loss(a, b)?.value)
}

/// Symmetric Hausdorff distance, Euclidean (not squared).
pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("hausdorff distance of an empty point set".into()));
    }
    let directed = |from: &[Vec3], tree: &KdTree| -> f64 {
        from.iter()
            .map(|&p| tree.nearest(p).1)
            .fold(0.0f64, f64::max)
    };
    let tree_a = KdTree::build(a);
    let tree_b = KdTree::build(b);
    Ok(directed(a, &tree_b).max(directed(b, &tree_a)).sqrt())
}

/// F-score at threshold `tau`: harmonic mean of precision (pred points
/// within `tau` of gt) and recall (gt within `tau` of pred); 0 when both
/// vanish.
pub fn f1_score(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("f1 threshold must be > 0, got {tau}")));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Input("f1 of an empty point set".into()));
    }
    let within = |from: &[Vec3], tree: &KdTree| -> f64 {
        let hits = from.iter().filter(|&&p| tree.nearest(p).1 <= tau * tau).count();
        hits as f64 / from.len() as f64
    };
    let precision = within(pred, &KdTree::build(gt));
    let recall = within(gt, &KdTree::build(pred));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Normal consistency: symmetric mean over nearest-neighbor pairs of
/// `|⟨n_a, n_b⟩|`.
pub fn normal_consistency(a: &EvalSample, b: &EvalSample) -> Result<f64> {
    let (na, nb) = match (&a.normals, &b.normals) {
        (Some(na), Some(nb)) => (na, nb),
        _ => return Err(Error::Input("normal consistency requires normals on both sides".into())),
    };
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::Input("normal consistency of an empty point set".into()));
    }
    let directed = |points: &[Vec3], normals: &[Vec3], tree: &KdTree, other: &[Vec3]| -> f64 {
        let total: f64 = points
            .iter()
            .zip(normals)
            .map(|(&p, &n)| {
                let (idx, _) = tree.nearest(p);
                n.dot(other[idx]).abs()
            })
            .sum();
        total / points.len() as f64
    };
    let tree_a = KdTree::build(&a.points);
    let tree_b = KdTree::build(&b.points);
    let fwd = directed(&a.points, na, &tree_b, nb);
    let bwd = directed(&b.points, nb, &tree_a, na);
    Ok(0.5 * (fwd + bwd))
}

/// Validity of a complex for export: finite coordinates, positive weights,
/// distinct corner pool indices per patch, and a STEP serialization dry run.
pub fn validity_check(complex: &PatchComplex) -> (bool, String) {
    if complex.patches.is_empty() {
        return (false, "no patches".into());
    }
    for (i, p) in complex.pool.base_positions.iter().enumerate() {
        let eff = complex.pool.effective_position(i);
        if !p.is_finite() || !eff.is_finite() {
            return (false, "non-finite coordinate".into());
        }
    }
    for i in 0..complex.pool.len() {
        let w = complex.pool.effective_weight(i);
        if !(w > 0.0) || !w.is_finite() {
            return (false, format!("non-positive weight at pool vertex {i}"));
        }
    }
    for (k, patch) in complex.patches.iter().enumerate() {
        let corners = [
            patch.vertex_ids[0][0],
            patch.vertex_ids[3][0],
            patch.vertex_ids[0][3],
            patch.vertex_ids[3][3],
        ];
        for a in 0..4 {
            for b in (a + 1)..4 {
                if corners[a] == corners[b] {
                    return (false, format!("patch {k} has coincident corner control points"));
                }
            }
        }
    }
    if let Err(e) = crate::io::step::document_from_complex(complex, "validity_dry_run") {
        return (false, format!("STEP serialization failed: {e}"));
    }
    (true, String::new())
}

/// Full metric bundle between prediction and ground-truth samples.
pub fn evaluate(pred: &EvalSample, gt: &EvalSample, tau: f64, valid: bool) -> Result<MetricReport> {
    let nc = match (&pred.normals, &gt.normals) {
        (Some(_), Some(_)) => Some(normal_consistency(pred, gt)?),
        _ => None,
    };
    Ok(MetricReport {
        cd: chamfer_distance(&pred.points, &gt.points)?,
        hd: hausdorff(&pred.points, &gt.points)?,
        f1: f1_score(&pred.points, &gt.points, tau)?,
        nc,
        tau,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_complex, LatticeQuad};
    use crate::math::{rotate_axis_angle, vec3};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_points(rng: &mut StdRng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                vec3(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect()
    }

    #[test]
    fn hausdorff_trivial_cases() {
        let mut rng = StdRng::seed_from_u64(70);
        let pts = random_points(&mut rng, 25);
        assert_eq!(hausdorff(&pts, &pts).unwrap(), 0.0);
        let d = hausdorff(&[vec3(0.0, 0.0, 0.0)], &[vec3(1.0, 0.0, 0.0)]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        assert!(hausdorff(&[], &pts).is_err());
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        let mut rng = StdRng::seed_from_u64(71);
        for _ in 0..10 {
            let a = random_points(&mut rng, 30);
            let b = random_points(&mut rng, 30);
            let oracle = {
                let directed = |x: &[Vec3], y: &[Vec3]| {
                    x.iter()
                        .map(|&p| {
                            y.iter().map(|&q| (p - q).norm()).fold(f64::INFINITY, f64::min)
                        })
                        .fold(0.0f64, f64::max)
                };
                directed(&a, &b).max(directed(&b, &a))
            };
            assert!((hausdorff(&a, &b).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_trivial_and_hand_counted_cases() {
        let mut rng = StdRng::seed_from_u64(72);
        let pts = random_points(&mut rng, 40);
        assert_eq!(f1_score(&pts, &pts, 0.01).unwrap(), 1.0);
        let far: Vec<Vec3> = pts.iter().map(|p| *p + vec3(10.0, 0.0, 0.0)).collect();
        assert_eq!(f1_score(&pts, &far, 0.01).unwrap(), 0.0);
        // Half-overlapping synthetic sets: 2 of 4 pred points within tau,
        // 2 of 2 gt points matched. P = 0.5, R = 1.0, F1 = 2/3.
        let pred = vec![
            vec3(0.0, 0.0, 0.0),
            vec3(1.0, 0.0, 0.0),
            vec3(5.0, 0.0, 0.0),
            vec3(6.0, 0.0, 0.0),
        ];
        let gt = vec![vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0)];
        let f1 = f1_score(&pred, &gt, 0.5).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(f1_score(&pred, &gt, 0.0).is_err());
    }

    #[test]
    fn f1_is_monotone_in_tau() {
        let mut rng = StdRng::seed_from_u64(73);
        let a = random_points(&mut rng, 60);
        let b = random_points(&mut rng, 60);
        let mut prev = 0.0;
        for tau in [0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let f = f1_score(&a, &b, tau).unwrap();
            assert!(f >= prev - 1e-12, "tau={tau}");
            prev = f;
        }
        assert_eq!(prev, 1.0, "everything matches at tau = domain diameter");
    }

    #[test]
    fn rigid_motion_leaves_cd_and_hd_invariant() {
        let mut rng = StdRng::seed_from_u64(74);
        let a = random_points(&mut rng, 50);
        let b = random_points(&mut rng, 40);
        let cd0 = chamfer_distance(&a, &b).unwrap();
        let hd0 = hausdorff(&a, &b).unwrap();
        for _ in 0..20 {
            let axis = vec3(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalized(1e-9)
            .unwrap();
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let shift = vec3(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let move_all = |pts: &[Vec3]| -> Vec<Vec3> {
                pts.iter()
                    .map(|&p| rotate_axis_angle(p, axis, angle) + shift)
                    .collect()
            };
            let cd = chamfer_distance(&move_all(&a), &move_all(&b)).unwrap();
            let hd = hausdorff(&move_all(&a), &move_all(&b)).unwrap();
            assert!((cd - cd0).abs() < 1e-9, "cd {cd} vs {cd0}");
            assert!((hd - hd0).abs() < 1e-9, "hd {hd} vs {hd0}");
        }
    }

    fn plane_sample(n: usize, seed: u64, flip: bool) -> EvalSample {
        let mesh = TriangleMesh::new(
            vec![
                vec3(0.0, 0.0, 0.0),
                vec3(1.0, 0.0, 0.0),
                vec3(1.0, 1.0, 0.0),
                vec3(0.0, 1.0, 0.0),
            ],
            if flip {
                vec![[0, 2, 1], [0, 3, 2]]
            } else {
                vec![[0, 1, 2], [0, 2, 3]]
            },
        );
        sample_eval_points(&EvalShape::Mesh(&mesh), n, seed).unwrap()
    }

    #[test]
    fn nc_is_one_for_identical_and_flipped_planes() {
        let a = plane_sample(500, 5, false);
        assert!((normal_consistency(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        let b = plane_sample(500, 9, true);
        assert!((normal_consistency(&a, &b).unwrap() - 1.0).abs() < 1e-6, "absolute dot");
    }

    #[test]
    fn nc_matches_brute_force_and_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(75);
        let make = |rng: &mut StdRng, n: usize| -> EvalSample {
            let points = random_points(rng, n);
            let normals = (0..n)
                .map(|_| {
                    vec3(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                    .normalized(1e-9)
                    .unwrap()
                })
                .collect();
            EvalSample {
                points,
                normals: Some(normals),
            }
        };
        let a = make(&mut rng, 35);
        let b = make(&mut rng, 45);
        let got = normal_consistency(&a, &b).unwrap();
        let oracle = {
            let directed = |x: &EvalSample, y: &EvalSample| -> f64 {
                let xn = x.normals.as_ref().unwrap();
                let yn = y.normals.as_ref().unwrap();
                let total: f64 = x
                    .points
                    .iter()
                    .zip(xn)
                    .map(|(&p, &n)| {
                        let mut best = (f64::INFINITY, 0usize);
                        for (j, &q) in y.points.iter().enumerate() {
                            let d = (p - q).norm_squared();
                            if d < best.0 {
                                best = (d, j);
                            }
                        }
                        n.dot(yn[best.1]).abs()
                    })
                    .sum();
                total / x.points.len() as f64
            };
            0.5 * (directed(&a, &b) + directed(&b, &a))
        };
        assert!((got - oracle).abs() < 1e-12);
        let swapped = normal_consistency(&b, &a).unwrap();
        assert!((got - swapped).abs() < 1e-12);
        // Missing normals rejected.
        let bare = EvalSample {
            points: a.points.clone(),
            normals: None,
        };
        assert!(normal_consistency(&bare, &b).is_err());
    }

    #[test]
    fn chamfer_metric_matches_fit_convention() {
        let a = vec![vec3(0.0, 0.0, 0.0)];
        let b = vec![vec3(1.0, 0.0, 0.0)];
        assert!((chamfer_distance(&a, &b).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eval_sampling_of_unit_square_stays_in_square() {
        let s = plane_sample(EVAL_POINTS, 3, false);
        assert_eq!(s.points.len(), EVAL_POINTS);
        for p in &s.points {
            assert!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0);
            assert_eq!(p.z, 0.0);
        }
        for n in s.normals.as_ref().unwrap() {
            assert!((n.z.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_complex_equals_sampling_its_tessellation() {
        let complex = build_complex(
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
        .unwrap();
        let direct = sample_eval_points(&EvalShape::Complex(&complex), 512, 11).unwrap();
        let mesh = complex.tessellate(EVAL_TESSELLATION).unwrap().to_triangle_mesh();
        let via_mesh = sample_eval_points(&EvalShape::Mesh(&mesh), 512, 11).unwrap();
        assert_eq!(direct.points, via_mesh.points);
    }

    #[test]
    fn eval_sampling_density_is_area_proportional() {
        // Two triangles with areas 1 and 3; binomial 3σ bound on the split.
        let mesh = TriangleMesh::new(
            vec![
                vec3(0.0, 0.0, 0.0),
                vec3(2.0, 0.0, 0.0),
                vec3(0.0, 1.0, 0.0),
                vec3(10.0, 0.0, 0.0),
                vec3(16.0, 0.0, 0.0),
                vec3(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        );
        let s = sample_eval_points(&EvalShape::Mesh(&mesh), 8192, 17).unwrap();
        let right = s.points.iter().filter(|p| p.x > 5.0).count() as i64;
        let expect = 6144;
        let sigma = (8192.0f64 * 0.75 * 0.25).sqrt();
        assert!((right - expect).abs() as f64 <= 3.0 * sigma, "right={right}");
    }

    #[test]
    fn validity_accepts_fresh_and_rejects_broken_complexes() {
        let mut complex = build_complex(
            &[LatticeQuad {
                corners: [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
            }],
            4,
        )
        .unwrap();
        let (ok, _) = validity_check(&complex);
        assert!(ok);
        complex.pool.base_positions[3].x = f64::NAN;
        let (ok, reason) = validity_check(&complex);
        assert!(!ok);
        assert_eq!(reason, "non-finite coordinate");
        let empty = PatchComplex {
            pool: crate::complex::ControlVertexPool {
                base_positions: vec![],
                raw_deltas: vec![],
                raw_weights: vec![],
                deform_scale: 1.0,
            },
            patches: vec![],
            shared_edges: vec![],
        };
        let (ok, reason) = validity_check(&empty);
        assert!(!ok);
        assert_eq!(reason, "no patches");
    }
}
