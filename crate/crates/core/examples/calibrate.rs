//! Scratch calibration harness (not part of the deliverable test suite).

use std::time::Instant;

use patchfit_core::fit::{fit, FitConfig, FitTarget};
use patchfit_core::metrics::{self, EvalShape};
use patchfit_core::shapes;

fn eval_cd_lap(complex: &patchfit_core::PatchComplex, gt: &patchfit_core::TriangleMesh) -> (f64, f64) {
    // Metric CD on 8192 samples both sides, GT normalized the same way fit does.
    let (gt_norm, _) = patchfit_core::voxel::normalize_mesh(gt).unwrap();
    let pred = metrics::sample_eval_points(&EvalShape::Complex(complex), 8192, 1).unwrap();
    let gts = metrics::sample_eval_points(&EvalShape::Mesh(&gt_norm), 8192, 2).unwrap();
    let cd = metrics::chamfer_distance(&pred.points, &gts.points).unwrap();
    let mesh = complex.tessellate(16).unwrap();
    let lap = patchfit_core::fit::laplacian_loss(&mesh, &mesh.vertex_neighbors()).unwrap().value;
    (cd, lap)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("c9");
    match mode {
        "c9" => {
            // Criterion 9 oracle: sphere R=16, 500 iterations, defaults.
            let mesh = shapes::sphere(0.5, 24, 32);
            let config = FitConfig {
                iterations: 500,
                ..FitConfig::default()
            };
            let t0 = Instant::now();
            let (complex, report) = fit(&FitTarget::Mesh(mesh.clone()), 16, &config).unwrap();
            println!(
                "c9: initial_cd={:.6e} final_cd={:.6e} ratio={:.2} time={:.1}s",
                report.initial_cd,
                report.final_cd,
                report.initial_cd / report.final_cd,
                t0.elapsed().as_secs_f64()
            );
            let (cd, lap) = eval_cd_lap(&complex, &mesh);
            println!("c9: metric cd={cd:.6e} lap={lap:.6e}");
        }
        "c1" => {
            // Criterion 1 oracle: lambda ablation trends on a few shapes.
            let iterations: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(600);
            let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
            let r: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(12);
            let shapes_sel: Vec<(&str, patchfit_core::TriangleMesh)> = shapes::desk_battery();
            let configs = [
                ("noreg", 0.0, 0.0),
                ("g1", 5e-3, 0.0),
                ("lap", 0.0, 1.0),
                ("both", 5e-3, 1.0),
            ];
            let t0 = Instant::now();
            let mut sums = [0.0f64; 8];
            for (name, mesh) in &shapes_sel {
                for (ci, (cname, lg1, llp)) in configs.iter().enumerate() {
                    let config = FitConfig {
                        lambda_g1: *lg1,
                        lambda_lp: *llp,
                        iterations,
                        learning_rate: lr,
                        samples_lo: 2048,
                        samples_hi: 4096,
                        tess_lo: 4,
                        tess_hi: 8,
                        target_samples: 8192,
                        g1_samples_per_edge: 4,
                        seed: 9,
                        ..FitConfig::default()
                    };
                    let (complex, _) = fit(&FitTarget::Mesh(mesh.clone()), r, &config).unwrap();
                    let (cd, lap) = eval_cd_lap(&complex, mesh);
                    println!("c1 {name} {cname}: cd={:.5e} lap={:.5e}", cd, lap);
                    sums[2 * ci] += cd;
                    sums[2 * ci + 1] += lap;
                }
            }
            println!("c1 means: noreg cd={:.5e} lap={:.5e} | g1 cd={:.5e} lap={:.5e} | lap cd={:.5e} lap={:.5e} | both cd={:.5e} lap={:.5e}",
                sums[0]/10.0, sums[1]/10.0, sums[2]/10.0, sums[3]/10.0, sums[4]/10.0, sums[5]/10.0, sums[6]/10.0, sums[7]/10.0);
            println!("c1 total time: {:.1}s", t0.elapsed().as_secs_f64());
        }
        "c2one" => {
            // One criterion-2 style fit for timing extrapolation.
            let r: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
            let iters: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200);
            let shape = args.get(4).map(|s| s.as_str()).unwrap_or("box");
            let mesh = shapes::desk_battery()
                .into_iter()
                .find(|(n, _)| *n == shape)
                .unwrap()
                .1;
            let config = FitConfig {
                iterations: iters,
                learning_rate: 1e-4,
                samples_lo: 1536,
                samples_hi: 4096,
                tess_lo: 4,
                tess_hi: 4,
                target_samples: 16384,
                g1_samples_per_edge: 2,
                seed: 3,
                ..FitConfig::default()
            };
            let t0 = Instant::now();
            let (complex, report) = fit(&FitTarget::Mesh(mesh.clone()), r, &config).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let (cd, _) = eval_cd_lap(&complex, &mesh);
            println!(
                "c2one {shape} R={r}: patches={} iters={iters} time={dt:.1}s per_iter={:.1}ms initial={:.5e} final={:.5e} metric_cd={:.5e}",
                report.patch_count,
                dt * 1e3 / iters as f64,
                report.initial_cd,
                report.final_cd,
                cd
            );
        }
        other => eprintln!("unknown mode {other}"),
    }
}
