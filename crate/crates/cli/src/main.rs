//! Command-line pipeline: voxelize, fit, eval, tessellate, export-step.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 input error,
//! 3 numerical abort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patchfit_core::error::Error;
use patchfit_core::fit::{fit, FitConfig, FitTarget};
use patchfit_core::io::{self, dump, step};
use patchfit_core::metrics::{self, EvalSample, EvalShape};
use patchfit_core::voxel::{self, NormalizeTransform};
use patchfit_core::{PointCloud, TriangleMesh, Vec3};

const ENV_PREFIX: &str = "PATCHFIT_";

#[derive(Parser)]
#[command(
    name = "patchfit",
    version,
    about = "Fit C0-continuous rational Bezier patch complexes to meshes or point clouds and export STEP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a mesh or point cloud and dump the occupied cells as JSON.
    Voxelize {
        /// Input mesh (obj, ply) or point cloud (xyz).
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: initialize from voxels, optimize, export.
    Fit {
        /// Input mesh (obj, ply) or point cloud (xyz).
        input: PathBuf,
        /// Flat key-value config file (key = value per line).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Voxel grid resolution for initialization.
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        /// STEP output path [default: <input stem>.step].
        #[arg(long)]
        out_step: Option<PathBuf>,
        /// Welded OBJ tessellation of the fitted surface.
        #[arg(long)]
        out_obj: Option<PathBuf>,
        /// Structured JSON patch dump.
        #[arg(long)]
        out_dump: Option<PathBuf>,
        /// Fit report path [default: <input stem>.report.json].
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Metric battery between a prediction and ground truth.
    Eval {
        /// Prediction: obj, ply, xyz, step, or patch-dump json.
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth: obj, ply, xyz, step, or patch-dump json.
        #[arg(long)]
        gt: PathBuf,
        /// F1 distance threshold.
        #[arg(long, default_value_t = metrics::DEFAULT_F1_TAU)]
        tau: f64,
        /// Metric report JSON path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tessellate a STEP file or patch dump into an OBJ mesh.
    Tessellate {
        /// Input .step or patch-dump .json.
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a patch dump to STEP.
    ExportStep {
        /// Input patch-dump .json.
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Every fit-config field as a same-named flag; values use the config-file
/// syntax (`deform_scale` also accepts `auto`).
#[derive(Args, Default)]
struct ConfigOverrides {
    #[arg(long = "lambda_cd", value_name = "X")]
    lambda_cd: Option<String>,
    #[arg(long = "lambda_g1", value_name = "X")]
    lambda_g1: Option<String>,
    #[arg(long = "lambda_lp", value_name = "X")]
    lambda_lp: Option<String>,
    #[arg(long = "iterations", value_name = "N")]
    iterations: Option<String>,
    #[arg(long = "learning_rate", value_name = "X")]
    learning_rate: Option<String>,
    #[arg(long = "beta1", value_name = "X")]
    beta1: Option<String>,
    #[arg(long = "beta2", value_name = "X")]
    beta2: Option<String>,
    #[arg(long = "epsilon", value_name = "X")]
    epsilon: Option<String>,
    #[arg(long = "samples_lo", value_name = "N")]
    samples_lo: Option<String>,
    #[arg(long = "samples_hi", value_name = "N")]
    samples_hi: Option<String>,
    #[arg(long = "tess_lo", value_name = "N")]
    tess_lo: Option<String>,
    #[arg(long = "tess_hi", value_name = "N")]
    tess_hi: Option<String>,
    #[arg(long = "schedule_steepness", value_name = "X")]
    schedule_steepness: Option<String>,
    #[arg(long = "schedule_midpoint", value_name = "X")]
    schedule_midpoint: Option<String>,
    #[arg(long = "deform_scale", value_name = "X|auto")]
    deform_scale: Option<String>,
    #[arg(long = "target_samples", value_name = "N")]
    target_samples: Option<String>,
    #[arg(long = "g1_samples_per_edge", value_name = "N")]
    g1_samples_per_edge: Option<String>,
    #[arg(long = "seed", value_name = "N")]
    seed: Option<String>,
}

impl ConfigOverrides {
    fn apply(&self, config: &mut FitConfig) -> Result<(), Error> {
        let pairs = [
            ("lambda_cd", &self.lambda_cd),
            ("lambda_g1", &self.lambda_g1),
            ("lambda_lp", &self.lambda_lp),
            ("iterations", &self.iterations),
            ("learning_rate", &self.learning_rate),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("epsilon", &self.epsilon),
            ("samples_lo", &self.samples_lo),
            ("samples_hi", &self.samples_hi),
            ("tess_lo", &self.tess_lo),
            ("tess_hi", &self.tess_hi),
            ("schedule_steepness", &self.schedule_steepness),
            ("schedule_midpoint", &self.schedule_midpoint),
            ("deform_scale", &self.deform_scale),
            ("target_samples", &self.target_samples),
            ("g1_samples_per_edge", &self.g1_samples_per_edge),
            ("seed", &self.seed),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        Ok(())
    }
}

fn parse_config_file(path: &Path, config: &mut FitConfig) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => {
                return Err(Error::parse(
                    &path.display().to_string(),
                    idx + 1,
                    "expected 'key = value'",
                ))
            }
        };
        config.set(key, value)?;
    }
    Ok(())
}

fn apply_env(config: &mut FitConfig) -> Result<(), Error> {
    if let Ok(seed) = std::env::var(format!("{ENV_PREFIX}SEED")) {
        config.set("seed", &seed)?;
    }
    Ok(())
}

fn init_threads() -> Result<(), Error> {
    if let Ok(threads) = std::env::var(format!("{ENV_PREFIX}THREADS")) {
        let n: usize = threads
            .parse()
            .map_err(|_| Error::Config(format!("bad {ENV_PREFIX}THREADS value '{threads}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn is_point_cloud(path: &Path) -> bool {
    matches!(
        path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()),
        Some(ref e) if e == "xyz"
    )
}

/// Geometry loaded for evaluation, before joint normalization.
enum LoadedShape {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

impl LoadedShape {
    fn load(path: &Path) -> Result<LoadedShape, Error> {
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "obj" | "ply" => Ok(LoadedShape::Mesh(io::load_mesh(path)?)),
            "xyz" => Ok(LoadedShape::Cloud(io::load_points(path)?)),
            "step" | "stp" => {
                let grids = step::read_step_subset(path)?;
                Ok(LoadedShape::Mesh(dump::tessellate_grids(
                    &grids,
                    metrics::EVAL_TESSELLATION,
                )?))
            }
            "json" => {
                let grids = dump::read_patch_dump(path)?;
                Ok(LoadedShape::Mesh(dump::tessellate_grids(
                    &grids,
                    metrics::EVAL_TESSELLATION,
                )?))
            }
            other => Err(Error::Input(format!(
                "unsupported shape extension '{other}' for {}",
                path.display()
            ))),
        }
    }

    fn bounds(&self) -> Option<(Vec3, Vec3)> {
        match self {
            LoadedShape::Mesh(m) => m.bounds(),
            LoadedShape::Cloud(c) => c.bounds(),
        }
    }

    fn transform(&mut self, t: &NormalizeTransform) {
        match self {
            LoadedShape::Mesh(m) => {
                for v in &mut m.vertices {
                    *v = t.apply(*v);
                }
            }
            LoadedShape::Cloud(c) => {
                for p in &mut c.points {
                    *p = t.apply(*p);
                }
            }
        }
    }

    fn sample(&self, seed: u64) -> Result<EvalSample, Error> {
        match self {
            LoadedShape::Mesh(m) => {
                metrics::sample_eval_points(&EvalShape::Mesh(m), metrics::EVAL_POINTS, seed)
            }
            LoadedShape::Cloud(c) => metrics::sample_eval_points(
                &EvalShape::Points(&c.points, c.normals.as_deref()),
                metrics::EVAL_POINTS,
                seed,
            ),
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Voxelize {
            input,
            resolution,
            out,
        } => {
            let grid = if is_point_cloud(&input) {
                let cloud = io::load_points(&input)?;
                let (normalized, _) = voxel::normalize_points(&cloud)?;
                voxel::voxelize_points(&normalized, resolution)?
            } else {
                let mesh = io::load_mesh(&input)?;
                let (normalized, _) = voxel::normalize_mesh(&mesh)?;
                voxel::voxelize(&normalized, resolution)?
            };
            dump::write_voxel_dump(&grid, &out)?;
            println!(
                "voxelized {} at R={resolution}: {} occupied cells -> {}",
                input.display(),
                grid.occupied.len(),
                out.display()
            );
            Ok(())
        }
        Command::Fit {
            input,
            config,
            resolution,
            out_step,
            out_obj,
            out_dump,
            report,
            overrides,
        } => {
            let mut fit_config = FitConfig::default();
            if let Some(path) = &config {
                parse_config_file(path, &mut fit_config)?;
            }
            apply_env(&mut fit_config)?;
            overrides.apply(&mut fit_config)?;
            fit_config.validate()?;

            let target = if is_point_cloud(&input) {
                FitTarget::Cloud(io::load_points(&input)?)
            } else {
                FitTarget::Mesh(io::load_mesh(&input)?)
            };
            let (complex, fit_report) = fit(&target, resolution, &fit_config)?;

            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "surface".to_string());
            let step_path = out_step.unwrap_or_else(|| PathBuf::from(format!("{stem}.step")));
            let report_path = report.unwrap_or_else(|| PathBuf::from(format!("{stem}.report.json")));

            step::write_step(&complex, &step_path)?;
            std::fs::write(&report_path, fit_report.to_json())?;
            if let Some(path) = &out_obj {
                let mesh = complex.tessellate(fit_config.tess_hi)?;
                io::write_obj(&mesh, path)?;
            }
            if let Some(path) = &out_dump {
                dump::write_patch_dump(&complex, path)?;
            }
            println!(
                "fit {}: {} patches, CD {:.6e} -> {:.6e} in {} iterations ({:.1} s)",
                input.display(),
                fit_report.patch_count,
                fit_report.initial_cd,
                fit_report.final_cd,
                fit_report.iterations,
                fit_report.wall_time_ms / 1e3,
            );
            println!("wrote {}", step_path.display());
            println!("wrote {}", report_path.display());
            Ok(())
        }
        Command::Eval {
            pred,
            gt,
            tau,
            report,
            seed,
        } => {
            let mut pred_shape = LoadedShape::load(&pred)?;
            let mut gt_shape = LoadedShape::load(&gt)?;
            // Joint normalization by the ground-truth transform.
            let bounds = gt_shape
                .bounds()
                .ok_or_else(|| Error::Input("ground truth has no geometry".into()))?;
            let extent = bounds.1 - bounds.0;
            let longest = extent.x.max(extent.y).max(extent.z);
            if !(longest > 1e-12) {
                return Err(Error::Input("degenerate ground-truth geometry".into()));
            }
            let transform = NormalizeTransform {
                center: (bounds.0 + bounds.1) * 0.5,
                scale: 1.0 / longest,
            };
            pred_shape.transform(&transform);
            gt_shape.transform(&transform);

            let pred_sample = pred_shape.sample(seed)?;
            let gt_sample = gt_shape.sample(seed)?;
            let metric_report = metrics::evaluate(&pred_sample, &gt_sample, tau, true)?;

            println!("metric\tvalue");
            println!("cd_x1000\t{:.6}", metric_report.cd * 1e3);
            println!("hd\t{:.6}", metric_report.hd);
            println!("f1\t{:.6}", metric_report.f1);
            match metric_report.nc {
                Some(nc) => println!("nc\t{nc:.6}"),
                None => println!("nc\t-"),
            }
            println!("valid\t{}", metric_report.valid);
            if let Some(path) = &report {
                let mut text =
                    serde_json::to_string_pretty(&metric_report).expect("report serialization");
                text.push('\n');
                std::fs::write(path, text)?;
            }
            Ok(())
        }
        Command::Tessellate {
            input,
            resolution,
            out,
        } => {
            let ext = input
                .extension()
                .map(|e| e.to_string_lossy().to_ascii_lowercase())
                .unwrap_or_default();
            let grids = match ext.as_str() {
                "step" | "stp" => step::read_step_subset(&input)?,
                "json" => dump::read_patch_dump(&input)?,
                other => {
                    return Err(Error::Input(format!(
                        "tessellate expects .step or .json, got '{other}'"
                    )))
                }
            };
            let mesh = dump::tessellate_grids(&grids, resolution)?;
            io::obj::write_obj_mesh(&mesh.vertices, &mesh.triangles, &out)?;
            println!(
                "tessellated {} patches at r={resolution}: {} vertices, {} triangles -> {}",
                grids.len(),
                mesh.vertices.len(),
                mesh.triangles.len(),
                out.display()
            );
            Ok(())
        }
        Command::ExportStep { input, out } => {
            let grids = dump::read_patch_dump(&input)?;
            let doc = step::write_step_grids(&grids, &out)?;
            println!("exported {} surfaces -> {}", doc.surface_count, out.display());
            Ok(())
        }
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
