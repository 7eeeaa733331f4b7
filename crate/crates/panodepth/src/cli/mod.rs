//! Batch command-line front end.
//!
//! One multi-command binary, JSON to stdout, artifacts to paths. Every
//! subcommand echoes its resolved configuration inside the report it prints,
//! is deterministic given identical inputs and flags, and exits 0 exactly
//! when the requested artifact was fully produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::curation::{run_pipeline, PipelineConfig};
use crate::depth::{apply_range_mask, gt_range_mask, DepthMap, RangeThreshold};
use crate::geometry::{backproject, distortion_map, normals_from_depth, ErpGrid};
use crate::gradcheck::{grad_check, LossKind};
use crate::io::{
    read_depth, read_mask_png, write_depth, write_mask_png, write_normals_ply, write_pointcloud,
    write_raw_f32_grid, DepthFileFormat,
};
use crate::losses::{total_loss, LossConfig};
use crate::metrics::{aggregate, evaluate, AggregateMode, EvalConfig, MetricsReport};
use crate::reproject::IcosahedronRig;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "panodepth",
    version,
    about = "Equirectangular metric-depth toolkit: geometry, losses, metrics, curation"
)]
struct Cli {
    /// Worker threads for batch evaluation and curation (0 = sequential).
    #[arg(long, global = true, env = "PANODEPTH_THREADS", default_value_t = 0)]
    threads: usize,

    /// Default seed for seeded subcommands.
    #[arg(long, global = true, env = "PANODEPTH_SEED", default_value_t = 0)]
    seed: u64,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate predicted depth maps against ground truth, paired by stem.
    Eval(EvalArgs),
    /// Compute the six losses and their distortion-weighted total.
    Loss(LossArgs),
    /// Check one loss's analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Geometry utilities over depth maps.
    #[command(subcommand)]
    Geometry(GeometryCmd),
    /// ERP→perspective reprojection.
    #[command(subcommand)]
    Reproject(ReprojectCmd),
    /// Run a curation pipeline config.
    Curate(CurateArgs),
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of predicted depth files (.pfm/.png/.raw/.f32).
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory of ground-truth depth files.
    #[arg(long)]
    gt_dir: PathBuf,
    /// Minimum ground-truth depth, meters.
    #[arg(long, default_value_t = 0.01)]
    min_depth: f64,
    /// Truncation threshold, meters (e.g. 10, 20, 50, 100).
    #[arg(long)]
    max_depth: Option<f64>,
    /// Latitude-weight the per-pixel means.
    #[arg(long)]
    latitude_weighted: bool,
    /// Aggregation across images.
    #[arg(long, value_parser = parse_aggregate, default_value = "mean-of-images")]
    aggregate: AggregateMode,
    /// Counts per meter for .png inputs.
    #[arg(long, default_value_t = 256.0)]
    png_scale: f32,
}

#[derive(Args, Debug)]
struct LossArgs {
    /// Predicted depth file.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth depth file.
    #[arg(long)]
    gt: PathBuf,
    /// Predicted soft range mask (16-bit PNG).
    #[arg(long)]
    pred_mask: Option<PathBuf>,
    /// Ground-truth range mask (16-bit PNG).
    #[arg(long)]
    gt_mask: Option<PathBuf>,
    /// Loss configuration (TOML); defaults to the standard training setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write ∂total/∂pred as a raw f32 grid here.
    #[arg(long)]
    grad_out: Option<PathBuf>,
    #[arg(long, default_value_t = 256.0)]
    png_scale: f32,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// silog | df | grad | normal | pts | mask | all
    #[arg(long)]
    loss: String,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    height: usize,
    /// Instance seed; falls back to the global --seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    /// DF patch side for the df loss.
    #[arg(long, default_value_t = 16)]
    patch_size: usize,
}

#[derive(Subcommand, Debug)]
enum GeometryCmd {
    /// Latitude distortion weights as a raw f32 grid.
    DistortionMap {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Back-project a depth map to an ASCII PLY point cloud.
    Pointcloud {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256.0)]
        png_scale: f32,
    },
    /// Surface normals as a PLY with per-vertex normals.
    Normals {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256.0)]
        png_scale: f32,
    },
    /// Ground-truth range mask at a distance threshold.
    Rangemask {
        #[arg(long)]
        depth: PathBuf,
        /// Threshold in meters (presets: 10, 20, 50, 100).
        #[arg(long)]
        threshold: f32,
        /// Where to write the mask (16-bit PNG).
        #[arg(long)]
        mask_out: PathBuf,
        /// Also write the masked (truncated) depth map here.
        #[arg(long)]
        masked_out: Option<PathBuf>,
        #[arg(long, default_value_t = 256.0)]
        png_scale: f32,
    },
}

#[derive(Subcommand, Debug)]
enum ReprojectCmd {
    /// Decompose an ERP depth map into 12 icosahedral perspective patches.
    Ico {
        /// ERP depth input.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for patch_00.pfm … patch_11.pfm and rig.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Horizontal and vertical field of view, degrees.
        #[arg(long, default_value_t = 90.0)]
        fov: f64,
        /// Patch side, pixels.
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Allow fields of view that leave sphere coverage gaps.
        #[arg(long)]
        allow_gaps: bool,
        #[arg(long, default_value_t = 256.0)]
        png_scale: f32,
    },
}

#[derive(Args, Debug)]
struct CurateArgs {
    /// Pipeline configuration (TOML); relative paths resolve against it.
    #[arg(long)]
    config: PathBuf,
}

fn parse_aggregate(s: &str) -> std::result::Result<AggregateMode, String> {
    match s {
        "mean-of-images" => Ok(AggregateMode::MeanOfImages),
        "pixel-pooled" => Ok(AggregateMode::PixelPooled),
        other => Err(format!(
            "unknown aggregate mode `{other}` (mean-of-images | pixel-pooled)"
        )),
    }
}

/// Parses argv and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Eval(args) => cmd_eval(args, cli.threads),
        Command::Loss(args) => cmd_loss(args),
        Command::Gradcheck(args) => cmd_gradcheck(args, cli.seed),
        Command::Geometry(cmd) => cmd_geometry(cmd),
        Command::Reproject(cmd) => cmd_reproject(cmd),
        Command::Curate(args) => cmd_curate(args, cli.threads),
    }
}

fn read_depth_auto(path: &Path, png_scale: f32) -> Result<DepthMap> {
    read_depth(path, DepthFileFormat::from_path(path, png_scale)?)
}

/// Depth files in a directory, keyed by filename stem.
fn depth_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let recognized = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("pfm") | Some("png") | Some("raw") | Some("f32")
        );
        if recognized {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs, threads: usize) -> Result<()> {
    let cfg = EvalConfig {
        min_depth: args.min_depth,
        max_depth: args.max_depth,
        latitude_weighted: args.latitude_weighted,
    };
    cfg.validate()?;
    let preds = depth_files(&args.pred_dir)?;
    let gts = depth_files(&args.gt_dir)?;

    let mut pairs: Vec<(String, PathBuf, PathBuf)> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    for (stem, gt_path) in &gts {
        match preds.get(stem) {
            Some(pred_path) => pairs.push((stem.clone(), pred_path.clone(), gt_path.clone())),
            None => skipped.push(stem.clone()),
        }
    }
    for stem in preds.keys() {
        if !gts.contains_key(stem) {
            skipped.push(stem.clone());
        }
    }
    skipped.sort();
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "no prediction/ground-truth pairs matched between {} and {}",
            args.pred_dir.display(),
            args.gt_dir.display()
        )));
    }

    // Bounded worker pool; results keep pair order regardless of completion.
    let n = pairs.len();
    let results: Vec<Mutex<Option<Result<MetricsReport>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let workers = threads.clamp(1, n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    if i >= n {
                        break;
                    }
                    *guard += 1;
                    i
                };
                let (_, pred_path, gt_path) = &pairs[i];
                let res = (|| {
                    let pred = read_depth_auto(pred_path, args.png_scale)?;
                    let gt = read_depth_auto(gt_path, args.png_scale)?;
                    evaluate(&pred, &gt, &cfg)
                })();
                *results[i].lock().unwrap() = Some(res);
            });
        }
    });

    let mut per_image = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    for (i, (stem, _, _)) in pairs.iter().enumerate() {
        let report = results[i].lock().unwrap().take().unwrap()?;
        per_image.push(json!({"name": stem, "metrics": report}));
        reports.push(report);
    }
    let agg = aggregate(&reports, args.aggregate)?;

    // Top level is the aggregate report itself (fixed field names for
    // downstream tooling), with per-image details alongside.
    let mut report = serde_json::to_value(&agg).expect("report serializes");
    let obj = report.as_object_mut().unwrap();
    obj.insert(
        "config".into(),
        json!({
            "pred_dir": args.pred_dir,
            "gt_dir": args.gt_dir,
            "eval": cfg,
            "aggregate": args.aggregate,
            "png_scale": args.png_scale,
            "threads": threads,
        }),
    );
    obj.insert("n_images".into(), json!(n));
    obj.insert("skipped".into(), json!(skipped));
    obj.insert("per_image".into(), json!(per_image));
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn cmd_loss(args: LossArgs) -> Result<()> {
    let cfg: LossConfig = match &args.config {
        Some(path) => toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config {
            field: "loss config".into(),
            msg: e.to_string(),
        })?,
        None => LossConfig::default(),
    };
    cfg.validate()?;
    let pred = read_depth_auto(&args.pred, args.png_scale)?;
    let gt = read_depth_auto(&args.gt, args.png_scale)?;
    let pred_mask = args.pred_mask.as_deref().map(read_mask_png).transpose()?;
    let gt_mask = args.gt_mask.as_deref().map(read_mask_png).transpose()?;
    let rig = cfg.build_rig()?;
    let report = total_loss(&pred, &gt, pred_mask.as_ref(), gt_mask.as_ref(), &cfg, &rig)?;
    if let Some(grad_path) = &args.grad_out {
        let grad = report.gradient.as_ref().expect("total_loss fills gradient");
        write_raw_f32_grid(&grad.map(|&g| g as f32), grad_path, "1/m")?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "config": cfg,
            "report": report,
            "grad_out": args.grad_out,
        }))
        .expect("report serializes")
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs, global_seed: u64) -> Result<()> {
    let cfg = LossConfig {
        df_patch_size: args.patch_size,
        ..LossConfig::default()
    };
    let seed = args.seed.unwrap_or(global_seed);
    let kinds: Vec<LossKind> = if args.loss == "all" {
        LossKind::ALL.to_vec()
    } else {
        vec![args.loss.parse()?]
    };
    let mut reports = Vec::new();
    let mut all_pass = true;
    for kind in kinds {
        let report = grad_check(kind, args.width, args.height, seed, args.tolerance, &cfg)?;
        all_pass &= report.pass;
        reports.push(report);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "config": { "width": args.width, "height": args.height, "seed": seed,
                        "tolerance": args.tolerance, "patch_size": args.patch_size },
            "checks": reports,
            "pass": all_pass,
        }))
        .expect("report serializes")
    );
    if !all_pass {
        return Err(Error::invalid("gradient check failed".to_string()));
    }
    Ok(())
}

fn cmd_geometry(cmd: GeometryCmd) -> Result<()> {
    match cmd {
        GeometryCmd::DistortionMap { width, height, out } => {
            let grid = ErpGrid::new(width, height)?;
            let dm = distortion_map(&grid);
            write_raw_f32_grid(&dm.weights().map(|&w| w as f32), &out, "1")?;
            let mean = dm.weights().iter().sum::<f64>() / (width * height) as f64;
            println!(
                "{}",
                json!({
                    "config": {"width": width, "height": height},
                    "mean": mean,
                    "out": out,
                })
            );
        }
        GeometryCmd::Pointcloud {
            depth,
            out,
            png_scale,
        } => {
            let map = read_depth_auto(&depth, png_scale)?;
            let pc = backproject(&map)?;
            write_pointcloud(&pc, &out)?;
            println!(
                "{}",
                json!({
                    "config": {"depth": depth, "png_scale": png_scale},
                    "vertices": pc.n_valid(),
                    "out": out,
                })
            );
        }
        GeometryCmd::Normals {
            depth,
            out,
            png_scale,
        } => {
            let map = read_depth_auto(&depth, png_scale)?;
            let pc = backproject(&map)?;
            let nm = normals_from_depth(&map)?;
            write_normals_ply(&pc, &nm, &out)?;
            println!(
                "{}",
                json!({
                    "config": {"depth": depth, "png_scale": png_scale},
                    "normals": nm.n_valid(),
                    "out": out,
                })
            );
        }
        GeometryCmd::Rangemask {
            depth,
            threshold,
            mask_out,
            masked_out,
            png_scale,
        } => {
            let map = read_depth_auto(&depth, png_scale)?;
            let t = RangeThreshold::new(threshold)?;
            let mask = gt_range_mask(&map, t);
            write_mask_png(&mask, &mask_out)?;
            let n_kept = mask.values().iter().filter(|&&v| v > 0.5).count();
            if let Some(out) = &masked_out {
                let masked = apply_range_mask(&map, &mask)?;
                write_depth(&masked, out, DepthFileFormat::from_path(out, png_scale)?)?;
            }
            println!(
                "{}",
                json!({
                    "config": {"depth": depth, "threshold_m": threshold, "png_scale": png_scale},
                    "kept_pixels": n_kept,
                    "mask_out": mask_out,
                    "masked_out": masked_out,
                })
            );
        }
    }
    Ok(())
}

fn cmd_reproject(cmd: ReprojectCmd) -> Result<()> {
    let ReprojectCmd::Ico {
        input,
        out_dir,
        fov,
        size,
        allow_gaps,
        png_scale,
    } = cmd;
    let map = read_depth_auto(&input, png_scale)?;
    let rig = if allow_gaps {
        IcosahedronRig::new_allow_gaps(fov, size)?
    } else {
        IcosahedronRig::new(fov, size)?
    };
    fs::create_dir_all(&out_dir)?;
    let mut cameras = Vec::new();
    for (i, cam) in rig.cameras().iter().enumerate() {
        let patch = crate::reproject::erp_to_perspective(&map, cam)?;
        let patch_map = DepthMap::new(patch.values().clone(), patch.valid().clone())?;
        write_depth(
            &patch_map,
            &out_dir.join(format!("patch_{i:02}.pfm")),
            DepthFileFormat::Pfm,
        )?;
        let f = cam.forward().vector();
        let u = cam.up().vector();
        cameras.push(json!({
            "index": i,
            "axis": [f.x, f.y, f.z],
            "up": [u.x, u.y, u.z],
        }));
    }
    let rig_json = json!({
        "fov_deg": fov,
        "size": size,
        "cameras": cameras,
    });
    fs::write(
        out_dir.join("rig.json"),
        serde_json::to_string_pretty(&rig_json).expect("rig serializes"),
    )?;
    println!(
        "{}",
        json!({
            "config": {"input": input, "fov_deg": fov, "size": size, "allow_gaps": allow_gaps},
            "patches": rig.cameras().len(),
            "out_dir": out_dir,
        })
    );
    Ok(())
}

fn cmd_curate(args: CurateArgs, threads: usize) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = PipelineConfig::from_toml(&text)?;
    if threads > 0 {
        cfg.pipeline.workers = threads;
    }
    let base_dir = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let outputs = run_pipeline(&cfg, &base_dir)?;
    let stages: Vec<_> = outputs
        .iter()
        .map(|o| {
            json!({
                "stage": o.name,
                "records": o.manifest.len(),
                "skipped": o.skipped,
                "manifest": o.manifest_path,
            })
        })
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "config": args.config,
            "workers": cfg.pipeline.workers,
            "stages": stages,
        }))
        .expect("report serializes")
    );
    Ok(())
}
