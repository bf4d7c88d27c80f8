use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use posematch::bench::{
    estimate_pose, parse_results_csv, resolve_object, run_benchmark, BenchSummary, BenchmarkConfig, Method,
    MethodSettings, ObjectContext,
};
use posematch::io::model::{load_model, save_model};
use posematch::metrics::evaluate;
use posematch::normals::{estimate_normals, Orientation, DEFAULT_NORMAL_K};
use posematch::sampling::{add_noise, NoiseSpec, DEFAULT_KEYPOINTS};
use posematch::scenegen::{generate_dataset, read_scene, BinSpec};
use posematch::solver::PoseEstimate;
use posematch::{build_object_model, Error, Point3, RigidTransform};

#[derive(Parser)]
#[command(
    name = "posematch",
    version,
    about = "Keypoint-matching 6D pose estimation on point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an object model (points, normals, keypoints) from a mesh.
    Model(ModelArgs),
    /// Generate a dataset of cropped bin-picking scenes.
    Scenegen(ScenegenArgs),
    /// Estimate the pose of the target instance in one scene.
    Estimate(EstimateArgs),
    /// Run the benchmark grid described by a JSON config.
    Bench(BenchArgs),
    /// Evaluate a pose against a scene, or summarize a results CSV.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// OBJ/PLY mesh, or a built-in shape (cube, cylinder, l_bracket, screw, sphere).
    mesh: String,
    #[arg(long, default_value_t = DEFAULT_KEYPOINTS)]
    keypoints: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output PLY; the JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScenegenArgs {
    /// Model PLY written by `model`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bin geometry as JSON; defaults apply to missing fields.
    #[arg(long)]
    bin: Option<PathBuf>,
    /// Object id used in the dataset layout; defaults to the model file stem.
    #[arg(long)]
    object: Option<String>,
    /// Dataset root.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Scene directory holding cloud.ply, gt.json and mask.csv.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "oracle-c2f")]
    method: Method,
    /// Gaussian noise sigma as a fraction of the object diameter.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    vote_threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Benchmark-style JSON config; its oracle and ransac sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pose JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON config; defaults apply to missing fields.
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    keypoints: Option<usize>,
    #[arg(long)]
    vote_threshold: Option<f64>,
    /// Restrict to these methods (repeatable).
    #[arg(long)]
    method: Vec<Method>,
    /// Keep rows already in the output CSV and run only the missing ones.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Results CSV to summarize.
    #[arg(long, conflicts_with_all = ["scene", "model", "pose"])]
    results: Option<PathBuf>,
    #[arg(long, requires_all = ["model", "pose"])]
    scene: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pose JSON written by `estimate`.
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Correctness threshold as a fraction of the diameter.
    #[arg(long, default_value_t = posematch::metrics::DEFAULT_CORRECT_FRACTION)]
    tau: f64,
}

/// Process exit status: 1 usage, 2 I/O, 3 degenerate input.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Degenerate(_) | Error::EmptyInput => 3,
        Error::KExceedsCloud { .. } | Error::InvalidArgument(_) | Error::Parse { .. } | Error::Json(_) => 1,
    }
}

fn read_text(path: &Path) -> posematch::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> posematch::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "object".into())
}

fn cmd_model(a: ModelArgs) -> posematch::Result<()> {
    let (_, mesh) = resolve_object(&a.mesh)?;
    let model = build_object_model(&mesh, a.keypoints, a.seed)?;
    save_model(&a.out, &model)?;
    eprintln!(
        "wrote {} ({} points, {} keypoints, diameter {:.6})",
        a.out.display(),
        model.cloud.len(),
        model.keypoint_count(),
        model.diameter
    );
    Ok(())
}

fn cmd_scenegen(a: ScenegenArgs) -> posematch::Result<()> {
    let model = load_model(&a.model)?;
    let bin = match &a.bin {
        Some(p) => serde_json::from_str::<BinSpec>(&read_text(p)?)?,
        None => BinSpec::default(),
    };
    bin.validate()?;
    let object = a.object.unwrap_or_else(|| file_stem(&a.model));
    let dirs = generate_dataset(&a.out, &object, &model, &bin, a.count, a.seed)?;
    eprintln!(
        "wrote {} scenes under {}",
        dirs.len(),
        a.out.join("scenes").join(&object).display()
    );
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> posematch::Result<()> {
    let cfg = match &a.config {
        Some(p) => BenchmarkConfig::from_json(&read_text(p)?)?,
        None => BenchmarkConfig::default(),
    };
    let vote_threshold = a.vote_threshold.unwrap_or(cfg.vote_threshold);
    if !(vote_threshold > 0.0 && vote_threshold <= 1.0) {
        return Err(Error::InvalidArgument("--vote-threshold must lie in (0, 1]".into()));
    }
    let model = load_model(&a.model)?;
    let mut scene = read_scene(&a.scene)?;
    if !scene.cloud.has_normals() {
        // Cropped scenes sit below the camera, which looks along +z.
        scene.cloud = estimate_normals(
            &scene.cloud,
            DEFAULT_NORMAL_K,
            &Orientation::TowardViewpoint(Point3::new(0.0, 0.0, -1.0)),
        )?;
    }
    let cloud = add_noise(
        &scene.cloud,
        &NoiseSpec {
            sigma_fraction: a.noise,
            seed: a.seed,
        },
        model.diameter,
    )?;
    let ctx = ObjectContext::new(file_stem(&a.model), model, a.method == Method::Fpfh)?;
    let settings = MethodSettings {
        oracle: posematch::matchgen::OracleSpec {
            seed: a.seed,
            ..cfg.oracle
        },
        ransac: posematch::solver::RansacConfig {
            seed: a.seed,
            ..cfg.ransac
        },
        vote_threshold,
    };
    let (estimate, match_ms, ransac_ms) =
        match estimate_pose(a.method, &ctx, &cloud, &scene.gt_pose, &scene.instance_mask, &settings) {
            Ok(out) => (out.estimate, out.match_ms, out.ransac_ms),
            // A failed search is a result, not an error.
            Err(Error::Degenerate(msg)) => {
                log::warn!("estimation failed: {msg}");
                (PoseEstimate::failed(RigidTransform::identity()), 0.0, 0.0)
            }
            Err(e) => return Err(e),
        };
    let mut doc: Value = serde_json::to_value(&estimate)?;
    doc["match_ms"] = json!(match_ms);
    doc["ransac_ms"] = json!(ransac_ms);
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_bench(a: BenchArgs) -> posematch::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => BenchmarkConfig::from_json(&read_text(p)?)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(k) = a.keypoints {
        cfg.keypoints = k;
    }
    if let Some(v) = a.vote_threshold {
        cfg.vote_threshold = v;
    }
    if !a.method.is_empty() {
        cfg.methods = a.method;
    }
    let outcome = run_benchmark(&cfg, a.resume)?;
    print!("{}", outcome.summary.render());
    eprintln!(
        "{} rows ({} resumed) in {}",
        outcome.rows.len(),
        outcome.skipped_rows,
        outcome.csv_path.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> posematch::Result<()> {
    if let Some(results) = &a.results {
        let rows = parse_results_csv(&read_text(results)?)?;
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        print!("{}", BenchSummary::from_rows(&rows).render());
        return Ok(());
    }
    let (Some(scene_dir), Some(model_path), Some(pose_path)) = (&a.scene, &a.model, &a.pose) else {
        return Err(Error::InvalidArgument(
            "eval needs --results, or --scene with --model and --pose".into(),
        ));
    };
    let model = load_model(model_path)?;
    let scene = read_scene(scene_dir)?;
    // Extra keys such as timings are allowed in the pose file.
    let mut doc: Value = serde_json::from_str(&read_text(pose_path)?)?;
    if let Some(obj) = doc.as_object_mut() {
        obj.retain(|k, _| matches!(k.as_str(), "R" | "t" | "inliers" | "inlier_fraction"));
    }
    let est: PoseEstimate = serde_json::from_value(doc)?;
    let r = evaluate(
        &file_stem(model_path),
        &file_stem(scene_dir),
        &est.pose,
        &scene.gt_pose,
        &model.cloud,
        model.diameter,
        a.tau,
    );
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Model(a) => cmd_model(a),
        Command::Scenegen(a) => cmd_scenegen(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
