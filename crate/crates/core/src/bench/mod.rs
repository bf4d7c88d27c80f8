//! Pose estimation methods and the benchmark grid:
//! objects × scenes × noise levels × methods.

mod results;

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::features::{compute_fpfh, default_radius, match_features, FeatureCloud};
use crate::geometry::{PointCloud, RigidTransform, TriangleMesh};
use crate::io::load_mesh;
use crate::matchgen::{extract_correspondences, Oracle, OracleSpec, DEFAULT_VOTE_THRESHOLD};
use crate::metrics::{evaluate, DEFAULT_CORRECT_FRACTION};
use crate::sampling::{add_noise, build_object_model, NoiseSpec, ObjectModel, DEFAULT_KEYPOINTS};
use crate::scenegen::{generate_scene, BinSpec, MAX_INSTANCES};
use crate::seeding::derive_seed;
use crate::shapes;
use crate::solver::{
    ransac_classic_keypoints, ransac_classic_points, ransac_coarse_to_fine, PoseEstimate, RansacConfig,
};

pub use results::{
    normalize_rows, parse_results_csv, results_to_csv, BenchSummary, MeanRecall, RecallCell, ResultRow, RowKey, Timing,
    RESULTS_HEADER,
};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Correspondence source plus solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Oracle keypoint votes, coarse-to-fine RANSAC.
    #[serde(rename = "oracle-c2f")]
    OracleC2f,
    /// Oracle keypoint votes, single-distance RANSAC and ICP.
    #[serde(rename = "oracle-classic")]
    OracleClassic,
    /// Mutual FPFH matches, single-distance RANSAC and ICP.
    #[serde(rename = "fpfh")]
    Fpfh,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::OracleC2f, Method::OracleClassic, Method::Fpfh];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::OracleC2f => "oracle-c2f",
            Method::OracleClassic => "oracle-classic",
            Method::Fpfh => "fpfh",
        }
    }

    pub fn uses_oracle(self) -> bool {
        self != Method::Fpfh
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown method {s:?} (expected oracle-c2f, oracle-classic or fpfh)"
            ))
        })
    }
}

/// A built-in shape name or a path to an OBJ/PLY mesh. The id is the shape
/// name or the file stem.
pub fn resolve_object(spec: &str) -> Result<(String, TriangleMesh)> {
    if let Some(mesh) = shapes::by_name(spec) {
        return Ok((spec.to_string(), mesh));
    }
    let path = Path::new(spec);
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("cannot derive an object id from {spec:?}")))?;
    Ok((id.to_string(), load_mesh(path)?))
}

/// Everything pre-computed once per object and reused across scenes.
#[derive(Debug, Clone)]
pub struct ObjectContext {
    pub id: String,
    pub model: ObjectModel,
    pub features: Option<FeatureCloud>,
    pub fpfh_radius: f64,
}

impl ObjectContext {
    pub fn new(id: impl Into<String>, model: ObjectModel, with_features: bool) -> Result<Self> {
        let fpfh_radius = default_radius(&model.cloud)?;
        let features = if with_features {
            Some(compute_fpfh(&model.cloud, fpfh_radius)?)
        } else {
            None
        };
        Ok(Self {
            id: id.into(),
            model,
            features,
            fpfh_radius,
        })
    }
}

/// Per-run knobs shared by all methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub oracle: OracleSpec,
    pub ransac: RansacConfig,
    pub vote_threshold: f64,
}

#[derive(Debug, Clone)]
pub enum Matches {
    /// Scene point → keypoint index.
    Keypoints(CorrespondenceSet),
    /// Scene point → object cloud index.
    Points(CorrespondenceSet),
}

impl Matches {
    pub fn len(&self) -> usize {
        match self {
            Matches::Keypoints(c) | Matches::Points(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Oracle votes need the ground truth and instance mask; FPFH ignores them.
pub fn compute_matches(
    method: Method,
    ctx: &ObjectContext,
    scene: &PointCloud,
    gt_pose: &RigidTransform,
    mask: &[bool],
    settings: &MethodSettings,
) -> Result<Matches> {
    if method.uses_oracle() {
        let pred = Oracle::new(&ctx.model, settings.oracle)?.predict(scene, gt_pose, mask)?;
        return Ok(Matches::Keypoints(extract_correspondences(
            &pred,
            settings.vote_threshold,
        )?));
    }
    let computed;
    let object = match &ctx.features {
        Some(f) => f,
        None => {
            computed = compute_fpfh(&ctx.model.cloud, ctx.fpfh_radius)?;
            &computed
        }
    };
    let scene_features = compute_fpfh(scene, ctx.fpfh_radius)?;
    Ok(Matches::Points(match_features(&scene_features, object, true)?))
}

pub fn solve_matches(
    method: Method,
    ctx: &ObjectContext,
    scene: &PointCloud,
    matches: &Matches,
    settings: &MethodSettings,
) -> Result<PoseEstimate> {
    match (method, matches) {
        (Method::OracleC2f, Matches::Keypoints(c)) => ransac_coarse_to_fine(scene, &ctx.model, c, &settings.ransac),
        (Method::OracleClassic, Matches::Keypoints(c)) => {
            ransac_classic_keypoints(scene, &ctx.model, c, &settings.ransac)
        }
        (Method::Fpfh, Matches::Points(c)) => {
            ransac_classic_points(scene, &ctx.model.cloud, c, ctx.model.diameter, &settings.ransac)
        }
        _ => Err(Error::invalid(format!("matches of the wrong kind for {method}"))),
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub estimate: PoseEstimate,
    pub n_correspondences: usize,
    pub match_ms: f64,
    pub ransac_ms: f64,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Matching plus solving, timed separately.
pub fn estimate_pose(
    method: Method,
    ctx: &ObjectContext,
    scene: &PointCloud,
    gt_pose: &RigidTransform,
    mask: &[bool],
    settings: &MethodSettings,
) -> Result<EstimateOutput> {
    let t0 = Instant::now();
    let matches = compute_matches(method, ctx, scene, gt_pose, mask, settings)?;
    let match_ms = elapsed_ms(t0);
    let t1 = Instant::now();
    let estimate = solve_matches(method, ctx, scene, &matches, settings)?;
    Ok(EstimateOutput {
        estimate,
        n_correspondences: matches.len(),
        match_ms,
        ransac_ms: elapsed_ms(t1),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Built-in shape names or mesh paths.
    pub objects: Vec<String>,
    pub scenes_per_object: usize,
    pub instance_range: [usize; 2],
    pub noise_levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub oracle: OracleSpec,
    pub ransac: RansacConfig,
    pub vote_threshold: f64,
    pub keypoints: usize,
    /// ADI correctness threshold as a fraction of the diameter.
    pub correct_fraction: f64,
    pub bin: BinSpec,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            objects: shapes::NAMES.iter().map(|s| s.to_string()).collect(),
            scenes_per_object: 100,
            instance_range: [1, MAX_INSTANCES],
            noise_levels: vec![0.0, 0.01, 0.05],
            methods: Method::ALL.to_vec(),
            oracle: OracleSpec::default(),
            ransac: RansacConfig::default(),
            vote_threshold: DEFAULT_VOTE_THRESHOLD,
            keypoints: DEFAULT_KEYPOINTS,
            correct_fraction: DEFAULT_CORRECT_FRACTION,
            bin: BinSpec::default(),
            output_dir: PathBuf::from("bench_out"),
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::invalid("benchmark needs at least one object"));
        }
        if self.scenes_per_object == 0 {
            return Err(Error::invalid("scenes_per_object must be at least 1"));
        }
        let [lo, hi] = self.instance_range;
        if !(1 <= lo && lo <= hi && hi <= MAX_INSTANCES) {
            return Err(Error::invalid(format!(
                "instance_range must satisfy 1 <= lo <= hi <= {MAX_INSTANCES}"
            )));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return Err(Error::invalid("noise levels must be finite and >= 0"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("benchmark needs at least one method"));
        }
        if !(self.vote_threshold > 0.0 && self.vote_threshold <= 1.0) {
            return Err(Error::invalid("vote_threshold must lie in (0, 1]"));
        }
        if self.keypoints == 0 {
            return Err(Error::invalid("keypoints must be at least 1"));
        }
        if !(self.correct_fraction > 0.0 && self.correct_fraction.is_finite()) {
            return Err(Error::invalid("correct_fraction must be positive"));
        }
        self.oracle.validate()?;
        self.ransac.validate()?;
        self.bin.validate()?;
        Ok(())
    }

    fn instances_for(&self, scene: usize) -> usize {
        let [lo, hi] = self.instance_range;
        lo + scene % (hi - lo + 1)
    }
}

/// Stable 64-bit tag of an object id (FNV-1a), so seeds do not depend on
/// the order of the object list.
fn name_tag(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

const TAG_MODEL: u64 = 1;
const TAG_SCENE: u64 = 2;
const TAG_CELL: u64 = 3;

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    /// Sorted rows, including ones carried over by a resume.
    pub rows: Vec<ResultRow>,
    pub summary: BenchSummary,
    pub skipped_rows: usize,
    pub csv_path: PathBuf,
}

pub fn prepare_objects(cfg: &BenchmarkConfig) -> Result<Vec<ObjectContext>> {
    let with_features = cfg.methods.contains(&Method::Fpfh);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(cfg.objects.len());
    for spec in &cfg.objects {
        let (id, mesh) = resolve_object(spec)?;
        if id.contains(',') || !seen.insert(id.clone()) {
            return Err(Error::invalid(format!(
                "object id {id:?} is duplicated or contains a comma"
            )));
        }
        let model = build_object_model(&mesh, cfg.keypoints, derive_seed(cfg.seed, &[name_tag(&id), TAG_MODEL]))?;
        out.push(ObjectContext::new(id, model, with_features)?);
    }
    Ok(out)
}

/// All pending rows of one scene. Oracle votes are shared by both oracle
/// methods of a noise level.
fn run_scene(
    cfg: &BenchmarkConfig,
    ctx: &ObjectContext,
    index: usize,
    done: &HashSet<RowKey>,
) -> Result<Vec<ResultRow>> {
    let scene_id = format!("{index:04}");
    let pending = |noise: f64, m: Method| !done.contains(&(ctx.id.clone(), scene_id.clone(), noise.to_bits(), m));
    if !cfg
        .noise_levels
        .iter()
        .any(|&n| cfg.methods.iter().any(|&m| pending(n, m)))
    {
        return Ok(Vec::new());
    }
    let tag = name_tag(&ctx.id);
    let scene = generate_scene(
        &ctx.model,
        &cfg.bin,
        cfg.instances_for(index),
        derive_seed(cfg.seed, &[tag, TAG_SCENE, index as u64]),
    )?;
    let mut rows = Vec::new();
    for &noise in &cfg.noise_levels {
        let methods: Vec<Method> = cfg.methods.iter().copied().filter(|&m| pending(noise, m)).collect();
        if methods.is_empty() {
            continue;
        }
        let cell = derive_seed(cfg.seed, &[tag, TAG_CELL, index as u64, noise.to_bits()]);
        let noisy = add_noise(
            &scene.cloud,
            &NoiseSpec {
                sigma_fraction: noise,
                seed: derive_seed(cell, &[0]),
            },
            ctx.model.diameter,
        )?;
        let settings = MethodSettings {
            oracle: OracleSpec {
                seed: derive_seed(cell, &[1]),
                ..cfg.oracle
            },
            ransac: RansacConfig {
                seed: derive_seed(cell, &[2]),
                ..cfg.ransac.clone()
            },
            vote_threshold: cfg.vote_threshold,
        };
        let mut oracle_cache: Option<(Result<Matches>, f64)> = None;
        for method in methods {
            let t0 = Instant::now();
            let matches = if method.uses_oracle() {
                let (m, ms) = oracle_cache.get_or_insert_with(|| {
                    let t = Instant::now();
                    let m = compute_matches(method, ctx, &noisy, &scene.gt_pose, &scene.instance_mask, &settings);
                    (m, elapsed_ms(t))
                });
                (
                    m.as_ref()
                        .map(Clone::clone)
                        .map_err(|e| Error::degenerate(e.to_string())),
                    *ms,
                )
            } else {
                let m = compute_matches(method, ctx, &noisy, &scene.gt_pose, &scene.instance_mask, &settings);
                (m, elapsed_ms(t0))
            };
            let (matches, match_ms) = matches;
            let t1 = Instant::now();
            let solved = matches.and_then(|m| solve_matches(method, ctx, &noisy, &m, &settings));
            let ms = match_ms + elapsed_ms(t1);
            // Failed searches still get ADI/ADD so the row is complete.
            let (pose, solved) = match solved {
                Ok(est) => (est.pose, !est.is_failure()),
                Err(e) => {
                    log::warn!("{}/{scene_id} noise {noise} {method}: {e}", ctx.id);
                    (RigidTransform::identity(), false)
                }
            };
            let e = evaluate(
                &ctx.id,
                &scene_id,
                &pose,
                &scene.gt_pose,
                &ctx.model.cloud,
                ctx.model.diameter,
                cfg.correct_fraction,
            );
            let row = ResultRow {
                object_id: ctx.id.clone(),
                scene_id: scene_id.clone(),
                noise_level: noise,
                method,
                adi: e.adi,
                add: e.add,
                correct: solved && e.correct,
                runtime_ms: ms,
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Reads the rows of an interrupted run; a torn final line is dropped.
fn read_partial(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("object_id") {
            continue;
        }
        match ResultRow::parse_csv_line(line, i + 1) {
            Ok(r) => rows.push(r),
            Err(e) if i + 1 == lines.len() => log::warn!("dropping torn last line: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs the grid. Rows stream through a single writer as scenes finish;
/// the final file is rewritten sorted so it only depends on the seed
/// (timing aside). With `resume`, rows already on disk are kept and skipped.
pub fn run_benchmark(cfg: &BenchmarkConfig, resume: bool) -> Result<BenchOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let csv_path = cfg.output_dir.join(RESULTS_FILE);
    let previous = if resume && csv_path.exists() {
        normalize_rows(read_partial(&csv_path)?)
    } else {
        Vec::new()
    };
    let done: HashSet<RowKey> = previous.iter().map(ResultRow::key).collect();
    write_atomic(&csv_path, &results_to_csv(&previous))?;

    let contexts = prepare_objects(cfg)?;
    let tasks: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|o| (0..cfg.scenes_per_object).map(move |s| (o, s)))
        .collect();

    let file = OpenOptions::new().append(true).open(&csv_path)?;
    let (tx, rx) = mpsc::channel::<ResultRow>();
    let writer = std::thread::spawn(move || -> std::io::Result<Vec<ResultRow>> {
        let mut out = std::io::BufWriter::new(file);
        let mut fresh = Vec::new();
        for row in rx {
            writeln!(out, "{}", row.to_csv_line())?;
            out.flush()?;
            fresh.push(row);
        }
        Ok(fresh)
    });
    tasks
        .par_iter()
        .for_each_with(tx, |tx, &(o, s)| match run_scene(cfg, &contexts[o], s, &done) {
            Ok(rows) => {
                for r in rows {
                    let _ = tx.send(r);
                }
            }
            Err(e) => log::warn!("{} scene {s:04} skipped: {e}", contexts[o].id),
        });
    let fresh = writer.join().map_err(|_| Error::invalid("result writer panicked"))??;

    let mut all = previous;
    all.extend(fresh);
    let rows = normalize_rows(all);
    write_atomic(&csv_path, &results_to_csv(&rows))?;
    let summary = BenchSummary::from_rows(&rows);
    write_atomic(
        &cfg.output_dir.join(SUMMARY_FILE),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    Ok(BenchOutcome {
        rows,
        summary,
        skipped_rows: done.len(),
        csv_path,
    })
}

/// CSV text with the timing column blanked, for determinism checks.
pub fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| match l.rfind(',') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
