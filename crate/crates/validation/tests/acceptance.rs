//! Acceptance criteria, run sequentially so the timing checks do not
//! compete with each other. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Pass `acN` arguments to run a subset.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use posematch::bench::{run_benchmark, strip_timing, BenchmarkConfig, Method};
use posematch::correspondence::CorrespondenceSet;
use posematch::features::{compute_fpfh, default_radius};
use posematch::geometry::fibonacci_sphere;
use posematch::matchgen::{extract_correspondences, true_keypoint, Oracle, OracleSpec, SEG_DECISION};
use posematch::metrics::{add_metric, adi_metric};
use posematch::sampling::{add_noise, NoiseSpec};
use posematch::scenegen::{generate_scene, BinSpec};
use posematch::solver::{kabsch, ransac_coarse_to_fine, ransac_coarse_to_fine_report, RansacConfig};
use posematch::{build_object_model, shapes, ObjectModel, Point3, PointCloud, RigidTransform, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn model(name: &str, seed: u64) -> ObjectModel {
    build_object_model(&shapes::by_name(name).unwrap(), 100, seed).unwrap()
}

/// ‖A − B‖_F / √2 equals the rotation angle between A and B for small
/// angles, without the cancellation of the trace formula.
fn rotation_gap(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).norm() / std::f64::consts::SQRT_2
}

fn random_pose(rng: &mut ChaCha8Rng, t_scale: f64) -> RigidTransform {
    let t = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ) * t_scale;
    RigidTransform::random_rotation(rng, t)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Correspondences on `model` placed at `gt`: the first `fraction` are
/// correct, the rest point at a different random keypoint.
fn synthetic(
    model: &ObjectModel,
    gt: &RigidTransform,
    fraction: f64,
    n: usize,
    seed: u64,
) -> (PointCloud, CorrespondenceSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = model.cloud.transformed(gt);
    let k = model.keypoint_count();
    let mut corr = CorrespondenceSet::default();
    for i in 0..n {
        let j = rng.gen_range(0..k);
        let target = if (i as f64) < fraction * n as f64 {
            j
        } else {
            (j + rng.gen_range(1..k)) % k
        };
        corr.push(model.keypoint_indices[j], target, 1.0);
    }
    (scene, corr)
}

fn ac1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst_rot, mut worst_t) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let n = rng.gen_range(3..=40);
        let src: Vec<Point3> = loop {
            let pts: Vec<Point3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            // Reject nearly collinear draws via the first triangle's area.
            if (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).norm() > 1e-3 {
                break pts;
            }
        };
        let gt = random_pose(&mut rng, 10.0);
        let dst: Vec<Point3> = src.iter().map(|p| gt.rotation * p + gt.translation).collect();
        let est = kabsch(&src, &dst, None).unwrap();
        worst_rot = worst_rot.max(rotation_gap(&est.rotation, &gt.rotation));
        worst_t = worst_t.max((est.translation - gt.translation).norm() / gt.translation.norm().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_rot < 1e-7 && worst_t < 1e-9 && secs < 5.0,
        format!(
            "worst rotation error {worst_rot:.2e} rad, worst relative translation error {worst_t:.2e}, {secs:.2} s"
        ),
    )
}

fn ac2() -> Outcome {
    let names = ["cube", "cylinder", "l_bracket", "screw", "sphere"];
    let models: Vec<ObjectModel> = names.iter().map(|n| model(n, 2)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut hits = 0;
    for trial in 0..100u64 {
        let m = &models[trial as usize % models.len()];
        let gt = random_pose(&mut rng, 0.5);
        let (scene, corr) = synthetic(m, &gt, 0.3, 300, trial);
        let cfg = RansacConfig {
            n_hypotheses: 1000,
            ..RansacConfig::with_seed(trial)
        };
        let est = ransac_coarse_to_fine(&scene, m, &corr, &cfg).unwrap();
        if adi_metric(&est.pose, &gt, &m.cloud) < 0.05 * m.diameter {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(hits >= 99 && secs < 30.0, format!("{hits}/100 correct, {secs:.2} s"))
}

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let names = ["cube", "l_bracket", "screw"];
    let mut zero = 0;
    for trial in 0..100u64 {
        let m = model(names[trial as usize % names.len()], trial);
        let gt = random_pose(&mut rng, 0.5);
        let mut scene = m.cloud.transformed(&gt);
        for n in &mut scene.normals {
            *n = -*n;
        }
        let mut corr = CorrespondenceSet::default();
        for (j, &i) in m.keypoint_indices.iter().enumerate() {
            corr.push(i, j, 1.0);
        }
        let r = ransac_coarse_to_fine_report(&scene, &m, &corr, &RansacConfig::with_seed(trial)).unwrap();
        let coarse = r.best_hypothesis.map_or(0, |h| h.inlier_count);
        if coarse == 0 && r.estimate.is_failure() {
            zero += 1;
        }
    }
    outcome(zero == 100, format!("{zero}/100 trials with 0 coarse inliers"))
}

fn ac4() -> Outcome {
    let names = ["cube", "cylinder", "l_bracket", "screw", "sphere"];
    let models: Vec<ObjectModel> = names.iter().map(|n| model(n, 4)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut kept = 0;
    for trial in 0..200u64 {
        let m = &models[trial as usize % models.len()];
        let gt = random_pose(&mut rng, 0.5);
        let (scene, corr) = synthetic(m, &gt, 0.4, 300, trial);
        let scene = add_noise(
            &scene,
            &NoiseSpec {
                sigma_fraction: 0.01,
                seed: trial,
            },
            m.diameter,
        )
        .unwrap();
        let r = ransac_coarse_to_fine_report(&scene, m, &corr, &RansacConfig::with_seed(trial)).unwrap();
        if r.estimate.inlier_count >= r.unrefined_final_inliers {
            kept += 1;
        }
    }
    outcome(kept >= 190, format!("refined >= unrefined in {kept}/200 trials"))
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sphere = PointCloud::new(fibonacci_sphere(256));
    let mut at_gt = 0.0f64;
    let mut violations = 0;
    for i in 0..1000 {
        // Anisotropic clouds so ADI and ADD genuinely differ.
        let s = Vec3::new(
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.2..1.0),
        );
        let cloud = PointCloud::new(sphere.points.iter().map(|p| p.component_mul(&s)).collect());
        let gt = random_pose(&mut rng, 1.0);
        let est = if i % 4 == 0 { gt } else { random_pose(&mut rng, 1.0) };
        let (adi, add) = (adi_metric(&est, &gt, &cloud), add_metric(&est, &gt, &cloud));
        if adi > add {
            violations += 1;
        }
        at_gt = at_gt.max(adi_metric(&gt, &gt, &cloud));
    }
    let cyl = model("cylinder", 5);
    let gt = RigidTransform::from_axis_angle(&Vec3::new(1.0, 0.0, 1.0), 0.5, Vec3::new(0.0, 0.0, 0.5));
    let spun = gt.compose(&RigidTransform::from_axis_angle(&Vec3::z(), 1.3, Vec3::zeros()));
    let (adi, add) = (adi_metric(&spun, &gt, &cyl.cloud), add_metric(&spun, &gt, &cyl.cloud));
    let (adi_f, add_f) = (adi / cyl.diameter, add / cyl.diameter);
    outcome(
        at_gt == 0.0 && violations == 0 && adi_f < 0.02 && add_f > 0.2,
        format!("adi at gt {at_gt}, {violations}/1000 adi>add, cylinder adi {adi_f:.4}·d add {add_f:.3}·d"),
    )
}

fn ac6() -> Outcome {
    let names = ["cube", "cylinder", "l_bracket", "screw", "sphere"];
    let bin = BinSpec::default();
    let (mut masked, mut key_hits, mut points, mut seg_hits) = (0usize, 0usize, 0usize, 0usize);
    let mut i = 0u64;
    while masked < 12_000 {
        let m = model(names[i as usize % names.len()], 6);
        let scene = generate_scene(&m, &bin, 1 + (i as usize * 7) % 20, 600 + i).unwrap();
        let oracle = Oracle::new(
            &m,
            OracleSpec {
                seed: i,
                ..OracleSpec::default()
            },
        )
        .unwrap();
        let pred = oracle
            .predict(&scene.cloud, &scene.gt_pose, &scene.instance_mask)
            .unwrap();
        for (k, p) in scene.cloud.points.iter().enumerate() {
            let inside = scene.instance_mask[k];
            points += 1;
            seg_hits += usize::from((pred.seg_prob[k] >= SEG_DECISION) == inside);
            if inside {
                masked += 1;
                key_hits += usize::from(pred.argmax(k) == true_keypoint(&m, &scene.gt_pose, p));
            }
        }
        i += 1;
    }
    let key = key_hits as f64 / masked as f64;
    let seg = seg_hits as f64 / points as f64;
    outcome(
        (key - 0.31).abs() <= 0.02 && (seg - 0.96).abs() <= 0.01,
        format!("top-1 keypoint accuracy {key:.4} over {masked} masked points, segmentation accuracy {seg:.4}"),
    )
}

fn ac7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchmarkConfig {
        scenes_per_object: 50,
        output_dir: dir.path().to_path_buf(),
        seed: 7,
        ..BenchmarkConfig::default()
    };
    let start = Instant::now();
    let out = run_benchmark(&cfg, false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let s = &out.summary;
    let mut dominated = Vec::new();
    let mut non_monotone = Vec::new();
    for object in &cfg.objects {
        for &noise in &cfg.noise_levels {
            let ours = s.recall(object, Method::OracleC2f, noise).unwrap();
            let classic = s.recall(object, Method::Fpfh, noise).unwrap();
            if ours < classic {
                dominated.push(format!("{object}@{noise}"));
            }
        }
        for &method in &cfg.methods {
            for w in cfg.noise_levels.windows(2) {
                let (a, b) = (
                    s.recall(object, method, w[0]).unwrap(),
                    s.recall(object, method, w[1]).unwrap(),
                );
                if b > a + 0.05 {
                    non_monotone.push(format!("{object}/{method}@{}", w[1]));
                }
            }
        }
    }
    let c2f = s.mean_recall(Method::OracleC2f, 0.0).unwrap();
    let classic = s.mean_recall(Method::OracleClassic, 0.0).unwrap();
    let fpfh = s.mean_recall(Method::Fpfh, 0.0).unwrap();
    let pass = dominated.is_empty() && non_monotone.is_empty() && c2f >= 0.75 && secs < 1200.0;
    outcome(
        pass,
        format!(
            "{} rows; oracle<fpfh cells {dominated:?}; non-monotone cells {non_monotone:?}; \
             mean recall at 0 noise: oracle-c2f {c2f:.3}, oracle-classic {classic:.3}, fpfh {fpfh:.3}; {secs:.0} s",
            out.rows.len()
        ),
    )
}

fn ac8() -> Outcome {
    let names = ["cube", "cylinder", "l_bracket", "screw", "sphere"];
    let bin = BinSpec::default();
    let mut cases = Vec::new();
    for (i, name) in names.iter().cycle().take(20).enumerate() {
        let m = model(name, 8);
        let scene = generate_scene(&m, &bin, 1 + (i * 3) % 20, 800 + i as u64).unwrap();
        let pred = Oracle::new(
            &m,
            OracleSpec {
                seed: i as u64,
                ..OracleSpec::default()
            },
        )
        .unwrap()
        .predict(&scene.cloud, &scene.gt_pose, &scene.instance_mask)
        .unwrap();
        let mut corr = extract_correspondences(&pred, 0.7).unwrap();
        corr.pairs.truncate(4096);
        cases.push((m, scene.cloud, corr, RansacConfig::with_seed(i as u64)));
    }
    let timed = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut ms = Vec::new();
            let mut poses = Vec::new();
            for (m, cloud, corr, cfg) in &cases {
                let t = Instant::now();
                let est = ransac_coarse_to_fine(cloud, m, corr, cfg).unwrap();
                ms.push(t.elapsed().as_secs_f64() * 1e3);
                poses.push(est);
            }
            (median(ms), poses)
        })
    };
    let (ms1, poses1) = timed(1);
    let (ms8, poses8) = timed(8);
    let identical = poses1 == poses8;
    let speedup = ms1 / ms8;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        ms8 < 100.0 && speedup >= 3.0 && identical,
        format!(
            "median {ms1:.1} ms on 1 worker, {ms8:.1} ms on 8 workers, speedup {speedup:.2}x, \
             identical poses {identical}, {cores} hardware threads available"
        ),
    )
}

fn ac9() -> Outcome {
    let names = ["cube", "cylinder", "l_bracket", "screw", "sphere"];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let m = model(names[i % names.len()], i as u64);
        let radius = default_radius(&m.cloud).unwrap();
        let before = compute_fpfh(&m.cloud, radius).unwrap();
        let g = random_pose(&mut rng, 2.0);
        let moved = PointCloud::with_normals(
            m.cloud.points.iter().map(|p| g.rotation * p + g.translation).collect(),
            m.cloud.normals.iter().map(|n| g.rotation * n).collect(),
        )
        .unwrap();
        let after = compute_fpfh(&moved, radius).unwrap();
        for (a, b) in before.descriptors.iter().zip(&after.descriptors) {
            for (x, y) in a.0.iter().zip(&b.0) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    outcome(
        worst < 1e-6,
        format!("largest per-bin difference {worst:.2e} over 10 clouds"),
    )
}

fn ac10() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = |dir: &std::path::Path| BenchmarkConfig {
        scenes_per_object: 4,
        output_dir: dir.to_path_buf(),
        seed: 10,
        ..BenchmarkConfig::default()
    };
    let first = run_benchmark(&cfg(a.path()), false).unwrap();
    // Run the second one on a different pool size as well.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let second = pool.install(|| run_benchmark(&cfg(b.path()), false)).unwrap();
    let ca = std::fs::read_to_string(&first.csv_path).unwrap();
    let cb = std::fs::read_to_string(&second.csv_path).unwrap();
    let same = strip_timing(&ca) == strip_timing(&cb);
    outcome(
        same,
        format!("{} rows each, identical modulo timing: {same}", first.rows.len()),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    ("ac1", "Kabsch exactness", ac1),
    ("ac2", "RANSAC recovery at 30% inliers", ac2),
    ("ac3", "normal gate rejects backside matches", ac3),
    ("ac4", "coarse-to-fine keeps final inliers", ac4),
    ("ac5", "ADI properties", ac5),
    ("ac6", "oracle calibration", ac6),
    ("ac7", "end-to-end recall ordering", ac7),
    ("ac8", "RANSAC throughput and scaling", ac8),
    ("ac9", "FPFH rigid invariance", ac9),
    ("ac10", "benchmark determinism", ac10),
];

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, title, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{} {verdict} {title}: {} [{:.1} s]",
            id.to_uppercase(),
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id.to_uppercase());
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
