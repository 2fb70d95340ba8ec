//! Subcommand implementations.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};

use harvest_core::camera::IntrinsicsSidecar;
use harvest_core::color::{fit_gaussian, rgb_to_rotated_hsv, segment_image, GaussianColorModel};
use harvest_core::config::RunConfig;
use harvest_core::detect::{detect_peppers, select_target, PepperTarget, RgbdFrame};
use harvest_core::grasp::{candidate_grasps, score_grasps, surface_samples};
use harvest_core::io;
use harvest_core::metrics::{auc, best_f1, even_thresholds, harvest_report, precision_recall};
use harvest_core::peduncle::{
    compute_roi, estimate_cutting_pose, filter_peduncle_points, peduncle_bbox3, score_pixels,
    train_patch_classifier, AnnotatedImage, GaussianPeduncleScorer, PatchClassifier, PixelScorer,
    ScoreMapScorer,
};
use harvest_core::sim::{generate_scene, run_row, AttemptRecord, ScorerKind};
use harvest_core::Point3;

use crate::args::*;

/// Error carrying its process exit code: 1 = pipeline failure, 2 = usage or
/// configuration problem.
pub struct CliError {
    code: i32,
    inner: anyhow::Error,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        self.code
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.inner.fmt(f)
    }
}

impl std::fmt::Debug for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.inner.fmt(f)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: 2,
        inner: e.into(),
    }
}

fn pipeline(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: 1,
        inner: e.into(),
    }
}

type CmdResult = Result<(), CliError>;

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.paper {
        config.apply_paper_defaults();
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn ensure_out(common: &CommonArgs) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output directory {}", common.out.display()))
        .map_err(usage)?;
    Ok(common.out.clone())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(pipeline)?;
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(pipeline)
}

pub fn train_color(args: TrainColorArgs) -> CmdResult {
    let out = ensure_out(&args.common)?;
    if args.images.len() != args.masks.len() {
        return Err(usage(anyhow!(
            "--image and --mask must be given the same number of times"
        )));
    }
    let mut pixels = Vec::new();
    for (img_path, mask_path) in args.images.iter().zip(&args.masks) {
        let image = io::read_ppm(img_path).map_err(usage)?;
        let mask = io::read_mask_pgm(mask_path).map_err(usage)?;
        if mask.width != image.width || mask.height != image.height {
            return Err(usage(anyhow!(
                "{}: mask dimensions do not match the image",
                mask_path.display()
            )));
        }
        for (px, &keep) in image.pixels.iter().zip(&mask.bits) {
            if keep {
                pixels.push(rgb_to_rotated_hsv(*px));
            }
        }
    }
    let model = fit_gaussian(&pixels).map_err(pipeline)?;
    write_json(&out.join("model.json"), &model)?;
    println!(
        "fitted color model over {} pixels -> {}",
        pixels.len(),
        out.join("model.json").display()
    );
    Ok(())
}

pub fn train_patch(args: TrainPatchArgs) -> CmdResult {
    let out = ensure_out(&args.common)?;
    if args.images.len() != args.positives.len() || args.images.len() != args.negatives.len() {
        return Err(usage(anyhow!(
            "--image, --pos and --neg must be given the same number of times"
        )));
    }
    let mut images = Vec::new();
    for ((img_path, pos_path), neg_path) in
        args.images.iter().zip(&args.positives).zip(&args.negatives)
    {
        let image = io::read_ppm(img_path).map_err(usage)?;
        let positive = io::read_mask_pgm(pos_path).map_err(usage)?;
        let negative = io::read_mask_pgm(neg_path).map_err(usage)?;
        images.push((image, positive, negative));
    }
    let annotated: Vec<AnnotatedImage> = images
        .iter()
        .map(|(image, positive, negative)| AnnotatedImage {
            image,
            positive,
            negative,
        })
        .collect();
    let classifier = train_patch_classifier(&annotated).map_err(pipeline)?;
    write_json(&out.join("weights.json"), &classifier)?;
    println!("trained patch classifier -> {}", out.join("weights.json").display());
    Ok(())
}

pub fn segment(args: SegmentArgs) -> CmdResult {
    let config = load_config(&args.common)?;
    let out = ensure_out(&args.common)?;
    let image = io::read_ppm(&args.image).map_err(usage)?;
    let model = match &args.model {
        Some(path) => read_model(path)?,
        None => config.detection.color_model().map_err(usage)?,
    };
    let threshold = args.threshold.unwrap_or(config.detection.threshold);
    let (mask, scores) = segment_image(&model, &image, threshold);
    io::write_mask_pgm(&out.join("mask.pgm"), &mask).map_err(pipeline)?;
    io::write_score_map(&out.join("scores.pgm"), &out.join("scores.json"), &scores)
        .map_err(pipeline)?;
    println!(
        "segmented {}x{} image: {} positive pixels at threshold {}",
        image.width,
        image.height,
        mask.count_true(),
        threshold
    );
    Ok(())
}

fn read_model(path: &Path) -> Result<GaussianColorModel, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text).map_err(usage)
}

fn read_frame(frame: &FrameArgs) -> Result<RgbdFrame, CliError> {
    let rgb = io::read_ppm(&frame.rgb).map_err(usage)?;
    let depth = io::read_depth_pgm(&frame.depth).map_err(usage)?;
    if depth.width != rgb.width || depth.height != rgb.height {
        return Err(usage(anyhow!("depth and rgb dimensions do not match")));
    }
    let sidecar: IntrinsicsSidecar = serde_json::from_str(
        &std::fs::read_to_string(&frame.intrinsics)
            .with_context(|| format!("reading {}", frame.intrinsics.display()))
            .map_err(usage)?,
    )
    .map_err(usage)?;
    Ok(RgbdFrame {
        intrinsics: sidecar.intrinsics(rgb.width, rgb.height),
        camera_pose: sidecar.pose(),
        rgb,
        depth,
    })
}

fn detect_and_select(
    frame: &RgbdFrame,
    config: &RunConfig,
) -> Result<PepperTarget, CliError> {
    let model = config.detection.color_model().map_err(usage)?;
    let targets = detect_peppers(frame, &model, &config.detection.detect_params());
    let reference = frame.camera_pose.position();
    select_target(&targets, reference)
        .cloned()
        .map_err(pipeline)
}

#[derive(serde::Serialize)]
struct TargetSummary {
    centroid: Point3,
    cluster_size: usize,
    bb3_min: Point3,
    bb3_max: Point3,
    bb2: harvest_core::detect::Box2,
}

pub fn peduncle(args: PeduncleArgs) -> CmdResult {
    let config = load_config(&args.common)?;
    let out = ensure_out(&args.common)?;
    let frame = read_frame(&args.frame)?;
    let target = detect_and_select(&frame, &config)?;
    write_json(
        &out.join("target.json"),
        &TargetSummary {
            centroid: target.centroid,
            cluster_size: target.cluster_size,
            bb3_min: target.bb3.min,
            bb3_max: target.bb3.max,
            bb2: target.bb2,
        },
    )?;

    let roi = compute_roi(&target.bb2, frame.width(), frame.height()).map_err(pipeline)?;
    let scorer_kind = parse_scorer(args.scorer.as_deref(), config.peduncle.scorer)?;
    let gaussian;
    let scoremap;
    let patch;
    let scorer: &dyn PixelScorer = match scorer_kind {
        ScorerKind::Gaussian => {
            gaussian = GaussianPeduncleScorer {
                model: config.peduncle.color_model(),
            };
            &gaussian
        }
        ScorerKind::ScoreMap => {
            let path = args
                .score_map
                .as_ref()
                .ok_or_else(|| usage(anyhow!("--scorer scoremap requires --score-map")))?;
            scoremap = ScoreMapScorer {
                map: io::read_confidence_pgm(path).map_err(usage)?,
            };
            &scoremap
        }
        ScorerKind::Patch => {
            let path = args
                .weights
                .as_ref()
                .ok_or_else(|| usage(anyhow!("--scorer patch requires --weights")))?;
            let text = std::fs::read_to_string(path).map_err(usage)?;
            patch = serde_json::from_str::<PatchClassifier>(&text).map_err(usage)?;
            &patch
        }
    };
    let scores = score_pixels(scorer, &frame.rgb, &roi).map_err(pipeline)?;
    let bb3 = peduncle_bbox3(&target.bb3, config.peduncle.h_offset);
    let pepper_model = config.detection.color_model().map_err(usage)?;
    let threshold = args.threshold.unwrap_or(config.peduncle.threshold);
    let (cloud, trace) = filter_peduncle_points(
        &scores,
        &frame,
        &pepper_model,
        config.detection.threshold,
        &bb3,
        threshold,
        &config.peduncle.cluster_params(),
    );
    io::write_ply(&out.join("peduncle.ply"), &cloud).map_err(pipeline)?;
    write_json(&out.join("trace.json"), &trace)?;
    let pose = estimate_cutting_pose(&cloud, config.peduncle.cluster_min).map_err(pipeline)?;
    #[derive(serde::Serialize)]
    struct CutPoseOut {
        position: Point3,
        approach: harvest_core::Vec3,
        support_count: usize,
    }
    write_json(
        &out.join("cutpose.json"),
        &CutPoseOut {
            position: pose.position,
            approach: pose.approach,
            support_count: pose.support_count,
        },
    )?;
    println!(
        "cut pose at ({:.4}, {:.4}, {:.4}) from {} points",
        pose.position.x, pose.position.y, pose.position.z, pose.support_count
    );
    Ok(())
}

fn parse_scorer(flag: Option<&str>, fallback: ScorerKind) -> Result<ScorerKind, CliError> {
    match flag {
        None => Ok(fallback),
        Some("gaussian") => Ok(ScorerKind::Gaussian),
        Some("scoremap") => Ok(ScorerKind::ScoreMap),
        Some("patch") => Ok(ScorerKind::Patch),
        Some(other) => Err(usage(anyhow!(
            "unknown scorer `{other}` (expected gaussian, scoremap or patch)"
        ))),
    }
}

pub fn grasp(args: GraspArgs) -> CmdResult {
    let config = load_config(&args.common)?;
    let out = ensure_out(&args.common)?;
    let frame = read_frame(&args.frame)?;
    let target = detect_and_select(&frame, &config)?;
    let camera = frame.camera_pose.position();
    let samples = surface_samples(
        &target,
        config.grasp.patch_radius,
        camera,
        config.grasp.boundary_angle_gap,
    );
    let candidates =
        candidate_grasps(&samples, config.grasp.angle_threshold).map_err(pipeline)?;
    let ranked = score_grasps(
        candidates,
        &samples,
        &config.grasp.grasp_weights(),
        target.centroid,
    );
    let path = out.join("grasps.jsonl");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path).map_err(pipeline)?);
    for g in &ranked {
        let line = serde_json::json!({
            "position": g.position,
            "approach": g.approach,
            "s1": g.s1,
            "s2": g.s2,
            "s3": g.s3,
            "utility": g.utility,
        });
        writeln!(w, "{line}").map_err(pipeline)?;
    }
    println!("ranked {} grasp candidates -> {}", ranked.len(), path.display());
    Ok(())
}

fn apply_sim_overrides(config: &mut RunConfig, args: &SimArgs) -> Result<(), CliError> {
    let triple = |v: &Option<Vec<f64>>| -> Option<[f64; 3]> {
        v.as_ref().map(|v| [v[0], v[1], v[2]])
    };
    if let Some(mu) = triple(&args.hsv_mu) {
        config.detection.hsv_mu = mu;
    }
    if let Some(sigma) = triple(&args.hsv_sigma) {
        config.detection.hsv_sigma = sigma;
    }
    if let Some(v) = args.cluster_min {
        config.detection.cluster_min = v;
    }
    if let Some(v) = args.cluster_max {
        config.detection.cluster_max = v;
    }
    if let Some(v) = args.downsample_radius {
        config.detection.downsample_radius = v;
    }
    if let Some(w) = triple(&args.grasp_weights) {
        config.grasp.weights = w;
    }
    if let Some(v) = args.angle_threshold {
        config.grasp.angle_threshold = v;
    }
    if let Some(v) = args.patch_radius {
        config.grasp.patch_radius = v;
    }
    if let Some(v) = args.peduncle_cluster_min {
        config.peduncle.cluster_min = v;
    }
    if let Some(v) = args.peduncle_cluster_max {
        config.peduncle.cluster_max = v;
    }
    if let Some(v) = args.h_offset {
        config.peduncle.h_offset = v;
    }
    if let Some(v) = args.max_attempts {
        config.grasp.max_attempts = v;
    }
    if let Some(v) = args.runs {
        config.runs = v.max(1);
    }
    if let Some(s) = &args.scorer {
        config.peduncle.scorer = parse_scorer(Some(s), config.peduncle.scorer)?;
    }
    if let Some(t) = args.threshold {
        config.peduncle.threshold = t;
    }
    config.validate().map_err(usage)
}

pub fn sim(args: SimArgs) -> CmdResult {
    let mut config = load_config(&args.common)?;
    apply_sim_overrides(&mut config, &args)?;
    let out = ensure_out(&args.common)?;
    if args.write_config {
        let text = toml::to_string_pretty(&config).map_err(pipeline)?;
        std::fs::write(out.join("config.toml"), text).map_err(pipeline)?;
    }

    let started = Instant::now();
    let mut all_records: Vec<AttemptRecord> = Vec::new();
    for run in 0..config.runs {
        let run_seed = config.seed.wrapping_add(run as u64);
        let mut spec = config.scene.clone();
        spec.rng_seed = run_seed;
        let scene = generate_scene(&spec);
        if args.export_scenes {
            let path = out.join(format!("scene_{run_seed}.ply"));
            io::write_ply(&path, &scene.to_cloud()).map_err(pipeline)?;
        }
        if args.dump_frames {
            dump_long_range_frame(&config, &scene, run_seed, &out)?;
        }
        let params = config.row_params(run_seed).map_err(usage)?;
        let outcome = run_row(&scene, &params);
        let id_offset = run as u64 * 1_000_000;
        for mut record in outcome.records {
            record.pepper_id += id_offset;
            all_records.push(record);
        }
    }

    // Attempt log: one JSON object per line, in deterministic order.
    let attempts_path = out.join("attempts.jsonl");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&attempts_path).map_err(pipeline)?);
    for record in &all_records {
        let line = serde_json::to_string(record).map_err(pipeline)?;
        writeln!(w, "{line}").map_err(pipeline)?;
    }
    drop(w);

    let report = harvest_report(&all_records);
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(
        out.join("report.txt"),
        format!("{}\n{}", report.success_table(), report.timing_table()),
    )
    .map_err(pipeline)?;
    std::fs::write(out.join("failures.csv"), report.failure_csv()).map_err(pipeline)?;

    // Wall-clock compute time lives outside the deterministic artifacts.
    write_json(
        &out.join("run_meta.json"),
        &serde_json::json!({
            "runs": config.runs,
            "seed": config.seed,
            "records": all_records.len(),
            "compute_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    println!(
        "{} attempts over {} run(s) -> {}",
        all_records.len(),
        config.runs,
        out.display()
    );
    print!("{}", report.success_table());
    Ok(())
}

/// Write the run's first long-range capture as a PPM + PGM + sidecar triple.
fn dump_long_range_frame(
    config: &RunConfig,
    scene: &harvest_core::sim::Scene,
    run_seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    use harvest_core::geom::{Pose, Vec3};
    use harvest_core::sim::{render_rgbd, RenderOptions};
    let intr = config.camera.intrinsics();
    let pose = Pose::looking(
        Point3::new(
            0.0,
            -config.camera.long_range_standoff,
            config.camera.camera_height,
        ),
        Vec3::Y,
        Vec3::Z,
    );
    let rendered = render_rgbd(scene, &pose, &intr, &RenderOptions::default());
    io::write_ppm(&out.join(format!("frame_{run_seed}.ppm")), &rendered.frame.rgb)
        .map_err(pipeline)?;
    io::write_depth_pgm(
        &out.join(format!("frame_{run_seed}_depth.pgm")),
        &rendered.frame.depth,
    )
    .map_err(pipeline)?;
    write_json(
        &out.join(format!("frame_{run_seed}.json")),
        &IntrinsicsSidecar::from_parts(&intr, &pose),
    )
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let out = ensure_out(&args.common)?;
    match (&args.attempts, &args.scores, &args.labels) {
        (Some(attempts), None, None) => {
            let text = std::fs::read_to_string(attempts)
                .with_context(|| format!("reading {}", attempts.display()))
                .map_err(usage)?;
            let mut records = Vec::new();
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                records.push(serde_json::from_str::<AttemptRecord>(line).map_err(usage)?);
            }
            let report = harvest_report(&records);
            write_json(&out.join("report.json"), &report)?;
            std::fs::write(
                out.join("report.txt"),
                format!("{}\n{}", report.success_table(), report.timing_table()),
            )
            .map_err(pipeline)?;
            std::fs::write(out.join("failures.csv"), report.failure_csv()).map_err(pipeline)?;
            print!("{}", report.success_table());
            Ok(())
        }
        (None, Some(scores_path), Some(labels_path)) => {
            if args.sweep < 2 {
                return Err(usage(anyhow!("--sweep must be at least 2")));
            }
            let scores = match &args.scores_sidecar {
                Some(side) => io::read_score_map(scores_path, side).map_err(usage)?,
                None => io::read_confidence_pgm(scores_path).map_err(usage)?,
            };
            let labels = io::read_mask_pgm(labels_path).map_err(usage)?;
            if labels.width != scores.width || labels.height != scores.height {
                return Err(usage(anyhow!("scores and labels dimensions do not match")));
            }
            let thresholds = even_thresholds(&scores.values, args.sweep);
            let curve =
                precision_recall(&scores.values, &labels.bits, &thresholds).map_err(pipeline)?;
            std::fs::write(out.join("pr.csv"), curve.to_csv()).map_err(pipeline)?;
            let auc_value = auc(&curve).map_err(pipeline)?;
            let best = best_f1(&curve);
            write_json(
                &out.join("metrics.json"),
                &serde_json::json!({ "auc": auc_value, "best_f1": best }),
            )?;
            println!("AUC {auc_value:.4}, best F1 {best:.4} -> {}", out.display());
            Ok(())
        }
        _ => Err(usage(anyhow!(
            "eval needs either --attempts, or --scores with --labels"
        ))),
    }
}

