//! End-to-end tests of the command-line surface: exit codes, file outputs,
//! and flag-over-config precedence.

use std::path::{Path, PathBuf};
use std::process::Command;

use harvest_core::camera::IntrinsicsSidecar;
use harvest_core::config::RunConfig;
use harvest_core::geom::{Point3, Pose, Vec3};
use harvest_core::image::BitMask;
use harvest_core::io;
use harvest_core::sim::{generate_scene, render_rgbd, RenderOptions, SceneSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_harvest"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("harvest_cli_tests").join(name);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn help_exits_zero() {
    let status = bin().arg("--help").output().unwrap();
    assert!(status.status.success());
    assert!(String::from_utf8_lossy(&status.stdout).contains("harvest"));
}

#[test]
fn unknown_flag_exits_two() {
    let status = bin()
        .args(["sim", "--no-such-flag", "--out", "/tmp/never"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn eval_without_inputs_exits_two() {
    let dir = temp_dir("eval_no_inputs");
    let status = bin()
        .args(["eval", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn bad_config_exits_two() {
    let dir = temp_dir("bad_config");
    let config = dir.join("bad.toml");
    std::fs::write(&config, "definitely_not_a_key = true\n").unwrap();
    let status = bin()
        .args([
            "sim",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn sim_writes_attempts_and_report() {
    let dir = temp_dir("sim_outputs");
    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        "seed = 7\n[scene]\nrow_length = 0.6\npepper_count = 1\nleaf_occlusion_fraction = 0.0\n",
    )
    .unwrap();
    let out = dir.join("run7");
    let status = bin()
        .args([
            "sim",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    for file in ["attempts.jsonl", "report.json", "report.txt", "failures.csv", "run_meta.json"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    // Attempt log round-trips through the eval subcommand.
    let eval_out = dir.join("eval");
    let status = bin()
        .args([
            "eval",
            "--attempts",
            out.join("attempts.jsonl").to_str().unwrap(),
            "--out",
            eval_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(eval_out.join("report.json").exists());
}

#[test]
fn max_attempts_flag_beats_config() {
    let dir = temp_dir("flag_precedence");
    let config = dir.join("config.toml");
    // Config says 5 attempts and guarantees attachment failure.
    std::fs::write(
        &config,
        "seed = 3\n\
         [scene]\nrow_length = 0.6\npepper_count = 1\nleaf_occlusion_fraction = 0.0\n\
         [grasp]\nmax_attempts = 5\n\
         [attempt]\nattach_failure_prob = 1.0\n",
    )
    .unwrap();
    let out = dir.join("out");
    let status = bin()
        .args([
            "sim",
            "--config",
            config.to_str().unwrap(),
            "--max-attempts",
            "2",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let attempts = std::fs::read_to_string(out.join("attempts.jsonl")).unwrap();
    assert_eq!(attempts.lines().count(), 2, "flag must cap the attempts");
}

/// Render a close-range frame of a single-crop scene and write it as the
/// PPM + PGM + sidecar triple the pipeline subcommands consume.
fn write_frame_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let config = RunConfig::default();
    let spec = SceneSpec {
        row_length: 0.6,
        pepper_count: 1,
        leaf_occlusion_fraction: 0.0,
        color_noise_stddev: 0.0,
        depth_noise_stddev: 0.0,
        rng_seed: 5,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec);
    let centroid = scene.peppers[0].centroid;
    let pose = Pose::looking(
        Point3::new(centroid.x, centroid.y - 0.4, centroid.z + 0.1),
        Vec3::Y,
        Vec3::Z,
    );
    let intr = config.camera.intrinsics();
    let out = render_rgbd(&scene, &pose, &intr, &RenderOptions::default());
    let rgb = dir.join("frame.ppm");
    let depth = dir.join("frame_depth.pgm");
    let sidecar = dir.join("frame.json");
    io::write_ppm(&rgb, &out.frame.rgb).unwrap();
    io::write_depth_pgm(&depth, &out.frame.depth).unwrap();
    std::fs::write(
        &sidecar,
        serde_json::to_string_pretty(&IntrinsicsSidecar::from_parts(&intr, &pose)).unwrap(),
    )
    .unwrap();
    (rgb, depth, sidecar)
}

#[test]
fn peduncle_and_grasp_commands_on_a_frame() {
    let dir = temp_dir("frame_commands");
    let (rgb, depth, sidecar) = write_frame_fixture(&dir);
    let ped_out = dir.join("peduncle");
    let status = bin()
        .args([
            "peduncle",
            "--rgb",
            rgb.to_str().unwrap(),
            "--depth",
            depth.to_str().unwrap(),
            "--intrinsics",
            sidecar.to_str().unwrap(),
            "--out",
            ped_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for file in ["target.json", "peduncle.ply", "cutpose.json", "trace.json"] {
        assert!(ped_out.join(file).exists(), "missing {file}");
    }
    let cutpose: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ped_out.join("cutpose.json")).unwrap())
            .unwrap();
    assert!(cutpose["support_count"].as_u64().unwrap() >= 50);

    let grasp_out = dir.join("grasp");
    let status = bin()
        .args([
            "grasp",
            "--rgb",
            rgb.to_str().unwrap(),
            "--depth",
            depth.to_str().unwrap(),
            "--intrinsics",
            sidecar.to_str().unwrap(),
            "--out",
            grasp_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let grasps = std::fs::read_to_string(grasp_out.join("grasps.jsonl")).unwrap();
    assert!(grasps.lines().count() > 10);
    // Ranked by non-increasing utility.
    let utilities: Vec<f64> = grasps
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["utility"].as_f64().unwrap())
        .collect();
    assert!(utilities.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn peduncle_on_empty_scene_exits_one() {
    let dir = temp_dir("no_crop_frame");
    // A frame of nothing: blank image, zero depth.
    let rgb = dir.join("blank.ppm");
    let depth = dir.join("blank_depth.pgm");
    let sidecar = dir.join("blank.json");
    io::write_ppm(&rgb, &harvest_core::image::RgbImage::new(64, 64)).unwrap();
    io::write_depth_pgm(&depth, &harvest_core::image::DepthImage::new(64, 64)).unwrap();
    let intr = harvest_core::Intrinsics::new(64, 64, 60.0, 60.0, 32.0, 32.0);
    std::fs::write(
        &sidecar,
        serde_json::to_string(&IntrinsicsSidecar::from_parts(&intr, &Pose::IDENTITY)).unwrap(),
    )
    .unwrap();
    let status = bin()
        .args([
            "peduncle",
            "--rgb",
            rgb.to_str().unwrap(),
            "--depth",
            depth.to_str().unwrap(),
            "--intrinsics",
            sidecar.to_str().unwrap(),
            "--out",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn segment_then_eval_round_trip() {
    let dir = temp_dir("segment_eval");
    let (rgb, _, _) = write_frame_fixture(&dir);
    let seg_out = dir.join("seg");
    let status = bin()
        .args([
            "segment",
            "--image",
            rgb.to_str().unwrap(),
            "--out",
            seg_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let mask = io::read_mask_pgm(&seg_out.join("mask.pgm")).unwrap();
    assert!(mask.count_true() > 500, "crop pixels expected in the mask");

    // Evaluate the score map against the mask it produced: a perfect
    // separation, so the best F1 is 1.
    let eval_out = dir.join("eval");
    let status = bin()
        .args([
            "eval",
            "--scores",
            seg_out.join("scores.pgm").to_str().unwrap(),
            "--scores-sidecar",
            seg_out.join("scores.json").to_str().unwrap(),
            "--labels",
            seg_out.join("mask.pgm").to_str().unwrap(),
            "--out",
            eval_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("metrics.json")).unwrap())
            .unwrap();
    let best = metrics["best_f1"].as_f64().unwrap();
    assert!(best > 0.99, "best F1 {best}");
    assert!(eval_out.join("pr.csv").exists());
}

#[test]
fn train_color_and_patch_produce_models() {
    let dir = temp_dir("training");
    let (rgb, _, _) = write_frame_fixture(&dir);
    // Build masks from the image itself: red-dominant pixels are positives.
    let image = io::read_ppm(&rgb).unwrap();
    let mut pos = BitMask::new(image.width, image.height);
    let mut neg = BitMask::new(image.width, image.height);
    for (i, px) in image.pixels.iter().enumerate() {
        if px[0] > 150 && px[1] < 90 {
            pos.bits[i] = true;
        } else if i % 7 == 0 && px[0] as u32 + px[1] as u32 + px[2] as u32 > 0 {
            // Subsample the negatives; the full frame would be needlessly
            // slow to train on.
            neg.bits[i] = true;
        }
    }
    let pos_path = dir.join("pos.pgm");
    let neg_path = dir.join("neg.pgm");
    io::write_mask_pgm(&pos_path, &pos).unwrap();
    io::write_mask_pgm(&neg_path, &neg).unwrap();

    let color_out = dir.join("color");
    let status = bin()
        .args([
            "train-color",
            "--image",
            rgb.to_str().unwrap(),
            "--mask",
            pos_path.to_str().unwrap(),
            "--out",
            color_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let model: harvest_core::GaussianColorModel =
        serde_json::from_str(&std::fs::read_to_string(color_out.join("model.json")).unwrap())
            .unwrap();
    // Rotated red hue sits near 90 degrees.
    assert!((model.mu[0] - 90.0).abs() < 15.0, "hue mean {}", model.mu[0]);

    let patch_out = dir.join("patch");
    let status = bin()
        .args([
            "train-patch",
            "--image",
            rgb.to_str().unwrap(),
            "--pos",
            pos_path.to_str().unwrap(),
            "--neg",
            neg_path.to_str().unwrap(),
            "--out",
            patch_out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let weights: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(patch_out.join("weights.json")).unwrap())
            .unwrap();
    assert_eq!(weights["weights"].as_array().unwrap().len(), 5);
}

#[test]
fn paper_profile_flag_applies() {
    let dir = temp_dir("paper_profile");
    let out = dir.join("out");
    let status = bin()
        .args([
            "sim",
            "--paper",
            "--write-config",
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let written = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let config: harvest_core::config::RunConfig = toml::from_str(&written).unwrap();
    assert_eq!(config.detection.hsv_mu, [180.0, 1.0, 0.39]);
    assert_eq!(config.detection.hsv_sigma, [255.0, 0.13, 0.017]);
}
