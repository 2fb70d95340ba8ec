//! Shared fixtures for the pipeline benchmarks.

use harvest_core::cloud::ColorPointCloud;
use harvest_core::geom::Point3;
use harvest_core::sim::{generate_scene, Scene, SceneSpec};

/// Deterministic pseudo-random cloud of `n` points in a `side`-meter cube.
pub fn random_cloud(n: usize, side: f64, seed: u64) -> ColorPointCloud {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let points = (0..n)
        .map(|_| Point3::new(next() * side, next() * side, next() * side))
        .collect();
    ColorPointCloud::from_points(points)
}

/// The default three-crop scene used by render and row benchmarks.
pub fn bench_scene(seed: u64) -> Scene {
    generate_scene(&SceneSpec {
        rng_seed: seed,
        ..SceneSpec::default()
    })
}
