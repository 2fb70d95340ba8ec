//! Deterministic synthetic greenhouse row.
//!
//! A generated scene holds superellipsoid crop shells hanging from short
//! curved peduncle tubes, plant stems, a trellis band behind the row, and
//! occluding leaf disks. Everything is represented as surface point sets
//! with per-point ground-truth normals, so the renderer has a single path
//! and outcome models can query true geometry directly.
//!
//! World frame: x runs along the row, z is up, the crop plane sits near
//! y = 0 and the camera rail is on the -y side.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::cloud::ColorPointCloud;
use crate::geom::{Point3, Vec3};

/// Nominal standoff of the long-range camera rail; leaf sizing projects
/// occluders against this line.
pub const DEFAULT_LONG_RANGE_STANDOFF: f64 = 0.85;

/// Surface sampling pitch in meters. Splat sizes in the renderer are tied
/// to this value.
pub const SURFACE_SPACING: f64 = 0.0014;

pub const PEPPER_BASE_COLOR: [u8; 3] = [200, 28, 24];
pub const PEDUNCLE_BASE_COLOR: [u8; 3] = [110, 100, 38];
pub const LEAF_BASE_COLOR: [u8; 3] = [70, 120, 45];
pub const STEM_BASE_COLOR: [u8; 3] = [100, 90, 42];
pub const TRELLIS_BASE_COLOR: [u8; 3] = [105, 95, 40];

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub row_length: f64,
    pub plant_spacing: f64,
    pub pepper_count: usize,
    /// Crop diameter range in meters.
    pub pepper_size_min: f64,
    pub pepper_size_max: f64,
    pub peduncle_length_mean: f64,
    pub peduncle_length_stddev: f64,
    /// Target fraction of crop surface hidden by leaves from the camera line.
    pub leaf_occlusion_fraction: f64,
    /// Per-channel color noise applied at render time (0-255 units).
    pub color_noise_stddev: f64,
    /// Depth noise applied at render time (meters).
    pub depth_noise_stddev: f64,
    pub rng_seed: u64,
    /// Scenario tag carried into attempt records: a "modified" run has its
    /// occluding leaves removed.
    pub modified: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            row_length: 1.5,
            plant_spacing: 0.5,
            pepper_count: 3,
            pepper_size_min: 0.07,
            pepper_size_max: 0.09,
            peduncle_length_mean: 0.05,
            peduncle_length_stddev: 0.008,
            leaf_occlusion_fraction: 0.25,
            color_noise_stddev: 5.0,
            depth_noise_stddev: 0.0015,
            rng_seed: 0,
            modified: false,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.row_length <= 0.0 || self.plant_spacing <= 0.0 {
            return Err("row length and plant spacing must be positive".into());
        }
        if !(self.pepper_size_min > 0.0 && self.pepper_size_max >= self.pepper_size_min) {
            return Err("pepper size range must be positive and ordered".into());
        }
        if self.peduncle_length_mean <= 0.0 || self.peduncle_length_stddev < 0.0 {
            return Err("peduncle length parameters must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.leaf_occlusion_fraction) {
            return Err("leaf occlusion fraction must be in [0, 1]".into());
        }
        if self.color_noise_stddev < 0.0 || self.depth_noise_stddev < 0.0 {
            return Err("noise levels must be non-negative".into());
        }
        Ok(())
    }
}

/// A surface point with ground-truth normal and base color.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub position: Point3,
    pub normal: Vec3,
    pub color: [u8; 3],
}

/// Ground truth for one crop: its shell, its peduncle tube and centerline.
#[derive(Debug, Clone)]
pub struct Pepper {
    pub id: usize,
    pub center: Point3,
    /// Superellipsoid semi-axes.
    pub radii: Vec3,
    pub surface: Vec<SurfacePoint>,
    /// Centroid of the surface shell.
    pub centroid: Point3,
    pub peduncle_length: f64,
    /// Peduncle centerline from the crop apex to the trellis.
    pub peduncle_curve: Vec<Point3>,
    /// Centroid of the centerline: the ideal cutting point.
    pub peduncle_centroid: Point3,
    pub peduncle_surface: Vec<SurfacePoint>,
    pub ripe: bool,
}

/// An occluding leaf disk.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub center: Point3,
    pub normal: Vec3,
    pub radius: f64,
    pub points: Vec<SurfacePoint>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub peppers: Vec<Pepper>,
    pub leaves: Vec<Leaf>,
    /// Stems and trellis band, rendered but never ground truth for a crop.
    pub structure: Vec<SurfacePoint>,
    /// Height of the trellis plane behind the row.
    pub trellis_y: f64,
}

impl Scene {
    /// All renderable points flattened into a cloud (for PLY export).
    pub fn to_cloud(&self) -> ColorPointCloud {
        let mut cloud = ColorPointCloud::new();
        let mut add = |pts: &[SurfacePoint]| {
            for p in pts {
                cloud.push(p.position, p.color);
            }
        };
        for p in &self.peppers {
            add(&p.surface);
            add(&p.peduncle_surface);
        }
        for l in &self.leaves {
            add(&l.points);
        }
        add(&self.structure);
        cloud
    }
}

fn jitter_color(base: [u8; 3], rng: &mut Rng, amount: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for (o, &b) in out.iter_mut().zip(base.iter()) {
        *o = (b as f64 + rng.range(-amount, amount)).clamp(0.0, 255.0) as u8;
    }
    out
}

fn signed_pow(t: f64, e: f64) -> f64 {
    t.signum() * t.abs().powf(e)
}

/// Generate the scene for `spec`, deterministically in `spec.rng_seed`.
pub fn generate_scene(spec: &SceneSpec) -> Scene {
    spec.validate().expect("invalid scene spec");
    let mut rng = Rng::stream(spec.rng_seed, &[0x5ce4e]);

    let plant_count = (spec.row_length / spec.plant_spacing).floor().max(1.0) as usize;
    let trellis_y = 0.03;

    let mut peppers = Vec::with_capacity(spec.pepper_count);
    for id in 0..spec.pepper_count {
        let plant = id % plant_count;
        let slot = id / plant_count;
        let plant_x = (plant as f64 + 0.5) * spec.plant_spacing;
        let x = plant_x + rng.range(-0.05, 0.05);
        let z = 0.85 + 0.25 * (slot as f64) + rng.range(0.0, 0.2);
        let center = Point3::new(x, -0.02, z);

        let diameter = rng.range(spec.pepper_size_min, spec.pepper_size_max);
        let a = diameter / 2.0;
        let b = a * rng.range(0.9, 1.05);
        let c = a * rng.range(1.05, 1.25);
        let radii = Vec3::new(a, b, c);
        let exponent = rng.range(0.7, 1.0);

        let surface = superellipsoid_shell(center, radii, exponent, &mut rng);
        let centroid = centroid_of(&surface);

        let length = rng
            .normal_with(spec.peduncle_length_mean, spec.peduncle_length_stddev)
            .clamp(0.03, 0.08);
        let apex = Point3::new(center.x, center.y, center.z + c);
        // Nearly vertical, with a slight bend sideways and toward the
        // trellis.
        let bend_x = rng.range(-0.012, 0.012);
        let bend_y = rng.range(0.0, 0.01);
        let top = Point3::new(apex.x + bend_x, apex.y + bend_y, apex.z + length);
        let (peduncle_curve, peduncle_surface) = peduncle_tube(apex, top, &mut rng);
        let peduncle_centroid = {
            let mut s = Vec3::ZERO;
            for p in &peduncle_curve {
                s = s + p.to_vec();
            }
            Point3::from_vec(s * (1.0 / peduncle_curve.len() as f64))
        };

        peppers.push(Pepper {
            id,
            center,
            radii,
            surface,
            centroid,
            peduncle_length: length,
            peduncle_curve,
            peduncle_centroid,
            peduncle_surface,
            ripe: true,
        });
    }

    // Occluding leaves: one sized disk per crop, aimed to cover the target
    // fraction of its projected outline from the camera line. A "modified"
    // scenario has had its occluders removed by hand.
    let mut leaves = Vec::new();
    if spec.leaf_occlusion_fraction > 0.0 && !spec.modified {
        for pepper in &peppers {
            leaves.push(make_leaf(pepper, spec.leaf_occlusion_fraction, &mut rng));
        }
    }

    // Stems and trellis band.
    let mut structure = Vec::new();
    for plant in 0..plant_count {
        let x = (plant as f64 + 0.5) * spec.plant_spacing;
        stem_tube(
            Point3::new(x + 0.05, 0.02, 0.4),
            Point3::new(x + 0.05, 0.02, 1.7),
            0.007,
            &mut structure,
            &mut rng,
        );
    }
    trellis_band(spec, trellis_y, &peppers, &mut structure, &mut rng);

    Scene {
        spec: spec.clone(),
        peppers,
        leaves,
        structure,
        trellis_y,
    }
}

fn centroid_of(points: &[SurfacePoint]) -> Point3 {
    let mut s = Vec3::ZERO;
    for p in points {
        s = s + p.position.to_vec();
    }
    Point3::from_vec(s * (1.0 / points.len().max(1) as f64))
}

/// Sample a superellipsoid shell with analytic normals and Lambert-ish
/// shading toward the camera side.
fn superellipsoid_shell(
    center: Point3,
    radii: Vec3,
    exponent: f64,
    rng: &mut Rng,
) -> Vec<SurfacePoint> {
    let (a, b, c) = (radii.x, radii.y, radii.z);
    let n_eta = ((std::f64::consts::PI * c) / SURFACE_SPACING).ceil() as usize;
    let n_omega = ((std::f64::consts::TAU * a.max(b)) / SURFACE_SPACING).ceil() as usize;
    let e = exponent;
    let mut out = Vec::with_capacity(n_eta * n_omega / 2);
    let light = Vec3::new(0.0, -0.8, 0.6).normalized().unwrap();
    for i in 0..n_eta {
        let eta = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (i as f64 + 0.5) / n_eta as f64;
        for j in 0..n_omega {
            let omega = -std::f64::consts::PI
                + std::f64::consts::TAU * j as f64 / n_omega as f64;
            let (se, ce) = (eta.sin(), eta.cos());
            let (so, co) = (omega.sin(), omega.cos());
            let p = Point3::new(
                center.x + a * signed_pow(ce, e) * signed_pow(co, e),
                center.y + b * signed_pow(ce, e) * signed_pow(so, e),
                center.z + c * signed_pow(se, e),
            );
            let normal = Vec3::new(
                signed_pow(ce, 2.0 - e) * signed_pow(co, 2.0 - e) / a,
                signed_pow(ce, 2.0 - e) * signed_pow(so, 2.0 - e) / b,
                signed_pow(se, 2.0 - e) / c,
            )
            .normalized()
            .unwrap_or(Vec3::Z);
            let shade = 0.82 + 0.18 * normal.dot(light).max(0.0);
            let base = jitter_color(PEPPER_BASE_COLOR, rng, 6.0);
            let color = [
                (base[0] as f64 * shade) as u8,
                (base[1] as f64 * shade) as u8,
                (base[2] as f64 * shade) as u8,
            ];
            out.push(SurfacePoint {
                position: p,
                normal,
                color,
            });
        }
    }
    out
}

/// Quadratic Bezier tube between `from` and `to` with ground-truth
/// centerline. Returns (centerline, surface points).
fn peduncle_tube(
    from: Point3,
    to: Point3,
    rng: &mut Rng,
) -> (Vec<Point3>, Vec<SurfacePoint>) {
    let radius = rng.range(0.0035, 0.0045);
    let control = Point3::new(
        (from.x + to.x) / 2.0 + rng.range(-0.004, 0.004),
        from.y * 0.7 + to.y * 0.3,
        (from.z + to.z) / 2.0,
    );
    let approx_len = from.dist(to);
    let n_seg = ((approx_len / 0.0012).ceil() as usize).max(4);
    let mut curve = Vec::with_capacity(n_seg + 1);
    let mut surface = Vec::new();
    let n_ring = ((std::f64::consts::TAU * radius) / 0.0012).ceil() as usize;
    for i in 0..=n_seg {
        let t = i as f64 / n_seg as f64;
        let omt = 1.0 - t;
        let p = Point3::new(
            omt * omt * from.x + 2.0 * omt * t * control.x + t * t * to.x,
            omt * omt * from.y + 2.0 * omt * t * control.y + t * t * to.y,
            omt * omt * from.z + 2.0 * omt * t * control.z + t * t * to.z,
        );
        curve.push(p);
        // Tangent of the Bezier.
        let tangent = Vec3::new(
            2.0 * omt * (control.x - from.x) + 2.0 * t * (to.x - control.x),
            2.0 * omt * (control.y - from.y) + 2.0 * t * (to.y - control.y),
            2.0 * omt * (control.z - from.z) + 2.0 * t * (to.z - control.z),
        )
        .normalized()
        .unwrap_or(Vec3::Z);
        let n1 = tangent
            .cross(Vec3::X)
            .normalized()
            .unwrap_or_else(|| tangent.cross(Vec3::Y).normalized().unwrap());
        let n2 = tangent.cross(n1);
        for k in 0..n_ring {
            let phi = std::f64::consts::TAU * k as f64 / n_ring as f64;
            let dir = n1 * phi.cos() + n2 * phi.sin();
            surface.push(SurfacePoint {
                position: p + dir * radius,
                normal: dir,
                color: jitter_color(PEDUNCLE_BASE_COLOR, rng, 6.0),
            });
        }
    }
    (curve, surface)
}

fn stem_tube(
    from: Point3,
    to: Point3,
    radius: f64,
    out: &mut Vec<SurfacePoint>,
    rng: &mut Rng,
) {
    let axis = (to - from).normalized().unwrap();
    let n1 = axis
        .cross(Vec3::X)
        .normalized()
        .unwrap_or_else(|| axis.cross(Vec3::Y).normalized().unwrap());
    let n2 = axis.cross(n1);
    let len = from.dist(to);
    let n_seg = (len / 0.003).ceil() as usize;
    let n_ring = ((std::f64::consts::TAU * radius) / 0.0025).ceil() as usize;
    for i in 0..=n_seg {
        let p = from + axis * (len * i as f64 / n_seg as f64);
        for k in 0..n_ring {
            let phi = std::f64::consts::TAU * k as f64 / n_ring as f64;
            let dir = n1 * phi.cos() + n2 * phi.sin();
            out.push(SurfacePoint {
                position: p + dir * radius,
                normal: dir,
                color: jitter_color(STEM_BASE_COLOR, rng, 5.0),
            });
        }
    }
}

/// Horizontal band of trellis material behind the row, spanning the heights
/// every peduncle top reaches so each one visually connects to it.
fn trellis_band(
    spec: &SceneSpec,
    trellis_y: f64,
    peppers: &[Pepper],
    out: &mut Vec<SurfacePoint>,
    rng: &mut Rng,
) {
    let (mut z_lo, mut z_hi) = (1.3f64, 1.45f64);
    for p in peppers {
        let top = p.peduncle_curve.last().unwrap().z;
        z_lo = z_lo.min(top - 0.01);
        z_hi = z_hi.max(top + 0.06);
    }
    let step = 0.004;
    let nx = (spec.row_length / step).ceil() as usize;
    let nz = ((z_hi - z_lo) / step).ceil() as usize;
    for i in 0..=nx {
        for j in 0..=nz {
            out.push(SurfacePoint {
                position: Point3::new(i as f64 * step, trellis_y, z_lo + j as f64 * step),
                normal: -Vec3::Y,
                color: jitter_color(TRELLIS_BASE_COLOR, rng, 6.0),
            });
        }
    }
}

/// Place one leaf disk in front of a crop so that it hides roughly
/// `fraction` of the crop's outline as seen along +y from the camera line.
fn make_leaf(pepper: &Pepper, fraction: f64, rng: &mut Rng) -> Leaf {
    let outline_radius = pepper.radii.x.max(pepper.radii.z);
    let leaf_radius = outline_radius * rng.range(1.1, 1.3);
    let gap = rng.range(0.04, 0.07);
    let leaf_y = pepper.center.y - pepper.radii.y - gap;

    // The leaf sits closer to the camera, so it looms slightly larger; shrink
    // its effective radius for the overlap solve.
    let cam_y = -DEFAULT_LONG_RANGE_STANDOFF;
    let looming = (pepper.center.y - cam_y) / (leaf_y - cam_y);
    let effective_radius = leaf_radius * looming;

    let target_area = fraction * std::f64::consts::PI * outline_radius * outline_radius;
    let distance = solve_overlap_distance(outline_radius, effective_radius, target_area);

    let angle = rng.range(0.0, std::f64::consts::TAU);
    let center = Point3::new(
        pepper.center.x + distance * angle.cos(),
        leaf_y,
        pepper.center.z + distance * angle.sin(),
    );
    // Slight random tilt away from facing the camera dead on.
    let normal = Vec3::new(rng.range(-0.2, 0.2), -1.0, rng.range(-0.2, 0.2))
        .normalized()
        .unwrap();
    let u = normal.cross(Vec3::Z).normalized().unwrap();
    let v = normal.cross(u);

    let mut points = Vec::new();
    let n_rings = (leaf_radius / SURFACE_SPACING).ceil() as usize;
    for ri in 0..=n_rings {
        let rho = leaf_radius * ri as f64 / n_rings as f64;
        let n_pts = (((std::f64::consts::TAU * rho) / SURFACE_SPACING).ceil() as usize).max(1);
        for k in 0..n_pts {
            let phi = std::f64::consts::TAU * k as f64 / n_pts as f64;
            points.push(SurfacePoint {
                position: center + u * (rho * phi.cos()) + v * (rho * phi.sin()),
                normal,
                color: jitter_color(LEAF_BASE_COLOR, rng, 8.0),
            });
        }
    }
    Leaf {
        center,
        normal,
        radius: leaf_radius,
        points,
    }
}

/// Distance between circle centers (radii `r_a`, `r_b`) whose intersection
/// area equals `target`, found by bisection; the lens area is monotone
/// decreasing in the distance.
fn solve_overlap_distance(r_a: f64, r_b: f64, target: f64) -> f64 {
    let max_area = std::f64::consts::PI * r_a.min(r_b) * r_a.min(r_b);
    if target >= max_area {
        return (r_b - r_a).abs().max(0.0) * 0.5;
    }
    if target <= 0.0 {
        return r_a + r_b;
    }
    let (mut lo, mut hi) = (0.0f64, r_a + r_b);
    for _ in 0..60 {
        let mid = (lo + hi) / 2.0;
        if lens_area(r_a, r_b, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

/// Intersection area of two circles with center distance `d`.
fn lens_area(r_a: f64, r_b: f64, d: f64) -> f64 {
    if d >= r_a + r_b {
        return 0.0;
    }
    let r_min = r_a.min(r_b);
    if d <= (r_a - r_b).abs() {
        return std::f64::consts::PI * r_min * r_min;
    }
    let d2 = d * d;
    let a2 = r_a * r_a;
    let b2 = r_b * r_b;
    let alpha = ((d2 + a2 - b2) / (2.0 * d * r_a)).clamp(-1.0, 1.0).acos();
    let beta = ((d2 + b2 - a2) / (2.0 * d * r_b)).clamp(-1.0, 1.0).acos();
    a2 * (alpha - alpha.sin() * alpha.cos()) + b2 * (beta - beta.sin() * beta.cos())
}
