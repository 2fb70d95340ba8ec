//! Surface normal, curvature and boundary estimation.
//!
//! Normals come from a PCA over each point's neighborhood: the normal is the
//! least-variance eigenvector, sign-flipped toward the viewpoint, and the
//! curvature is `lambda_min / (lambda_0 + lambda_1 + lambda_2)` which lives in
//! `[0, 1/3]`. Points with fewer than three neighbors in the patch (the query
//! point counts as its own neighbor) carry no usable surface estimate and are
//! dropped.

use super::SpatialIndex;
use crate::geom::{Point3, Vec3};

/// A point with its estimated local surface properties.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub point: Point3,
    /// Unit normal, oriented toward the viewpoint used during estimation.
    pub normal: Vec3,
    /// `lambda_min / sum(lambda)`, in `[0, 1/3]`; 0 on a perfect plane.
    pub curvature: f64,
    pub is_boundary: bool,
    /// Index of this point in the cloud the samples were estimated from.
    pub point_index: usize,
}

/// Estimate a normal and curvature for every point with at least 3 neighbors
/// within `patch_radius`. Normals are flipped so they point toward
/// `viewpoint`. Points without a valid estimate are excluded from the output.
pub fn estimate_normals(
    index: &SpatialIndex,
    patch_radius: f64,
    viewpoint: Point3,
) -> Vec<SurfaceSample> {
    assert!(patch_radius > 0.0, "patch radius must be positive");
    let mut out = Vec::new();
    for i in 0..index.len() {
        let p = index.point(i);
        let neighbors = index.radius(p, patch_radius);
        if neighbors.len() < 3 {
            continue;
        }
        // Population covariance of the neighborhood.
        let n = neighbors.len() as f64;
        let mut mean = Vec3::ZERO;
        for &j in &neighbors {
            mean = mean + index.point(j).to_vec();
        }
        mean = mean * (1.0 / n);
        let mut cov = [[0.0f64; 3]; 3];
        for &j in &neighbors {
            let d = index.point(j).to_vec() - mean;
            let v = [d.x, d.y, d.z];
            for r in 0..3 {
                for c in 0..3 {
                    cov[r][c] += v[r] * v[c];
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        let (eigenvalues, eigenvectors) = sym_eigen_3x3(cov);
        let sum: f64 = eigenvalues.iter().sum();
        if sum <= 0.0 || sum.is_nan() {
            // All neighbors coincide; no surface direction exists.
            continue;
        }
        let mut normal = Vec3::new(eigenvectors[0][0], eigenvectors[1][0], eigenvectors[2][0]);
        match normal.normalized() {
            Some(u) => normal = u,
            None => continue,
        }
        if normal.dot(viewpoint - p) < 0.0 {
            normal = -normal;
        }
        let curvature = (eigenvalues[0].max(0.0)) / sum;
        out.push(SurfaceSample {
            point: p,
            normal,
            curvature,
            is_boundary: false,
            point_index: i,
        });
    }
    out
}

/// Mark samples that sit on the cloud boundary.
///
/// A sample is a boundary point when, after projecting its neighbors within
/// `radius` onto the tangent plane, the largest angular gap between
/// consecutive neighbor directions exceeds `angle_gap_threshold`. Samples
/// with at most one neighbor are boundary by convention.
pub fn detect_boundary(
    samples: &mut [SurfaceSample],
    index: &SpatialIndex,
    radius: f64,
    angle_gap_threshold: f64,
) {
    assert!(
        angle_gap_threshold > 0.0 && angle_gap_threshold < std::f64::consts::TAU,
        "angle gap threshold must be in (0, 2*pi)"
    );
    for sample in samples.iter_mut() {
        let p = sample.point;
        let neighbors = index.radius(p, radius);
        let mut angles = Vec::with_capacity(neighbors.len());
        // Tangent-plane basis orthogonal to the normal.
        let n = sample.normal;
        let seed = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
            Vec3::X
        } else if n.y.abs() <= n.z.abs() {
            Vec3::Y
        } else {
            Vec3::Z
        };
        let u = (seed - n * seed.dot(n)).normalized().unwrap();
        let v = n.cross(u);
        let mut neighbor_count = 0usize;
        for &j in &neighbors {
            if j == sample.point_index {
                continue;
            }
            neighbor_count += 1;
            let d = index.point(j) - p;
            let proj = d - n * d.dot(n);
            if proj.norm() < 1e-12 {
                continue;
            }
            angles.push(proj.dot(v).atan2(proj.dot(u)));
        }
        if neighbor_count <= 1 || angles.is_empty() {
            sample.is_boundary = true;
            continue;
        }
        angles.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut max_gap = std::f64::consts::TAU - (angles[angles.len() - 1] - angles[0]);
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        sample.is_boundary = max_gap > angle_gap_threshold;
    }
}

/// Eigen decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns of the returned matrix.
pub fn sym_eigen_3x3(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // Apply the rotation G(p, q, theta) on both sides.
            let app = a[p][p];
            let aqq = a[q][q];
            let apq = a[p][q];
            a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
            a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            for r in 0..3 {
                if r != p && r != q {
                    let arp = a[r][p];
                    let arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[p][r] = a[r][p];
                    a[r][q] = s * arp + c * arq;
                    a[q][r] = a[r][q];
                }
                let vrp = v[r][p];
                let vrq = v[r][q];
                v[r][p] = c * vrp - s * vrq;
                v[r][q] = s * vrp + c * vrq;
            }
        }
    }
    // Sort eigenpairs ascending by eigenvalue.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let eigenvalues = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
    let mut eigenvectors = [[0.0; 3]; 3];
    for (col, &oi) in order.iter().enumerate() {
        for row in 0..3 {
            eigenvectors[row][col] = v[row][oi];
        }
    }
    (eigenvalues, eigenvectors)
}
