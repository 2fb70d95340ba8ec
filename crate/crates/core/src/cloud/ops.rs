//! Downsampling, outlier removal, clustering and bounding boxes.

use std::collections::BTreeMap;

use super::{CloudError, ColorPointCloud, SpatialIndex};
use crate::geom::{Aabb3, Point3};

/// Collapse the cloud onto a cubic grid of side `radius`: one output point
/// per occupied cell, placed at the centroid of the cell's members, with
/// channel-wise averaged (rounded) colors.
///
/// Cell membership is `floor(coordinate / radius)` per axis, so a coordinate
/// exactly on a cell border goes to the cell it is the lower edge of. Output
/// order follows the lexicographic cell key, which makes the operation
/// reproducible bit for bit. When pixel origins are present, each cell keeps
/// the origin of its lowest-index member.
pub fn voxel_downsample(
    cloud: &ColorPointCloud,
    radius: f64,
) -> Result<ColorPointCloud, CloudError> {
    if radius <= 0.0 || radius.is_nan() {
        return Err(CloudError::NonPositiveRadius(radius));
    }

    struct Acc {
        sum: [f64; 3],
        color_sum: [f64; 3],
        count: usize,
        first_index: usize,
    }

    let mut cells: BTreeMap<(i64, i64, i64), Acc> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = (
            (p.x / radius).floor() as i64,
            (p.y / radius).floor() as i64,
            (p.z / radius).floor() as i64,
        );
        let c = cloud.colors[i];
        let acc = cells.entry(key).or_insert(Acc {
            sum: [0.0; 3],
            color_sum: [0.0; 3],
            count: 0,
            first_index: i,
        });
        acc.sum[0] += p.x;
        acc.sum[1] += p.y;
        acc.sum[2] += p.z;
        acc.color_sum[0] += c[0] as f64;
        acc.color_sum[1] += c[1] as f64;
        acc.color_sum[2] += c[2] as f64;
        acc.count += 1;
    }

    let mut out = ColorPointCloud::new();
    if cloud.pixel_origin.is_some() {
        out.pixel_origin = Some(Vec::new());
    }
    for acc in cells.values() {
        let n = acc.count as f64;
        let p = Point3::new(acc.sum[0] / n, acc.sum[1] / n, acc.sum[2] / n);
        let color = [
            (acc.color_sum[0] / n).round() as u8,
            (acc.color_sum[1] / n).round() as u8,
            (acc.color_sum[2] / n).round() as u8,
        ];
        out.points.push(p);
        out.colors.push(color);
        if let (Some(po_out), Some(po_in)) = (out.pixel_origin.as_mut(), cloud.pixel_origin.as_ref())
        {
            po_out.push(po_in[acc.first_index]);
        }
    }
    Ok(out)
}

/// Remove points whose mean distance to their `k` nearest neighbors exceeds
/// `global mean + stddev_mult * global stddev` of that statistic.
///
/// The point itself is never counted among its neighbors. Requires more than
/// `k` points so every point has `k` proper neighbors.
pub fn statistical_outlier_removal(
    cloud: &ColorPointCloud,
    k: usize,
    stddev_mult: f64,
) -> Result<ColorPointCloud, CloudError> {
    if k < 1 || cloud.len() <= k {
        return Err(CloudError::TooFewPoints {
            size: cloud.len(),
            k,
        });
    }
    let index = SpatialIndex::build(cloud)?;
    let n = cloud.len();
    let mut mean_dist = vec![0.0f64; n];
    for (i, slot) in mean_dist.iter_mut().enumerate() {
        let p = cloud.points[i];
        // k+1 nearest include the point itself (distance 0, lowest index tie
        // rank among coincident points is irrelevant: we drop index i).
        let nn = index.k_nearest(p, k + 1);
        let mut sum = 0.0;
        let mut used = 0;
        for &j in &nn {
            if j != i && used < k {
                sum += cloud.points[j].dist(p);
                used += 1;
            }
        }
        *slot = sum / used as f64;
    }
    let mean: f64 = mean_dist.iter().sum::<f64>() / n as f64;
    let var: f64 = mean_dist.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    let threshold = mean + stddev_mult * var.sqrt();
    let keep: Vec<usize> = (0..n).filter(|&i| mean_dist[i] <= threshold).collect();
    Ok(cloud.select(&keep))
}

/// Connected components of the graph linking points within `tolerance`,
/// discarding components whose size falls outside `[min_size, max_size]`.
/// Output is ordered by descending size (ties by lowest member index), and
/// each cluster lists its points in ascending original index.
pub fn euclidean_cluster(
    cloud: &ColorPointCloud,
    tolerance: f64,
    min_size: usize,
    max_size: usize,
) -> Vec<ColorPointCloud> {
    assert!(tolerance > 0.0, "tolerance must be positive");
    assert!(
        min_size >= 1 && min_size <= max_size,
        "cluster size bounds must satisfy 1 <= min <= max"
    );
    if cloud.is_empty() {
        return Vec::new();
    }
    let index = SpatialIndex::build_with_cell(cloud, Some(tolerance))
        .expect("non-empty cloud");
    let n = cloud.len();
    let mut visited = vec![false; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Flood fill via radius queries.
        visited[seed] = true;
        let mut members = vec![seed];
        let mut cursor = 0;
        while cursor < members.len() {
            let p = cloud.points[members[cursor]];
            cursor += 1;
            for j in index.radius(p, tolerance) {
                if !visited[j] {
                    visited[j] = true;
                    members.push(j);
                }
            }
        }
        if members.len() >= min_size && members.len() <= max_size {
            members.sort_unstable();
            clusters.push(members);
        }
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters.into_iter().map(|m| cloud.select(&m)).collect()
}

/// Componentwise min/max box of all points.
pub fn aabb(cloud: &ColorPointCloud) -> Result<Aabb3, CloudError> {
    let first = *cloud.points.first().ok_or(CloudError::EmptyCloud)?;
    let mut min = first;
    let mut max = first;
    for p in &cloud.points {
        min = Point3::new(min.x.min(p.x), min.y.min(p.y), min.z.min(p.z));
        max = Point3::new(max.x.max(p.x), max.y.max(p.y), max.z.max(p.z));
    }
    Ok(Aabb3 { min, max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud_of(points: Vec<Point3>) -> ColorPointCloud {
        ColorPointCloud::from_points(points)
    }

    #[test]
    fn downsample_empty_is_empty() {
        let out = voxel_downsample(&ColorPointCloud::new(), 0.002).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn downsample_merges_close_pair_at_midpoint() {
        // 1 mm apart inside one 2 mm cell.
        let c = cloud_of(vec![
            Point3::new(0.0005, 0.001, 0.001),
            Point3::new(0.0015, 0.001, 0.001),
        ]);
        let out = voxel_downsample(&c, 0.002).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out.points[0].dist(Point3::new(0.001, 0.001, 0.001)) < 1e-12);
    }

    #[test]
    fn downsample_keeps_sparse_grid() {
        // 5 mm grid, 2 mm cells: every point is alone in its cell.
        let c = cloud_of(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.005, 0.0, 0.0),
            Point3::new(0.0, 0.005, 0.0),
            Point3::new(0.005, 0.005, 0.0),
        ]);
        let out = voxel_downsample(&c, 0.002).unwrap();
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn downsample_rejects_bad_radius() {
        let err = voxel_downsample(&ColorPointCloud::new(), 0.0).unwrap_err();
        assert_eq!(err, CloudError::NonPositiveRadius(0.0));
    }

    #[test]
    fn downsample_averages_colors() {
        let mut c = ColorPointCloud::new();
        c.push(Point3::new(0.0, 0.0, 0.0), [10, 0, 255]);
        c.push(Point3::new(0.0005, 0.0, 0.0), [11, 0, 0]);
        let out = voxel_downsample(&c, 0.002).unwrap();
        assert_eq!(out.colors, vec![[11, 0, 128]]); // 10.5 rounds to 11, 127.5 to 128
    }

    #[test]
    fn outlier_removal_drops_far_point() {
        // Tight 50-point cluster plus one point a meter away.
        let mut pts = Vec::new();
        for i in 0..50 {
            let t = i as f64;
            pts.push(Point3::new(
                (t * 0.37).sin() * 0.005,
                (t * 0.73).cos() * 0.005,
                (t * 0.11).sin() * 0.005,
            ));
        }
        pts.push(Point3::new(1.0, 0.0, 0.0));
        let out = statistical_outlier_removal(&cloud_of(pts), 8, 1.0).unwrap();
        assert_eq!(out.len(), 50);
        assert!(out.points.iter().all(|p| p.x < 0.5));
    }

    #[test]
    fn outlier_removal_keeps_identical_points() {
        let p = Point3::new(0.1, 0.2, 0.3);
        let out = statistical_outlier_removal(&cloud_of(vec![p; 10]), 4, 1.0).unwrap();
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn outlier_removal_needs_more_than_k_points() {
        let pts = vec![Point3::ORIGIN; 8];
        let err = statistical_outlier_removal(&cloud_of(pts), 8, 1.0).unwrap_err();
        assert_eq!(err, CloudError::TooFewPoints { size: 8, k: 8 });
    }

    #[test]
    fn cluster_splits_by_gap() {
        let c = cloud_of(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.001, 0.0, 0.0),
            Point3::new(0.1, 0.0, 0.0),
        ]);
        let clusters = euclidean_cluster(&c, 0.01, 1, usize::MAX);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].len(), 2); // largest first
        assert_eq!(clusters[1].len(), 1);
    }

    #[test]
    fn cluster_min_size_filters_everything() {
        let c = cloud_of(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.001, 0.0, 0.0),
            Point3::new(0.1, 0.0, 0.0),
        ]);
        let clusters = euclidean_cluster(&c, 0.01, 3, usize::MAX);
        assert!(clusters.is_empty());
    }

    #[test]
    fn cluster_empty_input_empty_output() {
        assert!(euclidean_cluster(&ColorPointCloud::new(), 0.01, 1, 10).is_empty());
    }

    #[test]
    fn cluster_matches_union_find_oracle() {
        // Deterministic pseudo-random cloud; compare against a brute-force
        // union-find partition.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<Point3> = (0..200)
            .map(|_| Point3::new(next() * 0.3, next() * 0.3, next() * 0.3))
            .collect();
        let tol = 0.035;

        // Union-find oracle.
        let mut parent: Vec<usize> = (0..pts.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if pts[i].dist(pts[j]) <= tol {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
        let mut expected: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..pts.len() {
            let r = find(&mut parent, i);
            expected.entry(r).or_default().push(i);
        }
        let mut expected: Vec<Vec<usize>> = expected.into_values().collect();
        expected.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

        let clusters = euclidean_cluster(&cloud_of(pts.clone()), tol, 1, usize::MAX);
        let got: Vec<Vec<usize>> = clusters
            .iter()
            .map(|c| {
                c.points
                    .iter()
                    .map(|p| pts.iter().position(|q| q == p).unwrap())
                    .collect()
            })
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn aabb_single_point() {
        let p = Point3::new(0.4, -0.1, 2.0);
        let bb = aabb(&cloud_of(vec![p])).unwrap();
        assert_eq!(bb.min, p);
        assert_eq!(bb.max, p);
    }

    #[test]
    fn aabb_two_points() {
        let bb = aabb(&cloud_of(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 2.0, 3.0),
        ]))
        .unwrap();
        assert_eq!(bb.min, Point3::new(0.0, 0.0, 0.0));
        assert_eq!(bb.max, Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn aabb_empty_errors() {
        assert_eq!(aabb(&ColorPointCloud::new()).unwrap_err(), CloudError::EmptyCloud);
    }
}
