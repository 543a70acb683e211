//! Numerical primitives: spherical Gaussian log-density, log-sum-exp and
//! the volume of the data support used by the uniform background.

use std::collections::HashMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeMethod {
    ConvexHull,
    BoundingBox,
}

/// Uniform density over the data support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub volume: f64,
    pub density: f64,
    pub method: VolumeMethod,
}

impl BackgroundModel {
    pub fn from_volume(volume: f64, method: VolumeMethod) -> Result<Self> {
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::DegenerateSupport(format!(
                "support volume {volume} is not positive"
            )));
        }
        Ok(Self {
            volume,
            density: 1.0 / volume,
            method,
        })
    }
}

/// `log N(x; mu, sigma2 * I_D)`.
pub fn gaussian_log_pdf(x: &[f64], mu: &[f64], sigma2: f64) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::Shape {
            context: "gaussian_log_pdf",
            expected: mu.len(),
            found: x.len(),
        });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {sigma2}")));
    }
    Ok(log_gauss(sq_dist(x, mu), sigma2, x.len()))
}

/// Unchecked form of [`gaussian_log_pdf`] taking the squared distance.
#[inline]
pub(crate) fn log_gauss(sq_dist: f64, sigma2: f64, dim: usize) -> f64 {
    -0.5 * dim as f64 * (LN_2PI + sigma2.ln()) - sq_dist / (2.0 * sigma2)
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log(sum(exp(v)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Volume of the region occupied by the points.
///
/// The convex hull is exact for `D <= 3`. Above that the bounding box is
/// used instead and a warning is logged.
pub fn support_volume(x: ArrayView2<'_, f64>, method: VolumeMethod) -> Result<BackgroundModel> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("support_volume needs at least one point"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite coordinate in point cloud".into()));
    }
    let method = match method {
        VolumeMethod::ConvexHull if d > 3 => {
            log::warn!("convex hull volume not computed for D={d}; using the bounding box");
            VolumeMethod::BoundingBox
        }
        m => m,
    };
    let volume = match method {
        VolumeMethod::BoundingBox => bounding_box_volume(x),
        VolumeMethod::ConvexHull => {
            if n < d + 1 {
                return Err(Error::DegenerateSupport(format!(
                    "{n} points cannot span a {d}-dimensional hull"
                )));
            }
            match d {
                1 => bounding_box_volume(x),
                2 => {
                    let pts: Vec<[f64; 2]> = x.rows().into_iter().map(|r| [r[0], r[1]]).collect();
                    polygon_area(&convex_hull_2d(&pts))
                }
                _ => {
                    let pts: Vec<[f64; 3]> =
                        x.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
                    convex_hull_volume_3d(&pts)?
                }
            }
        }
    };
    let scale = x
        .columns()
        .into_iter()
        .map(|c| {
            let (lo, hi) = min_max(c.iter().copied());
            hi - lo
        })
        .fold(0.0, f64::max);
    if !(volume > 1e-12 * scale.powi(d as i32)) {
        return Err(Error::DegenerateSupport(format!(
            "support volume {volume:e} is zero at data scale {scale:e}"
        )));
    }
    BackgroundModel::from_volume(volume, method)
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn bounding_box_volume(x: ArrayView2<'_, f64>) -> f64 {
    x.columns()
        .into_iter()
        .map(|c| {
            let (lo, hi) = min_max(c.iter().copied());
            hi - lo
        })
        .product()
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without
/// collinear points.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    0.5 * twice.abs()
}

type V3 = [f64; 3];

fn sub3(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

struct Face {
    v: [usize; 3],
    normal: V3,
    alive: bool,
}

impl Face {
    fn new(pts: &[V3], v: [usize; 3]) -> Self {
        let n = cross3(sub3(pts[v[1]], pts[v[0]]), sub3(pts[v[2]], pts[v[0]]));
        let len = dot3(n, n).sqrt();
        let normal = if len > 0.0 {
            [n[0] / len, n[1] / len, n[2] / len]
        } else {
            [0.0; 3]
        };
        Face {
            v,
            normal,
            alive: true,
        }
    }

    fn height(&self, pts: &[V3], p: V3) -> f64 {
        dot3(self.normal, sub3(p, pts[self.v[0]]))
    }
}

/// Volume of the 3D convex hull by incremental construction.
pub fn convex_hull_volume_3d(pts: &[V3]) -> Result<f64> {
    let degenerate = || Error::DegenerateSupport("points are coplanar".into());
    if pts.len() < 4 {
        return Err(degenerate());
    }
    let (lo, hi) = pts.iter().fold(
        ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]),
        |(mut lo, mut hi), p| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            (lo, hi)
        },
    );
    let scale = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let eps = 1e-10 * scale.max(f64::MIN_POSITIVE);

    // Initial tetrahedron from extreme points.
    let i0 = (0..pts.len())
        .min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]))
        .unwrap();
    let i1 = argmax(pts.len(), |i| dot3(sub3(pts[i], pts[i0]), sub3(pts[i], pts[i0])));
    let axis = sub3(pts[i1], pts[i0]);
    if dot3(axis, axis).sqrt() <= eps {
        return Err(degenerate());
    }
    let i2 = argmax(pts.len(), |i| {
        let c = cross3(axis, sub3(pts[i], pts[i0]));
        dot3(c, c)
    });
    let plane = cross3(axis, sub3(pts[i2], pts[i0]));
    let plane_len = dot3(plane, plane).sqrt();
    if plane_len <= eps * dot3(axis, axis).sqrt() {
        return Err(degenerate());
    }
    let i3 = argmax(pts.len(), |i| dot3(plane, sub3(pts[i], pts[i0])).abs());
    if dot3(plane, sub3(pts[i3], pts[i0])).abs() / plane_len <= eps {
        return Err(degenerate());
    }

    let tet = [i0, i1, i2, i3];
    let centroid = tet.iter().fold([0.0; 3], |acc, &i| {
        [
            acc[0] + pts[i][0] / 4.0,
            acc[1] + pts[i][1] / 4.0,
            acc[2] + pts[i][2] / 4.0,
        ]
    });
    let mut faces: Vec<Face> = Vec::new();
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
    let push_face = |faces: &mut Vec<Face>, edges: &mut HashMap<(usize, usize), usize>, v: [usize; 3]| {
        let idx = faces.len();
        faces.push(Face::new(pts, v));
        for e in 0..3 {
            edges.insert((v[e], v[(e + 1) % 3]), idx);
        }
    };
    for skip in 0..4 {
        let mut v: Vec<usize> = tet.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &i)| i).collect();
        let f = Face::new(pts, [v[0], v[1], v[2]]);
        if f.height(pts, centroid) > 0.0 {
            v.swap(1, 2);
        }
        push_face(&mut faces, &mut edge_owner, [v[0], v[1], v[2]]);
    }

    for (pi, &p) in pts.iter().enumerate() {
        if tet.contains(&pi) {
            continue;
        }
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&f| faces[f].alive && faces[f].height(pts, p) > eps)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut horizon = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for e in 0..3 {
                let (a, b) = (v[e], v[(e + 1) % 3]);
                let twin = edge_owner[&(b, a)];
                if faces[twin].height(pts, p) <= eps {
                    horizon.push((a, b));
                }
            }
        }
        for &f in &visible {
            faces[f].alive = false;
            let v = faces[f].v;
            for e in 0..3 {
                edge_owner.remove(&(v[e], v[(e + 1) % 3]));
            }
        }
        for (a, b) in horizon {
            push_face(&mut faces, &mut edge_owner, [a, b, pi]);
        }
    }

    let volume: f64 = faces
        .iter()
        .filter(|f| f.alive)
        .map(|f| dot3(pts[f.v[0]], cross3(pts[f.v[1]], pts[f.v[2]])) / 6.0)
        .sum();
    Ok(volume.abs())
}

fn argmax(n: usize, key: impl Fn(usize) -> f64) -> usize {
    (0..n).max_by(|&a, &b| key(a).total_cmp(&key(b))).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_peak() {
        let v = gaussian_log_pdf(&[0.3], &[0.3], 1.0).unwrap();
        assert_relative_eq!(v, -0.918_938_533_204_672_7, epsilon = 1e-12);
        let v = gaussian_log_pdf(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap();
        assert_relative_eq!(v, -1.837_877_066_409_345_5, epsilon = 1e-12);
    }

    #[test]
    fn offset_point_matches_quadrature_normalized_density() {
        let v = gaussian_log_pdf(&[1.0, 0.0], &[0.0, 0.0], 0.5).unwrap();
        let expected = -1.837_877_066_409_345_5 - 0.5_f64.ln() - 1.0;
        assert_relative_eq!(v, expected, epsilon = 1e-12);

        // Oracle: unnormalized kernel divided by its numerical integral.
        let kernel = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * 0.5)).exp();
        let h = 0.01;
        let mut z = 0.0;
        let mut x = -8.0;
        while x < 8.0 {
            let mut y = -8.0;
            while y < 8.0 {
                z += kernel(x + h / 2.0, y + h / 2.0) * h * h;
                y += h;
            }
            x += h;
        }
        assert_relative_eq!(v, (kernel(1.0, 0.0) / z).ln(), epsilon = 1e-6);
    }

    #[test]
    fn log_pdf_errors() {
        assert!(matches!(gaussian_log_pdf(&[0.0], &[0.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(gaussian_log_pdf(&[0.0], &[0.0], -1.0), Err(Error::Domain(_))));
        assert!(matches!(
            gaussian_log_pdf(&[0.0, 1.0], &[0.0], 1.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn density_integrates_to_one() {
        let h = 0.005;
        let mut total = 0.0;
        let mut x = -6.0;
        while x < 6.0 {
            total += gaussian_log_pdf(&[x + h / 2.0], &[0.2], 0.7).unwrap().exp() * h;
            x += h;
        }
        assert!((total - 1.0).abs() < 1e-3);

        let h = 0.02;
        let mut total = 0.0;
        let mut x = -4.0;
        while x < 4.0 {
            let mut y = -4.0;
            while y < 4.0 {
                total += gaussian_log_pdf(&[x + h / 2.0, y + h / 2.0], &[0.1, -0.3], 0.4)
                    .unwrap()
                    .exp()
                    * h
                    * h;
                y += h;
            }
            x += h;
        }
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn peak_is_at_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = [0.4, -1.2, 2.0];
        let peak = gaussian_log_pdf(&mu, &mu, 0.3).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!(gaussian_log_pdf(&x, &mu, 0.3).unwrap() <= peak);
        }
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(log_sum_exp(&[0.0, f64::NEG_INFINITY]), 0.0);
    }

    #[test]
    fn unit_square_and_triangle() {
        let sq = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let bg = support_volume(sq.view(), VolumeMethod::ConvexHull).unwrap();
        assert_relative_eq!(bg.volume, 1.0, epsilon = 1e-15);
        assert_relative_eq!(bg.density * bg.volume, 1.0, max_relative = 1e-12);

        let tri = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let bg = support_volume(tri.view(), VolumeMethod::ConvexHull).unwrap();
        assert_relative_eq!(bg.volume, 0.5, epsilon = 1e-15);
    }

    fn cube() -> Array2<f64> {
        let mut c = Array2::zeros((8, 3));
        for i in 0..8 {
            for a in 0..3 {
                c[[i, a]] = ((i >> a) & 1) as f64;
            }
        }
        c
    }

    #[test]
    fn unit_cube_both_methods() {
        let c = cube();
        let bb = support_volume(c.view(), VolumeMethod::BoundingBox).unwrap();
        assert_relative_eq!(bb.volume, 1.0);
        let hull = support_volume(c.view(), VolumeMethod::ConvexHull).unwrap();
        assert_relative_eq!(hull.volume, 1.0, epsilon = 1e-12);
        assert_eq!(hull.method, VolumeMethod::ConvexHull);
    }

    #[test]
    fn hull_3d_of_ball_samples_approaches_ball_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        while pts.len() < 4000 {
            let p = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let r2 = dot3(p, p);
            if r2 > 0.0 {
                // Points on the sphere surface, plus interior points.
                let s = if pts.len() % 2 == 0 { 1.0 / r2.sqrt() } else { 1.0 };
                if r2 <= 1.0 {
                    pts.push([p[0] * s, p[1] * s, p[2] * s]);
                }
            }
        }
        let v = convex_hull_volume_3d(&pts).unwrap();
        let ball = 4.0 / 3.0 * PI;
        assert!(v < ball && v > 0.97 * ball, "{v} vs {ball}");
    }

    #[test]
    fn hull_3d_tetrahedron_with_interior_points() {
        let mut pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        pts.push([0.1, 0.1, 0.1]);
        pts.push([0.2, 0.2, 0.2]);
        pts.push([0.5, 0.0, 0.0]); // on an edge
        let v = convex_hull_volume_3d(&pts).unwrap();
        assert_relative_eq!(v, 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_supports_are_rejected() {
        let line = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(
            support_volume(line.view(), VolumeMethod::ConvexHull),
            Err(Error::DegenerateSupport(_))
        ));
        let two = array![[0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(
            support_volume(two.view(), VolumeMethod::ConvexHull),
            Err(Error::DegenerateSupport(_))
        ));
        let flat = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(support_volume(flat.view(), VolumeMethod::ConvexHull).is_err());
        assert!(support_volume(flat.view(), VolumeMethod::BoundingBox).is_err());
    }

    #[test]
    fn high_dimension_falls_back_to_bounding_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((50, 5), |_| rng.random_range(0.0..2.0));
        let bg = support_volume(x.view(), VolumeMethod::ConvexHull).unwrap();
        assert_eq!(bg.method, VolumeMethod::BoundingBox);
    }

    #[test]
    fn hull_is_rotation_invariant_and_below_bounding_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> = (0..60)
                .map(|_| [rng.random_range(-1.0..3.0), rng.random_range(0.0..1.0)])
                .collect();
            let theta: f64 = rng.random_range(0.0..6.28);
            let (s, c) = theta.sin_cos();
            let rotated: Vec<[f64; 2]> = pts
                .iter()
                .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
                .collect();
            let a = polygon_area(&convex_hull_2d(&pts));
            let b = polygon_area(&convex_hull_2d(&rotated));
            assert_relative_eq!(a, b, max_relative = 1e-9);

            let x = Array2::from_shape_fn((pts.len(), 2), |(i, j)| pts[i][j]);
            let bb = support_volume(x.view(), VolumeMethod::BoundingBox).unwrap();
            let hull = support_volume(x.view(), VolumeMethod::ConvexHull).unwrap();
            assert!(bb.volume >= hull.volume);
        }
    }
}
