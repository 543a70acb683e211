//! Seeded synthetic point clouds with ground truth.

mod voronoi;

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::em::PointLabel;
use crate::graph::Graph;

pub use voronoi::{gen_voronoi_pattern, VoronoiConfig};

pub type Segment = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub points: Array2<f64>,
    pub labels: Vec<PointLabel>,
    /// Independent cycles of the generating pattern, when defined.
    pub truth_cycle_count: Option<usize>,
    /// Generating standard deviation per point; background points carry 0.
    pub truth_sigma: Option<Vec<f64>>,
    /// Line segments the pattern points were drawn around.
    pub truth_segments: Vec<Segment>,
}

impl SyntheticSet {
    pub fn background_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == PointLabel::Background).count()
    }

    /// Graph over the segment endpoints, merging endpoints closer than `tol`.
    pub fn truth_graph(&self, tol: f64) -> (Vec<[f64; 2]>, Graph) {
        let mut vertices: Vec<[f64; 2]> = Vec::new();
        let mut index = |p: [f64; 2]| -> usize {
            if let Some(i) = vertices
                .iter()
                .position(|v| (v[0] - p[0]).hypot(v[1] - p[1]) <= tol)
            {
                return i;
            }
            vertices.push(p);
            vertices.len() - 1
        };
        let pairs: Vec<(usize, usize)> = self
            .truth_segments
            .iter()
            .map(|s| (index(s[0]), index(s[1])))
            .filter(|(a, b)| a != b)
            .collect();
        let pos = Array2::from_shape_fn((vertices.len(), 2), |(i, j)| vertices[i][j]);
        let g = Graph::from_pairs(pos.view(), pairs).expect("segment endpoints index valid vertices");
        (vertices, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeBranchConfig {
    /// Total number of points, background included.
    pub n: usize,
    pub bkg_frac: f64,
    /// Standard deviation at the branch tips.
    pub sigma_lo: f64,
    /// Standard deviation where the branches meet.
    pub sigma_hi: f64,
}

impl Default for ThreeBranchConfig {
    fn default() -> Self {
        ThreeBranchConfig {
            n: 2400,
            bkg_frac: 0.25,
            sigma_lo: 0.015,
            sigma_hi: 0.15,
        }
    }
}

pub const BRANCH_CENTER: [f64; 2] = [0.5, 0.5];
pub const BRANCH_LENGTH: f64 = 0.4;

/// Unit direction of branch `b` (0, 1 or 2).
pub fn branch_direction(b: usize) -> [f64; 2] {
    let angle = PI / 2.0 + b as f64 * 2.0 * PI / 3.0;
    [angle.cos(), angle.sin()]
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("standard deviation is finite and nonnegative")
}

fn push_background(points: &mut Vec<[f64; 2]>, labels: &mut Vec<PointLabel>, count: usize, rng: &mut ChaCha8Rng) {
    for _ in 0..count {
        points.push([rng.random::<f64>(), rng.random::<f64>()]);
        labels.push(PointLabel::Background);
    }
}

fn to_array(points: &[[f64; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 2), |(i, j)| points[i][j])
}

/// Three straight branches of length 0.4 meeting at the centre of the unit
/// square at 120 degrees. Each point is displaced by isotropic Gaussian
/// noise whose standard deviation falls linearly from `sigma_hi` at the
/// centre to `sigma_lo` at the tip. `floor(bkg_frac * n)` of the `n`
/// points are uniform on the square.
///
/// # Panics
/// If `bkg_frac` is outside `[0, 1)` or a standard deviation is negative.
pub fn gen_three_branch(cfg: &ThreeBranchConfig, seed: u64) -> SyntheticSet {
    assert!((0.0..1.0).contains(&cfg.bkg_frac), "bkg_frac must lie in [0, 1)");
    assert!(cfg.sigma_lo >= 0.0 && cfg.sigma_hi >= 0.0, "standard deviations must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bkg = (cfg.bkg_frac * cfg.n as f64).floor() as usize;
    let n_pat = cfg.n - n_bkg;

    let mut points = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut sigma = Vec::with_capacity(cfg.n);
    let mut segments = Vec::new();
    for b in 0..3 {
        let dir = branch_direction(b);
        let tip = [
            BRANCH_CENTER[0] + BRANCH_LENGTH * dir[0],
            BRANCH_CENTER[1] + BRANCH_LENGTH * dir[1],
        ];
        segments.push([BRANCH_CENTER, tip]);
        let count = n_pat / 3 + usize::from(b < n_pat % 3);
        for _ in 0..count {
            let t: f64 = rng.random();
            let sd = cfg.sigma_hi + (cfg.sigma_lo - cfg.sigma_hi) * t;
            let noise = normal(sd);
            let along = BRANCH_LENGTH * t;
            points.push([
                BRANCH_CENTER[0] + along * dir[0] + noise.sample(&mut rng),
                BRANCH_CENTER[1] + along * dir[1] + noise.sample(&mut rng),
            ]);
            labels.push(PointLabel::Pattern);
            sigma.push(sd);
        }
    }
    push_background(&mut points, &mut labels, n_bkg, &mut rng);
    sigma.resize(points.len(), 0.0);
    SyntheticSet {
        points: to_array(&points),
        labels,
        truth_cycle_count: Some(0),
        truth_sigma: Some(sigma),
        truth_segments: segments,
    }
}

/// Points spread evenly along `segments` in proportion to length, with
/// isotropic noise.
pub(crate) fn sample_segments(
    segments: &[Segment],
    total: usize,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; 2]> {
    let lengths: Vec<f64> = segments
        .iter()
        .map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]))
        .collect();
    let counts = apportion(&lengths, total);
    let noise = normal(noise_sigma);
    let mut out = Vec::with_capacity(total);
    for (s, &c) in segments.iter().zip(&counts) {
        for _ in 0..c {
            let t: f64 = rng.random();
            let mut p = [
                s[0][0] + t * (s[1][0] - s[0][0]),
                s[0][1] + t * (s[1][1] - s[0][1]),
            ];
            if noise_sigma > 0.0 {
                p[0] += noise.sample(rng);
                p[1] += noise.sample(rng);
            }
            out.push(p);
        }
    }
    out
}

/// Largest-remainder split of `total` proportional to `weights`.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Straight segment from `(0.1, 0.5)` to `(0.9, 0.5)` with optional noise
/// and background.
pub fn gen_segment(n_pattern: usize, noise_sigma: f64, bkg_frac: f64, seed: u64) -> SyntheticSet {
    polyline_set(&[[0.1, 0.5], [0.9, 0.5]], n_pattern, noise_sigma, bkg_frac, seed)
}

/// Upper half circle of radius 0.35 centred at `(0.5, 0.3)`,
/// approximated by 64 chords.
pub fn gen_arc(n_pattern: usize, noise_sigma: f64, bkg_frac: f64, seed: u64) -> SyntheticSet {
    let vertices: Vec<[f64; 2]> = (0..=64)
        .map(|i| {
            let a = PI * i as f64 / 64.0;
            [0.5 + 0.35 * a.cos(), 0.3 + 0.35 * a.sin()]
        })
        .collect();
    polyline_set(&vertices, n_pattern, noise_sigma, bkg_frac, seed)
}

fn polyline_set(vertices: &[[f64; 2]], n_pattern: usize, noise_sigma: f64, bkg_frac: f64, seed: u64) -> SyntheticSet {
    assert!((0.0..1.0).contains(&bkg_frac), "bkg_frac must lie in [0, 1)");
    assert!(noise_sigma >= 0.0, "noise must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segments: Vec<Segment> = vertices.windows(2).map(|w| [w[0], w[1]]).collect();
    let mut points = sample_segments(&segments, n_pattern, noise_sigma, &mut rng);
    let mut labels = vec![PointLabel::Pattern; points.len()];
    let n_bkg = background_for(n_pattern, bkg_frac);
    push_background(&mut points, &mut labels, n_bkg, &mut rng);
    let mut sigma = vec![noise_sigma; n_pattern];
    sigma.resize(points.len(), 0.0);
    SyntheticSet {
        points: to_array(&points),
        labels,
        truth_cycle_count: Some(0),
        truth_sigma: Some(sigma),
        truth_segments: segments,
    }
}

/// Background count that makes up `frac` of the combined set.
pub(crate) fn background_for(n_pattern: usize, frac: f64) -> usize {
    (frac * n_pattern as f64 / (1.0 - frac)).floor() as usize
}
