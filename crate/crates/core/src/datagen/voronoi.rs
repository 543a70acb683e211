use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{background_for, push_background, sample_segments, to_array, Segment, SyntheticSet};
use crate::em::PointLabel;

/// Shortest Voronoi edge accepted before the seed layout is redrawn.
const MIN_EDGE: f64 = 1e-3;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoronoiConfig {
    pub n_seeds: usize,
    /// Mean number of pattern points per Voronoi edge. The total is split
    /// across edges in proportion to their length.
    pub samples_per_edge: usize,
    pub noise_sigma: f64,
    pub bkg_frac: f64,
}

impl Default for VoronoiConfig {
    fn default() -> Self {
        VoronoiConfig {
            n_seeds: 12,
            samples_per_edge: 60,
            noise_sigma: 0.005,
            bkg_frac: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Boundary,
    Seed(usize),
}

type Polygon = Vec<([f64; 2], Side)>;

/// Keeps the part of a convex polygon where `(p - mid) . normal <= 0`.
/// Each vertex carries the side of the edge leaving it.
fn clip(poly: &Polygon, mid: [f64; 2], normal: [f64; 2], side: Side) -> Polygon {
    let f = |p: [f64; 2]| (p[0] - mid[0]) * normal[0] + (p[1] - mid[1]) * normal[1];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for a in 0..poly.len() {
        let (pa, sa) = poly[a];
        let (pb, _) = poly[(a + 1) % poly.len()];
        let (fa, fb) = (f(pa), f(pb));
        let cross = |t: f64| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        match (fa <= 0.0, fb <= 0.0) {
            (true, true) => out.push((pa, sa)),
            (true, false) => {
                out.push((pa, sa));
                out.push((cross(fa / (fa - fb)), side));
            }
            (false, true) => out.push((cross(fa / (fa - fb)), sa)),
            (false, false) => {}
        }
    }
    out
}

fn cell(seeds: &[[f64; 2]], i: usize) -> Polygon {
    let mut poly: Polygon = vec![
        ([0.0, 0.0], Side::Boundary),
        ([1.0, 0.0], Side::Boundary),
        ([1.0, 1.0], Side::Boundary),
        ([0.0, 1.0], Side::Boundary),
    ];
    let s = seeds[i];
    for (j, t) in seeds.iter().enumerate() {
        if j == i {
            continue;
        }
        let mid = [0.5 * (s[0] + t[0]), 0.5 * (s[1] + t[1])];
        let normal = [t[0] - s[0], t[1] - s[1]];
        poly = clip(&poly, mid, normal, Side::Seed(j));
    }
    poly
}

struct Diagram {
    edges: Vec<Segment>,
    interior_cells: usize,
}

/// Voronoi edges inside the unit square, or `None` when an edge is shorter
/// than [`MIN_EDGE`].
fn diagram(seeds: &[[f64; 2]]) -> Option<Diagram> {
    let mut edges = Vec::new();
    let mut interior_cells = 0;
    for i in 0..seeds.len() {
        let poly = cell(seeds, i);
        if poly.iter().all(|(_, s)| *s != Side::Boundary) {
            interior_cells += 1;
        }
        for a in 0..poly.len() {
            let (p, side) = poly[a];
            let (q, _) = poly[(a + 1) % poly.len()];
            let Side::Seed(j) = side else { continue };
            if (q[0] - p[0]).hypot(q[1] - p[1]) < MIN_EDGE {
                return None;
            }
            if j > i {
                edges.push([p, q]);
            }
        }
    }
    Some(Diagram { edges, interior_cells })
}

/// Points sampled along the Voronoi diagram of `n_seeds` uniform seeds in
/// the unit square, plus uniform background making up `bkg_frac` of the
/// set. `truth_cycle_count` counts the cells that do not touch the square's
/// boundary.
///
/// Seed layouts producing a Voronoi edge shorter than 1e-3 are redrawn.
///
/// # Panics
/// If `n_seeds < 3`, `bkg_frac` is outside `[0, 1)` or the noise is negative.
pub fn gen_voronoi_pattern(cfg: &VoronoiConfig, seed: u64) -> SyntheticSet {
    assert!(cfg.n_seeds >= 3, "at least three seeds are needed");
    assert!((0.0..1.0).contains(&cfg.bkg_frac), "bkg_frac must lie in [0, 1)");
    assert!(cfg.noise_sigma >= 0.0, "noise must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut redraws = 0;
    let diagram = loop {
        let seeds: Vec<[f64; 2]> = (0..cfg.n_seeds).map(|_| [rng.random(), rng.random()]).collect();
        if let Some(d) = diagram(&seeds) {
            break d;
        }
        redraws += 1;
        log::info!("degenerate Voronoi seed layout, redrawing ({redraws})");
        assert!(redraws < MAX_REDRAWS, "no usable seed layout after {MAX_REDRAWS} draws");
    };

    let n_pattern = cfg.samples_per_edge * diagram.edges.len();
    let mut points = sample_segments(&diagram.edges, n_pattern, cfg.noise_sigma, &mut rng);
    let mut labels = vec![PointLabel::Pattern; points.len()];
    push_background(&mut points, &mut labels, background_for(n_pattern, cfg.bkg_frac), &mut rng);
    let mut sigma = vec![cfg.noise_sigma; n_pattern];
    sigma.resize(points.len(), 0.0);
    SyntheticSet {
        points: to_array(&points),
        labels,
        truth_cycle_count: Some(diagram.interior_cells),
        truth_sigma: Some(sigma),
        truth_segments: diagram.edges,
    }
}
