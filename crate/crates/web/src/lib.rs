//! WebAssembly bindings for the browser demo. Every exported function
//! takes and returns JSON strings; errors surface as JS exceptions.

use grmm::datagen::{gen_arc, gen_segment, gen_three_branch, gen_voronoi_pattern, ThreeBranchConfig, VoronoiConfig};
use grmm::em::{classify_points, fit, mean_knn_sq_distance, FitOptions, GraphPrior, InitCentroids, PointLabel};
use grmm::graph::{cycle_count, edge_frequencies};
use grmm::model::TopologyPolicy;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PointSet {
    pub points: Vec<[f64; 2]>,
    pub background: Vec<bool>,
    pub truth_cycles: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct FitRequest {
    pub points: Vec<[f64; 2]>,
    pub k: usize,
    /// Multiple of `1 / sigma0^2`.
    pub smoothing: f64,
    pub average: bool,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct FitResult {
    pub nodes: Vec<[f64; 2]>,
    pub sigma: Vec<f64>,
    pub edges: Vec<[usize; 2]>,
    pub background: Vec<bool>,
    pub alpha: f64,
    pub cycles: usize,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub upper_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub distinct_edges: usize,
}

fn to_array(points: &[[f64; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 2), |(i, j)| points[i][j])
}

fn rows(a: &Array2<f64>) -> Vec<[f64; 2]> {
    a.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn generate_json(dataset: &str, seed: u64) -> Result<String, String> {
    let set = match dataset {
        "three-branch" => gen_three_branch(
            &ThreeBranchConfig {
                n: 1200,
                ..Default::default()
            },
            seed,
        ),
        "voronoi" => gen_voronoi_pattern(
            &VoronoiConfig {
                n_seeds: 8,
                samples_per_edge: 40,
                ..Default::default()
            },
            seed,
        ),
        "segment" => gen_segment(400, 0.01, 0.1, seed),
        "arc" => gen_arc(400, 0.01, 0.1, seed),
        other => return Err(format!("unknown dataset `{other}`")),
    };
    json(&PointSet {
        points: rows(&set.points),
        background: set.labels.iter().map(|l| *l == PointLabel::Background).collect(),
        truth_cycles: set.truth_cycle_count,
    })
}

pub fn fit_json(request: &str) -> Result<String, String> {
    let req: FitRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let x = to_array(&req.points);
    let sigma0_sq = mean_knn_sq_distance(x.view(), 5).map_err(|e| e.to_string())?;
    let mut opts = FitOptions {
        init_mu: InitCentroids::RandomSubset { seed: req.seed },
        init_variance: Some(sigma0_sq),
        ..FitOptions::default()
    };
    opts.hp.components = req.k;
    opts.hp.lambda_mu = req.smoothing / sigma0_sq;
    opts.hp.max_iters = 200;
    if req.average {
        opts.graph_prior = GraphPrior::AverageMst {
            resamples: 100,
            ratio: 0.75,
            threshold: 0.35,
            seed: req.seed,
            from: grmm::em::AverageFrom::Regularized,
        };
        opts.hp.topology = TopologyPolicy::Fixed;
    }
    let f = fit(x.view(), &opts).map_err(|e| e.to_string())?;
    let labels = classify_points(x.view(), &f.params).map_err(|e| e.to_string())?;
    json(&FitResult {
        nodes: rows(&f.params.mu),
        sigma: f.params.sigma2.iter().map(|v| v.sqrt()).collect(),
        edges: f.graph.edges().iter().map(|e| [e.i, e.j]).collect(),
        background: labels.iter().map(|l| *l == PointLabel::Background).collect(),
        alpha: f.params.alpha,
        cycles: cycle_count(&f.graph),
        iterations: f.trace.iterations,
    })
}

pub fn histogram_json(nodes: &str, resamples: usize, ratio: f64, seed: u64, bins: usize) -> Result<String, String> {
    let nodes: Vec<[f64; 2]> = serde_json::from_str(nodes).map_err(|e| e.to_string())?;
    let freq = edge_frequencies(to_array(&nodes).view(), resamples, ratio, seed).map_err(|e| e.to_string())?;
    let h = freq.histogram(bins);
    json(&Histogram {
        upper_edges: h.upper_edges,
        counts: h.counts,
        distinct_edges: freq.observed_edges(),
    })
}

#[wasm_bindgen]
pub fn generate(dataset: &str, seed: u32) -> Result<String, JsValue> {
    generate_json(dataset, seed.into()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fitGraph)]
pub fn fit_graph(request: &str) -> Result<String, JsValue> {
    fit_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = edgeHistogram)]
pub fn edge_histogram(nodes: &str, resamples: u32, ratio: f64, seed: u32, bins: u32) -> Result<String, JsValue> {
    histogram_json(nodes, resamples as usize, ratio, seed.into(), bins as usize).map_err(|e| JsValue::from_str(&e))
}
