use grmm_web::{fit_json, generate_json, histogram_json, PointSet};

#[test]
fn generated_sets_are_deterministic() {
    let a = generate_json("voronoi", 3).unwrap();
    assert_eq!(a, generate_json("voronoi", 3).unwrap());
    let set: PointSet = serde_json::from_str(&a).unwrap();
    assert_eq!(set.points.len(), set.background.len());
    assert!(set.truth_cycles.is_some());
    assert!(generate_json("spiral", 0).is_err());
}

#[test]
fn fit_returns_a_tree_over_the_requested_nodes() {
    let set: PointSet = serde_json::from_str(&generate_json("arc", 1).unwrap()).unwrap();
    let request = serde_json::json!({ "points": set.points, "k": 20, "smoothing": 5.0, "average": false, "seed": 1 });
    let out: serde_json::Value = serde_json::from_str(&fit_json(&request.to_string()).unwrap()).unwrap();
    assert_eq!(out["nodes"].as_array().unwrap().len(), 20);
    assert_eq!(out["edges"].as_array().unwrap().len(), 19);
    assert_eq!(out["cycles"], 0);
    assert_eq!(out["background"].as_array().unwrap().len(), set.points.len());
}

#[test]
fn bad_requests_are_errors() {
    assert!(fit_json("{").is_err());
    let request = serde_json::json!({ "points": [[0.0, 0.0], [1.0, 1.0]], "k": 5, "smoothing": 1.0, "average": false, "seed": 0 });
    assert!(fit_json(&request.to_string()).is_err());
}

#[test]
fn histogram_counts_sum_to_distinct_edges() {
    let nodes: Vec<[f64; 2]> = (0..30).map(|i| [(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]).collect();
    let out = histogram_json(&serde_json::to_string(&nodes).unwrap(), 40, 0.75, 2, 10).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let total: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, v["distinct_edges"].as_u64().unwrap());
}
