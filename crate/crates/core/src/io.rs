//! Point cloud ingestion and the JSON graph document.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::graph::{Edge, Graph};
use crate::model::{FitTrace, MixtureParams};
use crate::{Error, Result};

pub const GRAPH_SCHEMA: &str = "grmm.graph/1";

/// Whether the first row of a CSV file is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Header {
    Present,
    Absent,
    /// A header when any cell of the first row fails to parse as a number.
    Detect,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an `N x D` matrix from delimited text. Lines are numbered from 1.
pub fn read_point_cloud(path: &Path, delimiter: u8, header: Header) -> Result<Array2<f64>> {
    let file = File::open(path)?;
    parse_point_cloud(BufReader::new(file), path, delimiter, header)
}

pub fn parse_point_cloud<R: Read>(reader: R, path: &Path, delimiter: u8, header: Header) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if first {
            first = false;
            let skip = match header {
                Header::Present => true,
                Header::Absent => false,
                Header::Detect => record.iter().any(|c| c.parse::<f64>().is_err()),
            };
            if skip {
                width = Some(record.len());
                continue;
            }
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {w} columns, found {}", record.len()),
                ));
            }
            _ => width = Some(record.len()),
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: `{cell}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", col + 1)));
            }
            values.push(v);
        }
    }
    let d = width.unwrap_or(0);
    if values.is_empty() || d == 0 {
        return Err(parse_err(path, 0, "no data rows"));
    }
    let n = values.len() / d;
    Ok(Array2::from_shape_vec((n, d), values).expect("row widths checked"))
}

/// Writes points as CSV with `x0, x1, ...` headers.
pub fn write_point_cloud(path: &Path, points: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let header: Vec<String> = (0..points.ncols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(csv_io)?;
    for row in points.rows() {
        w.write_record(row.iter().map(|v| format_f64(*v))).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal that reads back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub index: usize,
    pub position: Vec<f64>,
    pub sigma2: f64,
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_log_posterior: Option<f64>,
    pub log_posterior: Vec<f64>,
    pub graph_edge_counts: Vec<usize>,
}

impl From<&FitTrace> for TraceSummary {
    fn from(t: &FitTrace) -> Self {
        TraceSummary {
            iterations: t.iterations,
            converged: t.converged,
            final_log_posterior: t.log_posterior.last().copied(),
            log_posterior: t.log_posterior.clone(),
            graph_edge_counts: t.graph_edge_counts.clone(),
        }
    }
}

/// Serialized fit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub alpha: f64,
    pub rho: f64,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
}

impl GraphDocument {
    pub fn new(params: &MixtureParams, g: &Graph, trace: Option<&FitTrace>) -> Result<Self> {
        params.validate()?;
        if g.node_count() != params.components() {
            return Err(Error::Shape {
                context: "graph node count",
                expected: params.components(),
                found: g.node_count(),
            });
        }
        Ok(GraphDocument {
            schema: GRAPH_SCHEMA.to_owned(),
            k: params.components(),
            d: params.dim(),
            alpha: params.alpha,
            rho: params.rho,
            nodes: (0..params.components())
                .map(|c| NodeRecord {
                    index: c,
                    position: params.mu.row(c).to_vec(),
                    sigma2: params.sigma2[c],
                    pi: params.pi[c],
                })
                .collect(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    i: e.i,
                    j: e.j,
                    weight: e.weight,
                })
                .collect(),
            trace: trace.map(TraceSummary::from),
        })
    }

    pub fn to_model(&self) -> Result<(MixtureParams, Graph)> {
        if self.schema != GRAPH_SCHEMA {
            return Err(Error::Document(format!(
                "unsupported schema `{}`, expected `{GRAPH_SCHEMA}`",
                self.schema
            )));
        }
        if self.nodes.len() != self.k {
            return Err(Error::Document(format!("K = {} but {} node records", self.k, self.nodes.len())));
        }
        let mut mu = Array2::zeros((self.k, self.d));
        let mut sigma2 = Array1::zeros(self.k);
        let mut pi = Array1::zeros(self.k);
        let mut filled = vec![false; self.k];
        for n in &self.nodes {
            if n.index >= self.k || filled[n.index] {
                return Err(Error::Document(format!("bad or repeated node index {}", n.index)));
            }
            if n.position.len() != self.d {
                return Err(Error::Document(format!(
                    "node {} has {} coordinates, expected {}",
                    n.index,
                    n.position.len(),
                    self.d
                )));
            }
            filled[n.index] = true;
            mu.row_mut(n.index).assign(&Array1::from(n.position.clone()));
            sigma2[n.index] = n.sigma2;
            pi[n.index] = n.pi;
        }
        let params = MixtureParams {
            mu,
            sigma2,
            pi,
            alpha: self.alpha,
            rho: self.rho,
        };
        params.validate().map_err(|e| Error::Document(e.to_string()))?;
        let g = Graph::from_edges(self.k, self.edges.iter().map(|e| Edge::new(e.i, e.j, e.weight)))
            .map_err(|e| Error::Document(e.to_string()))?;
        if g.edge_count() != self.edges.len() {
            return Err(Error::Document("repeated edge records".into()));
        }
        Ok((params, g))
    }
}

pub fn write_graph(params: &MixtureParams, g: &Graph, trace: Option<&FitTrace>, path: &Path) -> Result<()> {
    let doc = GraphDocument::new(params, g, trace)?;
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Document(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_graph_document(path: &Path) -> Result<GraphDocument> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Document(format!("{}: {e}", path.display())))
}

pub fn read_graph(path: &Path) -> Result<(MixtureParams, Graph)> {
    read_graph_document(path)?.to_model()
}
