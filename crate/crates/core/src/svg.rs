//! SVG rendering of 2D fits: data points, graph edges and 1-sigma circles.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use crate::em::PointLabel;
use crate::graph::Graph;
use crate::model::MixtureParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    /// Side of the square canvas in pixels.
    pub size: f64,
    pub margin: f64,
    pub point_radius: f64,
    pub sigma_circles: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            size: 800.0,
            margin: 20.0,
            point_radius: 1.5,
            sigma_circles: true,
        }
    }
}

struct Frame {
    min: [f64; 2],
    scale: f64,
    size: f64,
    margin: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>, opts: &SvgOptions) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        if !min[0].is_finite() {
            min = [0.0, 0.0];
            max = [1.0, 1.0];
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]);
        let span = if span > 0.0 { span } else { 1.0 };
        Frame {
            min,
            scale: (opts.size - 2.0 * opts.margin) / span,
            size: opts.size,
            margin: opts.margin,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            self.margin + (p[0] - self.min[0]) * self.scale,
            self.size - self.margin - (p[1] - self.min[1]) * self.scale,
        )
    }
}

/// Renders the fit as an SVG document. Background-labelled points are drawn
/// in grey when `labels` is given.
pub fn render_svg(
    x: Option<ArrayView2<'_, f64>>,
    labels: Option<&[PointLabel]>,
    params: &MixtureParams,
    g: &Graph,
    opts: &SvgOptions,
) -> Result<String> {
    if params.dim() != 2 {
        return Err(Error::UnsupportedDimension(params.dim()));
    }
    if let Some(x) = x {
        if x.ncols() != 2 {
            return Err(Error::UnsupportedDimension(x.ncols()));
        }
        if let Some(l) = labels {
            if l.len() != x.nrows() {
                return Err(Error::Shape {
                    context: "label count",
                    expected: x.nrows(),
                    found: l.len(),
                });
            }
        }
    }
    let node = |k: usize| [params.mu[[k, 0]], params.mu[[k, 1]]];
    let data_pts = x.into_iter().flat_map(|x| x.rows().into_iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>());
    let frame = Frame::fit(data_pts.chain((0..params.components()).map(node)), opts);

    let mut s = String::new();
    let size = opts.size;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(x) = x {
        let _ = writeln!(s, r#"<g id="points" stroke="none">"#);
        for (i, r) in x.rows().into_iter().enumerate() {
            let (px, py) = frame.map([r[0], r[1]]);
            let fill = match labels.map(|l| l[i]) {
                Some(PointLabel::Background) => "#bbbbbb",
                _ => "#222222",
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="{:.2}" fill="{fill}"/>"#,
                opts.point_radius
            );
        }
        let _ = writeln!(s, "</g>");
    }
    if opts.sigma_circles {
        let _ = writeln!(s, r##"<g id="sigma" fill="#4a90d9" fill-opacity="0.15" stroke="#4a90d9" stroke-opacity="0.4">"##);
        for k in 0..params.components() {
            let (px, py) = frame.map(node(k));
            let r = params.sigma2[k].sqrt() * frame.scale;
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="{r:.2}"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, r##"<g id="edges" stroke="#c0392b" stroke-width="1.5">"##);
    for e in g.edges() {
        let (x1, y1) = frame.map(node(e.i));
        let (x2, y2) = frame.map(node(e.j));
        let _ = writeln!(s, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="nodes" fill="#c0392b">"##);
    for k in 0..params.components() {
        let (px, py) = frame.map(node(k));
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5"/>"#);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn plot_svg(
    x: Option<ArrayView2<'_, f64>>,
    labels: Option<&[PointLabel]>,
    params: &MixtureParams,
    g: &Graph,
    path: &Path,
    opts: &SvgOptions,
) -> Result<()> {
    let svg = render_svg(x, labels, params, g, opts)?;
    std::fs::write(path, svg)?;
    Ok(())
}
