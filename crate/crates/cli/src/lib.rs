//! `grmm` command line: generate synthetic sets, fit principal graphs,
//! classify points, inspect edge frequencies and plot fits.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use grmm::datagen::{gen_arc, gen_segment, gen_three_branch, gen_voronoi_pattern, ThreeBranchConfig, VoronoiConfig};
use grmm::em::{classify_points, fit, mean_knn_sq_distance, FitOptions, GraphPrior, InitCentroids, PointLabel};
use grmm::graph::edge_frequencies;
use grmm::io::{format_f64, read_graph, read_graph_document, read_point_cloud, write_graph, write_point_cloud, Header};
use grmm::model::TopologyPolicy;
use grmm::svg::{plot_svg, SvgOptions};
use ndarray::Array2;

/// Usage or configuration problem.
const EXIT_USAGE: i32 = 2;
/// Failure while running a valid command.
const EXIT_FAILURE: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "grmm", version, about = "Principal graphs from point clouds with graph-regularized mixtures")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic point set and its labels as CSV.
    Generate(GenerateArgs),
    /// Fit a principal graph to a CSV point cloud.
    Fit(FitArgs),
    /// Label points as pattern or background under a fitted graph.
    Classify(ClassifyArgs),
    /// Edge frequencies over subsampled spanning trees.
    EdgeFreq(EdgeFreqArgs),
    /// Render a fitted graph as SVG.
    Plot(PlotArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Dataset {
    ThreeBranch,
    Voronoi,
    Segment,
    Arc,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(value_enum)]
    dataset: Dataset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; labels go to `<stem>.labels.csv` beside it.
    #[arg(short, long)]
    output: PathBuf,
    /// Total points (three-branch) or pattern points (segment, arc).
    #[arg(short, long)]
    n: Option<usize>,
    /// Background fraction of the output.
    #[arg(long)]
    bkg_frac: Option<f64>,
    /// Noise standard deviation (voronoi, segment, arc).
    #[arg(long)]
    noise: Option<f64>,
    /// Voronoi seed points.
    #[arg(long, default_value_t = 12)]
    cells: usize,
    /// Mean points per Voronoi edge.
    #[arg(long, default_value_t = 60)]
    per_edge: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HeaderArg {
    Auto,
    Yes,
    No,
}

impl From<HeaderArg> for Header {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => Header::Detect,
            HeaderArg::Yes => Header::Present,
            HeaderArg::No => Header::Absent,
        }
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Field delimiter of the input CSV.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Whether the input has a header row.
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    header: HeaderArg,
}

impl InputArgs {
    fn read(&self, path: &Path) -> Result<Array2<f64>, CliError> {
        if !path.exists() {
            return Err(CliError::usage(format!("input file {} does not exist", path.display())));
        }
        if !self.delimiter.is_ascii() {
            return Err(CliError::usage("delimiter must be a single ASCII character"));
        }
        Ok(read_point_cloud(path, self.delimiter as u8, self.header.into())?)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PriorArg {
    Mst,
    Avg,
}

#[derive(Args, Debug)]
struct FitArgs {
    input: PathBuf,
    #[command(flatten)]
    input_args: InputArgs,
    /// Graph document to write; defaults to `<stem>.graph.json` beside the input.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Number of graph nodes.
    #[arg(short = 'K', long = "components", default_value_t = 100)]
    k: usize,
    /// Smoothness strength, or `auto` for 5 / sigma0^2.
    #[arg(long, default_value = "auto")]
    lambda_mu: String,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    lambda_sigma: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda_pi: f64,
    /// Initial node standard deviation; the root mean squared distance to
    /// the five nearest neighbours when omitted.
    #[arg(long, allow_negative_numbers = true)]
    sigma0: Option<f64>,
    /// Initial background weight.
    #[arg(long, default_value_t = 0.10, allow_negative_numbers = true)]
    alpha0: f64,
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, value_enum, default_value_t = PriorArg::Mst)]
    prior: PriorArg,
    /// Spanning trees drawn for the average prior.
    #[arg(long = "avg-B", default_value_t = 500)]
    avg_b: usize,
    #[arg(long, default_value_t = 0.75, allow_negative_numbers = true)]
    avg_ratio: f64,
    #[arg(long, default_value_t = 0.35, allow_negative_numbers = true)]
    avg_threshold: f64,
    /// `fixed` or `refresh:N`; `refresh:1` for the spanning tree prior and
    /// `fixed` for the average prior by default.
    #[arg(long)]
    topology: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also render the fit as SVG (2D only).
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Also write fit-time point labels.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    input: PathBuf,
    graph: PathBuf,
    #[command(flatten)]
    input_args: InputArgs,
    /// Labels file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EdgeFreqArgs {
    /// Node positions: a CSV file or a graph document (`.json`).
    positions: PathBuf,
    #[command(flatten)]
    input_args: InputArgs,
    #[arg(long = "avg-B", default_value_t = 500)]
    avg_b: usize,
    #[arg(long, default_value_t = 0.75, allow_negative_numbers = true)]
    avg_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Sparse frequency matrix as `i,j,frequency` rows.
    #[arg(short, long)]
    output: PathBuf,
    /// Histogram as `upper_edge,count` rows.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    graph: PathBuf,
    /// Data points to draw under the graph, coloured by label.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    input_args: InputArgs,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 800.0)]
    size: f64,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<grmm::Error> for CliError {
    fn from(e: grmm::Error) -> Self {
        let code = match e {
            grmm::Error::Config(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: format!("{e:#}"),
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let result = match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Fit(a) => run_fit(&a),
        Command::Classify(a) => classify(&a),
        Command::EdgeFreq(a) => edge_freq(&a),
        Command::Plot(a) => plot(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("grmm: error: {}", e.message);
            e.code
        }
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_labels(path: Option<&Path>, labels: &[PointLabel]) -> anyhow::Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "label")?;
    for l in labels {
        writeln!(out, "{}", label_name(*l))?;
    }
    out.flush()?;
    Ok(())
}

fn label_name(l: PointLabel) -> &'static str {
    match l {
        PointLabel::Pattern => "pattern",
        PointLabel::Background => "background",
    }
}

fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    if let Some(f) = a.bkg_frac {
        if !(0.0..1.0).contains(&f) {
            return Err(CliError::usage(format!("--bkg-frac must lie in [0, 1), got {f}")));
        }
    }
    if let Some(s) = a.noise {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::usage(format!("--noise must be nonnegative, got {s}")));
        }
    }
    let set = match a.dataset {
        Dataset::ThreeBranch => {
            let mut cfg = ThreeBranchConfig::default();
            cfg.n = a.n.unwrap_or(cfg.n);
            cfg.bkg_frac = a.bkg_frac.unwrap_or(cfg.bkg_frac);
            if cfg.n == 0 {
                return Err(CliError::usage("-n must be positive"));
            }
            gen_three_branch(&cfg, a.seed)
        }
        Dataset::Voronoi => {
            let mut cfg = VoronoiConfig {
                n_seeds: a.cells,
                samples_per_edge: a.per_edge,
                ..VoronoiConfig::default()
            };
            cfg.bkg_frac = a.bkg_frac.unwrap_or(cfg.bkg_frac);
            cfg.noise_sigma = a.noise.unwrap_or(cfg.noise_sigma);
            if cfg.n_seeds < 3 {
                return Err(CliError::usage("--cells must be at least 3"));
            }
            gen_voronoi_pattern(&cfg, a.seed)
        }
        Dataset::Segment => gen_segment(a.n.unwrap_or(500), a.noise.unwrap_or(0.01), a.bkg_frac.unwrap_or(0.1), a.seed),
        Dataset::Arc => gen_arc(a.n.unwrap_or(500), a.noise.unwrap_or(0.01), a.bkg_frac.unwrap_or(0.1), a.seed),
    };
    write_point_cloud(&a.output, &set.points)?;
    write_labels(Some(&sidecar(&a.output, "labels.csv")), &set.labels)?;
    let cycles = set.truth_cycle_count.map(|c| format!(", {c} cycles")).unwrap_or_default();
    println!(
        "wrote {} points ({} background{cycles}) to {}",
        set.points.nrows(),
        set.background_count(),
        a.output.display()
    );
    Ok(())
}

fn parse_topology(s: &str, prior: PriorArg) -> Result<TopologyPolicy, CliError> {
    if s == "fixed" {
        return Ok(TopologyPolicy::Fixed);
    }
    let n = s
        .strip_prefix("refresh:")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::usage(format!("--topology must be `fixed` or `refresh:N` with N >= 1, got `{s}`")))?;
    Ok(match prior {
        PriorArg::Mst => TopologyPolicy::RefreshMst(n),
        PriorArg::Avg => TopologyPolicy::RefreshAverage(n),
    })
}

fn fit_options(a: &FitArgs, x: &Array2<f64>) -> Result<FitOptions, CliError> {
    let variance = match a.sigma0 {
        Some(s) if !(s > 0.0 && s.is_finite()) => {
            return Err(CliError::usage(format!("--sigma0 must be positive, got {s}")));
        }
        Some(s) => s * s,
        None => mean_knn_sq_distance(x.view(), 5)?,
    };
    let lambda_mu = match a.lambda_mu.as_str() {
        "auto" => 5.0 / variance,
        v => v
            .parse::<f64>()
            .map_err(|_| CliError::usage(format!("--lambda-mu must be a number or `auto`, got `{v}`")))?,
    };
    let topology = match &a.topology {
        Some(t) => parse_topology(t, a.prior)?,
        None => match a.prior {
            PriorArg::Mst => TopologyPolicy::RefreshMst(1),
            PriorArg::Avg => TopologyPolicy::Fixed,
        },
    };
    let graph_prior = match a.prior {
        PriorArg::Mst => GraphPrior::Mst,
        PriorArg::Avg => match GraphPrior::average_defaults(a.seed) {
            GraphPrior::AverageMst { from, seed, .. } => GraphPrior::AverageMst {
                resamples: a.avg_b,
                ratio: a.avg_ratio,
                threshold: a.avg_threshold,
                seed,
                from,
            },
            other => other,
        },
    };
    let mut opts = FitOptions {
        init_mu: InitCentroids::RandomSubset { seed: a.seed },
        init_variance: Some(variance),
        init_alpha: a.alpha0,
        graph_prior,
        ..FitOptions::default()
    };
    opts.hp.components = a.k;
    opts.hp.lambda_mu = lambda_mu;
    opts.hp.lambda_sigma = a.lambda_sigma;
    opts.hp.lambda_pi = a.lambda_pi;
    opts.hp.epsilon = a.epsilon;
    opts.hp.max_iters = a.max_iters;
    opts.hp.topology = topology;
    opts.validate()?;
    Ok(opts)
}

fn run_fit(a: &FitArgs) -> Result<(), CliError> {
    let x = a.input_args.read(&a.input)?;
    let opts = fit_options(a, &x)?;
    log::info!("fitting {} points in {}D with K = {}", x.nrows(), x.ncols(), a.k);
    let fitted = fit(x.view(), &opts)?;
    let out = a.output.clone().unwrap_or_else(|| sidecar(&a.input, "graph.json"));
    write_graph(&fitted.params, &fitted.graph, Some(&fitted.trace), &out)?;
    if let Some(svg) = &a.svg {
        let labels = classify_points(x.view(), &fitted.params)?;
        plot_svg(Some(x.view()), Some(&labels), &fitted.params, &fitted.graph, svg, &SvgOptions::default())?;
    }
    if let Some(path) = &a.labels {
        write_labels(Some(path), &classify_points(x.view(), &fitted.params)?)?;
    }
    println!(
        "{} iterations ({}), alpha {:.4}, {} edges, {} cycles -> {}",
        fitted.trace.iterations,
        if fitted.trace.converged { "converged" } else { "iteration limit" },
        fitted.params.alpha,
        fitted.graph.edge_count(),
        grmm::graph::cycle_count(&fitted.graph),
        out.display()
    );
    Ok(())
}

fn read_document(path: &Path) -> Result<(grmm::model::MixtureParams, grmm::graph::Graph), CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!("graph document {} does not exist", path.display())));
    }
    Ok(read_graph(path)?)
}

fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let x = a.input_args.read(&a.input)?;
    let (params, _) = read_document(&a.graph)?;
    let labels = classify_points(x.view(), &params)?;
    write_labels(a.output.as_deref(), &labels)?;
    Ok(())
}

fn edge_freq(a: &EdgeFreqArgs) -> Result<(), CliError> {
    let positions = if a.positions.extension().is_some_and(|e| e == "json") {
        if !a.positions.exists() {
            return Err(CliError::usage(format!("{} does not exist", a.positions.display())));
        }
        read_graph_document(&a.positions)?.to_model()?.0.mu
    } else {
        a.input_args.read(&a.positions)?
    };
    let freq = edge_frequencies(positions.view(), a.avg_b, a.avg_ratio, a.seed)?;
    let write = |path: &Path, header: &str, rows: Vec<String>| -> anyhow::Result<()> {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
        Ok(())
    };
    write(
        &a.output,
        "i,j,frequency",
        freq.entries().map(|(i, j, f)| format!("{i},{j},{}", format_f64(f))).collect(),
    )?;
    let hist = freq.histogram(a.bins);
    if let Some(path) = &a.histogram {
        write(
            path,
            "upper_edge,count",
            hist.upper_edges
                .iter()
                .zip(&hist.counts)
                .map(|(e, c)| format!("{},{c}", format_f64(*e)))
                .collect(),
        )?;
    }
    println!(
        "{} distinct edges over {} trees on {} nodes",
        freq.observed_edges(),
        freq.resamples(),
        freq.node_count()
    );
    Ok(())
}

fn plot(a: &PlotArgs) -> Result<(), CliError> {
    let (params, g) = read_document(&a.graph)?;
    let x = a.data.as_ref().map(|p| a.input_args.read(p)).transpose()?;
    let labels = x.as_ref().map(|x| classify_points(x.view(), &params)).transpose()?;
    if !(a.size > 0.0 && a.size.is_finite()) {
        return Err(CliError::usage("--size must be positive"));
    }
    let opts = SvgOptions {
        size: a.size,
        ..SvgOptions::default()
    };
    plot_svg(x.as_ref().map(|x| x.view()), labels.as_deref(), &params, &g, &a.output, &opts)?;
    Ok(())
}
