//! MAP expectation-maximization for the graph-regularized mixture.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{log_sum_exp, sq_dist, support_volume, BackgroundModel, VolumeMethod};
use crate::graph::{average_graph, edge_frequencies, mst, neighbor_mean_variance, EdgeFrequencyMatrix, Graph};
use crate::linalg::{solve_spd_with_jitter, SymmetricSparse};
use crate::model::{
    joint_log_density, log_posterior, log_prior, FitTrace, Hyperparams, MixtureParams, Responsibilities, TopologyPolicy,
};
use crate::{par, Error, Result};

const JITTERS: [f64; 3] = [1e-10, 1e-8, 1e-6];
const INIT_NEIGHBOURS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum InitCentroids {
    /// One node per data point; requires `K = N`.
    AllPoints,
    /// `K` distinct data points drawn uniformly.
    RandomSubset { seed: u64 },
    Provided(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphPrior {
    Mst,
    /// Spanning tree plus the edges seen in more than `threshold` of
    /// `resamples` subsampled spanning trees.
    AverageMst {
        resamples: usize,
        ratio: f64,
        threshold: f64,
        seed: u64,
        from: AverageFrom,
    },
    Provided(Graph),
}

/// Centroids the edge frequencies of the average prior are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageFrom {
    /// The initial centroids.
    Initial,
    /// Centroids regularized by a fit under the spanning-tree prior.
    Regularized,
}

impl GraphPrior {
    pub fn average_defaults(seed: u64) -> Self {
        GraphPrior::AverageMst {
            resamples: 500,
            ratio: 0.75,
            threshold: 0.35,
            seed,
            from: AverageFrom::Regularized,
        }
    }
}

/// Which centroids the variance update measures spread around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceCentering {
    /// Centroids from the same M-step.
    Updated,
    /// Centroids from before the M-step.
    Previous,
}

/// How a fit moves from one iterate to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Take the closed-form M-step as is.
    ClosedForm,
    /// Take the closed-form M-step when it does not lower the log
    /// posterior; otherwise update each block in turn, halving its step
    /// until the expected complete-data log posterior does not drop.
    Safeguarded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub init_mu: InitCentroids,
    /// Initial variance; the mean squared distance to the five nearest
    /// neighbours when `None`.
    pub init_variance: Option<f64>,
    pub init_alpha: f64,
    pub graph_prior: GraphPrior,
    pub hp: Hyperparams,
    pub variance_centering: VarianceCentering,
    pub update_rule: UpdateRule,
    pub volume_method: VolumeMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            init_mu: InitCentroids::RandomSubset { seed: 0 },
            init_variance: None,
            init_alpha: 0.10,
            graph_prior: GraphPrior::Mst,
            hp: Hyperparams::default(),
            variance_centering: VarianceCentering::Updated,
            update_rule: UpdateRule::Safeguarded,
            volume_method: VolumeMethod::ConvexHull,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if !(0.0..1.0).contains(&self.init_alpha) {
            return Err(Error::Config(format!(
                "initial background weight must lie in [0, 1), got {}",
                self.init_alpha
            )));
        }
        if let Some(v) = self.init_variance {
            if !(v >= self.hp.variance_floor && v.is_finite()) {
                return Err(Error::Config(format!(
                    "initial variance {v} is below the variance floor {}",
                    self.hp.variance_floor
                )));
            }
        }
        if let GraphPrior::AverageMst {
            resamples,
            ratio,
            threshold,
            ..
        } = self.graph_prior
        {
            if resamples == 0 {
                return Err(Error::Config("resample count must be at least 1".into()));
            }
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::Config(format!("subsample ratio must lie in (0, 1], got {ratio}")));
            }
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!("frequency threshold must lie in [0, 1], got {threshold}")));
            }
        } else if matches!(self.hp.topology, TopologyPolicy::RefreshAverage(_)) {
            return Err(Error::Config("average refresh needs the average spanning-tree prior".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointLabel {
    Pattern,
    Background,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub params: MixtureParams,
    pub graph: Graph,
    pub trace: FitTrace,
    pub background: BackgroundModel,
    /// Initial variance actually used.
    pub sigma0_sq: f64,
    pub frequencies: Option<EdgeFrequencyMatrix>,
}

fn check_dims(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Result<()> {
    if x.ncols() != params.dim() {
        return Err(Error::Shape {
            context: "data dimension",
            expected: params.dim(),
            found: x.ncols(),
        });
    }
    Ok(())
}

/// E-step, also returning the log-likelihood of the current parameters.
pub fn e_step_with_likelihood(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Result<(Responsibilities, f64)> {
    check_dims(x, params)?;
    let k = params.components();
    let mut joint = joint_log_density(x, params);
    let mut lse = Array1::zeros(x.nrows());
    for (i, mut row) in joint.rows_mut().into_iter().enumerate() {
        let s = row.as_slice_mut().expect("row of a standard layout array");
        let l = log_sum_exp(s);
        if !l.is_finite() {
            return Err(Error::numerical(None, format!("point {i} has zero density under every component")));
        }
        for v in s.iter_mut() {
            *v = (*v - l).exp();
        }
        lse[i] = l;
    }
    let p_bkg = joint.column(k).to_owned();
    let p = joint.slice_move(ndarray::s![.., ..k]);
    Ok((Responsibilities { p, p_bkg }, lse.iter().sum()))
}

pub fn e_step(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Result<Responsibilities> {
    e_step_with_likelihood(x, params).map(|(r, _)| r)
}

pub fn m_step_alpha(resp: &Responsibilities) -> f64 {
    resp.p_bkg.mean().unwrap_or(0.0)
}

/// Weights shrunk towards the uniform share of `1 - alpha`.
pub fn m_step_pi(resp: &Responsibilities, alpha: f64, hp: &Hyperparams) -> Array1<f64> {
    let n = resp.p.nrows() as f64;
    let k = resp.p.ncols() as f64;
    let lp = hp.lambda_pi;
    let target = lp * (1.0 - alpha) / k;
    resp.counts().mapv(|c| (c / n + target) / (1.0 + lp))
}

/// Solves `(Gamma S^-1 + 2 lambda_mu L) mu = S^-1 R^T X` with `S` the
/// variances in `params`.
pub fn m_step_mu(
    x: ArrayView2<'_, f64>,
    resp: &Responsibilities,
    params: &MixtureParams,
    g: &Graph,
    hp: &Hyperparams,
) -> Result<Array2<f64>> {
    check_dims(x, params)?;
    let k = params.components();
    if g.node_count() != k {
        return Err(Error::Shape {
            context: "graph node count",
            expected: k,
            found: g.node_count(),
        });
    }
    let counts = resp.counts();
    let mut a = SymmetricSparse::new(k);
    for c in 0..k {
        a.add_diag(c, counts[c] / params.sigma2[c]);
    }
    if hp.lambda_mu > 0.0 {
        let w = 2.0 * hp.lambda_mu;
        for e in g.edges() {
            a.add_diag(e.i, w);
            a.add_diag(e.j, w);
            a.add_symmetric(e.i, e.j, -w);
        }
    }
    let mut rhs = resp.p.t().dot(&x);
    for (c, mut row) in rhs.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| v / params.sigma2[c]);
    }
    let mu = solve_spd_with_jitter(&a, rhs.view(), &JITTERS).map_err(|components| Error::Solver { components })?;
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(None, "centroid update produced non-finite values"));
    }
    Ok(mu)
}

/// Weighted squared spread `sum_i p_ik ||x_i - mu_k||^2` per node.
fn weighted_spread(x: ArrayView2<'_, f64>, resp: &Responsibilities, mu: ArrayView2<'_, f64>) -> Vec<f64> {
    par::map_indexed(mu.nrows(), |c| {
        let m = mu.row(c);
        let m = m.as_slice();
        x.rows()
            .into_iter()
            .zip(resp.p.column(c))
            .map(|(xi, &p)| {
                let d = match (xi.as_slice(), m) {
                    (Some(a), Some(b)) => sq_dist(a, b),
                    _ => xi.iter().zip(mu.row(c)).map(|(a, b)| (a - b) * (a - b)).sum(),
                };
                p * d
            })
            .sum()
    })
}

/// Closed-form variance update around `mu`, shrunk towards the neighbour
/// mean of `variances`, then floored.
pub fn m_step_sigma(
    x: ArrayView2<'_, f64>,
    resp: &Responsibilities,
    mu: ArrayView2<'_, f64>,
    g: &Graph,
    variances: ArrayView1<'_, f64>,
    hp: &Hyperparams,
) -> Array1<f64> {
    let d = x.ncols() as f64;
    let counts = resp.counts();
    let spread = weighted_spread(x, resp, mu);
    let ls = 4.0 * hp.lambda_sigma;
    Array1::from_shape_fn(mu.nrows(), |c| {
        let num = spread[c] + ls * neighbor_mean_variance(g, variances, c);
        let den = d * counts[c] + ls;
        let s = if den > 0.0 { num / den } else { variances[c] };
        s.max(hp.variance_floor)
    })
}

/// One closed-form M-step in the order alpha, pi, mu, sigma.
pub fn m_step(
    x: ArrayView2<'_, f64>,
    resp: &Responsibilities,
    params: &MixtureParams,
    g: &Graph,
    opts: &FitOptions,
) -> Result<MixtureParams> {
    let hp = &opts.hp;
    let alpha = m_step_alpha(resp);
    let pi = m_step_pi(resp, alpha, hp);
    let mu = m_step_mu(x, resp, params, g, hp)?;
    let centre = match opts.variance_centering {
        VarianceCentering::Updated => mu.view(),
        VarianceCentering::Previous => params.mu.view(),
    };
    let sigma2 = m_step_sigma(x, resp, centre, g, params.sigma2.view(), hp);
    Ok(MixtureParams {
        mu,
        sigma2,
        pi,
        alpha,
        rho: params.rho,
    })
}

/// Mean squared distance from each point to its `k` nearest neighbours.
pub fn mean_knn_sq_distance(x: ArrayView2<'_, f64>, k: usize) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::EmptyInput("nearest-neighbour scale needs two points"));
    }
    let k = k.min(n - 1);
    let per_point = par::map_indexed(n, |i| {
        let xi = x.row(i);
        let mut best = vec![f64::INFINITY; k];
        for (j, xj) in x.rows().into_iter().enumerate() {
            if i == j {
                continue;
            }
            let d: f64 = xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best[k - 1] {
                let pos = best.partition_point(|&b| b <= d);
                best.insert(pos, d);
                best.pop();
            }
        }
        best.iter().sum::<f64>() / k as f64
    });
    Ok(per_point.iter().sum::<f64>() / n as f64)
}

/// Starting parameters and the background model for `x`.
pub fn initialize(x: ArrayView2<'_, f64>, opts: &FitOptions) -> Result<(MixtureParams, BackgroundModel)> {
    opts.validate()?;
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::EmptyInput("fitting needs at least two points"));
    }
    if d == 0 {
        return Err(Error::EmptyInput("points have zero dimensions"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite coordinate in point cloud".into()));
    }
    let k = opts.hp.components;
    let mu = match &opts.init_mu {
        InitCentroids::AllPoints => {
            if k != n {
                return Err(Error::Config(format!(
                    "initializing on all points needs K = N, got K = {k} and N = {n}"
                )));
            }
            x.to_owned()
        }
        InitCentroids::RandomSubset { seed } => {
            if k > n {
                return Err(Error::Config(format!("cannot draw {k} centroids from {n} points")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            x.select(Axis(0), &idx)
        }
        InitCentroids::Provided(m) => {
            if m.dim() != (k, d) {
                return Err(Error::Config(format!(
                    "provided centroids are {}x{}, expected {k}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite provided centroid".into()));
            }
            m.clone()
        }
    };
    let sigma0 = match opts.init_variance {
        Some(v) => v,
        None => mean_knn_sq_distance(x, INIT_NEIGHBOURS)?.max(opts.hp.variance_floor),
    };
    let background = support_volume(x, opts.volume_method)?;
    let alpha = opts.init_alpha;
    let params = MixtureParams {
        mu,
        sigma2: Array1::from_elem(k, sigma0),
        pi: Array1::from_elem(k, (1.0 - alpha) / k as f64),
        alpha,
        rho: background.density,
    };
    Ok((params, background))
}

struct Topology {
    policy: TopologyPolicy,
    frequencies: Option<(EdgeFrequencyMatrix, f64)>,
}

impl Topology {
    fn mst_only(policy: TopologyPolicy) -> Self {
        Topology {
            policy,
            frequencies: None,
        }
    }

    fn averaged(
        policy: TopologyPolicy,
        mu: ArrayView2<'_, f64>,
        resamples: usize,
        ratio: f64,
        threshold: f64,
        seed: u64,
    ) -> Result<(Self, Graph)> {
        if matches!(policy, TopologyPolicy::RefreshMst(_)) {
            log::warn!("spanning-tree refresh discards the frequent edges of the average prior");
        }
        let freq = edge_frequencies(mu, resamples, ratio, seed)?;
        let g = average_graph(mu, &freq, threshold)?;
        Ok((
            Topology {
                policy,
                frequencies: Some((freq, threshold)),
            },
            g,
        ))
    }

    fn refresh(&self, iteration: usize, mu: ArrayView2<'_, f64>) -> Result<Option<Graph>> {
        let Some(period) = self.policy.period() else {
            return Ok(None);
        };
        if iteration % period != 0 {
            return Ok(None);
        }
        match (&self.policy, &self.frequencies) {
            (TopologyPolicy::RefreshAverage(_), Some((freq, m))) => Ok(Some(average_graph(mu, freq, *m)?)),
            _ => Ok(Some(mst(mu)?)),
        }
    }
}

fn same_edges(a: &Graph, b: &Graph) -> bool {
    a.edge_count() == b.edge_count() && a.edges().iter().zip(b.edges()).all(|(e, f)| e.i == f.i && e.j == f.j)
}

struct Run<'a> {
    x: ArrayView2<'a, f64>,
    opts: &'a FitOptions,
    params: MixtureParams,
    graph: Graph,
    trace: FitTrace,
    t: usize,
}

impl Run<'_> {
    fn abort(&self, err: Error) -> Error {
        Error::FitAborted {
            iteration: self.t,
            source: Box::new(with_iteration(err, self.t)),
            trace: Box::new(self.trace.clone()),
        }
    }

    /// Iterates under `topology` for at most `max_iters` M-steps. The first
    /// state of a stage is never tested for convergence.
    fn stage(&mut self, topology: &Topology, max_iters: usize) -> Result<()> {
        let hp = &self.opts.hp;
        let start = self.t;
        let mut fresh = true;
        loop {
            let (resp, ll) = e_step_with_likelihood(self.x, &self.params).map_err(|e| self.abort(e))?;
            let lp = ll + log_prior(&self.params, &self.graph, hp).map_err(|e| self.abort(e))?;
            if !lp.is_finite() {
                return Err(self.abort(Error::numerical(None, "log posterior is not finite")));
            }
            self.trace.record(lp, self.graph.edge_count());
            if !fresh && self.trace.increments.last().is_some_and(|&r| r < hp.epsilon) {
                self.trace.converged = true;
                return Ok(());
            }
            fresh = false;
            if self.t - start == max_iters {
                self.trace.converged = false;
                return Ok(());
            }
            self.t += 1;
            self.params = match self.opts.update_rule {
                UpdateRule::ClosedForm => m_step(self.x, &resp, &self.params, &self.graph, self.opts),
                UpdateRule::Safeguarded => {
                    safeguarded_m_step(self.x, &resp, &self.params, &self.graph, self.opts, lp).map(|(p, h)| {
                        self.trace.backtracks += h;
                        p
                    })
                }
            }
            .map_err(|e| self.abort(e))?;
            let changed = match topology.refresh(self.t, self.params.mu.view()).map_err(|e| self.abort(e))? {
                Some(g) => {
                    let changed = !same_edges(&g, &self.graph);
                    self.graph = g;
                    changed
                }
                None => false,
            };
            self.trace.graph_changed.push(changed);
            log::debug!("iteration {}: log posterior {lp:.6}, alpha {:.4}", self.t, self.params.alpha);
        }
    }
}

/// Runs MAP EM until the log-posterior increment drops below `epsilon` or
/// `max_iters` M-steps have been taken.
///
/// With an average spanning-tree prior built from regularized centroids,
/// the fit first runs under a refreshed spanning tree, then measures edge
/// frequencies on the resulting centroids and continues under the average
/// graph; each stage may take up to `max_iters` M-steps.
pub fn fit(x: ArrayView2<'_, f64>, opts: &FitOptions) -> Result<Fitted> {
    let (params, background) = initialize(x, opts)?;
    let sigma0_sq = params.sigma2[0];
    let hp = &opts.hp;
    let mu0 = params.mu.view();
    let (topology, graph, warm_up) = match &opts.graph_prior {
        GraphPrior::Mst => (Topology::mst_only(hp.topology), mst(mu0)?, false),
        GraphPrior::Provided(g) => {
            if g.node_count() != hp.components {
                return Err(Error::Shape {
                    context: "provided graph node count",
                    expected: hp.components,
                    found: g.node_count(),
                });
            }
            if hp.topology != TopologyPolicy::Fixed {
                log::warn!("provided graph will be replaced at the first topology refresh");
            }
            (Topology::mst_only(hp.topology), g.reweighted(mu0)?, false)
        }
        GraphPrior::AverageMst {
            resamples,
            ratio,
            threshold,
            seed,
            from: AverageFrom::Initial,
        } => {
            let (t, g) = Topology::averaged(hp.topology, mu0, *resamples, *ratio, *threshold, *seed)?;
            (t, g, false)
        }
        GraphPrior::AverageMst {
            from: AverageFrom::Regularized,
            ..
        } => (Topology::mst_only(TopologyPolicy::RefreshMst(1)), mst(mu0)?, true),
    };

    let mut run = Run {
        x,
        opts,
        params,
        graph,
        trace: FitTrace::default(),
        t: 0,
    };
    run.stage(&topology, hp.max_iters)?;
    let topology = if warm_up {
        let GraphPrior::AverageMst {
            resamples,
            ratio,
            threshold,
            seed,
            ..
        } = opts.graph_prior
        else {
            unreachable!("warm-up only runs for the average prior")
        };
        let (topology, g) = Topology::averaged(hp.topology, run.params.mu.view(), resamples, ratio, threshold, seed)
            .map_err(|e| run.abort(e))?;
        run.graph = g;
        run.stage(&topology, hp.max_iters)?;
        topology
    } else {
        topology
    };

    run.trace.iterations = run.t;
    let graph = run.graph.reweighted(run.params.mu.view())?;
    Ok(Fitted {
        params: run.params,
        graph,
        trace: run.trace,
        background,
        sigma0_sq,
        frequencies: topology.frequencies.map(|(f, _)| f),
    })
}

const MAX_HALVINGS: usize = 10;

/// Expected complete-data log-likelihood under `resp` plus the log prior.
/// Raising it never lowers the log posterior.
fn surrogate(
    x: ArrayView2<'_, f64>,
    resp: &Responsibilities,
    params: &MixtureParams,
    g: &Graph,
    hp: &Hyperparams,
) -> f64 {
    let d = x.ncols() as f64;
    let k = params.components();
    let per_node = par::map_indexed(k, |c| {
        let s2 = params.sigma2[c];
        let log_norm = params.pi[c].ln() - 0.5 * d * (2.0 * std::f64::consts::PI * s2).ln();
        let m = params.mu.row(c);
        x.rows()
            .into_iter()
            .zip(resp.p.column(c))
            .filter(|(_, &p)| p > 0.0)
            .map(|(xi, &p)| {
                let sq: f64 = xi.iter().zip(m.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                p * (log_norm - 0.5 * sq / s2)
            })
            .sum::<f64>()
    });
    let log_bkg = (params.alpha * params.rho).ln();
    let bkg: f64 = resp.p_bkg.iter().filter(|&&p| p > 0.0).map(|p| p * log_bkg).sum();
    let total = per_node.iter().sum::<f64>() + bkg;
    match log_prior(params, g, hp) {
        Ok(lp) if total.is_finite() => total + lp,
        _ => f64::NEG_INFINITY,
    }
}

/// Closed-form M-step when it does not lower the log posterior `current`.
/// Otherwise the blocks (alpha, pi), mu and sigma are updated in turn, each
/// step halved until the surrogate does not drop; variances are accepted
/// node by node. Returns the new parameters and the number of halvings.
fn safeguarded_m_step(
    x: ArrayView2<'_, f64>,
    resp: &Responsibilities,
    params: &MixtureParams,
    g: &Graph,
    opts: &FitOptions,
    current: f64,
) -> Result<(MixtureParams, usize)> {
    let hp = &opts.hp;
    let next = m_step(x, resp, params, g, opts)?;
    if matches!(log_posterior(x, &next, g, hp), Ok(v) if v >= current) {
        return Ok((next, 0));
    }
    let f = |p: &MixtureParams| surrogate(x, resp, p, g, hp);
    let mut cur = params.clone();
    let mut best = f(&cur);
    let mut halvings = 0;
    let mut step = |cur: &mut MixtureParams, best: &mut f64, full: MixtureParams| {
        let mut eta = 1.0;
        for h in 0..=MAX_HALVINGS {
            let cand = if h == 0 { full.clone() } else { blend(cur, &full, eta) };
            let v = f(&cand);
            if v >= *best {
                *cur = cand;
                *best = v;
                halvings += h;
                return;
            }
            eta *= 0.5;
        }
        halvings += MAX_HALVINGS;
    };

    let alpha = m_step_alpha(resp);
    let full = MixtureParams {
        pi: m_step_pi(resp, alpha, hp),
        alpha,
        ..cur.clone()
    };
    step(&mut cur, &mut best, full);

    let full = MixtureParams {
        mu: m_step_mu(x, resp, &cur, g, hp)?,
        ..cur.clone()
    };
    step(&mut cur, &mut best, full);

    let centre = match opts.variance_centering {
        VarianceCentering::Updated => cur.mu.view(),
        VarianceCentering::Previous => params.mu.view(),
    };
    let target = m_step_sigma(x, resp, centre, g, params.sigma2.view(), hp);
    let local = SigmaTerms {
        spread: weighted_spread(x, resp, cur.mu.view()),
        counts: resp.counts(),
        dim: x.ncols() as f64,
        g,
        lambda_sigma: hp.lambda_sigma,
    };
    for c in 0..cur.components() {
        let old = cur.sigma2[c];
        let base = local.value(c, &mut cur.sigma2, old);
        let mut eta = 1.0;
        let mut taken = false;
        for h in 0..=MAX_HALVINGS {
            let s = old + eta * (target[c] - old);
            if local.value(c, &mut cur.sigma2, s) >= base {
                cur.sigma2[c] = s;
                halvings += h;
                taken = true;
                break;
            }
            eta *= 0.5;
        }
        if !taken {
            cur.sigma2[c] = old;
            halvings += MAX_HALVINGS;
        }
    }
    Ok((cur, halvings))
}

/// Terms of the surrogate that depend on a single variance.
struct SigmaTerms<'a> {
    spread: Vec<f64>,
    counts: Array1<f64>,
    dim: f64,
    g: &'a Graph,
    lambda_sigma: f64,
}

impl SigmaTerms<'_> {
    /// Sets `var[c] = s` and returns the terms involving it.
    fn value(&self, c: usize, var: &mut Array1<f64>, s: f64) -> f64 {
        var[c] = s;
        let data = -0.5 * self.dim * self.counts[c] * (2.0 * std::f64::consts::PI * s).ln() - 0.5 * self.spread[c] / s;
        if self.lambda_sigma == 0.0 {
            return data;
        }
        let term = |j: usize| var[j].ln() + neighbor_mean_variance(self.g, var.view(), j) / var[j];
        let prior = term(c) + self.g.neighbors(c).iter().map(|&j| term(j)).sum::<f64>();
        data - self.lambda_sigma * prior
    }
}

fn blend(old: &MixtureParams, new: &MixtureParams, eta: f64) -> MixtureParams {
    let mix = |a: f64, b: f64| a + eta * (b - a);
    MixtureParams {
        mu: &old.mu + &((&new.mu - &old.mu) * eta),
        sigma2: ndarray::Zip::from(&old.sigma2).and(&new.sigma2).map_collect(|&a, &b| mix(a, b)),
        pi: ndarray::Zip::from(&old.pi).and(&new.pi).map_collect(|&a, &b| mix(a, b)),
        alpha: mix(old.alpha, new.alpha),
        rho: old.rho,
    }
}

fn with_iteration(e: Error, t: usize) -> Error {
    match e {
        Error::Numerical { iteration: None, message } => Error::Numerical {
            iteration: Some(t),
            message,
        },
        other => other,
    }
}

/// Labels each point as pattern when its total Gaussian responsibility
/// exceeds its background responsibility.
pub fn classify_points(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Result<Vec<PointLabel>> {
    let resp = e_step(x, params)?;
    Ok(resp
        .p
        .rows()
        .into_iter()
        .zip(resp.p_bkg.iter())
        .map(|(row, &b)| {
            if row.sum() > b {
                PointLabel::Pattern
            } else {
                PointLabel::Background
            }
        })
        .collect())
}
