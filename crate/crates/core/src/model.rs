//! Mixture parameters, hyperparameters and the MAP objective.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::geometry::{log_gauss, log_sum_exp};
use crate::graph::{neighbor_mean_variance, smoothness, Graph};
use crate::{par, Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

/// Parameters of the Gaussian mixture with uniform background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    /// Centroids, one row per node.
    pub mu: Array2<f64>,
    /// Spherical variances.
    pub sigma2: Array1<f64>,
    pub pi: Array1<f64>,
    /// Weight of the uniform background.
    pub alpha: f64,
    /// Background density, the inverse of the support volume.
    pub rho: f64,
}

impl MixtureParams {
    pub fn components(&self) -> usize {
        self.mu.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.components();
        if k == 0 {
            return Err(Error::EmptyInput("mixture with zero components"));
        }
        for (context, found) in [("sigma2 length", self.sigma2.len()), ("pi length", self.pi.len())] {
            if found != k {
                return Err(Error::Shape {
                    context,
                    expected: k,
                    found,
                });
            }
        }
        if self.sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Domain("variances must be positive and finite".into()));
        }
        if self.pi.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain("mixing weights must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("background weight {} outside [0, 1]", self.alpha)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Domain(format!("background density {} is not positive", self.rho)));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite centroid".into()));
        }
        Ok(())
    }
}

/// When the graph is rebuilt during a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyPolicy {
    Fixed,
    /// Recompute the spanning tree every `n` iterations.
    RefreshMst(usize),
    /// Re-union the stored frequent edges with a fresh spanning tree every
    /// `n` iterations.
    RefreshAverage(usize),
}

impl TopologyPolicy {
    pub fn period(&self) -> Option<usize> {
        match *self {
            TopologyPolicy::Fixed => None,
            TopologyPolicy::RefreshMst(n) | TopologyPolicy::RefreshAverage(n) => Some(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Strength of the graph smoothness penalty on centroids.
    pub lambda_mu: f64,
    /// Pull of each variance towards its neighbours' mean.
    pub lambda_sigma: f64,
    /// Pull of the mixing weights towards uniform.
    pub lambda_pi: f64,
    pub components: usize,
    /// Stop when the log-posterior increment drops below this.
    pub epsilon: f64,
    pub max_iters: usize,
    pub topology: TopologyPolicy,
    pub variance_floor: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda_mu: 0.0,
            lambda_sigma: 10.0,
            lambda_pi: 1.0,
            components: 100,
            epsilon: 1e-4,
            max_iters: 500,
            topology: TopologyPolicy::RefreshMst(1),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_mu", self.lambda_mu),
            ("lambda_sigma", self.lambda_sigma),
            ("lambda_pi", self.lambda_pi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.components == 0 {
            return Err(Error::Config("component count must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config("variance floor must be positive".into()));
        }
        if self.topology.period() == Some(0) {
            return Err(Error::Config("topology refresh period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Posterior membership probabilities from an E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    /// `N x K` Gaussian responsibilities.
    pub p: Array2<f64>,
    pub p_bkg: Array1<f64>,
}

impl Responsibilities {
    /// Column sums `sum_i p_ik`.
    pub fn counts(&self) -> Array1<f64> {
        self.p.sum_axis(Axis(0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Log posterior before each M-step, starting with the initial state.
    pub log_posterior: Vec<f64>,
    /// `log_posterior[t] - log_posterior[t - 1]`.
    pub increments: Vec<f64>,
    /// Edge count of the graph in force at each recorded state.
    pub graph_edge_counts: Vec<usize>,
    /// Whether the topology changed after each M-step.
    pub graph_changed: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// Step halvings taken by the safeguarded update rule.
    pub backtracks: usize,
}

impl FitTrace {
    pub(crate) fn record(&mut self, value: f64, edges: usize) {
        if let Some(&last) = self.log_posterior.last() {
            self.increments.push(value - last);
        }
        self.log_posterior.push(value);
        self.graph_edge_counts.push(edges);
    }

    /// Most negative increment, if any.
    pub fn worst_increment(&self) -> Option<f64> {
        self.increments.iter().copied().reduce(f64::min)
    }
}

fn check_data(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Result<()> {
    if x.ncols() != params.dim() {
        return Err(Error::Shape {
            context: "data dimension",
            expected: params.dim(),
            found: x.ncols(),
        });
    }
    Ok(())
}

/// Per-point joint log densities: `N x (K + 1)` with the background last.
pub(crate) fn joint_log_density(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Array2<f64> {
    let (n, d) = x.dim();
    let k = params.components();
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();
    let log_bkg = (params.alpha * params.rho).ln();
    let mut out = Array2::zeros((n, k + 1));
    let data = out.as_slice_mut().expect("fresh array is contiguous");
    par::for_each_row_mut(data, k + 1, |i, row| {
        let xi = x.row(i);
        for c in 0..k {
            let m = params.mu.row(c);
            let sq: f64 = xi.iter().zip(m.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            row[c] = log_pi[c] + log_gauss(sq, params.sigma2[c], d);
        }
        row[k] = log_bkg;
    });
    out
}

/// `sum_i log(sum_k pi_k N(x_i; mu_k, sigma2_k) + alpha rho)`.
pub fn log_likelihood(x: ArrayView2<'_, f64>, params: &MixtureParams) -> Result<f64> {
    check_data(x, params)?;
    let joint = joint_log_density(x, params);
    let total: f64 = joint
        .rows()
        .into_iter()
        .map(|r| log_sum_exp(r.as_slice().expect("row of a standard layout array")))
        .sum();
    if !total.is_finite() {
        return Err(Error::Numerical {
            iteration: None,
            message: format!("log-likelihood evaluated to {total}"),
        });
    }
    Ok(total)
}

/// Sum of the three prior log-densities with constants dropped.
pub fn log_prior(params: &MixtureParams, g: &Graph, hp: &Hyperparams) -> Result<f64> {
    let k = params.components();
    if g.node_count() != k {
        return Err(Error::Shape {
            context: "graph node count",
            expected: k,
            found: g.node_count(),
        });
    }
    if params.sigma2.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("variances must be positive".into()));
    }
    let mut total = 0.0;
    if hp.lambda_mu != 0.0 {
        total -= 0.5 * hp.lambda_mu * smoothness(params.mu.view(), g)?;
    }
    if hp.lambda_sigma != 0.0 {
        let s: f64 = (0..k)
            .map(|c| {
                let s2 = params.sigma2[c];
                s2.ln() + neighbor_mean_variance(g, params.sigma2.view(), c) / s2
            })
            .sum();
        total -= hp.lambda_sigma * s;
    }
    if hp.lambda_pi != 0.0 {
        let target = (1.0 - params.alpha) / k as f64;
        let s: f64 = params.pi.iter().map(|p| (target - p).powi(2)).sum();
        total -= 0.5 * hp.lambda_pi * s;
    }
    Ok(total)
}

pub fn log_posterior(
    x: ArrayView2<'_, f64>,
    params: &MixtureParams,
    g: &Graph,
    hp: &Hyperparams,
) -> Result<f64> {
    Ok(log_likelihood(x, params)? + log_prior(params, g, hp)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use ndarray::array;

    fn single(mu: f64, sigma2: f64, alpha: f64, rho: f64) -> MixtureParams {
        MixtureParams {
            mu: array![[mu]],
            sigma2: array![sigma2],
            pi: array![1.0 - alpha],
            alpha,
            rho,
        }
    }

    fn no_priors() -> Hyperparams {
        Hyperparams {
            lambda_mu: 0.0,
            lambda_sigma: 0.0,
            lambda_pi: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn likelihood_at_the_mean() {
        let ll = log_likelihood(array![[0.0]].view(), &single(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!((ll - (-0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
    }

    #[test]
    fn pure_background() {
        let mut p = single(0.0, 1.0, 1.0, 2.0);
        p.pi[0] = 0.0;
        let x = array![[0.1], [0.3], [5.0]];
        let ll = log_likelihood(x.view(), &p).unwrap();
        assert!((ll - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_components_match_direct_summation() {
        let p = MixtureParams {
            mu: array![[0.0, 0.0], [1.0, 0.5]],
            sigma2: array![0.3, 0.7],
            pi: array![0.5, 0.3],
            alpha: 0.2,
            rho: 0.25,
        };
        let x = array![[0.1, 0.2], [0.9, 0.4], [-0.5, 1.0], [2.0, 2.0], [0.4, -0.3]];
        let mut direct = 0.0;
        for r in x.rows() {
            let mut dens = p.alpha * p.rho;
            for c in 0..2 {
                let sq = (r[0] - p.mu[[c, 0]]).powi(2) + (r[1] - p.mu[[c, 1]]).powi(2);
                dens += p.pi[c] * (-sq / (2.0 * p.sigma2[c])).exp()
                    / (2.0 * std::f64::consts::PI * p.sigma2[c]);
            }
            direct += dens.ln();
        }
        assert!((log_likelihood(x.view(), &p).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn prior_examples() {
        let p = MixtureParams {
            mu: array![[0.0], [1.0]],
            sigma2: array![1.0, 1.0],
            pi: array![0.5, 0.5],
            alpha: 0.0,
            rho: 1.0,
        };
        let g = Graph::from_edges(2, [Edge::new(0, 1, 1.0)]).unwrap();
        assert_eq!(log_prior(&p, &g, &no_priors()).unwrap(), 0.0);

        let hp = Hyperparams {
            lambda_mu: 1.0,
            ..no_priors()
        };
        assert!((log_prior(&p, &g, &hp).unwrap() + 1.0).abs() < 1e-15);

        let hp = Hyperparams {
            lambda_sigma: 1.0,
            ..no_priors()
        };
        let one = single(0.0, 1.0, 0.0, 1.0);
        assert!((log_prior(&one, &Graph::empty(1), &hp).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_is_likelihood_plus_prior() {
        let p = MixtureParams {
            mu: array![[0.0], [1.0], [2.5]],
            sigma2: array![0.5, 1.0, 2.0],
            pi: array![0.2, 0.3, 0.4],
            alpha: 0.1,
            rho: 0.2,
        };
        let g = Graph::from_edges(3, [Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.25)]).unwrap();
        let x = array![[0.3], [1.7], [2.0], [-1.0]];
        let hp = Hyperparams {
            lambda_mu: 2.0,
            lambda_sigma: 3.0,
            lambda_pi: 4.0,
            ..Default::default()
        };
        let lp = log_posterior(x.view(), &p, &g, &hp).unwrap();
        let sum = log_likelihood(x.view(), &p).unwrap() + log_prior(&p, &g, &hp).unwrap();
        assert!((lp - sum).abs() < 1e-12);
        assert_eq!(
            log_posterior(x.view(), &p, &g, &no_priors()).unwrap(),
            log_likelihood(x.view(), &p).unwrap()
        );
    }

    #[test]
    fn prior_rejects_bad_variance_and_shape() {
        let mut p = single(0.0, 1.0, 0.0, 1.0);
        assert!(log_prior(&p, &Graph::empty(2), &no_priors()).is_err());
        p.sigma2[0] = 0.0;
        assert!(matches!(log_prior(&p, &Graph::empty(1), &no_priors()), Err(Error::Domain(_))));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let bad = Hyperparams {
            epsilon: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = Hyperparams {
            lambda_pi: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
