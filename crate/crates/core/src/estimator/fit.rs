use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::likelihood::{NoiseCovarianceSet, Problem, SIGMA_EIG_FLOOR, SIGMA_JITTER};
use crate::data::RegimeDataset;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::poly::PolynomialEquation;
use crate::scm::Scm;

/// Search direction of the θ-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaStep {
    /// Steepest ascent.
    Gradient,
    /// Ascent along the gradient preconditioned by the (constant) curvature.
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub theta_step: ThetaStep,
    /// Stop the θ-step when an iteration gains less than this, per row.
    pub tol_inner_per_row: f64,
    /// Stop alternating when a round gains less than this, per row.
    pub tol_outer_per_row: f64,
    pub max_rounds: usize,
    pub max_inner: usize,
    pub armijo: f64,
    pub max_halvings: usize,
    pub jitter: f64,
    pub eig_floor: f64,
    /// `λ/2 ‖θ‖²` penalty on non-intercept terms; zero disables it.
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            theta_step: ThetaStep::Newton,
            tol_inner_per_row: 1e-12,
            tol_outer_per_row: 1e-8,
            max_rounds: 200,
            max_inner: 500,
            armijo: 1e-4,
            max_halvings: 60,
            jitter: SIGMA_JITTER,
            eig_floor: SIGMA_EIG_FLOOR,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// `max_rounds` reached; the trace is still monotone and usable.
    MaxRounds,
}

#[derive(Debug, Clone)]
pub struct FittedAnm {
    pub graph: CausalGraph,
    pub equations: Vec<PolynomialEquation>,
    pub noise_covs: NoiseCovarianceSet,
    /// Objective after initialisation and after every (θ, Σ) round.
    pub fit_trace: Vec<f64>,
    pub config_used: FitConfig,
    pub status: FitStatus,
    pub rounds: usize,
}

impl FittedAnm {
    pub fn outcome_equation(&self) -> &PolynomialEquation {
        &self.equations[self.graph.outcome()]
    }

    /// Fitted `f_Y` at the joint intervention `x` (one level per treatment).
    pub fn predict_joint_effect(&self, x: &[f64]) -> Result<f64> {
        predict_with(&self.graph, self.outcome_equation(), x)
    }

    /// Coefficients of every equation with parents, in node order.
    pub fn mechanism_parameters(&self) -> Vec<f64> {
        mechanism_parameters(&self.equations)
    }

    /// The fitted model as a generative SCM using the observational covariance.
    pub fn to_scm(&self) -> Result<Scm> {
        let sigma0 = self
            .noise_covs
            .sigma0()
            .ok_or_else(|| Error::InvalidRegime("no observational regime in the fit".into()))?;
        Scm::new(self.graph.clone(), self.equations.clone(), sigma0.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let sigma0 = self.noise_covs.sigma0().cloned().unwrap_or_else(|| {
            let n = self.graph.n_nodes();
            DMatrix::identity(n, n)
        });
        let scm = Scm::new(self.graph.clone(), self.equations.clone(), sigma0)?;
        let doc = FittedDoc {
            scm: scm.to_doc(),
            noise_covs: self.noise_covs.clone(),
            fit_trace: self.fit_trace.clone(),
            config_used: self.config_used.clone(),
            status: self.status,
            rounds: self.rounds,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FittedDoc = serde_json::from_str(s)?;
        let scm = Scm::from_doc(&doc.scm)?;
        Ok(Self {
            graph: scm.graph().clone(),
            equations: scm.equations().to_vec(),
            noise_covs: doc.noise_covs,
            fit_trace: doc.fit_trace,
            config_used: doc.config_used,
            status: doc.status,
            rounds: doc.rounds,
        })
    }
}

/// SCM JSON fields plus `noise_covs`, `fit_trace` and the fit settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FittedDoc {
    #[serde(flatten)]
    scm: crate::scm::ScmDoc,
    noise_covs: NoiseCovarianceSet,
    fit_trace: Vec<f64>,
    config_used: FitConfig,
    status: FitStatus,
    rounds: usize,
}

pub(crate) fn predict_with(graph: &CausalGraph, eq: &PolynomialEquation, x: &[f64]) -> Result<f64> {
    let k = graph.n_treatments();
    if x.len() != k {
        return Err(Error::Arity { expected: k, got: x.len() });
    }
    let vals: Vec<f64> = graph.parents(graph.outcome()).iter().map(|&p| x[p]).collect();
    Ok(eq.eval_unchecked(&vals))
}

pub fn mechanism_parameters(equations: &[PolynomialEquation]) -> Vec<f64> {
    equations
        .iter()
        .filter(|e| !e.parents.is_empty())
        .flat_map(|e| e.coefficients.iter().copied())
        .collect()
}

struct Objective<'a> {
    problem: &'a Problem,
    ridge: f64,
    mask: DVector<f64>,
}

impl Objective<'_> {
    fn new(problem: &Problem, ridge: f64) -> Objective<'_> {
        let mut mask = DVector::from_element(problem.layout.dim(), 1.0);
        for &o in &problem.layout.offsets {
            mask[o] = 0.0;
        }
        Objective { problem, ridge, mask }
    }

    fn value(&self, theta: &DVector<f64>, covs: &NoiseCovarianceSet) -> Result<f64> {
        let ll = self.problem.log_likelihood(theta, covs)?;
        if self.ridge == 0.0 {
            return Ok(ll);
        }
        Ok(ll - 0.5 * self.ridge * theta.component_mul(&self.mask).norm_squared())
    }

    fn gradient(&self, theta: &DVector<f64>, covs: &NoiseCovarianceSet) -> Result<DVector<f64>> {
        let g = self.problem.gradient(theta, covs)?;
        if self.ridge == 0.0 {
            return Ok(g);
        }
        Ok(g - theta.component_mul(&self.mask) * self.ridge)
    }

    fn neg_hessian(&self, covs: &NoiseCovarianceSet) -> Result<DMatrix<f64>> {
        let mut h = self.problem.neg_hessian(covs)?;
        if self.ridge != 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += self.ridge * self.mask[i];
            }
        }
        Ok(h)
    }
}

/// Maximises the objective over θ at fixed Σ by backtracking line search.
fn theta_step(
    obj: &Objective<'_>,
    theta: &mut DVector<f64>,
    covs: &NoiseCovarianceSet,
    cfg: &FitConfig,
    tol: f64,
    step_memory: &mut f64,
) -> Result<f64> {
    let mut value = obj.value(theta, covs)?;
    let precond = match cfg.theta_step {
        ThetaStep::Newton => obj.neg_hessian(covs)?.cholesky(),
        ThetaStep::Gradient => None,
    };
    for _ in 0..cfg.max_inner {
        let grad = obj.gradient(theta, covs)?;
        let dir = match &precond {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let slope = grad.dot(&dir);
        if !(slope > 0.0) {
            break;
        }
        let mut t = match cfg.theta_step {
            ThetaStep::Newton => 1.0,
            ThetaStep::Gradient => (*step_memory * 2.0).min(1e6),
        };
        let mut accepted = None;
        for _ in 0..cfg.max_halvings {
            let cand = &*theta + &dir * t;
            let v = obj.value(&cand, covs)?;
            if v >= value + cfg.armijo * t * slope {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, v)) = accepted else { break };
        if cfg.theta_step == ThetaStep::Gradient {
            *step_memory = t;
        }
        let gain = v - value;
        *theta = cand;
        value = v;
        if gain < tol {
            break;
        }
    }
    Ok(value)
}

/// Alternating maximisation of the combined log-likelihood: a θ-step by line
/// search at fixed covariances, then the closed-form covariance step.
pub fn fit(data: &[RegimeDataset], graph: &CausalGraph, config: &FitConfig) -> Result<FittedAnm> {
    let problem = Problem::new(graph, data)?;
    fit_problem(&problem, graph, config)
}

pub(crate) fn fit_problem(problem: &Problem, graph: &CausalGraph, config: &FitConfig) -> Result<FittedAnm> {
    if problem.groups.iter().all(|g| g.tag != crate::data::RegimeTag::Observational) {
        return Err(Error::InvalidRegime("an observational dataset is required".into()));
    }
    let n_total = problem.n_total() as f64;
    let tol_outer = config.tol_outer_per_row * n_total;
    let tol_inner = config.tol_inner_per_row * n_total;
    let obj = Objective::new(problem, config.ridge);

    let mut theta = problem.per_equation_least_squares()?;
    let mut covs = NoiseCovarianceSet::identity(problem.layout.n_nodes(), &problem.tags());
    let mut trace = vec![obj.value(&theta, &covs)?];
    let mut step_memory = 1e-3 / n_total;
    let mut status = FitStatus::MaxRounds;
    let mut rounds = 0;
    for _ in 0..config.max_rounds {
        rounds += 1;
        theta_step(&obj, &mut theta, &covs, config, tol_inner, &mut step_memory)?;
        covs = problem.sigma_closed_form(&theta, config.jitter, config.eig_floor)?;
        let value = obj.value(&theta, &covs)?;
        let gain = value - trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        trace.push(value);
        if gain < tol_outer {
            status = FitStatus::Converged;
            break;
        }
    }
    // Leave θ stationary for the covariances that are returned.
    let polished = theta_step(&obj, &mut theta, &covs, config, tol_inner, &mut step_memory)?;
    trace.push(polished);
    Ok(FittedAnm {
        graph: graph.clone(),
        equations: problem.layout.unflatten(&theta),
        noise_covs: covs,
        fit_trace: trace,
        config_used: config.clone(),
        status,
        rounds,
    })
}
