//! Discrete offloading transport problem and its entropic solver.
//!
//! Pending tasks form the source measure, compute nodes the target measure,
//! and the normalized placement cost is the ground cost. The Kantorovich
//! relaxation is solved with Sinkhorn scaling; the returned potentials give
//! a dual objective whose gap to the primal cost certifies the solve.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{decision_cost, OffloadDecision, SystemParams, Task};

/// Below this epsilon the solver iterates on log-potentials.
pub const LOG_DOMAIN_THRESHOLD: f64 = 0.05;

const MASS_TOLERANCE: f64 = 1e-9;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyProblem("measure has no support"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("measure weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("measure weights sum to {total}, expected 1")));
        }
        Ok(DiscreteMeasure {
            weights: Array1::from(weights),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyProblem("measure has no support"));
        }
        Ok(DiscreteMeasure {
            weights: Array1::from_elem(n, 1.0 / n as f64),
        })
    }

    /// Normalizes arbitrary nonnegative masses.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptyProblem("measure has no support"));
        }
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) || !(total > 0.0) {
            return Err(invalid("masses must be finite, >= 0 and not all zero"));
        }
        Ok(DiscreteMeasure {
            weights: masses.iter().map(|m| m / total).collect(),
        })
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }
}

/// A compute node offered as a transport target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub kind: OffloadDecision,
    pub speed_hz: f64,
    pub capacity_weight: f64,
}

impl NodeSpec {
    /// The three node kinds of `params`, with capacity proportional to speed.
    pub fn defaults(params: &SystemParams) -> Vec<NodeSpec> {
        [
            (OffloadDecision::Local, params.f_end_hz),
            (OffloadDecision::Edge, params.f_edge_hz),
            (OffloadDecision::Cloud, params.f_cloud_hz),
        ]
        .into_iter()
        .map(|(kind, speed_hz)| NodeSpec {
            kind,
            speed_hz,
            capacity_weight: speed_hz,
        })
        .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub cost: Array2<f64>,
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub epsilon: f64,
}

impl TransportProblem {
    pub fn new(
        cost: Array2<f64>,
        source: DiscreteMeasure,
        target: DiscreteMeasure,
        epsilon: f64,
    ) -> Result<Self> {
        let (n, m) = cost.dim();
        if n == 0 || m == 0 {
            return Err(Error::EmptyProblem("cost matrix has no entries"));
        }
        if n != source.support_size() || m != target.support_size() {
            return Err(invalid(format!(
                "cost matrix is {n}x{m} but measures have {} and {} points",
                source.support_size(),
                target.support_size()
            )));
        }
        if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(invalid("cost entries must be finite and >= 0"));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(TransportProblem {
            cost,
            source,
            target,
            epsilon,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.cost.dim()
    }
}

/// Builds the task-to-node problem: uniform mass over tasks, capacity-weighted
/// mass over nodes, normalized placement cost as ground cost.
pub fn build_problem(
    tasks: &[Task],
    nodes: &[NodeSpec],
    params: &SystemParams,
    r_u: f64,
    epsilon: f64,
) -> Result<TransportProblem> {
    if tasks.is_empty() {
        return Err(Error::EmptyProblem("no tasks"));
    }
    if nodes.is_empty() {
        return Err(Error::EmptyProblem("no nodes"));
    }
    let node_params: Vec<SystemParams> = nodes
        .iter()
        .map(|node| {
            let mut p = *params;
            match node.kind {
                OffloadDecision::Local => p.f_end_hz = node.speed_hz,
                OffloadDecision::Edge => p.f_edge_hz = node.speed_hz,
                OffloadDecision::Cloud => p.f_cloud_hz = node.speed_hz,
            }
            p
        })
        .collect();
    let mut cost = Array2::zeros((tasks.len(), nodes.len()));
    for (i, task) in tasks.iter().enumerate() {
        for (j, node) in nodes.iter().enumerate() {
            // Local cost is normalized against the device itself, so it stays 1.
            let p = if node.kind == OffloadDecision::Local {
                params
            } else {
                &node_params[j]
            };
            cost[[i, j]] = decision_cost(task, node.kind, p, r_u)?.normalized_cost;
        }
    }
    let capacities: Vec<f64> = nodes.iter().map(|n| n.capacity_weight).collect();
    TransportProblem::new(
        cost,
        DiscreteMeasure::uniform(tasks.len())?,
        DiscreteMeasure::from_masses(&capacities)?,
        epsilon,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
    pub dual_source: Option<Array1<f64>>,
    pub dual_target: Option<Array1<f64>>,
    pub marginal_residual: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Marginal residual after each full scaling sweep.
    pub residual_trace: Vec<f64>,
}

impl TransportPlan {
    /// Wraps an externally supplied coupling (no dual potentials).
    pub fn from_coupling(coupling: Array2<f64>, problem: &TransportProblem) -> Result<Self> {
        if coupling.dim() != problem.dim() {
            return Err(invalid("coupling shape does not match problem"));
        }
        let marginal_residual = marginal_residual(&coupling, problem);
        Ok(TransportPlan {
            coupling,
            dual_source: None,
            dual_target: None,
            marginal_residual,
            iterations_used: 0,
            converged: false,
            residual_trace: Vec::new(),
        })
    }
}

fn marginal_residual(coupling: &Array2<f64>, problem: &TransportProblem) -> f64 {
    let rows = coupling.sum_axis(Axis(1));
    let cols = coupling.sum_axis(Axis(0));
    let row_err = (&rows - problem.source.weights())
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    let col_err = (&cols - problem.target.weights())
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    row_err.max(col_err)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic OT by alternating marginal scaling.
///
/// Stops once both marginals are within `tolerance` (max-norm) or after
/// `max_iter` sweeps; in the latter case the plan is returned with
/// `converged = false`.
pub fn sinkhorn(problem: &TransportProblem, max_iter: usize, tolerance: f64) -> Result<TransportPlan> {
    if max_iter == 0 {
        return Err(invalid("max_iter must be >= 1"));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(invalid("tolerance must be > 0"));
    }
    let a = problem.source.weights();
    let b = problem.target.weights();
    if a.iter().chain(b.iter()).any(|w| *w <= 0.0) {
        return Err(invalid("sinkhorn requires strictly positive marginals"));
    }
    if problem.epsilon < LOG_DOMAIN_THRESHOLD {
        sinkhorn_log(problem, max_iter, tolerance)
    } else {
        sinkhorn_linear(problem, max_iter, tolerance)
    }
}

fn sinkhorn_log(problem: &TransportProblem, max_iter: usize, tolerance: f64) -> Result<TransportPlan> {
    let (n, m) = problem.dim();
    let eps = problem.epsilon;
    let cost = &problem.cost;
    let log_a = problem.source.weights().mapv(f64::ln);
    let log_b = problem.target.weights().mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut coupling = Array2::<f64>::zeros((n, m));
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let row = cost.row(i);
            f[i] = eps * (log_a[i] - log_sum_exp((0..m).map(|j| (g[j] - row[j]) / eps)));
        }
        for j in 0..m {
            let col = cost.column(j);
            g[j] = eps * (log_b[j] - log_sum_exp((0..n).map(|i| (f[i] - col[i]) / eps)));
        }
        for ((i, j), p) in coupling.indexed_iter_mut() {
            *p = ((f[i] + g[j] - cost[[i, j]]) / eps).exp();
        }
        residual = marginal_residual(&coupling, problem);
        trace.push(residual);
        if residual <= tolerance {
            break;
        }
    }
    Ok(TransportPlan {
        coupling,
        dual_source: Some(f),
        dual_target: Some(g),
        marginal_residual: residual,
        iterations_used: iterations,
        converged: residual <= tolerance,
        residual_trace: trace,
    })
}

fn sinkhorn_linear(problem: &TransportProblem, max_iter: usize, tolerance: f64) -> Result<TransportPlan> {
    let (n, m) = problem.dim();
    let eps = problem.epsilon;
    let a = problem.source.weights();
    let b = problem.target.weights();
    let kernel = problem.cost.mapv(|c| (-c / eps).exp());
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);
    let mut coupling = Array2::<f64>::zeros((n, m));
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    let usable = |x: &Array1<f64>| x.iter().all(|v| v.is_finite() && *v > 0.0);
    while iterations < max_iter {
        iterations += 1;
        u = a / &kernel.dot(&v);
        v = b / &kernel.t().dot(&u);
        if !usable(&u) || !usable(&v) {
            return Err(Error::Underflow {
                iteration: iterations,
                epsilon: eps,
            });
        }
        for ((i, j), p) in coupling.indexed_iter_mut() {
            *p = u[i] * kernel[[i, j]] * v[j];
        }
        residual = marginal_residual(&coupling, problem);
        trace.push(residual);
        if residual <= tolerance {
            break;
        }
    }
    Ok(TransportPlan {
        coupling,
        dual_source: Some(u.mapv(|x| eps * x.ln())),
        dual_target: Some(v.mapv(|x| eps * x.ln())),
        marginal_residual: residual,
        iterations_used: iterations,
        converged: residual <= tolerance,
        residual_trace: trace,
    })
}

/// `Σ_ij C_ij γ_ij`.
pub fn primal_cost(plan: &TransportPlan, problem: &TransportProblem) -> f64 {
    (&plan.coupling * &problem.cost).sum()
}

/// `Σ_i f_i a_i + Σ_j g_j b_j` from the solver's potentials.
pub fn dual_objective(plan: &TransportPlan, problem: &TransportProblem) -> Result<f64> {
    let (f, g) = match (&plan.dual_source, &plan.dual_target) {
        (Some(f), Some(g)) => (f, g),
        _ => return Err(Error::MissingPotentials),
    };
    Ok(f.dot(problem.source.weights()) + g.dot(problem.target.weights()))
}

/// Rounds each task's row to the node holding most of its mass. Ties go to
/// the cheaper node, then to the earlier kind in Local < Edge < Cloud.
pub fn plan_to_decisions(
    plan: &TransportPlan,
    problem: &TransportProblem,
    node_kinds: &[OffloadDecision],
) -> Result<Vec<OffloadDecision>> {
    let (n, m) = plan.coupling.dim();
    if node_kinds.len() != m || problem.dim() != (n, m) {
        return Err(invalid("node kinds / problem do not match the plan"));
    }
    const TIE: f64 = 1e-12;
    Ok((0..n)
        .map(|i| {
            let row = plan.coupling.row(i);
            let mut best = 0;
            for j in 1..m {
                let (pj, pb) = (row[j], row[best]);
                let scale = pj.abs().max(pb.abs()).max(f64::MIN_POSITIVE);
                let better = if (pj - pb).abs() <= TIE * scale {
                    let (cj, cb) = (problem.cost[[i, j]], problem.cost[[i, best]]);
                    cj < cb || (cj == cb && node_kinds[j] < node_kinds[best])
                } else {
                    pj > pb
                };
                if better {
                    best = j;
                }
            }
            node_kinds[best]
        })
        .collect())
}
