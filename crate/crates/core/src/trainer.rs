//! The hybrid OT/RL trainer.
//!
//! Each iteration anneals the two loss weights, rolls out a batch of episodes
//! with the current softmax policy, refreshes the node-side measure from the
//! realized placements, re-solves the transport problem and takes one ascent
//! step on `λ1·(imitation of the OT plan) + λ2·(policy gradient)`.
//! The recorded loss is `λ1·C(α,β) − λ2·J`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{decision_cost, local_cost, reward, upload_rate, OffloadDecision, SystemParams};
use crate::policy::{
    action_probabilities, average_reward, gradient_step, policy_gradient, sample_action, score, FeatureScaling,
    PolicyParams, State, Step, Trajectory, FEATURE_DIM,
};
use crate::scenario::Scenario;
use crate::transport::{
    build_problem, plan_to_decisions, primal_cost, sinkhorn, DiscreteMeasure, NodeSpec, TransportPlan,
    TransportProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealMode {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealingSchedule {
    pub lambda1_start: f64,
    pub lambda1_end: f64,
    pub lambda2_start: f64,
    pub lambda2_end: f64,
    /// Offline, exploration and fine-tune shares of the iteration budget.
    pub phase_fractions: [f64; 3],
    pub mode: AnnealMode,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            lambda1_start: 1.0,
            lambda1_end: 0.1,
            lambda2_start: 0.1,
            lambda2_end: 1.0,
            phase_fractions: [0.2, 0.6, 0.2],
            mode: AnnealMode::Linear,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        let fr = self.phase_fractions;
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("phase fractions must lie in (0,1) and sum to 1, got {fr:?}")));
        }
        let ends = [self.lambda1_start, self.lambda1_end, self.lambda2_start, self.lambda2_end];
        if ends.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("lambda endpoints must be finite and >= 0"));
        }
        Ok(())
    }

    /// Same schedule with the OT weight switched off.
    pub fn without_ot(&self) -> Self {
        AnnealingSchedule {
            lambda1_start: 0.0,
            lambda1_end: 0.0,
            ..*self
        }
    }

    /// Last iteration of the offline and exploration phases.
    fn boundaries(&self, max_iter: usize) -> (usize, usize) {
        let t = max_iter as f64;
        let offline_end = ((self.phase_fractions[0] * t).round() as usize).max(1);
        let explore_end = (((self.phase_fractions[0] + self.phase_fractions[1]) * t).round() as usize)
            .clamp(offline_end, max_iter);
        (offline_end, explore_end)
    }
}

fn interpolate(start: f64, end: f64, q: f64, mode: AnnealMode) -> f64 {
    match mode {
        AnnealMode::Exponential if start > 0.0 && end > 0.0 => start * (end / start).powf(q),
        _ => start + q * (end - start),
    }
}

/// `(λ1', λ2')` for a 1-based iteration.
///
/// Offline phase holds the start values, exploration moves both weights
/// from start to end, fine-tuning brings `λ1` back to the midpoint of its
/// range and holds `λ2` at its end value.
pub fn annealing_scheme(iteration: usize, schedule: &AnnealingSchedule, max_iter: usize) -> Result<(f64, f64)> {
    if iteration == 0 || iteration > max_iter {
        return Err(Error::IterationOutOfRange { iteration, max_iter });
    }
    let s = schedule;
    let (offline_end, explore_end) = s.boundaries(max_iter);
    if iteration <= offline_end {
        Ok((s.lambda1_start, s.lambda2_start))
    } else if iteration <= explore_end {
        let q = (iteration - offline_end) as f64 / (explore_end - offline_end) as f64;
        Ok((
            interpolate(s.lambda1_start, s.lambda1_end, q, s.mode),
            interpolate(s.lambda2_start, s.lambda2_end, q, s.mode),
        ))
    } else {
        Ok((0.5 * (s.lambda1_start + s.lambda1_end), s.lambda2_end))
    }
}

/// `λ1·C − λ2·J`: the reward enters negated so lower loss means higher reward.
pub fn joint_loss(ot_cost: f64, avg_reward: f64, lambda1: f64, lambda2: f64) -> f64 {
    lambda1 * ot_cost - lambda2 * avg_reward
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_iter: usize,
    pub batch_episodes: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    pub ot_max_iter: usize,
    pub learning_rate: f64,
    pub gradient_clip: Option<f64>,
    pub discount: f64,
    pub offline_steps: usize,
    pub offline_learning_rate: f64,
    /// Weight of the capacity prior when refreshing the node measure.
    pub prior_blend: f64,
    pub scaling: FeatureScaling,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iter: 50,
            batch_episodes: 8,
            epsilon: 0.01,
            tolerance: 1e-6,
            ot_max_iter: 10_000,
            learning_rate: 0.05,
            gradient_clip: Some(5.0),
            discount: 0.9,
            offline_steps: 200,
            offline_learning_rate: 0.5,
            prior_blend: 0.5,
            scaling: FeatureScaling::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.batch_episodes == 0 || self.ot_max_iter == 0 {
            return Err(invalid("max_iter, batch_episodes and ot_max_iter must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.tolerance > 0.0 && self.learning_rate > 0.0) {
            return Err(invalid("epsilon, tolerance and learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(invalid("discount must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.prior_blend) {
            return Err(invalid("prior_blend must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub ot_cost: f64,
    pub avg_reward: f64,
    pub joint_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    /// Sampled placements of every episode in the first batch.
    pub first_batch: Vec<Vec<OffloadDecision>>,
    /// Iterations whose OT solve hit `ot_max_iter` before converging.
    pub ot_unconverged: usize,
}

pub const TRACE_CSV_HEADER: &str = "iteration,lambda1,lambda2,ot_cost,avg_reward,joint_loss";

impl TraceRow {
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.lambda1, self.lambda2, self.ot_cost, self.avg_reward, self.joint_loss
        )
    }
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_fields());
            out.push('\n');
        }
        out
    }
}

/// Rate an ED sees when `already_offloading` others share the band with it.
fn rate_with(params: &SystemParams, already_offloading: usize) -> Result<f64> {
    upload_rate(params, already_offloading + 1)
}

/// One pass over the scenario's tasks in arrival order, sampling placements
/// from the policy. The uplink is re-split as EDs join it.
pub fn rollout(
    scenario: &Scenario,
    theta: &PolicyParams,
    scaling: &FeatureScaling,
    discount: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n = scenario.tasks.len();
    let params = &scenario.params;
    let mut offloading = 0usize;
    let mut steps = Vec::with_capacity(n);
    for (i, task) in scenario.tasks.iter().enumerate() {
        let rate = rate_with(params, offloading)?;
        let state = State::new(*task, rate, n - i)?;
        let probs = action_probabilities(theta, &state, scaling)?;
        let action = sample_action(&probs, rng);
        let cost = decision_cost(task, action, params, rate)?;
        let r = reward(&local_cost(task, params), &cost, params)?;
        if action.is_offloaded() {
            offloading += 1;
        }
        steps.push(Step {
            state,
            action,
            reward: r,
        });
    }
    Trajectory::new(steps, discount)
}

/// Node-side measure and the OT plan for it.
struct OtSolve {
    problem: TransportProblem,
    plan: TransportPlan,
    labels: Vec<OffloadDecision>,
    states: Vec<State>,
}

/// Number of EDs implied to offload by the node measure.
fn implied_offloaders(n: usize, target: &DiscreteMeasure, nodes: &[NodeSpec]) -> usize {
    let offloaded: f64 = nodes
        .iter()
        .zip(target.weights())
        .filter(|(node, _)| node.kind.is_offloaded())
        .map(|(_, w)| w)
        .sum();
    ((offloaded * n as f64).round() as usize).max(1)
}

fn solve_ot(scenario: &Scenario, target: DiscreteMeasure, nodes: &[NodeSpec], config: &TrainConfig) -> Result<OtSolve> {
    let n = scenario.tasks.len();
    let rate = upload_rate(&scenario.params, implied_offloaders(n, &target, nodes))?;
    let mut problem = build_problem(&scenario.tasks, nodes, &scenario.params, rate, config.epsilon)?;
    problem.target = target;
    let plan = sinkhorn(&problem, config.ot_max_iter, config.tolerance)?;
    let kinds: Vec<OffloadDecision> = nodes.iter().map(|n| n.kind).collect();
    let labels = plan_to_decisions(&plan, &problem, &kinds)?;
    let states = scenario
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| State::new(*t, rate, n - i))
        .collect::<Result<Vec<_>>>()?;
    Ok(OtSolve {
        problem,
        plan,
        labels,
        states,
    })
}

/// Mean score of the labelled placements: the gradient of the mean
/// log-likelihood of the OT decisions.
fn imitation_gradient(
    theta: &PolicyParams,
    states: &[State],
    labels: &[OffloadDecision],
    scaling: &FeatureScaling,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; FEATURE_DIM];
    for (state, label) in states.iter().zip(labels) {
        for (g, s) in grad.iter_mut().zip(score(theta, state, *label, scaling)?) {
            *g += s;
        }
    }
    let n = states.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// Summed cross-entropy of the labels under the policy.
pub fn imitation_loss(
    theta: &PolicyParams,
    states: &[State],
    labels: &[OffloadDecision],
    scaling: &FeatureScaling,
) -> Result<f64> {
    let mut loss = 0.0;
    for (state, label) in states.iter().zip(labels) {
        loss -= action_probabilities(theta, state, scaling)?[label.index()].ln();
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineFit {
    pub theta: PolicyParams,
    /// OT placements the policy was fitted to.
    pub labels: Vec<OffloadDecision>,
    /// States the labels were attached to.
    pub states: Vec<State>,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// False when the OT solve did not converge and theta fell back to zero.
    pub ot_converged: bool,
}

/// Fits the policy to the placements of a single OT solve on the capacity prior.
pub fn offline_train(scenario: &Scenario, config: &TrainConfig) -> Result<OfflineFit> {
    config.validate()?;
    let nodes = NodeSpec::defaults(&scenario.params);
    let prior = capacity_prior(&nodes)?;
    let solve = solve_ot(scenario, prior, &nodes, config)?;
    let scaling = &config.scaling;
    let mut theta = PolicyParams::zeros();
    let initial_loss = imitation_loss(&theta, &solve.states, &solve.labels, scaling)?;
    if !solve.plan.converged {
        return Ok(OfflineFit {
            theta,
            labels: solve.labels,
            states: solve.states,
            initial_loss,
            final_loss: initial_loss,
            ot_converged: false,
        });
    }
    for _ in 0..config.offline_steps {
        let grad = imitation_gradient(&theta, &solve.states, &solve.labels, scaling)?;
        theta = gradient_step(&theta, &grad, config.offline_learning_rate, config.gradient_clip)?;
    }
    let final_loss = imitation_loss(&theta, &solve.states, &solve.labels, scaling)?;
    Ok(OfflineFit {
        theta,
        labels: solve.labels,
        states: solve.states,
        initial_loss,
        final_loss,
        ot_converged: true,
    })
}

fn capacity_prior(nodes: &[NodeSpec]) -> Result<DiscreteMeasure> {
    let caps: Vec<f64> = nodes.iter().map(|n| n.capacity_weight).collect();
    DiscreteMeasure::from_masses(&caps)
}

/// Per-episode RNG: one ChaCha stream per (iteration, episode).
fn episode_rng(seed: u64, iteration: usize, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | episode as u64);
    rng
}

fn non_finite(iteration: usize, detail: impl Into<String>) -> Error {
    Error::NonFiniteLoss {
        iteration,
        detail: detail.into(),
    }
}

/// Runs the full OT/RL loop from `θ = 0` and returns the final policy and
/// one trace row per iteration.
pub fn train(
    scenario: &Scenario,
    config: &TrainConfig,
    schedule: &AnnealingSchedule,
) -> Result<(PolicyParams, TrainTrace)> {
    config.validate()?;
    schedule.validate()?;
    let nodes = NodeSpec::defaults(&scenario.params);
    let prior = capacity_prior(&nodes)?;
    let scaling = &config.scaling;
    let mut theta = PolicyParams::zeros();
    let mut trace = TrainTrace::default();

    for iteration in 1..=config.max_iter {
        let (lambda1, lambda2) = annealing_scheme(iteration, schedule, config.max_iter)?;

        let batch = (0..config.batch_episodes)
            .map(|e| {
                let mut rng = episode_rng(config.seed, iteration, e);
                rollout(scenario, &theta, scaling, config.discount, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        if iteration == 1 {
            trace.first_batch = batch
                .iter()
                .map(|t| t.steps().iter().map(|s| s.action).collect())
                .collect();
        }
        let avg_reward = average_reward(&batch)?;
        let rl_grad = policy_gradient(&batch, &theta, scaling)?;

        // Realized placement occupancy blended with the capacity prior.
        let mut occupancy = [0.0; 3];
        for step in batch.iter().flat_map(|t| t.steps()) {
            occupancy[step.action.index()] += 1.0;
        }
        let total: f64 = occupancy.iter().sum();
        let masses: Vec<f64> = nodes
            .iter()
            .zip(prior.weights())
            .map(|(node, p)| config.prior_blend * p + (1.0 - config.prior_blend) * occupancy[node.kind.index()] / total)
            .collect();
        let solve = solve_ot(scenario, DiscreteMeasure::from_masses(&masses)?, &nodes, config)?;
        if !solve.plan.converged {
            trace.ot_unconverged += 1;
        }
        let ot_cost = primal_cost(&solve.plan, &solve.problem);
        let ot_grad = imitation_gradient(&theta, &solve.states, &solve.labels, scaling)?;

        let loss = joint_loss(ot_cost, avg_reward, lambda1, lambda2);
        if !loss.is_finite() {
            return Err(non_finite(
                iteration,
                format!("ot_cost={ot_cost} avg_reward={avg_reward} lambda1={lambda1} lambda2={lambda2}"),
            ));
        }
        let grad: Vec<f64> = ot_grad
            .iter()
            .zip(&rl_grad)
            .map(|(o, r)| lambda1 * o + lambda2 * r)
            .collect();
        theta = match gradient_step(&theta, &grad, config.learning_rate, config.gradient_clip) {
            Ok(t) => t,
            Err(Error::NonFiniteUpdate) => return Err(non_finite(iteration, "parameter update overflowed")),
            Err(e) => return Err(e),
        };
        trace.rows.push(TraceRow {
            iteration,
            lambda1,
            lambda2,
            ot_cost,
            avg_reward,
            joint_loss: loss,
        });
    }
    Ok((theta, trace))
}
