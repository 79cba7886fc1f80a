//! Softmax policy over {Local, Edge, Cloud} that is linear in a fixed feature map,
//! with Monte-Carlo returns and the score-function policy gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{OffloadDecision, Task};

/// Per-action feature block: bias, data size, cycles, upload rate, pending count.
pub const BLOCK_DIM: usize = 5;
pub const NUM_ACTIONS: usize = 3;
pub const FEATURE_DIM: usize = BLOCK_DIM * NUM_ACTIONS;

/// What the policy observes when deciding one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub task: Task,
    pub current_upload_rate: f64,
    pub pending_count: usize,
}

impl State {
    pub fn new(task: Task, current_upload_rate: f64, pending_count: usize) -> Result<Self> {
        if !(current_upload_rate.is_finite() && current_upload_rate > 0.0) {
            return Err(Error::InvalidRate(current_upload_rate));
        }
        Ok(State {
            task,
            current_upload_rate,
            pending_count,
        })
    }
}

/// Min-max ranges applied after `log10(1 + x)` scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureScaling {
    pub log_data_bits: (f64, f64),
    pub log_cycles: (f64, f64),
    pub log_rate_bps: (f64, f64),
    pub pending_scale: f64,
}

impl Default for FeatureScaling {
    fn default() -> Self {
        FeatureScaling {
            log_data_bits: (5.0, 8.0),
            log_cycles: (7.0, 11.0),
            log_rate_bps: (5.0, 10.0),
            pending_scale: 100.0,
        }
    }
}

impl FeatureScaling {
    fn min_max(x: f64, (lo, hi): (f64, f64)) -> f64 {
        ((1.0 + x).log10() - lo) / (hi - lo)
    }

    /// The action-independent part of the feature map.
    pub fn base(&self, state: &State) -> [f64; BLOCK_DIM] {
        [
            1.0,
            Self::min_max(state.task.data_size_bits, self.log_data_bits),
            Self::min_max(state.task.cycles_required, self.log_cycles),
            Self::min_max(state.current_upload_rate, self.log_rate_bps),
            state.pending_count as f64 / self.pending_scale,
        ]
    }
}

/// `φ(s, a)`: the base features placed in the block of `action`, zeros elsewhere.
pub fn features(state: &State, action: OffloadDecision, scaling: &FeatureScaling) -> Vec<f64> {
    let mut phi = vec![0.0; FEATURE_DIM];
    let offset = action.index() * BLOCK_DIM;
    phi[offset..offset + BLOCK_DIM].copy_from_slice(&scaling.base(state));
    phi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub feature_dim: usize,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros() -> Self {
        PolicyParams {
            feature_dim: FEATURE_DIM,
            theta: vec![0.0; FEATURE_DIM],
        }
    }

    pub fn new(theta: Vec<f64>) -> Result<Self> {
        let params = PolicyParams {
            feature_dim: theta.len(),
            theta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.feature_dim {
            return Err(invalid(format!(
                "theta has {} entries, feature_dim is {}",
                self.theta.len(),
                self.feature_dim
            )));
        }
        if self.feature_dim != FEATURE_DIM {
            return Err(invalid(format!("feature_dim must be {FEATURE_DIM}, got {}", self.feature_dim)));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(invalid("theta has non-finite entries"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let params: PolicyParams = serde_json::from_str(s)?;
        params.validate()?;
        Ok(params)
    }

    fn block(&self, action: OffloadDecision) -> &[f64] {
        let offset = action.index() * BLOCK_DIM;
        &self.theta[offset..offset + BLOCK_DIM]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[φ(s,a)·θ for a in Local, Edge, Cloud]`.
pub fn logits(theta: &PolicyParams, state: &State, scaling: &FeatureScaling) -> [f64; NUM_ACTIONS] {
    let base = scaling.base(state);
    OffloadDecision::ALL.map(|a| dot(theta.block(a), &base))
}

pub fn softmax(logits: [f64; NUM_ACTIONS]) -> Result<[f64; NUM_ACTIONS]> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.map(|l| (l - max).exp());
    let total: f64 = exp.iter().sum();
    Ok(exp.map(|e| e / total))
}

pub fn action_probabilities(
    theta: &PolicyParams,
    state: &State,
    scaling: &FeatureScaling,
) -> Result<[f64; NUM_ACTIONS]> {
    if theta.theta.len() != FEATURE_DIM {
        return Err(invalid("theta length does not match the feature map"));
    }
    softmax(logits(theta, state, scaling))
}

/// Most probable action; ties resolved in Local < Edge < Cloud order.
pub fn greedy_action(probs: &[f64; NUM_ACTIONS]) -> OffloadDecision {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    OffloadDecision::ALL[best]
}

/// Inverse-CDF draw in the fixed order Local, Edge, Cloud.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64; NUM_ACTIONS], rng: &mut R) -> OffloadDecision {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (action, p) in OffloadDecision::ALL.iter().zip(probs) {
        acc += p;
        if u < acc {
            return *action;
        }
    }
    // u landed in the rounding gap above the cumulative sum: last action with mass.
    OffloadDecision::ALL
        .iter()
        .zip(probs)
        .rev()
        .find(|(_, p)| **p > 0.0)
        .map(|(a, _)| *a)
        .unwrap_or(OffloadDecision::Cloud)
}

/// `∇_θ log π_θ(a|s) = φ(s,a) − Σ_b π_θ(b|s) φ(s,b)`.
pub fn score(
    theta: &PolicyParams,
    state: &State,
    action: OffloadDecision,
    scaling: &FeatureScaling,
) -> Result<Vec<f64>> {
    let probs = action_probabilities(theta, state, scaling)?;
    let base = scaling.base(state);
    let mut grad = vec![0.0; FEATURE_DIM];
    for b in OffloadDecision::ALL {
        let weight = f64::from(u8::from(b == action)) - probs[b.index()];
        let offset = b.index() * BLOCK_DIM;
        for (g, x) in grad[offset..offset + BLOCK_DIM].iter_mut().zip(base) {
            *g = weight * x;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: OffloadDecision,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<Step>,
    discount: f64,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, discount: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(invalid("trajectory must have at least one step"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(invalid(format!("discount must be in [0, 1), got {discount}")));
        }
        if let Some(s) = steps.iter().find(|s| !s.reward.is_finite() || s.reward > 1.0 + 1e-12) {
            return Err(invalid(format!("reward {} is non-finite or above 1", s.reward)));
        }
        Ok(Trajectory { steps, discount })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Discounted return from every step: `Q_t = r_t + γ Q_{t+1}`.
pub fn q_estimates(traj: &Trajectory) -> Vec<f64> {
    let mut q = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for (t, step) in traj.steps.iter().enumerate().rev() {
        acc = step.reward + traj.discount * acc;
        q[t] = acc;
    }
    q
}

/// Mean over all steps of `∇ log π(a|s) · Q(s, a)`.
pub fn policy_gradient(
    batch: &[Trajectory],
    theta: &PolicyParams,
    scaling: &FeatureScaling,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(invalid("policy gradient needs a nonempty batch"));
    }
    let mut grad = vec![0.0; FEATURE_DIM];
    let mut total_steps = 0usize;
    for traj in batch {
        for (step, q) in traj.steps.iter().zip(q_estimates(traj)) {
            let s = score(theta, &step.state, step.action, scaling)?;
            for (g, x) in grad.iter_mut().zip(s) {
                *g += x * q;
            }
            total_steps += 1;
        }
    }
    let n = total_steps as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// Empirical per-step reward of the batch.
pub fn average_reward(batch: &[Trajectory]) -> Result<f64> {
    let steps: usize = batch.iter().map(Trajectory::len).sum();
    if steps == 0 {
        return Err(invalid("average reward needs at least one step"));
    }
    let total: f64 = batch
        .iter()
        .flat_map(|t| t.steps.iter().map(|s| s.reward))
        .sum();
    Ok(total / steps as f64)
}

/// Ascent step `θ + lr · g`, with `g` rescaled to L2 norm `clip` when longer.
pub fn gradient_step(
    theta: &PolicyParams,
    grad: &[f64],
    learning_rate: f64,
    clip: Option<f64>,
) -> Result<PolicyParams> {
    if grad.len() != theta.theta.len() {
        return Err(invalid("gradient length does not match theta"));
    }
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(invalid(format!("learning rate must be > 0, got {learning_rate}")));
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = match clip {
        Some(bound) if norm > bound => bound / norm,
        _ => 1.0,
    };
    let theta_next: Vec<f64> = theta
        .theta
        .iter()
        .zip(grad)
        .map(|(t, g)| t + learning_rate * scale * g)
        .collect();
    if theta_next.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteUpdate);
    }
    Ok(PolicyParams {
        feature_dim: theta.feature_dim,
        theta: theta_next,
    })
}
