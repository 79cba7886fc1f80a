//! Cloud–edge–end computation offloading with an entropic optimal-transport
//! prior and a softmax policy-gradient learner.
//!
//! Modules, bottom up: [`model`] (tasks, rates, delay/energy cost),
//! [`transport`] (Sinkhorn solver and plan rounding), [`policy`] (linear
//! softmax policy and REINFORCE utilities), [`trainer`] (annealed OT/RL
//! training), [`baselines`] and [`harness`] (evaluation and sweeps).

pub mod baselines;
pub mod error;
pub mod harness;
pub mod model;
pub mod policy;
pub mod scenario;
pub mod trainer;
pub mod transport;

pub use baselines::{greedy_decide, plain_rl_train, random_decide, BaselineKind};
pub use error::{Error, Result};
pub use harness::{
    evaluate, run_sweep, Algorithm, ConvergenceTraces, Evaluation, HarnessConfig, ResultRow, SweepAxis, SweepSpec,
};
pub use model::{
    cloud_cost, decision_cost, edge_cost, local_cost, reward, upload_rate, CostBreakdown, OffloadDecision, SystemParams,
    Task,
};
pub use policy::{FeatureScaling, PolicyParams, State, Step, Trajectory};
pub use scenario::{generate_scenario, CyclesSource, Scenario, ScenarioConfig};
pub use trainer::{annealing_scheme, joint_loss, offline_train, train, AnnealMode, AnnealingSchedule, TrainConfig, TrainTrace};
pub use transport::{build_problem, plan_to_decisions, sinkhorn, DiscreteMeasure, NodeSpec, TransportPlan, TransportProblem};
