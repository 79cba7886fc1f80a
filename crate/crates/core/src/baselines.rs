//! Comparison placement rules: delay-greedy, uniform random, and policy
//! gradient without the OT term.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{decision_cost, OffloadDecision, SystemParams, Task};
use crate::policy::PolicyParams;
use crate::scenario::Scenario;
use crate::trainer::{train, AnnealingSchedule, TrainConfig, TrainTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Greedy,
    Random,
    PlainRl,
}

/// Placement with the smallest delay; ties go to the earlier of Local < Edge < Cloud.
pub fn greedy_decide(task: &Task, params: &SystemParams, r_u: f64) -> Result<OffloadDecision> {
    let mut best = OffloadDecision::Local;
    let mut best_delay = decision_cost(task, best, params, r_u)?.delay_s;
    for d in [OffloadDecision::Edge, OffloadDecision::Cloud] {
        let delay = decision_cost(task, d, params, r_u)?.delay_s;
        if delay < best_delay {
            best = d;
            best_delay = delay;
        }
    }
    Ok(best)
}

/// Uniform over the three placements; the task itself is not consulted.
pub fn random_decide<R: Rng + ?Sized>(_task: &Task, rng: &mut R) -> OffloadDecision {
    OffloadDecision::ALL[rng.gen_range(0..3)]
}

/// The OT/RL loop with `λ1 ≡ 0`.
pub fn plain_rl_train(
    scenario: &Scenario,
    config: &TrainConfig,
    schedule: &AnnealingSchedule,
) -> Result<(PolicyParams, TrainTrace)> {
    train(scenario, config, &schedule.without_ot())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn worked() -> (Task, SystemParams) {
        (
            Task::new(0, 1e10, 8e6).unwrap(),
            SystemParams {
                backhaul_rate_bps: 8e7,
                ..SystemParams::default()
            },
        )
    }

    #[test]
    fn greedy_picks_cloud_on_worked_example() {
        // 10 s local, 2 s edge, 1.2 s cloud.
        let (t, p) = worked();
        assert_eq!(greedy_decide(&t, &p, 8e6).unwrap(), OffloadDecision::Cloud);
    }

    #[test]
    fn greedy_stays_local_without_faster_servers() {
        let (t, mut p) = worked();
        p.f_edge_hz = p.f_end_hz;
        p.f_cloud_hz = p.f_end_hz;
        assert_eq!(greedy_decide(&t, &p, 8e6).unwrap(), OffloadDecision::Local);
    }

    #[test]
    fn greedy_tie_prefers_local() {
        // Edge: upload 5 s + compute 5 s = 10 s, same as local.
        let (t, mut p) = worked();
        p.f_edge_hz = 2e9;
        p.f_cloud_hz = 1e9;
        assert_eq!(greedy_decide(&t, &p, 1.6e6).unwrap(), OffloadDecision::Local);
    }

    #[test]
    fn random_is_reproducible_and_content_blind() {
        let (t, _) = worked();
        let other = Task::new(9, 3.0, 4.0).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(random_decide(&t, &mut a), random_decide(&other, &mut b));
        }
    }

    #[test]
    fn random_is_uniform() {
        let (t, _) = worked();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[random_decide(&t, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }
}
