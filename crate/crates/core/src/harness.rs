//! Experiment harness: evaluation of a placement rule under the shared
//! uplink, parameter sweeps and convergence traces, with CSV/JSON output.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_decide, plain_rl_train, random_decide, BaselineKind};
use crate::error::{Error, Result};
use crate::model::{decision_cost, upload_rate, OffloadDecision};
use crate::policy::{action_probabilities, greedy_action, FeatureScaling, PolicyParams, State};
use crate::scenario::{generate_scenario, CyclesSource, Scenario, ScenarioConfig};
use crate::trainer::{train, AnnealingSchedule, TrainConfig, TrainTrace, TRACE_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Otrl,
    PlainRl,
    Greedy,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Otrl, Self::PlainRl, Self::Greedy, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Otrl => "otrl",
            Self::PlainRl => "plainrl",
            Self::Greedy => "greedy",
            Self::Random => "random",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::Otrl | Self::PlainRl)
    }
}

impl From<BaselineKind> for Algorithm {
    fn from(b: BaselineKind) -> Self {
        match b {
            BaselineKind::Greedy => Self::Greedy,
            BaselineKind::Random => Self::Random,
            BaselineKind::PlainRl => Self::PlainRl,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected otrl, plainrl, greedy or random)"))
    }
}

/// A placement rule evaluated pass by pass.
enum Rule<'a> {
    Policy {
        theta: &'a PolicyParams,
        scaling: &'a FeatureScaling,
    },
    Greedy,
    Random { seed: u64, rng: ChaCha8Rng },
}

impl Rule<'_> {
    fn begin_pass(&mut self) {
        if let Rule::Random { seed, rng } = self {
            *rng = ChaCha8Rng::seed_from_u64(*seed);
        }
    }

    fn decide(&mut self, scenario: &Scenario, state: &State) -> Result<OffloadDecision> {
        match self {
            Rule::Policy { theta, scaling } => Ok(greedy_action(&action_probabilities(theta, state, scaling)?)),
            Rule::Greedy => greedy_decide(&state.task, &scenario.params, state.current_upload_rate),
            Rule::Random { rng, .. } => Ok(random_decide(&state.task, rng)),
        }
    }
}

/// Passes allowed for the rate/decision fixed point.
pub const MAX_PASSES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub decisions: Vec<OffloadDecision>,
    pub avg_normalized_cost: f64,
    pub avg_delay_s: f64,
    pub avg_energy_j: f64,
    pub offload_ratio: f64,
    pub passes: usize,
    pub stabilized: bool,
}

/// Fraction of placements that leave the device.
pub fn offload_ratio(decisions: &[OffloadDecision]) -> f64 {
    decisions.iter().filter(|d| d.is_offloaded()).count() as f64 / decisions.len() as f64
}

fn evaluate_rule(scenario: &Scenario, rule: &mut Rule<'_>) -> Result<Evaluation> {
    let n = scenario.tasks.len();
    let params = &scenario.params;
    // First pass assumes every ED shares the uplink.
    let mut offloaders = n;
    let mut previous: Option<Vec<OffloadDecision>> = None;
    let mut passes = 0;
    let mut stabilized = false;
    while passes < MAX_PASSES {
        passes += 1;
        rule.begin_pass();
        let rate = upload_rate(params, offloaders.max(1))?;
        let decisions = scenario
            .tasks
            .iter()
            .enumerate()
            .map(|(i, task)| rule.decide(scenario, &State::new(*task, rate, n - i)?))
            .collect::<Result<Vec<_>>>()?;
        offloaders = decisions.iter().filter(|d| d.is_offloaded()).count();
        let same = previous.as_ref() == Some(&decisions);
        previous = Some(decisions);
        if same {
            stabilized = true;
            break;
        }
    }
    let decisions = previous.expect("at least one pass");
    let rate = upload_rate(params, offloaders.max(1))?;
    let (mut cost, mut delay, mut energy) = (0.0, 0.0, 0.0);
    for (task, d) in scenario.tasks.iter().zip(&decisions) {
        let c = decision_cost(task, *d, params, rate)?;
        cost += c.normalized_cost;
        delay += c.delay_s;
        energy += c.energy_j;
    }
    let nf = n as f64;
    Ok(Evaluation {
        avg_normalized_cost: cost / nf,
        avg_delay_s: delay / nf,
        avg_energy_j: energy / nf,
        offload_ratio: offload_ratio(&decisions),
        decisions,
        passes,
        stabilized,
    })
}

/// Evaluates a learned policy (argmax placement) on a scenario.
pub fn evaluate_policy(scenario: &Scenario, theta: &PolicyParams, scaling: &FeatureScaling) -> Result<Evaluation> {
    evaluate_rule(scenario, &mut Rule::Policy { theta, scaling })
}

pub fn evaluate_greedy(scenario: &Scenario) -> Result<Evaluation> {
    evaluate_rule(scenario, &mut Rule::Greedy)
}

pub fn evaluate_random(scenario: &Scenario, seed: u64) -> Result<Evaluation> {
    evaluate_rule(
        scenario,
        &mut Rule::Random {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        },
    )
}

/// Trains (when needed) and evaluates `algorithm` on `scenario`.
pub fn evaluate(
    algorithm: Algorithm,
    scenario: &Scenario,
    train_config: &TrainConfig,
    schedule: &AnnealingSchedule,
    policy: Option<&PolicyParams>,
) -> Result<Evaluation> {
    match algorithm {
        Algorithm::Greedy => evaluate_greedy(scenario),
        Algorithm::Random => evaluate_random(scenario, train_config.seed),
        Algorithm::Otrl | Algorithm::PlainRl => {
            let trained;
            let theta = match policy {
                Some(p) => p,
                None => {
                    trained = train_algorithm(algorithm, scenario, train_config, schedule)?.0;
                    &trained
                }
            };
            evaluate_policy(scenario, theta, &train_config.scaling)
        }
    }
}

pub fn train_algorithm(
    algorithm: Algorithm,
    scenario: &Scenario,
    config: &TrainConfig,
    schedule: &AnnealingSchedule,
) -> Result<(PolicyParams, TrainTrace)> {
    match algorithm {
        Algorithm::Otrl => train(scenario, config, schedule),
        Algorithm::PlainRl => plain_rl_train(scenario, config, schedule),
        other => Err(Error::Config {
            field: "algo".into(),
            message: format!("{other} is not a learned algorithm"),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DataSizeKb,
    CpuGcycles,
    NumEds,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::DataSizeKb => "data_size_kb",
            Self::CpuGcycles => "cpu_gcycles",
            Self::NumEds => "num_eds",
        }
    }

    /// The scenario config with this axis pinned to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            Self::DataSizeKb => cfg.data_size_kb = (value, value),
            Self::CpuGcycles => cfg.cycles = CyclesSource::Gcycles { lo: value, hi: value },
            Self::NumEds => cfg.num_eds = value.round() as usize,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    pub repetitions: usize,
    pub algorithms: Vec<Algorithm>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, message: &str| Error::Config {
            field: format!("sweep.{field}"),
            message: message.into(),
        };
        if self.points.is_empty() || self.points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(err("points", "must be nonempty and strictly increasing"));
        }
        if self.repetitions == 0 {
            return Err(err("repetitions", "must be >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(err("algorithms", "must list at least one algorithm"));
        }
        Ok(())
    }

    /// Data size 100..=1000 KB in steps of 100.
    pub fn data_size(repetitions: usize) -> Self {
        SweepSpec {
            axis: SweepAxis::DataSizeKb,
            points: (1..=10).map(|k| 100.0 * k as f64).collect(),
            repetitions,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }

    /// Required cycles 10..=20 Gcycles in steps of 1.
    pub fn cpu_cycles(repetitions: usize) -> Self {
        SweepSpec {
            axis: SweepAxis::CpuGcycles,
            points: (10..=20).map(f64::from).collect(),
            repetitions,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }

    /// ED count 20..=200 in steps of 20.
    pub fn num_eds(repetitions: usize) -> Self {
        SweepSpec {
            axis: SweepAxis::NumEds,
            points: (1..=10).map(|k| 20.0 * k as f64).collect(),
            repetitions,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub axis: String,
    pub axis_value: f64,
    pub seed: u64,
    pub avg_cost: f64,
    pub avg_delay_s: f64,
    pub avg_energy_j: f64,
    pub offload_ratio: f64,
    /// Empty, `unstable` (fixed point not reached) or `error: ...`.
    pub flag: String,
}

pub const SWEEP_CSV_HEADER: &str = "algorithm,axis,axis_value,seed,avg_cost,avg_delay_s,avg_energy_j,offload_ratio,flag";

impl ResultRow {
    pub fn from_evaluation(algorithm: Algorithm, axis: &str, axis_value: f64, seed: u64, e: &Evaluation) -> Self {
        ResultRow {
            algorithm,
            axis: axis.to_string(),
            axis_value,
            seed,
            avg_cost: e.avg_normalized_cost,
            avg_delay_s: e.avg_delay_s,
            avg_energy_j: e.avg_energy_j,
            offload_ratio: e.offload_ratio,
            flag: if e.stabilized { String::new() } else { "unstable".into() },
        }
    }

    fn failed(algorithm: Algorithm, axis: &str, axis_value: f64, seed: u64, err: &Error) -> Self {
        ResultRow {
            algorithm,
            axis: axis.to_string(),
            axis_value,
            seed,
            avg_cost: f64::NAN,
            avg_delay_s: f64::NAN,
            avg_energy_j: f64::NAN,
            offload_ratio: f64::NAN,
            flag: format!("error: {err}"),
        }
    }

    pub fn is_error(&self) -> bool {
        self.flag.starts_with("error")
    }
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.algorithm,
            r.axis,
            r.axis_value,
            r.seed,
            r.avg_cost,
            r.avg_delay_s,
            r.avg_energy_j,
            r.offload_ratio,
            csv_text(&r.flag)
        ));
    }
    out
}

/// Everything a CLI run needs; every section falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub schedule: AnnealingSchedule,
    pub sweep: SweepSpec,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            scenario: ScenarioConfig::default(),
            train: TrainConfig::default(),
            schedule: AnnealingSchedule::default(),
            sweep: SweepSpec::data_size(10),
        }
    }
}

impl HarnessConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: HarnessConfig = serde_json::from_str(s).map_err(|e| Error::Config {
            field: "config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.train.validate()?;
        self.schedule.validate()?;
        self.sweep.validate()
    }

    /// Sets the scenario and training seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self.train.seed = seed;
        self
    }
}

/// One sweep cell: scenario seed `base_seed + repetition`, fresh training
/// for learned algorithms, then evaluation.
fn run_cell(spec: &SweepSpec, base: &HarnessConfig, value: f64, seed: u64, algorithm: Algorithm) -> ResultRow {
    let axis = spec.axis.name();
    let mut scenario_cfg = spec.axis.apply(&base.scenario, value);
    scenario_cfg.seed = seed;
    let train_cfg = TrainConfig {
        seed,
        ..base.train.clone()
    };
    let outcome = generate_scenario(&scenario_cfg)
        .and_then(|scenario| evaluate(algorithm, &scenario, &train_cfg, &base.schedule, None));
    match outcome {
        Ok(e) => ResultRow::from_evaluation(algorithm, axis, value, seed, &e),
        Err(err) => ResultRow::failed(algorithm, axis, value, seed, &err),
    }
}

/// All (point, seed, algorithm) cells, point-major then seed then algorithm.
/// Cells run in parallel; row order does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, base: &HarnessConfig) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let cells: Vec<(f64, u64, Algorithm)> = spec
        .points
        .iter()
        .flat_map(|&v| {
            (0..spec.repetitions as u64).flat_map(move |r| {
                let seed = base.scenario.seed.wrapping_add(r);
                spec.algorithms.iter().map(move |&a| (v, seed, a))
            })
        })
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(v, seed, a)| run_cell(spec, base, v, seed, a))
        .collect())
}

pub const CONVERGE_CSV_HEADER: &str = "algorithm,iteration,lambda1,lambda2,ot_cost,avg_reward,joint_loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTraces {
    pub otrl: TrainTrace,
    pub plainrl: TrainTrace,
}

/// OTRL and plain-RL traces on the same scenario and seed.
pub fn convergence_traces(config: &HarnessConfig) -> Result<ConvergenceTraces> {
    let scenario = generate_scenario(&config.scenario)?;
    let (otrl, plainrl) = rayon::join(
        || train(&scenario, &config.train, &config.schedule),
        || plain_rl_train(&scenario, &config.train, &config.schedule),
    );
    Ok(ConvergenceTraces {
        otrl: otrl?.1,
        plainrl: plainrl?.1,
    })
}

impl ConvergenceTraces {
    pub fn to_csv(&self) -> String {
        debug_assert!(CONVERGE_CSV_HEADER.ends_with(TRACE_CSV_HEADER));
        let mut out = String::from(CONVERGE_CSV_HEADER);
        out.push('\n');
        for (name, trace) in [("otrl", &self.otrl), ("plainrl", &self.plainrl)] {
            for row in &trace.rows {
                out.push_str(name);
                out.push(',');
                out.push_str(&row.csv_fields());
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            algorithm: &'a str,
            #[serde(flatten)]
            row: &'a crate::trainer::TraceRow,
        }
        let rows: Vec<Row<'_>> = [("otrl", &self.otrl), ("plainrl", &self.plainrl)]
            .into_iter()
            .flat_map(|(algorithm, t)| t.rows.iter().map(move |row| Row { algorithm, row }))
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SystemParams, Task};

    fn single_task_scenario() -> Scenario {
        Scenario {
            tasks: vec![Task::new(0, 1e10, 8e6).unwrap()],
            params: SystemParams {
                backhaul_rate_bps: 8e7,
                ..SystemParams::default()
            },
        }
    }

    #[test]
    fn all_local_policy_has_unit_cost() {
        let scenario = generate_scenario(&ScenarioConfig {
            num_eds: 10,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let mut theta = PolicyParams::zeros();
        theta.theta[0] = 50.0;
        let e = evaluate_policy(&scenario, &theta, &FeatureScaling::default()).unwrap();
        assert_eq!(e.offload_ratio, 0.0);
        assert!((e.avg_normalized_cost - 1.0).abs() < 1e-15);
        assert!(e.stabilized && e.passes == 2);
    }

    #[test]
    fn all_cloud_reproduces_worked_values() {
        let scenario = single_task_scenario();
        let mut theta = PolicyParams::zeros();
        theta.theta[10] = 50.0;
        let e = evaluate_policy(&scenario, &theta, &FeatureScaling::default()).unwrap();
        assert_eq!(e.decisions, vec![OffloadDecision::Cloud]);
        let rate = upload_rate(&scenario.params, 1).unwrap();
        let expected = decision_cost(&scenario.tasks[0], OffloadDecision::Cloud, &scenario.params, rate).unwrap();
        assert_eq!(e.avg_delay_s, expected.delay_s);
        assert_eq!(e.avg_energy_j, expected.energy_j);
        assert_eq!(e.offload_ratio, 1.0);
    }

    #[test]
    fn offload_ratio_counts_remote_placements() {
        let decisions: Vec<OffloadDecision> = (0..10)
            .map(|i| if i % 2 == 0 { OffloadDecision::Edge } else { OffloadDecision::Local })
            .collect();
        assert_eq!(offload_ratio(&decisions), 0.5);
    }

    #[test]
    fn random_evaluation_stabilizes() {
        let scenario = generate_scenario(&ScenarioConfig::default()).unwrap();
        let e = evaluate_random(&scenario, 3).unwrap();
        assert!(e.stabilized);
        assert_eq!(e.passes, 2);
    }

    #[test]
    fn single_cell_sweep() {
        let spec = SweepSpec {
            axis: SweepAxis::NumEds,
            points: vec![10.0],
            repetitions: 1,
            algorithms: vec![Algorithm::Greedy],
        };
        let rows = run_sweep(&spec, &HarnessConfig::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].axis, "num_eds");
    }

    #[test]
    fn sweep_spec_validation() {
        let mut spec = SweepSpec::data_size(1);
        spec.points = vec![200.0, 100.0];
        assert!(spec.validate().is_err());
        let mut spec = SweepSpec::data_size(1);
        spec.repetitions = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let err = HarnessConfig::from_json(r#"{"scenario": {"num_eds": 5}, "extra": true}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        let ok = HarnessConfig::from_json(r#"{"scenario": {"num_eds": 5}}"#).unwrap();
        assert_eq!(ok.scenario.num_eds, 5);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("ddpg".parse::<Algorithm>().is_err());
    }
}
