//! Seeded scenario generation: a task list plus the resolved system constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{SystemParams, Task};

/// 1 KB = 1024 bytes = 8192 bits.
pub const BITS_PER_KB: f64 = 8192.0;

/// How each task's required CPU cycles are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CyclesSource {
    /// Uniform in `[lo, hi]` Gcycles, independent of the data size.
    Gcycles { lo: f64, hi: f64 },
    /// `cycles = factor · data_size_bits`.
    CyclesPerBit { factor: f64 },
}

impl Default for CyclesSource {
    fn default() -> Self {
        CyclesSource::Gcycles { lo: 10.0, hi: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub num_eds: usize,
    /// Uniform task input size range in KB.
    pub data_size_kb: (f64, f64),
    pub cycles: CyclesSource,
    pub params: SystemParams,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_eds: 100,
            data_size_kb: (100.0, 500.0),
            cycles: CyclesSource::default(),
            params: SystemParams::default(),
            seed: 0,
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_eds == 0 {
            return Err(config_err("num_eds", "must be >= 1"));
        }
        let (lo, hi) = self.data_size_kb;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(config_err("data_size_kb", format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        match self.cycles {
            CyclesSource::Gcycles { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                    return Err(config_err("cycles.gcycles", format!("need 0 < lo <= hi, got [{lo}, {hi}]")));
                }
            }
            CyclesSource::CyclesPerBit { factor } => {
                if !(factor.is_finite() && factor > 0.0) {
                    return Err(config_err("cycles.cycles_per_bit", format!("must be > 0, got {factor}")));
                }
            }
        }
        self.params
            .validate()
            .map_err(|e| config_err("params", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tasks: Vec<Task>,
    pub params: SystemParams,
}

impl Scenario {
    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.data_size_kb;
    let tasks = (0..config.num_eds)
        .map(|id| {
            let bits = uniform(&mut rng, lo, hi) * BITS_PER_KB;
            let cycles = match config.cycles {
                CyclesSource::Gcycles { lo, hi } => uniform(&mut rng, lo, hi) * 1e9,
                CyclesSource::CyclesPerBit { factor } => factor * bits,
            };
            Task::new(id, cycles, bits)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario {
        tasks,
        params: config.params,
    })
}
