//! Physical model of the cloud-edge-end network: tasks, system constants,
//! the shared uplink rate and the closed-form delay/energy of each placement.
//!
//! Every placement is also reported as a dimensionless *normalized cost*
//! `γ_a·T/T_local + γ_b·E/E_local`, which is exactly 1 for local execution
//! and equals `1 − reward` for any offloaded placement.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One offloadable unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub cycles_required: f64,
    pub data_size_bits: f64,
}

impl Task {
    pub fn new(id: usize, cycles_required: f64, data_size_bits: f64) -> Result<Self> {
        let task = Task {
            id,
            cycles_required,
            data_size_bits,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cycles_required.is_finite() && self.cycles_required > 0.0) {
            return Err(invalid(format!(
                "task {}: cycles_required must be > 0, got {}",
                self.id, self.cycles_required
            )));
        }
        if !(self.data_size_bits.is_finite() && self.data_size_bits > 0.0) {
            return Err(invalid(format!(
                "task {}: data_size_bits must be > 0, got {}",
                self.id, self.data_size_bits
            )));
        }
        Ok(())
    }
}

/// Where a task is executed. Serialized as `-1`, `0`, `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum OffloadDecision {
    Local,
    Edge,
    Cloud,
}

impl OffloadDecision {
    /// Fixed node order used for tie-breaking and one-hot blocks.
    pub const ALL: [OffloadDecision; 3] = [Self::Local, Self::Edge, Self::Cloud];

    pub fn index(self) -> usize {
        match self {
            Self::Local => 0,
            Self::Edge => 1,
            Self::Cloud => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_offloaded(self) -> bool {
        self != Self::Local
    }
}

impl From<OffloadDecision> for i8 {
    fn from(d: OffloadDecision) -> i8 {
        d.index() as i8 - 1
    }
}

impl TryFrom<i8> for OffloadDecision {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Self::Local),
            0 => Ok(Self::Edge),
            1 => Ok(Self::Cloud),
            other => Err(format!("offload decision must be -1, 0 or 1, got {other}")),
        }
    }
}

/// Converts a noise power given in dBm over `bandwidth_hz` into a power
/// spectral density in W/Hz.
pub fn noise_psd_from_dbm(noise_dbm: f64, bandwidth_hz: f64) -> f64 {
    10f64.powf((noise_dbm - 30.0) / 10.0) / bandwidth_hz
}

/// All physical constants of the delay/energy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub bandwidth_hz: f64,
    /// Informational; the shared uplink is split across offloaders, not channels.
    pub num_channels: u32,
    pub tx_power_w: f64,
    pub compute_power_w: f64,
    pub idle_power_w: f64,
    pub channel_gain: f64,
    pub noise_psd_w_per_hz: f64,
    pub f_end_hz: f64,
    pub f_edge_hz: f64,
    pub f_cloud_hz: f64,
    pub backhaul_rate_bps: f64,
    pub weight_delay: f64,
    pub weight_energy: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        let bandwidth_hz = 50e6;
        SystemParams {
            bandwidth_hz,
            num_channels: 50,
            tx_power_w: 0.1,
            compute_power_w: 0.5,
            idle_power_w: 0.05,
            channel_gain: 1e-3,
            // -100 dBm spread over the whole band: 1e-13 W / 5e7 Hz.
            noise_psd_w_per_hz: noise_psd_from_dbm(-100.0, bandwidth_hz),
            f_end_hz: 1e9,
            f_edge_hz: 1e10,
            f_cloud_hz: 1e11,
            backhaul_rate_bps: 1e8,
            weight_delay: 0.5,
            weight_energy: 0.5,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("compute_power_w", self.compute_power_w),
            ("idle_power_w", self.idle_power_w),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("f_end_hz", self.f_end_hz),
            ("f_edge_hz", self.f_edge_hz),
            ("f_cloud_hz", self.f_cloud_hz),
            ("backhaul_rate_bps", self.backhaul_rate_bps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.num_channels == 0 {
            return Err(invalid("num_channels must be >= 1"));
        }
        if !(self.channel_gain.is_finite() && self.channel_gain >= 0.0) {
            return Err(invalid(format!("channel_gain must be >= 0, got {}", self.channel_gain)));
        }
        if !(self.weight_delay >= 0.0 && self.weight_energy >= 0.0) {
            return Err(invalid("weights must be >= 0"));
        }
        if ((self.weight_delay + self.weight_energy) - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "weight_delay + weight_energy must be 1, got {}",
                self.weight_delay + self.weight_energy
            )));
        }
        Ok(())
    }
}

/// Delay, energy and the dimensionless weighted cost of one placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub delay_s: f64,
    pub energy_j: f64,
    pub normalized_cost: f64,
}

/// Shannon rate of one offloading ED when the band is split equally among
/// `offloader_count` devices.
pub fn upload_rate(params: &SystemParams, offloader_count: usize) -> Result<f64> {
    if offloader_count == 0 {
        return Err(invalid("offloader_count must be >= 1"));
    }
    let w_alloc = params.bandwidth_hz / offloader_count as f64;
    let snr = params.tx_power_w * params.channel_gain / (w_alloc * params.noise_psd_w_per_hz);
    let rate = w_alloc * (1.0 + snr).log2();
    if !rate.is_finite() {
        return Err(invalid(format!("upload rate is not finite (snr = {snr})")));
    }
    Ok(rate)
}

fn check_rate(r_u: f64) -> Result<()> {
    if r_u.is_finite() && r_u > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRate(r_u))
    }
}

fn local_delay_energy(task: &Task, params: &SystemParams) -> (f64, f64) {
    let delay = task.cycles_required / params.f_end_hz;
    (delay, params.compute_power_w * delay)
}

fn normalize(task: &Task, params: &SystemParams, delay_s: f64, energy_j: f64) -> CostBreakdown {
    let (t_local, e_local) = local_delay_energy(task, params);
    CostBreakdown {
        delay_s,
        energy_j,
        normalized_cost: params.weight_delay * delay_s / t_local
            + params.weight_energy * energy_j / e_local,
    }
}

pub fn local_cost(task: &Task, params: &SystemParams) -> CostBreakdown {
    let (delay_s, energy_j) = local_delay_energy(task, params);
    CostBreakdown {
        delay_s,
        energy_j,
        normalized_cost: params.weight_delay + params.weight_energy,
    }
}

pub fn edge_cost(task: &Task, params: &SystemParams, r_u: f64) -> Result<CostBreakdown> {
    check_rate(r_u)?;
    let upload = task.data_size_bits / r_u;
    let compute = task.cycles_required / params.f_edge_hz;
    let delay = upload + compute;
    let energy = params.tx_power_w * upload + params.idle_power_w * compute;
    Ok(normalize(task, params, delay, energy))
}

pub fn cloud_cost(task: &Task, params: &SystemParams, r_u: f64) -> Result<CostBreakdown> {
    check_rate(r_u)?;
    let upload = task.data_size_bits / r_u;
    let backhaul = task.data_size_bits / params.backhaul_rate_bps;
    let compute = task.cycles_required / params.f_cloud_hz;
    let delay = upload + backhaul + compute;
    let energy = params.tx_power_w * upload + params.idle_power_w * (backhaul + compute);
    Ok(normalize(task, params, delay, energy))
}

pub fn decision_cost(
    task: &Task,
    decision: OffloadDecision,
    params: &SystemParams,
    r_u: f64,
) -> Result<CostBreakdown> {
    match decision {
        OffloadDecision::Local => Ok(local_cost(task, params)),
        OffloadDecision::Edge => edge_cost(task, params, r_u),
        OffloadDecision::Cloud => cloud_cost(task, params, r_u),
    }
}

/// Relative delay and energy saving of `offloaded` over `local`, weighted
/// by `γ_a`/`γ_b`. Bounded above by 1, negative when offloading is worse.
pub fn reward(local: &CostBreakdown, offloaded: &CostBreakdown, params: &SystemParams) -> Result<f64> {
    if local.delay_s <= 0.0 {
        return Err(Error::DivisionUndefined("delay"));
    }
    if local.energy_j <= 0.0 {
        return Err(Error::DivisionUndefined("energy"));
    }
    Ok(params.weight_delay * (local.delay_s - offloaded.delay_s) / local.delay_s
        + params.weight_energy * (local.energy_j - offloaded.energy_j) / local.energy_j)
}
