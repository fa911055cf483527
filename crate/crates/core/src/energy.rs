//! Energy and energy-delay product.
//!
//! Energy constants are per MAC and per byte moved, plus a static power drawn
//! for every active cycle. The shipped defaults are order-of-magnitude 45 nm
//! estimates, so absolute joules are only meaningful as ratios between runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simcore::{ArrayConfig, SimResult};
use crate::workload::Precision;

const PJ: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub e_mac_int8_pj: f64,
    pub e_mac_fp32_pj: f64,
    pub e_sram_read_pj_per_byte: f64,
    pub e_sram_write_pj_per_byte: f64,
    pub e_dram_pj_per_byte: f64,
    pub p_static_w: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            e_mac_int8_pj: 0.25,
            e_mac_fp32_pj: 1.0,
            e_sram_read_pj_per_byte: 2.0,
            e_sram_write_pj_per_byte: 2.5,
            e_dram_pj_per_byte: 80.0,
            p_static_w: 0.2,
        }
    }
}

impl EnergyConfig {
    pub fn zero() -> Self {
        Self {
            e_mac_int8_pj: 0.0,
            e_mac_fp32_pj: 0.0,
            e_sram_read_pj_per_byte: 0.0,
            e_sram_write_pj_per_byte: 0.0,
            e_dram_pj_per_byte: 0.0,
            p_static_w: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("energy.e_mac_int8_pj", self.e_mac_int8_pj),
            ("energy.e_mac_fp32_pj", self.e_mac_fp32_pj),
            (
                "energy.e_sram_read_pj_per_byte",
                self.e_sram_read_pj_per_byte,
            ),
            (
                "energy.e_sram_write_pj_per_byte",
                self.e_sram_write_pj_per_byte,
            ),
            ("energy.e_dram_pj_per_byte", self.e_dram_pj_per_byte),
            ("energy.p_static_w", self.p_static_w),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    key,
                    format!("{v} must be a finite value >= 0"),
                ));
            }
        }
        if self.e_mac_int8_pj > self.e_mac_fp32_pj {
            return Err(Error::config(
                "energy.e_mac_int8_pj",
                "an INT8 MAC may not cost more than an FP32 MAC",
            ));
        }
        Ok(())
    }

    /// Every constant multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            e_mac_int8_pj: self.e_mac_int8_pj * k,
            e_mac_fp32_pj: self.e_mac_fp32_pj * k,
            e_sram_read_pj_per_byte: self.e_sram_read_pj_per_byte * k,
            e_sram_write_pj_per_byte: self.e_sram_write_pj_per_byte * k,
            e_dram_pj_per_byte: self.e_dram_pj_per_byte * k,
            p_static_w: self.p_static_w * k,
        }
    }

    pub fn mac_joules(&self, p: Precision) -> f64 {
        PJ * match p {
            Precision::Int8 => self.e_mac_int8_pj,
            Precision::Fp32 => self.e_mac_fp32_pj,
        }
    }
}

/// Joules spent by one simulated GEMM.
pub fn energy_of(r: &SimResult, cfg: &EnergyConfig, precision: Precision) -> f64 {
    r.macs as f64 * cfg.mac_joules(precision)
        + r.sram_read_bytes as f64 * cfg.e_sram_read_pj_per_byte * PJ
        + r.sram_write_bytes as f64 * cfg.e_sram_write_pj_per_byte * PJ
        + r.dram_bytes as f64 * cfg.e_dram_pj_per_byte * PJ
        + cfg.p_static_w * r.seconds
}

pub fn edp(energy_j: f64, seconds: f64) -> f64 {
    energy_j * seconds
}

/// Peak throughput in TOPS, counting a MAC as two operations.
pub fn peak_tops(a: &ArrayConfig) -> f64 {
    2.0 * a.pes() as f64 * a.freq_mhz * 1e6 / 1e12
}
