//! Cycle and traffic models for GEMMs on an `R x C` systolic array.
//!
//! Two dataflows are modelled analytically ([`simulate_ws`], [`simulate_os`]) and
//! checked against a register-level reference simulator ([`reference_event_sim`]).
//! DRAM is a capacity model only: its latency is assumed hidden by double
//! buffering and shows up in energy, not in cycles.

mod event;
mod os;
mod ws;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::GemmOp;

pub use event::{reference_event_sim, EventSimOutcome, MAX_EVENT_SIM_PES};
pub use os::simulate_os;
pub use ws::simulate_ws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "WS")]
    WeightStationary,
    #[serde(rename = "OS")]
    OutputStationary,
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Dataflow::WeightStationary => "WS",
            Dataflow::OutputStationary => "OS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub rows: u64,
    pub cols: u64,
    pub freq_mhz: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            freq_mhz: 400.0,
        }
    }
}

impl ArrayConfig {
    pub fn new(rows: u64, cols: u64, freq_mhz: f64) -> Result<Self> {
        let cfg = Self {
            rows,
            cols,
            freq_mhz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::config("array.rows", "must be >= 1"));
        }
        if self.cols == 0 {
            return Err(Error::config("array.cols", "must be >= 1"));
        }
        if !(self.freq_mhz.is_finite() && self.freq_mhz > 0.0) {
            return Err(Error::config("array.freq_mhz", "must be a positive number"));
        }
        Ok(())
    }

    pub fn pes(&self) -> u64 {
        self.rows * self.cols
    }

    pub fn seconds(&self, cycles: u64) -> f64 {
        cycles as f64 / (self.freq_mhz * 1e6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemConfig {
    pub input_sram_kib: u64,
    pub weight_sram_kib: u64,
    pub output_sram_kib: u64,
    /// Width of a partial-sum word in the output SRAM.
    #[serde(default = "accum_bytes")]
    pub accum_bytes: u64,
    #[serde(default = "yes")]
    pub double_buffered: bool,
}

fn accum_bytes() -> u64 {
    4
}

fn yes() -> bool {
    true
}

impl Default for MemConfig {
    fn default() -> Self {
        Self {
            input_sram_kib: 512,
            weight_sram_kib: 512,
            output_sram_kib: 1024,
            accum_bytes: 4,
            double_buffered: true,
        }
    }
}

impl MemConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("memory.input_sram_kib", self.input_sram_kib),
            ("memory.weight_sram_kib", self.weight_sram_kib),
            ("memory.output_sram_kib", self.output_sram_kib),
            ("memory.accum_bytes", self.accum_bytes),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn input_bytes(&self) -> u64 {
        self.input_sram_kib * 1024
    }

    pub fn weight_bytes(&self) -> u64 {
        self.weight_sram_kib * 1024
    }

    pub fn output_bytes(&self) -> u64 {
        self.output_sram_kib * 1024
    }
}

/// Extents and counts of the tiles a GEMM is cut into. Remainder tiles keep their true size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    pub dataflow: Dataflow,
    /// Full-tile extents along (M, K, N); the GEMM dim itself when not tiled.
    pub extent: (u64, u64, u64),
    /// Tile counts along (M, K, N).
    pub count: (u64, u64, u64),
}

impl Tiling {
    /// WS holds a `K_t x N_t` weight tile: K is mapped onto rows and N onto columns.
    /// OS holds an `M_t x N_t` output tile: M onto rows and N onto columns.
    pub fn new(g: &GemmOp, a: &ArrayConfig, dataflow: Dataflow) -> Self {
        match dataflow {
            Dataflow::WeightStationary => Self {
                dataflow,
                extent: (g.m, g.k.min(a.rows), g.n.min(a.cols)),
                count: (1, g.k.div_ceil(a.rows), g.n.div_ceil(a.cols)),
            },
            Dataflow::OutputStationary => Self {
                dataflow,
                extent: (g.m.min(a.rows), g.k, g.n.min(a.cols)),
                count: (g.m.div_ceil(a.rows), 1, g.n.div_ceil(a.cols)),
            },
        }
    }

    pub fn tiles(&self) -> u64 {
        self.count.0 * self.count.1 * self.count.2
    }
}

/// Sizes of the consecutive tiles covering `total` with pieces of at most `step`.
pub(crate) fn tile_sizes(total: u64, step: u64) -> impl Iterator<Item = u64> + Clone {
    (0..total.div_ceil(step)).map(move |i| step.min(total - i * step))
}

/// On-chip SRAM accesses in words, by tensor class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SramTraffic {
    pub input_reads: u64,
    pub weight_reads: u64,
    /// Partial-sum reads (read-modify-write).
    pub output_reads: u64,
    pub output_writes: u64,
}

impl SramTraffic {
    pub fn reads(&self) -> u64 {
        self.input_reads + self.weight_reads + self.output_reads
    }

    pub fn writes(&self) -> u64 {
        self.output_writes
    }
}

impl std::ops::Add for SramTraffic {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            input_reads: self.input_reads + o.input_reads,
            weight_reads: self.weight_reads + o.weight_reads,
            output_reads: self.output_reads + o.output_reads,
            output_writes: self.output_writes + o.output_writes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub dataflow: Dataflow,
    pub cycles: u64,
    pub seconds: f64,
    pub macs: u64,
    /// `macs / (R·C·cycles)`.
    pub utilization: f64,
    pub sram: SramTraffic,
    /// SRAM bytes read; operands at their precision, partial sums at accumulator width.
    pub sram_read_bytes: u64,
    pub sram_write_bytes: u64,
    pub dram_bytes: u64,
}

impl SimResult {
    fn assemble(
        g: &GemmOp,
        a: &ArrayConfig,
        m: &MemConfig,
        dataflow: Dataflow,
        cycles: u64,
        sram: SramTraffic,
        dram_bytes: u64,
    ) -> Self {
        let wb = g.precision.word_bytes();
        let macs = g.macs();
        Self {
            dataflow,
            cycles,
            seconds: a.seconds(cycles),
            macs,
            utilization: macs as f64 / (a.pes() as f64 * cycles as f64),
            sram,
            sram_read_bytes: (sram.input_reads + sram.weight_reads) * wb
                + sram.output_reads * m.accum_bytes,
            sram_write_bytes: sram.output_writes * m.accum_bytes,
            dram_bytes,
        }
    }
}

/// DRAM bytes of a tensor: fetched once when it fits its SRAM partition, otherwise once per reuse.
pub(crate) fn dram_fetch(bytes: u64, capacity: u64, reuse: u64) -> u64 {
    if bytes <= capacity {
        bytes
    } else {
        bytes * reuse
    }
}

/// Compute-bound floor `ceil(M·K·N / (R·C))`.
pub fn roofline_lower_bound(g: &GemmOp, a: &ArrayConfig) -> u64 {
    g.macs().div_ceil(a.pes())
}

pub fn simulate(g: &GemmOp, a: &ArrayConfig, m: &MemConfig, dataflow: Dataflow) -> SimResult {
    match dataflow {
        Dataflow::WeightStationary => simulate_ws(g, a, m),
        Dataflow::OutputStationary => simulate_os(g, a, m),
    }
}
