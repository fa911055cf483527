//! Dataflow selection per GEMM and layer-serial execution of whole traces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{edp, energy_of, EnergyConfig};
use crate::error::{Error, Result};
use crate::simcore::{
    simulate_os, simulate_ws, ArrayConfig, Dataflow, MemConfig, SimResult, SramTraffic,
};
use crate::workload::{build_full_finetune_trace, build_lora_trace, GemmOp, ModelConfig};
use crate::HardwareConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    ForceWS,
    ForceOS,
    /// Per op, the dataflow with fewer cycles.
    HybridMinLatency,
    /// Per op, the dataflow with the lower energy x time.
    HybridMinEDP,
}

impl Policy {
    pub fn cli_name(self) -> &'static str {
        match self {
            Policy::ForceWS => "ws",
            Policy::ForceOS => "os",
            Policy::HybridMinLatency => "hybrid",
            Policy::HybridMinEDP => "hybrid-edp",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.cli_name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws" => Ok(Policy::ForceWS),
            "os" => Ok(Policy::ForceOS),
            "hybrid" => Ok(Policy::HybridMinLatency),
            "hybrid-edp" => Ok(Policy::HybridMinEDP),
            other => Err(Error::config(
                "policy",
                format!("unknown policy `{other}` (expected ws, os, hybrid, hybrid-edp)"),
            )),
        }
    }
}

/// Simulates `g` under `policy`. Ties between the two dataflows go to WS.
pub fn select_dataflow(
    g: &GemmOp,
    a: &ArrayConfig,
    m: &MemConfig,
    e: &EnergyConfig,
    policy: Policy,
) -> (Dataflow, SimResult) {
    let pick = |ws: SimResult, os: SimResult, ws_wins: bool| {
        if ws_wins {
            (Dataflow::WeightStationary, ws)
        } else {
            (Dataflow::OutputStationary, os)
        }
    };
    match policy {
        Policy::ForceWS => (Dataflow::WeightStationary, simulate_ws(g, a, m)),
        Policy::ForceOS => (Dataflow::OutputStationary, simulate_os(g, a, m)),
        Policy::HybridMinLatency => {
            let (ws, os) = (simulate_ws(g, a, m), simulate_os(g, a, m));
            let ws_wins = ws.cycles <= os.cycles;
            pick(ws, os, ws_wins)
        }
        Policy::HybridMinEDP => {
            let (ws, os) = (simulate_ws(g, a, m), simulate_os(g, a, m));
            let cost = |r: &SimResult| edp(energy_of(r, e, g.precision), r.seconds);
            let ws_wins = cost(&ws) <= cost(&os);
            pick(ws, os, ws_wins)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub op: GemmOp,
    pub result: SimResult,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub cycles: u64,
    pub seconds: f64,
    pub macs: u64,
    /// `macs / (R·C·cycles)` over the whole trace.
    pub utilization: f64,
    pub sram: SramTraffic,
    pub sram_read_bytes: u64,
    pub sram_write_bytes: u64,
    pub dram_bytes: u64,
    pub energy_j: f64,
    pub edp_js: f64,
    /// Achieved throughput, `2·macs / seconds`, in TOPS.
    pub tops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub policy: Policy,
    pub ops: Vec<OpReport>,
    pub totals: Totals,
}

impl TraceReport {
    /// Recomputes every total from the per-op entries and compares.
    pub fn check_totals(&self, a: &ArrayConfig) -> Result<()> {
        let fresh = totals(&self.ops, a);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs());
        let t = &self.totals;
        let ok = t.cycles == fresh.cycles
            && t.macs == fresh.macs
            && t.sram == fresh.sram
            && t.sram_read_bytes == fresh.sram_read_bytes
            && t.sram_write_bytes == fresh.sram_write_bytes
            && t.dram_bytes == fresh.dram_bytes
            && close(t.seconds, fresh.seconds)
            && close(t.utilization, fresh.utilization)
            && close(t.energy_j, fresh.energy_j)
            && close(t.edp_js, fresh.edp_js)
            && close(t.tops, fresh.tops);
        if !ok {
            return Err(Error::Invariant(
                "report totals disagree with per-op entries".into(),
            ));
        }
        Ok(())
    }

    pub fn count(&self, dataflow: Dataflow) -> usize {
        self.ops
            .iter()
            .filter(|o| o.result.dataflow == dataflow)
            .count()
    }
}

fn totals(ops: &[OpReport], a: &ArrayConfig) -> Totals {
    let cycles = ops.iter().map(|o| o.result.cycles).sum();
    let macs = ops.iter().map(|o| o.result.macs).sum();
    let seconds = a.seconds(cycles);
    let energy_j: f64 = ops.iter().map(|o| o.energy_j).sum();
    Totals {
        cycles,
        seconds,
        macs,
        utilization: macs as f64 / (a.pes() as f64 * cycles as f64),
        sram: ops
            .iter()
            .fold(SramTraffic::default(), |acc, o| acc + o.result.sram),
        sram_read_bytes: ops.iter().map(|o| o.result.sram_read_bytes).sum(),
        sram_write_bytes: ops.iter().map(|o| o.result.sram_write_bytes).sum(),
        dram_bytes: ops.iter().map(|o| o.result.dram_bytes).sum(),
        energy_j,
        edp_js: edp(energy_j, seconds),
        tops: 2.0 * macs as f64 / seconds / 1e12,
    }
}

/// Runs every op of `trace` back to back under `policy`.
pub fn run_trace(
    trace: &[GemmOp],
    a: &ArrayConfig,
    m: &MemConfig,
    e: &EnergyConfig,
    policy: Policy,
) -> Result<TraceReport> {
    if trace.is_empty() {
        return Err(Error::Domain("cannot run an empty trace".into()));
    }
    let ops: Vec<OpReport> = trace
        .iter()
        .map(|g| {
            let (_, result) = select_dataflow(g, a, m, e, policy);
            let energy_j = energy_of(&result, e, g.precision);
            OpReport {
                op: g.clone(),
                result,
                energy_j,
            }
        })
        .collect();
    let totals = totals(&ops, a);
    Ok(TraceReport {
        policy,
        ops,
        totals,
    })
}

/// Dataflow policy of the full fine-tuning baseline: a conventional fixed weight-stationary array.
pub const BASELINE_POLICY: Policy = Policy::ForceWS;

/// Published ratios of the hybrid LoRA configuration, shown next to measured values.
pub mod published_targets {
    pub const SPEEDUP_VS_FULL: f64 = 1.81;
    pub const SPEEDUP_VS_OS: f64 = 1.22;
    pub const SPEEDUP_VS_WS: f64 = 1.27;
    pub const EDP_VS_FULL: f64 = 5.5;
    pub const EDP_VS_OS: f64 = 1.39;
    pub const EDP_VS_WS: f64 = 1.20;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub policy: Policy,
    pub cycles: u64,
    pub seconds: f64,
    pub energy_j: f64,
    pub edp_js: f64,
    /// Baseline time over this row's time.
    pub speedup_vs_full: f64,
    /// Baseline EDP over this row's EDP.
    pub edp_gain_vs_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// FullModel-FP32, LoRA-OS, LoRA-WS, LoRA-Hybrid, in that order.
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    fn get(&self, name: &str) -> &ComparisonRow {
        self.row(name).expect("comparison rows are fixed")
    }

    pub fn hybrid_speedup_vs_full(&self) -> f64 {
        self.get("LoRA-Hybrid").speedup_vs_full
    }

    pub fn hybrid_speedup_vs(&self, other: &str) -> f64 {
        self.get(other).seconds / self.get("LoRA-Hybrid").seconds
    }

    pub fn hybrid_edp_gain_vs(&self, other: &str) -> f64 {
        self.get(other).edp_js / self.get("LoRA-Hybrid").edp_js
    }

    pub fn hybrid_edp_gain_vs_full(&self) -> f64 {
        self.get("LoRA-Hybrid").edp_gain_vs_full
    }
}

/// Full FP32 fine-tuning against INT8 LoRA under fixed and hybrid dataflows.
pub fn compare(model: &ModelConfig, hw: &HardwareConfig) -> Result<Comparison> {
    let full = build_full_finetune_trace(model)?;
    let lora = build_lora_trace(model)?;
    let runs = [
        ("FullModel-FP32", &full, BASELINE_POLICY),
        ("LoRA-OS", &lora, Policy::ForceOS),
        ("LoRA-WS", &lora, Policy::ForceWS),
        ("LoRA-Hybrid", &lora, Policy::HybridMinLatency),
    ];
    let mut reports = Vec::with_capacity(runs.len());
    for (name, trace, policy) in runs {
        let r = run_trace(trace, &hw.array, &hw.memory, &hw.energy, policy)?;
        reports.push((name, policy, r.totals));
    }
    let base = reports[0].2.clone();
    let rows = reports
        .into_iter()
        .map(|(name, policy, t)| ComparisonRow {
            name: name.to_string(),
            policy,
            cycles: t.cycles,
            seconds: t.seconds,
            energy_j: t.energy_j,
            edp_js: t.edp_js,
            speedup_vs_full: base.seconds / t.seconds,
            edp_gain_vs_full: base.edp_js / t.edp_js,
        })
        .collect();
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{Pass, Precision};

    fn op(m: u64, k: u64, n: u64) -> GemmOp {
        GemmOp::new("t", "l", Pass::Forward, (m, k, n), Precision::Int8).unwrap()
    }

    fn hw() -> (ArrayConfig, MemConfig, EnergyConfig) {
        (
            ArrayConfig::default(),
            MemConfig::default(),
            EnergyConfig::default(),
        )
    }

    #[test]
    fn rank_one_selection_follows_closed_forms() {
        let (a, m, e) = hw();
        let g = op(64, 1, 64);
        let ws = simulate_ws(&g, &a, &m).cycles;
        let os = simulate_os(&g, &a, &m).cycles;
        // WS: 1 + (64 + 1 + 64 - 2) = 128; OS: 1 + 64 = 65
        assert_eq!((ws, os), (128, 65));
        let (df, r) = select_dataflow(&g, &a, &m, &e, Policy::HybridMinLatency);
        assert_eq!(df, Dataflow::OutputStationary);
        assert_eq!(r.cycles, 65);
    }

    #[test]
    fn argmin_on_tall_gemm() {
        let (a, m, e) = hw();
        let g = op(4096, 768, 1280);
        let (_, chosen) = select_dataflow(&g, &a, &m, &e, Policy::HybridMinLatency);
        let other = simulate_ws(&g, &a, &m)
            .cycles
            .max(simulate_os(&g, &a, &m).cycles);
        assert!(chosen.cycles <= other);
    }

    #[test]
    fn ties_go_to_ws() {
        // 1x1 GEMM on a 1x1 array: WS 1 + 1 = 2, OS 1 + 1 = 2
        let a = ArrayConfig::new(1, 1, 1.0).unwrap();
        let (_, m, e) = hw();
        let g = op(1, 1, 1);
        assert_eq!(
            simulate_ws(&g, &a, &m).cycles,
            simulate_os(&g, &a, &m).cycles
        );
        for _ in 0..2 {
            assert_eq!(
                select_dataflow(&g, &a, &m, &e, Policy::HybridMinLatency).0,
                Dataflow::WeightStationary
            );
        }
    }

    #[test]
    fn single_op_report_equals_op() {
        let (a, m, e) = hw();
        let g = op(300, 70, 90);
        let r = run_trace(std::slice::from_ref(&g), &a, &m, &e, Policy::ForceOS).unwrap();
        let direct = simulate_os(&g, &a, &m);
        assert_eq!(r.totals.cycles, direct.cycles);
        assert_eq!(r.totals.macs, direct.macs);
        assert_eq!(r.totals.dram_bytes, direct.dram_bytes);
        assert!((r.totals.energy_j - energy_of(&direct, &e, Precision::Int8)).abs() < 1e-18);
        r.check_totals(&a).unwrap();
    }

    #[test]
    fn empty_trace_rejected() {
        let (a, m, e) = hw();
        assert!(run_trace(&[], &a, &m, &e, Policy::ForceWS).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            Policy::ForceWS,
            Policy::ForceOS,
            Policy::HybridMinLatency,
            Policy::HybridMinEDP,
        ] {
            assert_eq!(p.cli_name().parse::<Policy>().unwrap(), p);
        }
        assert!("fastest".parse::<Policy>().is_err());
    }

    #[test]
    fn hybrid_vs_itself_is_one() {
        let c = compare(&ModelConfig::sd_v1_default(), &HardwareConfig::default()).unwrap();
        assert_eq!(c.hybrid_speedup_vs("LoRA-Hybrid"), 1.0);
        assert_eq!(c.hybrid_edp_gain_vs("LoRA-Hybrid"), 1.0);
        let best_fixed = c
            .row("LoRA-WS")
            .unwrap()
            .speedup_vs_full
            .max(c.row("LoRA-OS").unwrap().speedup_vs_full);
        assert!(c.hybrid_speedup_vs_full() >= best_fixed);
    }
}
