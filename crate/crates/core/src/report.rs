//! Text, CSV and JSON renderings of reports.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lora::LossRecord;
use crate::sched::{published_targets, Comparison, TraceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(
                "format",
                format!("unknown format `{other}` (expected table, csv, json)"),
            )),
        }
    }
}

/// Column order of the per-op report CSV.
pub const TRACE_REPORT_COLUMNS: [&str; 15] = [
    "name",
    "layer_id",
    "pass",
    "precision",
    "M",
    "K",
    "N",
    "dataflow",
    "cycles",
    "macs",
    "utilization",
    "sram_read_bytes",
    "sram_write_bytes",
    "dram_bytes",
    "energy_j",
];

pub fn write_trace_report<W: Write>(r: &TraceReport, format: Format, out: W) -> Result<()> {
    match format {
        Format::Table => write_text(out, &trace_table(r)),
        Format::Csv => trace_csv(r, out),
        Format::Json => json(r, out),
    }
}

pub fn write_comparison<W: Write>(c: &Comparison, format: Format, out: W) -> Result<()> {
    match format {
        Format::Table => write_text(out, &comparison_table(c)),
        Format::Csv => comparison_csv(c, out),
        Format::Json => json(c, out),
    }
}

fn write_text<W: Write>(mut out: W, s: &str) -> Result<()> {
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn json<T: Serialize, W: Write>(v: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, v)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn trace_csv<W: Write>(r: &TraceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_REPORT_COLUMNS)?;
    for o in &r.ops {
        let s = &o.result;
        w.write_record([
            o.op.name.clone(),
            o.op.layer_id.clone(),
            o.op.pass.to_string(),
            o.op.precision.to_string(),
            o.op.m.to_string(),
            o.op.k.to_string(),
            o.op.n.to_string(),
            s.dataflow.to_string(),
            s.cycles.to_string(),
            s.macs.to_string(),
            format!("{:.6}", s.utilization),
            s.sram_read_bytes.to_string(),
            s.sram_write_bytes.to_string(),
            s.dram_bytes.to_string(),
            format!("{:e}", o.energy_j),
        ])?;
    }
    let t = &r.totals;
    w.write_record([
        "TOTAL".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        r.policy.to_string(),
        t.cycles.to_string(),
        t.macs.to_string(),
        format!("{:.6}", t.utilization),
        t.sram_read_bytes.to_string(),
        t.sram_write_bytes.to_string(),
        t.dram_bytes.to_string(),
        format!("{:e}", t.energy_j),
    ])?;
    w.flush()?;
    Ok(())
}

fn trace_table(r: &TraceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:<8} {:<8} {:>6} {:>6} {:>6} {:>3} {:>10} {:>7}",
        "op", "layer", "pass", "M", "K", "N", "df", "cycles", "util"
    );
    for o in &r.ops {
        let _ = writeln!(
            s,
            "{:<28} {:<8} {:<8} {:>6} {:>6} {:>6} {:>3} {:>10} {:>6.1}%",
            o.op.name,
            o.op.layer_id,
            o.op.pass,
            o.op.m,
            o.op.k,
            o.op.n,
            o.result.dataflow,
            o.result.cycles,
            100.0 * o.result.utilization
        );
    }
    let t = &r.totals;
    let _ = writeln!(s, "\npolicy       {}", r.policy);
    let _ = writeln!(s, "ops          {}", r.ops.len());
    let _ = writeln!(s, "cycles       {}", t.cycles);
    let _ = writeln!(s, "time         {:.6} s", t.seconds);
    let _ = writeln!(s, "MACs         {}", t.macs);
    let _ = writeln!(s, "SRAM read    {} B", t.sram_read_bytes);
    let _ = writeln!(s, "SRAM write   {} B", t.sram_write_bytes);
    let _ = writeln!(s, "DRAM         {} B", t.dram_bytes);
    let _ = writeln!(s, "energy       {:.6e} J", t.energy_j);
    let _ = writeln!(s, "EDP          {:.6e} J*s", t.edp_js);
    let _ = writeln!(s, "throughput   {:.3} TOPS", t.tops);
    s
}

fn comparison_csv<W: Write>(c: &Comparison, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "config",
        "policy",
        "cycles",
        "seconds",
        "energy_j",
        "edp_js",
        "speedup_vs_full",
        "edp_gain_vs_full",
    ])?;
    for r in &c.rows {
        w.write_record([
            r.name.clone(),
            r.policy.to_string(),
            r.cycles.to_string(),
            format!("{:e}", r.seconds),
            format!("{:e}", r.energy_j),
            format!("{:e}", r.edp_js),
            format!("{:.4}", r.speedup_vs_full),
            format!("{:.4}", r.edp_gain_vs_full),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn comparison_table(c: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:<10} {:>12} {:>12} {:>12} {:>12} {:>9} {:>9}",
        "config", "policy", "cycles", "time (s)", "energy (J)", "EDP (J*s)", "speedup", "EDP gain"
    );
    for r in &c.rows {
        let _ = writeln!(
            s,
            "{:<16} {:<10} {:>12} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.2}x {:>8.2}x",
            r.name,
            r.policy,
            r.cycles,
            r.seconds,
            r.energy_j,
            r.edp_js,
            r.speedup_vs_full,
            r.edp_gain_vs_full
        );
    }
    let _ = writeln!(s, "\nLoRA-Hybrid ratios        measured   published");
    let lines = [
        (
            "speedup vs FullModel",
            c.hybrid_speedup_vs_full(),
            published_targets::SPEEDUP_VS_FULL,
        ),
        (
            "speedup vs LoRA-OS",
            c.hybrid_speedup_vs("LoRA-OS"),
            published_targets::SPEEDUP_VS_OS,
        ),
        (
            "speedup vs LoRA-WS",
            c.hybrid_speedup_vs("LoRA-WS"),
            published_targets::SPEEDUP_VS_WS,
        ),
        (
            "EDP gain vs FullModel",
            c.hybrid_edp_gain_vs_full(),
            published_targets::EDP_VS_FULL,
        ),
        (
            "EDP gain vs LoRA-OS",
            c.hybrid_edp_gain_vs("LoRA-OS"),
            published_targets::EDP_VS_OS,
        ),
        (
            "EDP gain vs LoRA-WS",
            c.hybrid_edp_gain_vs("LoRA-WS"),
            published_targets::EDP_VS_WS,
        ),
    ];
    for (label, measured, published) in lines {
        let _ = writeln!(s, "  {label:<22} {measured:>8.2}x  {published:>8.2}x");
    }
    s
}

/// CSV columns `step,loss_fp32,loss_int8`; the header is always written.
pub fn write_loss_csv<W: Write>(records: &[LossRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "loss_fp32", "loss_int8"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            format!("{:e}", r.loss_fp),
            format!("{:e}", r.loss_quant),
        ])?;
    }
    w.flush()?;
    Ok(())
}
