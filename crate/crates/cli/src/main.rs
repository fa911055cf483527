//! `loraq`: simulate LoRA fine-tuning traces on a systolic array, compare
//! dataflow policies, and run the quantized training demo.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 internal invariant violation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loraq_core::lora::{run_train_demo, TrainDemoConfig};
use loraq_core::report::{write_comparison, write_loss_csv, write_trace_report, Format};
use loraq_core::sched::{compare, run_trace};
use loraq_core::workload::{build_full_finetune_trace, build_lora_trace, write_trace_csv};
use loraq_core::{Error, HardwareConfig, ModelConfig, Policy};

#[derive(Parser, Debug)]
#[command(name = "loraq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trace under a dataflow policy and write the per-op report.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "hybrid", value_parser = parse_policy)]
        policy: Policy,
        /// Which training trace to simulate.
        #[arg(long, value_enum, default_value_t = Variant::Lora)]
        trace: Variant,
    },
    /// Full FP32 fine-tuning against INT8 LoRA under WS, OS and hybrid dataflows.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a toy LoRA layer in full precision and quantized; emits a loss CSV.
    TrainDemo {
        #[arg(long, default_value_t = TrainDemoConfig::default().dim)]
        dim: usize,
        #[arg(long, default_value_t = TrainDemoConfig::default().rank)]
        rank: usize,
        #[arg(long, default_value_t = TrainDemoConfig::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = TrainDemoConfig::default().steps)]
        steps: usize,
        /// Bitwidth of weights, activations and gradients in the quantized run.
        #[arg(long, default_value_t = TrainDemoConfig::default().bits)]
        q: u32,
        #[arg(long, default_value_t = TrainDemoConfig::default().lr)]
        lr: f64,
        #[arg(long, default_value_t = TrainDemoConfig::default().seed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the GEMM trace of one training step as CSV.
    TraceDump {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Variant::Lora)]
        variant: Variant,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Model config (TOML). Defaults to the built-in SD-v1-like stack.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Hardware config (TOML). Defaults to a 64x64 array at 400 MHz.
    #[arg(long)]
    hw: Option<PathBuf>,
    /// File whose `[energy]` table replaces the hardware config's energy constants.
    #[arg(long)]
    energy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "table", value_parser = parse_format)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Variant {
    Lora,
    Full,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn model(&self) -> loraq_core::Result<ModelConfig> {
        match &self.model {
            Some(p) => ModelConfig::load(p),
            None => Ok(ModelConfig::sd_v1_default()),
        }
    }

    fn hardware(&self) -> loraq_core::Result<HardwareConfig> {
        let hw = match &self.hw {
            Some(p) => HardwareConfig::load(p)?,
            None => HardwareConfig::default(),
        };
        match &self.energy {
            Some(p) => hw.with_energy_file(p),
            None => Ok(hw),
        }
    }
}

fn output(path: Option<&Path>) -> loraq_core::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn trace_for(model: &ModelConfig, v: Variant) -> loraq_core::Result<Vec<loraq_core::GemmOp>> {
    match v {
        Variant::Lora => build_lora_trace(model),
        Variant::Full => build_full_finetune_trace(model),
    }
}

fn run(cmd: Command) -> loraq_core::Result<()> {
    match cmd {
        Command::Simulate { run, policy, trace } => {
            let model = run.model()?;
            let hw = run.hardware()?;
            let ops = trace_for(&model, trace)?;
            let report = run_trace(&ops, &hw.array, &hw.memory, &hw.energy, policy)?;
            report.check_totals(&hw.array)?;
            let mut out = output(run.out.as_deref())?;
            write_trace_report(&report, run.format, &mut out)?;
            out.flush()?;
        }
        Command::Compare { run } => {
            let model = run.model()?;
            let hw = run.hardware()?;
            let c = compare(&model, &hw)?;
            let mut out = output(run.out.as_deref())?;
            write_comparison(&c, run.format, &mut out)?;
            out.flush()?;
        }
        Command::TrainDemo {
            dim,
            rank,
            samples,
            steps,
            q,
            lr,
            seed,
            out,
        } => {
            let cfg = TrainDemoConfig {
                dim,
                rank,
                samples,
                steps,
                bits: q,
                lr,
                seed,
            };
            let records = run_train_demo(&cfg)?;
            let mut out = output(out.as_deref())?;
            write_loss_csv(&records, &mut out)?;
            out.flush()?;
        }
        Command::TraceDump {
            model,
            variant,
            out,
        } => {
            let model = match model {
                Some(p) => ModelConfig::load(p)?,
                None => ModelConfig::sd_v1_default(),
            };
            let ops = trace_for(&model, variant)?;
            let mut out = output(out.as_deref())?;
            write_trace_csv(&ops, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) | Error::Overflow(_) | Error::ScaleCombination(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        // `loraq trace-dump | head`
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("loraq: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
