//! Performance, energy and numerics models for a systolic-array accelerator that
//! fine-tunes cross-attention layers with INT8 LoRA training.
//!
//! * [`quant`]: symmetric integer quantization and integer GEMM.
//! * [`lora`]: adapted linear layer, its gradients, and a quantized training step.
//! * [`workload`]: GEMM traces of a training step.
//! * [`simcore`]: WS/OS cycle and traffic models plus a reference simulator.
//! * [`sched`]: per-layer dataflow selection and whole-trace reports.
//! * [`energy`]: energy, EDP and peak throughput.

pub mod config;
pub mod energy;
pub mod error;
pub mod lora;
pub mod quant;
pub mod report;
pub mod sched;
pub mod simcore;
pub mod tensor;
pub mod workload;

pub use config::HardwareConfig;
pub use energy::{edp, energy_of, peak_tops, EnergyConfig};
pub use error::{Error, Result};
pub use lora::{LoraGradients, LoraLayer};
pub use quant::{QuantGranularity, QuantParams, QuantTensor};
pub use sched::{run_trace, select_dataflow, Policy, TraceReport};
pub use simcore::{ArrayConfig, Dataflow, MemConfig, SimResult};
pub use tensor::RealTensor;
pub use workload::{GemmOp, ModelConfig, Pass, Precision};
