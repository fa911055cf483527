//! GEMM traces for one training step of a stack of cross-attention blocks.
//!
//! Only matrix multiplies are traced; softmax, normalisation and element-wise
//! work are not. Operation names follow `<forward op>[.grad_in|.grad_w|.update]`
//! so every backward GEMM can be paired with the forward GEMM it mirrors.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest text sequence a block may declare.
pub const MAX_TEXT_TOKENS: usize = 77;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Precision {
    Int8,
    Fp32,
}

impl Precision {
    /// Bytes per operand word.
    pub fn word_bytes(self) -> u64 {
        match self {
            Precision::Int8 => 1,
            Precision::Fp32 => 4,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Precision::Int8 => "INT8",
            Precision::Fp32 => "FP32",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pass {
    Forward,
    Backward,
    Update,
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Pass::Forward => "Forward",
            Pass::Backward => "Backward",
            Pass::Update => "Update",
        })
    }
}

/// One `M x K` by `K x N` matrix multiply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmOp {
    pub name: String,
    pub layer_id: String,
    pub pass: Pass,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub precision: Precision,
}

impl GemmOp {
    pub fn new(
        name: impl Into<String>,
        layer_id: impl Into<String>,
        pass: Pass,
        (m, k, n): (u64, u64, u64),
        precision: Precision,
    ) -> Result<Self> {
        let name = name.into();
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::Domain(format!(
                "{name}: GEMM dims must be >= 1, got {m}x{k}x{n}"
            )));
        }
        Ok(Self {
            name,
            layer_id: layer_id.into(),
            pass,
            m,
            k,
            n,
            precision,
        })
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n
    }

    /// Name of the forward op this op was derived from.
    pub fn base_name(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }
}

/// Linear projections inside a cross-attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Q,
    K,
    V,
    Out,
}

impl Projection {
    pub const ALL: [Projection; 4] = [Projection::Q, Projection::K, Projection::V, Projection::Out];

    /// `(d_in, d_out)` of the projection weight.
    pub fn dims(self, b: &BlockSpec) -> (usize, usize) {
        match self {
            Projection::Q | Projection::Out => (b.d_model, b.d_model),
            Projection::K | Projection::V => (b.d_context, b.d_model),
        }
    }

    /// Rows of the projection input (image tokens or text tokens).
    pub fn rows(self, b: &BlockSpec) -> usize {
        match self {
            Projection::Q | Projection::Out => b.n_img,
            Projection::K | Projection::V => b.n_txt,
        }
    }

    /// K and V project the text context; Q and Out project image features.
    pub fn reads_context(self) -> bool {
        matches!(self, Projection::K | Projection::V)
    }

    pub fn op_name(self) -> &'static str {
        match self {
            Projection::Q => "q_proj",
            Projection::K => "k_proj",
            Projection::V => "v_proj",
            Projection::Out => "out_proj",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    /// Image feature width.
    pub d_model: usize,
    /// Text embedding width.
    pub d_context: usize,
    /// Image tokens.
    pub n_img: usize,
    /// Text tokens.
    pub n_txt: usize,
    /// Number of identical blocks.
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

fn default_targets() -> Vec<Projection> {
    vec![Projection::K, Projection::V]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub rank: usize,
    #[serde(default = "default_targets")]
    pub lora_targets: Vec<Projection>,
    pub blocks: Vec<BlockSpec>,
}

const DEFAULT_MODEL_TOML: &str = include_str!("../../../configs/sd_v1_cross_attention.toml");

impl ModelConfig {
    /// The shipped Stable-Diffusion-v1-like cross-attention stack.
    pub fn sd_v1_default() -> Self {
        Self::from_toml_str(DEFAULT_MODEL_TOML).expect("bundled model config is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::config("blocks", "at least one block is required"));
        }
        if self.rank == 0 {
            return Err(Error::config("rank", "must be >= 1"));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let key = |f: &str| format!("blocks[{i}].{f}");
            for (field, v) in [
                ("d_model", b.d_model),
                ("d_context", b.d_context),
                ("n_img", b.n_img),
                ("n_txt", b.n_txt),
                ("count", b.count),
            ] {
                if v == 0 {
                    return Err(Error::config(key(field), "must be >= 1"));
                }
            }
            if b.n_txt > MAX_TEXT_TOKENS {
                return Err(Error::config(
                    key("n_txt"),
                    format!("{} exceeds the {MAX_TEXT_TOKENS}-token text limit", b.n_txt),
                ));
            }
            for p in &self.lora_targets {
                let (d_in, d_out) = p.dims(b);
                if self.rank > d_in.min(d_out) {
                    return Err(Error::config(
                        "rank",
                        format!(
                            "{} exceeds min(d_in, d_out) = {} of {}",
                            self.rank,
                            d_in.min(d_out),
                            key(p.op_name())
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

struct TraceBuilder {
    ops: Vec<GemmOp>,
    precision: Precision,
}

impl TraceBuilder {
    fn push(
        &mut self,
        name: String,
        layer: &str,
        pass: Pass,
        dims: (usize, usize, usize),
    ) -> Result<()> {
        let dims = (dims.0 as u64, dims.1 as u64, dims.2 as u64);
        self.ops
            .push(GemmOp::new(name, layer, pass, dims, self.precision)?);
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Variant {
    Lora,
    Full,
}

fn build(cfg: &ModelConfig, variant: Variant) -> Result<Vec<GemmOp>> {
    cfg.validate()?;
    let precision = match variant {
        Variant::Lora => Precision::Int8,
        Variant::Full => Precision::Fp32,
    };
    let mut t = TraceBuilder {
        ops: Vec::new(),
        precision,
    };
    let r = cfg.rank;
    let adapted = |p: Projection| variant == Variant::Lora && cfg.lora_targets.contains(&p);
    let trainable = |p: Projection| variant == Variant::Full && cfg.lora_targets.contains(&p);

    for (bi, b) in cfg.blocks.iter().enumerate() {
        for rep in 0..b.count {
            let layer = format!("blk{bi}.{rep}");
            let layer = layer.as_str();
            let (n_img, n_txt, d_model) = (b.n_img, b.n_txt, b.d_model);

            // forward
            for p in [Projection::Q, Projection::K, Projection::V] {
                let (d_in, d_out) = p.dims(b);
                let rows = p.rows(b);
                t.push(
                    p.op_name().into(),
                    layer,
                    Pass::Forward,
                    (rows, d_in, d_out),
                )?;
                if adapted(p) {
                    let base = p.op_name();
                    t.push(
                        format!("{base}_lora_down"),
                        layer,
                        Pass::Forward,
                        (rows, d_in, r),
                    )?;
                    t.push(
                        format!("{base}_lora_up"),
                        layer,
                        Pass::Forward,
                        (rows, r, d_out),
                    )?;
                }
            }
            t.push(
                "attn_score".into(),
                layer,
                Pass::Forward,
                (n_img, d_model, n_txt),
            )?;
            t.push(
                "attn_value".into(),
                layer,
                Pass::Forward,
                (n_img, n_txt, d_model),
            )?;
            {
                let p = Projection::Out;
                t.push(
                    p.op_name().into(),
                    layer,
                    Pass::Forward,
                    (n_img, d_model, d_model),
                )?;
                if adapted(p) {
                    t.push(
                        "out_proj_lora_down".into(),
                        layer,
                        Pass::Forward,
                        (n_img, d_model, r),
                    )?;
                    t.push(
                        "out_proj_lora_up".into(),
                        layer,
                        Pass::Forward,
                        (n_img, r, d_model),
                    )?;
                }
            }

            // backward, reverse order
            let backward_proj = |t: &mut TraceBuilder, p: Projection| -> Result<()> {
                let (d_in, d_out) = p.dims(b);
                let rows = p.rows(b);
                let base = p.op_name();
                // nothing upstream of the text context is trained, so K and V
                // propagate no gradient into their input
                let needs_grad_in = !p.reads_context();
                if adapted(p) {
                    // (M, K, N) of the up GEMM is (rows, r, d_out)
                    t.push(
                        format!("{base}_lora_up.grad_in"),
                        layer,
                        Pass::Backward,
                        (rows, d_out, r),
                    )?;
                    t.push(
                        format!("{base}_lora_up.grad_w"),
                        layer,
                        Pass::Backward,
                        (d_out, rows, r),
                    )?;
                    // (M, K, N) of the down GEMM is (rows, d_in, r)
                    t.push(
                        format!("{base}_lora_down.grad_w"),
                        layer,
                        Pass::Backward,
                        (d_in, rows, r),
                    )?;
                    if needs_grad_in {
                        t.push(
                            format!("{base}_lora_down.grad_in"),
                            layer,
                            Pass::Backward,
                            (rows, r, d_in),
                        )?;
                    }
                }
                if trainable(p) {
                    t.push(
                        format!("{base}.grad_w"),
                        layer,
                        Pass::Backward,
                        (d_in, rows, d_out),
                    )?;
                }
                if needs_grad_in {
                    t.push(
                        format!("{base}.grad_in"),
                        layer,
                        Pass::Backward,
                        (rows, d_out, d_in),
                    )?;
                }
                Ok(())
            };
            backward_proj(&mut t, Projection::Out)?;
            // dP = dO·Vᵀ and dV = Pᵀ·dO
            t.push(
                "attn_value.grad_in".into(),
                layer,
                Pass::Backward,
                (n_img, d_model, n_txt),
            )?;
            t.push(
                "attn_value.grad_w".into(),
                layer,
                Pass::Backward,
                (n_txt, n_img, d_model),
            )?;
            // dQ = dS·K and dK = dSᵀ·Q
            t.push(
                "attn_score.grad_in".into(),
                layer,
                Pass::Backward,
                (n_img, n_txt, d_model),
            )?;
            t.push(
                "attn_score.grad_w".into(),
                layer,
                Pass::Backward,
                (n_txt, n_img, d_model),
            )?;
            for p in [Projection::V, Projection::K, Projection::Q] {
                backward_proj(&mut t, p)?;
            }

            // parameter updates, W -= lr·G as an element-wise multiply-accumulate
            for p in Projection::ALL {
                let (d_in, d_out) = p.dims(b);
                let base = p.op_name();
                if adapted(p) {
                    t.push(
                        format!("{base}_lora_down.update"),
                        layer,
                        Pass::Update,
                        (d_in, 1, r),
                    )?;
                    t.push(
                        format!("{base}_lora_up.update"),
                        layer,
                        Pass::Update,
                        (d_out, 1, r),
                    )?;
                }
                if trainable(p) {
                    t.push(
                        format!("{base}.update"),
                        layer,
                        Pass::Update,
                        (d_in, 1, d_out),
                    )?;
                }
            }
        }
    }
    Ok(t.ops)
}

/// INT8 trace with adapters on `cfg.lora_targets` and every projection weight frozen.
pub fn build_lora_trace(cfg: &ModelConfig) -> Result<Vec<GemmOp>> {
    build(cfg, Variant::Lora)
}

/// FP32 trace without adapters, where the `cfg.lora_targets` projections are trained directly.
pub fn build_full_finetune_trace(cfg: &ModelConfig) -> Result<Vec<GemmOp>> {
    build(cfg, Variant::Full)
}

pub fn trace_macs(trace: &[GemmOp]) -> u64 {
    trace.iter().map(GemmOp::macs).sum()
}

/// Checks that each backward GEMM is a permutation of the dims of the forward GEMM
/// it mirrors within the same layer.
pub fn check_shape_chaining(trace: &[GemmOp]) -> Result<()> {
    let forward: HashMap<(&str, &str), &GemmOp> = trace
        .iter()
        .filter(|op| op.pass == Pass::Forward)
        .map(|op| ((op.layer_id.as_str(), op.name.as_str()), op))
        .collect();
    for op in trace.iter().filter(|op| op.pass == Pass::Backward) {
        let fwd = forward
            .get(&(op.layer_id.as_str(), op.base_name()))
            .ok_or_else(|| {
                Error::Invariant(format!("{} in {} has no forward op", op.name, op.layer_id))
            })?;
        let mut a = [op.m, op.k, op.n];
        let mut b = [fwd.m, fwd.k, fwd.n];
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::Invariant(format!(
                "{} ({}x{}x{}) is not a transposition of {} ({}x{}x{})",
                op.name, op.m, op.k, op.n, fwd.name, fwd.m, fwd.k, fwd.n
            )));
        }
    }
    Ok(())
}

/// Writes the trace as CSV with columns `name,layer_id,pass,M,K,N,precision`.
pub fn write_trace_csv<W: Write>(trace: &[GemmOp], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for op in trace {
        w.serialize(op)?;
    }
    w.flush()?;
    Ok(())
}
