//! Low-rank adapted linear layer `Y = X·W + (X·A)·Bᵀ` with a frozen `W`.
//!
//! The backward pass only produces gradients for `A`, `B` and the input `X`;
//! `W` takes part in the input gradient but is never updated.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{fake_quantize, QuantGranularity};
use crate::tensor::{gaussian, half_sq_norm, matmul, RealTensor};
use crate::workload::ModelConfig;

/// Standard deviation of the Gaussian initialisation of `A`.
pub const A_INIT_STD: f64 = 0.02;

/// Full-rank part of the demo target that no rank-`r` adapter can absorb.
pub const PERTURB_STD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    /// Frozen weight, `d1 x d2`.
    w: RealTensor,
    /// Down projection, `d1 x r`.
    pub a: RealTensor,
    /// Up projection, `d2 x r`.
    pub b: RealTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraGradients {
    pub da: RealTensor,
    pub db: RealTensor,
    pub dx: RealTensor,
}

impl LoraLayer {
    pub fn new(w: RealTensor, a: RealTensor, b: RealTensor) -> Result<Self> {
        let (d1, d2) = w.dim();
        let r = a.ncols();
        if a.nrows() != d1 || b.nrows() != d2 || b.ncols() != r {
            return Err(Error::Shape(format!(
                "W {d1}x{d2} needs A {d1}xr and B {d2}xr, got A {}x{} and B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if r == 0 || r > d1.min(d2) {
            return Err(Error::Domain(format!(
                "rank {r} must lie in 1..={}",
                d1.min(d2)
            )));
        }
        Ok(Self { w, a, b })
    }

    /// `A ~ N(0, 0.02²)`, `B = 0`, so the adapted layer starts equal to the frozen one.
    pub fn init<R: Rng + ?Sized>(w: RealTensor, rank: usize, rng: &mut R) -> Result<Self> {
        let (d1, d2) = w.dim();
        let a = gaussian(rng, d1, rank, A_INIT_STD);
        let b = RealTensor::zeros((d2, rank));
        Self::new(w, a, b)
    }

    pub fn frozen_weight(&self) -> &RealTensor {
        &self.w
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn d_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w.ncols()
    }

    fn check_input(&self, x: &RealTensor) -> Result<()> {
        if x.ncols() != self.d_in() {
            return Err(Error::Shape(format!(
                "input has {} features, layer expects {}",
                x.ncols(),
                self.d_in()
            )));
        }
        Ok(())
    }

    fn check_output_like(&self, x: &RealTensor, y: &RealTensor, what: &str) -> Result<()> {
        if y.dim() != (x.nrows(), self.d_out()) {
            return Err(Error::Shape(format!(
                "{what} is {}x{}, expected {}x{}",
                y.nrows(),
                y.ncols(),
                x.nrows(),
                self.d_out()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &RealTensor) -> Result<RealTensor> {
        self.check_input(x)?;
        let frozen = matmul(x, &self.w)?;
        let down = matmul(x, &self.a)?;
        Ok(frozen + matmul(&down, &self.b.t().to_owned())?)
    }

    pub fn backward(&self, x: &RealTensor, dy: &RealTensor) -> Result<LoraGradients> {
        self.check_input(x)?;
        self.check_output_like(x, dy, "dY")?;
        let dy_b = dy.dot(&self.b);
        let dx = dy.dot(&self.w.t()) + dy_b.dot(&self.a.t());
        let da = x.t().dot(&dy_b);
        let db = dy.t().dot(&x.dot(&self.a));
        Ok(LoraGradients { da, db, dx })
    }

    /// `½‖forward(x) − target‖²`.
    pub fn loss(&self, x: &RealTensor, target: &RealTensor) -> Result<f64> {
        let y = self.forward(x)?;
        self.check_output_like(x, target, "target")?;
        Ok(half_sq_norm(&(y - target)))
    }

    fn sgd(&self, grads: &LoraGradients, lr: f64) -> Self {
        Self {
            w: self.w.clone(),
            a: &self.a - &(lr * &grads.da),
            b: &self.b - &(lr * &grads.db),
        }
    }
}

fn check_lr(lr: f64) -> Result<()> {
    // lr = 0 is accepted and leaves the layer unchanged
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Domain(format!(
            "learning rate {lr} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// Full-precision SGD step on `½‖Y − T‖²`. Returns the updated layer and the pre-update loss.
pub fn train_step(
    layer: &LoraLayer,
    x: &RealTensor,
    target: &RealTensor,
    lr: f64,
) -> Result<(LoraLayer, f64)> {
    check_lr(lr)?;
    let y = layer.forward(x)?;
    layer.check_output_like(x, target, "target")?;
    let dy = y - target;
    let loss = half_sq_norm(&dy);
    let grads = layer.backward(x, &dy)?;
    Ok((layer.sgd(&grads, lr), loss))
}

/// Bitwidths per tensor class for the quantized step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantBits {
    pub weights: u32,
    pub activations: u32,
    pub gradients: u32,
}

impl QuantBits {
    pub fn uniform(q: u32) -> Self {
        Self {
            weights: q,
            activations: q,
            gradients: q,
        }
    }
}

const WEIGHT_GRAIN: QuantGranularity = QuantGranularity::PerTensor;
/// Activations are scaled per feature (column).
const ACTIVATION_GRAIN: QuantGranularity = QuantGranularity::PerAxis(1);
/// Gradients are scaled per output column.
const GRADIENT_GRAIN: QuantGranularity = QuantGranularity::PerAxis(1);

/// One fully quantized training step with uniform bitwidth `q`.
pub fn train_step_quantized(
    layer: &LoraLayer,
    x: &RealTensor,
    target: &RealTensor,
    lr: f64,
    q: u32,
) -> Result<(LoraLayer, f64)> {
    train_step_quantized_with(layer, x, target, lr, QuantBits::uniform(q))
}

/// Every GEMM operand is fake-quantized: weights per tensor, activations and
/// gradients per column. Rounding is treated as identity when differentiating
/// (straight-through), and the SGD update is applied to the full-precision
/// master copies of `A` and `B`. The returned loss is measured on the quantized forward output.
pub fn train_step_quantized_with(
    layer: &LoraLayer,
    x: &RealTensor,
    target: &RealTensor,
    lr: f64,
    bits: QuantBits,
) -> Result<(LoraLayer, f64)> {
    check_lr(lr)?;
    layer.check_input(x)?;
    layer.check_output_like(x, target, "target")?;

    let wq = fake_quantize(&layer.w, bits.weights, WEIGHT_GRAIN)?;
    let aq = fake_quantize(&layer.a, bits.weights, WEIGHT_GRAIN)?;
    let bq = fake_quantize(&layer.b, bits.weights, WEIGHT_GRAIN)?;
    let xq = fake_quantize(x, bits.activations, ACTIVATION_GRAIN)?;

    let down = fake_quantize(&xq.dot(&aq), bits.activations, ACTIVATION_GRAIN)?;
    let y = xq.dot(&wq) + down.dot(&bq.t());
    let residual = y - target;
    let loss = half_sq_norm(&residual);

    let dy = fake_quantize(&residual, bits.gradients, GRADIENT_GRAIN)?;
    let dy_b = fake_quantize(&dy.dot(&bq), bits.gradients, GRADIENT_GRAIN)?;
    let grads = LoraGradients {
        da: xq.t().dot(&dy_b),
        db: dy.t().dot(&down),
        // the input gradient runs through the frozen weight as well
        dx: dy.dot(&wq.t()) + dy_b.dot(&aq.t()),
    };
    Ok((layer.sgd(&grads, lr), loss))
}

/// Central-difference gradients of the full-precision loss with respect to every
/// entry of `A`, `B` and `X`. The step is `eps · max(1, |p|)` per parameter.
pub fn finite_diff_grad(
    layer: &LoraLayer,
    x: &RealTensor,
    target: &RealTensor,
    eps: f64,
) -> Result<LoraGradients> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps {eps} must be positive")));
    }
    layer.check_input(x)?;
    layer.check_output_like(x, target, "target")?;

    fn central<F: FnMut(&RealTensor) -> f64>(p: &RealTensor, eps: f64, mut f: F) -> RealTensor {
        let mut probe = p.clone();
        RealTensor::from_shape_fn(p.dim(), |idx| {
            let orig = p[idx];
            let h = eps * orig.abs().max(1.0);
            probe[idx] = orig + h;
            let up = f(&probe);
            probe[idx] = orig - h;
            let down = f(&probe);
            probe[idx] = orig;
            (up - down) / (2.0 * h)
        })
    }

    let loss_of =
        |l: &LoraLayer, xx: &RealTensor| l.loss(xx, target).expect("shapes checked above");
    let mut scratch = layer.clone();
    let da = central(&layer.a, eps, |a| {
        scratch.a = a.clone();
        loss_of(&scratch, x)
    });
    let mut scratch = layer.clone();
    let db = central(&layer.b, eps, |b| {
        scratch.b = b.clone();
        loss_of(&scratch, x)
    });
    let dx = central(x, eps, |xx| loss_of(layer, xx));
    Ok(LoraGradients { da, db, dx })
}

/// Share of parameters that receive updates when the configured projections carry adapters.
///
/// The denominator counts every frozen projection weight of the cross-attention stack
/// plus the adapter parameters themselves.
pub fn trainable_fraction(cfg: &ModelConfig) -> Result<f64> {
    cfg.validate()?;
    let r = cfg.rank as u64;
    let mut trainable = 0u64;
    let mut total = 0u64;
    for block in &cfg.blocks {
        let count = block.count as u64;
        for proj in crate::workload::Projection::ALL {
            let (d_in, d_out) = proj.dims(block);
            let (d_in, d_out) = (d_in as u64, d_out as u64);
            total += count * d_in * d_out;
            if cfg.lora_targets.contains(&proj) {
                let adapter = count * (d_in + d_out) * r;
                trainable += adapter;
                total += adapter;
            }
        }
    }
    Ok(trainable as f64 / total as f64)
}

/// Settings of the desk-scale training comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDemoConfig {
    /// Layer width (`d1 = d2`).
    pub dim: usize,
    pub rank: usize,
    /// Rows of the training batch.
    pub samples: usize,
    pub steps: usize,
    pub bits: u32,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainDemoConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            rank: 4,
            samples: 32,
            steps: 200,
            bits: 8,
            lr: 0.003,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss_fp: f64,
    pub loss_quant: f64,
}

/// The regression problem used by the training demo: a frozen weight, and a
/// target produced by a rank-`r` shift of that weight plus a small full-rank perturbation.
#[derive(Debug, Clone)]
pub struct DemoProblem {
    pub layer: LoraLayer,
    pub x: RealTensor,
    pub target: RealTensor,
}

impl DemoProblem {
    pub fn generate(cfg: &TrainDemoConfig) -> Result<Self> {
        use rand::SeedableRng;
        if cfg.dim == 0 || cfg.samples == 0 {
            return Err(Error::Domain("dim and samples must be positive".into()));
        }
        if cfg.rank == 0 || cfg.rank > cfg.dim {
            return Err(Error::Domain(format!(
                "rank {} must lie in 1..={}",
                cfg.rank, cfg.dim
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.dim;
        let inv = 1.0 / (d as f64).sqrt();
        let w = gaussian(&mut rng, d, d, inv);
        let x = gaussian(&mut rng, cfg.samples, d, 1.0);
        let shift_a = gaussian(&mut rng, d, cfg.rank, inv);
        let shift_b = gaussian(&mut rng, d, cfg.rank, 1.0);
        let perturb = gaussian(&mut rng, d, d, PERTURB_STD * inv);
        let target_w = &w + &shift_a.dot(&shift_b.t()) + &perturb;
        let target = x.dot(&target_w);
        let layer = LoraLayer::init(w, cfg.rank, &mut rng)?;
        Ok(Self { layer, x, target })
    }
}

/// Trains the same initial layer in full precision and quantized, side by side.
///
/// Record `i` holds the losses measured before update `i`; `steps = 0` yields no records.
pub fn run_train_demo(cfg: &TrainDemoConfig) -> Result<Vec<LossRecord>> {
    let problem = DemoProblem::generate(cfg)?;
    let mut fp = problem.layer.clone();
    let mut quant = problem.layer;
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (next_fp, loss_fp) = train_step(&fp, &problem.x, &problem.target, cfg.lr)?;
        let (next_q, loss_quant) =
            train_step_quantized(&quant, &problem.x, &problem.target, cfg.lr, cfg.bits)?;
        fp = next_fp;
        quant = next_q;
        records.push(LossRecord {
            step,
            loss_fp,
            loss_quant,
        });
    }
    Ok(records)
}
