//! Symmetric integer quantization.
//!
//! A slice with largest magnitude `x_max` gets scale `S = x_max / (2^(q-1) - 1)`;
//! values map to `round(x / S)` clamped to the symmetric range `[-(2^(q-1)-1), 2^(q-1)-1]`.
//! Rounding is half-away-from-zero. Slices that are entirely zero get `S = 1`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::RealTensor;

pub const MIN_BITWIDTH: u32 = 2;
pub const MAX_BITWIDTH: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantGranularity {
    PerTensor,
    /// One scale per index along the given axis (0 = rows, 1 = columns).
    PerAxis(usize),
}

impl QuantGranularity {
    fn slice_count(self, shape: (usize, usize)) -> Result<usize> {
        match self {
            QuantGranularity::PerTensor => Ok(1),
            QuantGranularity::PerAxis(0) => Ok(shape.0),
            QuantGranularity::PerAxis(1) => Ok(shape.1),
            QuantGranularity::PerAxis(axis) => Err(Error::Domain(format!(
                "axis {axis} is not a dimension of a 2-D tensor"
            ))),
        }
    }

    #[inline]
    fn slice_of(self, i: usize, j: usize) -> usize {
        match self {
            QuantGranularity::PerTensor => 0,
            QuantGranularity::PerAxis(0) => i,
            QuantGranularity::PerAxis(_) => j,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scales: Vec<f64>,
    pub bitwidth: u32,
    pub granularity: QuantGranularity,
}

impl QuantParams {
    pub fn new(scales: Vec<f64>, bitwidth: u32, granularity: QuantGranularity) -> Result<Self> {
        check_bitwidth(bitwidth)?;
        if let Some(bad) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Domain(format!(
                "scale {bad} is not a positive finite number"
            )));
        }
        if granularity == QuantGranularity::PerTensor && scales.len() != 1 {
            return Err(Error::Domain(format!(
                "per-tensor params need exactly one scale, got {}",
                scales.len()
            )));
        }
        Ok(Self {
            scales,
            bitwidth,
            granularity,
        })
    }

    /// Largest representable code, `2^(q-1) - 1`.
    pub fn qmax(&self) -> i64 {
        qmax(self.bitwidth)
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        let expected = self.granularity.slice_count(shape)?;
        if expected != self.scales.len() {
            return Err(Error::Shape(format!(
                "{:?} over a {}x{} tensor needs {} scales, params carry {}",
                self.granularity,
                shape.0,
                shape.1,
                expected,
                self.scales.len()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn scale_at(&self, i: usize, j: usize) -> f64 {
        self.scales[self.granularity.slice_of(i, j)]
    }
}

/// Integer codes plus the parameters needed to map them back to reals.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub data: Array2<i32>,
    pub params: QuantParams,
}

impl QuantTensor {
    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }
}

pub fn qmax(bitwidth: u32) -> i64 {
    (1_i64 << (bitwidth - 1)) - 1
}

fn check_bitwidth(q: u32) -> Result<()> {
    if !(MIN_BITWIDTH..=MAX_BITWIDTH).contains(&q) {
        return Err(Error::Domain(format!(
            "bitwidth {q} outside supported range {MIN_BITWIDTH}..={MAX_BITWIDTH}"
        )));
    }
    Ok(())
}

pub fn compute_scale(x: &RealTensor, q: u32, g: QuantGranularity) -> Result<QuantParams> {
    if x.is_empty() {
        return Err(Error::Domain("cannot quantize an empty tensor".into()));
    }
    check_bitwidth(q)?;
    let n = g.slice_count(x.dim())?;
    let mut max_abs = vec![0.0_f64; n];
    for ((i, j), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite value {v} at ({i}, {j})")));
        }
        let s = g.slice_of(i, j);
        max_abs[s] = max_abs[s].max(v.abs());
    }
    let denom = qmax(q) as f64;
    let scales = max_abs
        .into_iter()
        .map(|m| if m == 0.0 { 1.0 } else { m / denom })
        .collect();
    QuantParams::new(scales, q, g)
}

pub fn quantize(x: &RealTensor, p: &QuantParams) -> Result<QuantTensor> {
    p.check_shape(x.dim())?;
    let top = p.qmax() as f64;
    let data = Array2::from_shape_fn(x.dim(), |(i, j)| {
        // f64::round is half-away-from-zero
        (x[[i, j]] / p.scale_at(i, j)).round().clamp(-top, top) as i32
    });
    Ok(QuantTensor {
        data,
        params: p.clone(),
    })
}

pub fn dequantize(xq: &QuantTensor) -> RealTensor {
    let p = &xq.params;
    RealTensor::from_shape_fn(xq.shape(), |(i, j)| {
        xq.data[[i, j]] as f64 * p.scale_at(i, j)
    })
}

/// `dequantize(quantize(x, compute_scale(x, q, g)))`.
pub fn fake_quantize(x: &RealTensor, q: u32, g: QuantGranularity) -> Result<RealTensor> {
    let p = compute_scale(x, q, g)?;
    Ok(dequantize(&quantize(x, &p)?))
}

/// Exact integer product of two quantized operands.
#[derive(Debug, Clone, PartialEq)]
pub struct IntGemmOutput {
    /// Wide accumulator, one entry per output element.
    pub accum: Array2<i64>,
    /// Scale contributed by the left operand, per output row.
    pub row_scales: Vec<f64>,
    /// Scale contributed by the right operand, per output column.
    pub col_scales: Vec<f64>,
}

impl IntGemmOutput {
    /// Effective scale of output element `(i, j)`.
    pub fn scale_at(&self, i: usize, j: usize) -> f64 {
        self.row_scales[i] * self.col_scales[j]
    }

    pub fn dequantize(&self) -> RealTensor {
        RealTensor::from_shape_fn(self.accum.dim(), |(i, j)| {
            self.accum[[i, j]] as f64 * self.scale_at(i, j)
        })
    }
}

/// Integer GEMM `a (M x K) · b (K x N)` with scale propagation.
///
/// Every dot product must see a single `(scale_a, scale_b)` pair, so `a` may be
/// per-tensor or per-row and `b` per-tensor or per-column. Scales along K are rejected.
pub fn int_gemm(a: &QuantTensor, b: &QuantTensor) -> Result<IntGemmOutput> {
    let (m, k) = a.shape();
    let (kb, n) = b.shape();
    if k != kb {
        return Err(Error::Shape(format!(
            "inner dimensions differ: {m}x{k} · {kb}x{n}"
        )));
    }
    let row_scales = match a.params.granularity {
        QuantGranularity::PerTensor => vec![a.params.scales[0]; m],
        QuantGranularity::PerAxis(0) => a.params.scales.clone(),
        g => {
            return Err(Error::ScaleCombination(format!(
                "left operand quantized {g:?} varies along the reduction axis"
            )))
        }
    };
    let col_scales = match b.params.granularity {
        QuantGranularity::PerTensor => vec![b.params.scales[0]; n],
        QuantGranularity::PerAxis(1) => b.params.scales.clone(),
        g => {
            return Err(Error::ScaleCombination(format!(
                "right operand quantized {g:?} varies along the reduction axis"
            )))
        }
    };
    let worst = k as i128 * a.params.qmax() as i128 * b.params.qmax() as i128;
    if worst > i64::MAX as i128 {
        return Err(Error::Overflow(format!(
            "K = {k} at {}x{} bits can reach {worst}, beyond a 64-bit accumulator",
            a.params.bitwidth, b.params.bitwidth
        )));
    }
    let a64 = a.data.mapv(i64::from);
    let b64 = b.data.mapv(i64::from);
    let accum = a64.dot(&b64);
    Ok(IntGemmOutput {
        accum,
        row_scales,
        col_scales,
    })
}

/// Per-column view helper: fake-quantize each column of `x` on its own per-tensor grid.
pub fn fake_quantize_columns_independently(x: &RealTensor, q: u32) -> Result<RealTensor> {
    let mut out = x.clone();
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let col = col.to_owned().insert_axis(Axis(1));
        let fq = fake_quantize(&col, q, QuantGranularity::PerTensor)?;
        out.column_mut(j).assign(&fq.column(0));
    }
    Ok(out)
}
