//! Dense real matrices used as the floating-point reference domain.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Row-major real matrix. Vectors are represented as `1 x n` matrices.
pub type RealTensor = Array2<f64>;

/// Checked matrix product `a · b`.
pub fn matmul(a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    if a.ncols() != b.nrows() {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.dot(b))
}

/// Plain triple-loop product, kept separate from `ndarray`'s kernel for use as a reference.
pub fn naive_matmul(a: &RealTensor, b: &RealTensor) -> RealTensor {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = RealTensor::zeros((a.nrows(), b.ncols()));
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut acc = 0.0;
            for k in 0..a.ncols() {
                acc += a[[i, k]] * b[[k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> RealTensor {
    let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
    RealTensor::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

pub fn uniform<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> RealTensor {
    let dist = Uniform::new_inclusive(lo, hi).expect("lo <= hi");
    RealTensor::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

/// Largest absolute element, 0 for an empty matrix.
pub fn max_abs(x: &RealTensor) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max |a - b|` over all elements.
pub fn max_abs_diff(a: &RealTensor, b: &RealTensor) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Half the squared Frobenius norm.
pub fn half_sq_norm(x: &RealTensor) -> f64 {
    0.5 * x.iter().map(|v| v * v).sum::<f64>()
}
