//! Dense classifier networks and their training loop.
//!
//! Everything here works on row-major `f64` buffers. Matrix products go
//! through `matrixmultiply`; the rest is hand-written forward/backward code.

mod adam;
mod gradcheck;
mod net;
mod standardize;
mod train;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{finite_difference_check, finite_difference_check_in_mode, GradCheckFailure, GradCheckReport};
pub use net::{ClassifierNet, LayerShape, Mode, NetShape};
pub use standardize::Standardizer;
pub use train::{train_classifier, EpochRecord, PairedData, StopReason, TrainConfig, TrainOutcome};

/// Binary cross-entropy of a logit, in the overflow-free form
/// `max(f, 0) − f·y + log(1 + e^{−|f|})`.
pub fn bce_logit_loss(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `c ← a·b + beta·c` with `a` logically `m×k` and `b` logically `k×n`.
/// `ta`/`tb` mean the operand is stored transposed (row-major `k×m` / `n×k`).
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
