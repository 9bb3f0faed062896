use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const EVAL_CHUNK: usize = 4096;

/// Width/depth of a residual classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub blocks: usize,
}

/// Batchnorm uses batch statistics in `Train` and frozen running averages in
/// `Eval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug)]
struct LinearIx {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Clone, Copy, Debug)]
struct BnIx {
    gamma: usize,
    beta: usize,
    /// Running mean at `running`, running variance at `running + width`.
    running: usize,
    width: usize,
}

#[derive(Clone, Copy, Debug)]
struct BlockIx {
    bn1: BnIx,
    lin1: LinearIx,
    bn2: BnIx,
    lin2: LinearIx,
}

/// One named parameter tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Layout {
    input: LinearIx,
    blocks: Vec<BlockIx>,
    head: LinearIx,
    n_params: usize,
    n_running: usize,
    tensors: Vec<LayerShape>,
}

impl Layout {
    fn new(shape: NetShape) -> Self {
        let mut tensors = Vec::new();
        let mut off = 0;
        let mut running = 0;
        let mut take = |name: String, dims: Vec<usize>, off: &mut usize| {
            let start = *off;
            *off += dims.iter().product::<usize>();
            tensors.push(LayerShape { name, offset: start, shape: dims });
            start
        };
        let linear = |name: &str, fan_in: usize, fan_out: usize, off: &mut usize, take: &mut dyn FnMut(String, Vec<usize>, &mut usize) -> usize| {
            let w = take(format!("{name}.weight"), vec![fan_in, fan_out], off);
            let b = take(format!("{name}.bias"), vec![fan_out], off);
            LinearIx { w, b, fan_in, fan_out }
        };
        let h = shape.hidden;
        let input = linear("input", shape.input, h, &mut off, &mut take);
        let mut blocks = Vec::with_capacity(shape.blocks);
        for k in 0..shape.blocks {
            let mut bn = |name: String, off: &mut usize, take: &mut dyn FnMut(String, Vec<usize>, &mut usize) -> usize| {
                let gamma = take(format!("{name}.weight"), vec![h], off);
                let beta = take(format!("{name}.bias"), vec![h], off);
                let ix = BnIx { gamma, beta, running, width: h };
                running += 2 * h;
                ix
            };
            let bn1 = bn(format!("block{k}.bn1"), &mut off, &mut take);
            let lin1 = linear(&format!("block{k}.linear1"), h, h, &mut off, &mut take);
            let bn2 = bn(format!("block{k}.bn2"), &mut off, &mut take);
            let lin2 = linear(&format!("block{k}.linear2"), h, h, &mut off, &mut take);
            blocks.push(BlockIx { bn1, lin1, bn2, lin2 });
        }
        let head = linear("head", h, 1, &mut off, &mut take);
        Layout {
            input,
            blocks,
            head,
            n_params: off,
            n_running: running,
            tensors,
        }
    }
}

struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct BlockCache {
    bn1: BnCache,
    r1: Vec<f64>,
    bn2: BnCache,
    r2: Vec<f64>,
}

/// Activations kept by a forward pass for the matching backward pass.
pub(crate) struct Tape {
    n: usize,
    mode: Mode,
    input: Vec<f64>,
    blocks: Vec<BlockCache>,
    last_hidden: Vec<f64>,
}

/// Per-batchnorm (mean, biased variance) observed in a training-mode pass.
pub(crate) type BatchStats = Vec<(Vec<f64>, Vec<f64>)>;

/// Residual classifier `f_φ(x, ϑ)`: linear → residual blocks
/// (`[batchnorm → ReLU → linear] × 2` plus skip) → linear scalar head.
/// The raw output is the log ratio; no sigmoid is applied.
#[derive(Clone, Debug)]
pub struct ClassifierNet {
    shape: NetShape,
    layout: Layout,
    params: Vec<f64>,
    running: Vec<f64>,
}

impl PartialEq for ClassifierNet {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.params == other.params && self.running == other.running
    }
}

fn linear_forward(params: &[f64], ix: LinearIx, x: &[f64], n: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * ix.fan_out);
    let bias = &params[ix.b..ix.b + ix.fan_out];
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    gemm(n, ix.fan_in, ix.fan_out, x, false, &params[ix.w..], false, 1.0, &mut y);
    y
}

/// Accumulates dW, db into `grads` and returns dX.
fn linear_backward(params: &[f64], ix: LinearIx, x: &[f64], dy: &[f64], n: usize, grads: &mut [f64], need_dx: bool) -> Vec<f64> {
    gemm(ix.fan_in, n, ix.fan_out, x, true, dy, false, 1.0, &mut grads[ix.w..ix.w + ix.fan_in * ix.fan_out]);
    let db = &mut grads[ix.b..ix.b + ix.fan_out];
    for row in dy.chunks_exact(ix.fan_out) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; n * ix.fan_in];
    gemm(n, ix.fan_out, ix.fan_in, dy, false, &params[ix.w..], true, 0.0, &mut dx);
    dx
}

fn column_stats(x: &[f64], n: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; w];
    for row in x.chunks_exact(w) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; w];
    for row in x.chunks_exact(w) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n as f64);
    (mean, var)
}

impl ClassifierNet {
    /// Randomly initialised network. Linear layers use `U(±1/√fan_in)`; the
    /// last linear layer of each residual block starts at `U(±1e-3)` so that
    /// blocks begin close to the identity.
    pub fn new<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let layout = Layout::new(shape);
        let mut params = vec![0.0; layout.n_params];
        let mut init = |ix: LinearIx, bound: f64, params: &mut [f64]| {
            for p in &mut params[ix.w..ix.w + ix.fan_in * ix.fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
            for p in &mut params[ix.b..ix.b + ix.fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        init(layout.input, 1.0 / (layout.input.fan_in as f64).sqrt(), &mut params);
        for b in &layout.blocks {
            params[b.bn1.gamma..b.bn1.gamma + b.bn1.width].fill(1.0);
            params[b.bn2.gamma..b.bn2.gamma + b.bn2.width].fill(1.0);
            init(b.lin1, 1.0 / (b.lin1.fan_in as f64).sqrt(), &mut params);
            init(b.lin2, 1e-3, &mut params);
        }
        init(layout.head, 1.0 / (layout.head.fan_in as f64).sqrt(), &mut params);
        let mut running = vec![0.0; layout.n_running];
        for b in &layout.blocks {
            for bn in [b.bn1, b.bn2] {
                running[bn.running + bn.width..bn.running + 2 * bn.width].fill(1.0);
            }
        }
        Self {
            shape,
            layout,
            params,
            running,
        }
    }

    /// Rebuilds a network from stored tensors.
    pub fn from_parts(shape: NetShape, params: Vec<f64>, running: Vec<f64>) -> Option<Self> {
        let layout = Layout::new(shape);
        (params.len() == layout.n_params && running.len() == layout.n_running).then_some(Self {
            shape,
            layout,
            params,
            running,
        })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[f64] {
        &self.running
    }

    pub fn num_params(&self) -> usize {
        self.layout.n_params
    }

    pub fn layer_shapes(&self) -> &[LayerShape] {
        &self.layout.tensors
    }

    /// Name of the tensor holding flat parameter `index`.
    pub fn layer_of(&self, index: usize) -> &str {
        self.layout
            .tensors
            .iter()
            .rev()
            .find(|t| t.offset <= index)
            .map(|t| t.name.as_str())
            .unwrap_or("?")
    }

    /// Zeroes the scalar head, making the network output exactly 0.
    pub fn zero_head(&mut self) {
        let h = self.layout.head;
        self.params[h.w..h.w + h.fan_in].fill(0.0);
        self.params[h.b] = 0.0;
    }

    fn bn_forward(&self, ix: BnIx, x: &mut [f64], n: usize, mode: Mode, stats: Option<&mut BatchStats>) -> BnCache {
        let w = ix.width;
        let (mean, var) = match mode {
            Mode::Train => {
                let (m, v) = column_stats(x, n, w);
                if let Some(s) = stats {
                    s.push((m.clone(), v.clone()));
                }
                (m, v)
            }
            Mode::Eval => (
                self.running[ix.running..ix.running + w].to_vec(),
                self.running[ix.running + w..ix.running + 2 * w].to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gamma = &self.params[ix.gamma..ix.gamma + w];
        let beta = &self.params[ix.beta..ix.beta + w];
        let mut xhat = x.to_vec();
        for (row, xrow) in xhat.chunks_exact_mut(w).zip(x.chunks_exact_mut(w)) {
            for j in 0..w {
                let h = (row[j] - mean[j]) * inv_std[j];
                row[j] = h;
                xrow[j] = gamma[j] * h + beta[j];
            }
        }
        BnCache { xhat, inv_std }
    }

    fn bn_backward(&self, ix: BnIx, cache: &BnCache, dy: &[f64], n: usize, mode: Mode, grads: &mut [f64]) -> Vec<f64> {
        let w = ix.width;
        let gamma = &self.params[ix.gamma..ix.gamma + w];
        let mut sum_dy = vec![0.0; w];
        let mut sum_dy_xhat = vec![0.0; w];
        for (d, h) in dy.chunks_exact(w).zip(cache.xhat.chunks_exact(w)) {
            for j in 0..w {
                sum_dy[j] += d[j];
                sum_dy_xhat[j] += d[j] * h[j];
            }
        }
        for j in 0..w {
            grads[ix.gamma + j] += sum_dy_xhat[j];
            grads[ix.beta + j] += sum_dy[j];
        }
        let mut dx = vec![0.0; n * w];
        match mode {
            Mode::Eval => {
                for (o, d) in dx.chunks_exact_mut(w).zip(dy.chunks_exact(w)) {
                    for j in 0..w {
                        o[j] = d[j] * gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                let nf = n as f64;
                for ((o, d), h) in dx.chunks_exact_mut(w).zip(dy.chunks_exact(w)).zip(cache.xhat.chunks_exact(w)) {
                    for j in 0..w {
                        let g = gamma[j] * cache.inv_std[j] / nf;
                        o[j] = g * (nf * d[j] - sum_dy[j] - h[j] * sum_dy_xhat[j]);
                    }
                }
            }
        }
        dx
    }

    /// Forward pass over `n` rows. Returns logits and, when requested, the
    /// activations for `backward`.
    pub(crate) fn forward(&self, x: &[f64], n: usize, mode: Mode, keep_tape: bool, mut stats: Option<&mut BatchStats>) -> (Vec<f64>, Option<Tape>) {
        assert_eq!(x.len(), n * self.shape.input, "input has wrong width");
        let relu = |v: &mut [f64]| v.iter_mut().for_each(|a| *a = a.max(0.0));
        let mut h = linear_forward(&self.params, self.layout.input, x, n);
        let mut caches = Vec::new();
        for b in &self.layout.blocks {
            let mut a = h.clone();
            let bn1 = self.bn_forward(b.bn1, &mut a, n, mode, stats.as_deref_mut());
            relu(&mut a);
            let mut l1 = linear_forward(&self.params, b.lin1, &a, n);
            let bn2 = self.bn_forward(b.bn2, &mut l1, n, mode, stats.as_deref_mut());
            relu(&mut l1);
            let l2 = linear_forward(&self.params, b.lin2, &l1, n);
            for (hv, d) in h.iter_mut().zip(&l2) {
                *hv += d;
            }
            if keep_tape {
                caches.push(BlockCache { bn1, r1: a, bn2, r2: l1 });
            }
        }
        let out = linear_forward(&self.params, self.layout.head, &h, n);
        let tape = keep_tape.then(|| Tape {
            n,
            mode,
            input: x.to_vec(),
            blocks: caches,
            last_hidden: h,
        });
        (out, tape)
    }

    /// Gradient of `Σ_i dout_i · f(x_i)` with respect to every parameter.
    pub(crate) fn backward(&self, tape: &Tape, dout: &[f64]) -> Vec<f64> {
        let n = tape.n;
        let mut grads = vec![0.0; self.layout.n_params];
        let mut dh = linear_backward(&self.params, self.layout.head, &tape.last_hidden, dout, n, &mut grads, true);
        for (b, c) in self.layout.blocks.iter().zip(&tape.blocks).rev() {
            let mut dr2 = linear_backward(&self.params, b.lin2, &c.r2, &dh, n, &mut grads, true);
            for (d, r) in dr2.iter_mut().zip(&c.r2) {
                if *r <= 0.0 {
                    *d = 0.0;
                }
            }
            let dl1 = self.bn_backward(b.bn2, &c.bn2, &dr2, n, tape.mode, &mut grads);
            let mut dr1 = linear_backward(&self.params, b.lin1, &c.r1, &dl1, n, &mut grads, true);
            for (d, r) in dr1.iter_mut().zip(&c.r1) {
                if *r <= 0.0 {
                    *d = 0.0;
                }
            }
            let dskip = self.bn_backward(b.bn1, &c.bn1, &dr1, n, tape.mode, &mut grads);
            for (d, s) in dh.iter_mut().zip(&dskip) {
                *d += s;
            }
        }
        linear_backward(&self.params, self.layout.input, &tape.input, &dh, n, &mut grads, false);
        grads
    }

    /// Folds observed batch statistics into the running averages
    /// (unbiased variance, momentum 0.1).
    pub(crate) fn update_running(&mut self, stats: &BatchStats, n: usize) {
        let bns: Vec<BnIx> = self.layout.blocks.iter().flat_map(|b| [b.bn1, b.bn2]).collect();
        let unbias = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
        for (ix, (mean, var)) in bns.iter().zip(stats) {
            for j in 0..ix.width {
                let rm = &mut self.running[ix.running + j];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[j];
                let rv = &mut self.running[ix.running + ix.width + j];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[j] * unbias;
            }
        }
    }

    /// Evaluation-mode logits, `f = log r̂`, for `n` input rows.
    pub fn predict(&self, x: &[f64], n: usize) -> Vec<f64> {
        let w = self.shape.input;
        let mut out = Vec::with_capacity(n);
        for chunk in x[..n * w].chunks(EVAL_CHUNK * w) {
            let rows = chunk.len() / w;
            out.extend(self.forward(chunk, rows, Mode::Eval, false, None).0);
        }
        out
    }
}
