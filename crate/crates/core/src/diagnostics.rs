//! Quality checks for estimated posteriors: classifier two-sample tests,
//! histogram KL, empirical coverage of HPD sets, boundary intersection and a
//! Kolmogorov–Smirnov test.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{bce_logit_loss, gemm, sigmoid, AdamState, Standardizer};
use crate::posterior::{grid_posterior, hpd, GridPosterior};
use crate::prior::{FactorizablePrior, Region};
use crate::ratio::{MarginalIndex, RatioHead};
use crate::seed::{self, tag};
use crate::simulator::Simulator;

pub const C2ST_MIN_SAMPLES: usize = 50;
/// Pseudo-count added to every histogram bin before computing KL.
pub const KL_PSEUDO_COUNT: f64 = 1.0;
pub const DEFAULT_COVERAGE_GRID: usize = 200;

/// Settings of the two-sample classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C2stConfig {
    pub folds: usize,
    /// Hidden width as a multiple of the input dimension.
    pub width_factor: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            width_factor: 10,
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
        }
    }
}

/// Two-hidden-layer ReLU network with a single logit output. Weights are
/// stored `in × out` so a batch forward pass is `X·W + b`.
struct Mlp {
    sizes: [usize; 4],
    params: Vec<f64>,
}

struct MlpTape {
    n: usize,
    acts: [Vec<f64>; 3],
}

impl Mlp {
    fn new(input: usize, hidden: usize, rng: &mut dyn RngCore) -> Self {
        let sizes = [input, hidden, hidden, 1];
        let mut params = Vec::new();
        for l in 0..3 {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            for _ in 0..(sizes[l] + 1) * sizes[l + 1] {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Self { sizes, params }
    }

    fn offsets(&self, l: usize) -> (usize, usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += (self.sizes[k] + 1) * self.sizes[k + 1];
        }
        let w = off;
        let b = w + self.sizes[l] * self.sizes[l + 1];
        (w, b, b + self.sizes[l + 1])
    }

    fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, MlpTape) {
        let mut acts: [Vec<f64>; 3] = [x.to_vec(), Vec::new(), Vec::new()];
        let mut out = Vec::new();
        for l in 0..3 {
            let (w, b, end) = self.offsets(l);
            let (din, dout) = (self.sizes[l], self.sizes[l + 1]);
            let bias = &self.params[b..end];
            let mut z: Vec<f64> = (0..n).flat_map(|_| bias.iter().copied()).collect();
            gemm(n, din, dout, &acts[l], false, &self.params[w..b], false, 1.0, &mut z);
            if l < 2 {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                acts[l + 1] = z;
            } else {
                out = z;
            }
        }
        (out, MlpTape { n, acts })
    }

    fn backward(&self, tape: &MlpTape, dout: &[f64]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let n = tape.n;
        let mut delta = dout.to_vec();
        for l in (0..3).rev() {
            let (w, b, end) = self.offsets(l);
            let (din, dn) = (self.sizes[l], self.sizes[l + 1]);
            gemm(din, n, dn, &tape.acts[l], true, &delta, false, 0.0, &mut grads[w..b]);
            for row in delta.chunks_exact(dn) {
                for (g, d) in grads[b..end].iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; n * din];
                gemm(n, dn, din, &delta, false, &self.params[w..b], true, 0.0, &mut prev);
                for (p, a) in prev.iter_mut().zip(&tape.acts[l]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grads
    }

    fn mean_loss(&self, x: &[f64], y: &[f64]) -> f64 {
        let (out, _) = self.forward(x, y.len());
        out.iter().zip(y).map(|(&f, &l)| bce_logit_loss(f, l)).sum::<f64>() / y.len() as f64
    }
}

fn gather(x: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| x[i * dim..(i + 1) * dim].iter().copied()).collect()
}

/// Trains on `(x, y)` with early stopping on an internal split and returns
/// held-out accuracy on `(xt, yt)`.
fn fit_and_score(x: &[f64], y: &[f64], xt: &[f64], yt: &[f64], dim: usize, cfg: &C2stConfig, seed: u64) -> f64 {
    let mut rng = seed::rng(seed, &[]);
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (n / 10).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let (xv, yv) = (gather(x, dim, val_idx), val_idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let mut train_idx = train_idx.to_vec();

    let mut net = Mlp::new(dim, cfg.width_factor * dim, &mut rng);
    let mut adam = AdamState::new(net.params.len());
    let mut best = (f64::INFINITY, net.params.clone());
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch_size) {
            let xb = gather(x, dim, chunk);
            let (out, tape) = net.forward(&xb, chunk.len());
            let inv = 1.0 / chunk.len() as f64;
            let dout: Vec<f64> = out.iter().zip(chunk).map(|(&f, &i)| (sigmoid(f) - y[i]) * inv).collect();
            let g = net.backward(&tape, &dout);
            if adam.step(&mut net.params, &g, cfg.learning_rate).is_err() {
                break;
            }
        }
        let v = net.mean_loss(&xv, &yv);
        if v < best.0 {
            best = (v, net.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    net.params = best.1;
    let (out, _) = net.forward(xt, yt.len());
    let hits = out.iter().zip(yt).filter(|(&f, &l)| (f > 0.0) == (l > 0.5)).count();
    hits as f64 / yt.len() as f64
}

/// Classifier two-sample test with default settings.
pub fn c2st(samples_p: &[f64], samples_q: &[f64], dim: usize, rng: &mut dyn RngCore) -> Result<f64> {
    c2st_with(samples_p, samples_q, dim, &C2stConfig::default(), rng)
}

/// Cross-validated accuracy of a classifier telling the two sample sets
/// apart: 0.5 means indistinguishable, 1.0 fully separable. The larger set is
/// subsampled so both classes have equal weight; data are standardised with
/// pooled statistics.
pub fn c2st_with(samples_p: &[f64], samples_q: &[f64], dim: usize, cfg: &C2stConfig, rng: &mut dyn RngCore) -> Result<f64> {
    if dim == 0 || !samples_p.len().is_multiple_of(dim) || !samples_q.len().is_multiple_of(dim) {
        return Err(Error::precondition("c2st: sample buffers must be whole rows of `dim` values"));
    }
    if cfg.folds < 2 {
        return Err(Error::precondition("c2st needs at least two folds"));
    }
    let (np, nq) = (samples_p.len() / dim, samples_q.len() / dim);
    let n = np.min(nq);
    if n < C2ST_MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: C2ST_MIN_SAMPLES,
            got: n,
        });
    }
    let mut ip: Vec<usize> = (0..np).collect();
    let mut iq: Vec<usize> = (0..nq).collect();
    ip.shuffle(rng);
    iq.shuffle(rng);
    ip.truncate(n);
    iq.truncate(n);
    // Row r < n comes from P, the rest from Q; positions modulo the fold count
    // give class-balanced folds.
    let mut pooled = gather(samples_p, dim, &ip);
    pooled.extend(gather(samples_q, dim, &iq));
    let pooled = Standardizer::fit(&pooled, dim).transform(&pooled);
    let labels: Vec<f64> = (0..2 * n).map(|r| if r < n { 1.0 } else { 0.0 }).collect();
    let base = rng.next_u64();
    let folds = cfg.folds;
    let scores: Vec<f64> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (mut tr, mut te) = (Vec::new(), Vec::new());
            for r in 0..2 * n {
                if (r % n) % folds == k {
                    te.push(r);
                } else {
                    tr.push(r);
                }
            }
            let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
            fit_and_score(
                &gather(&pooled, dim, &tr),
                &pick(&tr),
                &gather(&pooled, dim, &te),
                &pick(&te),
                dim,
                cfg,
                seed::derive(base, &[k as u64]),
            )
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / folds as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct C2stEntry {
    pub index: MarginalIndex,
    pub accuracy: f64,
}

/// Per-marginal C2ST accuracies and their averages over every index set of
/// a given size.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct C2stReport {
    pub entries: Vec<C2stEntry>,
    /// Index sets that had no approximate samples (or failed) and were left
    /// out of the averages.
    pub missing: Vec<MarginalIndex>,
    pub mean_1d: Option<f64>,
    pub mean_2d: Option<f64>,
    /// Average over all entries.
    pub mean: Option<f64>,
    pub classifier: C2stConfig,
}

impl C2stReport {
    fn mean_of(entries: &[C2stEntry], k: Option<usize>) -> Option<f64> {
        let acc: Vec<f64> = entries
            .iter()
            .filter(|e| k.is_none_or(|k| e.index.len() == k))
            .map(|e| e.accuracy)
            .collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }

    fn from_entries(entries: Vec<C2stEntry>, missing: Vec<MarginalIndex>, classifier: C2stConfig) -> Self {
        Self {
            mean_1d: Self::mean_of(&entries, Some(1)),
            mean_2d: Self::mean_of(&entries, Some(2)),
            mean: Self::mean_of(&entries, None),
            entries,
            missing,
            classifier,
        }
    }
}

/// Approximate posterior samples for one marginal, rows over its dims.
#[derive(Clone, Debug)]
pub struct MarginalSamples {
    pub index: MarginalIndex,
    pub samples: Vec<f64>,
}

/// C2ST-ddm: the average C2ST over all `(D choose d)` marginals of each
/// requested order `d`. The reference is joint and is marginalised by column
/// selection. Each marginal uses its own random stream derived from `seed`.
pub fn c2st_ddm(reference: &[f64], dims: usize, approx: &[MarginalSamples], orders: &[usize], cfg: &C2stConfig, seed: u64) -> Result<C2stReport> {
    if dims == 0 || !reference.len().is_multiple_of(dims) {
        return Err(Error::precondition("c2st_ddm: reference must be whole rows"));
    }
    let mut wanted = Vec::new();
    for &d in orders {
        if d == 0 || d > dims {
            return Err(Error::precondition(format!("c2st_ddm: order {d} out of range for {dims} dims")));
        }
        wanted.extend(combinations(dims, d));
    }
    let results: Vec<(MarginalIndex, Option<f64>)> = wanted
        .par_iter()
        .enumerate()
        .map(|(k, idx)| {
            let index = MarginalIndex::new(idx.clone()).expect("combinations are sorted");
            let Some(a) = approx.iter().find(|m| m.index == index) else {
                return (index, None);
            };
            let refm: Vec<f64> = reference.chunks_exact(dims).flat_map(|r| index.slice(r)).collect();
            let mut rng = seed::rng(seed, &[tag::C2ST, k as u64]);
            match c2st_with(&refm, &a.samples, index.len(), cfg, &mut rng) {
                Ok(acc) => (index, Some(acc)),
                Err(e) => {
                    log::warn!("c2st for {index} failed: {e}");
                    (index, None)
                }
            }
        })
        .collect();
    let mut entries = Vec::new();
    let mut missing = Vec::new();
    for (index, acc) in results {
        match acc {
            Some(accuracy) => entries.push(C2stEntry { index, accuracy }),
            None => missing.push(index),
        }
    }
    if !missing.is_empty() {
        log::warn!("c2st_ddm: {} marginals missing and excluded from the average", missing.len());
    }
    Ok(C2stReport::from_entries(entries, missing, cfg.clone()))
}

/// All sorted `d`-subsets of `0..n`, in lexicographic order.
pub fn combinations(n: usize, d: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, d, &mut Vec::new(), &mut out);
    out
}

/// `D_KL(P̂ ‖ Q̂)` between 1-d sample sets over `bins` equal bins spanning
/// both. Every bin of both histograms gets [`KL_PSEUDO_COUNT`] extra counts,
/// so the value depends on the binning and only differences between runs
/// are meaningful.
pub fn kl_histogram(samples_p: &[f64], samples_q: &[f64], bins: usize) -> Result<f64> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if bins == 0 {
        return Err(Error::precondition("kl_histogram needs at least one bin"));
    }
    let all = samples_p.iter().chain(samples_q);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::precondition("kl_histogram: samples must be finite"));
    }
    let count = |s: &[f64]| {
        let mut c = vec![KL_PSEUDO_COUNT; bins];
        for &v in s {
            let b = if hi > lo { ((v - lo) / (hi - lo) * bins as f64) as usize } else { 0 };
            c[b.min(bins - 1)] += 1.0;
        }
        let z: f64 = c.iter().sum();
        c.into_iter().map(|v| v / z).collect::<Vec<_>>()
    };
    let (p, q) = (count(samples_p), count(samples_q));
    Ok(p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

/// Empirical coverage of HPD credible sets for one parameter dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub dim: usize,
    pub levels: Vec<f64>,
    pub empirical: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
}

impl CoverageCurve {
    /// Largest shortfall below the diagonal in units of standard error, using
    /// the nominal binomial error so levels with ĉ ∈ {0, 1} still count.
    pub fn worst_deficit_sigmas(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.empirical)
            .map(|(&t, &c)| (t - c) / (t * (1.0 - t) / self.n as f64).sqrt())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Credibility of `v` under a 1-d grid posterior: the mass of the region
/// where the (linearly interpolated) density exceeds the density at `v`.
/// `v` lies in the level-`t` HPD set iff this is below `t`.
pub fn hpd_credibility(grid: &GridPosterior, v: f64) -> f64 {
    let a = &grid.axes[0];
    let g = a.len();
    let dv = if v <= a[0] {
        grid.density[0]
    } else if v >= a[g - 1] {
        grid.density[g - 1]
    } else {
        let h = (a[g - 1] - a[0]) / (g - 1) as f64;
        let k = (((v - a[0]) / h) as usize).min(g - 2);
        let w = (v - a[k]) / h;
        grid.density[k] * (1.0 - w) + grid.density[k + 1] * w
    };
    grid.density
        .iter()
        .zip(&grid.cell_mass)
        .filter(|(d, _)| **d > dv)
        .map(|(_, m)| m)
        .sum()
}

/// Draws `(θ, x) ~ p(x | θ) p_Γ(θ)` `n` times, builds each head's grid
/// posterior for the simulated `x`, and records how often the true `θ_d`
/// falls inside the level-`t` HPD set. Heads must be 1-d.
#[allow(clippy::too_many_arguments)]
pub fn coverage_test(
    heads_1d: &[&dyn RatioHead],
    sim: &dyn Simulator,
    prior: &FactorizablePrior,
    region: &Region,
    n: usize,
    levels: &[f64],
    grid: usize,
    seed: u64,
) -> Result<Vec<CoverageCurve>> {
    if n < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: n });
    }
    if heads_1d.iter().any(|h| h.index().len() != 1) {
        return Err(Error::precondition("coverage_test takes 1-d heads"));
    }
    if levels.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::precondition("coverage levels must lie in (0, 1)"));
    }
    let creds: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = seed::rng(seed, &[tag::COVERAGE, i as u64]);
            let theta = prior.sample_truncated(region, 1, &mut rng)?.remove(0);
            let x = sim
                .simulate(&theta, &mut rng)
                .map_err(|message| Error::Simulator { index: i, message })?;
            heads_1d
                .iter()
                .map(|h| {
                    let d = h.index().dims()[0];
                    let gp = grid_posterior(*h, &x, prior, region, grid)?;
                    Ok(hpd_credibility(&gp, theta[d]))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(heads_1d
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let empirical: Vec<f64> = levels
                .iter()
                .map(|&t| creds.iter().filter(|c| c[k] < t).count() as f64 / n as f64)
                .collect();
            let stderr = empirical.iter().map(|&c| (c * (1.0 - c) / n as f64).sqrt()).collect();
            CoverageCurve {
                dim: h.index().dims()[0],
                levels: levels.to_vec(),
                empirical,
                stderr,
                n,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub level: f64,
    pub pass: bool,
    /// Parameter dimensions whose HPD set touches the region boundary.
    pub offending_dims: Vec<usize>,
}

/// Fails when the level-`t` HPD set of any grid touches the first or last
/// grid cell along one of its axes, i.e. when the truncation boundary cuts
/// into posterior mass.
pub fn boundary_check(grids: &[GridPosterior], level: f64) -> BoundaryReport {
    let mut bad = Vec::new();
    for grid in grids {
        let mask = hpd(grid, level).mask;
        let dims = grid.index.dims();
        let lens: Vec<usize> = grid.axes.iter().map(|a| a.len()).collect();
        for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            let coords: Vec<usize> = if lens.len() == 1 { vec![i] } else { vec![i / lens[1], i % lens[1]] };
            for (a, &c) in coords.iter().enumerate() {
                if c == 0 || c == lens[a] - 1 {
                    bad.push(dims[a]);
                }
            }
        }
    }
    bad.sort_unstable();
    bad.dedup();
    BoundaryReport {
        level,
        pass: bad.is_empty(),
        offending_dims: bad,
    }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF. Returns the
/// statistic `D_n` and the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok((d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)))
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::linspace;
    use crate::ratio::FnHead;
    use crate::seed::SeededRng;
    use crate::simulator::GaussianDiagSimulator;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_rows(n: usize, dim: usize, shift: f64, rng: &mut SeededRng) -> Vec<f64> {
        (0..n * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                shift + z
            })
            .collect()
    }

    #[test]
    fn c2st_same_distribution_is_chance() {
        let mut rng = SeededRng::seed_from_u64(1);
        let a = normal_rows(5000, 2, 0.0, &mut rng);
        let b = normal_rows(5000, 2, 0.0, &mut rng);
        let acc = c2st(&a, &b, 2, &mut rng).unwrap();
        assert!((acc - 0.5).abs() < 0.02, "accuracy {acc}");
        let rev = c2st(&b, &a, 2, &mut rng).unwrap();
        assert!((acc - rev).abs() < 0.02, "{acc} vs {rev}");
    }

    #[test]
    fn c2st_disjoint_supports_separate() {
        let mut rng = SeededRng::seed_from_u64(2);
        let a: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.gen_range(2.0..3.0)).collect();
        let acc = c2st(&a, &b, 1, &mut rng).unwrap();
        assert!(acc > 0.98, "accuracy {acc}");
    }

    #[test]
    fn c2st_shifted_gaussians_match_bayes_accuracy() {
        // Optimal accuracy for N(0,1) vs N(1,1) is Φ(0.5) ≈ 0.691.
        let mut rng = SeededRng::seed_from_u64(3);
        let a = normal_rows(4000, 1, 0.0, &mut rng);
        let b = normal_rows(4000, 1, 1.0, &mut rng);
        let acc = c2st(&a, &b, 1, &mut rng).unwrap();
        assert!((acc - 0.691).abs() < 0.03, "accuracy {acc}");
    }

    #[test]
    fn c2st_rejects_small_samples() {
        let mut rng = SeededRng::seed_from_u64(4);
        let a = vec![0.0; 10];
        assert!(matches!(c2st(&a, &a, 1, &mut rng), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn c2st_ddm_counts_marginals() {
        assert_eq!(combinations(3, 1).len(), 3);
        assert_eq!(combinations(10, 2).len(), 45);
        let mut rng = SeededRng::seed_from_u64(5);
        let reference = normal_rows(600, 3, 0.0, &mut rng);
        let approx: Vec<MarginalSamples> = (0..2)
            .map(|d| MarginalSamples {
                index: MarginalIndex::one(d),
                samples: normal_rows(600, 1, 0.0, &mut rng),
            })
            .collect();
        let rep = c2st_ddm(&reference, 3, &approx, &[1], &C2stConfig::default(), 9).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert_eq!(rep.missing, vec![MarginalIndex::one(2)]);
        let m = rep.mean_1d.unwrap();
        assert!((m - 0.5).abs() < 0.06, "mean {m}");
        assert!(rep.mean_2d.is_none());
    }

    #[test]
    fn kl_identical_is_zero() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_eq!(kl_histogram(&v, &v, 100).unwrap(), 0.0);
        assert!(kl_histogram(&[], &v, 100).is_err());
    }

    #[test]
    fn kl_of_shifted_unit_gaussians() {
        let mut rng = SeededRng::seed_from_u64(6);
        let a = normal_rows(100_000, 1, 0.0, &mut rng);
        let b = normal_rows(100_000, 1, 1.0, &mut rng);
        let c = normal_rows(100_000, 1, 0.0, &mut rng);
        let kl = kl_histogram(&a, &b, 100).unwrap();
        assert!((kl - 0.5).abs() < 0.05, "kl {kl}");
        assert!(kl_histogram(&a, &c, 100).unwrap() < 0.01);
    }

    /// `log p(x_d | θ_d)` up to a constant: the exact ratio for the Gaussian
    /// simulator under a uniform prior.
    fn gaussian_head(d: usize, sigma: f64) -> FnHead<impl Fn(&[f64], &[f64]) -> f64 + Sync> {
        FnHead::new(MarginalIndex::one(d), move |x: &[f64], t: &[f64]| -0.5 * ((x[d] - t[0]) / sigma).powi(2))
    }

    #[test]
    fn exact_head_is_calibrated() {
        let sim = GaussianDiagSimulator { dim: 2, sigma: 0.1 };
        let prior = FactorizablePrior::unit_cube(2);
        let region = Region::unit_cube(2);
        let h0 = gaussian_head(0, 0.1);
        let h1 = gaussian_head(1, 0.1);
        let heads: Vec<&dyn RatioHead> = vec![&h0, &h1];
        let levels: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let curves = coverage_test(&heads, &sim, &prior, &region, 4000, &levels, 200, 11).unwrap();
        for c in &curves {
            for ((t, e), s) in c.levels.iter().zip(&c.empirical).zip(&c.stderr) {
                assert!((t - e).abs() < 3.0 * s.max(1e-3) + 1e-3, "dim {} level {t}: {e}", c.dim);
            }
            let dev: f64 = c.levels.iter().zip(&c.empirical).map(|(t, e)| e - t).sum::<f64>() / levels.len() as f64;
            let pooled = (0.25 / c.n as f64).sqrt();
            assert!(dev.abs() < 2.0 * pooled, "mean deviation {dev}");
        }
    }

    #[test]
    fn over_wide_head_over_covers() {
        let sim = GaussianDiagSimulator { dim: 1, sigma: 0.1 };
        let prior = FactorizablePrior::unit_cube(1);
        let region = Region::unit_cube(1);
        let wide = gaussian_head(0, 0.3);
        let levels = [0.1, 0.5, 0.9, 0.999];
        let c = &coverage_test(&[&wide], &sim, &prior, &region, 2000, &levels, 200, 12).unwrap()[0];
        for (t, e) in c.levels.iter().zip(&c.empirical) {
            assert!(*e + 3.0 * (t * (1.0 - t) / 2000.0).sqrt() >= *t, "level {t}: {e}");
        }
        assert!(c.empirical[3] > 0.99);
    }

    fn normal_grid(mu: f64, sigma: f64) -> GridPosterior {
        GridPosterior::from_fn(MarginalIndex::one(0), vec![linspace(0.0, 1.0, 401)], |t| {
            -0.5 * ((t[0] - mu) / sigma).powi(2)
        })
        .unwrap()
    }

    #[test]
    fn boundary_check_cases() {
        assert!(boundary_check(&[normal_grid(0.5, 0.08)], 0.95).pass);
        let edge = boundary_check(&[normal_grid(0.0, 0.08)], 0.95);
        assert!(!edge.pass);
        assert_eq!(edge.offending_dims, vec![0]);
        assert!(!boundary_check(&[normal_grid(0.5, 0.3)], 1.0).pass);
    }

    #[test]
    fn boundary_check_2d_reports_axis() {
        let idx = MarginalIndex::pair(1, 3).unwrap();
        let axes = vec![linspace(0.0, 1.0, 101), linspace(0.0, 1.0, 101)];
        let g = GridPosterior::from_fn(idx, axes, |t| -0.5 * (((t[0] - 0.5) / 0.05).powi(2) + ((t[1] - 1.0) / 0.05).powi(2))).unwrap();
        assert_eq!(boundary_check(&[g], 0.95).offending_dims, vec![3]);
    }

    #[test]
    fn ks_accepts_true_cdf_and_rejects_wrong_one() {
        let mut rng = SeededRng::seed_from_u64(13);
        let u: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = ks_test(&u, |v| v.clamp(0.0, 1.0)).unwrap();
        assert!(p > 0.01, "p = {p}");
        let (_, p) = ks_test(&u, |v| v.clamp(0.0, 1.0).powf(1.1)).unwrap();
        assert!(p < 1e-3, "p = {p}");
    }

    #[test]
    fn kolmogorov_sf_known_values() {
        // Tabulated critical values: Q(1.36) ≈ 0.05, Q(1.63) ≈ 0.01.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn credibility_is_mass_above_level() {
        let g = normal_grid(0.5, 0.1);
        // At ±1σ the mass of the denser region is erf(1/√2) ≈ 0.6827; the
        // two grid points tied with 0.6 are excluded, costing ~0.006.
        let c = hpd_credibility(&g, 0.6);
        assert!((c - 0.6827).abs() < 8e-3, "{c}");
        assert!(hpd_credibility(&g, 0.5) < 5e-3);
    }
}
