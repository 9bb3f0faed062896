//! Posterior artifacts built from a ratio head: grid densities, HPD sets,
//! weighted histograms and rejection samples.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prior::{FactorizablePrior, Region};
use crate::ratio::{MarginalIndex, RatioHead};

/// Safety factor applied to the grid maximum of the ratio.
pub const REJECTION_SAFETY: f64 = 1.05;
pub const DEFAULT_BINS: usize = 100;
const PROPOSAL_BATCH: usize = 4096;
const MAX_PROPOSALS_BEFORE_ABORT: u64 = 10_000_000;
const MIN_ACCEPTANCE: f64 = 1e-5;

/// `G` evenly spaced points covering `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    match g {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect(),
    }
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let g = axis.len();
    if g < 2 {
        return vec![1.0; g];
    }
    let h = (axis[g - 1] - axis[0]) / (g - 1) as f64;
    (0..g).map(|i| if i == 0 || i == g - 1 { 0.5 * h } else { h }).collect()
}

/// Marginal posterior evaluated on a regular grid over the region. 2-d grids
/// are stored row-major with the first index along `axes[0]`.
#[derive(Clone, Debug, Serialize)]
pub struct GridPosterior {
    pub index: MarginalIndex,
    pub axes: Vec<Vec<f64>>,
    /// `log r̂` at each grid point.
    pub log_ratio: Vec<f64>,
    /// Unnormalised `log r̂ + log p`.
    pub log_weight: Vec<f64>,
    /// Density normalised to unit trapezoid integral.
    pub density: Vec<f64>,
    /// Quadrature mass carried by each grid point; sums to one.
    pub cell_mass: Vec<f64>,
}

/// All points of the grid as rows of `index.len()` coordinates.
fn grid_points(axes: &[Vec<f64>]) -> Vec<f64> {
    match axes.len() {
        1 => axes[0].clone(),
        2 => {
            let mut pts = Vec::with_capacity(2 * axes[0].len() * axes[1].len());
            for &a in &axes[0] {
                for &b in &axes[1] {
                    pts.push(a);
                    pts.push(b);
                }
            }
            pts
        }
        d => panic!("grids support 1 or 2 dimensions, got {d}"),
    }
}

fn quadrature(axes: &[Vec<f64>]) -> Vec<f64> {
    let w: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    match w.len() {
        1 => w[0].clone(),
        _ => w[0].iter().flat_map(|&a| w[1].iter().map(move |&b| a * b)).collect(),
    }
}

/// Axes for `index` over `region`, `g` points each.
pub fn grid_axes(index: &MarginalIndex, region: &Region, g: usize) -> Vec<Vec<f64>> {
    index
        .dims()
        .iter()
        .map(|&d| {
            let iv = region.interval(d);
            linspace(iv.lo, iv.hi, g)
        })
        .collect()
}

/// Evaluates `p̂(ϑ | x_o) ∝ r̂(x_o | ϑ) p(ϑ)` on a `g`-point-per-axis grid
/// over the head's dimensions of `region`.
pub fn grid_posterior(head: &dyn RatioHead, x_o: &[f64], prior: &FactorizablePrior, region: &Region, g: usize) -> Result<GridPosterior> {
    let index = head.index().clone();
    if index.len() > 2 {
        return Err(Error::precondition("grid posteriors support 1-d and 2-d marginals"));
    }
    if g < 2 {
        return Err(Error::precondition("grid needs at least two points per axis"));
    }
    let axes = grid_axes(&index, region, g);
    let pts = grid_points(&axes);
    let log_ratio = head.log_ratio_batch(x_o, &pts);
    let comps: Vec<_> = index.dims().iter().map(|&d| prior.component(d)).collect();
    let log_weight: Vec<f64> = pts
        .chunks_exact(index.len())
        .zip(&log_ratio)
        .map(|(p, &lr)| lr + p.iter().zip(&comps).map(|(v, c)| c.ln_pdf(*v)).sum::<f64>())
        .collect();
    from_log_weights(index, axes, log_ratio, log_weight)
}

fn from_log_weights(index: MarginalIndex, axes: Vec<Vec<f64>>, log_ratio: Vec<f64>, log_weight: Vec<f64>) -> Result<GridPosterior> {
    let max = log_weight.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let q = quadrature(&axes);
    let raw: Vec<f64> = log_weight.iter().map(|&w| if w.is_nan() { 0.0 } else { (w - max).exp() }).collect();
    let z: f64 = raw.iter().zip(&q).map(|(r, w)| r * w).sum();
    if !(z > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    let density: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let cell_mass = density.iter().zip(&q).map(|(d, w)| d * w).collect();
    Ok(GridPosterior {
        index,
        axes,
        log_ratio,
        log_weight,
        density,
        cell_mass,
    })
}

impl GridPosterior {
    /// Builds a grid posterior from an explicit density callback, for
    /// analytic references.
    pub fn from_fn(index: MarginalIndex, axes: Vec<Vec<f64>>, log_density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let pts = grid_points(&axes);
        let lw: Vec<f64> = pts.chunks_exact(index.len()).map(&log_density).collect();
        from_log_weights(index, axes, vec![0.0; lw.len()], lw)
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        match self.axes.len() {
            1 => vec![self.axes[0][i]],
            _ => {
                let n1 = self.axes[1].len();
                vec![self.axes[0][i / n1], self.axes[1][i % n1]]
            }
        }
    }

    /// Grid point with the highest density.
    pub fn mode(&self) -> Vec<f64> {
        let i = (0..self.len()).fold(0, |b, i| if self.density[i] > self.density[b] { i } else { b });
        self.point(i)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.axes.len()];
        for i in 0..self.len() {
            for (k, v) in self.point(i).iter().enumerate() {
                m[k] += self.cell_mass[i] * v;
            }
        }
        m
    }

    /// Index of the grid point nearest to `theta`.
    pub fn nearest(&self, theta: &[f64]) -> usize {
        let pos: Vec<usize> = self
            .axes
            .iter()
            .zip(theta)
            .map(|(a, &v)| {
                let g = a.len();
                let h = (a[g - 1] - a[0]) / (g - 1) as f64;
                (((v - a[0]) / h).round().max(0.0) as usize).min(g - 1)
            })
            .collect();
        match pos.len() {
            1 => pos[0],
            _ => pos[0] * self.axes[1].len() + pos[1],
        }
    }

    /// Cumulative distribution of a 1-d grid posterior, integrating the
    /// piecewise-linear density exactly.
    pub fn cdf(&self, v: f64) -> f64 {
        assert_eq!(self.axes.len(), 1, "cdf is defined for 1-d grids");
        let a = &self.axes[0];
        let g = a.len();
        if v <= a[0] {
            return 0.0;
        }
        if v >= a[g - 1] {
            return 1.0;
        }
        let h = (a[g - 1] - a[0]) / (g - 1) as f64;
        let k = (((v - a[0]) / h).floor() as usize).min(g - 2);
        let mut acc = 0.0;
        for i in 0..k {
            acc += 0.5 * h * (self.density[i] + self.density[i + 1]);
        }
        let t = v - a[k];
        let slope = (self.density[k + 1] - self.density[k]) / h;
        acc += t * (self.density[k] + 0.5 * slope * t);
        acc.clamp(0.0, 1.0)
    }

    /// For each grid point, the mass of all points ranked strictly denser.
    /// A point belongs to the level-`t` HPD set exactly when this is `< t`.
    pub fn hpd_rank_mass(&self) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.density[b].total_cmp(&self.density[a]).then(a.cmp(&b)));
        let mut before = vec![0.0; self.len()];
        let mut acc = 0.0;
        for &i in &order {
            before[i] = acc;
            acc += self.cell_mass[i];
        }
        before
    }
}

/// Highest-posterior-density set on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct HpdSet {
    pub level: f64,
    pub mask: Vec<bool>,
    pub mass: f64,
}

impl HpdSet {
    /// Maximal runs of covered points of a 1-d grid as `[first, last]` point
    /// coordinates.
    pub fn intervals(&self, grid: &GridPosterior) -> Vec<(f64, f64)> {
        assert_eq!(grid.axes.len(), 1, "intervals are defined for 1-d grids");
        let a = &grid.axes[0];
        let mut out = Vec::new();
        let mut start = None;
        for (i, &m) in self.mask.iter().enumerate() {
            match (m, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((a[s], a[i - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((a[s], a[a.len() - 1]));
        }
        out
    }
}

/// Smallest super-level set of the grid density holding at least `t` mass.
pub fn hpd(grid: &GridPosterior, t: f64) -> HpdSet {
    let before = grid.hpd_rank_mass();
    let mask: Vec<bool> = before.iter().map(|&b| b < t).collect();
    let mass = mask.iter().zip(&grid.cell_mass).filter(|(m, _)| **m).map(|(_, c)| c).sum();
    HpdSet { level: t, mask, mass }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedHistogram {
    pub index: MarginalIndex,
    pub edges: Vec<Vec<f64>>,
    /// Normalised bin weights, row-major for 2-d.
    pub weights: Vec<f64>,
    pub samples: usize,
}

impl WeightedHistogram {
    pub fn bins(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.len() - 1).collect()
    }

    /// Centre of the heaviest bin.
    pub fn mode(&self) -> Vec<f64> {
        let i = (0..self.weights.len()).fold(0, |b, i| if self.weights[i] > self.weights[b] { i } else { b });
        self.bin_center(i)
    }

    pub fn bin_center(&self, i: usize) -> Vec<f64> {
        let bins = self.bins();
        let idx = if bins.len() == 1 { vec![i] } else { vec![i / bins[1], i % bins[1]] };
        idx.iter().zip(&self.edges).map(|(&k, e)| 0.5 * (e[k] + e[k + 1])).collect()
    }
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n]);
    if !(v >= lo && v <= hi) {
        return None;
    }
    Some((((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1))
}

/// Histogram of `samples` (rows over the head's dimensions) weighted by
/// `r̂(x_o | ϑ)`, over `range` restricted to the head's dimensions.
pub fn weighted_histogram(head: &dyn RatioHead, x_o: &[f64], samples: &[f64], range: &Region, bins: usize) -> Result<WeightedHistogram> {
    let index = head.index().clone();
    let lr = head.log_ratio_batch(x_o, samples);
    histogram_from_log_weights(index, samples, &lr, range, bins)
}

/// Histogram with explicit per-sample log weights (all zero for plain
/// counting).
pub fn histogram_from_log_weights(
    index: MarginalIndex,
    samples: &[f64],
    log_weights: &[f64],
    range: &Region,
    bins: usize,
) -> Result<WeightedHistogram> {
    let k = index.len();
    if bins == 0 {
        return Err(Error::precondition("histogram needs at least one bin"));
    }
    let sub = range.select(index.dims());
    let edges: Vec<Vec<f64>> = sub.intervals().iter().map(|iv| linspace(iv.lo, iv.hi, bins + 1)).collect();
    let n_bins: usize = edges.iter().map(|e| e.len() - 1).product();
    let max = log_weights.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let mut weights = vec![0.0; n_bins];
    let mut used = 0;
    for (row, &lw) in samples.chunks_exact(k).zip(log_weights) {
        let mut flat = 0;
        let mut inside = true;
        for (e, &v) in edges.iter().zip(row) {
            match bin_of(e, v) {
                Some(b) => flat = flat * (e.len() - 1) + b,
                None => inside = false,
            }
        }
        if inside {
            used += 1;
            if lw.is_finite() {
                weights[flat] += (lw - max).exp();
            }
        }
    }
    let total: f64 = weights.iter().sum();
    if used == 0 || !(total > 0.0) {
        return Err(Error::precondition("no weighted samples inside the histogram range"));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(WeightedHistogram {
        index,
        edges,
        weights,
        samples: used,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PosteriorSamples {
    pub index: MarginalIndex,
    /// Accepted points, rows over the head's dimensions.
    pub samples: Vec<f64>,
    pub acceptance_rate: f64,
    pub proposals: u64,
    /// `log M`, the envelope used for acceptance.
    pub log_envelope: f64,
    /// Proposals whose ratio exceeded the envelope and were accepted with
    /// probability one.
    pub clipped: u64,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.samples.len() / self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.samples.iter().skip(c).step_by(self.index.len()).copied().collect()
    }
}

/// Rejection sampling from `r̂(x_o | ϑ) p_Γ(ϑ)`: propose from the truncated
/// prior and accept with `r̂ / M`, where `M` is the grid maximum of `r̂`
/// (`g` points per axis) times the safety factor.
pub fn rejection_sample<R: Rng + ?Sized>(
    head: &dyn RatioHead,
    x_o: &[f64],
    prior: &FactorizablePrior,
    region: &Region,
    n: usize,
    g: usize,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    if n == 0 {
        return Err(Error::precondition("rejection sampling needs n ≥ 1"));
    }
    let index = head.index().clone();
    let dims = index.dims();
    let axes = grid_axes(&index, region, g);
    let grid_max = head
        .log_ratio_batch(x_o, &grid_points(&axes))
        .into_iter()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !grid_max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let log_m = grid_max + REJECTION_SAFETY.ln();
    let sub_prior = prior.select(dims);
    let sub_region = region.select(dims);
    let k = dims.len();
    let mut samples = Vec::with_capacity(n * k);
    let mut proposals = 0u64;
    let mut clipped = 0u64;
    let mut accepted = 0usize;
    while accepted < n {
        let batch = sub_prior.sample_truncated(&sub_region, PROPOSAL_BATCH, rng)?;
        let flat: Vec<f64> = batch.concat();
        let lr = head.log_ratio_batch(x_o, &flat);
        for (theta, &l) in flat.chunks_exact(k).zip(&lr) {
            proposals += 1;
            let u: f64 = rng.gen();
            if l > log_m {
                clipped += 1;
            }
            if u.ln() < l - log_m {
                samples.extend_from_slice(theta);
                accepted += 1;
                if accepted == n {
                    break;
                }
            }
        }
        if proposals >= MAX_PROPOSALS_BEFORE_ABORT {
            let rate = accepted as f64 / proposals as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::VanishingAcceptance { rate, proposals });
            }
        }
    }
    if clipped > 0 {
        log::warn!("rejection sampler for {index}: {clipped} proposals exceeded the envelope");
    }
    Ok(PosteriorSamples {
        index,
        samples,
        acceptance_rate: accepted as f64 / proposals as f64,
        proposals,
        log_envelope: log_m,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::FnHead;
    use crate::seed;

    fn gauss_head(mu: f64, sigma: f64) -> FnHead<impl Fn(&[f64], &[f64]) -> f64 + Sync> {
        FnHead::new(MarginalIndex::one(0), move |_, t| -0.5 * ((t[0] - mu) / sigma).powi(2))
    }

    #[test]
    fn flat_head_gives_uniform_density() {
        let head = FnHead::new(MarginalIndex::one(0), |_, _| 0.0);
        let prior = FactorizablePrior::unit_cube(1);
        let region = Region::from_pairs(&[(0.2, 0.7)]).unwrap();
        let g = grid_posterior(&head, &[0.0], &prior, &region, 101).unwrap();
        assert!(g.density.iter().all(|d| (d - 2.0).abs() < 1e-12));
        assert!((g.cell_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_head_matches_closed_form() {
        let (mu, s) = (0.5, 0.1);
        let head = gauss_head(mu, s);
        let prior = FactorizablePrior::unit_cube(1);
        let g = grid_posterior(&head, &[0.0], &prior, &Region::unit_cube(1), 1000).unwrap();
        let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
        for (x, d) in g.axes[0].iter().zip(&g.density) {
            let exact = norm * (-0.5 * ((x - mu) / s).powi(2)).exp();
            assert!((d - exact).abs() < 1e-4 * norm, "{x}: {d} vs {exact}");
        }
        assert!((g.cdf(1.0) - 1.0).abs() < 1e-9);
        assert!((g.cdf(0.5) - 0.5).abs() < 1e-6);
        assert!((g.mode()[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn degenerate_grid_is_an_error() {
        let head = FnHead::new(MarginalIndex::one(0), |_, _| f64::NEG_INFINITY);
        let r = grid_posterior(&head, &[0.0], &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), 10);
        assert!(matches!(r, Err(Error::DegeneratePosterior)));
    }

    #[test]
    fn hpd_of_standard_normal() {
        let axes = vec![linspace(-6.0, 6.0, 1201)];
        let g = GridPosterior::from_fn(MarginalIndex::one(0), axes, |t| -0.5 * t[0] * t[0]).unwrap();
        let set = hpd(&g, 0.6827);
        let iv = set.intervals(&g);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 + 1.0).abs() <= 0.011 && (iv[0].1 - 1.0).abs() <= 0.011, "{iv:?}");
        let max_cell = g.cell_mass.iter().fold(0.0f64, |a, &b| a.max(b));
        assert!(set.mass >= 0.6827 && set.mass <= 0.6827 + max_cell);
        assert!(hpd(&g, 1.0 - 1e-15).mask.iter().all(|&m| m));
    }

    #[test]
    fn bimodal_hpd_splits() {
        let axes = vec![linspace(0.0, 1.0, 1001)];
        let lp = |t: &[f64]| {
            let a = (-0.5 * ((t[0] - 0.25) / 0.05f64).powi(2)).exp();
            let b = (-0.5 * ((t[0] - 0.75) / 0.05f64).powi(2)).exp();
            (a + b).ln()
        };
        let g = GridPosterior::from_fn(MarginalIndex::one(0), axes, lp).unwrap();
        let set = hpd(&g, 0.5);
        let iv = set.intervals(&g);
        assert_eq!(iv.len(), 2);
        let mass_of = |lo: f64, hi: f64| g.cdf(hi) - g.cdf(lo);
        // Ties at the cutoff can add one extra cell to either side.
        let max_cell = g.cell_mass.iter().fold(0.0f64, |a, &b| a.max(b));
        assert!((mass_of(iv[0].0, iv[0].1) - mass_of(iv[1].0, iv[1].1)).abs() <= max_cell);
    }

    #[test]
    fn flat_head_acceptance_rate() {
        let head = FnHead::new(MarginalIndex::one(0), |_, _| 0.0);
        let mut rng = seed::rng(1, &[]);
        let s = rejection_sample(&head, &[0.0], &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), 20_000, 100, &mut rng).unwrap();
        assert_eq!(s.len(), 20_000);
        assert!((s.acceptance_rate - 1.0 / 1.05).abs() < 0.01, "{}", s.acceptance_rate);
        assert_eq!(s.clipped, 0);
    }

    #[test]
    fn rejection_moments_match_gaussian() {
        let head = gauss_head(0.4, 0.1);
        let mut rng = seed::rng(2, &[]);
        let n = 10_000;
        let s = rejection_sample(&head, &[0.0], &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), n, 1000, &mut rng).unwrap();
        let v = s.column(0);
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let se = 0.1 / (n as f64).sqrt();
        assert!((mean - 0.4).abs() < 3.0 * se, "{mean}");
        assert!((sd - 0.1).abs() < 3.0 * 0.1 / (2.0 * n as f64).sqrt(), "{sd}");
        assert!(v.iter().all(|t| (0.0..=1.0).contains(t)));
    }

    #[test]
    fn vanishing_acceptance_aborts() {
        // The grid lands exactly on a point spike that proposals never hit.
        let grid_hit = FnHead::new(MarginalIndex::one(0), |_, t| if t[0] == 0.0 { 0.0 } else { -60.0 });
        let mut rng = seed::rng(3, &[]);
        let r = rejection_sample(&grid_hit, &[0.0], &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), 1, 11, &mut rng);
        assert!(matches!(r, Err(Error::VanishingAcceptance { .. })), "{r:?}");
    }

    #[test]
    fn histogram_of_flat_head_matches_prior() {
        let head = FnHead::new(MarginalIndex::one(0), |_, _| 0.0);
        let mut rng = seed::rng(4, &[]);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let h = weighted_histogram(&head, &[0.0], &samples, &Region::unit_cube(1), DEFAULT_BINS).unwrap();
        let per_bin = n as f64 / 100.0;
        for w in &h.weights {
            assert!((w * n as f64 - per_bin).abs() < 3.0 * per_bin.sqrt() * 1.5);
        }
        assert!((h.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let one = weighted_histogram(&head, &[0.0], &[0.33], &Region::unit_cube(1), 10).unwrap();
        assert_eq!(one.weights.iter().filter(|&&w| w == 1.0).count(), 1);
    }

    #[test]
    fn histogram_agrees_with_grid() {
        let head = gauss_head(0.3, 0.08);
        let prior = FactorizablePrior::unit_cube(1);
        let mut rng = seed::rng(5, &[]);
        let samples: Vec<f64> = (0..1_000_000).map(|_| rng.gen::<f64>()).collect();
        let h = weighted_histogram(&head, &[0.0], &samples, &Region::unit_cube(1), 100).unwrap();
        let g = grid_posterior(&head, &[0.0], &prior, &Region::unit_cube(1), 1000).unwrap();
        let tv: f64 = (0..100)
            .map(|b| {
                let (lo, hi) = (h.edges[0][b], h.edges[0][b + 1]);
                (h.weights[b] - (g.cdf(hi) - g.cdf(lo))).abs()
            })
            .sum::<f64>()
            * 0.5;
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn two_d_grid_and_histogram() {
        let head = FnHead::new(MarginalIndex::pair(0, 1).unwrap(), |_, t| {
            -0.5 * (((t[0] - 0.3) / 0.1).powi(2) + ((t[1] - 0.6) / 0.1).powi(2))
        });
        let prior = FactorizablePrior::unit_cube(2);
        let g = grid_posterior(&head, &[0.0], &prior, &Region::unit_cube(2), 101).unwrap();
        let m = g.mode();
        assert!((m[0] - 0.3).abs() < 1e-9 && (m[1] - 0.6).abs() < 1e-9);
        let mut rng = seed::rng(6, &[]);
        let samples: Vec<f64> = (0..200_000).map(|_| rng.gen::<f64>()).collect();
        let h = weighted_histogram(&head, &[0.0], &samples, &Region::unit_cube(2), 20).unwrap();
        let c = h.mode();
        assert!((c[0] - 0.325).abs() < 0.06 && (c[1] - 0.625).abs() < 0.06, "{c:?}");
    }
}
