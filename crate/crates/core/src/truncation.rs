//! The multi-round driver: simulate inside the current region, train 1-d
//! heads, shrink the region, and stop once the prior mass stops shrinking
//! fast enough. A final phase then trains all requested marginals inside the
//! last region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{StopReason, TrainConfig};
use crate::posterior::linspace;
use crate::prior::{mass_ratio, FactorizablePrior, Interval, Region};
use crate::ratio::{marginal_set, train_mnre, MarginalIndex, MarginalRatioEstimator, Marginals, MnreOutcome, RatioHead};
use crate::seed::{self, tag};
use crate::simulator::{poisson_count, simulate_batch, Simulator};
use crate::store::SampleStore;

/// How many pairs each constraining round trains on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// Every round tops its training set (retained + new) up to
    /// `fraction · budget`; the final phase spends what is left of the budget.
    Fraction { fraction: f64 },
    /// Round `m` tops its training set up to `targets[m−1]`. Runs that need
    /// more rounds than listed stop at the end of the list.
    Targets { targets: Vec<usize> },
    /// `initial` new simulations in the first round, `per_round` afterwards,
    /// on top of whatever is retained.
    Increment { initial: usize, per_round: usize },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Fraction { fraction: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmnreConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub max_rounds: usize,
    /// Total simulation budget `B`. The final phase simulates whatever the
    /// constraining rounds left of it; zero means no final-phase simulations.
    pub budget: usize,
    pub schedule: Schedule,
    /// Grid points per dimension used when shrinking.
    pub grid: usize,
    /// Marginals trained in every constraining round. The 1-d heads are
    /// always included because they drive the truncation.
    pub round_marginals: Marginals,
    /// Marginals trained in the final region.
    pub final_marginals: Marginals,
}

impl Default for TmnreConfig {
    fn default() -> Self {
        Self {
            epsilon: (-13f64).exp(),
            beta: 0.8,
            max_rounds: 10,
            budget: 10_000,
            schedule: Schedule::default(),
            grid: 1000,
            round_marginals: Marginals::OneD,
            final_marginals: Marginals::Both,
        }
    }
}

impl TmnreConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            errs.push(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.beta >= 0.0 && self.beta <= 1.0) {
            errs.push(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.max_rounds == 0 {
            errs.push("max_rounds must be at least 1".into());
        }
        if self.grid < 2 {
            errs.push(format!("grid must have at least 2 points, got {}", self.grid));
        }
        match &self.schedule {
            Schedule::Fraction { fraction } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    errs.push(format!("schedule.fraction must lie in (0, 1], got {fraction}"));
                }
                if self.budget == 0 {
                    errs.push("budget must be positive for a fraction schedule".into());
                }
            }
            Schedule::Targets { targets } => {
                if targets.is_empty() || targets.contains(&0) {
                    errs.push("schedule.targets must be a non-empty list of positive counts".into());
                }
            }
            Schedule::Increment { initial, .. } => {
                if *initial == 0 {
                    errs.push("schedule.initial must be positive".into());
                }
            }
        }
        errs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxRounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    Constrain,
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSummary {
    pub index: MarginalIndex,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopReason>,
}

/// Snapshot of one round, as written to `rounds.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub kind: RoundKind,
    /// Region the round's data were drawn from.
    pub region: Region,
    /// Region after shrinking (equal to `region` for the final phase).
    pub next_region: Region,
    /// `mass(next_region) / mass(region)`.
    pub alpha: f64,
    /// Prior mass of `next_region` relative to the full support.
    pub prior_volume: f64,
    pub retained: usize,
    pub new_simulations: usize,
    pub training_size: usize,
    pub total_simulations: usize,
    /// Dimensions whose head gave no usable grid and kept their interval.
    pub degenerate_dims: Vec<usize>,
    pub data_fingerprint: u64,
    pub heads: Vec<HeadSummary>,
}

/// Everything a round produced, handed to the observer after the round.
pub struct RoundEvent<'a> {
    pub record: &'a RoundRecord,
    pub store: &'a SampleStore,
    pub estimators: &'a [MarginalRatioEstimator],
}

pub struct TmnreRun {
    pub status: RunStatus,
    pub rounds: Vec<RoundRecord>,
    pub final_region: Region,
    pub store: SampleStore,
    /// Heads of every constraining round, in round order.
    pub round_estimators: Vec<Vec<MarginalRatioEstimator>>,
    pub final_estimators: Vec<MarginalRatioEstimator>,
}

impl TmnreRun {
    pub fn total_simulations(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.total_simulations)
    }

    pub fn constraining_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.kind == RoundKind::Constrain).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkOutcome {
    pub region: Region,
    pub degenerate_dims: Vec<usize>,
}

/// One update of the truncation region: per dimension, keep the convex hull
/// of grid points where `r̂(x_o | θ_d) p(θ_d) > ε · max`, pad it by one grid
/// cell on each side and intersect with the current interval.
pub fn shrink_region(heads_1d: &[&dyn RatioHead], prior: &FactorizablePrior, region: &Region, x_o: &[f64], epsilon: f64, grid: usize) -> Result<ShrinkOutcome> {
    let dims = region.dims();
    if grid < 2 {
        return Err(Error::precondition("shrink grid needs at least two points"));
    }
    let mut intervals = Vec::with_capacity(dims);
    let mut degenerate = Vec::new();
    let log_eps = epsilon.ln();
    for d in 0..dims {
        let head = heads_1d
            .iter()
            .find(|h| h.index().dims() == [d])
            .ok_or_else(|| Error::precondition(format!("no 1-d head for dimension {d}")))?;
        let iv = region.interval(d);
        let pts = linspace(iv.lo, iv.hi, grid);
        let comp = prior.component(d);
        let lw: Vec<f64> = head
            .log_ratio_batch(x_o, &pts)
            .iter()
            .zip(&pts)
            .map(|(lr, &t)| lr + comp.ln_pdf(t))
            .collect();
        let max = lw.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        let keep: Vec<usize> = if max.is_finite() {
            (0..grid).filter(|&i| lw[i] > max + log_eps).collect()
        } else {
            Vec::new()
        };
        match (keep.first(), keep.last()) {
            (Some(&a), Some(&b)) => {
                let h = (iv.hi - iv.lo) / (grid - 1) as f64;
                let padded = Interval::new(pts[a] - h, pts[b] + h);
                intervals.push(padded.intersect(&iv).unwrap_or(iv));
            }
            _ => {
                log::warn!("dimension {d}: no grid point passes the threshold; interval kept");
                degenerate.push(d);
                intervals.push(iv);
            }
        }
    }
    Ok(ShrinkOutcome {
        region: Region::new(intervals)?,
        degenerate_dims: degenerate,
    })
}

/// Mass of a 1-d density on `support` lying where it falls below
/// `ε · max`, by midpoint quadrature on `cells` cells.
pub fn removed_mass_bound(density: impl Fn(f64) -> f64, support: Interval, epsilon: f64, cells: usize) -> f64 {
    if epsilon <= 0.0 || cells == 0 {
        return 0.0;
    }
    let h = support.width() / cells as f64;
    let vals: Vec<f64> = (0..cells).map(|i| density(support.lo + (i as f64 + 0.5) * h)).collect();
    let max = vals.iter().copied().fold(0.0f64, f64::max);
    let cut = epsilon * max;
    vals.iter().filter(|&&v| v < cut).sum::<f64>() * h
}

fn summarize(out: &MnreOutcome) -> Vec<HeadSummary> {
    out.heads
        .iter()
        .map(|h| match &h.result {
            Ok(e) => HeadSummary {
                index: h.index.clone(),
                ok: true,
                error: None,
                best_epoch: Some(e.best_epoch),
                best_val_loss: Some(e.best_val_loss),
                stop: Some(e.stop),
            },
            Err(err) => HeadSummary {
                index: h.index.clone(),
                ok: false,
                error: Some(err.to_string()),
                best_epoch: None,
                best_val_loss: None,
                stop: None,
            },
        })
        .collect()
}

/// Simulates `n` pairs from the prior truncated to `region` under round tag
/// `round`, unless the store already holds that round (resumed run).
fn simulate_round(sim: &dyn Simulator, prior: &FactorizablePrior, region: &Region, n: usize, seed: u64, round: u32, store: &mut SampleStore) -> Result<usize> {
    let existing = store.count_in_round(round);
    if existing > 0 {
        log::info!("round {round}: reusing {existing} stored simulations");
        return Ok(existing);
    }
    if n == 0 {
        return Ok(0);
    }
    let mut rng = seed::rng(seed, &[tag::PROPOSE, round as u64]);
    let thetas = prior.sample_truncated(region, n, &mut rng)?;
    let xs = simulate_batch(sim, &thetas, seed::derive(seed, &[tag::SIMULATE, round as u64]))?;
    for (t, x) in thetas.iter().zip(&xs) {
        store.push(round, t, x)?;
    }
    Ok(n)
}

/// Records from rounds before `round` that fall inside `region`.
fn retained_before(store: &SampleStore, region: &Region, round: u32) -> usize {
    store.indices_in(region).into_iter().filter(|&i| store.round_of(i) < round).count()
}

/// The requested marginals plus all 1-d ones.
fn with_1d(dims: usize, which: Marginals) -> Result<Vec<MarginalIndex>> {
    let mut v = marginal_set(dims, Marginals::OneD)?;
    if which != Marginals::OneD && dims >= 2 {
        v.extend(marginal_set(dims, Marginals::TwoD)?);
    }
    Ok(v)
}

/// Runs the full algorithm. `store` may already contain rounds from an
/// interrupted run; those rounds are reused instead of re-simulated.
/// `observer` sees every finished round and may persist it.
pub fn run_tmnre(
    sim: &dyn Simulator,
    prior: &FactorizablePrior,
    x_o: &[f64],
    cfg: &TmnreConfig,
    train: &TrainConfig,
    seed: u64,
    store: Option<SampleStore>,
    observer: &mut dyn FnMut(RoundEvent<'_>) -> Result<()>,
) -> Result<TmnreRun> {
    let mut errs = cfg.validate();
    errs.extend(train.validate());
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let dims = prior.dims();
    if sim.param_dim() != dims {
        return Err(Error::DimensionMismatch {
            expected: sim.param_dim(),
            got: dims,
        });
    }
    if x_o.len() != sim.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: sim.data_dim(),
            got: x_o.len(),
        });
    }
    let mut store = store.unwrap_or_else(|| SampleStore::new(dims, sim.data_dim()));
    let support = prior.support();
    let round_indices = with_1d(dims, cfg.round_marginals)?;
    let final_indices = with_1d(dims, cfg.final_marginals)?;

    let mut region = support.clone();
    let mut alpha = 0.0;
    let mut rounds = Vec::new();
    let mut round_estimators = Vec::new();
    let mut m: u32 = 1;
    let mut total = 0usize;
    let mut status = RunStatus::MaxRounds;

    while alpha <= cfg.beta && (m as usize) <= cfg.max_rounds {
        let retained = retained_before(&store, &region, m);
        let mut prng = seed::rng(seed, &[tag::POISSON, m as u64]);
        let requested = match &cfg.schedule {
            Schedule::Fraction { fraction } => {
                let target = (fraction * cfg.budget as f64).round() as usize;
                poisson_count(target.saturating_sub(retained), &mut prng).min(cfg.budget.saturating_sub(total))
            }
            Schedule::Targets { targets } => match targets.get(m as usize - 1) {
                Some(&t) => poisson_count(t.saturating_sub(retained), &mut prng),
                None => break,
            },
            Schedule::Increment { initial, per_round } => {
                poisson_count(if m == 1 { *initial } else { *per_round }, &mut prng)
            }
        };
        let new = simulate_round(sim, prior, &region, requested, seed, m, &mut store)?;
        total += new;
        let out = train_mnre(&store, &region, &round_indices, train, seed, m)?;
        let heads = summarize(&out);
        let (rows, fingerprint) = (out.rows, out.fingerprint);
        let estimators = out.into_estimators()?;
        let ones: Vec<&dyn RatioHead> = estimators.iter().filter(|e| e.index.len() == 1).map(|e| e as &dyn RatioHead).collect();
        let shrunk = shrink_region(&ones, prior, &region, x_o, cfg.epsilon, cfg.grid)?;
        if !region.contains_region(&shrunk.region) {
            return Err(Error::InvalidRegion(format!("round {m} region is not nested in its predecessor")));
        }
        alpha = mass_ratio(prior, &shrunk.region, &region)?;
        let record = RoundRecord {
            round: m,
            kind: RoundKind::Constrain,
            region: region.clone(),
            next_region: shrunk.region.clone(),
            alpha,
            prior_volume: mass_ratio(prior, &shrunk.region, &support)?,
            retained,
            new_simulations: new,
            training_size: rows,
            total_simulations: total,
            degenerate_dims: shrunk.degenerate_dims,
            data_fingerprint: fingerprint,
            heads,
        };
        log::info!(
            "round {m}: {rows} pairs ({new} new), alpha = {alpha:.4}, prior volume = {:.4e}",
            record.prior_volume
        );
        observer(RoundEvent {
            record: &record,
            store: &store,
            estimators: &estimators,
        })?;
        rounds.push(record);
        round_estimators.push(estimators);
        region = shrunk.region;
        if alpha > cfg.beta {
            status = RunStatus::Converged;
        }
        m += 1;
    }

    let final_round = m;
    let retained = retained_before(&store, &region, final_round);
    let new = simulate_round(sim, prior, &region, cfg.budget.saturating_sub(total), seed, final_round, &mut store)?;
    total += new;
    let out = train_mnre(&store, &region, &final_indices, train, seed, final_round)?;
    let record = RoundRecord {
        round: final_round,
        kind: RoundKind::Final,
        region: region.clone(),
        next_region: region.clone(),
        alpha: 1.0,
        prior_volume: mass_ratio(prior, &region, &support)?,
        retained,
        new_simulations: new,
        training_size: out.rows,
        total_simulations: total,
        degenerate_dims: Vec::new(),
        data_fingerprint: out.fingerprint,
        heads: summarize(&out),
    };
    let failures: Vec<String> = out.failures().iter().map(|(i, e)| format!("head {i}: {e}")).collect();
    if !failures.is_empty() {
        log::warn!("final phase: {} head(s) failed", failures.len());
    }
    let final_estimators: Vec<MarginalRatioEstimator> = out.heads.into_iter().filter_map(|h| h.result.ok()).collect();
    observer(RoundEvent {
        record: &record,
        store: &store,
        estimators: &final_estimators,
    })?;
    rounds.push(record);
    Ok(TmnreRun {
        status,
        rounds,
        final_region: region,
        store,
        round_estimators,
        final_estimators,
    })
}

pub struct MnreRun {
    pub record: RoundRecord,
    pub store: SampleStore,
    pub estimators: Vec<MarginalRatioEstimator>,
}

/// Plain marginal estimation on `n` prior draws: one round, no truncation.
/// A store that already holds round 1 is reused as is.
pub fn run_mnre(
    sim: &dyn Simulator,
    prior: &FactorizablePrior,
    n: usize,
    marginals: Marginals,
    train: &TrainConfig,
    seed: u64,
    store: Option<SampleStore>,
) -> Result<MnreRun> {
    let errs = train.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut store = store.unwrap_or_else(|| SampleStore::new(prior.dims(), sim.data_dim()));
    let support = prior.support();
    let new = simulate_round(sim, prior, &support, n, seed, 1, &mut store)?;
    let out = train_mnre(&store, &support, &marginal_set(prior.dims(), marginals)?, train, seed, 1)?;
    let record = RoundRecord {
        round: 1,
        kind: RoundKind::Final,
        region: support.clone(),
        next_region: support,
        alpha: 1.0,
        prior_volume: 1.0,
        retained: 0,
        new_simulations: new,
        training_size: out.rows,
        total_simulations: new,
        degenerate_dims: Vec::new(),
        data_fingerprint: out.fingerprint,
        heads: summarize(&out),
    };
    Ok(MnreRun {
        record,
        store,
        estimators: out.into_estimators()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::FnHead;
    use crate::simulator::GaussianDiagSimulator;

    fn gauss(d: usize, mu: f64, s: f64) -> FnHead<impl Fn(&[f64], &[f64]) -> f64 + Sync> {
        FnHead::new(MarginalIndex::one(d), move |_, t| -0.5 * ((t[0] - mu) / s).powi(2))
    }

    #[test]
    fn gaussian_head_truncates_at_expected_width() {
        let s = 0.01;
        let h = gauss(0, 0.5, s);
        let heads: [&dyn RatioHead; 1] = [&h];
        let prior = FactorizablePrior::unit_cube(1);
        let out = shrink_region(&heads, &prior, &Region::unit_cube(1), &[0.0], 1e-6, 1000).unwrap();
        let iv = out.region.interval(0);
        let half = (-2.0 * 1e-6f64.ln()).sqrt() * s;
        assert!((half / s - 5.26).abs() < 0.01);
        let cell = 1.0 / 999.0;
        assert!((iv.lo - (0.5 - half)).abs() <= 2.0 * cell, "{iv:?}");
        assert!((iv.hi - (0.5 + half)).abs() <= 2.0 * cell, "{iv:?}");
    }

    #[test]
    fn flat_head_leaves_region_unchanged() {
        let h = FnHead::new(MarginalIndex::one(0), |_, _| 0.0);
        let heads: [&dyn RatioHead; 1] = [&h];
        let region = Region::from_pairs(&[(0.1, 0.9)]).unwrap();
        let out = shrink_region(&heads, &FactorizablePrior::unit_cube(1), &region, &[0.0], 1e-6, 100).unwrap();
        assert_eq!(out.region, region);
    }

    #[test]
    fn epsilon_near_one_collapses_to_mode_cell() {
        let h = gauss(0, 0.3, 0.1);
        let heads: [&dyn RatioHead; 1] = [&h];
        let out = shrink_region(&heads, &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), &[0.0], 1.0 - 1e-12, 1001).unwrap();
        let iv = out.region.interval(0);
        assert!(iv.width() <= 2.0 / 1000.0 + 1e-12 && iv.contains(0.3), "{iv:?}");
    }

    #[test]
    fn degenerate_head_keeps_interval() {
        let h = FnHead::new(MarginalIndex::one(0), |_, _| f64::NEG_INFINITY);
        let heads: [&dyn RatioHead; 1] = [&h];
        let out = shrink_region(&heads, &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), &[0.0], 1e-6, 10).unwrap();
        assert_eq!(out.degenerate_dims, vec![0]);
        assert_eq!(out.region, Region::unit_cube(1));
    }

    #[test]
    fn bimodal_head_keeps_hull() {
        let h = FnHead::new(MarginalIndex::one(0), |_, t| {
            let a = (-0.5 * ((t[0] - 0.25) / 0.02f64).powi(2)).exp();
            let b = (-0.5 * ((t[0] - 0.75) / 0.02f64).powi(2)).exp();
            (a + b).ln()
        });
        let heads: [&dyn RatioHead; 1] = [&h];
        let out = shrink_region(&heads, &FactorizablePrior::unit_cube(1), &Region::unit_cube(1), &[0.0], 1e-6, 1000).unwrap();
        let iv = out.region.interval(0);
        assert!(iv.lo < 0.16 && iv.hi > 0.84 && iv.lo > 0.1 && iv.hi < 0.9, "{iv:?}");
    }

    #[test]
    fn removed_mass_matches_exact_normal_tails() {
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        for eps in [1e-4, 1e-6, 1e-8] {
            let got = removed_mass_bound(pdf, Interval::new(-12.0, 12.0), eps, 2_000_000);
            let z = (-2.0 * f64::ln(eps)).sqrt();
            let exact = statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
            assert!((got / exact - 1.0).abs() < 1e-3, "eps {eps}: {got} vs {exact}");
        }
        assert_eq!(removed_mass_bound(|_| 1.0, Interval::new(0.0, 1.0), 1e-6, 1000), 0.0);
        assert_eq!(removed_mass_bound(pdf, Interval::new(-12.0, 12.0), 0.0, 1000), 0.0);
    }

    #[test]
    fn config_validation_lists_every_problem() {
        let cfg = TmnreConfig {
            epsilon: 2.0,
            beta: -1.0,
            max_rounds: 0,
            ..TmnreConfig::default()
        };
        assert_eq!(cfg.validate().len(), 3);
        assert!(TmnreConfig::default().validate().is_empty());
    }

    fn small_train() -> TrainConfig {
        TrainConfig {
            max_epochs: 30,
            hidden_features: 32,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn beta_zero_runs_a_single_round() {
        let sim = GaussianDiagSimulator { dim: 1, sigma: 0.1 };
        let prior = sim.default_prior();
        let cfg = TmnreConfig {
            beta: 0.0,
            budget: 2000,
            final_marginals: Marginals::OneD,
            ..TmnreConfig::default()
        };
        let mut seen = Vec::new();
        let run = run_tmnre(&sim, &prior, &[0.5], &cfg, &small_train(), 1, None, &mut |e| {
            seen.push((e.record.round, e.record.kind));
            Ok(())
        })
        .unwrap();
        assert_eq!(run.constraining_rounds(), 1);
        assert_eq!(run.status, RunStatus::Converged);
        assert_eq!(seen, vec![(1, RoundKind::Constrain), (2, RoundKind::Final)]);
        assert!(run.total_simulations() <= 2000);
        assert_eq!(run.store.len(), run.total_simulations());
    }

    #[test]
    fn rounds_are_nested_and_resumable() {
        let sim = GaussianDiagSimulator { dim: 2, sigma: 0.05 };
        let prior = sim.default_prior();
        let cfg = TmnreConfig {
            budget: 4000,
            max_rounds: 2,
            final_marginals: Marginals::OneD,
            ..TmnreConfig::default()
        };
        let train = small_train();
        let x_o = [0.4, 0.6];
        let full = run_tmnre(&sim, &prior, &x_o, &cfg, &train, 5, None, &mut |_| Ok(())).unwrap();
        for w in full.rounds.windows(2) {
            assert!(w[0].region.contains_region(&w[1].region));
            assert!(w[0].next_region == w[1].region);
        }
        assert!(full.final_region.volume() < 1.0);

        // Resume from the store as it stood after round 1.
        let mut partial = full.store.clone();
        partial.truncate_rounds(2);
        let resumed = run_tmnre(&sim, &prior, &x_o, &cfg, &train, 5, Some(partial), &mut |_| Ok(())).unwrap();
        assert_eq!(resumed.rounds, full.rounds);
        assert_eq!(resumed.store, full.store);
    }
}
