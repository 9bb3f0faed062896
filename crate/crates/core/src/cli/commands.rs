//! The work behind each subcommand. Everything here is callable as a library
//! function; `mod.rs` only parses arguments and maps results to exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Algorithm, Resolved, RunConfig};
use super::run_dir::{write_atomic, RunDir, RunHistory, RunLock, RunState};
use crate::diagnostics::{boundary_check, c2st_ddm, coverage_test, kl_histogram, BoundaryReport, C2stReport, CoverageCurve, MarginalSamples};
use crate::error::{Error, Result};
use crate::oracle::{cached_reference, likelihood_rejection, ReferencePosterior};
use crate::posterior::{grid_posterior, rejection_sample, weighted_histogram, PosteriorSamples, WeightedHistogram};
use crate::prior::{FactorizablePrior, Region};
use crate::ratio::{MarginalIndex, MarginalRatioEstimator, RatioHead};
use crate::seed::{self, tag};
use crate::store::{SampleStore, STORE_JSON};
use crate::truncation::{run_mnre, run_tmnre, RoundEvent, RunStatus, TmnreConfig};

/// Metadata for one exported marginal.
#[derive(Clone, Debug, Serialize)]
pub struct MarginalExport {
    pub index: MarginalIndex,
    pub histogram: String,
    pub edges: Vec<Vec<f64>>,
    pub histogram_mode: Vec<f64>,
    pub samples: String,
    pub n_samples: usize,
    pub acceptance_rate: f64,
    pub proposals: u64,
    /// `log M` of the rejection envelope.
    pub log_envelope: f64,
    pub clipped: u64,
}

/// Contents of `posterior/posterior.json`.
#[derive(Clone, Debug, Serialize)]
pub struct PosteriorExport {
    pub x_o: Vec<f64>,
    pub region: Region,
    /// Round whose heads produced the export.
    pub round: u32,
    pub histogram_samples: usize,
    pub marginals: Vec<MarginalExport>,
}

fn fmt_row(vals: &[f64]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn histogram_csv(h: &WeightedHistogram) -> String {
    let mut s = String::new();
    match h.edges.len() {
        1 => {
            s.push_str("bin_lo,bin_hi,weight\n");
            let e = &h.edges[0];
            for (i, w) in h.weights.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", e[i], e[i + 1], w));
            }
        }
        _ => {
            s.push_str("bin_i,bin_j,weight\n");
            let nj = h.edges[1].len() - 1;
            for (k, w) in h.weights.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", k / nj, k % nj, w));
            }
        }
    }
    s
}

fn samples_csv(index: &MarginalIndex, rows: &[f64]) -> String {
    let header: Vec<String> = index.dims().iter().map(|d| format!("theta_{d}")).collect();
    let mut s = header.join(",");
    s.push('\n');
    for r in rows.chunks_exact(index.len()) {
        s.push_str(&fmt_row(r));
        s.push('\n');
    }
    s
}

/// Rejection samples from each head. Stream `k` belongs to head `k`.
pub fn sample_marginals(
    ests: &[MarginalRatioEstimator],
    x_o: &[f64],
    prior: &FactorizablePrior,
    region: &Region,
    n: usize,
    grid_1d: usize,
    grid_2d: usize,
    seed: u64,
) -> Result<Vec<PosteriorSamples>> {
    ests.par_iter()
        .enumerate()
        .map(|(k, e)| {
            let g = if e.index.len() == 1 { grid_1d } else { grid_2d };
            let mut rng = seed::rng(seed, &[tag::POSTERIOR, k as u64, 1]);
            rejection_sample(e, x_o, prior, region, n, g, &mut rng)
        })
        .collect()
}

/// Writes histograms, rejection samples and `posterior.json` into `dir`.
pub fn export_posterior(res: &Resolved, region: &Region, round: u32, ests: &[MarginalRatioEstimator], dir: &Path) -> Result<PosteriorExport> {
    fs::create_dir_all(dir)?;
    let spec = &res.config.posterior;
    let seed = res.config.seed;
    let hists: Vec<WeightedHistogram> = ests
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let dims = e.index.dims();
            let mut rng = seed::rng(seed, &[tag::POSTERIOR, k as u64, 0]);
            let draws = res
                .prior
                .select(dims)
                .sample_truncated(&region.select(dims), spec.histogram_samples, &mut rng)?
                .concat();
            let bins = if dims.len() == 1 { spec.bins } else { spec.bins_2d };
            weighted_histogram(e, &res.x_o, &draws, region, bins)
        })
        .collect::<Result<_>>()?;
    let samples = sample_marginals(ests, &res.x_o, &res.prior, region, spec.samples, spec.envelope_grid, spec.envelope_grid_2d, seed)?;
    let mut marginals = Vec::new();
    for ((e, h), s) in ests.iter().zip(&hists).zip(&samples) {
        let label = e.index.label();
        let kind = if e.index.len() == 1 { "1d" } else { "2d" };
        let hist_name = format!("hist_{kind}_{label}.csv");
        let samp_name = format!("samples_{label}.csv");
        fs::write(dir.join(&hist_name), histogram_csv(h))?;
        fs::write(dir.join(&samp_name), samples_csv(&e.index, &s.samples))?;
        marginals.push(MarginalExport {
            index: e.index.clone(),
            histogram: hist_name,
            edges: h.edges.clone(),
            histogram_mode: h.mode(),
            samples: samp_name,
            n_samples: s.len(),
            acceptance_rate: s.acceptance_rate,
            proposals: s.proposals,
            log_envelope: s.log_envelope,
            clipped: s.clipped,
        });
    }
    let export = PosteriorExport {
        x_o: res.x_o.clone(),
        region: region.clone(),
        round,
        histogram_samples: spec.histogram_samples,
        marginals,
    };
    write_atomic(&dir.join("posterior.json"), serde_json::to_string_pretty(&export)?.as_bytes())?;
    Ok(export)
}

/// Runs the configured algorithm into `out`, resuming from any rounds
/// already stored there.
pub fn cmd_run(res: &Resolved, out: &Path) -> Result<RunState> {
    let _lock = RunLock::acquire(out)?;
    let dir = RunDir::new(out);
    let mut stored_cfg = res.config.clone();
    stored_cfg.out = None;
    let cfg_text = stored_cfg.to_toml()?;
    if dir.config().exists() {
        let previous = RunConfig::from_toml_str(&fs::read_to_string(dir.config())?)?;
        if previous != stored_cfg {
            return Err(Error::Config(vec![format!(
                "{} holds a run with a different configuration; choose another output directory",
                out.display()
            )]));
        }
    }
    write_atomic(&dir.config(), cfg_text.as_bytes())?;

    let store_dir = dir.store();
    fs::create_dir_all(&store_dir)?;
    let store = if store_dir.join(STORE_JSON).exists() {
        let s = SampleStore::load(&store_dir)?;
        log::info!("resuming: {} stored simulations over rounds {:?}", s.len(), s.per_round().keys().collect::<Vec<_>>());
        Some(s)
    } else {
        None
    };
    let cfg = &res.config;
    let mut history = RunHistory {
        state: RunState::Running,
        seed: cfg.seed,
        x_o: res.x_o.clone(),
        rounds: Vec::new(),
    };
    match cfg.algorithm {
        Algorithm::Tmnre => {
            let mut committed = store.as_ref().map_or(0, |s| s.len());
            let mut observer = |ev: RoundEvent<'_>| -> Result<()> {
                ev.store.append_since(&store_dir, committed)?;
                committed = ev.store.len();
                dir.save_estimators(ev.record.round, ev.estimators)?;
                history.rounds.push(ev.record.clone());
                dir.write_history(&history)
            };
            let run = run_tmnre(&*res.simulator, &res.prior, &res.x_o, &cfg.tmnre, &cfg.train, cfg.seed, store, &mut observer)?;
            history.state = run.status.into();
            dir.write_history(&history)?;
            let round = history.rounds.last().map_or(0, |r| r.round);
            export_posterior(res, &run.final_region, round, &run.final_estimators, &dir.posterior())?;
            if run.status == RunStatus::MaxRounds {
                log::warn!("stopping rule not met within {} rounds", run.constraining_rounds());
            }
        }
        Algorithm::Mnre => {
            let run = run_mnre(&*res.simulator, &res.prior, cfg.tmnre.budget, cfg.tmnre.final_marginals, &cfg.train, cfg.seed, store)?;
            run.store.save(&store_dir)?;
            dir.save_estimators(1, &run.estimators)?;
            history.rounds.push(run.record.clone());
            history.state = RunState::Completed;
            dir.write_history(&history)?;
            export_posterior(res, &run.record.region, 1, &run.estimators, &dir.posterior())?;
        }
    }
    Ok(history.state)
}

/// Loads a finished run: configuration, history and final heads.
pub fn open_run(run: &Path) -> Result<(Resolved, RunHistory, Vec<MarginalRatioEstimator>)> {
    let dir = RunDir::new(run);
    let res = RunConfig::load(&dir.config())?.resolve()?;
    let history = dir.read_history()?;
    let fin = history
        .final_round()
        .ok_or_else(|| Error::precondition(format!("{} has no completed final round", run.display())))?;
    let ests = dir.load_estimators(fin.round)?;
    Ok((res, history, ests))
}

/// Re-emits the posterior files of a finished run into `out`.
pub fn cmd_export(run: &Path, out: Option<&Path>) -> Result<PosteriorExport> {
    let _lock = RunLock::acquire(run)?;
    let (res, history, ests) = open_run(run)?;
    let fin = history.final_round().expect("checked by open_run");
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| RunDir::new(run).posterior());
    export_posterior(&res, &fin.region, fin.round, &ests, &target)
}

/// Whether an exact reference posterior can be produced for this simulator.
pub fn oracle_available(res: &Resolved) -> bool {
    let probe: Vec<f64> = res.prior.support().intervals().iter().map(|iv| 0.5 * (iv.lo + iv.hi)).collect();
    res.simulator.name() != "rotated_eggbox" && res.simulator.log_likelihood(&res.x_o, &probe).is_some()
}

/// Reference samples for the run's observation, cached under `cache`.
pub fn reference_for(res: &Resolved, n: usize, cache: &Path) -> Result<ReferencePosterior> {
    let seed = seed::derive(res.config.seed, &[tag::ORACLE]);
    cached_reference(cache, res.simulator.name(), &res.x_o, n, seed, || {
        likelihood_rejection(&*res.simulator, &res.prior, &res.x_o, n, seed)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KlEntry {
    pub dim: usize,
    pub kl: f64,
}

/// Everything `diagnose` writes, also returned for programmatic use.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2st: Option<C2stReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub kl: Vec<KlEntry>,
    pub kl_bins: usize,
    pub kl_pseudo_count: f64,
    pub coverage: Vec<CoverageCurve>,
    pub boundary: BoundaryReport,
    pub notices: Vec<String>,
}

/// C2ST-ddm (1-d and 2-d), per-dimension KL, coverage curves and the
/// boundary check for a set of final heads.
pub fn diagnose(res: &Resolved, region: &Region, ests: &[MarginalRatioEstimator], reference: Option<&ReferencePosterior>) -> Result<DiagnosticsReport> {
    let spec = &res.config.diagnostics;
    let post = &res.config.posterior;
    let seed = res.config.seed;
    let mut notices = vec![
        "coverage draws come from the truncated prior, so calibration outside the final region is not tested".to_string(),
    ];
    let (mut c2st, mut kl) = (None, Vec::new());
    match reference {
        Some(r) => {
            let samples = sample_marginals(ests, &res.x_o, &res.prior, region, spec.reference_samples, post.envelope_grid, post.envelope_grid_2d, seed)?;
            let approx: Vec<MarginalSamples> = samples
                .into_iter()
                .map(|s| MarginalSamples {
                    index: s.index,
                    samples: s.samples,
                })
                .collect();
            let orders: Vec<usize> = [1, 2].into_iter().filter(|&d| d <= res.prior.dims()).collect();
            c2st = Some(c2st_ddm(&r.samples, r.dim, &approx, &orders, &spec.c2st, seed::derive(seed, &[tag::C2ST]))?);
            for a in approx.iter().filter(|a| a.index.len() == 1) {
                let d = a.index.dims()[0];
                kl.push(KlEntry {
                    dim: d,
                    kl: kl_histogram(&r.column(d), &a.samples, spec.kl_bins)?,
                });
            }
        }
        None => notices.push("no reference posterior for this simulator: C2ST and KL skipped".to_string()),
    }
    let ones: Vec<&dyn RatioHead> = ests.iter().filter(|e| e.index.len() == 1).map(|e| e as &dyn RatioHead).collect();
    let coverage = coverage_test(
        &ones,
        &*res.simulator,
        &res.prior,
        region,
        spec.coverage_samples,
        &spec.levels,
        spec.coverage_grid,
        seed::derive(seed, &[tag::COVERAGE]),
    )?;
    let grids = ests
        .iter()
        .map(|e| {
            let g = if e.index.len() == 1 { post.envelope_grid } else { post.envelope_grid_2d };
            grid_posterior(e, &res.x_o, &res.prior, region, g)
        })
        .collect::<Result<Vec<_>>>()?;
    let boundary = boundary_check(&grids, spec.boundary_level);
    if !boundary.pass {
        notices.push(format!(
            "HPD set at level {} touches the region boundary in dimensions {:?}",
            boundary.level, boundary.offending_dims
        ));
    }
    Ok(DiagnosticsReport {
        c2st,
        kl,
        kl_bins: spec.kl_bins,
        kl_pseudo_count: crate::diagnostics::KL_PSEUDO_COUNT,
        coverage,
        boundary,
        notices,
    })
}

/// `diagnose` on a run directory; reports land in `diagnostics/`.
pub fn cmd_diagnose(run: &Path) -> Result<DiagnosticsReport> {
    let _lock = RunLock::acquire(run)?;
    let (res, history, ests) = open_run(run)?;
    let region = history.final_region().expect("checked by open_run").clone();
    let dir = RunDir::new(run);
    let reference = if oracle_available(&res) {
        Some(reference_for(&res, res.config.diagnostics.reference_samples, &dir.root.join("reference"))?)
    } else {
        log::warn!("no oracle for `{}`; only coverage and boundary checks are produced", res.simulator.name());
        None
    };
    let report = diagnose(&res, &region, &ests, reference.as_ref())?;
    let out = dir.diagnostics();
    fs::create_dir_all(&out)?;
    write_atomic(&out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    for c in &report.coverage {
        let mut csv = String::from("level,empirical,stderr\n");
        for ((t, e), s) in c.levels.iter().zip(&c.empirical).zip(&c.stderr) {
            csv.push_str(&format!("{t},{e},{s}\n"));
        }
        fs::write(out.join(format!("coverage_{}.csv", c.dim)), csv)?;
    }
    if !report.boundary.pass {
        log::warn!("{}", report.notices.last().expect("boundary notice"));
    }
    Ok(report)
}

/// One TMNRE run of an ε sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub repetition: usize,
    pub seed: u64,
    pub status: Option<RunStatus>,
    pub rounds: usize,
    pub total_simulations: usize,
    pub c2st_1d: Option<f64>,
    pub c2st_2d: Option<f64>,
    /// Mean C2ST over all 1-d and 2-d marginals.
    pub c2st_ddm: Option<f64>,
    pub c2st_ddm_per_simulation: Option<f64>,
    pub error: Option<String>,
}

fn sweep_one(res: &Resolved, tmnre: &TmnreConfig, seed: u64, reference: &ReferencePosterior) -> Result<(RunStatus, usize, usize, C2stReport)> {
    let cfg = &res.config;
    let run = run_tmnre(&*res.simulator, &res.prior, &res.x_o, tmnre, &cfg.train, seed, None, &mut |_| Ok(()))?;
    let post = &cfg.posterior;
    let samples = sample_marginals(&run.final_estimators, &res.x_o, &res.prior, &run.final_region, cfg.diagnostics.reference_samples, post.envelope_grid, post.envelope_grid_2d, seed)?;
    let approx: Vec<MarginalSamples> = samples
        .into_iter()
        .map(|s| MarginalSamples {
            index: s.index,
            samples: s.samples,
        })
        .collect();
    let orders: Vec<usize> = [1, 2].into_iter().filter(|&d| d <= res.prior.dims()).collect();
    let report = c2st_ddm(&reference.samples, reference.dim, &approx, &orders, &cfg.diagnostics.c2st, seed::derive(seed, &[tag::C2ST]))?;
    Ok((run.status, run.constraining_rounds(), run.total_simulations(), report))
}

/// Full TMNRE runs for every ε and repetition, scored by C2ST-ddm against
/// the oracle. Repetition `r` uses seed `config.seed + r`. Failures are
/// recorded in their row and the sweep continues.
pub fn sweep_epsilon(res: &Resolved, epsilons: &[f64], repetitions: usize, cache: &Path) -> Result<Vec<SweepRow>> {
    if epsilons.is_empty() {
        return Err(Error::Config(vec!["sweep needs at least one epsilon".into()]));
    }
    let bad: Vec<String> = epsilons
        .iter()
        .filter(|e| !(**e > 0.0 && **e < 1.0))
        .map(|e| format!("epsilon must lie in (0, 1), got {e}"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Config(bad));
    }
    if repetitions == 0 {
        return Err(Error::Config(vec!["repetitions must be at least 1".into()]));
    }
    if !oracle_available(res) {
        return Err(Error::precondition(format!("no oracle for `{}`; the sweep needs one", res.simulator.name())));
    }
    let reference = reference_for(res, res.config.diagnostics.reference_samples, cache)?;
    let mut rows = Vec::new();
    for &eps in epsilons {
        for rep in 0..repetitions {
            let seed = res.config.seed.wrapping_add(rep as u64);
            let mut tmnre = res.config.tmnre.clone();
            tmnre.epsilon = eps;
            log::info!("sweep: epsilon = {eps:e}, repetition {rep}");
            let row = match sweep_one(res, &tmnre, seed, &reference) {
                Ok((status, rounds, total, report)) => SweepRow {
                    epsilon: eps,
                    repetition: rep,
                    seed,
                    status: Some(status),
                    rounds,
                    total_simulations: total,
                    c2st_1d: report.mean_1d,
                    c2st_2d: report.mean_2d,
                    c2st_ddm: report.mean,
                    c2st_ddm_per_simulation: report.mean.map(|m| m / total as f64),
                    error: None,
                },
                Err(e) => {
                    log::error!("sweep: epsilon = {eps:e}, repetition {rep} failed: {e}");
                    SweepRow {
                        epsilon: eps,
                        repetition: rep,
                        seed,
                        status: None,
                        rounds: 0,
                        total_simulations: 0,
                        c2st_1d: None,
                        c2st_2d: None,
                        c2st_ddm: None,
                        c2st_ddm_per_simulation: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Per-ε means over successful repetitions: `(ε, mean c2st_ddm, mean total
/// simulations, mean c2st_ddm per simulation, successes)`.
pub fn sweep_summary(rows: &[SweepRow]) -> Vec<(f64, f64, f64, f64, usize)> {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    eps.dedup();
    eps.iter()
        .map(|&e| {
            let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.epsilon == e && r.c2st_ddm.is_some()).collect();
            let n = ok.len().max(1) as f64;
            let mean = |f: &dyn Fn(&SweepRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
            (
                e,
                mean(&|r| r.c2st_ddm.unwrap_or(f64::NAN)),
                mean(&|r| r.total_simulations as f64),
                mean(&|r| r.c2st_ddm_per_simulation.unwrap_or(f64::NAN)),
                ok.len(),
            )
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Runs the sweep and writes `sweep.csv` and `sweep_summary.csv` into `out`.
pub fn cmd_sweep_epsilon(res: &Resolved, epsilons: &[f64], repetitions: usize, out: &Path) -> Result<Vec<SweepRow>> {
    let _lock = RunLock::acquire(out)?;
    let rows = sweep_epsilon(res, epsilons, repetitions, &out.join("reference"))?;
    let mut csv = String::from("epsilon,repetition,seed,status,rounds,total_simulations,c2st_1d,c2st_2d,c2st_ddm,c2st_ddm_per_simulation,error\n");
    for r in &rows {
        let status = r.status.map_or(String::new(), |s| serde_json::to_value(s).expect("enum").as_str().unwrap_or("").to_string());
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},\"{}\"\n",
            r.epsilon,
            r.repetition,
            r.seed,
            status,
            r.rounds,
            r.total_simulations,
            opt(r.c2st_1d),
            opt(r.c2st_2d),
            opt(r.c2st_ddm),
            opt(r.c2st_ddm_per_simulation),
            err
        ));
    }
    fs::write(out.join("sweep.csv"), csv)?;
    let mut sum = String::from("epsilon,c2st_ddm,total_simulations,c2st_ddm_per_simulation,successful_runs\n");
    for (e, c, t, p, n) in sweep_summary(&rows) {
        sum.push_str(&format!("{e},{c},{t},{p},{n}\n"));
    }
    fs::write(out.join("sweep_summary.csv"), sum)?;
    Ok(rows)
}

/// Default output directory when neither `--out` nor `out` is given.
pub fn default_out(config_path: &Path) -> PathBuf {
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    PathBuf::from("runs").join(stem)
}
