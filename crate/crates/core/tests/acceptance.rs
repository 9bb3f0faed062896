//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! By default the quick criteria (1, 6, 7, 8) run. `TMNRE_ACCEPTANCE=full`
//! adds the torus and eggbox criteria (2 to 5), which take hours on one
//! core; a list such as `TMNRE_ACCEPTANCE=2,4` selects criteria directly.
//!
//! The process fails when a criterion fails, except those listed in
//! `KNOWN_UNATTAINABLE`, which are still run and reported as FAIL.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tmnre::cli::{sample_marginals, sweep_epsilon, sweep_summary, RunConfig};
use tmnre::diagnostics::{c2st, c2st_ddm, coverage_test, kl_histogram, ks_test, C2stConfig, C2stReport, MarginalSamples};
use tmnre::neural::{finite_difference_check, ClassifierNet, NetShape, TrainConfig};
use tmnre::oracle::{analytic_posterior, eggbox_reference, likelihood_rejection, ReferencePosterior};
use tmnre::posterior::{grid_posterior, rejection_sample, GridPosterior};
use tmnre::prior::{mass_ratio, Component, FactorizablePrior, Interval, Region};
use tmnre::ratio::{marginal_set, train_mnre, MarginalIndex, MarginalRatioEstimator, Marginals, RatioHead};
use tmnre::simulator::{EggboxSimulator, GaussianDiagSimulator, Simulator, TorusSimulator};
use tmnre::truncation::{removed_mass_bound, run_mnre, run_tmnre, RoundKind, RoundRecord, RunStatus, Schedule, TmnreConfig, TmnreRun};

/// The removed-mass expression checked by criterion 7 is off by a constant
/// factor for a normal density; see the decisions ledger.
const KNOWN_UNATTAINABLE: [u8; 1] = [7];
const QUICK: [u8; 4] = [1, 6, 7, 8];

const EPSILON: f64 = 2.260_329_406_981_054e-6; // e^-13

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn selected() -> BTreeSet<u8> {
    match std::env::var("TMNRE_ACCEPTANCE").ok().as_deref().map(str::trim) {
        None | Some("") | Some("quick") => QUICK.into_iter().collect(),
        Some("full") => (1..=8).collect(),
        Some(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
    }
}

fn samples_of(ests: &[MarginalRatioEstimator], x_o: &[f64], prior: &FactorizablePrior, region: &Region, n: usize, seed: u64) -> Vec<MarginalSamples> {
    sample_marginals(ests, x_o, prior, region, n, 1000, 200, seed)
        .expect("posterior sampling")
        .into_iter()
        .map(|s| MarginalSamples {
            index: s.index,
            samples: s.samples,
        })
        .collect()
}

fn ddm(reference: &ReferencePosterior, approx: &[MarginalSamples], orders: &[usize], seed: u64) -> C2stReport {
    c2st_ddm(&reference.samples, reference.dim, approx, orders, &C2stConfig::default(), seed).expect("c2st")
}

fn one_d(ests: &[MarginalRatioEstimator]) -> Vec<&MarginalRatioEstimator> {
    ests.iter().filter(|e| e.index.len() == 1).collect()
}

fn both_marginals(dims: usize) -> Vec<MarginalIndex> {
    let mut v = marginal_set(dims, Marginals::OneD).unwrap();
    v.extend(marginal_set(dims, Marginals::TwoD).unwrap());
    v
}

fn nested(rounds: &[RoundRecord]) -> bool {
    rounds.iter().all(|r| r.region.contains_region(&r.next_region)) && rounds.windows(2).all(|w| w[0].next_region == w[1].region)
}

// ---------------------------------------------------------------- Gaussian

struct GaussianRun {
    sim: GaussianDiagSimulator,
    prior: FactorizablePrior,
    x_o: Vec<f64>,
    run: TmnreRun,
    seconds: f64,
}

fn gaussian_run() -> GaussianRun {
    let sim = GaussianDiagSimulator { dim: 3, sigma: 0.1 };
    let prior = sim.default_prior();
    let x_o = sim.noiseless(&[0.25, 0.5, 0.75]).unwrap();
    let cfg = TmnreConfig {
        epsilon: EPSILON,
        budget: 20_000,
        ..TmnreConfig::default()
    };
    let t = Instant::now();
    let run = run_tmnre(&sim, &prior, &x_o, &cfg, &TrainConfig::default(), 1, None, &mut |_| Ok(())).expect("gaussian run");
    GaussianRun {
        sim,
        prior,
        x_o,
        run,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn criterion_1(g: &GaussianRun) -> Verdict {
    let sigma = g.sim.sigma;
    let analytic = analytic_posterior(&g.sim, &g.x_o).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut kl_max, mut mode_max) = (0.0f64, 0.0f64);
    let mut bad_region = Vec::new();
    for head in one_d(&g.run.final_estimators) {
        let d = head.index.dims()[0];
        let tn = &analytic[d];
        let approx = rejection_sample(head, &g.x_o, &g.prior, &g.run.final_region, 10_000, 1000, &mut rng).unwrap();
        let exact: Vec<f64> = (0..10_000).map(|_| tn.sample(&mut rng)).collect();
        kl_max = kl_max.max(kl_histogram(&exact, &approx.samples, 100).unwrap());
        let grid = grid_posterior(head, &g.x_o, &g.prior, &g.run.final_region, 1000).unwrap();
        mode_max = mode_max.max((grid.mode()[0] - tn.mode()).abs());

        let m = tn.mode();
        let iv = g.run.final_region.interval(d);
        let lo_ok = iv.lo >= (m - 6.0 * sigma).max(0.0) - 1e-12 && iv.lo <= (m - 4.5 * sigma).max(0.0) + 1e-12;
        let hi_ok = iv.hi <= (m + 6.0 * sigma).min(1.0) + 1e-12 && iv.hi >= (m + 4.5 * sigma).min(1.0) - 1e-12;
        if !(lo_ok && hi_ok) {
            bad_region.push(format!("θ{d} [{:.4}, {:.4}]", iv.lo, iv.hi));
        }
    }
    let pass = kl_max < 0.05 && mode_max < 0.02 && bad_region.is_empty() && g.seconds < 600.0;
    verdict(
        pass,
        format!(
            "max KL {kl_max:.4} (< 0.05), max mode error {mode_max:.4} (< 0.02), region outside [mode ± 4.5σ, mode ± 6σ]: {}, {} rounds, {:.0} s (< 600 s)",
            if bad_region.is_empty() { "none".to_string() } else { bad_region.join(", ") },
            g.run.constraining_rounds(),
            g.seconds
        ),
    )
}

fn criterion_6(g: &GaussianRun) -> Verdict {
    let levels: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let heads: Vec<&dyn RatioHead> = one_d(&g.run.final_estimators).into_iter().map(|h| h as &dyn RatioHead).collect();
    let curves = coverage_test(&heads, &g.sim, &g.prior, &g.run.final_region, 10_000, &levels, 200, 61).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    for c in &curves {
        for ((t, e), se) in c.levels.iter().zip(&c.empirical).zip(&c.stderr) {
            let se = if *se > 0.0 { *se } else { (t * (1.0 - t) / c.n as f64).sqrt() };
            worst = worst.max((t - e) / se);
        }
        let cells: Vec<String> = c.empirical.iter().map(|e| format!("{e:.3}")).collect();
        lines.push(format!("θ{}: {}", c.dim, cells.join(" ")));
    }
    verdict(
        worst <= 3.0,
        format!("largest shortfall below nominal {worst:.2} SE (≤ 3), N = 10000; empirical at 0.1..0.9 {}", lines.join("; ")),
    )
}

// ------------------------------------------------------------------ torus

const TORUS_TARGETS: [usize; 4] = [4985, 11322, 21127, 32032];

fn torus() -> (TorusSimulator, FactorizablePrior, Vec<f64>) {
    let sim = TorusSimulator::default();
    let prior = sim.default_prior();
    let x_o = sim.noiseless(&sim.default_theta_o().unwrap()).unwrap();
    (sim, prior, x_o)
}

fn torus_config(final_marginals: Marginals) -> TmnreConfig {
    TmnreConfig {
        epsilon: EPSILON,
        budget: 0,
        max_rounds: 6,
        schedule: Schedule::Targets {
            targets: TORUS_TARGETS.to_vec(),
        },
        final_marginals,
        ..TmnreConfig::default()
    }
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let (sim, prior, x_o) = torus();
    let train = TrainConfig::default();
    let seed = 2;
    let run = run_tmnre(&sim, &prior, &x_o, &torus_config(Marginals::Both), &train, seed, None, &mut |_| Ok(())).expect("torus run");
    let reference = likelihood_rejection(&sim, &prior, &x_o, 10_000, 20).expect("torus oracle");
    let rounds: Vec<&RoundRecord> = run.rounds.iter().filter(|r| r.kind == RoundKind::Constrain).collect();
    let indices = both_marginals(3);
    let mut ordinal = true;
    let mut cells = Vec::new();
    for (m, rec) in rounds.iter().enumerate() {
        let m = m + 1;
        // What TMNRE returns if it stops after round m: all marginals trained
        // inside Γ^(m) on the simulations made so far.
        let region = rec.next_region.clone();
        let ests = if m == rounds.len() {
            run.final_estimators.clone()
        } else {
            let mut store = run.store.clone();
            store.truncate_rounds(m as u32 + 1);
            train_mnre(&store, &region, &indices, &train, seed, m as u32 + 1).unwrap().into_estimators().unwrap()
        };
        let budget = rec.total_simulations;
        let t_rep = ddm(&reference, &samples_of(&ests, &x_o, &prior, &region, 10_000, 30 + m as u64), &[1, 2], 40);
        let mnre = run_mnre(&sim, &prior, budget, Marginals::Both, &train, 50 + m as u64, None).unwrap();
        let support = prior.support();
        let m_rep = ddm(&reference, &samples_of(&mnre.estimators, &x_o, &prior, &support, 10_000, 60 + m as u64), &[1, 2], 40);
        let (t1, t2, m1, m2) = (t_rep.mean_1d.unwrap(), t_rep.mean_2d.unwrap(), m_rep.mean_1d.unwrap(), m_rep.mean_2d.unwrap());
        ordinal &= t1 < m1 && t2 < m2;
        cells.push(format!("N={budget}: 1d {t1:.3} vs {m1:.3}, 2d {t2:.3} vs {m2:.3}"));
    }
    let volumes: Vec<f64> = rounds.iter().map(|r| r.prior_volume).collect();
    let monotone = volumes.windows(2).all(|w| w[1] <= w[0]) && volumes.last() < volumes.first();
    let converged = run.status == RunStatus::Converged && rounds.len() <= 6;
    verdict(
        ordinal && monotone && converged,
        format!(
            "TMNRE vs MNRE C2ST-ddm [{}]; prior volume {:?} monotone: {monotone}; stopping rule met: {converged} after {} rounds; {:.0} min",
            cells.join("; "),
            volumes.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
            rounds.len(),
            t.elapsed().as_secs_f64() / 60.0
        ),
    )
}

fn criterion_3() -> Verdict {
    let (sim, prior, x_o) = torus();
    let theta_o = sim.default_theta_o().unwrap();
    let mut failures = Vec::new();
    let mut nested_ok = true;
    for seed in 300..320u64 {
        let run = run_tmnre(&sim, &prior, &x_o, &torus_config(Marginals::OneD), &TrainConfig::default(), seed, None, &mut |_| Ok(()))
            .expect("torus run");
        nested_ok &= nested(&run.rounds);
        if let Some(r) = run.rounds.iter().find(|r| !r.next_region.contains(&theta_o)) {
            failures.push(format!("seed {seed} round {}", r.round));
        }
    }
    verdict(
        failures.is_empty() && nested_ok,
        format!("θ_o excluded in {}/20 runs{}; regions nested: {nested_ok}", failures.len(), if failures.is_empty() { String::new() } else { format!(" ({})", failures.join(", ")) }),
    )
}

// ----------------------------------------------------------------- eggbox

/// Peaks of a 1-d density whose height is at least `frac` of the maximum
/// and which are separated from any higher peak by a dip below half their
/// height.
fn peaks_1d(xs: &[f64], ys: &[f64], frac: f64) -> Vec<f64> {
    let top = ys.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for i in 0..ys.len() {
        let y = ys[i];
        if y < frac * top {
            continue;
        }
        let left = ys[..i].iter().rev().take_while(|&&v| v <= y).fold(y, |a, &v| a.min(v));
        let right = ys[i + 1..].iter().take_while(|&&v| v <= y).fold(y, |a, &v| a.min(v));
        let ends_left = ys[..i].iter().all(|&v| v <= y);
        let ends_right = ys[i + 1..].iter().all(|&v| v <= y);
        let strict = (i == 0 || ys[i - 1] < y) && (i + 1 == ys.len() || ys[i + 1] <= y);
        if strict && (ends_left || left < 0.5 * y) && (ends_right || right < 0.5 * y) {
            peaks.push(xs[i]);
        }
    }
    peaks
}

/// Quadrants of a 2-d grid posterior on the unit square that hold a mode
/// near their centre, separated from the other quadrants by a dip.
fn modes_2d(grid: &GridPosterior) -> Vec<(f64, f64)> {
    let (a, b) = (&grid.axes[0], &grid.axes[1]);
    let at = |i: usize, j: usize| grid.density[i * b.len() + j];
    let mut found = Vec::new();
    for (ca, cb) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
        let (ia, ib): (Vec<usize>, Vec<usize>) = (
            (0..a.len()).filter(|&i| (a[i] < 0.5) == (ca < 0.5)).collect(),
            (0..b.len()).filter(|&j| (b[j] < 0.5) == (cb < 0.5)).collect(),
        );
        let (mut best, mut bi, mut bj) = (f64::NEG_INFINITY, 0, 0);
        for &i in &ia {
            for &j in &ib {
                if at(i, j) > best {
                    (best, bi, bj) = (at(i, j), i, j);
                }
            }
        }
        let near = (a[bi] - ca).abs() <= 0.05 && (b[bj] - cb).abs() <= 0.05;
        // Density on the quadrant's inner edges, along the peak's row and column.
        let edge_a = ia.iter().copied().min_by(|&x, &y| (a[x] - 0.5).abs().total_cmp(&(a[y] - 0.5).abs())).unwrap();
        let edge_b = ib.iter().copied().min_by(|&x, &y| (b[x] - 0.5).abs().total_cmp(&(b[y] - 0.5).abs())).unwrap();
        let dip = at(edge_a, bj).max(at(bi, edge_b)) < 0.5 * best;
        if near && dip {
            found.push((a[bi], b[bj]));
        }
    }
    found
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let sim = EggboxSimulator::new(10);
    let prior = sim.default_prior();
    let x_o = sim.noiseless(&sim.default_theta_o().unwrap()).unwrap();
    let run = run_mnre(&sim, &prior, 10_000, Marginals::Both, &TrainConfig::default(), 4, None).expect("eggbox run");
    let support = prior.support();
    let mut bad_1d = Vec::new();
    let mut bad_2d = Vec::new();
    for head in &run.estimators {
        let g = if head.index.len() == 1 { 1000 } else { 200 };
        let grid = grid_posterior(head, &x_o, &prior, &support, g).unwrap();
        if head.index.len() == 1 {
            let peaks = peaks_1d(&grid.axes[0], &grid.density, 0.2);
            let ok = peaks.len() == 2 && (peaks[0] - 0.25).abs() <= 0.05 && (peaks[1] - 0.75).abs() <= 0.05;
            if !ok {
                bad_1d.push(format!("{}: {peaks:.3?}", head.index.label()));
            }
        } else {
            let modes = modes_2d(&grid);
            if modes.len() != 4 {
                bad_2d.push(format!("{}: {} modes", head.index.label(), modes.len()));
            }
        }
    }
    let reference = eggbox_reference(&sim, &x_o, 10_000, 41).unwrap();
    let ones: Vec<MarginalRatioEstimator> = run.estimators.iter().filter(|e| e.index.len() == 1).cloned().collect();
    let rep = ddm(&reference, &samples_of(&ones, &x_o, &prior, &support, 10_000, 42), &[1], 43);
    let worst = rep.entries.iter().map(|e| e.accuracy).fold(0.0, f64::max);
    verdict(
        bad_1d.is_empty() && bad_2d.is_empty() && worst < 0.65 && rep.entries.len() == 10,
        format!(
            "1-d marginals not bimodal at 0.25/0.75: {}; 2-d marginals without 4 modes: {}; worst 1-d C2ST {worst:.3} (< 0.65); {:.0} min",
            if bad_1d.is_empty() { "none".into() } else { bad_1d.join(", ") },
            if bad_2d.is_empty() { "none".into() } else { bad_2d.join(", ") },
            t.elapsed().as_secs_f64() / 60.0
        ),
    )
}

// -------------------------------------------------------------- ε sweep

fn criterion_5() -> Verdict {
    let t = Instant::now();
    let toml = r#"
seed = 500
[simulator]
name = "torus"
[tmnre]
epsilon = 1e-6
budget = 0
max_rounds = 10
schedule = { kind = "increment", initial = 5000, per_round = 5000 }
[diagnostics]
reference_samples = 10000
"#;
    let res = RunConfig::from_toml_str(toml).unwrap().resolve().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let eps = [1e-2, 1e-4, 1e-6, 1e-8];
    let rows = sweep_epsilon(&res, &eps, 3, cache.path()).expect("sweep");
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = sweep_summary(&rows);
    let best = summary.iter().filter(|s| s.4 > 0).min_by(|a, b| a.3.total_cmp(&b.3)).map(|s| s.0);
    let curve: Vec<String> = summary.iter().map(|s| format!("{:e}: {:.3e} ({:.3} over {:.0} sims)", s.0, s.3, s.1, s.2)).collect();
    verdict(
        failed == 0 && matches!(best, Some(e) if e == 1e-4 || e == 1e-6),
        format!(
            "C2ST-ddm per simulation, mean of 3 [{}]; minimum at {:?} (want 1e-4 or 1e-6); failed runs {failed}; {:.0} min",
            curve.join("; "),
            best,
            t.elapsed().as_secs_f64() / 60.0
        ),
    )
}

// ------------------------------------------------------- removed mass

fn criterion_7() -> Verdict {
    let pdf = |v: f64| (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for eps in [1e-4, 1e-6, 1e-8] {
        let quad = removed_mass_bound(pdf, Interval::new(-12.0, 12.0), eps, 2_000_000);
        let exact = statrs::function::erf::erfc((-eps.ln()).sqrt());
        let expr = eps / (-eps.ln()).sqrt();
        worst = worst.max((quad / expr - 1.0).abs());
        cells.push(format!("ε={eps:e}: quadrature {quad:.4e}, erfc {exact:.4e}, ε/√(−ln ε) {expr:.4e}, ratio {:.3}", quad / expr));
    }
    verdict(worst <= 0.10, format!("worst relative error {worst:.3} (≤ 0.10) [{}]", cells.join("; ")))
}

// ----------------------------------------------------------- properties

fn criterion_8(g: Option<&GaussianRun>) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    // Gradient check on a small net.
    // Fresh residual blocks output almost nothing, so gradients upstream of
    // them sit at the roundoff floor of a finite difference; spread the
    // weights first.
    let mut net = ClassifierNet::new(NetShape { input: 5, hidden: 16, blocks: 2 }, &mut rng);
    for p in net.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    let inputs: Vec<f64> = (0..64 * 5).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
    let report = finite_difference_check(&net, &inputs, &labels, 1e-4, net.num_params(), &mut rng);
    let ok = report.max_rel_error < 1e-4;
    pass &= ok;
    parts.push(format!(
        "gradient check max rel. error {:.2e} over {} weights, {} retried with the fine step ({ok})",
        report.max_rel_error, report.checked, report.refined
    ));

    // Nesting and KS on the Gaussian run.
    if let Some(g) = g {
        let ok = nested(&g.run.rounds);
        pass &= ok;
        parts.push(format!("regions nested on every round ({ok})"));

        let head = one_d(&g.run.final_estimators)[0];
        let grid = grid_posterior(head, &g.x_o, &g.prior, &g.run.final_region, 1000).unwrap();
        let s = rejection_sample(head, &g.x_o, &g.prior, &g.run.final_region, 10_000, 1000, &mut rng).unwrap();
        let (d, p) = ks_test(&s.samples, |v| grid.cdf(v)).unwrap();
        let ok = p > 0.01;
        pass &= ok;
        parts.push(format!("KS rejection sampler vs grid CDF D={d:.4} p={p:.3} ({ok})"));
    }

    // mass_ratio multiplicativity on nested boxes under a non-uniform prior.
    let prior = FactorizablePrior::new(vec![Component::normal(0.0, 1.0), Component::uniform(-2.0, 3.0), Component::normal(1.0, 0.5)]).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let mut boxes: [Vec<Interval>; 3] = Default::default();
        for c in prior.components() {
            let sup = c.support();
            let (lo0, hi0) = (sup.lo.max(-6.0), sup.hi.min(6.0));
            let mut cuts: Vec<f64> = (0..6).map(|_| rng.gen_range(lo0..hi0)).collect();
            cuts.sort_by(f64::total_cmp);
            for (k, b) in boxes.iter_mut().enumerate() {
                b.push(Interval::new(cuts[k], cuts[5 - k]));
            }
        }
        let [a, b, c] = boxes.map(|iv| Region::new(iv).unwrap());
        let direct = mass_ratio(&prior, &c, &a).unwrap();
        let chained = mass_ratio(&prior, &c, &b).unwrap() * mass_ratio(&prior, &b, &a).unwrap();
        worst = worst.max((direct - chained).abs());
    }
    let ok = worst < 1e-12;
    pass &= ok;
    parts.push(format!("mass ratio multiplicativity max error {worst:.1e} ({ok})"));

    // C2ST on two samples of one distribution.
    let p: Vec<f64> = (0..2 * 5000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let q: Vec<f64> = (0..2 * 5000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let acc = c2st(&p, &q, 2, &mut rng).unwrap();
    let ok = (acc - 0.5).abs() <= 0.02;
    pass &= ok;
    parts.push(format!("C2ST self-test {acc:.4} ({ok})"));

    // Byte-identical reruns of the full pipeline.
    let toml = r#"
seed = 8
[simulator]
name = "gaussian_diag"
params = { dim = 2, sigma = 0.05 }
[observation]
theta_o = [0.3, 0.6]
[tmnre]
budget = 3000
[train]
max_epochs = 30
[posterior]
histogram_samples = 5000
samples = 1000
"#;
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|n| {
            let res = RunConfig::from_toml_str(toml).unwrap().resolve().unwrap();
            let out = dir.path().join(n);
            tmnre::cli::cmd_run(&res, &out).unwrap();
            out
        })
        .collect();
    let files = ["rounds.json", "store/store.bin", "posterior/posterior.json", "posterior/samples_0.csv", "posterior/hist_2d_0-1.csv"];
    let same = files.iter().all(|f| std::fs::read(outs[0].join(f)).unwrap() == std::fs::read(outs[1].join(f)).unwrap());
    pass &= same;
    parts.push(format!("byte-identical reruns ({same})"));

    verdict(pass, parts.join("; "))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let chosen = selected();
    let started = Instant::now();
    let names = [
        (1, "gaussian calibration"),
        (2, "torus TMNRE vs MNRE"),
        (3, "truncation safety"),
        (4, "eggbox structure"),
        (5, "epsilon sweep"),
        (6, "coverage"),
        (7, "removed-mass bound"),
        (8, "property suite"),
    ];
    let gaussian = if chosen.contains(&1) || chosen.contains(&6) || chosen.contains(&8) {
        Some(gaussian_run())
    } else {
        None
    };
    let mut unexpected = 0;
    for (id, name) in names {
        if !chosen.contains(&id) {
            println!("criterion {id} [SKIP] {name}: not selected (TMNRE_ACCEPTANCE=full runs it)");
            continue;
        }
        let t = Instant::now();
        let v = match id {
            1 => criterion_1(gaussian.as_ref().unwrap()),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(gaussian.as_ref().unwrap()),
            7 => criterion_7(),
            _ => criterion_8(gaussian.as_ref()),
        };
        let known = KNOWN_UNATTAINABLE.contains(&id);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        if !v.pass && !known {
            unexpected += 1;
        }
        println!("criterion {id} [{tag}] {name}: {} [{:.0} s]", v.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance finished in {:.0} s", started.elapsed().as_secs_f64());
    if unexpected > 0 {
        eprintln!("{unexpected} criterion(s) failed");
        std::process::exit(1);
    }
}
