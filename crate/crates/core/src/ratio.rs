//! Marginal ratio heads: one classifier per 1-d or 2-d parameter subset, all
//! trained on the same simulated pairs.

use std::fmt;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{train_classifier, ClassifierNet, EpochRecord, LayerShape, NetShape, PairedData, Standardizer, StopReason, TrainConfig};
use crate::prior::Region;
use crate::seed::{self, tag};
use crate::store::SampleStore;

/// Sorted, duplicate-free subset of parameter dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct MarginalIndex(Vec<usize>);

impl MarginalIndex {
    pub fn new(mut dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::precondition("marginal index needs at least one dimension"));
        }
        dims.sort_unstable();
        if dims.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::precondition(format!("duplicate dimension in marginal index {dims:?}")));
        }
        Ok(Self(dims))
    }

    pub fn one(d: usize) -> Self {
        Self(vec![d])
    }

    pub fn pair(i: usize, j: usize) -> Result<Self> {
        Self::new(vec![i, j])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Picks this index's coordinates out of a full parameter vector.
    pub fn slice(&self, theta: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&d| theta[d]).collect()
    }

    /// File-name friendly label, e.g. `0` or `0-2`.
    pub fn label(&self) -> String {
        self.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("-")
    }
}

impl<'de> Deserialize<'de> for MarginalIndex {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let dims = Vec::<usize>::deserialize(de)?;
        MarginalIndex::new(dims).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for MarginalIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marginals {
    #[serde(rename = "1d")]
    OneD,
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "1d+2d")]
    Both,
}

impl FromStr for Marginals {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1d" => Ok(Self::OneD),
            "2d" => Ok(Self::TwoD),
            "1d+2d" => Ok(Self::Both),
            other => Err(Error::precondition(format!("unknown marginal set `{other}`"))),
        }
    }
}

/// All 1-d and/or 2-d indices over `dims` parameters.
pub fn marginal_set(dims: usize, which: Marginals) -> Result<Vec<MarginalIndex>> {
    if dims == 0 {
        return Err(Error::precondition("marginal set needs at least one dimension"));
    }
    if which == Marginals::TwoD && dims < 2 {
        return Err(Error::precondition("2-d marginals need at least two dimensions"));
    }
    let mut out = Vec::new();
    if which != Marginals::TwoD {
        out.extend((0..dims).map(MarginalIndex::one));
    }
    if which != Marginals::OneD {
        for i in 0..dims {
            for j in i + 1..dims {
                out.push(MarginalIndex(vec![i, j]));
            }
        }
    }
    Ok(out)
}

/// Anything that can evaluate `log r̂(x | ϑ)` for one marginal index.
pub trait RatioHead: Sync {
    fn index(&self) -> &MarginalIndex;

    /// One value per row of `thetas`, which holds `index().len()` columns.
    fn log_ratio_batch(&self, x: &[f64], thetas: &[f64]) -> Vec<f64>;
}

/// A head backed by a closure `(x, ϑ) ↦ log r`, for analytic ratios and tests.
pub struct FnHead<F> {
    index: MarginalIndex,
    f: F,
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> FnHead<F> {
    pub fn new(index: MarginalIndex, f: F) -> Self {
        Self { index, f }
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> RatioHead for FnHead<F> {
    fn index(&self) -> &MarginalIndex {
        &self.index
    }

    fn log_ratio_batch(&self, x: &[f64], thetas: &[f64]) -> Vec<f64> {
        thetas.chunks_exact(self.index.len()).map(|t| (self.f)(x, t)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRatio {
    pub value: f64,
    /// False when `ϑ` lies outside the region the head was trained on.
    pub in_domain: bool,
}

/// A trained classifier for one marginal index. Its output is `log r̂` directly.
#[derive(Clone, Debug)]
pub struct MarginalRatioEstimator {
    pub index: MarginalIndex,
    pub net: ClassifierNet,
    pub x_standardizer: Standardizer,
    pub theta_standardizer: Standardizer,
    /// Training-time region over the index's own dimensions.
    pub region: Region,
    pub round: u32,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop: StopReason,
    pub trace: Vec<EpochRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadHeader {
    format: String,
    index: MarginalIndex,
    round: u32,
    shape: NetShape,
    layers: Vec<LayerShape>,
    num_params: usize,
    num_running: usize,
    x_standardizer: Standardizer,
    theta_standardizer: Standardizer,
    region: Region,
    best_epoch: usize,
    best_val_loss: f64,
    stop: StopReason,
}

const HEAD_FORMAT: &str = "tmnre-head-v1";

impl MarginalRatioEstimator {
    fn inputs(&self, x: &[f64], thetas: &[f64]) -> Vec<f64> {
        let k = self.index.len();
        let n = thetas.len() / k;
        let mut xs = Vec::with_capacity(self.x_standardizer.dim());
        self.x_standardizer.apply(x, &mut xs);
        let mut rows = Vec::with_capacity(n * (xs.len() + k));
        for t in thetas.chunks_exact(k) {
            rows.extend_from_slice(&xs);
            self.theta_standardizer.apply(t, &mut rows);
        }
        rows
    }

    pub fn log_ratio(&self, x: &[f64], theta: &[f64]) -> Result<LogRatio> {
        if theta.len() != self.index.len() {
            return Err(Error::DimensionMismatch {
                expected: self.index.len(),
                got: theta.len(),
            });
        }
        if x.len() != self.x_standardizer.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.x_standardizer.dim(),
                got: x.len(),
            });
        }
        let value = self.net.predict(&self.inputs(x, theta), 1)[0];
        Ok(LogRatio {
            value,
            in_domain: self.region.contains(theta),
        })
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let bin = dir.join(format!("{stem}.bin"));
        let json = dir.join(format!("{stem}.json"));
        let mut bytes = Vec::with_capacity(8 * (self.net.num_params() + self.net.running_stats().len()));
        for v in self.net.params().iter().chain(self.net.running_stats()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes)?;
        let header = HeadHeader {
            format: HEAD_FORMAT.into(),
            index: self.index.clone(),
            round: self.round,
            shape: self.net.shape(),
            layers: self.net.layer_shapes().to_vec(),
            num_params: self.net.num_params(),
            num_running: self.net.running_stats().len(),
            x_standardizer: self.x_standardizer.clone(),
            theta_standardizer: self.theta_standardizer.clone(),
            region: self.region.clone(),
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            stop: self.stop,
        };
        fs::write(&json, serde_json::to_string_pretty(&header)?)?;
        Ok((bin, json))
    }

    /// Loads `{stem}.bin` + `{stem}.json` from `dir`. The training trace is
    /// not part of the head files and comes back empty.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json = dir.join(format!("{stem}.json"));
        let bin = dir.join(format!("{stem}.bin"));
        let h: HeadHeader =
            serde_json::from_str(&fs::read_to_string(&json)?).map_err(|e| Error::format(&json, e.to_string()))?;
        if h.format != HEAD_FORMAT {
            return Err(Error::format(&json, format!("unknown head format `{}`", h.format)));
        }
        let bytes = fs::read(&bin)?;
        if bytes.len() != 8 * (h.num_params + h.num_running) {
            return Err(Error::format(&bin, "tensor file size does not match header"));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let (p, r) = vals.split_at(h.num_params);
        let net = ClassifierNet::from_parts(h.shape, p.to_vec(), r.to_vec())
            .ok_or_else(|| Error::format(&bin, "tensor sizes do not match architecture"))?;
        if h.theta_standardizer.dim() != h.index.len() || h.region.dims() != h.index.len() {
            return Err(Error::format(&json, "standardizer/region width does not match index"));
        }
        Ok(Self {
            index: h.index,
            net,
            x_standardizer: h.x_standardizer,
            theta_standardizer: h.theta_standardizer,
            region: h.region,
            round: h.round,
            best_epoch: h.best_epoch,
            best_val_loss: h.best_val_loss,
            stop: h.stop,
            trace: Vec::new(),
        })
    }
}

impl RatioHead for MarginalRatioEstimator {
    fn index(&self) -> &MarginalIndex {
        &self.index
    }

    fn log_ratio_batch(&self, x: &[f64], thetas: &[f64]) -> Vec<f64> {
        let n = thetas.len() / self.index.len();
        self.net.predict(&self.inputs(x, thetas), n)
    }
}

/// Training result for one head; a failed head does not sink the others.
#[derive(Debug)]
pub struct HeadOutcome {
    pub index: MarginalIndex,
    pub result: Result<MarginalRatioEstimator>,
}

#[derive(Debug)]
pub struct MnreOutcome {
    pub heads: Vec<HeadOutcome>,
    /// Number of stored pairs used, shared by every head.
    pub rows: usize,
    /// Hash of the row-index sequence the heads were trained on.
    pub fingerprint: u64,
}

impl MnreOutcome {
    pub fn all_ok(&self) -> bool {
        self.heads.iter().all(|h| h.result.is_ok())
    }

    pub fn estimators(&self) -> Vec<&MarginalRatioEstimator> {
        self.heads.iter().filter_map(|h| h.result.as_ref().ok()).collect()
    }

    pub fn into_estimators(self) -> Result<Vec<MarginalRatioEstimator>> {
        self.heads.into_iter().map(|h| h.result).collect()
    }

    pub fn failures(&self) -> Vec<(&MarginalIndex, &Error)> {
        self.heads
            .iter()
            .filter_map(|h| h.result.as_ref().err().map(|e| (&h.index, e)))
            .collect()
    }
}

fn fingerprint(rows: &[usize]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for &r in rows {
        h.write_u64(r as u64);
    }
    h.finish()
}

/// Trains one independent head per index on the stored pairs inside `region`.
/// Head `k` draws its randomness from `(seed, round, k)`, so results do not
/// depend on how many worker threads run.
pub fn train_mnre(
    store: &SampleStore,
    region: &Region,
    indices: &[MarginalIndex],
    cfg: &TrainConfig,
    seed: u64,
    round: u32,
) -> Result<MnreOutcome> {
    if region.dims() != store.theta_dim() {
        return Err(Error::DimensionMismatch {
            expected: store.theta_dim(),
            got: region.dims(),
        });
    }
    if let Some(bad) = indices.iter().find(|ix| ix.dims().iter().any(|&d| d >= store.theta_dim())) {
        return Err(Error::precondition(format!(
            "marginal index {bad} out of range for {} parameters",
            store.theta_dim()
        )));
    }
    let rows = store.indices_in(region);
    if rows.is_empty() {
        return Err(Error::precondition("no stored samples inside the training region"));
    }
    let mut xs = Vec::with_capacity(rows.len() * store.x_dim());
    for &i in &rows {
        xs.extend_from_slice(store.x(i));
    }
    let x_std = Standardizer::fit(&xs, store.x_dim());
    let xs = x_std.transform(&xs);

    let heads = indices
        .par_iter()
        .enumerate()
        .map(|(k, index)| {
            let result = (|| {
                let mut thetas = Vec::with_capacity(rows.len() * index.len());
                for &i in &rows {
                    let t = store.theta(i);
                    thetas.extend(index.dims().iter().map(|&d| t[d]));
                }
                let t_std = Standardizer::fit(&thetas, index.len());
                let thetas = t_std.transform(&thetas);
                let data = PairedData {
                    x: &xs,
                    x_dim: store.x_dim(),
                    theta: &thetas,
                    theta_dim: index.len(),
                };
                let mut rng = seed::rng(seed, &[tag::TRAIN, round as u64, k as u64]);
                let out = train_classifier(&data, cfg, &mut rng)?;
                Ok(MarginalRatioEstimator {
                    index: index.clone(),
                    net: out.net,
                    x_standardizer: x_std.clone(),
                    theta_standardizer: t_std,
                    region: region.select(index.dims()),
                    round,
                    best_epoch: out.best_epoch,
                    best_val_loss: out.best_val_loss,
                    stop: out.stop,
                    trace: out.trace,
                })
            })();
            if let Err(e) = &result {
                log::warn!("head {index} failed: {e}");
            }
            HeadOutcome {
                index: index.clone(),
                result,
            }
        })
        .collect();
    Ok(MnreOutcome {
        heads,
        rows: rows.len(),
        fingerprint: fingerprint(&rows),
    })
}
