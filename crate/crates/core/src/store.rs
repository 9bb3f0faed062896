//! Append-only store of simulated `(θ, x)` pairs tagged with their round.
//!
//! On disk a store is `store.bin`, a flat sequence of little-endian `f64`
//! records `[round, θ_0 … θ_{D−1}, x_0 … x_{n−1}]`, plus `store.json`
//! describing the record layout and per-round counts. Records in the binary
//! file beyond the count in the sidecar are ignored, so an interrupted append
//! never corrupts what was committed before it.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Region;

pub const STORE_BIN: &str = "store.bin";
pub const STORE_JSON: &str = "store.json";
const FORMAT: &str = "tmnre-store";

#[derive(Clone, Debug, PartialEq)]
pub struct SampleStore {
    theta_dim: usize,
    x_dim: usize,
    rounds: Vec<u32>,
    thetas: Vec<f64>,
    xs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    theta_dim: usize,
    x_dim: usize,
    record_layout: Vec<String>,
    records: usize,
    per_round: BTreeMap<u32, usize>,
}

impl SampleStore {
    pub fn new(theta_dim: usize, x_dim: usize) -> Self {
        Self {
            theta_dim,
            x_dim,
            rounds: Vec::new(),
            thetas: Vec::new(),
            xs: Vec::new(),
        }
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn push(&mut self, round: u32, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.theta_dim {
            return Err(Error::DimensionMismatch {
                expected: self.theta_dim,
                got: theta.len(),
            });
        }
        if x.len() != self.x_dim {
            return Err(Error::DimensionMismatch {
                expected: self.x_dim,
                got: x.len(),
            });
        }
        self.rounds.push(round);
        self.thetas.extend_from_slice(theta);
        self.xs.extend_from_slice(x);
        Ok(())
    }

    pub fn round_of(&self, i: usize) -> u32 {
        self.rounds[i]
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i * self.theta_dim..(i + 1) * self.theta_dim]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.x_dim..(i + 1) * self.x_dim]
    }

    pub fn count_in_round(&self, round: u32) -> usize {
        self.rounds.iter().filter(|&&r| r == round).count()
    }

    pub fn per_round(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for &r in &self.rounds {
            *m.entry(r).or_insert(0) += 1;
        }
        m
    }

    /// Indices of the records whose θ lies in `region`, in storage order.
    pub fn indices_in(&self, region: &Region) -> Vec<usize> {
        (0..self.len()).filter(|&i| region.contains(self.theta(i))).collect()
    }

    /// Drops every record from `round` onwards.
    pub fn truncate_rounds(&mut self, round: u32) {
        let keep = self.rounds.iter().position(|&r| r >= round).unwrap_or(self.len());
        self.rounds.truncate(keep);
        self.thetas.truncate(keep * self.theta_dim);
        self.xs.truncate(keep * self.x_dim);
    }

    fn record(&self, i: usize, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.rounds[i] as f64).to_le_bytes());
        for v in self.theta(i).iter().chain(self.x(i)) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn sidecar(&self) -> Sidecar {
        let mut layout = vec!["round".to_string()];
        layout.extend((0..self.theta_dim).map(|d| format!("theta_{d}")));
        layout.extend((0..self.x_dim).map(|d| format!("x_{d}")));
        Sidecar {
            format: FORMAT.into(),
            version: 1,
            theta_dim: self.theta_dim,
            x_dim: self.x_dim,
            record_layout: layout,
            records: self.len(),
            per_round: self.per_round(),
        }
    }

    fn write_sidecar(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join(format!("{STORE_JSON}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(&self.sidecar())?)?;
        fs::rename(tmp, dir.join(STORE_JSON))?;
        Ok(())
    }

    /// Writes the whole store into `dir`, replacing any previous one.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.len() * 8 * (1 + self.theta_dim + self.x_dim));
        for i in 0..self.len() {
            self.record(i, &mut bytes);
        }
        fs::write(dir.join(STORE_BIN), bytes)?;
        self.write_sidecar(dir)
    }

    /// Appends records `from..` to an existing on-disk store and commits them
    /// by rewriting the sidecar.
    pub fn append_since(&self, dir: &Path, from: usize) -> Result<()> {
        let bin = dir.join(STORE_BIN);
        let width = 8 * (1 + self.theta_dim + self.x_dim);
        let f = OpenOptions::new().create(true).write(true).truncate(false).open(&bin)?;
        // Discard anything past the committed prefix before appending.
        f.set_len((from * width) as u64)?;
        let mut f = OpenOptions::new().append(true).open(&bin)?;
        let mut bytes = Vec::with_capacity((self.len() - from) * width);
        for i in from..self.len() {
            self.record(i, &mut bytes);
        }
        f.write_all(&bytes)?;
        f.sync_data()?;
        self.write_sidecar(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let json_path = dir.join(STORE_JSON);
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(&json_path)?)
            .map_err(|e| Error::format(&json_path, e.to_string()))?;
        if side.format != FORMAT || side.version != 1 {
            return Err(Error::format(&json_path, "unsupported store format"));
        }
        let bin_path = dir.join(STORE_BIN);
        let mut bytes = Vec::new();
        fs::File::open(&bin_path)?.read_to_end(&mut bytes)?;
        let width = 1 + side.theta_dim + side.x_dim;
        if bytes.len() < side.records * width * 8 {
            return Err(Error::format(
                &bin_path,
                format!("expected {} records, file holds {}", side.records, bytes.len() / (width * 8)),
            ));
        }
        let mut store = SampleStore::new(side.theta_dim, side.x_dim);
        for rec in bytes.chunks_exact(width * 8).take(side.records) {
            let vals: Vec<f64> = rec
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let round = vals[0];
            if !(round >= 0.0 && round.fract() == 0.0 && round <= u32::MAX as f64) {
                return Err(Error::format(&bin_path, format!("bad round tag {round}")));
            }
            store.push(round as u32, &vals[1..1 + side.theta_dim], &vals[1 + side.theta_dim..])?;
        }
        Ok(store)
    }
}
