//! Simulator interface, the analytic test simulators, and batch generation.

use rand::RngCore;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::prior::{FactorizablePrior, Interval, Region};
use crate::seed::{self, tag};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A stochastic forward model `x = g(θ, z)`.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;

    fn param_dim(&self) -> usize;

    fn data_dim(&self) -> usize;

    /// Draws one observation. Must be a pure function of `theta` and the
    /// random stream.
    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> std::result::Result<Vec<f64>, String>;

    /// `log p(x | θ)` when the likelihood is tractable.
    fn log_likelihood(&self, _x: &[f64], _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Noise-free output `g(θ)`, when the model has one.
    fn noiseless(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// The prior the model is defined against.
    fn default_prior(&self) -> FactorizablePrior;

    /// Parameters whose noiseless output is the canonical observation.
    fn default_theta_o(&self) -> Option<Vec<f64>> {
        None
    }

    /// Whether `log_likelihood` factorizes into independent per-dimension
    /// terms `θ_k ↔ x_k` under a factorizable prior.
    fn factorizes_per_dimension(&self) -> bool {
        false
    }
}

fn diag_gaussian_sample(mean: &[f64], std: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
    mean.iter()
        .zip(std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s * z
        })
        .collect()
}

/// `Σ_i −½((x_i − μ_i)/σ_i)² − log(σ_i √(2π))`.
pub fn diag_gaussian_log_pdf(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - LN_SQRT_2PI
        })
        .sum()
}

/// Three-parameter model with a narrow ring-shaped posterior.
#[derive(Clone, Debug)]
pub struct TorusSimulator {
    pub a: f64,
    pub b: f64,
    pub sigma: [f64; 3],
}

impl Default for TorusSimulator {
    fn default() -> Self {
        Self {
            a: 0.6,
            b: 0.8,
            sigma: [0.03, 0.005, 0.2],
        }
    }
}

impl TorusSimulator {
    pub fn g(&self, theta: &[f64]) -> [f64; 3] {
        let r = ((theta[0] - self.a).powi(2) + (theta[1] - self.b).powi(2)).sqrt();
        [theta[0], r, theta[2]]
    }
}

impl Simulator for TorusSimulator {
    fn name(&self) -> &str {
        "torus"
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn data_dim(&self) -> usize {
        3
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> std::result::Result<Vec<f64>, String> {
        Ok(diag_gaussian_sample(&self.g(theta), &self.sigma, rng))
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        Some(diag_gaussian_log_pdf(x, &self.g(theta), &self.sigma))
    }

    fn noiseless(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(self.g(theta).to_vec())
    }

    fn default_prior(&self) -> FactorizablePrior {
        FactorizablePrior::unit_cube(3)
    }

    fn default_theta_o(&self) -> Option<Vec<f64>> {
        Some(vec![0.57, 0.8, 1.0])
    }
}

/// `g_k(θ) = sin(π θ_k)` with isotropic Gaussian noise; `2^D` posterior modes.
#[derive(Clone, Debug)]
pub struct EggboxSimulator {
    pub dim: usize,
    pub sigma: f64,
}

impl Default for EggboxSimulator {
    fn default() -> Self {
        Self { dim: 10, sigma: 0.1 }
    }
}

impl EggboxSimulator {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn g(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| (t * std::f64::consts::PI).sin()).collect()
    }
}

impl Simulator for EggboxSimulator {
    fn name(&self) -> &str {
        "eggbox"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn data_dim(&self) -> usize {
        self.dim
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> std::result::Result<Vec<f64>, String> {
        let std = vec![self.sigma; self.dim];
        Ok(diag_gaussian_sample(&self.g(theta), &std, rng))
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        let std = vec![self.sigma; self.dim];
        Some(diag_gaussian_log_pdf(x, &self.g(theta), &std))
    }

    fn noiseless(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(self.g(theta))
    }

    fn default_prior(&self) -> FactorizablePrior {
        FactorizablePrior::unit_cube(self.dim)
    }

    fn default_theta_o(&self) -> Option<Vec<f64>> {
        Some(vec![0.25; self.dim])
    }

    fn factorizes_per_dimension(&self) -> bool {
        true
    }
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j) * v[i]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Matrix { n, data }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Matrix { n, data }
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
                .unwrap();
            if a[p * n + c] == 0.0 {
                return 0.0;
            }
            if p != c {
                for j in 0..n {
                    a.swap(p * n + j, c * n + j);
                }
                det = -det;
            }
            let pivot = a[c * n + c];
            det *= pivot;
            for r in c + 1..n {
                let f = a[r * n + c] / pivot;
                for j in c..n {
                    a[r * n + j] -= f * a[c * n + j];
                }
            }
        }
        det
    }
}

/// Proper rotation taking `(1,…,1)/√D` to `e_D`: the rotation by angle
/// `acos(1/√D)` in the plane spanned by those two vectors, identity on the
/// orthogonal complement.
pub fn rotation_matrix(dim: usize) -> Matrix {
    assert!(dim >= 2, "rotation needs D >= 2");
    let u = vec![1.0 / (dim as f64).sqrt(); dim];
    let c = u[dim - 1];
    let s = (1.0 - c * c).sqrt();
    // v = (e_D − c u) / s
    let mut v: Vec<f64> = u.iter().map(|ui| -c * ui).collect();
    v[dim - 1] += 1.0;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut q = Matrix::identity(dim);
    for i in 0..dim {
        for j in 0..dim {
            q.data[i * dim + j] += (c - 1.0) * (u[i] * u[j] + v[i] * v[j]) + s * (v[i] * u[j] - u[i] * v[j]);
        }
    }
    q
}

/// Uniform prior over the bounding box of the rotated unit-cube corners.
pub fn bounding_prior(q: &Matrix) -> FactorizablePrior {
    let dim = q.n;
    let intervals: Vec<Interval> = if dim <= 20 {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut corner = vec![0.0; dim];
        for mask in 0u32..(1 << dim) {
            for (j, c) in corner.iter_mut().enumerate() {
                *c = ((mask >> j) & 1) as f64;
            }
            for (d, y) in q.mul_vec(&corner).into_iter().enumerate() {
                lo[d] = lo[d].min(y);
                hi[d] = hi[d].max(y);
            }
        }
        lo.into_iter().zip(hi).map(|(l, h)| Interval::new(l, h)).collect()
    } else {
        (0..dim)
            .map(|d| {
                let row = &q.data[d * dim..(d + 1) * dim];
                Interval::new(
                    row.iter().filter(|v| **v < 0.0).sum(),
                    row.iter().filter(|v| **v > 0.0).sum(),
                )
            })
            .collect()
    };
    FactorizablePrior::uniform_box(&Region::new(intervals).expect("rotated cube has positive extent"))
}

/// Eggbox evaluated at `Qᵀθ`, so that the mode lattice is no longer
/// axis-aligned.
#[derive(Clone, Debug)]
pub struct RotatedEggboxSimulator {
    pub eggbox: EggboxSimulator,
    pub rotation: Matrix,
}

impl RotatedEggboxSimulator {
    pub fn new(dim: usize, sigma: f64) -> Self {
        Self {
            eggbox: EggboxSimulator { dim, sigma },
            rotation: rotation_matrix(dim),
        }
    }

    pub fn with_rotation(eggbox: EggboxSimulator, rotation: Matrix) -> Self {
        assert_eq!(eggbox.dim, rotation.n);
        Self { eggbox, rotation }
    }

    fn unrotate(&self, theta: &[f64]) -> Vec<f64> {
        self.rotation.transpose_mul_vec(theta)
    }
}

impl Simulator for RotatedEggboxSimulator {
    fn name(&self) -> &str {
        "rotated_eggbox"
    }

    fn param_dim(&self) -> usize {
        self.eggbox.dim
    }

    fn data_dim(&self) -> usize {
        self.eggbox.dim
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> std::result::Result<Vec<f64>, String> {
        self.eggbox.simulate(&self.unrotate(theta), rng)
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        self.eggbox.log_likelihood(x, &self.unrotate(theta))
    }

    fn noiseless(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.eggbox.noiseless(&self.unrotate(theta))
    }

    fn default_prior(&self) -> FactorizablePrior {
        bounding_prior(&self.rotation)
    }

    fn default_theta_o(&self) -> Option<Vec<f64>> {
        Some(self.rotation.mul_vec(&vec![0.25; self.eggbox.dim]))
    }
}

/// `x = θ + ε`, `ε ~ N(0, σ² I)` on the unit cube. Its 1-d posteriors are
/// truncated normals, which makes it the calibration reference.
#[derive(Clone, Debug)]
pub struct GaussianDiagSimulator {
    pub dim: usize,
    pub sigma: f64,
}

impl Default for GaussianDiagSimulator {
    fn default() -> Self {
        Self { dim: 3, sigma: 0.1 }
    }
}

impl Simulator for GaussianDiagSimulator {
    fn name(&self) -> &str {
        "gaussian_diag"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn data_dim(&self) -> usize {
        self.dim
    }

    fn simulate(&self, theta: &[f64], rng: &mut dyn RngCore) -> std::result::Result<Vec<f64>, String> {
        Ok(diag_gaussian_sample(theta, &vec![self.sigma; self.dim], rng))
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        Some(diag_gaussian_log_pdf(x, theta, &vec![self.sigma; self.dim]))
    }

    fn noiseless(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(theta.to_vec())
    }

    fn default_prior(&self) -> FactorizablePrior {
        FactorizablePrior::unit_cube(self.dim)
    }

    fn default_theta_o(&self) -> Option<Vec<f64>> {
        Some(vec![0.5; self.dim])
    }

    fn factorizes_per_dimension(&self) -> bool {
        true
    }
}

/// Output independent of the parameters: every likelihood-to-evidence ratio
/// is exactly one.
#[derive(Clone, Debug)]
pub struct NoiseSimulator {
    pub param_dim: usize,
    pub data_dim: usize,
}

impl Simulator for NoiseSimulator {
    fn name(&self) -> &str {
        "noise"
    }

    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn simulate(&self, _theta: &[f64], rng: &mut dyn RngCore) -> std::result::Result<Vec<f64>, String> {
        Ok((0..self.data_dim).map(|_| StandardNormal.sample(rng)).collect())
    }

    fn default_prior(&self) -> FactorizablePrior {
        FactorizablePrior::unit_cube(self.param_dim)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimParams {
    dim: Option<usize>,
    sigma: Option<Value>,
    a: Option<f64>,
    b: Option<f64>,
}

pub const SIMULATOR_NAMES: [&str; 5] = ["torus", "eggbox", "rotated_eggbox", "gaussian_diag", "noise"];

/// Builds a simulator from its registry name and parameter table.
pub fn from_spec(name: &str, params: &Value) -> Result<Box<dyn Simulator>> {
    let p: SimParams = if params.is_null() {
        SimParams::default()
    } else {
        serde_json::from_value(params.clone())
            .map_err(|e| Error::Config(vec![format!("simulator.params: {e}")]))?
    };
    let scalar_sigma = |default: f64| -> Result<f64> {
        match &p.sigma {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|s| *s > 0.0)
                .ok_or_else(|| Error::Config(vec![format!("simulator.params.sigma must be a positive number, got {v}")])),
        }
    };
    let dim = |default: usize, min: usize| -> Result<usize> {
        let d = p.dim.unwrap_or(default);
        if d < min {
            return Err(Error::Config(vec![format!("simulator.params.dim must be >= {min}, got {d}")]));
        }
        Ok(d)
    };
    Ok(match name {
        "torus" => {
            let mut t = TorusSimulator::default();
            if let Some(a) = p.a {
                t.a = a;
            }
            if let Some(b) = p.b {
                t.b = b;
            }
            if let Some(v) = &p.sigma {
                let s: [f64; 3] = serde_json::from_value(v.clone()).map_err(|e| {
                    Error::Config(vec![format!("simulator.params.sigma for torus must be [s0, s1, s2]: {e}")])
                })?;
                if s.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::Config(vec!["simulator.params.sigma entries must be > 0".into()]));
                }
                t.sigma = s;
            }
            Box::new(t)
        }
        "eggbox" => Box::new(EggboxSimulator {
            dim: dim(10, 1)?,
            sigma: scalar_sigma(0.1)?,
        }),
        "rotated_eggbox" => Box::new(RotatedEggboxSimulator::new(dim(10, 2)?, scalar_sigma(0.1)?)),
        "gaussian_diag" => Box::new(GaussianDiagSimulator {
            dim: dim(3, 1)?,
            sigma: scalar_sigma(0.1)?,
        }),
        "noise" => {
            let d = dim(1, 1)?;
            Box::new(NoiseSimulator { param_dim: d, data_dim: d })
        }
        other => {
            return Err(Error::Config(vec![format!(
                "simulator.name: unknown simulator `{other}` (expected one of {})",
                SIMULATOR_NAMES.join(", ")
            )]))
        }
    })
}

/// Simulates one observation per parameter vector. Item `i` draws its noise
/// from a stream keyed by `(base_seed, i)`, so output does not depend on the
/// number of workers.
pub fn simulate_batch(sim: &dyn Simulator, thetas: &[Vec<f64>], base_seed: u64) -> Result<Vec<Vec<f64>>> {
    thetas
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            if theta.len() != sim.param_dim() {
                return Err(Error::Simulator {
                    index: i,
                    message: format!("expected {} parameters, got {}", sim.param_dim(), theta.len()),
                });
            }
            let mut rng = seed::rng(base_seed, &[tag::SIMULATE, i as u64]);
            let x = sim
                .simulate(theta, &mut rng)
                .map_err(|message| Error::Simulator { index: i, message })?;
            if x.len() != sim.data_dim() {
                return Err(Error::Simulator {
                    index: i,
                    message: format!("expected {} outputs, got {}", sim.data_dim(), x.len()),
                });
            }
            Ok(x)
        })
        .collect()
}

/// Number of simulations actually run for a request of `requested`: a
/// Poisson draw centred on the request.
pub fn poisson_count(requested: usize, rng: &mut dyn RngCore) -> usize {
    if requested == 0 {
        return 0;
    }
    let dist = Poisson::new(requested as f64).expect("positive rate");
    dist.sample(rng) as usize
}
