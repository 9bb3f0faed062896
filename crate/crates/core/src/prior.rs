//! Factorizable priors over a compact box and their indicator-truncated
//! versions.

use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Normal components are compactified to `mean ± NORMAL_SUPPORT_SIGMAS · std`.
pub const NORMAL_SUPPORT_SIGMAS: f64 = 8.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(v: Interval) -> Self {
        [v.lo, v.hi]
    }
}

/// One-dimensional prior factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Component {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

impl Component {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Component::Uniform { lo, hi }
    }

    pub fn normal(mean: f64, std: f64) -> Self {
        Component::Normal { mean, std }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            Component::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(format!("uniform bounds must be finite with lo < hi, got [{lo}, {hi}]"));
                }
            }
            Component::Normal { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                    return Err(format!("normal needs finite mean and std > 0, got N({mean}, {std})"));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> Interval {
        match *self {
            Component::Uniform { lo, hi } => Interval { lo, hi },
            Component::Normal { mean, std } => Interval {
                lo: mean - NORMAL_SUPPORT_SIGMAS * std,
                hi: mean + NORMAL_SUPPORT_SIGMAS * std,
            },
        }
    }

    pub fn ln_pdf(&self, v: f64) -> f64 {
        if !self.support().contains(v) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Component::Uniform { lo, hi } => -(hi - lo).ln(),
            Component::Normal { mean, std } => {
                let z = (v - mean) / std;
                -0.5 * z * z - std.ln() - LN_SQRT_2PI
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.ln_pdf(v).exp()
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            Component::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            Component::Normal { mean, std } => std_normal_cdf((v - mean) / std),
        }
    }

    /// Probability mass on `[lo, hi]`, computed from whichever tail keeps
    /// precision.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match *self {
            Component::Uniform { .. } => (self.cdf(hi) - self.cdf(lo)).max(0.0),
            Component::Normal { mean, std } => {
                let (za, zb) = ((lo - mean) / std, (hi - mean) / std);
                let m = if za >= 0.0 {
                    std_normal_sf(za) - std_normal_sf(zb)
                } else {
                    std_normal_cdf(zb) - std_normal_cdf(za)
                };
                m.max(0.0)
            }
        }
    }

    /// Draws from the component restricted to `[lo, hi]` by inverse CDF.
    pub fn sample_in<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match *self {
            Component::Uniform { .. } => lo + u * (hi - lo),
            Component::Normal { mean, std } => {
                let (za, zb) = ((lo - mean) / std, (hi - mean) / std);
                let z = if za >= 0.0 {
                    // Upper tail: invert the survival function.
                    let (sa, sb) = (std_normal_sf(za), std_normal_sf(zb));
                    let s = sb + u * (sa - sb);
                    SQRT_2 * erfc_inv(2.0 * s)
                } else {
                    let (ca, cb) = (std_normal_cdf(za), std_normal_cdf(zb));
                    let c = ca + u * (cb - ca);
                    -SQRT_2 * erfc_inv(2.0 * c)
                };
                (mean + std * z).clamp(lo, hi)
            }
        }
    }
}

/// Axis-aligned box of per-dimension intervals. Serialized as a JSON array of
/// `[lo, hi]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region {
    intervals: Vec<Interval>,
}

impl Region {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        for (d, iv) in intervals.iter().enumerate() {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo < iv.hi) {
                return Err(Error::InvalidRegion(format!(
                    "dimension {d}: need finite lo < hi, got [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect())
    }

    pub fn unit_cube(dims: usize) -> Self {
        Self {
            intervals: vec![Interval::new(0.0, 1.0); dims],
        }
    }

    /// Intersects the requested intervals with `outer`. Clipping is silent;
    /// only an empty intersection is an error.
    pub fn clipped(intervals: Vec<Interval>, outer: &Region) -> Result<Self> {
        if intervals.len() != outer.dims() {
            return Err(Error::DimensionMismatch {
                expected: outer.dims(),
                got: intervals.len(),
            });
        }
        let clipped = intervals
            .iter()
            .zip(&outer.intervals)
            .enumerate()
            .map(|(d, (iv, o))| {
                iv.intersect(o).ok_or_else(|| {
                    Error::InvalidRegion(format!(
                        "dimension {d}: [{}, {}] does not overlap [{}, {}]",
                        iv.lo, iv.hi, o.lo, o.hi
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { intervals: clipped })
    }

    pub fn dims(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn interval(&self, d: usize) -> Interval {
        self.intervals[d]
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dims() && self.intervals.iter().zip(theta).all(|(iv, &v)| iv.contains(v))
    }

    pub fn contains_region(&self, inner: &Region) -> bool {
        inner.dims() == self.dims()
            && self.intervals.iter().zip(&inner.intervals).all(|(o, i)| o.contains_interval(i))
    }

    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(Interval::width).product()
    }

    /// Sub-box over the selected dimensions.
    pub fn select(&self, dims: &[usize]) -> Region {
        Region {
            intervals: dims.iter().map(|&d| self.intervals[d]).collect(),
        }
    }
}

/// Product of independent one-dimensional priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorizablePrior {
    components: Vec<Component>,
}

impl FactorizablePrior {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::precondition("prior needs at least one component"));
        }
        let errors: Vec<String> = components
            .iter()
            .enumerate()
            .filter_map(|(d, c)| c.validate().err().map(|e| format!("prior[{d}]: {e}")))
            .collect();
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        Ok(Self { components })
    }

    pub fn uniform_box(region: &Region) -> Self {
        Self {
            components: region.intervals().iter().map(|iv| Component::uniform(iv.lo, iv.hi)).collect(),
        }
    }

    pub fn unit_cube(dims: usize) -> Self {
        Self::uniform_box(&Region::unit_cube(dims))
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, d: usize) -> &Component {
        &self.components[d]
    }

    /// The support box Ω.
    pub fn support(&self) -> Region {
        Region {
            intervals: self.components.iter().map(Component::support).collect(),
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.dims(), "theta has wrong dimension");
        self.components.iter().zip(theta).map(|(c, &v)| c.ln_pdf(v)).sum()
    }

    /// Per-dimension prior mass of `region`.
    pub fn masses(&self, region: &Region) -> Result<Vec<f64>> {
        self.check_dims(region)?;
        Ok(self
            .components
            .iter()
            .zip(region.intervals())
            .map(|(c, iv)| c.mass(iv.lo, iv.hi))
            .collect())
    }

    pub fn mass(&self, region: &Region) -> Result<f64> {
        Ok(self.masses(region)?.iter().product())
    }

    /// The marginal prior over a subset of dimensions.
    pub fn select(&self, dims: &[usize]) -> FactorizablePrior {
        FactorizablePrior {
            components: dims.iter().map(|&d| self.components[d].clone()).collect(),
        }
    }

    /// Draws `n` points from the prior restricted to `region`.
    pub fn sample_truncated<R: Rng + ?Sized>(
        &self,
        region: &Region,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_nonempty(region)?;
        Ok((0..n)
            .map(|_| {
                self.components
                    .iter()
                    .zip(region.intervals())
                    .map(|(c, iv)| c.sample_in(iv.lo, iv.hi, rng))
                    .collect()
            })
            .collect())
    }

    fn check_dims(&self, region: &Region) -> Result<()> {
        if region.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: region.dims(),
            });
        }
        Ok(())
    }

    fn check_nonempty(&self, region: &Region) -> Result<()> {
        for (d, m) in self.masses(region)?.into_iter().enumerate() {
            if !(m > 0.0) {
                let iv = region.interval(d);
                return Err(Error::EmptyTruncation { dim: d, lo: iv.lo, hi: iv.hi });
            }
        }
        Ok(())
    }
}

/// `p_Γ(θ) = V⁻¹ 𝟙_Γ(θ) p(θ)`.
#[derive(Clone, Debug)]
pub struct TruncatedPrior {
    base: FactorizablePrior,
    region: Region,
    log_mass: f64,
}

impl TruncatedPrior {
    pub fn new(base: FactorizablePrior, region: Region) -> Result<Self> {
        base.check_nonempty(&region)?;
        let log_mass = base.masses(&region)?.iter().map(|m| m.ln()).sum::<f64>().min(0.0);
        Ok(Self { base, region, log_mass })
    }

    pub fn base(&self) -> &FactorizablePrior {
        &self.base
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// `log V`, the log prior mass inside the region.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.region.contains(theta) {
            return f64::NEG_INFINITY;
        }
        self.base.log_density(theta) - self.log_mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        self.base
            .sample_truncated(&self.region, n, rng)
            .expect("region mass checked at construction")
    }
}

pub fn sample_truncated<R: Rng + ?Sized>(
    prior: &FactorizablePrior,
    region: &Region,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    prior.sample_truncated(region, n, rng)
}

/// Exact prior-mass ratio `∫𝟙_inner p / ∫𝟙_outer p` from per-component CDFs.
pub fn mass_ratio(prior: &FactorizablePrior, inner: &Region, outer: &Region) -> Result<f64> {
    if !outer.contains_region(inner) {
        return Err(Error::InvalidRegion("inner region is not contained in outer region".into()));
    }
    let mi = prior.masses(inner)?;
    let mo = prior.masses(outer)?;
    let mut ratio = 1.0;
    for (d, (a, b)) in mi.iter().zip(&mo).enumerate() {
        if !(*b > 0.0) {
            let iv = outer.interval(d);
            return Err(Error::EmptyTruncation { dim: d, lo: iv.lo, hi: iv.hi });
        }
        ratio *= (a / b).min(1.0);
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(lo) + f(hi)))
    }

    #[test]
    fn components_integrate_to_one() {
        for c in [Component::uniform(-2.0, 3.0), Component::normal(0.3, 0.7)] {
            let s = c.support();
            let total = trapezoid(|v| c.pdf(v), s.lo, s.hi, 200_000);
            assert!((total - 1.0).abs() < 1e-6, "{c:?}: {total}");
        }
    }

    #[test]
    fn factorizes() {
        let p = FactorizablePrior::new(vec![Component::uniform(0.0, 2.0), Component::normal(1.0, 0.5)]).unwrap();
        let theta = [0.4, 1.3];
        let expected = p.component(0).ln_pdf(0.4) + p.component(1).ln_pdf(1.3);
        assert_eq!(p.log_density(&theta), expected);
    }

    #[test]
    fn full_box_samples_stay_in_cube() {
        let p = FactorizablePrior::unit_cube(3);
        let mut rng = seed::rng(1, &[]);
        let s = sample_truncated(&p, &p.support(), 4, &mut rng).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|t| t.iter().all(|&v| (0.0..=1.0).contains(&v))));
    }

    #[test]
    fn truncated_uniform_mean() {
        let p = FactorizablePrior::unit_cube(1);
        let r = Region::from_pairs(&[(0.2, 0.4)]).unwrap();
        let mut rng = seed::rng(2, &[]);
        let s = sample_truncated(&p, &r, 10_000, &mut rng).unwrap();
        let mean = s.iter().map(|t| t[0]).sum::<f64>() / 1e4;
        let tol = 3.0 * (0.2 / 12f64.sqrt()) / 100.0;
        assert!((mean - 0.3).abs() < tol, "mean {mean}");
        assert!(s.iter().all(|t| r.contains(t)));
    }

    #[test]
    fn truncated_normal_mean() {
        let p = FactorizablePrior::new(vec![Component::normal(0.0, 1.0)]).unwrap();
        let r = Region::from_pairs(&[(-1.0, 1.0)]).unwrap();
        let mut rng = seed::rng(3, &[]);
        let s = sample_truncated(&p, &r, 10_000, &mut rng).unwrap();
        assert!(s.iter().all(|t| (-1.0..=1.0).contains(&t[0])));
        let mean = s.iter().map(|t| t[0]).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn far_tail_normal_sampling_is_finite() {
        let c = Component::normal(0.0, 1.0);
        let mut rng = seed::rng(4, &[]);
        for _ in 0..1000 {
            let v = c.sample_in(6.0, 7.0, &mut rng);
            assert!((6.0..=7.0).contains(&v));
        }
        assert!(c.mass(6.0, 7.0) > 0.0);
    }

    #[test]
    fn empty_truncation_is_an_error() {
        let p = FactorizablePrior::new(vec![Component::uniform(0.0, 1.0)]).unwrap();
        let far = Region::from_pairs(&[(2.0, 3.0)]).unwrap();
        let mut rng = seed::rng(5, &[]);
        assert!(matches!(
            sample_truncated(&p, &far, 3, &mut rng),
            Err(Error::EmptyTruncation { dim: 0, .. })
        ));
        assert!(TruncatedPrior::new(p, far).is_err());
    }

    #[test]
    fn mass_ratio_examples() {
        let p = FactorizablePrior::unit_cube(3);
        let full = p.support();
        let half = Region::from_pairs(&[(0.0, 0.5); 3]).unwrap();
        assert!((mass_ratio(&p, &half, &full).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(mass_ratio(&p, &full, &full).unwrap(), 1.0);

        let p1 = FactorizablePrior::unit_cube(1);
        let inner = Region::from_pairs(&[(0.1, 0.9)]).unwrap();
        assert!((mass_ratio(&p1, &inner, &p1.support()).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn mass_ratio_rejects_non_nested() {
        let p = FactorizablePrior::unit_cube(1);
        let a = Region::from_pairs(&[(0.0, 0.5)]).unwrap();
        let b = Region::from_pairs(&[(0.4, 0.9)]).unwrap();
        assert!(mass_ratio(&p, &a, &b).is_err());
    }

    #[test]
    fn truncated_log_density_examples() {
        let p = FactorizablePrior::unit_cube(2);
        let tp = TruncatedPrior::new(p.clone(), p.support()).unwrap();
        assert_eq!(tp.log_density(&[0.5, 0.5]), 0.0);
        assert_eq!(tp.log_density(&[1.5, 0.5]), f64::NEG_INFINITY);

        let p1 = FactorizablePrior::unit_cube(1);
        let tp1 = TruncatedPrior::new(p1, Region::from_pairs(&[(0.0, 0.5)]).unwrap()).unwrap();
        assert!((tp1.log_density(&[0.25]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((tp1.log_mass() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn clipping_is_silent() {
        let outer = Region::unit_cube(2);
        let r = Region::clipped(vec![Interval::new(-0.5, 0.5), Interval::new(0.2, 3.0)], &outer).unwrap();
        assert_eq!(r.intervals(), &[Interval::new(0.0, 0.5), Interval::new(0.2, 1.0)]);
        assert!(Region::clipped(vec![Interval::new(2.0, 3.0), Interval::new(0.0, 1.0)], &outer).is_err());
    }

    #[test]
    fn region_json_is_array_of_pairs() {
        let r = Region::from_pairs(&[(0.0, 0.5), (0.25, 1.0)]).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, "[[0.0,0.5],[0.25,1.0]]");
        let back: Region = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn prior_spec_json() {
        let s = r#"[{"kind":"uniform","lo":0.0,"hi":1.0},{"kind":"normal","mean":0.0,"std":2.0}]"#;
        let p: FactorizablePrior = serde_json::from_str(s).unwrap();
        assert_eq!(p.dims(), 2);
        assert_eq!(p.support().interval(1), Interval::new(-16.0, 16.0));
    }

    fn arb_prior() -> impl Strategy<Value = FactorizablePrior> {
        prop::collection::vec(
            prop_oneof![
                (-5.0..5.0f64, 0.1..4.0f64).prop_map(|(lo, w)| Component::uniform(lo, lo + w)),
                (-5.0..5.0f64, 0.05..3.0f64).prop_map(|(m, s)| Component::normal(m, s)),
            ],
            1..5,
        )
        .prop_map(|c| FactorizablePrior::new(c).unwrap())
    }

    /// Nested boxes: fractions in [0,1] pick `outer` inside Ω and `inner`
    /// inside `outer`.
    fn nested(prior: &FactorizablePrior, fr: &[(f64, f64, f64, f64)]) -> (Region, Region) {
        let support = prior.support();
        let mut outer = Vec::new();
        let mut inner = Vec::new();
        for (iv, &(a, b, c, d)) in support.intervals().iter().zip(fr) {
            let (a, b) = (a.min(b), a.max(b) + 1e-3);
            let o = Interval::new(iv.lo + a * iv.width() * 0.9, iv.lo + b.min(1.0) * iv.width());
            let (c, d) = (c.min(d), c.max(d) + 1e-3);
            let i = Interval::new(o.lo + c * o.width() * 0.9, o.lo + d.min(1.0) * o.width());
            outer.push(o);
            inner.push(i);
        }
        (Region::new(inner).unwrap(), Region::new(outer).unwrap())
    }

    proptest! {
        #[test]
        fn mass_ratio_is_multiplicative(
            prior in arb_prior(),
            fr in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), 5),
        ) {
            let (inner, outer) = nested(&prior, &fr);
            let omega = prior.support();
            let a = mass_ratio(&prior, &inner, &outer).unwrap();
            let b = mass_ratio(&prior, &outer, &omega).unwrap();
            let c = mass_ratio(&prior, &inner, &omega).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!((a * b - c).abs() <= 1e-12, "{} vs {}", a * b, c);
        }

        #[test]
        fn samples_are_members(
            prior in arb_prior(),
            fr in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), 5),
            s in any::<u64>(),
        ) {
            let (inner, _) = nested(&prior, &fr);
            let mut rng = seed::rng(s, &[]);
            let samples = prior.sample_truncated(&inner, 200, &mut rng).unwrap();
            prop_assert!(samples.iter().all(|t| inner.contains(t)));
        }
    }
}
