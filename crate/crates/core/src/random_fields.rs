//! i.i.d. edge-coefficient laws and reproducible coefficient sampling.
//!
//! Every coefficient field is drawn from its own ChaCha stream whose key is
//! the SHA-256 digest of `(master seed, sample index, stream label)`. Edge
//! `k` consumes the `k`-th draw of that stream, so a field depends only on its
//! lineage and never on which worker produced it.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{TorusLattice, VectorField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoefficientLaw {
    /// `hi` with probability `p`, `lo` otherwise.
    Bernoulli { p: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

/// Closed-form moments of a law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LawMoments {
    pub mean: f64,
    pub variance: f64,
    /// `<a^{-1}>^{-1}`.
    pub harmonic_mean: f64,
}

impl CoefficientLaw {
    pub fn bernoulli(p: f64, lo: f64, hi: f64) -> Result<Self> {
        let law = Self::Bernoulli { p, lo, hi };
        law.validate()?;
        Ok(law)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let law = Self::Uniform { lo, hi };
        law.validate()?;
        Ok(law)
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let law = Self::Discrete { values, probs };
        law.validate()?;
        Ok(law)
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::discrete(vec![c], vec![1.0])
    }

    /// The default experiment law, contrast `beta / alpha = 4`.
    pub fn default_experiment() -> Self {
        Self::Bernoulli {
            p: 0.5,
            lo: 1.0,
            hi: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidLaw(m.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Self::Bernoulli { p, lo, hi } => {
                if !(0.0..=1.0).contains(p) {
                    return bad("Bernoulli probability outside [0, 1]");
                }
                if !positive(*lo) || !positive(*hi) || lo > hi {
                    return bad("Bernoulli support needs 0 < lo <= hi < inf");
                }
            }
            Self::Uniform { lo, hi } => {
                if !positive(*lo) || !positive(*hi) || lo > hi {
                    return bad("uniform support needs 0 < lo <= hi < inf");
                }
            }
            Self::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("discrete law needs matching nonempty values and probs");
                }
                if values.iter().any(|&v| !positive(v)) {
                    return bad("discrete values must be positive and finite");
                }
                if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return bad("discrete probabilities outside [0, 1]");
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad("discrete probabilities must sum to 1");
                }
            }
        }
        Ok(())
    }

    /// Smallest value of the support, the ellipticity constant alpha.
    pub fn alpha(&self) -> f64 {
        match self {
            Self::Bernoulli { p, lo, hi } => {
                if *p == 1.0 {
                    *hi
                } else {
                    *lo
                }
            }
            Self::Uniform { lo, .. } => *lo,
            Self::Discrete { values, probs } => support(values, probs).fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest value of the support, beta.
    pub fn beta(&self) -> f64 {
        match self {
            Self::Bernoulli { p, lo, hi } => {
                if *p == 0.0 {
                    *lo
                } else {
                    *hi
                }
            }
            Self::Uniform { hi, .. } => *hi,
            Self::Discrete { values, probs } => support(values, probs).fold(0.0, f64::max),
        }
    }

    /// Atoms and weights of an atomic law; `None` for the uniform law.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Bernoulli { p, lo, hi } => {
                if lo == hi {
                    Some((vec![*lo], vec![1.0]))
                } else {
                    Some((vec![*lo, *hi], vec![1.0 - p, *p]))
                }
            }
            Self::Uniform { lo, hi } if lo == hi => Some((vec![*lo], vec![1.0])),
            Self::Uniform { .. } => None,
            Self::Discrete { values, probs } => Some((values.clone(), probs.clone())),
        }
    }

    pub fn moments(&self) -> LawMoments {
        match self {
            Self::Uniform { lo, hi } => {
                if lo == hi {
                    return LawMoments {
                        mean: *lo,
                        variance: 0.0,
                        harmonic_mean: *lo,
                    };
                }
                LawMoments {
                    mean: 0.5 * (lo + hi),
                    variance: (hi - lo).powi(2) / 12.0,
                    harmonic_mean: (hi - lo) / (hi / lo).ln(),
                }
            }
            _ => {
                let (values, probs) = self.atoms().expect("atomic law");
                let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
                let variance = values
                    .iter()
                    .zip(&probs)
                    .map(|(v, p)| p * (v - mean).powi(2))
                    .sum();
                let inv: f64 = values.iter().zip(&probs).map(|(v, p)| p / v).sum();
                LawMoments {
                    mean,
                    variance,
                    harmonic_mean: 1.0 / inv,
                }
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            Self::Bernoulli { p, lo, hi } => {
                if rng.random::<f64>() < *p {
                    *hi
                } else {
                    *lo
                }
            }
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding in the cumulative sum
                *values
                    .iter()
                    .zip(probs)
                    .rev()
                    .find(|(_, &p)| p > 0.0)
                    .map(|(v, _)| v)
                    .unwrap()
            }
        }
    }
}

/// Closed-form `(mean, variance, harmonic mean)` of a law.
pub fn law_moments(law: &CoefficientLaw) -> LawMoments {
    law.moments()
}

fn support<'a>(values: &'a [f64], probs: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    values
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&v, _)| v)
}

impl fmt::Display for CoefficientLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bernoulli { p, lo, hi } => write!(f, "bernoulli({p},{lo},{hi})"),
            Self::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Self::Discrete { values, probs } => write!(f, "discrete({values:?},{probs:?})"),
        }
    }
}

/// Identifies one reproducible random substream.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master: u64,
    pub index: u64,
    pub label: String,
}

impl SeedLineage {
    pub fn new(master: u64, index: u64, label: impl Into<String>) -> Self {
        Self {
            master,
            index,
            label: label.into(),
        }
    }

    pub fn with_index(&self, index: u64) -> Self {
        Self {
            index,
            ..self.clone()
        }
    }

    /// 256-bit stream key. The label is length-prefixed so the encoding is injective.
    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"homoglat/lineage/v1");
        h.update(self.master.to_le_bytes());
        h.update(self.index.to_le_bytes());
        h.update((self.label.len() as u64).to_le_bytes());
        h.update(self.label.as_bytes());
        h.finalize().into()
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::from_seed(self.key())
    }
}

impl fmt::Display for SeedLineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.master, self.label, self.index)
    }
}

/// One conductivity per edge slot, `a(x, x + e_i)` stored at `(x, i)`.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    a: VectorField,
    alpha: f64,
    beta: f64,
    law: Option<CoefficientLaw>,
    lineage: Option<SeedLineage>,
}

impl CoefficientField {
    /// Wraps explicit edge values; the ellipticity bounds are their range.
    pub fn from_values(a: VectorField) -> Result<Self> {
        let (alpha, beta) = a
            .values()
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::InvalidArgument(
                "edge conductivities must be positive".into(),
            ));
        }
        Ok(Self {
            a,
            alpha,
            beta,
            law: None,
            lineage: None,
        })
    }

    /// Edge values with explicit bounds `[alpha, beta]`, checked.
    pub fn with_bounds(a: VectorField, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= beta) {
            return Err(Error::InvalidArgument(format!(
                "bounds need 0 < alpha <= beta, got [{alpha}, {beta}]"
            )));
        }
        if let Some(v) = a.values().iter().find(|&&v| !(alpha..=beta).contains(&v)) {
            return Err(Error::InvalidArgument(format!(
                "edge value {v} outside [{alpha}, {beta}]"
            )));
        }
        Ok(Self {
            a,
            alpha,
            beta,
            law: None,
            lineage: None,
        })
    }

    pub fn constant(lattice: TorusLattice, c: f64) -> Result<Self> {
        let d = lattice.dim();
        Self::with_bounds(VectorField::constant(lattice, &vec![c; d]), c, c)
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        self.a.lattice()
    }

    #[inline]
    pub fn edges(&self) -> &VectorField {
        &self.a
    }

    #[inline]
    pub fn component(&self, i: usize) -> &[f64] {
        self.a.component(i)
    }

    #[inline]
    pub fn get(&self, site: usize, i: usize) -> f64 {
        self.a.get(site, i)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn law(&self) -> Option<&CoefficientLaw> {
        self.law.as_ref()
    }

    pub fn lineage(&self) -> Option<&SeedLineage> {
        self.lineage.as_ref()
    }

    /// Copy with one edge value replaced. The bounds widen if needed.
    pub fn with_edge(&self, site: usize, i: usize, value: f64) -> Self {
        let mut out = self.clone();
        let n = self.lattice().num_sites();
        out.a.values_mut()[i * n + site] = value;
        out.alpha = out.alpha.min(value);
        out.beta = out.beta.max(value);
        out
    }

    /// Text label of the lineage, or `"explicit"` for hand-built fields.
    pub fn origin(&self) -> String {
        self.lineage
            .as_ref()
            .map(|l| l.to_string())
            .unwrap_or_else(|| "explicit".into())
    }
}

/// Draws an i.i.d. coefficient field from `law` on the stream named by `lineage`.
pub fn sample(
    law: &CoefficientLaw,
    lattice: TorusLattice,
    lineage: &SeedLineage,
) -> Result<CoefficientField> {
    law.validate()?;
    let mut rng = lineage.rng();
    let values: Vec<f64> = (0..lattice.num_edges()).map(|_| law.draw(&mut rng)).collect();
    let (alpha, beta) = (law.alpha(), law.beta());
    assert!(
        values.iter().all(|v| (alpha..=beta).contains(v)),
        "sampled edge outside the law's support"
    );
    Ok(CoefficientField {
        a: VectorField::from_raw(lattice, values),
        alpha,
        beta,
        law: Some(law.clone()),
        lineage: Some(lineage.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_law() -> CoefficientLaw {
        CoefficientLaw::default_experiment()
    }

    #[test]
    fn constant_law_gives_constant_field() {
        let lat = TorusLattice::new(2, 8).unwrap();
        let law = CoefficientLaw::constant(2.5).unwrap();
        let a = sample(&law, lat, &SeedLineage::new(1, 0, "a")).unwrap();
        assert!(a.edges().values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn bernoulli_empirical_moments() {
        let lat = TorusLattice::new(2, 224).unwrap();
        let a = sample(&default_law(), lat, &SeedLineage::new(11, 0, "moments")).unwrap();
        let v = a.edges().values();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sigma = (2.25 / n).sqrt();
        assert!((mean - 2.5).abs() <= 4.0 * sigma, "mean {mean}");
        assert!((var / 2.25 - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn identical_lineage_is_bit_identical() {
        let lat = TorusLattice::new(3, 6).unwrap();
        let law = CoefficientLaw::uniform(1.0, 3.0).unwrap();
        let l = SeedLineage::new(42, 7, "coeff");
        let a = sample(&law, lat, &l).unwrap();
        let b = sample(&law, lat, &l).unwrap();
        assert_eq!(a.edges(), b.edges());
        let c = sample(&law, lat, &l.with_index(8)).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn lineage_keys_distinguish_fields() {
        let keys = [
            SeedLineage::new(1, 0, "ab").key(),
            SeedLineage::new(1, 0, "a").key(),
            SeedLineage::new(1, 1, "ab").key(),
            SeedLineage::new(2, 0, "ab").key(),
        ];
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                assert_ne!(keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn samples_lie_in_support() {
        let lat = TorusLattice::new(2, 16).unwrap();
        let law = CoefficientLaw::discrete(vec![0.5, 1.0, 7.0], vec![0.2, 0.3, 0.5]).unwrap();
        let a = sample(&law, lat, &SeedLineage::new(5, 3, "x")).unwrap();
        assert!(a.edges().values().iter().all(|v| [0.5, 1.0, 7.0].contains(v)));
        assert_eq!((a.alpha(), a.beta()), (0.5, 7.0));
    }

    #[test]
    fn disjoint_edges_are_uncorrelated() {
        let lat = TorusLattice::new(2, 4).unwrap();
        let law = default_law();
        let n = 1000;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for k in 0..n {
            let a = sample(&law, lat, &SeedLineage::new(3, k, "corr")).unwrap();
            let v = a.edges().values();
            xs.push(v[..8].iter().sum::<f64>());
            ys.push(v[8..].iter().sum::<f64>());
        }
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let rho = cov / (vx * vy).sqrt();
        assert!(rho.abs() <= 4.0 / (n as f64).sqrt(), "rho = {rho}");
    }

    #[test]
    fn moments_closed_forms() {
        let m = default_law().moments();
        assert_eq!((m.mean, m.variance), (2.5, 2.25));
        assert!((m.harmonic_mean - 1.6).abs() < 1e-15);
        let c = CoefficientLaw::constant(3.0).unwrap().moments();
        assert_eq!((c.mean, c.variance, c.harmonic_mean), (3.0, 0.0, 3.0));
        let u = CoefficientLaw::uniform(1.0, 2.0).unwrap().moments();
        assert!((u.harmonic_mean - 1.0 / 2f64.ln()).abs() < 1e-15);
        assert!((u.variance - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(CoefficientLaw::bernoulli(1.5, 1.0, 2.0).is_err());
        assert!(CoefficientLaw::bernoulli(0.5, 0.0, 2.0).is_err());
        assert!(CoefficientLaw::uniform(3.0, 2.0).is_err());
        assert!(CoefficientLaw::discrete(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(CoefficientLaw::discrete(vec![], vec![]).is_err());
    }
}
