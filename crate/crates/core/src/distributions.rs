//! Probability vectors on `{0, …, n−1}`: distances, moments and seeded
//! sampling.
//!
//! Indices are zero-based throughout the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Entries below this are rejected rather than clamped.
pub const NEG_TOL: f64 = 1e-12;
/// Allowed deviation of the raw sum from 1 before renormalization.
pub const SUM_TOL: f64 = 1e-9;

/// 64-bit seed for the counter-based generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    /// Derives a child seed from a sequence of labels.
    ///
    /// The scheme is `h₀ = splitmix64(seed)`, `h_{k+1} = splitmix64(h_k ⊕
    /// splitmix64(label_k))`. It is stable across releases: changing it
    /// changes every recorded experiment.
    pub fn derive(self, labels: &[u64]) -> Seed {
        let mut h = splitmix64(self.0);
        for &l in labels {
            h = splitmix64(h ^ splitmix64(l));
        }
        Seed(h)
    }

    /// Label for string tags mixed into [`Seed::derive`] (FNV-1a).
    pub fn label(tag: &str) -> u64 {
        tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
        })
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl std::fmt::Display for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A probability vector, renormalized to sum to exactly 1 on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidDistribution(format!("p[{i}] is not finite")));
            }
            if *p < -NEG_TOL {
                return Err(Error::InvalidDistribution(format!("p[{i}] = {p} is negative")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        probs.iter_mut().for_each(|p| *p /= sum);
        Ok(Self { probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "weights must have a positive finite total, got {total}"
            )));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_abs_diff(&self, other: &DiscreteDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self)
    }
}

fn check_len(n: usize, m: usize, what: &str) -> Result<()> {
    if n == m {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("{what}: lengths {n} and {m}")))
    }
}

/// Total variation distance `½ Σ |p_i − q_i|`.
pub fn tv(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_len(p.len(), q.len(), "tv")?;
    let s: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// Squared Hellinger distance `1 − Σ √(p_i q_i)`.
///
/// Evaluated as `½ Σ (√p_i − √q_i)²`, which equals the above for normalized
/// inputs and does not cancel when the two laws are close.
pub fn hellinger_sq(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_len(p.len(), q.len(), "hellinger_sq")?;
    let s: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

pub fn mean_under(p: &DiscreteDistribution, v: &[f64]) -> Result<f64> {
    check_len(p.len(), v.len(), "mean_under")?;
    Ok(p.probs.iter().zip(v).map(|(a, b)| a * b).sum())
}

pub fn variance_under(p: &DiscreteDistribution, v: &[f64]) -> Result<f64> {
    let mean = mean_under(p, v)?;
    Ok(p
        .probs
        .iter()
        .zip(v)
        .map(|(a, b)| a * (b - mean) * (b - mean))
        .sum::<f64>()
        .max(0.0))
}

/// Inverse-CDF sampler with a precomputed cumulative table.
#[derive(Debug, Clone)]
pub struct Sampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl Sampler {
    pub fn new(p: &DiscreteDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = p
            .probs
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        let last_positive = p.probs.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        Self { cdf, last_positive }
    }

    #[inline]
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u);
        if i >= self.cdf.len() {
            self.last_positive
        } else {
            i
        }
    }

    pub fn draw(&self, seed: Seed, count: usize) -> Vec<usize> {
        let mut rng = seed.rng();
        (0..count).map(|_| self.sample_one(&mut rng)).collect()
    }
}

/// `count` i.i.d. indices from `p`; identical seeds give identical output.
pub fn draw(p: &DiscreteDistribution, seed: Seed, count: usize) -> Vec<usize> {
    p.sampler().draw(seed, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        let p = dist(&[0.5, 0.5]);
        assert_eq!(tv(&p, &p).unwrap(), 0.0);
        assert_eq!(tv(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tv(&p, &dist(&[0.75, 0.25])).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hellinger_examples() {
        let p = dist(&[0.5, 0.5]);
        assert_eq!(hellinger_sq(&p, &p).unwrap(), 0.0);
        assert!((hellinger_sq(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
        let h = hellinger_sq(&p, &dist(&[1.0, 0.0])).unwrap();
        assert!((h - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let p = dist(&[0.5, 0.5]);
        let q = DiscreteDistribution::uniform(3);
        assert!(matches!(tv(&p, &q), Err(Error::ShapeMismatch(_))));
        assert!(matches!(hellinger_sq(&p, &q), Err(Error::ShapeMismatch(_))));
        assert!(matches!(mean_under(&p, &[1.0]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(variance_under(&p, &[1.0; 3]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn moments() {
        let u = DiscreteDistribution::uniform(4);
        assert_eq!(mean_under(&u, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        let pm = DiscreteDistribution::point_mass(3, 0);
        assert_eq!(mean_under(&pm, &[7.0, -1.0, 2.0]).unwrap(), 7.0);
        assert_eq!(variance_under(&u, &[3.0; 4]).unwrap(), 0.0);
        let b = DiscreteDistribution::uniform(2);
        assert_eq!(variance_under(&b, &[0.0, 1.0]).unwrap(), 0.25);
    }

    #[test]
    fn construction_validates_and_renormalizes() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![1.1, -0.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        let p = DiscreteDistribution::new(vec![1.0 + 1e-10, -1e-13, 0.0]).unwrap();
        assert_eq!(p.probs()[1], 0.0);
        assert_eq!(p.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn draw_point_mass_and_determinism() {
        // zero-based index 2 is the third category
        let pm = DiscreteDistribution::point_mass(4, 2);
        assert_eq!(draw(&pm, Seed(17), 5), vec![2; 5]);
        let u = DiscreteDistribution::uniform(3);
        assert_eq!(draw(&u, Seed(42), 100), draw(&u, Seed(42), 100));
        assert_ne!(draw(&u, Seed(42), 100), draw(&u, Seed(43), 100));
        assert!(draw(&u, Seed(1), 0).is_empty());
    }

    #[test]
    fn draw_never_returns_zero_mass_index() {
        let p = dist(&[0.0, 0.3, 0.0, 0.7, 0.0]);
        let ys = draw(&p, Seed(5), 10_000);
        assert!(ys.iter().all(|&y| y == 1 || y == 3));
    }

    #[test]
    fn uniform_two_point_frequency() {
        // 6σ for 1e5 fair draws is 6 · 0.5/√1e5 ≈ 0.0095
        let ys = draw(&DiscreteDistribution::uniform(2), Seed(2024), 100_000);
        let freq = ys.iter().filter(|&&y| y == 0).count() as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn seed_derivation_separates_labels() {
        let s = Seed(7);
        assert_ne!(s.derive(&[0, 1]), s.derive(&[1, 0]));
        assert_ne!(s.derive(&[0]), s.derive(&[0, 0]));
        assert_eq!(s.derive(&[3, 4]), s.derive(&[3, 4]));
        assert_ne!(Seed::label("A"), Seed::label("M"));
    }
}
