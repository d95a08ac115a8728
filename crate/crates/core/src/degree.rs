//! Robust Soliton degree distribution for LT codes.

use rand::Rng;

use crate::error::{Error, Result};

/// Robust Soliton PMF over degrees `1..=min(k, max_degree)`.
#[derive(Clone, Debug)]
pub struct DegreeDistribution {
    k: usize,
    c: f64,
    delta: f64,
    max_degree: usize,
    /// `pmf[d - 1]` is the probability of degree `d`.
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    spike_s: f64,
    beta: f64,
}

impl DegreeDistribution {
    /// Builds the Robust Soliton distribution for a window of `k` symbols.
    ///
    /// The ideal soliton `rho` plus the spike term `tau` is normalised by
    /// `beta`, then truncated to `max_degree` and renormalised.
    pub fn robust_soliton(k: usize, c: f64, delta: f64, max_degree: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("window size k must be at least 1"));
        }
        if max_degree == 0 {
            return Err(Error::config("max degree must be at least 1"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!(
                "soliton constant c must be positive, got {c}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!(
                "soliton delta must be in (0, 1), got {delta}"
            )));
        }

        let kf = k as f64;
        let s = c * (kf / delta).ln() * kf.sqrt();
        let pivot = kf / s;
        let spike_at = pivot.ceil() as usize;

        let mut weights = Vec::with_capacity(k);
        for i in 1..=k {
            let fi = i as f64;
            let rho = if i == 1 {
                1.0 / kf
            } else {
                1.0 / (fi * (fi - 1.0))
            };
            let tau = if fi < pivot {
                s / (fi * kf)
            } else if i == spike_at {
                // Negative when S < delta, which only happens for tiny windows.
                (s * (s / delta).ln() / kf).max(0.0)
            } else {
                0.0
            };
            weights.push(rho + tau);
        }
        let beta: f64 = weights.iter().sum();

        let support = k.min(max_degree);
        weights.truncate(support);
        let kept: f64 = weights.iter().sum();
        let pmf: Vec<f64> = weights.iter().map(|w| w / kept).collect();

        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }

        Ok(DegreeDistribution {
            k,
            c,
            delta,
            max_degree,
            pmf,
            cdf,
            spike_s: s,
            beta,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Largest degree with non-zero support.
    pub fn support(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Probability of degree `d` (zero outside the support).
    pub fn prob(&self, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            self.pmf.get(d - 1).copied().unwrap_or(0.0)
        }
    }

    /// The `S` constant of the spike term.
    pub fn s(&self) -> f64 {
        self.spike_s
    }

    /// Normaliser of the untruncated distribution.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_symbol_window() {
        for (c, d, md) in [(0.03, 0.5, 1), (0.2, 0.1, 9), (1.0, 0.9, 100)] {
            let dist = DegreeDistribution::robust_soliton(1, c, d, md).unwrap();
            assert_eq!(dist.pmf(), &[1.0]);
        }
    }

    #[test]
    fn k4_matches_straight_line_formula() {
        // Frozen from a standalone double-precision evaluation:
        // S = 0.03 ln(8) 2 = 0.124766..., k/S = 32.06 so every i <= 4 gets S/(ik)
        // and the spike falls outside the support.
        let expected = [
            0.264_034_019_718_352_1,
            0.484_135_455_970_558_57,
            0.166_259_883_486_424_56,
            0.085_570_640_824_664_83,
        ];
        let dist = DegreeDistribution::robust_soliton(4, 0.03, 0.5, 4).unwrap();
        for (got, want) in dist.pmf().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DegreeDistribution::robust_soliton(0, 0.03, 0.5, 4).is_err());
        assert!(DegreeDistribution::robust_soliton(4, 0.0, 0.5, 4).is_err());
        assert!(DegreeDistribution::robust_soliton(4, 0.03, 1.0, 4).is_err());
        assert!(DegreeDistribution::robust_soliton(4, 0.03, 0.0, 4).is_err());
        assert!(DegreeDistribution::robust_soliton(4, 0.03, 0.5, 0).is_err());
    }

    #[test]
    fn normalised_over_sweep() {
        for k in [1, 2, 3, 7, 16, 50, 128, 500] {
            for c in [0.01, 0.03, 0.1, 0.5] {
                for delta in [0.01, 0.1, 0.5, 0.9] {
                    for md in [1, 5, 10, 50, 1000] {
                        let dist = DegreeDistribution::robust_soliton(k, c, delta, md).unwrap();
                        let sum: f64 = dist.pmf().iter().sum();
                        assert!((sum - 1.0).abs() < 1e-9);
                        assert_eq!(dist.support(), k.min(md));
                        assert!(dist.pmf().iter().all(|p| *p >= 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_renormalises() {
        let full = DegreeDistribution::robust_soliton(50, 0.03, 0.5, 50).unwrap();
        let cut = DegreeDistribution::robust_soliton(50, 0.03, 0.5, 10).unwrap();
        let head: f64 = full.pmf()[..10].iter().sum();
        for d in 1..=10 {
            assert!((cut.prob(d) - full.prob(d) / head).abs() < 1e-12);
        }
        assert_eq!(cut.prob(11), 0.0);
    }

    #[test]
    fn sampling_is_seed_deterministic_and_in_support() {
        let dist = DegreeDistribution::robust_soliton(50, 0.03, 0.5, 20).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let d = dist.sample(&mut a);
            assert_eq!(d, dist.sample(&mut b));
            assert!((1..=20).contains(&d));
        }
    }
}
