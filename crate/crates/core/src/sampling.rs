//! Latin hypercube sampling of parameterised initial conditions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Named parameter range.
#[derive(Debug, Clone)]
pub struct ParamRange {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// Parameter ranges plus sampling settings.
#[derive(Debug, Clone)]
pub struct ParamBox {
    pub ranges: Vec<ParamRange>,
    pub sample_count: usize,
    pub seed: u64,
}

impl ParamBox {
    pub fn new(ranges: Vec<(&str, f64, f64)>, sample_count: usize, seed: u64) -> ParamBox {
        ParamBox {
            ranges: ranges
                .into_iter()
                .map(|(name, lower, upper)| ParamRange {
                    name: name.to_string(),
                    lower,
                    upper,
                })
                .collect(),
            sample_count,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        for r in &self.ranges {
            if !(r.lower < r.upper) || !r.lower.is_finite() || !r.upper.is_finite() {
                return Err(Error::Config(format!(
                    "parameter '{}' has invalid range [{}, {}]",
                    r.name, r.lower, r.upper
                )));
            }
        }
        Ok(())
    }
}

/// One assignment per sample, values aligned with `box.ranges` order.
///
/// Stratification holds exactly: projecting the samples onto any parameter
/// and splitting its range into `sample_count` equal strata yields exactly
/// one sample per stratum. Deterministic given the seed.
pub fn latin_hypercube_sample(pbox: &ParamBox) -> Result<Vec<Vec<f64>>> {
    pbox.validate()?;
    let n = pbox.sample_count;
    let mut rng = ChaCha20Rng::seed_from_u64(pbox.seed);
    let mut samples = vec![vec![0.0; pbox.ranges.len()]; n];
    for (d, r) in pbox.ranges.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            // uniform within the s-th stratum, half-open on the right
            let u: f64 = rng.gen_range(0.0..1.0);
            let frac = (s as f64 + u) / n as f64;
            samples[i][d] = r.lower + frac * (r.upper - r.lower);
        }
    }
    Ok(samples)
}
