//! Seeded synthetic populations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use fairdecide::LabeledInstance;

/// Recorded alongside generated data so a run can be reproduced elsewhere.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9) seeded from u64; Beta and Bernoulli from rand_distr 0.5";

/// Monotone map from true probability to reported score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distortion {
    #[default]
    Identity,
    /// `p^exponent`
    Power { exponent: f64 },
    /// `sigmoid(scale * logit(p) + shift)`
    Logit { scale: f64, shift: f64 },
}

impl Distortion {
    pub fn apply(&self, p: f64) -> f64 {
        match *self {
            Distortion::Identity => p,
            Distortion::Power { exponent } => p.powf(exponent),
            Distortion::Logit { scale, shift } => {
                let q = p.clamp(1e-12, 1.0 - 1e-12);
                let z = scale * (q / (1.0 - q)).ln() + shift;
                1.0 / (1.0 + (-z).exp())
            }
        }
    }

    fn valid(&self) -> bool {
        match *self {
            Distortion::Identity => true,
            Distortion::Power { exponent } => exponent > 0.0 && exponent.is_finite(),
            Distortion::Logit { scale, shift } => scale > 0.0 && scale.is_finite() && shift.is_finite(),
        }
    }
}

/// Beta shape of a probability distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub alpha: f64,
    pub beta: f64,
}

impl Shape {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Shape { alpha, beta }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub name: String,
    /// Relative frequency within the group.
    pub share: f64,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub size: usize,
    pub shape: Shape,
    #[serde(default)]
    pub distortion: Distortion,
    /// When present, each member draws a stratum and then `p` from its shape.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strata: Vec<StratumSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub groups: Vec<GroupSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("group {0} must have at least one member")]
    EmptyGroup(String),
    #[error("shape parameters of {0} must be positive and finite")]
    BadShape(String),
    #[error("distortion of group {0} is not a valid monotone map")]
    BadDistortion(String),
    #[error("stratum shares of group {0} must be positive")]
    BadShares(String),
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let ok = |s: &Shape| s.alpha > 0.0 && s.beta > 0.0 && s.alpha.is_finite() && s.beta.is_finite();
        for g in &self.groups {
            if g.size == 0 {
                return Err(SpecError::EmptyGroup(g.name.clone()));
            }
            if !ok(&g.shape) {
                return Err(SpecError::BadShape(g.name.clone()));
            }
            if !g.distortion.valid() {
                return Err(SpecError::BadDistortion(g.name.clone()));
            }
            for s in &g.strata {
                if !ok(&s.shape) {
                    return Err(SpecError::BadShape(format!("{}/{}", g.name, s.name)));
                }
                if !(s.share > 0.0 && s.share.is_finite()) {
                    return Err(SpecError::BadShares(g.name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Generated instances together with the true probabilities behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub instances: Vec<LabeledInstance>,
    pub true_p: Vec<f64>,
}

/// Draws `p`, then `y ~ Bernoulli(p)`, and reports `distortion(p)` as the score.
pub fn generate_population(spec: &SyntheticSpec) -> Result<SyntheticPopulation, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut instances = Vec::new();
    let mut true_p = Vec::new();
    for g in &spec.groups {
        let beta = |s: &Shape| Beta::new(s.alpha, s.beta).expect("validated shape");
        let group_dist = beta(&g.shape);
        let strata: Vec<(String, f64, Beta<f64>)> =
            g.strata.iter().map(|s| (s.name.clone(), s.share, beta(&s.shape))).collect();
        let total_share: f64 = strata.iter().map(|s| s.1).sum();
        for i in 0..g.size {
            let (stratum, p) = if strata.is_empty() {
                (None, group_dist.sample(&mut rng))
            } else {
                let mut u = rng.random::<f64>() * total_share;
                let mut pick = strata.len() - 1;
                for (k, s) in strata.iter().enumerate() {
                    if u < s.1 {
                        pick = k;
                        break;
                    }
                    u -= s.1;
                }
                (Some(strata[pick].0.clone()), strata[pick].2.sample(&mut rng))
            };
            let y = Bernoulli::new(p).expect("beta draw lies in [0, 1]").sample(&mut rng);
            let mut inst = LabeledInstance::new(format!("{}-{i}", g.name), g.distortion.apply(p), g.name.as_str())
                .with_outcome(y);
            if let Some(s) = stratum {
                inst = inst.with_stratum(s);
            }
            instances.push(inst);
            true_p.push(p);
        }
    }
    Ok(SyntheticPopulation { instances, true_p })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            groups: vec![GroupSpec {
                name: "a".into(),
                size: 100,
                shape: Shape::new(2.0, 3.0),
                distortion: Distortion::Identity,
                strata: Vec::new(),
            }],
            seed,
        }
    }

    #[test]
    fn distortions_are_monotone() {
        let ds = [
            Distortion::Identity,
            Distortion::Power { exponent: 2.0 },
            Distortion::Logit { scale: 0.5, shift: 0.3 },
        ];
        for d in ds {
            let ys: Vec<f64> = (0..=100).map(|i| d.apply(i as f64 / 100.0)).collect();
            assert!(ys.windows(2).all(|w| w[0] <= w[1]), "{d:?}");
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(1);
        s.groups[0].size = 0;
        assert!(matches!(generate_population(&s), Err(SpecError::EmptyGroup(_))));
        let mut s = spec(1);
        s.groups[0].shape.alpha = 0.0;
        assert!(matches!(generate_population(&s), Err(SpecError::BadShape(_))));
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(generate_population(&spec(1)).unwrap(), generate_population(&spec(2)).unwrap());
    }
}
