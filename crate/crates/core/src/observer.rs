//! Synthetic participants.
//!
//! Perceived roughness is intensive: it follows vibration amplitude, and the
//! pointer oscillation inflates it by a factor `1 + k * alpha`. Each look at
//! a stimulus adds independent Gaussian noise. Spatial wavelength is judged
//! on its own channel which the oscillation does not bias.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{AdjustCommand, Side, Study};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Step toward equality, coarse when far, fine when near; stop inside the JND.
    #[default]
    GreedyAdjust,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverModel {
    /// Pseudo-haptic gain: perceived amplitude grows by `k` per unit alpha.
    pub k: f64,
    /// Standard deviation of perceptual noise, roughness units.
    pub sigma: f64,
    /// Differences within this are reported as equal.
    pub jnd: f64,
    #[serde(default)]
    pub strategy: Strategy,
}

impl Default for ObserverModel {
    /// `k = 1/60` puts alpha = 3 at a 5 % amplitude equivalence; `sigma` makes
    /// the oscillatory area win 80 % of comparisons at alpha = 2.
    fn default() -> Self {
        let k = 1.0 / 60.0;
        Self {
            k,
            sigma: comparison_sigma(k, 2.0, 0.8),
            jnd: 0.04,
            strategy: Strategy::GreedyAdjust,
        }
    }
}

/// Noise level at which an observer with gain `k` picks an `alpha`
/// oscillatory area over a static one with probability `p`.
///
/// Each comparison draws two noisy percepts, so the decision variable has
/// standard deviation `sigma * sqrt(2)`.
pub fn comparison_sigma(k: f64, alpha: f64, p: f64) -> f64 {
    let z = standard_normal_quantile(p);
    k * alpha / (std::f64::consts::SQRT_2 * z)
}

fn standard_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// What the observer experiences in one area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub amplitude: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl ObserverModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::config(format!("k must be >= 0, got {}", self.k)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.jnd > 0.0) || !self.jnd.is_finite() {
            return Err(Error::config(format!("jnd must be > 0, got {}", self.jnd)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("observer model serializes")
    }

    fn noise(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            self.sigma * rng.sample::<f64, _>(StandardNormal)
        }
    }

    /// Noise-free roughness of a stimulus.
    pub fn mean_roughness(&self, stimulus: &Stimulus) -> f64 {
        stimulus.amplitude * (1.0 + self.k * stimulus.alpha)
    }

    pub fn perceived_roughness(&self, stimulus: &Stimulus, rng: &mut impl Rng) -> f64 {
        self.mean_roughness(stimulus) + self.noise(rng)
    }

    /// Wavelength percept relative to `reference`; oscillation plays no part.
    pub fn perceived_wavelength(&self, stimulus: &Stimulus, reference: f64, rng: &mut impl Rng) -> f64 {
        stimulus.lambda / reference + self.noise(rng)
    }

    /// Pick the area that feels rougher. Exact ties are a coin flip.
    pub fn decide_comparison(&self, left: &Stimulus, right: &Stimulus, rng: &mut impl Rng) -> Side {
        let l = self.perceived_roughness(left, rng);
        let r = self.perceived_roughness(right, rng);
        if l > r {
            Side::Left
        } else if r > l {
            Side::Right
        } else if rng.random::<bool>() {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Next button in an adjustment trial. `nonosc` carries the current
    /// adjusted parameter. Wavelength percepts are taken relative to the
    /// oscillatory area's fixed wavelength.
    pub fn decide_adjustment(
        &self,
        study: Study,
        osc: &Stimulus,
        nonosc: &Stimulus,
        rng: &mut impl Rng,
    ) -> AdjustCommand {
        let diff = match study {
            Study::AdjustWavelength => {
                self.perceived_wavelength(osc, osc.lambda, rng)
                    - self.perceived_wavelength(nonosc, osc.lambda, rng)
            }
            _ => self.perceived_roughness(osc, rng) - self.perceived_roughness(nonosc, rng),
        };
        self.policy(diff)
    }

    /// Greedy mapping from (oscillatory - adjustable) difference to a button.
    pub fn policy(&self, diff: f64) -> AdjustCommand {
        match self.strategy {
            Strategy::GreedyAdjust => {
                if diff > 2.0 * self.jnd {
                    AdjustCommand::Increase
                } else if diff > self.jnd {
                    AdjustCommand::SlightIncrease
                } else if diff < -2.0 * self.jnd {
                    AdjustCommand::Decrease
                } else if diff < -self.jnd {
                    AdjustCommand::SlightDecrease
                } else {
                    AdjustCommand::Finish
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stim(amplitude: f64, alpha: f64) -> Stimulus {
        Stimulus {
            amplitude,
            lambda: 0.2,
            alpha,
        }
    }

    fn quiet(k: f64) -> ObserverModel {
        ObserverModel {
            k,
            sigma: 0.0,
            jnd: 0.01,
            strategy: Strategy::GreedyAdjust,
        }
    }

    #[test]
    fn roughness_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = quiet(1.0 / 60.0);
        assert!((obs.perceived_roughness(&stim(1.0, 3.0), &mut rng) - 1.05).abs() < 1e-12);
        assert_eq!(obs.perceived_roughness(&stim(0.8, 0.0), &mut rng), 0.8);
        let noisy = ObserverModel { sigma: 0.3, ..obs };
        let a = noisy.perceived_roughness(&stim(0.0, 2.0), &mut ChaCha8Rng::seed_from_u64(4));
        let b = noisy.perceived_roughness(&stim(0.0, 2.0), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_ne!(a, 0.0);
    }

    #[test]
    fn deterministic_dominance() {
        let obs = quiet(1.0 / 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(obs.decide_comparison(&stim(1.0, 3.0), &stim(1.0, 0.0), &mut rng), Side::Left);
        }
    }

    #[test]
    fn equal_stimuli_split_evenly() {
        for obs in [ObserverModel::default(), quiet(0.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let lefts = (0..10_000)
                .filter(|_| obs.decide_comparison(&stim(1.0, 0.0), &stim(1.0, 0.0), &mut rng) == Side::Left)
                .count();
            assert!((4_800..=5_200).contains(&lefts), "{lefts}");
        }
    }

    #[test]
    fn policy_thresholds() {
        let obs = quiet(1.0 / 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cmd = obs.decide_adjustment(Study::AdjustAmplitude, &stim(1.0, 3.0), &stim(1.0, 0.0), &mut rng);
        assert_eq!(cmd, AdjustCommand::Increase);
        assert_eq!(obs.policy(0.015), AdjustCommand::SlightIncrease);
        assert_eq!(obs.policy(-0.015), AdjustCommand::SlightDecrease);
        assert_eq!(obs.policy(-0.05), AdjustCommand::Decrease);
        assert_eq!(obs.policy(0.005), AdjustCommand::Finish);
        let cmd = obs.decide_adjustment(Study::AdjustAmplitude, &stim(1.0, 0.0), &stim(1.0, 0.0), &mut rng);
        assert_eq!(cmd, AdjustCommand::Finish);
    }

    #[test]
    fn wavelength_channel_ignores_oscillation() {
        let obs = quiet(1.0 / 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cmd = obs.decide_adjustment(Study::AdjustWavelength, &stim(1.0, 3.0), &stim(1.0, 0.0), &mut rng);
        assert_eq!(cmd, AdjustCommand::Finish);
        let longer = Stimulus { lambda: 0.3, ..stim(1.0, 0.0) };
        let cmd = obs.decide_adjustment(Study::AdjustWavelength, &stim(1.0, 3.0), &longer, &mut rng);
        assert_eq!(cmd, AdjustCommand::Decrease);
    }

    #[test]
    fn default_noise_gives_eighty_percent_at_alpha_two() {
        let obs = ObserverModel::default();
        assert!((obs.sigma - 0.028006).abs() < 1e-5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| obs.decide_comparison(&stim(1.0, 2.0), &stim(1.0, 0.0), &mut rng) == Side::Left)
            .count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.8).abs() < 0.005, "{p}");
    }

    #[test]
    fn config_file_round_trip_and_validation() {
        let obs = ObserverModel::from_toml_str("k = 0.02\nsigma = 0.01\njnd = 0.03\nstrategy = \"greedy_adjust\"\n")
            .unwrap();
        assert_eq!(obs.k, 0.02);
        assert_eq!(ObserverModel::from_toml_str(&obs.to_toml_string()).unwrap(), obs);
        assert!(ObserverModel::from_toml_str("k = 0.02\nsigma = 0.01\njnd = 0.0\n").is_err());
        assert!(ObserverModel::from_toml_str("k = -1.0\nsigma = 0.01\njnd = 0.1\n").is_err());
        assert!(ObserverModel::from_toml_str("k = 0.1\nsigma = 0.01\njnd = 0.1\ngain = 2\n").is_err());
        assert!(ObserverModel::from_toml_str("k = 0.1\nsigma = 0.01\njnd = 0.1\nstrategy = \"bayes\"\n").is_err());
    }
}
