use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, uniform_index};

/// Oscillation gains of the oscillatory area in the roughness comparison.
pub const COMPARISON_ALPHAS: [f64; 4] = [1.5, 2.0, 2.5, 3.0];
/// Wavelength parameters in the roughness comparison.
pub const COMPARISON_LAMBDAS: [f64; 3] = [1.0 / 3.0, 1.0 / 5.0, 1.0 / 7.0];
pub const COMPARISON_REPS: u32 = 10;

/// Oscillation gains in the adjustment experiments.
pub const ADJUST_ALPHAS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const ADJUST_LAMBDA: f64 = 1.0 / 5.0;
pub const ADJUST_REPS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Two-alternative "which area is rougher" judgement.
    Comparison,
    /// Match roughness by adjusting the non-oscillatory amplitude.
    AdjustAmplitude,
    /// Match roughness by adjusting the non-oscillatory wavelength parameter.
    AdjustWavelength,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::Comparison => "comparison",
            Study::AdjustAmplitude => "adjust_amplitude",
            Study::AdjustWavelength => "adjust_wavelength",
        }
    }

    pub fn is_adjustment(self) -> bool {
        !matches!(self, Study::Comparison)
    }

    fn stream_tag(self) -> u64 {
        match self {
            Study::Comparison => 1,
            Study::AdjustAmplitude => 2,
            Study::AdjustWavelength => 3,
        }
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comparison" => Ok(Study::Comparison),
            "adjust_amplitude" => Ok(Study::AdjustAmplitude),
            "adjust_wavelength" => Ok(Study::AdjustWavelength),
            other => Err(Error::config(format!("unknown study '{other}'"))),
        }
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::Parse(format!("unknown side '{other}'"))),
        }
    }
}

/// One scheduled trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub study: Study,
    /// Gain of the oscillatory area; the other area always uses zero.
    pub alpha_osc: f64,
    /// Wavelength parameter of the oscillatory area.
    pub lambda: f64,
    pub oscillatory_side: Side,
    /// Which repetition of its condition this trial is (0-based).
    pub reps_index: u32,
}

impl TrialSpec {
    pub fn alpha_for(&self, side: Side) -> f64 {
        if side == self.oscillatory_side {
            self.alpha_osc
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let member = |set: &[f64], v: f64| set.contains(&v);
        let ok = match self.study {
            Study::Comparison => {
                member(&COMPARISON_ALPHAS, self.alpha_osc) && member(&COMPARISON_LAMBDAS, self.lambda)
            }
            _ => {
                member(&ADJUST_ALPHAS, self.alpha_osc)
                    && self.lambda == ADJUST_LAMBDA
                    && self.oscillatory_side == Side::Left
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("trial spec outside the {} design: {self:?}", self.study)))
        }
    }
}

fn factorial(study: Study) -> Vec<(f64, f64, u32)> {
    match study {
        Study::Comparison => COMPARISON_ALPHAS
            .iter()
            .flat_map(|&a| COMPARISON_LAMBDAS.iter().map(move |&l| (a, l)))
            .flat_map(|(a, l)| (0..COMPARISON_REPS).map(move |r| (a, l, r)))
            .collect(),
        _ => ADJUST_ALPHAS
            .iter()
            .flat_map(|&a| (0..ADJUST_REPS).map(move |r| (a, ADJUST_LAMBDA, r)))
            .collect(),
    }
}

/// Full factorial x repetitions in a seeded order for one participant.
///
/// Comparison trials draw the oscillatory side uniformly per trial; the
/// adjustment experiments keep the oscillatory area on the left.
pub fn build_schedule(study: Study, participant_id: &str, seed: u64) -> Vec<TrialSpec> {
    let pseed = seeding::participant_seed(seed, participant_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::split(
        pseed,
        seeding::SCHEDULE_STREAM + study.stream_tag(),
    ));
    let mut cells = factorial(study);
    seeding::shuffle(&mut rng, &mut cells);
    cells
        .into_iter()
        .map(|(alpha_osc, lambda, reps_index)| TrialSpec {
            study,
            alpha_osc,
            lambda,
            oscillatory_side: match study {
                Study::Comparison if uniform_index(&mut rng, 2) == 1 => Side::Right,
                _ => Side::Left,
            },
            reps_index,
        })
        .collect()
}

/// Both adjustment experiments back to back. Even-numbered participants run
/// the amplitude block first, odd-numbered ones the wavelength block.
pub fn build_adjustment_schedule(participant_index: usize, participant_id: &str, seed: u64) -> Vec<TrialSpec> {
    let amp = build_schedule(Study::AdjustAmplitude, participant_id, seed);
    let wav = build_schedule(Study::AdjustWavelength, participant_id, seed);
    if participant_index.is_multiple_of(2) {
        amp.into_iter().chain(wav).collect()
    } else {
        wav.into_iter().chain(amp).collect()
    }
}
