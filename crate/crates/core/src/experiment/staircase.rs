//! Logarithmic method-of-adjustment staircase.
//!
//! The adjusted parameter is `initial * 10^(S / 100)` with `S` starting at 0
//! and moving by +6 / +3 / -3 / -6 per button press. The multiplier is kept
//! inside `[1/5, 5]`; a step that would leave the range lands exactly on the
//! boundary instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_MULTIPLIER: f64 = 0.2;
pub const MAX_MULTIPLIER: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustButton {
    Increase,
    SlightIncrease,
    SlightDecrease,
    Decrease,
}

impl AdjustButton {
    pub const ALL: [AdjustButton; 4] = [
        AdjustButton::Increase,
        AdjustButton::SlightIncrease,
        AdjustButton::SlightDecrease,
        AdjustButton::Decrease,
    ];

    /// Change in the exponent S.
    pub fn step(self) -> f64 {
        match self {
            AdjustButton::Increase => 6.0,
            AdjustButton::SlightIncrease => 3.0,
            AdjustButton::SlightDecrease => -3.0,
            AdjustButton::Decrease => -6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaircaseState {
    /// Exponent S; the multiplier is `10^(s / 100)`.
    pub s: f64,
    pub initial_value: f64,
    pub min_multiplier: f64,
    pub max_multiplier: f64,
}

impl StaircaseState {
    pub fn new(initial_value: f64) -> Result<Self> {
        Self::with_bounds(initial_value, MIN_MULTIPLIER, MAX_MULTIPLIER)
    }

    pub fn with_bounds(initial_value: f64, min_multiplier: f64, max_multiplier: f64) -> Result<Self> {
        if !(initial_value > 0.0) || !initial_value.is_finite() {
            return Err(Error::config(format!("initial value must be > 0, got {initial_value}")));
        }
        if !(min_multiplier > 0.0 && min_multiplier <= 1.0 && max_multiplier >= 1.0)
            || !max_multiplier.is_finite()
        {
            return Err(Error::config("multiplier bounds must bracket 1"));
        }
        Ok(Self {
            s: 0.0,
            initial_value,
            min_multiplier,
            max_multiplier,
        })
    }

    fn s_min(&self) -> f64 {
        100.0 * self.min_multiplier.log10()
    }

    fn s_max(&self) -> f64 {
        100.0 * self.max_multiplier.log10()
    }

    pub fn apply(self, button: AdjustButton) -> Self {
        let s = (self.s + button.step()).clamp(self.s_min(), self.s_max());
        Self { s, ..self }
    }

    /// Current multiplier, exactly equal to a bound when sitting on it.
    pub fn multiplier(&self) -> f64 {
        if self.s >= self.s_max() {
            self.max_multiplier
        } else if self.s <= self.s_min() {
            self.min_multiplier
        } else {
            10f64
                .powf(self.s / 100.0)
                .clamp(self.min_multiplier, self.max_multiplier)
        }
    }

    pub fn value(&self) -> f64 {
        self.initial_value * self.multiplier()
    }
}
