//! Pointer movement controller.
//!
//! Each rendered frame, the visualized pointer is moved away from the touch
//! position by an independent uniform offset on each axis whose half-width is
//! `c * alpha * speed`. The displayed position is then snapped to the pixel
//! grid.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::PointerSample;

/// Calibration constant in seconds: 1.8 px = C * 2 * 90 px/s.
pub const DEFAULT_C: f64 = 0.01;

/// Seeded uniform source used for offsets.
///
/// Backed by ChaCha8 (`rand_chacha`), whose output stream is fixed by the
/// algorithm, so a recorded seed replays the same offsets on any platform.
#[derive(Debug, Clone)]
pub struct OffsetRng(ChaCha8Rng);

impl OffsetRng {
    pub fn seed_from(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform draw on the open interval (-1, 1).
    pub fn symmetric_unit(&mut self) -> f64 {
        // 53 random bits centred in their cell, so neither endpoint is reachable.
        let bits = self.0.next_u64() >> 11;
        let unit = (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        2.0 * unit - 1.0
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

impl RngCore for OffsetRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionConfig {
    /// Oscillation gain; zero disables distortion exactly.
    pub alpha: f64,
    /// Seconds; converts speed into an offset length.
    pub c: f64,
    pub rng_seed: u64,
}

impl DistortionConfig {
    pub fn new(alpha: f64, rng_seed: u64) -> Result<Self> {
        let cfg = Self {
            alpha,
            c: DEFAULT_C,
            rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::config(format!("C must be > 0, got {}", self.c)));
        }
        Ok(())
    }

    /// Largest possible offset magnitude on either axis at `speed`.
    pub fn bound(&self, speed: f64) -> f64 {
        self.c * self.alpha * speed.abs()
    }
}

/// Visualized pointer after distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortedPosition {
    pub x_vis: i64,
    pub y_vis: i64,
    pub dx: f64,
    pub dy: f64,
}

/// Compute the displayed pointer for one frame.
///
/// Two draws are always consumed (x then y), even when `alpha` is zero, so
/// the random stream stays aligned regardless of which area is active.
pub fn distort(
    origin: &PointerSample,
    speed: f64,
    cfg: &DistortionConfig,
    rng: &mut OffsetRng,
) -> Result<DistortedPosition> {
    cfg.validate()?;
    if !(speed >= 0.0) || !speed.is_finite() {
        return Err(Error::domain(format!("speed must be finite and >= 0, got {speed}")));
    }
    let ux = rng.symmetric_unit();
    let uy = rng.symmetric_unit();
    let scale = cfg.c * cfg.alpha * speed;
    let dx = scale * ux;
    let dy = scale * uy;
    Ok(DistortedPosition {
        x_vis: round_px(origin.x + dx)?,
        y_vis: round_px(origin.y + dy)?,
        dx,
        dy,
    })
}

/// Snap to the pixel grid: nearest integer, halves away from zero.
pub fn round_px(v: f64) -> Result<i64> {
    if !v.is_finite() {
        return Err(Error::domain("pixel coordinate is not finite"));
    }
    Ok(v.round() as i64)
}
