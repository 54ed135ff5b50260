//! Pointer sample ingestion, speed estimation, and mm/pixel conversion.
//!
//! Speed is the Euclidean magnitude of the pointer velocity, estimated as the
//! mean of the finite-difference speeds over a short trailing window of raw
//! samples. When no sample arrives for longer than the stationary timeout the
//! pen is treated as stopped.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MM_PER_INCH: f64 = 25.4;

/// One raw touch position. `t` is seconds on a monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl PointerSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite()
    }
}

/// Velocity estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicConfig {
    /// Number of raw samples kept; the estimate averages `window - 1` differences.
    pub window: usize,
    /// Seconds without a sample after which speed reads as zero.
    pub stationary_timeout: f64,
}

impl Default for KinematicConfig {
    fn default() -> Self {
        Self {
            window: 5,
            stationary_timeout: 0.1,
        }
    }
}

impl KinematicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::config("velocity window needs at least 2 samples"));
        }
        if !(self.stationary_timeout > 0.0) {
            return Err(Error::config("stationary timeout must be positive"));
        }
        Ok(())
    }
}

/// Running speed estimate for one pointer stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    config: KinematicConfig,
    window: VecDeque<PointerSample>,
    speed: f64,
}

impl Default for KinematicState {
    fn default() -> Self {
        Self::new(KinematicConfig::default())
    }
}

impl KinematicState {
    pub fn new(config: KinematicConfig) -> Self {
        Self {
            window: VecDeque::with_capacity(config.window),
            config,
            speed: 0.0,
        }
    }

    pub fn config(&self) -> &KinematicConfig {
        &self.config
    }

    /// Speed as of the last ingested sample, in pixels per second.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Speed as seen at time `now`; zero once the stream has gone quiet.
    pub fn speed_at(&self, now: f64) -> f64 {
        match self.window.back() {
            Some(last) if now - last.t <= self.config.stationary_timeout => self.speed,
            _ => 0.0,
        }
    }

    pub fn last_sample(&self) -> Option<&PointerSample> {
        self.window.back()
    }

    pub fn samples(&self) -> impl Iterator<Item = &PointerSample> {
        self.window.iter()
    }

    /// Forget the history, e.g. when the pen lifts or enters a new area.
    pub fn reset(&mut self) {
        self.window.clear();
        self.speed = 0.0;
    }

    /// Add a sample and refresh the speed estimate.
    ///
    /// A sample arriving after the stationary timeout starts a new stroke:
    /// the stale history is dropped so the pause does not drag the average.
    pub fn ingest(&mut self, sample: PointerSample) -> Result<f64> {
        if !sample.is_finite() {
            return Err(Error::domain("pointer sample has non-finite fields"));
        }
        if let Some(last) = self.window.back() {
            if sample.t <= last.t {
                return Err(Error::Ordering {
                    last: last.t,
                    next: sample.t,
                });
            }
            if sample.t - last.t > self.config.stationary_timeout {
                self.window.clear();
            }
        }
        if self.window.len() == self.config.window {
            self.window.pop_front();
        }
        self.window.push_back(sample);
        self.speed = window_speed(&self.window);
        Ok(self.speed)
    }
}

fn window_speed(window: &VecDeque<PointerSample>) -> f64 {
    if window.len() < 2 {
        return 0.0;
    }
    let total: f64 = window
        .iter()
        .zip(window.iter().skip(1))
        .map(|(a, b)| (b.x - a.x).hypot(b.y - a.y) / (b.t - a.t))
        .sum();
    total / (window.len() - 1) as f64
}

/// Display density used for mm/pixel conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayMetric {
    pub ppi: f64,
}

impl Default for DisplayMetric {
    fn default() -> Self {
        Self { ppi: 220.0 }
    }
}

impl DisplayMetric {
    pub fn new(ppi: f64) -> Result<Self> {
        if !(ppi > 0.0) || !ppi.is_finite() {
            return Err(Error::config(format!("ppi must be positive, got {ppi}")));
        }
        Ok(Self { ppi })
    }

    pub fn mm_to_px(&self, mm: f64) -> Result<f64> {
        if !mm.is_finite() {
            return Err(Error::domain("length in mm is not finite"));
        }
        Ok(mm * self.ppi / MM_PER_INCH)
    }

    pub fn px_to_mm(&self, px: f64) -> Result<f64> {
        if !px.is_finite() {
            return Err(Error::domain("length in pixels is not finite"));
        }
        Ok(px * MM_PER_INCH / self.ppi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn two_samples_along_x() {
        let mut k = KinematicState::default();
        k.ingest(PointerSample::new(0.0, 0.0, 0.0)).unwrap();
        let v = k.ingest(PointerSample::new(0.1, 9.0, 0.0)).unwrap();
        assert_relative_eq!(v, 90.0, max_relative = 1e-12);
    }

    #[test]
    fn single_sample_is_stationary() {
        let mut k = KinematicState::default();
        assert_eq!(k.ingest(PointerSample::new(0.0, 5.0, 5.0)).unwrap(), 0.0);
    }

    #[test]
    fn y_axis_motion() {
        let mut k = KinematicState::new(KinematicConfig {
            window: 5,
            stationary_timeout: 2.0,
        });
        k.ingest(PointerSample::new(0.0, 0.0, 0.0)).unwrap();
        let v = k.ingest(PointerSample::new(1.0, 0.0, 90.0)).unwrap();
        assert_relative_eq!(v, 90.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_monotonic_time() {
        let mut k = KinematicState::default();
        k.ingest(PointerSample::new(0.5, 0.0, 0.0)).unwrap();
        let err = k.ingest(PointerSample::new(0.5, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Ordering { .. }));
        assert!(k.ingest(PointerSample::new(0.4, 1.0, 0.0)).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut k = KinematicState::default();
        assert!(k.ingest(PointerSample::new(0.0, f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn window_averages_trailing_differences() {
        let mut k = KinematicState::default();
        // Differences give 100, 100, 100, 100, then 200: the first 100 drops out.
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 6.0];
        for (i, x) in xs.iter().enumerate() {
            k.ingest(PointerSample::new(i as f64 * 0.01, *x, 0.0)).unwrap();
        }
        assert_relative_eq!(k.speed(), (100.0 * 3.0 + 200.0) / 4.0, max_relative = 1e-9);
    }

    #[test]
    fn goes_quiet_after_timeout() {
        let mut k = KinematicState::default();
        k.ingest(PointerSample::new(0.0, 0.0, 0.0)).unwrap();
        k.ingest(PointerSample::new(0.05, 4.5, 0.0)).unwrap();
        assert!(k.speed_at(0.1) > 0.0);
        assert_eq!(k.speed_at(0.2), 0.0);
        // A sample after a pause starts a fresh stroke.
        assert_eq!(k.ingest(PointerSample::new(1.0, 100.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn display_conversions_at_220_ppi() {
        let m = DisplayMetric::default();
        assert!((m.mm_to_px(10.4).unwrap() - 90.08).abs() < 0.1);
        assert_eq!(m.mm_to_px(0.0).unwrap(), 0.0);
        assert!((m.mm_to_px(1.15).unwrap() - 9.96).abs() < 0.01);
        assert!(m.mm_to_px(f64::INFINITY).is_err());
        assert!(DisplayMetric::new(0.0).is_err());
    }

    fn stream() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((0.001f64..0.05, -50.0f64..50.0, -50.0f64..50.0), 2..20)
    }

    fn run(deltas: &[(f64, f64, f64)], map: impl Fn(f64, f64) -> (f64, f64)) -> f64 {
        let mut k = KinematicState::default();
        let (mut t, mut x, mut y) = (0.0, 0.0, 0.0);
        k.ingest(PointerSample::new(t, x, y)).unwrap();
        for &(dt, dx, dy) in deltas {
            t += dt;
            x += dx;
            y += dy;
            let (px, py) = map(x, y);
            k.ingest(PointerSample::new(t, px, py)).unwrap();
        }
        k.speed()
    }

    proptest! {
        #[test]
        fn speed_is_rotation_invariant(deltas in stream(), theta in 0.0f64..std::f64::consts::TAU) {
            let (s, c) = theta.sin_cos();
            let plain = run(&deltas, |x, y| (x, y));
            let rotated = run(&deltas, |x, y| (c * x - s * y, s * x + c * y));
            prop_assert!((plain - rotated).abs() <= 1e-9 * plain.max(1.0));
        }

        #[test]
        fn speed_scales_linearly(deltas in stream(), scale in 0.0f64..10.0) {
            let plain = run(&deltas, |x, y| (x, y));
            let scaled = run(&deltas, |x, y| (scale * x, scale * y));
            prop_assert!((scaled - scale * plain).abs() <= 1e-9 * (scale * plain).max(1.0));
        }

        #[test]
        fn conversion_round_trips(mm in -1e4f64..1e4, ppi in 1.0f64..1000.0) {
            let m = DisplayMetric::new(ppi).unwrap();
            let back = m.px_to_mm(m.mm_to_px(mm).unwrap()).unwrap();
            prop_assert!((back - mm).abs() <= 1e-9 * mm.abs().max(1e-300));
        }
    }
}
