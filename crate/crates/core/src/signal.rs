//! Velocity-driven square-wave vibration signal.
//!
//! The drive signal is `A * sgn(sin(phase + phase0))` where the phase is
//! accumulated from the instantaneous frequency `f = speed * lambda / 2`.
//! With `lambda = 1/5` a pen moving at 90 px/s produces 9 Hz, i.e. one
//! period every 10 px of travel (spatial wavelength `2 / lambda` pixels).
//!
//! `sgn(0)` is taken as `+1` so the output only ever takes the values
//! `+A` and `-A`; a stationary pen holds a constant level.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 48_000.0;

/// Parameters of one area's square wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Normalized amplitude; 1.0 corresponds to the reference drive voltage.
    pub amplitude: f64,
    /// Wavelength parameter; spatial period is `2 / lambda` pixels.
    pub lambda: f64,
    /// Phase offset in radians.
    pub phase0: f64,
}

impl SignalConfig {
    pub fn new(amplitude: f64, lambda: f64) -> Result<Self> {
        let cfg = Self {
            amplitude,
            lambda,
            phase0: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::config(format!("amplitude must be > 0, got {}", self.amplitude)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !self.phase0.is_finite() {
            return Err(Error::config("phase offset is not finite"));
        }
        Ok(())
    }
}

/// Square-wave frequency in Hz for a pen moving at `speed` px/s.
pub fn instantaneous_frequency(speed: f64, cfg: &SignalConfig) -> Result<f64> {
    if !(cfg.lambda > 0.0) || !cfg.lambda.is_finite() {
        return Err(Error::config(format!("lambda must be > 0, got {}", cfg.lambda)));
    }
    if !(speed >= 0.0) || !speed.is_finite() {
        return Err(Error::domain(format!("speed must be finite and >= 0, got {speed}")));
    }
    Ok(speed * cfg.lambda / 2.0)
}

/// Oscillator state carried between blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalState {
    /// Accumulated phase in `[0, 2pi)`.
    pub phase: f64,
    /// Frequency used for the most recent sample.
    pub freq: f64,
    /// Samples emitted so far; sample `n` sits at `n / sample_rate` seconds.
    pub sample_index: u64,
}

impl SignalState {
    pub fn reset_phase(&mut self) {
        self.phase = 0.0;
    }

    fn emit(&mut self, freq: f64, amplitude: f64, phase0: f64, sample_rate: f64) -> f32 {
        let value = if (self.phase + phase0).rem_euclid(TAU) < PI {
            amplitude
        } else {
            -amplitude
        };
        self.freq = freq;
        self.phase += TAU * freq / sample_rate;
        if self.phase >= TAU {
            self.phase = self.phase.rem_euclid(TAU);
        }
        self.sample_index += 1;
        value as f32
    }
}

fn block_len(duration: f64, sample_rate: f64) -> Result<usize> {
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(Error::config(format!("sample rate must be > 0, got {sample_rate}")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::config(format!("duration must be > 0, got {duration}")));
    }
    Ok((duration * sample_rate).round() as usize)
}

/// Render `duration` seconds of the square wave.
///
/// `speed_at` is queried with the absolute time of every sample, so splitting
/// a render into consecutive blocks yields the same samples as one long
/// block. On a non-finite or negative speed the whole block is rejected and
/// the input state is left untouched; [`Synthesizer`] turns that into a
/// muted block.
pub fn synthesize_block(
    state: SignalState,
    cfg: &SignalConfig,
    mut speed_at: impl FnMut(f64) -> f64,
    duration: f64,
    sample_rate: f64,
) -> Result<(Vec<f32>, SignalState)> {
    cfg.validate()?;
    let n = block_len(duration, sample_rate)?;
    let mut next = state;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let t = next.sample_index as f64 / sample_rate;
        let speed = speed_at(t);
        if !speed.is_finite() || speed < 0.0 {
            return Err(Error::Synthesis(format!("speed {speed} at t={t} s")));
        }
        let freq = speed * cfg.lambda / 2.0;
        out.push(next.emit(freq, cfg.amplitude, cfg.phase0, sample_rate));
    }
    Ok((out, next))
}

/// Stateful block renderer that mutes faulty blocks instead of failing.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    pub config: SignalConfig,
    pub sample_rate: f64,
    state: SignalState,
}

impl Synthesizer {
    pub fn new(config: SignalConfig, sample_rate: f64) -> Result<Self> {
        config.validate()?;
        block_len(1.0, sample_rate)?;
        Ok(Self {
            config,
            sample_rate,
            state: SignalState::default(),
        })
    }

    pub fn state(&self) -> &SignalState {
        &self.state
    }

    /// Render the next block. A fault yields silence for the block and the
    /// clock still advances, so later blocks stay aligned in time.
    pub fn render(
        &mut self,
        speed_at: impl FnMut(f64) -> f64,
        duration: f64,
    ) -> (Vec<f32>, Option<Error>) {
        match synthesize_block(self.state, &self.config, speed_at, duration, self.sample_rate) {
            Ok((samples, state)) => {
                self.state = state;
                (samples, None)
            }
            Err(err) => {
                let n = block_len(duration, self.sample_rate).unwrap_or(0);
                self.state.sample_index += n as u64;
                self.state.freq = 0.0;
                (vec![0.0; n], Some(err))
            }
        }
    }
}

/// Parameters pushed to a running synthesizer, mirroring a signal update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiveParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub reset_phase: bool,
}

impl Default for LiveParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            frequency: 0.0,
            reset_phase: false,
        }
    }
}

/// Producer half of the parameter handoff.
#[derive(Debug, Clone)]
pub struct ParamSender {
    slot: Arc<Mutex<Option<LiveParams>>>,
}

impl ParamSender {
    /// Replace any pending update with `params`.
    pub fn publish(&self, params: LiveParams) {
        let mut slot = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        let reset = params.reset_phase || slot.is_some_and(|p| p.reset_phase);
        *slot = Some(LiveParams {
            reset_phase: reset,
            ..params
        });
    }
}

/// Consumer that renders on the audio clock and picks up parameter updates
/// at chunk boundaries without ever waiting on the producer.
#[derive(Debug)]
pub struct LiveSynth {
    slot: Arc<Mutex<Option<LiveParams>>>,
    current: LiveParams,
    state: SignalState,
    sample_rate: f64,
    chunk: usize,
}

/// Build a connected producer/consumer pair. Updates reach the output within
/// `max_staleness` seconds of audio.
pub fn live_channel(sample_rate: f64, max_staleness: f64) -> Result<(ParamSender, LiveSynth)> {
    let chunk = block_len(max_staleness, sample_rate)?.max(1);
    let slot = Arc::new(Mutex::new(None));
    Ok((
        ParamSender { slot: slot.clone() },
        LiveSynth {
            slot,
            current: LiveParams::default(),
            state: SignalState::default(),
            sample_rate,
            chunk,
        },
    ))
}

impl LiveSynth {
    pub fn params(&self) -> LiveParams {
        self.current
    }

    pub fn state(&self) -> &SignalState {
        &self.state
    }

    fn poll(&mut self) {
        // try_lock: if the producer holds the slot, keep the old parameters
        // for one more chunk.
        if let Ok(mut slot) = self.slot.try_lock() {
            if let Some(p) = slot.take() {
                if p.reset_phase {
                    self.state.reset_phase();
                }
                if p.amplitude.is_finite() && p.frequency.is_finite() && p.frequency >= 0.0 {
                    self.current = LiveParams {
                        reset_phase: false,
                        ..p
                    };
                }
            }
        }
    }

    pub fn render(&mut self, out: &mut [f32]) {
        for chunk in out.chunks_mut(self.chunk) {
            self.poll();
            let LiveParams {
                amplitude,
                frequency,
                ..
            } = self.current;
            for s in chunk.iter_mut() {
                *s = if frequency > 0.0 {
                    self.state.emit(frequency, amplitude, 0.0, self.sample_rate)
                } else {
                    // a stopped pen is silent
                    self.state.sample_index += 1;
                    self.state.freq = 0.0;
                    0.0
                };
            }
        }
    }
}

/// Drive-voltage calibration: peak-to-peak volts at unit amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageMap {
    pub vpp_at_unit_amplitude: f64,
}

impl Default for VoltageMap {
    fn default() -> Self {
        Self {
            vpp_at_unit_amplitude: 4.67,
        }
    }
}

pub fn amplitude_to_vpp(amplitude: f64, map: &VoltageMap) -> Result<f64> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::domain(format!("amplitude must be >= 0, got {amplitude}")));
    }
    Ok(amplitude * map.vpp_at_unit_amplitude)
}

/// Number of polarity flips between consecutive samples.
pub fn sign_changes(samples: &[f32]) -> usize {
    samples
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count()
}

/// Fundamental frequency from the spacing of the first and last polarity
/// flips. `None` when fewer than two flips are present.
pub fn estimate_frequency(samples: &[f32], sample_rate: f64) -> Option<f64> {
    let flips: Vec<usize> = samples
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] >= 0.0) != (w[1] >= 0.0))
        .map(|(i, _)| i + 1)
        .collect();
    let (first, last) = (*flips.first()?, *flips.last()?);
    if first == last {
        return None;
    }
    let span = (last - first) as f64 / sample_rate;
    Some((flips.len() - 1) as f64 / (2.0 * span))
}

/// Write mono 16-bit PCM. Samples are clipped to [-1, 1] full scale.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Synthesis(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(lambda: f64) -> SignalConfig {
        SignalConfig::new(1.0, lambda).unwrap()
    }

    #[test]
    fn frequency_law_examples() {
        assert!((instantaneous_frequency(90.0, &cfg(0.2)).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(instantaneous_frequency(0.0, &cfg(0.2)).unwrap(), 0.0);
        assert!((instantaneous_frequency(90.0, &cfg(1.0 / 3.0)).unwrap() - 15.0).abs() < 1e-12);
        let bad = SignalConfig {
            amplitude: 1.0,
            lambda: 0.0,
            phase0: 0.0,
        };
        assert!(instantaneous_frequency(90.0, &bad).is_err());
        assert!(instantaneous_frequency(-1.0, &cfg(0.2)).is_err());
    }

    #[test]
    fn nine_hz_second() {
        let (samples, state) =
            synthesize_block(SignalState::default(), &cfg(0.2), |_| 90.0, 1.0, DEFAULT_SAMPLE_RATE)
                .unwrap();
        assert_eq!(samples.len(), 48_000);
        // 18 half-periods fit in one second; the last flip lands on the
        // block edge, which the invariant allows to fall either side.
        let flips = sign_changes(&samples);
        assert!((17..=19).contains(&flips), "{flips}");
        // The flip on the edge shows up as the first sample of the next block.
        let (next, _) =
            synthesize_block(state, &cfg(0.2), |_| 90.0, 0.01, DEFAULT_SAMPLE_RATE).unwrap();
        let mut joined = samples.clone();
        joined.extend_from_slice(&next);
        assert_eq!(sign_changes(&joined), 18);
        assert!((estimate_frequency(&samples, DEFAULT_SAMPLE_RATE).unwrap() - 9.0).abs() < 1e-3);
    }

    #[test]
    fn stationary_block_is_constant() {
        let (samples, _) =
            synthesize_block(SignalState::default(), &cfg(0.2), |_| 0.0, 0.5, DEFAULT_SAMPLE_RATE)
                .unwrap();
        assert_eq!(sign_changes(&samples), 0);
        assert!(samples.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn split_blocks_match_whole() {
        let speed = |t: f64| 60.0 + 40.0 * (3.0 * t).sin();
        let (whole, end_whole) =
            synthesize_block(SignalState::default(), &cfg(0.2), speed, 1.0, DEFAULT_SAMPLE_RATE)
                .unwrap();
        let (mut a, mid) =
            synthesize_block(SignalState::default(), &cfg(0.2), speed, 0.5, DEFAULT_SAMPLE_RATE)
                .unwrap();
        let (b, end_split) = synthesize_block(mid, &cfg(0.2), speed, 0.5, DEFAULT_SAMPLE_RATE).unwrap();
        a.extend(b);
        assert_eq!(whole.len(), a.len());
        assert!(whole.iter().zip(&a).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(end_whole.phase.to_bits(), end_split.phase.to_bits());
    }

    #[test]
    fn non_finite_speed_mutes_block() {
        assert!(matches!(
            synthesize_block(SignalState::default(), &cfg(0.2), |_| f64::NAN, 0.1, 48_000.0),
            Err(Error::Synthesis(_))
        ));
        let mut synth = Synthesizer::new(cfg(0.2), 48_000.0).unwrap();
        let (block, err) = synth.render(|t| if t > 0.05 { f64::INFINITY } else { 90.0 }, 0.1);
        assert!(err.is_some());
        assert_eq!(block.len(), 4800);
        assert!(block.iter().all(|&s| s == 0.0));
        assert_eq!(synth.state().sample_index, 4800);
        let (block, err) = synth.render(|_| 90.0, 0.1);
        assert!(err.is_none());
        assert!(block.iter().all(|&s| s.abs() == 1.0));
    }

    #[test]
    fn voltage_map() {
        let m = VoltageMap::default();
        assert_eq!(amplitude_to_vpp(1.0, &m).unwrap(), 4.67);
        assert_eq!(amplitude_to_vpp(0.0, &m).unwrap(), 0.0);
        assert!((amplitude_to_vpp(1.05, &m).unwrap() - 4.9035).abs() < 1e-12);
        assert!(amplitude_to_vpp(-0.1, &m).is_err());
    }

    #[test]
    fn live_updates_land_within_staleness() {
        let (tx, mut synth) = live_channel(48_000.0, 0.010).unwrap();
        let mut buf = vec![0.0f32; 1000];
        synth.render(&mut buf);
        assert!(buf.iter().all(|&s| s == 0.0));
        tx.publish(LiveParams {
            amplitude: 1.05,
            frequency: 9.0,
            reset_phase: true,
        });
        let mut buf = vec![0.0f32; 48_000];
        synth.render(&mut buf);
        let first = buf.iter().position(|&s| s != 0.0).unwrap();
        assert!(first <= 480, "update applied after {first} samples");
        assert!(buf[first..].iter().all(|&s| (s.abs() - 1.05).abs() < 1e-6));
        let f = estimate_frequency(&buf[first..], 48_000.0).unwrap();
        assert!((f - 9.0).abs() / 9.0 < 0.02);
    }

    #[test]
    fn live_updates_keep_phase_without_reset() {
        let (tx, mut synth) = live_channel(48_000.0, 0.010).unwrap();
        tx.publish(LiveParams {
            amplitude: 1.0,
            frequency: 9.0,
            reset_phase: true,
        });
        let mut buf = vec![0.0f32; 4000];
        synth.render(&mut buf);
        let phase = synth.state().phase;
        tx.publish(LiveParams {
            amplitude: 1.0,
            frequency: 12.0,
            reset_phase: false,
        });
        let mut one = [0.0f32; 1];
        synth.render(&mut one);
        let expected = phase + TAU * 12.0 / 48_000.0;
        assert!((synth.state().phase - expected).abs() < 1e-12);
    }

    #[test]
    fn wav_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nine.wav");
        let (samples, _) =
            synthesize_block(SignalState::default(), &cfg(0.2), |_| 90.0, 1.0, 48_000.0).unwrap();
        write_wav(&path, &samples, 48_000).unwrap();
        let reader = hound::WavReader::open(&path).unwrap();
        assert_eq!(reader.spec().sample_rate, 48_000);
        assert_eq!(reader.spec().bits_per_sample, 16);
        let back: Vec<i16> = reader.into_samples::<i16>().map(|s| s.unwrap()).collect();
        assert_eq!(back.len(), samples.len());
        assert!(back.iter().all(|&s| s == i16::MAX || s == -i16::MAX));
    }

    proptest! {
        #[test]
        fn square_wave_levels_and_continuity(
            amp in 0.05f64..2.0,
            lambda in 0.05f64..1.0,
            speed in 1.0f64..400.0,
        ) {
            let c = SignalConfig::new(amp, lambda).unwrap();
            let sr = 8_000.0;
            let mut state = SignalState::default();
            let f = speed * lambda / 2.0;
            let max_jump = TAU * f / sr + 1e-9;
            let mut levels = Vec::new();
            for _ in 0..4 {
                let before = state.phase;
                let (s, next) = synthesize_block(state, &c, |_| speed, 0.05, sr).unwrap();
                let advanced = (next.phase - before).rem_euclid(TAU);
                prop_assert!(advanced <= max_jump * 400.0 + 1e-6);
                prop_assert!(next.phase >= 0.0 && next.phase < TAU);
                levels.extend(s);
                state = next;
            }
            prop_assert!(levels.iter().all(|&s| s == amp as f32 || s == -amp as f32));
            let expected = (2.0 * f * 0.2).round() as i64;
            let got = sign_changes(&levels) as i64;
            prop_assert!((got - expected).abs() <= 1, "{got} vs {expected}");
        }

        #[test]
        fn frequency_law_is_linear(v in 0.0f64..1000.0, scale in 0.0f64..10.0, lambda in 0.01f64..2.0) {
            let c = SignalConfig::new(1.0, lambda).unwrap();
            let a = instantaneous_frequency(scale * v, &c).unwrap();
            let b = scale * instantaneous_frequency(v, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}
