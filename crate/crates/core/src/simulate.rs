//! Headless studies: synthetic observers stroke the pen across both areas
//! through the real session state machine and answer or adjust.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    build_adjustment_schedule, build_schedule, AdjustCommand, Session, SessionConfig, Side, Study, TrialInput,
    TrialRecord, TrialRun, TrialSpec,
};
use crate::kinematics::PointerSample;
use crate::logs::{summary_rows, SessionLog, SummaryRow};
use crate::observer::{ObserverModel, Stimulus};
use crate::seeding;

/// Which protocol a simulated run follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudySelector {
    /// Two-alternative roughness comparison, 120 trials per participant.
    Comparison,
    /// Amplitude and wavelength matching, 60 trials per participant.
    Adjustment,
}

impl FromStr for StudySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "comparison" => Ok(StudySelector::Comparison),
            "2" | "adjustment" => Ok(StudySelector::Adjustment),
            other => Err(Error::config(format!("unknown study '{other}' (expected 1 or 2)"))),
        }
    }
}

impl fmt::Display for StudySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudySelector::Comparison => "comparison",
            StudySelector::Adjustment => "adjustment",
        })
    }
}

/// How the synthetic pen moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeConfig {
    pub speed_px_s: f64,
    pub sample_rate_hz: f64,
    /// Time between consecutive adjust presses, and between trials.
    pub pause_s: f64,
}

impl Default for StrokeConfig {
    fn default() -> Self {
        Self {
            speed_px_s: 90.0,
            sample_rate_hz: 30.0,
            pause_s: 0.5,
        }
    }
}

impl StrokeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stroke speed", self.speed_px_s),
            ("sample rate", self.sample_rate_hz),
            ("pause", self.pause_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_ADJUST_STEPS: u32 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub study: StudySelector,
    pub participants: usize,
    pub seed: u64,
    pub observer: ObserverModel,
    pub session: SessionConfig,
    pub stroke: StrokeConfig,
    /// Adjustment trials are finished by force after this many presses.
    pub max_adjust_steps: u32,
}

impl SimConfig {
    pub fn new(study: StudySelector, participants: usize, seed: u64) -> Self {
        Self {
            study,
            participants,
            seed,
            observer: ObserverModel::default(),
            session: SessionConfig::default(),
            stroke: StrokeConfig::default(),
            max_adjust_steps: DEFAULT_MAX_ADJUST_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.participants == 0 {
            return Err(Error::config("participants must be at least 1"));
        }
        self.observer.validate()?;
        self.session.validate()?;
        self.stroke.validate()
    }
}

/// Everything one simulated participant produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRun {
    pub index: usize,
    pub participant: String,
    pub seed: u64,
    pub records: Vec<TrialRecord>,
    /// Adjustment trials that hit the step cap.
    pub capped_trials: usize,
}

impl ParticipantRun {
    pub fn log(&self, config: &SessionConfig) -> SessionLog {
        SessionLog {
            participant: self.participant.clone(),
            seed: self.seed,
            config: *config,
            records: self.records.clone(),
        }
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        summary_rows(&self.participant, &self.records)
    }
}

/// Stable participant label for a 0-based index.
pub fn participant_id(index: usize) -> String {
    format!("p{:02}", index + 1)
}

/// Sweep the pen left to right through the middle of one area. Returns the
/// time just after the last sample.
fn stroke(
    feed: &mut impl FnMut(TrialInput) -> Result<()>,
    config: &SessionConfig,
    stroke: &StrokeConfig,
    side: Side,
    t0: f64,
) -> Result<f64> {
    let rect = config.layout.area(side);
    let y = rect.center_y();
    let dt = 1.0 / stroke.sample_rate_hz;
    let dx = stroke.speed_px_s * dt;
    let end = rect.x + rect.width - 1.0;
    let mut t = t0;
    let mut i = 0u32;
    loop {
        let x = rect.x + 1.0 + dx * i as f64;
        if x > end {
            break;
        }
        feed(TrialInput::Pointer(PointerSample::new(t, x, y)))?;
        i += 1;
        t = t0 + dt * i as f64;
    }
    Ok(t)
}

fn stimuli(run: &TrialRun, config: &SessionConfig) -> (Stimulus, Stimulus) {
    let spec = run.spec();
    let at = |side: Side| {
        let sig = run.area_signal(side, 0.0, config);
        Stimulus {
            amplitude: sig.amplitude,
            lambda: sig.lambda,
            alpha: spec.alpha_for(side),
        }
    };
    (at(Side::Left), at(Side::Right))
}

/// Observer-side driver for one trial, independent of how inputs are
/// delivered. Returns the time after the trial and whether the cap was hit.
fn drive_trial(
    look: impl Fn() -> Option<(TrialSpec, (Stimulus, Stimulus))>,
    feed: &mut impl FnMut(TrialInput) -> Result<bool>,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    t0: f64,
) -> Result<(f64, bool)> {
    let (spec, _) = look().ok_or_else(|| Error::protocol("no active trial"))?;
    let mut pointer = |input| feed(input).map(|_| ());
    let mut t = stroke(&mut pointer, &cfg.session, &cfg.stroke, Side::Left, t0)?;
    t = stroke(&mut pointer, &cfg.session, &cfg.stroke, Side::Right, t)?;
    if spec.study == Study::Comparison {
        let (_, (left, right)) = look().expect("trial still active");
        let side = cfg.observer.decide_comparison(&left, &right, rng);
        feed(TrialInput::Answer { t, side })?;
        return Ok((t + cfg.stroke.pause_s, false));
    }
    let mut steps = 0u32;
    loop {
        let (_, (left, right)) = look().expect("trial still active");
        let (osc, nonosc) = match spec.oscillatory_side {
            Side::Left => (left, right),
            Side::Right => (right, left),
        };
        let mut command = cfg.observer.decide_adjustment(spec.study, &osc, &nonosc, rng);
        let capped = steps >= cfg.max_adjust_steps && command != AdjustCommand::Finish;
        if capped {
            command = AdjustCommand::Finish;
        }
        t += cfg.stroke.pause_s;
        if feed(TrialInput::Adjust { t, command })? {
            return Ok((t + cfg.stroke.pause_s, capped));
        }
        steps += 1;
    }
}

/// Run one participant's full schedule.
pub fn simulate_participant(cfg: &SimConfig, index: usize) -> Result<ParticipantRun> {
    let id = participant_id(index);
    let pseed = seeding::participant_seed(cfg.seed, &id);
    let schedule = match cfg.study {
        StudySelector::Comparison => build_schedule(Study::Comparison, &id, cfg.seed),
        StudySelector::Adjustment => build_adjustment_schedule(index, &id, cfg.seed),
    };
    let session = std::cell::RefCell::new(Session::new(id.clone(), schedule, pseed, cfg.session)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::observer_seed(pseed));
    let mut t = 0.0;
    let mut capped_trials = 0;
    while !session.borrow().is_finished() {
        let mut feed = |input| {
            let out = session.borrow_mut().trial_step(input)?;
            Ok(out.trial_complete.is_some())
        };
        let look = || session.borrow().active().map(|r| (*r.spec(), stimuli(r, &cfg.session)));
        let (next, capped) = drive_trial(look, &mut feed, cfg, &mut rng, t)?;
        t = next;
        capped_trials += capped as usize;
    }
    Ok(ParticipantRun {
        index,
        participant: id,
        seed: pseed,
        records: session.into_inner().into_records(),
        capped_trials,
    })
}

/// Run every participant. Output order and content do not depend on the
/// number of worker threads.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<ParticipantRun>> {
    cfg.validate()?;
    (0..cfg.participants)
        .into_par_iter()
        .map(|i| simulate_participant(cfg, i))
        .collect()
}

/// Run `n` independent adjustment trials of one condition. Trial `i` uses an
/// observer stream derived from `(seed, i)` only, so runs at different
/// `alpha` share their noise draws.
pub fn adjustment_staircases(
    cfg: &SimConfig,
    study: Study,
    alpha: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    if !study.is_adjustment() {
        return Err(Error::config("staircases need an adjustment study"));
    }
    let spec = TrialSpec {
        study,
        alpha_osc: alpha,
        lambda: crate::experiment::ADJUST_LAMBDA,
        oscillatory_side: Side::Left,
        reps_index: 0,
    };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let trial_seed = seeding::trial_seed(seed, i);
            let run = std::cell::RefCell::new(TrialRun::new(i, spec, trial_seed, &cfg.session)?);
            let mut rng = ChaCha8Rng::seed_from_u64(seeding::split(seeding::observer_seed(seed), i as u64));
            let response = std::cell::Cell::new(None);
            let mut feed = |input| {
                let (_, r) = run.borrow_mut().step(input, &cfg.session)?;
                response.set(r);
                Ok(r.is_some())
            };
            let look = || {
                let r = run.borrow();
                Some((*r.spec(), stimuli(&r, &cfg.session)))
            };
            drive_trial(look, &mut feed, cfg, &mut rng, 0.0)?;
            let response = response.get().expect("trial finished");
            Ok(run.into_inner().into_record(response))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Response;

    #[test]
    fn study_selector_parsing() {
        assert_eq!("1".parse::<StudySelector>().unwrap(), StudySelector::Comparison);
        assert_eq!("adjustment".parse::<StudySelector>().unwrap(), StudySelector::Adjustment);
        assert!("3".parse::<StudySelector>().is_err());
    }

    #[test]
    fn comparison_participant_completes_schedule() {
        let cfg = SimConfig::new(StudySelector::Comparison, 1, 7);
        let run = simulate_participant(&cfg, 0).unwrap();
        assert_eq!(run.records.len(), 120);
        assert_eq!(run.participant, "p01");
        let osc = run.records.iter().filter(|r| r.chose_oscillatory() == Some(true)).count();
        assert!(osc > 60, "{osc}");
        for r in &run.records {
            assert!(r.events.windows(2).all(|w| w[0].t <= w[1].t));
        }
    }

    #[test]
    fn adjustment_participant_completes_both_blocks() {
        let cfg = SimConfig::new(StudySelector::Adjustment, 2, 7);
        let runs = simulate(&cfg).unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            assert_eq!(run.records.len(), 60);
            assert!(run.records.iter().all(|r| matches!(r.response, Response::Adjusted { .. })));
        }
        assert_eq!(runs[0].records[0].spec.study, Study::AdjustAmplitude);
        assert_eq!(runs[1].records[0].spec.study, Study::AdjustWavelength);
    }

    #[test]
    fn same_seed_same_run() {
        let cfg = SimConfig::new(StudySelector::Adjustment, 2, 99);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 100, ..cfg };
        assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn step_cap_forces_finish() {
        // An observer that can never be satisfied.
        let mut cfg = SimConfig::new(StudySelector::Adjustment, 1, 1);
        cfg.observer.k = 10.0;
        cfg.observer.sigma = 0.0;
        cfg.max_adjust_steps = 7;
        let recs = adjustment_staircases(&cfg, Study::AdjustAmplitude, 3.0, 3, 5).unwrap();
        for r in &recs {
            match r.response {
                Response::Adjusted { steps, final_multiplier, .. } => {
                    assert_eq!(steps, 7);
                    assert!(final_multiplier > 1.0);
                }
                _ => panic!("not an adjustment"),
            }
        }
    }

    #[test]
    fn noiseless_staircase_lands_within_one_fine_step() {
        // The jnd must cover half a fine step or the greedy policy can oscillate.
        let mut cfg = SimConfig::new(StudySelector::Adjustment, 1, 1);
        cfg.observer.sigma = 0.0;
        let fine = 10f64.powf(0.03);
        for alpha in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let pse = 1.0 + cfg.observer.k * alpha;
            let r = &adjustment_staircases(&cfg, Study::AdjustAmplitude, alpha, 1, 3).unwrap()[0];
            let Response::Adjusted { final_multiplier, .. } = r.response else { panic!() };
            assert!(final_multiplier / pse < fine && pse / final_multiplier < fine, "alpha {alpha}: {final_multiplier}");
        }
    }

    #[test]
    fn zero_participants_rejected() {
        let cfg = SimConfig::new(StudySelector::Comparison, 0, 1);
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
    }
}
