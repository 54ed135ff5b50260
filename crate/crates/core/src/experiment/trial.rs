//! Per-trial state machine and the session that strings trials together.

use serde::{Deserialize, Serialize};

use crate::distortion::{self, DistortedPosition, DistortionConfig, OffsetRng, DEFAULT_C};
use crate::error::{Error, Result};
use crate::experiment::schedule::{Side, Study, TrialSpec};
use crate::experiment::staircase::{AdjustButton, StaircaseState};
use crate::kinematics::{DisplayMetric, KinematicConfig, KinematicState, PointerSample};
use crate::seeding;
use crate::signal::{SignalConfig, VoltageMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn center_y(&self) -> f64 {
        self.y + self.height / 2.0
    }
}

/// Screen placement of the two stimulus areas, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub left: Rect,
    pub right: Rect,
    /// Fraction of an area's width the pen must sweep for it to count as traversed.
    pub traverse_fraction: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            left: Rect {
                x: 80.0,
                y: 160.0,
                width: 240.0,
                height: 160.0,
            },
            right: Rect {
                x: 400.0,
                y: 160.0,
                width: 240.0,
                height: 160.0,
            },
            traverse_fraction: 0.8,
        }
    }
}

impl Layout {
    pub fn area(&self, side: Side) -> &Rect {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn area_at(&self, x: f64, y: f64) -> Option<Side> {
        if self.left.contains(x, y) {
            Some(Side::Left)
        } else if self.right.contains(x, y) {
            Some(Side::Right)
        } else {
            None
        }
    }

    fn validate(&self) -> Result<()> {
        for r in [&self.left, &self.right] {
            if !(r.width > 0.0 && r.height > 0.0) {
                return Err(Error::config("areas need positive size"));
            }
        }
        let l = &self.left;
        let r = &self.right;
        let overlap = l.x < r.x + r.width && r.x < l.x + l.width && l.y < r.y + r.height && r.y < l.y + l.height;
        if overlap {
            return Err(Error::config("stimulus areas overlap"));
        }
        if !(self.traverse_fraction > 0.0 && self.traverse_fraction <= 1.0) {
            return Err(Error::config("traverse fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Everything a session needs besides its schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub layout: Layout,
    pub kinematics: KinematicConfig,
    /// Distortion calibration constant, seconds.
    pub c: f64,
    /// Normalized amplitude of the oscillatory area (and the starting
    /// amplitude of the other one).
    pub base_amplitude: f64,
    pub voltage: VoltageMap,
    pub display: DisplayMetric,
    /// Pacing target shown to the participant; deviations are logged only.
    pub target_speed_mm_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            layout: Layout::default(),
            kinematics: KinematicConfig::default(),
            c: DEFAULT_C,
            base_amplitude: 1.0,
            voltage: VoltageMap::default(),
            display: DisplayMetric::default(),
            target_speed_mm_s: 10.4,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.kinematics.validate()?;
        DistortionConfig {
            alpha: 0.0,
            c: self.c,
            rng_seed: 0,
        }
        .validate()?;
        SignalConfig::new(self.base_amplitude, 1.0)?;
        DisplayMetric::new(self.display.ppi)?;
        Ok(())
    }

    pub fn target_speed_px(&self) -> f64 {
        self.target_speed_mm_s * self.display.ppi / 25.4
    }
}

/// Button pressed during an adjustment trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustCommand {
    Increase,
    SlightIncrease,
    SlightDecrease,
    Decrease,
    Finish,
}

impl AdjustCommand {
    pub fn button(self) -> Option<AdjustButton> {
        match self {
            AdjustCommand::Increase => Some(AdjustButton::Increase),
            AdjustCommand::SlightIncrease => Some(AdjustButton::SlightIncrease),
            AdjustCommand::SlightDecrease => Some(AdjustButton::SlightDecrease),
            AdjustCommand::Decrease => Some(AdjustButton::Decrease),
            AdjustCommand::Finish => None,
        }
    }
}

impl From<AdjustButton> for AdjustCommand {
    fn from(b: AdjustButton) -> Self {
        match b {
            AdjustButton::Increase => AdjustCommand::Increase,
            AdjustButton::SlightIncrease => AdjustCommand::SlightIncrease,
            AdjustButton::SlightDecrease => AdjustCommand::SlightDecrease,
            AdjustButton::Decrease => AdjustCommand::Decrease,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialInput {
    Pointer(PointerSample),
    Answer { t: f64, side: Side },
    Adjust { t: f64, command: AdjustCommand },
}

impl TrialInput {
    pub fn t(&self) -> f64 {
        match self {
            TrialInput::Pointer(s) => s.t,
            TrialInput::Answer { t, .. } | TrialInput::Adjust { t, .. } => *t,
        }
    }
}

/// Drive parameters for one area at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaSignal {
    pub area: Side,
    pub amplitude: f64,
    pub lambda: f64,
    pub frequency: f64,
    pub vpp: f64,
    /// Staircase multiplier applied to this area (1 when not adjustable).
    pub multiplier: f64,
    /// Set on the first update after the pen enters the area.
    pub phase_reset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    Pointer {
        x: f64,
        y: f64,
        area: Side,
        speed: f64,
        render: DistortedPosition,
        signal: AreaSignal,
    },
    /// Sample outside both areas; kept for the record but otherwise ignored.
    Ignored { x: f64, y: f64 },
    Answer { side: Side },
    Adjust {
        command: AdjustCommand,
        s: f64,
        multiplier: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TrialEvent {
    /// The input that produced this event.
    pub fn input(&self) -> TrialInput {
        match &self.kind {
            EventKind::Pointer { x, y, .. } | EventKind::Ignored { x, y } => {
                TrialInput::Pointer(PointerSample::new(self.t, *x, *y))
            }
            EventKind::Answer { side } => TrialInput::Answer { t: self.t, side: *side },
            EventKind::Adjust { command, .. } => TrialInput::Adjust {
                t: self.t,
                command: *command,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    Selected {
        side: Side,
    },
    Adjusted {
        final_multiplier: f64,
        final_value: f64,
        /// Non-oscillatory over oscillatory peak-to-peak voltage.
        final_vpp_ratio: f64,
        steps: u32,
    },
}

/// A completed trial with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub spec: TrialSpec,
    pub seed: u64,
    pub events: Vec<TrialEvent>,
    pub response: Response,
}

impl TrialRecord {
    pub fn chose_oscillatory(&self) -> Option<bool> {
        match self.response {
            Response::Selected { side } => Some(side == self.spec.oscillatory_side),
            Response::Adjusted { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedTrial {
    pub index: usize,
    pub response: Response,
}

/// What a single input produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutput {
    pub render: Option<DistortedPosition>,
    pub signal: Option<AreaSignal>,
    pub trial_complete: Option<CompletedTrial>,
    /// The input fell outside both areas.
    pub ignored: bool,
}

/// Progress snapshot of the running trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStatus {
    pub index: usize,
    pub total: usize,
    pub spec: TrialSpec,
    pub traversed_left: bool,
    pub traversed_right: bool,
    pub multiplier: Option<f64>,
    pub target_speed_px: f64,
}

/// One running trial.
#[derive(Debug, Clone)]
pub struct TrialRun {
    index: usize,
    spec: TrialSpec,
    seed: u64,
    rng: OffsetRng,
    kinematics: KinematicState,
    current_area: Option<Side>,
    spans: [Option<(f64, f64)>; 2],
    staircase: Option<StaircaseState>,
    events: Vec<TrialEvent>,
    steps: u32,
    last_pointer_t: Option<f64>,
    last_t: Option<f64>,
}

fn slot(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

impl TrialRun {
    pub fn new(index: usize, spec: TrialSpec, seed: u64, config: &SessionConfig) -> Result<Self> {
        spec.validate()?;
        let staircase = match spec.study {
            Study::Comparison => None,
            Study::AdjustAmplitude => Some(StaircaseState::new(config.base_amplitude)?),
            Study::AdjustWavelength => Some(StaircaseState::new(spec.lambda)?),
        };
        Ok(Self {
            index,
            spec,
            seed,
            rng: OffsetRng::seed_from(seed),
            kinematics: KinematicState::new(config.kinematics),
            current_area: None,
            spans: [None, None],
            staircase,
            events: Vec::new(),
            steps: 0,
            last_pointer_t: None,
            last_t: None,
        })
    }

    pub fn spec(&self) -> &TrialSpec {
        &self.spec
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn events(&self) -> &[TrialEvent] {
        &self.events
    }

    pub fn staircase(&self) -> Option<&StaircaseState> {
        self.staircase.as_ref()
    }

    pub fn traversed(&self, side: Side, layout: &Layout) -> bool {
        let need = layout.traverse_fraction * layout.area(side).width;
        self.spans[slot(side)].is_some_and(|(lo, hi)| hi - lo >= need)
    }

    fn nonoscillatory(&self) -> Side {
        self.spec.oscillatory_side.other()
    }

    /// Signal parameters the given area plays at `speed`.
    pub fn area_signal(&self, area: Side, speed: f64, config: &SessionConfig) -> AreaSignal {
        let mut amplitude = config.base_amplitude;
        let mut lambda = self.spec.lambda;
        let mut multiplier = 1.0;
        if let Some(st) = &self.staircase {
            if area == self.nonoscillatory() {
                multiplier = st.multiplier();
                match self.spec.study {
                    Study::AdjustAmplitude => amplitude = st.value(),
                    Study::AdjustWavelength => lambda = st.value(),
                    Study::Comparison => {}
                }
            }
        }
        AreaSignal {
            area,
            amplitude,
            lambda,
            frequency: speed * lambda / 2.0,
            vpp: amplitude * config.voltage.vpp_at_unit_amplitude,
            multiplier,
            phase_reset: false,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::domain("event time is not finite"));
        }
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::Ordering { last, next: t });
            }
        }
        Ok(())
    }

    /// Feed one input. On error the trial is left exactly as it was.
    pub fn step(&mut self, input: TrialInput, config: &SessionConfig) -> Result<(StepOutput, Option<Response>)> {
        self.check_time(input.t())?;
        match input {
            TrialInput::Pointer(sample) => self.pointer(sample, config).map(|o| (o, None)),
            TrialInput::Answer { t, side } => {
                if self.spec.study != Study::Comparison {
                    return Err(Error::protocol("answer is only accepted in comparison trials"));
                }
                if !(self.traversed(Side::Left, &config.layout) && self.traversed(Side::Right, &config.layout)) {
                    return Err(Error::protocol("answer before both areas were traversed"));
                }
                self.push(t, EventKind::Answer { side });
                Ok((StepOutput::default(), Some(Response::Selected { side })))
            }
            TrialInput::Adjust { t, command } => {
                let Some(st) = self.staircase else {
                    return Err(Error::protocol("adjust is only accepted in adjustment trials"));
                };
                let next = match command.button() {
                    Some(b) => st.apply(b),
                    None => st,
                };
                self.staircase = Some(next);
                self.push(
                    t,
                    EventKind::Adjust {
                        command,
                        s: next.s,
                        multiplier: next.multiplier(),
                    },
                );
                if command == AdjustCommand::Finish {
                    let final_vpp_ratio = match self.spec.study {
                        Study::AdjustAmplitude => next.multiplier(),
                        _ => 1.0,
                    };
                    return Ok((
                        StepOutput::default(),
                        Some(Response::Adjusted {
                            final_multiplier: next.multiplier(),
                            final_value: next.value(),
                            final_vpp_ratio,
                            steps: self.steps,
                        }),
                    ));
                }
                self.steps += 1;
                let area = self.nonoscillatory();
                let speed = if self.current_area == Some(area) {
                    self.kinematics.speed_at(t)
                } else {
                    0.0
                };
                Ok((
                    StepOutput {
                        signal: Some(self.area_signal(area, speed, config)),
                        ..StepOutput::default()
                    },
                    None,
                ))
            }
        }
    }

    fn pointer(&mut self, sample: PointerSample, config: &SessionConfig) -> Result<StepOutput> {
        if !(sample.x.is_finite() && sample.y.is_finite()) {
            return Err(Error::domain("pointer sample has non-finite fields"));
        }
        if let Some(last) = self.last_pointer_t {
            if sample.t <= last {
                return Err(Error::Ordering { last, next: sample.t });
            }
        }
        let Some(area) = config.layout.area_at(sample.x, sample.y) else {
            self.last_pointer_t = Some(sample.t);
            self.push(sample.t, EventKind::Ignored { x: sample.x, y: sample.y });
            return Ok(StepOutput {
                ignored: true,
                ..StepOutput::default()
            });
        };
        let entered = self.current_area != Some(area);
        if entered {
            self.kinematics.reset();
            self.current_area = Some(area);
        }
        let speed = self.kinematics.ingest(sample)?;
        let dcfg = DistortionConfig {
            alpha: self.spec.alpha_for(area),
            c: config.c,
            rng_seed: self.seed,
        };
        let render = distortion::distort(&sample, speed, &dcfg, &mut self.rng)?;
        self.last_pointer_t = Some(sample.t);
        let mut signal = self.area_signal(area, speed, config);
        signal.phase_reset = entered;
        let span = &mut self.spans[slot(area)];
        *span = Some(match *span {
            Some((lo, hi)) => (lo.min(sample.x), hi.max(sample.x)),
            None => (sample.x, sample.x),
        });
        self.push(
            sample.t,
            EventKind::Pointer {
                x: sample.x,
                y: sample.y,
                area,
                speed,
                render,
                signal,
            },
        );
        Ok(StepOutput {
            render: Some(render),
            signal: Some(signal),
            ..StepOutput::default()
        })
    }

    fn push(&mut self, t: f64, kind: EventKind) {
        self.last_t = Some(t);
        self.events.push(TrialEvent { t, kind });
    }

    pub fn into_record(self, response: Response) -> TrialRecord {
        TrialRecord {
            index: self.index,
            spec: self.spec,
            seed: self.seed,
            events: self.events,
            response,
        }
    }
}

/// Re-run a recorded trial from its inputs and seed.
pub fn replay_trial(record: &TrialRecord, config: &SessionConfig) -> Result<TrialRecord> {
    let mut run = TrialRun::new(record.index, record.spec, record.seed, config)?;
    for event in &record.events {
        if let (_, Some(response)) = run.step(event.input(), config)? {
            return Ok(run.into_record(response));
        }
    }
    Err(Error::protocol("recorded events never complete the trial"))
}

/// One participant working through a schedule.
#[derive(Debug, Clone)]
pub struct Session {
    participant_id: String,
    seed: u64,
    schedule: Vec<TrialSpec>,
    cursor: usize,
    config: SessionConfig,
    active: Option<TrialRun>,
    records: Vec<TrialRecord>,
}

impl Session {
    /// `seed` is the participant-level seed; trial seeds are split from it.
    pub fn new(participant_id: impl Into<String>, schedule: Vec<TrialSpec>, seed: u64, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        for spec in &schedule {
            spec.validate()?;
        }
        let mut session = Self {
            participant_id: participant_id.into(),
            seed,
            schedule,
            cursor: 0,
            config,
            active: None,
            records: Vec::new(),
        };
        session.start_trial()?;
        Ok(session)
    }

    fn start_trial(&mut self) -> Result<()> {
        self.active = match self.schedule.get(self.cursor) {
            Some(spec) => Some(TrialRun::new(
                self.cursor,
                *spec,
                seeding::trial_seed(self.seed, self.cursor),
                &self.config,
            )?),
            None => None,
        };
        Ok(())
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn schedule(&self) -> &[TrialSpec] {
        &self.schedule
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TrialRecord> {
        self.records
    }

    pub fn is_finished(&self) -> bool {
        self.active.is_none()
    }

    pub fn active(&self) -> Option<&TrialRun> {
        self.active.as_ref()
    }

    pub fn status(&self) -> Option<TrialStatus> {
        let run = self.active.as_ref()?;
        Some(TrialStatus {
            index: run.index,
            total: self.schedule.len(),
            spec: run.spec,
            traversed_left: run.traversed(Side::Left, &self.config.layout),
            traversed_right: run.traversed(Side::Right, &self.config.layout),
            multiplier: run.staircase.map(|s| s.multiplier()),
            target_speed_px: self.config.target_speed_px(),
        })
    }

    /// Advance the session by one input.
    pub fn trial_step(&mut self, input: TrialInput) -> Result<StepOutput> {
        let config = self.config;
        let run = self
            .active
            .as_mut()
            .ok_or_else(|| Error::protocol("all scheduled trials are complete"))?;
        let (mut out, response) = run.step(input, &config)?;
        if let Some(response) = response {
            let run = self.active.take().expect("active trial");
            let index = run.index;
            self.records.push(run.into_record(response));
            self.cursor += 1;
            self.start_trial()?;
            out.trial_complete = Some(CompletedTrial { index, response });
        }
        Ok(out)
    }
}
