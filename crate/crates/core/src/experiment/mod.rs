//! Trial schedules, the adjustment staircase, and the trial state machine
//! for the roughness comparison and the two adjustment experiments.

mod schedule;
mod staircase;
mod trial;

pub use schedule::{
    build_adjustment_schedule, build_schedule, Side, Study, TrialSpec, ADJUST_ALPHAS, ADJUST_LAMBDA,
    ADJUST_REPS, COMPARISON_ALPHAS, COMPARISON_LAMBDAS, COMPARISON_REPS,
};
pub use staircase::{AdjustButton, StaircaseState, MAX_MULTIPLIER, MIN_MULTIPLIER};
pub use trial::{
    replay_trial, AdjustCommand, AreaSignal, CompletedTrial, EventKind, Layout, Rect, Response, Session,
    SessionConfig, StepOutput, TrialEvent, TrialInput, TrialRecord, TrialRun, TrialStatus,
};
