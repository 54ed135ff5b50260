//! Session server core: the wire protocol and a per-connection state
//! machine. Transports hand each text frame to [`Connection::handle_frame`]
//! and send back the frames it returns.
//!
//! Every inbound frame is appended to the connection's wire log before any
//! reply is produced, and every reply is logged before it is returned, so a
//! log always contains the message that triggered the last reply sent.
//! Feeding a log's inbound frames to a fresh connection reproduces its
//! outbound frames byte for byte (see [`replay_wire_log`]).

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::round_px;
use crate::error::{Error, Result};
use crate::experiment::{
    build_adjustment_schedule, build_schedule, AdjustCommand, AreaSignal, Response, Session, SessionConfig, Side,
    Study, TrialInput, TrialStatus,
};
use crate::kinematics::PointerSample;
use crate::logs::{summary_rows, write_session_jsonl, write_summary_file, SessionLog};
use crate::seeding;
use crate::simulate::StudySelector;

/// Frequency changes smaller than this do not trigger a `signal_update`.
pub const SIGNAL_FREQUENCY_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    // client -> server
    SessionCreate {
        participant_id: String,
        study: StudySelector,
        /// Position in the participant roster; decides which adjustment
        /// experiment runs first.
        #[serde(default)]
        participant_index: usize,
        /// Overrides the server's seed policy.
        #[serde(default)]
        seed: Option<u64>,
    },
    PointerSample {
        t: f64,
        x: f64,
        y: f64,
    },
    Answer {
        t: f64,
        side: Side,
    },
    /// `finish` is an adjust command too.
    Adjust {
        t: f64,
        command: AdjustCommand,
    },

    // server -> client
    SessionCreated {
        session_id: String,
        participant_id: String,
        seed: u64,
        trials: usize,
    },
    TrialState {
        completed: usize,
        total: usize,
        /// `None` once every trial is done.
        status: Option<TrialStatus>,
    },
    RenderUpdate {
        t: f64,
        x_vis: i64,
        y_vis: i64,
        dx: f64,
        dy: f64,
        /// `None` for samples outside both areas.
        area: Option<Side>,
    },
    SignalUpdate(AreaSignal),
    TrialComplete {
        index: usize,
        response: Response,
    },
    Error {
        code: ErrorCode,
        message: String,
        retryable: bool,
    },
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::SessionCreate { .. } => "session_create",
            Payload::PointerSample { .. } => "pointer_sample",
            Payload::Answer { .. } => "answer",
            Payload::Adjust { .. } => "adjust",
            Payload::SessionCreated { .. } => "session_created",
            Payload::TrialState { .. } => "trial_state",
            Payload::RenderUpdate { .. } => "render_update",
            Payload::SignalUpdate(_) => "signal_update",
            Payload::TrialComplete { .. } => "trial_complete",
            Payload::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    Sequence,
    Protocol,
    Ordering,
    Domain,
    Config,
    Storage,
}

impl ErrorCode {
    fn of(err: &Error) -> Self {
        match err {
            Error::Ordering { .. } => ErrorCode::Ordering,
            Error::Domain(_) | Error::Synthesis(_) => ErrorCode::Domain,
            Error::Config(_) => ErrorCode::Config,
            Error::Protocol(_) => ErrorCode::Protocol,
            Error::Parse(_) => ErrorCode::Malformed,
            Error::Io { .. } => ErrorCode::Storage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<u64>,
    #[serde(flatten)]
    pub payload: Payload,
}

impl WireMessage {
    pub fn to_frame(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }

    pub fn from_frame(frame: &str) -> Result<Self> {
        serde_json::from_str(frame).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

/// One line of the wire log. Frames are stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireLogEntry {
    pub dir: Direction,
    pub frame: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub session: SessionConfig,
    /// Seed for sessions whose create message carries none; each participant
    /// gets `participant_seed(base_seed, participant_id)`.
    pub base_seed: u64,
    /// Where wire logs and exports go. `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
}

struct Live {
    id: String,
    session: Session,
    last_signal: Option<AreaSignal>,
}

/// Protocol state for one client connection. Holds at most one session.
pub struct Connection {
    config: ServiceConfig,
    live: Option<Live>,
    last_in_seq: Option<u64>,
    out_seq: u64,
    log: Vec<WireLogEntry>,
    /// Index of the first log entry not yet on disk.
    flushed: usize,
    log_file: Option<File>,
}

impl Connection {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            live: None,
            last_in_seq: None,
            out_seq: 0,
            log: Vec::new(),
            flushed: 0,
            log_file: None,
        }
    }

    pub fn session_id(&self) -> Option<&str> {
        self.live.as_ref().map(|l| l.id.as_str())
    }

    pub fn session(&self) -> Option<&Session> {
        self.live.as_ref().map(|l| &l.session)
    }

    pub fn wire_log(&self) -> &[WireLogEntry] {
        &self.log
    }

    fn session_dir(&self) -> Option<PathBuf> {
        Some(self.config.data_dir.as_ref()?.join(&self.live.as_ref()?.id))
    }

    fn append(&mut self, dir: Direction, frame: String) -> Result<()> {
        self.log.push(WireLogEntry { dir, frame });
        self.flush_log()
    }

    fn flush_log(&mut self) -> Result<()> {
        let Some(dir) = self.session_dir() else {
            return Ok(());
        };
        if self.log_file.is_none() {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join("wire.jsonl");
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            self.log_file = Some(file);
        }
        let file = self.log_file.as_mut().expect("log file open");
        let mut buf = String::new();
        for entry in &self.log[self.flushed..] {
            buf.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(dir.join("wire.jsonl"), e))?;
        self.flushed = self.log.len();
        Ok(())
    }

    fn reply(&mut self, reply_to: Option<u64>, payload: Payload) -> WireMessage {
        self.out_seq += 1;
        WireMessage {
            seq: self.out_seq,
            reply_to,
            payload,
        }
    }

    fn error(&mut self, reply_to: Option<u64>, err: &Error) -> WireMessage {
        self.reply(
            reply_to,
            Payload::Error {
                code: ErrorCode::of(err),
                message: err.to_string(),
                retryable: err.is_retryable(),
            },
        )
    }

    /// Process one inbound frame and return the outbound frames.
    pub fn handle_frame(&mut self, frame: &str) -> Vec<String> {
        if let Err(e) = self.append(Direction::In, frame.to_string()) {
            // Nothing was processed; the client may resend.
            self.log.truncate(self.flushed);
            let seq = serde_json::from_str::<serde_json::Value>(frame)
                .ok()
                .and_then(|v| v.get("seq")?.as_u64());
            return vec![self.error(seq, &e).to_frame()];
        }
        let replies = self.dispatch(frame);
        let frames: Vec<String> = replies.iter().map(WireMessage::to_frame).collect();
        for f in &frames {
            if let Err(e) = self.append(Direction::Out, f.clone()) {
                // The in-memory log is complete; surface the storage fault.
                let mut all = frames.clone();
                all.push(self.error(None, &e).to_frame());
                return all;
            }
        }
        frames
    }

    /// Typed entry point; equivalent to sending `msg` as a frame.
    pub fn handle_message(&mut self, msg: &WireMessage) -> Vec<WireMessage> {
        self.handle_frame(&msg.to_frame())
            .iter()
            .map(|f| WireMessage::from_frame(f).expect("own frames parse"))
            .collect()
    }

    fn dispatch(&mut self, frame: &str) -> Vec<WireMessage> {
        let msg = match WireMessage::from_frame(frame) {
            Ok(m) => m,
            Err(e) => {
                let seq = serde_json::from_str::<serde_json::Value>(frame)
                    .ok()
                    .and_then(|v| v.get("seq")?.as_u64());
                return vec![self.error(seq, &e)];
            }
        };
        let seq = msg.seq;
        if let Some(last) = self.last_in_seq {
            if seq <= last {
                let err = Error::Protocol(format!("seq {seq} does not follow {last}"));
                let mut reply = self.error(Some(seq), &err);
                if let Payload::Error { code, .. } = &mut reply.payload {
                    *code = ErrorCode::Sequence;
                }
                return vec![reply];
            }
        }
        self.last_in_seq = Some(seq);
        match self.apply(msg.payload, seq) {
            Ok(replies) => replies,
            Err(e) => vec![self.error(Some(seq), &e)],
        }
    }

    fn apply(&mut self, payload: Payload, seq: u64) -> Result<Vec<WireMessage>> {
        let reply_to = Some(seq);
        if let Payload::SessionCreate {
            participant_id,
            study,
            participant_index,
            seed,
        } = payload
        {
            return self.create(participant_id, study, participant_index, seed, seq);
        }
        let Some(live) = self.live.as_mut() else {
            return Err(Error::protocol(format!(
                "{} before session_create",
                payload.type_name()
            )));
        };
        let input = match payload {
            Payload::PointerSample { t, x, y } => TrialInput::Pointer(PointerSample::new(t, x, y)),
            Payload::Answer { t, side } => TrialInput::Answer { t, side },
            Payload::Adjust { t, command } => TrialInput::Adjust { t, command },
            other => {
                return Err(Error::protocol(format!(
                    "{} is a server message",
                    other.type_name()
                )))
            }
        };
        let out = live.session.trial_step(input)?;
        let mut payloads = Vec::new();
        if let TrialInput::Pointer(sample) = input {
            payloads.push(match out.render {
                Some(r) => Payload::RenderUpdate {
                    t: sample.t,
                    x_vis: r.x_vis,
                    y_vis: r.y_vis,
                    dx: r.dx,
                    dy: r.dy,
                    area: out.signal.map(|s| s.area),
                },
                None => Payload::RenderUpdate {
                    t: sample.t,
                    x_vis: round_px(sample.x)?,
                    y_vis: round_px(sample.y)?,
                    dx: 0.0,
                    dy: 0.0,
                    area: None,
                },
            });
            if let Some(sig) = out.signal {
                if signal_changed(live.last_signal.as_ref(), &sig) {
                    live.last_signal = Some(sig);
                    payloads.push(Payload::SignalUpdate(sig));
                }
            }
        } else if let Some(sig) = out.signal {
            // Adjust presses always get the adjusted area's parameters back.
            live.last_signal = Some(sig);
            payloads.push(Payload::SignalUpdate(sig));
        }
        if let Some(done) = out.trial_complete {
            live.last_signal = None;
            payloads.push(Payload::TrialComplete {
                index: done.index,
                response: done.response,
            });
            payloads.push(trial_state(&live.session));
        }
        let finished = live.session.is_finished() && out.trial_complete.is_some();
        let replies = payloads.into_iter().map(|p| self.reply(reply_to, p)).collect();
        if finished && self.config.data_dir.is_some() {
            self.export_logs()?;
        }
        Ok(replies)
    }

    fn create(
        &mut self,
        participant_id: String,
        study: StudySelector,
        participant_index: usize,
        seed: Option<u64>,
        seq: u64,
    ) -> Result<Vec<WireMessage>> {
        if self.live.is_some() {
            return Err(Error::protocol("this connection already has a session"));
        }
        if participant_id.is_empty()
            || !participant_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::domain(format!(
                "participant_id must be non-empty ASCII letters, digits, '-' or '_', got {participant_id:?}"
            )));
        }
        let base = seed.unwrap_or(self.config.base_seed);
        let pseed = seeding::participant_seed(base, &participant_id);
        let schedule = match study {
            StudySelector::Comparison => build_schedule(Study::Comparison, &participant_id, base),
            StudySelector::Adjustment => build_adjustment_schedule(participant_index, &participant_id, base),
        };
        let trials = schedule.len();
        let session = Session::new(participant_id.clone(), schedule, pseed, self.config.session)?;
        let id = format!("{participant_id}-{study}-{pseed:016x}");
        self.live = Some(Live {
            id: id.clone(),
            session,
            last_signal: None,
        });
        // Earlier frames of this connection were buffered; write them now.
        self.flush_log()?;
        let created = self.reply(
            Some(seq),
            Payload::SessionCreated {
                session_id: id,
                participant_id,
                seed: pseed,
                trials,
            },
        );
        let state = trial_state(&self.live.as_ref().expect("just created").session);
        Ok(vec![created, self.reply(Some(seq), state)])
    }

    /// Write the event log and trial summary for the session so far under
    /// `<data_dir>/<session_id>/`.
    pub fn export_logs(&self) -> Result<Vec<PathBuf>> {
        let dir = self
            .session_dir()
            .ok_or_else(|| Error::config("no data directory or no session"))?;
        let live = self.live.as_ref().expect("session_dir implies a session");
        export_session(&dir, &live.session)
    }
}

/// Write `events.jsonl` and `summary.csv` for a session with at least one
/// completed trial.
pub fn export_session(dir: &Path, session: &Session) -> Result<Vec<PathBuf>> {
    if session.records().is_empty() {
        return Err(Error::protocol("session has no completed trials to export"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let events = dir.join("events.jsonl");
    let summary = dir.join("summary.csv");
    let log = SessionLog {
        participant: session.participant_id().to_string(),
        seed: session.seed(),
        config: *session.config(),
        records: session.records().to_vec(),
    };
    write_session_jsonl(&events, &log)?;
    write_summary_file(&summary, &summary_rows(&log.participant, &log.records))?;
    Ok(vec![events, summary])
}

fn trial_state(session: &Session) -> Payload {
    Payload::TrialState {
        completed: session.records().len(),
        total: session.schedule().len(),
        status: session.status(),
    }
}

fn signal_changed(last: Option<&AreaSignal>, next: &AreaSignal) -> bool {
    match last {
        None => true,
        Some(last) => {
            next.phase_reset
                || last.area != next.area
                || (next.frequency - last.frequency).abs() > SIGNAL_FREQUENCY_EPSILON
                || next.multiplier != last.multiplier
                || next.amplitude != last.amplitude
                || next.lambda != last.lambda
        }
    }
}

pub fn read_wire_log(path: impl AsRef<Path>) -> Result<Vec<WireLogEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse(format!("wire log line {}: {e}", i + 1))))
        .collect()
}

/// Feed the inbound frames of `log` to a fresh in-memory connection and
/// return its outbound frames.
pub fn replay_frames(log: &[WireLogEntry], config: &ServiceConfig) -> Vec<String> {
    let mut conn = Connection::new(ServiceConfig {
        data_dir: None,
        ..config.clone()
    });
    log.iter()
        .filter(|e| e.dir == Direction::In)
        .flat_map(|e| conn.handle_frame(&e.frame))
        .collect()
}

/// Check that replaying `log` reproduces its outbound frames exactly.
/// Returns the number of frames compared.
pub fn replay_wire_log(log: &[WireLogEntry], config: &ServiceConfig) -> Result<usize> {
    let expected: Vec<&str> = log
        .iter()
        .filter(|e| e.dir == Direction::Out)
        .map(|e| e.frame.as_str())
        .collect();
    let got = replay_frames(log, config);
    if let Some(i) = (0..expected.len().max(got.len())).find(|&i| expected.get(i).copied() != got.get(i).map(String::as_str)) {
        return Err(Error::Protocol(format!(
            "replay diverges at outbound frame {i}: logged {:?}, replayed {:?}",
            expected.get(i),
            got.get(i)
        )));
    }
    Ok(got.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(seq: u64, payload: Payload) -> WireMessage {
        WireMessage {
            seq,
            reply_to: None,
            payload,
        }
    }

    fn create(study: StudySelector) -> Payload {
        Payload::SessionCreate {
            participant_id: "p01".into(),
            study,
            participant_index: 0,
            seed: Some(7),
        }
    }

    #[test]
    fn frame_shape() {
        let m = msg(3, Payload::PointerSample { t: 0.5, x: 100.0, y: 200.0 });
        assert_eq!(
            m.to_frame(),
            r#"{"seq":3,"type":"pointer_sample","payload":{"t":0.5,"x":100.0,"y":200.0}}"#
        );
        assert_eq!(WireMessage::from_frame(&m.to_frame()).unwrap(), m);
    }

    #[test]
    fn create_then_state() {
        let mut c = Connection::new(ServiceConfig::default());
        let out = c.handle_message(&msg(1, create(StudySelector::Comparison)));
        assert_eq!(out.len(), 2);
        let Payload::SessionCreated { trials, ref session_id, .. } = out[0].payload else {
            panic!("{out:?}")
        };
        assert_eq!(trials, 120);
        assert!(session_id.starts_with("p01-comparison-"));
        assert!(matches!(out[1].payload, Payload::TrialState { completed: 0, total: 120, status: Some(_) }));
        assert_eq!(out[0].reply_to, Some(1));
        assert_eq!((out[0].seq, out[1].seq), (1, 2));
    }

    #[test]
    fn errors_leave_session_intact() {
        let mut c = Connection::new(ServiceConfig::default());
        let out = c.handle_message(&msg(1, Payload::PointerSample { t: 0.0, x: 1.0, y: 1.0 }));
        assert!(matches!(out[0].payload, Payload::Error { code: ErrorCode::Protocol, .. }));
        c.handle_message(&msg(2, create(StudySelector::Comparison)));
        let out = c.handle_frame(r#"{"seq":3,"type":"pointer_sample","payload":{"t":"soon"}}"#);
        assert!(out[0].contains(r#""code":"malformed""#) && out[0].contains(r#""reply_to":3"#));
        let out = c.handle_message(&msg(3, Payload::Adjust { t: 0.0, command: AdjustCommand::Increase }));
        assert!(matches!(out[0].payload, Payload::Error { code: ErrorCode::Protocol, .. }));
        let out = c.handle_message(&msg(3, Payload::Answer { t: 0.0, side: Side::Left }));
        assert!(matches!(out[0].payload, Payload::Error { code: ErrorCode::Sequence, .. }));
        let out = c.handle_frame("not json");
        assert!(out[0].contains(r#""code":"malformed""#));
        assert_eq!(c.session().unwrap().cursor(), 0);
    }

    #[test]
    fn outside_samples_are_acknowledged() {
        let mut c = Connection::new(ServiceConfig::default());
        c.handle_message(&msg(1, create(StudySelector::Comparison)));
        let out = c.handle_message(&msg(2, Payload::PointerSample { t: 0.0, x: 2.4, y: 3.5 }));
        assert_eq!(out.len(), 1);
        assert_eq!(
            out[0].payload,
            Payload::RenderUpdate { t: 0.0, x_vis: 2, y_vis: 4, dx: 0.0, dy: 0.0, area: None }
        );
    }

    #[test]
    fn signal_updates_follow_changes() {
        let a = AreaSignal {
            area: Side::Left,
            amplitude: 1.0,
            lambda: 0.2,
            frequency: 9.0,
            vpp: 4.67,
            multiplier: 1.0,
            phase_reset: false,
        };
        assert!(signal_changed(None, &a));
        assert!(!signal_changed(Some(&a), &AreaSignal { frequency: 9.05, ..a }));
        assert!(signal_changed(Some(&a), &AreaSignal { frequency: 9.2, ..a }));
        assert!(signal_changed(Some(&a), &AreaSignal { multiplier: 1.07, ..a }));
        assert!(signal_changed(Some(&a), &AreaSignal { area: Side::Right, ..a }));
    }

    #[test]
    fn export_needs_a_completed_trial() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Connection::new(ServiceConfig {
            data_dir: Some(dir.path().to_path_buf()),
            ..ServiceConfig::default()
        });
        assert!(c.export_logs().is_err());
        c.handle_message(&msg(1, create(StudySelector::Comparison)));
        assert!(matches!(c.export_logs(), Err(Error::Protocol(_))));
        let id = c.session_id().unwrap().to_string();
        let log = read_wire_log(dir.path().join(&id).join("wire.jsonl")).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log[0].dir, Direction::In);
    }
}
