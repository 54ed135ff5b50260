//! Trial logs: a JSONL event stream (`{t, type, payload}` per line) and a
//! one-row-per-trial CSV summary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{EventKind, Response, SessionConfig, Side, Study, TrialEvent, TrialRecord, TrialSpec};

/// Lines that frame the trial events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Marker {
    SessionStart {
        participant: String,
        seed: u64,
        config: SessionConfig,
    },
    TrialStart {
        index: usize,
        spec: TrialSpec,
        seed: u64,
    },
    TrialComplete {
        index: usize,
        response: Response,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogBody {
    Marker(Marker),
    Event(EventKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub t: f64,
    #[serde(flatten)]
    pub body: LogBody,
}

impl LogLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log lines serialize")
    }
}

/// A participant's session as it appears on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub participant: String,
    pub seed: u64,
    pub config: SessionConfig,
    pub records: Vec<TrialRecord>,
}

/// Log lines for a finished (or partially finished) session.
pub fn session_lines(participant: &str, seed: u64, config: &SessionConfig, records: &[TrialRecord]) -> Vec<LogLine> {
    let start_t = records
        .first()
        .and_then(|r| r.events.first())
        .map_or(0.0, |e| e.t);
    let mut lines = vec![LogLine {
        t: start_t,
        body: LogBody::Marker(Marker::SessionStart {
            participant: participant.to_string(),
            seed,
            config: *config,
        }),
    }];
    for record in records {
        let first = record.events.first().map_or(start_t, |e| e.t);
        let last = record.events.last().map_or(first, |e| e.t);
        lines.push(LogLine {
            t: first,
            body: LogBody::Marker(Marker::TrialStart {
                index: record.index,
                spec: record.spec,
                seed: record.seed,
            }),
        });
        lines.extend(record.events.iter().map(|e| LogLine {
            t: e.t,
            body: LogBody::Event(e.kind.clone()),
        }));
        lines.push(LogLine {
            t: last,
            body: LogBody::Marker(Marker::TrialComplete {
                index: record.index,
                response: record.response,
            }),
        });
    }
    lines
}

pub fn write_jsonl(out: &mut impl Write, lines: &[LogLine]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut *out, line).map_err(|e| Error::Parse(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl Read) -> Result<Vec<LogLine>> {
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        lines.push(parsed);
    }
    Ok(lines)
}

/// Rebuild the session from its log lines.
pub fn parse_session(lines: &[LogLine]) -> Result<SessionLog> {
    let mut iter = lines.iter();
    let Some(LogLine {
        body: LogBody::Marker(Marker::SessionStart { participant, seed, config }),
        ..
    }) = iter.next()
    else {
        return Err(Error::Parse("log does not begin with session_start".into()));
    };
    let mut records = Vec::new();
    let mut open: Option<(usize, TrialSpec, u64, Vec<TrialEvent>)> = None;
    for line in iter {
        match &line.body {
            LogBody::Marker(Marker::TrialStart { index, spec, seed }) => {
                if open.is_some() {
                    return Err(Error::Parse(format!("trial {index} starts inside another trial")));
                }
                open = Some((*index, *spec, *seed, Vec::new()));
            }
            LogBody::Event(kind) => {
                let Some((_, _, _, events)) = open.as_mut() else {
                    return Err(Error::Parse("event outside any trial".into()));
                };
                events.push(TrialEvent { t: line.t, kind: kind.clone() });
            }
            LogBody::Marker(Marker::TrialComplete { index, response }) => {
                let Some((start, spec, seed, events)) = open.take() else {
                    return Err(Error::Parse(format!("trial {index} completes without starting")));
                };
                if start != *index {
                    return Err(Error::Parse(format!("trial {start} completed as {index}")));
                }
                records.push(TrialRecord {
                    index: start,
                    spec,
                    seed,
                    events,
                    response: *response,
                });
            }
            LogBody::Marker(Marker::SessionStart { .. }) => {
                return Err(Error::Parse("second session_start in one log".into()));
            }
        }
    }
    Ok(SessionLog {
        participant: participant.clone(),
        seed: *seed,
        config: *config,
        records,
    })
}

/// Create a file, making missing parent directories first.
fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_session_jsonl(path: impl AsRef<Path>, log: &SessionLog) -> Result<()> {
    let path = path.as_ref();
    let file = create(path)?;
    let mut out = BufWriter::new(file);
    write_jsonl(&mut out, &session_lines(&log.participant, log.seed, &log.config, &log.records))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_session_jsonl(path: impl AsRef<Path>) -> Result<SessionLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_session(&read_jsonl(file)?)
}

/// One trial in the CSV summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub participant: String,
    pub study: Study,
    pub trial: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub oscillatory_side: Side,
    /// Chosen side for comparisons, `adjusted` for adjustment trials.
    pub response: String,
    pub chose_oscillatory: Option<bool>,
    pub final_multiplier: Option<f64>,
    pub final_vpp_ratio: Option<f64>,
    pub steps: Option<u32>,
    pub seed: u64,
}

impl SummaryRow {
    pub fn from_record(participant: &str, record: &TrialRecord) -> Self {
        let (response, final_multiplier, final_vpp_ratio, steps) = match record.response {
            Response::Selected { side } => (side.as_str().to_string(), None, None, None),
            Response::Adjusted {
                final_multiplier,
                final_vpp_ratio,
                steps,
                ..
            } => ("adjusted".to_string(), Some(final_multiplier), Some(final_vpp_ratio), Some(steps)),
        };
        Self {
            participant: participant.to_string(),
            study: record.spec.study,
            trial: record.index,
            alpha: record.spec.alpha_osc,
            lambda: record.spec.lambda,
            oscillatory_side: record.spec.oscillatory_side,
            response,
            chose_oscillatory: record.chose_oscillatory(),
            final_multiplier,
            final_vpp_ratio,
            steps,
            seed: record.seed,
        }
    }
}

pub fn summary_rows(participant: &str, records: &[TrialRecord]) -> Vec<SummaryRow> {
    records.iter().map(|r| SummaryRow::from_record(participant, r)).collect()
}

pub fn write_summary_csv(out: impl Write, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_summary_csv(input: impl Read) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse(format!("summary row {}: {e}", i + 1))))
        .collect()
}

pub fn write_summary_file(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let file = create(path)?;
    write_summary_csv(BufWriter::new(file), rows).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_summary_file(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_summary_csv(file)
}
