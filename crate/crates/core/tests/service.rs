use pseudotex::analysis::analyze_comparison;
use pseudotex::experiment::{AdjustCommand, Side, Study};
use pseudotex::logs::read_summary_file;
use pseudotex::service::{
    read_wire_log, replay_frames, replay_wire_log, Connection, Direction, ErrorCode, Payload, ServiceConfig,
    WireMessage,
};
use pseudotex::simulate::StudySelector;

/// Minimal scripted client: sweeps both areas, then answers or adjusts.
struct Client {
    conn: Connection,
    seq: u64,
    t: f64,
    received: Vec<WireMessage>,
}

impl Client {
    fn new(config: ServiceConfig) -> Self {
        Self {
            conn: Connection::new(config),
            seq: 0,
            t: 0.0,
            received: Vec::new(),
        }
    }

    fn send(&mut self, payload: Payload) -> Vec<WireMessage> {
        self.seq += 1;
        let out = self.conn.handle_message(&WireMessage {
            seq: self.seq,
            reply_to: None,
            payload,
        });
        self.received.extend(out.iter().cloned());
        out
    }

    fn sweep(&mut self, side: Side) -> Vec<WireMessage> {
        let rect = *self.conn.session().unwrap().config().layout.area(side);
        let mut out = Vec::new();
        let mut x = rect.x + 1.0;
        while x < rect.x + rect.width - 1.0 {
            out.extend(self.send(Payload::PointerSample {
                t: self.t,
                x,
                y: rect.center_y(),
            }));
            self.t += 1.0 / 30.0;
            x += 3.0;
        }
        out
    }

    fn status(&self) -> Option<pseudotex::experiment::TrialStatus> {
        self.conn.session()?.status()
    }
}

fn run_comparison(config: ServiceConfig, trials: usize) -> Client {
    let mut c = Client::new(config);
    c.send(Payload::SessionCreate {
        participant_id: "p07".into(),
        study: StudySelector::Comparison,
        participant_index: 6,
        seed: Some(11),
    });
    for _ in 0..trials {
        c.sweep(Side::Left);
        c.sweep(Side::Right);
        let out = c.send(Payload::Answer { t: c.t, side: Side::Left });
        assert!(matches!(out[0].payload, Payload::TrialComplete { .. }), "{out:?}");
        c.t += 0.5;
    }
    c
}

#[test]
fn render_offsets_respect_the_bound() {
    let mut c = Client::new(ServiceConfig::default());
    c.send(Payload::SessionCreate {
        participant_id: "p01".into(),
        study: StudySelector::Comparison,
        participant_index: 0,
        seed: Some(3),
    });
    let mut checked = 0;
    while checked < 5 {
        let spec = c.status().unwrap().spec;
        let osc = spec.oscillatory_side;
        let replies = c.sweep(osc);
        let bound = 0.01 * spec.alpha_osc * 90.0 + 1e-9;
        for m in &replies {
            if let Payload::RenderUpdate { dx, dy, area, .. } = m.payload {
                assert_eq!(area, Some(osc));
                assert!(dx.abs() <= bound && dy.abs() <= bound, "{dx} {dy} vs {bound}");
            }
        }
        if spec.alpha_osc == 2.0 {
            checked += 1;
        }
        c.sweep(osc.other());
        c.send(Payload::Answer { t: c.t, side: osc });
        c.t += 0.5;
    }
}

#[test]
fn signal_updates_are_sparse_and_carry_phase_resets() {
    let mut c = Client::new(ServiceConfig::default());
    c.send(Payload::SessionCreate {
        participant_id: "p01".into(),
        study: StudySelector::Comparison,
        participant_index: 0,
        seed: Some(3),
    });
    let replies = c.sweep(Side::Left);
    let renders = replies.iter().filter(|m| matches!(m.payload, Payload::RenderUpdate { .. })).count();
    let signals: Vec<_> = replies
        .iter()
        .filter_map(|m| match m.payload {
            Payload::SignalUpdate(s) => Some(s),
            _ => None,
        })
        .collect();
    assert!(renders > 70);
    assert!(signals.len() < renders / 4, "{} signal updates", signals.len());
    assert!(signals[0].phase_reset);
    let last = signals.last().unwrap();
    assert!((last.frequency - 90.0 * last.lambda / 2.0).abs() < 0.1);
}

#[test]
fn adjust_on_comparison_is_a_phase_error() {
    let mut c = Client::new(ServiceConfig::default());
    c.send(Payload::SessionCreate {
        participant_id: "p01".into(),
        study: StudySelector::Comparison,
        participant_index: 0,
        seed: None,
    });
    let out = c.send(Payload::Adjust {
        t: 0.0,
        command: AdjustCommand::Increase,
    });
    assert!(matches!(out[0].payload, Payload::Error { code: ErrorCode::Protocol, .. }));
    assert_eq!(out[0].reply_to, Some(2));
}

#[test]
fn adjustment_session_over_the_wire() {
    let mut c = Client::new(ServiceConfig::default());
    c.send(Payload::SessionCreate {
        participant_id: "p02".into(),
        study: StudySelector::Adjustment,
        participant_index: 1,
        seed: Some(5),
    });
    assert_eq!(c.status().unwrap().spec.study, Study::AdjustWavelength);
    c.sweep(Side::Left);
    c.sweep(Side::Right);
    let out = c.send(Payload::Adjust {
        t: c.t,
        command: AdjustCommand::SlightIncrease,
    });
    let Payload::SignalUpdate(sig) = out[0].payload else { panic!("{out:?}") };
    assert_eq!(sig.area, Side::Right);
    assert!((sig.multiplier - 10f64.powf(0.03)).abs() < 1e-12);
    assert!((sig.lambda - 0.2 * 10f64.powf(0.03)).abs() < 1e-12);
    let out = c.send(Payload::Adjust {
        t: c.t + 1.0,
        command: AdjustCommand::Finish,
    });
    let Payload::TrialComplete { index: 0, response } = out[0].payload else { panic!("{out:?}") };
    assert!(matches!(response, pseudotex::experiment::Response::Adjusted { steps: 1, .. }));
    assert!(matches!(out[1].payload, Payload::TrialState { completed: 1, total: 60, .. }));
}

#[test]
fn wire_log_replays_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        data_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let mut c = run_comparison(config.clone(), 3);
    // A few faults mixed in.
    c.conn.handle_frame("{broken");
    c.send(Payload::Answer { t: c.t, side: Side::Right });
    let id = c.conn.session_id().unwrap().to_string();
    let log = read_wire_log(dir.path().join(&id).join("wire.jsonl")).unwrap();
    assert_eq!(log, c.conn.wire_log());
    assert_eq!(log[0].dir, Direction::In);
    let n = replay_wire_log(&log, &config).unwrap();
    assert!(n > 500);
    // Tampering with any reply is detected.
    let mut tampered = log.clone();
    let i = tampered.iter().position(|e| e.dir == Direction::Out && e.frame.contains("render_update")).unwrap();
    tampered[i].frame = tampered[i].frame.replace("render_update", "render_updatex");
    assert!(replay_wire_log(&tampered, &config).is_err());
    assert_eq!(replay_frames(&log, &config), replay_frames(&log, &config));
}

#[test]
fn finished_session_exports_logs() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        data_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let c = run_comparison(config, 120);
    assert!(c.conn.session().unwrap().is_finished());
    let last = c.received.last().unwrap();
    assert!(matches!(last.payload, Payload::TrialState { completed: 120, total: 120, status: None }));
    let session_dir = dir.path().join(c.conn.session_id().unwrap());
    let rows = read_summary_file(session_dir.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 120);
    let in_memory = c
        .conn
        .session()
        .unwrap()
        .records()
        .iter()
        .filter(|r| r.chose_oscillatory() == Some(true))
        .count() as u32;
    let analysis = analyze_comparison(&rows).unwrap();
    assert_eq!(analysis.conditions.iter().map(|c| c.oscillatory).sum::<u32>(), in_memory);
    assert!(session_dir.join("events.jsonl").exists());
    // Reply sequence numbers are strictly increasing.
    assert!(c.received.windows(2).all(|w| w[0].seq < w[1].seq));
}
