use super::*;
use std::sync::Mutex;

use async_trait::async_trait;
use telecg_core::signal::{LeadEvent, SynthParams};
use telecg_core::wire::{IngestAck, SessionState};

/// In-memory stand-in for the ingestion server with switchable faults.
#[derive(Default)]
struct Stub {
    state: Mutex<StubState>,
}

#[derive(Default)]
struct StubState {
    sessions: Vec<(String, Vec<SampleBatch>)>,
    /// Every send attempt fails while set.
    down: bool,
    /// Fail this many further sends, then recover.
    fail_next: usize,
    reject_sessions: bool,
    /// Log of (session index, seq) for every accepted new batch.
    accepted: Vec<(usize, u32)>,
    attempts: usize,
}

impl Stub {
    fn down() -> Self {
        let s = Stub::default();
        s.state.lock().unwrap().down = true;
        s
    }
}

#[async_trait]
impl Transport for Stub {
    async fn create_session(&self, req: &CreateSession) -> Result<Session, TransportError> {
        let mut st = self.state.lock().unwrap();
        if st.reject_sessions {
            return Err(TransportError::Rejected {
                status: 404,
                message: "unknown patient".into(),
            });
        }
        let id = format!("s{}", st.sessions.len());
        st.sessions.push((id.clone(), Vec::new()));
        Ok(Session {
            session_id: id,
            device_id: req.device_id.clone(),
            patient_id: req.patient_id.clone(),
            sample_rate_hz: req.sample_rate_hz,
            adc: req.adc,
            state: SessionState::Active,
            created_ts_us: 0,
            last_seq_accepted: -1,
        })
    }

    async fn send_batch(
        &self,
        session_id: &str,
        batch: &SampleBatch,
    ) -> Result<IngestAck, TransportError> {
        let mut st = self.state.lock().unwrap();
        st.attempts += 1;
        if st.down {
            return Err(TransportError::Unavailable("link down".into()));
        }
        if st.fail_next > 0 {
            st.fail_next -= 1;
            return Err(TransportError::Unavailable("flaky".into()));
        }
        let idx = st
            .sessions
            .iter()
            .position(|(id, _)| id == session_id)
            .unwrap();
        let stored = &mut st.sessions[idx].1;
        let next = stored.len() as u32;
        if batch.seq < next {
            return Ok(IngestAck::accepted(next));
        }
        if batch.seq > next {
            return Ok(IngestAck::rejected(next, "gap"));
        }
        stored.push(batch.clone());
        st.accepted.push((idx, batch.seq));
        Ok(IngestAck::accepted(next + 1))
    }
}

fn cfg() -> DeviceConfig {
    let mut c = DeviceConfig::new("dev-1", "stub://");
    c.epoch_us = Some(1_700_000_000_000_000);
    c.drain_timeout = Duration::ZERO;
    c
}

fn synth() -> Source {
    Source::Synth(SynthParams::default())
}

#[tokio::test(start_paused = true)]
async fn healthy_ten_seconds() {
    let stub = Stub::default();
    let r = run_device(&cfg(), &synth(), &stub, 10.0).await.unwrap();
    assert_eq!(
        (r.batches_sent, r.batches_dropped, r.batches_unsent),
        (50, 0, 0)
    );
    assert_eq!(r.samples_sent, 2500);
    let st = stub.state.lock().unwrap();
    let seqs: Vec<u32> = st.sessions[0].1.iter().map(|b| b.seq).collect();
    assert_eq!(seqs, (0..50).collect::<Vec<_>>());
    for (k, b) in st.sessions[0].1.iter().enumerate() {
        assert_eq!(b.start_ts_us, 1_700_000_000_000_000 + k as u64 * 50 * 4000);
    }
}

#[tokio::test(start_paused = true)]
async fn network_down_buffers_then_drops_oldest() {
    let mut c = cfg();
    c.buffer_capacity = 2500;
    let stub = Stub::down();
    let r = run_device(&c, &synth(), &stub, 10.0).await.unwrap();
    assert_eq!(
        (r.batches_sent, r.batches_dropped, r.batches_unsent),
        (0, 0, 50)
    );
    assert!(r.retries > 0);

    let stub = Stub::down();
    let r = run_device(&c, &synth(), &stub, 12.0).await.unwrap();
    assert_eq!(
        (r.batches_sent, r.batches_dropped, r.batches_unsent),
        (0, 10, 50)
    );
}

#[tokio::test(start_paused = true)]
async fn short_run_single_partial_batch() {
    let stub = Stub::default();
    let r = run_device(&cfg(), &synth(), &stub, 0.1).await.unwrap();
    assert_eq!(r.batches_sent, 1);
    assert_eq!(stub.state.lock().unwrap().sessions[0].1[0].codes.len(), 25);
}

#[tokio::test(start_paused = true)]
async fn outage_recovers_in_order_without_loss() {
    let stub = Stub::default();
    stub.state.lock().unwrap().fail_next = 6;
    let r = run_device(&cfg(), &synth(), &stub, 30.0).await.unwrap();
    assert!(r.is_lossless(), "{r:?}");
    assert_eq!(r.retries, 6);
    let st = stub.state.lock().unwrap();
    let seqs: Vec<u32> = st.accepted.iter().map(|&(_, s)| s).collect();
    assert_eq!(seqs, (0..150).collect::<Vec<_>>());
    assert_eq!(st.sessions.len(), 1);
}

#[tokio::test(start_paused = true)]
async fn outage_until_end_drains_in_real_time() {
    let mut c = cfg();
    c.drain_timeout = Duration::from_secs(120);
    let stub = std::sync::Arc::new(Stub::down());
    let bring_up = {
        let stub = stub.clone();
        tokio::spawn(async move {
            tokio::time::sleep(Duration::from_secs(20)).await;
            stub.state.lock().unwrap().down = false;
        })
    };
    let r = run_device(&c, &synth(), &stub, 10.0).await.unwrap();
    bring_up.await.unwrap();
    assert!(r.is_lossless(), "{r:?}");
    assert_eq!(r.batches_sent, 50);
}

#[tokio::test(start_paused = true)]
async fn rejected_session_aborts() {
    let stub = Stub::default();
    stub.state.lock().unwrap().reject_sessions = true;
    let err = run_device(&cfg(), &synth(), &stub, 1.0).await.unwrap_err();
    assert!(matches!(err, DeviceError::SessionRejected(_)));
}

#[tokio::test(start_paused = true)]
async fn invalid_config_rejected_before_connecting() {
    let stub = Stub::default();
    let mut c = cfg();
    c.device_id = "bad id".into();
    assert!(matches!(
        run_device(&c, &synth(), &stub, 1.0).await,
        Err(DeviceError::Invalid(_))
    ));
    assert!(run_device(&cfg(), &synth(), &stub, 0.0).await.is_err());
    assert!(stub.state.lock().unwrap().sessions.is_empty());
}

#[tokio::test(start_paused = true)]
async fn overflow_gap_rolls_over_to_new_session() {
    let mut c = cfg();
    c.buffer_capacity = 500;
    let stub = Stub::default();
    // fail long enough (in virtual time) for the 10-batch buffer to overflow
    stub.state.lock().unwrap().fail_next = 8;
    let r = run_device(&c, &synth(), &stub, 60.0).await.unwrap();
    assert!(r.batches_dropped > 0);
    let st = stub.state.lock().unwrap();
    assert_eq!(r.sessions.len(), 2, "{r:?}");
    let (_, second) = &st.sessions[1];
    assert_eq!(second[0].seq, 0);
    assert!(second.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    let stored: u64 = st.sessions.iter().map(|(_, b)| b.len() as u64).sum();
    assert_eq!(stored + r.batches_dropped, 300);
}

#[tokio::test(start_paused = true)]
async fn recorded_source_preserves_offsets() {
    let mut p = SynthParams::default();
    p.lead_events
        .push(LeadEvent::new(0.5, 0.7, telecg_core::signal::LeadWhich::Plus).unwrap());
    let analog = telecg_core::signal::generate_analog(&p, 250.0, 2.0).unwrap();
    let src = Source::from_analog(&analog, &telecg_core::signal::AdcConfig::default(), 250, 50);
    let stub = Stub::default();
    let r = run_device(&cfg(), &src, &stub, 0.0).await.unwrap();
    assert_eq!(r.batches_sent, 10);
    let st = stub.state.lock().unwrap();
    let flags: Vec<u8> = st.sessions[0]
        .1
        .iter()
        .flat_map(|b| b.flags.clone())
        .collect();
    assert_eq!(flags.iter().filter(|&&f| f == 1).count(), 50);
    assert_eq!(
        st.sessions[0].1[3].start_ts_us,
        1_700_000_000_000_000 + 600_000
    );
}

#[tokio::test(start_paused = true)]
async fn fleet_runs_independent_devices() {
    let devices: Vec<_> = (0..5)
        .map(|i| {
            let mut c = cfg();
            c.device_id = format!("dev-{i}");
            (c, synth())
        })
        .collect();
    let report = run_fleet(devices, |_| Stub::default(), 4.0).await;
    assert!(report.is_lossless());
    assert_eq!(report.devices.len(), 5);
    assert_eq!(report.batches_sent, 5 * 20);
    assert_eq!(report.devices[3].device_id, "dev-3");
}
