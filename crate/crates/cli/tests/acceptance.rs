//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line each and exits nonzero if any failed.

mod common;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures_util::StreamExt;
use telecg_core::analytics::detect_beats;
use telecg_core::signal::{
    dequantize, generate_analog, quantize, AdcConfig, NoiseConfig, SynthParams,
};
use telecg_core::store::{decode_header, encode_header, scan_file, segment_path, SegmentMeta};
use telecg_core::wire::{AlertKind, CreateSession, IngestAck, SampleBatch, Session, StoredSample};
use telecg_device::{run_device, ApiClient, DeviceConfig, Source, Transport, TransportError};

use common::{parse_export, stdout_json, telecg, ServerProc};

type Outcome = Result<String, String>;
type Criterion = (
    &'static str,
    std::pin::Pin<Box<dyn std::future::Future<Output = Outcome>>>,
);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        {
            let ok: bool = $cond;
            if !ok {
                return Err(format!($($msg)+));
            }
        }
    };
}

const EPOCH: u64 = 1_700_000_000_000_000;

fn session_of(report: &serde_json::Value) -> String {
    report["sessions"][0]
        .as_str()
        .unwrap_or_default()
        .to_string()
}

fn seg_file(srv: &ServerProc, id: &str) -> std::path::PathBuf {
    segment_path(&telecg_server::segment_dir(&srv.data), id)
}

/// simulate --hr 60 --duration 60 --rate 250: 15000 samples, uniform
/// 4000 us spacing, under 10 s.
async fn pipeline_exactness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let srv = ServerProc::start(dir.path());
    let url = srv.url();
    let started = Instant::now();
    let out = telecg(&[
        "simulate",
        "--hr",
        "60",
        "--duration",
        "60",
        "--rate",
        "250",
        "--server",
        &url,
    ]);
    let elapsed = started.elapsed();
    check!(
        out.status.success(),
        "simulate exited {:?}",
        out.status.code()
    );
    let id = session_of(&stdout_json(&out));
    let got = ApiClient::new(&url)
        .samples(&id, None, None)
        .await
        .map_err(|e| e.to_string())?;
    let n = got.samples.len();
    check!(n == 15000, "stored {n} samples, expected 15000");
    let bad = got
        .samples
        .windows(2)
        .filter(|w| w[1].ts_us - w[0].ts_us != 4000)
        .count();
    check!(bad == 0, "{bad} non-4000 us steps");
    check!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{n} samples, uniform 4000 us spacing, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

/// generator -> quantize -> ingest -> store -> export -> dequantize within
/// half an LSB of the analog signal at every sample.
async fn pqrst_fidelity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let srv = ServerProc::start(dir.path());
    let url = srv.url();
    let epoch = EPOCH.to_string();
    let out = telecg(&[
        "simulate",
        "--hr",
        "60",
        "--duration",
        "10",
        "--server",
        &url,
        "--epoch-us",
        &epoch,
    ]);
    check!(out.status.success(), "simulate failed");
    let id = session_of(&stdout_json(&out));
    let exported = telecg(&["export", &id, "--server", &url]);
    check!(exported.status.success(), "export failed");
    let rows = parse_export(&String::from_utf8_lossy(&exported.stdout));

    let adc = AdcConfig::default();
    let truth = generate_analog(&SynthParams::with_heart_rate(60.0), 250.0, 10.0).unwrap();
    check!(
        rows.len() == truth.len(),
        "{} exported vs {} generated",
        rows.len(),
        truth.len()
    );
    let half = adc.lsb_mv() / 2.0;
    let mut worst = 0.0f64;
    for (i, ((ts, code, _), a)) in rows.iter().zip(&truth).enumerate() {
        check!(*ts == EPOCH + i as u64 * 4000, "sample {i} at {ts}");
        let err = (dequantize(u32::from(*code), &adc).unwrap() - a.value_mv).abs();
        worst = worst.max(err);
    }
    check!(worst <= half, "max error {worst:.6} mV > {half:.6} mV");
    Ok(format!(
        "{} samples, max error {worst:.4} mV <= {half:.4} mV",
        rows.len()
    ))
}

fn quantized(p: &SynthParams, secs: f64) -> Vec<StoredSample> {
    let adc = AdcConfig::default();
    generate_analog(p, 250.0, secs)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, s)| StoredSample {
            ts_us: i as u64 * 4000,
            code: quantize(s.value_mv, &adc) as u16,
            flags: s.lead_state.bits(),
        })
        .collect()
}

/// detect_beats within 3 bpm (clean) and 5 bpm (white noise 0.05 mV) at
/// 40/60/120/180 bpm over 30 s.
async fn heart_rate_oracle() -> Outcome {
    let adc = AdcConfig::default();
    let mut worst_clean = 0.0f64;
    let mut worst_noisy = 0.0f64;
    for hr in [40.0, 60.0, 120.0, 180.0] {
        let clean = SynthParams::with_heart_rate(hr);
        let est = detect_beats(&quantized(&clean, 30.0), 250, &adc);
        let err = (est.bpm - hr).abs();
        check!(err <= 3.0, "clean {hr} bpm estimated {:.2}", est.bpm);
        worst_clean = worst_clean.max(err);
        for seed in 0..5 {
            let mut noisy = clean.clone();
            noisy.noise = NoiseConfig::white(0.05);
            noisy.seed = seed;
            let est = detect_beats(&quantized(&noisy, 30.0), 250, &adc);
            let err = (est.bpm - hr).abs();
            check!(
                err <= 5.0,
                "noisy {hr} bpm (seed {seed}) estimated {:.2}",
                est.bpm
            );
            worst_noisy = worst_noisy.max(err);
        }
    }
    Ok(format!(
        "worst error {worst_clean:.3} bpm clean, {worst_noisy:.3} bpm noisy (5 seeds each)"
    ))
}

/// A 1 s lead-off event gives exactly one alert of the right polarity
/// opening within 260 ms; a sub-debounce event gives none.
async fn lead_off_alerting() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let srv = ServerProc::start(dir.path());
    let url = srv.url();
    let client = ApiClient::new(&url);
    let epoch = EPOCH.to_string();
    let mut worst_ms = 0.0f64;
    for (event, kind) in [
        ("2:3:plus", AlertKind::LeadOffPlus),
        ("2:3:minus", AlertKind::LeadOffMinus),
    ] {
        let out = telecg(&[
            "simulate",
            "--duration",
            "8",
            "--server",
            &url,
            "--epoch-us",
            &epoch,
            "--lead-off",
            event,
        ]);
        check!(out.status.success(), "simulate {event} failed");
        let alerts = client
            .alerts(&session_of(&stdout_json(&out)))
            .await
            .map_err(|e| e.to_string())?;
        check!(
            alerts.len() == 1,
            "{event}: {} alerts: {alerts:?}",
            alerts.len()
        );
        check!(alerts[0].kind == kind, "{event}: got {:?}", alerts[0].kind);
        let delay_ms = (alerts[0].start_ts_us as f64 - (EPOCH + 2_000_000) as f64) / 1000.0;
        check!(
            (0.0..=260.0).contains(&delay_ms),
            "{event}: opened {delay_ms} ms after event start"
        );
        worst_ms = worst_ms.max(delay_ms);
    }
    for event in ["2:2.2:plus", "2:2.2:minus", "5:5.004:both"] {
        let out = telecg(&[
            "simulate",
            "--duration",
            "8",
            "--server",
            &url,
            "--lead-off",
            event,
        ]);
        check!(out.status.success(), "simulate {event} failed");
        let alerts = client
            .alerts(&session_of(&stdout_json(&out)))
            .await
            .map_err(|e| e.to_string())?;
        check!(alerts.is_empty(), "sub-debounce {event} raised {alerts:?}");
    }
    Ok(format!("one alert per 1 s event, opened {worst_ms:.0} ms after start; none for 200 ms and 4 ms events"))
}

/// Forwards to the server and SIGKILLs it once `kill_after` batches have
/// been acknowledged.
struct KillSwitch {
    inner: ApiClient,
    acked: AtomicU64,
    kill_after: u64,
    trigger: tokio::sync::Notify,
}

#[async_trait]
impl Transport for KillSwitch {
    async fn ensure_patient(&self, id: &str) -> Result<(), TransportError> {
        self.inner.ensure_patient(id).await
    }
    async fn create_session(&self, req: &CreateSession) -> Result<Session, TransportError> {
        self.inner.create_session(req).await
    }
    async fn send_batch(&self, id: &str, b: &SampleBatch) -> Result<IngestAck, TransportError> {
        let ack = self.inner.send_batch(id, b).await?;
        if ack.accepted && self.acked.fetch_add(1, Ordering::SeqCst) + 1 == self.kill_after {
            self.trigger.notify_one();
        }
        Ok(ack)
    }
}

/// Kill -9 the server mid-ingest and restart it; the buffering device must
/// finish with zero loss and the segment must pass full CRC validation.
async fn crash_recovery() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut srv = ServerProc::start(dir.path());
    let url = srv.url();
    let addr = srv.addr.clone();
    let switch = Arc::new(KillSwitch {
        inner: ApiClient::new(&url),
        acked: AtomicU64::new(0),
        kill_after: 100,
        trigger: tokio::sync::Notify::new(),
    });
    let mut cfg = DeviceConfig::new("crash-dev", &url);
    cfg.epoch_us = Some(EPOCH);
    cfg.drain_timeout = Duration::from_secs(30);

    let device = tokio::spawn({
        let switch = switch.clone();
        async move { run_device(&cfg, &Source::Synth(SynthParams::default()), &*switch, 60.0).await }
    });
    switch.trigger.notified().await;
    srv.kill9();
    let acked_at_kill = switch.acked.load(Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(300)).await;
    let data = srv.data.clone();
    let srv = tokio::task::spawn_blocking(move || ServerProc::start_on(&data, &addr))
        .await
        .unwrap();

    let report = device.await.unwrap().map_err(|e| e.to_string())?;
    check!(report.is_lossless(), "device lost data: {report:?}");
    check!(
        report.sessions.len() == 1,
        "session rolled over: {:?}",
        report.sessions
    );
    check!(report.retries > 0, "the outage was never observed");
    let id = &report.sessions[0];
    let session = ApiClient::new(&url)
        .session(id)
        .await
        .map_err(|e| e.to_string())?;
    check!(
        session.next_expected_seq() == 300,
        "next_expected_seq {}",
        session.next_expected_seq()
    );
    let scan = scan_file(&seg_file(&srv, id)).map_err(|e| e.to_string())?;
    check!(scan.is_clean(), "segment damaged: {:?}", scan.corruption);
    let seqs_ok = scan
        .records
        .iter()
        .enumerate()
        .all(|(i, r)| r.seq == i as u32);
    check!(seqs_ok && scan.records.len() == 300, "records not 0..300");
    check!(
        scan.sample_count() == 15000,
        "{} samples",
        scan.sample_count()
    );
    Ok(format!(
        "killed after {acked_at_kill} acks, {} retries, 15000/15000 samples, CRC clean",
        report.retries
    ))
}

/// Sends every batch twice.
struct Duplicator(ApiClient);

#[async_trait]
impl Transport for Duplicator {
    async fn ensure_patient(&self, id: &str) -> Result<(), TransportError> {
        self.0.ensure_patient(id).await
    }
    async fn create_session(&self, req: &CreateSession) -> Result<Session, TransportError> {
        self.0.create_session(req).await
    }
    async fn send_batch(&self, id: &str, b: &SampleBatch) -> Result<IngestAck, TransportError> {
        let first = self.0.send_batch(id, b).await?;
        let second = self.0.send_batch(id, b).await?;
        if first.accepted && !second.accepted {
            return Err(TransportError::Unavailable(format!(
                "duplicate rejected: {second:?}"
            )));
        }
        Ok(second)
    }
}

/// Duplicate delivery of every batch leaves the segment byte-identical to
/// single delivery (headers compared with the session id normalized).
async fn idempotent_retransmission() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let srv = ServerProc::start(dir.path());
    let url = srv.url();
    let mut cfg = DeviceConfig::new("dup-dev", &url);
    cfg.epoch_us = Some(EPOCH);
    let source = Source::Synth(SynthParams {
        noise: NoiseConfig::white(0.05),
        ..SynthParams::default()
    });
    let once = run_device(&cfg, &source, &ApiClient::new(&url), 10.0)
        .await
        .map_err(|e| e.to_string())?;
    let twice = run_device(&cfg, &source, &Duplicator(ApiClient::new(&url)), 10.0)
        .await
        .map_err(|e| e.to_string())?;
    check!(once.is_lossless() && twice.is_lossless(), "lossy run");

    let a = std::fs::read(seg_file(&srv, &once.sessions[0])).unwrap();
    let b = std::fs::read(seg_file(&srv, &twice.sessions[0])).unwrap();
    let (meta_a, ha) = decode_header(&a).map_err(|e| e.to_string())?;
    let (meta_b, hb) = decode_header(&b).map_err(|e| e.to_string())?;
    let normalized = SegmentMeta {
        session_id: meta_a.session_id.clone(),
        ..meta_b
    };
    check!(
        encode_header(&normalized) == a[..ha],
        "headers differ beyond the session id"
    );
    check!(a[ha..] == b[hb..], "record bytes differ");
    Ok(format!(
        "{} record bytes identical after {} duplicate posts",
        a.len() - ha,
        twice.batches_sent
    ))
}

/// Five concurrent subscribers during a 10 s real-time run all see the
/// same batches, equal to what was stored.
async fn fan_out_consistency() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let srv = ServerProc::start(dir.path());
    let url = srv.url();
    let client = ApiClient::new(&url);
    let mut cfg = DeviceConfig::new("fan-dev", &url);
    cfg.patient_id = "fan-patient".into();
    cfg.realtime = true;
    let device = tokio::spawn({
        let client = client.clone();
        async move { run_device(&cfg, &Source::Synth(SynthParams::default()), &client, 10.0).await }
    });

    let mut session = None;
    for _ in 0..100 {
        if let Ok(list) = client.list_sessions("fan-patient").await {
            if let Some(s) = list.into_iter().next() {
                session = Some(s.session_id);
                break;
            }
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let id = session.ok_or("session never appeared")?;

    let mut readers = Vec::new();
    for _ in 0..5 {
        let mut stream = client
            .stream(&id, Some(0))
            .await
            .map_err(|e| e.to_string())?;
        readers.push(tokio::spawn(async move {
            let mut batches: Vec<SampleBatch> = Vec::new();
            let mut closed = false;
            while let Some(msg) = stream.next().await {
                let msg = msg.map_err(|e| e.to_string())?;
                match msg.event.as_str() {
                    "batch" => batches.push(msg.decode().map_err(|e| e.to_string())?),
                    "closed" => {
                        closed = true;
                        break;
                    }
                    _ => {}
                }
            }
            Ok::<_, String>((batches, closed))
        }));
    }

    let report = device.await.unwrap().map_err(|e| e.to_string())?;
    check!(report.is_lossless(), "device lost data");
    client.close_session(&id).await.map_err(|e| e.to_string())?;

    let stored = client
        .samples(&id, None, None)
        .await
        .map_err(|e| e.to_string())?;
    let mut first: Option<Vec<SampleBatch>> = None;
    for r in readers {
        let (batches, closed) = tokio::time::timeout(Duration::from_secs(10), r)
            .await
            .map_err(|_| "subscriber never finished".to_string())?
            .unwrap()?;
        check!(closed, "stream ended without a closed event");
        let seqs_ok = batches.iter().enumerate().all(|(i, b)| b.seq == i as u32);
        check!(
            seqs_ok && batches.len() == 50,
            "subscriber saw {} batches",
            batches.len()
        );
        let codes: Vec<u16> = batches
            .iter()
            .flat_map(|b| b.codes.iter().map(|&c| c as u16))
            .collect();
        let flags: Vec<u8> = batches.iter().flat_map(|b| b.flags.clone()).collect();
        let starts_ok = batches
            .iter()
            .all(|b| stored.samples[b.seq as usize * 50].ts_us == b.start_ts_us);
        check!(
            codes == stored.samples.iter().map(|s| s.code).collect::<Vec<_>>()
                && flags == stored.samples.iter().map(|s| s.flags).collect::<Vec<_>>()
                && starts_ok,
            "streamed data differs from stored data"
        );
        match &first {
            None => first = Some(batches),
            Some(f) => check!(*f == batches, "subscribers disagree"),
        }
    }
    Ok(format!(
        "5 subscribers x 50 batches identical to {} stored samples",
        stored.samples.len()
    ))
}

/// --fleet 25 for 10 s: zero drops, exact per-session counts, under 60 s.
async fn fleet_scale() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let srv = ServerProc::start(dir.path());
    let url = srv.url();
    let started = Instant::now();
    let out = telecg(&[
        "simulate",
        "--fleet",
        "25",
        "--duration",
        "10",
        "--server",
        &url,
    ]);
    let elapsed = started.elapsed();
    check!(
        out.status.success(),
        "simulate --fleet exited {:?}",
        out.status.code()
    );
    let report = stdout_json(&out);
    check!(
        report["batches_dropped"] == 0,
        "drops: {}",
        report["batches_dropped"]
    );
    let devices = report["devices"].as_array().cloned().unwrap_or_default();
    check!(devices.len() == 25, "{} device reports", devices.len());
    let client = ApiClient::new(&url);
    for d in &devices {
        let id = session_of(d);
        let n = client
            .samples(&id, None, None)
            .await
            .map_err(|e| e.to_string())?
            .samples
            .len();
        check!(n == 2500, "session {id} holds {n} samples");
    }
    check!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "25 sessions x 2500 samples, 0 drops, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("pipeline exactness", Box::pin(pipeline_exactness())),
        ("PQRST fidelity", Box::pin(pqrst_fidelity())),
        ("heart-rate oracle", Box::pin(heart_rate_oracle())),
        ("lead-off alerting", Box::pin(lead_off_alerting())),
        ("crash recovery", Box::pin(crash_recovery())),
        (
            "idempotent retransmission",
            Box::pin(idempotent_retransmission()),
        ),
        ("fan-out consistency", Box::pin(fan_out_consistency())),
        ("fleet scale", Box::pin(fleet_scale())),
    ];
    let mut failed = 0;
    for (name, fut) in criteria {
        match rt.block_on(fut) {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
