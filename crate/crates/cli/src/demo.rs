use std::time::Duration;

use telecg_device::{run_device, ApiClient, DeviceConfig, Source};
use tracing::{info, warn};

use crate::args::DemoArgs;
use crate::simulate::synth_params;
use crate::{emit, serve, shutdown_signal, Outcome};

pub const DEMO_PATIENT: &str = "demo-patient";
pub const DEMO_DEVICE: &str = "demo-device";

pub async fn run(args: DemoArgs) -> anyhow::Result<Outcome> {
    let params = synth_params(&args.signal)?;
    let (state, listener) = serve::start(&args.server).await?;
    let addr = listener.local_addr()?;
    let base = format!("http://{addr}");
    let server = tokio::spawn(telecg_server::serve(listener, state, shutdown_signal()));

    let client = ApiClient::new(&base);
    client
        .upsert_patient(&telecg_core::wire::UpsertPatient {
            patient_id: DEMO_PATIENT.into(),
            display_name: "Demo Patient".into(),
        })
        .await?;
    let mut cfg = DeviceConfig::new(DEMO_DEVICE, &base);
    cfg.patient_id = DEMO_PATIENT.into();
    cfg.realtime = true;
    cfg.drain_timeout = Duration::from_secs(5);

    let device = tokio::spawn({
        let client = client.clone();
        let duration = args.duration;
        async move { run_device(&cfg, &Source::Synth(params), &client, duration).await }
    });

    // wait for the device's session so the URL can point straight at it
    let mut session = None;
    for _ in 0..50 {
        if let Ok(list) = client.list_sessions(DEMO_PATIENT).await {
            if let Some(s) = list.into_iter().find(|s| s.device_id == DEMO_DEVICE) {
                session = Some(s.session_id);
                break;
            }
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    let viewer_url = match &session {
        Some(id) => format!("{base}/ui/?session={id}"),
        None => format!("{base}/ui/"),
    };
    emit(&serde_json::json!({
        "viewer_url": viewer_url,
        "api": format!("{base}/api/v1"),
        "session_id": session,
        "patient_id": DEMO_PATIENT,
    }))?;
    info!(%viewer_url, "demo running; press Ctrl-C to stop");

    match device.await? {
        Ok(report) => emit(&report)?,
        Err(e) => warn!(error = %e, "simulator stopped"),
    }
    server.await??;
    Ok(Outcome::Success)
}
