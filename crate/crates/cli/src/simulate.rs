use std::time::Duration;

use anyhow::Context;
use telecg_core::signal::{NoiseConfig, SynthParams};
use telecg_device::{run_device, run_fleet, ApiClient, DeviceConfig, Source};

use crate::args::{DeviceOpts, SignalOpts, SimulateArgs};
use crate::{emit, Outcome};

pub fn synth_params(s: &SignalOpts) -> anyhow::Result<SynthParams> {
    let mut p = SynthParams::with_heart_rate(s.hr);
    p.noise = NoiseConfig::white(s.noise_sigma);
    p.lead_events = s.lead_off.clone();
    p.seed = s.seed;
    p.validate()?;
    Ok(p)
}

pub fn device_config(d: &DeviceOpts) -> anyhow::Result<DeviceConfig> {
    let mut cfg = DeviceConfig::new(&d.device_id, &d.server).with_rate(d.rate);
    cfg.patient_id = d.patient.clone();
    cfg.batch_size = d.batch_size;
    cfg.buffer_capacity = d.buffer.unwrap_or(60 * d.rate as usize);
    cfg.max_backoff_ms = d.max_backoff_ms;
    cfg.realtime = d.realtime;
    cfg.epoch_us = d.epoch_us;
    anyhow::ensure!(
        d.drain_timeout.is_finite() && d.drain_timeout >= 0.0,
        "drain timeout must be a nonnegative number of seconds"
    );
    cfg.drain_timeout = Duration::from_secs_f64(d.drain_timeout);
    cfg.validate()?;
    Ok(cfg)
}

pub async fn run(args: SimulateArgs) -> anyhow::Result<Outcome> {
    let params = synth_params(&args.signal)?;
    let cfg = device_config(&args.device)?;
    anyhow::ensure!(
        args.duration.is_finite() && args.duration > 0.0,
        "duration must be positive"
    );

    if args.fleet == 1 {
        let client = ApiClient::new(&cfg.server_url);
        let report = run_device(&cfg, &Source::Synth(params), &client, args.duration)
            .await
            .context("device run failed")?;
        emit(&report)?;
        return Ok(if report.is_lossless() {
            Outcome::Success
        } else {
            Outcome::Degraded
        });
    }

    let devices = (0..args.fleet)
        .map(|i| {
            let mut c = cfg.clone();
            c.device_id = format!("{}-{i:03}", cfg.device_id);
            let mut p = params.clone();
            p.seed = params.seed.wrapping_add(u64::from(i));
            (c, Source::Synth(p))
        })
        .collect();
    let report = run_fleet(devices, |c| ApiClient::new(&c.server_url), args.duration).await;
    emit(&report)?;
    Ok(if report.is_lossless() {
        Outcome::Success
    } else {
        Outcome::Degraded
    })
}
