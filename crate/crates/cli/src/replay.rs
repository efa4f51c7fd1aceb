use std::path::Path;

use anyhow::{bail, Context};
use telecg_core::signal::{read_analog_text, AdcConfig};
use telecg_core::store::{scan_bytes, MAGIC};
use telecg_core::wire::{SamplesResponse, StoredSample};
use telecg_device::{run_device, ApiClient, Source};
use tracing::{info, warn};

use crate::args::ReplayArgs;
use crate::simulate::device_config;
use crate::{emit, Outcome};

/// A recording loaded from disk.
pub struct Recording {
    pub source: Source,
    pub rate_hz: u32,
    pub adc: AdcConfig,
    /// Why only part of the file could be used.
    pub damage: Option<String>,
}

/// Sample rate implied by the median timestamp step.
fn infer_rate(samples: &[StoredSample]) -> Option<u32> {
    let mut steps: Vec<u64> = samples
        .windows(2)
        .map(|w| w[1].ts_us.saturating_sub(w[0].ts_us))
        .filter(|&d| d > 0)
        .collect();
    if steps.is_empty() {
        return None;
    }
    steps.sort_unstable();
    let median = steps[steps.len() / 2] as f64;
    Some((1e6 / median).round() as u32)
}

fn parse_export_text(text: &str) -> anyhow::Result<Vec<StoredSample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [ts, code, flags] = cols[..] else {
            bail!("line {}: expected `ts_us code flags`", n + 1);
        };
        let parse = |s: &str| {
            s.parse::<u64>()
                .with_context(|| format!("line {}: {s:?}", n + 1))
        };
        out.push(StoredSample {
            ts_us: parse(ts)?,
            code: u16::try_from(parse(code)?).context("code exceeds 16 bits")?,
            flags: u8::try_from(parse(flags)?).context("flags exceed 8 bits")?,
        });
    }
    Ok(out)
}

pub fn load(path: &Path, rate_hint: u32, batch_size: usize) -> anyhow::Result<Recording> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;

    if bytes.starts_with(MAGIC) {
        let scan = scan_bytes(&bytes).context("unreadable segment header")?;
        let damage = scan.corruption.as_ref().map(|c| c.to_string());
        let samples = scan.all_samples();
        let rate = scan.meta.sample_rate_hz;
        return Ok(Recording {
            source: Source::from_samples(&samples, rate, batch_size),
            rate_hz: rate,
            adc: scan.meta.adc,
            damage,
        });
    }

    let text = std::str::from_utf8(&bytes).context("not a segment file or UTF-8 text")?;
    if text.trim_start().starts_with('{') {
        let r: SamplesResponse = serde_json::from_str(text).context("parsing export JSON")?;
        return Ok(Recording {
            source: Source::from_samples(&r.samples, r.sample_rate_hz, batch_size),
            rate_hz: r.sample_rate_hz,
            adc: r.adc,
            damage: r.corruption,
        });
    }

    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    let columns = first.map_or(0, |l| l.split_whitespace().count());
    let adc = AdcConfig::default();
    match columns {
        3 => {
            let samples = parse_export_text(text)?;
            let rate = infer_rate(&samples).unwrap_or(rate_hint);
            Ok(Recording {
                source: Source::from_samples(&samples, rate, batch_size),
                rate_hz: rate,
                adc,
                damage: None,
            })
        }
        2 => {
            let analog = read_analog_text(text.as_bytes())?;
            Ok(Recording {
                source: Source::from_analog(&analog, &adc, rate_hint, batch_size),
                rate_hz: rate_hint,
                adc,
                damage: None,
            })
        }
        0 => bail!("{} contains no samples", path.display()),
        n => bail!("unrecognized text format ({n} columns)"),
    }
}

pub async fn run(args: ReplayArgs) -> anyhow::Result<Outcome> {
    let rec = load(&args.file, args.device.rate, args.device.batch_size)?;
    if let Some(d) = &rec.damage {
        warn!(file = %args.file.display(), damage = %d, "replaying the valid prefix only");
    }
    if let Source::Recorded(batches) = &rec.source {
        if batches.is_empty() {
            bail!("{} contains no samples", args.file.display());
        }
    }
    let mut cfg = device_config(&args.device)?.with_rate(rec.rate_hz);
    cfg.adc = rec.adc;
    info!(file = %args.file.display(), rate = rec.rate_hz, "replaying");
    let client = ApiClient::new(&cfg.server_url);
    let report = run_device(&cfg, &rec.source, &client, 0.0)
        .await
        .context("replay failed")?;
    emit(&report)?;
    Ok(if report.is_lossless() && rec.damage.is_none() {
        Outcome::Success
    } else {
        Outcome::Degraded
    })
}
