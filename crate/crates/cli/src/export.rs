use std::io::Write;

use anyhow::Context;
use telecg_core::store::{scan_file, segment_path};
use telecg_core::wire::{SamplesResponse, StoredSample};
use telecg_device::ApiClient;
use tracing::warn;

use crate::args::ExportArgs;
use crate::Outcome;

pub fn write_lines<W: Write>(mut w: W, samples: &[StoredSample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{} {} {}", s.ts_us, s.code, s.flags)?;
    }
    w.flush()
}

async fn fetch(args: &ExportArgs) -> anyhow::Result<SamplesResponse> {
    let from = args.from_us.unwrap_or(0);
    let to = args.to_us.unwrap_or(u64::MAX);
    anyhow::ensure!(from <= to, "--from-us must not exceed --to-us");
    match &args.data {
        Some(dir) => {
            let path = segment_path(&telecg_server::segment_dir(dir), &args.session_id);
            let scan =
                scan_file(&path).with_context(|| format!("reading session {}", args.session_id))?;
            Ok(SamplesResponse {
                sample_rate_hz: scan.meta.sample_rate_hz,
                adc: scan.meta.adc,
                samples: scan.range(from, to),
                corruption: scan.corruption.map(|c| c.to_string()),
            })
        }
        None => ApiClient::new(&args.server)
            .samples(&args.session_id, args.from_us, args.to_us)
            .await
            .with_context(|| format!("fetching session {}", args.session_id)),
    }
}

pub async fn run(args: ExportArgs) -> anyhow::Result<Outcome> {
    let resp = fetch(&args).await?;
    if let Some(c) = &resp.corruption {
        warn!(session = %args.session_id, damage = %c, "segment is damaged; exporting the valid prefix");
    }
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    };
    if args.json {
        serde_json::to_writer(&mut out, &resp)?;
        writeln!(out)?;
        out.flush()?;
    } else {
        write_lines(&mut out, &resp.samples)?;
    }
    Ok(if resp.corruption.is_none() {
        Outcome::Success
    } else {
        Outcome::Degraded
    })
}
