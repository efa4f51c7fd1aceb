use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use telecg_core::signal::LeadEvent;
use telecg_device::{DEFAULT_BATCH_SIZE, DEFAULT_RATE_HZ};
use telecg_server::{DEFAULT_LISTEN, DEFAULT_SUBSCRIBER_QUEUE};

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(
    name = "telecg",
    version,
    about = "Tele-ECG monitoring: server, simulator and tools"
)]
pub struct Cli {
    /// Log filter (e.g. info, debug, telecg_server=trace).
    #[arg(long, global = true, env = "TELECG_LOG_LEVEL", default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the ingestion server until interrupted.
    Serve(ServeArgs),
    /// Stream synthetic ECG from one or more simulated devices.
    Simulate(SimulateArgs),
    /// Re-ingest a recording under a new session.
    Replay(ReplayArgs),
    /// Dump a stored session as `ts_us code flags` lines.
    Export(ExportArgs),
    /// Server plus one live simulator, printing the viewer URL.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ServerOpts {
    /// Address to listen on; port 0 picks a free port.
    #[arg(long, env = "TELECG_LISTEN", default_value = DEFAULT_LISTEN)]
    pub listen: String,

    /// Data directory (registry and session segments).
    #[arg(long, env = "TELECG_DATA", default_value = "./data")]
    pub data: PathBuf,

    /// Directory with built viewer assets served under /ui/.
    #[arg(long, env = "TELECG_UI_DIR")]
    pub ui_dir: Option<PathBuf>,

    /// Events queued per stream subscriber before it is disconnected.
    #[arg(long, env = "TELECG_QUEUE", default_value_t = DEFAULT_SUBSCRIBER_QUEUE)]
    pub queue: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub server: ServerOpts,
}

#[derive(Debug, Clone, Args)]
pub struct SignalOpts {
    /// Heart rate in beats per minute.
    #[arg(long, env = "TELECG_HR", default_value_t = 60.0)]
    pub hr: f64,

    /// White noise standard deviation in electrode millivolts.
    #[arg(long, env = "TELECG_NOISE_SIGMA", default_value_t = 0.0)]
    pub noise_sigma: f64,

    /// Scheduled electrode detachment as START:END:WHICH (seconds;
    /// WHICH is plus, minus or both). Repeatable.
    #[arg(long = "lead-off", value_name = "START:END:WHICH")]
    pub lead_off: Vec<LeadEvent>,

    /// Noise seed.
    #[arg(long, env = "TELECG_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DeviceOpts {
    /// Server base URL.
    #[arg(long, env = "TELECG_SERVER", default_value = DEFAULT_SERVER)]
    pub server: String,

    #[arg(long, env = "TELECG_DEVICE_ID", default_value = "sim-1")]
    pub device_id: String,

    #[arg(long, env = "TELECG_PATIENT", default_value = "demo-patient")]
    pub patient: String,

    /// Sample rate in Hz.
    #[arg(long, env = "TELECG_RATE", default_value_t = DEFAULT_RATE_HZ)]
    pub rate: u32,

    /// Samples per batch.
    #[arg(long, env = "TELECG_BATCH_SIZE", default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,

    /// Device buffer size in samples (default: 60 s at the sample rate).
    #[arg(long, env = "TELECG_BUFFER")]
    pub buffer: Option<usize>,

    /// Backoff ceiling in milliseconds.
    #[arg(long, env = "TELECG_MAX_BACKOFF_MS", default_value_t = 30_000)]
    pub max_backoff_ms: u64,

    /// Seconds to keep retrying unsent batches after the run.
    #[arg(long, env = "TELECG_DRAIN_TIMEOUT", default_value_t = 30.0)]
    pub drain_timeout: f64,

    /// Pace production in wall-clock time instead of sending as fast as
    /// possible.
    #[arg(long, env = "TELECG_REALTIME")]
    pub realtime: bool,

    /// Timestamp of the first sample in microseconds since the Unix epoch
    /// (default: now).
    #[arg(long, env = "TELECG_EPOCH_US")]
    pub epoch_us: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub device: DeviceOpts,

    #[command(flatten)]
    pub signal: SignalOpts,

    /// Recording length in seconds.
    #[arg(long, env = "TELECG_DURATION", default_value_t = 10.0)]
    pub duration: f64,

    /// Number of independent devices; ids get a numeric suffix and seeds
    /// are offset per device.
    #[arg(long, env = "TELECG_FLEET", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub fleet: u32,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Segment file, export text (`ts_us code flags`), export JSON or
    /// analog text (`t_s value_mv`).
    pub file: PathBuf,

    #[command(flatten)]
    pub device: DeviceOpts,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub session_id: String,

    /// Server base URL.
    #[arg(long, env = "TELECG_SERVER", default_value = DEFAULT_SERVER)]
    pub server: String,

    /// Read directly from a server data directory instead of over HTTP.
    #[arg(long, env = "TELECG_DATA")]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub from_us: Option<u64>,

    #[arg(long)]
    pub to_us: Option<u64>,

    /// Write the samples response as JSON instead of text lines.
    #[arg(long)]
    pub json: bool,

    /// Output file (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub server: ServerOpts,

    #[command(flatten)]
    pub signal: SignalOpts,

    /// Seconds of live signal to stream.
    #[arg(long, env = "TELECG_DURATION", default_value_t = 600.0)]
    pub duration: f64,
}
