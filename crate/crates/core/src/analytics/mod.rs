//! Server-side derived signals: lead-off and quality alerts, signal quality
//! scoring and heart-rate estimation.

mod beats;
mod lead;
mod quality;
mod session;

pub use beats::{detect_beats, detect_beats_mv, BeatEstimate, REFRACTORY_S};
pub use lead::{samples_for, Debounce, Edge, LEAD_CLOSE_US, LEAD_OPEN_US};
pub use quality::{quality_window, quality_windows, QualityReport, FLATLINE_RUN_S};
pub use session::{
    SessionAnalytics, FLATLINE_ALERT_S, QUALITY_LOW_SCORE, QUALITY_WINDOW_S, VITALS_WINDOW_S,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    LeadOffPlus,
    LeadOffMinus,
    Flatline,
    QualityLow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub session_id: String,
    pub kind: AlertKind,
    pub start_ts_us: u64,
    /// None while the condition is ongoing.
    pub end_ts_us: Option<u64>,
    pub acknowledged: bool,
}

impl Alert {
    pub fn is_open(&self) -> bool {
        self.end_ts_us.is_none()
    }
}

/// Alert state change produced while ingesting samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlertTransition {
    Opened(Alert),
    Closed(Alert),
}

impl AlertTransition {
    pub fn alert(&self) -> &Alert {
        match self {
            AlertTransition::Opened(a) | AlertTransition::Closed(a) => a,
        }
    }
}
