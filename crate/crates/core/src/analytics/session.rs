use std::collections::VecDeque;

use super::lead::{samples_for, Debounce, Edge};
use super::{detect_beats, quality_window, Alert, AlertKind, AlertTransition};
use crate::signal::{AdcConfig, LeadState};
use crate::wire::{StoredSample, Vitals};

/// Identical codes on attached leads for this long raise a Flatline alert.
pub const FLATLINE_ALERT_S: f64 = 2.0;
/// Tumbling window used for QualityLow alerting.
pub const QUALITY_WINDOW_S: f64 = 2.0;
/// Windows scoring below this open a QualityLow alert.
pub const QUALITY_LOW_SCORE: f64 = 0.5;
/// Span of recent samples kept for live vitals.
pub const VITALS_WINDOW_S: f64 = 10.0;

/// Incremental analytics for one session. Feed samples in timestamp order
/// with [`SessionAnalytics::ingest`]; replaying the same samples from
/// storage yields the same alerts.
#[derive(Debug, Clone)]
pub struct SessionAnalytics {
    session_id: String,
    rate_hz: u32,
    adc: AdcConfig,
    lead_plus: Debounce,
    lead_minus: Debounce,
    flat_run: u64,
    flat_prev: Option<u16>,
    flat_needed: u64,
    quality_buf: Vec<StoredSample>,
    quality_len: usize,
    recent: VecDeque<StoredSample>,
    recent_len: usize,
    alerts: Vec<Alert>,
    open: [Option<usize>; 4],
}

fn slot(kind: AlertKind) -> usize {
    match kind {
        AlertKind::LeadOffPlus => 0,
        AlertKind::LeadOffMinus => 1,
        AlertKind::Flatline => 2,
        AlertKind::QualityLow => 3,
    }
}

impl SessionAnalytics {
    pub fn new(session_id: impl Into<String>, rate_hz: u32, adc: AdcConfig) -> Self {
        let rate = rate_hz.max(1);
        Self {
            session_id: session_id.into(),
            rate_hz: rate,
            adc,
            lead_plus: Debounce::lead_off(rate),
            lead_minus: Debounce::lead_off(rate),
            flat_run: 0,
            flat_prev: None,
            flat_needed: samples_for((FLATLINE_ALERT_S * 1e6) as u64, rate),
            quality_buf: Vec::new(),
            quality_len: (QUALITY_WINDOW_S * rate as f64).round() as usize,
            recent: VecDeque::new(),
            recent_len: (VITALS_WINDOW_S * rate as f64).round() as usize,
            alerts: Vec::new(),
            open: [None; 4],
        }
    }

    /// Rebuild state by replaying stored samples.
    pub fn replay(
        session_id: impl Into<String>,
        rate_hz: u32,
        adc: AdcConfig,
        samples: &[StoredSample],
    ) -> Self {
        let mut a = Self::new(session_id, rate_hz, adc);
        a.ingest(samples);
        a
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn alert_mut(&mut self, alert_id: &str) -> Option<&mut Alert> {
        self.alerts.iter_mut().find(|a| a.alert_id == alert_id)
    }

    pub fn ingest(&mut self, samples: &[StoredSample]) -> Vec<AlertTransition> {
        let mut out = Vec::new();
        for &s in samples {
            self.step(s, &mut out);
        }
        out
    }

    fn step(&mut self, s: StoredSample, out: &mut Vec<AlertTransition>) {
        let lead = LeadState::from_bits(s.flags & 0b11).unwrap_or_default();

        let plus = self.lead_plus.step(lead.plus_off(), s.ts_us);
        self.apply(AlertKind::LeadOffPlus, plus, out);
        let minus = self.lead_minus.step(lead.minus_off(), s.ts_us);
        self.apply(AlertKind::LeadOffMinus, minus, out);

        // flatline only on attached leads; lead-off has its own alert
        let same = !lead.any_off() && self.flat_prev == Some(s.code);
        self.flat_prev = (!lead.any_off()).then_some(s.code);
        if same {
            self.flat_run += 1;
            if self.flat_run + 1 == self.flat_needed {
                self.apply(AlertKind::Flatline, Some(Edge::Open(s.ts_us)), out);
            }
        } else {
            self.flat_run = 0;
            if self.open[slot(AlertKind::Flatline)].is_some() {
                self.apply(AlertKind::Flatline, Some(Edge::Close(s.ts_us)), out);
            }
        }

        self.quality_buf.push(s);
        if self.quality_buf.len() >= self.quality_len {
            let window = std::mem::take(&mut self.quality_buf);
            if let Ok(q) = quality_window(&window, self.rate_hz, &self.adc) {
                // windows touched by lead-off are already covered by lead alerts
                if q.lead_off_fraction == 0.0 {
                    let open = self.open[slot(AlertKind::QualityLow)].is_some();
                    if q.score < QUALITY_LOW_SCORE && !open {
                        self.apply(
                            AlertKind::QualityLow,
                            Some(Edge::Open(q.window_start_us)),
                            out,
                        );
                    } else if q.score >= QUALITY_LOW_SCORE && open {
                        self.apply(
                            AlertKind::QualityLow,
                            Some(Edge::Close(q.window_start_us)),
                            out,
                        );
                    }
                }
            }
        }

        if self.recent.len() == self.recent_len {
            self.recent.pop_front();
        }
        self.recent.push_back(s);
    }

    fn apply(&mut self, kind: AlertKind, edge: Option<Edge>, out: &mut Vec<AlertTransition>) {
        let i = slot(kind);
        match edge {
            Some(Edge::Open(ts)) if self.open[i].is_none() => {
                let alert = Alert {
                    alert_id: format!("{}-a{}", self.session_id, self.alerts.len()),
                    session_id: self.session_id.clone(),
                    kind,
                    start_ts_us: ts,
                    end_ts_us: None,
                    acknowledged: false,
                };
                self.open[i] = Some(self.alerts.len());
                self.alerts.push(alert.clone());
                out.push(AlertTransition::Opened(alert));
            }
            Some(Edge::Close(ts)) => {
                if let Some(idx) = self.open[i].take() {
                    let a = &mut self.alerts[idx];
                    a.end_ts_us = Some(ts.max(a.start_ts_us));
                    out.push(AlertTransition::Closed(a.clone()));
                }
            }
            _ => {}
        }
    }

    /// Heart rate and quality over the most recent samples.
    pub fn vitals(&self) -> Vitals {
        let recent: Vec<StoredSample> = self.recent.iter().copied().collect();
        Vitals {
            beats: detect_beats(&recent, self.rate_hz, &self.adc),
            quality: quality_window(&recent, self.rate_hz, &self.adc).ok(),
        }
    }

    /// Samples currently held for [`SessionAnalytics::vitals`].
    pub fn recent_samples(&self) -> Vec<StoredSample> {
        self.recent.iter().copied().collect()
    }
}
