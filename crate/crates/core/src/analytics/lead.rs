/// A lead-off flag must persist this long before an alert opens.
pub const LEAD_OPEN_US: u64 = 250_000;
/// ...and be clear this long before the alert closes.
pub const LEAD_CLOSE_US: u64 = 1_000_000;

/// Smallest sample count whose span `n / rate` reaches `duration_us`.
pub fn samples_for(duration_us: u64, rate_hz: u32) -> u64 {
    (duration_us * rate_hz as u64).div_ceil(1_000_000).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Condition held long enough; timestamp of the sample that crossed.
    Open(u64),
    /// Condition cleared long enough; timestamp of the first clear sample.
    Close(u64),
}

/// Two-threshold run-length debouncer over a boolean sample stream.
#[derive(Debug, Clone)]
pub struct Debounce {
    open_after: u64,
    close_after: u64,
    active_run: u64,
    clear_run: u64,
    first_clear_ts: u64,
    open: bool,
}

impl Debounce {
    pub fn new(open_after: u64, close_after: u64) -> Self {
        Self {
            open_after: open_after.max(1),
            close_after: close_after.max(1),
            active_run: 0,
            clear_run: 0,
            first_clear_ts: 0,
            open: false,
        }
    }

    pub fn lead_off(rate_hz: u32) -> Self {
        Self::new(
            samples_for(LEAD_OPEN_US, rate_hz),
            samples_for(LEAD_CLOSE_US, rate_hz),
        )
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn step(&mut self, active: bool, ts_us: u64) -> Option<Edge> {
        if active {
            self.clear_run = 0;
            self.active_run += 1;
            if !self.open && self.active_run >= self.open_after {
                self.open = true;
                return Some(Edge::Open(ts_us));
            }
        } else {
            self.active_run = 0;
            if self.open {
                if self.clear_run == 0 {
                    self.first_clear_ts = ts_us;
                }
                self.clear_run += 1;
                if self.clear_run >= self.close_after {
                    self.open = false;
                    self.clear_run = 0;
                    return Some(Edge::Close(self.first_clear_ts));
                }
            }
        }
        None
    }
}
