use std::collections::VecDeque;

use telecg_core::signal::{
    generate_range, quantize, sample_count, AdcConfig, AnalogSample, SynthParams,
};
use telecg_core::store::sample_ts_us;
use telecg_core::wire::{SampleBatch, StoredSample};
use telecg_core::{Execution, ValidationError};

/// A digitized sample waiting to be batched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingSample {
    pub ts_us: u64,
    pub code: u32,
    pub flags: u8,
}

/// Take up to `batch_size` samples off the front of `pending`. Returns None
/// when nothing is queued.
pub fn build_batch(
    pending: &mut VecDeque<PendingSample>,
    seq: u32,
    batch_size: usize,
) -> Option<SampleBatch> {
    let first = pending.front()?.ts_us;
    let n = batch_size.max(1).min(pending.len());
    let (codes, flags) = pending.drain(..n).map(|s| (s.code, s.flags)).unzip();
    Some(SampleBatch {
        seq,
        start_ts_us: first,
        codes,
        flags,
    })
}

/// A previously captured batch, positioned relative to the recording start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedBatch {
    pub offset_us: u64,
    pub codes: Vec<u32>,
    pub flags: Vec<u8>,
}

/// What the simulated front-end emits.
#[derive(Debug, Clone)]
pub enum Source {
    /// Synthesize from a parametric model for a requested duration.
    Synth(SynthParams),
    /// Re-emit a recording as if live.
    Recorded(Vec<RecordedBatch>),
}

impl Source {
    /// Group stored samples into batches of at most `batch_size`, starting a
    /// new batch wherever the timestamps skip, so relative timing survives.
    pub fn from_samples(samples: &[StoredSample], rate_hz: u32, batch_size: usize) -> Self {
        let mut out: Vec<RecordedBatch> = Vec::new();
        let Some(t0) = samples.first().map(|s| s.ts_us) else {
            return Source::Recorded(out);
        };
        let batch_size = batch_size.max(1);
        let mut run_start = t0;
        let mut run_index = 0u64;
        for s in samples {
            let contiguous = sample_ts_us(run_start, run_index, rate_hz) == s.ts_us;
            if !contiguous {
                run_start = s.ts_us;
                run_index = 0;
            }
            let fresh = !contiguous || out.last().is_none_or(|b| b.codes.len() >= batch_size);
            if fresh {
                out.push(RecordedBatch {
                    offset_us: s.ts_us - t0,
                    codes: Vec::with_capacity(batch_size),
                    flags: Vec::with_capacity(batch_size),
                });
            }
            let b = out.last_mut().unwrap();
            b.codes.push(s.code as u32);
            b.flags.push(s.flags);
            run_index += 1;
        }
        Source::Recorded(out)
    }

    /// Digitize an analog trace (assumed uniformly sampled at `rate_hz`).
    pub fn from_analog(
        analog: &[AnalogSample],
        adc: &AdcConfig,
        rate_hz: u32,
        batch_size: usize,
    ) -> Self {
        let samples: Vec<StoredSample> = analog
            .iter()
            .enumerate()
            .map(|(i, a)| StoredSample {
                ts_us: sample_ts_us(0, i as u64, rate_hz),
                code: quantize(a.value_mv, adc) as u16,
                flags: a.lead_state.bits(),
            })
            .collect();
        Self::from_samples(&samples, rate_hz, batch_size)
    }

    pub(crate) fn plan(
        &self,
        rate_hz: u32,
        batch_size: usize,
        duration_s: f64,
    ) -> Result<Plan, ValidationError> {
        match self {
            Source::Synth(p) => {
                p.validate()?;
                if !(duration_s.is_finite() && duration_s > 0.0) {
                    return Err(ValidationError::new(
                        "duration_s",
                        format!("{duration_s} must be > 0"),
                    ));
                }
                let total = sample_count(rate_hz as f64, duration_s);
                let bs = batch_size as u64;
                Ok(Plan {
                    batches: total.div_ceil(bs) as usize,
                    total_samples: total,
                })
            }
            Source::Recorded(b) => Ok(Plan {
                batches: b.len(),
                total_samples: b.iter().map(|x| x.codes.len() as u64).sum(),
            }),
        }
    }

    /// Batch `k` of the plan (seq left at 0) plus the offset, relative to
    /// the recording start, at which its last sample has been acquired.
    pub(crate) fn batch(
        &self,
        k: usize,
        plan: &Plan,
        rate_hz: u32,
        batch_size: usize,
        adc: &AdcConfig,
        epoch_us: u64,
    ) -> (SampleBatch, u64) {
        match self {
            Source::Synth(p) => {
                let start = (k * batch_size) as u64;
                let count = (plan.total_samples - start).min(batch_size as u64);
                let analog = generate_range(p, rate_hz as f64, start, count, Execution::Sequential)
                    .expect("validated in plan");
                let mut pending: VecDeque<PendingSample> = analog
                    .iter()
                    .enumerate()
                    .map(|(i, a)| PendingSample {
                        ts_us: sample_ts_us(epoch_us, start + i as u64, rate_hz),
                        code: quantize(a.value_mv, adc),
                        flags: a.lead_state.bits(),
                    })
                    .collect();
                let batch = build_batch(&mut pending, 0, batch_size).expect("count >= 1");
                let ready = sample_ts_us(0, start + count, rate_hz);
                (batch, ready)
            }
            Source::Recorded(batches) => {
                let r = &batches[k];
                let batch = SampleBatch {
                    seq: 0,
                    start_ts_us: epoch_us + r.offset_us,
                    codes: r.codes.clone(),
                    flags: r.flags.clone(),
                };
                let ready = r.offset_us + sample_ts_us(0, r.codes.len() as u64, rate_hz);
                (batch, ready)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Plan {
    pub batches: usize,
    pub total_samples: u64,
}
