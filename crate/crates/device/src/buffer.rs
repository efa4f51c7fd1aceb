use std::collections::VecDeque;

use telecg_core::wire::SampleBatch;

/// Bounded FIFO of unsent batches, sized in samples. Overflow evicts the
/// oldest batches first.
#[derive(Debug)]
pub struct BatchBuffer {
    queue: VecDeque<SampleBatch>,
    samples: usize,
    capacity: usize,
}

impl BatchBuffer {
    pub fn new(capacity_samples: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            samples: 0,
            capacity: capacity_samples,
        }
    }

    /// Enqueue a batch, returning how many older batches were evicted.
    pub fn push(&mut self, batch: SampleBatch) -> usize {
        let mut dropped = 0;
        while !self.queue.is_empty() && self.samples + batch.len() > self.capacity {
            let old = self.queue.pop_front().unwrap();
            self.samples -= old.len();
            dropped += 1;
        }
        self.samples += batch.len();
        self.queue.push_back(batch);
        dropped
    }

    pub fn front(&self) -> Option<&SampleBatch> {
        self.queue.front()
    }

    pub fn pop(&mut self) -> Option<SampleBatch> {
        let b = self.queue.pop_front()?;
        self.samples -= b.len();
        Some(b)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut SampleBatch> {
        self.queue.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}
