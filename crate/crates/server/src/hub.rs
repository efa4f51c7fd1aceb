//! Per-session fan-out of live events.
//!
//! Every subscriber owns a bounded queue. Publishing never waits: a
//! subscriber whose queue is full is dropped and receives an overflow notice
//! once it has drained what was already queued.

use std::sync::Arc;

use futures::{Stream, StreamExt};
use parking_lot::Mutex;
use telecg_core::wire::{Alert, OverflowNotice, SampleBatch};
use tokio::sync::mpsc::{self, error::TrySendError};

pub const DEFAULT_SUBSCRIBER_QUEUE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Batch(SampleBatch),
    Alert(Alert),
    Overflow(OverflowNotice),
    Closed,
}

type Tail = Arc<Mutex<Option<StreamEvent>>>;

struct Subscriber {
    tx: mpsc::Sender<StreamEvent>,
    /// Final event delivered after the queue drains.
    tail: Tail,
    last_seq: Option<u32>,
}

pub struct Hub {
    capacity: usize,
    subs: Mutex<Vec<Subscriber>>,
}

pub struct Subscription {
    rx: mpsc::Receiver<StreamEvent>,
    tail: Tail,
}

impl Hub {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            subs: Mutex::new(Vec::new()),
        }
    }

    pub fn subscribe(&self) -> Subscription {
        let (tx, rx) = mpsc::channel(self.capacity);
        let tail = Tail::default();
        self.subs.lock().push(Subscriber {
            tx,
            tail: tail.clone(),
            last_seq: None,
        });
        Subscription { rx, tail }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subs.lock().len()
    }

    pub fn publish(&self, event: &StreamEvent) {
        let capacity = self.capacity;
        self.subs
            .lock()
            .retain_mut(|s| match s.tx.try_send(event.clone()) {
                Ok(()) => {
                    if let StreamEvent::Batch(b) = event {
                        s.last_seq = Some(b.seq);
                    }
                    true
                }
                Err(TrySendError::Full(_)) => {
                    tracing::warn!(capacity, "dropping slow stream subscriber");
                    *s.tail.lock() = Some(StreamEvent::Overflow(OverflowNotice {
                        reason: format!("subscriber queue of {capacity} events overflowed"),
                        last_delivered_seq: s.last_seq,
                    }));
                    false
                }
                Err(TrySendError::Closed(_)) => false,
            });
    }

    /// End every subscription, announcing `Closed` when `announce` is set.
    pub fn close_all(&self, announce: bool) {
        for s in self.subs.lock().drain(..) {
            if announce && s.tx.try_send(StreamEvent::Closed).is_err() {
                s.tail.lock().get_or_insert(StreamEvent::Closed);
            }
        }
    }
}

impl Subscription {
    pub fn into_stream(self) -> impl Stream<Item = StreamEvent> + Send + 'static {
        let Subscription { rx, tail } = self;
        let live =
            futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|e| (e, rx)) });
        let tail = futures::stream::once(async move { tail.lock().take() })
            .filter_map(futures::future::ready);
        live.chain(tail)
    }
}
