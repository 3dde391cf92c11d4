use std::collections::VecDeque;

/// Seconds of input kept for SAVE.WORK and PLAY.WORK.
pub const RING_SECONDS: f64 = 60.0;

/// Fixed-capacity sample buffer that overwrites its oldest samples.
#[derive(Clone, Debug)]
pub struct RingBuffer {
    samples: VecDeque<f64>,
    capacity: usize,
}

impl RingBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn with_duration(seconds: f64, sample_rate_hz: f64) -> Self {
        Self::new((seconds * sample_rate_hz).round() as usize)
    }

    pub fn push(&mut self, block: &[f64]) {
        let block = &block[block.len().saturating_sub(self.capacity)..];
        let overflow = (self.samples.len() + block.len()).saturating_sub(self.capacity);
        self.samples.drain(..overflow);
        self.samples.extend(block);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    /// Oldest sample first.
    pub fn to_vec(&self) -> Vec<f64> {
        self.samples.iter().copied().collect()
    }
}
