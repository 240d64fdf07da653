use crate::diffcore::Rng;
use crate::error::{Error, Result};

/// Endless stream of index batches over `0..n`, reshuffled every epoch. The
/// last batch of an epoch may be short.
#[derive(Clone, Debug)]
pub struct BatchStream {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    epoch: usize,
    rng: Rng,
}

impl BatchStream {
    pub fn new(n: usize, batch_size: usize, rng: Rng) -> Result<Self> {
        if batch_size == 0 || n == 0 {
            return Err(Error::invalid(
                "BatchStream::new",
                format!("n = {n}, batch_size = {batch_size}"),
            ));
        }
        let mut s = Self {
            order: (0..n).collect(),
            batch_size,
            pos: 0,
            epoch: 0,
            rng,
        };
        s.rng.shuffle(&mut s.order);
        Ok(s)
    }

    /// Completed epochs so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos == self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }

    /// The remaining batches of the current epoch.
    pub fn epoch_batches(&mut self) -> Vec<Vec<usize>> {
        let start = self.epoch;
        let mut out = vec![self.next_batch()];
        while self.pos < self.order.len() && self.epoch == start {
            out.push(self.next_batch());
        }
        out
    }
}

impl Iterator for BatchStream {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_batch())
    }
}
