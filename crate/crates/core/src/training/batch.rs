use crate::error::{Error, Result};

/// One step's worth of segments, one per lane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Index of the segment within each lane.
    pub segment: usize,
    pub inputs: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
}

/// Contiguous-lane batching.
///
/// The stream is cut into `batch_size` lanes of `(len - 1) / batch_size`
/// tokens each; lane `i` starts at `i * lane_len` and yields successive
/// `tgt_len` segments, so segment `s + 1` of a lane directly continues
/// segment `s`. Targets are the inputs shifted by one token, which may
/// read the first token of the next lane.
#[derive(Clone, Debug)]
pub struct BatchIterator<'a> {
    tokens: &'a [u32],
    batch_size: usize,
    tgt_len: usize,
    lane_len: usize,
    next: usize,
}

pub fn batch_iterator(tokens: &[u32], batch_size: usize, tgt_len: usize) -> Result<BatchIterator<'_>> {
    if batch_size == 0 || tgt_len == 0 {
        return Err(Error::invalid("batch_size and tgt_len must be positive"));
    }
    let needed = batch_size * (tgt_len + 1);
    if tokens.len() < needed {
        return Err(Error::CorpusTooSmall {
            needed,
            got: tokens.len(),
        });
    }
    Ok(BatchIterator {
        tokens,
        batch_size,
        tgt_len,
        lane_len: (tokens.len() - 1) / batch_size,
        next: 0,
    })
}

impl BatchIterator<'_> {
    /// Full segments per lane (one pass over the data).
    pub fn segments_per_lane(&self) -> usize {
        self.lane_len / self.tgt_len
    }

    pub fn lane_len(&self) -> usize {
        self.lane_len
    }

    /// Rewinds to the first segment.
    pub fn reset(&mut self) {
        self.next = 0;
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.segments_per_lane() {
            return None;
        }
        let s = self.next;
        self.next += 1;
        let mut batch = Batch {
            segment: s,
            inputs: Vec::with_capacity(self.batch_size),
            targets: Vec::with_capacity(self.batch_size),
        };
        for lane in 0..self.batch_size {
            let start = lane * self.lane_len + s * self.tgt_len;
            batch.inputs.push(self.tokens[start..start + self.tgt_len].to_vec());
            batch
                .targets
                .push(self.tokens[start + 1..start + 1 + self.tgt_len].to_vec());
        }
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanes_are_contiguous() {
        let tokens: Vec<u32> = (0..=21).collect();
        let batches: Vec<Batch> = batch_iterator(&tokens, 2, 5).unwrap().collect();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].inputs[0], vec![0, 1, 2, 3, 4]);
        assert_eq!(batches[0].targets[0], vec![1, 2, 3, 4, 5]);
        assert_eq!(batches[1].inputs[0], vec![5, 6, 7, 8, 9]);
        assert_eq!(batches[1].targets[0], vec![6, 7, 8, 9, 10]);
        assert_eq!(batches[0].inputs[1], vec![10, 11, 12, 13, 14]);
        for b in &batches {
            for (i, t) in b.inputs.iter().zip(&b.targets) {
                assert_eq!(&i[1..], &t[..4]);
            }
        }
    }

    #[test]
    fn too_small_corpus_rejected() {
        let tokens: Vec<u32> = (0..10).collect();
        assert!(matches!(
            batch_iterator(&tokens, 2, 5),
            Err(Error::CorpusTooSmall { needed: 12, got: 10 })
        ));
    }
}
