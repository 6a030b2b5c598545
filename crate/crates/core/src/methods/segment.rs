use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Graph, PoolKind, Scalar, Tensor};

/// Longest unfinished word carried from one segment into the next for
/// pooling. Longer runs without a space keep only their tail.
pub const MAX_CARRIED_PREFIX: usize = 256;

/// Word-boundary state carried across segments by the character methods.
///
/// `block_pos` is the position inside the current `tgt_len` block (word
/// indices restart with each block), `word_index` the index of the word in
/// progress, and `partial` the ids of that word's characters seen so far.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCursor {
    block_pos: usize,
    word_index: usize,
    partial: Vec<u32>,
}

impl WordCursor {
    pub fn partial(&self) -> &[u32] {
        &self.partial
    }

    /// Word index of every token, continuing from this cursor. The space
    /// shares the index of the word it terminates; indices saturate at
    /// `cap - 1`.
    pub fn segment_indices(&self, tokens: &[u32], space: u32, cap: usize, block: usize) -> Vec<usize> {
        let (mut pos, mut word) = (self.block_pos, self.word_index);
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            if pos == 0 {
                word = 0;
            }
            out.push(word.min(cap.saturating_sub(1)));
            if t == space {
                word += 1;
            }
            pos = (pos + 1) % block.max(1);
        }
        out
    }

    /// The unfinished word carried in from earlier segments and, for the
    /// sequence `prefix ++ tokens`, the start of the word holding each
    /// position.
    pub fn pool_window(&self, tokens: &[u32], space: u32) -> (Vec<u32>, Vec<usize>) {
        let prefix = self.partial.clone();
        let mut starts = Vec::with_capacity(prefix.len() + tokens.len());
        let mut start = 0;
        for (i, &t) in prefix.iter().chain(tokens).enumerate() {
            starts.push(start);
            if t == space {
                start = i + 1;
            }
        }
        (prefix, starts)
    }

    /// Cursor after consuming `tokens`.
    pub fn advance(&self, tokens: &[u32], space: u32, block: usize) -> WordCursor {
        let mut next = self.clone();
        for &t in tokens {
            if next.block_pos == 0 {
                next.word_index = 0;
            }
            if t == space {
                next.word_index += 1;
                next.partial.clear();
            } else {
                next.partial.push(t);
            }
            next.block_pos = (next.block_pos + 1) % block.max(1);
        }
        if next.partial.len() > MAX_CARRIED_PREFIX {
            let cut = next.partial.len() - MAX_CARRIED_PREFIX;
            next.partial.drain(..cut);
        }
        next
    }
}

/// Word index of each position of a fresh sequence.
pub fn word_segment_indices(tokens: &[u32], space: u32, cap: usize) -> Vec<usize> {
    WordCursor::default().segment_indices(tokens, space, cap, tokens.len())
}

/// Start of the word holding each position of a fresh sequence.
pub fn word_starts(tokens: &[u32], space: u32) -> Vec<usize> {
    WordCursor::default().pool_window(tokens, space).1
}

/// Word-segment addend: row `t` is `table[word_index(t)]`.
pub fn word_segment_embed<T: Scalar>(tokens: &[u32], table: &Tensor<T>, space: u32) -> Result<Tensor<T>> {
    let idx = word_segment_indices(tokens, space, table.rows());
    let mut g = Graph::new();
    let t = g.constant(table.clone());
    let out = g.embedding(t, &idx)?;
    Ok(g.value(out).clone())
}

/// Character-pooling addend: row `t` pools the embeddings of the current
/// word's characters at positions `<= t`.
pub fn char_pool_embed<T: Scalar>(
    tokens: &[u32],
    char_embeddings: &Tensor<T>,
    pool: PoolKind,
    space: u32,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let x = g.constant(char_embeddings.clone());
    let out = g.segment_pool(x, &word_starts(tokens, space), pool)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SP: u32 = 3;

    #[test]
    fn space_belongs_to_the_word_it_ends() {
        // "ab cd"
        let toks = [10, 11, SP, 12, 13];
        assert_eq!(word_segment_indices(&toks, SP, 16), vec![0, 0, 0, 1, 1]);
        assert_eq!(word_starts(&toks, SP), vec![0, 0, 0, 3, 3]);
    }

    #[test]
    fn indices_saturate_at_cap() {
        let toks = [10, SP, 10, SP, 10, SP, 10];
        assert_eq!(word_segment_indices(&toks, SP, 2), vec![0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn chunked_cursor_matches_single_pass() {
        let toks = [10, 11, SP, 12, 13, 14, SP, 15, 16];
        let whole = WordCursor::default().segment_indices(&toks, SP, 8, 100);
        let c0 = WordCursor::default();
        let a = c0.segment_indices(&toks[..4], SP, 8, 100);
        let c1 = c0.advance(&toks[..4], SP, 100);
        let b = c1.segment_indices(&toks[4..], SP, 8, 100);
        assert_eq!([a, b].concat(), whole);
        assert_eq!(c1.partial(), &[12]);
        let (prefix, starts) = c1.pool_window(&toks[4..], SP);
        assert_eq!(prefix, vec![12]);
        assert_eq!(starts, vec![0, 0, 0, 0, 4, 4]);
    }

    #[test]
    fn indices_restart_each_block() {
        let toks = [10, SP, 11, SP, 12, SP];
        let c = WordCursor::default();
        assert_eq!(c.segment_indices(&toks, SP, 8, 4), vec![0, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn max_pool_on_cat() {
        let e = Tensor::<f64>::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![2.0, 0.0]]).unwrap();
        let out = char_pool_embed(&[20, 21, 22], &e, PoolKind::Max, SP).unwrap();
        assert_eq!(out.row(0), &[1.0, -2.0]);
        assert_eq!(out.row(1), &[1.0, 3.0]);
    }
}
