use serde::{Deserialize, Serialize};

use super::bpe::TokenizerModel;
use crate::corpus::PreparedInput;

/// Content budget so that content plus the three specials fills 512 positions.
pub const DEFAULT_BUDGET: usize = 509;

/// Bimodal model input: `[CLS] comment [SEP] code [EOS]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub id: String,
    pub comment_ids: Vec<u32>,
    pub code_ids: Vec<u32>,
    pub input_ids: Vec<u32>,
    pub segment_lengths: (usize, usize),
}

impl EncodedPair {
    pub fn new(tok: &TokenizerModel, id: impl Into<String>, comment_ids: Vec<u32>, code_ids: Vec<u32>) -> Self {
        let sp = tok.special_ids();
        let mut input_ids = Vec::with_capacity(comment_ids.len() + code_ids.len() + 3);
        input_ids.push(sp.cls);
        input_ids.extend_from_slice(&comment_ids);
        input_ids.push(sp.sep);
        input_ids.extend_from_slice(&code_ids);
        input_ids.push(sp.eos);
        EncodedPair {
            id: id.into(),
            segment_lengths: (comment_ids.len(), code_ids.len()),
            comment_ids,
            code_ids,
            input_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }
}

/// Head-only truncation of a (comment, code) pair to `budget` tokens total.
///
/// Tail tokens are removed from the strictly longer segment; on ties the
/// code segment loses first, which makes removals alternate once the two
/// lengths meet.
pub fn truncate_head_only<T: Clone>(comment: &[T], code: &[T], budget: usize) -> (Vec<T>, Vec<T>) {
    let (mut c, mut k) = (comment.len(), code.len());
    while c + k > budget {
        if c > k {
            c -= 1;
        } else {
            k -= 1;
        }
    }
    (comment[..c].to_vec(), code[..k].to_vec())
}

pub fn build_model_input(tok: &TokenizerModel, prepared: &PreparedInput, budget: usize) -> EncodedPair {
    let comment = tok.encode(&prepared.comment_text);
    let code = tok.encode(&prepared.code_text);
    let (comment, code) = truncate_head_only(&comment, &code, budget);
    EncodedPair::new(tok, prepared.id.clone(), comment, code)
}
