//! Byte-pair encoding and bimodal input assembly.

mod bpe;
mod input;

pub use bpe::{
    piece_counts, pre_tokenize, train_bpe, SpecialIds, TokenizerModel, CLS, EOS, PAD, SEP, SPECIAL_IDS, UNK,
};
pub use input::{build_model_input, truncate_head_only, EncodedPair, DEFAULT_BUDGET};
