//! Byte-level BPE: training, encoding, decoding, and the two-file
//! persistence format.
//!
//! Text is pre-tokenized into pieces (a word run or a single punctuation
//! character, optionally carrying one leading space; other whitespace forms
//! its own pieces), then each piece's UTF-8 bytes are mapped to printable
//! characters so every token string is free of tabs, newlines and spaces.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use crate::corpus::{write_atomic, PreparedInput};
use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const EOS: &str = "[EOS]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";

/// Reserved ids, below every learned token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: u32,
    pub sep: u32,
    pub eos: u32,
    pub pad: u32,
    pub unk: u32,
}

pub const SPECIAL_IDS: SpecialIds = SpecialIds {
    cls: 0,
    sep: 1,
    eos: 2,
    pad: 3,
    unk: 4,
};

const SPECIAL_TOKENS: [&str; 5] = [CLS, SEP, EOS, PAD, UNK];

struct ByteMap {
    to_char: [char; 256],
    to_byte: HashMap<char, u8>,
}

// Printable bytes map to themselves; the rest are shifted above U+00FF.
fn byte_map() -> &'static ByteMap {
    static MAP: OnceLock<ByteMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut to_char = ['\0'; 256];
        let mut to_byte = HashMap::new();
        let mut shifted = 0u32;
        for b in 0..=255u8 {
            let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
            let c = if printable {
                char::from(b)
            } else {
                shifted += 1;
                char::from_u32(255 + shifted).expect("valid code point")
            };
            to_char[b as usize] = c;
            to_byte.insert(c, b);
        }
        ByteMap { to_char, to_byte }
    })
}

fn map_bytes(piece: &str) -> impl Iterator<Item = char> + '_ {
    let map = byte_map();
    piece.bytes().map(move |b| map.to_char[b as usize])
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Word,
    Punct,
    Space,
}

fn class(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() || c == '_' || !c.is_ascii() {
        CharClass::Word
    } else {
        CharClass::Punct
    }
}

/// Splits text into the pieces BPE merges never cross. Concatenating the
/// pieces reproduces the input exactly.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = chars[i].0;
        let (_, c) = chars[i];
        match class(c) {
            CharClass::Space => {
                let mut j = i;
                while j < chars.len() && class(chars[j].1) == CharClass::Space {
                    j += 1;
                }
                // The last plain space before a word or punctuation joins it.
                let attach = j < chars.len() && chars[j - 1].1 == ' ';
                let run_end = if attach { j - 1 } else { j };
                if run_end > i {
                    pieces.push(&text[start..byte_at(&chars, run_end, text.len())]);
                }
                if attach {
                    let piece_start = chars[j - 1].0;
                    let k = word_end(&chars, j);
                    pieces.push(&text[piece_start..byte_at(&chars, k, text.len())]);
                    i = k;
                } else {
                    i = j;
                }
            }
            _ => {
                let k = word_end(&chars, i);
                pieces.push(&text[start..byte_at(&chars, k, text.len())]);
                i = k;
            }
        }
    }
    pieces
}

fn byte_at(chars: &[(usize, char)], idx: usize, len: usize) -> usize {
    chars.get(idx).map_or(len, |&(b, _)| b)
}

// End of the word run or single punctuation char starting at `i`.
fn word_end(chars: &[(usize, char)], i: usize) -> usize {
    match class(chars[i].1) {
        CharClass::Word => {
            let mut k = i;
            while k < chars.len() && class(chars[k].1) == CharClass::Word {
                k += 1;
            }
            k
        }
        _ => i + 1,
    }
}

/// Learned BPE model: vocabulary, ordered merges, reserved special ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerModel {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    merges: Vec<(u32, u32)>,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

impl TokenizerModel {
    fn from_parts(tokens: Vec<String>, merges: Vec<(u32, u32)>) -> Result<Self> {
        let ids: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        if ids.len() != tokens.len() {
            return Err(Error::TokenizerFormat("vocabulary has duplicate tokens".into()));
        }
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if ids.get(*special) != Some(&(i as u32)) {
                return Err(Error::TokenizerFormat(format!("{special} must have id {i}")));
            }
        }
        let mut ranks = HashMap::new();
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let merged = format!(
                "{}{}",
                tokens.get(a as usize).ok_or(Error::UnknownTokenId(a))?,
                tokens.get(b as usize).ok_or(Error::UnknownTokenId(b))?
            );
            let out = *ids
                .get(&merged)
                .ok_or_else(|| Error::TokenizerFormat(format!("merge output {merged:?} missing from vocabulary")))?;
            ranks.insert((a, b), (rank, out));
        }
        Ok(TokenizerModel {
            tokens,
            ids,
            merges,
            ranks,
        })
    }

    pub fn special_ids(&self) -> SpecialIds {
        SPECIAL_IDS
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Merges in learned order, as token-string pairs.
    pub fn merges(&self) -> Vec<(String, String)> {
        self.merges
            .iter()
            .map(|&(a, b)| (self.tokens[a as usize].clone(), self.tokens[b as usize].clone()))
            .collect()
    }

    /// Applies merges by rank to one piece's symbol ids.
    fn merge_piece(&self, mut symbols: Vec<u32>) -> Vec<u32> {
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| {
                    self.ranks
                        .get(&(w[0], w[1]))
                        .map(|&(rank, out)| (rank, w[0], w[1], out))
                })
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, a, b, out)) = best else {
                return symbols;
            };
            symbols = apply_merge(&symbols, a, b, out);
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        let unk = SPECIAL_IDS.unk;
        let mut buf = [0u8; 4];
        for piece in pre_tokenize(text) {
            let mut run: Vec<u32> = Vec::new();
            for c in map_bytes(piece) {
                match self.ids.get(c.encode_utf8(&mut buf) as &str) {
                    Some(&id) if id >= SPECIAL_TOKENS.len() as u32 => run.push(id),
                    _ => {
                        out.extend(self.merge_piece(std::mem::take(&mut run)));
                        out.push(unk);
                    }
                }
            }
            out.extend(self.merge_piece(run));
        }
        out
    }

    /// Concatenates token strings, mapping byte symbols back to text.
    /// Special tokens render as their bracketed names.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let map = byte_map();
        let mut bytes = Vec::new();
        for &id in ids {
            let token = self.token(id).ok_or(Error::UnknownTokenId(id))?;
            if (id as usize) < SPECIAL_TOKENS.len() {
                bytes.extend_from_slice(token.as_bytes());
            } else {
                for c in token.chars() {
                    let b = map
                        .to_byte
                        .get(&c)
                        .ok_or_else(|| Error::TokenizerFormat(format!("token {token:?} has a non-byte symbol")))?;
                    bytes.push(*b);
                }
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// `vocab.txt`: `token<TAB>id` per line, ordered by id.
    pub fn vocab_file(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }

    /// `merges.txt`: `left right` per line, in merge order.
    pub fn merges_file(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.merges() {
            out.push_str(&a);
            out.push(' ');
            out.push_str(&b);
            out.push('\n');
        }
        out
    }

    pub fn from_files(vocab: &str, merges: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in vocab.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::TokenizerFormat(format!("vocab line {}: missing tab", n + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::TokenizerFormat(format!("vocab line {}: bad id", n + 1)))?;
            entries.push((id, tok.to_string()));
        }
        entries.sort();
        if entries.iter().enumerate().any(|(i, (id, _))| i != *id) {
            return Err(Error::TokenizerFormat(
                "vocabulary ids are not contiguous from 0".into(),
            ));
        }
        let tokens: Vec<String> = entries.into_iter().map(|(_, t)| t).collect();
        let lookup: HashMap<&str, u32> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
        let mut pairs = Vec::new();
        for (n, line) in merges.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(' ')
                .ok_or_else(|| Error::TokenizerFormat(format!("merges line {}: expected a pair", n + 1)))?;
            let id = |t: &str| {
                lookup
                    .get(t)
                    .copied()
                    .ok_or_else(|| Error::TokenizerFormat(format!("merges line {}: unknown symbol {t:?}", n + 1)))
            };
            pairs.push((id(a)?, id(b)?));
        }
        Self::from_parts(tokens, pairs)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("vocab.txt"), self.vocab_file().as_bytes())?;
        write_atomic(&dir.join("merges.txt"), self.merges_file().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        Self::from_files(&read("vocab.txt")?, &read("merges.txt")?)
    }
}

fn apply_merge(symbols: &[u32], a: u32, b: u32, out: u32) -> Vec<u32> {
    let mut merged = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
            merged.push(out);
            i += 2;
        } else {
            merged.push(symbols[i]);
            i += 1;
        }
    }
    merged
}

/// Collects weighted pieces of both segments of every input, in sorted order.
pub fn piece_counts<'a>(corpus: impl IntoIterator<Item = &'a PreparedInput>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for input in corpus {
        for text in [&input.comment_text, &input.code_text] {
            for piece in pre_tokenize(text) {
                *counts.entry(map_bytes(piece).collect::<String>()).or_insert(0) += 1;
            }
        }
    }
    counts
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

// Highest count first; ties go to the lexicographically smallest pair.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| Reverse((&self.left, &self.right)).cmp(&Reverse((&other.left, &other.right))))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy BPE over the pieces of every comment and code text.
///
/// Pair frequency counts every adjacent position weighted by piece
/// frequency. Training stops at `vocab_size` or when no pair occurs at
/// least twice.
pub fn train_bpe(corpus: &[PreparedInput], vocab_size: usize) -> Result<TokenizerModel> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot train a tokenizer on an empty corpus".into()));
    }
    let pieces = piece_counts(corpus);
    let alphabet: BTreeSet<char> = pieces.keys().flat_map(|p| p.chars()).collect();
    let minimum = SPECIAL_TOKENS.len() + alphabet.len() + 1;
    if vocab_size < minimum {
        return Err(Error::VocabTooSmall {
            requested: vocab_size,
            minimum,
        });
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    let mut ids: HashMap<String, u32> = HashMap::new();
    for c in &alphabet {
        ids.insert(c.to_string(), tokens.len() as u32);
        tokens.push(c.to_string());
    }
    for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
        ids.insert(s.to_string(), i as u32);
    }

    let mut words: Vec<Vec<u32>> = Vec::with_capacity(pieces.len());
    let mut freqs: Vec<u64> = Vec::with_capacity(pieces.len());
    for (piece, &n) in &pieces {
        words.push(piece.chars().map(|c| ids[&c.to_string()]).collect());
        freqs.push(n);
    }

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (w, symbols) in words.iter().enumerate() {
        for pair in symbols.windows(2) {
            let key = (pair[0], pair[1]);
            *pair_counts.entry(key).or_insert(0) += freqs[w];
            pair_words.entry(key).or_default().insert(w);
        }
    }

    let candidate = |tokens: &[String], pair: (u32, u32), count: u64| Candidate {
        count,
        left: tokens[pair.0 as usize].clone(),
        right: tokens[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| candidate(&tokens, pair, count))
        .collect();

    let mut merges = Vec::new();
    while tokens.len() < vocab_size {
        let Some(best) = heap.pop() else { break };
        let current = pair_counts.get(&best.pair).copied().unwrap_or(0);
        if current != best.count {
            continue; // stale entry
        }
        if best.count < 2 {
            break;
        }
        let (a, b) = best.pair;
        let merged = format!("{}{}", best.left, best.right);
        let new_id = match ids.get(&merged) {
            Some(&id) => id,
            None => {
                let id = tokens.len() as u32;
                ids.insert(merged.clone(), id);
                tokens.push(merged);
                id
            }
        };
        merges.push((a, b));

        let affected: Vec<usize> = {
            let mut v: Vec<usize> = pair_words.remove(&best.pair).unwrap_or_default().into_iter().collect();
            v.sort_unstable();
            v
        };
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for w in affected {
            let old = &words[w];
            if !old.windows(2).any(|p| p[0] == a && p[1] == b) {
                continue;
            }
            let new = apply_merge(old, a, b, new_id);
            for p in old.windows(2) {
                let key = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&key) {
                    *c -= freqs[w];
                }
                touched.insert(key);
            }
            for p in new.windows(2) {
                let key = (p[0], p[1]);
                *pair_counts.entry(key).or_insert(0) += freqs[w];
                pair_words.entry(key).or_default().insert(w);
                touched.insert(key);
            }
            words[w] = new;
        }
        pair_counts.remove(&best.pair);
        for key in touched {
            match pair_counts.get(&key).copied() {
                Some(0) => {
                    pair_counts.remove(&key);
                }
                Some(count) if key != best.pair => heap.push(candidate(&tokens, key, count)),
                _ => {}
            }
        }
    }
    TokenizerModel::from_parts(tokens, merges)
}
