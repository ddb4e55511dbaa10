// SPDX-License-Identifier: Apache-2.0

//! Minimum-distance encodings for states and control configurations.
//!
//! Codes are built by a seeded greedy lexicode search: the all-zeros word is
//! accepted first (it is reserved for the terminal error symbol), candidate
//! words are visited in a seed-dependent order and kept when they sit at
//! Hamming distance at least `N` from everything accepted so far. The width
//! grows one bit at a time until `count` words fit.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gf::BitVec;

pub const ERROR_SYMBOL: &str = "ERROR";

/// Widest code the search will try.
pub const MAX_WIDTH: usize = 64;

// Above this width candidates are sampled rather than enumerated.
const ENUMERATE_UP_TO: usize = 20;
const SAMPLE_BUDGET: usize = 1 << 18;
// Shuffled greedy passes per width before widening.
const RESTARTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodingError {
    #[error("code has {0} entries; at least two are needed")]
    TooFewEntries(usize),
    #[error("word has width {found}, code width is {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("no code of width <= {MAX_WIDTH} holds {count} words at distance {level}")]
    TooLarge { count: usize, level: u32 },
    #[error("malformed codebook: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBook {
    protection_level: u32,
    width: usize,
    entries: IndexMap<String, BitVec>,
    error_symbol: String,
}

impl CodeBook {
    /// `count` codewords named `c0..`, `c0` being the all-zeros error word.
    pub fn generate(count: usize, level: u32, seed: u64) -> Result<CodeBook, CodingError> {
        assert!(count >= 1 && level >= 1);
        let words = greedy_lexicode(count, level, seed)?;
        let width = words.1;
        let entries = words
            .0
            .into_iter()
            .enumerate()
            .map(|(i, w)| (format!("c{i}"), BitVec::from_u64(w, width)))
            .collect();
        Ok(CodeBook {
            protection_level: level,
            width,
            entries,
            error_symbol: "c0".to_string(),
        })
    }

    /// Encode `symbols` plus an all-zeros `error_symbol` placed first.
    pub fn for_symbols<S: AsRef<str>>(
        error_symbol: &str,
        symbols: &[S],
        level: u32,
        seed: u64,
    ) -> Result<CodeBook, CodingError> {
        let (words, width) = greedy_lexicode(symbols.len() + 1, level, seed)?;
        let mut entries = IndexMap::new();
        let names = std::iter::once(error_symbol).chain(symbols.iter().map(|s| s.as_ref()));
        for (name, w) in names.zip(words) {
            if entries
                .insert(name.to_string(), BitVec::from_u64(w, width))
                .is_some()
            {
                return Err(CodingError::DuplicateSymbol(name.to_string()));
            }
        }
        Ok(CodeBook {
            protection_level: level,
            width,
            entries,
            error_symbol: error_symbol.to_string(),
        })
    }

    pub fn protection_level(&self) -> u32 {
        self.protection_level
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn error_symbol(&self) -> &str {
        &self.error_symbol
    }

    pub fn error_codeword(&self) -> &BitVec {
        &self.entries[&self.error_symbol]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &BitVec)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn codeword(&self, symbol: &str) -> Option<&BitVec> {
        self.entries.get(symbol)
    }

    /// Exact lookup.
    pub fn decode(&self, word: &BitVec) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, w)| *w == word)
            .map(|(s, _)| s.as_str())
    }

    pub fn decode_u64(&self, word: u64) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, w)| w.to_u64() == word)
            .map(|(s, _)| s.as_str())
    }

    /// Exact minimum pairwise Hamming distance.
    pub fn min_distance(&self) -> Result<u32, CodingError> {
        if self.entries.len() < 2 {
            return Err(CodingError::TooFewEntries(self.entries.len()));
        }
        let words: Vec<&BitVec> = self.entries.values().collect();
        let mut best = u32::MAX;
        for (i, a) in words.iter().enumerate() {
            for b in &words[i + 1..] {
                best = best.min(a.hamming(b));
            }
        }
        Ok(best)
    }

    /// Closest entry; ties go to the earlier entry.
    pub fn nearest_codeword(&self, word: &BitVec) -> Result<(&str, u32), CodingError> {
        if word.len() != self.width {
            return Err(CodingError::WidthMismatch {
                expected: self.width,
                found: word.len(),
            });
        }
        let mut best: Option<(&str, u32)> = None;
        for (s, w) in &self.entries {
            let d = w.hamming(word);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((s.as_str(), d));
            }
        }
        best.ok_or(CodingError::TooFewEntries(0))
    }

    pub fn to_json(&self) -> CodeBookJson {
        CodeBookJson {
            width: self.width,
            protection_level: self.protection_level,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.to_hex()))
                .collect(),
            error: self.error_symbol.clone(),
        }
    }

    pub fn from_json(j: &CodeBookJson) -> Result<CodeBook, CodingError> {
        let mut entries = IndexMap::new();
        for (k, hex) in &j.entries {
            let w = BitVec::from_hex(hex, j.width)
                .ok_or_else(|| CodingError::Malformed(format!("bad codeword {hex:?} for {k}")))?;
            entries.insert(k.clone(), w);
        }
        if !entries.contains_key(&j.error) {
            return Err(CodingError::Malformed(format!(
                "error symbol {:?} has no entry",
                j.error
            )));
        }
        Ok(CodeBook {
            protection_level: j.protection_level,
            width: j.width,
            entries,
            error_symbol: j.error.clone(),
        })
    }
}

/// Serialized form: `{width, protection_level, entries:{symbol:hexword}, error}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBookJson {
    pub width: usize,
    pub protection_level: u32,
    pub entries: IndexMap<String, String>,
    pub error: String,
}

pub fn generate_code(count: usize, level: u32, seed: u64) -> Result<CodeBook, CodingError> {
    CodeBook::generate(count, level, seed)
}

pub fn min_distance(code: &CodeBook) -> Result<u32, CodingError> {
    code.min_distance()
}

pub fn nearest_codeword<'a>(
    code: &'a CodeBook,
    word: &BitVec,
) -> Result<(&'a str, u32), CodingError> {
    code.nearest_codeword(word)
}

/// Returns the accepted words (zero first) and the width used.
fn greedy_lexicode(count: usize, level: u32, seed: u64) -> Result<(Vec<u64>, usize), CodingError> {
    let log2 = usize::BITS - (count.max(2) - 1).leading_zeros();
    let mut width = (log2 as usize).max(1);
    if count >= 2 {
        width = width.max(level as usize);
    }
    let far_enough = |acc: &[u64], w: u64| acc.iter().all(|&a| (a ^ w).count_ones() >= level);
    while width <= MAX_WIDTH {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((width as u64) << 32));
        let attempts = match width {
            0..=12 => RESTARTS,
            13..=ENUMERATE_UP_TO => 4,
            _ => 0,
        };
        for attempt in 0..=attempts {
            let mut accepted = vec![0u64];
            if width <= ENUMERATE_UP_TO {
                let mut candidates: Vec<u64> = (1..1u64 << width).collect();
                // Last resort at this width: plain lexicographic order.
                if attempt < attempts {
                    candidates.shuffle(&mut rng);
                }
                for w in candidates {
                    if accepted.len() == count {
                        break;
                    }
                    if far_enough(&accepted, w) {
                        accepted.push(w);
                    }
                }
            } else {
                let mask = if width == 64 {
                    u64::MAX
                } else {
                    (1u64 << width) - 1
                };
                for _ in 0..SAMPLE_BUDGET {
                    if accepted.len() == count {
                        break;
                    }
                    let w = rng.random::<u64>() & mask;
                    if w != 0 && far_enough(&accepted, w) {
                        accepted.push(w);
                    }
                }
            }
            if accepted.len() >= count {
                return Ok((accepted, width));
            }
        }
        width += 1;
    }
    Err(CodingError::TooLarge { count, level })
}
