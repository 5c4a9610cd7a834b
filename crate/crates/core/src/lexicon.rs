//! Word lists used by analysis: repetition-exempt common words, filler
//! words, and phrases that transcription providers invent over silence.
//!
//! Lexicons load from a plain-text file with `[common]`, `[filler]` and
//! `[hallucination]` section headers and one entry per line. `#` starts a
//! comment line.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::normalize_word;

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: entry outside of a section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicons {
    pub common_words: BTreeSet<String>,
    pub filler_words: BTreeSet<String>,
    /// Phrases as normalized word sequences, in file order.
    pub hallucination_phrases: Vec<Vec<String>>,
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is well-formed")
    }
}

#[derive(Clone, Copy)]
enum Section {
    Common,
    Filler,
    Hallucination,
}

impl Lexicons {
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicons {
            common_words: BTreeSet::new(),
            filler_words: BTreeSet::new(),
            hallucination_phrases: Vec::new(),
        };
        let mut section = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "common" => Section::Common,
                    "filler" => Section::Filler,
                    "hallucination" => Section::Hallucination,
                    other => {
                        return Err(LexiconError::UnknownSection {
                            line: idx + 1,
                            name: other.to_string(),
                        })
                    }
                });
                continue;
            }
            let words: Vec<String> = line
                .split_whitespace()
                .map(normalize_word)
                .filter(|w| !w.is_empty())
                .collect();
            if words.is_empty() {
                continue;
            }
            match section {
                None => return Err(LexiconError::NoSection { line: idx + 1 }),
                Some(Section::Common) => lex.common_words.extend(words),
                Some(Section::Filler) => lex.filler_words.extend(words),
                Some(Section::Hallucination) => {
                    if !lex.hallucination_phrases.contains(&words) {
                        lex.hallucination_phrases.push(words);
                    }
                }
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_common(&self, word: &str) -> bool {
        self.common_words.contains(word)
    }

    pub fn is_filler(&self, word: &str) -> bool {
        self.filler_words.contains(word)
    }
}
