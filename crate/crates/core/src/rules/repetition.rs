use std::collections::{BTreeSet, HashMap};

use crate::lexicon::Lexicons;
use crate::transcript::TranscriptToken;

use super::{Evidence, Span, Violation, ViolationKind};

/// Flags every occurrence numbered `threshold` or later (1-based) of a word
/// that is neither a common word nor a topic word.
pub fn detect_repetitions(
    tokens: &[TranscriptToken],
    topic_words: &BTreeSet<String>,
    lex: &Lexicons,
    threshold: usize,
) -> Vec<Violation> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        let word = tok.text.as_str();
        if word.is_empty() || lex.is_common(word) || topic_words.contains(word) {
            continue;
        }
        let n = seen.entry(word).or_default();
        *n += 1;
        if *n >= threshold {
            out.push(Violation {
                kind: ViolationKind::Repetition,
                span: Span::Tokens { start: i, end: i + 1 },
                evidence: Evidence::Repetition {
                    word: word.to_string(),
                    occurrence: *n,
                },
                detected_at_ms: tok.end_ms,
            });
        }
    }
    out
}
