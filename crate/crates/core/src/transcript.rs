//! Tokenization, normalization and timestamp handling for speech text.
//!
//! Every whitespace-delimited word becomes one [`TranscriptToken`]. Leading
//! punctuation stays in `raw`, trailing punctuation moves to
//! `trailing_punct`, and `text` is the lowercase core used by every
//! detector. Chunks made only of punctuation ("…", "—") attach to the
//! preceding token instead of producing an empty word.
//!
//! Typed speech has no timing, so tokens get synthetic timestamps:
//! [`SYNTHETIC_WORD_MS`] per word with a [`SYNTHETIC_GAP_MS`] gap, and
//! `[pause:<ms>]` markers widen the gap before the next word. A written
//! ellipsis is a trailing-off pause and adds [`SYNTHETIC_ELLIPSIS_MS`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicons;

pub const SYNTHETIC_WORD_MS: u64 = 350;
pub const SYNTHETIC_GAP_MS: u64 = 80;
/// Extra silence after a word ending in "..." or "…" in typed text.
pub const SYNTHETIC_ELLIPSIS_MS: u64 = 700;

fn has_ellipsis(s: &str) -> bool {
    s.contains("...") || s.contains('…')
}

/// First line of the timestamped token format.
pub const TIMED_HEADER: &str = "# jam-tokens v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("timing has {timings} entries but the text has {words} words")]
    TimingMismatch { words: usize, timings: usize },
    #[error("token {index} has invalid timing: {reason}")]
    InvalidTiming { index: usize, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranscriptToken {
    pub text: String,
    pub raw: String,
    pub start_ms: u64,
    pub end_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trailing_punct: Option<String>,
    #[serde(default)]
    pub is_filler: bool,
}

impl TranscriptToken {
    /// Builds a token from a surface word, splitting off trailing punctuation.
    pub fn from_surface(word: &str, start_ms: u64, end_ms: u64, lex: &Lexicons) -> Self {
        let (lead, core, trail) = split_surface(word);
        let text = normalize_word(core);
        TranscriptToken {
            is_filler: lex.is_filler(&text),
            text,
            raw: format!("{lead}{core}"),
            start_ms,
            end_ms,
            trailing_punct: (!trail.is_empty()).then(|| trail.to_string()),
        }
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    /// Surface form with trailing punctuation reattached.
    pub fn surface(&self) -> String {
        match &self.trailing_punct {
            Some(p) => format!("{}{}", self.raw, p),
            None => self.raw.clone(),
        }
    }

    /// True when the trailing punctuation closes a sentence (`.`, `!`, `?`,
    /// but not an ellipsis).
    pub fn ends_sentence(&self) -> bool {
        let Some(p) = &self.trailing_punct else {
            return false;
        };
        let p = p.trim_end_matches(['"', '\'', '”', '’', ')', ']']);
        if p.ends_with("...") || p.ends_with('…') {
            return false;
        }
        p.ends_with(['.', '!', '?'])
    }

    pub fn shifted(&self, offset_ms: u64) -> Self {
        TranscriptToken {
            start_ms: self.start_ms + offset_ms,
            end_ms: self.end_ms + offset_ms,
            ..self.clone()
        }
    }

    /// Moves the token earlier; times saturate at zero.
    pub fn shifted_back(&self, offset_ms: u64) -> Self {
        TranscriptToken {
            start_ms: self.start_ms.saturating_sub(offset_ms),
            end_ms: self.end_ms.saturating_sub(offset_ms),
            ..self.clone()
        }
    }
}

/// A span of an audio chunk the provider reported as free of speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilenceSpan {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl SilenceSpan {
    pub fn new(start_ms: u64, end_ms: u64) -> Option<Self> {
        (start_ms < end_ms).then_some(SilenceSpan { start_ms, end_ms })
    }

    pub fn contains(&self, start_ms: u64, end_ms: u64) -> bool {
        self.start_ms <= start_ms && end_ms <= self.end_ms
    }
}

/// Per-word timing supplied by a transcription provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordTiming {
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Lowercases and strips surrounding punctuation. Curly apostrophes are
/// folded to `'` so "it’s" and "it's" compare equal.
pub fn normalize_word(word: &str) -> String {
    let (_, core, _) = split_surface(word);
    core.to_lowercase().replace('’', "'")
}

fn split_surface(word: &str) -> (&str, &str, &str) {
    let Some(first) = word.find(char::is_alphanumeric) else {
        return (word, "", "");
    };
    let last = word
        .char_indices()
        .filter(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .last()
        .unwrap_or(word.len());
    (&word[..first], &word[first..last], &word[last..])
}

fn pause_marker(chunk: &str) -> Option<u64> {
    chunk
        .strip_prefix("[pause:")?
        .strip_suffix(']')?
        .trim_end_matches("ms")
        .parse()
        .ok()
}

enum Chunk<'a> {
    Word(&'a str),
    Punct(&'a str),
    Pause(u64),
}

fn chunks(raw_text: &str) -> impl Iterator<Item = Chunk<'_>> {
    raw_text.split_whitespace().map(|c| {
        if let Some(ms) = pause_marker(c) {
            Chunk::Pause(ms)
        } else if c.contains(char::is_alphanumeric) {
            Chunk::Word(c)
        } else {
            Chunk::Punct(c)
        }
    })
}

struct Builder<'l> {
    lex: &'l Lexicons,
    tokens: Vec<TranscriptToken>,
    pending_lead: String,
}

impl Builder<'_> {
    fn word(&mut self, word: &str, start_ms: u64, end_ms: u64) {
        let mut tok = TranscriptToken::from_surface(word, start_ms, end_ms, self.lex);
        if !self.pending_lead.is_empty() {
            tok.raw = std::mem::take(&mut self.pending_lead) + &tok.raw;
        }
        self.tokens.push(tok);
    }

    fn punct(&mut self, p: &str) {
        match self.tokens.last_mut() {
            Some(prev) => prev.trailing_punct.get_or_insert_with(String::new).push_str(p),
            None => self.pending_lead.push_str(p),
        }
    }
}

/// Tokenizes typed text with synthetic timing starting at 0 ms.
pub fn tokenize(raw_text: &str, lex: &Lexicons) -> Vec<TranscriptToken> {
    SpeechBatch::from_text(raw_text, lex).tokens
}

/// Tokenizes text whose words come with provider timing, one entry per word
/// (punctuation-only chunks and pause markers take no timing entry).
pub fn tokenize_with_timing(
    raw_text: &str,
    timing: &[WordTiming],
    lex: &Lexicons,
) -> Result<Vec<TranscriptToken>, TranscriptError> {
    let words = chunks(raw_text).filter(|c| matches!(c, Chunk::Word(_))).count();
    if words != timing.len() {
        return Err(TranscriptError::TimingMismatch {
            words,
            timings: timing.len(),
        });
    }
    let mut b = Builder {
        lex,
        tokens: Vec::with_capacity(words),
        pending_lead: String::new(),
    };
    let mut times = timing.iter();
    for chunk in chunks(raw_text) {
        match chunk {
            Chunk::Word(w) => {
                let t = times.next().expect("counted above");
                b.word(w, t.start_ms, t.end_ms);
            }
            Chunk::Punct(p) => b.punct(p),
            Chunk::Pause(_) => {}
        }
    }
    validate_sequence(&b.tokens)?;
    Ok(b.tokens)
}

/// Checks the ordering invariants: `start <= end`, ordered by start, no overlap.
pub fn validate_sequence(tokens: &[TranscriptToken]) -> Result<(), TranscriptError> {
    for (i, t) in tokens.iter().enumerate() {
        if t.start_ms > t.end_ms {
            return Err(TranscriptError::InvalidTiming {
                index: i,
                reason: format!("start {} after end {}", t.start_ms, t.end_ms),
            });
        }
        if i > 0 && tokens[i - 1].end_ms > t.start_ms {
            return Err(TranscriptError::InvalidTiming {
                index: i,
                reason: format!(
                    "starts at {} before previous token ends at {}",
                    t.start_ms,
                    tokens[i - 1].end_ms
                ),
            });
        }
    }
    Ok(())
}

/// A run of tokens with timing relative to the start of the batch, plus the
/// length of audio (or typed time) the batch covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechBatch {
    pub tokens: Vec<TranscriptToken>,
    pub duration_ms: u64,
}

impl SpeechBatch {
    /// Typed text with synthetic timing. The duration includes the gap after
    /// the last word and any trailing pause marker.
    pub fn from_text(raw_text: &str, lex: &Lexicons) -> Self {
        let mut b = Builder {
            lex,
            tokens: Vec::new(),
            pending_lead: String::new(),
        };
        let mut cursor = 0u64;
        for chunk in chunks(raw_text) {
            match chunk {
                Chunk::Word(w) => {
                    b.word(w, cursor, cursor + SYNTHETIC_WORD_MS);
                    cursor += SYNTHETIC_WORD_MS + SYNTHETIC_GAP_MS;
                    if b.tokens.last().and_then(|t| t.trailing_punct.as_deref()).is_some_and(has_ellipsis) {
                        cursor += SYNTHETIC_ELLIPSIS_MS;
                    }
                }
                Chunk::Punct(p) => {
                    if has_ellipsis(p) && !b.tokens.is_empty() {
                        cursor += SYNTHETIC_ELLIPSIS_MS;
                    }
                    b.punct(p)
                }
                Chunk::Pause(ms) => cursor += ms,
            }
        }
        SpeechBatch {
            tokens: b.tokens,
            duration_ms: cursor,
        }
    }

    /// Batch whose duration ends right after the last token (or is zero).
    pub fn from_tokens(tokens: Vec<TranscriptToken>) -> Self {
        let duration_ms = tokens.last().map_or(0, |t| t.end_ms);
        SpeechBatch {
            tokens,
            duration_ms,
        }
    }
}

/// Removes hallucinated phrases that lie entirely inside a reported silence.
///
/// Matching is on normalized text, longest phrase first. Removal can make a
/// new phrase adjacent, so passes repeat until nothing changes.
pub fn sanitize_hallucinations(
    tokens: &[TranscriptToken],
    silences: &[SilenceSpan],
    lex: &Lexicons,
) -> Vec<TranscriptToken> {
    let mut phrases: Vec<&Vec<String>> = lex
        .hallucination_phrases
        .iter()
        .filter(|p| !p.is_empty())
        .collect();
    phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));

    let mut current: Vec<TranscriptToken> = tokens.to_vec();
    if silences.is_empty() || phrases.is_empty() {
        return current;
    }
    loop {
        let mut kept = Vec::with_capacity(current.len());
        let mut i = 0;
        while i < current.len() {
            let hit = phrases.iter().find_map(|p| {
                let end = i + p.len();
                if end > current.len() {
                    return None;
                }
                let run = &current[i..end];
                let text_match = run.iter().zip(p.iter()).all(|(t, w)| &t.text == w);
                let (s, e) = (run[0].start_ms, run[run.len() - 1].end_ms);
                (text_match && silences.iter().any(|sp| sp.contains(s, e))).then_some(end)
            });
            match hit {
                Some(end) => i = end,
                None => {
                    kept.push(current[i].clone());
                    i += 1;
                }
            }
        }
        if kept.len() == current.len() {
            return kept;
        }
        current = kept;
    }
}

/// Number of word tokens. Punctuation is never a token; fillers are words.
pub fn speech_length(tokens: &[TranscriptToken]) -> usize {
    tokens.len()
}

/// Joins surface forms with single spaces.
pub fn reassemble(tokens: &[TranscriptToken]) -> String {
    tokens
        .iter()
        .map(TranscriptToken::surface)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A transcript read from a file: plain text or the timestamped token format.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranscriptFile {
    pub tokens: Vec<TranscriptToken>,
    pub silences: Vec<SilenceSpan>,
    /// Covered length; for plain text this is the synthetic duration.
    pub duration_ms: u64,
}

/// Parses a transcript file. Files whose first non-blank line is
/// [`TIMED_HEADER`] use the timestamped format:
///
/// ```text
/// # jam-tokens v1
/// 0 350 So,
/// 430 780 uh,
/// silence 1500 4000
/// duration 5000
/// ```
///
/// Anything else is treated as plain text with synthetic timing.
pub fn parse_transcript(text: &str, lex: &Lexicons) -> Result<TranscriptFile, TranscriptError> {
    let first = text.lines().find(|l| !l.trim().is_empty());
    if first.map(str::trim) != Some(TIMED_HEADER) {
        let batch = SpeechBatch::from_text(text, lex);
        return Ok(TranscriptFile {
            tokens: batch.tokens,
            silences: Vec::new(),
            duration_ms: batch.duration_ms,
        });
    }
    let mut out = TranscriptFile::default();
    let mut explicit_duration = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: &str| TranscriptError::Parse {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let mut parts = line.splitn(3, char::is_whitespace);
        let head = parts.next().unwrap_or_default();
        match head {
            "silence" => {
                let s = parts.next().and_then(|v| v.trim().parse().ok());
                let e = parts.next().and_then(|v| v.trim().parse().ok());
                let (Some(s), Some(e)) = (s, e) else {
                    return Err(err("expected `silence <start_ms> <end_ms>`"));
                };
                out.silences
                    .push(SilenceSpan::new(s, e).ok_or_else(|| err("empty silence span"))?);
            }
            "duration" => {
                explicit_duration = Some(
                    parts
                        .next()
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| err("expected `duration <ms>`"))?,
                );
            }
            _ => {
                let start: u64 = head.parse().map_err(|_| err("expected start ms"))?;
                let end: u64 = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| err("expected end ms"))?;
                let word = parts.next().map(str::trim).unwrap_or_default();
                if !word.contains(char::is_alphanumeric) {
                    return Err(err("expected a word"));
                }
                out.tokens
                    .push(TranscriptToken::from_surface(word, start, end, lex));
            }
        }
    }
    validate_sequence(&out.tokens)?;
    let last_end = out.tokens.last().map_or(0, |t| t.end_ms);
    let last_silence = out.silences.iter().map(|s| s.end_ms).max().unwrap_or(0);
    out.duration_ms = explicit_duration.unwrap_or(last_end.max(last_silence));
    Ok(out)
}

/// Writes tokens and silences in the timestamped token format.
pub fn format_timed(tokens: &[TranscriptToken], silences: &[SilenceSpan], duration_ms: u64) -> String {
    let mut out = String::from(TIMED_HEADER);
    out.push('\n');
    for t in tokens {
        let _ = writeln!(out, "{} {} {}", t.start_ms, t.end_ms, t.surface());
    }
    for s in silences {
        let _ = writeln!(out, "silence {} {}", s.start_ms, s.end_ms);
    }
    let _ = writeln!(out, "duration {duration_ms}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicons {
        Lexicons::default()
    }

    fn texts(tokens: &[TranscriptToken]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn splits_trailing_punctuation() {
        let toks = tokenize("I like milk.", &lex());
        assert_eq!(texts(&toks), ["i", "like", "milk"]);
        assert_eq!(toks[2].trailing_punct.as_deref(), Some("."));
        assert_eq!(toks[0].raw, "I");
        assert!(toks[2].ends_sentence());
    }

    #[test]
    fn marks_fillers() {
        let toks = tokenize("So, uh, the most embarrassing moment of my life…", &lex());
        let uh = toks.iter().find(|t| t.text == "uh").unwrap();
        assert!(uh.is_filler);
        assert_eq!(uh.trailing_punct.as_deref(), Some(","));
        assert!(!toks.last().unwrap().ends_sentence());
    }

    #[test]
    fn empty_input_yields_no_tokens() {
        assert!(tokenize("", &lex()).is_empty());
        assert!(tokenize("   \n ", &lex()).is_empty());
        assert_eq!(SpeechBatch::from_text("", &lex()).duration_ms, 0);
    }

    #[test]
    fn synthetic_timing_and_pause_markers() {
        let b = SpeechBatch::from_text("one two [pause:2000] three", &lex());
        let times: Vec<(u64, u64)> = b.tokens.iter().map(|t| (t.start_ms, t.end_ms)).collect();
        assert_eq!(times, [(0, 350), (430, 780), (2860, 3210)]);
        assert_eq!(b.duration_ms, 3290);
    }

    #[test]
    fn ellipsis_adds_a_pause() {
        let b = SpeechBatch::from_text("so… um then ... uh", &lex());
        let t = &b.tokens;
        assert_eq!(t[1].start_ms - t[0].end_ms, SYNTHETIC_GAP_MS + SYNTHETIC_ELLIPSIS_MS);
        assert_eq!(t[3].start_ms - t[2].end_ms, SYNTHETIC_GAP_MS + SYNTHETIC_ELLIPSIS_MS);
        assert_eq!(t[2].start_ms - t[1].end_ms, SYNTHETIC_GAP_MS);
    }

    #[test]
    fn contractions_and_curly_apostrophes() {
        let toks = tokenize("It’s fine, it's fine", &lex());
        assert_eq!(texts(&toks), ["it's", "fine", "it's", "fine"]);
    }

    #[test]
    fn punctuation_only_chunks_attach_to_neighbours() {
        let toks = tokenize("\" wait … what ?", &lex());
        assert_eq!(texts(&toks), ["wait", "what"]);
        assert_eq!(toks[0].raw, "\"wait");
        assert_eq!(toks[0].trailing_punct.as_deref(), Some("…"));
        assert!(toks[1].ends_sentence());
    }

    #[test]
    fn ellipsis_is_not_a_sentence_boundary() {
        let toks = tokenize("and... boom! done.\" right?!", &lex());
        let ends: Vec<bool> = toks.iter().map(TranscriptToken::ends_sentence).collect();
        assert_eq!(ends, [false, true, true, true]);
    }

    #[test]
    fn timing_hints_must_match_word_count() {
        let t = [WordTiming { start_ms: 0, end_ms: 10 }];
        assert_eq!(
            tokenize_with_timing("a b", &t, &lex()),
            Err(TranscriptError::TimingMismatch { words: 2, timings: 1 })
        );
        let t = [
            WordTiming { start_ms: 0, end_ms: 100 },
            WordTiming { start_ms: 50, end_ms: 120 },
        ];
        assert!(matches!(
            tokenize_with_timing("a b", &t, &lex()),
            Err(TranscriptError::InvalidTiming { index: 1, .. })
        ));
    }

    fn timed(words: &[(&str, u64, u64)]) -> Vec<TranscriptToken> {
        words
            .iter()
            .map(|(w, s, e)| TranscriptToken::from_surface(w, *s, *e, &lex()))
            .collect()
    }

    #[test]
    fn removes_silence_aligned_hallucination() {
        let toks = timed(&[("thanks", 0, 400), ("for", 400, 700), ("watching", 700, 1200)]);
        let silence = [SilenceSpan::new(0, 5000).unwrap()];
        assert!(sanitize_hallucinations(&toks, &silence, &lex()).is_empty());
    }

    #[test]
    fn keeps_phrase_in_genuine_speech() {
        let toks = timed(&[
            ("thanks", 0, 400),
            ("for", 400, 700),
            ("watching", 700, 1200),
            ("the", 1200, 1300),
            ("match", 1300, 1700),
        ]);
        let silence = [SilenceSpan::new(3000, 8000).unwrap()];
        assert_eq!(sanitize_hallucinations(&toks, &silence, &lex()), toks);
        // Partially inside silence is still genuine speech.
        let partial = [SilenceSpan::new(500, 8000).unwrap()];
        assert_eq!(sanitize_hallucinations(&toks, &partial, &lex()), toks);
        assert!(sanitize_hallucinations(&[], &silence, &lex()).is_empty());
    }

    #[test]
    fn prefers_the_longest_phrase() {
        let toks = timed(&[
            ("thank", 0, 200),
            ("you", 200, 400),
            ("for", 400, 600),
            ("watching", 600, 900),
            ("hello", 2000, 2300),
        ]);
        let silence = [SilenceSpan::new(0, 1000).unwrap()];
        let out = sanitize_hallucinations(&toks, &silence, &lex());
        assert_eq!(texts(&out), ["hello"]);
    }

    #[test]
    fn nested_phrases_are_removed_to_a_fixpoint() {
        let toks = timed(&[
            ("thanks", 0, 200),
            ("goodbye", 200, 400),
            ("for", 400, 600),
            ("watching", 600, 800),
        ]);
        let silence = [SilenceSpan::new(0, 1000).unwrap()];
        assert!(sanitize_hallucinations(&toks, &silence, &lex()).is_empty());
    }

    #[test]
    fn timed_format_round_trips() {
        let toks = timed(&[("Hello,", 0, 300), ("world.", 400, 800)]);
        let sil = [SilenceSpan::new(900, 2000).unwrap()];
        let text = format_timed(&toks, &sil, 2500);
        let parsed = parse_transcript(&text, &lex()).unwrap();
        assert_eq!(parsed.tokens, toks);
        assert_eq!(parsed.silences, sil);
        assert_eq!(parsed.duration_ms, 2500);
    }

    #[test]
    fn timed_format_reports_bad_lines() {
        let text = format!("{TIMED_HEADER}\n0 100 ok\nnonsense here\n");
        assert!(matches!(
            parse_transcript(&text, &lex()),
            Err(TranscriptError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn speech_length_counts_word_tokens() {
        assert_eq!(speech_length(&[]), 0);
        assert_eq!(speech_length(&tokenize("I like milk.", &lex())), 3);
        assert_eq!(speech_length(&tokenize("um , uh ... well", &lex())), 3);
    }

    const VOCAB: &[&str] = &[
        "thanks", "for", "watching", "goodbye", "thank", "you", "the", "match", "milk", "hello",
    ];

    fn arb_tokens() -> impl Strategy<Value = Vec<TranscriptToken>> {
        prop::collection::vec((0..VOCAB.len(), 0u64..400, 1u64..500), 0..30).prop_map(|spec| {
            let mut cursor = 0;
            spec.into_iter()
                .map(|(w, gap, len)| {
                    let start = cursor + gap;
                    cursor = start + len;
                    TranscriptToken::from_surface(VOCAB[w], start, start + len, &Lexicons::default())
                })
                .collect()
        })
    }

    fn arb_silences() -> impl Strategy<Value = Vec<SilenceSpan>> {
        prop::collection::vec((0u64..10_000, 1u64..4000), 0..4).prop_map(|v| {
            v.into_iter()
                .filter_map(|(s, len)| SilenceSpan::new(s, s + len))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn sanitize_is_idempotent(toks in arb_tokens(), sil in arb_silences()) {
            let once = sanitize_hallucinations(&toks, &sil, &lex());
            let twice = sanitize_hallucinations(&once, &sil, &lex());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn sanitize_only_removes_tokens_inside_silence(toks in arb_tokens(), sil in arb_silences()) {
            let out = sanitize_hallucinations(&toks, &sil, &lex());
            prop_assert!(speech_length(&out) <= speech_length(&toks));
            // Brute-force overlap oracle: every removed token lies inside some silence.
            let mut j = 0;
            for t in &toks {
                if j < out.len() && out[j] == *t {
                    j += 1;
                } else {
                    prop_assert!(sil.iter().any(|s| s.start_ms <= t.start_ms && t.end_ms <= s.end_ms));
                }
            }
            prop_assert_eq!(j, out.len());
        }

        #[test]
        fn tokenize_reassembles_input(words in prop::collection::vec("[A-Za-z][A-Za-z']{0,7}[,.!?]?", 0..20)) {
            let input = words.join("  ");
            let toks = tokenize(&input, &lex());
            prop_assert_eq!(toks.len(), words.len());
            prop_assert_eq!(reassemble(&toks), words.join(" "));
            prop_assert!(validate_sequence(&toks).is_ok());
            for t in &toks {
                prop_assert_eq!(&t.text, &t.text.to_lowercase());
                prop_assert!(!t.text.ends_with(|c: char| !c.is_alphanumeric()));
            }
        }
    }
}
