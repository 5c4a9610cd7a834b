//! Violation detection over a single speech.
//!
//! Three independent detectors (hesitation, repetition, deviation) each
//! return a list of [`Violation`]s. [`analyze`] runs all three and fills a
//! [`ViolationReport`] whose counts follow the metric definitions:
//! distinct hesitation units, distinct repeated words, and maximal
//! off-topic spans. Violations drive challenges; counts drive metrics, so
//! a word repeated four times yields three challengeable violations but
//! adds one to `repetition_count`.

mod deviation;
mod hesitation;
mod repetition;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicons;
use crate::transcript::{speech_length, TranscriptToken};

pub use deviation::{detect_deviations, sentence_ranges, window_ranges, OverlapJudge, TopicJudge};
pub use hesitation::{detect_hesitations, HesitationConfig};
pub use repetition::detect_repetitions;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("topic has no content words")]
    EmptyTopic,
    #[error("speech has no word tokens")]
    ZeroLengthSpeech,
    #[error("topic judge failed: {0}")]
    Judge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    Hesitation,
    Repetition,
    Deviation,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 3] = [
        ViolationKind::Hesitation,
        ViolationKind::Repetition,
        ViolationKind::Deviation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Hesitation => "hesitation",
            ViolationKind::Repetition => "repetition",
            ViolationKind::Deviation => "deviation",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hesitation" => Ok(ViolationKind::Hesitation),
            "repetition" => Ok(ViolationKind::Repetition),
            "deviation" => Ok(ViolationKind::Deviation),
            other => Err(format!("unknown rule `{other}`")),
        }
    }
}

/// Where a violation sits in the analyzed token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Span {
    /// Tokens `start..end` (end exclusive).
    Tokens { start: usize, end: usize },
    /// The silent gap between token `after` and token `after + 1`.
    Gap { after: usize },
}

impl Span {
    /// Position on the interleaved axis where token `i` is `2i` and the gap
    /// after it is `2i + 1`.
    pub fn anchor(&self) -> usize {
        match *self {
            Span::Tokens { start, .. } => 2 * start,
            Span::Gap { after } => 2 * after + 1,
        }
    }

    /// Last token index touched by the span.
    pub fn last_token(&self) -> usize {
        match *self {
            Span::Tokens { end, .. } => end.saturating_sub(1),
            Span::Gap { after } => after + 1,
        }
    }

    pub fn is_valid_for(&self, len: usize) -> bool {
        match *self {
            Span::Tokens { start, end } => start < end && end <= len,
            Span::Gap { after } => after + 1 < len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Repetition {
        word: String,
        occurrence: usize,
    },
    Hesitation {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        fillers: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap_ms: Option<u64>,
    },
    Deviation {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub span: Span,
    pub evidence: Evidence,
    /// Segment-relative time at which the offending span ends.
    pub detected_at_ms: u64,
}

/// Stable identity of a violation within one speech: detectors never move
/// the anchor of an existing repetition or hesitation when tokens are
/// appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViolationKey {
    pub kind: ViolationKind,
    pub anchor: usize,
}

impl Violation {
    pub fn key(&self) -> ViolationKey {
        ViolationKey {
            kind: self.kind,
            anchor: self.span.anchor(),
        }
    }

    /// Short human-readable description used in narration and feedback.
    pub fn describe(&self) -> String {
        match &self.evidence {
            Evidence::Repetition { word, occurrence } => {
                format!("repeated \"{word}\" (occurrence {occurrence})")
            }
            Evidence::Hesitation { fillers, gap_ms } => match (fillers.is_empty(), gap_ms) {
                (false, Some(g)) => format!("hesitated with \"{}\" and a {g} ms pause", fillers.join(" ")),
                (false, None) => format!("hesitated with \"{}\"", fillers.join(" ")),
                (true, Some(g)) => format!("paused for {g} ms"),
                (true, None) => "hesitated".to_string(),
            },
            Evidence::Deviation { text } => {
                let preview: String = text.split_whitespace().take(8).collect::<Vec<_>>().join(" ");
                format!("went off topic (\"{preview}...\")")
            }
        }
    }
}

/// A topic together with optional expansion terms the deviation judge
/// accepts as on-topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub title: String,
    #[serde(default)]
    pub expansion_terms: BTreeSet<String>,
}

impl Topic {
    pub fn new(title: impl Into<String>) -> Self {
        Topic {
            title: title.into(),
            expansion_terms: BTreeSet::new(),
        }
    }

    pub fn with_expansion<I, S>(mut self, terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.expansion_terms.extend(
            terms
                .into_iter()
                .map(|t| crate::transcript::normalize_word(t.as_ref()))
                .filter(|t| !t.is_empty()),
        );
        self
    }

    /// All normalized title words; these are exempt from repetition.
    pub fn words(&self) -> BTreeSet<String> {
        self.title
            .split_whitespace()
            .map(crate::transcript::normalize_word)
            .filter(|w| !w.is_empty())
            .collect()
    }

    /// Title words that are not common words, plus expansion terms.
    pub fn content_bag(&self, lex: &Lexicons) -> BTreeSet<String> {
        let mut bag: BTreeSet<String> =
            self.words().into_iter().filter(|w| !lex.is_common(w)).collect();
        bag.extend(self.expansion_terms.iter().cloned());
        bag
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    #[serde(flatten)]
    pub hesitation: HesitationConfig,
    pub repetition_threshold: usize,
    /// Minimum topic-bag hits for a window to count as on-topic.
    pub deviation_overlap_threshold: usize,
    pub deviation_window_sentences: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            hesitation: HesitationConfig::default(),
            repetition_threshold: 2,
            deviation_overlap_threshold: 1,
            deviation_window_sentences: 3,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.hesitation.validate()?;
        if self.repetition_threshold < 2 {
            return Err("repetition_threshold must be at least 2".into());
        }
        if self.deviation_overlap_threshold == 0 {
            return Err("deviation_overlap_threshold must be positive".into());
        }
        if self.deviation_window_sentences == 0 {
            return Err("deviation_window_sentences must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    pub hesitation_count: usize,
    pub repetition_count: usize,
    pub deviation_count: usize,
    pub speech_length: usize,
}

impl ViolationReport {
    pub fn from_violations(violations: Vec<Violation>, speech_length: usize) -> Self {
        let count = |k| violations.iter().filter(|v| v.kind == k).count();
        let repeated_words: BTreeSet<&str> = violations
            .iter()
            .filter_map(|v| match &v.evidence {
                Evidence::Repetition { word, .. } => Some(word.as_str()),
                _ => None,
            })
            .collect();
        ViolationReport {
            hesitation_count: count(ViolationKind::Hesitation),
            repetition_count: repeated_words.len(),
            deviation_count: count(ViolationKind::Deviation),
            violations,
            speech_length,
        }
    }

    pub fn rules_broken(&self) -> usize {
        self.hesitation_count + self.repetition_count + self.deviation_count
    }

    pub fn of_kind(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.kind == kind)
    }
}

/// Runs all three detectors with the content-overlap topic judge.
pub fn analyze(
    tokens: &[TranscriptToken],
    topic: &Topic,
    cfg: &DetectorConfig,
    lex: &Lexicons,
) -> Result<ViolationReport, RuleError> {
    let judge = OverlapJudge::new(topic, lex, cfg.deviation_overlap_threshold);
    analyze_with_judge(tokens, topic, cfg, lex, &judge)
}

pub fn analyze_with_judge(
    tokens: &[TranscriptToken],
    topic: &Topic,
    cfg: &DetectorConfig,
    lex: &Lexicons,
    judge: &dyn TopicJudge,
) -> Result<ViolationReport, RuleError> {
    let mut violations = detect_hesitations(tokens, &cfg.hesitation);
    violations.extend(detect_repetitions(
        tokens,
        &topic.words(),
        lex,
        cfg.repetition_threshold,
    ));
    if !tokens.is_empty() {
        violations.extend(detect_deviations(
            tokens,
            topic,
            judge,
            cfg.deviation_window_sentences,
        )?);
    }
    Ok(ViolationReport::from_violations(violations, speech_length(tokens)))
}

/// Ratio of broken rules to speech length, kept as exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesBroken {
    pub broken: usize,
    pub speech_length: usize,
}

impl RulesBroken {
    pub fn value(&self) -> f64 {
        self.broken as f64 / self.speech_length as f64
    }
}

/// `(hesitations + repetitions + deviations) / speech_length`.
pub fn rules_broken(report: &ViolationReport) -> Result<RulesBroken, RuleError> {
    if report.speech_length == 0 {
        return Err(RuleError::ZeroLengthSpeech);
    }
    Ok(RulesBroken {
        broken: report.rules_broken(),
        speech_length: report.speech_length,
    })
}

pub fn rules_broken_pct(report: &ViolationReport) -> Result<f64, RuleError> {
    rules_broken(report).map(|r| r.value())
}
