use std::collections::BTreeSet;

use crate::lexicon::Lexicons;
use crate::transcript::{reassemble, TranscriptToken};

use super::{Evidence, RuleError, Span, Topic, Violation, ViolationKind};

/// Decides whether a window of speech stays on topic.
pub trait TopicJudge {
    fn on_topic(&self, window: &[TranscriptToken], topic: &Topic) -> Result<bool, RuleError>;
}

/// Baseline judge: a window is on topic when it contains at least
/// `min_hits` tokens from the topic bag (non-common title words plus
/// expansion terms).
#[derive(Debug, Clone)]
pub struct OverlapJudge {
    bag: BTreeSet<String>,
    min_hits: usize,
}

impl OverlapJudge {
    pub fn new(topic: &Topic, lex: &Lexicons, min_hits: usize) -> Self {
        OverlapJudge {
            bag: topic.content_bag(lex),
            min_hits,
        }
    }

    pub fn hits(&self, window: &[TranscriptToken]) -> usize {
        window.iter().filter(|t| self.bag.contains(&t.text)).count()
    }
}

impl TopicJudge for OverlapJudge {
    fn on_topic(&self, window: &[TranscriptToken], _topic: &Topic) -> Result<bool, RuleError> {
        if self.bag.is_empty() {
            return Err(RuleError::EmptyTopic);
        }
        Ok(self.hits(window) >= self.min_hits)
    }
}

/// Token ranges of sentences; a trailing run without terminal punctuation
/// is its own sentence.
pub fn sentence_ranges(tokens: &[TranscriptToken]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.ends_sentence() {
            out.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push((start, tokens.len()));
    }
    out
}

/// Sentence windows of `size` with stride 1; fewer sentences than `size`
/// yields one short window.
pub fn window_ranges(sentences: usize, size: usize) -> Vec<(usize, usize)> {
    if sentences == 0 {
        return Vec::new();
    }
    if sentences <= size {
        return vec![(0, sentences)];
    }
    (0..=sentences - size).map(|i| (i, i + size)).collect()
}

/// Scores each sentence window and merges touching or overlapping off-topic
/// windows into maximal spans, one violation per span.
pub fn detect_deviations(
    tokens: &[TranscriptToken],
    topic: &Topic,
    judge: &dyn TopicJudge,
    window_sentences: usize,
) -> Result<Vec<Violation>, RuleError> {
    if topic.words().is_empty() {
        return Err(RuleError::EmptyTopic);
    }
    let sentences = sentence_ranges(tokens);
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (ws, we) in window_ranges(sentences.len(), window_sentences.max(1)) {
        let (start, end) = (sentences[ws].0, sentences[we - 1].1);
        if judge.on_topic(&tokens[start..end], topic)? {
            continue;
        }
        match spans.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => spans.push((start, end)),
        }
    }
    Ok(spans
        .into_iter()
        .map(|(start, end)| Violation {
            kind: ViolationKind::Deviation,
            span: Span::Tokens { start, end },
            evidence: Evidence::Deviation {
                text: reassemble(&tokens[start..end]),
            },
            detected_at_ms: tokens[end - 1].end_ms,
        })
        .collect())
}
