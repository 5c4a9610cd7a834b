//! End-of-game critique for a single speech.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rules::{Span, Topic, ViolationKind, ViolationReport};
use crate::transcript::{reassemble, TranscriptToken};

use super::{Gateway, GatewayError};

/// Shortest word run counted as a repeated phrase.
const MIN_PHRASE_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCritique {
    pub segment: Option<usize>,
    pub critique: String,
    /// Spans of the speech the critique refers to.
    pub spans: Vec<Span>,
}

impl FeedbackCritique {
    pub fn spans_exist_in(&self, len: usize) -> bool {
        self.spans.iter().all(|s| s.is_valid_for(len))
    }
}

/// Maximal word runs of at least three words that occur more than once.
/// Returns the phrase and every occurrence as a token span.
fn repeated_phrases(tokens: &[TranscriptToken]) -> Vec<(String, Vec<Span>)> {
    let words: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    let mut found: Vec<(String, Vec<Span>)> = Vec::new();
    let mut covered = vec![false; words.len()];
    for n in (MIN_PHRASE_WORDS..=words.len() / 2).rev() {
        let mut seen: BTreeMap<&[&str], Vec<usize>> = BTreeMap::new();
        for start in 0..=words.len() - n {
            seen.entry(&words[start..start + n]).or_default().push(start);
        }
        for (gram, starts) in seen {
            // Non-overlapping occurrences not already inside a longer phrase.
            let mut picked: Vec<usize> = Vec::new();
            for s in starts {
                let free = !covered[s..s + n].iter().any(|&c| c);
                if free && picked.last().is_none_or(|&p| p + n <= s) {
                    picked.push(s);
                }
            }
            if picked.len() < 2 {
                continue;
            }
            for &s in &picked {
                covered[s..s + n].iter_mut().for_each(|c| *c = true);
            }
            let spans = picked.iter().map(|&s| Span::Tokens { start: s, end: s + n }).collect();
            found.push((gram.join(" "), spans));
        }
    }
    found.sort_by_key(|(_, spans)| spans[0].anchor());
    found
}

fn kind_advice(kind: ViolationKind) -> &'static str {
    match kind {
        ViolationKind::Hesitation => {
            "When you need a moment to think, finish the sentence you are in and let a deliberate full stop buy you the time instead of filling it with \"um\" or a long pause."
        }
        ViolationKind::Repetition => {
            "Keep a few synonyms in reserve for the words a topic invites you to lean on, and switch sentence openings so a phrase never comes round twice."
        }
        ViolationKind::Deviation => {
            "Every detour should lead back to the subject within a sentence; if a story wanders, tie its last line to the topic."
        }
    }
}

const ENGAGEMENT: &str = "To make the speech more entertaining, build it around one vivid anecdote, use sensory detail so listeners can see and hear the moment, and try a rhetorical device such as a question to the audience or a rule of three.";

/// Rule-based critique: cites repeated phrases and each violation kind
/// present, then gives engagement advice.
fn offline_critique(tokens: &[TranscriptToken], topic: &Topic, report: &ViolationReport) -> FeedbackCritique {
    let mut parts = vec![format!("Thank you for your speech on \"{}\".", topic.title)];
    let mut spans = Vec::new();
    let phrases = repeated_phrases(tokens);
    for (phrase, occ) in &phrases {
        parts.push(format!(
            "You used the phrase \"{phrase}\" {} times, which counts as repetition; rephrase the second one.",
            occ.len()
        ));
        spans.extend(occ.iter().copied());
    }
    for kind in ViolationKind::ALL {
        let mut of_kind = report.of_kind(kind).peekable();
        let Some(first) = of_kind.peek().copied() else { continue };
        let n = report.of_kind(kind).count();
        let plural = if n == 1 { "" } else { "s" };
        parts.push(format!(
            "I noticed {n} {kind}{plural}, for example you {}. {}",
            first.describe(),
            kind_advice(kind)
        ));
        spans.extend(of_kind.map(|v| v.span));
    }
    parts.push(ENGAGEMENT.to_string());
    FeedbackCritique {
        segment: None,
        critique: parts.join(" "),
        spans,
    }
}

/// Critique of one speech. The prompt carries the topic, the full speech
/// and the violation evidence; offline the critique is rule-based.
pub fn generate_feedback(
    gateway: &Gateway,
    tokens: &[TranscriptToken],
    topic: &Topic,
    report: &ViolationReport,
) -> Result<FeedbackCritique, GatewayError> {
    if tokens.is_empty() {
        return Err(GatewayError::EmptySpeech);
    }
    let mut out = offline_critique(tokens, topic, report);
    if gateway.is_live() {
        let evidence: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.kind, v.describe()))
            .collect();
        let evidence = if evidence.is_empty() { "none".to_string() } else { evidence.join("; ") };
        let text = gateway.complete(
            "feedback",
            &[
                ("topic", topic.title.clone()),
                ("violations", evidence),
                ("speech", reassemble(tokens)),
            ],
        )?;
        if !text.trim().is_empty() {
            out.critique = text.trim().to_string();
        }
    }
    out.spans.retain(|s| s.is_valid_for(tokens.len()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicons;
    use crate::rules::{analyze, DetectorConfig};
    use crate::transcript::SpeechBatch;

    fn critique(text: &str, topic: &str) -> (FeedbackCritique, usize) {
        let lex = Lexicons::default();
        let toks = SpeechBatch::from_text(text, &lex).tokens;
        let topic = Topic::new(topic);
        let report = analyze(&toks, &topic, &DetectorConfig::default(), &lex).unwrap();
        (generate_feedback(&Gateway::offline(), &toks, &topic, &report).unwrap(), toks.len())
    }

    #[test]
    fn repeated_phrase_is_cited() {
        let (c, len) = critique("My dog is lazy. He likes to eat and he likes to sleep.", "My Pet");
        assert!(c.critique.contains("\"he likes to\""), "{}", c.critique);
        assert!(c.critique.contains("repetition"));
        assert!(c.spans.contains(&Span::Tokens { start: 4, end: 7 }));
        assert!(c.spans.contains(&Span::Tokens { start: 9, end: 12 }));
        assert!(c.spans_exist_in(len));
    }

    #[test]
    fn clean_speech_gets_only_engagement_advice() {
        let (c, _) = critique("My pet cat sleeps all afternoon beside the warm window.", "My Pet");
        assert!(c.spans.is_empty());
        for k in ["hesitation", "repetition", "deviation"] {
            assert!(!c.critique.contains(k), "{}", c.critique);
        }
        assert!(c.critique.contains("anecdote"));
    }

    #[test]
    fn each_kind_present_is_cited() {
        let (c, len) = critique("Um, uh, my dog chases my dog's ball near the dog park.", "Cats");
        assert!(c.critique.contains("hesitation"), "{}", c.critique);
        assert!(c.critique.contains("repetition"), "{}", c.critique);
        assert!(c.spans_exist_in(len));
    }

    #[test]
    fn empty_speech_is_rejected() {
        let report = ViolationReport::from_violations(Vec::new(), 0);
        assert_eq!(
            generate_feedback(&Gateway::offline(), &[], &Topic::new("x"), &report),
            Err(GatewayError::EmptySpeech)
        );
    }
}
