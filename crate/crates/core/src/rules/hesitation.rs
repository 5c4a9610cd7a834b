use serde::{Deserialize, Serialize};

use crate::transcript::TranscriptToken;

use super::{Evidence, Span, Violation, ViolationKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HesitationConfig {
    /// Silent gaps at least this long are hesitations.
    pub gap_threshold_ms: u64,
    /// Qualifying silent gaps exempted at the start of each speech.
    pub allowed_silent_pauses: usize,
    /// Consecutive filler tokens that form a hesitation on their own.
    pub filler_run_min: usize,
    /// A single filler next to a gap at least this long is a hesitation.
    pub filler_plus_gap_ms: u64,
}

impl Default for HesitationConfig {
    fn default() -> Self {
        HesitationConfig {
            gap_threshold_ms: 1500,
            allowed_silent_pauses: 3,
            filler_run_min: 2,
            filler_plus_gap_ms: 600,
        }
    }
}

impl HesitationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.gap_threshold_ms == 0 || self.filler_plus_gap_ms == 0 || self.filler_run_min == 0 {
            return Err("hesitation thresholds must be positive".into());
        }
        Ok(())
    }
}

fn gap_after(tokens: &[TranscriptToken], j: usize) -> u64 {
    tokens[j + 1].start_ms.saturating_sub(tokens[j].end_ms)
}

/// Finds hesitation units.
///
/// Conditions are laid out on an interleaved axis (token `i` at `2i`, the
/// gap after it at `2i + 1`): a non-exempt silent gap, a run of fillers,
/// or a filler next to a long-enough gap. Touching or overlapping
/// conditions merge into one unit.
pub fn detect_hesitations(tokens: &[TranscriptToken], cfg: &HesitationConfig) -> Vec<Violation> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let n = tokens.len();
    let mut intervals: Vec<(usize, usize)> = Vec::new();

    (0..n - 1)
        .filter(|&j| gap_after(tokens, j) >= cfg.gap_threshold_ms)
        .skip(cfg.allowed_silent_pauses)
        .for_each(|j| intervals.push((2 * j + 1, 2 * j + 1)));

    let mut i = 0;
    while i < n {
        if !tokens[i].is_filler {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && tokens[i].is_filler {
            i += 1;
        }
        if i - start >= cfg.filler_run_min {
            intervals.push((2 * start, 2 * (i - 1)));
        }
    }

    for i in (0..n).filter(|&i| tokens[i].is_filler) {
        if i > 0 && gap_after(tokens, i - 1) >= cfg.filler_plus_gap_ms {
            intervals.push((2 * i - 1, 2 * i));
        }
        if i + 1 < n && gap_after(tokens, i) >= cfg.filler_plus_gap_ms {
            intervals.push((2 * i, 2 * i + 1));
        }
    }

    intervals.sort_unstable();
    let mut units: Vec<(usize, usize)> = Vec::new();
    for (a, b) in intervals {
        match units.last_mut() {
            Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
            _ => units.push((a, b)),
        }
    }

    units.into_iter().map(|(a, b)| unit_violation(tokens, cfg, a, b)).collect()
}

fn unit_violation(tokens: &[TranscriptToken], cfg: &HesitationConfig, a: usize, b: usize) -> Violation {
    let first_tok = a.div_ceil(2);
    let last_tok = b / 2;
    let fillers: Vec<String> = if first_tok <= last_tok {
        tokens[first_tok..=last_tok]
            .iter()
            .filter(|t| t.is_filler)
            .map(|t| t.text.clone())
            .collect()
    } else {
        Vec::new()
    };
    // Ordinary inter-word gaps inside a filler run are not pauses.
    let pause_floor = cfg.filler_plus_gap_ms.min(cfg.gap_threshold_ms);
    let gap_ms = (a..=b)
        .filter(|p| p % 2 == 1)
        .map(|p| gap_after(tokens, (p - 1) / 2))
        .filter(|&g| g >= pause_floor)
        .max();
    let span = if a == b && a % 2 == 1 {
        Span::Gap { after: (a - 1) / 2 }
    } else {
        Span::Tokens {
            start: first_tok,
            end: last_tok + 1,
        }
    };
    let detected_at_ms = if b % 2 == 1 {
        tokens[b.div_ceil(2)].start_ms
    } else {
        tokens[b / 2].end_ms
    };
    Violation {
        kind: ViolationKind::Hesitation,
        span,
        evidence: Evidence::Hesitation { fillers, gap_ms },
        detected_at_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicons;
    use crate::transcript::SpeechBatch;

    fn speech(text: &str) -> Vec<TranscriptToken> {
        SpeechBatch::from_text(text, &Lexicons::default()).tokens
    }

    fn no_allowance() -> HesitationConfig {
        HesitationConfig {
            allowed_silent_pauses: 0,
            ..HesitationConfig::default()
        }
    }

    #[test]
    fn fluent_speech_has_no_hesitations() {
        let toks = speech("the cat sat [pause:1000] on the mat [pause:1419] today");
        assert!(detect_hesitations(&toks, &no_allowance()).is_empty());
    }

    #[test]
    fn single_long_gap_without_allowance() {
        // 2120 ms marker + 80 ms synthetic gap = 2200 ms of silence.
        let toks = speech("one two [pause:2120] three");
        let v = detect_hesitations(&toks, &no_allowance());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].span, Span::Gap { after: 1 });
        assert_eq!(
            v[0].evidence,
            Evidence::Hesitation { fillers: vec![], gap_ms: Some(2200) }
        );
        assert_eq!(v[0].detected_at_ms, toks[2].start_ms);
    }

    #[test]
    fn allowance_exempts_the_first_gaps() {
        let toks = speech("a [pause:1600] b [pause:1600] c [pause:1600] d [pause:1600] e");
        let v = detect_hesitations(&toks, &HesitationConfig::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].span, Span::Gap { after: 3 });
    }

    #[test]
    fn filler_runs_merge_into_one_unit() {
        let toks = speech("so um uh er we begin");
        let v = detect_hesitations(&toks, &HesitationConfig::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].span, Span::Tokens { start: 1, end: 4 });
        assert_eq!(
            v[0].evidence,
            Evidence::Hesitation { fillers: vec!["um".into(), "uh".into(), "er".into()], gap_ms: None }
        );
    }

    #[test]
    fn isolated_filler_is_not_a_hesitation() {
        let toks = speech("so um we begin");
        assert!(detect_hesitations(&toks, &HesitationConfig::default()).is_empty());
    }

    #[test]
    fn filler_next_to_a_pause_is_a_hesitation() {
        let toks = speech("so um [pause:700] we begin");
        let v = detect_hesitations(&toks, &HesitationConfig::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].span, Span::Tokens { start: 1, end: 2 });
        assert_eq!(
            v[0].evidence,
            Evidence::Hesitation { fillers: vec!["um".into()], gap_ms: Some(780) }
        );
    }

    #[test]
    fn filler_run_and_long_gap_form_one_unit() {
        let toks = speech("so um uh [pause:3000] we begin");
        let v = detect_hesitations(&toks, &no_allowance());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].span, Span::Tokens { start: 1, end: 3 });
    }

    #[test]
    fn fillers_have_no_allowance() {
        let toks = speech("um uh a um uh b um uh c um uh d");
        let cfg = HesitationConfig { allowed_silent_pauses: 10, ..HesitationConfig::default() };
        assert_eq!(detect_hesitations(&toks, &cfg).len(), 4);
    }
}
