use std::path::Path;

use serde_json::json;

use jam_core::rules::{rules_broken, Span};
use jam_core::transcript::parse_transcript;
use jam_core::{analyze, GameConfig, Lexicons, Topic, TranscriptToken};

use crate::table::{num, render};
use crate::{CliError, Format};

fn span_text(span: &Span, tokens: &[TranscriptToken]) -> String {
    match *span {
        Span::Tokens { start, end } => {
            let words: Vec<String> = tokens[start..end.min(tokens.len())].iter().map(|t| t.surface()).collect();
            let mut text = words.join(" ");
            if text.chars().count() > 48 {
                text = text.chars().take(45).collect::<String>() + "...";
            }
            format!("tokens {start}..{end} \"{text}\"")
        }
        Span::Gap { after } => format!("gap after token {after}"),
    }
}

pub fn run(topic: &str, config: &GameConfig, file: &Path, format: Format) -> Result<String, CliError> {
    let lex = Lexicons::default();
    let text = std::fs::read_to_string(file).map_err(CliError::io(format!("reading {}", file.display())))?;
    let transcript = parse_transcript(&text, &lex).map_err(|e| CliError::Transcript(e.to_string()))?;
    let tokens = transcript.tokens;
    let topic = Topic::new(topic);
    let report = analyze(&tokens, &topic, &config.detectors, &lex).map_err(|e| CliError::Game(e.to_string()))?;
    let rb = rules_broken(&report).map_err(|_| {
        CliError::ZeroLengthSpeech(format!("{} contains no words to analyze", file.display()))
    })?;
    Ok(match format {
        Format::Lines => {
            let mut out = String::new();
            for v in &report.violations {
                let line = json!({
                    "type": "violation",
                    "kind": v.kind,
                    "span": v.span,
                    "detected_at_ms": v.detected_at_ms,
                    "detail": v.describe(),
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
            let summary = json!({
                "type": "report",
                "topic": topic.title,
                "speech_length": report.speech_length,
                "hesitation_count": report.hesitation_count,
                "repetition_count": report.repetition_count,
                "deviation_count": report.deviation_count,
                "rules_broken": rb.value(),
            });
            out.push_str(&summary.to_string());
            out.push('\n');
            out
        }
        Format::Table => {
            let rows: Vec<Vec<String>> = report
                .violations
                .iter()
                .map(|v| {
                    vec![
                        v.kind.to_string(),
                        span_text(&v.span, &tokens),
                        v.detected_at_ms.to_string(),
                        v.describe(),
                    ]
                })
                .collect();
            let mut out = format!("topic: {}\n", topic.title);
            out.push_str(&render(&["kind", "span", "at_ms", "detail"], &rows));
            out.push_str(&format!(
                "\nspeech_length {}  hesitations {}  repeated_words {}  deviations {}\nRulesBroken {} ({}/{})\n",
                report.speech_length,
                report.hesitation_count,
                report.repetition_count,
                report.deviation_count,
                num(rb.value()),
                rb.broken,
                rb.speech_length
            ));
            out
        }
    })
}
