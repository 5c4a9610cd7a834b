use std::path::Path;
use std::sync::Arc;

use serde_json::json;

use jam_core::engine::{parse_log, replay, GameSummary};
use jam_core::Lexicons;

use crate::table::{num, render};
use crate::{CliError, Format};

/// Replays a log and summarizes it. A log that stops before the game ends
/// (or whose last line was cut off) yields the summary of its prefix,
/// flagged incomplete.
pub fn run(file: &Path, format: Format) -> Result<String, CliError> {
    let text = std::fs::read_to_string(file).map_err(CliError::io(format!("reading {}", file.display())))?;
    let log = parse_log(&text)?;
    let game = replay(&log.header, &log.events, Arc::new(Lexicons::default()))?;
    let summary = game.summary();
    let incomplete = !summary.complete;
    Ok(match format {
        Format::Lines => {
            let line = json!({
                "type": "summary",
                "seed": log.header.config.rng_seed,
                "incomplete": incomplete,
                "torn_tail": log.torn_tail,
                "events": log.events.len(),
                "summary": summary,
            });
            line.to_string() + "\n"
        }
        Format::Table => table(&summary, log.header.config.rng_seed, log.events.len(), log.torn_tail),
    })
}

fn table(s: &GameSummary, seed: u64, events: usize, torn: bool) -> String {
    let status = match (s.complete, s.end_reason) {
        (true, Some(r)) => format!("complete ({r:?})"),
        _ => "incomplete: the log ends before the game does".to_string(),
    };
    let mut out = format!("seed {seed}  events {events}  status {status}\n");
    if torn {
        out.push_str("note: the final line was cut off and was skipped\n");
    }
    out.push('\n');
    let rows: Vec<Vec<String>> = s
        .scores
        .iter()
        .map(|p| {
            let mark = if s.winners.contains(&p.player) { "winner" } else { "" };
            vec![p.player.to_string(), p.name.clone(), p.points.to_string(), mark.to_string()]
        })
        .collect();
    out.push_str(&render(&["seat", "name", "points", ""], &rows));
    out.push_str("\nPerformanceScore by round (human seat)\n");
    let rows: Vec<Vec<String>> = s
        .performance_scores
        .iter()
        .enumerate()
        .map(|(i, p)| vec![(i + 1).to_string(), p.map_or("-".to_string(), |v| v.to_string())])
        .collect();
    out.push_str(&render(&["round", "score"], &rows));
    out.push_str("\nSpeeches\n");
    let rows: Vec<Vec<String>> = s
        .speeches
        .iter()
        .map(|sp| {
            vec![
                sp.segment.to_string(),
                (sp.round + 1).to_string(),
                sp.speaker.to_string(),
                sp.speech_length.to_string(),
                sp.hesitation_count.to_string(),
                sp.repetition_count.to_string(),
                sp.deviation_count.to_string(),
                sp.rules_broken.map_or("-".to_string(), num),
            ]
        })
        .collect();
    out.push_str(&render(
        &["segment", "round", "speaker", "words", "hes", "rep", "dev", "rules_broken"],
        &rows,
    ));
    if let Some(n) = &s.narration {
        out.push_str(&format!("\n{n}\n"));
    }
    out
}
