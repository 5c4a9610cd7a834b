use crate::engine::{EventPayload, Player, PlayerId};
use crate::rules::ViolationKind;

use super::PersonaError;

pub fn round_intro(round_number: usize, topic: &str) -> String {
    format!("Welcome to round {round_number}! Your topic is \"{topic}\", and you have just a minute, starting now.")
}

pub fn verdict(challenger: &str, speaker: &str, rule: ViolationKind, accepted: bool, evidence: Option<&str>) -> String {
    if accepted {
        let why = evidence.map(|e| format!(" {speaker} {e}.")).unwrap_or_default();
        format!(
            "{challenger} challenges {speaker} for {rule}.{why} Correct challenge! {challenger} takes a point and carries on the subject with the time that remains."
        )
    } else {
        format!(
            "{challenger} challenges {speaker} for {rule}, but I can't uphold that. Incorrect challenge, so {speaker} gets a point and keeps going."
        )
    }
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => "nobody".to_string(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

pub fn game_end(winners: &[&str], scores: &[(&str, i64)]) -> String {
    let table: Vec<String> = scores.iter().map(|(n, s)| format!("{n} {s}")).collect();
    let cheer = if winners.len() > 1 {
        format!("Congratulations to {}, who share the win!", join_names(winners))
    } else {
        format!("Congratulations to {}!", join_names(winners))
    };
    format!("That brings the game to a close. Final scores: {}. {cheer}", table.join(", "))
}

/// Template narration for the events the host speaks over.
pub fn host_narration(event: &EventPayload, players: &[Player]) -> Result<String, PersonaError> {
    let name = |id: PlayerId| players.iter().find(|p| p.id == id).map_or("someone", |p| p.name.as_str());
    match event {
        EventPayload::RoundStarted { round, topic, .. } => Ok(round_intro(round + 1, topic)),
        EventPayload::VerdictIssued {
            challenger,
            target,
            rule,
            accepted,
            matched,
            ..
        } => {
            let evidence = matched.as_ref().map(|v| v.describe());
            Ok(verdict(name(*challenger), name(*target), *rule, *accepted, evidence.as_deref()))
        }
        EventPayload::GameEnded { winners, scores, .. } => {
            let w: Vec<&str> = winners.iter().map(|&p| name(p)).collect();
            let s: Vec<(&str, i64)> = scores.iter().map(|&(p, s)| (name(p), s)).collect();
            Ok(game_end(&w, &s))
        }
        other => Err(PersonaError::UnsupportedEvent(other.name().to_string())),
    }
}
