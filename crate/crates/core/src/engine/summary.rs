use serde::{Deserialize, Serialize};

use crate::rules::rules_broken;

use super::game::{analyze_speech, Game, RoundStatus};
use super::{EndReason, EventPayload, GameError, PlayerId, HUMAN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerScore {
    pub player: PlayerId,
    pub name: String,
    pub points: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechSummary {
    pub segment: usize,
    pub round: usize,
    pub speaker: PlayerId,
    pub speech_length: usize,
    pub hesitation_count: usize,
    pub repetition_count: usize,
    pub deviation_count: usize,
    /// `None` for a speech with no words.
    pub rules_broken: Option<f64>,
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    /// False when summarizing a game that has not ended (e.g. a truncated log).
    pub complete: bool,
    pub end_reason: Option<EndReason>,
    pub scores: Vec<PlayerScore>,
    pub winners: Vec<PlayerId>,
    /// The human's performance score per round; `None` for unfinished rounds.
    pub performance_scores: Vec<Option<i64>>,
    pub speeches: Vec<SpeechSummary>,
    pub narration: Option<String>,
}

impl GameSummary {
    pub fn winner_names(&self) -> Vec<&str> {
        self.winners
            .iter()
            .filter_map(|w| self.scores.iter().find(|s| s.player == *w).map(|s| s.name.as_str()))
            .collect()
    }
}

impl Game {
    /// Summary of a finished game.
    pub fn summarize(&self) -> Result<GameSummary, GameError> {
        if !self.is_ended() {
            return Err(GameError::GameNotEnded);
        }
        Ok(self.summary())
    }

    /// Summary of whatever has been played so far.
    pub fn summary(&self) -> GameSummary {
        let scores = self
            .players()
            .iter()
            .map(|p| PlayerScore {
                player: p.id,
                name: p.name.clone(),
                points: self.score(p.id),
            })
            .collect();
        let performance_scores = self
            .rounds()
            .iter()
            .map(|r| {
                (r.status == RoundStatus::Finished)
                    .then(|| self.performance_score(r.index, HUMAN).ok())
                    .flatten()
            })
            .collect();
        let speeches = self
            .segments()
            .iter()
            .map(|seg| {
                let topic = &self.rounds()[seg.round].topic;
                let report = analyze_speech(&seg.tokens, topic, &self.config().detectors, self.lexicons());
                SpeechSummary {
                    segment: seg.id,
                    round: seg.round,
                    speaker: seg.speaker,
                    speech_length: report.speech_length,
                    hesitation_count: report.hesitation_count,
                    repetition_count: report.repetition_count,
                    deviation_count: report.deviation_count,
                    rules_broken: rules_broken(&report).ok().map(|r| r.value()),
                    feedback: None,
                }
            })
            .collect();
        let narration = self.events().iter().rev().find_map(|e| match &e.payload {
            EventPayload::GameEnded { narration, .. } => Some(narration.clone()),
            _ => None,
        });
        GameSummary {
            complete: self.is_ended(),
            end_reason: self.end_reason(),
            scores,
            winners: self.winners().to_vec(),
            performance_scores,
            speeches,
            narration,
        }
    }
}
