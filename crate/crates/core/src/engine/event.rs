use std::fmt;

use serde::{Deserialize, Serialize};

use crate::personas::Persona;
use crate::rules::{Violation, ViolationKey, ViolationKind};
use crate::transcript::TranscriptToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u8);

/// The single human seat.
pub const HUMAN: PlayerId = PlayerId(0);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    Human,
    Ai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub id: PlayerId,
    pub name: String,
    pub kind: PlayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorReason {
    RoundStart,
    Challenge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreReason {
    CorrectChallenge,
    IncorrectChallengeBonusToSpeaker,
    RoundWin,
    FullMinuteBonus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Completed,
    Abandoned,
}

/// A claim that survived an appeal, keyed by its new position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRemap {
    pub challenge: usize,
    pub key: Option<ViolationKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum EventPayload {
    GameStarted {
        players: Vec<Player>,
        topics: Vec<String>,
        round_duration_ms: u64,
    },
    RoundStarted {
        round: usize,
        topic: String,
        speaker: PlayerId,
        narration: String,
    },
    FloorTransferred {
        round: usize,
        from: Option<PlayerId>,
        to: PlayerId,
        segment: usize,
        reason: FloorReason,
    },
    /// Tokens in segment time, plus how far the speech clock advanced.
    TokensIngested {
        segment: usize,
        speaker: PlayerId,
        tokens: Vec<TranscriptToken>,
        covered_ms: u64,
    },
    /// A new violation, or a wider span for one already reported under the
    /// same key.
    ViolationDetected {
        segment: usize,
        violation: Violation,
    },
    ChallengeRaised {
        challenge: usize,
        challenger: PlayerId,
        target: PlayerId,
        segment: usize,
        rule: ViolationKind,
        at_ms: u64,
    },
    VerdictIssued {
        challenge: usize,
        challenger: PlayerId,
        target: PlayerId,
        rule: ViolationKind,
        accepted: bool,
        matched: Option<Violation>,
        narration: String,
    },
    ScoreAwarded {
        player: PlayerId,
        delta: i64,
        reason: ScoreReason,
        round: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        challenge: Option<usize>,
    },
    ScoreRevoked {
        player: PlayerId,
        delta: i64,
        reason: ScoreReason,
        round: usize,
        challenge: usize,
    },
    RoundEnded {
        round: usize,
        winner: PlayerId,
        full_minute: bool,
    },
    AppealApplied {
        segment: usize,
        start: usize,
        end: usize,
        replacement: Vec<TranscriptToken>,
        /// Complete violation set of the amended speech.
        violations: Vec<Violation>,
        claims: Vec<ClaimRemap>,
    },
    GameEnded {
        reason: EndReason,
        winners: Vec<PlayerId>,
        scores: Vec<(PlayerId, i64)>,
        narration: String,
    },
}

impl EventPayload {
    pub fn name(&self) -> &'static str {
        match self {
            EventPayload::GameStarted { .. } => "GameStarted",
            EventPayload::RoundStarted { .. } => "RoundStarted",
            EventPayload::FloorTransferred { .. } => "FloorTransferred",
            EventPayload::TokensIngested { .. } => "TokensIngested",
            EventPayload::ViolationDetected { .. } => "ViolationDetected",
            EventPayload::ChallengeRaised { .. } => "ChallengeRaised",
            EventPayload::VerdictIssued { .. } => "VerdictIssued",
            EventPayload::ScoreAwarded { .. } => "ScoreAwarded",
            EventPayload::ScoreRevoked { .. } => "ScoreRevoked",
            EventPayload::RoundEnded { .. } => "RoundEnded",
            EventPayload::AppealApplied { .. } => "AppealApplied",
            EventPayload::GameEnded { .. } => "GameEnded",
        }
    }
}

/// One entry of the append-only log. `t_ms` is elapsed speech time in the
/// current round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_as_seq_time_type_payload() {
        let e = GameEvent {
            seq: 3,
            t_ms: 1200,
            payload: EventPayload::RoundEnded {
                round: 0,
                winner: PlayerId(2),
                full_minute: true,
            },
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"seq":3,"t_ms":1200,"type":"RoundEnded","payload":{"round":0,"winner":2,"full_minute":true}}"#
        );
        assert_eq!(serde_json::from_str::<GameEvent>(&s).unwrap(), e);
    }
}
