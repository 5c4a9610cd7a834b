//! The round and game state machine.
//!
//! Every state change is an event. Commands validate against the current
//! state, build events and apply them through the same code path replay
//! uses, so a log replays to exactly the live state without re-running any
//! detector.

mod config;
mod event;
mod game;
mod log;
mod summary;

use std::sync::Arc;

use thiserror::Error;

use crate::lexicon::Lexicons;
use crate::personas::PersonaPools;

pub use config::{ChallengeWindow, GameConfig};
pub use event::{
    ClaimRemap, EndReason, EventPayload, FloorReason, GameEvent, Player, PlayerId, PlayerKind, ScoreReason, HUMAN,
};
pub use game::{
    analyze_speech, detect_live, Amendment, ChallengeRecord, FloorTenure, Game, RoundState, RoundStatus, Segment,
    Verdict,
};
pub use log::{parse_log, replay, replay_text, LogHeader, LogWriter, ParsedLog, LOG_FORMAT};
pub use summary::{GameSummary, PlayerScore, SpeechSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no one is speaking")]
    NotSpeaking,
    #[error("a player cannot challenge their own speech")]
    SelfChallenge,
    #[error("{got} does not hold the floor ({expected} does)")]
    NotCurrentSpeaker { expected: PlayerId, got: PlayerId },
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("time {at_ms} ms is outside the current speech ({earliest}..={latest} ms)")]
    InvalidTime { at_ms: u64, earliest: u64, latest: u64 },
    #[error("the round still has {remaining_ms} ms on the clock")]
    RoundNotExpired { remaining_ms: u64 },
    #[error("round {0} has not finished")]
    RoundNotFinished(usize),
    #[error("unknown segment {0}")]
    UnknownSegment(usize),
    #[error("segment {segment} belongs to {owner}, not {requester}")]
    NotSegmentOwner { segment: usize, owner: PlayerId, requester: PlayerId },
    #[error("invalid amendment: {0}")]
    InvalidAmendment(String),
    #[error("invalid tokens: {0}")]
    InvalidTokens(String),
    #[error("the game has ended")]
    GameEnded,
    #[error("the game has not ended")]
    GameNotEnded,
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("sequence gap: expected event {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("persona error: {0}")]
    Persona(String),
}

/// Shared, read-only inputs for creating games.
#[derive(Debug, Clone)]
pub struct GameContext {
    pub lex: Arc<Lexicons>,
    pub pools: Arc<PersonaPools>,
    pub voices: Vec<String>,
}

impl Default for GameContext {
    fn default() -> Self {
        GameContext {
            lex: Arc::new(Lexicons::default()),
            pools: Arc::new(PersonaPools::default()),
            voices: crate::gateway::MOCK_VOICES.iter().map(|v| v.to_string()).collect(),
        }
    }
}
