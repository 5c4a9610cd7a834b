//! Core of a Just a Minute speech-training game: transcript handling, rule
//! detection, the round/game state machine with an append-only event log,
//! simulated opponents and host, and a gateway over AI providers with a
//! deterministic offline backend.

pub mod driver;
pub mod engine;
pub mod gateway;
pub mod lexicon;
pub mod personas;
pub mod rules;
pub mod seed;
pub mod stats;
pub mod transcript;

pub use engine::{Game, GameConfig, GameContext, GameError, GameEvent};
pub use gateway::Gateway;
pub use lexicon::Lexicons;
pub use rules::{analyze, rules_broken_pct, DetectorConfig, Topic, Violation, ViolationKind, ViolationReport};
pub use transcript::{tokenize, SpeechBatch, TranscriptToken};
