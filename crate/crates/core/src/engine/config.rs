use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::personas::Difficulty;
use crate::rules::DetectorConfig;

use super::GameError;

/// How far back a challenge may reach: the larger of `min_ms` and the time
/// spanned by the last `min_tokens` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChallengeWindow {
    pub min_ms: u64,
    pub min_tokens: usize,
}

impl Default for ChallengeWindow {
    fn default() -> Self {
        ChallengeWindow {
            min_ms: 5000,
            min_tokens: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub round_duration_ms: u64,
    pub rounds_per_game: usize,
    pub num_ai_players: usize,
    /// Explicit topic schedule, cycled if shorter than the game. `None`
    /// draws topics from the pool.
    pub topics: Option<Vec<String>>,
    pub difficulty: Difficulty,
    pub rng_seed: u64,
    pub detectors: DetectorConfig,
    pub challenge_window: ChallengeWindow,
    pub human_name: String,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            round_duration_ms: 60_000,
            rounds_per_game: 4,
            num_ai_players: 3,
            topics: None,
            difficulty: Difficulty::default(),
            rng_seed: 0,
            detectors: DetectorConfig::default(),
            challenge_window: ChallengeWindow::default(),
            human_name: "You".to_string(),
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: &str| Err(GameError::InvalidConfig(m.to_string()));
        if self.round_duration_ms == 0 {
            return bad("round_duration_ms must be positive");
        }
        if self.rounds_per_game == 0 {
            return bad("rounds_per_game must be at least 1");
        }
        if self.num_ai_players == 0 {
            return bad("num_ai_players must be at least 1");
        }
        if self.num_ai_players > 200 {
            return bad("num_ai_players must be at most 200");
        }
        if let Some(topics) = &self.topics {
            if topics.is_empty() {
                return bad("topic list is empty");
            }
            if topics.iter().any(|t| t.trim().is_empty()) {
                return bad("topics must not be blank");
            }
        }
        self.difficulty.validate().map_err(GameError::InvalidConfig)?;
        self.detectors.validate().map_err(GameError::InvalidConfig)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, GameError> {
        let cfg: GameConfig = toml::from_str(text).map_err(|e| GameError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, GameError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GameError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_game() {
        let c = GameConfig::default();
        assert_eq!((c.round_duration_ms, c.rounds_per_game, c.num_ai_players), (60_000, 4, 3));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn reads_toml_with_presets_and_detectors() {
        let c = GameConfig::from_toml(
            r#"
            rounds_per_game = 2
            topics = ["My Pet", "Rain"]
            rng_seed = 9
            [difficulty]
            preset = "show-accurate"
            [detectors]
            gap_threshold_ms = 2000
            repetition_threshold = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.rounds_per_game, 2);
        assert_eq!(c.difficulty.user_violation_grace, 0);
        assert_eq!(c.detectors.hesitation.gap_threshold_ms, 2000);
        assert_eq!(c.detectors.repetition_threshold, 3);
        assert_eq!(c.detectors.hesitation.allowed_silent_pauses, 3);
    }

    #[test]
    fn rejects_invalid_values() {
        for text in [
            "round_duration_ms = 0",
            "num_ai_players = 0",
            "rounds_per_game = 0",
            "topics = []",
            "colour = \"red\"",
            "[detectors]\nrepetition_threshold = 1",
        ] {
            assert!(matches!(GameConfig::from_toml(text), Err(GameError::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn json_round_trip() {
        let c = GameConfig {
            topics: Some(vec!["a".into()]),
            ..GameConfig::default()
        };
        let back: GameConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
