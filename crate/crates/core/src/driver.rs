//! Runs a game's simulated players: paces opponent speech against the
//! clock, lets opponents challenge fresh violations and bluff, and hands
//! the human's input to the engine.
//!
//! The driver keeps no state of its own that matters. Each opponent speech
//! is regenerated from the seed and segment, and release resumes from the
//! segment's covered time, so a driver over a replayed game continues
//! exactly where the live one stopped.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::engine::{
    Amendment, EventPayload, Game, GameConfig, GameContext, GameError, GameEvent, PlayerId, PlayerKind, Verdict, HUMAN,
};
use crate::gateway::Gateway;
use crate::personas::{
    decide_challenge, generate_turn, plan_baseless_challenge, spawn_personas, BaselessChallenge, Persona, PersonaPools,
    SpeechGenerator, Turn, VisibleViolation,
};
use crate::rules::{Violation, ViolationKey, ViolationKind};
use crate::seed::derive_rng;
use crate::transcript::SpeechBatch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("waiting for the human to speak")]
    AwaitingHuman,
    #[error("{0} is not driven by a persona")]
    NotSimulated(PlayerId),
}

/// Who decides a seat's moves.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Persona(Persona),
    /// Moves arrive from outside (the human at the controls).
    External,
}

pub struct MatchDriver {
    game: Game,
    gateway: Gateway,
    pools: Arc<PersonaPools>,
    controllers: Vec<Controller>,
    turn: Option<(usize, Turn)>,
}

/// Persona that plays the human's seat in simulations.
pub fn user_persona(config: &GameConfig, ctx: &GameContext) -> Result<Persona, GameError> {
    let mut p = spawn_personas(
        1,
        &config.difficulty,
        &ctx.voices,
        &ctx.pools,
        &mut derive_rng(config.rng_seed, "user", &[]),
    )
    .map_err(|e| GameError::Persona(e.to_string()))?
    .remove(0);
    p.name = config.human_name.clone();
    Ok(p)
}

impl MatchDriver {
    /// Wraps an existing game. Opponent seats are driven by their personas;
    /// the human seat by `human`.
    pub fn new(game: Game, human: Controller, gateway: Gateway, pools: Arc<PersonaPools>) -> Self {
        let controllers = game
            .players()
            .iter()
            .map(|p| match (&p.kind, &p.persona) {
                (PlayerKind::Ai, Some(persona)) => Controller::Persona(persona.clone()),
                (PlayerKind::Ai, None) => Controller::External,
                (PlayerKind::Human, _) => human.clone(),
            })
            .collect();
        MatchDriver {
            game,
            gateway,
            pools,
            controllers,
            turn: None,
        }
    }

    /// A new game with the human at the controls.
    pub fn interactive(config: GameConfig, ctx: &GameContext, gateway: Gateway) -> Result<Self, GameError> {
        let game = Game::new(config, ctx)?;
        Ok(MatchDriver::new(game, Controller::External, gateway, ctx.pools.clone()))
    }

    /// A new all-simulated game: the human seat is played by a persona.
    pub fn simulated(config: GameConfig, ctx: &GameContext, gateway: Gateway) -> Result<Self, GameError> {
        let user = user_persona(&config, ctx)?;
        let game = Game::new(config, ctx)?;
        Ok(MatchDriver::new(game, Controller::Persona(user), gateway, ctx.pools.clone()))
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn into_game(self) -> Game {
        self.game
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn controller(&self, id: PlayerId) -> Option<&Controller> {
        self.controllers.get(id.0 as usize)
    }

    fn persona(&self, id: PlayerId) -> Option<&Persona> {
        match self.controller(id) {
            Some(Controller::Persona(p)) => Some(p),
            _ => None,
        }
    }

    /// True when the game can only move on with the human's input.
    pub fn awaiting_human(&self) -> bool {
        !self.game.is_ended()
            && self
                .game
                .current_speaker()
                .is_some_and(|s| matches!(self.controller(s), Some(Controller::External)))
    }

    /// The speech a simulated speaker delivers in `segment`, generated for
    /// the clock left when the segment opened.
    fn turn_for(&mut self, segment: usize) -> Result<&Turn, DriverError> {
        if self.turn.as_ref().is_none_or(|(s, _)| *s != segment) {
            let seg = self.game.segment(segment).ok_or(GameError::UnknownSegment(segment))?;
            let speaker = seg.speaker;
            let round = &self.game.rounds()[seg.round];
            let duration = round.duration_ms.saturating_sub(seg.offset_ms).max(1);
            let topic = round.topic.clone();
            let persona = self.persona(speaker).ok_or(DriverError::NotSimulated(speaker))?.clone();
            let generator = SpeechGenerator {
                pools: &self.pools,
                lex: self.game.lexicons(),
                detectors: &self.game.config().detectors,
            };
            let mut rng = derive_rng(self.game.config().rng_seed, "speech", &[segment as u64]);
            let turn = match generate_turn(&generator, &persona, &topic, duration, &mut rng, &self.gateway) {
                Ok(t) => t,
                Err(e) => {
                    tracing::warn!(error = %e, segment, "provider speech failed; using template speech");
                    let mut rng = derive_rng(self.game.config().rng_seed, "speech", &[segment as u64]);
                    generator.mock(&persona, &topic, duration, &mut rng).map_err(|e| GameError::Persona(e.to_string()))?
                }
            };
            self.turn = Some((segment, turn));
        }
        Ok(&self.turn.as_ref().expect("just set").1)
    }

    /// Moves a simulated speaker's speech forward by about `dt_ms`, then
    /// lets opponents react. Does nothing while the human holds the floor.
    pub fn advance(&mut self, dt_ms: u64) -> Result<Vec<GameEvent>, DriverError> {
        if self.game.is_ended() || self.awaiting_human() || dt_ms == 0 {
            return Ok(Vec::new());
        }
        let Some(speaker) = self.game.current_speaker() else { return Ok(Vec::new()) };
        let seg = self.game.current_segment().expect("speaker implies segment");
        let (seg_id, covered) = (seg.id, seg.covered_ms);
        let turn = self.turn_for(seg_id)?;
        let target = covered + dt_ms;
        let mut end = target;
        let mut tokens = Vec::new();
        // A word already begun is released whole.
        for t in turn.tokens.iter().filter(|t| t.end_ms > covered) {
            if t.start_ms >= target {
                break;
            }
            end = end.max(t.end_ms);
            tokens.push(t.clone());
        }
        let batch = SpeechBatch {
            tokens: tokens.iter().map(|t| t.shifted_back(covered)).collect(),
            duration_ms: end - covered,
        };
        self.speak(speaker, &batch)
    }

    /// Ingests speech for `speaker`, then runs opponent reactions and
    /// closes the round if the clock ran out.
    fn speak(&mut self, speaker: PlayerId, batch: &SpeechBatch) -> Result<Vec<GameEvent>, DriverError> {
        let seg = self.game.current_segment().ok_or(GameError::NotSpeaking)?;
        let before_covered = seg.covered_ms;
        let known: BTreeSet<ViolationKey> = seg.violations.keys().copied().collect();
        let before_count = self.game.violation_count(speaker);
        let mut out = self.game.ingest(speaker, batch)?;
        let seg = self.game.current_segment().expect("ingest implies segment");
        let (seg_id, after_covered) = (seg.id, seg.covered_ms);
        // Widened deviations are re-announced under an existing key; only
        // keys new in this batch are fresh.
        let fresh: Vec<Violation> = out
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::ViolationDetected { violation, .. } if !known.contains(&violation.key()) => {
                    Some(violation.clone())
                }
                _ => None,
            })
            .collect();
        out.extend(self.react(seg_id, speaker, &fresh, before_count)?);
        out.extend(self.bluffs(seg_id, speaker, before_covered, after_covered)?);
        out.extend(self.game.settle());
        Ok(out)
    }

    fn still_speaking(&self, seg_id: usize) -> bool {
        self.game.current_segment().map(|s| s.id) == Some(seg_id)
    }

    /// Opponents consider each fresh violation in turn; the first to decide
    /// to challenge does so and the others stay quiet.
    fn react(
        &mut self,
        seg_id: usize,
        speaker: PlayerId,
        fresh: &[Violation],
        before_count: usize,
    ) -> Result<Vec<GameEvent>, DriverError> {
        let mut out = Vec::new();
        let seed = self.game.config().rng_seed;
        let difficulty = self.game.config().difficulty.clone();
        let target_is_human = self.game.player(speaker).is_some_and(|p| p.kind == PlayerKind::Human);
        for (i, v) in fresh.iter().enumerate() {
            if !self.still_speaking(seg_id) {
                break;
            }
            let anchor = v.key().anchor as u64;
            let visible = [VisibleViolation {
                violation: v.clone(),
                target_is_human,
                ordinal: before_count + i + 1,
            }];
            let mut order: Vec<PlayerId> = self
                .game
                .players()
                .iter()
                .map(|p| p.id)
                .filter(|&p| p != speaker && self.persona(p).is_some())
                .collect();
            order.shuffle(&mut derive_rng(seed, "challenge-order", &[seg_id as u64, anchor]));
            let challenger = order.into_iter().find(|&p| {
                let persona = self.persona(p).expect("filtered to personas");
                let mut rng = derive_rng(seed, "challenge", &[seg_id as u64, anchor, p.0 as u64]);
                decide_challenge(persona, &visible, &difficulty, &mut rng).is_some()
            });
            if let Some(c) = challenger {
                out.extend(self.game.raise_challenge(c, v.kind, None)?.events);
            }
        }
        Ok(out)
    }

    /// Baseless challenges planned for this segment whose moment fell
    /// inside the speech just ingested. A bluff names a rule with nothing
    /// to match; if every rule has a live violation the bluff is dropped.
    fn bluffs(&mut self, seg_id: usize, speaker: PlayerId, from: u64, to: u64) -> Result<Vec<GameEvent>, DriverError> {
        let mut out = Vec::new();
        for (p, plan) in self.bluff_plans(seg_id, speaker) {
            if !self.still_speaking(seg_id) {
                break;
            }
            if !(from..to).contains(&plan.offset_ms) {
                continue;
            }
            let start = ViolationKind::ALL.iter().position(|&k| k == plan.rule).unwrap_or(0);
            let rule = (0..3)
                .map(|i| ViolationKind::ALL[(start + i) % 3])
                .find(|&k| self.game.challengeable(k).is_none());
            if let Some(rule) = rule {
                out.extend(self.game.raise_challenge(p, rule, None)?.events);
            }
        }
        Ok(out)
    }

    /// Each opponent decides once per speech whether to bluff, and when.
    pub fn bluff_plans(&self, seg_id: usize, speaker: PlayerId) -> Vec<(PlayerId, BaselessChallenge)> {
        let Some(seg) = self.game.segment(seg_id) else { return Vec::new() };
        let round = &self.game.rounds()[seg.round];
        let speech_ms = round.duration_ms.saturating_sub(seg.offset_ms);
        let cfg = self.game.config();
        let mut plans: Vec<(PlayerId, BaselessChallenge)> = self
            .game
            .players()
            .iter()
            .filter(|p| p.id != speaker)
            .filter_map(|p| {
                let persona = self.persona(p.id)?;
                let mut rng = derive_rng(cfg.rng_seed, "baseless", &[seg_id as u64, p.id.0 as u64]);
                plan_baseless_challenge(persona, &cfg.difficulty, speech_ms, &mut rng).map(|b| (p.id, b))
            })
            .collect();
        plans.sort_by_key(|(p, b)| (b.offset_ms, *p));
        plans
    }

    /// Speech from the human seat.
    pub fn human_speech(&mut self, batch: &SpeechBatch) -> Result<Vec<GameEvent>, DriverError> {
        self.speak(HUMAN, batch)
    }

    pub fn human_challenge(&mut self, rule: ViolationKind, at_ms: Option<u64>) -> Result<Verdict, DriverError> {
        Ok(self.game.raise_challenge(HUMAN, rule, at_ms)?)
    }

    pub fn appeal(&mut self, amendment: &Amendment) -> Result<Vec<GameEvent>, DriverError> {
        Ok(self.game.apply_appeal(HUMAN, amendment)?)
    }

    pub fn abandon(&mut self) -> Result<Vec<GameEvent>, DriverError> {
        Ok(self.game.abandon()?)
    }

    /// Plays until the game ends, in steps of `step_ms` of speech.
    pub fn run_to_completion(&mut self, step_ms: u64) -> Result<(), DriverError> {
        while !self.game.is_ended() {
            if self.awaiting_human() {
                return Err(DriverError::AwaitingHuman);
            }
            self.advance(step_ms.max(1))?;
        }
        Ok(())
    }
}

/// Speech step used by simulations.
pub const SIM_STEP_MS: u64 = 1000;

/// Plays one all-simulated game with the given seed.
pub fn simulate_game(config: &GameConfig, seed: u64, ctx: &GameContext, gateway: &Gateway) -> Result<Game, DriverError> {
    let cfg = GameConfig {
        rng_seed: seed,
        ..config.clone()
    };
    let mut d = MatchDriver::simulated(cfg, ctx, gateway.for_session())?;
    d.run_to_completion(SIM_STEP_MS)?;
    Ok(d.into_game())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{replay_text, ScoreReason};
    use crate::personas::Difficulty;

    fn cfg(rounds: usize) -> GameConfig {
        GameConfig {
            rounds_per_game: rounds,
            ..GameConfig::default()
        }
    }

    #[test]
    fn simulated_game_completes_and_replays() {
        let ctx = GameContext::default();
        let g = simulate_game(&cfg(2), 11, &ctx, &Gateway::offline()).unwrap();
        assert!(g.is_ended());
        assert_eq!(g.rounds().len(), 2);
        let back = replay_text(&g.to_log(), ctx.lex.clone()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn same_seed_same_log() {
        let ctx = GameContext::default();
        let a = simulate_game(&cfg(1), 5, &ctx, &Gateway::offline()).unwrap();
        let b = simulate_game(&cfg(1), 5, &ctx, &Gateway::offline()).unwrap();
        assert_eq!(a.to_log(), b.to_log());
        let c = simulate_game(&cfg(1), 6, &ctx, &Gateway::offline()).unwrap();
        assert_ne!(a.to_log(), c.to_log());
    }

    #[test]
    fn quiet_players_earn_full_minute_bonuses() {
        let ctx = GameContext::default();
        let config = GameConfig {
            difficulty: Difficulty::silent(),
            ..cfg(1)
        };
        let g = simulate_game(&config, 1, &ctx, &Gateway::offline()).unwrap();
        let reasons: Vec<ScoreReason> = g
            .events()
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::ScoreAwarded { reason, .. } => Some(*reason),
                _ => None,
            })
            .collect();
        assert_eq!(reasons, [ScoreReason::RoundWin, ScoreReason::FullMinuteBonus]);
        assert_eq!(g.score(HUMAN), 2);
    }

    #[test]
    fn interactive_driver_waits_for_the_human() {
        let ctx = GameContext::default();
        let mut d = MatchDriver::interactive(cfg(1), &ctx, Gateway::offline()).unwrap();
        assert!(d.awaiting_human());
        assert!(d.advance(1000).unwrap().is_empty());
        assert_eq!(d.run_to_completion(1000), Err(DriverError::AwaitingHuman));
    }

    #[test]
    fn driver_resumes_after_replay() {
        let ctx = GameContext::default();
        let gw = Gateway::offline();
        let mut live = MatchDriver::simulated(cfg(1), &ctx, gw.clone()).unwrap();
        for _ in 0..20 {
            live.advance(1000).unwrap();
        }
        let user = live.controller(HUMAN).cloned().unwrap();
        let back = replay_text(&live.game().to_log(), ctx.lex.clone()).unwrap();
        let mut resumed = MatchDriver::new(back, user, gw, ctx.pools.clone());
        live.run_to_completion(1000).unwrap();
        resumed.run_to_completion(1000).unwrap();
        assert_eq!(live.game().to_log(), resumed.game().to_log());
    }

    #[test]
    fn grace_shields_the_human() {
        let ctx = GameContext::default();
        for seed in 0..10 {
            let config = GameConfig {
                difficulty: Difficulty {
                    user_violation_grace: 2,
                    challenge_aggressiveness: crate::personas::RateRange::fixed(1.0),
                    false_challenge_rate: crate::personas::RateRange::fixed(0.0),
                    ..Difficulty::default()
                },
                ..cfg(2)
            };
            let g = simulate_game(&config, seed, &ctx, &Gateway::offline()).unwrap();
            // Ordinals of the human's violations, in detection order.
            let mut ordinal = 0;
            let mut seen = std::collections::BTreeSet::new();
            let mut shielded = std::collections::BTreeSet::new();
            for e in g.events() {
                match &e.payload {
                    EventPayload::ViolationDetected { segment, violation } => {
                        if g.segment(*segment).unwrap().speaker == HUMAN && seen.insert((*segment, violation.key())) {
                            ordinal += 1;
                            if ordinal <= 2 {
                                shielded.insert((*segment, violation.key()));
                            }
                        }
                    }
                    EventPayload::VerdictIssued { target, matched: Some(v), accepted: true, challenge, .. } if *target == HUMAN => {
                        let seg = g.challenges()[*challenge].segment;
                        assert!(!shielded.contains(&(seg, v.key())), "seed {seed}: challenged a shielded violation");
                    }
                    _ => {}
                }
            }
        }
    }
}
