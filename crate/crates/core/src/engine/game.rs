use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicons;
use crate::personas::{self, spawn_personas};
use crate::rules::{
    analyze, detect_deviations, detect_hesitations, detect_repetitions, sentence_ranges, DetectorConfig,
    OverlapJudge, RuleError, Topic, Violation, ViolationKey, ViolationKind, ViolationReport,
};
use crate::seed::derive_rng;
use crate::transcript::{speech_length, validate_sequence, SpeechBatch, TranscriptToken};

use super::event::*;
use super::{GameConfig, GameContext, GameError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Intro,
    Speaking,
    Adjudicating,
    Finished,
}

/// One stretch of a player holding the floor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorTenure {
    pub speaker: PlayerId,
    pub segment: usize,
    pub start_ms: u64,
    pub end_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub index: usize,
    pub topic: Topic,
    pub duration_ms: u64,
    pub elapsed_ms: u64,
    pub current_speaker: PlayerId,
    pub floor_history: Vec<FloorTenure>,
    pub segments: Vec<usize>,
    pub challenges: Vec<usize>,
    pub status: RoundStatus,
    pub accepted_challenges: usize,
    pub winner: Option<PlayerId>,
    pub full_minute: bool,
    /// Net points earned in this round.
    pub points: BTreeMap<PlayerId, i64>,
}

impl RoundState {
    pub fn clock_remaining_ms(&self) -> u64 {
        self.duration_ms - self.elapsed_ms
    }
}

/// One speech: a single floor tenure, with token times relative to its
/// start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub round: usize,
    pub speaker: PlayerId,
    /// Round time at which the speech began.
    pub offset_ms: u64,
    pub tokens: Vec<TranscriptToken>,
    pub covered_ms: u64,
    pub violations: BTreeMap<ViolationKey, Violation>,
    /// Violations backing an accepted challenge, with the challenge id.
    pub claimed: BTreeMap<ViolationKey, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeRecord {
    pub id: usize,
    pub round: usize,
    pub segment: usize,
    pub challenger: PlayerId,
    pub target: PlayerId,
    pub rule: ViolationKind,
    pub at_ms: u64,
    pub accepted: Option<bool>,
    pub matched: Option<ViolationKey>,
    pub revoked: bool,
}

/// Outcome of a challenge.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub challenge: usize,
    pub accepted: bool,
    pub matched: Option<Violation>,
    pub narration: String,
    pub events: Vec<GameEvent>,
}

/// Replace tokens `start..end` of a speech with corrected words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Amendment {
    pub segment: usize,
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    config: GameConfig,
    lex: Arc<Lexicons>,
    players: Vec<Player>,
    topics: Vec<String>,
    round_duration_ms: u64,
    rounds: Vec<RoundState>,
    segments: Vec<Segment>,
    challenges: Vec<ChallengeRecord>,
    scores: BTreeMap<PlayerId, i64>,
    violation_counts: BTreeMap<PlayerId, usize>,
    ended: Option<EndReason>,
    winners: Vec<PlayerId>,
    events: Vec<GameEvent>,
}

/// Violations visible while a speech is still in progress. Hesitation and
/// repetition are final as soon as the tokens exist. Deviation is judged
/// only on complete windows of finished sentences, so a verdict never flips
/// as more speech arrives; a later window can only widen an existing span.
pub fn detect_live(
    tokens: &[TranscriptToken],
    topic: &Topic,
    cfg: &DetectorConfig,
    lex: &Lexicons,
) -> Vec<Violation> {
    let mut out = detect_hesitations(tokens, &cfg.hesitation);
    out.extend(detect_repetitions(tokens, &topic.words(), lex, cfg.repetition_threshold));
    let window = cfg.deviation_window_sentences.max(1);
    let complete: Vec<(usize, usize)> = sentence_ranges(tokens)
        .into_iter()
        .filter(|&(_, e)| tokens[e - 1].ends_sentence())
        .collect();
    if complete.len() >= window {
        let judge = OverlapJudge::new(topic, lex, cfg.deviation_overlap_threshold);
        let end = complete.last().map_or(0, |r| r.1);
        if let Ok(v) = detect_deviations(&tokens[..end], topic, &judge, window) {
            out.extend(v);
        }
    }
    out.sort_by_key(|v| (v.detected_at_ms, v.key()));
    out
}

/// Full end-of-speech analysis; a topic with no content words disables the
/// deviation rule instead of failing.
pub fn analyze_speech(
    tokens: &[TranscriptToken],
    topic: &Topic,
    cfg: &DetectorConfig,
    lex: &Lexicons,
) -> ViolationReport {
    match analyze(tokens, topic, cfg, lex) {
        Ok(r) => r,
        Err(RuleError::EmptyTopic) | Err(_) => {
            let mut v = detect_hesitations(tokens, &cfg.hesitation);
            v.extend(detect_repetitions(tokens, &topic.words(), lex, cfg.repetition_threshold));
            ViolationReport::from_violations(v, speech_length(tokens))
        }
    }
}

fn remap_anchor(anchor: usize, start: usize, end: usize, new_len: usize) -> Option<usize> {
    let (lo, hi) = (2 * start, 2 * end);
    if anchor < lo {
        Some(anchor)
    } else if anchor >= hi {
        Some(anchor + 2 * new_len - 2 * (end - start))
    } else if anchor - lo < 2 * new_len {
        Some(anchor)
    } else {
        None
    }
}

impl Game {
    /// A game with no events yet, ready for replay.
    pub fn empty(config: GameConfig, lex: Arc<Lexicons>) -> Self {
        Game {
            config,
            lex,
            players: Vec::new(),
            topics: Vec::new(),
            round_duration_ms: 0,
            rounds: Vec::new(),
            segments: Vec::new(),
            challenges: Vec::new(),
            scores: BTreeMap::new(),
            violation_counts: BTreeMap::new(),
            ended: None,
            winners: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Seats the human and spawned opponents, fixes the topic schedule and
    /// opens round one.
    pub fn new(config: GameConfig, ctx: &GameContext) -> Result<Self, GameError> {
        config.validate()?;
        let seed = config.rng_seed;
        let personas = spawn_personas(
            config.num_ai_players,
            &config.difficulty,
            &ctx.voices,
            &ctx.pools,
            &mut derive_rng(seed, "personas", &[]),
        )
        .map_err(|e| GameError::Persona(e.to_string()))?;
        let mut players = vec![Player {
            id: HUMAN,
            name: config.human_name.clone(),
            kind: PlayerKind::Human,
            persona: None,
        }];
        players.extend(personas.into_iter().enumerate().map(|(i, p)| Player {
            id: PlayerId(i as u8 + 1),
            name: p.name.clone(),
            kind: PlayerKind::Ai,
            persona: Some(p),
        }));
        let source: Vec<String> = match &config.topics {
            Some(list) => list.clone(),
            None => {
                let mut pool = ctx.pools.topics.clone();
                if pool.is_empty() {
                    return Err(GameError::InvalidConfig("topic pool is empty".into()));
                }
                pool.shuffle(&mut derive_rng(seed, "topics", &[]));
                pool
            }
        };
        let topics: Vec<String> = source.iter().cycle().take(config.rounds_per_game).cloned().collect();
        let round_duration_ms = config.round_duration_ms;
        let mut game = Game::empty(config, ctx.lex.clone());
        game.push(
            0,
            EventPayload::GameStarted {
                players,
                topics,
                round_duration_ms,
            },
        );
        game.start_round(0);
        Ok(game)
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn lexicons(&self) -> &Arc<Lexicons> {
        &self.lex
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn player(&self, id: PlayerId) -> Option<&Player> {
        self.players.iter().find(|p| p.id == id)
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn events(&self) -> &[GameEvent] {
        &self.events
    }

    pub fn rounds(&self) -> &[RoundState] {
        &self.rounds
    }

    pub fn current_round(&self) -> Option<&RoundState> {
        self.rounds.last()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: usize) -> Option<&Segment> {
        self.segments.get(id)
    }

    pub fn challenges(&self) -> &[ChallengeRecord] {
        &self.challenges
    }

    pub fn scores(&self) -> &BTreeMap<PlayerId, i64> {
        &self.scores
    }

    pub fn score(&self, player: PlayerId) -> i64 {
        self.scores.get(&player).copied().unwrap_or(0)
    }

    pub fn is_ended(&self) -> bool {
        self.ended.is_some()
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.ended
    }

    pub fn winners(&self) -> &[PlayerId] {
        &self.winners
    }

    /// Violations committed by `player` so far (distinct, counting each
    /// violation once even if its span later widens).
    pub fn violation_count(&self, player: PlayerId) -> usize {
        self.violation_counts.get(&player).copied().unwrap_or(0)
    }

    pub fn status(&self) -> Option<RoundStatus> {
        self.current_round().map(|r| r.status)
    }

    pub fn current_speaker(&self) -> Option<PlayerId> {
        self.current_round()
            .filter(|r| r.status != RoundStatus::Finished)
            .map(|r| r.current_speaker)
    }

    pub fn current_segment(&self) -> Option<&Segment> {
        let r = self.current_round()?;
        if r.status == RoundStatus::Finished {
            return None;
        }
        self.segments.get(r.floor_history.last()?.segment)
    }

    pub fn clock_remaining_ms(&self) -> u64 {
        self.current_round().map_or(0, |r| r.clock_remaining_ms())
    }

    fn now(&self) -> u64 {
        self.current_round().map_or(0, |r| r.elapsed_ms)
    }

    fn name(&self, id: PlayerId) -> &str {
        self.player(id).map_or("?", |p| p.name.as_str())
    }

    /// Appends an event after applying it. Commands only emit events they
    /// have validated, so application cannot fail here.
    fn push(&mut self, t_ms: u64, payload: EventPayload) -> GameEvent {
        let ev = GameEvent {
            seq: self.events.len() as u64,
            t_ms,
            payload,
        };
        self.apply(&ev).expect("validated event applies");
        ev
    }

    /// Applies one logged event. Used by both live commands and replay.
    pub fn apply(&mut self, ev: &GameEvent) -> Result<(), GameError> {
        let expected = self.events.len() as u64;
        if ev.seq != expected {
            return Err(GameError::SequenceGap {
                expected,
                found: ev.seq,
            });
        }
        let corrupt = |reason: &str| GameError::CorruptLog {
            line: ev.seq as usize + 2,
            reason: format!("{}: {reason}", ev.payload.name()),
        };
        if self.ended.is_some() {
            return Err(corrupt("event after the game ended"));
        }
        if self.players.is_empty() && !matches!(ev.payload, EventPayload::GameStarted { .. }) {
            return Err(corrupt("log does not begin with GameStarted"));
        }
        match &ev.payload {
            EventPayload::GameStarted {
                players,
                topics,
                round_duration_ms,
            } => {
                if !self.players.is_empty() {
                    return Err(corrupt("game already started"));
                }
                self.players = players.clone();
                self.topics = topics.clone();
                self.round_duration_ms = *round_duration_ms;
                self.scores = players.iter().map(|p| (p.id, 0)).collect();
            }
            EventPayload::RoundStarted {
                round,
                topic,
                speaker,
                ..
            } => {
                if *round != self.rounds.len() {
                    return Err(corrupt("round out of order"));
                }
                self.rounds.push(RoundState {
                    index: *round,
                    topic: Topic::new(topic.clone()),
                    duration_ms: self.round_duration_ms,
                    elapsed_ms: 0,
                    current_speaker: *speaker,
                    floor_history: Vec::new(),
                    segments: Vec::new(),
                    challenges: Vec::new(),
                    status: RoundStatus::Intro,
                    accepted_challenges: 0,
                    winner: None,
                    full_minute: false,
                    points: BTreeMap::new(),
                });
            }
            EventPayload::FloorTransferred {
                round,
                to,
                segment,
                ..
            } => {
                if *segment != self.segments.len() {
                    return Err(corrupt("segment id out of order"));
                }
                let r = self.rounds.get_mut(*round).ok_or_else(|| corrupt("unknown round"))?;
                let now = r.elapsed_ms;
                if let Some(last) = r.floor_history.last_mut() {
                    last.end_ms = Some(now);
                }
                r.floor_history.push(FloorTenure {
                    speaker: *to,
                    segment: *segment,
                    start_ms: now,
                    end_ms: None,
                });
                r.segments.push(*segment);
                r.current_speaker = *to;
                r.status = RoundStatus::Speaking;
                self.segments.push(Segment {
                    id: *segment,
                    round: *round,
                    speaker: *to,
                    offset_ms: now,
                    tokens: Vec::new(),
                    covered_ms: 0,
                    violations: BTreeMap::new(),
                    claimed: BTreeMap::new(),
                });
            }
            EventPayload::TokensIngested {
                segment,
                tokens,
                covered_ms,
                ..
            } => {
                let seg = self.segments.get_mut(*segment).ok_or_else(|| corrupt("unknown segment"))?;
                let r = self.rounds.get_mut(seg.round).ok_or_else(|| corrupt("unknown round"))?;
                if r.elapsed_ms + covered_ms > r.duration_ms {
                    return Err(corrupt("speech runs past the round clock"));
                }
                seg.tokens.extend(tokens.iter().cloned());
                seg.covered_ms += covered_ms;
                r.elapsed_ms += covered_ms;
            }
            EventPayload::ViolationDetected { segment, violation } => {
                let seg = self.segments.get_mut(*segment).ok_or_else(|| corrupt("unknown segment"))?;
                if seg.violations.insert(violation.key(), violation.clone()).is_none() {
                    *self.violation_counts.entry(seg.speaker).or_default() += 1;
                }
            }
            EventPayload::ChallengeRaised {
                challenge,
                challenger,
                target,
                segment,
                rule,
                at_ms,
            } => {
                if *challenge != self.challenges.len() {
                    return Err(corrupt("challenge id out of order"));
                }
                let r = self.rounds.last_mut().ok_or_else(|| corrupt("no round"))?;
                r.status = RoundStatus::Adjudicating;
                r.challenges.push(*challenge);
                self.challenges.push(ChallengeRecord {
                    id: *challenge,
                    round: r.index,
                    segment: *segment,
                    challenger: *challenger,
                    target: *target,
                    rule: *rule,
                    at_ms: *at_ms,
                    accepted: None,
                    matched: None,
                    revoked: false,
                });
            }
            EventPayload::VerdictIssued {
                challenge,
                accepted,
                matched,
                ..
            } => {
                let c = self.challenges.get_mut(*challenge).ok_or_else(|| corrupt("unknown challenge"))?;
                c.accepted = Some(*accepted);
                c.matched = matched.as_ref().map(|v| v.key());
                if let Some(key) = c.matched {
                    let seg = self.segments.get_mut(c.segment).ok_or_else(|| corrupt("unknown segment"))?;
                    seg.claimed.insert(key, c.id);
                }
                let r = self.rounds.get_mut(c.round).ok_or_else(|| corrupt("unknown round"))?;
                if *accepted {
                    r.accepted_challenges += 1;
                }
                r.status = RoundStatus::Speaking;
            }
            EventPayload::ScoreAwarded {
                player,
                delta,
                round,
                ..
            } => {
                let r = self.rounds.get_mut(*round).ok_or_else(|| corrupt("unknown round"))?;
                *r.points.entry(*player).or_default() += delta;
                *self.scores.entry(*player).or_default() += delta;
            }
            EventPayload::ScoreRevoked {
                player,
                delta,
                round,
                challenge,
                ..
            } => {
                let r = self.rounds.get_mut(*round).ok_or_else(|| corrupt("unknown round"))?;
                *r.points.entry(*player).or_default() -= delta;
                *self.scores.entry(*player).or_default() -= delta;
                let c = self.challenges.get_mut(*challenge).ok_or_else(|| corrupt("unknown challenge"))?;
                c.revoked = true;
            }
            EventPayload::RoundEnded {
                round,
                winner,
                full_minute,
            } => {
                let r = self.rounds.get_mut(*round).ok_or_else(|| corrupt("unknown round"))?;
                r.status = RoundStatus::Finished;
                r.winner = Some(*winner);
                r.full_minute = *full_minute;
                let now = r.elapsed_ms;
                if let Some(last) = r.floor_history.last_mut() {
                    last.end_ms = Some(now);
                }
            }
            EventPayload::AppealApplied {
                segment,
                start,
                end,
                replacement,
                violations,
                claims,
            } => {
                let seg = self.segments.get_mut(*segment).ok_or_else(|| corrupt("unknown segment"))?;
                if start > end || *end > seg.tokens.len() {
                    return Err(corrupt("amendment range out of bounds"));
                }
                seg.tokens.splice(*start..*end, replacement.iter().cloned());
                seg.violations = violations.iter().map(|v| (v.key(), v.clone())).collect();
                seg.claimed = claims
                    .iter()
                    .filter_map(|c| c.key.map(|k| (k, c.challenge)))
                    .collect();
            }
            EventPayload::GameEnded { reason, winners, .. } => {
                self.ended = Some(*reason);
                self.winners = winners.clone();
            }
        }
        self.events.push(ev.clone());
        Ok(())
    }

    fn start_round(&mut self, round: usize) {
        let speaker = self.players[round % self.players.len()].id;
        let topic = self.topics[round].clone();
        let narration = personas::round_intro(round + 1, &topic);
        self.push(
            0,
            EventPayload::RoundStarted {
                round,
                topic,
                speaker,
                narration,
            },
        );
        let segment = self.segments.len();
        self.push(
            0,
            EventPayload::FloorTransferred {
                round,
                from: None,
                to: speaker,
                segment,
                reason: FloorReason::RoundStart,
            },
        );
    }

    fn end_game(&mut self, reason: EndReason) -> Vec<GameEvent> {
        let best = self.scores.values().copied().max().unwrap_or(0);
        let winners: Vec<PlayerId> = self
            .scores
            .iter()
            .filter(|(_, &s)| s == best)
            .map(|(&p, _)| p)
            .collect();
        let scores: Vec<(PlayerId, i64)> = self.scores.iter().map(|(&p, &s)| (p, s)).collect();
        let names: Vec<&str> = winners.iter().map(|&w| self.name(w)).collect();
        let named: Vec<(&str, i64)> = scores.iter().map(|&(p, s)| (self.name(p), s)).collect();
        let narration = personas::game_end(&names, &named);
        let now = self.now();
        vec![self.push(
            now,
            EventPayload::GameEnded {
                reason,
                winners,
                scores,
                narration,
            },
        )]
    }

    fn ensure_live(&self) -> Result<&RoundState, GameError> {
        if self.ended.is_some() {
            return Err(GameError::GameEnded);
        }
        self.current_round().ok_or(GameError::NotSpeaking)
    }

    /// Adds speech to the current speaker's segment. Time only moves through
    /// speech: `batch.duration_ms` (clipped to the clock) is how much of the
    /// round the batch covers, and tokens ending past the clock are dropped.
    pub fn ingest(&mut self, speaker: PlayerId, batch: &SpeechBatch) -> Result<Vec<GameEvent>, GameError> {
        let round = self.ensure_live()?;
        if round.status != RoundStatus::Speaking {
            return Err(GameError::NotSpeaking);
        }
        if speaker != round.current_speaker {
            return Err(GameError::NotCurrentSpeaker {
                expected: round.current_speaker,
                got: speaker,
            });
        }
        validate_sequence(&batch.tokens).map_err(|e| GameError::InvalidTokens(e.to_string()))?;
        let batch_ms = batch.duration_ms.max(batch.tokens.last().map_or(0, |t| t.end_ms));
        let covered_ms = batch_ms.min(round.clock_remaining_ms());
        let seg = self.current_segment().expect("speaking implies a segment");
        let seg_id = seg.id;
        let base = seg.covered_ms;
        let tokens: Vec<TranscriptToken> = batch
            .tokens
            .iter()
            .filter(|t| t.end_ms <= covered_ms)
            .map(|t| t.shifted(base))
            .collect();
        if covered_ms == 0 && tokens.is_empty() {
            return Ok(Vec::new());
        }
        let t_ms = round.elapsed_ms + covered_ms;
        let mut out = vec![self.push(
            t_ms,
            EventPayload::TokensIngested {
                segment: seg_id,
                speaker,
                tokens,
                covered_ms,
            },
        )];
        out.extend(self.refresh_violations(seg_id, t_ms));
        Ok(out)
    }

    fn refresh_violations(&mut self, seg_id: usize, t_ms: u64) -> Vec<GameEvent> {
        let seg = &self.segments[seg_id];
        let topic = &self.rounds[seg.round].topic;
        let found = detect_live(&seg.tokens, topic, &self.config.detectors, &self.lex);
        let fresh: Vec<Violation> = found
            .into_iter()
            .filter(|v| seg.violations.get(&v.key()) != Some(v))
            .collect();
        fresh
            .into_iter()
            .map(|violation| {
                self.push(
                    t_ms,
                    EventPayload::ViolationDetected {
                        segment: seg_id,
                        violation,
                    },
                )
            })
            .collect()
    }

    /// The violation a challenge for `rule` at round time `at` would claim:
    /// the most recent unclaimed one of that kind detected inside the
    /// challenge window.
    fn window_match(&self, seg: &Segment, rule: ViolationKind, at: u64) -> Option<Violation> {
        let rel = at.checked_sub(seg.offset_ms)?;
        let win = self.config.challenge_window;
        let heard = seg.tokens.iter().take_while(|t| t.end_ms <= rel).count();
        let mut from = rel.saturating_sub(win.min_ms);
        if win.min_tokens > 0 {
            let by_tokens = if heard >= win.min_tokens {
                seg.tokens[heard - win.min_tokens].start_ms
            } else {
                0
            };
            from = from.min(by_tokens);
        }
        seg.violations
            .values()
            .filter(|v| v.kind == rule && !seg.claimed.contains_key(&v.key()))
            .filter(|v| (from..=rel).contains(&v.detected_at_ms))
            .max_by_key(|v| (v.detected_at_ms, v.key()))
            .cloned()
    }

    /// What a challenge for `rule` right now would match, without raising it.
    pub fn challengeable(&self, rule: ViolationKind) -> Option<Violation> {
        let round = self.current_round().filter(|r| r.status == RoundStatus::Speaking)?;
        self.window_match(self.current_segment()?, rule, round.elapsed_ms)
    }

    /// Adjudicates a challenge against the current speaker. `at_ms` is the
    /// round time the challenge refers to (default: now); the floor moves at
    /// the current clock, which is never reset.
    pub fn raise_challenge(
        &mut self,
        challenger: PlayerId,
        rule: ViolationKind,
        at_ms: Option<u64>,
    ) -> Result<Verdict, GameError> {
        let round = self.ensure_live()?;
        if round.status != RoundStatus::Speaking {
            return Err(GameError::NotSpeaking);
        }
        if self.player(challenger).is_none() {
            return Err(GameError::UnknownPlayer(challenger));
        }
        let speaker = round.current_speaker;
        if challenger == speaker {
            return Err(GameError::SelfChallenge);
        }
        let round_idx = round.index;
        let now = round.elapsed_ms;
        let seg = self.current_segment().expect("speaking implies a segment");
        let at = at_ms.unwrap_or(now);
        if at < seg.offset_ms || at > now {
            return Err(GameError::InvalidTime {
                at_ms: at,
                earliest: seg.offset_ms,
                latest: now,
            });
        }
        let matched = self.window_match(seg, rule, at);
        let seg_id = seg.id;
        let accepted = matched.is_some();
        let challenge = self.challenges.len();
        let evidence = matched.as_ref().map(|v| v.describe());
        let narration = personas::verdict(
            self.name(challenger),
            self.name(speaker),
            rule,
            accepted,
            evidence.as_deref(),
        );

        let mut events = vec![self.push(
            now,
            EventPayload::ChallengeRaised {
                challenge,
                challenger,
                target: speaker,
                segment: seg_id,
                rule,
                at_ms: at,
            },
        )];
        events.push(self.push(
            now,
            EventPayload::VerdictIssued {
                challenge,
                challenger,
                target: speaker,
                rule,
                accepted,
                matched: matched.clone(),
                narration: narration.clone(),
            },
        ));
        if accepted {
            let segment = self.segments.len();
            events.push(self.push(
                now,
                EventPayload::FloorTransferred {
                    round: round_idx,
                    from: Some(speaker),
                    to: challenger,
                    segment,
                    reason: FloorReason::Challenge,
                },
            ));
        }
        let (player, reason) = if accepted {
            (challenger, ScoreReason::CorrectChallenge)
        } else {
            (speaker, ScoreReason::IncorrectChallengeBonusToSpeaker)
        };
        events.push(self.push(
            now,
            EventPayload::ScoreAwarded {
                player,
                delta: 1,
                reason,
                round: round_idx,
                challenge: Some(challenge),
            },
        ));
        Ok(Verdict {
            challenge,
            accepted,
            matched,
            narration,
            events,
        })
    }

    /// Closes an expired round: the floor holder wins it, plus a bonus if
    /// they held the floor for the whole minute. Opens the next round or
    /// ends the game.
    pub fn finish_round(&mut self) -> Result<Vec<GameEvent>, GameError> {
        let round = self.ensure_live()?;
        if round.status != RoundStatus::Speaking {
            return Err(GameError::NotSpeaking);
        }
        if round.clock_remaining_ms() > 0 {
            return Err(GameError::RoundNotExpired {
                remaining_ms: round.clock_remaining_ms(),
            });
        }
        let (idx, winner, now) = (round.index, round.current_speaker, round.elapsed_ms);
        let full_minute = round.floor_history.len() == 1 && round.accepted_challenges == 0;
        let mut out = vec![self.push(
            now,
            EventPayload::ScoreAwarded {
                player: winner,
                delta: 1,
                reason: ScoreReason::RoundWin,
                round: idx,
                challenge: None,
            },
        )];
        if full_minute {
            out.push(self.push(
                now,
                EventPayload::ScoreAwarded {
                    player: winner,
                    delta: 1,
                    reason: ScoreReason::FullMinuteBonus,
                    round: idx,
                    challenge: None,
                },
            ));
        }
        out.push(self.push(
            now,
            EventPayload::RoundEnded {
                round: idx,
                winner,
                full_minute,
            },
        ));
        if idx + 1 < self.topics.len() {
            let before = self.events.len();
            self.start_round(idx + 1);
            out.extend(self.events[before..].iter().cloned());
        } else {
            out.extend(self.end_game(EndReason::Completed));
        }
        Ok(out)
    }

    /// Finishes the round if its clock has run out.
    pub fn settle(&mut self) -> Vec<GameEvent> {
        match self.current_round() {
            Some(r) if !self.is_ended() && r.status == RoundStatus::Speaking && r.clock_remaining_ms() == 0 => {
                self.finish_round().unwrap_or_default()
            }
            _ => Vec::new(),
        }
    }

    /// Ends an unfinished game, e.g. when its session expires.
    pub fn abandon(&mut self) -> Result<Vec<GameEvent>, GameError> {
        if self.ended.is_some() {
            return Err(GameError::GameEnded);
        }
        if self.players.is_empty() {
            return Err(GameError::NotSpeaking);
        }
        Ok(self.end_game(EndReason::Abandoned))
    }

    /// Corrects a transcription. The speech is re-analyzed; any accepted
    /// challenge whose violation disappears loses its point. Appeals never
    /// award points or move the floor.
    pub fn apply_appeal(&mut self, requester: PlayerId, amendment: &Amendment) -> Result<Vec<GameEvent>, GameError> {
        if self.ended.is_some() {
            return Err(GameError::GameEnded);
        }
        let seg = self
            .segments
            .get(amendment.segment)
            .ok_or(GameError::UnknownSegment(amendment.segment))?;
        if seg.speaker != requester {
            return Err(GameError::NotSegmentOwner {
                segment: seg.id,
                owner: seg.speaker,
                requester,
            });
        }
        let (start, end) = (amendment.start, amendment.end);
        if start > end || end > seg.tokens.len() {
            return Err(GameError::InvalidAmendment(format!(
                "range {start}..{end} outside a speech of {} tokens",
                seg.tokens.len()
            )));
        }
        if let Some(w) = amendment.replacement.iter().find(|w| !w.contains(char::is_alphanumeric)) {
            return Err(GameError::InvalidAmendment(format!("`{w}` is not a word")));
        }
        let old = &seg.tokens[start..end];
        let n = amendment.replacement.len();
        let replacement: Vec<TranscriptToken> = if n == old.len() {
            old.iter()
                .zip(&amendment.replacement)
                .map(|(t, w)| TranscriptToken::from_surface(w, t.start_ms, t.end_ms, &self.lex))
                .collect()
        } else {
            let s = match (old.first(), start.checked_sub(1)) {
                (Some(t), _) => t.start_ms,
                (None, Some(p)) => seg.tokens[p].end_ms,
                (None, None) => seg.tokens.first().map_or(0, |t| t.start_ms),
            };
            let e = old.last().map_or(s, |t| t.end_ms);
            let width = (e - s) / n.max(1) as u64;
            amendment
                .replacement
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let a = s + i as u64 * width;
                    let b = if i + 1 == n { e } else { a + width };
                    TranscriptToken::from_surface(w, a, b, &self.lex)
                })
                .collect()
        };
        if old == replacement.as_slice() {
            return Ok(Vec::new());
        }
        let mut tokens = seg.tokens.clone();
        tokens.splice(start..end, replacement.iter().cloned());
        let topic = &self.rounds[seg.round].topic;
        let violations = detect_live(&tokens, topic, &self.config.detectors, &self.lex);
        let claims: Vec<ClaimRemap> = seg
            .claimed
            .iter()
            .map(|(key, &challenge)| ClaimRemap {
                challenge,
                key: remap_anchor(key.anchor, start, end, n).map(|anchor| ViolationKey { kind: key.kind, anchor }),
            })
            .collect();
        let lost: Vec<usize> = claims
            .iter()
            .filter(|c| match c.key {
                Some(k) => !violations.iter().any(|v| v.key() == k),
                None => true,
            })
            .map(|c| c.challenge)
            .filter(|&c| self.challenges[c].accepted == Some(true) && !self.challenges[c].revoked)
            .collect();
        let seg_id = seg.id;
        let now = self.now();
        let mut out = vec![self.push(
            now,
            EventPayload::AppealApplied {
                segment: seg_id,
                start,
                end,
                replacement,
                violations,
                claims,
            },
        )];
        for c in lost {
            let rec = &self.challenges[c];
            let (player, round) = (rec.challenger, rec.round);
            out.push(self.push(
                now,
                EventPayload::ScoreRevoked {
                    player,
                    delta: 1,
                    reason: ScoreReason::CorrectChallenge,
                    round,
                    challenge: c,
                },
            ));
        }
        Ok(out)
    }

    /// `player`'s points in a finished round minus everyone else's.
    pub fn performance_score(&self, round: usize, player: PlayerId) -> Result<i64, GameError> {
        let r = self
            .rounds
            .get(round)
            .filter(|r| r.status == RoundStatus::Finished)
            .ok_or(GameError::RoundNotFinished(round))?;
        let own = r.points.get(&player).copied().unwrap_or(0);
        let others: i64 = r.points.iter().filter(|(&p, _)| p != player).map(|(_, &s)| s).sum();
        Ok(own - others)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> GameContext {
        GameContext::default()
    }

    fn game(rounds: usize) -> Game {
        let cfg = GameConfig {
            rounds_per_game: rounds,
            topics: Some(vec!["My Pet".into(), "The Weather".into()]),
            rng_seed: 7,
            ..GameConfig::default()
        };
        Game::new(cfg, &ctx()).unwrap()
    }

    fn say(g: &mut Game, who: PlayerId, text: &str) -> Vec<GameEvent> {
        let batch = SpeechBatch::from_text(text, g.lexicons());
        g.ingest(who, &batch).unwrap()
    }

    fn silence(g: &mut Game, who: PlayerId, ms: u64) {
        g.ingest(who, &SpeechBatch { tokens: vec![], duration_ms: ms }).unwrap();
    }

    #[test]
    fn new_game_seats_players_and_opens_round_one() {
        let g = Game::new(GameConfig { rng_seed: 7, ..GameConfig::default() }, &ctx()).unwrap();
        assert_eq!(g.players().len(), 4);
        assert_eq!(g.topics().len(), 4);
        assert_eq!(g.current_speaker(), Some(HUMAN));
        assert_eq!(g.status(), Some(RoundStatus::Speaking));
        assert_eq!(g.clock_remaining_ms(), 60_000);
        let again = Game::new(GameConfig { rng_seed: 7, ..GameConfig::default() }, &ctx()).unwrap();
        assert_eq!(g.events(), again.events());
    }

    #[test]
    fn explicit_topics_are_used_in_order() {
        let g = game(2);
        assert_eq!(g.topics(), ["My Pet", "The Weather"]);
    }

    #[test]
    fn ingest_reports_each_violation_once() {
        let mut g = game(1);
        let ev = say(&mut g, HUMAN, "I love milk and");
        assert_eq!(ev.len(), 1);
        let ev = say(&mut g, HUMAN, "more milk please");
        assert_eq!(ev.len(), 2);
        assert!(matches!(&ev[1].payload, EventPayload::ViolationDetected { violation, .. } if violation.kind == ViolationKind::Repetition));
        let ev = say(&mut g, HUMAN, "and cheese");
        assert_eq!(ev.len(), 1);
        assert_eq!(g.violation_count(HUMAN), 1);
    }

    #[test]
    fn wrong_speaker_cannot_ingest() {
        let mut g = game(1);
        let batch = SpeechBatch::from_text("hello", g.lexicons());
        assert_eq!(
            g.ingest(PlayerId(1), &batch),
            Err(GameError::NotCurrentSpeaker { expected: HUMAN, got: PlayerId(1) })
        );
    }

    #[test]
    fn accepted_challenge_moves_floor_but_not_clock() {
        let mut g = game(1);
        say(&mut g, HUMAN, "My pet drinks milk and more milk");
        let remaining = g.clock_remaining_ms();
        let v = g.raise_challenge(PlayerId(2), ViolationKind::Repetition, None).unwrap();
        assert!(v.accepted);
        assert_eq!(g.current_speaker(), Some(PlayerId(2)));
        assert_eq!(g.clock_remaining_ms(), remaining);
        assert_eq!(g.score(PlayerId(2)), 1);
        let kinds: Vec<&str> = v.events.iter().map(|e| e.payload.name()).collect();
        assert_eq!(kinds, ["ChallengeRaised", "VerdictIssued", "FloorTransferred", "ScoreAwarded"]);
        // The violation is now claimed and cannot back a second challenge.
        let seg = &g.segments()[0];
        assert_eq!(seg.claimed.len(), 1);
    }

    #[test]
    fn claimed_violations_cannot_be_claimed_twice() {
        let mut g = game(1);
        say(&mut g, HUMAN, "milk milk");
        assert!(g.raise_challenge(PlayerId(1), ViolationKind::Repetition, None).unwrap().accepted);
        say(&mut g, PlayerId(1), "my pet sleeps");
        // Earlier speech belongs to a different segment; nothing to claim.
        let v = g.raise_challenge(PlayerId(2), ViolationKind::Repetition, None).unwrap();
        assert!(!v.accepted);
        assert_eq!(g.score(PlayerId(1)), 2);
    }

    #[test]
    fn rejected_challenge_rewards_the_speaker() {
        let mut g = game(1);
        say(&mut g, HUMAN, "My pet is lovely");
        let v = g.raise_challenge(PlayerId(3), ViolationKind::Hesitation, None).unwrap();
        assert!(!v.accepted);
        assert_eq!(g.score(HUMAN), 1);
        assert_eq!(g.current_speaker(), Some(HUMAN));
        assert_eq!(g.raise_challenge(HUMAN, ViolationKind::Hesitation, None).unwrap_err(), GameError::SelfChallenge);
    }

    #[test]
    fn old_violations_fall_out_of_the_window() {
        let mut g = game(1);
        say(&mut g, HUMAN, "milk and milk");
        silence(&mut g, HUMAN, 6000);
        say(&mut g, HUMAN, "a b c d e f g h i j k l m");
        let v = g.raise_challenge(PlayerId(1), ViolationKind::Repetition, None).unwrap();
        assert!(!v.accepted);
    }

    #[test]
    fn challenge_time_must_lie_in_the_speech() {
        let mut g = game(1);
        say(&mut g, HUMAN, "my pet");
        let now = 60_000 - g.clock_remaining_ms();
        assert!(matches!(
            g.raise_challenge(PlayerId(1), ViolationKind::Repetition, Some(now + 1)),
            Err(GameError::InvalidTime { .. })
        ));
    }

    #[test]
    fn round_win_and_full_minute_bonus() {
        let mut g = game(2);
        assert!(matches!(g.finish_round(), Err(GameError::RoundNotExpired { remaining_ms: 60_000 })));
        silence(&mut g, HUMAN, 60_000);
        let ev = g.finish_round().unwrap();
        assert_eq!(g.score(HUMAN), 2);
        assert!(matches!(ev[2].payload, EventPayload::RoundEnded { full_minute: true, .. }));
        assert_eq!(g.current_speaker(), Some(PlayerId(1)));
        assert_eq!(g.performance_score(0, HUMAN), Ok(2));
        assert_eq!(g.performance_score(1, HUMAN), Err(GameError::RoundNotFinished(1)));
    }

    #[test]
    fn clock_is_clipped_at_the_round_end() {
        let mut g = game(1);
        silence(&mut g, HUMAN, 59_800);
        let ev = say(&mut g, HUMAN, "one two three");
        match &ev[0].payload {
            EventPayload::TokensIngested { tokens, covered_ms, .. } => {
                assert_eq!(*covered_ms, 200);
                assert!(tokens.is_empty());
            }
            _ => unreachable!(),
        }
        assert_eq!(g.clock_remaining_ms(), 0);
        assert!(g.settle().iter().any(|e| matches!(e.payload, EventPayload::GameEnded { .. })));
        assert!(g.is_ended());
        assert_eq!(g.winners(), [HUMAN]);
        assert_eq!(say_err(&mut g), GameError::GameEnded);
    }

    fn say_err(g: &mut Game) -> GameError {
        let b = SpeechBatch::from_text("x", g.lexicons());
        g.ingest(HUMAN, &b).unwrap_err()
    }

    #[test]
    fn appeal_revokes_a_point_backed_by_a_mistranscription() {
        let mut g = game(1);
        say(&mut g, HUMAN, "I saw a bear near the bear cave");
        assert!(g.raise_challenge(PlayerId(1), ViolationKind::Repetition, None).unwrap().accepted);
        assert_eq!(g.score(PlayerId(1)), 1);
        let idx = g.segments()[0].tokens.iter().rposition(|t| t.text == "bear").unwrap();
        let amend = Amendment { segment: 0, start: idx, end: idx + 1, replacement: vec!["bare".into()] };
        let ev = g.apply_appeal(HUMAN, &amend).unwrap();
        let names: Vec<&str> = ev.iter().map(|e| e.payload.name()).collect();
        assert_eq!(names, ["AppealApplied", "ScoreRevoked"]);
        assert_eq!(g.score(PlayerId(1)), 0);
        assert!(g.challenges()[0].revoked);
        // Floor history is untouched.
        assert_eq!(g.current_speaker(), Some(PlayerId(1)));
        // A second identical appeal changes nothing.
        assert!(g.apply_appeal(HUMAN, &amend).unwrap().is_empty());
    }

    #[test]
    fn appeal_keeps_claims_that_still_hold() {
        let mut g = game(1);
        say(&mut g, HUMAN, "milk then milk and a cat");
        assert!(g.raise_challenge(PlayerId(1), ViolationKind::Repetition, None).unwrap().accepted);
        let amend = Amendment { segment: 0, start: 0, end: 1, replacement: vec!["warm".into(), "milk".into()] };
        let ev = g.apply_appeal(HUMAN, &amend).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(g.score(PlayerId(1)), 1);
        assert_eq!(g.segments()[0].claimed.keys().next().unwrap().anchor, 6);
    }

    #[test]
    fn noop_appeal_emits_nothing() {
        let mut g = game(1);
        say(&mut g, HUMAN, "my pet sleeps");
        let ev = g
            .apply_appeal(HUMAN, &Amendment { segment: 0, start: 1, end: 2, replacement: vec!["pet".into()] })
            .unwrap();
        assert!(ev.is_empty());
        assert!(matches!(
            g.apply_appeal(PlayerId(1), &Amendment { segment: 0, start: 0, end: 1, replacement: vec![] }),
            Err(GameError::NotSegmentOwner { .. })
        ));
        assert!(matches!(
            g.apply_appeal(HUMAN, &Amendment { segment: 9, start: 0, end: 1, replacement: vec![] }),
            Err(GameError::UnknownSegment(9))
        ));
    }

    #[test]
    fn anchor_remapping() {
        assert_eq!(remap_anchor(3, 2, 4, 1), Some(3));
        assert_eq!(remap_anchor(10, 2, 4, 1), Some(8));
        assert_eq!(remap_anchor(4, 2, 4, 1), Some(4));
        assert_eq!(remap_anchor(6, 2, 4, 1), None);
        assert_eq!(remap_anchor(6, 2, 4, 3), Some(6));
    }
}
