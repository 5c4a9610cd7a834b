//! Statistics derived from event logs. Everything here is a pure function of
//! a game's events, so a cached copy can always be thrown away and rebuilt.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{replay_text, EndReason, EventPayload, Game, GameError, PlayerId, PlayerKind};
use crate::lexicon::Lexicons;

/// Archetype label for the human seat, whose persona (if any) is not logged.
pub const HUMAN_ARCHETYPE: &str = "human";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerStats {
    pub player: PlayerId,
    pub name: String,
    pub archetype: String,
    pub points: i64,
    pub challenges_made: usize,
    pub correct_challenges: usize,
    pub challenges_received: usize,
    /// Own points minus the best opponent's.
    pub margin: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechRate {
    pub segment: usize,
    pub round: usize,
    pub speaker: PlayerId,
    pub rules_broken: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub seed: u64,
    pub complete: bool,
    pub end_reason: Option<EndReason>,
    pub players: Vec<PlayerStats>,
    pub winners: Vec<PlayerId>,
    /// The human's performance score per finished round.
    pub performance_scores: Vec<Option<i64>>,
    pub speeches: Vec<SpeechRate>,
}

impl StatsRecord {
    pub fn from_game(game: &Game) -> Self {
        let summary = game.summary();
        let mut made: BTreeMap<PlayerId, (usize, usize)> = BTreeMap::new();
        let mut received: BTreeMap<PlayerId, usize> = BTreeMap::new();
        for e in game.events() {
            if let EventPayload::VerdictIssued {
                challenger,
                target,
                accepted,
                ..
            } = &e.payload
            {
                let m = made.entry(*challenger).or_default();
                m.0 += 1;
                m.1 += usize::from(*accepted);
                *received.entry(*target).or_default() += 1;
            }
        }
        let difficulty = &game.config().difficulty;
        let players = game
            .players()
            .iter()
            .map(|p| {
                let points = game.score(p.id);
                let best_other = game
                    .players()
                    .iter()
                    .filter(|o| o.id != p.id)
                    .map(|o| game.score(o.id))
                    .max()
                    .unwrap_or(0);
                let archetype = match (&p.kind, &p.persona) {
                    (PlayerKind::Ai, Some(persona)) => persona.archetype(difficulty).to_string(),
                    _ => HUMAN_ARCHETYPE.to_string(),
                };
                let (challenges_made, correct_challenges) = made.get(&p.id).copied().unwrap_or_default();
                PlayerStats {
                    player: p.id,
                    name: p.name.clone(),
                    archetype,
                    points,
                    challenges_made,
                    correct_challenges,
                    challenges_received: received.get(&p.id).copied().unwrap_or(0),
                    margin: points - best_other,
                }
            })
            .collect();
        StatsRecord {
            seed: game.config().rng_seed,
            complete: summary.complete,
            end_reason: summary.end_reason,
            players,
            winners: summary.winners,
            performance_scores: summary.performance_scores,
            speeches: summary
                .speeches
                .iter()
                .map(|s| SpeechRate {
                    segment: s.segment,
                    round: s.round,
                    speaker: s.speaker,
                    rules_broken: s.rules_broken,
                })
                .collect(),
        }
    }

    pub fn from_log(text: &str, lex: Arc<Lexicons>) -> Result<Self, GameError> {
        Ok(StatsRecord::from_game(&replay_text(text, lex)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    pub stddev: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; zeros for no samples.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd { n, mean: 0.0, stddev: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        MeanStd {
            n,
            mean,
            stddev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    /// `None` for the open-ended last bucket.
    pub hi: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub summary: MeanStd,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub buckets: Vec<Bucket>,
}

/// Width of a RulesBroken histogram bucket.
pub const BUCKET_WIDTH: f64 = 0.02;
const BUCKETS: usize = 10;

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => 0.0,
            n if n % 2 == 1 => sorted[n / 2],
            n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
        };
        let mut buckets: Vec<Bucket> = (0..BUCKETS)
            .map(|i| Bucket {
                lo: i as f64 * BUCKET_WIDTH,
                hi: (i + 1 < BUCKETS).then(|| (i + 1) as f64 * BUCKET_WIDTH),
                count: 0,
            })
            .collect();
        for v in &sorted {
            let i = ((v / BUCKET_WIDTH).floor() as usize).min(BUCKETS - 1);
            buckets[i].count += 1;
        }
        Distribution {
            summary: MeanStd::of(&sorted),
            min: sorted.first().copied().unwrap_or(0.0),
            median,
            max: sorted.last().copied().unwrap_or(0.0),
            buckets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeRate {
    pub archetype: String,
    pub seats: usize,
    /// Shared wins count as wins.
    pub wins: usize,
    pub win_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub games: usize,
    pub seed_first: u64,
    pub seed_last: u64,
    /// The human seat's performance score by round index.
    pub performance_by_round: Vec<MeanStd>,
    pub rules_broken: Distribution,
    pub archetypes: Vec<ArchetypeRate>,
}

impl SimReport {
    /// Aggregates per-game records. The result does not depend on the order
    /// of `records`.
    pub fn aggregate(records: &[StatsRecord]) -> Self {
        let mut recs: Vec<&StatsRecord> = records.iter().collect();
        recs.sort_by_key(|r| r.seed);
        let rounds = recs.iter().map(|r| r.performance_scores.len()).max().unwrap_or(0);
        let performance_by_round = (0..rounds)
            .map(|i| {
                let v: Vec<f64> = recs
                    .iter()
                    .filter_map(|r| r.performance_scores.get(i).copied().flatten())
                    .map(|p| p as f64)
                    .collect();
                MeanStd::of(&v)
            })
            .collect();
        let rb: Vec<f64> = recs
            .iter()
            .flat_map(|r| r.speeches.iter().filter_map(|s| s.rules_broken))
            .collect();
        let mut arch: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in &recs {
            for p in &r.players {
                let e = arch.entry(p.archetype.as_str()).or_default();
                e.0 += 1;
                e.1 += usize::from(r.winners.contains(&p.player));
            }
        }
        SimReport {
            games: recs.len(),
            seed_first: recs.first().map_or(0, |r| r.seed),
            seed_last: recs.last().map_or(0, |r| r.seed),
            performance_by_round,
            rules_broken: Distribution::of(&rb),
            archetypes: arch
                .into_iter()
                .map(|(a, (seats, wins))| ArchetypeRate {
                    archetype: a.to_string(),
                    seats,
                    wins,
                    win_rate: wins as f64 / seats as f64,
                })
                .collect(),
        }
    }
}
