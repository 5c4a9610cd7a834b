//! Simulated opponents: who they are, how they speak, when they challenge,
//! and the host's narration.

mod generator;
mod host;
mod policy;

use std::fmt;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::ViolationKind;

pub use generator::{generate_turn, InjectionMarker, InjectionPayload, InjectionPlan, SpeechGenerator, Turn};
pub use host::{host_narration, round_intro, game_end, verdict};
pub use policy::{decide_challenge, plan_baseless_challenge, BaselessChallenge, ChallengeIntent, VisibleViolation};

const DEFAULT_NAMES: &str = include_str!("../../data/names.txt");
const DEFAULT_TOPICS: &str = include_str!("../../data/topics.txt");
const DEFAULT_VOCABULARY: &str = include_str!("../../data/vocabulary.txt");
const DEFAULT_TEMPLATES: &str = include_str!("../../data/speech_templates.txt");

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("persona count must be at least 1")]
    ZeroCount,
    #[error("the {0} pool is empty")]
    EmptyPools(&'static str),
    #[error("asked for {wanted} personas but the name pool has {available} names")]
    NotEnoughNames { wanted: usize, available: usize },
    #[error("host narration is not defined for {0} events")]
    UnsupportedEvent(String),
    #[error("speech duration must be positive")]
    ZeroDuration,
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("failed to read data file: {0}")]
    Io(#[from] std::io::Error),
    #[error("template file line {line}: {reason}")]
    Template { line: usize, reason: String },
}

/// Expected injections per 100 words, per violation kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationRates {
    pub hesitation: f64,
    pub repetition: f64,
    pub deviation: f64,
}

impl ViolationRates {
    pub fn get(&self, kind: ViolationKind) -> f64 {
        match kind {
            ViolationKind::Hesitation => self.hesitation,
            ViolationKind::Repetition => self.repetition,
            ViolationKind::Deviation => self.deviation,
        }
    }

    pub fn total(&self) -> f64 {
        self.hesitation + self.repetition + self.deviation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub voice_id: String,
    pub violation_rates: ViolationRates,
    /// Probability of challenging each visible opponent violation.
    pub challenge_aggressiveness: f64,
    /// Probability per opponent speech of a baseless challenge.
    pub false_challenge_rate: f64,
    pub style_tags: Vec<String>,
}

impl Persona {
    /// Coarse label used to aggregate results: how error-prone and how
    /// challenge-happy this persona is relative to the difficulty's ranges.
    pub fn archetype(&self, difficulty: &Difficulty) -> &'static str {
        let mid_total = difficulty.hesitation_rate.mid()
            + difficulty.repetition_rate.mid()
            + difficulty.deviation_rate.mid();
        let sloppy = self.violation_rates.total() > mid_total;
        let bold = self.challenge_aggressiveness > difficulty.challenge_aggressiveness.mid();
        match (sloppy, bold) {
            (false, false) => "fluent-cautious",
            (false, true) => "fluent-bold",
            (true, false) => "rambling-cautious",
            (true, true) => "rambling-bold",
        }
    }
}

/// Closed interval `[min, max]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct RateRange {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for RateRange {
    fn from([min, max]: [f64; 2]) -> Self {
        RateRange { min, max }
    }
}

impl From<RateRange> for [f64; 2] {
    fn from(r: RateRange) -> Self {
        [r.min, r.max]
    }
}

impl RateRange {
    pub const fn new(min: f64, max: f64) -> Self {
        RateRange { min, max }
    }

    pub fn fixed(v: f64) -> Self {
        RateRange { min: v, max: v }
    }

    pub fn mid(&self) -> f64 {
        (self.min + self.max) / 2.0
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.min..=self.max).contains(&v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn validate(&self, name: &str, upper: Option<f64>) -> Result<(), String> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min < 0.0 || self.min > self.max {
            return Err(format!("{name} must satisfy 0 <= min <= max"));
        }
        if upper.is_some_and(|u| self.max > u) {
            return Err(format!("{name} must not exceed {}", upper.unwrap_or_default()));
        }
        Ok(())
    }
}

/// How hard the opponents play. Presets are named in configuration and any
/// field can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DifficultyFile")]
pub struct Difficulty {
    pub challenge_frequency_multiplier: f64,
    /// Violations of the human player, counted from the start of the game,
    /// that opponents let pass.
    pub user_violation_grace: usize,
    pub challenge_aggressiveness: RateRange,
    pub false_challenge_rate: RateRange,
    /// Per-100-word injection rate ranges.
    pub hesitation_rate: RateRange,
    pub repetition_rate: RateRange,
    pub deviation_rate: RateRange,
}

impl Default for Difficulty {
    fn default() -> Self {
        Difficulty::preset("standard").expect("standard preset exists")
    }
}

impl Difficulty {
    pub const PRESETS: [&'static str; 3] = ["relaxed", "standard", "show-accurate"];

    pub fn preset(name: &str) -> Option<Self> {
        let d = match name {
            "relaxed" => Difficulty {
                challenge_frequency_multiplier: 0.5,
                user_violation_grace: 3,
                challenge_aggressiveness: RateRange::new(0.1, 0.3),
                false_challenge_rate: RateRange::new(0.0, 0.05),
                hesitation_rate: RateRange::new(0.5, 1.5),
                repetition_rate: RateRange::new(0.5, 1.5),
                deviation_rate: RateRange::new(0.2, 0.6),
            },
            "standard" => Difficulty {
                challenge_frequency_multiplier: 1.0,
                user_violation_grace: 1,
                challenge_aggressiveness: RateRange::new(0.2, 0.5),
                false_challenge_rate: RateRange::new(0.02, 0.1),
                hesitation_rate: RateRange::new(1.0, 3.0),
                repetition_rate: RateRange::new(1.0, 3.0),
                deviation_rate: RateRange::new(0.4, 1.0),
            },
            "show-accurate" => Difficulty {
                challenge_frequency_multiplier: 1.5,
                user_violation_grace: 0,
                challenge_aggressiveness: RateRange::new(0.4, 0.8),
                false_challenge_rate: RateRange::new(0.05, 0.15),
                hesitation_rate: RateRange::new(2.0, 4.0),
                repetition_rate: RateRange::new(2.0, 4.0),
                deviation_rate: RateRange::new(0.6, 1.4),
            },
            _ => return None,
        };
        Some(d)
    }

    /// Opponents that never break a rule and never challenge.
    pub fn silent() -> Self {
        Difficulty {
            challenge_frequency_multiplier: 1.0,
            user_violation_grace: 0,
            challenge_aggressiveness: RateRange::fixed(0.0),
            false_challenge_rate: RateRange::fixed(0.0),
            hesitation_rate: RateRange::fixed(0.0),
            repetition_rate: RateRange::fixed(0.0),
            deviation_rate: RateRange::fixed(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.challenge_frequency_multiplier.is_finite() || self.challenge_frequency_multiplier < 0.0 {
            return Err("challenge_frequency_multiplier must be non-negative".into());
        }
        self.challenge_aggressiveness.validate("challenge_aggressiveness", Some(1.0))?;
        self.false_challenge_rate.validate("false_challenge_rate", Some(1.0))?;
        self.hesitation_rate.validate("hesitation_rate", None)?;
        self.repetition_rate.validate("repetition_rate", None)?;
        self.deviation_rate.validate("deviation_rate", None)
    }

    /// Challenge probability after applying the multiplier.
    pub fn scaled(&self, p: f64) -> f64 {
        (p * self.challenge_frequency_multiplier).clamp(0.0, 1.0)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DifficultyFile {
    preset: Option<String>,
    challenge_frequency_multiplier: Option<f64>,
    user_violation_grace: Option<usize>,
    challenge_aggressiveness: Option<RateRange>,
    false_challenge_rate: Option<RateRange>,
    hesitation_rate: Option<RateRange>,
    repetition_rate: Option<RateRange>,
    deviation_rate: Option<RateRange>,
}

impl TryFrom<DifficultyFile> for Difficulty {
    type Error = String;

    fn try_from(f: DifficultyFile) -> Result<Self, String> {
        let name = f.preset.as_deref().unwrap_or("standard");
        let mut d = Difficulty::preset(name).ok_or_else(|| {
            format!("unknown difficulty preset `{name}` (expected one of {:?})", Difficulty::PRESETS)
        })?;
        macro_rules! apply {
            ($($field:ident),*) => { $(if let Some(v) = f.$field { d.$field = v; })* };
        }
        apply!(
            challenge_frequency_multiplier,
            user_violation_grace,
            challenge_aggressiveness,
            false_challenge_rate,
            hesitation_rate,
            repetition_rate,
            deviation_rate
        );
        d.validate()?;
        Ok(d)
    }
}

/// Swappable data pools: names, topics, the mock vocabulary and speech
/// templates.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaPools {
    pub names: Vec<String>,
    pub topics: Vec<String>,
    pub vocabulary: Vec<String>,
    pub on_topic_templates: Vec<String>,
    pub digression_templates: Vec<String>,
}

impl Default for PersonaPools {
    fn default() -> Self {
        let (on_topic_templates, digression_templates) =
            parse_templates(DEFAULT_TEMPLATES).expect("bundled templates are well-formed");
        PersonaPools {
            names: parse_list(DEFAULT_NAMES),
            topics: parse_list(DEFAULT_TOPICS),
            vocabulary: parse_list(DEFAULT_VOCABULARY),
            on_topic_templates,
            digression_templates,
        }
    }
}

impl PersonaPools {
    /// Loads any pool file present in `dir` (`names.txt`, `topics.txt`,
    /// `vocabulary.txt`, `speech_templates.txt`), keeping defaults for the rest.
    pub fn load_dir(dir: &Path) -> Result<Self, PersonaError> {
        let mut pools = PersonaPools::default();
        let read = |name: &str| -> Result<Option<String>, PersonaError> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some(std::fs::read_to_string(p)?))
            } else {
                Ok(None)
            }
        };
        if let Some(t) = read("names.txt")? {
            pools.names = parse_list(&t);
        }
        if let Some(t) = read("topics.txt")? {
            pools.topics = parse_list(&t);
        }
        if let Some(t) = read("vocabulary.txt")? {
            pools.vocabulary = parse_list(&t);
        }
        if let Some(t) = read("speech_templates.txt")? {
            (pools.on_topic_templates, pools.digression_templates) = parse_templates(&t)?;
        }
        Ok(pools)
    }
}

fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn parse_templates(text: &str) -> Result<(Vec<String>, Vec<String>), PersonaError> {
    let (mut on, mut off) = (Vec::new(), Vec::new());
    let mut section: Option<bool> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[on_topic]" => section = Some(true),
            "[digression]" => section = Some(false),
            _ => match section {
                Some(true) if line.contains("{T}") => on.push(line.to_string()),
                Some(true) => {
                    return Err(PersonaError::Template {
                        line: i + 1,
                        reason: "on-topic template without a {T} slot".into(),
                    })
                }
                Some(false) if line.contains("{T}") => {
                    return Err(PersonaError::Template {
                        line: i + 1,
                        reason: "digression template with a {T} slot".into(),
                    })
                }
                Some(false) => off.push(line.to_string()),
                None => {
                    return Err(PersonaError::Template {
                        line: i + 1,
                        reason: "template outside of a section".into(),
                    })
                }
            },
        }
    }
    Ok((on, off))
}

const STYLE_TAGS: [&str; 8] = [
    "chatty",
    "nervous",
    "meandering",
    "precise",
    "storyteller",
    "dry wit",
    "excitable",
    "laid-back",
];

/// Draws `count` opponents with unique names, provider voices and rates
/// sampled from the difficulty's ranges.
pub fn spawn_personas<R: Rng + ?Sized>(
    count: usize,
    difficulty: &Difficulty,
    voices: &[String],
    pools: &PersonaPools,
    rng: &mut R,
) -> Result<Vec<Persona>, PersonaError> {
    if count == 0 {
        return Err(PersonaError::ZeroCount);
    }
    if pools.names.is_empty() {
        return Err(PersonaError::EmptyPools("name"));
    }
    if voices.is_empty() {
        return Err(PersonaError::EmptyPools("voice"));
    }
    if count > pools.names.len() {
        return Err(PersonaError::NotEnoughNames {
            wanted: count,
            available: pools.names.len(),
        });
    }
    let names: Vec<&String> = pools.names.choose_multiple(rng, count).collect();
    Ok(names
        .into_iter()
        .map(|name| {
            let voice_id = voices[rng.random_range(0..voices.len())].clone();
            let violation_rates = ViolationRates {
                hesitation: difficulty.hesitation_rate.sample(rng),
                repetition: difficulty.repetition_rate.sample(rng),
                deviation: difficulty.deviation_rate.sample(rng),
            };
            let challenge_aggressiveness = difficulty.challenge_aggressiveness.sample(rng);
            let false_challenge_rate = difficulty.false_challenge_rate.sample(rng);
            let style_tags = STYLE_TAGS.choose_multiple(rng, 2).map(|s| s.to_string()).collect();
            Persona {
                name: name.clone(),
                voice_id,
                violation_rates,
                challenge_aggressiveness,
                false_challenge_rate,
                style_tags,
            }
        })
        .collect())
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name, self.style_tags.join(", "))
    }
}
