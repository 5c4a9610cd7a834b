use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::Gateway;
use crate::lexicon::Lexicons;
use crate::rules::{analyze, DetectorConfig, Evidence, Span, Topic, ViolationKind};
use crate::transcript::{SpeechBatch, TranscriptToken, SYNTHETIC_GAP_MS, SYNTHETIC_WORD_MS};

use super::{Persona, PersonaError, PersonaPools};

const INJECTED_FILLERS: [&str; 4] = ["um", "uh", "er", "erm"];
const FILLER_PAUSE_MS: std::ops::RangeInclusive<u64> = 700..=1400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InjectionPayload {
    FillerRun { fillers: Vec<String> },
    FillerPause { filler: String, pause_ms: u64 },
    Reuse { word: String },
    /// A block of off-topic sentences covering tokens `position..end`.
    Digression { sentences: usize, end: usize },
    /// Recovered from a provider-generated speech by re-analysis.
    Detected { description: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionMarker {
    /// Index of the first token of the injection.
    pub position: usize,
    pub kind: ViolationKind,
    pub payload: InjectionPayload,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    pub markers: Vec<InjectionMarker>,
}

impl InjectionPlan {
    pub fn count(&self, kind: ViolationKind) -> usize {
        self.markers.iter().filter(|m| m.kind == kind).count()
    }
}

/// One generated speech.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub text: String,
    pub tokens: Vec<TranscriptToken>,
    pub duration_ms: u64,
    pub plan: InjectionPlan,
}

/// Builds opponent speeches from the template bank, or from a provider.
pub struct SpeechGenerator<'a> {
    pub pools: &'a PersonaPools,
    pub lex: &'a Lexicons,
    pub detectors: &'a DetectorConfig,
}

/// Mock generation when the gateway runs offline, provider generation
/// otherwise.
pub fn generate_turn<R: Rng + ?Sized>(
    generator: &SpeechGenerator<'_>,
    persona: &Persona,
    topic: &Topic,
    duration_ms: u64,
    rng: &mut R,
    provider: &Gateway,
) -> Result<Turn, PersonaError> {
    if provider.is_live() {
        generator.live(persona, topic, duration_ms, provider)
    } else {
        generator.mock(persona, topic, duration_ms, rng)
    }
}

struct Emitter {
    words: Vec<String>,
    pause_after: BTreeMap<usize, u64>,
    cursor_ms: u64,
    last_injected: bool,
    pending: [usize; 2],
    per_word: [f64; 2],
    markers: Vec<InjectionMarker>,
}

const H: usize = 0;
const R: usize = 1;

/// Share of `{T}` slots filled with the whole topic phrase.
const PHRASE_FILL: f64 = 0.3;
/// Mean words added by one injected hesitation (a two-filler run or a
/// filler with a pause, equally likely).
const WORDS_PER_HESITATION: f64 = 1.5;

impl Emitter {
    fn emit<G: Rng + ?Sized>(&mut self, surface: String, injected: bool, rng: &mut G) {
        self.words.push(surface);
        self.cursor_ms += SYNTHETIC_WORD_MS + SYNTHETIC_GAP_MS;
        self.last_injected = injected;
        for k in [H, R] {
            if self.per_word[k] > 0.0 && rng.random_bool(self.per_word[k]) {
                self.pending[k] += 1;
            }
        }
    }

    fn maybe_hesitate<G: Rng + ?Sized>(&mut self, rng: &mut G) {
        if self.pending[H] == 0 || self.last_injected {
            return;
        }
        self.pending[H] -= 1;
        let position = self.words.len();
        let payload = if rng.random_bool(0.5) {
            let fillers: Vec<String> = INJECTED_FILLERS.choose_multiple(rng, 2).map(|f| f.to_string()).collect();
            for f in &fillers {
                self.emit(format!("{f},"), true, rng);
            }
            InjectionPayload::FillerRun { fillers }
        } else {
            let filler = INJECTED_FILLERS[rng.random_range(0..INJECTED_FILLERS.len())].to_string();
            let pause_ms = rng.random_range(FILLER_PAUSE_MS);
            self.emit(format!("{filler},"), true, rng);
            self.pause_after.insert(self.words.len() - 1, pause_ms);
            self.cursor_ms += pause_ms;
            InjectionPayload::FillerPause { filler, pause_ms }
        };
        self.markers.push(InjectionMarker {
            position,
            kind: ViolationKind::Hesitation,
            payload,
        });
    }

    fn text(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(w);
            if let Some(ms) = self.pause_after.get(&i) {
                out.push_str(&format!(" [pause:{ms}]"));
            }
        }
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

impl SpeechGenerator<'_> {
    /// Chance of opening a digression block at an eligible sentence
    /// boundary. Hesitation and repetition are triggered per word, but a
    /// digression spans several sentences, so per-word triggers near the
    /// end of a speech could never be placed. Instead each boundary after
    /// an on-topic sentence opens a block with probability `q`. A cycle is
    /// either a block and the on-topic sentence that must follow it
    /// (`b + s` words, one deviation) or a plain sentence (`s` words), so
    /// the density is `q / (s + q b)`; solving for the configured rate gives
    /// `q = rho s / (1 - rho b)`.
    fn digression_probability(&self, rate: f64, hesitation_rate: f64, block: usize, topic: &Topic, empty_bag: bool) -> f64 {
        let rho = rate / 100.0;
        if rho <= 0.0 {
            return 0.0;
        }
        let phrase_len = topic.title.split_whitespace().count().max(1) as f64;
        let fill = if empty_bag { phrase_len } else { PHRASE_FILL * phrase_len + (1.0 - PHRASE_FILL) };
        let mean_len = |templates: &[String], fill: f64| {
            let total: f64 = templates
                .iter()
                .map(|t| t.split_whitespace().map(|c| if c.contains("{T}") { fill } else { 1.0 }).sum::<f64>())
                .sum();
            total / templates.len().max(1) as f64
        };
        // Injected fillers lengthen every sentence by the same factor.
        let inflate = 1.0 / (1.0 - (WORDS_PER_HESITATION * hesitation_rate / 100.0).min(0.5));
        let s = mean_len(&self.pools.on_topic_templates, fill) * inflate;
        let b = block as f64 * mean_len(&self.pools.digression_templates, fill) * inflate;
        if rho * b >= 1.0 {
            return 1.0;
        }
        (rho * s / (1.0 - rho * b)).clamp(0.0, 1.0)
    }

    /// Template speech with deliberate violations. Base sentences never
    /// break a rule: fixed template words are common words, every content
    /// slot gets a fresh word and every on-topic sentence names the topic.
    /// Violations come only from injections. Hesitations and repetitions
    /// are triggered per emitted word with probability `rate / 100` and
    /// placed at the next legal point; digressions are opened at sentence
    /// boundaries (see [`Self::digression_probability`]).
    pub fn mock<G: Rng + ?Sized>(
        &self,
        persona: &Persona,
        topic: &Topic,
        duration_ms: u64,
        rng: &mut G,
    ) -> Result<Turn, PersonaError> {
        if duration_ms == 0 {
            return Err(PersonaError::ZeroDuration);
        }
        if self.pools.on_topic_templates.is_empty() || self.pools.digression_templates.is_empty() {
            return Err(PersonaError::EmptyPools("template"));
        }
        let bag: Vec<String> = topic.content_bag(self.lex).into_iter().collect();
        let title_words = topic.words();
        let phrase = topic.title.trim().to_lowercase();
        let mut fresh: Vec<&String> = self
            .pools
            .vocabulary
            .iter()
            .filter(|w| !title_words.contains(*w) && !bag.contains(w))
            .collect();
        fresh.shuffle(rng);
        let mut used: Vec<String> = Vec::new();

        let rates = &persona.violation_rates;
        let mut em = Emitter {
            words: Vec::new(),
            pause_after: BTreeMap::new(),
            cursor_ms: 0,
            last_injected: false,
            pending: [0; 2],
            per_word: [rates.hesitation, rates.repetition].map(|r| (r / 100.0).clamp(0.0, 1.0)),
            markers: Vec::new(),
        };
        let block = self.detectors.deviation_window_sentences.max(1);
        let p_block = self.digression_probability(rates.deviation, rates.hesitation, block, topic, bag.is_empty());
        let mut on_topic_since_block = 1usize;

        while em.cursor_ms < duration_ms {
            let digress = on_topic_since_block >= 1 && p_block > 0.0 && rng.random_bool(p_block);
            let templates: Vec<&String> = if digress {
                on_topic_since_block = 0;
                (0..block)
                    .map(|_| &self.pools.digression_templates[rng.random_range(0..self.pools.digression_templates.len())])
                    .collect()
            } else {
                on_topic_since_block += 1;
                vec![&self.pools.on_topic_templates[rng.random_range(0..self.pools.on_topic_templates.len())]]
            };
            let block_start = em.words.len();
            for template in templates {
                let mut first = true;
                for chunk in template.split_whitespace() {
                    em.maybe_hesitate(rng);
                    let pieces: Vec<String> = if chunk.contains("{T}") {
                        let fill = if bag.is_empty() || rng.random_bool(PHRASE_FILL) {
                            phrase.clone()
                        } else {
                            bag[rng.random_range(0..bag.len())].clone()
                        };
                        let words: Vec<&str> = fill.split_whitespace().collect();
                        let (head, tail) = chunk.split_once("{T}").unwrap_or(("", ""));
                        let last = words.len().saturating_sub(1);
                        words
                            .iter()
                            .enumerate()
                            .map(|(i, w)| {
                                let mut s = String::new();
                                if i == 0 {
                                    s.push_str(head);
                                }
                                s.push_str(w);
                                if i == last {
                                    s.push_str(tail);
                                }
                                s
                            })
                            .collect()
                    } else if chunk.contains("{C}") {
                        let word = if em.pending[R] > 0 && !used.is_empty() {
                            em.pending[R] -= 1;
                            let w = used.swap_remove(rng.random_range(0..used.len()));
                            em.markers.push(InjectionMarker {
                                position: em.words.len(),
                                kind: ViolationKind::Repetition,
                                payload: InjectionPayload::Reuse { word: w.clone() },
                            });
                            w
                        } else {
                            let w = fresh
                                .pop()
                                .ok_or(PersonaError::EmptyPools("vocabulary"))?
                                .clone();
                            used.push(w.clone());
                            w
                        };
                        vec![chunk.replace("{C}", &word)]
                    } else {
                        vec![chunk.to_string()]
                    };
                    for (i, p) in pieces.into_iter().enumerate() {
                        if i > 0 {
                            em.maybe_hesitate(rng);
                        }
                        let s = if first { capitalize(&p) } else { p };
                        first = false;
                        em.emit(s, false, rng);
                    }
                }
            }
            if digress {
                em.markers.push(InjectionMarker {
                    position: block_start,
                    kind: ViolationKind::Deviation,
                    payload: InjectionPayload::Digression {
                        sentences: block,
                        end: em.words.len(),
                    },
                });
            }
        }

        let text = em.text();
        let batch = SpeechBatch::from_text(&text, self.lex);
        debug_assert_eq!(batch.tokens.len(), em.words.len());
        let mut markers = em.markers;
        markers.sort_by_key(|m| m.position);
        Ok(Turn {
            text,
            tokens: batch.tokens,
            duration_ms: batch.duration_ms,
            plan: InjectionPlan { markers },
        })
    }

    /// Provider speech. The plan is recovered by analyzing the output, since
    /// the model's rule-breaking cannot be known in advance.
    pub fn live(
        &self,
        persona: &Persona,
        topic: &Topic,
        duration_ms: u64,
        provider: &Gateway,
    ) -> Result<Turn, PersonaError> {
        if duration_ms == 0 {
            return Err(PersonaError::ZeroDuration);
        }
        let words = duration_ms / (SYNTHETIC_WORD_MS + SYNTHETIC_GAP_MS);
        let vars = [
            ("name", persona.name.clone()),
            ("style", persona.style_tags.join(", ")),
            ("words", words.to_string()),
            ("hesitation_rate", format!("{:.1}", persona.violation_rates.hesitation)),
            ("repetition_rate", format!("{:.1}", persona.violation_rates.repetition)),
            ("deviation_rate", format!("{:.1}", persona.violation_rates.deviation)),
            ("topic", topic.title.clone()),
        ];
        let text = provider
            .complete("persona_speech", &vars)
            .map_err(|e| PersonaError::ProviderFailure(e.to_string()))?;
        let batch = SpeechBatch::from_text(&text, self.lex);
        let report = analyze(&batch.tokens, topic, self.detectors, self.lex)
            .map_err(|e| PersonaError::ProviderFailure(e.to_string()))?;
        let mut markers: Vec<InjectionMarker> = report
            .violations
            .iter()
            .filter(|v| !matches!(&v.evidence, Evidence::Repetition { occurrence, .. } if *occurrence > self.detectors.repetition_threshold))
            .map(|v| InjectionMarker {
                position: match v.span {
                    Span::Tokens { start, .. } => start,
                    Span::Gap { after } => after + 1,
                },
                kind: v.kind,
                payload: InjectionPayload::Detected {
                    description: v.describe(),
                },
            })
            .collect();
        markers.sort_by_key(|m| m.position);
        Ok(Turn {
            text,
            tokens: batch.tokens,
            duration_ms: batch.duration_ms,
            plan: InjectionPlan { markers },
        })
    }
}
