//! One front door for every external AI capability: text completion,
//! timestamped transcription, speech synthesis, deviation judgement and
//! feedback. A deterministic offline backend stands in for the provider.
//!
//! The [`Gateway`] adds what every backend needs: bounded retries with
//! exponential backoff, a per-session call budget that degrades to the
//! offline backend, and a cap on concurrent requests.

mod audio;
mod feedback;
mod mock;
mod prompts;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicons;
use crate::rules::{RuleError, Topic, TopicJudge};
use crate::transcript::{reassemble, sanitize_hallucinations, SilenceSpan, TranscriptToken};

pub use audio::{decode_wav, encode_silence, encode_wav, silent_spans, wav_duration_ms, DecodedAudio, SAMPLE_RATE};
pub use feedback::{generate_feedback, FeedbackCritique};
pub use mock::{fixture_key, MockBackend, NoiseConfig};
pub use prompts::{escape_user_text, PromptLibrary, PromptTemplate, RenderedPrompt};

/// Voices offered by the offline backend.
pub const MOCK_VOICES: [&str; 6] = ["alloy", "echo", "fable", "onyx", "nova", "shimmer"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("request timed out")]
    Timeout,
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("unknown voice `{0}`")]
    UnknownVoice(String),
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` needs variable `{name}`")]
    MissingVariable { template: String, name: String },
    #[error("speech is empty")]
    EmptySpeech,
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, GatewayError::Timeout | GatewayError::ProviderFailure(_))
    }
}

/// An uploaded audio chunk: 16 kHz mono 16-bit PCM WAV bytes, with an
/// optional client-chosen id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioChunk {
    pub id: Option<String>,
    pub wav: Vec<u8>,
}

/// Provider output before sanitization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTranscript {
    pub tokens: Vec<TranscriptToken>,
    pub silences: Vec<SilenceSpan>,
}

/// Sanitized transcription plus the length of audio it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcription {
    pub tokens: Vec<TranscriptToken>,
    pub silences: Vec<SilenceSpan>,
    pub duration_ms: u64,
}

/// A capability provider. Implementations must be safe to call from many
/// sessions at once.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    /// Whether calls reach a real provider (and cost money).
    fn is_live(&self) -> bool;
    fn complete(&self, prompt: &RenderedPrompt, timeout: Duration) -> Result<String, GatewayError>;
    fn transcribe(&self, chunk: &AudioChunk, lex: &Lexicons, timeout: Duration) -> Result<RawTranscript, GatewayError>;
    fn synthesize(&self, text: &str, voice: &str, timeout: Duration) -> Result<Vec<u8>, GatewayError>;
    fn voices(&self) -> Vec<String>;
}

/// Call policy. Holds the *name* of the credentials variable, never the
/// secret itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderProfile {
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Provider calls allowed per session before falling back offline.
    pub session_call_budget: Option<u64>,
    pub max_in_flight: usize,
    pub credentials_env: Option<String>,
}

impl Default for ProviderProfile {
    fn default() -> Self {
        ProviderProfile {
            timeout_ms: 20_000,
            max_retries: 2,
            backoff_base_ms: 250,
            session_call_budget: Some(500),
            max_in_flight: 8,
            credentials_env: Some("OPENAI_API_KEY".to_string()),
        }
    }
}

#[derive(Debug, Default)]
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn acquire(&self, max: usize) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= max.max(1) {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().expect("limiter lock");
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Counters for one session's provider use.
#[derive(Debug, Default)]
pub struct UsageCounters {
    pub calls: AtomicU64,
    pub retries: AtomicU64,
    pub fallbacks: AtomicU64,
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    fallback: Arc<MockBackend>,
    profile: ProviderProfile,
    prompts: Arc<PromptLibrary>,
    lex: Arc<Lexicons>,
    limiter: Arc<Limiter>,
    usage: Arc<UsageCounters>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .field("profile", &self.profile)
            .finish()
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway::offline()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, profile: ProviderProfile, lex: Arc<Lexicons>) -> Self {
        Gateway {
            backend,
            fallback: Arc::new(MockBackend::default()),
            profile,
            prompts: Arc::new(PromptLibrary::default()),
            lex,
            limiter: Arc::new(Limiter::default()),
            usage: Arc::new(UsageCounters::default()),
        }
    }

    /// Offline gateway over the default mock backend.
    pub fn offline() -> Self {
        Gateway::new(
            Arc::new(MockBackend::default()),
            ProviderProfile::default(),
            Arc::new(Lexicons::default()),
        )
    }

    pub fn with_backend_and_fallback(mut self, fallback: Arc<MockBackend>) -> Self {
        self.fallback = fallback;
        self
    }

    /// A handle sharing the backend and concurrency cap, with its own budget.
    pub fn for_session(&self) -> Gateway {
        Gateway {
            usage: Arc::new(UsageCounters::default()),
            ..self.clone()
        }
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    pub fn usage(&self) -> &UsageCounters {
        &self.usage
    }

    pub fn lexicons(&self) -> &Arc<Lexicons> {
        &self.lex
    }

    pub fn prompts(&self) -> &PromptLibrary {
        &self.prompts
    }

    /// True while calls still reach the configured live provider.
    pub fn is_live(&self) -> bool {
        self.backend.is_live() && !self.budget_exhausted()
    }

    pub fn voices(&self) -> Vec<String> {
        self.pick().voices()
    }

    fn budget_exhausted(&self) -> bool {
        self.profile
            .session_call_budget
            .is_some_and(|b| self.usage.calls.load(Ordering::Relaxed) >= b)
    }

    fn pick(&self) -> &dyn Backend {
        if self.backend.is_live() && self.budget_exhausted() {
            self.usage.fallbacks.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(backend = self.backend.name(), "session call budget exhausted; using offline backend");
            self.fallback.as_ref()
        } else {
            self.backend.as_ref()
        }
    }

    fn call<T>(&self, mut f: impl FnMut(&dyn Backend, Duration) -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let backend = self.pick();
        let timeout = Duration::from_millis(self.profile.timeout_ms);
        let _slot = self.limiter.acquire(self.profile.max_in_flight);
        let mut attempt = 0;
        loop {
            if backend.is_live() {
                self.usage.calls.fetch_add(1, Ordering::Relaxed);
            }
            match f(backend, timeout) {
                Err(e) if e.retryable() && attempt < self.profile.max_retries => {
                    let wait = self.profile.backoff_base_ms.saturating_mul(1 << attempt);
                    tracing::debug!(error = %e, attempt, wait_ms = wait, "retrying provider call");
                    self.usage.retries.fetch_add(1, Ordering::Relaxed);
                    if wait > 0 {
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Renders a named template with bound variables and completes it.
    pub fn complete(&self, template: &str, vars: &[(&str, String)]) -> Result<String, GatewayError> {
        let prompt = self.prompts.render(template, vars)?;
        self.call(|b, t| b.complete(&prompt, t))
    }

    /// Transcribes a chunk and strips hallucinated phrases that fall inside
    /// reported silence.
    pub fn transcribe(&self, chunk: &AudioChunk) -> Result<Transcription, GatewayError> {
        let audio = decode_wav(&chunk.wav)?;
        let raw = self.call(|b, t| b.transcribe(chunk, &self.lex, t))?;
        let tokens = sanitize_hallucinations(&raw.tokens, &raw.silences, &self.lex);
        let duration_ms = audio.duration_ms.max(tokens.last().map_or(0, |t| t.end_ms));
        Ok(Transcription {
            tokens,
            silences: raw.silences,
            duration_ms,
        })
    }

    pub fn synthesize_voice(&self, text: &str, voice_id: &str) -> Result<Vec<u8>, GatewayError> {
        self.call(|b, t| b.synthesize(text, voice_id, t))
    }

    /// Host narration from the provider, for the announcer's voice.
    pub fn narrate(&self, template: &str, vars: &[(&str, String)]) -> Result<String, GatewayError> {
        self.complete(template, vars)
    }
}

/// Deviation judge backed by the provider; a window is on topic when the
/// returned score is at least `min_score`.
pub struct GatewayJudge<'a> {
    pub gateway: &'a Gateway,
    pub min_score: f64,
}

impl TopicJudge for GatewayJudge<'_> {
    fn on_topic(&self, window: &[TranscriptToken], topic: &Topic) -> Result<bool, RuleError> {
        let reply = self
            .gateway
            .complete(
                "deviation_judge",
                &[("topic", topic.title.clone()), ("passage", reassemble(window))],
            )
            .map_err(|e| RuleError::Judge(e.to_string()))?;
        let score: f64 = reply
            .trim()
            .split_whitespace()
            .next()
            .and_then(|w| w.trim_matches(|c: char| !c.is_ascii_digit() && c != '.').parse().ok())
            .ok_or_else(|| RuleError::Judge(format!("unreadable judge reply `{}`", reply.trim())))?;
        Ok(score >= self.min_score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    /// A live-looking backend that fails a set number of times first.
    struct Flaky {
        failures: AtomicUsize,
        calls: AtomicUsize,
    }

    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn is_live(&self) -> bool {
            true
        }
        fn complete(&self, _: &RenderedPrompt, _: Duration) -> Result<String, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(GatewayError::Timeout);
            }
            Ok("live".into())
        }
        fn transcribe(&self, _: &AudioChunk, _: &Lexicons, _: Duration) -> Result<RawTranscript, GatewayError> {
            Err(GatewayError::ProviderFailure("no".into()))
        }
        fn synthesize(&self, _: &str, _: &str, _: Duration) -> Result<Vec<u8>, GatewayError> {
            Err(GatewayError::ProviderFailure("no".into()))
        }
        fn voices(&self) -> Vec<String> {
            vec!["live-voice".into()]
        }
    }

    fn flaky(failures: usize, budget: Option<u64>) -> (Gateway, Arc<Flaky>) {
        let b = Arc::new(Flaky {
            failures: AtomicUsize::new(failures),
            calls: AtomicUsize::new(0),
        });
        let profile = ProviderProfile {
            backoff_base_ms: 0,
            session_call_budget: budget,
            ..ProviderProfile::default()
        };
        (Gateway::new(b.clone(), profile, Arc::new(Lexicons::default())), b)
    }

    #[test]
    fn retries_twice_then_gives_up() {
        let (g, b) = flaky(2, None);
        assert_eq!(g.complete("host_intro", &[("round", "1".into()), ("topic", "x".into())]).unwrap(), "live");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
        let (g, b) = flaky(3, None);
        assert_eq!(
            g.complete("host_intro", &[("round", "1".into()), ("topic", "x".into())]),
            Err(GatewayError::Timeout)
        );
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
        assert_eq!(g.usage().retries.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn exhausted_budget_falls_back_offline() {
        let (g, b) = flaky(0, Some(2));
        let vars = [("round", "1".to_string()), ("topic", "my pet".to_string())];
        g.complete("host_intro", &vars).unwrap();
        g.complete("host_intro", &vars).unwrap();
        assert!(!g.is_live());
        let text = g.complete("host_intro", &vars).unwrap();
        assert!(text.contains("my pet"));
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
        assert_eq!(g.usage().fallbacks.load(Ordering::SeqCst), 1);
        // A fresh session gets a fresh budget.
        assert!(g.for_session().is_live());
    }

    #[test]
    fn judge_reads_a_score() {
        let g = Gateway::offline();
        let judge = GatewayJudge { gateway: &g, min_score: 0.5 };
        let toks = crate::transcript::tokenize("anything at all.", g.lexicons());
        assert_eq!(judge.on_topic(&toks, &Topic::new("my pet")), Ok(true));
    }
}
