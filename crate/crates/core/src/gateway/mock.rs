//! Deterministic offline backend: canned completions, scripted transcripts
//! keyed by chunk id, optional homophone noise and silent synthesis.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::lexicon::Lexicons;
use crate::seed::derive_rng;
use crate::transcript::{parse_transcript, SilenceSpan, TranscriptFile, TranscriptToken, SYNTHETIC_WORD_MS};

use super::audio::{decode_wav, encode_silence};
use super::prompts::{PromptLibrary, RenderedPrompt};
use super::{AudioChunk, Backend, GatewayError, RawTranscript, MOCK_VOICES};

const DEFAULT_RESPONSES: &str = include_str!("../../data/mock_responses.txt");
const DEFAULT_HOMOPHONES: &str = include_str!("../../data/homophones.txt");

/// Stand-ins for words with no homophone; all short and easy to mishear.
const MISHEARINGS: [&str; 6] = ["a", "the", "and", "in", "on", "an"];

/// Corrupts each transcribed token with probability `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    responses: PromptLibrary,
    fixtures: BTreeMap<String, TranscriptFile>,
    homophones: BTreeMap<String, Vec<String>>,
    noise: Option<NoiseConfig>,
    latency_ms: u64,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend {
            responses: PromptLibrary::parse(DEFAULT_RESPONSES).expect("bundled mock responses parse"),
            fixtures: BTreeMap::new(),
            homophones: parse_homophones(DEFAULT_HOMOPHONES),
            noise: None,
            latency_ms: 0,
        }
    }
}

fn parse_homophones(text: &str) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let group: Vec<&str> = line.split_whitespace().collect();
        for w in &group {
            let others = group.iter().filter(|o| *o != w).map(|o| o.to_string());
            out.entry(w.to_string()).or_default().extend(others);
        }
    }
    out
}

/// Fixture key for a chunk: its id, or the hex sha256 of the WAV bytes.
pub fn fixture_key(chunk: &AudioChunk) -> String {
    match &chunk.id {
        Some(id) => id.clone(),
        None => Sha256::digest(&chunk.wav).iter().map(|b| format!("{b:02x}")).collect(),
    }
}

impl MockBackend {
    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = Some(noise);
        self
    }

    /// Simulated provider latency; above the request timeout every call
    /// times out.
    pub fn with_latency(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }

    pub fn with_fixture(mut self, key: impl Into<String>, fixture: TranscriptFile) -> Self {
        self.fixtures.insert(key.into(), fixture);
        self
    }

    /// Loads every `*.txt` in `dir` as a transcript fixture keyed by file stem.
    pub fn load_fixtures(mut self, dir: &Path, lex: &Lexicons) -> std::io::Result<Self> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(key) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let text = std::fs::read_to_string(&path)?;
            let file = parse_transcript(&text, lex)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            self.fixtures.insert(key.to_string(), file);
        }
        Ok(self)
    }

    pub fn fixture_count(&self) -> usize {
        self.fixtures.len()
    }

    fn check_latency(&self, timeout: Duration) -> Result<(), GatewayError> {
        if Duration::from_millis(self.latency_ms) > timeout {
            return Err(GatewayError::Timeout);
        }
        Ok(())
    }

    fn mishear(&self, token: &TranscriptToken, rng: &mut impl Rng, lex: &Lexicons) -> TranscriptToken {
        let candidates: Vec<&str> = match self.homophones.get(&token.text) {
            Some(h) if !h.is_empty() => h.iter().map(String::as_str).collect(),
            _ => MISHEARINGS.iter().copied().filter(|w| *w != token.text).collect(),
        };
        let word = candidates[rng.random_range(0..candidates.len())];
        let surface = format!("{word}{}", token.trailing_punct.as_deref().unwrap_or_default());
        TranscriptToken::from_surface(&surface, token.start_ms, token.end_ms, lex)
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn is_live(&self) -> bool {
        false
    }

    fn complete(&self, prompt: &RenderedPrompt, timeout: Duration) -> Result<String, GatewayError> {
        self.check_latency(timeout)?;
        self.responses.fill_plain(&prompt.template, &prompt.vars)
    }

    fn transcribe(&self, chunk: &AudioChunk, lex: &Lexicons, timeout: Duration) -> Result<RawTranscript, GatewayError> {
        self.check_latency(timeout)?;
        let key = fixture_key(chunk);
        let raw = match self.fixtures.get(&key) {
            Some(f) => RawTranscript {
                tokens: f.tokens.clone(),
                silences: f.silences.clone(),
            },
            None => {
                let audio = decode_wav(&chunk.wav)?;
                if audio.samples.iter().any(|&s| s != 0) {
                    return Err(GatewayError::ProviderFailure(format!("no scripted transcript for chunk `{key}`")));
                }
                RawTranscript {
                    tokens: Vec::new(),
                    silences: SilenceSpan::new(0, audio.duration_ms).into_iter().collect(),
                }
            }
        };
        let Some(noise) = self.noise else { return Ok(raw) };
        let key_hash = Sha256::digest(key.as_bytes());
        let part = u64::from_le_bytes(key_hash[..8].try_into().expect("8 bytes"));
        let mut rng = derive_rng(noise.seed, "transcription-noise", &[part]);
        let tokens = raw
            .tokens
            .iter()
            .map(|t| {
                if rng.random_bool(noise.rate.clamp(0.0, 1.0)) {
                    self.mishear(t, &mut rng, lex)
                } else {
                    t.clone()
                }
            })
            .collect();
        Ok(RawTranscript {
            tokens,
            silences: raw.silences,
        })
    }

    /// Silence lasting 350 ms per word.
    fn synthesize(&self, text: &str, voice: &str, timeout: Duration) -> Result<Vec<u8>, GatewayError> {
        self.check_latency(timeout)?;
        if !MOCK_VOICES.contains(&voice) {
            return Err(GatewayError::UnknownVoice(voice.to_string()));
        }
        let words = text.split_whitespace().filter(|w| w.contains(char::is_alphanumeric)).count() as u64;
        Ok(encode_silence(words * SYNTHETIC_WORD_MS))
    }

    fn voices(&self) -> Vec<String> {
        MOCK_VOICES.iter().map(|v| v.to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{wav_duration_ms, Gateway, ProviderProfile};
    use crate::transcript::validate_sequence;
    use std::sync::Arc;

    fn lex() -> Lexicons {
        Lexicons::default()
    }

    fn gateway(mock: MockBackend) -> Gateway {
        Gateway::new(Arc::new(mock), ProviderProfile::default(), Arc::new(lex()))
    }

    fn fixture(text: &str) -> TranscriptFile {
        parse_transcript(text, &lex()).unwrap()
    }

    #[test]
    fn scripted_chunk_passes_through() {
        let f = fixture("# jam-tokens v1\n0 300 Hello\n400 800 there.\nduration 1000\n");
        let g = gateway(MockBackend::default().with_fixture("c1", f.clone()));
        let out = g
            .transcribe(&AudioChunk { id: Some("c1".into()), wav: encode_silence(1000) })
            .unwrap();
        assert_eq!(out.tokens, f.tokens);
        assert_eq!(out.duration_ms, 1000);
    }

    #[test]
    fn silence_hallucination_is_sanitized() {
        let f = fixture("# jam-tokens v1\n200 500 thanks\n500 800 for\n800 1200 watching\nsilence 0 2000\n");
        let g = gateway(MockBackend::default().with_fixture("s", f));
        let out = g.transcribe(&AudioChunk { id: Some("s".into()), wav: encode_silence(2000) }).unwrap();
        assert!(out.tokens.is_empty());
    }

    #[test]
    fn unknown_silent_chunk_is_empty_and_noisy_one_fails() {
        let g = gateway(MockBackend::default());
        let out = g.transcribe(&AudioChunk { id: None, wav: encode_silence(500) }).unwrap();
        assert!(out.tokens.is_empty());
        let wav = crate::gateway::encode_wav(&[1000; 1600]);
        assert!(matches!(
            g.transcribe(&AudioChunk { id: None, wav }),
            Err(GatewayError::ProviderFailure(_))
        ));
    }

    #[test]
    fn chunks_can_be_keyed_by_content_hash() {
        let wav = encode_silence(300);
        let key = fixture_key(&AudioChunk { id: None, wav: wav.clone() });
        let f = fixture("# jam-tokens v1\n0 300 milk\n");
        let g = gateway(MockBackend::default().with_fixture(key, f));
        assert_eq!(g.transcribe(&AudioChunk { id: None, wav }).unwrap().tokens.len(), 1);
    }

    #[test]
    fn noise_changes_words_but_not_timing() {
        let text: String = (0..200).map(|i| format!("{} {} word{i}\n", i * 100, i * 100 + 80)).collect();
        let f = fixture(&format!("# jam-tokens v1\n{text}"));
        let g = gateway(MockBackend::default().with_fixture("n", f.clone()).with_noise(NoiseConfig { rate: 1.0, seed: 1 }));
        let out = g.transcribe(&AudioChunk { id: Some("n".into()), wav: encode_silence(20_000) }).unwrap();
        validate_sequence(&out.tokens).unwrap();
        assert_eq!(out.tokens.len(), f.tokens.len());
        for (a, b) in out.tokens.iter().zip(&f.tokens) {
            assert_ne!(a.text, b.text);
            assert_eq!((a.start_ms, a.end_ms), (b.start_ms, b.end_ms));
        }
    }

    #[test]
    fn homophones_are_preferred() {
        let f = fixture("# jam-tokens v1\n0 100 there,\n");
        let g = gateway(MockBackend::default().with_fixture("h", f).with_noise(NoiseConfig { rate: 1.0, seed: 9 }));
        let out = g.transcribe(&AudioChunk { id: Some("h".into()), wav: encode_silence(100) }).unwrap();
        assert!(["their", "they're"].contains(&out.tokens[0].text.as_str()));
        assert_eq!(out.tokens[0].trailing_punct.as_deref(), Some(","));
    }

    #[test]
    fn synthesis_is_silent_and_timed() {
        let g = gateway(MockBackend::default());
        let wav = g.synthesize_voice("one two three four five six seven eight nine ten", "nova").unwrap();
        assert_eq!(wav_duration_ms(&wav).unwrap(), 3500);
        assert_eq!(wav_duration_ms(&g.synthesize_voice("", "nova").unwrap()).unwrap(), 0);
        assert_eq!(g.synthesize_voice("hi", "robot"), Err(GatewayError::UnknownVoice("robot".into())));
    }

    #[test]
    fn canned_intro_mentions_topic() {
        let g = gateway(MockBackend::default());
        let a = g.complete("host_intro", &[("round", "1".into()), ("topic", "my pet".into())]).unwrap();
        let b = g.complete("host_intro", &[("round", "1".into()), ("topic", "my pet".into())]).unwrap();
        assert!(a.contains("my pet"));
        assert_eq!(a, b);
    }

    #[test]
    fn slow_provider_times_out_after_retries() {
        let profile = ProviderProfile { timeout_ms: 100, backoff_base_ms: 0, ..ProviderProfile::default() };
        let g = Gateway::new(Arc::new(MockBackend::default().with_latency(500)), profile, Arc::new(lex()));
        let r = g.complete("host_intro", &[("round", "1".into()), ("topic", "x".into())]);
        assert_eq!(r, Err(GatewayError::Timeout));
        assert_eq!(g.usage().retries.load(std::sync::atomic::Ordering::SeqCst), 2);
    }
}
