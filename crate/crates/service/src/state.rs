//! Sessions and the commands they accept. Every mutation of a session runs
//! under its lock and is appended to the session log before it is
//! broadcast, so stream order is log order.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use jam_core::driver::{Controller, MatchDriver};
use jam_core::engine::{analyze_speech, parse_log, replay, Amendment, EventPayload, GameSummary, LogWriter, Player, PlayerId, HUMAN};
use jam_core::gateway::{generate_feedback, AudioChunk, FeedbackCritique, Gateway, MockBackend};
use jam_core::stats::StatsRecord;
use jam_core::{GameConfig, GameContext, GameError, GameEvent, Lexicons, SpeechBatch, TranscriptToken, Violation, ViolationKind};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::live::OpenAiBackend;
use crate::store::Store;

/// Buffered events per stream subscriber before it counts as lagging.
const STREAM_BUFFER: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Ended,
}

/// A word with timing relative to the start of its batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordIn {
    pub word: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioIn {
    pub wav_base64: String,
    #[serde(default)]
    pub chunk_id: Option<String>,
}

/// Speech as timed words, typed text, or a WAV chunk. Exactly one of the
/// three must be present.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeechRequest {
    pub tokens: Option<Vec<WordIn>>,
    pub text: Option<String>,
    pub audio: Option<AudioIn>,
    /// Time the batch covers; defaults to the end of the last word.
    pub duration_ms: Option<u64>,
}

pub enum SpeechInput {
    Batch(SpeechBatch),
    Audio(AudioChunk),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub status: SessionStatus,
    pub seed: u64,
    pub human: PlayerId,
    pub players: Vec<Player>,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub created_at: u64,
    pub round: Option<usize>,
    pub topic: Option<String>,
    pub speaker: Option<PlayerId>,
    pub clock_remaining_ms: u64,
    pub awaiting_human: bool,
    pub scores: Vec<(PlayerId, i64)>,
    pub next_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsPage {
    pub events: Vec<GameEvent>,
    /// The seq to ask for next.
    pub next: u64,
    pub ended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechResponse {
    pub seqs: Vec<u64>,
    pub events: Vec<GameEvent>,
    /// The sanitized transcript, for audio uploads.
    pub transcript: Option<Vec<TranscriptToken>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeRequest {
    pub rule: ViolationKind,
    #[serde(default)]
    pub at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeResponse {
    pub challenge: usize,
    pub accepted: bool,
    pub matched: Option<Violation>,
    pub narration: String,
    pub seqs: Vec<u64>,
    pub events: Vec<GameEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppealResponse {
    pub seqs: Vec<u64>,
    pub events: Vec<GameEvent>,
    /// Challenges whose points were taken back.
    pub revoked: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub summary: GameSummary,
    pub stats: StatsRecord,
    pub feedback: Vec<FeedbackCritique>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub live_provider: bool,
}

struct Session {
    driver: MatchDriver,
    writer: LogWriter,
    last_active: Instant,
    feedback: Option<Vec<FeedbackCritique>>,
}

pub struct SessionCell {
    id: String,
    created_at: u64,
    tx: broadcast::Sender<GameEvent>,
    inner: Mutex<Session>,
}

impl SessionCell {
    fn lock(&self) -> MutexGuard<'_, Session> {
        // A panic mid-command leaves the log as the source of truth; keep
        // serving what was committed.
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Persists, then publishes.
    fn commit(&self, s: &mut Session, events: &[GameEvent]) -> Result<(), ApiError> {
        if events.is_empty() {
            return Ok(());
        }
        s.writer.append(events)?;
        for e in events {
            // No receivers is fine.
            let _ = self.tx.send(e.clone());
        }
        Ok(())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<GameEvent> {
        self.tx.subscribe()
    }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn seqs(events: &[GameEvent]) -> Vec<u64> {
    events.iter().map(|e| e.seq).collect()
}

fn status_of(driver: &MatchDriver) -> SessionStatus {
    if driver.game().is_ended() {
        SessionStatus::Ended
    } else {
        SessionStatus::Active
    }
}

/// The offline backend (with any configured fixtures), or the live
/// provider when enabled and its credentials variable is set.
pub fn build_gateway(cfg: &ServiceConfig, lex: Arc<Lexicons>) -> std::io::Result<Gateway> {
    let mut mock = MockBackend::default();
    if let Some(dir) = &cfg.fixtures_dir {
        mock = mock.load_fixtures(dir, &lex)?;
    }
    let mock = Arc::new(mock);
    let profile = cfg.provider_profile();
    if cfg.provider.enabled {
        match OpenAiBackend::from_env(cfg.provider.clone(), &cfg.credentials_env) {
            Some(live) => return Ok(Gateway::new(Arc::new(live), profile, lex).with_backend_and_fallback(mock)),
            None => tracing::warn!(
                env = %cfg.credentials_env,
                "provider enabled but its credentials variable is unset; running offline"
            ),
        }
    }
    Ok(Gateway::new(mock.clone(), profile, lex).with_backend_and_fallback(mock))
}

pub struct AppState {
    config: ServiceConfig,
    ctx: GameContext,
    gateway: Gateway,
    store: Store,
    sessions: RwLock<HashMap<String, Arc<SessionCell>>>,
}

impl AppState {
    /// Opens the data directory and restores every logged session.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, ApiError> {
        let ctx = GameContext::default();
        let gateway = build_gateway(&config, ctx.lex.clone())?;
        Self::with_gateway(config, ctx, gateway)
    }

    pub fn with_gateway(config: ServiceConfig, ctx: GameContext, gateway: Gateway) -> Result<Arc<Self>, ApiError> {
        let store = Store::open(&config.data_dir)?;
        let state = AppState {
            config,
            ctx,
            gateway,
            store,
            sessions: RwLock::new(HashMap::new()),
        };
        state.restore();
        Ok(Arc::new(state))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn insert(&self, cell: SessionCell) -> Arc<SessionCell> {
        let cell = Arc::new(cell);
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(cell.id.clone(), cell.clone());
        cell
    }

    fn restore(&self) {
        for (id, entry) in self.store.entries() {
            let path = self.store.resolve(&entry);
            match self.restore_one(&id, entry.created_at, &path) {
                Ok(()) => tracing::info!(session = %id, "restored session"),
                Err(e) => tracing::warn!(session = %id, error = %e, "could not restore session"),
            }
        }
    }

    fn restore_one(&self, id: &str, created_at: u64, path: &PathBuf) -> Result<(), ApiError> {
        let text = std::fs::read_to_string(path)?;
        let log = parse_log(&text)?;
        let game = replay(&log.header, &log.events, self.ctx.lex.clone())?;
        if log.torn_tail {
            // Drop the partial line so appends start on a clean line.
            std::fs::write(path, game.to_log())?;
        }
        let driver = MatchDriver::new(game, Controller::External, self.gateway.for_session(), self.ctx.pools.clone());
        self.insert(SessionCell {
            id: id.to_string(),
            created_at,
            tx: broadcast::channel(STREAM_BUFFER).0,
            inner: Mutex::new(Session {
                driver,
                writer: LogWriter::open_append(path)?,
                last_active: Instant::now(),
                feedback: None,
            }),
        });
        Ok(())
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionCell>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn cells(&self) -> Vec<Arc<SessionCell>> {
        self.sessions.read().expect("sessions lock").values().cloned().collect()
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".to_string(),
            sessions: self.sessions.read().expect("sessions lock").len(),
            live_provider: self.gateway.is_live(),
        }
    }

    /// Creates a session from a JSON game config. Missing difficulty uses
    /// the service's preset; a missing seed is drawn at random.
    pub fn create_session(&self, body: serde_json::Value) -> Result<CreateResponse, ApiError> {
        let mut obj = match body {
            serde_json::Value::Null => serde_json::Map::new(),
            serde_json::Value::Object(m) => m,
            _ => return Err(GameError::InvalidConfig("expected a JSON object".into()).into()),
        };
        obj.entry("difficulty")
            .or_insert_with(|| serde_json::json!({ "preset": self.config.difficulty }));
        obj.entry("rng_seed")
            .or_insert_with(|| uuid::Uuid::new_v4().as_u64_pair().0.into());
        let config: GameConfig = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| GameError::InvalidConfig(e.to_string()))?;
        let driver = MatchDriver::interactive(config, &self.ctx, self.gateway.for_session())?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.store.log_path(&id);
        let mut writer = LogWriter::create(&path, driver.game().config())?;
        writer.append(driver.game().events())?;
        let created_at = now_secs();
        self.store.register(&id, created_at)?;
        let game = driver.game();
        let resp = CreateResponse {
            session_id: id.clone(),
            status: status_of(&driver),
            seed: game.config().rng_seed,
            human: HUMAN,
            players: game.players().to_vec(),
            topics: game.topics().to_vec(),
        };
        self.insert(SessionCell {
            id,
            created_at,
            tx: broadcast::channel(STREAM_BUFFER).0,
            inner: Mutex::new(Session {
                driver,
                writer,
                last_active: Instant::now(),
                feedback: None,
            }),
        });
        Ok(resp)
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ApiError> {
        let cell = self.session(id)?;
        let s = cell.lock();
        let game = s.driver.game();
        let round = game.current_round();
        Ok(SessionView {
            session_id: cell.id.clone(),
            status: status_of(&s.driver),
            created_at: cell.created_at,
            round: round.map(|r| r.index),
            topic: round.map(|r| r.topic.title.clone()),
            speaker: game.current_speaker(),
            clock_remaining_ms: game.clock_remaining_ms(),
            awaiting_human: s.driver.awaiting_human(),
            scores: game.scores().iter().map(|(p, v)| (*p, *v)).collect(),
            next_seq: game.events().len() as u64,
        })
    }

    /// Logged events from `from` on.
    pub fn events_since(&self, id: &str, from: u64) -> Result<EventsPage, ApiError> {
        let cell = self.session(id)?;
        let s = cell.lock();
        let all = s.driver.game().events();
        let start = (from as usize).min(all.len());
        Ok(EventsPage {
            events: all[start..].to_vec(),
            next: all.len().max(start) as u64,
            ended: s.driver.game().is_ended(),
        })
    }

    pub fn speech(&self, id: &str, input: SpeechInput) -> Result<SpeechResponse, ApiError> {
        let cell = self.session(id)?;
        let mut s = cell.lock();
        s.last_active = Instant::now();
        if s.driver.game().is_ended() {
            return Err(GameError::GameEnded.into());
        }
        if !s.driver.awaiting_human() {
            return Err(ApiError::NotYourTurn);
        }
        let (batch, transcript) = match input {
            SpeechInput::Batch(b) => (b, None),
            SpeechInput::Audio(chunk) => {
                let t = s.driver.gateway().transcribe(&chunk)?;
                let batch = SpeechBatch {
                    tokens: t.tokens.clone(),
                    duration_ms: t.duration_ms,
                };
                (batch, Some(t.tokens))
            }
        };
        if batch.tokens.is_empty() && batch.duration_ms == 0 {
            return Err(ApiError::BadRequest("speech is empty".into()));
        }
        let events = s.driver.human_speech(&batch)?;
        cell.commit(&mut s, &events)?;
        Ok(SpeechResponse {
            seqs: seqs(&events),
            events,
            transcript,
        })
    }

    pub fn challenge(&self, id: &str, req: &ChallengeRequest) -> Result<ChallengeResponse, ApiError> {
        let cell = self.session(id)?;
        let mut s = cell.lock();
        s.last_active = Instant::now();
        let verdict = s.driver.human_challenge(req.rule, req.at_ms)?;
        cell.commit(&mut s, &verdict.events)?;
        Ok(ChallengeResponse {
            challenge: verdict.challenge,
            accepted: verdict.accepted,
            matched: verdict.matched,
            narration: verdict.narration,
            seqs: seqs(&verdict.events),
            events: verdict.events,
        })
    }

    pub fn appeal(&self, id: &str, amendment: &Amendment) -> Result<AppealResponse, ApiError> {
        let cell = self.session(id)?;
        let mut s = cell.lock();
        s.last_active = Instant::now();
        let events = s.driver.appeal(amendment)?;
        cell.commit(&mut s, &events)?;
        s.feedback = None;
        let revoked = events
            .iter()
            .filter_map(|e| match e.payload {
                EventPayload::ScoreRevoked { challenge, .. } => Some(challenge),
                _ => None,
            })
            .collect();
        Ok(AppealResponse {
            seqs: seqs(&events),
            events,
            revoked,
        })
    }

    /// Summary with per-speech feedback, and stats computed from the log
    /// file (or its cached copy).
    pub fn summary(&self, id: &str) -> Result<SummaryResponse, ApiError> {
        let cell = self.session(id)?;
        let mut s = cell.lock();
        let mut summary = s.driver.game().summarize()?;
        if s.feedback.is_none() {
            s.feedback = Some(self.feedback_for(&s.driver));
        }
        let feedback = s.feedback.clone().unwrap_or_default();
        for speech in &mut summary.speeches {
            speech.feedback = feedback
                .iter()
                .find(|f| f.segment == Some(speech.segment))
                .map(|f| f.critique.clone());
        }
        drop(s);
        let stats = self.stats(id)?;
        Ok(SummaryResponse {
            summary,
            stats,
            feedback,
        })
    }

    fn feedback_for(&self, driver: &MatchDriver) -> Vec<FeedbackCritique> {
        let game = driver.game();
        let mut out = Vec::new();
        for seg in game.segments().iter().filter(|s| !s.tokens.is_empty()) {
            let topic = &game.rounds()[seg.round].topic;
            let report = analyze_speech(&seg.tokens, topic, &game.config().detectors, game.lexicons());
            match generate_feedback(driver.gateway(), &seg.tokens, topic, &report) {
                Ok(mut f) => {
                    f.segment = Some(seg.id);
                    out.push(f);
                }
                Err(e) => tracing::warn!(segment = seg.id, error = %e, "feedback unavailable"),
            }
        }
        out
    }

    /// Stats for an ended session, from the cache or recomputed from the
    /// log on disk.
    pub fn stats(&self, id: &str) -> Result<StatsRecord, ApiError> {
        self.session(id)?;
        if let Some(cached) = self.store.cached_stats(id) {
            return Ok(cached);
        }
        let text = std::fs::read_to_string(self.store.log_path(id))?;
        let stats = StatsRecord::from_log(&text, self.ctx.lex.clone())?;
        if !stats.complete {
            return Err(GameError::GameNotEnded.into());
        }
        self.store.cache_stats(id, &stats)?;
        Ok(stats)
    }

    /// Moves every session whose floor is held by an opponent forward by
    /// `dt_ms` of speech.
    pub fn tick(&self, dt_ms: u64) {
        for cell in self.cells() {
            let mut s = cell.lock();
            if s.driver.game().is_ended() || s.driver.awaiting_human() {
                continue;
            }
            let result = s.driver.advance(dt_ms).map_err(ApiError::from);
            if let Err(e) = result.and_then(|events| cell.commit(&mut s, &events)) {
                tracing::error!(session = %cell.id, error = %e, "advancing session failed");
            }
        }
    }

    /// Ends sessions with no command for `limit`. Returns how many ended.
    pub fn expire_idle(&self, limit: Duration) -> usize {
        let mut n = 0;
        for cell in self.cells() {
            let mut s = cell.lock();
            if s.driver.game().is_ended() || s.last_active.elapsed() < limit {
                continue;
            }
            let result = s.driver.abandon().map_err(ApiError::from);
            match result.and_then(|events| cell.commit(&mut s, &events)) {
                Ok(()) => {
                    tracing::info!(session = %cell.id, "idle session abandoned");
                    n += 1;
                }
                Err(e) => tracing::error!(session = %cell.id, error = %e, "abandoning session failed"),
            }
        }
        n
    }

    /// Runs the opponent clock and idle expiry until the runtime stops.
    pub fn spawn_background(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let state = self.clone();
        tokio::spawn(async move {
            let period = Duration::from_millis(state.config.tick_ms.max(10));
            let mut ticker = tokio::time::interval(period);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            let mut last = Instant::now();
            let mut last_sweep = Instant::now();
            loop {
                ticker.tick().await;
                // Cap catch-up after a stall so opponents never jump ahead.
                let dt = (last.elapsed().as_millis() as u64).min(5_000);
                last = Instant::now();
                let sweep = last_sweep.elapsed() >= Duration::from_secs(5);
                if sweep {
                    last_sweep = Instant::now();
                }
                let st = state.clone();
                let _ = tokio::task::spawn_blocking(move || {
                    st.tick(dt);
                    if sweep {
                        st.expire_idle(st.config.idle_limit());
                    }
                })
                .await;
            }
        })
    }
}

impl SpeechRequest {
    /// Validates the request and turns it into engine input.
    pub fn into_input(self, lex: &Lexicons) -> Result<SpeechInput, ApiError> {
        use base64::Engine;
        let present = [self.tokens.is_some(), self.text.is_some(), self.audio.is_some()];
        if present.iter().filter(|&&p| p).count() != 1 {
            return Err(ApiError::BadRequest("send exactly one of `tokens`, `text` or `audio`".into()));
        }
        if let Some(audio) = self.audio {
            let wav = base64::engine::general_purpose::STANDARD
                .decode(audio.wav_base64.trim())
                .map_err(|e| ApiError::BadRequest(format!("audio is not valid base64: {e}")))?;
            return Ok(SpeechInput::Audio(AudioChunk {
                id: audio.chunk_id,
                wav,
            }));
        }
        let mut batch = match (self.tokens, self.text) {
            (Some(words), _) => SpeechBatch::from_tokens(
                words
                    .iter()
                    .map(|w| TranscriptToken::from_surface(&w.word, w.start_ms, w.end_ms, lex))
                    .collect(),
            ),
            (None, Some(text)) => SpeechBatch::from_text(&text, lex),
            (None, None) => unreachable!("checked above"),
        };
        if let Some(d) = self.duration_ms {
            batch.duration_ms = d;
        }
        Ok(SpeechInput::Batch(batch))
    }
}

impl AppState {
    pub fn lexicons(&self) -> &Arc<Lexicons> {
        &self.ctx.lex
    }
}
