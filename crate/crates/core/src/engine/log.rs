//! Line-delimited event log: a header record with the game config, then one
//! JSON event per line.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicons;

use super::{Game, GameConfig, GameError, GameEvent};

pub const LOG_FORMAT: &str = "jam-log v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub config: GameConfig,
}

impl LogHeader {
    pub fn new(config: GameConfig) -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub header: LogHeader,
    pub events: Vec<GameEvent>,
    /// The final line was cut off mid-write and was skipped.
    pub torn_tail: bool,
}

/// Parses a log. A final line without a newline that fails to parse is
/// treated as a torn write and dropped; any other bad line is corruption.
pub fn parse_log(text: &str) -> Result<ParsedLog, GameError> {
    let corrupt = |line: usize, reason: String| GameError::CorruptLog { line, reason };
    let lines: Vec<&str> = text.lines().collect();
    let Some(first) = lines.first().filter(|l| !l.trim().is_empty()) else {
        return Err(corrupt(1, "empty log".into()));
    };
    let header: LogHeader = serde_json::from_str(first).map_err(|e| corrupt(1, format!("bad header: {e}")))?;
    if header.format != LOG_FORMAT {
        return Err(corrupt(1, format!("unsupported format `{}`", header.format)));
    }
    let mut events = Vec::with_capacity(lines.len().saturating_sub(1));
    let mut torn_tail = false;
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GameEvent>(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => torn_tail = true,
            Err(e) => return Err(corrupt(i + 1, e.to_string())),
        }
    }
    Ok(ParsedLog {
        header,
        events,
        torn_tail,
    })
}

/// Rebuilds game state by applying each logged event in order.
pub fn replay(header: &LogHeader, events: &[GameEvent], lex: Arc<Lexicons>) -> Result<Game, GameError> {
    let mut game = Game::empty(header.config.clone(), lex);
    for e in events {
        game.apply(e)?;
    }
    Ok(game)
}

pub fn replay_text(text: &str, lex: Arc<Lexicons>) -> Result<Game, GameError> {
    let log = parse_log(text)?;
    replay(&log.header, &log.events, lex)
}

impl Game {
    /// The complete log as text.
    pub fn to_log(&self) -> String {
        let mut out = serde_json::to_string(&LogHeader::new(self.config().clone())).expect("config serializes");
        out.push('\n');
        for e in self.events() {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Appends events to a log file, flushing after every batch.
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path, config: &GameConfig) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &LogHeader::new(config.clone()))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(LogWriter { out })
    }

    pub fn open_append(path: &Path) -> std::io::Result<Self> {
        Ok(LogWriter {
            out: BufWriter::new(OpenOptions::new().append(true).open(path)?),
        })
    }

    pub fn append(&mut self, events: &[GameEvent]) -> std::io::Result<()> {
        for e in events {
            serde_json::to_writer(&mut self.out, e)?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}
