//! The one audio format accepted at the gateway: 16 kHz mono 16-bit PCM WAV.

use std::io::Cursor;

use crate::transcript::SilenceSpan;

use super::GatewayError;

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedAudio {
    pub samples: Vec<i16>,
    pub duration_ms: u64,
}

fn spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn encode_wav(samples: &[i16]) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    let mut w = hound::WavWriter::new(&mut buf, spec()).expect("in-memory wav");
    for &s in samples {
        w.write_sample(s).expect("in-memory wav");
    }
    w.finalize().expect("in-memory wav");
    buf.into_inner()
}

/// A silent chunk of the given length.
pub fn encode_silence(duration_ms: u64) -> Vec<u8> {
    let n = (duration_ms * SAMPLE_RATE as u64 / 1000) as usize;
    encode_wav(&vec![0; n])
}

/// Decodes and checks the format; anything else is `UnsupportedFormat`.
pub fn decode_wav(bytes: &[u8]) -> Result<DecodedAudio, GatewayError> {
    let bad = |why: String| GatewayError::UnsupportedFormat(why);
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| bad(e.to_string()))?;
    let s = reader.spec();
    if s.channels != 1 || s.sample_rate != SAMPLE_RATE || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(bad(format!(
            "{} ch, {} Hz, {}-bit {:?}; expected mono 16 kHz 16-bit PCM",
            s.channels, s.sample_rate, s.bits_per_sample, s.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| bad(e.to_string()))?;
    let duration_ms = samples.len() as u64 * 1000 / SAMPLE_RATE as u64;
    Ok(DecodedAudio { samples, duration_ms })
}

/// Spans of at least `min_ms` whose 20 ms frames all have an RMS level
/// below `threshold` (on the i16 scale).
pub fn silent_spans(audio: &DecodedAudio, threshold: f64, min_ms: u64) -> Vec<SilenceSpan> {
    const FRAME_MS: u64 = 20;
    let frame = (SAMPLE_RATE as u64 * FRAME_MS / 1000) as usize;
    let mut out = Vec::new();
    let mut run_start: Option<u64> = None;
    let frames = audio.samples.chunks(frame);
    let n = frames.len();
    for (i, f) in audio.samples.chunks(frame).enumerate() {
        let rms = (f.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / f.len() as f64).sqrt();
        let t = i as u64 * FRAME_MS;
        if rms < threshold {
            run_start.get_or_insert(t);
        }
        let closes = rms >= threshold || i + 1 == n;
        if let (true, Some(s)) = (closes, run_start) {
            let e = if rms < threshold { audio.duration_ms } else { t };
            if e.saturating_sub(s) >= min_ms {
                out.extend(SilenceSpan::new(s, e));
            }
            run_start = None;
        }
    }
    out
}

pub fn wav_duration_ms(bytes: &[u8]) -> Result<u64, GatewayError> {
    decode_wav(bytes).map(|a| a.duration_ms)
}
