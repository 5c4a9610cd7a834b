mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine;
use serde_json::{json, Value};

use common::{fixtures_dir, of_type, Harness};
use jam_core::gateway::encode_silence;
use jam_core::transcript::parse_transcript;
use jam_core::Lexicons;

fn fixture(name: &str) -> (Vec<Value>, u64) {
    let text = std::fs::read_to_string(fixtures_dir().join(format!("{name}.txt"))).unwrap();
    let file = parse_transcript(&text, &Lexicons::default()).unwrap();
    let words = file
        .tokens
        .iter()
        .map(|t| json!({ "word": t.surface(), "start_ms": t.start_ms, "end_ms": t.end_ms }))
        .collect();
    (words, file.duration_ms)
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

#[tokio::test]
async fn audio_and_token_paths_give_the_same_events() {
    let h = Harness::new();
    let (words, duration) = fixture("pet_story");
    let wav = encode_silence(duration);

    let by_tokens = h.create(common::eager(21)).await;
    let (status, body) = h
        .post(
            &format!("/sessions/{by_tokens}/speech"),
            json!({ "tokens": words, "duration_ms": duration }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let by_json_audio = h.create(common::eager(21)).await;
    let (status, body) = h
        .post(
            &format!("/sessions/{by_json_audio}/speech"),
            json!({ "audio": { "wav_base64": b64(&wav), "chunk_id": "pet_story" } }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["transcript"].as_array().unwrap().len(), words.len());

    let by_raw_audio = h.create(common::eager(21)).await;
    let req = Request::post(format!("/sessions/{by_raw_audio}/speech"))
        .header("content-type", "audio/wav")
        .header("x-chunk-id", "pet_story")
        .body(Body::from(wav.clone()))
        .unwrap();
    let (status, body) = h.send(req).await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let reference = h.events(&by_tokens).await;
    assert!(of_type(&reference, "TokensIngested").count() >= 1);
    assert_eq!(h.events(&by_json_audio).await, reference);
    assert_eq!(h.events(&by_raw_audio).await, reference);
}

#[tokio::test]
async fn hallucinated_outro_in_silence_is_dropped() {
    let h = Harness::new();
    let (words, _) = fixture("pet_story");
    let (_, outro_duration) = fixture("pet_story_outro");

    let by_audio = h.create(common::passive(22)).await;
    let (status, body) = h
        .post(
            &format!("/sessions/{by_audio}/speech"),
            json!({ "audio": { "wav_base64": b64(&encode_silence(outro_duration)), "chunk_id": "pet_story_outro" } }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let transcript = body["transcript"].as_array().unwrap();
    assert!(transcript.iter().all(|t| t["text"] != "watching"));

    let by_tokens = h.create(common::passive(22)).await;
    h.post(
        &format!("/sessions/{by_tokens}/speech"),
        json!({ "tokens": words, "duration_ms": outro_duration }),
    )
    .await;
    assert_eq!(h.events(&by_audio).await, h.events(&by_tokens).await);
}

#[tokio::test]
async fn unsupported_audio_is_refused() {
    let h = Harness::new();
    let id = h.create(common::passive(23)).await;

    // Same bytes, header patched to claim 44.1 kHz.
    let mut wav = encode_silence(500);
    wav[24..28].copy_from_slice(&44_100u32.to_le_bytes());
    wav[28..32].copy_from_slice(&88_200u32.to_le_bytes());
    let (status, body) = h
        .post(&format!("/sessions/{id}/speech"), json!({ "audio": { "wav_base64": b64(&wav) } }))
        .await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE, "{body}");
    assert_eq!(body["error"], "UnsupportedFormat");

    let req = Request::post(format!("/sessions/{id}/speech"))
        .header("content-type", "audio/mpeg")
        .body(Body::from(vec![0u8; 64]))
        .unwrap();
    let (status, body) = h.send(req).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNSUPPORTED_MEDIA_TYPE, Some("UnsupportedFormat")));

    let req = Request::post(format!("/sessions/{id}/speech"))
        .header("content-type", "audio/wav")
        .body(Body::from(b"RIFF....nonsense".to_vec()))
        .unwrap();
    let (status, _) = h.send(req).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);

    // Nothing reached the log.
    assert!(of_type(&h.events(&id).await, "TokensIngested").next().is_none());
}

#[tokio::test]
async fn unknown_silent_chunk_counts_as_silence() {
    let h = Harness::new();
    let id = h.create(common::passive(24)).await;
    let (status, body) = h
        .post(&format!("/sessions/{id}/speech"), json!({ "audio": { "wav_base64": b64(&encode_silence(1500)) } }))
        .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["transcript"], json!([]));
    let ingested = of_type(body["events"].as_array().unwrap(), "TokensIngested").next().cloned().unwrap();
    assert_eq!(ingested["payload"]["covered_ms"], 1500);
}
