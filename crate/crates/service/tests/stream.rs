mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{seqs, Harness};

/// Small deterministic generator for read lengths and resume styles.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self, n: u64) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 33) % n
    }
}

/// Reads SSE frames until `want` events arrive or the stream closes.
/// Returns the events and whether the stream closed.
async fn read_some(h: &Harness, id: &str, next: u64, by_header: bool, want: usize) -> (Vec<Value>, bool) {
    let mut req = Request::get(if by_header {
        format!("/sessions/{id}/events")
    } else {
        format!("/sessions/{id}/events?from={next}")
    })
    .header("accept", "text/event-stream");
    if by_header && next > 0 {
        req = req.header("last-event-id", (next - 1).to_string());
    }
    let resp = h.app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = resp.into_body().into_data_stream();
    let mut buf = String::new();
    let mut out = Vec::new();
    while out.len() < want {
        let chunk = match tokio::time::timeout(Duration::from_secs(10), body.next()).await {
            Ok(Some(chunk)) => chunk.unwrap(),
            Ok(None) => return (out, true),
            Err(_) => panic!("stream stalled at seq {next}"),
        };
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(pos) = buf.find("\n\n") {
            let frame: String = buf.drain(..pos + 2).collect();
            let mut id_line = None;
            let mut data = None;
            for line in frame.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id_line = Some(v.trim().parse::<u64>().unwrap());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data = Some(serde_json::from_str::<Value>(v.trim()).unwrap());
                }
            }
            let Some(event) = data else { continue };
            assert_eq!(Some(event["seq"].as_u64().unwrap()), id_line);
            if out.len() < want {
                out.push(event);
            }
        }
    }
    (out, false)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reconnecting_streams_see_every_event_exactly_once() {
    let h = Arc::new(Harness::new());
    for seed in 0..3u64 {
        let mut cfg = common::eager(seed);
        cfg["round_duration_ms"] = json!(20000);
        cfg["difficulty"]["challenge_aggressiveness"] = json!([0.3, 0.6]);
        let id = h.create(cfg).await;
        let player = {
            let (h, id) = (h.clone(), id.clone());
            tokio::spawn(async move { h.play_out(&id, "My cat naps. My cat naps in the sun, um, daily.", 3000).await })
        };
        let mut rng = Lcg(seed + 17);
        let mut received: Vec<Value> = Vec::new();
        let mut next = 0;
        let mut reconnects = 0;
        loop {
            let want = 1 + rng.next(12) as usize;
            let (events, closed) = read_some(&h, &id, next, rng.next(2) == 0, want).await;
            for e in events {
                assert_eq!(e["seq"].as_u64(), Some(next), "gap or duplicate");
                next += 1;
                received.push(e);
            }
            reconnects += 1;
            if closed && received.last().is_some_and(|e| e["type"] == "GameEnded") {
                break;
            }
        }
        player.await.unwrap();
        assert!(reconnects > 3);
        let log = h.events(&id).await;
        assert_eq!(received, log);
        assert_eq!(seqs(&received), (0..log.len() as u64).collect::<Vec<_>>());
        // The stream carries exactly the persisted log.
        let file = std::fs::read_to_string(h.state.store().log_path(&id)).unwrap();
        let persisted: Vec<Value> = file.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(received, persisted);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn long_poll_returns_when_events_arrive() {
    let h = Arc::new(Harness::new());
    let id = h.create(common::passive(9)).await;
    let next = h.events(&id).await.len();

    let (status, page) = h.get(&format!("/sessions/{id}/events?from={next}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["events"], json!([]));
    assert_eq!(page["next"], next);

    let speaker = {
        let (h, id) = (h.clone(), id.clone());
        tokio::spawn(async move {
            tokio::time::sleep(Duration::from_millis(150)).await;
            h.post(&format!("/sessions/{id}/speech"), json!({ "text": "My cat naps." })).await
        })
    };
    let started = Instant::now();
    let (status, page) = h.get(&format!("/sessions/{id}/events?from={next}&wait_ms=10000")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(started.elapsed() < Duration::from_secs(5));
    let events = page["events"].as_array().unwrap();
    assert_eq!(events[0]["seq"], next);
    assert_eq!(events[0]["type"], "TokensIngested");
    let (status, _) = speaker.await.unwrap();
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn paging_from_any_point_is_dense() {
    let h = Harness::new();
    let id = h.create(common::passive(12)).await;
    h.play_out(&id, "The sea is cold. Gulls wheel above it, crying.", 5000).await;
    let log = h.events(&id).await;
    let mut rng = Lcg(5);
    for _ in 0..20 {
        let from = rng.next(log.len() as u64 + 3);
        let (_, page) = h.get(&format!("/sessions/{id}/events?from={from}")).await;
        let expected: Vec<Value> = log.iter().skip(from as usize).cloned().collect();
        assert_eq!(page["events"], json!(expected));
        assert_eq!(page["ended"], true);
    }
}
