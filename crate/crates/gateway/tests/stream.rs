use std::time::Duration;

use asyncmld::rtdb::bundled_catalog;
use asyncmld_gateway::repl::run_repl;
use asyncmld_gateway::{router, AppState, Engine, EventType, ServerOptions, StreamEvent};
use futures_util::StreamExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

const LINES: [&str; 5] = [
    "Hello, I'm planning a day in Kyoto.",
    "I love old temples and quiet gardens.",
    "I want to eat tofu and drink matcha.",
    "I'll take 1 and 3.",
    "Thank you, goodbye!",
];

async fn serve(speech_pace: f64) -> String {
    let app = router(AppState::new(
        Engine::new(bundled_catalog()),
        ServerOptions { speech_pace },
    ));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("127.0.0.1:{}", addr.port())
}

async fn post(addr: &str, path: &str, body: Value) -> Value {
    // minimal HTTP/1.1 client over a raw socket keeps dev-dependencies small
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    let body = body.to_string();
    let req = format!(
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).await.unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).await.unwrap();
    let (_, payload) = raw.split_once("\r\n\r\n").unwrap();
    serde_json::from_str(payload).unwrap()
}

async fn next_events(
    ws: &mut (impl StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin),
    until_finished: usize,
) -> Vec<StreamEvent> {
    let mut out = Vec::new();
    let mut finished = 0;
    while finished < until_finished {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("stream stalled")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            let ev: StreamEvent = serde_json::from_str(&t).unwrap();
            if ev.kind == EventType::SpeakingFinished {
                finished += 1;
            }
            out.push(ev);
        }
    }
    out
}

fn check_turn_order(events: &[StreamEvent]) {
    let rank = |k: EventType| match k {
        EventType::UserEcho => 0,
        EventType::SystemUtterance => 1,
        EventType::Candidates | EventType::Route | EventType::PhaseChange => 2,
        EventType::SpeakingStarted => 3,
        EventType::TraceSpan => 4,
        EventType::SpeakingFinished => 5,
    };
    let mut last: Option<(Option<u64>, u32)> = None;
    for ev in events {
        let r = rank(ev.kind);
        if let Some((turn, prev)) = last {
            if turn == ev.turn_id {
                assert!(r >= prev, "{:?} after rank {prev} in turn {:?}", ev.kind, turn);
            } else {
                assert_eq!(prev, 5, "turn {:?} interleaved with {:?}", turn, ev.turn_id);
            }
        }
        last = Some((ev.turn_id, r));
    }
}

#[tokio::test]
async fn stream_delivers_ordered_events_per_turn() {
    let addr = serve(0.0).await;
    let created = post(&addr, "/api/sessions", json!({})).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/sessions/{id}/stream"))
        .await
        .unwrap();

    let opening = next_events(&mut ws, 1).await;
    assert_eq!(opening[0].kind, EventType::SystemUtterance);
    assert_eq!(opening[0].turn_id, None);
    assert!(opening[0].payload["text"].as_str().unwrap().starts_with("Welcome"));

    let mut events = opening;
    for text in LINES.iter().skip(1) {
        let reply = post(
            &addr,
            &format!("/api/sessions/{id}/utterances"),
            json!({ "text": text }),
        )
        .await;
        assert!(reply["reply"].is_string(), "{reply}");
    }
    events.extend(next_events(&mut ws, LINES.len() - 1).await);
    check_turn_order(&events);

    let cards = events.iter().find(|e| e.kind == EventType::Candidates).unwrap();
    assert_eq!(cards.payload["cards"].as_array().unwrap().len(), 4);
    let route = events.iter().find(|e| e.kind == EventType::Route).unwrap();
    assert_eq!(route.payload["plan"]["legs"][0]["mode"], "Walk");
    let spans = events.iter().filter(|e| e.kind == EventType::TraceSpan).count();
    assert!(spans >= 4 * 4);
    let last = events.iter().rev().find(|e| e.kind == EventType::PhaseChange).unwrap();
    assert_eq!(last.payload["to"], "End");

    // reconnecting replays the same log
    let (mut again, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/sessions/{id}/stream"))
        .await
        .unwrap();
    let replay = next_events(&mut again, LINES.len()).await;
    assert_eq!(replay, events);
}

#[tokio::test]
async fn speech_is_paced_between_started_and_finished() {
    let addr = serve(0.01).await;
    let created = post(&addr, "/api/sessions", json!({})).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/sessions/{id}/stream"))
        .await
        .unwrap();
    let t0 = std::time::Instant::now();
    let opening = next_events(&mut ws, 1).await;
    let speech = opening
        .iter()
        .find(|e| e.kind == EventType::SpeakingStarted)
        .unwrap()
        .payload["duration"]
        .as_f64()
        .unwrap();
    assert!(t0.elapsed().as_secs_f64() >= speech * 0.01 * 0.9);
}

#[tokio::test]
async fn repl_and_stream_produce_identical_events() {
    let engine = Engine::new(bundled_catalog());
    let input = LINES.iter().skip(1).map(|l| format!("{l}\n")).collect::<String>();
    let mut printed = Vec::new();
    let repl_events = run_repl(&engine, input.as_bytes(), &mut printed).unwrap();
    let printed = String::from_utf8(printed).unwrap();
    assert!(printed.contains("route: Walking from Nanzen-ji to Ginkaku-ji takes about 20 min."));

    let addr = serve(0.0).await;
    let created = post(&addr, "/api/sessions", json!({})).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/sessions/{id}/stream"))
        .await
        .unwrap();
    let mut events = next_events(&mut ws, 1).await;
    for text in LINES.iter().skip(1) {
        post(
            &addr,
            &format!("/api/sessions/{id}/utterances"),
            json!({ "text": text }),
        )
        .await;
    }
    events.extend(next_events(&mut ws, LINES.len() - 1).await);
    assert_eq!(events, repl_events);
}
