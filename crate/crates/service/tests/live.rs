use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use maemi_core::analysis::{cents, estimate_pitch};
use maemi_service::{serve, ServiceConfig, ServiceError, ServiceHandle};
use serde_json::Value;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start() -> ServiceHandle {
    serve(ServiceConfig { bind: "127.0.0.1:0".into(), ..ServiceConfig::default() }).await.unwrap()
}

async fn connect(handle: &ServiceHandle) -> Client {
    let (ws, _) = connect_async(format!("ws://{}", handle.local_addr())).await.unwrap();
    ws
}

async fn send(ws: &mut Client, json: &str) {
    ws.send(Message::Text(json.to_string())).await.unwrap();
}

/// Next frame matching `pred`, or None after `timeout`.
async fn wait_for(ws: &mut Client, timeout: Duration, pred: impl Fn(&Value) -> bool) -> Option<Value> {
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let msg = tokio::time::timeout_at(deadline, ws.next()).await.ok()??.ok()?;
        if let Message::Text(text) = msg {
            let v: Value = serde_json::from_str(&text).unwrap();
            if pred(&v) {
                return Some(v);
            }
        }
    }
}

fn is_state(phase: &'static str) -> impl Fn(&Value) -> bool {
    move |v| v["type"] == "state" && v["phase"] == phase
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn trigger_shows_up_in_state_within_100_ms() {
    let handle = start().await;
    let mut ws = connect(&handle).await;
    send(&mut ws, r#"{"type":"hello"}"#).await;
    assert!(wait_for(&mut ws, Duration::from_secs(1), is_state("Idle")).await.is_some());
    send(&mut ws, r#"{"type":"gate","on":true}"#).await;
    let sent = Instant::now();
    send(&mut ws, r#"{"type":"trigger","phase":"mae"}"#).await;
    let frame = wait_for(&mut ws, Duration::from_millis(100), is_state("Initial")).await;
    let elapsed = sent.elapsed();
    assert!(frame.is_some(), "no Initial state within 100 ms");
    assert!(elapsed < Duration::from_millis(100), "{elapsed:?}");
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_message_gets_an_error_and_the_connection_survives() {
    let handle = start().await;
    let mut ws = connect(&handle).await;
    for bad in ["{", r#"{"type":"trigger","phase":"meow"}"#, r#"{"type":"set","param":"pitch_hz"}"#] {
        send(&mut ws, bad).await;
        let err = wait_for(&mut ws, Duration::from_secs(1), |v| v["type"] == "error").await;
        assert!(err.is_some(), "{bad}");
    }
    send(&mut ws, r#"{"type":"hello"}"#).await;
    assert!(wait_for(&mut ws, Duration::from_secs(1), |v| v["type"] == "state").await.is_some());
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn meter_and_spectrum_frames_stream() {
    let handle = start().await;
    let mut ws = connect(&handle).await;
    let started = Instant::now();
    let mut meters = 0;
    while started.elapsed() < Duration::from_millis(700) {
        if let Some(v) =
            wait_for(&mut ws, Duration::from_millis(200), |v| v["type"] == "spectrum" || v["type"] == "meter").await
        {
            if v["type"] == "meter" {
                meters += 1;
            } else {
                assert_eq!(v["bins"].as_array().unwrap().len(), 64);
            }
        }
    }
    // 15 Hz nominal; anything from 10 to 20 Hz is acceptable.
    assert!((6..=14).contains(&meters), "{meters} meters in 0.7 s");
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn set_pitch_reaches_the_audio() {
    let mut handle = start().await;
    let mut output = handle.take_output().unwrap();
    let mut ws = connect(&handle).await;
    for m in [
        r#"{"type":"set","param":"pitch_hz","value":523.25}"#,
        r#"{"type":"gate","on":true}"#,
        r#"{"type":"trigger","phase":"mae_re"}"#,
    ] {
        send(&mut ws, m).await;
    }
    assert!(wait_for(&mut ws, Duration::from_secs(1), is_state("Middle")).await.is_some());
    let mut audio = Vec::new();
    output.drain_into(&mut audio);
    audio.clear();
    let sr = handle.config().voice.sample_rate as f64;
    while (audio.len() as f64) < 1.6 * sr {
        tokio::time::sleep(Duration::from_millis(50)).await;
        output.drain_into(&mut audio);
    }
    // Skip the onset of the middle phase.
    let settled: Vec<f64> = audio[(0.4 * sr) as usize..].iter().map(|&x| x as f64).collect();
    let pitch = estimate_pitch(&settled, sr).unwrap();
    assert!(cents(pitch, 523.25).abs() < 15.0, "{pitch}");
    assert_eq!(output.overruns(), 0);
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn startup_errors() {
    let handle = start().await;
    let taken = serve(ServiceConfig { bind: handle.local_addr().to_string(), ..ServiceConfig::default() }).await;
    assert!(matches!(taken, Err(ServiceError::Bind { .. })));
    let mut big = ServiceConfig { bind: "127.0.0.1:0".into(), ..ServiceConfig::default() };
    big.voice.block_frames = 4096;
    assert!(matches!(serve(big).await, Err(ServiceError::Config(_))));
    handle.shutdown().await;
}
