//! Live control endpoint: voices rendered block by block, steered over a
//! WebSocket.
//!
//! Three contexts share nothing but queues and atomics:
//! - render: a dedicated thread driving [`Engine::render_block`];
//! - network: one task per client, parsing messages into per-voice
//!   mailboxes;
//! - telemetry: reads the output tap and broadcasts meter, spectrum and
//!   state frames.
//!
//! Only the null-audio backend exists. It paces the render thread in real
//! time and writes into a ring buffer that callers can drain.

// `!(x > 0.0)` guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod protocol;
pub mod telemetry;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use maemi_core::VoiceConfig;
use rtrb::{Consumer, Producer, RingBuffer};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

pub use engine::{Engine, EngineParts, SharedStatus, VoiceSnapshot, VoiceStatus};
pub use protocol::{parse_request, Command, ControlMessage, Request, ServerFrame};

/// Longest block allowed live: 256 frames at 48 kHz.
pub const MAX_BLOCK_S: f64 = 256.0 / 48_000.0;
pub const MAX_VOICES: usize = 16;
pub const TELEMETRY_HZ: f64 = 15.0;
/// How often voice state is polled for changes.
pub const STATE_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] maemi_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("no audio output device backend in this build; run with null audio")]
    NoAudioDevice,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: String,
    pub voice: VoiceConfig,
    pub voices: usize,
    pub null_audio: bool,
    /// Capacity of the null-audio output ring.
    pub output_buffer_s: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:9870".into(),
            voice: VoiceConfig::default(),
            voices: 1,
            null_audio: true,
            output_buffer_s: 10.0,
        }
    }
}

impl ServiceConfig {
    pub fn block_s(&self) -> f64 {
        self.voice.block_frames as f64 / self.voice.sample_rate as f64
    }

    /// Worst case from a message arriving to its first audible sample: the
    /// rest of the block being rendered plus the block that applies it.
    pub fn latency_bound_s(&self) -> f64 {
        2.0 * self.block_s()
    }

    pub fn validate(&self) -> Result<()> {
        self.voice.validate()?;
        if self.block_s() > MAX_BLOCK_S + 1e-12 {
            return Err(ServiceError::Config(format!(
                "block of {} frames at {} Hz is {:.2} ms; live blocks are limited to {:.2} ms",
                self.voice.block_frames,
                self.voice.sample_rate,
                self.block_s() * 1e3,
                MAX_BLOCK_S * 1e3
            )));
        }
        if !(1..=MAX_VOICES).contains(&self.voices) {
            return Err(ServiceError::Config(format!("voices must be 1..={MAX_VOICES}")));
        }
        if !(self.output_buffer_s > 0.0) {
            return Err(ServiceError::Config("output buffer must be positive".into()));
        }
        if !self.null_audio {
            return Err(ServiceError::NoAudioDevice);
        }
        Ok(())
    }
}

/// Reader end of the null-audio device: mono output in render order.
pub struct NullOutput {
    ring: Consumer<f32>,
    overruns: Arc<AtomicU64>,
}

impl NullOutput {
    /// Moves everything rendered so far into `out`.
    pub fn drain_into(&mut self, out: &mut Vec<f32>) -> usize {
        let n = self.ring.slots();
        if let Ok(chunk) = self.ring.read_chunk(n) {
            let (a, b) = chunk.as_slices();
            out.extend_from_slice(a);
            out.extend_from_slice(b);
            chunk.commit_all();
        }
        n
    }

    /// Samples dropped because nobody drained the ring.
    pub fn overruns(&self) -> u64 {
        self.overruns.load(Ordering::Relaxed)
    }
}

struct Shared {
    mailboxes: Vec<Mutex<Producer<Command>>>,
    status: Arc<SharedStatus>,
    frames: broadcast::Sender<Arc<str>>,
}

impl Shared {
    fn state_frames(&self) -> Vec<ServerFrame> {
        self.status.voices.iter().enumerate().map(|(i, v)| state_frame(i, &v.snapshot())).collect()
    }
}

fn state_frame(voice: usize, s: &VoiceSnapshot) -> ServerFrame {
    ServerFrame::State {
        voice,
        phase: s.phase.name().to_string(),
        gate: s.gate,
        pitch_hz: s.pitch_hz,
        loudness: s.loudness,
        mode: s.mode.name().to_string(),
        finished: s.finished,
    }
}

pub struct ServiceHandle {
    addr: SocketAddr,
    config: ServiceConfig,
    stop: Arc<AtomicBool>,
    stop_tx: watch::Sender<bool>,
    render: Option<thread::JoinHandle<()>>,
    tasks: Vec<JoinHandle<()>>,
    output: Option<NullOutput>,
    status: Arc<SharedStatus>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn status(&self) -> &SharedStatus {
        &self.status
    }

    /// The null-audio output. Can be taken once.
    pub fn take_output(&mut self) -> Option<NullOutput> {
        self.output.take()
    }

    pub async fn shutdown(mut self) {
        self.stop.store(true, Ordering::Release);
        let _ = self.stop_tx.send(true);
        for task in self.tasks.drain(..) {
            let _ = task.await;
        }
        if let Some(render) = self.render.take() {
            let _ = tokio::task::spawn_blocking(move || render.join()).await;
        }
    }
}

/// Starts the service: binds, spawns the render thread, telemetry and the
/// accept loop. Must be called inside a tokio runtime.
pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle> {
    config.validate()?;
    let listener = TcpListener::bind(&config.bind)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.bind.clone(), source })?;
    let addr = listener.local_addr()?;
    let sample_rate = config.voice.sample_rate as f64;

    let EngineParts { engine, mailboxes, taps, status } =
        Engine::build(&config.voice, config.voices, sample_rate as usize)?;
    let (frames, _) = broadcast::channel(64);
    let shared =
        Arc::new(Shared { mailboxes: mailboxes.into_iter().map(Mutex::new).collect(), status: status.clone(), frames });

    let (out_tx, out_rx) = RingBuffer::new((config.output_buffer_s * sample_rate) as usize);
    let overruns = Arc::new(AtomicU64::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let (stop_tx, stop_rx) = watch::channel(false);

    let render = {
        let stop = stop.clone();
        let overruns = overruns.clone();
        let block = Duration::from_secs_f64(config.block_s());
        thread::Builder::new()
            .name("maemi-render".into())
            .spawn(move || null_audio(engine, out_tx, overruns, stop, block))?
    };
    let tasks = vec![
        tokio::spawn(telemetry_loop(shared.clone(), taps, sample_rate, stop_rx.clone())),
        tokio::spawn(accept_loop(listener, shared, config.voices, stop_rx)),
    ];
    log::info!(
        "listening on ws://{addr} ({} voice(s), {} frames at {} Hz, latency <= {:.1} ms)",
        config.voices,
        config.voice.block_frames,
        config.voice.sample_rate,
        config.latency_bound_s() * 1e3
    );
    Ok(ServiceHandle {
        addr,
        config,
        stop,
        stop_tx,
        render: Some(render),
        tasks,
        output: Some(NullOutput { ring: out_rx, overruns }),
        status,
    })
}

/// Stands in for a device callback: renders one block per block period.
fn null_audio(
    mut engine: Engine,
    mut out: Producer<f32>,
    overruns: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    block: Duration,
) {
    let mut buffer = vec![0.0f32; engine.block_frames()];
    let mut deadline = Instant::now();
    while !stop.load(Ordering::Acquire) {
        engine.render_block(&mut buffer);
        let mut dropped = 0;
        for &x in &buffer {
            if out.push(x).is_err() {
                dropped += 1;
            }
        }
        if dropped > 0 {
            overruns.fetch_add(dropped, Ordering::Relaxed);
        }
        deadline += block;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else if now - deadline > block * 8 {
            // Fell far behind (suspended process); do not try to catch up.
            deadline = now;
        }
    }
}

async fn telemetry_loop(
    shared: Arc<Shared>,
    mut taps: Consumer<f32>,
    sample_rate: f64,
    mut stop: watch::Receiver<bool>,
) {
    let mut analyzer = telemetry::Analyzer::new(sample_rate);
    let mut poll = tokio::time::interval(STATE_POLL);
    poll.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let meter_every = Duration::from_secs_f64(1.0 / TELEMETRY_HZ);
    let mut last_meter = Instant::now();
    let mut last_state: Vec<Option<VoiceSnapshot>> = vec![None; shared.status.voices.len()];
    loop {
        tokio::select! {
            _ = poll.tick() => {}
            _ = stop.changed() => break,
        }
        for (i, status) in shared.status.voices.iter().enumerate() {
            let snap = status.snapshot();
            if last_state[i] != Some(snap) {
                last_state[i] = Some(snap);
                broadcast(&shared, &state_frame(i, &snap));
            }
        }
        if last_meter.elapsed() >= meter_every {
            last_meter = Instant::now();
            while let Ok(x) = taps.pop() {
                analyzer.push(x as f64);
            }
            broadcast(&shared, &analyzer.meter());
            broadcast(&shared, &analyzer.spectrum());
        }
    }
}

fn broadcast(shared: &Shared, frame: &ServerFrame) {
    // No subscribers is fine.
    let _ = shared.frames.send(frame.to_json().into());
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>, voices: usize, mut stop: watch::Receiver<bool>) {
    loop {
        let accepted = tokio::select! {
            a = listener.accept() => a,
            _ = stop.changed() => break,
        };
        match accepted {
            Ok((stream, peer)) => {
                let shared = shared.clone();
                let stop = stop.clone();
                tokio::spawn(async move {
                    if let Err(e) = client(stream, shared, voices, stop).await {
                        log::debug!("client {peer}: {e}");
                    }
                });
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

async fn client(
    stream: TcpStream,
    shared: Arc<Shared>,
    voices: usize,
    mut stop: watch::Receiver<bool>,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut tx, mut rx) = ws.split();
    let mut frames = shared.frames.subscribe();
    loop {
        tokio::select! {
            incoming = rx.next() => {
                let Some(msg) = incoming else { break };
                let replies = match msg? {
                    Message::Text(text) => handle_text(&text, &shared, voices),
                    Message::Binary(_) => vec![ServerFrame::error("binary frames are not supported")],
                    Message::Close(_) => break,
                    _ => Vec::new(),
                };
                for reply in replies {
                    tx.send(Message::Text(reply.to_json())).await?;
                }
            }
            frame = frames.recv() => match frame {
                Ok(json) => tx.send(Message::Text(json.to_string())).await?,
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => break,
            },
            _ = stop.changed() => break,
        }
    }
    let _ = tx.close().await;
    Ok(())
}

fn handle_text(text: &str, shared: &Shared, voices: usize) -> Vec<ServerFrame> {
    match parse_request(text, voices) {
        Ok(Request::Hello) => shared.state_frames(),
        Ok(Request::Voice { voice, command }) => {
            let mut mailbox = shared.mailboxes[voice].lock().unwrap_or_else(|p| p.into_inner());
            match mailbox.push(command) {
                Ok(()) => Vec::new(),
                Err(_) => vec![ServerFrame::error(format!("voice {voice} mailbox full"))],
            }
        }
        Err(message) => vec![ServerFrame::error(message)],
    }
}
