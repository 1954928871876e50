use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use maemi_core::analysis::{analyze, AnalysisWindows};
use maemi_core::{read_wav, render_score, write_wav, Constants, PitchMode, Score, SelfTest, VoiceConfig, WavFormat};
use maemi_service::{serve, ServiceConfig};

#[derive(Parser)]
#[command(name = "maemi", version, about = "Physically modeled maemi cicada calls")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a score file to WAV.
    Render {
        score: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        voice: VoiceArgs,
        #[arg(long)]
        float: bool,
    },
    /// Render the built-in call at a pitch between E4 and E5.
    Demo {
        #[arg(default_value = "E5")]
        note: String,
        /// Defaults to demo-<note>.wav.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        voice: VoiceArgs,
        #[arg(long)]
        float: bool,
    },
    /// Measure a rendered call.
    Analyze {
        wav: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance checks; exits nonzero if any fails.
    Selftest {
        /// Run a single check by number.
        #[arg(long)]
        only: Option<u8>,
        #[command(flatten)]
        voice: VoiceArgs,
    },
    /// Serve live control over WebSocket.
    Serve {
        #[arg(long, default_value = "127.0.0.1:9870")]
        bind: String,
        #[arg(long, default_value_t = 256)]
        block: usize,
        #[arg(long, default_value_t = 1)]
        voices: usize,
        /// Render into a ring buffer instead of a device.
        #[arg(long)]
        null_audio: bool,
        #[command(flatten)]
        voice: VoiceArgs,
    },
    /// Print the default constants file.
    Constants,
}

#[derive(Args, Clone)]
struct VoiceArgs {
    #[arg(long, default_value_t = 48_000)]
    sr: u32,
    /// Decimal or 0x-prefixed hex.
    #[arg(long, default_value = "0xC1CADA", value_parser = parse_seed)]
    seed: u64,
    #[arg(long, default_value = "fixed", value_parser = ["fixed", "following"])]
    mode: String,
    /// Constants file overriding the defaults.
    #[arg(long)]
    constants: Option<PathBuf>,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("bad seed `{s}`: {e}"))
}

impl VoiceArgs {
    fn config(&self) -> Result<VoiceConfig> {
        let constants = match &self.constants {
            Some(path) => Constants::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => Constants::default(),
        };
        let config = VoiceConfig {
            sample_rate: self.sr,
            seed: self.seed,
            mode: self.mode.parse::<PitchMode>()?,
            constants,
            ..VoiceConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn format(float: bool) -> WavFormat {
    if float {
        WavFormat::Float32
    } else {
        WavFormat::Pcm16
    }
}

fn render_to(score: &Score, config: &VoiceConfig, out: &Path, float: bool) -> Result<()> {
    let audio = render_score(score, config)?;
    write_wav(out, &audio, format(float)).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} ({:.2} s at {} Hz)", out.display(), audio.duration_s(), audio.sample_rate);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::Render { score, out, voice, float } => {
            let text = fs::read_to_string(&score).with_context(|| format!("reading {}", score.display()))?;
            let score = Score::parse(&text).with_context(|| format!("parsing {}", score.display()))?;
            render_to(&score, &voice.config()?, &out, float)?;
        }
        Cmd::Demo { note, out, voice, float } => {
            let score = Score::demo_for_note(&note)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("demo-{note}.wav")));
            render_to(&score, &voice.config()?, &out, float)?;
        }
        Cmd::Analyze { wav, json } => {
            let audio = read_wav(&wav).with_context(|| format!("reading {}", wav.display()))?;
            let report = analyze(&audio.left, audio.sample_rate as f64, AnalysisWindows::default())
                .with_context(|| format!("analyzing {}", wav.display()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_kv());
            }
        }
        Cmd::Selftest { only, voice } => {
            let mut st = SelfTest::new(voice.config()?)?;
            let checks = match only {
                Some(id) => vec![st.run(id)?],
                None => st.run_all()?,
            };
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} passed, {failed} failed", checks.len() - failed);
            return Ok(failed == 0);
        }
        Cmd::Serve { bind, block, voices, null_audio, voice } => {
            let mut voice_config = voice.config()?;
            voice_config.block_frames = block;
            let config = ServiceConfig { bind, voice: voice_config, voices, null_audio, ..ServiceConfig::default() };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let mut handle = serve(config).await?;
                eprintln!("listening on ws://{} (ctrl-c to stop)", handle.local_addr());
                // Nobody listens to the null device here; drain it so the
                // ring never reports overruns.
                let mut output = handle.take_output();
                let mut sink = Vec::new();
                let mut tick = tokio::time::interval(std::time::Duration::from_millis(100));
                let ctrl_c = tokio::signal::ctrl_c();
                tokio::pin!(ctrl_c);
                loop {
                    tokio::select! {
                        _ = &mut ctrl_c => break,
                        _ = tick.tick() => {
                            if let Some(o) = output.as_mut() {
                                o.drain_into(&mut sink);
                                sink.clear();
                            }
                        }
                    }
                }
                handle.shutdown().await;
                anyhow::Ok(())
            })?;
        }
        Cmd::Constants => print!("{}", Constants::default().to_text()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seeds_parse_in_both_bases() {
        assert_eq!(parse_seed("0xC1CADA"), Ok(0xC1CADA));
        assert_eq!(parse_seed("12"), Ok(12));
        assert!(parse_seed("0xZZ").is_err());
    }

    #[test]
    fn defaults_match_the_library() {
        let cli = Cli::parse_from(["maemi", "demo"]);
        let Cmd::Demo { voice, .. } = cli.command else { panic!() };
        assert_eq!(voice.config().unwrap(), VoiceConfig::default());
    }

    #[test]
    fn unknown_mode_is_rejected() {
        assert!(Cli::try_parse_from(["maemi", "demo", "--mode", "loose"]).is_err());
    }
}
