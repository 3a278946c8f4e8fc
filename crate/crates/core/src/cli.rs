//! Command-line surface: `simulate`, `decode`, `evaluate`, `recluster`.
//!
//! Exit codes: 0 success, 1 runtime failure (with a machine-readable JSON
//! error on stderr), 2 usage errors.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::load_config;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::metrics::{cpwer, der, tcpwer, TranscriptSet};
use crate::pipeline::{decode, PipelineConfig};
use crate::priors::{prior_from_rttm, prior_to_rttm, write_window_maps};
use crate::recluster::{recluster, ReclusterConfig};
use crate::signal::{read_wav, write_wav, Waveform};
use crate::sim::{generate, ScenarioSpec, SAMPLE_RATE};

#[derive(Parser)]
#[command(name = "dcfds", version, about = "Diarization-guided speech separation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-speaker scenario with ground truth
    Simulate {
        /// Scenario spec JSON
        #[arg(long)]
        spec: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate a mixture guided by a diarization prior
    Decode {
        /// Mixture WAV (mono 16-bit PCM)
        #[arg(long)]
        mix: PathBuf,
        /// Global diarization prior, RTTM
        #[arg(long)]
        prior: PathBuf,
        /// Pipeline config JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Directory of clean per-speaker WAVs (spk<NN>.wav) for oracle
        /// estimator kinds, e.g. a `simulate` output directory
        #[arg(long)]
        oracle_dir: Option<PathBuf>,
    },
    /// Score hypothesis transcripts (and optionally priors) against references
    Evaluate {
        /// Reference transcripts (.json or .ctm)
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Hypothesis transcripts (.json or .ctm)
        #[arg(long)]
        hyp: PathBuf,
        /// tcpWER collar, seconds
        #[arg(long, default_value_t = 5.0)]
        collar: f64,
        /// Reference RTTM, enables DER
        #[arg(long)]
        ref_rttm: Option<PathBuf>,
        /// Hypothesis RTTM, enables DER
        #[arg(long)]
        hyp_rttm: Option<PathBuf>,
        /// RTTM quantization hop for DER inputs, seconds
        #[arg(long, default_value_t = 0.016)]
        rttm_hop: f64,
    },
    /// Rebuild a diarization prior from separated streams
    Recluster {
        /// Directory of separated stream WAVs
        #[arg(long)]
        streams: PathBuf,
        /// Output RTTM path
        #[arg(long)]
        out: PathBuf,
        /// Pipeline config JSON (its re-clustering section applies)
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Parses argv and runs the selected subcommand, mapping every outcome to
/// a process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    2
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let payload = serde_json::json!({
                "code": e.code(),
                "message": e.to_string(),
            });
            eprintln!("{payload}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { spec, out } => cmd_simulate(&spec, &out),
        Command::Decode { mix, prior, config, out, oracle_dir } => {
            cmd_decode(&mix, &prior, &config, &out, oracle_dir.as_deref())
        }
        Command::Evaluate { reference, hyp, collar, ref_rttm, hyp_rttm, rttm_hop } => {
            cmd_evaluate(&reference, &hyp, collar, ref_rttm.as_deref(), hyp_rttm.as_deref(), rttm_hop)
        }
        Command::Recluster { streams, out, config } => {
            cmd_recluster(&streams, &out, config.as_deref())
        }
    }
}

fn cmd_simulate(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let gt = generate(&spec)?;
    std::fs::create_dir_all(out)?;

    write_wav(&out.join("mixture.wav"), &gt.mixture)?;
    for (i, src) in gt.sources.iter().enumerate() {
        write_wav(&out.join(format!("spk{i:02}.wav")), src)?;
    }
    std::fs::write(out.join("prior.rttm"), prior_to_rttm(&gt.prior, "sim"))?;
    std::fs::write(out.join("transcripts.json"), gt.transcripts.to_json()?)?;
    std::fs::write(out.join("scenario.json"), serde_json::to_string_pretty(&spec)?)?;
    let manifest = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "spec_digest": crate::manifest::file_digest(spec_path)?,
        "utterances": gt.utterances.len(),
        "speakers": gt.sources.len(),
        "samples": gt.mixture.len(),
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote scenario with {} speakers to {}", gt.sources.len(), out.display());
    Ok(())
}

/// Clean per-speaker sources named `spk<NN>.wav`, in index order.
fn read_oracle_dir(dir: &Path) -> Result<Vec<Waveform>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("spk") && n.ends_with(".wav"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "oracle directory {} holds no spk*.wav files",
            dir.display()
        )));
    }
    paths.iter().map(|p| read_wav(p, SAMPLE_RATE)).collect()
}

fn cmd_decode(
    mix_path: &Path,
    prior_path: &Path,
    config_path: &Path,
    out: &Path,
    oracle_dir: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config_path)?;
    let mix = read_wav(mix_path, SAMPLE_RATE)?;
    let prior_text = std::fs::read_to_string(prior_path)?;
    let prior = prior_from_rttm(&prior_text, cfg.frame_hop_secs(mix.sample_rate()))?;
    let oracle = match oracle_dir {
        Some(dir) => Some(read_oracle_dir(dir)?),
        None => None,
    };

    let mut manifest = RunManifest::new(&cfg)?;
    manifest.record_input(mix_path)?;
    manifest.record_input(prior_path)?;
    manifest.record_input(config_path)?;

    let started = Instant::now();
    let output = decode(&mix, &prior, &cfg, oracle.as_deref())?;
    manifest.record_timing("decode", started.elapsed());

    std::fs::create_dir_all(out)?;
    for (i, w) in output.result.waveforms.iter().enumerate() {
        write_wav(&out.join(format!("spk{i:02}.wav")), w)?;
    }
    let final_prior = output.refreshed_prior.as_ref().unwrap_or(&output.result.prior);
    std::fs::write(out.join("prior.rttm"), prior_to_rttm(final_prior, "decode"))?;
    write_window_maps(&out.join("window_maps.json"), &output.result.window_maps)?;
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "decoded {} speakers over {} windows into {}",
        output.result.waveforms.len(),
        output.result.window_maps.len(),
        out.display()
    );
    Ok(())
}

fn read_transcripts(path: &Path) -> Result<TranscriptSet> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("ctm") => TranscriptSet::from_ctm(&text),
        _ => TranscriptSet::from_json(&text),
    }
}

fn cmd_evaluate(
    ref_path: &Path,
    hyp_path: &Path,
    collar: f64,
    ref_rttm: Option<&Path>,
    hyp_rttm: Option<&Path>,
    rttm_hop: f64,
) -> Result<()> {
    let reference = read_transcripts(ref_path)?;
    let hypothesis = read_transcripts(hyp_path)?;
    let cp = cpwer(&reference, &hypothesis)?;
    let tcp = tcpwer(&reference, &hypothesis, collar)?;

    let mut report = serde_json::json!({
        "cpwer": cp,
        "tcpwer": tcp,
        "collar": collar,
    });
    if let (Some(r), Some(h)) = (ref_rttm, hyp_rttm) {
        let ref_prior = prior_from_rttm(&std::fs::read_to_string(r)?, rttm_hop)?;
        let hyp_prior = prior_from_rttm(&std::fs::read_to_string(h)?, rttm_hop)?;
        let d = der(&ref_prior, &hyp_prior, crate::metrics::DER_FRAME)?;
        report["der"] = serde_json::to_value(d)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_recluster(streams_dir: &Path, out: &Path, config_path: Option<&Path>) -> Result<()> {
    let rc_cfg: ReclusterConfig = match config_path {
        Some(p) => load_config(p)?.recluster,
        None => PipelineConfig::default().recluster,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(streams_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} holds no .wav streams",
            streams_dir.display()
        )));
    }
    let streams: Vec<Waveform> = paths
        .iter()
        .map(|p| read_wav(p, SAMPLE_RATE))
        .collect::<Result<_>>()?;
    let prior = recluster(&streams, &rc_cfg)?;
    std::fs::write(out, prior_to_rttm(&prior, "recluster"))?;
    println!("re-clustered {} streams into {} speakers", streams.len(), prior.num_speakers());
    Ok(())
}
