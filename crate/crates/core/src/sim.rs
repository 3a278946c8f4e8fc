//! Deterministic multi-speaker conversation simulator.
//!
//! Generates mixtures with known clean sources, a frame-exact activity
//! prior, ground-truth ratio masks on demand, and synthetic per-utterance
//! transcripts, so the full decoding chain is verifiable without real
//! data. Speakers get distinct spectral signatures: disjoint tone sets by
//! default, or distinct band-pass noise.

use std::path::PathBuf;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estim::{EstimatorConfig, TFMask};
use crate::metrics::{TranscriptSet, Word};
use crate::priors::{GlobalPrior, IndexMap, WindowPrior};
use crate::signal::{num_frames, slice_frames, stft, ComplexSpectrogram, Waveform};

pub const SAMPLE_RATE: u32 = 16000;

/// On/off raised-cosine ramp applied to every utterance, in seconds.
const RAMP_SECS: f64 = 0.010;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceKind {
    /// Each speaker owns a disjoint set of tones placed on exact STFT bin
    /// centers, giving near-ideal mask separability.
    #[default]
    Multitone,
    /// Each speaker owns a distinct band-pass noise band.
    FilteredNoise,
    /// Utterance audio drawn from WAV files in a directory, cycled.
    WavBank { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_speakers: usize,
    pub duration_s: f64,
    /// Fraction of speech time with two simultaneous speakers, in [0, 1].
    #[serde(default)]
    pub target_overlap: f64,
    /// White-noise floor at this SNR (dB) relative to summed speech; none
    /// for a noise-free mixture.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub source_kind: SourceKind,
    /// STFT geometry the prior is aligned to.
    #[serde(default = "default_frame_len")]
    pub stft_frame_len: usize,
    #[serde(default = "default_hop")]
    pub stft_hop: usize,
}

fn default_frame_len() -> usize {
    1024
}

fn default_hop() -> usize {
    256
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 {
            return Err(Error::InvalidArgument("n_speakers must be >= 1".into()));
        }
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.target_overlap) {
            return Err(Error::InvalidArgument("target_overlap must be in [0, 1]".into()));
        }
        if self.n_speakers == 1 && self.target_overlap > 0.0 {
            return Err(Error::InvalidArgument(
                "overlap is infeasible with a single speaker".into(),
            ));
        }
        if self.stft_hop == 0 || self.stft_frame_len < self.stft_hop {
            return Err(Error::InvalidArgument("invalid STFT geometry".into()));
        }
        Ok(())
    }
}

/// One scheduled utterance, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: usize,
    pub start: usize,
    pub end: usize,
}

/// Everything the pipeline and metrics need to be checked end to end.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    pub noise: Option<Waveform>,
    pub prior: GlobalPrior,
    pub transcripts: TranscriptSet,
    pub utterances: Vec<Utterance>,
    pub stft_frame_len: usize,
    pub stft_hop: usize,
}

impl GroundTruth {
    /// STFT of each clean source with the scenario geometry.
    pub fn source_stfts(&self) -> Result<Vec<ComplexSpectrogram>> {
        self.sources
            .iter()
            .map(|s| stft(s, self.stft_frame_len, self.stft_hop))
            .collect()
    }
}

fn schedule(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<Utterance> {
    let sr = SAMPLE_RATE as f64;
    let total = (spec.duration_s * sr) as usize;
    let mut utts: Vec<Utterance> = Vec::new();
    let mut speech = 0.0f64; // union of spans, samples
    let mut overlap = 0.0f64; // samples with two active speakers
    let mut order: Vec<usize> = (0..spec.n_speakers).collect();
    let mut cursor = 0usize; // index into the speaker cycle

    loop {
        let prev_end = utts.last().map_or(0, |u| u.end);
        if prev_end as f64 + 1.2 * sr > total as f64 {
            break;
        }
        if cursor == 0 {
            // reshuffle each cycle so every speaker keeps appearing
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
        }
        let mut speaker = order[cursor];
        cursor = (cursor + 1) % order.len();

        let len = (rng.gen_range(1.0..4.0) * sr) as usize;
        let len = len.min(total - prev_end);
        if len < (1.0 * sr) as usize {
            break;
        }

        let start = if utts.is_empty() {
            (rng.gen_range(0.1..0.4) * sr) as usize
        } else {
            let prev = *utts.last().unwrap();
            // steer the overlap ratio toward the target
            let wanted = (spec.target_overlap * (speech + len as f64) - overlap)
                / (1.0 + spec.target_overlap).max(1.0);
            let max_ov = 0.9 * prev.len().min(len) as f64;
            // at most two simultaneous speakers: never reach back past the
            // second-to-last utterance
            let floor_start = utts
                .iter()
                .rev()
                .nth(1)
                .map_or(0, |u| u.end)
                .max(prev.start + 1);
            let ov = wanted.clamp(0.0, max_ov);
            if spec.target_overlap > 0.0 && ov > 0.02 * sr {
                if speaker == prev.speaker {
                    // overlapping the same speaker merges segments; pick another
                    speaker = (speaker + 1) % spec.n_speakers;
                }
                (prev.end - ov as usize).max(floor_start)
            } else {
                prev.end + (rng.gen_range(0.2..1.5) * sr) as usize
            }
        };
        let end = (start + len).min(total);
        if end <= start || end - start < (0.8 * sr) as usize {
            break;
        }

        if let Some(prev) = utts.last() {
            let ov = prev.end.saturating_sub(start) as f64;
            overlap += ov.min(len as f64);
            speech += (end - start) as f64 - ov.min((end - start) as f64);
        } else {
            speech += (end - start) as f64;
        }
        utts.push(Utterance { speaker, start, end });
    }
    utts
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Tone bins owned by a speaker: three slots from a mel-spaced grid, so
/// any two speakers (up to 8) differ in every mel band they excite and
/// all bins sit at least five apart, keeping window leakage disjoint.
fn tone_bins(speaker: usize) -> [usize; 3] {
    let slot_bin = |slot: usize| -> usize {
        let mel = 250.0 + slot as f64 * (2500.0 - 250.0) / 23.0;
        let hz = 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
        (hz / (16000.0 / 1024.0)).round() as usize
    };
    [slot_bin(speaker % 8), slot_bin(speaker % 8 + 8), slot_bin(speaker % 8 + 16)]
}

fn raised_cosine_ramp(buf: &mut [f64]) {
    let ramp = ((RAMP_SECS * SAMPLE_RATE as f64) as usize).min(buf.len() / 2);
    for i in 0..ramp {
        let g = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / ramp as f64).cos());
        buf[i] *= g;
        let n = buf.len();
        buf[n - 1 - i] *= g;
    }
}

fn synth_multitone(
    u: &Utterance,
    frame_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut buf = vec![0.0f64; u.len()];
    for bin in tone_bins(u.speaker) {
        let freq = bin as f64 * sr / frame_len as f64;
        let amp = 0.08 * rng.gen_range(0.8..1.2);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        for (i, s) in buf.iter_mut().enumerate() {
            // phase continuous in global time, so tones stay on bin centers
            let n = (u.start + i) as f64;
            *s += amp * (std::f64::consts::TAU * freq * n / sr + phase).cos();
        }
    }
    raised_cosine_ramp(&mut buf);
    buf
}

fn synth_filtered_noise(u: &Utterance, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let n = u.len();
    let lo = 200.0 + 350.0 * u.speaker as f64;
    let hi = lo + 300.0;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sr / n as f64;
        if f < lo || f > hi {
            *v = Complex64::default();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|z| z.re / n as f64).collect();
    let rms = (out.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let g = 0.1 / rms;
        out.iter_mut().for_each(|s| *s *= g);
    }
    raised_cosine_ramp(&mut out);
    out
}

fn load_wav_bank(dir: &std::path::Path) -> Result<Vec<Waveform>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "wav bank {} contains no .wav files",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| crate::signal::read_wav(p, SAMPLE_RATE))
        .collect()
}

fn synth_wav_bank(u: &Utterance, bank: &[Waveform], counter: usize) -> Vec<f64> {
    let clip = &bank[counter % bank.len()];
    let mut buf = vec![0.0f64; u.len()];
    for (i, s) in buf.iter_mut().enumerate() {
        *s = clip.samples()[i % clip.len().max(1)];
    }
    raised_cosine_ramp(&mut buf);
    buf
}

/// Framewise overlap ratio of scheduled spans: samples with two or more
/// active speakers over samples with at least one.
pub fn measured_overlap_ratio(utts: &[Utterance], total: usize) -> f64 {
    let mut counts = vec![0u8; total];
    for u in utts {
        for c in counts.iter_mut().take(u.end.min(total)).skip(u.start) {
            *c = c.saturating_add(1);
        }
    }
    let speech = counts.iter().filter(|&&c| c >= 1).count();
    let over = counts.iter().filter(|&&c| c >= 2).count();
    if speech == 0 {
        0.0
    } else {
        over as f64 / speech as f64
    }
}

/// Generates a scenario: scheduled utterances, per-speaker clean sources,
/// the sample-exact mixture, the frame-aligned activity prior, and one
/// synthetic transcript token per utterance. Deterministic per seed.
pub fn generate(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = (spec.duration_s * SAMPLE_RATE as f64) as usize;
    let utts = schedule(spec, &mut rng);
    if utts.is_empty() {
        return Err(Error::InvalidArgument(
            "duration too short to place a single utterance".into(),
        ));
    }

    let bank = match &spec.source_kind {
        SourceKind::WavBank { dir } => Some(load_wav_bank(dir)?),
        _ => None,
    };

    let mut sources = vec![vec![0.0f64; total]; spec.n_speakers];
    for (i, u) in utts.iter().enumerate() {
        let buf = match &spec.source_kind {
            SourceKind::Multitone => synth_multitone(u, spec.stft_frame_len, &mut rng),
            SourceKind::FilteredNoise => synth_filtered_noise(u, &mut rng),
            SourceKind::WavBank { .. } => synth_wav_bank(u, bank.as_ref().unwrap(), i),
        };
        for (j, &s) in buf.iter().enumerate() {
            sources[u.speaker][u.start + j] += s;
        }
    }

    // mixture is the exact sample sum of sources plus optional noise
    let mut mix = vec![0.0f64; total];
    for src in &sources {
        for (m, &s) in mix.iter_mut().zip(src) {
            *m += s;
        }
    }
    let noise = if let Some(snr_db) = spec.noise_snr_db {
        let speech_power = mix.iter().map(|s| s * s).sum::<f64>() / total as f64;
        let noise_power = speech_power / 10f64.powf(snr_db / 10.0);
        let sigma = noise_power.sqrt();
        let n: Vec<f64> = (0..total)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        for (m, &x) in mix.iter_mut().zip(&n) {
            *m += x;
        }
        Some(Waveform::new(n, SAMPLE_RATE)?)
    } else {
        None
    };

    // prior at STFT-frame resolution: frame t is active for a speaker iff
    // the analysis span [t*hop - frame_len/2, t*hop + frame_len/2) meets
    // one of their utterances, so any frame with source energy is marked
    let t_frames = num_frames(total, spec.stft_hop);
    let pad = spec.stft_frame_len / 2;
    let mut activity = Array2::<u8>::zeros((spec.n_speakers, t_frames));
    for u in &utts {
        let center = |t: usize| (t * spec.stft_hop) as i64;
        for t in 0..t_frames {
            let lo = center(t) - pad as i64;
            let hi = center(t) + pad as i64;
            if (u.start as i64) < hi && (u.end as i64) > lo {
                activity[[u.speaker, t]] = 1;
            }
        }
    }
    let speaker_ids: Vec<String> = (0..spec.n_speakers).map(|k| format!("spk{k:02}")).collect();
    let prior = GlobalPrior::new(
        activity,
        spec.stft_hop as f64 / SAMPLE_RATE as f64,
        speaker_ids.clone(),
    )?;

    let mut transcripts = TranscriptSet::default();
    for (i, u) in utts.iter().enumerate() {
        transcripts.push(
            &speaker_ids[u.speaker],
            Word {
                token: format!("w{i:03}"),
                onset: u.start as f64 / SAMPLE_RATE as f64,
                offset: u.end as f64 / SAMPLE_RATE as f64,
            },
        );
    }

    Ok(GroundTruth {
        mixture: Waveform::new(mix, SAMPLE_RATE)?,
        sources: sources
            .into_iter()
            .map(|s| Waveform::new(s, SAMPLE_RATE))
            .collect::<Result<_>>()?,
        noise,
        prior,
        transcripts,
        utterances: utts,
        stft_frame_len: spec.stft_frame_len,
        stft_hop: spec.stft_hop,
    })
}

/// Ground-truth ratio masks for one window: the clean-to-mixture ratio per
/// mapped speaker with 0/0 := 0, ungated. Rows without a mapping stay zero.
pub fn oracle_masks(
    gt: &GroundTruth,
    wp: &WindowPrior,
    im: &IndexMap,
    kind: &EstimatorConfig,
) -> Result<TFMask> {
    let mix_spec = stft(&gt.mixture, gt.stft_frame_len, gt.stft_hop)?;
    let f = mix_spec.num_bins();
    let l = wp.window_len();
    let src_specs = gt.source_stfts()?;

    let mut sources = Array3::<Complex64>::zeros((wp.max_speakers(), l, f));
    for (row, global) in im.iter() {
        let spec = src_specs.get(global).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "window map names speaker {global} but the scenario has {}",
                src_specs.len()
            ))
        })?;
        sources
            .index_axis_mut(Axis(0), row)
            .assign(&slice_frames(&spec.bins, wp.start_frame, l));
    }
    let mix = slice_frames(&mix_spec.bins, wp.start_frame, l);
    let gate = Array3::<f64>::ones((wp.max_speakers(), l, f));
    let mut inputs = Array3::<f64>::zeros((wp.max_speakers() + 1, l, f));
    inputs
        .slice_mut(ndarray::s![..wp.max_speakers(), .., ..])
        .assign(&gate);
    crate::estim::separate_window(&inputs, &mix, Some(&sources), wp.window_id, kind)
}
