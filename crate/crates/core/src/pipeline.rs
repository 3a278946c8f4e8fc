//! End-to-end window decoding: slide the prior into windows, run the
//! per-window diarize/extend/concat/separate chain (plus optional
//! enhancement stages), stitch the windowed masks back onto global speaker
//! identities, reconstruct waveforms through the mixture phase, and
//! optionally re-cluster the separated streams into a refreshed prior for
//! another decoding round.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::estim::{
    concat_inputs, diarize_window, dimension_extend, mimo_se_window, separate_window,
    EstimatorConfig, TFMask,
};
use crate::priors::{swsp, GlobalPrior, IndexMap, WindowMapEntry, WindowPrior, WindowingConfig, WindowingMode};
use crate::recluster::ReclusterConfig;
use crate::signal::{
    apply_mask, compute_fbank, istft, magnitude, slice_frames, stft, ComplexSpectrogram,
    FeatureMatrix, MagnitudeSpectrogram, Waveform,
};

/// How masks from overlapping decoding windows combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeRule {
    /// Arithmetic mean of every contributing window.
    Average,
    /// The earliest window to cover a cell wins.
    FirstWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        // 64 ms frames, 16 ms hop at 16 kHz
        StftParams { frame_len: 1024, hop: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub windowing: WindowingConfig,
    pub stft: StftParams,
    pub n_mels: usize,
    pub diarization: EstimatorConfig,
    pub separation: EstimatorConfig,
    pub enhancement: EstimatorConfig,
    /// Enhancement applications after separation (0 = none).
    pub se_stages: usize,
    /// Re-clustering rounds; each round refreshes the prior and decodes again.
    pub recluster_rounds: usize,
    pub overlap_merge: MergeRule,
    /// Diarization-loss weight in the combined training objective; carried
    /// in the config for external trainers.
    pub loss_weight: f64,
    pub recluster: ReclusterConfig,
    /// Worker threads for window evaluation; `DCFDS_WORKERS` overrides.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            windowing: WindowingConfig {
                window_len: 188, // 3 s of 16 ms frames
                hop: 94,
                max_speakers: 3,
                mode: WindowingMode::Decoding,
            },
            stft: StftParams::default(),
            n_mels: 40,
            diarization: EstimatorConfig::OracleBinary,
            separation: EstimatorConfig::OracleMagnitudeRatio,
            enhancement: EstimatorConfig::Identity,
            se_stages: 0,
            recluster_rounds: 1,
            overlap_merge: MergeRule::Average,
            loss_weight: 1.0,
            recluster: ReclusterConfig::default(),
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.windowing.validate()?;
        if self.stft.hop == 0 || self.stft.frame_len < self.stft.hop {
            return Err(Error::Config("invalid STFT geometry".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be >= 1".into()));
        }
        if self.loss_weight < 0.0 {
            return Err(Error::Config("loss_weight must be nonnegative".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// STFT hop in seconds at the given rate; the prior must live on this grid.
    pub fn frame_hop_secs(&self, sample_rate: u32) -> f64 {
        self.stft.hop as f64 / sample_rate as f64
    }
}

/// Global separation masks plus per-cell contribution counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTFMask {
    /// speakers x frames x bins
    pub masks: Array3<f64>,
    /// speakers x frames: how many windows contributed
    pub coverage: Array2<u32>,
}

/// Everything decoding produces for one prior.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    /// one waveform per global speaker, each the mixture's length
    pub waveforms: Vec<Waveform>,
    pub global_mask: GlobalTFMask,
    /// the prior actually decoded (frame axis aligned to the STFT)
    pub prior: GlobalPrior,
    pub window_maps: Vec<WindowMapEntry>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub result: SeparationResult,
    /// present when re-clustering ran; the prior behind `result`
    pub refreshed_prior: Option<GlobalPrior>,
}

/// Pre-sliced per-window signals: everything `run_window` consumes.
#[derive(Debug, Clone)]
pub struct WindowInputs {
    /// L x F mixture STFT slice
    pub mix: Array2<Complex64>,
    /// L x F mixture magnitude slice
    pub mag: MagnitudeSpectrogram,
    /// L x D acoustic features for the diarization stage
    pub feats: Option<FeatureMatrix>,
    /// rows x L x F clean-source STFTs aligned to the windowed rows;
    /// required by oracle estimator kinds
    pub sources: Option<Array3<Complex64>>,
}

/// One window's stitched contribution.
#[derive(Debug, Clone)]
pub struct WindowMask {
    pub mask: TFMask,
    pub map: IndexMap,
    pub window_id: usize,
    pub start_frame: usize,
    pub valid_len: usize,
}

/// Runs the unified per-window chain: diarize, extend along frequency,
/// concatenate with the magnitude, separate, then the configured number of
/// enhancement stages.
pub fn run_window(
    inputs: &WindowInputs,
    wp: &WindowPrior,
    im: &IndexMap,
    cfg: &PipelineConfig,
) -> Result<TFMask> {
    let (l, f) = inputs.mix.dim();
    if l != wp.window_len() {
        return Err(shape_mismatch(
            format!("{} frames", wp.window_len()),
            format!("{l}"),
        ));
    }
    let _ = im; // row alignment is fixed by construction of `inputs.sources`
    let tm = diarize_window(wp, None, inputs.feats.as_ref(), &cfg.diarization)?;
    let broadcast = dimension_extend(&tm, f);
    let cat = concat_inputs(&broadcast, &inputs.mag)?;
    let mut tf = separate_window(&cat, &inputs.mix, inputs.sources.as_ref(), wp.window_id, &cfg.separation)?;
    for _ in 0..cfg.se_stages {
        tf = mimo_se_window(
            &tf,
            &inputs.mag,
            &inputs.mix,
            inputs.sources.as_ref(),
            wp.window_id,
            &cfg.enhancement,
        )?;
    }
    Ok(tf)
}

/// Scatters windowed masks back to global speaker rows through each
/// window's saved index map. Contributions merge per `rule`; unmapped
/// rows and padded tail frames contribute nothing. The reduction is
/// ordered by window id, so the result does not depend on which order the
/// windows were computed in.
pub fn sis_stitch(
    windows: &[WindowMask],
    num_speakers: usize,
    num_frames: usize,
    num_bins: usize,
    rule: MergeRule,
) -> Result<GlobalTFMask> {
    let mut sum = Array3::<f64>::zeros((num_speakers, num_frames, num_bins));
    let mut coverage = Array2::<u32>::zeros((num_speakers, num_frames));

    let mut order: Vec<&WindowMask> = windows.iter().collect();
    order.sort_by_key(|w| w.window_id);

    for w in order {
        let (rows, l, f) = w.mask.masks.dim();
        if f != num_bins {
            return Err(shape_mismatch(format!("{num_bins} bins"), format!("{f}")));
        }
        if w.valid_len > l {
            return Err(Error::InvalidArgument(format!(
                "window {}: valid_len {} exceeds its {} frames",
                w.window_id, w.valid_len, l
            )));
        }
        if w.start_frame + w.valid_len > num_frames {
            return Err(Error::InvalidArgument(format!(
                "window {} covers frames past the global timeline",
                w.window_id
            )));
        }
        for (row, global) in w.map.iter() {
            if row >= rows {
                return Err(Error::InvalidArgument(format!(
                    "window {}: map row {} outside the mask", w.window_id, row
                )));
            }
            if global >= num_speakers {
                return Err(Error::InvalidArgument(format!(
                    "window {}: global speaker {} outside the prior", w.window_id, global
                )));
            }
            for t in 0..w.valid_len {
                let gt = w.start_frame + t;
                let seen = coverage[[global, gt]];
                if rule == MergeRule::FirstWins && seen > 0 {
                    coverage[[global, gt]] = seen + 1;
                    continue;
                }
                for b in 0..num_bins {
                    sum[[global, gt, b]] += w.mask.masks[[row, t, b]];
                }
                coverage[[global, gt]] = seen + 1;
            }
        }
    }

    if rule == MergeRule::Average {
        for spk in 0..num_speakers {
            for t in 0..num_frames {
                let c = coverage[[spk, t]];
                if c > 1 {
                    let inv = 1.0 / c as f64;
                    for b in 0..num_bins {
                        sum[[spk, t, b]] *= inv;
                    }
                }
            }
        }
    }
    Ok(GlobalTFMask { masks: sum, coverage })
}

/// Applies each speaker's global mask to the mixture STFT and inverts.
/// Output waveforms have exactly the mixture's length.
pub fn reconstruct(gm: &GlobalTFMask, mix: &ComplexSpectrogram) -> Result<Vec<Waveform>> {
    let (n, t, f) = gm.masks.dim();
    if (t, f) != mix.bins.dim() {
        return Err(shape_mismatch(
            format!("{:?}", mix.bins.dim()),
            format!("({t}, {f})"),
        ));
    }
    (0..n)
        .map(|spk| {
            let masked = apply_mask(gm.masks.index_axis(Axis(0), spk), mix)?;
            istft(&masked)
        })
        .collect()
}

fn resolve_workers(cfg: &PipelineConfig, num_windows: usize) -> Result<usize> {
    let from_env = match std::env::var("DCFDS_WORKERS") {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| {
            Error::Config(format!("DCFDS_WORKERS must be a positive integer, got `{v}`"))
        })?),
        Err(_) => None,
    };
    let w = from_env
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if w == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    Ok(w.min(num_windows.max(1)))
}

/// Clean-source STFTs aligned to a window's compacted rows.
fn window_sources(
    source_specs: &[ComplexSpectrogram],
    wp: &WindowPrior,
    im: &IndexMap,
    num_bins: usize,
) -> Result<Array3<Complex64>> {
    let l = wp.window_len();
    let mut out = Array3::<Complex64>::zeros((wp.max_speakers(), l, num_bins));
    for (row, global) in im.iter() {
        let spec = source_specs.get(global).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "oracle decoding: prior names speaker {global} but only {} sources were given",
                source_specs.len()
            ))
        })?;
        out.index_axis_mut(Axis(0), row)
            .assign(&slice_frames(&spec.bins, wp.start_frame, l));
    }
    Ok(out)
}

/// One full sweep: SWSP, per-window chain, stitching, reconstruction.
fn decode_once(
    mix_spec: &ComplexSpectrogram,
    mag: &MagnitudeSpectrogram,
    feats: &FeatureMatrix,
    prior: &GlobalPrior,
    source_specs: Option<&[ComplexSpectrogram]>,
    cfg: &PipelineConfig,
) -> Result<SeparationResult> {
    let t_frames = mix_spec.num_frames();
    let f_bins = mix_spec.num_bins();
    let prior = prior.resized_frames(t_frames);
    let windows = swsp(&prior, &cfg.windowing)?;
    let need_sources = cfg.separation.needs_sources()
        || (cfg.se_stages > 0 && cfg.enhancement.needs_sources());
    if need_sources && source_specs.is_none() {
        return Err(Error::InvalidArgument(
            "oracle estimator kinds require clean sources for decoding".into(),
        ));
    }

    let jobs: Vec<(usize, &(WindowPrior, IndexMap))> = windows.iter().enumerate().collect();
    let workers = resolve_workers(cfg, jobs.len())?;
    let mut slots: Vec<Option<Result<WindowMask>>> = (0..jobs.len()).map(|_| None).collect();

    let run_one = |wp: &WindowPrior, im: &IndexMap| -> Result<WindowMask> {
        let l = wp.window_len();
        let inputs = WindowInputs {
            mix: slice_frames(&mix_spec.bins, wp.start_frame, l),
            mag: MagnitudeSpectrogram {
                mags: slice_frames(&mag.mags, wp.start_frame, l),
                frame_len: mag.frame_len,
                hop: mag.hop,
                sample_rate: mag.sample_rate,
            },
            feats: Some(FeatureMatrix { feats: slice_frames(&feats.feats, wp.start_frame, l) }),
            sources: match source_specs {
                Some(specs) if need_sources => Some(window_sources(specs, wp, im, f_bins)?),
                _ => None,
            },
        };
        Ok(WindowMask {
            mask: run_window(&inputs, wp, im, cfg)?,
            map: im.clone(),
            window_id: wp.window_id,
            start_frame: wp.start_frame,
            valid_len: wp.valid_len,
        })
    };

    if workers <= 1 {
        for (idx, (wp, im)) in &jobs {
            slots[*idx] = Some(run_one(wp, im));
        }
    } else {
        let slot_refs: Vec<std::sync::Mutex<&mut Option<Result<WindowMask>>>> =
            slots.iter_mut().map(std::sync::Mutex::new).collect();
        std::thread::scope(|scope| {
            for worker in 0..workers {
                let jobs = &jobs;
                let slot_refs = &slot_refs;
                let run_one = &run_one;
                scope.spawn(move || {
                    for (idx, (wp, im)) in jobs.iter().skip(worker).step_by(workers) {
                        let out = run_one(wp, im);
                        **slot_refs[*idx].lock().unwrap() = Some(out);
                    }
                });
            }
        });
    }

    let mut masks = Vec::with_capacity(slots.len());
    for s in slots {
        masks.push(s.expect("every window was scheduled")?);
    }
    let global_mask = sis_stitch(
        &masks,
        prior.num_speakers(),
        t_frames,
        f_bins,
        cfg.overlap_merge,
    )?;
    let waveforms = reconstruct(&global_mask, mix_spec)?;
    let window_maps = windows
        .iter()
        .map(|(w, m)| WindowMapEntry::from_parts(w, m))
        .collect();
    Ok(SeparationResult { waveforms, global_mask, prior, window_maps })
}

/// Re-aligns a refreshed prior's speakers to the oracle source order by
/// maximizing per-speaker frame overlap against the original prior.
fn align_prior_to_sources(fresh: &GlobalPrior, original: &GlobalPrior) -> Result<GlobalPrior> {
    let frames = fresh.num_frames().min(original.num_frames());
    let mut overlap = Array2::<f64>::zeros((fresh.num_speakers(), original.num_speakers()));
    for i in 0..fresh.num_speakers() {
        for j in 0..original.num_speakers() {
            let mut c = 0u32;
            for t in 0..frames {
                c += (fresh.activity[[i, t]] & original.activity[[j, t]]) as u32;
            }
            overlap[[i, j]] = c as f64;
        }
    }
    let assign = crate::metrics::assignment::max_value(&overlap);
    let mut activity = Array2::<u8>::zeros((original.num_speakers(), fresh.num_frames()));
    for (i, j) in assign.iter().enumerate() {
        let j = j.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "re-clustering found {} speakers but the scenario has {} sources",
                fresh.num_speakers(),
                original.num_speakers()
            ))
        })?;
        for t in 0..fresh.num_frames() {
            activity[[j, t]] = fresh.activity[[i, t]];
        }
    }
    GlobalPrior::new(activity, fresh.frame_hop, original.speaker_ids.clone())
}

/// Full decoding: the windowed chain over the given prior, then the
/// configured number of re-clustering rounds, each refreshing the prior
/// from the separated streams and decoding again.
///
/// `oracle_sources` supplies per-speaker clean waveforms (in the prior's
/// speaker order) when any configured estimator is an oracle kind.
pub fn decode(
    mix: &Waveform,
    prior: &GlobalPrior,
    cfg: &PipelineConfig,
    oracle_sources: Option<&[Waveform]>,
) -> Result<DecodeOutput> {
    cfg.validate()?;
    let hop_secs = cfg.frame_hop_secs(mix.sample_rate());
    if ((prior.frame_hop - hop_secs) / hop_secs).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "prior frame hop {} s does not match the STFT hop {} s",
            prior.frame_hop, hop_secs
        )));
    }

    let mix_spec = stft(mix, cfg.stft.frame_len, cfg.stft.hop)?;
    let mag = magnitude(&mix_spec);
    let feats = compute_fbank(&mag, cfg.n_mels)?;
    let source_specs: Option<Vec<ComplexSpectrogram>> = match oracle_sources {
        Some(sources) => {
            for (i, s) in sources.iter().enumerate() {
                if s.len() != mix.len() {
                    return Err(Error::InvalidArgument(format!(
                        "oracle source {i} length {} != mixture length {}",
                        s.len(),
                        mix.len()
                    )));
                }
            }
            Some(
                sources
                    .iter()
                    .map(|s| stft(s, cfg.stft.frame_len, cfg.stft.hop))
                    .collect::<Result<_>>()?,
            )
        }
        None => None,
    };

    let mut result = decode_once(&mix_spec, &mag, &feats, prior, source_specs.as_deref(), cfg)?;
    let mut refreshed: Option<GlobalPrior> = None;

    for _ in 0..cfg.recluster_rounds {
        let fresh = crate::recluster::recluster(&result.waveforms, &cfg.recluster)?;
        // oracle estimators need the refreshed speakers aligned back onto
        // the source order; label-free estimators take the prior as-is
        let next_prior = if source_specs.is_some() {
            align_prior_to_sources(&fresh, &result.prior)?
        } else {
            fresh
        };
        result = decode_once(&mix_spec, &mag, &feats, &next_prior, source_specs.as_deref(), cfg)?;
        refreshed = Some(result.prior.clone());
    }

    Ok(DecodeOutput { result, refreshed_prior: refreshed })
}
