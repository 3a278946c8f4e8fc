//! Estimator contracts for the three neural stages of window decoding —
//! diarization (time masks), separation (time-frequency masks), and the
//! optional mask-enhancement stage — together with deterministic oracle
//! implementations, external-mask injection, and the joint training losses
//! with analytic gradients.
//!
//! No trainable model ships here. Oracles compute masks from the clean
//! sources, the `external-file` kind injects tensors produced elsewhere
//! (the replace-time-mask configuration), and the losses are pure
//! functions any external trainer can adopt.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcft;
use crate::error::{shape_mismatch, Error, Result};
use crate::priors::WindowPrior;
use crate::signal::{FeatureMatrix, MagnitudeSpectrogram, MASK_CEILING};

/// Clamp for predicted probabilities inside the cross-entropy, avoids log(0).
pub const BCE_EPS: f64 = 1e-7;

/// Per-speaker soft activity over the frames of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMask {
    /// speakers x frames, entries in [0, 1]
    pub probs: Array2<f64>,
}

impl TimeMask {
    /// Wraps probabilities, clamping into [0, 1] and rejecting non-finite entries.
    pub fn new(mut probs: Array2<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("time mask contains non-finite entries".into()));
        }
        probs.mapv_inplace(|p| p.clamp(0.0, 1.0));
        Ok(TimeMask { probs })
    }

    pub fn num_speakers(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.probs.ncols()
    }
}

/// Per-speaker soft masks over the time-frequency bins of one window.
///
/// Estimators produce entries in [0, `MASK_CEILING`]; the unclamped
/// complex-ratio oracle is the deliberate exception, kept for exact
/// reconstruction checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TFMask {
    /// speakers x frames x bins
    pub masks: Array3<f64>,
}

impl TFMask {
    pub fn new(masks: Array3<f64>) -> Result<Self> {
        if masks.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("T-F mask contains non-finite entries".into()));
        }
        Ok(TFMask { masks })
    }

    pub fn num_speakers(&self) -> usize {
        self.masks.dim().0
    }

    pub fn num_frames(&self) -> usize {
        self.masks.dim().1
    }

    pub fn num_bins(&self) -> usize {
        self.masks.dim().2
    }
}

/// Unit-norm (or all-zero padding) speaker embeddings for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        for (i, row) in vectors.rows().into_iter().enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm != 0.0 && (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "embedding row {i} has norm {norm}; rows must be unit-norm or all-zero"
                )));
            }
        }
        Ok(EmbeddingSet { vectors })
    }
}

/// Which stand-in produces a stage's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorConfig {
    /// Ground-truth activity cast to probabilities (diarization), or the
    /// magnitude-ratio ground truth (separation/enhancement).
    OracleBinary,
    /// Clean-to-mixture magnitude ratio, 0/0 := 0, clamped to the ceiling.
    OracleMagnitudeRatio,
    /// Real part of the clean/mixture complex ratio. `clamp: false` keeps
    /// raw values (possibly negative) for exact-reconstruction checks.
    OracleComplexRatio {
        #[serde(default = "default_true")]
        clamp: bool,
    },
    /// Oracle activity with each frame-speaker bit flipped independently at
    /// `flip_rate`, then optionally blurred along time.
    NoisyOracle {
        flip_rate: f64,
        #[serde(default)]
        blur_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Loads per-window tensors from `path` (`win<ID>_time.dcft` for time
    /// masks, `win<ID>_tf.dcft` for T-F masks). Injecting an externally
    /// produced time mask here replaces the joint model's diarization
    /// output at decode time.
    ExternalFile { path: PathBuf },
    /// Passes the previous stage's masks through unchanged (enhancement
    /// stage-count experiments).
    Identity,
}

fn default_true() -> bool {
    true
}

impl EstimatorConfig {
    pub fn needs_sources(&self) -> bool {
        matches!(
            self,
            EstimatorConfig::OracleBinary
                | EstimatorConfig::OracleMagnitudeRatio
                | EstimatorConfig::OracleComplexRatio { .. }
                | EstimatorConfig::NoisyOracle { .. }
        )
    }
}

/// Mixes a per-window stream index into a base seed so concurrent window
/// evaluation stays deterministic.
fn window_seed(base: u64, window_id: usize) -> u64 {
    base ^ (window_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn gaussian_blur_rows(m: &mut Array2<f64>, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let frames = m.ncols() as i64;
    for mut row in m.rows_mut() {
        let orig: Vec<f64> = row.to_vec();
        for t in 0..frames {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let src = (t + ki as i64 - radius).clamp(0, frames - 1) as usize;
                acc += k * orig[src];
            }
            row[t as usize] = acc / ksum;
        }
    }
}

/// Produces the per-speaker presence probabilities for one window.
///
/// Embeddings and acoustic features are part of the stage contract and are
/// consumed by real estimators; the deterministic stand-ins here derive
/// their output from the window prior alone.
pub fn diarize_window(
    prior: &WindowPrior,
    _emb: Option<&EmbeddingSet>,
    _feats: Option<&FeatureMatrix>,
    cfg: &EstimatorConfig,
) -> Result<TimeMask> {
    let shape = (prior.max_speakers(), prior.window_len());
    match cfg {
        EstimatorConfig::OracleBinary => TimeMask::new(prior.activity.mapv(|v| v as f64)),
        EstimatorConfig::NoisyOracle { flip_rate, blur_sigma, seed } => {
            if !(0.0..=1.0).contains(flip_rate) {
                return Err(Error::InvalidArgument(format!("flip_rate {flip_rate} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(window_seed(*seed, prior.window_id));
            let mut probs = prior.activity.mapv(|v| v as f64);
            for p in probs.iter_mut() {
                if rng.gen_bool(*flip_rate) {
                    *p = 1.0 - *p;
                }
            }
            gaussian_blur_rows(&mut probs, *blur_sigma);
            TimeMask::new(probs)
        }
        EstimatorConfig::ExternalFile { path } => {
            let file = window_tensor_path(path, prior.window_id, "time");
            let probs = dcft::read(&file)?.to_array2()?;
            if probs.dim() != shape {
                return Err(shape_mismatch(format!("{shape:?}"), format!("{:?}", probs.dim())));
            }
            TimeMask::new(probs)
        }
        other => Err(Error::InvalidArgument(format!(
            "estimator kind {other:?} cannot produce a time mask"
        ))),
    }
}

/// `<dir>/win<ID>_<stage>.dcft`
pub fn window_tensor_path(dir: &Path, window_id: usize, stage: &str) -> PathBuf {
    dir.join(format!("win{window_id:05}_{stage}.dcft"))
}

/// Replicates a time mask along a new trailing frequency axis.
pub fn dimension_extend(t: &TimeMask, num_bins: usize) -> Array3<f64> {
    let (n, l) = t.probs.dim();
    let mut out = Array3::<f64>::zeros((n, l, num_bins));
    for ((spk, frame), &p) in t.probs.indexed_iter() {
        out.slice_mut(ndarray::s![spk, frame, ..]).fill(p);
    }
    out
}

/// Stacks the broadcast time masks with the mixture magnitude: channels
/// `0..n` carry the masks, the final channel carries the magnitude.
pub fn concat_inputs(broadcast: &Array3<f64>, mag: &MagnitudeSpectrogram) -> Result<Array3<f64>> {
    let (n, l, f) = broadcast.dim();
    if mag.mags.dim() != (l, f) {
        return Err(shape_mismatch(format!("({l}, {f})"), format!("{:?}", mag.mags.dim())));
    }
    let mut out = Array3::<f64>::zeros((n + 1, l, f));
    out.slice_mut(ndarray::s![..n, .., ..]).assign(broadcast);
    out.slice_mut(ndarray::s![n, .., ..]).assign(&mag.mags);
    Ok(out)
}

fn oracle_tf_masks(
    kind: &EstimatorConfig,
    gate: ArrayView3<'_, f64>,
    mix: &Array2<Complex64>,
    sources: &Array3<Complex64>,
) -> Result<Array3<f64>> {
    let (n, l, f) = sources.dim();
    if mix.dim() != (l, f) {
        return Err(shape_mismatch(format!("({l}, {f})"), format!("{:?}", mix.dim())));
    }
    if gate.dim() != (n, l, f) {
        return Err(shape_mismatch(format!("({n}, {l}, {f})"), format!("{:?}", gate.dim())));
    }
    let mut masks = Array3::<f64>::zeros((n, l, f));
    for spk in 0..n {
        for t in 0..l {
            for b in 0..f {
                let z = mix[[t, b]];
                let s = sources[[spk, t, b]];
                let raw = match kind {
                    EstimatorConfig::OracleMagnitudeRatio | EstimatorConfig::OracleBinary => {
                        let denom = z.norm();
                        if denom == 0.0 {
                            0.0
                        } else {
                            (s.norm() / denom).clamp(0.0, MASK_CEILING)
                        }
                    }
                    EstimatorConfig::OracleComplexRatio { clamp } => {
                        if z.norm_sqr() == 0.0 {
                            0.0
                        } else {
                            let ratio = (s / z).re;
                            if *clamp {
                                ratio.clamp(0.0, MASK_CEILING)
                            } else {
                                ratio
                            }
                        }
                    }
                    _ => unreachable!("oracle_tf_masks called with non-oracle kind"),
                };
                masks[[spk, t, b]] = raw * gate[[spk, t, b]];
            }
        }
    }
    Ok(masks)
}

/// Maps the per-frame speaker distribution of the concatenated input to
/// per-speaker time-frequency masks.
///
/// Oracle kinds compute the clean-to-mixture ratio from `sources` (stacked
/// speaker STFTs aligned with the windowed rows) and gate it by the time
/// mask carried in the input channels, so the output honors the prior the
/// stage was guided with. The external-file kind injects a stored tensor.
pub fn separate_window(
    inputs: &Array3<f64>,
    mix: &Array2<Complex64>,
    sources: Option<&Array3<Complex64>>,
    window_id: usize,
    cfg: &EstimatorConfig,
) -> Result<TFMask> {
    let (channels, l, f) = inputs.dim();
    if channels < 2 {
        return Err(Error::InvalidArgument("concat input needs at least one mask channel".into()));
    }
    let n = channels - 1;
    match cfg {
        EstimatorConfig::OracleBinary
        | EstimatorConfig::OracleMagnitudeRatio
        | EstimatorConfig::OracleComplexRatio { .. } => {
            let sources = sources.ok_or_else(|| {
                Error::InvalidArgument("oracle separation kinds require clean sources".into())
            })?;
            let gate = inputs.slice(ndarray::s![..n, .., ..]);
            let masks = oracle_tf_masks(cfg, gate, mix, sources)?;
            TFMask::new(masks)
        }
        EstimatorConfig::ExternalFile { path } => {
            let file = window_tensor_path(path, window_id, "tf");
            let masks = dcft::read(&file)?.to_array3()?;
            if masks.dim() != (n, l, f) {
                return Err(shape_mismatch(
                    format!("({n}, {l}, {f})"),
                    format!("{:?}", masks.dim()),
                ));
            }
            TFMask::new(masks)
        }
        other => Err(Error::InvalidArgument(format!(
            "estimator kind {other:?} cannot produce separation masks"
        ))),
    }
}

/// Refines separation masks given the mixture magnitude. The stage shares
/// the separation stage's input/output shape contract, so it can be
/// applied repeatedly. Oracle kinds return the ground-truth ratio masks;
/// the identity kind passes `prev` through for stage-count experiments.
pub fn mimo_se_window(
    prev: &TFMask,
    mag: &MagnitudeSpectrogram,
    mix: &Array2<Complex64>,
    sources: Option<&Array3<Complex64>>,
    window_id: usize,
    cfg: &EstimatorConfig,
) -> Result<TFMask> {
    let (n, l, f) = prev.masks.dim();
    if mag.mags.dim() != (l, f) {
        return Err(shape_mismatch(format!("({l}, {f})"), format!("{:?}", mag.mags.dim())));
    }
    match cfg {
        EstimatorConfig::Identity => Ok(prev.clone()),
        EstimatorConfig::OracleBinary
        | EstimatorConfig::OracleMagnitudeRatio
        | EstimatorConfig::OracleComplexRatio { .. } => {
            let sources = sources.ok_or_else(|| {
                Error::InvalidArgument("oracle enhancement kinds require clean sources".into())
            })?;
            let kind = match cfg {
                EstimatorConfig::OracleBinary => &EstimatorConfig::OracleMagnitudeRatio,
                other => other,
            };
            // Unit gate: enhancement consumes masks, not the time prior.
            let gate = Array3::<f64>::ones((n, l, f));
            let masks = oracle_tf_masks(kind, gate.view(), mix, sources)?;
            TFMask::new(masks)
        }
        EstimatorConfig::ExternalFile { path } => {
            let file = window_tensor_path(path, window_id, "se");
            let masks = dcft::read(&file)?.to_array3()?;
            if masks.dim() != (n, l, f) {
                return Err(shape_mismatch(
                    format!("({n}, {l}, {f})"),
                    format!("{:?}", masks.dim()),
                ));
            }
            TFMask::new(masks)
        }
        other => Err(Error::InvalidArgument(format!(
            "estimator kind {other:?} cannot produce enhancement masks"
        ))),
    }
}

/// Mean binary cross-entropy over all speaker-frame cells, with the
/// analytic gradient with respect to the predictions.
///
/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logs.
pub fn bce_loss(pred: &TimeMask, label: &TimeMask) -> Result<(f64, Array2<f64>)> {
    if pred.probs.dim() != label.probs.dim() {
        return Err(shape_mismatch(
            format!("{:?}", label.probs.dim()),
            format!("{:?}", pred.probs.dim()),
        ));
    }
    let count = pred.probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros(pred.probs.dim());
    ndarray::Zip::from(&mut grad)
        .and(&pred.probs)
        .and(&label.probs)
        .for_each(|g, &p, &y| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            loss += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            *g = (p - y) / (p * (1.0 - p) * count);
        });
    Ok((loss / count, grad))
}

/// Mean absolute error over all mask cells, with the subgradient (zero at
/// exact ties).
pub fn mae_loss(pred: &TFMask, target: &TFMask) -> Result<(f64, Array3<f64>)> {
    if pred.masks.dim() != target.masks.dim() {
        return Err(shape_mismatch(
            format!("{:?}", target.masks.dim()),
            format!("{:?}", pred.masks.dim()),
        ));
    }
    let count = pred.masks.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array3::<f64>::zeros(pred.masks.dim());
    ndarray::Zip::from(&mut grad)
        .and(&pred.masks)
        .and(&target.masks)
        .for_each(|g, &p, &t| {
            let d = p - t;
            loss += d.abs();
            *g = if d == 0.0 { 0.0 } else { d.signum() / count };
        });
    Ok((loss / count, grad))
}

/// Weighted combination of the diarization and separation losses.
pub fn overall_loss(bce: f64, mae: f64, lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "loss weight must be nonnegative");
    lambda * bce + mae
}
