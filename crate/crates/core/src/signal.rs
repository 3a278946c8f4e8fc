//! STFT analysis/synthesis, magnitude extraction, mask application, mel
//! filterbank features, and WAV I/O.
//!
//! Analysis uses a periodic Hann window with reflect padding of half a
//! frame at each end. Synthesis is weighted overlap-add with per-sample
//! window-sum normalization, so `istft(stft(w))` reproduces every original
//! sample up to floating-point rounding.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::path::Path;
use std::sync::Arc;

use crate::error::{shape_mismatch, Error, Result};

/// Ratio masks can exceed 1 under destructive phase interference; clamping
/// bounds reconstruction blow-up.
pub const MASK_CEILING: f64 = 2.0;

/// Floor inside the log of the mel filterbank, avoids -inf on silence.
pub const FBANK_LOG_FLOOR: f64 = 1e-10;

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Wraps samples, rejecting NaN/Inf entries and a non-positive rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the sample range `[start, end)`, clamped to the signal length.
    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Waveform {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Complex STFT of a signal, frames x frequency bins, plus the framing
/// metadata needed for exact inversion.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub bins: Array2<Complex64>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// Original signal length in samples; synthesis trims back to this.
    pub orig_len: usize,
}

impl ComplexSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.bins.ncols()
    }

    /// Same framing metadata with different contents.
    pub fn with_bins(&self, bins: Array2<Complex64>) -> ComplexSpectrogram {
        ComplexSpectrogram {
            bins,
            frame_len: self.frame_len,
            hop: self.hop,
            sample_rate: self.sample_rate,
            orig_len: self.orig_len,
        }
    }
}

/// Entry-wise modulus of a complex spectrogram.
#[derive(Debug, Clone)]
pub struct MagnitudeSpectrogram {
    pub mags: Array2<f64>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

/// Log-mel feature matrix, frames x mel bands.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub feats: Array2<f64>,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.feats.nrows()
    }

    pub fn num_bands(&self) -> usize {
        self.feats.ncols()
    }
}

/// Periodic Hann window of the given length.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()))
        .collect()
}

/// Checks the squared-window constant-overlap-add condition at the given hop:
/// the cyclic sum of w^2 over hop-spaced shifts must be constant.
pub fn cola_valid(frame_len: usize, hop: usize) -> bool {
    if hop == 0 || hop > frame_len || !frame_len.is_multiple_of(hop) {
        return false;
    }
    let w = hann_window(frame_len);
    let steps = frame_len / hop;
    let mut sums = vec![0.0f64; hop];
    for (n, slot) in sums.iter_mut().enumerate() {
        for j in 0..steps {
            *slot += w[n + j * hop] * w[n + j * hop];
        }
    }
    let mean = sums.iter().sum::<f64>() / hop as f64;
    if mean <= 0.0 {
        return false;
    }
    sums.iter().all(|s| (s - mean).abs() / mean < 1e-10)
}

fn plan_fft(len: usize, inverse: bool) -> Arc<dyn rustfft::Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// Number of analysis frames produced for a signal of `len` samples.
///
/// The signal is reflect-padded by `frame_len / 2` at each end, then
/// zero-extended so the last frame lines up with the hop grid:
/// `T = ceil(len / hop) + 1`.
pub fn num_frames(len: usize, hop: usize) -> usize {
    len.div_ceil(hop) + 1
}

/// Forward STFT with a periodic Hann window.
pub fn stft(w: &Waveform, frame_len: usize, hop: usize) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    if hop == 0 || frame_len < hop {
        return Err(Error::InvalidArgument(format!(
            "require frame_len >= hop > 0, got frame_len={frame_len} hop={hop}"
        )));
    }
    if !cola_valid(frame_len, hop) {
        return Err(Error::InvalidArgument(format!(
            "window configuration frame_len={frame_len} hop={hop} is not COLA-valid"
        )));
    }
    // Waveform construction already rejects non-finite samples; re-check in
    // case the buffer came from unsafe/FFI paths.
    if let Some(idx) = w.samples().iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(idx));
    }

    let len = w.len();
    let pad = frame_len / 2;
    let t = num_frames(len, hop);
    let f_bins = frame_len / 2 + 1;
    let padded_len = pad + len + pad + frame_len; // generous tail, frames never run past it

    let mut padded = vec![0.0f64; padded_len];
    // reflect-pad: mirror around the first/last sample
    for (i, slot) in padded.iter_mut().take(pad).enumerate() {
        let src = (pad - i).min(len - 1);
        *slot = w.samples()[src];
    }
    padded[pad..pad + len].copy_from_slice(w.samples());
    for i in 0..pad {
        let src = len - 1 - (i + 1).min(len - 1);
        padded[pad + len + i] = w.samples()[src];
    }

    let window = hann_window(frame_len);
    let fft = plan_fft(frame_len, false);
    let mut bins = Array2::<Complex64>::zeros((t, f_bins));
    let mut buf = vec![Complex64::default(); frame_len];

    for frame in 0..t {
        let start = frame * hop;
        for i in 0..frame_len {
            buf[i] = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (fb, out) in bins.row_mut(frame).iter_mut().enumerate() {
            *out = buf[fb];
        }
    }

    Ok(ComplexSpectrogram {
        bins,
        frame_len,
        hop,
        sample_rate: w.sample_rate(),
        orig_len: len,
    })
}

/// Inverse STFT via weighted overlap-add with per-sample window-sum
/// normalization, trimmed back to the original signal length.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    let frame_len = s.frame_len;
    let hop = s.hop;
    if hop == 0 || frame_len < hop || !cola_valid(frame_len, hop) {
        return Err(Error::InvalidArgument(format!(
            "inconsistent framing metadata: frame_len={frame_len} hop={hop}"
        )));
    }
    let f_bins = frame_len / 2 + 1;
    if s.num_bins() != f_bins {
        return Err(shape_mismatch(
            format!("{f_bins} frequency bins"),
            format!("{}", s.num_bins()),
        ));
    }
    let t = s.num_frames();
    if t == 0 {
        return Err(Error::EmptyInput);
    }

    let window = hann_window(frame_len);
    let ifft = plan_fft(frame_len, true);
    let out_len = (t - 1) * hop + frame_len;
    let mut acc = vec![0.0f64; out_len];
    let mut wsum = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::default(); frame_len];
    let norm = 1.0 / frame_len as f64;

    for frame in 0..t {
        let row = s.bins.row(frame);
        buf[0] = row[0];
        for fb in 1..f_bins {
            buf[fb] = row[fb];
            // conjugate symmetry of a real signal's spectrum
            if fb != frame_len - fb {
                buf[frame_len - fb] = row[fb].conj();
            }
        }
        ifft.process(&mut buf);
        let start = frame * hop;
        for i in 0..frame_len {
            acc[start + i] += buf[i].re * norm * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }

    let pad = frame_len / 2;
    let len = s.orig_len;
    if pad + len > out_len {
        return Err(Error::InvalidArgument(format!(
            "inconsistent framing metadata: {t} frames cannot cover {len} samples"
        )));
    }
    let mut samples = Vec::with_capacity(len);
    for i in 0..len {
        let idx = pad + i;
        let v = if wsum[idx] > 1e-12 { acc[idx] / wsum[idx] } else { acc[idx] };
        samples.push(v);
    }
    Waveform::new(samples, s.sample_rate)
}

/// Entry-wise complex modulus.
pub fn magnitude(s: &ComplexSpectrogram) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram {
        mags: s.bins.mapv(|z| z.norm()),
        frame_len: s.frame_len,
        hop: s.hop,
        sample_rate: s.sample_rate,
    }
}

/// Entry-wise product of a real mask with a complex spectrogram. The phase
/// of the mixture is preserved.
pub fn apply_mask(mask: ArrayView2<'_, f64>, mix: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if mask.dim() != mix.bins.dim() {
        return Err(shape_mismatch(
            format!("{:?}", mix.bins.dim()),
            format!("{:?}", mask.dim()),
        ));
    }
    let mut bins = mix.bins.clone();
    ndarray::Zip::from(&mut bins).and(&mask).for_each(|z, &m| *z *= m);
    Ok(mix.with_bins(bins))
}

/// Rows `[start, start + len)` of a frame-major matrix, zero-filled where
/// the range runs past the end.
pub(crate) fn slice_frames<T: Clone + Default>(a: &Array2<T>, start: usize, len: usize) -> Array2<T> {
    let (rows, cols) = a.dim();
    let mut out = Array2::<T>::default((len, cols));
    if start < rows {
        let copy = len.min(rows - start);
        out.slice_mut(ndarray::s![..copy, ..])
            .assign(&a.slice(ndarray::s![start..start + copy, ..]));
    }
    out
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels` x `n_bins`, spanning 0..sample_rate/2.
pub fn mel_filterbank(n_mels: usize, n_bins: usize, frame_len: usize, sample_rate: u32) -> Array2<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / frame_len as f64;
    let mut fb = Array2::<f64>::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let w = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
    }
    fb
}

/// Center frequency (Hz) of each mel band for the given configuration.
pub fn mel_center_frequencies(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let mel_max = hz_to_mel(sample_rate as f64 / 2.0);
    (1..=n_mels)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Log mel-filtered power features, frames x `n_mels`.
pub fn compute_fbank(s: &MagnitudeSpectrogram, n_mels: usize) -> Result<FeatureMatrix> {
    let n_bins = s.mags.ncols();
    if n_mels == 0 {
        return Err(Error::InvalidArgument("n_mels must be >= 1".into()));
    }
    if n_mels > n_bins {
        return Err(Error::InvalidArgument(format!(
            "n_mels={n_mels} exceeds the {n_bins} available frequency bins"
        )));
    }
    let fb = mel_filterbank(n_mels, n_bins, s.frame_len, s.sample_rate);
    let power = s.mags.mapv(|m| m * m);
    let mel = power.dot(&fb.t());
    let feats = mel.mapv(|e| (e + FBANK_LOG_FLOOR).ln());
    Ok(FeatureMatrix { feats })
}

/// Reads a mono 16-bit PCM RIFF WAV file. Resampling is out of scope: a
/// file whose rate differs from `expected_rate` is rejected.
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "{}: expected 16-bit PCM samples",
            path.display()
        )));
    }
    if spec.sample_rate != expected_rate {
        return Err(Error::Format(format!(
            "{}: sample rate {} Hz does not match the expected {} Hz (resampling unsupported)",
            path.display(),
            spec.sample_rate,
            expected_rate
        )));
    }
    let samples: Vec<f64> = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<_, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a waveform as mono 16-bit PCM, clamping to [-1, 1).
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in w.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Waveform::new(samples, 16000).unwrap()
    }

    #[test]
    fn paper_framing_constants() {
        // 64 ms frame / 16 ms hop at 16 kHz
        let w = noise(16000, 1);
        let s = stft(&w, 1024, 256).unwrap();
        assert_eq!(s.frame_len, 1024);
        assert_eq!(s.hop, 256);
        assert_eq!(s.num_bins(), 513);
        assert_eq!(s.num_frames(), num_frames(16000, 256));
    }

    #[test]
    fn zero_waveform_gives_zero_spectrogram() {
        let w = Waveform::new(vec![0.0; 4096], 16000).unwrap();
        let s = stft(&w, 1024, 256).unwrap();
        assert!(s.bins.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn sine_energy_lands_in_expected_bin() {
        // pure 1 kHz sine, 1 s: energy concentrated at the bin nearest 1 kHz,
        // cross-checked per frame against a naive O(N^2) DFT oracle.
        let sr = 16000u32;
        let freq = 1000.0;
        let samples: Vec<f64> = (0..sr as usize)
            .map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / sr as f64).sin())
            .collect();
        let w = Waveform::new(samples.clone(), sr).unwrap();
        let frame_len = 1024;
        let hop = 256;
        let s = stft(&w, frame_len, hop).unwrap();
        let expect_bin = (freq * frame_len as f64 / sr as f64).round() as usize;

        let window = hann_window(frame_len);
        let pad = frame_len / 2;
        // interior frames only: fully inside the un-padded signal
        let first = pad / hop + 1;
        let last = (w.len() - frame_len) / hop;
        for frame in (first..last).step_by(7) {
            let start = frame * hop - pad;
            // naive DFT of the windowed frame
            let mut best_bin = 0;
            let mut best_mag = -1.0;
            for bin in 0..frame_len / 2 + 1 {
                let mut acc = Complex64::default();
                for n in 0..frame_len {
                    let ang = -2.0 * std::f64::consts::PI * bin as f64 * n as f64 / frame_len as f64;
                    acc += Complex64::from_polar(samples[start + n] * window[n], ang);
                }
                if acc.norm() > best_mag {
                    best_mag = acc.norm();
                    best_bin = bin;
                }
                // oracle agrees with the FFT entry-wise
                let got = s.bins[[frame, bin]];
                assert!(
                    (acc - got).norm() < 1e-6 * (1.0 + acc.norm()),
                    "frame {frame} bin {bin}: oracle {acc} vs fft {got}"
                );
            }
            assert_eq!(best_bin, expect_bin, "frame {frame}");
            let row = s.bins.row(frame);
            let fft_argmax = (0..row.len()).max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm())).unwrap();
            assert_eq!(fft_argmax, expect_bin);
        }
    }

    #[test]
    fn stft_rejects_bad_inputs() {
        let empty = Waveform::new(vec![], 16000).unwrap();
        assert!(matches!(stft(&empty, 1024, 256), Err(Error::EmptyInput)));
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
        let w = noise(4096, 2);
        assert!(stft(&w, 256, 512).is_err()); // hop > frame_len
        assert!(stft(&w, 1024, 0).is_err());
        assert!(stft(&w, 1024, 300).is_err()); // not COLA at this hop
    }

    #[test]
    fn cola_round_trip_white_noise() {
        let w = noise(16000 + 123, 3);
        let s = stft(&w, 1024, 256).unwrap();
        let back = istft(&s).unwrap();
        assert_eq!(back.len(), w.len());
        let max_err = w
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "max reconstruction error {max_err}");
    }

    #[test]
    fn round_trip_preserves_length_on_long_signal() {
        // 6 minutes at 16 kHz; length bookkeeping from the framing formulas
        let len = 6 * 60 * 16000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let w = Waveform::new(samples, 16000).unwrap();
        let s = stft(&w, 1024, 256).unwrap();
        assert_eq!(s.num_frames(), len / 256 + 1);
        let back = istft(&s).unwrap();
        assert_eq!(back.len(), len);
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let s = ComplexSpectrogram {
            bins: Array2::zeros((40, 513)),
            frame_len: 1024,
            hop: 256,
            sample_rate: 16000,
            orig_len: 4000,
        };
        let w = istft(&s).unwrap();
        assert_eq!(w.len(), 4000);
        assert!(w.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn istft_rejects_inconsistent_metadata() {
        let w = noise(4096, 5);
        let mut s = stft(&w, 1024, 256).unwrap();
        s.hop = 300;
        assert!(istft(&s).is_err());
        let mut s2 = stft(&w, 1024, 256).unwrap();
        s2.orig_len = 10_000_000;
        assert!(istft(&s2).is_err());
    }

    #[test]
    fn stft_linearity() {
        let x = noise(8000, 6);
        let y = noise(8000, 7);
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = x
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(xs, ys)| a * xs + b * ys)
            .collect();
        let combo = Waveform::new(combo, 16000).unwrap();
        let sx = stft(&x, 1024, 256).unwrap();
        let sy = stft(&y, 1024, 256).unwrap();
        let sc = stft(&combo, 1024, 256).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        ndarray::Zip::from(&sc.bins).and(&sx.bins).and(&sy.bins).for_each(|&c, &xb, &yb| {
            num += (c - (xb * a + yb * b)).norm_sqr();
            den += c.norm_sqr();
        });
        assert!((num / den).sqrt() < 1e-9);
    }

    #[test]
    fn magnitude_examples() {
        let mut bins = Array2::<Complex64>::zeros((2, 3));
        bins[[0, 0]] = Complex64::new(3.0, 4.0);
        let s = ComplexSpectrogram { bins, frame_len: 4, hop: 2, sample_rate: 16000, orig_len: 4 };
        let m = magnitude(&s);
        assert_eq!(m.mags[[0, 0]], 5.0);
        assert_eq!(m.mags[[1, 2]], 0.0);
    }

    #[test]
    fn magnitude_matches_formula_oracle() {
        let w = noise(4096, 8);
        let s = stft(&w, 1024, 256).unwrap();
        let m = magnitude(&s);
        for (z, &mag) in s.bins.iter().zip(m.mags.iter()) {
            let oracle = (z.re * z.re + z.im * z.im).sqrt();
            assert!((mag - oracle).abs() <= 1e-15 * (1.0 + oracle));
        }
    }

    #[test]
    fn identity_and_zero_masks() {
        let w = noise(4096, 9);
        let s = stft(&w, 1024, 256).unwrap();
        let ones = Array2::<f64>::ones(s.bins.dim());
        let masked = apply_mask(ones.view(), &s).unwrap();
        assert_eq!(masked.bins, s.bins);
        let zeros = Array2::<f64>::zeros(s.bins.dim());
        let silent = apply_mask(zeros.view(), &s).unwrap();
        assert!(silent.bins.iter().all(|z| z.norm() == 0.0));
        let bad = Array2::<f64>::ones((3, 3));
        assert!(apply_mask(bad.view(), &s).is_err());
    }

    #[test]
    fn mask_magnitude_commutes() {
        let w = noise(4096, 10);
        let s = stft(&w, 1024, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mask = Array2::from_shape_fn(s.bins.dim(), |_| rng.gen_range(0.0..MASK_CEILING));
        let lhs = magnitude(&apply_mask(mask.view(), &s).unwrap());
        let rhs = &mask * &magnitude(&s).mags;
        for (a, b) in lhs.mags.iter().zip(rhs.iter()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn larger_masks_never_decrease_magnitude() {
        let w = noise(4096, 12);
        let s = stft(&w, 1024, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m1 = Array2::from_shape_fn(s.bins.dim(), |_| rng.gen_range(0.0..1.0));
        let m2 = &m1 + 0.25;
        let g1 = magnitude(&apply_mask(m1.view(), &s).unwrap());
        let g2 = magnitude(&apply_mask(m2.view(), &s).unwrap());
        assert!(g1.mags.iter().zip(g2.mags.iter()).all(|(a, b)| b >= a));
    }

    #[test]
    fn fbank_shapes_and_floor() {
        let w = Waveform::new(vec![0.0; 8192], 16000).unwrap();
        let s = stft(&w, 1024, 256).unwrap();
        let m = magnitude(&s);
        let f = compute_fbank(&m, 40).unwrap();
        assert_eq!(f.num_bands(), 40);
        assert_eq!(f.num_frames(), s.num_frames());
        let floor = FBANK_LOG_FLOOR.ln();
        assert!(f.feats.iter().all(|&v| (v - floor).abs() < 1e-12));
        assert!(compute_fbank(&m, 514).is_err());
        assert!(compute_fbank(&m, 0).is_err());
    }

    #[test]
    fn fbank_tone_hits_matching_band() {
        // single tone: the argmax band's center frequency is nearest the tone
        let sr = 16000u32;
        for freq in [500.0, 1200.0, 3000.0] {
            let samples: Vec<f64> = (0..sr as usize / 2)
                .map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / sr as f64).sin())
                .collect();
            let w = Waveform::new(samples, sr).unwrap();
            let s = stft(&w, 1024, 256).unwrap();
            let f = compute_fbank(&magnitude(&s), 40).unwrap();
            let mid = f.num_frames() / 2;
            let row = f.feats.row(mid);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            let centers = mel_center_frequencies(40, sr);
            let expected = (0..centers.len())
                .min_by(|&a, &b| (centers[a] - freq).abs().total_cmp(&(centers[b] - freq).abs()))
                .unwrap();
            assert!(
                (argmax as i64 - expected as i64).abs() <= 1,
                "freq {freq}: argmax band {argmax}, oracle band {expected}"
            );
        }
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let w = noise(5000, 14);
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path, 16000).unwrap();
        assert_eq!(back.len(), w.len());
        let max_err = w
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1.0 / 32768.0 + 1e-9, "quantization error {max_err}");
        assert!(read_wav(&path, 8000).is_err());
    }
}
