//! C ABI for the dcfds separation pipeline.
//!
//! Conventions: objects are opaque handles created and freed by this
//! library; every fallible call returns a `DcfdsStatus` and leaves a
//! human-readable message retrievable with `dcfds_last_error`; outputs
//! are written through out-pointers only on `DCFDS_STATUS_OK`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use dcfds::config::{config_from_json, load_config};
use dcfds::error::Error;
use dcfds::metrics::{cpwer, tcpwer, TranscriptSet};
use dcfds::pipeline::{decode, DecodeOutput, PipelineConfig};
use dcfds::priors::{prior_from_rttm, prior_to_rttm, GlobalPrior};
use dcfds::signal::{read_wav, write_wav, Waveform};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcfdsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Runtime = 6,
}

/// Mono waveform handle.
pub struct DcfdsWaveform {
    inner: Waveform,
}

/// Global diarization prior handle.
pub struct DcfdsPrior {
    inner: GlobalPrior,
}

/// Pipeline configuration handle.
pub struct DcfdsConfig {
    inner: PipelineConfig,
}

/// Decoding output handle: separated streams plus the priors involved.
pub struct DcfdsResult {
    inner: DecodeOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(e: &Error) -> DcfdsStatus {
    match e {
        Error::Io(_) | Error::Wav(_) => DcfdsStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Format(_) => DcfdsStatus::Parse,
        Error::Config(_) | Error::InvalidArgument(_) | Error::EmptyInput | Error::NonFinite(_) => {
            DcfdsStatus::InvalidArgument
        }
        Error::ShapeMismatch { .. } => DcfdsStatus::Runtime,
    }
}

fn fail(e: Error) -> DcfdsStatus {
    let code = status_of(&e);
    set_error(&e.to_string());
    code
}

/// Runs a closure, translating panics and errors into statuses.
fn guarded(f: impl FnOnce() -> Result<DcfdsStatus, Error>) -> DcfdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_error("internal panic");
            DcfdsStatus::Runtime
        }
    }
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, Error> {
    if ptr.is_null() {
        return Err(Error::InvalidArgument("null path".into()));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, Error> {
    if ptr.is_null() {
        return Err(Error::InvalidArgument("null string".into()));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Error::InvalidArgument("string is not valid UTF-8".into()))
}

/// Copies the message of the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `cap`). Returns the full message
/// length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn dcfds_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Frees a string previously returned by this library.
///
/// # Safety
/// `s` must come from a dcfds function and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn dcfds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- waveforms -----------------------------------------------------------

/// Reads a mono 16-bit PCM WAV at the expected sample rate.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_from_wav(
    path: *const c_char,
    expected_rate: u32,
    out: *mut *mut DcfdsWaveform,
) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        let p = path_arg(path)?;
        let w = read_wav(&p, expected_rate)?;
        *out = Box::into_raw(Box::new(DcfdsWaveform { inner: w }));
        Ok(DcfdsStatus::Ok)
    })
}

/// Wraps a sample buffer (copied) as a waveform.
///
/// # Safety
/// `samples` points to `len` readable doubles; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_from_samples(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut DcfdsWaveform,
) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() || (samples.is_null() && len > 0) {
            return Err(Error::InvalidArgument("null pointer".into()));
        }
        let buf = std::slice::from_raw_parts(samples, len).to_vec();
        let w = Waveform::new(buf, sample_rate)?;
        *out = Box::into_raw(Box::new(DcfdsWaveform { inner: w }));
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `w` is a live waveform handle.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_len(w: *const DcfdsWaveform) -> usize {
    if w.is_null() {
        return 0;
    }
    (*w).inner.len()
}

/// # Safety
/// `w` is a live waveform handle.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_sample_rate(w: *const DcfdsWaveform) -> u32 {
    if w.is_null() {
        return 0;
    }
    (*w).inner.sample_rate()
}

/// Copies up to `cap` samples into `buf`; returns the signal length.
///
/// # Safety
/// `w` is live; `buf` points to `cap` writable doubles or is null.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_copy_samples(
    w: *const DcfdsWaveform,
    buf: *mut f64,
    cap: usize,
) -> usize {
    if w.is_null() {
        return 0;
    }
    let samples = (*w).inner.samples();
    if !buf.is_null() {
        let n = samples.len().min(cap);
        std::ptr::copy_nonoverlapping(samples.as_ptr(), buf, n);
    }
    samples.len()
}

/// Writes the waveform as mono 16-bit PCM.
///
/// # Safety
/// `w` is live; `path` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_write_wav(
    w: *const DcfdsWaveform,
    path: *const c_char,
) -> DcfdsStatus {
    guarded(|| {
        if w.is_null() {
            return Err(Error::InvalidArgument("null waveform".into()));
        }
        write_wav(&path_arg(path)?, &(*w).inner)?;
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `w` came from this library and is freed exactly once.
#[no_mangle]
pub unsafe extern "C" fn dcfds_waveform_free(w: *mut DcfdsWaveform) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

// ---- priors ---------------------------------------------------------------

/// Parses an RTTM document into a frame-quantized prior.
///
/// # Safety
/// `text` is NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn dcfds_prior_from_rttm_text(
    text: *const c_char,
    frame_hop_secs: f64,
    out: *mut *mut DcfdsPrior,
) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        let prior = prior_from_rttm(str_arg(text)?, frame_hop_secs)?;
        *out = Box::into_raw(Box::new(DcfdsPrior { inner: prior }));
        Ok(DcfdsStatus::Ok)
    })
}

/// Reads an RTTM file into a frame-quantized prior.
///
/// # Safety
/// `path` is NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn dcfds_prior_from_rttm_file(
    path: *const c_char,
    frame_hop_secs: f64,
    out: *mut *mut DcfdsPrior,
) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        let text = std::fs::read_to_string(path_arg(path)?)?;
        let prior = prior_from_rttm(&text, frame_hop_secs)?;
        *out = Box::into_raw(Box::new(DcfdsPrior { inner: prior }));
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `p` is a live prior handle.
#[no_mangle]
pub unsafe extern "C" fn dcfds_prior_num_speakers(p: *const DcfdsPrior) -> usize {
    if p.is_null() {
        return 0;
    }
    (*p).inner.num_speakers()
}

/// # Safety
/// `p` is a live prior handle.
#[no_mangle]
pub unsafe extern "C" fn dcfds_prior_num_frames(p: *const DcfdsPrior) -> usize {
    if p.is_null() {
        return 0;
    }
    (*p).inner.num_frames()
}

/// Renders the prior as RTTM at `path` with the given recording id.
///
/// # Safety
/// `p` is live; `path` and `file_id` are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dcfds_prior_write_rttm(
    p: *const DcfdsPrior,
    file_id: *const c_char,
    path: *const c_char,
) -> DcfdsStatus {
    guarded(|| {
        if p.is_null() {
            return Err(Error::InvalidArgument("null prior".into()));
        }
        let text = prior_to_rttm(&(*p).inner, str_arg(file_id)?);
        std::fs::write(path_arg(path)?, text)?;
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `p` came from this library and is freed exactly once.
#[no_mangle]
pub unsafe extern "C" fn dcfds_prior_free(p: *mut DcfdsPrior) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// ---- configuration ---------------------------------------------------------

/// Default pipeline configuration.
///
/// # Safety
/// `out` is a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn dcfds_config_default(out: *mut *mut DcfdsConfig) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        *out = Box::into_raw(Box::new(DcfdsConfig { inner: PipelineConfig::default() }));
        Ok(DcfdsStatus::Ok)
    })
}

/// Parses a config JSON document (defaults applied, unknown keys rejected).
///
/// # Safety
/// `json` is NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn dcfds_config_from_json(
    json: *const c_char,
    out: *mut *mut DcfdsConfig,
) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        let cfg = config_from_json(str_arg(json)?)?;
        *out = Box::into_raw(Box::new(DcfdsConfig { inner: cfg }));
        Ok(DcfdsStatus::Ok)
    })
}

/// Loads a config JSON file.
///
/// # Safety
/// `path` is NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn dcfds_config_from_file(
    path: *const c_char,
    out: *mut *mut DcfdsConfig,
) -> DcfdsStatus {
    guarded(|| {
        if out.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        let cfg = load_config(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DcfdsConfig { inner: cfg }));
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `c` came from this library and is freed exactly once.
#[no_mangle]
pub unsafe extern "C" fn dcfds_config_free(c: *mut DcfdsConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// ---- decoding ---------------------------------------------------------------

fn read_oracle_dir(dir: &Path, rate: u32) -> Result<Vec<Waveform>, Error> {
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
    paths.iter().map(|p| read_wav(p, rate)).collect()
}

/// Separates a mixture guided by a diarization prior. `oracle_dir` may be
/// null unless the configuration uses oracle estimator kinds; when given,
/// it must hold clean per-speaker `spk<NN>.wav` files.
///
/// # Safety
/// All handles are live; `oracle_dir` is null or NUL-terminated; `out` is
/// a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn dcfds_decode(
    mix: *const DcfdsWaveform,
    prior: *const DcfdsPrior,
    config: *const DcfdsConfig,
    oracle_dir: *const c_char,
    out: *mut *mut DcfdsResult,
) -> DcfdsStatus {
    guarded(|| {
        if mix.is_null() || prior.is_null() || config.is_null() || out.is_null() {
            return Err(Error::InvalidArgument("null argument".into()));
        }
        let mix = &(*mix).inner;
        let oracle = if oracle_dir.is_null() {
            None
        } else {
            Some(read_oracle_dir(&path_arg(oracle_dir)?, mix.sample_rate())?)
        };
        let output = decode(mix, &(*prior).inner, &(*config).inner, oracle.as_deref())?;
        *out = Box::into_raw(Box::new(DcfdsResult { inner: output }));
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `r` is a live result handle.
#[no_mangle]
pub unsafe extern "C" fn dcfds_result_num_speakers(r: *const DcfdsResult) -> usize {
    if r.is_null() {
        return 0;
    }
    (*r).inner.result.waveforms.len()
}

/// Copies one separated stream out as a new waveform handle.
///
/// # Safety
/// `r` is live; `out` is a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn dcfds_result_waveform(
    r: *const DcfdsResult,
    index: usize,
    out: *mut *mut DcfdsWaveform,
) -> DcfdsStatus {
    guarded(|| {
        if r.is_null() || out.is_null() {
            return Err(Error::InvalidArgument("null argument".into()));
        }
        let waveforms = &(*r).inner.result.waveforms;
        let w = waveforms.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "stream {index} out of range ({} streams)",
                waveforms.len()
            ))
        })?;
        *out = Box::into_raw(Box::new(DcfdsWaveform { inner: w.clone() }));
        Ok(DcfdsStatus::Ok)
    })
}

/// Copies the refreshed prior out of a decode that ran re-clustering.
/// Fails with `INVALID_ARGUMENT` when no re-clustering round ran.
///
/// # Safety
/// `r` is live; `out` is a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn dcfds_result_refreshed_prior(
    r: *const DcfdsResult,
    out: *mut *mut DcfdsPrior,
) -> DcfdsStatus {
    guarded(|| {
        if r.is_null() || out.is_null() {
            return Err(Error::InvalidArgument("null argument".into()));
        }
        let prior = (*r)
            .inner
            .refreshed_prior
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("decode ran no re-clustering round".into()))?;
        *out = Box::into_raw(Box::new(DcfdsPrior { inner: prior.clone() }));
        Ok(DcfdsStatus::Ok)
    })
}

/// Writes per-speaker WAVs (`spk<NN>.wav`) and the final prior RTTM into
/// a directory, creating it if needed.
///
/// # Safety
/// `r` is live; `dir` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dcfds_result_write_dir(
    r: *const DcfdsResult,
    dir: *const c_char,
) -> DcfdsStatus {
    guarded(|| {
        if r.is_null() {
            return Err(Error::InvalidArgument("null result".into()));
        }
        let dir = path_arg(dir)?;
        std::fs::create_dir_all(&dir)?;
        let output = &(*r).inner;
        for (i, w) in output.result.waveforms.iter().enumerate() {
            write_wav(&dir.join(format!("spk{i:02}.wav")), w)?;
        }
        let final_prior = output.refreshed_prior.as_ref().unwrap_or(&output.result.prior);
        std::fs::write(dir.join("prior.rttm"), prior_to_rttm(final_prior, "decode"))?;
        Ok(DcfdsStatus::Ok)
    })
}

/// # Safety
/// `r` came from this library and is freed exactly once.
#[no_mangle]
pub unsafe extern "C" fn dcfds_result_free(r: *mut DcfdsResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

// ---- metrics ----------------------------------------------------------------

/// Scores hypothesis transcripts against references (both JSON files) and
/// returns a JSON report string (`cpwer`, `tcpwer`) to free with
/// `dcfds_string_free`.
///
/// # Safety
/// Paths are NUL-terminated; `out_json` is a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn dcfds_evaluate_transcripts(
    ref_path: *const c_char,
    hyp_path: *const c_char,
    collar_secs: f64,
    out_json: *mut *mut c_char,
) -> DcfdsStatus {
    guarded(|| {
        if out_json.is_null() {
            return Err(Error::InvalidArgument("null out-pointer".into()));
        }
        let reference = TranscriptSet::from_json(&std::fs::read_to_string(path_arg(ref_path)?)?)?;
        let hypothesis = TranscriptSet::from_json(&std::fs::read_to_string(path_arg(hyp_path)?)?)?;
        let report = serde_json::json!({
            "cpwer": cpwer(&reference, &hypothesis)?,
            "tcpwer": tcpwer(&reference, &hypothesis, collar_secs)?,
            "collar": collar_secs,
        });
        let s = CString::new(report.to_string())
            .map_err(|_| Error::InvalidArgument("report contained NUL".into()))?;
        *out_json = s.into_raw();
        Ok(DcfdsStatus::Ok)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn c_string(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn waveform_round_trip_through_the_abi() {
        let samples: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.01).sin() * 0.4).collect();
        let mut handle: *mut DcfdsWaveform = ptr::null_mut();
        let status =
            unsafe { dcfds_waveform_from_samples(samples.as_ptr(), samples.len(), 16000, &mut handle) };
        assert_eq!(status, DcfdsStatus::Ok);
        assert_eq!(unsafe { dcfds_waveform_len(handle) }, 4000);
        assert_eq!(unsafe { dcfds_waveform_sample_rate(handle) }, 16000);

        let mut back = vec![0.0f64; 4000];
        let n = unsafe { dcfds_waveform_copy_samples(handle, back.as_mut_ptr(), back.len()) };
        assert_eq!(n, 4000);
        assert_eq!(back, samples);

        let dir = tempfile::tempdir().unwrap();
        let path = c_string(dir.path().join("t.wav").to_str().unwrap());
        assert_eq!(unsafe { dcfds_waveform_write_wav(handle, path.as_ptr()) }, DcfdsStatus::Ok);
        let mut read_back: *mut DcfdsWaveform = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_waveform_from_wav(path.as_ptr(), 16000, &mut read_back) },
            DcfdsStatus::Ok
        );
        assert_eq!(unsafe { dcfds_waveform_len(read_back) }, 4000);
        unsafe {
            dcfds_waveform_free(handle);
            dcfds_waveform_free(read_back);
        }
    }

    #[test]
    fn non_finite_samples_are_rejected_with_message() {
        let samples = [0.1, f64::NAN];
        let mut handle: *mut DcfdsWaveform = ptr::null_mut();
        let status =
            unsafe { dcfds_waveform_from_samples(samples.as_ptr(), samples.len(), 16000, &mut handle) };
        assert_eq!(status, DcfdsStatus::InvalidArgument);
        let mut buf = vec![0i8; 256];
        let len = unsafe { dcfds_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(len > 0);
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert!(msg.contains("non-finite"), "{msg}");
    }

    #[test]
    fn prior_text_round_trip() {
        let rttm = c_string("SPEAKER rec 1 0.50 1.00 <NA> <NA> alice <NA> <NA>\n");
        let mut prior: *mut DcfdsPrior = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_prior_from_rttm_text(rttm.as_ptr(), 0.016, &mut prior) },
            DcfdsStatus::Ok
        );
        assert_eq!(unsafe { dcfds_prior_num_speakers(prior) }, 1);
        assert!(unsafe { dcfds_prior_num_frames(prior) } > 0);
        let dir = tempfile::tempdir().unwrap();
        let out = c_string(dir.path().join("p.rttm").to_str().unwrap());
        let id = c_string("rec");
        assert_eq!(
            unsafe { dcfds_prior_write_rttm(prior, id.as_ptr(), out.as_ptr()) },
            DcfdsStatus::Ok
        );
        unsafe { dcfds_prior_free(prior) };

        let bad = c_string("not rttm\n");
        let mut nothing: *mut DcfdsPrior = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_prior_from_rttm_text(bad.as_ptr(), 0.016, &mut nothing) },
            DcfdsStatus::Parse
        );
    }

    #[test]
    fn config_parsing_statuses() {
        let mut cfg: *mut DcfdsConfig = ptr::null_mut();
        assert_eq!(unsafe { dcfds_config_default(&mut cfg) }, DcfdsStatus::Ok);
        unsafe { dcfds_config_free(cfg) };

        let good = c_string(r#"{"window_s": 3, "n_w": 3}"#);
        let mut cfg: *mut DcfdsConfig = ptr::null_mut();
        assert_eq!(unsafe { dcfds_config_from_json(good.as_ptr(), &mut cfg) }, DcfdsStatus::Ok);
        unsafe { dcfds_config_free(cfg) };

        let bad = c_string(r#"{"n_w": 0}"#);
        let mut cfg: *mut DcfdsConfig = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_config_from_json(bad.as_ptr(), &mut cfg) },
            DcfdsStatus::InvalidArgument
        );
    }

    #[test]
    fn decode_through_the_abi() {
        use dcfds::sim::{generate, ScenarioSpec, SourceKind};
        let gt = generate(&ScenarioSpec {
            n_speakers: 2,
            duration_s: 8.0,
            target_overlap: 0.2,
            noise_snr_db: None,
            seed: 55,
            source_kind: SourceKind::Multitone,
            stft_frame_len: 1024,
            stft_hop: 256,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (i, src) in gt.sources.iter().enumerate() {
            write_wav(&dir.path().join(format!("spk{i:02}.wav")), src).unwrap();
        }

        let mut mix: *mut DcfdsWaveform = ptr::null_mut();
        let samples = gt.mixture.samples();
        assert_eq!(
            unsafe { dcfds_waveform_from_samples(samples.as_ptr(), samples.len(), 16000, &mut mix) },
            DcfdsStatus::Ok
        );
        let rttm = c_string(&prior_to_rttm(&gt.prior, "sim"));
        let mut prior: *mut DcfdsPrior = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_prior_from_rttm_text(rttm.as_ptr(), 0.016, &mut prior) },
            DcfdsStatus::Ok
        );
        let cfg_json = c_string(
            r#"{"window_s": 2.0, "window_hop_s": 2.0, "n_w": 2,
                "separation": {"kind": "oracle-magnitude-ratio"},
                "recluster_rounds": 0, "workers": 2}"#,
        );
        let mut cfg: *mut DcfdsConfig = ptr::null_mut();
        assert_eq!(unsafe { dcfds_config_from_json(cfg_json.as_ptr(), &mut cfg) }, DcfdsStatus::Ok);

        let oracle_dir = c_string(dir.path().to_str().unwrap());
        let mut result: *mut DcfdsResult = ptr::null_mut();
        let status = unsafe { dcfds_decode(mix, prior, cfg, oracle_dir.as_ptr(), &mut result) };
        if status != DcfdsStatus::Ok {
            let mut buf = vec![0i8; 512];
            unsafe { dcfds_last_error(buf.as_mut_ptr(), buf.len()) };
            panic!("decode failed: {}", unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy());
        }
        assert_eq!(unsafe { dcfds_result_num_speakers(result) }, 2);

        let mut stream: *mut DcfdsWaveform = ptr::null_mut();
        assert_eq!(unsafe { dcfds_result_waveform(result, 0, &mut stream) }, DcfdsStatus::Ok);
        assert_eq!(unsafe { dcfds_waveform_len(stream) }, gt.mixture.len());
        let mut missing: *mut DcfdsWaveform = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_result_waveform(result, 9, &mut missing) },
            DcfdsStatus::InvalidArgument
        );
        let mut refreshed: *mut DcfdsPrior = ptr::null_mut();
        assert_eq!(
            unsafe { dcfds_result_refreshed_prior(result, &mut refreshed) },
            DcfdsStatus::InvalidArgument,
            "no re-clustering round ran"
        );

        let out_dir = c_string(dir.path().join("out").to_str().unwrap());
        assert_eq!(unsafe { dcfds_result_write_dir(result, out_dir.as_ptr()) }, DcfdsStatus::Ok);
        assert!(dir.path().join("out/spk00.wav").exists());
        assert!(dir.path().join("out/prior.rttm").exists());

        unsafe {
            dcfds_waveform_free(stream);
            dcfds_waveform_free(mix);
            dcfds_prior_free(prior);
            dcfds_config_free(cfg);
            dcfds_result_free(result);
        }
    }

    #[test]
    fn evaluate_through_the_abi() {
        let dir = tempfile::tempdir().unwrap();
        let transcript = r#"[
            {"speaker": "a", "token": "x", "onset": 0.0, "offset": 0.4},
            {"speaker": "a", "token": "y", "onset": 0.5, "offset": 0.9}
        ]"#;
        let path = dir.path().join("t.json");
        std::fs::write(&path, transcript).unwrap();
        let c_path = c_string(path.to_str().unwrap());
        let mut out: *mut c_char = ptr::null_mut();
        let status =
            unsafe { dcfds_evaluate_transcripts(c_path.as_ptr(), c_path.as_ptr(), 5.0, &mut out) };
        assert_eq!(status, DcfdsStatus::Ok);
        let report: serde_json::Value =
            serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
        assert_eq!(report["cpwer"]["error_rate"], 0.0);
        unsafe { dcfds_string_free(out) };
    }

    #[test]
    fn generated_header_exports_the_surface() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dcfds.h");
        let text = std::fs::read_to_string(&header).expect("header generated at build time");
        for symbol in [
            "DcfdsStatus",
            "dcfds_waveform_from_wav",
            "dcfds_prior_from_rttm_file",
            "dcfds_config_from_json",
            "dcfds_decode",
            "dcfds_result_write_dir",
            "dcfds_evaluate_transcripts",
            "dcfds_last_error",
        ] {
            assert!(text.contains(symbol), "header lacks {symbol}");
        }
    }
}
