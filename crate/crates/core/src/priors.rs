//! Global diarization priors and the sliding-window prior segmentation
//! (SWSP): fixed-length windows over the global speaker-activity matrix with
//! per-window speaker index compaction, an inverse mapping saved for
//! stitching, longest-duration selection on overflow, and zero padding.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary speaker-activity matrix over an entire recording.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPrior {
    /// speakers x frames, entries in {0, 1}
    pub activity: Array2<u8>,
    /// seconds per activity frame
    pub frame_hop: f64,
    /// stable global labels, one per row
    pub speaker_ids: Vec<String>,
}

impl GlobalPrior {
    pub fn new(activity: Array2<u8>, frame_hop: f64, speaker_ids: Vec<String>) -> Result<Self> {
        if activity.nrows() == 0 || activity.ncols() == 0 {
            return Err(Error::InvalidArgument("prior needs at least one speaker and one frame".into()));
        }
        if !frame_hop.is_finite() || frame_hop <= 0.0 {
            return Err(Error::InvalidArgument("frame_hop must be positive".into()));
        }
        if activity.nrows() != speaker_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} speaker ids for {} activity rows",
                speaker_ids.len(),
                activity.nrows()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &speaker_ids {
            if !seen.insert(id) {
                return Err(Error::InvalidArgument(format!("duplicate speaker id {id}")));
            }
        }
        if activity.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("activity entries must be 0 or 1".into()));
        }
        Ok(Self { activity, frame_hop, speaker_ids })
    }

    pub fn num_speakers(&self) -> usize {
        self.activity.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.activity.ncols()
    }

    /// Same speakers over a clipped or zero-extended frame axis.
    pub fn resized_frames(&self, frames: usize) -> GlobalPrior {
        let mut activity = Array2::<u8>::zeros((self.num_speakers(), frames));
        let copy = frames.min(self.num_frames());
        activity
            .slice_mut(ndarray::s![.., ..copy])
            .assign(&self.activity.slice(ndarray::s![.., ..copy]));
        GlobalPrior {
            activity,
            frame_hop: self.frame_hop,
            speaker_ids: self.speaker_ids.clone(),
        }
    }
}

/// Compacted per-window activity. Rows beyond the active-speaker count are
/// all-zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrior {
    /// max-speakers x window-length, entries in {0, 1}
    pub activity: Array2<u8>,
    /// global frame index of the window's first frame
    pub start_frame: usize,
    /// ordinal of this window in the sweep
    pub window_id: usize,
    /// frames in [0, valid_len) map to real global frames; the rest is
    /// zero padding past the end of the recording
    pub valid_len: usize,
}

impl WindowPrior {
    pub fn max_speakers(&self) -> usize {
        self.activity.nrows()
    }

    pub fn window_len(&self) -> usize {
        self.activity.ncols()
    }
}

/// Injective partial map from windowed speaker rows to global speaker rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMap {
    pairs: BTreeMap<usize, usize>,
}

impl IndexMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, window_row: usize, global_row: usize) -> Result<()> {
        if self.pairs.values().any(|&g| g == global_row) {
            return Err(Error::InvalidArgument(format!(
                "global speaker {global_row} already mapped; index maps are injective"
            )));
        }
        if self.pairs.insert(window_row, global_row).is_some() {
            return Err(Error::InvalidArgument(format!("window row {window_row} mapped twice")));
        }
        Ok(())
    }

    pub fn global_for(&self, window_row: usize) -> Option<usize> {
        self.pairs.get(&window_row).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// (window_row, global_row) pairs in ascending window-row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|(&w, &g)| (w, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowingMode {
    /// Windows whose active-speaker count exceeds the row budget are
    /// discarded outright.
    Training,
    /// Overflowing windows keep the longest-duration speakers.
    Decoding,
}

/// Fixed-length sliding-window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowingConfig {
    /// window length L in prior frames
    pub window_len: usize,
    /// hop between window starts, in frames; hop = window_len gives
    /// non-overlapping tiling
    pub hop: usize,
    /// maximum speakers representable per window (row budget)
    pub max_speakers: usize,
    pub mode: WindowingMode,
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "require 0 < hop <= window_len, got hop={} window_len={}",
                self.hop, self.window_len
            )));
        }
        if self.max_speakers == 0 {
            return Err(Error::InvalidArgument("max_speakers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Window start frames tiling `[0, total_frames)` at the configured hop.
pub fn window_starts(total_frames: usize, cfg: &WindowingConfig) -> Vec<usize> {
    if total_frames <= cfg.window_len {
        return vec![0];
    }
    let n = (total_frames - cfg.window_len).div_ceil(cfg.hop) + 1;
    (0..n).map(|i| i * cfg.hop).collect()
}

/// Slides a fixed-length window over the global prior, compacting the
/// active global speakers of each window onto dense rows in ascending
/// global order and saving the row-to-global correspondence.
///
/// Overflowing windows keep the longest-duration speakers in decoding
/// mode (ties to the smaller global index) and are dropped in training
/// mode. Missing rows and frames past the end of the recording are
/// zero-padded.
pub fn swsp(g: &GlobalPrior, cfg: &WindowingConfig) -> Result<Vec<(WindowPrior, IndexMap)>> {
    cfg.validate()?;
    let t_g = g.num_frames();
    let n_g = g.num_speakers();
    let mut out = Vec::new();

    for (window_id, &start) in window_starts(t_g, cfg).iter().enumerate() {
        let valid_len = cfg.window_len.min(t_g - start);

        // in-window active duration per global speaker
        let mut durations: Vec<(usize, usize)> = (0..n_g)
            .map(|spk| {
                let d = (start..start + valid_len).filter(|&t| g.activity[[spk, t]] == 1).count();
                (spk, d)
            })
            .filter(|&(_, d)| d > 0)
            .collect();

        if durations.len() > cfg.max_speakers {
            match cfg.mode {
                WindowingMode::Training => continue,
                WindowingMode::Decoding => {
                    // longest duration first, ties to the smaller global index
                    durations.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                    durations.truncate(cfg.max_speakers);
                }
            }
        }
        // compaction order: ascending global index
        durations.sort_by_key(|&(spk, _)| spk);

        let mut activity = Array2::<u8>::zeros((cfg.max_speakers, cfg.window_len));
        let mut map = IndexMap::new();
        for (row, &(spk, _)) in durations.iter().enumerate() {
            map.insert(row, spk)?;
            for t in 0..valid_len {
                activity[[row, t]] = g.activity[[spk, start + t]];
            }
        }

        out.push((
            WindowPrior { activity, start_frame: start, window_id, valid_len },
            map,
        ));
    }
    Ok(out)
}

/// Scatters a windowed prior back into global coordinates. The returned
/// fragment has the full global shape and is zero outside the window and
/// outside the mapped speakers.
pub fn invert_window(w: &WindowPrior, m: &IndexMap, g_shape: (usize, usize)) -> Result<Array2<u8>> {
    let (n_g, t_g) = g_shape;
    let mut frag = Array2::<u8>::zeros(g_shape);
    for (row, global) in m.iter() {
        if row >= w.max_speakers() {
            return Err(Error::InvalidArgument(format!(
                "map refers to window row {row} but the window has {} rows",
                w.max_speakers()
            )));
        }
        if global >= n_g {
            return Err(Error::InvalidArgument(format!(
                "map refers to global speaker {global} but the prior has {n_g}"
            )));
        }
        for t in 0..w.valid_len {
            let gt = w.start_frame + t;
            if gt < t_g {
                frag[[global, gt]] = w.activity[[row, t]];
            }
        }
    }
    Ok(frag)
}

/// Guard against float division landing just below an integer boundary
/// (1e-9 frames is ~16 ps at a 16 ms hop).
const FRAME_EPS: f64 = 1e-9;

pub(crate) fn quantize_onset(seconds: f64, frame_hop: f64) -> usize {
    (seconds / frame_hop + FRAME_EPS).floor().max(0.0) as usize
}

pub(crate) fn quantize_offset(seconds: f64, frame_hop: f64) -> usize {
    (seconds / frame_hop - FRAME_EPS).ceil().max(0.0) as usize
}

/// Parses an RTTM document into a frame-quantized prior. Segment onsets
/// floor to the containing frame, offsets round up, and overlapping
/// segments of one speaker merge. Speakers are ordered lexicographically.
pub fn prior_from_rttm(text: &str, frame_hop: f64) -> Result<GlobalPrior> {
    if !frame_hop.is_finite() || frame_hop <= 0.0 {
        return Err(Error::InvalidArgument("frame_hop must be positive".into()));
    }
    let mut segments: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut t_g = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 || fields[0] != "SPEAKER" {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected `SPEAKER <file> <chan> <onset> <dur> ...`, got `{line}`"),
            });
        }
        let onset: f64 = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad onset `{}`", fields[3]),
        })?;
        let dur: f64 = fields[4].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad duration `{}`", fields[4]),
        })?;
        if !onset.is_finite() || !dur.is_finite() || onset < 0.0 || dur < 0.0 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("onset/duration out of range: {onset} {dur}"),
            });
        }
        let speaker = fields[7].to_string();
        let a = quantize_onset(onset, frame_hop);
        let b = quantize_offset(onset + dur, frame_hop);
        if b > a {
            t_g = t_g.max(b);
            segments.entry(speaker).or_default().push((a, b));
        } else {
            segments.entry(speaker).or_default();
        }
    }

    if segments.is_empty() {
        return Err(Error::InvalidArgument("no speakers in RTTM document".into()));
    }
    let t_g = t_g.max(1);
    let speaker_ids: Vec<String> = segments.keys().cloned().collect();
    let mut activity = Array2::<u8>::zeros((speaker_ids.len(), t_g));
    for (row, id) in speaker_ids.iter().enumerate() {
        for &(a, b) in &segments[id] {
            for t in a..b {
                activity[[row, t]] = 1;
            }
        }
    }
    GlobalPrior::new(activity, frame_hop, speaker_ids)
}

/// Renders a prior as RTTM, one line per contiguous active run.
pub fn prior_to_rttm(g: &GlobalPrior, file_id: &str) -> String {
    let mut out = String::new();
    for (row, id) in g.speaker_ids.iter().enumerate() {
        let mut t = 0usize;
        let frames = g.num_frames();
        while t < frames {
            if g.activity[[row, t]] == 1 {
                let start = t;
                while t < frames && g.activity[[row, t]] == 1 {
                    t += 1;
                }
                let onset = start as f64 * g.frame_hop;
                let dur = (t - start) as f64 * g.frame_hop;
                out.push_str(&format!(
                    "SPEAKER {file_id} 1 {onset:.6} {dur:.6} <NA> <NA> {id} <NA> <NA>\n"
                ));
            } else {
                t += 1;
            }
        }
    }
    out
}

/// One row of the window-map JSON sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowMapEntry {
    pub window_id: usize,
    pub start_frame: usize,
    pub map: BTreeMap<usize, usize>,
}

impl WindowMapEntry {
    pub fn from_parts(w: &WindowPrior, m: &IndexMap) -> Self {
        WindowMapEntry {
            window_id: w.window_id,
            start_frame: w.start_frame,
            map: m.iter().collect(),
        }
    }
}

pub fn write_window_maps(path: &Path, entries: &[WindowMapEntry]) -> Result<()> {
    let json = serde_json::to_string_pretty(entries)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_window_maps(path: &Path) -> Result<Vec<WindowMapEntry>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
