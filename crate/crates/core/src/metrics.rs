//! Evaluation metrics: diarization error rate with miss/false-alarm/
//! confusion decomposition, concatenated minimum-permutation word error
//! rate (cpWER), its time-constrained variant (tcpWER), and scale-invariant
//! SDR for separation quality.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::GlobalPrior;
use crate::signal::Waveform;

/// DER is evaluated on this frame grid (seconds), zero collar.
pub const DER_FRAME: f64 = 0.01;

/// SI-SDR values are capped here to keep reports finite.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// One transcribed word with its time span. Untimed words carry NaN and
/// are accepted by cpWER but rejected by tcpWER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub token: String,
    #[serde(default = "nan")]
    pub onset: f64,
    #[serde(default = "nan")]
    pub offset: f64,
}

fn nan() -> f64 {
    f64::NAN
}

impl Word {
    pub fn center(&self) -> f64 {
        (self.onset + self.offset) / 2.0
    }
}

/// Per-speaker word sequences, kept in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranscriptSet {
    streams: BTreeMap<String, Vec<Word>>,
}

/// Flat interchange row for the JSON transcript format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranscriptRow {
    speaker: String,
    token: String,
    #[serde(default = "nan")]
    onset: f64,
    #[serde(default = "nan")]
    offset: f64,
}

impl TranscriptSet {
    pub fn push(&mut self, speaker: &str, word: Word) {
        self.streams.entry(speaker.to_string()).or_default().push(word);
    }

    pub fn speakers(&self) -> impl Iterator<Item = (&str, &[Word])> {
        self.streams.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn num_speakers(&self) -> usize {
        self.streams.len()
    }

    pub fn total_words(&self) -> usize {
        self.streams.values().map(|v| v.len()).sum()
    }

    /// Sorts each stream by onset (untimed words keep their order at the
    /// end) and checks the span invariants.
    pub fn normalize(&mut self) -> Result<()> {
        for (speaker, words) in self.streams.iter_mut() {
            words.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap_or(std::cmp::Ordering::Equal));
            for w in words.iter() {
                if w.onset.is_finite() && w.offset.is_finite() && w.offset < w.onset {
                    return Err(Error::InvalidArgument(format!(
                        "speaker {speaker}: word `{}` ends before it starts",
                        w.token
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<TranscriptRow> = serde_json::from_str(text)?;
        let mut set = TranscriptSet::default();
        for r in rows {
            set.push(&r.speaker, Word { token: r.token, onset: r.onset, offset: r.offset });
        }
        set.normalize()?;
        Ok(set)
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<TranscriptRow> = self
            .speakers()
            .flat_map(|(spk, words)| {
                words.iter().map(move |w| TranscriptRow {
                    speaker: spk.to_string(),
                    token: w.token.clone(),
                    onset: w.onset,
                    offset: w.offset,
                })
            })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }

    /// CTM lines: `<stream> <chan> <onset> <dur> <token> [...]`. The first
    /// field doubles as the speaker label.
    pub fn from_ctm(text: &str) -> Result<Self> {
        let mut set = TranscriptSet::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 5 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected `<stream> <chan> <onset> <dur> <token>`, got `{line}`"),
                });
            }
            let onset: f64 = f[2].parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad onset `{}`", f[2]),
            })?;
            let dur: f64 = f[3].parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad duration `{}`", f[3]),
            })?;
            set.push(f[0], Word { token: f[4].to_string(), onset, offset: onset + dur });
        }
        if set.streams.is_empty() {
            return Err(Error::InvalidArgument("no words in CTM document".into()));
        }
        set.normalize()?;
        Ok(set)
    }
}

/// Diarization error report; fractions of the reference speech time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DERReport {
    pub der: f64,
    pub miss: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    /// optimal reference-to-hypothesis speaker correspondence
    pub mapping: Vec<(String, String)>,
}

/// Word-error report for cpWER/tcpWER.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WERReport {
    pub error_rate: f64,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    /// chosen reference-to-hypothesis speaker assignment
    pub permutation: Vec<(String, String)>,
}

pub mod assignment {
    //! Minimum-cost assignment (Hungarian algorithm with potentials).

    use ndarray::Array2;

    /// Assigns each row to a distinct column minimizing total cost.
    /// Rows in excess of columns come back unassigned.
    pub fn min_cost(cost: &Array2<f64>) -> Vec<Option<usize>> {
        let (rows, cols) = cost.dim();
        if rows == 0 || cols == 0 {
            return vec![None; rows];
        }
        if rows > cols {
            // transpose, solve, invert the mapping
            let t = cost.t().to_owned();
            let col_to_row = min_cost(&t);
            let mut out = vec![None; rows];
            for (c, r) in col_to_row.iter().enumerate() {
                if let Some(r) = r {
                    out[*r] = Some(c);
                }
            }
            return out;
        }

        let n = rows;
        let m = cols;
        let inf = f64::INFINITY;
        // 1-indexed potentials; p[j] is the row matched to column j
        let mut u = vec![0.0f64; n + 1];
        let mut v = vec![0.0f64; m + 1];
        let mut p = vec![0usize; m + 1];
        let mut way = vec![0usize; m + 1];

        for i in 1..=n {
            p[0] = i;
            let mut j0 = 0usize;
            let mut minv = vec![inf; m + 1];
            let mut used = vec![false; m + 1];
            loop {
                used[j0] = true;
                let i0 = p[j0];
                let mut delta = inf;
                let mut j1 = 0usize;
                for j in 1..=m {
                    if used[j] {
                        continue;
                    }
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=m {
                    if used[j] {
                        u[p[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                p[j0] = p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }

        let mut out = vec![None; rows];
        for j in 1..=m {
            if p[j] != 0 {
                out[p[j] - 1] = Some(j - 1);
            }
        }
        out
    }

    /// Maximizes total value instead of minimizing cost.
    pub fn max_value(value: &Array2<f64>) -> Vec<Option<usize>> {
        min_cost(&value.mapv(|v| -v))
    }

}

fn resample_to_der_grid(p: &GlobalPrior, frames: usize, frame: f64) -> Array2<u8> {
    let mut out = Array2::<u8>::zeros((p.num_speakers(), frames));
    for spk in 0..p.num_speakers() {
        for t in 0..frames {
            let mid = (t as f64 + 0.5) * frame;
            let src = (mid / p.frame_hop).floor() as usize;
            if src < p.num_frames() {
                out[[spk, t]] = p.activity[[spk, src]];
            }
        }
    }
    out
}

/// Diarization error rate: miss + false alarm + speaker confusion, as
/// fractions of reference speech time, after the overlap-maximizing
/// one-to-one speaker mapping. Zero collar.
pub fn der(reference: &GlobalPrior, hypothesis: &GlobalPrior, frame: f64) -> Result<DERReport> {
    if !frame.is_finite() || frame <= 0.0 {
        return Err(Error::InvalidArgument("evaluation frame must be positive".into()));
    }
    let dur = (reference.num_frames() as f64 * reference.frame_hop)
        .max(hypothesis.num_frames() as f64 * hypothesis.frame_hop);
    let frames = ((dur / frame) - 1e-9).ceil().max(1.0) as usize;
    let r = resample_to_der_grid(reference, frames, frame);
    let h = resample_to_der_grid(hypothesis, frames, frame);
    let (n_ref, n_hyp) = (r.nrows(), h.nrows());

    let ref_speech: u64 = r.iter().map(|&v| v as u64).sum();
    if ref_speech == 0 {
        return Err(Error::InvalidArgument("undefined DER: reference contains no speech".into()));
    }

    // overlapped speech time per (reference, hypothesis) speaker pair
    let mut overlap = Array2::<f64>::zeros((n_ref, n_hyp));
    for i in 0..n_ref {
        for j in 0..n_hyp {
            let mut c = 0u64;
            for t in 0..frames {
                c += (r[[i, t]] & h[[j, t]]) as u64;
            }
            overlap[[i, j]] = c as f64;
        }
    }
    let mapped = assignment::max_value(&overlap);

    let mut miss = 0u64;
    let mut fa = 0u64;
    let mut conf = 0u64;
    for t in 0..frames {
        let nr: u64 = (0..n_ref).map(|i| r[[i, t]] as u64).sum();
        let nh: u64 = (0..n_hyp).map(|j| h[[j, t]] as u64).sum();
        let correct: u64 = (0..n_ref)
            .filter(|&i| {
                mapped[i].is_some_and(|j| r[[i, t]] == 1 && h[[j, t]] == 1)
            })
            .count() as u64;
        miss += nr.saturating_sub(nh);
        fa += nh.saturating_sub(nr);
        conf += nr.min(nh) - correct.min(nr.min(nh));
    }

    let denom = ref_speech as f64;
    let mapping = mapped
        .iter()
        .enumerate()
        .filter_map(|(i, j)| {
            j.filter(|&j| overlap[[i, j]] > 0.0).map(|j| {
                (reference.speaker_ids[i].clone(), hypothesis.speaker_ids[j].clone())
            })
        })
        .collect();
    let (miss, fa, conf) = (miss as f64 / denom, fa as f64 / denom, conf as f64 / denom);
    Ok(DERReport { der: miss + fa + conf, miss, false_alarm: fa, confusion: conf, mapping })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct EditCounts {
    cost: usize,
    subs: usize,
    dels: usize,
    ins: usize,
}

/// Word-level Levenshtein distance between two streams. When `collar` is
/// finite, two words may align only if their center times differ by at
/// most the collar; alignments outside it fall back to deletion plus
/// insertion.
fn edit_distance(reference: &[Word], hypothesis: &[Word], collar: f64) -> EditCounts {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![vec![EditCounts::default(); m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate().skip(1) {
        row[0] = EditCounts { cost: i, subs: 0, dels: i, ins: 0 };
    }
    for (j, cell) in dp[0].iter_mut().enumerate().skip(1) {
        *cell = EditCounts { cost: j, subs: 0, dels: 0, ins: j };
    }
    for i in 1..=n {
        for j in 1..=m {
            let rw = &reference[i - 1];
            let hw = &hypothesis[j - 1];
            let in_collar = if collar.is_infinite() {
                true
            } else {
                (rw.center() - hw.center()).abs() <= collar
            };
            let del = EditCounts {
                cost: dp[i - 1][j].cost + 1,
                dels: dp[i - 1][j].dels + 1,
                ..dp[i - 1][j]
            };
            let ins = EditCounts {
                cost: dp[i][j - 1].cost + 1,
                ins: dp[i][j - 1].ins + 1,
                ..dp[i][j - 1]
            };
            let mut best = if del.cost <= ins.cost { del } else { ins };
            if in_collar {
                let sub_cost = usize::from(rw.token != hw.token);
                let diag = EditCounts {
                    cost: dp[i - 1][j - 1].cost + sub_cost,
                    subs: dp[i - 1][j - 1].subs + sub_cost,
                    ..dp[i - 1][j - 1]
                };
                if diag.cost < best.cost {
                    best = diag;
                }
            }
            dp[i][j] = best;
        }
    }
    dp[n][m]
}

/// Streams padded with empties so both sides have the same count; returns
/// (labels, streams) with synthetic empty labels where padded.
fn padded_streams(set: &TranscriptSet, n: usize) -> (Vec<String>, Vec<Vec<Word>>) {
    let mut labels: Vec<String> = Vec::with_capacity(n);
    let mut streams: Vec<Vec<Word>> = Vec::with_capacity(n);
    for (spk, words) in set.speakers() {
        labels.push(spk.to_string());
        streams.push(words.to_vec());
    }
    while labels.len() < n {
        labels.push(String::new());
        streams.push(Vec::new());
    }
    (labels, streams)
}

fn min_permutation_wer(
    reference: &TranscriptSet,
    hypothesis: &TranscriptSet,
    collar: f64,
) -> Result<WERReport> {
    let ref_words = reference.total_words();
    if ref_words == 0 {
        return Err(Error::InvalidArgument("reference transcript contains no words".into()));
    }
    if collar.is_finite() {
        for set in [reference, hypothesis] {
            for (spk, words) in set.speakers() {
                if let Some(w) = words.iter().find(|w| !w.center().is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "speaker {spk}: word `{}` lacks timestamps required by tcpWER",
                        w.token
                    )));
                }
            }
        }
    }

    let n = reference.num_speakers().max(hypothesis.num_speakers());
    let (ref_labels, ref_streams) = padded_streams(reference, n);
    let (hyp_labels, hyp_streams) = padded_streams(hypothesis, n);

    // pairwise stream distances; the permutation objective is separable
    let mut counts = vec![vec![EditCounts::default(); n]; n];
    let mut cost = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            counts[i][j] = edit_distance(&ref_streams[i], &hyp_streams[j], collar);
            cost[[i, j]] = counts[i][j].cost as f64;
        }
    }

    let chosen: Vec<usize> = if n <= 8 {
        // exhaustive minimum over speaker permutations
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best: Option<(usize, Vec<usize>)> = None;
        permutations(&mut idx, 0, &mut |perm| {
            let total: usize = (0..n).map(|i| counts[i][perm[i]].cost).sum();
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, perm.to_vec()));
            }
        });
        best.unwrap().1
    } else {
        assignment::min_cost(&cost).into_iter().map(|c| c.unwrap()).collect()
    };

    let mut subs = 0;
    let mut dels = 0;
    let mut ins = 0;
    let mut permutation = Vec::new();
    for (i, &j) in chosen.iter().enumerate() {
        let c = counts[i][j];
        subs += c.subs;
        dels += c.dels;
        ins += c.ins;
        if !ref_labels[i].is_empty() && !hyp_labels[j].is_empty() {
            permutation.push((ref_labels[i].clone(), hyp_labels[j].clone()));
        }
    }
    let total = subs + dels + ins;
    Ok(WERReport {
        error_rate: total as f64 / ref_words as f64,
        substitutions: subs,
        deletions: dels,
        insertions: ins,
        permutation,
    })
}

fn permutations(idx: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == idx.len() {
        f(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permutations(idx, k + 1, f);
        idx.swap(k, i);
    }
}

/// Concatenated minimum-permutation word error rate: per-speaker streams
/// in time order, minimum over speaker assignments of summed word edit
/// distances, divided by the reference word count.
pub fn cpwer(reference: &TranscriptSet, hypothesis: &TranscriptSet) -> Result<WERReport> {
    min_permutation_wer(reference, hypothesis, f64::INFINITY)
}

/// cpWER with a temporal constraint: words align only when their center
/// times agree within the collar.
pub fn tcpwer(reference: &TranscriptSet, hypothesis: &TranscriptSet, collar: f64) -> Result<WERReport> {
    if collar.is_nan() || collar < 0.0 {
        return Err(Error::InvalidArgument("collar must be nonnegative".into()));
    }
    min_permutation_wer(reference, hypothesis, collar)
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at
/// `SI_SDR_CAP_DB`.
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: estimate {} vs reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.samples().iter().map(|s| s * s).sum();
    if ref_energy == 0.0 {
        return Err(Error::InvalidArgument("silent reference".into()));
    }
    let dot: f64 = estimate
        .samples()
        .iter()
        .zip(reference.samples())
        .map(|(e, r)| e * r)
        .sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = estimate
        .samples()
        .iter()
        .zip(reference.samples())
        .map(|(e, r)| {
            let n = e - alpha * r;
            n * n
        })
        .sum();
    if noise_energy == 0.0 || target_energy / noise_energy > 10f64.powf(SI_SDR_CAP_DB / 10.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok(10.0 * (target_energy / noise_energy).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prior(rows: Vec<Vec<u8>>, hop: f64) -> GlobalPrior {
        let n = rows.len();
        let t = rows[0].len();
        GlobalPrior::new(
            Array2::from_shape_vec((n, t), rows.into_iter().flatten().collect()).unwrap(),
            hop,
            (0..n).map(|i| format!("spk{i:02}")).collect(),
        )
        .unwrap()
    }

    fn words(tokens: &[&str]) -> Vec<Word> {
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| Word { token: t.to_string(), onset: i as f64, offset: i as f64 + 0.5 })
            .collect()
    }

    fn transcript(streams: &[(&str, &[&str])]) -> TranscriptSet {
        let mut set = TranscriptSet::default();
        for (spk, tokens) in streams {
            for w in words(tokens) {
                set.push(spk, w);
            }
        }
        set
    }

    #[test]
    fn der_zero_on_identity() {
        let p = prior(vec![vec![1, 1, 0, 1], vec![0, 1, 1, 0]], 0.01);
        let r = der(&p, &p, DER_FRAME).unwrap();
        assert_eq!(r.der, 0.0);
        assert_eq!(r.miss, 0.0);
        assert_eq!(r.false_alarm, 0.0);
        assert_eq!(r.confusion, 0.0);
    }

    #[test]
    fn der_miss_counts_exactly() {
        // 10 s single-speaker reference, hypothesis missing 1 s
        let reference = prior(vec![vec![1; 1000]], 0.01);
        let mut hyp_row = vec![1u8; 1000];
        hyp_row[400..500].iter_mut().for_each(|v| *v = 0);
        let hypothesis = prior(vec![hyp_row], 0.01);
        let r = der(&reference, &hypothesis, DER_FRAME).unwrap();
        assert!((r.miss - 0.10).abs() < 1e-12);
        assert_eq!(r.false_alarm, 0.0);
        assert_eq!(r.confusion, 0.0);
        assert!((r.der - 0.10).abs() < 1e-12);
    }

    #[test]
    fn der_absorbs_label_permutation() {
        let reference = prior(vec![vec![1, 1, 0, 0, 0, 0], vec![0, 0, 0, 1, 1, 1]], 0.01);
        let hypothesis = prior(vec![vec![0, 0, 0, 1, 1, 1], vec![1, 1, 0, 0, 0, 0]], 0.01);
        let r = der(&reference, &hypothesis, DER_FRAME).unwrap();
        assert_eq!(r.der, 0.0);
        assert_eq!(r.mapping.len(), 2);
    }

    #[test]
    fn der_components_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let n = rng.gen_range(1..4);
            let m = rng.gen_range(1..4);
            let t = rng.gen_range(10..60);
            let reference = GlobalPrior::new(
                Array2::from_shape_fn((n, t), |_| rng.gen_bool(0.5) as u8),
                0.01,
                (0..n).map(|i| format!("r{i}")).collect(),
            )
            .unwrap();
            if reference.activity.iter().all(|&v| v == 0) {
                continue;
            }
            let hypothesis = GlobalPrior::new(
                Array2::from_shape_fn((m, t), |_| rng.gen_bool(0.5) as u8),
                0.01,
                (0..m).map(|i| format!("h{i}")).collect(),
            )
            .unwrap();
            let r = der(&reference, &hypothesis, DER_FRAME).unwrap();
            assert!((r.der - (r.miss + r.false_alarm + r.confusion)).abs() < 1e-9);
            assert!(r.miss >= 0.0 && r.false_alarm >= 0.0 && r.confusion >= 0.0);
        }
    }

    #[test]
    fn der_empty_reference_is_undefined() {
        let reference = prior(vec![vec![0, 0, 0]], 0.01);
        let hypothesis = prior(vec![vec![1, 0, 0]], 0.01);
        assert!(der(&reference, &hypothesis, DER_FRAME).is_err());
    }

    #[test]
    fn der_mapping_beats_greedy() {
        // greedy would pair ref0 with hyp0 (overlap 3) starving ref1;
        // the optimal assignment pairs ref0-hyp1, ref1-hyp0
        let reference = prior(
            vec![vec![1, 1, 1, 1, 1, 0, 0, 0], vec![0, 0, 1, 1, 1, 0, 0, 0]],
            0.01,
        );
        let hypothesis = prior(
            vec![vec![0, 0, 1, 1, 1, 0, 0, 0], vec![1, 1, 1, 1, 0, 0, 0, 0]],
            0.01,
        );
        let r = der(&reference, &hypothesis, DER_FRAME).unwrap();
        let total_ref = 8.0;
        // optimal: correct = 4 (ref0-hyp1) + 3 (ref1-hyp0) = 7 of 8
        assert!((r.der - 1.0 / total_ref).abs() < 1e-9, "got {}", r.der);
    }

    #[test]
    fn cpwer_identity_and_permutation() {
        let reference = transcript(&[("a", &["x", "y"]), ("b", &["z"])]);
        assert_eq!(cpwer(&reference, &reference).unwrap().error_rate, 0.0);
        let swapped = transcript(&[("a", &["z"]), ("b", &["x", "y"])]);
        assert_eq!(cpwer(&reference, &swapped).unwrap().error_rate, 0.0);
    }

    #[test]
    fn cpwer_worked_example() {
        // "a b c d" vs "a x c": 1 substitution + 1 deletion over 4 words
        let reference = transcript(&[("spkA", &["a", "b", "c", "d"])]);
        let hypothesis = transcript(&[("spkA", &["a", "x", "c"])]);
        let r = cpwer(&reference, &hypothesis).unwrap();
        assert_eq!(r.substitutions, 1);
        assert_eq!(r.deletions, 1);
        assert_eq!(r.insertions, 0);
        assert!((r.error_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cpwer_empty_reference_rejected() {
        let empty = TranscriptSet::default();
        let hypothesis = transcript(&[("a", &["x"])]);
        assert!(cpwer(&empty, &hypothesis).is_err());
    }

    #[test]
    fn cpwer_unequal_speaker_counts_pad() {
        let reference = transcript(&[("a", &["x", "y"]), ("b", &["z"])]);
        let hypothesis = transcript(&[("only", &["x", "y"])]);
        let r = cpwer(&reference, &hypothesis).unwrap();
        // best: only->a (0 errors), b unmatched (1 deletion)
        assert_eq!(r.deletions, 1);
        assert!((r.error_rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tcpwer_shift_within_collar_is_free() {
        let reference = transcript(&[("a", &["p", "q", "r"]), ("b", &["s"])]);
        let mut shifted = TranscriptSet::default();
        for (spk, ws) in reference.speakers() {
            for w in ws {
                shifted.push(
                    spk,
                    Word { token: w.token.clone(), onset: w.onset + 1.0, offset: w.offset + 1.0 },
                );
            }
        }
        let base = cpwer(&reference, &shifted).unwrap();
        let tc = tcpwer(&reference, &shifted, 5.0).unwrap();
        assert_eq!(tc.error_rate, base.error_rate);
        assert_eq!(tc.error_rate, 0.0);
    }

    #[test]
    fn tcpwer_far_shift_scores_del_plus_ins() {
        let reference = transcript(&[("a", &["hello"])]);
        let mut hypothesis = TranscriptSet::default();
        hypothesis.push(
            "a",
            Word { token: "hello".into(), onset: 6.0, offset: 6.5 },
        );
        let r = tcpwer(&reference, &hypothesis, 5.0).unwrap();
        assert_eq!(r.deletions, 1);
        assert_eq!(r.insertions, 1);
        assert_eq!(r.substitutions, 0);
        assert!((r.error_rate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tcpwer_infinite_collar_equals_cpwer() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let vocab = ["a", "b", "c", "d"];
        for _ in 0..25 {
            let mut reference = TranscriptSet::default();
            let mut hypothesis = TranscriptSet::default();
            for spk in 0..rng.gen_range(1..4) {
                let label = format!("s{spk}");
                let mut t = 0.0;
                for _ in 0..rng.gen_range(1..6) {
                    reference.push(
                        &label,
                        Word {
                            token: vocab[rng.gen_range(0..4)].into(),
                            onset: t,
                            offset: t + 0.4,
                        },
                    );
                    t += rng.gen_range(0.5..2.0);
                }
                let mut t = 0.0;
                for _ in 0..rng.gen_range(0..6) {
                    hypothesis.push(
                        &label,
                        Word {
                            token: vocab[rng.gen_range(0..4)].into(),
                            onset: t,
                            offset: t + 0.4,
                        },
                    );
                    t += rng.gen_range(0.5..2.0);
                }
            }
            if reference.total_words() == 0 {
                continue;
            }
            let base = cpwer(&reference, &hypothesis).unwrap();
            let tc = tcpwer(&reference, &hypothesis, f64::INFINITY).unwrap();
            assert_eq!(base.error_rate, tc.error_rate);
            assert_eq!(base.substitutions, tc.substitutions);
            assert_eq!(base.deletions, tc.deletions);
            assert_eq!(base.insertions, tc.insertions);
        }
    }

    #[test]
    fn tcpwer_requires_timestamps() {
        let mut reference = TranscriptSet::default();
        reference.push("a", Word { token: "x".into(), onset: f64::NAN, offset: f64::NAN });
        let hypothesis = transcript(&[("a", &["x"])]);
        assert!(tcpwer(&reference, &hypothesis, 5.0).is_err());
        assert!(cpwer(&reference, &hypothesis).is_ok());
    }

    #[test]
    fn hyp_label_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let vocab = ["u", "v", "w"];
        for _ in 0..15 {
            let n = rng.gen_range(2..4);
            let mut reference = TranscriptSet::default();
            let mut hyp_a = TranscriptSet::default();
            let mut hyp_b = TranscriptSet::default();
            let shift = rng.gen_range(1..n);
            for spk in 0..n {
                let mut t = 0.0;
                for _ in 0..rng.gen_range(1..5) {
                    let w = Word {
                        token: vocab[rng.gen_range(0..3)].into(),
                        onset: t,
                        offset: t + 0.3,
                    };
                    reference.push(&format!("r{spk}"), w.clone());
                    hyp_a.push(&format!("h{spk}"), w.clone());
                    hyp_b.push(&format!("h{}", (spk + shift) % n), w);
                    t += 1.0;
                }
            }
            hyp_b.normalize().unwrap();
            let a = cpwer(&reference, &hyp_a).unwrap();
            let b = cpwer(&reference, &hyp_b).unwrap();
            assert_eq!(a.error_rate, b.error_rate);
            let ta = tcpwer(&reference, &hyp_a, 5.0).unwrap();
            let tb = tcpwer(&reference, &hyp_b, 5.0).unwrap();
            assert_eq!(ta.error_rate, tb.error_rate);
        }
    }

    #[test]
    fn si_sdr_reference_cases() {
        let reference = Waveform::new(
            (0..1000).map(|i| (i as f64 * 0.1).sin()).collect(),
            16000,
        )
        .unwrap();
        assert_eq!(si_sdr(&reference, &reference).unwrap(), SI_SDR_CAP_DB);
        let double =
            Waveform::new(reference.samples().iter().map(|s| 2.0 * s).collect(), 16000).unwrap();
        assert_eq!(si_sdr(&double, &reference).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn si_sdr_equal_power_noise_is_zero_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let reference =
            Waveform::new((0..20000).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap();
        let ref_power: f64 =
            reference.samples().iter().map(|s| s * s).sum::<f64>() / reference.len() as f64;
        // orthogonalized noise at exactly the reference power
        let raw: Vec<f64> = (0..20000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dot: f64 = raw.iter().zip(reference.samples()).map(|(n, r)| n * r).sum();
        let ref_energy: f64 = reference.samples().iter().map(|r| r * r).sum();
        let ortho: Vec<f64> = raw
            .iter()
            .zip(reference.samples())
            .map(|(n, r)| n - dot / ref_energy * r)
            .collect();
        let noise_power: f64 = ortho.iter().map(|n| n * n).sum::<f64>() / ortho.len() as f64;
        let scale = (ref_power / noise_power).sqrt();
        let est = Waveform::new(
            reference
                .samples()
                .iter()
                .zip(&ortho)
                .map(|(r, n)| r + scale * n)
                .collect(),
            16000,
        )
        .unwrap();
        let got = si_sdr(&est, &reference).unwrap();
        assert!(got.abs() < 0.5, "expected ~0 dB, got {got}");
    }

    #[test]
    fn si_sdr_rejects_degenerate_inputs() {
        let a = Waveform::new(vec![0.1; 10], 16000).unwrap();
        let b = Waveform::new(vec![0.1; 11], 16000).unwrap();
        assert!(si_sdr(&a, &b).is_err());
        let silent = Waveform::new(vec![0.0; 10], 16000).unwrap();
        assert!(si_sdr(&a, &silent).is_err());
    }

    #[test]
    fn assignment_matches_exhaustive_for_der() {
        // up to 4 speakers: solver mapping equals brute-force permutation
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let t = rng.gen_range(20..60);
            let make = |rng: &mut ChaCha8Rng, tag: &str| {
                GlobalPrior::new(
                    Array2::from_shape_fn((n, t), |_| rng.gen_bool(0.5) as u8),
                    0.01,
                    (0..n).map(|i| format!("{tag}{i}")).collect(),
                )
                .unwrap()
            };
            let reference = make(&mut rng, "r");
            if reference.activity.iter().all(|&v| v == 0) {
                continue;
            }
            let hypothesis = make(&mut rng, "h");
            let solver = der(&reference, &hypothesis, DER_FRAME).unwrap();

            // brute force over all one-to-one mappings
            let r = resample_to_der_grid(&reference, t, 0.01);
            let h = resample_to_der_grid(&hypothesis, t, 0.01);
            let mut idx: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permutations(&mut idx, 0, &mut |perm| {
                let mut correct = 0u64;
                for tt in 0..t {
                    for i in 0..n {
                        if r[[i, tt]] == 1 && h[[perm[i], tt]] == 1 {
                            correct += 1;
                        }
                    }
                }
                let ref_speech: u64 = r.iter().map(|&v| v as u64).sum();
                let mut miss = 0u64;
                let mut fa = 0u64;
                let mut conf = 0u64;
                for tt in 0..t {
                    let nr: u64 = (0..n).map(|i| r[[i, tt]] as u64).sum();
                    let nh: u64 = (0..n).map(|j| h[[j, tt]] as u64).sum();
                    let c: u64 = (0..n)
                        .filter(|&i| r[[i, tt]] == 1 && h[[perm[i], tt]] == 1)
                        .count() as u64;
                    miss += nr.saturating_sub(nh);
                    fa += nh.saturating_sub(nr);
                    conf += nr.min(nh) - c.min(nr.min(nh));
                }
                let _ = correct;
                let total = (miss + fa + conf) as f64 / ref_speech as f64;
                if total < best {
                    best = total;
                }
            });
            assert!(
                (solver.der - best).abs() < 1e-9,
                "solver {} vs exhaustive {}",
                solver.der,
                best
            );
        }
    }

    #[test]
    fn cpwer_many_speakers_uses_assignment_solver() {
        // above eight speakers the permutation search hands over to the
        // assignment solver; identity must still score zero and a single
        // corrupted stream must cost exactly its errors
        let n = 10;
        let mut reference = TranscriptSet::default();
        let mut hypothesis = TranscriptSet::default();
        for spk in 0..n {
            for (i, tok) in ["p", "q", "r"].iter().enumerate() {
                let w = Word {
                    token: format!("{tok}{spk}"),
                    onset: i as f64,
                    offset: i as f64 + 0.4,
                };
                reference.push(&format!("r{spk:02}"), w.clone());
                let mut hw = w;
                if spk == 4 && i == 1 {
                    hw.token = "wrong".into();
                }
                hypothesis.push(&format!("h{:02}", (spk + 3) % n), hw);
            }
        }
        hypothesis.normalize().unwrap();
        let r = cpwer(&reference, &hypothesis).unwrap();
        assert_eq!(r.substitutions, 1);
        assert_eq!(r.deletions + r.insertions, 0);
        assert!((r.error_rate - 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn transcript_json_round_trip() {
        let set = transcript(&[("a", &["x", "y"]), ("b", &["z"])]);
        let json = set.to_json().unwrap();
        let back = TranscriptSet::from_json(&json).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn transcript_ctm_parses() {
        let text = "alice 1 0.50 0.40 hello\nalice 1 1.00 0.30 world\nbob 1 0.20 0.25 hey\n";
        let set = TranscriptSet::from_ctm(text).unwrap();
        assert_eq!(set.num_speakers(), 2);
        assert_eq!(set.total_words(), 3);
        assert!(TranscriptSet::from_ctm("bad line\n").is_err());
    }

    #[test]
    fn transcript_rejects_reversed_span() {
        let mut set = TranscriptSet::default();
        set.push("a", Word { token: "x".into(), onset: 2.0, offset: 1.0 });
        assert!(set.normalize().is_err());
    }

    #[test]
    fn der_resamples_mismatched_hops() {
        // same speech expressed at 16 ms and 10 ms hops
        let reference = prior(vec![vec![1; 125]], 0.016); // 2.0 s
        let hypothesis = prior(vec![vec![1; 200]], 0.01); // 2.0 s
        let r = der(&reference, &hypothesis, DER_FRAME).unwrap();
        assert!(r.der < 0.02, "quantization-only disagreement, got {}", r.der);
    }
}
