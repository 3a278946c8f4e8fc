//! Separation-driven prior refinement: segment the separated streams with
//! an energy VAD, embed each segment with deterministic log-mel statistics,
//! cluster the embeddings spectrally, and emit the clusters as a refreshed
//! global diarization prior.
//!
//! The embedding is a stand-in for a neural extractor: concatenated
//! per-mel-band mean and standard deviation of the segment's FBANK
//! features, mean-centered across bands and unit-normalized. That is
//! deterministic, dependency-free, and separates spectrally distinct
//! speakers.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::GlobalPrior;
use crate::signal::{compute_fbank, magnitude, num_frames, stft, Waveform};

/// Speech segment of one separated stream, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub onset: f64,
    pub offset: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Unit-norm embedding of one segment, tagged with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEmbedding {
    pub vector: Vec<f64>,
    pub stream: usize,
    pub onset: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReclusterConfig {
    /// VAD threshold, dB below the stream's peak frame energy.
    pub vad_threshold_db: f64,
    /// Minimum kept segment duration, seconds.
    pub min_segment_s: f64,
    /// Gaps shorter than this merge adjacent segments, seconds.
    pub merge_gap_s: f64,
    /// Padding added to both ends of each kept segment, seconds; covers
    /// onset/offset ramps the energy threshold clips.
    pub segment_pad_s: f64,
    pub n_mels: usize,
    pub stft_frame_len: usize,
    pub stft_hop: usize,
    /// Cluster count; inferred from the largest Laplacian eigengap when
    /// absent, capped at `max_clusters`.
    pub num_clusters: Option<usize>,
    pub max_clusters: usize,
    pub kmeans_seed: u64,
}

impl Default for ReclusterConfig {
    fn default() -> Self {
        ReclusterConfig {
            vad_threshold_db: 30.0,
            min_segment_s: 0.2,
            merge_gap_s: 0.1,
            segment_pad_s: 0.05,
            n_mels: 40,
            stft_frame_len: 1024,
            stft_hop: 256,
            num_clusters: None,
            max_clusters: 8,
            kmeans_seed: 0,
        }
    }
}

/// Maximal runs of frames whose energy exceeds the peak-relative
/// threshold, with sub-gap runs merged and short runs dropped.
pub fn segment_streams(streams: &[Waveform], cfg: &ReclusterConfig) -> Vec<Vec<Segment>> {
    streams.iter().map(|w| segment_one(w, cfg)).collect()
}

fn segment_one(w: &Waveform, cfg: &ReclusterConfig) -> Vec<Segment> {
    let hop = cfg.stft_hop;
    let sr = w.sample_rate() as f64;
    let n_frames = w.len() / hop;
    if n_frames == 0 {
        return Vec::new();
    }
    let energy_db: Vec<f64> = (0..n_frames)
        .map(|i| {
            let frame = &w.samples()[i * hop..(i + 1) * hop];
            let p = frame.iter().map(|s| s * s).sum::<f64>() / hop as f64;
            10.0 * (p + 1e-20).log10()
        })
        .collect();
    let peak = energy_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak <= 10.0 * 1e-19f64.log10() {
        return Vec::new(); // silent stream
    }
    let threshold = peak - cfg.vad_threshold_db;

    // active runs in frames
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &e) in energy_db.iter().enumerate() {
        if e > threshold {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            runs.push((s, i));
        }
    }
    if let Some(s) = start {
        runs.push((s, n_frames));
    }

    // merge sub-gap runs, then enforce the minimum duration
    let gap_frames = (cfg.merge_gap_s * sr / hop as f64).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in runs {
        match merged.last_mut() {
            Some((_, pe)) if s.saturating_sub(*pe) < gap_frames => *pe = e,
            _ => merged.push((s, e)),
        }
    }
    let hop_s = hop as f64 / sr;
    let kept = merged
        .into_iter()
        .filter(|(s, e)| (e - s) as f64 * hop_s >= cfg.min_segment_s);

    // pad both ends, then re-merge anything the padding made overlap
    let pad = (cfg.segment_pad_s / hop_s).round() as usize;
    let mut padded: Vec<(usize, usize)> = Vec::new();
    for (s, e) in kept {
        let (s, e) = (s.saturating_sub(pad), (e + pad).min(n_frames));
        match padded.last_mut() {
            Some((_, pe)) if s <= *pe => *pe = e,
            _ => padded.push((s, e)),
        }
    }
    padded
        .into_iter()
        .map(|(s, e)| Segment { onset: s as f64 * hop_s, offset: e as f64 * hop_s })
        .collect()
}

/// Deterministic statistics embedding of a waveform slice: per-mel-band
/// mean and standard deviation of the log-mel features, means centered
/// across bands, unit-normalized.
pub fn embed_waveform(w: &Waveform, cfg: &ReclusterConfig) -> Result<Vec<f64>> {
    if w.len() < cfg.stft_frame_len {
        return Err(Error::InvalidArgument(format!(
            "segment of {} samples is too short to embed (need {})",
            w.len(),
            cfg.stft_frame_len
        )));
    }
    let spec = stft(w, cfg.stft_frame_len, cfg.stft_hop)?;
    let feats = compute_fbank(&magnitude(&spec), cfg.n_mels)?.feats;
    let frames = feats.nrows() as f64;
    let d = feats.ncols();
    let mut means = vec![0.0f64; d];
    let mut stds = vec![0.0f64; d];
    for b in 0..d {
        let col = feats.column(b);
        let m = col.iter().sum::<f64>() / frames;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / frames;
        means[b] = m;
        stds[b] = var.sqrt();
    }
    // centering strips the common loudness/floor offset so spectrally
    // different segments stop looking alike
    let grand = means.iter().sum::<f64>() / d as f64;
    means.iter_mut().for_each(|m| *m -= grand);

    let mut v: Vec<f64> = means.into_iter().chain(stds).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("degenerate silent segment".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Embeds one segment of a stream.
pub fn embed_segment(
    stream: &Waveform,
    stream_idx: usize,
    seg: &Segment,
    cfg: &ReclusterConfig,
) -> Result<SegmentEmbedding> {
    let sr = stream.sample_rate() as f64;
    let slice = stream.slice((seg.onset * sr) as usize, (seg.offset * sr) as usize);
    Ok(SegmentEmbedding {
        vector: embed_waveform(&slice, cfg)?,
        stream: stream_idx,
        onset: seg.onset,
        offset: seg.offset,
    })
}

/// Exactly symmetric cosine-similarity matrix with unit diagonal.
pub fn affinity_matrix(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        a[[i, i]] = 1.0;
        for j in i + 1..n {
            let c = cosine(points.row(i).as_slice().unwrap(), points.row(j).as_slice().unwrap());
            a[[i, j]] = c;
            a[[j, i]] = c;
        }
    }
    a
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Spectral clustering: cosine affinity, symmetric normalized Laplacian,
/// the eigenvectors of the smallest eigenvalues, then seeded k-means.
/// When `k` is absent it is chosen at the largest eigengap, capped by
/// `max_k`.
pub fn spectral_cluster(
    points: &Array2<f64>,
    k: Option<usize>,
    max_k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("spectral clustering needs at least 2 points".into()));
    }
    if let Some(k) = k {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("k={k} outside 1..={n}")));
        }
    }

    let aff = affinity_matrix(points);
    // nonnegative weights, sharpened: cubing suppresses the weak
    // cross-speaker similarity that log-mel leakage leaves behind, while
    // within-cluster values stay near one. The unit diagonal keeps every
    // degree >= 1.
    let w = aff.mapv(|c| c.max(0.0).powi(3));
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    for i in 0..n {
        for j in 0..n {
            let norm = w[[i, j]] / (deg[i] * deg[j]).sqrt();
            lap[(i, j)] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    // exact symmetry despite rounding
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (lap[(i, j)] + lap[(j, i)]);
            lap[(i, j)] = m;
            lap[(j, i)] = m;
        }
    }

    let eig = nalgebra::SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let k = match k {
        Some(k) => k,
        None => {
            let limit = max_k.max(1).min(n - 1);
            let mut best_k = 1;
            let mut best_gap = f64::NEG_INFINITY;
            for i in 1..=limit {
                let gap = eig.eigenvalues[order[i]] - eig.eigenvalues[order[i - 1]];
                if gap > best_gap {
                    best_gap = gap;
                    best_k = i;
                }
            }
            best_k
        }
    };

    // spectral embedding: rows over the k bottom eigenvectors, row-normalized
    let mut emb = Array2::<f64>::zeros((n, k));
    for (c, &ei) in order.iter().take(k).enumerate() {
        for r in 0..n {
            emb[[r, c]] = eig.eigenvectors[(r, ei)];
        }
    }
    for mut row in emb.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            row.mapv_inplace(|v| v / norm);
        }
    }

    let labels = kmeans(&emb, k, seed);
    Ok(relabel_by_first_appearance(labels))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's iterations with farthest-point initialization. The first center
/// is the point farthest from the global mean, which keeps the result
/// stable under input permutation for separated data.
fn kmeans(points: &Array2<f64>, k: usize, _seed: u64) -> Vec<usize> {
    let n = points.nrows();
    let d = points.ncols();
    let mean: Vec<f64> = (0..d)
        .map(|c| points.column(c).sum() / n as f64)
        .collect();

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = (0..n)
        .max_by(|&a, &b| {
            sq_dist(points.row(a).as_slice().unwrap(), &mean)
                .total_cmp(&sq_dist(points.row(b).as_slice().unwrap(), &mean))
        })
        .unwrap();
    centers.push(points.row(first).to_vec());
    while centers.len() < k {
        let next = (0..n)
            .max_by(|&a, &b| {
                let da = centers
                    .iter()
                    .map(|c| sq_dist(points.row(a).as_slice().unwrap(), c))
                    .fold(f64::INFINITY, f64::min);
                let db = centers
                    .iter()
                    .map(|c| sq_dist(points.row(b).as_slice().unwrap(), c))
                    .fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centers.push(points.row(next).to_vec());
    }

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        for (i, l) in labels.iter_mut().enumerate() {
            *l = centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    sq_dist(points.row(i).as_slice().unwrap(), a)
                        .total_cmp(&sq_dist(points.row(i).as_slice().unwrap(), b))
                })
                .unwrap()
                .0;
        }
        let mut moved: f64 = 0.0;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                // deterministic re-seed on the farthest point overall
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(points.row(a).as_slice().unwrap(), center)
                            .total_cmp(&sq_dist(points.row(b).as_slice().unwrap(), center))
                    })
                    .unwrap();
                *center = points.row(far).to_vec();
                moved = f64::INFINITY;
                continue;
            }
            let mut new_center = vec![0.0f64; d];
            for &i in &members {
                for (nc, v) in new_center.iter_mut().zip(points.row(i)) {
                    *nc += v;
                }
            }
            new_center.iter_mut().for_each(|v| *v /= members.len() as f64);
            moved += sq_dist(center, &new_center);
            *center = new_center;
        }
        if moved < 1e-6 {
            break;
        }
    }
    labels
}

fn relabel_by_first_appearance(labels: Vec<usize>) -> Vec<usize> {
    let mut remap: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut next = 0usize;
    labels
        .into_iter()
        .map(|l| {
            *remap.entry(l).or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

/// Builds a refreshed global prior from separated streams: VAD segments
/// per stream, one embedding per segment, spectral clustering, and the
/// cluster labels become the new global speakers.
pub fn recluster(streams: &[Waveform], cfg: &ReclusterConfig) -> Result<GlobalPrior> {
    if streams.is_empty() {
        return Err(Error::InvalidArgument("no streams to recluster".into()));
    }
    let segments = segment_streams(streams, cfg);
    let mut embeddings: Vec<SegmentEmbedding> = Vec::new();
    for (si, segs) in segments.iter().enumerate() {
        for seg in segs {
            embeddings.push(embed_segment(&streams[si], si, seg, cfg)?);
        }
    }
    if embeddings.is_empty() {
        return Err(Error::InvalidArgument("no speech detected".into()));
    }
    let max_len = streams.iter().map(|s| s.len()).max().unwrap();
    let t_frames = num_frames(max_len, cfg.stft_hop);
    prior_from_embeddings(&embeddings, t_frames, streams[0].sample_rate(), cfg)
}

fn prior_from_embeddings(
    embeddings: &[SegmentEmbedding],
    t_frames: usize,
    sample_rate: u32,
    cfg: &ReclusterConfig,
) -> Result<GlobalPrior> {
    let labels = if embeddings.len() == 1 {
        vec![0usize]
    } else {
        let d = embeddings[0].vector.len();
        let mut points = Array2::<f64>::zeros((embeddings.len(), d));
        for (i, e) in embeddings.iter().enumerate() {
            points.row_mut(i).assign(&ndarray::ArrayView1::from(&e.vector));
        }
        spectral_cluster(&points, cfg.num_clusters, cfg.max_clusters, cfg.kmeans_seed)?
    };
    let n_clusters = labels.iter().copied().max().unwrap() + 1;

    let hop_s = cfg.stft_hop as f64 / sample_rate as f64;
    let mut activity = Array2::<u8>::zeros((n_clusters, t_frames));
    for (e, &label) in embeddings.iter().zip(&labels) {
        let a = (e.onset / hop_s + 1e-9).floor() as usize;
        let b = ((e.offset / hop_s - 1e-9).ceil() as usize).min(t_frames);
        for t in a..b {
            activity[[label, t]] = 1;
        }
    }
    GlobalPrior::new(
        activity,
        hop_s,
        (0..n_clusters).map(|c| format!("spk{c:02}")).collect(),
    )
}

/// One row of the segment-manifest JSON that keys external embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub stream: usize,
    pub onset: f64,
    pub offset: f64,
}

pub fn write_segment_manifest(path: &std::path::Path, refs: &[SegmentRef]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(refs)?)?;
    Ok(())
}

pub fn read_segment_manifest(path: &std::path::Path) -> Result<Vec<SegmentRef>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Re-clusters with externally produced embeddings instead of the built-in
/// statistics extractor: a rank-2 DCFT tensor (one row per manifest entry)
/// keyed by the segment manifest. Streams supply the timeline length.
pub fn recluster_external(
    streams: &[Waveform],
    manifest: &[SegmentRef],
    embedding_file: &std::path::Path,
    cfg: &ReclusterConfig,
) -> Result<GlobalPrior> {
    if streams.is_empty() {
        return Err(Error::InvalidArgument("no streams to recluster".into()));
    }
    if manifest.is_empty() {
        return Err(Error::InvalidArgument("no speech detected".into()));
    }
    let tensor = crate::dcft::read(embedding_file)?;
    let vectors = tensor.to_array2()?;
    if vectors.nrows() != manifest.len() {
        return Err(Error::InvalidArgument(format!(
            "embedding tensor has {} rows but the manifest lists {} segments",
            vectors.nrows(),
            manifest.len()
        )));
    }
    let embeddings: Vec<SegmentEmbedding> = manifest
        .iter()
        .zip(vectors.rows())
        .map(|(r, row)| {
            if r.stream >= streams.len() {
                return Err(Error::InvalidArgument(format!(
                    "manifest names stream {} but only {} exist",
                    r.stream,
                    streams.len()
                )));
            }
            Ok(SegmentEmbedding {
                vector: row.to_vec(),
                stream: r.stream,
                onset: r.onset,
                offset: r.offset,
            })
        })
        .collect::<Result<_>>()?;
    let max_len = streams.iter().map(|s| s.len()).max().unwrap();
    let t_frames = num_frames(max_len, cfg.stft_hop);
    prior_from_embeddings(&embeddings, t_frames, streams[0].sample_rate(), cfg)
}
