//! Training/validation corpora of (original, reference) pairs, including the
//! frequency-domain harmonic-removal and mismatch-removal reference oracles.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{dft, idft_real};
use crate::signal::{
    alias_frequency, sample_frontend, ChannelSet, FrontEndConfig, WaveformSpec,
};

/// Half-width of the bin clusters zeroed/rescaled by the reference oracles.
pub const REF_CLUSTER: usize = 2;
/// Default highest harmonic removed by the linearization reference.
pub const DEFAULT_MAX_HARMONIC: usize = 5;

/// One (distorted, reference) training example.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    /// One sequence for linearization; n_channels sequences for matching.
    pub original: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub spec: WaveformSpec,
    /// Hash of the generating front-end configuration.
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Linearization,
    Matching,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub kind: CorpusKind,
    pub pairs: Vec<DataPair>,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    /// Rate of the sequences the net consumes: channel rate for
    /// linearization, aggregate rate for matching references.
    pub sample_rate: f64,
    pub n_channels: usize,
    pub rng_seed: u64,
}

impl Corpus {
    pub fn train_pairs(&self) -> impl Iterator<Item = &DataPair> {
        self.train_idx.iter().map(|&i| &self.pairs[i])
    }

    pub fn valid_pairs(&self) -> impl Iterator<Item = &DataPair> {
        self.valid_idx.iter().map(|&i| &self.pairs[i])
    }

    /// RMS of all training originals; the training normalization constant
    /// derives from it.
    pub fn train_rms(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for p in self.train_pairs() {
            for seq in &p.original {
                sum += seq.iter().map(|v| v * v).sum::<f64>();
                n += seq.len();
            }
        }
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}

/// Stable hex digest of a front-end configuration.
pub fn config_hash(cfg: &FrontEndConfig) -> String {
    let mut h = Sha256::new();
    h.update(format!("{cfg:?}"));
    hex::encode(&h.finalize()[..8])
}

fn bin_of(f: f64, sample_rate: f64, n: usize) -> usize {
    (alias_frequency(f, sample_rate) / sample_rate * n as f64).round() as usize
}

fn clusters_overlap(a: usize, b: usize, guard: usize) -> bool {
    a.abs_diff(b) <= 2 * guard
}

/// Zeroes the +/- conjugate clusters around `bin` in a full spectrum and
/// returns the removed power (|X|^2 sum).
fn zero_cluster(spec: &mut [rustfft::num_complex::Complex<f64>], bin: usize) -> f64 {
    let n = spec.len();
    let mut removed = 0.0;
    for k in bin.saturating_sub(REF_CLUSTER)..=(bin + REF_CLUSTER).min(n / 2) {
        for idx in [k, (n - k) % n] {
            removed += spec[idx].norm_sqr();
            spec[idx] = rustfft::num_complex::Complex::new(0.0, 0.0);
        }
    }
    removed
}

/// Removes harmonic distortion in the frequency domain and folds the removed
/// power back into the fundamental, preserving total signal power.
pub fn harmonic_removal_reference(
    x: &[f64],
    f0: f64,
    sample_rate: f64,
    max_harmonic: usize,
) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 64 {
        return Err(Error::Range(format!("sequence too short: {n}")));
    }
    let b0 = bin_of(f0, sample_rate, n);
    if b0 <= 2 * REF_CLUSTER {
        return Err(Error::Range(format!(
            "fundamental bin {b0} too close to DC"
        )));
    }
    let mut spec = dft(x);
    // Locate harmonic clusters at the aliased images of k*f0.
    let mut harmonic_bins = Vec::new();
    for k in 2..=max_harmonic {
        let bk = bin_of(k as f64 * f0, sample_rate, n);
        if bk <= REF_CLUSTER {
            continue; // folded onto DC, not separable
        }
        if clusters_overlap(b0, bk, REF_CLUSTER) {
            return Err(Error::Ambiguity(format!(
                "harmonic {k} cluster (bin {bk}) collides with fundamental (bin {b0})"
            )));
        }
        harmonic_bins.push(bk);
    }
    harmonic_bins.sort_unstable();
    harmonic_bins.dedup();
    let mut removed = 0.0;
    for &bk in &harmonic_bins {
        removed += zero_cluster(&mut spec, bk);
    }
    // Fundamental power over both conjugate halves.
    let mut p_fund = 0.0;
    for k in b0 - REF_CLUSTER..=(b0 + REF_CLUSTER).min(n / 2) {
        p_fund += spec[k].norm_sqr() + spec[(n - k) % n].norm_sqr();
    }
    if p_fund <= 0.0 {
        return Err(Error::Ambiguity("no fundamental power".into()));
    }
    let scale = ((p_fund + removed) / p_fund).sqrt();
    for k in b0 - REF_CLUSTER..=(b0 + REF_CLUSTER).min(n / 2) {
        spec[k] *= scale;
        let conj = (n - k) % n;
        if conj != k {
            spec[conj] *= scale;
        }
    }
    Ok(idft_real(&mut spec))
}

/// Removes time-interleaving mismatch spurs (images of +/-f0 around the
/// channel-rate multiples) and folds their power into the fundamental.
pub fn matching_reference(
    x_interleaved: &[f64],
    f0: f64,
    sample_rate: f64,
    n_channels: usize,
) -> Result<Vec<f64>> {
    let n = x_interleaved.len();
    if n < 64 {
        return Err(Error::Range(format!("sequence too short: {n}")));
    }
    if n_channels < 2 {
        return Err(Error::Config("matching reference needs n_channels >= 2".into()));
    }
    let b0 = bin_of(f0, sample_rate, n);
    if b0 <= 2 * REF_CLUSTER {
        return Err(Error::Range(format!("fundamental bin {b0} too close to DC")));
    }
    let mut spec = dft(x_interleaved);
    let mut spur_bins = Vec::new();
    for m in 1..n_channels {
        let base = m as f64 * sample_rate / n_channels as f64;
        for f in [base + f0, base - f0, base] {
            let b = bin_of(f.abs(), sample_rate, n);
            if b <= REF_CLUSTER {
                continue; // offset-mismatch line folded onto DC
            }
            if clusters_overlap(b0, b, REF_CLUSTER) {
                return Err(Error::Ambiguity(format!(
                    "mismatch spur (bin {b}) collides with fundamental (bin {b0})"
                )));
            }
            spur_bins.push(b);
        }
    }
    spur_bins.sort_unstable();
    spur_bins.dedup();
    let mut removed = 0.0;
    for &b in &spur_bins {
        removed += zero_cluster(&mut spec, b);
    }
    let mut p_fund = 0.0;
    for k in b0 - REF_CLUSTER..=(b0 + REF_CLUSTER).min(n / 2) {
        p_fund += spec[k].norm_sqr() + spec[(n - k) % n].norm_sqr();
    }
    if p_fund <= 0.0 {
        return Err(Error::Ambiguity("no fundamental power".into()));
    }
    let scale = ((p_fund + removed) / p_fund).sqrt();
    for k in b0 - REF_CLUSTER..=(b0 + REF_CLUSTER).min(n / 2) {
        spec[k] *= scale;
        let conj = (n - k) % n;
        if conj != k {
            spec[conj] *= scale;
        }
    }
    Ok(idft_real(&mut spec))
}

/// Ideal linearly-sampled, mismatch-free, noise-free waveform on the
/// aggregate grid, scaled by the front-end's small-signal gain. Serves as an
/// independent oracle against the frequency-domain references.
pub fn analytic_reference(spec: &WaveformSpec, cfg: &FrontEndConfig, n: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    cfg.validate()?;
    let slope = cfg.mzm.extinction * PI * cfg.mzm.bias_error.cos() / (2.0 * cfg.mzm.v_pi);
    let ts = 1.0 / cfg.sample_rate;
    Ok((0..n).map(|k| slope * spec.sample(k as f64 * ts)).collect())
}

/// Corpus-generation knobs beyond the front-end chain itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    /// Per-sequence length (per channel for matching).
    pub len: usize,
    /// Excluded frequency band (Hz) on the aggregate axis.
    pub exclude_band: Option<(f64, f64)>,
    /// Amplitude draw range in dBm.
    pub amp_dbm: (f64, f64),
    /// Matching originals draw linear amplitudes in this range instead.
    pub amp_linear: (f64, f64),
    pub max_harmonic: usize,
    /// Snap drawn tones to exact DFT bins (avoids leakage at short records).
    pub snap_to_bins: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            len: 1000,
            exclude_band: Some((4e9, 6e9)),
            amp_dbm: (-2.0, 15.0),
            amp_linear: (0.05, 0.8),
            max_harmonic: DEFAULT_MAX_HARMONIC,
            snap_to_bins: true,
        }
    }
}

fn default_split(n_pairs: usize) -> (usize, usize) {
    // A 417-pair corpus splits 367/50; other sizes keep the same proportion.
    let n_valid = ((n_pairs as f64 * 50.0 / 417.0).round() as usize)
        .max(1)
        .min(n_pairs.saturating_sub(1).max(1));
    (n_pairs - n_valid, n_valid)
}

/// Uniform draw over (0, fs/2) minus the excluded band, snapped to an exact
/// DFT bin of an `len`-sample record at `record_rate`.
fn draw_frequency(
    rng: &mut ChaCha8Rng,
    aggregate_rate: f64,
    record_rate: f64,
    len: usize,
    opts: &CorpusOptions,
) -> Result<f64> {
    let lo = aggregate_rate / 2.0 * 0.01;
    let hi = aggregate_rate / 2.0 * 0.99;
    if let Some((a, b)) = opts.exclude_band {
        if a <= lo && b >= hi {
            return Err(Error::Config("excluded band covers the whole range".into()));
        }
    }
    for _ in 0..1000 {
        let f = rng.gen_range(lo..hi);
        if let Some((a, b)) = opts.exclude_band {
            if f >= a && f <= b {
                continue;
            }
        }
        let f = if opts.snap_to_bins {
            let bin = (f * len as f64 / record_rate).round();
            bin * record_rate / len as f64
        } else {
            f
        };
        if let Some((a, b)) = opts.exclude_band {
            if f >= a && f <= b {
                continue;
            }
        }
        // Keep the aliased fundamental clear of DC and Nyquist.
        let b0 = bin_of(f, record_rate, len);
        if b0 <= 2 * REF_CLUSTER + 1 || b0 >= len / 2 - (2 * REF_CLUSTER + 1) {
            continue;
        }
        if f > lo {
            return Ok(f);
        }
    }
    Err(Error::Config("could not draw a usable frequency".into()))
}

/// Single-channel view of the chain at the per-channel rate; the grid the
/// linearization net trains and deploys on.
pub fn channel_view(cfg: &FrontEndConfig) -> FrontEndConfig {
    let mut ch_cfg = cfg.clone();
    ch_cfg.sample_rate = cfg.channel_rate();
    ch_cfg.n_channels = 1;
    ch_cfg.mismatches = vec![crate::signal::MismatchProfile::identity()];
    ch_cfg
}

/// Sine corpus for the linearization net: single-channel records at the
/// per-channel rate, references from the harmonic-removal oracle.
pub fn gen_linearization_corpus(
    cfg: &FrontEndConfig,
    n_pairs: usize,
    rng_seed: u64,
    opts: &CorpusOptions,
) -> Result<Corpus> {
    cfg.validate()?;
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be >= 1".into()));
    }
    let channel_rate = cfg.channel_rate();
    let ch_cfg = channel_view(cfg);
    let hash = config_hash(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut attempts = 0;
    while pairs.len() < n_pairs {
        attempts += 1;
        if attempts > 50 * n_pairs {
            return Err(Error::Config("corpus generation kept colliding".into()));
        }
        let f = draw_frequency(&mut rng, cfg.sample_rate, channel_rate, opts.len, opts)?;
        let dbm = rng.gen_range(opts.amp_dbm.0..=opts.amp_dbm.1);
        let mut spec = WaveformSpec::sine_dbm(f, dbm);
        spec.phase = rng.gen_range(0.0..2.0 * PI);
        let mut pair_cfg = ch_cfg.clone();
        pair_cfg.rng_seed = rng_seed ^ pairs.len() as u64;
        let sampled = sample_frontend(&spec, &pair_cfg, opts.len)?;
        let original = sampled.channels[0].clone();
        let reference =
            match harmonic_removal_reference(&original, f, channel_rate, opts.max_harmonic) {
                Ok(r) => r,
                Err(Error::Ambiguity(_)) | Err(Error::Range(_)) => continue, // redraw
                Err(e) => return Err(e),
            };
        pairs.push(DataPair {
            original: vec![original],
            reference,
            spec,
            config_hash: hash.clone(),
        });
    }
    let (n_train, n_valid) = default_split(n_pairs);
    let mut corpus = Corpus {
        kind: CorpusKind::Linearization,
        pairs,
        train_idx: Vec::new(),
        valid_idx: Vec::new(),
        sample_rate: channel_rate,
        n_channels: 1,
        rng_seed,
    };
    let split = split_dataset(&corpus, n_train, n_valid, rng_seed)?;
    corpus.train_idx = split.0;
    corpus.valid_idx = split.1;
    Ok(corpus)
}

/// Matching-net corpus: clean tones split over N mismatched channels, with
/// the clean interleaved tone as reference.
pub fn gen_matching_corpus(
    cfg: &FrontEndConfig,
    n_pairs: usize,
    rng_seed: u64,
    opts: &CorpusOptions,
) -> Result<Corpus> {
    cfg.validate()?;
    if cfg.n_channels < 2 {
        return Err(Error::Config("matching corpus needs n_channels >= 2".into()));
    }
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be >= 1".into()));
    }
    let n = cfg.n_channels;
    let ref_len = opts.len * n;
    let fs = cfg.sample_rate;
    let hash = config_hash(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x6e6f_6973);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut attempts = 0;
    while pairs.len() < n_pairs {
        attempts += 1;
        if attempts > 50 * n_pairs {
            return Err(Error::Config("corpus generation kept colliding".into()));
        }
        let f = draw_frequency(&mut rng, fs, fs, ref_len, opts)?;
        // Reject tones whose mismatch spurs sit on the fundamental.
        let b0 = bin_of(f, fs, ref_len);
        let mut collides = false;
        for m in 1..n {
            let base = m as f64 * fs / n as f64;
            for fspur in [base + f, base - f] {
                let b = bin_of(fspur.abs(), fs, ref_len);
                if clusters_overlap(b0, b, REF_CLUSTER + 2) {
                    collides = true;
                }
            }
        }
        if collides {
            continue;
        }
        let amp = rng.gen_range(opts.amp_linear.0..=opts.amp_linear.1);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let mut spec = WaveformSpec::sine(f, amp);
        spec.phase = phase;
        let ts = 1.0 / fs;
        let reference: Vec<f64> = (0..ref_len).map(|k| spec.sample(k as f64 * ts)).collect();
        let mut original = Vec::with_capacity(n);
        for m in 0..n {
            let mm = &cfg.mismatches[m];
            let ch: Vec<f64> = (0..opts.len)
                .map(|j| {
                    let t = (j * n + m) as f64 * ts + mm.delay;
                    let noise = if cfg.noise_sigma > 0.0 {
                        cfg.noise_sigma * noise_rng.sample::<f64, _>(rand_distr::StandardNormal)
                    } else {
                        0.0
                    };
                    mm.gain * spec.sample(t) + mm.offset + noise
                })
                .collect();
            original.push(ch);
        }
        pairs.push(DataPair {
            original,
            reference,
            spec,
            config_hash: hash.clone(),
        });
    }
    let (n_train, n_valid) = default_split(n_pairs);
    let mut corpus = Corpus {
        kind: CorpusKind::Matching,
        pairs,
        train_idx: Vec::new(),
        valid_idx: Vec::new(),
        sample_rate: fs,
        n_channels: n,
        rng_seed,
    };
    let split = split_dataset(&corpus, n_train, n_valid, rng_seed)?;
    corpus.train_idx = split.0;
    corpus.valid_idx = split.1;
    Ok(corpus)
}

/// Disjoint uniform-random split, deterministic by seed. Returns
/// (train indices, validation indices).
pub fn split_dataset(
    corpus: &Corpus,
    n_train: usize,
    n_valid: usize,
    rng_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = corpus.pairs.len();
    if n_train + n_valid > n {
        return Err(Error::Config(format!(
            "split {n_train}+{n_valid} exceeds {n} pairs"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x7370_6c69_74);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let train: Vec<usize> = order[..n_train].to_vec();
    let valid: Vec<usize> = order[n_train..n_train + n_valid].to_vec();
    Ok((train, valid))
}

// ---------------------------------------------------------------------------
// Directory persistence: manifest + per-pair ChannelSet records.

fn manifest_string(corpus: &Corpus) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "kind = {}\n",
        match corpus.kind {
            CorpusKind::Linearization => "linearization",
            CorpusKind::Matching => "matching",
        }
    ));
    s.push_str(&format!("pairs = {}\n", corpus.pairs.len()));
    s.push_str(&format!("sample_rate = {}\n", corpus.sample_rate));
    s.push_str(&format!("n_channels = {}\n", corpus.n_channels));
    s.push_str(&format!("rng_seed = {}\n", corpus.rng_seed));
    if let Some(p) = corpus.pairs.first() {
        s.push_str(&format!("config_hash = {}\n", p.config_hash));
    }
    let fmt_idx = |v: &[usize]| {
        v.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    s.push_str(&format!("train_idx = {}\n", fmt_idx(&corpus.train_idx)));
    s.push_str(&format!("valid_idx = {}\n", fmt_idx(&corpus.valid_idx)));
    for (i, p) in corpus.pairs.iter().enumerate() {
        s.push_str(&format!(
            "pair.{i}.f0 = {}\npair.{i}.amplitude = {}\npair.{i}.phase = {}\n",
            p.spec.f0,
            p.spec.peak_amplitude(),
            p.spec.phase
        ));
    }
    s
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.txt"), manifest_string(corpus))?;
    for (i, p) in corpus.pairs.iter().enumerate() {
        let orig = ChannelSet {
            channels: p.original.clone(),
            sample_rate: corpus.sample_rate,
        };
        orig.save(&dir.join(format!("pair_{i:04}_original.padc")))?;
        let reference = ChannelSet {
            channels: vec![p.reference.clone()],
            sample_rate: corpus.sample_rate,
        };
        reference.save(&dir.join(format!("pair_{i:04}_reference.padc")))?;
    }
    Ok(())
}

fn parse_manifest(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(dir.join("manifest.txt"))?;
    let map = parse_manifest(&text);
    let get = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| Error::Config(format!("manifest missing key {k}")))
    };
    let kind = match get("kind")?.as_str() {
        "linearization" => CorpusKind::Linearization,
        "matching" => CorpusKind::Matching,
        other => return Err(Error::Config(format!("unknown corpus kind {other}"))),
    };
    let n_pairs: usize = get("pairs")?
        .parse()
        .map_err(|_| Error::Config("bad pairs count".into()))?;
    let sample_rate: f64 = get("sample_rate")?
        .parse()
        .map_err(|_| Error::Config("bad sample_rate".into()))?;
    let n_channels: usize = get("n_channels")?
        .parse()
        .map_err(|_| Error::Config("bad n_channels".into()))?;
    let rng_seed: u64 = get("rng_seed")?
        .parse()
        .map_err(|_| Error::Config("bad rng_seed".into()))?;
    let parse_idx = |s: &str| -> Vec<usize> {
        s.split(',')
            .filter(|t| !t.is_empty())
            .filter_map(|t| t.parse().ok())
            .collect()
    };
    let train_idx = parse_idx(get("train_idx")?);
    let valid_idx = parse_idx(get("valid_idx")?);
    let hash = map.get("config_hash").cloned().unwrap_or_default();
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let orig = ChannelSet::load(&dir.join(format!("pair_{i:04}_original.padc")))?;
        let reference = ChannelSet::load(&dir.join(format!("pair_{i:04}_reference.padc")))?;
        let f0: f64 = map
            .get(&format!("pair.{i}.f0"))
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        let amplitude: f64 = map
            .get(&format!("pair.{i}.amplitude"))
            .and_then(|v| v.parse().ok())
            .unwrap_or(1.0);
        let phase: f64 = map
            .get(&format!("pair.{i}.phase"))
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        let mut spec = WaveformSpec::sine(f0.max(f64::MIN_POSITIVE), amplitude);
        spec.phase = phase;
        pairs.push(DataPair {
            original: orig.channels,
            reference: reference.channels.into_iter().next().unwrap_or_default(),
            spec,
            config_hash: hash.clone(),
        });
    }
    Ok(Corpus {
        kind,
        pairs,
        train_idx,
        valid_idx,
        sample_rate,
        n_channels,
        rng_seed,
    })
}
