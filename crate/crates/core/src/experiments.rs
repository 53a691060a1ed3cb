//! Scripted studies: linearization validation, matching validation, the
//! multichannel expandability sweep, and full-cascade ENOB characterization.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    analytic_reference, channel_view, config_hash, gen_linearization_corpus, gen_matching_corpus,
    save_corpus, Corpus, CorpusOptions,
};
use crate::error::{Error, Result};
use crate::metrics::{power_spectrum, sinad, MetricsReport, Window};
use crate::nets::NetSpec;
use crate::nn::{Net, Optimizer};
use crate::signal::{
    alias_frequency, interleave_seqs, sample_frontend, FrontEndConfig, MismatchProfile,
    WaveformSpec,
};
use crate::training::{input_scale, train, TrainConfig, TrainHistory};

/// Shared knobs for the single-net studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub frontend: FrontEndConfig,
    pub n_pairs: usize,
    pub corpus: CorpusOptions,
    pub train: TrainConfig,
    pub net: NetSpec,
    pub out_dir: Option<PathBuf>,
}

impl StudyConfig {
    pub fn linearization(frontend: FrontEndConfig, seed: u64) -> Self {
        Self {
            frontend,
            n_pairs: 64,
            corpus: CorpusOptions::default(),
            train: TrainConfig {
                rng_seed: seed,
                ..Default::default()
            },
            net: NetSpec::linearization(seed ^ 0x6e65_74),
            out_dir: None,
        }
    }

    pub fn matching(frontend: FrontEndConfig, seed: u64) -> Self {
        let n = frontend.n_channels;
        Self {
            net: NetSpec::matching(n, seed ^ 0x6e65_74),
            ..Self::linearization(frontend, seed)
        }
    }
}

/// Before/after single-tone measurement on a held-out pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneReport {
    pub f0: f64,
    pub sinad_before_db: f64,
    pub sinad_after_db: f64,
}

/// Strongest non-tone spectral cluster relative to the carrier, dBc.
#[derive(Debug, Clone, PartialEq)]
pub struct SpurReport {
    pub spur_before_dbc: f64,
    pub spur_after_dbc: f64,
}

/// Signal-to-distortion ratio against a scale-fitted clean reference, dB.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrReport {
    pub sdr_before_db: f64,
    pub sdr_after_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationReport {
    pub history: TrainHistory,
    pub held_out: Vec<ToneReport>,
    pub dual_tone: SpurReport,
    pub lfm: SdrReport,
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingReport {
    pub history: TrainHistory,
    pub held_out: Vec<ToneReport>,
    /// Worst mismatch-image spur across held-out sines, dBc.
    pub spur: SpurReport,
    pub lfm: SdrReport,
    pub manifest: String,
}

fn db(p: f64) -> f64 {
    10.0 * p.max(f64::MIN_POSITIVE).log10()
}

fn tone_bin(f: f64, sample_rate: f64, n: usize) -> usize {
    (alias_frequency(f, sample_rate) / sample_rate * n as f64).round() as usize
}

fn cluster_sum(ps: &[f64], bin: usize, radius: usize) -> f64 {
    let hi = (bin + radius).min(ps.len() - 1);
    ps[bin.saturating_sub(radius)..=hi].iter().sum()
}

/// Level of the strongest cluster outside the listed tone clusters and the
/// DC guard, relative to the strongest tone, in dBc.
pub fn worst_spur_dbc(x: &[f64], sample_rate: f64, tones: &[f64]) -> f64 {
    let ps = power_spectrum(x, Window::Hann);
    let n = x.len();
    let radius = crate::metrics::SINAD_CLUSTER;
    let tone_bins: Vec<usize> = tones.iter().map(|&f| tone_bin(f, sample_rate, n)).collect();
    let carrier = tone_bins
        .iter()
        .map(|&b| cluster_sum(&ps, b, radius))
        .fold(0.0, f64::max);
    let mut best = 0usize;
    let mut best_p = f64::MIN;
    for (k, &p) in ps.iter().enumerate() {
        if k <= crate::metrics::DC_GUARD + radius {
            continue;
        }
        if tone_bins.iter().any(|&b| k.abs_diff(b) <= 2 * radius) {
            continue;
        }
        if p > best_p {
            best_p = p;
            best = k;
        }
    }
    db(cluster_sum(&ps, best, radius)) - db(carrier)
}

/// Fixed-cluster variant: spur level at a known frequency, dBc.
pub fn spur_at_dbc(x: &[f64], sample_rate: f64, f_tone: f64, f_spur: f64) -> f64 {
    let ps = power_spectrum(x, Window::Hann);
    let n = x.len();
    let radius = crate::metrics::SINAD_CLUSTER;
    let carrier = cluster_sum(&ps, tone_bin(f_tone, sample_rate, n), radius);
    let spur = cluster_sum(&ps, tone_bin(f_spur, sample_rate, n), radius);
    db(spur) - db(carrier)
}

/// SDR of `y` against a least-squares scaled copy of `reference`, dB.
pub fn fitted_sdr_db(y: &[f64], reference: &[f64]) -> f64 {
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return f64::NAN;
    }
    let yr: f64 = y.iter().zip(reference).map(|(a, b)| a * b).sum();
    let a = yr / rr;
    let mut res = 0.0;
    for (v, r) in y.iter().zip(reference) {
        let d = v - a * r;
        res += d * d;
    }
    db(a * a * rr) - db(res)
}

fn study_manifest(tag: &str, cfg: &StudyConfig) -> String {
    format!(
        "study = {tag}\nconfig_hash = {}\nn_pairs = {}\nsteps = {}\nvalidation_every = {}\n\
         learning_rate = {}\ntrain_seed = {}\nnet_seed = {}\ncorpus_len = {}\n",
        config_hash(&cfg.frontend),
        cfg.n_pairs,
        cfg.train.steps,
        cfg.train.validation_every,
        cfg.train.learning_rate,
        cfg.train.rng_seed,
        cfg.net.rng_seed,
        cfg.corpus.len,
    )
}

fn write_study_outputs(
    dir: &Path,
    manifest: &str,
    corpus: &Corpus,
    held_out: &[ToneReport],
    spectra: Option<(&MetricsReport, &MetricsReport)>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    save_corpus(corpus, &dir.join("corpus"))?;
    let mut csv = String::from("f0_hz,sinad_before_db,sinad_after_db\n");
    for r in held_out {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.f0, r.sinad_before_db, r.sinad_after_db
        ));
    }
    std::fs::write(dir.join("held_out.csv"), csv)?;
    if let Some((before, after)) = spectra {
        std::fs::write(dir.join("spectrum_before.csv"), before.spectrum_to_csv())?;
        std::fs::write(dir.join("spectrum_after.csv"), after.spectrum_to_csv())?;
    }
    Ok(())
}

/// Picks a test frequency inside the usable band, snapped to an exact bin.
fn exact_bin_freq(target: f64, sample_rate: f64, n: usize) -> f64 {
    (target * n as f64 / sample_rate).round() * sample_rate / n as f64
}

/// Trains a linearization net and evaluates on held-out sines plus dual-tone
/// and LFM waveforms the net never saw in training.
pub fn run_linearization_study(cfg: &StudyConfig) -> Result<LinearizationReport> {
    if cfg.net.kind != crate::nn::NetKind::Linearization {
        return Err(Error::Config("study needs a linearization net spec".into()));
    }
    let corpus = gen_linearization_corpus(&cfg.frontend, cfg.n_pairs, cfg.train.rng_seed, &cfg.corpus)?;
    let mut net = cfg.net.build()?;
    let mut opt = Optimizer::new(cfg.train.algorithm, cfg.train.learning_rate, net.n_params());
    let train_dir = cfg.out_dir.as_ref().map(|d| d.join("train"));
    let history = train(
        &mut net,
        &mut opt,
        &corpus,
        &cfg.train,
        0,
        train_dir.as_deref(),
    )?;
    let scale = input_scale(&corpus, cfg.train.target_rms)?;
    let ch_rate = corpus.sample_rate;
    // Held-out sines.
    let mut held_out = Vec::new();
    let mut spectra = None;
    for p in corpus.valid_pairs().take(10) {
        let before = sinad(&p.original[0], ch_rate)?;
        let input: Vec<f64> = p.original[0].iter().map(|v| v * scale).collect();
        let y = net.forward(&[input])?;
        let after = sinad(&y, ch_rate)?;
        if spectra.is_none() {
            spectra = Some((
                MetricsReport::compute(&p.original[0], ch_rate)?,
                MetricsReport::compute(&y, ch_rate)?,
            ));
        }
        held_out.push(ToneReport {
            f0: p.spec.f0,
            sinad_before_db: before,
            sinad_after_db: after,
        });
    }
    // Dual-tone generalization: intermodulation spurs before/after.
    let len = cfg.corpus.len;
    let ch_cfg = channel_view(&cfg.frontend);
    let f0 = exact_bin_freq(0.085 * ch_rate, ch_rate, len);
    let f1 = exact_bin_freq(0.115 * ch_rate, ch_rate, len);
    let dt_spec = WaveformSpec::dual_tone(f0, f1, 0.6);
    let dt = sample_frontend(&dt_spec, &ch_cfg, len)?;
    let dt_in = &dt.channels[0];
    let dt_scaled: Vec<f64> = dt_in.iter().map(|v| v * scale).collect();
    let dt_out = net.forward(&[dt_scaled])?;
    let dual_tone = SpurReport {
        spur_before_dbc: worst_spur_dbc(dt_in, ch_rate, &[f0, f1]),
        spur_after_dbc: worst_spur_dbc(&dt_out, ch_rate, &[f0, f1]),
    };
    // LFM generalization: SDR against the analytic linear response.
    let t_total = len as f64 / ch_rate;
    let lfm_spec = WaveformSpec::lfm(0.05 * ch_rate, 0.35 * ch_rate, 0.6, t_total);
    let lfm = sample_frontend(&lfm_spec, &ch_cfg, len)?;
    let lfm_in = &lfm.channels[0];
    let lfm_ref = analytic_reference(&lfm_spec, &ch_cfg, len)?;
    let lfm_scaled: Vec<f64> = lfm_in.iter().map(|v| v * scale).collect();
    let lfm_out = net.forward(&[lfm_scaled])?;
    let lfm_report = SdrReport {
        sdr_before_db: fitted_sdr_db(lfm_in, &lfm_ref),
        sdr_after_db: fitted_sdr_db(&lfm_out, &lfm_ref),
    };
    let manifest = study_manifest("linearization", cfg);
    if let Some(dir) = &cfg.out_dir {
        write_study_outputs(
            dir,
            &manifest,
            &corpus,
            &held_out,
            spectra.as_ref().map(|(a, b)| (a, b)),
        )?;
    }
    Ok(LinearizationReport {
        history,
        held_out,
        dual_tone,
        lfm: lfm_report,
        manifest,
    })
}

/// Synthesizes mismatched channel records for an arbitrary waveform on the
/// aggregate grid (linear small-signal path, matching the matching corpus).
fn mismatched_channels(
    spec: &WaveformSpec,
    cfg: &FrontEndConfig,
    channel_len: usize,
) -> Vec<Vec<f64>> {
    let n = cfg.n_channels;
    let ts = 1.0 / cfg.sample_rate;
    (0..n)
        .map(|m| {
            let mm = &cfg.mismatches[m];
            (0..channel_len)
                .map(|j| mm.gain * spec.sample((j * n + m) as f64 * ts + mm.delay) + mm.offset)
                .collect()
        })
        .collect()
}

/// Trains a matching net on a mismatched corpus and measures mismatch-spur
/// suppression on held-out sines plus an LFM chirp.
pub fn run_matching_study(cfg: &StudyConfig) -> Result<MatchingReport> {
    if cfg.net.kind != crate::nn::NetKind::Matching {
        return Err(Error::Config("study needs a matching net spec".into()));
    }
    let n = cfg.frontend.n_channels;
    if cfg.net.n_inputs != n {
        return Err(Error::Config(format!(
            "net takes {} inputs but front end has {n} channels",
            cfg.net.n_inputs
        )));
    }
    let corpus = gen_matching_corpus(&cfg.frontend, cfg.n_pairs, cfg.train.rng_seed, &cfg.corpus)?;
    let mut net = cfg.net.build()?;
    let mut opt = Optimizer::new(cfg.train.algorithm, cfg.train.learning_rate, net.n_params());
    let train_dir = cfg.out_dir.as_ref().map(|d| d.join("train"));
    let history = train(
        &mut net,
        &mut opt,
        &corpus,
        &cfg.train,
        0,
        train_dir.as_deref(),
    )?;
    let scale = input_scale(&corpus, cfg.train.target_rms)?;
    let fs = corpus.sample_rate;
    let mut held_out = Vec::new();
    let mut spectra = None;
    let mut spur_before: f64 = f64::NEG_INFINITY;
    let mut spur_after: f64 = f64::NEG_INFINITY;
    for p in corpus.valid_pairs().take(10) {
        let merged = interleave_seqs(&p.original);
        let before = sinad(&merged, fs)?;
        let inputs: Vec<Vec<f64>> = p
            .original
            .iter()
            .map(|seq| seq.iter().map(|v| v * scale).collect())
            .collect();
        let y = net.forward(&inputs)?;
        let after = sinad(&y, fs)?;
        // Worst mismatch-image spur across channel-rate harmonics.
        for m in 1..n {
            let f_img = (m as f64 * fs / n as f64 - p.spec.f0).abs();
            spur_before = spur_before.max(spur_at_dbc(&merged, fs, p.spec.f0, f_img));
            spur_after = spur_after.max(spur_at_dbc(&y, fs, p.spec.f0, f_img));
        }
        if spectra.is_none() {
            spectra = Some((
                MetricsReport::compute(&merged, fs)?,
                MetricsReport::compute(&y, fs)?,
            ));
        }
        held_out.push(ToneReport {
            f0: p.spec.f0,
            sinad_before_db: before,
            sinad_after_db: after,
        });
    }
    // LFM: mismatch sidebands against the clean chirp.
    let ref_len = cfg.corpus.len * n;
    let t_total = ref_len as f64 / fs;
    let lfm_spec = WaveformSpec::lfm(0.05 * fs, 0.35 * fs, 0.4, t_total);
    let channels = mismatched_channels(&lfm_spec, &cfg.frontend, cfg.corpus.len);
    let ts = 1.0 / fs;
    let clean: Vec<f64> = (0..ref_len).map(|k| lfm_spec.sample(k as f64 * ts)).collect();
    let merged = interleave_seqs(&channels);
    let inputs: Vec<Vec<f64>> = channels
        .iter()
        .map(|seq| seq.iter().map(|v| v * scale).collect())
        .collect();
    let y = net.forward(&inputs)?;
    let lfm_report = SdrReport {
        sdr_before_db: fitted_sdr_db(&merged, &clean),
        sdr_after_db: fitted_sdr_db(&y, &clean),
    };
    let manifest = study_manifest("matching", cfg);
    if let Some(dir) = &cfg.out_dir {
        write_study_outputs(
            dir,
            &manifest,
            &corpus,
            &held_out,
            spectra.as_ref().map(|(a, b)| (a, b)),
        )?;
    }
    Ok(MatchingReport {
        history,
        held_out,
        spur: SpurReport {
            spur_before_dbc: spur_before,
            spur_after_dbc: spur_after,
        },
        lfm: lfm_report,
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Multichannel expandability sweep.

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Base chain; `n_channels`/`mismatches` are overridden per row.
    pub frontend: FrontEndConfig,
    pub channels_min: usize,
    pub channels_max: usize,
    pub draws: usize,
    pub steps: u64,
    pub n_pairs: usize,
    pub corpus: CorpusOptions,
    /// Fixed interleaved record length split into N channels per row
    /// (must divide by every N in range); falls back to `corpus.len` per
    /// channel when unset.
    pub ref_len: Option<usize>,
    /// Center of the per-channel delay draw at a 20 GS/s aggregate rate;
    /// the draw spans [0.5, 1.5] of this, scaled by the configured rate.
    pub delay_base: f64,
    /// Half-width of the relative gain draw.
    pub gain_spread: f64,
    pub parallelism: usize,
    pub rng_seed: u64,
    /// Net width knobs shared by every row.
    pub base_channels: usize,
    pub pyramid: Vec<usize>,
}

impl SweepConfig {
    pub fn new(frontend: FrontEndConfig, rng_seed: u64) -> Self {
        Self {
            frontend,
            channels_min: 2,
            channels_max: 8,
            draws: 10,
            steps: 10_000,
            n_pairs: 64,
            corpus: CorpusOptions::default(),
            ref_len: None,
            delay_base: 7e-12,
            gain_spread: 0.05,
            parallelism: 1,
            rng_seed,
            base_channels: 32,
            pyramid: vec![34, 38, 44, 52],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_channels: usize,
    pub draw_index: usize,
    pub delays: Vec<f64>,
    pub gains: Vec<f64>,
    pub input_mean_sinad_db: f64,
    pub final_mean_valid_sinad_db: f64,
    pub steps: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub manifest: String,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "n_channels,draw_index,input_mean_sinad_db,final_mean_valid_sinad_db,steps,delays,gains,error\n",
        );
        for r in &self.rows {
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.n_channels,
                r.draw_index,
                r.input_mean_sinad_db,
                r.final_mean_valid_sinad_db,
                r.steps,
                join(&r.delays),
                join(&r.gains),
                r.error.as_deref().unwrap_or("")
            ));
        }
        s
    }

    /// Mean recovered SINAD per channel count, rows with errors excluded.
    pub fn mean_by_channels(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut n = self.rows.iter().map(|r| r.n_channels).collect::<Vec<_>>();
        n.sort_unstable();
        n.dedup();
        for nc in n {
            let vals: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.n_channels == nc && r.error.is_none())
                .map(|r| r.final_mean_valid_sinad_db)
                .collect();
            if !vals.is_empty() {
                out.push((nc, vals.iter().sum::<f64>() / vals.len() as f64));
            }
        }
        out
    }
}

fn draw_mismatches(cfg: &SweepConfig, n: usize, draw: usize) -> (Vec<f64>, Vec<f64>) {
    let seed = cfg
        .rng_seed
        .wrapping_add((n as u64) << 32)
        .wrapping_add(draw as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed);
    // The delay draw tracks the sample period: 7 ps-class at 20 GS/s.
    let period_scale = 20e9 / cfg.frontend.sample_rate;
    let mut delays = vec![0.0];
    let mut gains = vec![1.0];
    for _ in 1..n {
        let d = if cfg.delay_base > 0.0 {
            rng.gen_range(0.5..1.5) * cfg.delay_base * period_scale
        } else {
            0.0
        };
        let g = if cfg.gain_spread > 0.0 {
            1.0 + rng.gen_range(-cfg.gain_spread..cfg.gain_spread)
        } else {
            1.0
        };
        delays.push(d);
        gains.push(g);
    }
    (delays, gains)
}

fn run_sweep_row(cfg: &SweepConfig, n: usize, draw: usize) -> SweepRow {
    let (delays, gains) = draw_mismatches(cfg, n, draw);
    let mut row = SweepRow {
        n_channels: n,
        draw_index: draw,
        delays: delays.clone(),
        gains: gains.clone(),
        input_mean_sinad_db: f64::NAN,
        final_mean_valid_sinad_db: f64::NAN,
        steps: cfg.steps,
        error: None,
    };
    let body = || -> Result<(f64, f64)> {
        let mut frontend = cfg.frontend.clone();
        frontend.n_channels = n;
        frontend.mismatches = delays
            .iter()
            .zip(&gains)
            .map(|(&delay, &gain)| MismatchProfile {
                delay,
                gain,
                offset: 0.0,
            })
            .collect();
        let row_seed = cfg
            .rng_seed
            .wrapping_add(((n * 101 + draw) as u64).wrapping_mul(0x517c_c1b7_2722_0a95));
        let mut opts = cfg.corpus.clone();
        if let Some(ref_len) = cfg.ref_len {
            if ref_len % n != 0 {
                return Err(Error::Config(format!(
                    "ref_len {ref_len} not divisible by {n} channels"
                )));
            }
            opts.len = ref_len / n;
        }
        let corpus = gen_matching_corpus(&frontend, cfg.n_pairs, row_seed, &opts)?;
        let spec = NetSpec {
            base_channels: cfg.base_channels,
            pyramid: cfg.pyramid.clone(),
            ..NetSpec::matching(n, row_seed ^ 0x6e65_74)
        };
        let mut net = spec.build()?;
        let train_cfg = TrainConfig {
            steps: cfg.steps,
            validation_every: cfg.steps.max(1),
            rng_seed: row_seed,
            // Same 60% / 90% decay points the 50k-step default uses, scaled
            // to this row's step budget.
            lr_decay: vec![(cfg.steps * 3 / 5, 0.2), (cfg.steps * 9 / 10, 0.2)],
            ..Default::default()
        };
        let mut opt = Optimizer::new(train_cfg.algorithm, train_cfg.learning_rate, net.n_params());
        train(&mut net, &mut opt, &corpus, &train_cfg, 0, None)?;
        let scale = input_scale(&corpus, train_cfg.target_rms)?;
        let mut before = 0.0;
        let mut after = 0.0;
        let mut count = 0usize;
        for p in corpus.valid_pairs() {
            let merged = interleave_seqs(&p.original);
            before += sinad(&merged, corpus.sample_rate)?;
            let inputs: Vec<Vec<f64>> = p
                .original
                .iter()
                .map(|seq| seq.iter().map(|v| v * scale).collect())
                .collect();
            let y = net.forward(&inputs)?;
            after += sinad(&y, corpus.sample_rate)?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Run("no validation pairs to evaluate".into()));
        }
        Ok((before / count as f64, after / count as f64))
    };
    match body() {
        Ok((before, after)) => {
            row.input_mean_sinad_db = before;
            row.final_mean_valid_sinad_db = after;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Trains one matching net per (N, mismatch draw) cell and records recovered
/// SINAD. Failed rows carry an error string; the sweep continues. Rows are
/// returned sorted by (N, draw) regardless of execution order.
pub fn run_multichannel_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.channels_min < 2 || cfg.channels_max < cfg.channels_min {
        return Err(Error::Config("channel range must satisfy 2 <= min <= max".into()));
    }
    if cfg.draws == 0 {
        return Err(Error::Config("draws must be >= 1".into()));
    }
    // Per-channel record length must make the interleaved record divisible
    // by every N; corpus len is per channel, so any len works.
    let jobs: Vec<(usize, usize)> = (cfg.channels_min..=cfg.channels_max)
        .flat_map(|n| (0..cfg.draws).map(move |d| (n, d)))
        .collect();
    let parallelism = cfg.parallelism.max(1).min(jobs.len());
    let mut rows: Vec<Option<SweepRow>> = vec![None; jobs.len()];
    if parallelism == 1 {
        for (slot, &(n, d)) in rows.iter_mut().zip(&jobs) {
            *slot = Some(run_sweep_row(cfg, n, d));
        }
    } else {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(&mut rows);
        std::thread::scope(|scope| {
            for _ in 0..parallelism {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs.len() {
                        break;
                    }
                    let (n, d) = jobs[i];
                    let row = run_sweep_row(cfg, n, d);
                    results.lock().unwrap()[i] = Some(row);
                });
            }
        });
    }
    let mut rows: Vec<SweepRow> = rows.into_iter().map(|r| r.unwrap()).collect();
    rows.sort_by_key(|r| (r.n_channels, r.draw_index));
    let manifest = format!(
        "study = multichannel_sweep\nconfig_hash = {}\nchannels = {}..{}\ndraws = {}\nsteps = {}\n\
         n_pairs = {}\ndelay_base = {}\ngain_spread = {}\nrng_seed = {}\n",
        config_hash(&cfg.frontend),
        cfg.channels_min,
        cfg.channels_max,
        cfg.draws,
        cfg.steps,
        cfg.n_pairs,
        cfg.delay_base,
        cfg.gain_spread,
        cfg.rng_seed,
    );
    Ok(SweepResult { rows, manifest })
}

// ---------------------------------------------------------------------------
// Full-cascade ENOB characterization.

/// Trained linearization + matching pair with their normalization scales.
#[derive(Debug)]
pub struct Cascade {
    pub lin: Net,
    pub lin_scale: f64,
    pub matching: Net,
    pub match_scale: f64,
}

impl Cascade {
    /// Linearizes each channel, rescales, and runs mismatch correction;
    /// returns the recovered interleaved sequence.
    pub fn recover(&self, channels: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut linearized = Vec::with_capacity(channels.len());
        for ch in channels {
            let x: Vec<f64> = ch.iter().map(|v| v * self.lin_scale).collect();
            let y = self.lin.forward(&[x])?;
            linearized.push(
                y.iter()
                    .map(|v| v / self.lin_scale * self.match_scale)
                    .collect(),
            );
        }
        self.matching.forward(&linearized)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnobConfig {
    pub frontend: FrontEndConfig,
    pub n_pairs: usize,
    pub corpus: CorpusOptions,
    pub train: TrainConfig,
    /// Test tone frequencies (may exceed fs/2; evaluated at the alias).
    pub test_freqs: Vec<f64>,
    /// Interleaved evaluation record length.
    pub eval_len: usize,
    pub amplitude: f64,
    /// Net width knobs for both nets.
    pub base_channels: usize,
    pub pyramid: Vec<usize>,
    pub out_dir: Option<PathBuf>,
}

impl EnobConfig {
    pub fn new(frontend: FrontEndConfig, seed: u64) -> Self {
        Self {
            frontend,
            n_pairs: 64,
            corpus: CorpusOptions::default(),
            train: TrainConfig {
                rng_seed: seed,
                ..Default::default()
            },
            test_freqs: vec![3.44e9, 21.13e9],
            eval_len: 2000,
            amplitude: 0.4,
            base_channels: 32,
            pyramid: vec![34, 38, 44, 52],
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnobPoint {
    pub f0: f64,
    pub alias_hz: f64,
    pub before: MetricsReport,
    pub after: MetricsReport,
}

/// Trains the full linearization -> matching cascade on the configured front
/// end, then reports before/after metrics for each test tone.
pub fn run_enob_characterization(cfg: &EnobConfig) -> Result<Vec<EnobPoint>> {
    let fs = cfg.frontend.sample_rate;
    let n = cfg.frontend.n_channels;
    if cfg.eval_len % n != 0 {
        return Err(Error::Config(format!(
            "eval_len {} not divisible by {n} channels",
            cfg.eval_len
        )));
    }
    let lin_spec = NetSpec {
        base_channels: cfg.base_channels,
        pyramid: cfg.pyramid.clone(),
        ..NetSpec::linearization(cfg.train.rng_seed ^ 0x6c69_6e)
    };
    let lin_corpus =
        gen_linearization_corpus(&cfg.frontend, cfg.n_pairs, cfg.train.rng_seed, &cfg.corpus)?;
    let mut lin = lin_spec.build()?;
    let mut opt = Optimizer::new(cfg.train.algorithm, cfg.train.learning_rate, lin.n_params());
    train(&mut lin, &mut opt, &lin_corpus, &cfg.train, 0, None)?;
    let lin_scale = input_scale(&lin_corpus, cfg.train.target_rms)?;

    let match_spec = NetSpec {
        base_channels: cfg.base_channels,
        pyramid: cfg.pyramid.clone(),
        ..NetSpec::matching(n, cfg.train.rng_seed ^ 0x6d61_74)
    };
    let match_corpus =
        gen_matching_corpus(&cfg.frontend, cfg.n_pairs, cfg.train.rng_seed ^ 1, &cfg.corpus)?;
    let mut matching = match_spec.build()?;
    let mut opt = Optimizer::new(
        cfg.train.algorithm,
        cfg.train.learning_rate,
        matching.n_params(),
    );
    train(&mut matching, &mut opt, &match_corpus, &cfg.train, 0, None)?;
    let match_scale = input_scale(&match_corpus, cfg.train.target_rms)?;

    let cascade = Cascade {
        lin,
        lin_scale,
        matching,
        match_scale,
    };
    let mut points = Vec::new();
    for (i, &f_raw) in cfg.test_freqs.iter().enumerate() {
        // Snap so the tone (and its alias) lands on an exact DFT bin.
        let f0 = exact_bin_freq(f_raw, fs, cfg.eval_len);
        let alias_hz = alias_frequency(f0, fs);
        let mut fe = cfg.frontend.clone();
        fe.rng_seed = cfg.frontend.rng_seed.wrapping_add(1000 + i as u64);
        let cs = sample_frontend(&WaveformSpec::sine(f0, cfg.amplitude), &fe, cfg.eval_len)?;
        let merged = interleave_seqs(&cs.channels);
        let before = MetricsReport::compute(&merged, fs)?;
        let recovered = cascade.recover(&cs.channels)?;
        let after = MetricsReport::compute(&recovered, fs)?;
        points.push(EnobPoint {
            f0,
            alias_hz,
            before,
            after,
        });
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut csv =
            String::from("f0_hz,alias_hz,enob_before_bits,enob_after_bits,sinad_before_db,sinad_after_db\n");
        for p in &points {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.f0,
                p.alias_hz,
                p.before.enob_bits,
                p.after.enob_bits,
                p.before.sinad_db,
                p.after.sinad_db
            ));
        }
        std::fs::write(dir.join("enob.csv"), csv)?;
        std::fs::write(
            dir.join("manifest.txt"),
            format!(
                "study = enob_characterization\nconfig_hash = {}\nseed = {}\neval_len = {}\n",
                config_hash(&cfg.frontend),
                cfg.train.rng_seed,
                cfg.eval_len
            ),
        )?;
    }
    Ok(points)
}
