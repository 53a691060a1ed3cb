//! `padc` — command-line front door for corpus generation, training,
//! evaluation, and the scripted studies.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use padc_core::dataset::{
    gen_linearization_corpus, gen_matching_corpus, load_corpus, save_corpus, Corpus, CorpusKind,
};
use padc_core::experiments::{
    run_enob_characterization, run_linearization_study, run_matching_study,
    run_multichannel_sweep, EnobConfig, StudyConfig, SweepConfig,
};
use padc_core::metrics::MetricsReport;
use padc_core::nn::{load_checkpoint, Optimizer};
use padc_core::signal::interleave_seqs;
use padc_core::training::{load_train_state, train};
use padc_core::{ChannelSet, Error, NetKind};

use config::Cfg;

#[derive(Parser)]
#[command(name = "padc", version, about = "Photonic ADC simulation and recovery toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Front-end preset: default-20gs | low-noise-100ms
    #[arg(long, default_value = "default-20gs")]
    preset: String,
    /// Flat key = value config file; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline override, repeatable: --set key=value (highest precedence).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed for corpus, net init, and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Allow writing into an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist a training corpus.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Corpus kind: linearize | match
        #[arg(long, default_value = "linearize")]
        kind: String,
        /// Number of (original, reference) pairs.
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Train a linearization net; writes checkpoints and history CSV.
    TrainLinearize {
        #[command(flatten)]
        common: Common,
        /// Reuse a saved corpus directory instead of generating one.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from the checkpoints already in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Train a matching net; writes checkpoints and history CSV.
    TrainMatch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        resume: bool,
    },
    /// Run a checkpoint over a sequence file and report metrics.
    Eval {
        /// Trained checkpoint (.padn with .meta sidecar from training).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input channel-set file (.padc).
        #[arg(long)]
        input: PathBuf,
        /// Also emit STFT CSVs next to the metrics.
        #[arg(long)]
        stft: bool,
        /// Output directory for report CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Multichannel expandability sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Channel range, e.g. 2..8
        #[arg(long, default_value = "2..8")]
        channels: String,
        /// Mismatch draws per channel count.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        /// Worker threads (capped by PADC_THREADS).
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Linearization validation study (held-out sine, dual-tone, LFM).
    StudyLinearize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Matching validation study (spur suppression, LFM sidebands).
    StudyMatch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Full-cascade before/after ENOB characterization.
    Enob {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Io(_) | Error::Format { .. } => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

/// Refuses to write into an existing non-empty directory without --force.
fn ensure_out(dir: &Path, force: bool) -> padc_core::Result<()> {
    if dir.exists() && !force {
        let non_empty = std::fs::read_dir(dir)?.next().is_some();
        if non_empty {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn resolve(common: &Common) -> padc_core::Result<Cfg> {
    let mut cfg = Cfg::preset(&common.preset)?;
    if let Some(path) = &common.config {
        cfg.merge_file(path)?;
    }
    for kv in &common.set {
        cfg.merge_kv(kv)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string());
    }
    Ok(cfg)
}

fn write_manifest(dir: &Path, cfg: &Cfg) -> padc_core::Result<()> {
    std::fs::write(dir.join("config_resolved.txt"), cfg.resolved())?;
    Ok(())
}

fn thread_cap(requested: usize) -> usize {
    match std::env::var("PADC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(cap) if cap >= 1 => requested.min(cap),
        _ => requested,
    }
}

fn generate_corpus(cfg: &Cfg, kind: &str) -> padc_core::Result<Corpus> {
    let frontend = cfg.frontend()?;
    let opts = cfg.corpus_opts()?;
    let pairs = cfg.get_usize("pairs")?;
    let seed = cfg.get_u64("seed")?;
    match kind {
        "linearize" => gen_linearization_corpus(&frontend, pairs, seed, &opts),
        "match" => gen_matching_corpus(&frontend, pairs, seed, &opts),
        other => Err(Error::Config(format!(
            "unknown corpus kind {other:?}; expected linearize | match"
        ))),
    }
}

fn run_training(
    common: &Common,
    corpus_dir: Option<&PathBuf>,
    steps: Option<u64>,
    resume: bool,
    kind: NetKind,
) -> padc_core::Result<i32> {
    let mut cfg = resolve(common)?;
    if let Some(s) = steps {
        cfg.set("steps", &s.to_string());
    }
    if cfg.get_u64("steps")? == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    if resume && !common.out.join("latest.padn").exists() {
        return Err(Error::Config(format!(
            "--resume set but {} holds no checkpoint",
            common.out.display()
        )));
    }
    if !resume {
        ensure_out(&common.out, common.force)?;
    }
    write_manifest(&common.out, &cfg)?;
    let corpus = match corpus_dir {
        Some(dir) => load_corpus(dir)?,
        None => generate_corpus(
            &cfg,
            match kind {
                NetKind::Linearization => "linearize",
                NetKind::Matching => "match",
            },
        )?,
    };
    let expected = match kind {
        NetKind::Linearization => CorpusKind::Linearization,
        NetKind::Matching => CorpusKind::Matching,
    };
    if corpus.kind != expected {
        return Err(Error::Config(format!(
            "corpus kind {:?} does not fit this command",
            corpus.kind
        )));
    }
    let train_cfg = cfg.train_cfg()?;
    let (mut net, mut opt, start_step) = if resume {
        let (net, opt, _scale, step) = load_train_state(&common.out)?;
        (net, opt, step)
    } else {
        let spec = cfg.net_spec(kind, corpus.n_channels)?;
        let net = spec.build()?;
        let opt = Optimizer::new(train_cfg.algorithm, train_cfg.learning_rate, net.n_params());
        (net, opt, 0)
    };
    let history = train(
        &mut net,
        &mut opt,
        &corpus,
        &train_cfg,
        start_step,
        Some(&common.out),
    )?;
    println!(
        "trained {} steps; best validation loss {} at step {}",
        history.train.len(),
        history.best_valid_loss,
        history.best_step
    );
    Ok(0)
}

fn parse_range(s: &str) -> padc_core::Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::Config(format!("bad channel range {s:?}; expected a..b")))?;
    let lo = a
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad channel range {s:?}")))?;
    let hi = b
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad channel range {s:?}")))?;
    Ok((lo, hi))
}

fn run(cli: Cli) -> padc_core::Result<i32> {
    match cli.command {
        Command::Generate {
            common,
            kind,
            pairs,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(p) = pairs {
                cfg.set("pairs", &p.to_string());
            }
            if cfg.get_usize("pairs")? == 0 {
                return Err(Error::Config("pairs must be >= 1".into()));
            }
            ensure_out(&common.out, common.force)?;
            let corpus = generate_corpus(&cfg, &kind)?;
            save_corpus(&corpus, &common.out)?;
            write_manifest(&common.out, &cfg)?;
            println!(
                "wrote {} pairs ({} train / {} validation) to {}",
                corpus.pairs.len(),
                corpus.train_idx.len(),
                corpus.valid_idx.len(),
                common.out.display()
            );
            Ok(0)
        }
        Command::TrainLinearize {
            common,
            corpus,
            steps,
            resume,
        } => run_training(&common, corpus.as_ref(), steps, resume, NetKind::Linearization),
        Command::TrainMatch {
            common,
            corpus,
            steps,
            resume,
        } => run_training(&common, corpus.as_ref(), steps, resume, NetKind::Matching),
        Command::Eval {
            checkpoint,
            input,
            stft,
            out,
            force,
        } => {
            let net = load_checkpoint(&checkpoint)?;
            // Normalization scale from the training sidecar, default 1.
            let meta = checkpoint.with_extension("meta");
            let scale = if meta.exists() {
                std::fs::read_to_string(&meta)?
                    .lines()
                    .find_map(|l| {
                        let (k, v) = l.split_once('=')?;
                        (k.trim() == "scale").then(|| v.trim().parse::<f64>().ok())?
                    })
                    .unwrap_or(1.0)
            } else {
                1.0
            };
            let cs = ChannelSet::load(&input)?;
            let raw = interleave_seqs(&cs.channels);
            let inputs: Vec<Vec<f64>> = cs
                .channels
                .iter()
                .map(|ch| ch.iter().map(|v| v * scale).collect())
                .collect();
            let output = match (net.kind, cs.channels.len()) {
                (NetKind::Matching, n) if n == net.n_inputs() => net.forward(&inputs)?,
                (NetKind::Linearization, _) => {
                    // Per-channel linearization, then re-interleave.
                    let mut outs = Vec::with_capacity(inputs.len());
                    for ch in &inputs {
                        outs.push(net.forward(&[ch.clone()])?);
                    }
                    interleave_seqs(&outs)
                }
                (NetKind::Matching, n) => {
                    return Err(Error::Shape(format!(
                        "matching net takes {} channels, input has {n}",
                        net.n_inputs()
                    )))
                }
            };
            let mut before = MetricsReport::compute(&raw, cs.sample_rate)?;
            let mut after = MetricsReport::compute(&output, cs.sample_rate)?;
            if stft {
                let win = (raw.len() / 8).max(16);
                before = before.with_stft(&raw, win, win / 2)?;
                after = after.with_stft(&output, win, win / 2)?;
            }
            println!(
                "before: SINAD {:.2} dB, ENOB {:.2} bits, SFDR {:.2} dB @ {:.4e} Hz",
                before.sinad_db, before.enob_bits, before.sfdr_db, before.fundamental_hz
            );
            println!(
                "after:  SINAD {:.2} dB, ENOB {:.2} bits, SFDR {:.2} dB @ {:.4e} Hz",
                after.sinad_db, after.enob_bits, after.sfdr_db, after.fundamental_hz
            );
            if let Some(dir) = out {
                ensure_out(&dir, force)?;
                std::fs::write(dir.join("spectrum_before.csv"), before.spectrum_to_csv())?;
                std::fs::write(dir.join("spectrum_after.csv"), after.spectrum_to_csv())?;
                if let (Some(sb), Some(sa)) = (&before.stft, &after.stft) {
                    std::fs::write(dir.join("stft_before.csv"), sb.to_csv())?;
                    std::fs::write(dir.join("stft_after.csv"), sa.to_csv())?;
                }
            }
            Ok(0)
        }
        Command::Sweep {
            common,
            channels,
            draws,
            steps,
            parallel,
        } => {
            let cfg = resolve(&common)?;
            ensure_out(&common.out, common.force)?;
            write_manifest(&common.out, &cfg)?;
            let (lo, hi) = parse_range(&channels)?;
            let mut sweep = SweepConfig::new(cfg.frontend()?, cfg.get_u64("seed")?);
            sweep.channels_min = lo;
            sweep.channels_max = hi;
            if let Some(d) = draws {
                sweep.draws = d;
            }
            if let Some(s) = steps {
                sweep.steps = s;
            }
            sweep.n_pairs = cfg.get_usize("pairs")?;
            sweep.corpus = cfg.corpus_opts()?;
            sweep.parallelism = thread_cap(parallel.max(1));
            sweep.base_channels = cfg.get_usize("base_channels")?;
            sweep.pyramid = cfg.pyramid()?;
            let result = run_multichannel_sweep(&sweep)?;
            std::fs::write(common.out.join("sweep.csv"), result.to_csv())?;
            std::fs::write(common.out.join("manifest.txt"), &result.manifest)?;
            let failures = result.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} rows written to {} ({} failed)",
                result.rows.len(),
                common.out.join("sweep.csv").display(),
                failures
            );
            Ok(if failures > 0 { 2 } else { 0 })
        }
        Command::StudyLinearize { common, steps } => {
            let mut cfg = resolve(&common)?;
            if let Some(s) = steps {
                cfg.set("steps", &s.to_string());
            }
            ensure_out(&common.out, common.force)?;
            write_manifest(&common.out, &cfg)?;
            let study = cfg.study_cfg(NetKind::Linearization, Some(common.out.clone()))?;
            let rep = run_linearization_study(&study)?;
            for t in &rep.held_out {
                println!(
                    "held-out {:.4e} Hz: SINAD {:.2} -> {:.2} dB",
                    t.f0, t.sinad_before_db, t.sinad_after_db
                );
            }
            println!(
                "dual-tone worst spur {:.2} -> {:.2} dBc; LFM SDR {:.2} -> {:.2} dB",
                rep.dual_tone.spur_before_dbc,
                rep.dual_tone.spur_after_dbc,
                rep.lfm.sdr_before_db,
                rep.lfm.sdr_after_db
            );
            Ok(0)
        }
        Command::StudyMatch { common, steps } => {
            let mut cfg = resolve(&common)?;
            if let Some(s) = steps {
                cfg.set("steps", &s.to_string());
            }
            ensure_out(&common.out, common.force)?;
            write_manifest(&common.out, &cfg)?;
            let study = cfg.study_cfg(NetKind::Matching, Some(common.out.clone()))?;
            let rep = run_matching_study(&study)?;
            for t in &rep.held_out {
                println!(
                    "held-out {:.4e} Hz: SINAD {:.2} -> {:.2} dB",
                    t.f0, t.sinad_before_db, t.sinad_after_db
                );
            }
            println!(
                "mismatch spur {:.2} -> {:.2} dBc; LFM SDR {:.2} -> {:.2} dB",
                rep.spur.spur_before_dbc,
                rep.spur.spur_after_dbc,
                rep.lfm.sdr_before_db,
                rep.lfm.sdr_after_db
            );
            Ok(0)
        }
        Command::Enob { common, steps } => {
            let mut cfg = resolve(&common)?;
            if let Some(s) = steps {
                cfg.set("steps", &s.to_string());
            }
            ensure_out(&common.out, common.force)?;
            write_manifest(&common.out, &cfg)?;
            let enob_cfg = cfg.enob_cfg(Some(common.out.clone()))?;
            let points = run_enob_characterization(&enob_cfg)?;
            for p in &points {
                println!(
                    "{:.5e} Hz (alias {:.5e}): ENOB {:.2} -> {:.2} bits",
                    p.f0, p.alias_hz, p.before.enob_bits, p.after.enob_bits
                );
            }
            Ok(0)
        }
    }
}

/// Builders shared by subcommands live on Cfg.
impl Cfg {
    fn study_cfg(
        &self,
        kind: NetKind,
        out_dir: Option<PathBuf>,
    ) -> padc_core::Result<StudyConfig> {
        let frontend = self.frontend()?;
        let seed = self.get_u64("seed")?;
        let mut study = match kind {
            NetKind::Linearization => StudyConfig::linearization(frontend, seed),
            NetKind::Matching => StudyConfig::matching(frontend, seed),
        };
        study.n_pairs = self.get_usize("pairs")?;
        study.corpus = self.corpus_opts()?;
        study.train = self.train_cfg()?;
        study.net.base_channels = self.get_usize("base_channels")?;
        study.net.pyramid = self.pyramid()?;
        study.out_dir = out_dir;
        Ok(study)
    }

    fn enob_cfg(&self, out_dir: Option<PathBuf>) -> padc_core::Result<EnobConfig> {
        let mut cfg = EnobConfig::new(self.frontend()?, self.get_u64("seed")?);
        cfg.n_pairs = self.get_usize("pairs")?;
        cfg.corpus = self.corpus_opts()?;
        cfg.train = self.train_cfg()?;
        cfg.test_freqs = self.f64_list("test_freqs")?;
        cfg.eval_len = self.get_usize("eval_len")?;
        cfg.amplitude = self.get_f64("test_amplitude")?;
        cfg.base_channels = self.get_usize("base_channels")?;
        cfg.pyramid = self.pyramid()?;
        cfg.out_dir = out_dir;
        Ok(cfg)
    }
}
