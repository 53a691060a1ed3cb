//! L1 training loop with per-step deterministic sampling, periodic
//! validation, and exact resume from checkpoints.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::metrics::sinad;
use crate::nn::{load_checkpoint, save_checkpoint, Net, OptAlgorithm, Optimizer};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total optimization steps; one pair per step.
    pub steps: u64,
    pub validation_every: u64,
    pub learning_rate: f64,
    pub algorithm: OptAlgorithm,
    pub rng_seed: u64,
    /// Corpus originals are rescaled to this RMS before training.
    pub target_rms: f64,
    /// Step-decay schedule: once the step counter passes a threshold, the
    /// learning rate is multiplied by that factor. Thresholds are absolute
    /// steps, so a resumed run sees the same rate at the same step.
    pub lr_decay: Vec<(u64, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            validation_every: 1000,
            learning_rate: 1e-3,
            algorithm: OptAlgorithm::Adam,
            rng_seed: 0,
            target_rms: 0.25,
            lr_decay: vec![(30_000, 0.2), (45_000, 0.2)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidRecord {
    pub step: u64,
    pub loss: f64,
    /// Mean SINAD over validation outputs, dB; NaN if none computable.
    pub sinad_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// (step, training loss) per optimization step.
    pub train: Vec<(u64, f64)>,
    pub valid: Vec<ValidRecord>,
    pub best_step: u64,
    pub best_valid_loss: f64,
}

impl TrainHistory {
    pub fn csv_header() -> &'static str {
        "step,train_loss,valid_loss,valid_sinad_db\n"
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::csv_header());
        s.push_str(&self.rows_csv());
        s
    }

    fn rows_csv(&self) -> String {
        let mut s = String::new();
        let mut vi = 0usize;
        for &(step, loss) in &self.train {
            if vi < self.valid.len() && self.valid[vi].step == step {
                let v = &self.valid[vi];
                s.push_str(&format!("{step},{loss},{},{}\n", v.loss, v.sinad_db));
                vi += 1;
            } else {
                s.push_str(&format!("{step},{loss},,\n"));
            }
        }
        s
    }
}

/// Mean absolute error and its gradient with respect to `y`.
pub fn l1_loss(y: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    if y.len() != reference.len() {
        return Err(Error::Shape(format!(
            "loss lengths differ: {} vs {}",
            y.len(),
            reference.len()
        )));
    }
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; y.len()];
    for (g, (&a, &b)) in grad.iter_mut().zip(y.iter().zip(reference)) {
        let d = a - b;
        loss += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((loss / n, grad))
}

/// Normalization factor mapping the training originals to `target_rms`.
pub fn input_scale(corpus: &Corpus, target_rms: f64) -> Result<f64> {
    let rms = corpus.train_rms();
    if !(rms > 0.0) || !rms.is_finite() {
        return Err(Error::Config(format!(
            "training corpus RMS must be positive and finite, got {rms}"
        )));
    }
    Ok(target_rms / rms)
}

fn pair_index(cfg: &TrainConfig, step: u64, n_train: usize) -> usize {
    // Hash-seeded per step so a resumed run visits the same pairs.
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    rng.gen_range(0..n_train)
}

fn lr_at(cfg: &TrainConfig, step: u64) -> f64 {
    let mut lr = cfg.learning_rate;
    for &(threshold, factor) in &cfg.lr_decay {
        if step > threshold {
            lr *= factor;
        }
    }
    lr
}

fn scaled_inputs(pair_original: &[Vec<f64>], scale: f64) -> Vec<Vec<f64>> {
    pair_original
        .iter()
        .map(|seq| seq.iter().map(|v| v * scale).collect())
        .collect()
}

fn validate(net: &Net, corpus: &Corpus, scale: f64, step: u64) -> Result<ValidRecord> {
    let mut loss_sum = 0.0;
    let mut n = 0usize;
    let mut sinad_sum = 0.0;
    let mut sinad_n = 0usize;
    for p in corpus.valid_pairs() {
        let inputs = scaled_inputs(&p.original, scale);
        let y = net.forward(&inputs)?;
        let reference: Vec<f64> = p.reference.iter().map(|v| v * scale).collect();
        let (l, _) = l1_loss(&y, &reference)?;
        loss_sum += l;
        n += 1;
        if let Ok(s) = sinad(&y, corpus.sample_rate) {
            sinad_sum += s;
            sinad_n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Config("corpus has no validation pairs".into()));
    }
    Ok(ValidRecord {
        step,
        loss: loss_sum / n as f64,
        sinad_db: if sinad_n > 0 {
            sinad_sum / sinad_n as f64
        } else {
            f64::NAN
        },
    })
}

/// Runs steps `start_step+1..=cfg.steps`, mutating `net` and `opt` in place.
///
/// With `out_dir` set, writes `latest.padn`/`latest.opt`/`latest.meta` at
/// every validation point plus the end, tracks the best validation loss in
/// `best.padn`/`best.meta`, and appends rows to `history.csv`. A run resumed
/// via [`load_train_state`] replays the exact same step sequence.
pub fn train(
    net: &mut Net,
    opt: &mut Optimizer,
    corpus: &Corpus,
    cfg: &TrainConfig,
    start_step: u64,
    out_dir: Option<&Path>,
) -> Result<TrainHistory> {
    if cfg.validation_every == 0 {
        return Err(Error::Config("validation_every must be >= 1".into()));
    }
    if corpus.train_idx.is_empty() {
        return Err(Error::Config("corpus has no training pairs".into()));
    }
    let n_inputs = corpus.pairs[corpus.train_idx[0]].original.len();
    if net.n_inputs() != n_inputs {
        return Err(Error::Shape(format!(
            "net takes {} inputs but corpus pairs have {n_inputs}",
            net.n_inputs()
        )));
    }
    let scale = input_scale(corpus, cfg.target_rms)?;
    let train_idx = &corpus.train_idx;
    let has_valid = !corpus.valid_idx.is_empty();
    let mut history = TrainHistory {
        best_valid_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut params = net.params();
    opt.learning_rate = cfg.learning_rate;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        if start_step == 0 {
            std::fs::write(dir.join("history.csv"), TrainHistory::csv_header())?;
        }
    }
    for step in start_step + 1..=cfg.steps {
        let pair = &corpus.pairs[train_idx[pair_index(cfg, step, train_idx.len())]];
        let inputs = scaled_inputs(&pair.original, scale);
        let cache = net.forward_training(&inputs)?;
        let reference: Vec<f64> = pair.reference.iter().map(|v| v * scale).collect();
        let (loss, loss_grad) = l1_loss(&cache.output, &reference)?;
        let grads = net.backward(&cache, &loss_grad)?;
        opt.learning_rate = lr_at(cfg, step);
        opt.apply(&mut params, &grads)?;
        net.set_params(&params)?;
        if !net.params_finite() {
            return Err(Error::Run(format!(
                "non-finite parameters after step {step}"
            )));
        }
        history.train.push((step, loss));
        if step % cfg.validation_every == 0 && has_valid {
            let rec = validate(net, corpus, scale, step)?;
            if rec.loss < history.best_valid_loss {
                history.best_valid_loss = rec.loss;
                history.best_step = step;
                if let Some(dir) = out_dir {
                    save_checkpoint(net, &dir.join("best.padn"))?;
                    write_meta(&dir.join("best.meta"), scale, step)?;
                }
            }
            history.valid.push(rec);
            if let Some(dir) = out_dir {
                save_train_state(dir, net, opt, scale)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        save_train_state(dir, net, opt, scale)?;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(dir.join("history.csv"))?;
        f.write_all(history.rows_csv().as_bytes())?;
    }
    Ok(history)
}

fn write_meta(path: &Path, scale: f64, step: u64) -> Result<()> {
    std::fs::write(path, format!("scale = {scale}\nstep = {step}\n"))?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<(f64, u64)> {
    let text = std::fs::read_to_string(path)?;
    let mut scale = None;
    let mut step = None;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "scale" => scale = v.trim().parse().ok(),
                "step" => step = v.trim().parse().ok(),
                _ => {}
            }
        }
    }
    match (scale, step) {
        (Some(s), Some(t)) => Ok((s, t)),
        _ => Err(Error::Format {
            offset: 0,
            msg: format!("bad meta file {}", path.display()),
        }),
    }
}

/// Writes `latest.padn` (weights), `latest.opt` (optimizer state), and
/// `latest.meta` (normalization scale + step) under `dir`.
pub fn save_train_state(dir: &Path, net: &Net, opt: &Optimizer, scale: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_checkpoint(net, &dir.join("latest.padn"))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("latest.opt"))?);
    opt.write_to(&mut f)?;
    write_meta(&dir.join("latest.meta"), scale, opt.step)?;
    Ok(())
}

/// Counterpart of [`save_train_state`]; returns (net, optimizer, scale, step).
pub fn load_train_state(dir: &Path) -> Result<(Net, Optimizer, f64, u64)> {
    let net = load_checkpoint(&dir.join("latest.padn"))?;
    let mut f = std::io::BufReader::new(std::fs::File::open(dir.join("latest.opt"))?);
    let opt = Optimizer::read_from(&mut f)?;
    let (scale, step) = read_meta(&dir.join("latest.meta"))?;
    Ok((net, opt, scale, step))
}

/// Loads the best-validation checkpoint and its normalization scale.
pub fn load_best(dir: &Path) -> Result<(Net, f64)> {
    let net = load_checkpoint(&dir.join("best.padn"))?;
    let (scale, _) = read_meta(&dir.join("best.meta"))?;
    Ok((net, scale))
}
