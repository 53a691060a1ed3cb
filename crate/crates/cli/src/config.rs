//! Flat key = value configuration with preset -> file -> --set precedence.

use std::collections::BTreeMap;
use std::path::Path;

use padc_core::dataset::CorpusOptions;
use padc_core::nn::OptAlgorithm;
use padc_core::training::TrainConfig;
use padc_core::{Error, FrontEndConfig, MismatchProfile, MzmConfig, NetKind, NetSpec, Result};

#[derive(Debug, Clone)]
pub struct Cfg {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "preset",
    "sample_rate",
    "n_channels",
    "v_pi",
    "bias_error",
    "extinction",
    "noise_sigma",
    "jitter_sigma",
    "quant_bits",
    "full_scale",
    "frontend_seed",
    "mismatch_delays",
    "mismatch_gains",
    "mismatch_offsets",
    "pairs",
    "len",
    "amp_dbm_min",
    "amp_dbm_max",
    "amp_linear_min",
    "amp_linear_max",
    "exclude_band",
    "max_harmonic",
    "snap_to_bins",
    "steps",
    "validation_every",
    "learning_rate",
    "optimizer",
    "target_rms",
    "seed",
    "base_channels",
    "pyramid",
    "test_freqs",
    "eval_len",
    "test_amplitude",
];

impl Cfg {
    /// Named front-end presets; both mirror the experimental sampling setups
    /// (20 GS/s two-channel default; slow low-jitter high-accuracy variant).
    pub fn preset(name: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut put = |k: &str, v: &str| values.insert(k.to_string(), v.to_string());
        // Defaults shared by every preset.
        put("preset", name);
        put("n_channels", "2");
        put("v_pi", "3.5");
        put("bias_error", "0");
        put("extinction", "1");
        put("full_scale", "0.5");
        put("frontend_seed", "0");
        put("mismatch_delays", "0;7e-12");
        put("mismatch_gains", "1;1.02");
        put("mismatch_offsets", "0;0");
        put("pairs", "64");
        put("len", "1000");
        put("amp_dbm_min", "-2");
        put("amp_dbm_max", "15");
        put("amp_linear_min", "0.05");
        put("amp_linear_max", "0.8");
        put("max_harmonic", "5");
        put("snap_to_bins", "true");
        put("steps", "50000");
        put("validation_every", "1000");
        put("learning_rate", "1e-3");
        put("optimizer", "adam");
        put("target_rms", "0.25");
        put("seed", "0");
        put("base_channels", "32");
        put("pyramid", "34;38;44;52");
        put("eval_len", "2000");
        put("test_amplitude", "0.4");
        match name {
            "default-20gs" => {
                put("sample_rate", "20e9");
                put("noise_sigma", "1.3e-3");
                put("jitter_sigma", "26.5e-15");
                put("quant_bits", "8");
                put("exclude_band", "4e9:6e9");
                put("test_freqs", "3.44e9;21.13e9");
            }
            "low-noise-100ms" => {
                // Slow low-jitter regime for subsampled high-frequency tones.
                put("sample_rate", "100e6");
                put("noise_sigma", "2e-5");
                put("jitter_sigma", "2e-15");
                put("quant_bits", "14");
                put("exclude_band", "none");
                put("test_freqs", "23.332e9");
                put("mismatch_delays", "0;1.4e-9"); // 7 ps-class at this rate
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected default-20gs | low-noise-100ms"
                )))
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn merge_kv(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad --set {kv:?}; expected key=value")))?;
        let k = k.trim();
        if !KNOWN_KEYS.contains(&k) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        self.set(k, v.trim());
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.merge_kv(line).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
        }
        Ok(())
    }

    /// Fully-expanded key = value listing for the run manifest.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("missing config key {key:?}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Config(format!("bad number for {key:?}")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Config(format!("bad integer for {key:?}")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::Config(format!("bad integer for {key:?}")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)?
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number list for {key:?}")))
            })
            .collect()
    }

    pub fn pyramid(&self) -> Result<Vec<usize>> {
        self.get("pyramid")?
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Config("bad pyramid list".into()))
            })
            .collect()
    }

    pub fn frontend(&self) -> Result<FrontEndConfig> {
        let n_channels = self.get_usize("n_channels")?;
        let delays = self.f64_list("mismatch_delays")?;
        let gains = self.f64_list("mismatch_gains")?;
        let offsets = self.f64_list("mismatch_offsets")?;
        let pick = |v: &[f64], i: usize, default: f64| *v.get(i).unwrap_or(&default);
        let mismatches = (0..n_channels)
            .map(|i| MismatchProfile {
                delay: pick(&delays, i, 0.0),
                gain: pick(&gains, i, 1.0),
                offset: pick(&offsets, i, 0.0),
            })
            .collect();
        let quant_bits = match self.get("quant_bits")? {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|_| Error::Config("bad quant_bits".into()))?,
            ),
        };
        let cfg = FrontEndConfig {
            sample_rate: self.get_f64("sample_rate")?,
            n_channels,
            mzm: MzmConfig {
                v_pi: self.get_f64("v_pi")?,
                bias_error: self.get_f64("bias_error")?,
                extinction: self.get_f64("extinction")?,
            },
            mismatches,
            noise_sigma: self.get_f64("noise_sigma")?,
            jitter_sigma: self.get_f64("jitter_sigma")?,
            quant_bits,
            full_scale: self.get_f64("full_scale")?,
            rng_seed: self.get_u64("frontend_seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn corpus_opts(&self) -> Result<CorpusOptions> {
        let exclude_band = match self.get("exclude_band")? {
            "none" => None,
            s => {
                let (a, b) = s.split_once(':').ok_or_else(|| {
                    Error::Config("exclude_band must be lo:hi or none".into())
                })?;
                Some((
                    a.parse()
                        .map_err(|_| Error::Config("bad exclude_band".into()))?,
                    b.parse()
                        .map_err(|_| Error::Config("bad exclude_band".into()))?,
                ))
            }
        };
        Ok(CorpusOptions {
            len: self.get_usize("len")?,
            exclude_band,
            amp_dbm: (self.get_f64("amp_dbm_min")?, self.get_f64("amp_dbm_max")?),
            amp_linear: (
                self.get_f64("amp_linear_min")?,
                self.get_f64("amp_linear_max")?,
            ),
            max_harmonic: self.get_usize("max_harmonic")?,
            snap_to_bins: self.get("snap_to_bins")? == "true",
        })
    }

    pub fn train_cfg(&self) -> Result<TrainConfig> {
        let algorithm = match self.get("optimizer")? {
            "adam" => OptAlgorithm::Adam,
            "adagrad" => OptAlgorithm::AdaGrad,
            other => {
                return Err(Error::Config(format!(
                    "unknown optimizer {other:?}; expected adam | adagrad"
                )))
            }
        };
        Ok(TrainConfig {
            steps: self.get_u64("steps")?,
            validation_every: self.get_u64("validation_every")?,
            learning_rate: self.get_f64("learning_rate")?,
            algorithm,
            rng_seed: self.get_u64("seed")?,
            target_rms: self.get_f64("target_rms")?,
            ..Default::default()
        })
    }

    pub fn net_spec(&self, kind: NetKind, n_channels: usize) -> Result<NetSpec> {
        let seed = self.get_u64("seed")? ^ 0x6e65_74;
        let mut spec = match kind {
            NetKind::Linearization => NetSpec::linearization(seed),
            NetKind::Matching => NetSpec::matching(n_channels, seed),
        };
        spec.base_channels = self.get_usize("base_channels")?;
        spec.pyramid = self.pyramid()?;
        spec.validate()?;
        Ok(spec)
    }
}
