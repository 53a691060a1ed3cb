//! Single-tone spectral metrics: SINAD, ENOB, SFDR, spectra, and STFT.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Half-width of the fundamental bin cluster used by SINAD (Hann path).
pub const SINAD_CLUSTER: usize = 3;
/// Half-width of clusters used by SFDR (Blackman path, wider main lobe).
pub const SFDR_CLUSTER: usize = 4;
/// Bins 0..=DC_GUARD are treated as DC leakage and excluded everywhere.
pub const DC_GUARD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
    Blackman,
}

pub fn window_coefficients(kind: Window, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / n as f64;
            match kind {
                Window::Rectangular => 1.0,
                Window::Hann => 0.5 * (1.0 - x.cos()),
                Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
            }
        })
        .collect()
}

/// Forward DFT of a real sequence.
pub fn dft(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    buf
}

/// Inverse DFT, returning the real part scaled by 1/N.
pub fn idft_real(spec: &mut [Complex<f64>]) -> Vec<f64> {
    let n = spec.len();
    FftPlanner::new().plan_fft_inverse(n).process(spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// One-sided power spectrum (|X[k]|^2 for k = 0..=n/2) after windowing.
pub fn power_spectrum(x: &[f64], window: Window) -> Vec<f64> {
    let w = window_coefficients(window, x.len());
    let windowed: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
    let spec = dft(&windowed);
    (0..=x.len() / 2).map(|k| spec[k].norm_sqr()).collect()
}

fn cluster_range(center: usize, half: usize, n_half: usize) -> std::ops::RangeInclusive<usize> {
    center.saturating_sub(half)..=(center + half).min(n_half)
}

fn cluster_power(p: &[f64], center: usize, half: usize) -> f64 {
    cluster_range(center, half, p.len() - 1).map(|k| p[k]).sum()
}

fn peak_bin(p: &[f64]) -> Option<usize> {
    (DC_GUARD + 1..p.len())
        .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
        .filter(|&k| p[k] > 0.0)
}

/// Largest spur-cluster power outside the fundamental cluster and DC guard.
fn max_spur_cluster(p: &[f64], fund: usize, half: usize) -> Option<(usize, f64)> {
    let excluded = cluster_range(fund, half, p.len() - 1);
    (DC_GUARD + 1..p.len())
        .filter(|k| !excluded.contains(k))
        .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
        .map(|k| {
            // Sum the spur's own cluster, clipped against the fundamental's.
            let pw: f64 = cluster_range(k, half, p.len() - 1)
                .filter(|j| !excluded.contains(j))
                .map(|j| p[j])
                .sum();
            (k, pw)
        })
}

fn sinad_windowed(x: &[f64], sample_rate: f64, window: Window) -> Result<(f64, f64)> {
    if x.len() < 64 {
        return Err(Error::Range(format!("sequence too short: {}", x.len())));
    }
    let p = power_spectrum(x, window);
    let fund = peak_bin(&p).ok_or_else(|| Error::Ambiguity("empty spectrum".into()))?;
    let p_fund = cluster_power(&p, fund, SINAD_CLUSTER);
    if let Some((_, p_spur)) = max_spur_cluster(&p, fund, SINAD_CLUSTER) {
        if p_fund < 2.0 * p_spur {
            return Err(Error::Ambiguity(
                "no dominant tone: fundamental < 3 dB above next cluster".into(),
            ));
        }
    }
    let total: f64 = p[DC_GUARD + 1..].iter().sum();
    let p_rest = (total - p_fund).max(f64::MIN_POSITIVE);
    let freq = fund as f64 * sample_rate / x.len() as f64;
    Ok((10.0 * (p_fund / p_rest).log10(), freq))
}

/// Signal-to-noise-and-distortion ratio in dB (Hann window).
pub fn sinad(x: &[f64], sample_rate: f64) -> Result<f64> {
    sinad_windowed(x, sample_rate, Window::Hann).map(|(s, _)| s)
}

/// Effective number of bits from a SINAD value in dB.
pub fn enob(sinad_db: f64) -> f64 {
    (sinad_db - 1.76) / 6.02
}

/// Spurious-free dynamic range in dB (Blackman window).
pub fn sfdr(x: &[f64], sample_rate: f64) -> Result<f64> {
    let _ = sample_rate;
    if x.len() < 64 {
        return Err(Error::Range(format!("sequence too short: {}", x.len())));
    }
    let p = power_spectrum(x, Window::Blackman);
    let fund = peak_bin(&p).ok_or_else(|| Error::Ambiguity("empty spectrum".into()))?;
    let p_fund = cluster_power(&p, fund, SFDR_CLUSTER);
    let p_spur = max_spur_cluster(&p, fund, SFDR_CLUSTER)
        .map(|(_, pw)| pw)
        .unwrap_or(f64::MIN_POSITIVE)
        .max(f64::MIN_POSITIVE);
    Ok(10.0 * (p_fund / p_spur).log10())
}

/// Time-frequency power grid in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Stft {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
    /// One row per frame, each row holding window_len/2 + 1 dB values.
    pub frames_db: Vec<Vec<f64>>,
}

impl Stft {
    pub fn n_frames(&self) -> usize {
        self.frames_db.len()
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / self.window_len as f64
    }

    /// Per-frame argmax frequency, Hz (DC guard excluded).
    pub fn ridge(&self) -> Vec<f64> {
        self.frames_db
            .iter()
            .map(|row| {
                let k = (DC_GUARD + 1..row.len())
                    .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                    .unwrap_or(0);
                k as f64 * self.bin_hz()
            })
            .collect()
    }

    /// CSV export: frame, frequency_hz, power_db.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,frequency_hz,power_db\n");
        for (i, row) in self.frames_db.iter().enumerate() {
            for (k, db) in row.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", i, k as f64 * self.bin_hz(), db));
            }
        }
        s
    }
}

/// Magnitude-squared windowed DFT frames on a dB scale (Hann window).
pub fn stft(x: &[f64], sample_rate: f64, window_len: usize, hop: usize) -> Result<Stft> {
    if window_len == 0 || window_len > x.len() {
        return Err(Error::Config(format!(
            "window_len {window_len} out of range for length {}",
            x.len()
        )));
    }
    if hop == 0 {
        return Err(Error::Config("hop must be >= 1".into()));
    }
    let w = window_coefficients(Window::Hann, window_len);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(window_len);
    let mut frames_db = Vec::new();
    let mut start = 0;
    while start + window_len <= x.len() {
        let mut buf: Vec<Complex<f64>> = x[start..start + window_len]
            .iter()
            .zip(&w)
            .map(|(&a, &b)| Complex::new(a * b, 0.0))
            .collect();
        fft.process(&mut buf);
        frames_db.push(
            (0..=window_len / 2)
                .map(|k| 10.0 * buf[k].norm_sqr().max(f64::MIN_POSITIVE).log10())
                .collect(),
        );
        start += hop;
    }
    Ok(Stft {
        window_len,
        hop,
        sample_rate,
        frames_db,
    })
}

/// SINAD/ENOB/SFDR bundle for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sinad_db: f64,
    pub enob_bits: f64,
    pub sfdr_db: f64,
    pub fundamental_hz: f64,
    /// (frequency_hz, power_db) pairs, Hann path.
    pub spectrum: Vec<(f64, f64)>,
    pub stft: Option<Stft>,
}

impl MetricsReport {
    pub fn compute(x: &[f64], sample_rate: f64) -> Result<Self> {
        let (sinad_db, fundamental_hz) = sinad_windowed(x, sample_rate, Window::Hann)?;
        let sfdr_db = sfdr(x, sample_rate)?;
        let p = power_spectrum(x, Window::Hann);
        let bin = sample_rate / x.len() as f64;
        let spectrum = p
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 * bin, 10.0 * v.max(f64::MIN_POSITIVE).log10()))
            .collect();
        Ok(Self {
            sinad_db,
            enob_bits: enob(sinad_db),
            sfdr_db,
            fundamental_hz,
            spectrum,
            stft: None,
        })
    }

    pub fn with_stft(mut self, x: &[f64], window_len: usize, hop: usize) -> Result<Self> {
        self.stft = Some(stft(x, self.sample_rate(), window_len, hop)?);
        Ok(self)
    }

    fn sample_rate(&self) -> f64 {
        // Recover fs from the spectrum axis (bin spacing times record length).
        if self.spectrum.len() > 1 {
            self.spectrum[1].0 * 2.0 * (self.spectrum.len() - 1) as f64
        } else {
            0.0
        }
    }

    /// CSV export of the spectrum: frequency_hz, power_db.
    pub fn spectrum_to_csv(&self) -> String {
        let mut s = String::from("frequency_hz,power_db\n");
        for (f, db) in &self.spectrum {
            s.push_str(&format!("{f},{db}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, bin: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * bin as f64 * i as f64 / n as f64 + 0.3).sin())
            .collect()
    }

    #[test]
    fn enob_formula() {
        assert_eq!(enob(1.76), 0.0);
        assert!((enob(45.59) - 7.28).abs() < 5e-3);
        assert!((enob(46.308) - 7.4).abs() < 1e-3);
    }

    #[test]
    fn pure_tone_sinad_floor() {
        let x = tone(4096, 173, 0.7);
        let s = sinad(&x, 1.0e6).unwrap();
        assert!(s >= 120.0, "got {s}");
    }

    #[test]
    fn sinad_single_harmonic_40db() {
        let n = 1 << 14;
        let mut x = tone(n, 201, 1.0);
        let h = tone(n, 603, 0.01);
        for (a, b) in x.iter_mut().zip(&h) {
            *a += b;
        }
        let s = sinad(&x, 1.0).unwrap();
        assert!((s - 40.0).abs() < 0.1, "got {s}");
    }

    #[test]
    fn sinad_white_noise() {
        use rand::{Rng, SeedableRng};
        let n = 1 << 16;
        let sigma = 1e-3;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut x = tone(n, 1201, 0.5);
        for v in &mut x {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            *v += sigma * g;
        }
        let expect = 10.0 * (0.25 / (2.0 * sigma * sigma)).log10();
        let s = sinad(&x, 1.0).unwrap();
        assert!((s - expect).abs() < 0.3, "got {s}, expected {expect}");
    }

    #[test]
    fn sinad_ambiguity() {
        // Two equal tones: no dominant fundamental.
        let n = 4096;
        let mut x = tone(n, 100, 1.0);
        let y = tone(n, 300, 1.0);
        for (a, b) in x.iter_mut().zip(&y) {
            *a += b;
        }
        assert!(matches!(sinad(&x, 1.0), Err(Error::Ambiguity(_))));
    }

    #[test]
    fn sfdr_single_spur() {
        let n = 1 << 14;
        let mut x = tone(n, 301, 1.0);
        let spur = tone(n, 1103, 10f64.powf(-50.0 / 20.0));
        for (a, b) in x.iter_mut().zip(&spur) {
            *a += b;
        }
        let s = sfdr(&x, 1.0).unwrap();
        assert!((s - 50.0).abs() < 0.2, "got {s}");
    }

    #[test]
    fn sfdr_pure_tone_floor() {
        let x = tone(4096, 217, 1.0);
        let s = sfdr(&x, 1.0).unwrap();
        assert!(s >= 90.0, "got {s}");
    }

    #[test]
    fn amplitude_invariance() {
        let n = 8192;
        let mut x = tone(n, 97, 1.0);
        let h = tone(n, 291, 0.003);
        for (a, b) in x.iter_mut().zip(&h) {
            *a += b;
        }
        let y: Vec<f64> = x.iter().map(|v| v * 17.5).collect();
        let (s1, s2) = (sinad(&x, 1.0).unwrap(), sinad(&y, 1.0).unwrap());
        assert!((s1 - s2).abs() < 1e-9);
        let (f1, f2) = (sfdr(&x, 1.0).unwrap(), sfdr(&y, 1.0).unwrap());
        assert!((f1 - f2).abs() < 1e-9);
    }

    #[test]
    fn parseval_rectangular() {
        let x = tone(1000, 33, 0.8);
        let spec = dft(&x);
        let spectral: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
        let time: f64 = x.iter().map(|v| v * v).sum();
        assert!((spectral - time).abs() / time < 1e-9);
    }

    #[test]
    fn report_consistency() {
        let x = tone(4096, 501, 0.4);
        let r = MetricsReport::compute(&x, 20e9).unwrap();
        assert_eq!(r.enob_bits, enob(r.sinad_db));
        assert!((r.fundamental_hz - 501.0 * 20e9 / 4096.0).abs() < 1.0);
    }

    #[test]
    fn stft_constant_dc() {
        let x = vec![1.0; 1024];
        let s = stft(&x, 1.0, 256, 128).unwrap();
        // Hann windowing leaks DC into the adjacent bin; everything beyond
        // the DC cluster must be at the numeric floor.
        for row in &s.frames_db {
            let max = (3..row.len()).fold(f64::MIN, |m, k| m.max(row[k]));
            assert!(row[0] > max + 50.0);
        }
    }

    #[test]
    fn stft_sine_ridge() {
        let x = tone(8192, 512, 1.0);
        let s = stft(&x, 1.0, 512, 256).unwrap();
        let f_expect = 512.0 / 8192.0;
        for f in s.ridge() {
            assert!((f - f_expect).abs() < 2.0 * s.bin_hz());
        }
    }

    #[test]
    fn stft_lfm_ridge_slope() {
        use crate::signal::WaveformSpec;
        let fs = 1e6;
        let n = 1 << 15;
        let t_total = n as f64 / fs;
        let spec = WaveformSpec::lfm(0.05e6, 0.30e6, 1.0, t_total);
        let x: Vec<f64> = (0..n).map(|i| spec.sample(i as f64 / fs)).collect();
        let s = stft(&x, fs, 512, 256).unwrap();
        let ridge = s.ridge();
        // Linear regression of ridge frequency vs frame time.
        let m = ridge.len() as f64;
        let times: Vec<f64> = (0..ridge.len()).map(|i| (i * 256) as f64 / fs).collect();
        let mean_t = times.iter().sum::<f64>() / m;
        let mean_f = ridge.iter().sum::<f64>() / m;
        let num: f64 = times.iter().zip(&ridge).map(|(t, f)| (t - mean_t) * (f - mean_f)).sum();
        let den: f64 = times.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
        let slope = num / den;
        let expect = (0.30e6 - 0.05e6) / t_total;
        assert!((slope - expect).abs() / expect < 0.1, "slope {slope} vs {expect}");
    }

    #[test]
    fn stft_bad_config() {
        assert!(stft(&[0.0; 64], 1.0, 128, 1).is_err());
        assert!(stft(&[0.0; 64], 1.0, 32, 0).is_err());
    }
}
