//! Short-time Fourier transform helpers on top of rustfft.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{AmuseError, Result};

/// Onset analysis frame size and hop for a given sample rate: 2048/512 at
/// 22.05 kHz, scaled proportionally and rounded to a power of two elsewhere.
pub fn onset_stft_params(sample_rate: u32) -> (usize, usize) {
    let scaled = 2048.0 * sample_rate as f64 / 22_050.0;
    let window = (scaled.round() as usize).next_power_of_two();
    (window, window / 4)
}

pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Magnitude spectra of consecutive frames. `window` is an optional taper of
/// length `window_len`; frames start at multiples of `hop` and the signal is
/// not padded, so the result has `1 + (len - window_len) / hop` frames.
pub fn stft_magnitudes(
    samples: &[f64],
    window_len: usize,
    hop: usize,
    window: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    if samples.len() < window_len {
        return Err(AmuseError::invalid(
            "stft",
            format!("signal of {} samples is shorter than one {}-sample window", samples.len(), window_len),
        ));
    }
    if let Some(w) = window {
        if w.len() != window_len {
            return Err(AmuseError::invalid("stft", "window taper length mismatch"));
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(window_len);
    let bins = window_len / 2 + 1;
    let n_frames = 1 + (samples.len() - window_len) / hop;
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    for m in 0..n_frames {
        let start = m * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let s = samples[start + i];
            let s = match window {
                Some(w) => s * w[i],
                None => s,
            };
            *b = Complex64::new(s, 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..bins].iter().map(|c| c.norm()).collect());
    }
    Ok(frames)
}

/// Fraction of total spectral energy inside each frequency band, DC excluded.
/// All-zero input yields zero fractions.
pub fn band_energy_fractions(samples: &[f64], sample_rate: u32, bands: &[(f64, f64)]) -> Vec<f64> {
    let n = samples.len();
    if n == 0 {
        return vec![0.0; bands.len()];
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    fft.process(&mut buf);
    let half = n / 2;
    let hz_per_bin = sample_rate as f64 / n as f64;
    let mut total = 0.0;
    let mut in_band = vec![0.0; bands.len()];
    for k in 1..=half {
        let e = buf[k].norm_sqr();
        total += e;
        let f = k as f64 * hz_per_bin;
        for (bi, &(lo, hi)) in bands.iter().enumerate() {
            if f >= lo && f < hi {
                in_band[bi] += e;
            }
        }
    }
    if total == 0.0 {
        return vec![0.0; bands.len()];
    }
    in_band.iter().map(|e| e / total).collect()
}
