//! Log-mel features for the audio encoders.

use super::stft::{hann_window, onset_stft_params, stft_magnitudes};
use super::AudioClip;
use crate::error::{AmuseError, Result};
use crate::tensor::Tensor;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over `bins` linear-frequency bins.
fn mel_filterbank(n_mels: usize, bins: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let fmax = fmax.min(nyquist);
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let hz_per_bin = nyquist / (bins - 1) as f64;
    let mut bank = vec![vec![0.0; bins]; n_mels];
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for k in 0..bins {
            let f = k as f64 * hz_per_bin;
            bank[m][k] = if f >= lo && f <= mid {
                (f - lo) / (mid - lo).max(1e-12)
            } else if f > mid && f <= hi {
                (hi - f) / (hi - mid).max(1e-12)
            } else {
                0.0
            };
        }
    }
    bank
}

/// `[groups, n_mels]` log-mel matrix: Hann STFT power -> mel filterbank ->
/// log -> mean over `groups` equal time chunks.
pub fn log_mel_features(clip: &AudioClip, n_mels: usize, groups: usize) -> Result<Tensor> {
    if groups == 0 || n_mels == 0 {
        return Err(AmuseError::invalid("log_mel_features", "groups and n_mels must be positive"));
    }
    let (window, hop) = onset_stft_params(clip.sample_rate());
    let taper = hann_window(window);
    let frames = stft_magnitudes(clip.samples(), window, hop, Some(&taper))?;
    if frames.len() < groups {
        return Err(AmuseError::invalid(
            "log_mel_features",
            format!("{} frames cannot fill {} groups", frames.len(), groups),
        ));
    }
    let bins = window / 2 + 1;
    let bank = mel_filterbank(n_mels, bins, clip.sample_rate(), 50.0, clip.sample_rate() as f64 / 2.0);
    let mel_frames: Vec<Vec<f64>> = frames
        .iter()
        .map(|frame| {
            bank.iter()
                .map(|filt| {
                    let e: f64 = filt.iter().zip(frame.iter()).map(|(w, m)| w * m * m).sum();
                    (e + 1e-8).ln()
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; groups * n_mels];
    for g in 0..groups {
        let start = g * mel_frames.len() / groups;
        let end = (g + 1) * mel_frames.len() / groups;
        let span = (end - start).max(1);
        for frame in &mel_frames[start..end] {
            for (c, v) in frame.iter().enumerate() {
                out[g * n_mels + c] += v / span as f64;
            }
        }
    }
    Tensor::new(vec![groups, n_mels], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_lights_up_a_stable_mel_bin() {
        let rate = 8000u32;
        let samples: Vec<f64> = (0..rate as usize * 4)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / rate as f64).sin())
            .collect();
        let feats = log_mel_features(&AudioClip::new(samples, rate).unwrap(), 32, 4).unwrap();
        assert_eq!(feats.shape(), &[4, 32]);
        // the loudest mel channel is the same in every time group
        let hottest: Vec<usize> = (0..4)
            .map(|g| {
                (0..32)
                    .max_by(|&a, &b| feats.at(g, a).total_cmp(&feats.at(g, b)))
                    .unwrap()
            })
            .collect();
        assert!(hottest.windows(2).all(|w| w[0] == w[1]), "{:?}", hottest);
    }

    #[test]
    fn too_few_frames_for_groups_errors() {
        let clip = AudioClip::new(vec![0.0; 1100], 8000).unwrap();
        assert!(log_mel_features(&clip, 8, 50).is_err());
    }
}
