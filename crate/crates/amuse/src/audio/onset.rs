//! Half-wave-rectified spectral flux onset envelope.

use super::stft::{onset_stft_params, stft_magnitudes};
use super::AudioClip;
use crate::error::Result;

/// One flux value per hop. The value at index `m` reflects energy that
/// entered the analysis window ending at sample `m * hop + window`, so an
/// impulse registers within one hop of its true position.
///
/// Frames use a rectangular taper: an impulse then contributes to the flux
/// exactly once, when it first enters a window.
pub fn onset_envelope(clip: &AudioClip) -> Result<Vec<f64>> {
    let (window, hop) = onset_stft_params(clip.sample_rate());
    let frames = stft_magnitudes(clip.samples(), window, hop, None)?;
    let bins = window / 2 + 1;
    let mut prev = vec![0.0; bins];
    let mut env = Vec::with_capacity(frames.len());
    for frame in &frames {
        let flux: f64 = frame
            .iter()
            .zip(prev.iter())
            .map(|(cur, old)| (cur - old).max(0.0))
            .sum();
        env.push(flux);
        prev.copy_from_slice(frame);
    }
    Ok(env)
}

/// Seconds spanned by one envelope hop at this sample rate.
pub fn envelope_hop_seconds(sample_rate: u32) -> f64 {
    let (_, hop) = onset_stft_params(sample_rate);
    hop as f64 / sample_rate as f64
}

/// Time in seconds of envelope index `m` (end of its analysis window).
pub fn envelope_time_seconds(sample_rate: u32, index: usize) -> f64 {
    let (window, hop) = onset_stft_params(sample_rate);
    (index * hop + window) as f64 / sample_rate as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::click_track;

    #[test]
    fn silence_has_zero_envelope() {
        let clip = AudioClip::new(vec![0.0; 8000 * 4], 8000).unwrap();
        let env = onset_envelope(&clip).unwrap();
        assert!(env.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_click_localized_within_one_hop() {
        let rate = 8000u32;
        let t0 = 1.5f64;
        let mut samples = vec![0.0; rate as usize * 3];
        let s0 = (t0 * rate as f64) as usize;
        for i in 0..16 {
            samples[s0 + i] = 0.9;
        }
        let clip = AudioClip::new(samples, rate).unwrap();
        let env = onset_envelope(&clip).unwrap();
        let peak = env
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let t_peak = envelope_time_seconds(rate, peak);
        let hop = envelope_hop_seconds(rate);
        assert!(
            (t_peak - t0).abs() <= hop + 1e-9,
            "peak at {}s vs click at {}s (hop {}s)",
            t_peak,
            t0,
            hop
        );
    }

    #[test]
    fn click_track_envelope_autocorrelates_at_beat_period() {
        // 120 BPM -> 0.5 s period
        let rate = 8000u32;
        let clip = click_track(120.0, 8.0, rate, 0.9);
        let env = onset_envelope(&clip).unwrap();
        let mean = env.iter().sum::<f64>() / env.len() as f64;
        let e: Vec<f64> = env.iter().map(|v| v - mean).collect();
        let hop = envelope_hop_seconds(rate);
        let max_lag = (1.0 / hop) as usize;
        let mut best = (0usize, f64::MIN);
        for lag in ((0.2 / hop) as usize)..max_lag {
            let r: f64 = (0..e.len() - lag).map(|m| e[m] * e[m + lag]).sum();
            if r > best.1 {
                best = (lag, r);
            }
        }
        let period = best.0 as f64 * hop;
        assert!((period - 0.5).abs() < 2.0 * hop, "period {}", period);
    }
}
