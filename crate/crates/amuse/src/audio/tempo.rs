//! Tempo estimation: banded autocorrelation of the onset envelope.

use super::onset::onset_envelope;
use super::stft::onset_stft_params;
use super::AudioClip;
use crate::error::{AmuseError, Result};

/// Tempo search band in BPM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoBand {
    pub min_bpm: f64,
    pub max_bpm: f64,
}

impl Default for TempoBand {
    fn default() -> Self {
        TempoBand {
            min_bpm: 40.0,
            max_bpm: 200.0,
        }
    }
}

/// Tempo of a clip in BPM, or `None` for a degenerate (silent) envelope.
///
/// The estimate is the lag maximizing the mean-subtracted autocorrelation of
/// the onset envelope, restricted to the search band, with exact ties broken
/// toward the slower tempo and the peak refined by parabolic interpolation.
pub fn estimate_bpm(clip: &AudioClip, band: TempoBand) -> Result<Option<f64>> {
    if band.min_bpm <= 0.0 || band.max_bpm <= band.min_bpm {
        return Err(AmuseError::invalid("estimate_bpm", "invalid tempo band"));
    }
    let env = onset_envelope(clip)?;
    if env.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let (_, hop) = onset_stft_params(clip.sample_rate());
    let hop_s = hop as f64 / clip.sample_rate() as f64;
    let lag_min = ((60.0 / band.max_bpm) / hop_s).ceil() as usize;
    let lag_max = ((60.0 / band.min_bpm) / hop_s).floor() as usize;
    if lag_max + 1 >= env.len() {
        return Err(AmuseError::invalid(
            "estimate_bpm",
            format!(
                "clip too short: {} envelope hops cannot resolve a {} BPM period",
                env.len(),
                band.min_bpm
            ),
        ));
    }
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    let e: Vec<f64> = env.iter().map(|v| v - mean).collect();
    let autocorr = |lag: usize| -> f64 { (0..e.len() - lag).map(|m| e[m] * e[m + lag]).sum() };

    // A non-integral beat period splits its autocorrelation mass over two
    // adjacent lags, which can hand the argmax to a period multiple. Summing
    // each lag with its neighbors re-consolidates the peak.
    let lo = lag_min.saturating_sub(2).max(1);
    let hi = (lag_max + 2).min(env.len() - 1);
    let raw: Vec<f64> = (lo..=hi).map(autocorr).collect();
    let smooth = |lag: usize| -> f64 {
        let i = lag - lo;
        let mut s = raw[i];
        if i > 0 {
            s += raw[i - 1];
        }
        if i + 1 < raw.len() {
            s += raw[i + 1];
        }
        s
    };

    let mut best_lag = lag_min;
    let mut best_r = f64::NEG_INFINITY;
    for lag in lag_min..=lag_max {
        let r = smooth(lag);
        if r >= best_r {
            best_r = r;
            best_lag = lag;
        }
    }
    // parabolic refinement around the integer peak
    let refined = if best_lag > lo && best_lag < hi {
        let (rm, r0, rp) = (smooth(best_lag - 1), best_r, smooth(best_lag + 1));
        let denom = rm - 2.0 * r0 + rp;
        if denom.abs() > 1e-12 {
            let delta = 0.5 * (rm - rp) / denom;
            best_lag as f64 + delta.clamp(-0.5, 0.5)
        } else {
            best_lag as f64
        }
    } else {
        best_lag as f64
    };
    Ok(Some(60.0 / (refined * hop_s)))
}
