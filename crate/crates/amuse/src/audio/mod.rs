//! Audio primitives: clips, segmentation, WAV I/O, STFT features, onset
//! envelopes, and tempo estimation.

mod mel;
mod onset;
mod stft;
mod tempo;
mod wav;

pub use mel::log_mel_features;
pub use onset::{envelope_hop_seconds, envelope_time_seconds, onset_envelope};
pub use stft::{band_energy_fractions, hann_window, onset_stft_params, stft_magnitudes};
pub use tempo::{estimate_bpm, TempoBand};
pub use wav::{read_wav, write_wav};

use crate::error::{AmuseError, Result};

/// Mono audio with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AmuseError::invalid("audio_clip", "sample rate must be positive"));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Splits a clip into `floor(T/t)` non-overlapping segments of `t` seconds;
/// a trailing remainder shorter than `t` is dropped.
pub fn segment_audio(clip: &AudioClip, t: f64) -> Result<Vec<AudioClip>> {
    if t <= 0.0 {
        return Err(AmuseError::invalid(
            "segment_audio",
            format!("segment length {}s must be positive", t),
        ));
    }
    let total = clip.duration();
    if t > total {
        return Err(AmuseError::invalid(
            "segment_audio",
            format!("segment length {}s exceeds clip duration {}s", t, total),
        ));
    }
    let rate = clip.sample_rate as f64;
    let n = (total / t).floor() as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let start = (i as f64 * t * rate).round() as usize;
        let end = ((i + 1) as f64 * t * rate).round() as usize;
        out.push(AudioClip {
            samples: clip.samples[start..end.min(clip.samples.len())].to_vec(),
            sample_rate: clip.sample_rate,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn silence(seconds: f64, rate: u32) -> AudioClip {
        AudioClip::new(vec![0.0; (seconds * rate as f64).round() as usize], rate).unwrap()
    }

    #[test]
    fn sixty_seconds_in_six_second_segments_gives_ten() {
        let clip = silence(60.0, 8000);
        let segs = segment_audio(&clip, 6.0).unwrap();
        assert_eq!(segs.len(), 10);
        assert!(segs.iter().all(|s| s.len() == 48_000));
    }

    #[test]
    fn whole_clip_segment() {
        let clip = silence(5.0, 8000);
        let segs = segment_audio(&clip, 5.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0], clip);
    }

    #[test]
    fn thirteen_over_six_drops_the_tail() {
        // floor(13/6) = 2 segments covering [0, 12); last second dropped
        let clip = silence(13.0, 8000);
        let segs = segment_audio(&clip, 6.0).unwrap();
        assert_eq!(segs.len(), 2);
        let covered: usize = segs.iter().map(|s| s.len()).sum();
        assert_eq!(covered, 96_000);
    }

    #[test]
    fn invalid_segment_lengths_error() {
        let clip = silence(10.0, 8000);
        assert!(segment_audio(&clip, 0.0).is_err());
        assert!(segment_audio(&clip, -1.0).is_err());
        assert!(segment_audio(&clip, 10.5).is_err());
    }
}
