//! Pause and rate features computed from voiced-segment timestamps.

use alloc::vec::Vec;

use crate::corpus::VadSegments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AcousticError {
    #[error("syllable count is zero")]
    ZeroSyllables,
    #[error("no voiced segments")]
    NoSegments,
}

pub const ACOUSTIC_FEATURE_NAMES: [&str; 10] = [
    "n_pauses",
    "total_pause_dur",
    "avg_pause_dur",
    "normalized_pause_dur",
    "pause_frequency",
    "pause_occurrence_rate",
    "total_utterance_dur",
    "avg_utterance_dur",
    "articulation_rate",
    "speaking_rate",
];

/// Features A1 through A10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticFeatures {
    pub n_pauses: usize,
    pub total_pause_dur: f64,
    pub avg_pause_dur: f64,
    pub normalized_pause_dur: f64,
    pub pause_frequency: f64,
    pub pause_occurrence_rate: f64,
    pub total_utterance_dur: f64,
    pub avg_utterance_dur: f64,
    pub articulation_rate: f64,
    pub speaking_rate: f64,
}

impl AcousticFeatures {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.n_pauses as f64,
            self.total_pause_dur,
            self.avg_pause_dur,
            self.normalized_pause_dur,
            self.pause_frequency,
            self.pause_occurrence_rate,
            self.total_utterance_dur,
            self.avg_utterance_dur,
            self.articulation_rate,
            self.speaking_rate,
        ]
    }
}

fn voiced_duration(v: &VadSegments) -> f64 {
    v.segments().iter().map(|(s, e)| e - s).sum()
}

/// Total voiced duration divided by the syllable count.
pub fn avg_syllable_duration(v: &VadSegments, syllables: u32) -> Result<f64, AcousticError> {
    if syllables == 0 {
        return Err(AcousticError::ZeroSyllables);
    }
    if v.is_empty() {
        return Err(AcousticError::NoSegments);
    }
    Ok(voiced_duration(v) / f64::from(syllables))
}

/// Gaps between adjacent segments strictly longer than `threshold`.
pub fn detect_pauses(v: &VadSegments, threshold: f64) -> Vec<(f64, f64)> {
    v.segments()
        .windows(2)
        .map(|w| (w[0].1, w[1].0))
        .filter(|(s, e)| e - s > threshold)
        .collect()
}

/// Computes A1-A10. The pause threshold is the speaker's average syllable
/// duration.
pub fn acoustic_features(v: &VadSegments, syllables: u32) -> Result<AcousticFeatures, AcousticError> {
    let threshold = avg_syllable_duration(v, syllables)?;
    let pauses = detect_pauses(v, threshold);
    let syl = f64::from(syllables);

    let n_pauses = pauses.len();
    let total_pause_dur: f64 = pauses.iter().map(|(s, e)| e - s).sum();
    let avg_pause_dur = if n_pauses == 0 {
        0.0
    } else {
        total_pause_dur / n_pauses as f64
    };
    let total_utterance_dur = voiced_duration(v);
    let avg_utterance_dur = total_utterance_dur / v.len() as f64;
    let articulation_rate = syl / total_utterance_dur;
    let segs = v.segments();
    let span = segs[segs.len() - 1].1 - segs[0].0;
    let speaking_rate = syl / span;

    Ok(AcousticFeatures {
        n_pauses,
        total_pause_dur,
        avg_pause_dur,
        normalized_pause_dur: total_pause_dur / articulation_rate,
        pause_frequency: n_pauses as f64 / total_utterance_dur,
        pause_occurrence_rate: n_pauses as f64 / syl,
        total_utterance_dur,
        avg_utterance_dur,
        articulation_rate,
        speaking_rate,
    })
}
