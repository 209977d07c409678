//! Fixed-capacity voice mixer with oldest-voice stealing.

use std::sync::Arc;

use super::assets::SoundAsset;

pub const MAX_VOICES: usize = 64;

/// Below this magnitude the output is the plain sum.
const CLIP_KNEE: f32 = 0.8;

/// Identity below the knee, tanh-compressed into (knee, 1) above it.
#[inline]
pub fn soft_clip(x: f32) -> f32 {
    let a = x.abs();
    if a <= CLIP_KNEE {
        x
    } else {
        let head = 1.0 - CLIP_KNEE;
        (CLIP_KNEE + head * ((a - CLIP_KNEE) / head).tanh()).copysign(x)
    }
}

struct Voice {
    samples: Arc<[f32]>,
    /// Next sample index into `samples` (interleaved).
    pos: usize,
    /// Frames of silence before the voice begins.
    delay: usize,
    gain: f32,
    serial: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MixerStats {
    pub voices_started: u64,
    pub voices_stolen: u64,
}

pub struct Mixer {
    voices: Vec<Voice>,
    next_serial: u64,
    stats: MixerStats,
}

impl Default for Mixer {
    fn default() -> Self {
        Self::new()
    }
}

impl Mixer {
    pub fn new() -> Self {
        Mixer { voices: Vec::with_capacity(MAX_VOICES), next_serial: 0, stats: MixerStats::default() }
    }

    /// Starts `asset` after `delay_frames` frames of the next render call.
    pub fn start(&mut self, asset: &SoundAsset, gain: f32, delay_frames: usize) {
        let voice =
            Voice { samples: Arc::clone(asset.samples()), pos: 0, delay: delay_frames, gain, serial: self.next_serial };
        self.next_serial += 1;
        self.stats.voices_started += 1;
        if self.voices.len() < MAX_VOICES {
            self.voices.push(voice);
        } else {
            let oldest = self
                .voices
                .iter()
                .enumerate()
                .min_by_key(|(_, v)| v.serial)
                .map(|(i, _)| i)
                .expect("full mixer has voices");
            self.voices[oldest] = voice;
            self.stats.voices_stolen += 1;
        }
    }

    pub fn active_voices(&self) -> usize {
        self.voices.len()
    }

    pub fn stats(&self) -> MixerStats {
        self.stats
    }

    /// Frames until every current voice has finished.
    pub fn remaining_frames(&self) -> usize {
        self.voices.iter().map(|v| v.delay + (v.samples.len() - v.pos) / 2).max().unwrap_or(0)
    }

    /// Fills `out` (interleaved stereo) with the next block.
    pub fn render(&mut self, out: &mut [f32]) {
        out.fill(0.0);
        let frames = out.len() / 2;
        for v in self.voices.iter_mut() {
            let skip = v.delay.min(frames);
            v.delay -= skip;
            let avail = (v.samples.len() - v.pos) / 2;
            let n = (frames - skip).min(avail);
            let src = &v.samples[v.pos..v.pos + n * 2];
            for (o, s) in out[skip * 2..(skip + n) * 2].iter_mut().zip(src) {
                *o += s * v.gain;
            }
            v.pos += n * 2;
        }
        self.voices.retain(|v| v.delay > 0 || v.pos < v.samples.len());
        for s in out.iter_mut() {
            *s = soft_clip(*s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asset(peak: f32, frames: usize) -> SoundAsset {
        let mut s = vec![0.0f32; frames * 2];
        s[frames] = peak;
        s[frames + 1] = -peak;
        SoundAsset::from_stereo("t", s)
    }

    fn peak(buf: &[f32]) -> f32 {
        buf.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    #[test]
    fn single_voice_is_identity() {
        let mut m = Mixer::new();
        m.start(&asset(0.5, 100), 1.0, 0);
        let mut out = vec![0.0; 200];
        m.render(&mut out);
        assert_eq!(peak(&out), 0.5);
        assert_eq!(m.active_voices(), 0);
    }

    #[test]
    fn overlapping_voices_soft_clip() {
        let mut m = Mixer::new();
        let a = asset(0.6, 100);
        m.start(&a, 1.0, 0);
        m.start(&a, 1.0, 0);
        let mut out = vec![0.0; 200];
        m.render(&mut out);
        let p = peak(&out);
        assert!(p <= 1.0 && p > 0.8, "{p}");
    }

    #[test]
    fn delay_and_block_boundaries() {
        let mut m = Mixer::new();
        m.start(&asset(0.5, 10), 1.0, 15);
        let mut a = vec![0.0; 20];
        m.render(&mut a);
        assert_eq!(peak(&a), 0.0);
        assert_eq!(m.remaining_frames(), 15);
        let mut b = vec![0.0; 20];
        m.render(&mut b);
        let mut c = vec![0.0; 20];
        m.render(&mut c);
        assert_eq!(peak(&b) + peak(&c), 0.5);
        assert_eq!(m.active_voices(), 0);
    }

    #[test]
    fn voice_cap_steals_oldest() {
        let mut m = Mixer::new();
        let a = asset(0.1, 1000);
        for _ in 0..MAX_VOICES + 3 {
            m.start(&a, 0.1, 0);
        }
        assert_eq!(m.active_voices(), MAX_VOICES);
        assert_eq!(m.stats(), MixerStats { voices_started: 67, voices_stolen: 3 });
    }

    #[test]
    fn soft_clip_bounds() {
        assert_eq!(soft_clip(0.3), 0.3);
        assert_eq!(soft_clip(-0.8), -0.8);
        for x in [0.81f32, 1.0, 2.0, 50.0] {
            let y = soft_clip(x);
            assert!(y > 0.8 && y <= 1.0);
            assert_eq!(soft_clip(-x), -y);
        }
    }
}
