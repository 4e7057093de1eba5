//! Clip windowing and patch masking.

use crate::error::{CoreError, Result};
use crate::silhouette::SilhouetteFrame;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Window size in frames; a clip is always exactly this long.
pub const CLIP_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub frames: Vec<SilhouetteFrame>,
}

impl Clip {
    pub fn new(frames: Vec<SilhouetteFrame>) -> Self {
        assert_eq!(frames.len(), CLIP_LEN, "a clip holds exactly {CLIP_LEN} frames");
        let (w, h) = (frames[0].width, frames[0].height);
        assert!(frames.iter().all(|f| f.width == w && f.height == h));
        Clip { frames }
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// A masked patch: (frame, patch-row, patch-col).
pub type PatchId = (u16, u16, u16);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedClip {
    pub clip: Clip,
    pub patch_size: usize,
    /// Sorted, distinct masked patch ids.
    pub masked: Vec<PatchId>,
}

impl MaskedClip {
    pub fn patches_per_frame(&self) -> (usize, usize) {
        (self.clip.height() / self.patch_size, self.clip.width() / self.patch_size)
    }
}

/// Slice a frame stream into clips starting at 0, stride, 2*stride, ...
/// The trailing remainder is dropped; fewer than CLIP_LEN frames yield none.
pub fn window_clips(frames: &[SilhouetteFrame], stride: usize) -> Vec<Clip> {
    assert!(stride >= 1, "stride must be at least 1");
    let mut clips = Vec::new();
    let mut start = 0;
    while start + CLIP_LEN <= frames.len() {
        clips.push(Clip::new(frames[start..start + CLIP_LEN].to_vec()));
        start += stride;
    }
    clips
}

/// Mask `floor(ratio * total)` distinct patches, uniformly without replacement.
pub fn mask_clip(clip: &Clip, patch_size: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<MaskedClip> {
    let (w, h) = (clip.width(), clip.height());
    if w % patch_size != 0 || h % patch_size != 0 {
        return Err(CoreError::PatchSizeMismatch { width: w, height: h, patch_size });
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(CoreError::InvalidMaskRatio(ratio));
    }
    let pr = h / patch_size;
    let pc = w / patch_size;
    let total = CLIP_LEN * pr * pc;
    let count = (ratio * total as f64).floor() as usize;

    // partial Fisher-Yates over patch indices
    let mut ids: Vec<usize> = (0..total).collect();
    for i in 0..count {
        let j = rng.gen_range(i..total);
        ids.swap(i, j);
    }
    let mut masked: Vec<PatchId> = ids[..count]
        .iter()
        .map(|&flat| {
            let frame = flat / (pr * pc);
            let rem = flat % (pr * pc);
            (frame as u16, (rem / pc) as u16, (rem % pc) as u16)
        })
        .collect();
    masked.sort_unstable();

    Ok(MaskedClip { clip: clip.clone(), patch_size, masked })
}
