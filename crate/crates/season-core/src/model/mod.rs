//! The video-language-model contract the engine decodes against, plus the
//! two concrete implementations used at desk scale: a seeded toy transformer
//! (`toy`) and a scripted order-probe model (`probe`).
//!
//! The contract splits the vision encoder into steppable pieces
//! (`embed_frames` / `encoder_layer` / `project`) so the negative
//! constructions can re-run it layer by layer with feature injection.

pub mod probe;
pub mod toy;

pub use probe::{OrderRule, ProbeModel, ProbeSpec};
pub use toy::{EncoderKind, ToyConfig, ToyModel};

use crate::error::{Error, Result};
use crate::tensor::{FrameFeatures, Mat};
use serde::{Deserialize, Serialize};

/// Token id within the shared text vocabulary.
pub type TokenId = u32;

/// Raw video input: per-frame patch-embedding matrices, all the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInput {
    frames: Vec<Mat>,
}

impl VideoInput {
    pub fn new(frames: Vec<Mat>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("video must have at least one frame"));
        }
        let (k, d) = (frames[0].rows(), frames[0].cols());
        for (t, f) in frames.iter().enumerate() {
            if f.rows() != k || f.cols() != d {
                return Err(Error::shape(format!(
                    "frame {t} is {}x{}, expected {k}x{d}",
                    f.rows(),
                    f.cols()
                )));
            }
            if !f.is_finite() {
                return Err(Error::invalid(format!("frame {t} has non-finite entries")));
            }
        }
        Ok(VideoInput { frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn patches(&self) -> usize {
        self.frames[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn frames(&self) -> &[Mat] {
        &self.frames
    }

    /// Frames reordered as `new[i] = old[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<VideoInput> {
        if perm.len() != self.frame_count() {
            return Err(Error::invalid(format!(
                "permutation has {} entries for {} frames",
                perm.len(),
                self.frame_count()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::invalid("not a permutation"));
            }
            seen[p] = true;
        }
        VideoInput::new(perm.iter().map(|&p| self.frames[p].clone()).collect())
    }

    pub fn reversed(&self) -> VideoInput {
        let mut frames = self.frames.clone();
        frames.reverse();
        VideoInput { frames }
    }
}

/// Which construction produced a visual-token tensor. Metadata only: no
/// numeric path may branch on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoTag {
    Original,
    SpatialNegative,
    TemporalNegative,
    AblationVariant,
}

/// Visual tokens fed to the decoder: `frames x patches x dim` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTensor {
    pub features: FrameFeatures,
    pub tag: VideoTag,
}

impl VideoTensor {
    pub fn new(features: FrameFeatures, tag: VideoTag) -> Result<Self> {
        if !features.is_finite() {
            return Err(Error::invalid("video tensor has non-finite entries"));
        }
        Ok(VideoTensor { features, tag })
    }

    pub fn frame_count(&self) -> usize {
        self.features.frame_count()
    }

    pub fn with_tag(&self, tag: VideoTag) -> VideoTensor {
        VideoTensor {
            features: self.features.clone(),
            tag,
        }
    }
}

/// Per-layer encoder record from a standard forward pass: the features after
/// every layer's transform and their frame means d_l.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub per_layer: Vec<FrameFeatures>,
    pub layer_means: Vec<Mat>,
}

impl LayerCache {
    pub fn layer_count(&self) -> usize {
        self.per_layer.len()
    }

    pub fn final_features(&self) -> &FrameFeatures {
        self.per_layer.last().expect("cache has at least one layer")
    }
}

/// One decoder forward pass: next-token logits plus, for every decoder
/// layer, the full attention matrix already summed over heads.
#[derive(Debug, Clone)]
pub struct DecoderOutput {
    pub logits: Vec<f64>,
    pub attentions: Vec<Mat>,
}

impl DecoderOutput {
    pub fn sequence_len(&self) -> usize {
        self.attentions.first().map_or(0, Mat::rows)
    }
}

/// Maps sequence positions to visual (frame, patch) coordinates. Visual
/// tokens occupy the first `frames * patches` positions, frame-major; text
/// follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    pub frames: usize,
    pub patches: usize,
}

impl TokenLayout {
    pub fn visual_len(&self) -> usize {
        self.frames * self.patches
    }

    pub fn position_of(&self, frame: usize, patch: usize) -> usize {
        debug_assert!(frame < self.frames && patch < self.patches);
        frame * self.patches + patch
    }

    /// Inverse mapping; `None` for text positions.
    pub fn frame_patch_of(&self, position: usize) -> Option<(usize, usize)> {
        if position < self.visual_len() {
            Some((position / self.patches, position % self.patches))
        } else {
            None
        }
    }
}

/// The model interface the decoding engine is generic over.
///
/// Implementations must be deterministic: identical inputs always produce
/// bit-identical outputs. A built model is immutable, so concurrent
/// read-only calls are safe.
pub trait ModelContract: Send + Sync {
    fn encoder_layer_count(&self) -> usize;
    fn decoder_layer_count(&self) -> usize;
    fn vocab_size(&self) -> usize;

    /// Designated end-of-sequence token; decoding halts when it is emitted.
    fn eos_token(&self) -> TokenId;

    /// Human-readable rendering of a token id for traces and reports.
    fn token_text(&self, id: TokenId) -> String;

    /// h_0: per-frame patch embeddings.
    fn embed_frames(&self, video: &VideoInput) -> Result<FrameFeatures>;

    /// Apply encoder layer `layer` (1-based) to per-frame features:
    /// h'_l = E^(l)(h_{l-1}). Frames are processed independently.
    fn encoder_layer(&self, layer: usize, input: &FrameFeatures) -> Result<FrameFeatures>;

    /// Project final-layer encoder features into decoder visual tokens.
    fn project(&self, final_features: &FrameFeatures) -> Result<FrameFeatures>;

    /// One decoder forward pass over [visual tokens | query | generated].
    fn decode_step(
        &self,
        visual: &VideoTensor,
        query: &[TokenId],
        generated: &[TokenId],
    ) -> Result<DecoderOutput>;

    /// Sequence layout for a given visual tensor: its frames*patches visual
    /// positions come first, frame-major, then text.
    fn token_layout(&self, visual: &VideoTensor) -> TokenLayout {
        TokenLayout {
            frames: visual.features.frame_count(),
            patches: visual.features.patches(),
        }
    }

    /// Standard forward pass recording every layer's features and d_l.
    fn encode_layerwise(&self, video: &VideoInput) -> Result<LayerCache> {
        let mut features = self.embed_frames(video)?;
        let layers = self.encoder_layer_count();
        let mut per_layer = Vec::with_capacity(layers);
        let mut layer_means = Vec::with_capacity(layers);
        for l in 1..=layers {
            features = self.encoder_layer(l, &features)?;
            layer_means.push(features.frame_mean());
            per_layer.push(features.clone());
        }
        Ok(LayerCache {
            per_layer,
            layer_means,
        })
    }

    /// Full clean encode: v^O.
    fn encode_original(&self, video: &VideoInput) -> Result<VideoTensor> {
        let cache = self.encode_layerwise(video)?;
        let projected = self.project(cache.final_features())?;
        VideoTensor::new(projected, VideoTag::Original)
    }
}

pub(crate) fn check_tokens(model: &dyn ModelContract, tokens: &[TokenId]) -> Result<()> {
    for &t in tokens {
        if t as usize >= model.vocab_size() {
            return Err(Error::invalid(format!(
                "token id {t} out of vocabulary (size {})",
                model.vocab_size()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_layout_bijection() {
        let layout = TokenLayout {
            frames: 3,
            patches: 4,
        };
        let mut seen = vec![false; layout.visual_len()];
        for t in 0..3 {
            for k in 0..4 {
                let pos = layout.position_of(t, k);
                assert!(!seen[pos], "position {pos} mapped twice");
                seen[pos] = true;
                assert_eq!(layout.frame_patch_of(pos), Some((t, k)));
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(layout.frame_patch_of(layout.visual_len()), None);
    }

    #[test]
    fn video_input_validation() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 4);
        assert!(VideoInput::new(vec![]).is_err());
        assert!(VideoInput::new(vec![a.clone(), b]).is_err());
        let mut c = Mat::zeros(2, 3);
        c.set(0, 0, f64::NAN);
        assert!(VideoInput::new(vec![c]).is_err());
        assert!(VideoInput::new(vec![a]).is_ok());
    }

    #[test]
    fn permutation_validation() {
        let v = VideoInput::new(vec![Mat::zeros(1, 2), Mat::zeros(1, 2)]).unwrap();
        assert!(v.permuted(&[0]).is_err());
        assert!(v.permuted(&[0, 0]).is_err());
        assert!(v.permuted(&[2, 0]).is_err());
        assert!(v.permuted(&[1, 0]).is_ok());
    }
}
