//! Scripted order-probe model.
//!
//! A model whose logits are an analytic function of the frame features, so
//! ordering questions have exact ground truth. Each event occupies one
//! feature axis; a frame "shows" an event when that axis carries mass. The
//! probe scores "X before Y" answer tokens from a recency-weighted sum of
//! per-frame event strengths, plus a configurable language-prior bias that
//! can contradict the visual order. Its attention concentrates the
//! preceding token's mass on the positions carrying event signal.
//!
//! The encoder side is a stack of identity layers, which still gives the
//! layer-wise blending a real channel to act on: blending toward the frame
//! mean progressively erases the order signal while the bias term survives.

use super::{
    check_tokens, DecoderOutput, ModelContract, TokenId, VideoInput, VideoTensor,
};
use crate::error::{Error, Result};
use crate::numerics::softmax;
use crate::tensor::{FrameFeatures, Mat};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How per-frame event strength is aggregated into an order score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    /// Earlier frames weigh more: the event seen earliest scores highest.
    #[default]
    EarliestFirst,
    /// Later frames weigh more.
    LatestFirst,
}

/// Filler logit for tokens that are not live answers at the current step.
const INERT_LOGIT: f64 = -50.0;
/// Logit forcing end-of-sequence once an answer token has been emitted.
const EOS_LOGIT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Named events, one per feature axis, in axis order. At least two.
    pub event_tokens: Vec<String>,
    #[serde(default)]
    pub order_rule: OrderRule,
    /// Additive language-prior bias per answer token text (e.g. "B_before_A").
    #[serde(default)]
    pub prior_bias: BTreeMap<String, f64>,
    /// Identity encoder depth; the homogenization channel length.
    #[serde(default = "default_probe_layers")]
    pub encoder_layers: usize,
    /// Multiplier on the visual order margin entering the answer logits.
    #[serde(default = "default_score_scale")]
    pub score_scale: f64,
    /// Sharpness of the constructed attention over event-bearing positions.
    #[serde(default = "default_attn_sharpness")]
    pub attn_sharpness: f64,
}

fn default_probe_layers() -> usize {
    3
}

fn default_score_scale() -> f64 {
    4.0
}

fn default_attn_sharpness() -> f64 {
    4.0
}

/// Scripted probe model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    spec: ProbeSpec,
    /// Answer-token texts, id order.
    pair_texts: Vec<String>,
    /// (earlier event axis, later event axis) per answer token.
    pairs: Vec<(usize, usize)>,
}

impl ProbeModel {
    pub fn build(spec: ProbeSpec) -> Result<Self> {
        let n = spec.event_tokens.len();
        if n < 2 {
            return Err(Error::invalid("probe needs at least 2 event tokens"));
        }
        for (i, name) in spec.event_tokens.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::invalid(format!("event token {i} is empty")));
            }
            if spec.event_tokens[..i].contains(name) {
                return Err(Error::invalid(format!("duplicate event token `{name}`")));
            }
        }
        if !(spec.score_scale > 0.0 && spec.score_scale.is_finite()) {
            return Err(Error::invalid("score_scale must be a positive finite real"));
        }
        if !(spec.attn_sharpness >= 0.0 && spec.attn_sharpness.is_finite()) {
            return Err(Error::invalid("attn_sharpness must be finite and >= 0"));
        }
        if spec.encoder_layers < 2 {
            return Err(Error::invalid("probe encoder_layers must be >= 2"));
        }
        let mut pair_texts = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pair_texts.push(format!(
                        "{}_before_{}",
                        spec.event_tokens[i], spec.event_tokens[j]
                    ));
                    pairs.push((i, j));
                }
            }
        }
        for (key, value) in &spec.prior_bias {
            if !pair_texts.iter().any(|t| t == key) {
                return Err(Error::invalid(format!(
                    "prior_bias key `{key}` is not an answer token of this probe"
                )));
            }
            if !value.is_finite() {
                return Err(Error::invalid(format!(
                    "prior_bias[`{key}`] must be finite, got {value}"
                )));
            }
        }
        Ok(ProbeModel {
            spec,
            pair_texts,
            pairs,
        })
    }

    pub fn spec(&self) -> &ProbeSpec {
        &self.spec
    }

    pub fn event_count(&self) -> usize {
        self.spec.event_tokens.len()
    }

    /// Answer token asserting event `earlier` precedes event `later`
    /// (indices into `event_tokens`).
    pub fn pair_token(&self, earlier: usize, later: usize) -> Result<TokenId> {
        self.pairs
            .iter()
            .position(|&(i, j)| i == earlier && j == later)
            .map(|p| p as TokenId)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "no answer token for event pair ({earlier}, {later})"
                ))
            })
    }

    /// The single query token the probe understands.
    pub fn query_token(&self) -> TokenId {
        self.pairs.len() as TokenId
    }

    fn check_features(&self, features: &FrameFeatures) -> Result<()> {
        if features.dim() < self.event_count() {
            return Err(Error::shape(format!(
                "probe needs feature dim >= {} (one axis per event), got {}",
                self.event_count(),
                features.dim()
            )));
        }
        Ok(())
    }

    /// Mean strength of event axis `e` in frame `t`.
    fn event_strength(features: &FrameFeatures, t: usize, e: usize) -> f64 {
        let frame = &features.frames[t];
        let k = frame.rows() as f64;
        (0..frame.rows()).map(|p| frame.at(p, e)).sum::<f64>() / k
    }

    /// Recency-weighted order score per event axis.
    fn order_scores(&self, features: &FrameFeatures) -> Vec<f64> {
        let t_total = features.frame_count();
        (0..self.event_count())
            .map(|e| {
                (0..t_total)
                    .map(|t| {
                        let weight = match self.spec.order_rule {
                            OrderRule::EarliestFirst => (t_total - t) as f64 / t_total as f64,
                            OrderRule::LatestFirst => (t + 1) as f64 / t_total as f64,
                        };
                        weight * Self::event_strength(features, t, e)
                    })
                    .sum()
            })
            .collect()
    }
}

impl ModelContract for ProbeModel {
    fn encoder_layer_count(&self) -> usize {
        self.spec.encoder_layers
    }

    fn decoder_layer_count(&self) -> usize {
        1
    }

    fn vocab_size(&self) -> usize {
        self.pairs.len() + 2 // answer tokens + query + eos
    }

    fn eos_token(&self) -> TokenId {
        (self.pairs.len() + 1) as TokenId
    }

    fn token_text(&self, id: TokenId) -> String {
        let id = id as usize;
        if id < self.pair_texts.len() {
            self.pair_texts[id].clone()
        } else if id == self.pair_texts.len() {
            "<q>".to_string()
        } else {
            "<eos>".to_string()
        }
    }

    fn embed_frames(&self, video: &VideoInput) -> Result<FrameFeatures> {
        let features = FrameFeatures::new(video.frames().to_vec())?;
        self.check_features(&features)?;
        Ok(features)
    }

    fn encoder_layer(&self, layer: usize, input: &FrameFeatures) -> Result<FrameFeatures> {
        if layer == 0 || layer > self.spec.encoder_layers {
            return Err(Error::invalid(format!(
                "encoder layer {layer} out of range 1..={}",
                self.spec.encoder_layers
            )));
        }
        Ok(input.clone())
    }

    fn project(&self, final_features: &FrameFeatures) -> Result<FrameFeatures> {
        Ok(final_features.clone())
    }

    fn decode_step(
        &self,
        visual: &VideoTensor,
        query: &[TokenId],
        generated: &[TokenId],
    ) -> Result<DecoderOutput> {
        check_tokens(self, query)?;
        check_tokens(self, generated)?;
        let features = &visual.features;
        self.check_features(features)?;

        let scores = self.order_scores(features);
        let mut logits = vec![INERT_LOGIT; self.vocab_size()];
        for (tok, &(i, j)) in self.pairs.iter().enumerate() {
            let visual_margin = self.spec.score_scale * (scores[i] - scores[j]);
            let bias = self
                .spec
                .prior_bias
                .get(&self.pair_texts[tok])
                .copied()
                .unwrap_or(0.0);
            logits[tok] = visual_margin + bias;
        }
        if !generated.is_empty() {
            logits[self.eos_token() as usize] = EOS_LOGIT;
        }

        // One constructed attention layer. Every row softmaxes, over its
        // causal prefix, a score vector that concentrates on event-bearing
        // visual positions; text positions score zero.
        let layout = self.token_layout(visual);
        let n = layout.visual_len() + query.len() + generated.len();
        let mut position_scores = vec![0.0f64; n];
        for t in 0..features.frame_count() {
            for k in 0..features.patches() {
                let rel: f64 = (0..self.event_count())
                    .map(|e| features.frames[t].at(k, e).abs())
                    .sum();
                position_scores[layout.position_of(t, k)] = self.spec.attn_sharpness * rel;
            }
        }
        let mut attn = Mat::zeros(n, n);
        for i in 0..n {
            let probs = softmax(&position_scores[..=i], 1.0)?;
            for (j, &p) in probs.values().iter().enumerate() {
                attn.set(i, j, p);
            }
        }

        Ok(DecoderOutput {
            logits,
            attentions: vec![attn],
        })
    }
}
