//! Seeded toy video-language model.
//!
//! Desk-scale stand-in for a real backbone. The encoder processes frames
//! independently (per-frame patch self-attention + MLP, or a plain linear
//! map in the `linear` variant) so it has no cross-frame channel at all:
//! temporal homogenization is the only way temporal information can mix.
//! The decoder is a standard causal attention stack that exposes its
//! per-layer attention maps summed over heads.

use super::{check_tokens, DecoderOutput, ModelContract, TokenId, VideoInput, VideoTensor};
use crate::error::{Error, Result};
use crate::numerics::{softmax, SeededRng};
use crate::tensor::{FrameFeatures, Mat};
use serde::{Deserialize, Serialize};

/// Encoder layer flavor. `AttnMlp` is the default transformer block;
/// `Linear` replaces each block with an affine map, which makes the
/// layer-wise blending analysis exact (used by the monotonicity check).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    AttnMlp,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub encoder_layers: usize,
    #[serde(default = "default_decoder_layers")]
    pub decoder_layers: usize,
    pub heads: usize,
    pub patches: usize,
    pub dim: usize,
    pub vocab: usize,
    pub seed: u64,
    #[serde(default)]
    pub encoder_kind: EncoderKind,
}

fn default_decoder_layers() -> usize {
    4
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_layers < 2 {
            return Err(Error::invalid(
                "encoder_layers must be >= 2 so the blending recurrence is nontrivial",
            ));
        }
        if self.decoder_layers < 1 {
            return Err(Error::invalid("decoder_layers must be >= 1"));
        }
        if self.heads < 1 {
            return Err(Error::invalid("heads must be >= 1"));
        }
        if self.patches < 1 || self.dim < 1 {
            return Err(Error::invalid("patches and dim must be >= 1"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.vocab < 2 {
            return Err(Error::invalid("vocab must be >= 2 (eos plus one token)"));
        }
        Ok(())
    }
}

/// One multi-head attention block's weights.
#[derive(Debug, Clone)]
struct AttnWeights {
    wq: Vec<Mat>,
    wk: Vec<Mat>,
    wv: Vec<Mat>,
    wo: Mat,
}

#[derive(Debug, Clone)]
struct MlpWeights {
    w1: Mat,
    b1: Vec<f64>,
    w2: Mat,
}

#[derive(Debug, Clone)]
enum EncoderLayer {
    AttnMlp { attn: AttnWeights, mlp: MlpWeights },
    Linear { w: Mat, b: Vec<f64> },
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    attn: AttnWeights,
    mlp: MlpWeights,
}

/// Deterministic toy model built from a seed. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ToyConfig,
    embedding: Mat,
    encoder: Vec<EncoderLayer>,
    projection: Mat,
    decoder: Vec<DecoderLayer>,
    output_head: Mat,
}

fn random_mat(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.next_gaussian() * scale;
    }
    m
}

fn random_vec(rng: &mut SeededRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.next_gaussian() * scale).collect()
}

fn random_attn(rng: &mut SeededRng, dim: usize, heads: usize) -> AttnWeights {
    let dh = dim / heads;
    let s = 1.0 / (dim as f64).sqrt();
    let per_head = |rng: &mut SeededRng| {
        (0..heads)
            .map(|_| random_mat(rng, dim, dh, s))
            .collect::<Vec<_>>()
    };
    let wq = per_head(rng);
    let wk = per_head(rng);
    let wv = per_head(rng);
    let wo = random_mat(rng, dim, dim, s);
    AttnWeights { wq, wk, wv, wo }
}

fn random_mlp(rng: &mut SeededRng, dim: usize) -> MlpWeights {
    let s = 1.0 / (dim as f64).sqrt();
    MlpWeights {
        w1: random_mat(rng, dim, dim, s),
        b1: random_vec(rng, dim, 0.1),
        w2: random_mat(rng, dim, dim, s),
    }
}

impl ToyModel {
    pub fn build(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed);
        let dim = config.dim;
        let embedding = random_mat(&mut rng, config.vocab, dim, 0.5);
        let encoder = (0..config.encoder_layers)
            .map(|_| match config.encoder_kind {
                EncoderKind::AttnMlp => EncoderLayer::AttnMlp {
                    attn: random_attn(&mut rng, dim, config.heads),
                    mlp: random_mlp(&mut rng, dim),
                },
                EncoderKind::Linear => EncoderLayer::Linear {
                    w: random_mat(&mut rng, dim, dim, 1.0 / (dim as f64).sqrt()),
                    b: random_vec(&mut rng, dim, 0.1),
                },
            })
            .collect();
        let projection = random_mat(&mut rng, dim, dim, 1.0 / (dim as f64).sqrt());
        let decoder = (0..config.decoder_layers)
            .map(|_| DecoderLayer {
                attn: random_attn(&mut rng, dim, config.heads),
                mlp: random_mlp(&mut rng, dim),
            })
            .collect();
        let output_head = random_mat(&mut rng, dim, config.vocab, 1.0 / (dim as f64).sqrt());
        Ok(ToyModel {
            config,
            embedding,
            encoder,
            projection,
            decoder,
            output_head,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    /// Multi-head attention over `x`, returning the residual-added output
    /// and the per-head (row-stochastic) attention matrices. Masked entries
    /// of causal rows are exactly zero.
    fn attention(x: &Mat, w: &AttnWeights, causal: bool) -> (Mat, Vec<Mat>) {
        let n = x.rows();
        let heads = w.wq.len();
        let dh = w.wq[0].cols();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut concat = Mat::zeros(n, heads * dh);
        let mut attn_maps = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = x.matmul(&w.wq[h]);
            let k = x.matmul(&w.wk[h]);
            let v = x.matmul(&w.wv[h]);
            let mut attn = Mat::zeros(n, n);
            for i in 0..n {
                let limit = if causal { i + 1 } else { n };
                let scores: Vec<f64> = (0..limit)
                    .map(|j| {
                        let dot: f64 = q.row(i).iter().zip(k.row(j)).map(|(a, b)| a * b).sum();
                        dot * inv_sqrt
                    })
                    .collect();
                let probs = softmax(&scores, 1.0).expect("finite attention scores");
                for (j, &p) in probs.values().iter().enumerate() {
                    attn.set(i, j, p);
                }
            }
            let head_out = attn.matmul(&v);
            for i in 0..n {
                let dst = concat.row_mut(i);
                dst[h * dh..(h + 1) * dh].copy_from_slice(head_out.row(i));
            }
            attn_maps.push(attn);
        }
        let mut out = concat.matmul(&w.wo);
        out.add_assign(x);
        (out, attn_maps)
    }

    fn mlp(x: &Mat, w: &MlpWeights) -> Mat {
        let mut hidden = x.matmul(&w.w1);
        for i in 0..hidden.rows() {
            for (v, b) in hidden.row_mut(i).iter_mut().zip(&w.b1) {
                *v = (*v + b).tanh();
            }
        }
        let mut out = hidden.matmul(&w.w2);
        out.add_assign(x);
        out
    }

    fn sinusoidal_position(&self, pos: usize, dim: usize) -> Vec<f64> {
        let mut pe = vec![0.0; dim];
        for i in 0..dim {
            let exponent = (2 * (i / 2)) as f64 / dim as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe[i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
        pe
    }

    /// Assemble the decoder input sequence: visual tokens (frame-major),
    /// then embedded query and generated tokens, plus positional encoding.
    fn build_sequence(
        &self,
        visual: &VideoTensor,
        query: &[TokenId],
        generated: &[TokenId],
    ) -> Result<Mat> {
        let feats = &visual.features;
        if feats.patches() != self.config.patches || feats.dim() != self.config.dim {
            return Err(Error::shape(format!(
                "visual tokens are {}x{}, model expects {}x{}",
                feats.patches(),
                feats.dim(),
                self.config.patches,
                self.config.dim
            )));
        }
        check_tokens(self, query)?;
        check_tokens(self, generated)?;
        let layout = self.token_layout(visual);
        let n = layout.visual_len() + query.len() + generated.len();
        let dim = self.config.dim;
        let mut seq = Mat::zeros(n, dim);
        for t in 0..feats.frame_count() {
            for k in 0..feats.patches() {
                let pos = layout.position_of(t, k);
                seq.row_mut(pos).copy_from_slice(feats.frames[t].row(k));
            }
        }
        for (i, &tok) in query.iter().chain(generated.iter()).enumerate() {
            let pos = layout.visual_len() + i;
            seq.row_mut(pos).copy_from_slice(self.embedding.row(tok as usize));
        }
        for pos in 0..n {
            let pe = self.sinusoidal_position(pos, dim);
            for (v, p) in seq.row_mut(pos).iter_mut().zip(&pe) {
                *v += p;
            }
        }
        Ok(seq)
    }

    /// Decoder forward pass that also returns the per-layer, per-head
    /// attention maps. Debug/oracle surface; the contract exposes only the
    /// head-summed maps.
    #[doc(hidden)]
    pub fn decode_step_per_head(
        &self,
        visual: &VideoTensor,
        query: &[TokenId],
        generated: &[TokenId],
    ) -> Result<(DecoderOutput, Vec<Vec<Mat>>)> {
        let mut seq = self.build_sequence(visual, query, generated)?;
        let n = seq.rows();
        let mut summed = Vec::with_capacity(self.decoder.len());
        let mut per_head = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let (attn_out, heads) = Self::attention(&seq, &layer.attn, true);
            let mut sum = Mat::zeros(n, n);
            for h in &heads {
                sum.add_assign(h);
            }
            summed.push(sum);
            per_head.push(heads);
            seq = Self::mlp(&attn_out, &layer.mlp);
        }
        let last = Mat::from_flat(1, seq.cols(), seq.row(n - 1).to_vec())?;
        let logits = last.matmul(&self.output_head).data().to_vec();
        Ok((
            DecoderOutput {
                logits,
                attentions: summed,
            },
            per_head,
        ))
    }
}

impl ModelContract for ToyModel {
    fn encoder_layer_count(&self) -> usize {
        self.config.encoder_layers
    }

    fn decoder_layer_count(&self) -> usize {
        self.config.decoder_layers
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab
    }

    fn eos_token(&self) -> TokenId {
        (self.config.vocab - 1) as TokenId
    }

    fn token_text(&self, id: TokenId) -> String {
        if id == self.eos_token() {
            "<eos>".to_string()
        } else {
            format!("t{id}")
        }
    }

    fn embed_frames(&self, video: &VideoInput) -> Result<FrameFeatures> {
        if video.patches() != self.config.patches || video.dim() != self.config.dim {
            return Err(Error::shape(format!(
                "video frames are {}x{}, model expects {}x{}",
                video.patches(),
                video.dim(),
                self.config.patches,
                self.config.dim
            )));
        }
        FrameFeatures::new(video.frames().to_vec())
    }

    fn encoder_layer(&self, layer: usize, input: &FrameFeatures) -> Result<FrameFeatures> {
        if layer == 0 || layer > self.encoder.len() {
            return Err(Error::invalid(format!(
                "encoder layer {layer} out of range 1..={}",
                self.encoder.len()
            )));
        }
        let weights = &self.encoder[layer - 1];
        let frames = input
            .frames
            .iter()
            .map(|frame| match weights {
                EncoderLayer::AttnMlp { attn, mlp } => {
                    let (x, _) = Self::attention(frame, attn, false);
                    Self::mlp(&x, mlp)
                }
                EncoderLayer::Linear { w, b } => {
                    let mut out = frame.matmul(w);
                    for i in 0..out.rows() {
                        for (v, bias) in out.row_mut(i).iter_mut().zip(b) {
                            *v += bias;
                        }
                    }
                    out
                }
            })
            .collect();
        FrameFeatures::new(frames)
    }

    fn project(&self, final_features: &FrameFeatures) -> Result<FrameFeatures> {
        FrameFeatures::new(
            final_features
                .frames
                .iter()
                .map(|f| f.matmul(&self.projection))
                .collect(),
        )
    }

    fn decode_step(
        &self,
        visual: &VideoTensor,
        query: &[TokenId],
        generated: &[TokenId],
    ) -> Result<DecoderOutput> {
        self.decode_step_per_head(visual, query, generated)
            .map(|(out, _)| out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VideoTag;

    pub(crate) fn small_config() -> ToyConfig {
        ToyConfig {
            encoder_layers: 3,
            decoder_layers: 4,
            heads: 2,
            patches: 4,
            dim: 16,
            vocab: 64,
            seed: 7,
            encoder_kind: EncoderKind::AttnMlp,
        }
    }

    fn random_video(rng: &mut SeededRng, frames: usize, patches: usize, dim: usize) -> VideoInput {
        let frames = (0..frames)
            .map(|_| {
                let mut m = Mat::zeros(patches, dim);
                for v in m.data_mut() {
                    *v = rng.next_gaussian();
                }
                m
            })
            .collect();
        VideoInput::new(frames).unwrap()
    }

    #[test]
    fn build_rejects_degenerate_dims() {
        let mut c = small_config();
        c.encoder_layers = 1;
        assert!(ToyModel::build(c).is_err());
        let mut c = small_config();
        c.heads = 3; // does not divide 16
        assert!(ToyModel::build(c).is_err());
        let mut c = small_config();
        c.vocab = 1;
        assert!(ToyModel::build(c).is_err());
    }

    #[test]
    fn same_seed_bit_identical_decode() {
        let a = ToyModel::build(small_config()).unwrap();
        let b = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(1), 4, 4, 16);
        let va = a.encode_original(&video).unwrap();
        let vb = b.encode_original(&video).unwrap();
        assert!(va.features.bitwise_eq(&vb.features));
        let oa = a.decode_step(&va, &[1, 2], &[3]).unwrap();
        let ob = b.decode_step(&vb, &[1, 2], &[3]).unwrap();
        assert!(oa
            .logits
            .iter()
            .zip(&ob.logits)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn causal_mask_is_exactly_zero() {
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(2), 3, 4, 16);
        let v = model.encode_original(&video).unwrap();
        let out = model.decode_step(&v, &[5, 6, 7], &[8]).unwrap();
        let n = out.sequence_len();
        for attn in &out.attentions {
            for i in 0..n {
                for j in i + 1..n {
                    assert_eq!(attn.at(i, j), 0.0, "future position leaked at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_head_count() {
        // Each head's row softmaxes to 1, so the head-summed row over
        // permitted positions must equal the head count.
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(3), 2, 4, 16);
        let v = model.encode_original(&video).unwrap();
        let (out, per_head) = model.decode_step_per_head(&v, &[1], &[]).unwrap();
        let heads = small_config().heads as f64;
        for (summed, heads_maps) in out.attentions.iter().zip(&per_head) {
            for i in 0..summed.rows() {
                let row_sum: f64 = summed.row(i).iter().sum();
                assert!((row_sum - heads).abs() < 1e-6, "row {i} sums to {row_sum}");
                // and the summed map is exactly the sum of per-head maps
                for j in 0..summed.cols() {
                    let manual: f64 = heads_maps.iter().map(|h| h.at(i, j)).sum();
                    assert!((summed.at(i, j) - manual).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identical_frames_encode_identically() {
        let model = ToyModel::build(small_config()).unwrap();
        let frame = random_video(&mut SeededRng::new(4), 1, 4, 16).frames()[0].clone();
        let video = VideoInput::new(vec![frame.clone(), frame]).unwrap();
        let cache = model.encode_layerwise(&video).unwrap();
        let last = cache.final_features();
        assert!(last.frames[0].bitwise_eq(&last.frames[1]));
    }

    #[test]
    fn frame_permutation_equivariance() {
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(5), 5, 4, 16);
        let perm = vec![3, 0, 4, 1, 2];
        let permuted = video.permuted(&perm).unwrap();
        let base = model.encode_layerwise(&video).unwrap();
        let shuf = model.encode_layerwise(&permuted).unwrap();
        for (lb, ls) in base.per_layer.iter().zip(&shuf.per_layer) {
            for (i, &p) in perm.iter().enumerate() {
                assert!(ls.frames[i].bitwise_eq(&lb.frames[p]));
            }
        }
        for (db, ds) in base.layer_means.iter().zip(&shuf.layer_means) {
            assert!(db.bitwise_eq(ds), "frame mean changed under permutation");
        }
    }

    #[test]
    fn tag_is_pure_metadata() {
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(6), 3, 4, 16);
        let v = model.encode_original(&video).unwrap();
        let retagged = v.with_tag(VideoTag::SpatialNegative);
        let a = model.decode_step(&v, &[9], &[]).unwrap();
        let b = model.decode_step(&retagged, &[9], &[]).unwrap();
        assert!(a
            .logits
            .iter()
            .zip(&b.logits)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn out_of_vocab_rejected() {
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(7), 2, 4, 16);
        let v = model.encode_original(&video).unwrap();
        assert!(model.decode_step(&v, &[64], &[]).is_err());
    }

    #[test]
    fn encoder_mean_matches_resummation_oracle() {
        // d_2 against an independent naive re-summation.
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(8), 4, 4, 16);
        let cache = model.encode_layerwise(&video).unwrap();
        let layer2 = &cache.per_layer[1];
        let t = layer2.frame_count() as f64;
        for idx in 0..layer2.patches() * layer2.dim() {
            let naive: f64 = layer2.frames.iter().map(|f| f.data()[idx]).sum::<f64>() / t;
            assert!((cache.layer_means[1].data()[idx] - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn single_frame_mean_is_the_frame() {
        let model = ToyModel::build(small_config()).unwrap();
        let video = random_video(&mut SeededRng::new(9), 1, 4, 16);
        let cache = model.encode_layerwise(&video).unwrap();
        for (layer, mean) in cache.per_layer.iter().zip(&cache.layer_means) {
            assert!(layer.frames[0].bitwise_eq(mean));
        }
    }
}
