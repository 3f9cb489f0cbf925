//! The student generator: image encoding, Pattern Extraction, Progressive
//! Decoding, and attribute activation. One forward pass lifts
//! `(noise, cameras, image)` into an unstructured Gaussian set.

mod activate;

pub use activate::{
    activate_attributes, activation_backward, RawAttributes, RawGrads, POSITION_BOUND,
};

use rand::Rng;

use crate::camera::{plucker_embed, Camera};
use crate::config::RunConfig;
use crate::error::{DdError, Result};
use crate::gaussians::GaussianSet;
use crate::nn::{
    Conv2d, Graph, LayerNorm, Linear, NodeId, ParamId, ParamStore, ResBlock,
    SpatialTransformer3d, TransformerBlock,
};
use crate::scalar::{s, Scalar};
use crate::tensor::Tensor;

/// Architecture descriptor; serialized into checkpoints.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PepdConfig {
    pub token_dim: usize,
    pub heads: usize,
    pub pe_channels: usize,
    pub pe_blocks: usize,
    pub pd_blocks: usize,
    pub image_patch: usize,
    pub image_encoder_blocks: usize,
    pub gaussians_per_token: usize,
    pub views: usize,
    pub render_size: usize,
    pub use_pe: bool,
    pub use_progressive: bool,
    pub use_head_conditioning: bool,
    pub level_weights_mu: [f64; 3],
    pub level_weights_s: [f64; 3],
    pub level_weights_q: [f64; 3],
    pub level_weights_c: [f64; 2],
    pub level_weights_alpha: [f64; 2],
}

impl PepdConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        PepdConfig {
            token_dim: cfg.token_dim,
            heads: cfg.attn_heads,
            pe_channels: cfg.pe_channels,
            pe_blocks: cfg.pe_blocks,
            pd_blocks: cfg.pd_blocks,
            image_patch: cfg.image_patch,
            image_encoder_blocks: cfg.image_encoder_blocks,
            gaussians_per_token: cfg.gaussians_per_token,
            views: cfg.n_views,
            render_size: cfg.render_size,
            use_pe: cfg.use_pe,
            use_progressive: cfg.use_progressive,
            use_head_conditioning: cfg.use_head_conditioning,
            level_weights_mu: cfg.level_weights_mu,
            level_weights_s: cfg.level_weights_s,
            level_weights_q: cfg.level_weights_q,
            level_weights_c: cfg.level_weights_c,
            level_weights_alpha: cfg.level_weights_alpha,
        }
    }

    /// Image tokens: patch grid plus one learned global token.
    pub fn image_tokens(&self) -> usize {
        let g = self.render_size / self.image_patch;
        g * g + 1
    }

    /// Pattern tokens: stride-8 (in input pixels) patchification per view.
    pub fn pattern_tokens(&self) -> usize {
        let g = self.render_size / 8;
        g * g * self.views
    }

    pub fn total_tokens(&self) -> usize {
        self.pattern_tokens() + self.image_tokens()
    }

    /// Gaussians per generated set: `(T_pat + T_img) · K`.
    pub fn total_gaussians(&self) -> usize {
        self.total_tokens() * self.gaussians_per_token
    }
}

struct PatternExtraction {
    conv_in: Conv2d,
    blocks: Vec<(ResBlock, SpatialTransformer3d)>,
    conv_out: Conv2d,
    tokenize: Conv2d,
}

struct AttributeHead {
    linear: Linear,
}

/// The generator `G_θ`.
pub struct PepdModel {
    pub cfg: PepdConfig,
    // image encoder
    img_patch: Conv2d,
    img_global: ParamId,
    img_blocks: Vec<TransformerBlock>,
    img_norm: LayerNorm,
    // pattern extraction (or a learned constant sequence when disabled)
    pe: Option<PatternExtraction>,
    learned_patterns: Option<ParamId>,
    // progressive decoding backbone
    pd_blocks: Vec<TransformerBlock>,
    head_mu: AttributeHead,
    head_s: AttributeHead,
    head_q: AttributeHead,
    head_c: AttributeHead,
    head_alpha: AttributeHead,
}

/// Raw per-attribute outputs, still on the graph: `[B, T_tok, K·x]`.
pub struct PepdRawOutput {
    pub mu: NodeId,
    pub scale: NodeId,
    pub quat: NodeId,
    pub color: NodeId,
    pub alpha: NodeId,
    pub batch: usize,
}

impl PepdModel {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, cfg: PepdConfig, rng: &mut R) -> Self {
        assert!(cfg.render_size % 8 == 0, "render_size must be divisible by 8");
        assert!(cfg.render_size % cfg.image_patch == 0);
        let d = cfg.token_dim;
        let k = cfg.gaussians_per_token;

        let img_patch = Conv2d::new(
            ps,
            "pepd.img.patch",
            3,
            d,
            cfg.image_patch,
            cfg.image_patch,
            0,
            rng,
        );
        let img_global = ps.add_kaiming("pepd.img.global", &[1, d], d, rng);
        let img_blocks = (0..cfg.image_encoder_blocks)
            .map(|i| {
                TransformerBlock::new(ps, &format!("pepd.img.block{i}"), d, cfg.heads, None, 4, rng)
            })
            .collect();
        let img_norm = LayerNorm::new(ps, "pepd.img.norm", d);

        let (pe, learned_patterns) = if cfg.use_pe {
            let c = cfg.pe_channels;
            let conv_in = Conv2d::new(ps, "pepd.pe.conv_in", 9, c, 4, 4, 0, rng);
            let blocks = (0..cfg.pe_blocks)
                .map(|i| {
                    (
                        ResBlock::new(ps, &format!("pepd.pe.rb{i}"), c, c, None, rng),
                        SpatialTransformer3d::new(
                            ps,
                            &format!("pepd.pe.st{i}"),
                            c,
                            cfg.heads,
                            d,
                            rng,
                        ),
                    )
                })
                .collect();
            let conv_out = Conv2d::new(ps, "pepd.pe.conv_out", c, c, 3, 1, 1, rng);
            let tokenize = Conv2d::new(ps, "pepd.pe.tokenize", c, d, 2, 2, 0, rng);
            (
                Some(PatternExtraction { conv_in, blocks, conv_out, tokenize }),
                None,
            )
        } else {
            let t_pat = cfg.pattern_tokens();
            (None, Some(ps.add_kaiming("pepd.patterns", &[t_pat, d], d, rng)))
        };

        let pd_blocks = (0..cfg.pd_blocks)
            .map(|i| TransformerBlock::new(ps, &format!("pepd.pd.block{i}"), d, cfg.heads, None, 4, rng))
            .collect();

        let cond = cfg.use_head_conditioning;
        let mk_head = |ps: &mut ParamStore<T>, name: &str, extra: usize, out: usize, rng: &mut R| {
            let d_in = d + if cond { extra } else { 0 };
            AttributeHead { linear: Linear::new(ps, name, d_in, out, rng) }
        };
        let head_mu = mk_head(ps, "pepd.head.mu", 0, k * 3, rng);
        let head_s = mk_head(ps, "pepd.head.s", k * 3, k * 3, rng);
        let head_q = mk_head(ps, "pepd.head.q", k * 3, k * 4, rng);
        let head_c = mk_head(ps, "pepd.head.c", k * 10, k * 3, rng);
        let head_alpha = mk_head(ps, "pepd.head.alpha", k * 10, k, rng);

        PepdModel {
            cfg,
            img_patch,
            img_global,
            img_blocks,
            img_norm,
            pe,
            learned_patterns,
            pd_blocks,
            head_mu,
            head_s,
            head_q,
            head_c,
            head_alpha,
        }
    }

    /// `ii` `[B, 3, H, W]` → image tokens `[B, T_img, D]`.
    pub fn encode_image<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        ii: NodeId,
    ) -> NodeId {
        let b = g.shape(ii)[0];
        let x = self.img_patch.forward(g, ps, ii);
        let patches = g.images_to_tokens(x, 1); // [B, g², D]
        let global = g.param(ps, self.img_global);
        let global = g.repeat_rows(global, b); // [B, 1, D]
        let mut tokens = g.concat_dim1(global, patches);
        for block in &self.img_blocks {
            tokens = block.forward(g, ps, tokens, None);
        }
        let out = self.img_norm.forward(g, ps, tokens);
        debug_assert_eq!(g.shape(out)[1], self.cfg.image_tokens());
        out
    }

    /// Pattern extraction: `(noise ⊕ Plücker)` under image guidance.
    /// `nc` `[B·n, 9, H, W]`, `img_tokens` `[B, T_img, D]` → `[B, T_pat, D]`.
    pub fn pattern_extraction<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        nc: NodeId,
        img_tokens: NodeId,
    ) -> NodeId {
        let b = g.shape(img_tokens)[0];
        match (&self.pe, self.learned_patterns) {
            (Some(pe), _) => {
                let views = g.shape(nc)[0] / b;
                let mut h = pe.conv_in.forward(g, ps, nc);
                for (rb, st) in &pe.blocks {
                    h = rb.forward(g, ps, h, None);
                    h = st.forward(g, ps, h, views, img_tokens);
                }
                h = pe.conv_out.forward(g, ps, h);
                let h = pe.tokenize.forward(g, ps, h);
                let out = g.images_to_tokens(h, views);
                debug_assert_eq!(g.shape(out)[1], self.cfg.pattern_tokens());
                out
            }
            (None, Some(pid)) => {
                let patterns = g.param(ps, pid);
                g.repeat_rows(patterns, b)
            }
            _ => unreachable!("constructor guarantees one pathway"),
        }
    }

    /// Progressive decoding: backbone blocks, level-weighted head inputs,
    /// per-attribute affine heads with order μ → (s,q) → (c,α).
    pub fn progressive_decoding<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        tokens: NodeId,
    ) -> PepdRawOutput {
        let b = g.shape(tokens)[0];
        let mut levels = Vec::with_capacity(self.pd_blocks.len());
        let mut h = tokens;
        for block in &self.pd_blocks {
            h = block.forward(g, ps, h, None);
            levels.push(h);
        }
        let last = *levels.last().expect("at least one block");

        let weighted3 = |g: &mut Graph<T>, w: &[f64; 3]| -> NodeId {
            if !self.cfg.use_progressive {
                return last;
            }
            let mut acc = g.mul_scalar(levels[0], s(w[0]));
            for (lvl, &wi) in levels.iter().zip(w.iter()).skip(1) {
                let term = g.mul_scalar(*lvl, s(wi));
                acc = g.add(acc, term);
            }
            acc
        };
        let weighted2 = |g: &mut Graph<T>, w: &[f64; 2]| -> NodeId {
            if !self.cfg.use_progressive {
                return last;
            }
            // the two-entry lists read the last two levels
            let n = levels.len();
            let a = g.mul_scalar(levels[n - 2], s(w[0]));
            let bnode = g.mul_scalar(levels[n - 1], s(w[1]));
            g.add(a, bnode)
        };

        let feat_mu = weighted3(g, &self.cfg.level_weights_mu);
        let feat_s = weighted3(g, &self.cfg.level_weights_s);
        let feat_q = weighted3(g, &self.cfg.level_weights_q);
        let feat_c = weighted2(g, &self.cfg.level_weights_c);
        let feat_a = weighted2(g, &self.cfg.level_weights_alpha);

        let cond = self.cfg.use_head_conditioning;
        let raw_mu = self.head_mu.linear.forward(g, ps, feat_mu);
        let s_in = if cond { g.concat_last(feat_s, raw_mu) } else { feat_s };
        let raw_s = self.head_s.linear.forward(g, ps, s_in);
        let q_in = if cond { g.concat_last(feat_q, raw_mu) } else { feat_q };
        let raw_q = self.head_q.linear.forward(g, ps, q_in);
        let geom = if cond {
            let msq = g.concat_last(raw_mu, raw_s);
            Some(g.concat_last(msq, raw_q))
        } else {
            None
        };
        let c_in = match geom {
            Some(gm) => g.concat_last(feat_c, gm),
            None => feat_c,
        };
        let raw_c = self.head_c.linear.forward(g, ps, c_in);
        let a_in = match geom {
            Some(gm) => g.concat_last(feat_a, gm),
            None => feat_a,
        };
        let raw_a = self.head_alpha.linear.forward(g, ps, a_in);

        PepdRawOutput { mu: raw_mu, scale: raw_s, quat: raw_q, color: raw_c, alpha: raw_a, batch: b }
    }

    /// Full batched forward on an existing graph.
    ///
    /// `noise` `[B·n, 3, H, W]`, `plucker` `[B·n, 6, H, W]`, `ii` `[B, 3, H, W]`.
    pub fn forward_batch<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        noise: NodeId,
        plucker: NodeId,
        ii: NodeId,
    ) -> Result<PepdRawOutput> {
        let b = g.shape(ii)[0];
        let bn = g.shape(noise)[0];
        if bn != b * self.cfg.views {
            return Err(DdError::Invariant(format!(
                "view count mismatch: noise batch {bn} != {b} × {} views",
                self.cfg.views
            )));
        }
        if g.shape(plucker)[0] != bn {
            return Err(DdError::Invariant("plucker batch mismatch".into()));
        }
        let img_tokens = self.encode_image(g, ps, ii);
        self.forward_with_tokens(g, ps, noise, plucker, img_tokens)
    }

    /// Forward from precomputed image tokens (used by token interpolation).
    pub fn forward_with_tokens<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        noise: NodeId,
        plucker: NodeId,
        img_tokens: NodeId,
    ) -> Result<PepdRawOutput> {
        let nc = g.concat_dim1(noise, plucker);
        let patterns = self.pattern_extraction(g, ps, nc, img_tokens);
        let tokens = g.concat_dim1(patterns, img_tokens);
        debug_assert_eq!(g.shape(tokens)[1], self.cfg.total_tokens());
        Ok(self.progressive_decoding(g, ps, tokens))
    }

    /// Slice one sample's raw attributes out of batched graph outputs.
    pub fn raw_attributes<T: Scalar>(
        &self,
        g: &Graph<T>,
        out: &PepdRawOutput,
        sample: usize,
    ) -> RawAttributes<T> {
        let k = self.cfg.gaussians_per_token;
        let t_tok = self.cfg.total_tokens();
        let m = t_tok * k;
        let slice = |node: NodeId, per: usize| -> Vec<T> {
            let v = g.value(node).data();
            let stride = t_tok * k * per;
            v[sample * stride..(sample + 1) * stride].to_vec()
        };
        let raw = RawAttributes {
            mu: slice(out.mu, 3),
            scale: slice(out.scale, 3),
            quat: slice(out.quat, 4),
            color: slice(out.color, 3),
            alpha: slice(out.alpha, 1),
        };
        debug_assert_eq!(raw.alpha.len(), m);
        raw
    }

    /// Single-sample inference: `(N, C, II) → GaussianSet`.
    pub fn generate<T: Scalar>(
        &self,
        ps: &ParamStore<T>,
        noise: &Tensor<T>,
        cameras: &[Camera<T>],
        ii: &Tensor<T>,
    ) -> Result<GaussianSet<T>> {
        if cameras.len() != self.cfg.views {
            return Err(DdError::Invariant(format!(
                "{} cameras given, generator is configured for {}",
                cameras.len(),
                self.cfg.views
            )));
        }
        let hw = self.cfg.render_size;
        let mut g = Graph::inference();
        let n = g.constant(noise.clone());
        let mut pl = Vec::with_capacity(cameras.len() * 6 * hw * hw);
        for cam in cameras {
            pl.extend_from_slice(plucker_embed(cam).data());
        }
        let pl = g.constant(Tensor::new(&[cameras.len(), 6, hw, hw], pl));
        let ii = g.constant(ii.clone().reshaped(&[1, 3, hw, hw]));
        let out = self.forward_batch(&mut g, ps, n, pl, ii)?;
        let raw = self.raw_attributes(&g, &out, 0);
        activate_attributes(&raw)
    }
}

/// Serialize generator weights into a checkpoint container.
pub fn pepd_checkpoint(
    store: &ParamStore<f32>,
    cfg: &PepdConfig,
    seed: u64,
) -> Result<crate::checkpoint::Checkpoint> {
    let descriptor = serde_json::to_string(cfg)
        .map_err(|e| DdError::Format(format!("descriptor encode: {e}")))?;
    Ok(crate::checkpoint::Checkpoint::from_store("pepd", seed, descriptor, store))
}

/// Rebuild a generator from a checkpoint.
pub fn pepd_from_checkpoint(
    ck: &crate::checkpoint::Checkpoint,
) -> Result<(PepdModel, ParamStore<f32>)> {
    if ck.kind != "pepd" && ck.kind != "train-state" {
        return Err(DdError::Incompatible(format!(
            "expected a pepd checkpoint, found `{}`",
            ck.kind
        )));
    }
    let cfg: PepdConfig = serde_json::from_str(&ck.descriptor)
        .map_err(|e| DdError::Format(format!("descriptor decode: {e}")))?;
    let mut store = ParamStore::new();
    let mut rng = crate::rng::seeded_rng(ck.seed, "pepd-init");
    let model = PepdModel::new(&mut store, cfg, &mut rng);
    // train-state checkpoints carry extra (ema/adam) params; filter by name
    if ck.kind == "train-state" {
        for (name, value) in &ck.params {
            if let Some(id) = store.lookup(name) {
                *store.value_mut(id) = value.clone();
            }
        }
    } else {
        ck.load_into_store(&mut store)?;
    }
    Ok((model, store))
}

#[cfg(test)]
mod tests;
