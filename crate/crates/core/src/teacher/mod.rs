//! The toy multi-view diffusion teacher: a small camera-conditioned U-Net
//! trained locally on procedural multi-view data, sampled deterministically
//! with DDIM, and reused as the frozen scorer for implicit verification.

pub mod ddim;
pub mod schedule;
mod sds;
mod train;

pub use ddim::{ddim_timesteps, sample_ode, Denoiser, OracleDenoiser};
pub use schedule::{ddim_step, NoiseSchedule};
pub use sds::sds_residual;
pub use train::{train_teacher, untrained_eps_mse, TeacherSample, TeacherTrainResult};

use rand::Rng;

use crate::config::RunConfig;
use crate::error::{DdError, Result};
use crate::nn::{
    sinusoidal_embedding, Conv2d, GroupNorm, Graph, Linear, NodeId, ParamStore, ResBlock,
    SpatialTransformer3d, TransformerBlock,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Architecture descriptor; serialized into checkpoints.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TeacherConfig {
    pub channels: usize,
    pub token_dim: usize,
    pub heads: usize,
    pub views: usize,
    pub image_size: usize,
    pub timesteps: usize,
}

impl TeacherConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        TeacherConfig {
            channels: cfg.teacher_channels,
            token_dim: cfg.teacher_token_dim,
            heads: cfg.attn_heads,
            views: cfg.n_views,
            image_size: cfg.render_size,
            timesteps: cfg.timesteps,
        }
    }
}

/// ε-prediction U-Net over jointly denoised views.
///
/// Input per view is the noisy image concatenated with its 6-channel Plücker
/// map (3+6 = 9 channels). Two resolution levels with residual blocks; the
/// bottleneck carries one 3D self-attention + cross-attention transformer
/// attending over all views' tokens and the input-image tokens.
pub struct TeacherModel {
    pub cfg: TeacherConfig,
    // input-image encoder
    ii_patch: Conv2d,
    ii_block: TransformerBlock,
    // time embedding
    time_fc1: Linear,
    time_fc2: Linear,
    // U-Net
    conv_in: Conv2d,
    rb_down1: ResBlock,
    down1: Conv2d,
    rb_down2: ResBlock,
    down2: Conv2d,
    rb_mid1: ResBlock,
    mid_attn: SpatialTransformer3d,
    rb_mid2: ResBlock,
    up1: Conv2d,
    rb_up1: ResBlock,
    up2: Conv2d,
    rb_up2: ResBlock,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl TeacherModel {
    pub fn new<T: Scalar, R: Rng>(ps: &mut ParamStore<T>, cfg: TeacherConfig, rng: &mut R) -> Self {
        let c = cfg.channels;
        let d = cfg.token_dim;
        let temb = 4 * c;
        let heads = cfg.heads;
        assert!(cfg.image_size % 4 == 0, "image size must be divisible by 4");
        TeacherModel {
            cfg,
            ii_patch: Conv2d::new(ps, "teacher.ii.patch", 3, d, 4, 4, 0, rng),
            ii_block: TransformerBlock::new(ps, "teacher.ii.block", d, heads, None, 2, rng),
            time_fc1: Linear::new(ps, "teacher.time.fc1", temb, temb, rng),
            time_fc2: Linear::new(ps, "teacher.time.fc2", temb, temb, rng),
            conv_in: Conv2d::new(ps, "teacher.conv_in", 9, c, 3, 1, 1, rng),
            rb_down1: ResBlock::new(ps, "teacher.down1.rb", c, c, Some(temb), rng),
            down1: Conv2d::new(ps, "teacher.down1.conv", c, 2 * c, 3, 2, 1, rng),
            rb_down2: ResBlock::new(ps, "teacher.down2.rb", 2 * c, 2 * c, Some(temb), rng),
            down2: Conv2d::new(ps, "teacher.down2.conv", 2 * c, 4 * c, 3, 2, 1, rng),
            rb_mid1: ResBlock::new(ps, "teacher.mid.rb1", 4 * c, 4 * c, Some(temb), rng),
            mid_attn: SpatialTransformer3d::new(ps, "teacher.mid.attn", 4 * c, heads, d, rng),
            rb_mid2: ResBlock::new(ps, "teacher.mid.rb2", 4 * c, 4 * c, Some(temb), rng),
            up1: Conv2d::new(ps, "teacher.up1.conv", 4 * c, 2 * c, 3, 1, 1, rng),
            rb_up1: ResBlock::new(ps, "teacher.up1.rb", 4 * c, 2 * c, Some(temb), rng),
            up2: Conv2d::new(ps, "teacher.up2.conv", 2 * c, c, 3, 1, 1, rng),
            rb_up2: ResBlock::new(ps, "teacher.up2.rb", 2 * c, c, Some(temb), rng),
            norm_out: GroupNorm::new(ps, "teacher.norm_out", c, c.min(8)),
            conv_out: Conv2d::new(ps, "teacher.conv_out", c, 3, 3, 1, 1, rng),
        }
    }

    /// Encode the conditioning image(s) `[B, 3, H, W]` into tokens
    /// `[B, (H/4)*(W/4), token_dim]`.
    pub fn encode_ii<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        ii: NodeId,
    ) -> NodeId {
        let x = self.ii_patch.forward(g, ps, ii);
        let tokens = g.images_to_tokens(x, 1);
        self.ii_block.forward(g, ps, tokens, None)
    }

    /// Predict noise.
    ///
    /// `x_t`/`plucker`: `[B*views, ·, H, W]`; `t`: one timestep per
    /// quadruple (`len B`); `ii_tokens`: `[B, T_ii, token_dim]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x_t: NodeId,
        t: &[usize],
        plucker: NodeId,
        ii_tokens: NodeId,
        views: usize,
    ) -> Result<NodeId> {
        let sx = g.shape(x_t).to_vec();
        if sx.len() != 4 || sx[1] != 3 {
            return Err(DdError::Invariant(format!("x_t must be [B*n,3,H,W], got {sx:?}")));
        }
        if sx[0] != t.len() * views {
            return Err(DdError::Invariant(format!(
                "view count mismatch: {} images, {} quadruples × {} views",
                sx[0],
                t.len(),
                views
            )));
        }
        let b = t.len();
        let temb_dim = 4 * self.cfg_channels();

        // timestep embedding, one row per quadruple
        let mut emb_data = Vec::with_capacity(b * temb_dim);
        for &ti in t {
            emb_data.extend_from_slice(sinusoidal_embedding::<T>(ti, temb_dim).data());
        }
        let emb = g.constant(Tensor::new(&[b, temb_dim], emb_data));
        let emb = self.time_fc1.forward(g, ps, emb);
        let emb = g.silu(emb);
        let emb = self.time_fc2.forward(g, ps, emb);
        let temb = Some((emb, views));

        let x = g.concat_dim1(x_t, plucker); // [B*n, 9, H, W]
        let h0 = self.conv_in.forward(g, ps, x);
        let s0 = self.rb_down1.forward(g, ps, h0, temb);
        let h = self.down1.forward(g, ps, s0);
        let s1 = self.rb_down2.forward(g, ps, h, temb);
        let h = self.down2.forward(g, ps, s1);
        let h = self.rb_mid1.forward(g, ps, h, temb);
        let h = self.mid_attn.forward(g, ps, h, views, ii_tokens);
        let h = self.rb_mid2.forward(g, ps, h, temb);
        let h = g.upsample_nearest2(h);
        let h = self.up1.forward(g, ps, h);
        let h = g.concat_dim1(h, s1);
        let h = self.rb_up1.forward(g, ps, h, temb);
        let h = g.upsample_nearest2(h);
        let h = self.up2.forward(g, ps, h);
        let h = g.concat_dim1(h, s0);
        let h = self.rb_up2.forward(g, ps, h, temb);
        let h = self.norm_out.forward(g, ps, h);
        let h = g.silu(h);
        Ok(self.conv_out.forward(g, ps, h))
    }

    fn cfg_channels(&self) -> usize {
        self.cfg.channels
    }
}

/// Frozen teacher + fixed conditioning, packaged as a [`Denoiser`] for the
/// DDIM loop. Runs in inference mode: no tape, no gradients.
pub struct TeacherSampler<'a, T: Scalar> {
    pub model: &'a TeacherModel,
    pub store: &'a ParamStore<T>,
    /// `[views, 6, H, W]` Plücker maps of the target cameras.
    pub plucker: Tensor<T>,
    /// `[1, 3, H, W]` conditioning image.
    pub ii: Tensor<T>,
    pub views: usize,
}

impl<'a, T: Scalar> Denoiser<T> for TeacherSampler<'a, T> {
    fn denoise(&self, x_t: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let x = g.constant(x_t.clone());
        let pl = g.constant(self.plucker.clone());
        let ii = g.constant(self.ii.clone());
        let ii_tokens = self.model.encode_ii(&mut g, self.store, ii);
        let out = self
            .model
            .forward(&mut g, self.store, x, &[t], pl, ii_tokens, self.views)?;
        Ok(g.value(out).clone())
    }
}

/// Serialize teacher weights + schedule into a checkpoint container.
pub fn teacher_checkpoint(
    store: &ParamStore<f32>,
    cfg: &TeacherConfig,
    schedule: &NoiseSchedule<f32>,
    seed: u64,
) -> Result<crate::checkpoint::Checkpoint> {
    let descriptor = serde_json::to_string(cfg)
        .map_err(|e| DdError::Format(format!("descriptor encode: {e}")))?;
    let mut ck = crate::checkpoint::Checkpoint::from_store("teacher", seed, descriptor, store);
    ck.tables.push(("alpha_bar".into(), schedule.alpha_bar_table_f64()));
    Ok(ck)
}

/// Rebuild a teacher from a checkpoint: construct the same architecture,
/// then overwrite the weights.
pub fn teacher_from_checkpoint(
    ck: &crate::checkpoint::Checkpoint,
) -> Result<(TeacherModel, ParamStore<f32>, NoiseSchedule<f32>)> {
    if ck.kind != "teacher" {
        return Err(DdError::Incompatible(format!(
            "expected a teacher checkpoint, found `{}`",
            ck.kind
        )));
    }
    let cfg: TeacherConfig = serde_json::from_str(&ck.descriptor)
        .map_err(|e| DdError::Format(format!("descriptor decode: {e}")))?;
    let mut store = ParamStore::new();
    let mut rng = crate::rng::seeded_rng(ck.seed, "teacher-init");
    let model = TeacherModel::new(&mut store, cfg, &mut rng);
    ck.load_into_store(&mut store)?;
    let table = ck
        .table("alpha_bar")
        .ok_or_else(|| DdError::Format("checkpoint missing alpha_bar table".into()))?;
    let schedule = NoiseSchedule::from_alpha_bar(table)?;
    Ok((model, store, schedule))
}
