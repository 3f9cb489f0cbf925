//! Layer kit: thin wrappers that own parameter ids and assemble graph ops.

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let w = ps.add_kaiming(&format!("{name}.w"), &[d_in, d_out], d_in, rng);
        let b = ps.add_zeros(&format!("{name}.b"), &[d_out]);
        Linear { w, b, d_in, d_out }
    }

    /// x `[..., d_in]` -> `[..., d_out]`
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x: NodeId,
    ) -> NodeId {
        let shape = g.shape(x).to_vec();
        let d = *shape.last().unwrap();
        assert_eq!(d, self.d_in, "linear input dim");
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let x2 = g.reshape(x, &[rows, d]);
        let w = g.param(ps, self.w);
        let b = g.param(ps, self.b);
        let y = g.matmul(x2, w);
        let y = g.add_bias_rows(y, b);
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.d_out;
        g.reshape(y, &out_shape)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let w = ps.add_kaiming(
            &format!("{name}.w"),
            &[c_out, c_in, k, k],
            c_in * k * k,
            rng,
        );
        let b = ps.add_zeros(&format!("{name}.b"), &[c_out]);
        Conv2d { w, b, stride, pad }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x: NodeId,
    ) -> NodeId {
        let w = g.param(ps, self.w);
        let b = g.param(ps, self.b);
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, c: usize, groups: usize) -> Self {
        let gamma = ps.add_full(&format!("{name}.gamma"), &[c], 1.0);
        let beta = ps.add_zeros(&format!("{name}.beta"), &[c]);
        GroupNorm { gamma, beta, groups }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, x: NodeId) -> NodeId {
        let gamma = g.param(ps, self.gamma);
        let beta = g.param(ps, self.beta);
        g.group_norm(x, gamma, beta, self.groups, 1e-5)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        let gamma = ps.add_full(&format!("{name}.gamma"), &[d], 1.0);
        let beta = ps.add_zeros(&format!("{name}.beta"), &[d]);
        LayerNorm { gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ps: &ParamStore<T>, x: NodeId) -> NodeId {
        let gamma = g.param(ps, self.gamma);
        let beta = g.param(ps, self.beta);
        g.layer_norm(x, gamma, beta, 1e-5)
    }
}

/// Multi-head attention with q/k/v/out projections.
#[derive(Clone, Debug)]
pub struct Mha {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl Mha {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        d: usize,
        d_kv: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        Mha {
            wq: Linear::new(ps, &format!("{name}.q"), d, d, rng),
            wk: Linear::new(ps, &format!("{name}.k"), d_kv, d, rng),
            wv: Linear::new(ps, &format!("{name}.v"), d_kv, d, rng),
            wo: Linear::new(ps, &format!("{name}.o"), d, d, rng),
            heads,
        }
    }

    /// x_q `[B, Tq, D]`, x_kv `[B, Tk, Dkv]` -> `[B, Tq, D]`
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x_q: NodeId,
        x_kv: NodeId,
    ) -> NodeId {
        let q = self.wq.forward(g, ps, x_q);
        let k = self.wk.forward(g, ps, x_kv);
        let v = self.wv.forward(g, ps, x_kv);
        let a = g.attention(q, k, v, self.heads);
        self.wo.forward(g, ps, a)
    }
}

/// Pre-norm transformer block: self-attention (+ optional cross-attention)
/// and a feed-forward, all with residuals.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub norm1: LayerNorm,
    pub self_attn: Mha,
    pub cross: Option<(LayerNorm, Mha)>,
    pub norm2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl TransformerBlock {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        cross_dim: Option<usize>,
        ff_mult: usize,
        rng: &mut R,
    ) -> Self {
        TransformerBlock {
            norm1: LayerNorm::new(ps, &format!("{name}.norm1"), d),
            self_attn: Mha::new(ps, &format!("{name}.sa"), d, d, heads, rng),
            cross: cross_dim.map(|dk| {
                (
                    LayerNorm::new(ps, &format!("{name}.normc"), d),
                    Mha::new(ps, &format!("{name}.ca"), d, dk, heads, rng),
                )
            }),
            norm2: LayerNorm::new(ps, &format!("{name}.norm2"), d),
            ff1: Linear::new(ps, &format!("{name}.ff1"), d, d * ff_mult, rng),
            ff2: Linear::new(ps, &format!("{name}.ff2"), d * ff_mult, d, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x: NodeId,
        context: Option<NodeId>,
    ) -> NodeId {
        let h = self.norm1.forward(g, ps, x);
        let h = self.self_attn.forward(g, ps, h, h);
        let mut x = g.add(x, h);
        if let Some((norm_c, ca)) = &self.cross {
            let ctx = context.expect("cross-attention block needs context tokens");
            let h = norm_c.forward(g, ps, x);
            let h = ca.forward(g, ps, h, ctx);
            x = g.add(x, h);
        }
        let h = self.norm2.forward(g, ps, x);
        let h = self.ff1.forward(g, ps, h);
        let h = g.silu(h);
        let h = self.ff2.forward(g, ps, h);
        g.add(x, h)
    }
}

/// Conv ResBlock with optional timestep conditioning (bias per quadruple).
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub norm1: GroupNorm,
    pub conv1: Conv2d,
    pub time_proj: Option<Linear>,
    pub norm2: GroupNorm,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
}

impl ResBlock {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        temb_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let groups_in = c_in.min(8);
        let groups_out = c_out.min(8);
        ResBlock {
            norm1: GroupNorm::new(ps, &format!("{name}.norm1"), c_in, groups_in),
            conv1: Conv2d::new(ps, &format!("{name}.conv1"), c_in, c_out, 3, 1, 1, rng),
            time_proj: temb_dim
                .map(|d| Linear::new(ps, &format!("{name}.temb"), d, c_out, rng)),
            norm2: GroupNorm::new(ps, &format!("{name}.norm2"), c_out, groups_out),
            conv2: Conv2d::new(ps, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1, rng),
            skip: (c_in != c_out)
                .then(|| Conv2d::new(ps, &format!("{name}.skip"), c_in, c_out, 1, 1, 0, rng)),
        }
    }

    /// `temb` is `([B, temb_dim], views)`: one embedding per group of views.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x: NodeId,
        temb: Option<(NodeId, usize)>,
    ) -> NodeId {
        let mut h = self.norm1.forward(g, ps, x);
        h = g.silu(h);
        h = self.conv1.forward(g, ps, h);
        if let (Some(proj), Some((emb, views))) = (&self.time_proj, temb) {
            let bias = proj.forward(g, ps, emb);
            h = g.add_bias_grouped(h, bias, views);
        }
        h = self.norm2.forward(g, ps, h);
        h = g.silu(h);
        h = self.conv2.forward(g, ps, h);
        let shortcut = match &self.skip {
            Some(conv) => conv.forward(g, ps, x),
            None => x,
        };
        g.add(shortcut, h)
    }
}

/// Conv-feature transformer: 3D self-attention over all views' spatial
/// tokens, cross-attention to context tokens, and a feed-forward, wrapped in
/// a 1×1-conv projection sandwich with a residual.
#[derive(Clone, Debug)]
pub struct SpatialTransformer3d {
    pub norm: GroupNorm,
    pub proj_in: Conv2d,
    pub block: TransformerBlock,
    pub proj_out: Conv2d,
}

impl SpatialTransformer3d {
    pub fn new<T: Scalar, R: Rng>(
        ps: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        heads: usize,
        ctx_dim: usize,
        rng: &mut R,
    ) -> Self {
        SpatialTransformer3d {
            norm: GroupNorm::new(ps, &format!("{name}.norm"), channels, channels.min(8)),
            proj_in: Conv2d::new(ps, &format!("{name}.proj_in"), channels, channels, 1, 1, 0, rng),
            block: TransformerBlock::new(
                ps,
                &format!("{name}.block"),
                channels,
                heads,
                Some(ctx_dim),
                4,
                rng,
            ),
            proj_out: Conv2d::new(
                ps,
                &format!("{name}.proj_out"),
                channels,
                channels,
                1,
                1,
                0,
                rng,
            ),
        }
    }

    /// x `[B*views, C, H, W]`, ctx `[B, Tc, ctx_dim]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        ps: &ParamStore<T>,
        x: NodeId,
        views: usize,
        ctx: NodeId,
    ) -> NodeId {
        let shape = g.shape(x).to_vec();
        let (h, w) = (shape[2], shape[3]);
        let mut t = self.norm.forward(g, ps, x);
        t = self.proj_in.forward(g, ps, t);
        let tokens = g.images_to_tokens(t, views);
        let tokens = self.block.forward(g, ps, tokens, Some(ctx));
        let imgs = g.tokens_to_images(tokens, views, h, w);
        let out = self.proj_out.forward(g, ps, imgs);
        g.add(x, out)
    }
}

/// Standard sinusoidal timestep embedding (host-side, fed as a constant).
pub fn sinusoidal_embedding<T: Scalar>(t: usize, dim: usize) -> Tensor<T> {
    assert!(dim % 2 == 0);
    let half = dim / 2;
    let mut data = vec![T::zero(); dim];
    for i in 0..half {
        let freq = (-(i as f64) * (10000f64).ln() / (half as f64 - 1.0).max(1.0)).exp();
        let arg = t as f64 * freq;
        data[i] = T::of(arg.sin());
        data[half + i] = T::of(arg.cos());
    }
    Tensor::new(&[dim], data)
}
