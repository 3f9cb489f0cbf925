//! Structured graph ops: convolution, normalization, attention, pooling and
//! the image/token layout changes used by the U-Net and the generator.

use crate::scalar::Scalar;
use crate::tensor::{kernels, Tensor};

use super::graph::{Graph, NodeId};

/// im2col for `[Ci, H, W]` -> `[Ci*kh*kw, OH*OW]` (zero padding).
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> (Vec<T>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let k = ci * kh * kw;
    let p = oh * ow;
    let mut cols = vec![T::zero(); k * p];
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_base = (c * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[oy * ow + ox] = x[src_base + ix as usize];
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Scatter-add of column gradients back into the input image.
#[allow(clippy::too_many_arguments)]
fn col2im_accum<T: Scalar>(
    dcols: &[T],
    dx: &mut [T],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let p = oh * ow;
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let src = &dcols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_base = (c * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dx[dst_base + ix as usize] = dx[dst_base + ix as usize] + src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// 2D convolution: x `[N, Ci, H, W]`, w `[Co, Ci, kh, kw]`, bias `[Co]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        assert_eq!(sx.len(), 4);
        assert_eq!(sw.len(), 4);
        let (n, ci, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (co, ciw, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
        assert_eq!(ci, ciw, "conv2d channel mismatch");
        assert_eq!(self.shape(bias), &[co]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let k = ci * kh * kw;
        let p = oh * ow;

        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(bias).data();
        let mut out = vec![T::zero(); n * co * p];
        for s in 0..n {
            let (cols, _, _) = im2col(&xv[s * ci * h * wd..(s + 1) * ci * h * wd], ci, h, wd, kh, kw, stride, pad);
            let o = kernels::matmul(wv, &cols, co, k, p);
            let dst = &mut out[s * co * p..(s + 1) * co * p];
            dst.copy_from_slice(&o);
            for c in 0..co {
                let b = bv[c];
                for v in dst[c * p..(c + 1) * p].iter_mut() {
                    *v = *v + b;
                }
            }
        }
        let out = Tensor::new(&[n, co, oh, ow], out);
        let nx = self.needs_grad_of(x);
        let nw = self.needs_grad_of(w);
        let nb = self.needs_grad_of(bias);
        self.push_op(out, &[x, w, bias], move || {
            Box::new(move |gout, vals, grads| {
                let xv = vals[x.index()].data();
                let wv = vals[w.index()].data();
                let mut dw = vec![T::zero(); co * k];
                let mut dbias = vec![T::zero(); co];
                let mut dx = vec![T::zero(); n * ci * h * wd];
                for s in 0..n {
                    let go = &gout[s * co * p..(s + 1) * co * p];
                    if nw || nx {
                        let (cols, _, _) = im2col(
                            &xv[s * ci * h * wd..(s + 1) * ci * h * wd],
                            ci,
                            h,
                            wd,
                            kh,
                            kw,
                            stride,
                            pad,
                        );
                        if nw {
                            // dW += dOut · colsᵀ
                            let d = kernels::matmul_nt(go, &cols, co, p, k);
                            for (a, b) in dw.iter_mut().zip(&d) {
                                *a = *a + *b;
                            }
                        }
                        if nx {
                            // dcols = Wᵀ · dOut, then scatter
                            let dcols = kernels::matmul_tn(wv, go, co, k, p);
                            col2im_accum(
                                &dcols,
                                &mut dx[s * ci * h * wd..(s + 1) * ci * h * wd],
                                ci,
                                h,
                                wd,
                                kh,
                                kw,
                                stride,
                                pad,
                            );
                        }
                    }
                    if nb {
                        for c in 0..co {
                            let mut acc = T::zero();
                            for &g in &go[c * p..(c + 1) * p] {
                                acc = acc + g;
                            }
                            dbias[c] = dbias[c] + acc;
                        }
                    }
                }
                if nx {
                    grads.accum_slice(x.index(), &dx);
                }
                if nw {
                    grads.accum_slice(w.index(), &dw);
                }
                if nb {
                    grads.accum_slice(bias.index(), &dbias);
                }
            })
        })
    }

    /// GroupNorm over `[N, C, H, W]` with per-channel affine.
    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        eps: f64,
    ) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 4);
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        assert_eq!(c % groups, 0);
        assert_eq!(self.shape(gamma), &[c]);
        assert_eq!(self.shape(beta), &[c]);
        let cg = c / groups;
        let m = cg * h * w;
        let eps = T::of(eps);

        let xv = self.value(x).data();
        let gv = self.value(gamma).data().to_vec();
        let bv = self.value(beta).data().to_vec();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); n * groups];
        let mut out = vec![T::zero(); xv.len()];
        let minv = T::of_usize(m).recip();
        for s in 0..n {
            for g in 0..groups {
                let base = (s * c + g * cg) * h * w;
                let seg = &xv[base..base + m];
                let mut mean = T::zero();
                for &v in seg {
                    mean = mean + v;
                }
                mean = mean * minv;
                let mut var = T::zero();
                for &v in seg {
                    let d = v - mean;
                    var = var + d * d;
                }
                var = var * minv;
                let inv = (var + eps).sqrt().recip();
                inv_std[s * groups + g] = inv;
                for (i, &v) in seg.iter().enumerate() {
                    let xh = (v - mean) * inv;
                    xhat[base + i] = xh;
                    let ch = g * cg + i / (h * w);
                    out[base + i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let out = Tensor::new(&sx, out);
        let nx = self.needs_grad_of(x);
        let ng = self.needs_grad_of(gamma);
        let nb = self.needs_grad_of(beta);
        self.push_op(out, &[x, gamma, beta], move || {
            Box::new(move |gout, vals, grads| {
                let gv = vals[gamma.index()].data();
                if ng {
                    let mut dg = vec![T::zero(); c];
                    for s in 0..n {
                        for ch in 0..c {
                            let base = (s * c + ch) * h * w;
                            let mut acc = T::zero();
                            for i in 0..h * w {
                                acc = acc + gout[base + i] * xhat[base + i];
                            }
                            dg[ch] = dg[ch] + acc;
                        }
                    }
                    grads.accum_slice(gamma.index(), &dg);
                }
                if nb {
                    let mut db = vec![T::zero(); c];
                    for s in 0..n {
                        for ch in 0..c {
                            let base = (s * c + ch) * h * w;
                            let mut acc = T::zero();
                            for i in 0..h * w {
                                acc = acc + gout[base + i];
                            }
                            db[ch] = db[ch] + acc;
                        }
                    }
                    grads.accum_slice(beta.index(), &db);
                }
                if nx {
                    let minv = T::of_usize(m).recip();
                    let mut dx = vec![T::zero(); n * c * h * w];
                    for s in 0..n {
                        for g in 0..groups {
                            let base = (s * c + g * cg) * h * w;
                            let inv = inv_std[s * groups + g];
                            // dxhat = gout * gamma (per channel)
                            let mut sum_dxh = T::zero();
                            let mut sum_dxh_xh = T::zero();
                            for i in 0..m {
                                let ch = g * cg + i / (h * w);
                                let dxh = gout[base + i] * gv[ch];
                                sum_dxh = sum_dxh + dxh;
                                sum_dxh_xh = sum_dxh_xh + dxh * xhat[base + i];
                            }
                            let mean_dxh = sum_dxh * minv;
                            let mean_dxh_xh = sum_dxh_xh * minv;
                            for i in 0..m {
                                let ch = g * cg + i / (h * w);
                                let dxh = gout[base + i] * gv[ch];
                                dx[base + i] =
                                    inv * (dxh - mean_dxh - xhat[base + i] * mean_dxh_xh);
                            }
                        }
                    }
                    grads.accum_slice(x.index(), &dx);
                }
            })
        })
    }

    /// LayerNorm over the last dim with affine.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap();
        assert_eq!(self.shape(gamma), &[d]);
        assert_eq!(self.shape(beta), &[d]);
        let rows = self.value(x).len() / d;
        let eps = T::of(eps);
        let dinv = T::of_usize(d).recip();

        let xv = self.value(x).data();
        let gv = self.value(gamma).data().to_vec();
        let bv = self.value(beta).data().to_vec();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let seg = &xv[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for &v in seg {
                mean = mean + v;
            }
            mean = mean * dinv;
            let mut var = T::zero();
            for &v in seg {
                let dv = v - mean;
                var = var + dv * dv;
            }
            var = var * dinv;
            let inv = (var + eps).sqrt().recip();
            inv_std[r] = inv;
            for j in 0..d {
                let xh = (seg[j] - mean) * inv;
                xhat[r * d + j] = xh;
                out[r * d + j] = gv[j] * xh + bv[j];
            }
        }
        let out = Tensor::new(&sx, out);
        let nx = self.needs_grad_of(x);
        let ng = self.needs_grad_of(gamma);
        let nb = self.needs_grad_of(beta);
        self.push_op(out, &[x, gamma, beta], move || {
            Box::new(move |gout, vals, grads| {
                let gv = vals[gamma.index()].data();
                if ng {
                    let mut dg = vec![T::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            dg[j] = dg[j] + gout[r * d + j] * xhat[r * d + j];
                        }
                    }
                    grads.accum_slice(gamma.index(), &dg);
                }
                if nb {
                    let mut db = vec![T::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            db[j] = db[j] + gout[r * d + j];
                        }
                    }
                    grads.accum_slice(beta.index(), &db);
                }
                if nx {
                    let mut dx = vec![T::zero(); rows * d];
                    for r in 0..rows {
                        let inv = inv_std[r];
                        let mut sum_dxh = T::zero();
                        let mut sum_dxh_xh = T::zero();
                        for j in 0..d {
                            let dxh = gout[r * d + j] * gv[j];
                            sum_dxh = sum_dxh + dxh;
                            sum_dxh_xh = sum_dxh_xh + dxh * xhat[r * d + j];
                        }
                        let mean_dxh = sum_dxh * dinv;
                        let mean_dxh_xh = sum_dxh_xh * dinv;
                        for j in 0..d {
                            let dxh = gout[r * d + j] * gv[j];
                            dx[r * d + j] = inv * (dxh - mean_dxh - xhat[r * d + j] * mean_dxh_xh);
                        }
                    }
                    grads.accum_slice(x.index(), &dx);
                }
            })
        })
    }

    /// Multi-head softmax attention. q `[B, Tq, D]`, k/v `[B, Tk, D]`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize) -> NodeId {
        let sq = self.shape(q).to_vec();
        let sk = self.shape(k).to_vec();
        let sv = self.shape(v).to_vec();
        assert_eq!(sq.len(), 3);
        assert_eq!(sk, sv);
        assert_eq!(sq[0], sk[0]);
        assert_eq!(sq[2], sk[2]);
        let (b, tq, d) = (sq[0], sq[1], sq[2]);
        let tk = sk[1];
        assert_eq!(d % heads, 0);
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());

        let gather = move |src: &[T], bi: usize, t: usize, hb: usize| -> Vec<T> {
            let mut out = vec![T::zero(); t * dh];
            for i in 0..t {
                let base = (bi * t + i) * d + hb;
                out[i * dh..(i + 1) * dh].copy_from_slice(&src[base..base + dh]);
            }
            out
        };

        let qv = self.value(q).data();
        let kv = self.value(k).data();
        let vv = self.value(v).data();
        let mut out = vec![T::zero(); b * tq * d];
        // saved softmax probabilities for the backward pass
        let mut probs = vec![T::zero(); b * heads * tq * tk];
        for bi in 0..b {
            for hh in 0..heads {
                let hb = hh * dh;
                let qh = gather(qv, bi, tq, hb);
                let kh = gather(kv, bi, tk, hb);
                let vh = gather(vv, bi, tk, hb);
                let mut s = kernels::matmul_nt(&qh, &kh, tq, dh, tk);
                for x in s.iter_mut() {
                    *x = *x * scale;
                }
                // row softmax
                for row in s.chunks_exact_mut(tk) {
                    let mut mx = row[0];
                    for &x in row.iter() {
                        if x > mx {
                            mx = x;
                        }
                    }
                    let mut z = T::zero();
                    for x in row.iter_mut() {
                        *x = (*x - mx).exp();
                        z = z + *x;
                    }
                    let zi = z.recip();
                    for x in row.iter_mut() {
                        *x = *x * zi;
                    }
                }
                let pbase = (bi * heads + hh) * tq * tk;
                probs[pbase..pbase + tq * tk].copy_from_slice(&s);
                let oh = kernels::matmul(&s, &vh, tq, tk, dh);
                for i in 0..tq {
                    let base = (bi * tq + i) * d + hb;
                    out[base..base + dh].copy_from_slice(&oh[i * dh..(i + 1) * dh]);
                }
            }
        }
        let out = Tensor::new(&[b, tq, d], out);
        let nq = self.needs_grad_of(q);
        let nk = self.needs_grad_of(k);
        let nv = self.needs_grad_of(v);
        self.push_op(out, &[q, k, v], move || {
            Box::new(move |gout, vals, grads| {
                let qv = vals[q.index()].data();
                let kv = vals[k.index()].data();
                let vv = vals[v.index()].data();
                let mut dq = vec![T::zero(); b * tq * d];
                let mut dk = vec![T::zero(); b * tk * d];
                let mut dv = vec![T::zero(); b * tk * d];
                for bi in 0..b {
                    for hh in 0..heads {
                        let hb = hh * dh;
                        let qh = gather(qv, bi, tq, hb);
                        let kh = gather(kv, bi, tk, hb);
                        let vh = gather(vv, bi, tk, hb);
                        let doh = gather(gout, bi, tq, hb);
                        let pbase = (bi * heads + hh) * tq * tk;
                        let p = &probs[pbase..pbase + tq * tk];
                        // dV = Pᵀ · dO
                        let dvh = kernels::matmul_tn(p, &doh, tq, tk, dh);
                        // dP = dO · Vᵀ
                        let dp = kernels::matmul_nt(&doh, &vh, tq, dh, tk);
                        // dS = P ∘ (dP − rowsum(dP ∘ P)) · scale
                        let mut ds = vec![T::zero(); tq * tk];
                        for i in 0..tq {
                            let prow = &p[i * tk..(i + 1) * tk];
                            let dprow = &dp[i * tk..(i + 1) * tk];
                            let mut acc = T::zero();
                            for j in 0..tk {
                                acc = acc + prow[j] * dprow[j];
                            }
                            for j in 0..tk {
                                ds[i * tk + j] = prow[j] * (dprow[j] - acc) * scale;
                            }
                        }
                        // dQ = dS · K ; dK = dSᵀ · Q
                        let dqh = kernels::matmul(&ds, &kh, tq, tk, dh);
                        let dkh = kernels::matmul_tn(&ds, &qh, tq, tk, dh);
                        for i in 0..tq {
                            let base = (bi * tq + i) * d + hb;
                            for jj in 0..dh {
                                dq[base + jj] = dq[base + jj] + dqh[i * dh + jj];
                            }
                        }
                        for i in 0..tk {
                            let base = (bi * tk + i) * d + hb;
                            for jj in 0..dh {
                                dk[base + jj] = dk[base + jj] + dkh[i * dh + jj];
                                dv[base + jj] = dv[base + jj] + dvh[i * dh + jj];
                            }
                        }
                    }
                }
                if nq {
                    grads.accum_slice(q.index(), &dq);
                }
                if nk {
                    grads.accum_slice(k.index(), &dk);
                }
                if nv {
                    grads.accum_slice(v.index(), &dv);
                }
            })
        })
    }

    /// `[B*n, C, H, W] -> [B, n*H*W, C]` token layout.
    pub fn images_to_tokens(&mut self, x: NodeId, views: usize) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 4);
        assert_eq!(sx[0] % views, 0);
        let (bn, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let b = bn / views;
        let hw = h * w;
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); b * views * hw * c];
        for bi in 0..b {
            for vi in 0..views {
                for ch in 0..c {
                    let src = ((bi * views + vi) * c + ch) * hw;
                    for p in 0..hw {
                        out[(bi * views * hw + vi * hw + p) * c + ch] = xv[src + p];
                    }
                }
            }
        }
        let out = Tensor::new(&[b, views * hw, c], out);
        self.push_op(out, &[x], move || {
            Box::new(move |gout, _, grads| {
                grads.accum(x.index(), bn * c * hw, |dst| {
                    for bi in 0..b {
                        for vi in 0..views {
                            for ch in 0..c {
                                let d0 = ((bi * views + vi) * c + ch) * hw;
                                for p in 0..hw {
                                    dst[d0 + p] = dst[d0 + p]
                                        + gout[(bi * views * hw + vi * hw + p) * c + ch];
                                }
                            }
                        }
                    }
                });
            })
        })
    }

    /// Inverse of [`Graph::images_to_tokens`].
    pub fn tokens_to_images(&mut self, x: NodeId, views: usize, h: usize, w: usize) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 3);
        let (b, t, c) = (sx[0], sx[1], sx[2]);
        let hw = h * w;
        assert_eq!(t, views * hw);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); b * views * c * hw];
        for bi in 0..b {
            for vi in 0..views {
                for ch in 0..c {
                    let dst = ((bi * views + vi) * c + ch) * hw;
                    for p in 0..hw {
                        out[dst + p] = xv[(bi * t + vi * hw + p) * c + ch];
                    }
                }
            }
        }
        let out = Tensor::new(&[b * views, c, h, w], out);
        self.push_op(out, &[x], move || {
            Box::new(move |gout, _, grads| {
                grads.accum(x.index(), b * t * c, |dst| {
                    for bi in 0..b {
                        for vi in 0..views {
                            for ch in 0..c {
                                let src = ((bi * views + vi) * c + ch) * hw;
                                for p in 0..hw {
                                    dst[(bi * t + vi * hw + p) * c + ch] =
                                        dst[(bi * t + vi * hw + p) * c + ch] + gout[src + p];
                                }
                            }
                        }
                    }
                });
            })
        })
    }

    /// Per-quadruple channel bias: x `[B*n, C, H, W]`, bias `[B, C]`.
    pub fn add_bias_grouped(&mut self, x: NodeId, bias: NodeId, views: usize) -> NodeId {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias).to_vec();
        assert_eq!(sx.len(), 4);
        assert_eq!(sx[0] % views, 0);
        let (bn, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let b = bn / views;
        assert_eq!(sb, vec![b, c]);
        let hw = h * w;
        let xv = self.value(x).data();
        let bv = self.value(bias).data();
        let mut out = xv.to_vec();
        for bi in 0..b {
            for vi in 0..views {
                for ch in 0..c {
                    let add = bv[bi * c + ch];
                    let base = ((bi * views + vi) * c + ch) * hw;
                    for p in 0..hw {
                        out[base + p] = out[base + p] + add;
                    }
                }
            }
        }
        let out = Tensor::new(&sx, out);
        let nx = self.needs_grad_of(x);
        let nb = self.needs_grad_of(bias);
        self.push_op(out, &[x, bias], move || {
            Box::new(move |gout, _, grads| {
                if nx {
                    grads.accum_slice(x.index(), gout);
                }
                if nb {
                    grads.accum(bias.index(), b * c, |dst| {
                        for bi in 0..b {
                            for vi in 0..views {
                                for ch in 0..c {
                                    let base = ((bi * views + vi) * c + ch) * hw;
                                    let mut acc = T::zero();
                                    for p in 0..hw {
                                        acc = acc + gout[base + p];
                                    }
                                    dst[bi * c + ch] = dst[bi * c + ch] + acc;
                                }
                            }
                        }
                    });
                }
            })
        })
    }

    /// 2×2 average pooling, `[N, C, H, W] -> [N, C, H/2, W/2]`.
    pub fn avg_pool2(&mut self, x: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 4);
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        assert!(h % 2 == 0 && w % 2 == 0);
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::of(0.25);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for nc in 0..n * c {
            let src = &xv[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let i0 = (2 * oy) * w + 2 * ox;
                    dst[oy * ow + ox] =
                        (src[i0] + src[i0 + 1] + src[i0 + w] + src[i0 + w + 1]) * quarter;
                }
            }
        }
        let out = Tensor::new(&[n, c, oh, ow], out);
        self.push_op(out, &[x], move || {
            Box::new(move |gout, _, grads| {
                grads.accum(x.index(), n * c * h * w, |dst| {
                    for nc in 0..n * c {
                        let go = &gout[nc * oh * ow..(nc + 1) * oh * ow];
                        let dx = &mut dst[nc * h * w..(nc + 1) * h * w];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = go[oy * ow + ox] * quarter;
                                let i0 = (2 * oy) * w + 2 * ox;
                                dx[i0] = dx[i0] + g;
                                dx[i0 + 1] = dx[i0 + 1] + g;
                                dx[i0 + w] = dx[i0 + w] + g;
                                dx[i0 + w + 1] = dx[i0 + w + 1] + g;
                            }
                        }
                    }
                });
            })
        })
    }

    /// Nearest-neighbor ×2 upsample.
    pub fn upsample_nearest2(&mut self, x: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 4);
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (oh, ow) = (h * 2, w * 2);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for nc in 0..n * c {
            let src = &xv[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    dst[oy * ow + ox] = src[(oy / 2) * w + ox / 2];
                }
            }
        }
        let out = Tensor::new(&[n, c, oh, ow], out);
        self.push_op(out, &[x], move || {
            Box::new(move |gout, _, grads| {
                grads.accum(x.index(), n * c * h * w, |dst| {
                    for nc in 0..n * c {
                        let go = &gout[nc * oh * ow..(nc + 1) * oh * ow];
                        let dx = &mut dst[nc * h * w..(nc + 1) * h * w];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let i = (oy / 2) * w + ox / 2;
                                dx[i] = dx[i] + go[oy * ow + ox];
                            }
                        }
                    }
                });
            })
        })
    }
}
