//! Hand-derived reverse pass of [`super::render`].
//!
//! Produces exact adjoints for positions, scales, rotations, colors,
//! opacities and the background color given an image-shaped upstream
//! gradient. Depth ordering is treated as fixed (sorting is not
//! differentiated), matching the forward compositing exactly: gradients
//! agree with central finite differences of `render` in f64.

use crate::camera::Camera;
use crate::error::{DdError, Result};
use crate::gaussians::GaussianSet;
use crate::scalar::{s, Scalar};
use crate::tensor::Tensor;

use super::geometry::{quat_to_rotmat, rotmat_quat_jacobian};
use super::{
    build_pixel_lists, gaussian_weight, sort_by_depth, RenderOpts, ALPHA_CLIP,
};

/// Adjoints for every attribute group, plus the background color.
#[derive(Clone, Debug)]
pub struct AttributeGrads<T> {
    pub positions: Vec<T>,
    pub scales: Vec<T>,
    pub rotations: Vec<T>,
    pub colors: Vec<T>,
    pub opacities: Vec<T>,
    pub background: [T; 3],
}

impl<T: Scalar> AttributeGrads<T> {
    fn zeros(m: usize) -> Self {
        AttributeGrads {
            positions: vec![T::zero(); m * 3],
            scales: vec![T::zero(); m * 3],
            rotations: vec![T::zero(); m * 4],
            colors: vec![T::zero(); m * 3],
            opacities: vec![T::zero(); m],
            background: [T::zero(); 3],
        }
    }
}

/// `upstream` is `[3, H, W]` (channel-major, matching the loss graphs).
pub fn render_gradients<T: Scalar>(
    g: &GaussianSet<T>,
    cam: &Camera<T>,
    background: [T; 3],
    upstream: &Tensor<T>,
    opts: RenderOpts,
) -> Result<AttributeGrads<T>> {
    let (w, h) = (cam.width(), cam.height());
    if upstream.shape() != [3, h, w] {
        return Err(DdError::Invariant(format!(
            "upstream must be [3, {h}, {w}], got {:?}",
            upstream.shape()
        )));
    }
    if !upstream.all_finite() {
        return Err(DdError::Numeric("non-finite upstream gradient".into()));
    }
    let up = upstream.data();
    let hw = h * w;

    let mut splats = super::project(g, cam);
    sort_by_depth(&mut splats);
    let lists = opts
        .bbox_sigma
        .map(|bs| build_pixel_lists(&splats, w, h, bs));
    let exact_ids: Vec<u32> = if lists.is_none() {
        (0..splats.len() as u32).collect()
    } else {
        Vec::new()
    };

    let clip = s::<T>(ALPHA_CLIP);
    let t_floor = opts.early_stop_transmittance.map(s::<T>);
    let half = s::<T>(0.5);
    let two = s::<T>(2.0);

    let ns = splats.len();
    // per-splat screen-space adjoints
    let mut d_mean = vec![T::zero(); ns * 2];
    let mut d_cov = vec![T::zero(); ns * 3]; // storage (xx, xy, yy)
    let mut grads = AttributeGrads::zeros(g.len());

    // scratch: (splat id, weight G, transmittance before this splat)
    let mut contribs: Vec<(u32, T, T)> = Vec::new();

    for iy in 0..h {
        for ix in 0..w {
            let p = iy * w + ix;
            let ids: &[u32] = match &lists {
                Some(l) => &l.entries[l.offsets[p] as usize..l.offsets[p + 1] as usize],
                None => &exact_ids,
            };
            let px = s::<T>(ix as f64) + half;
            let py = s::<T>(iy as f64) + half;
            contribs.clear();
            let mut transmittance = T::one();
            for &k in ids {
                let sp = &splats[k as usize];
                let weight = gaussian_weight(sp, px, py);
                let a = (sp.opacity * weight).min(clip);
                contribs.push((k, weight, transmittance));
                transmittance = transmittance * (T::one() - a);
                if let Some(floor) = t_floor {
                    if transmittance < floor {
                        break;
                    }
                }
            }
            let upx = [up[p], up[hw + p], up[2 * hw + p]];
            for ch in 0..3 {
                grads.background[ch] = grads.background[ch] + transmittance * upx[ch];
            }
            // suffix S_k = Σ_{j>k} c_j α'_j T_j + bg · T_final
            let mut suffix = [
                background[0] * transmittance,
                background[1] * transmittance,
                background[2] * transmittance,
            ];
            for &(k, weight, t_before) in contribs.iter().rev() {
                let sp = &splats[k as usize];
                let raw = sp.opacity * weight;
                let clipped = raw > clip;
                let a = if clipped { clip } else { raw };
                let at = a * t_before;
                let one_minus = T::one() - a;
                let mut d_aprime = T::zero();
                for ch in 0..3 {
                    // dC/dα'_k = c_k T_k − S_k / (1 − α'_k)
                    d_aprime = d_aprime + upx[ch] * (sp.color[ch] * t_before - suffix[ch] / one_minus);
                    grads.colors[sp.index * 3 + ch] =
                        grads.colors[sp.index * 3 + ch] + upx[ch] * at;
                    suffix[ch] = suffix[ch] + sp.color[ch] * at;
                }
                if clipped {
                    continue; // clip plateau: no gradient into α or the footprint
                }
                grads.opacities[sp.index] = grads.opacities[sp.index] + d_aprime * weight;
                let d_weight = d_aprime * sp.opacity;
                // G = exp(-q/2): dq = -G/2 · dG
                let d_q = -half * weight * d_weight;
                let dx = px - sp.mean2d[0];
                let dy = py - sp.mean2d[1];
                let [ca, cb, cc] = sp.cov2d;
                let det = ca * cc - cb * cb;
                let ux = (cc * dx - cb * dy) / det;
                let uy = (ca * dy - cb * dx) / det;
                // dq/dd = 2 Λ d = 2u, d = p − mean2d
                d_mean[k as usize * 2] = d_mean[k as usize * 2] - two * ux * d_q;
                d_mean[k as usize * 2 + 1] = d_mean[k as usize * 2 + 1] - two * uy * d_q;
                // dq/dΣ₂ = −u uᵀ (storage: xy counted twice)
                d_cov[k as usize * 3] = d_cov[k as usize * 3] - d_q * ux * ux;
                d_cov[k as usize * 3 + 1] = d_cov[k as usize * 3 + 1] - two * d_q * ux * uy;
                d_cov[k as usize * 3 + 2] = d_cov[k as usize * 3 + 2] - d_q * uy * uy;
            }
        }
    }

    // chain screen-space adjoints into world-space attributes
    let wrot = cam.rotation();
    let (fx, fy) = (cam.fx(), cam.fy());
    for (k, sp) in splats.iter().enumerate() {
        let i = sp.index;
        let dm = [d_mean[k * 2], d_mean[k * 2 + 1]];
        // matrix-elementwise 2×2 grad of cov2d from storage form
        let gm = [
            d_cov[k * 3],
            d_cov[k * 3 + 1] * half,
            d_cov[k * 3 + 1] * half,
            d_cov[k * 3 + 2],
        ];
        if dm[0] == T::zero()
            && dm[1] == T::zero()
            && gm.iter().all(|&v| v == T::zero())
            && grads.opacities[i] == T::zero()
        {
            // color adjoints were already accumulated; skip the geometric
            // chain when the footprint received no gradient at all
            if grads.colors[i * 3..i * 3 + 3].iter().all(|&v| v == T::zero()) {
                continue;
            }
        }

        let t = cam.world_to_cam(g.position(i));
        let (x, y, z) = (t[0], t[1], t[2]);
        let zi = z.recip();
        let zi2 = zi * zi;
        let j = [fx * zi, T::zero(), -fx * x * zi2, T::zero(), fy * zi, -fy * y * zi2];
        // A = J W
        let mut a = [T::zero(); 6];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = T::zero();
                for kk in 0..3 {
                    acc = acc + j[r * 3 + kk] * wrot[kk * 3 + c];
                }
                a[r * 3 + c] = acc;
            }
        }
        let sigma = super::geometry::covariance3d(g.scale(i), g.rotation(i))
            .expect("validated attributes");

        // dM = Aᵀ Gm A
        let mut dm3 = [T::zero(); 9];
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = T::zero();
                for e in 0..2 {
                    for f in 0..2 {
                        acc = acc + a[e * 3 + r] * gm[e * 2 + f] * a[f * 3 + c];
                    }
                }
                dm3[r * 3 + c] = acc;
            }
        }
        // dA = 2 Gm A M
        let mut am = [T::zero(); 6]; // A·M
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = T::zero();
                for kk in 0..3 {
                    acc = acc + a[r * 3 + kk] * sigma[kk * 3 + c];
                }
                am[r * 3 + c] = acc;
            }
        }
        let mut da = [T::zero(); 6];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = T::zero();
                for e in 0..2 {
                    acc = acc + gm[r * 2 + e] * am[e * 3 + c];
                }
                da[r * 3 + c] = two * acc;
            }
        }
        // dJ = dA Wᵀ
        let mut dj = [T::zero(); 6];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = T::zero();
                for kk in 0..3 {
                    acc = acc + da[r * 3 + kk] * wrot[c * 3 + kk];
                }
                dj[r * 3 + c] = acc;
            }
        }
        // dt from mean2d (dmean2d/dt = J) and from J's own dependence on t
        let mut dt = [T::zero(); 3];
        for kk in 0..3 {
            dt[kk] = j[kk] * dm[0] + j[3 + kk] * dm[1];
        }
        let fxz2 = fx * zi2;
        let fyz2 = fy * zi2;
        dt[0] = dt[0] - dj[2] * fxz2;
        dt[1] = dt[1] - dj[5] * fyz2;
        dt[2] = dt[2] - dj[0] * fxz2 - dj[4] * fyz2
            + two * (dj[2] * fx * x + dj[5] * fy * y) * zi2 * zi;
        // dμ = Wᵀ dt
        for c in 0..3 {
            let dmu = wrot[c] * dt[0] + wrot[3 + c] * dt[1] + wrot[6 + c] * dt[2];
            grads.positions[i * 3 + c] = grads.positions[i * 3 + c] + dmu;
        }

        // Σ = R diag(s²) Rᵀ
        let q = g.rotation(i);
        let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let qh = [q[0] / qn, q[1] / qn, q[2] / qn, q[3] / qn];
        let r = quat_to_rotmat(q).expect("validated quaternion");
        let sc = g.scale(i);
        // ds_i = 2 s_i (Rᵀ dM R)_ii
        for c in 0..3 {
            let mut acc = T::zero();
            for e in 0..3 {
                for f in 0..3 {
                    acc = acc + r[e * 3 + c] * dm3[e * 3 + f] * r[f * 3 + c];
                }
            }
            grads.scales[i * 3 + c] = grads.scales[i * 3 + c] + two * sc[c] * acc;
        }
        // dR = 2 dM R D
        let mut dr = [T::zero(); 9];
        for e in 0..3 {
            for c in 0..3 {
                let mut acc = T::zero();
                for f in 0..3 {
                    acc = acc + dm3[e * 3 + f] * r[f * 3 + c];
                }
                dr[e * 3 + c] = two * acc * sc[c] * sc[c];
            }
        }
        // dq̂ then project through the normalization
        let mut dqh = [T::zero(); 4];
        for jq in 0..4 {
            let jac = rotmat_quat_jacobian(qh, jq);
            let mut acc = T::zero();
            for e in 0..9 {
                acc = acc + dr[e] * jac[e];
            }
            dqh[jq] = acc;
        }
        let dot = dqh[0] * qh[0] + dqh[1] * qh[1] + dqh[2] * qh[2] + dqh[3] * qh[3];
        for jq in 0..4 {
            grads.rotations[i * 4 + jq] =
                grads.rotations[i * 4 + jq] + (dqh[jq] - dot * qh[jq]) / qn;
        }
    }
    Ok(grads)
}
