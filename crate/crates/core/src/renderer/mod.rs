//! Differentiable 3D Gaussian splatting.
//!
//! EWA-style projection of anisotropic Gaussians to screen space, global
//! depth-sorted alpha compositing (no tiling at this scale), and a
//! hand-derived reverse pass exposing exact gradients for all five attribute
//! groups and the background color.

mod backward;
mod geometry;
pub mod gradcheck;

pub use backward::{render_gradients, AttributeGrads};
pub use geometry::{covariance3d, quat_to_rotmat};

use crate::camera::Camera;
use crate::error::{DdError, Result};
use crate::gaussians::GaussianSet;
use crate::image_plane::ImagePlane;
use crate::scalar::{s, Scalar};

/// Diagonal low-pass dilation added to every projected covariance (px²).
pub const COV2D_DILATION: f64 = 0.3;
/// Per-sample opacity contributions are clipped here to keep transmittance
/// (and its gradient) finite.
pub const ALPHA_CLIP: f64 = 0.999;
/// Gaussians at camera depth below `NEAR_PLANE_FACTOR * radius` are culled.
pub const NEAR_PLANE_FACTOR: f64 = 0.01;

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Debug)]
pub struct Projected2DGaussian<T> {
    pub mean2d: [T; 2],
    /// Symmetric 2×2 covariance stored as (xx, xy, yy), dilation included.
    pub cov2d: [T; 3],
    pub depth: T,
    pub color: [T; 3],
    pub opacity: T,
    /// Index into the source `GaussianSet`.
    pub index: usize,
}

/// Rendering controls. `exact` composites every Gaussian at every pixel
/// (the reference path used by gradient checks); `fast` restricts each
/// Gaussian to a conservative bounding box and stops once transmittance is
/// negligible.
#[derive(Clone, Copy, Debug)]
pub struct RenderOpts {
    /// Half-extent of the per-Gaussian pixel box, in marginal sigmas.
    pub bbox_sigma: Option<f64>,
    /// Stop compositing a pixel once transmittance falls below this.
    pub early_stop_transmittance: Option<f64>,
}

impl RenderOpts {
    pub fn exact() -> Self {
        RenderOpts { bbox_sigma: None, early_stop_transmittance: None }
    }
    pub fn fast() -> Self {
        RenderOpts { bbox_sigma: Some(4.0), early_stop_transmittance: Some(1e-5) }
    }
}

impl Default for RenderOpts {
    fn default() -> Self {
        Self::exact()
    }
}

/// Project all Gaussians; those behind the near plane are culled. The result
/// keeps source order (depth sorting happens downstream).
pub fn project<T: Scalar>(g: &GaussianSet<T>, cam: &Camera<T>) -> Vec<Projected2DGaussian<T>> {
    let near = s::<T>(NEAR_PLANE_FACTOR) * cam.radius();
    let dil = s::<T>(COV2D_DILATION);
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let t = cam.world_to_cam(g.position(i));
        let z = t[2];
        if z <= near {
            continue;
        }
        let sigma = match covariance3d(g.scale(i), g.rotation(i)) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let (fx, fy) = (cam.fx(), cam.fy());
        let zi = z.recip();
        let zi2 = zi * zi;
        // J = d(mean2d)/d(t_cam)
        let j = [fx * zi, T::zero(), -fx * t[0] * zi2, T::zero(), fy * zi, -fy * t[1] * zi2];
        let w = cam.rotation();
        // A = J · W  (2×3)
        let mut a = [T::zero(); 6];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc = acc + j[r * 3 + k] * w[k * 3 + c];
                }
                a[r * 3 + c] = acc;
            }
        }
        // cov2d = A Σ Aᵀ
        let mut asig = [T::zero(); 6]; // A·Σ (2×3)
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc = acc + a[r * 3 + k] * sigma[k * 3 + c];
                }
                asig[r * 3 + c] = acc;
            }
        }
        let xx = asig[0] * a[0] + asig[1] * a[1] + asig[2] * a[2] + dil;
        let xy = asig[0] * a[3] + asig[1] * a[4] + asig[2] * a[5];
        let yy = asig[3] * a[3] + asig[4] * a[4] + asig[5] * a[5] + dil;
        let mean2d = [fx * t[0] * zi + cam.cx(), fy * t[1] * zi + cam.cy()];
        out.push(Projected2DGaussian {
            mean2d,
            cov2d: [xx, xy, yy],
            depth: z,
            color: g.color(i),
            opacity: g.opacity(i),
            index: i,
        });
    }
    out
}

/// Depth-ascending order; exact ties broken by Gaussian index so render
/// output is deterministic.
pub(crate) fn sort_by_depth<T: Scalar>(splats: &mut [Projected2DGaussian<T>]) {
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .expect("finite depths")
            .then(a.index.cmp(&b.index))
    });
}

/// CSR pixel → contributor lists for the fast path. Contributors appear in
/// depth order within each pixel because splats are visited depth-sorted.
pub(crate) struct PixelLists {
    pub offsets: Vec<u32>,
    pub entries: Vec<u32>,
}

pub(crate) fn build_pixel_lists<T: Scalar>(
    splats: &[Projected2DGaussian<T>],
    width: usize,
    height: usize,
    bbox_sigma: f64,
) -> PixelLists {
    let boxes: Vec<(usize, usize, usize, usize)> = splats
        .iter()
        .map(|sp| {
            let sx = sp.cov2d[0].max(T::zero()).sqrt().dbl();
            let sy = sp.cov2d[2].max(T::zero()).sqrt().dbl();
            let (mx, my) = (sp.mean2d[0].dbl(), sp.mean2d[1].dbl());
            let x0 = ((mx - bbox_sigma * sx - 0.5).floor().max(0.0)) as usize;
            let y0 = ((my - bbox_sigma * sy - 0.5).floor().max(0.0)) as usize;
            let x1 = ((mx + bbox_sigma * sx + 0.5).ceil().min(width as f64)) as usize;
            let y1 = ((my + bbox_sigma * sy + 0.5).ceil().min(height as f64)) as usize;
            (x0, y0, x1.max(x0), y1.max(y0))
        })
        .collect();
    let mut counts = vec![0u32; width * height + 1];
    for &(x0, y0, x1, y1) in &boxes {
        for y in y0..y1 {
            for x in x0..x1 {
                counts[y * width + x + 1] += 1;
            }
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let offsets = counts.clone();
    let mut cursor = counts;
    let mut entries = vec![0u32; *offsets.last().unwrap() as usize];
    for (k, &(x0, y0, x1, y1)) in boxes.iter().enumerate() {
        for y in y0..y1 {
            for x in x0..x1 {
                let c = &mut cursor[y * width + x];
                entries[*c as usize] = k as u32;
                *c += 1;
            }
        }
    }
    PixelLists { offsets, entries }
}

#[inline]
pub(crate) fn gaussian_weight<T: Scalar>(sp: &Projected2DGaussian<T>, px: T, py: T) -> T {
    let dx = px - sp.mean2d[0];
    let dy = py - sp.mean2d[1];
    let [a, b, c] = sp.cov2d;
    let det = a * c - b * b;
    // dilation keeps det > 0 for any valid input
    let q = (c * dx * dx - (b + b) * dx * dy + a * dy * dy) / det;
    (-q * s::<T>(0.5)).exp()
}

fn validate_background<T: Scalar>(background: [T; 3]) -> Result<()> {
    for ch in background {
        if !ch.is_finite() || ch < T::zero() || ch > T::one() {
            return Err(DdError::Invariant(format!(
                "background channel {ch} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Alpha-composite the set back-to-front against a constant background.
///
/// Per pixel: `C(p) = Σ_k c_k α'_k T_k + T_final · bg` with
/// `α'_k = min(α_k · exp(-½ dᵀ Λ d), 0.999)` and `T_k = Π_{j<k} (1 - α'_j)`.
/// The returned image carries `1 - T_final` in its alpha channel.
pub fn render<T: Scalar>(
    g: &GaussianSet<T>,
    cam: &Camera<T>,
    background: [T; 3],
    opts: RenderOpts,
) -> Result<ImagePlane<T>> {
    // full invariants are enforced at construction; re-check finiteness only
    for arr in [g.positions(), g.scales(), g.rotations(), g.colors(), g.opacities()] {
        if !arr.iter().all(|v| v.is_finite()) {
            return Err(DdError::Numeric("non-finite Gaussian attribute".into()));
        }
    }
    validate_background(background)?;
    let (w, h) = (cam.width(), cam.height());
    let mut splats = project(g, cam);
    sort_by_depth(&mut splats);

    let lists = opts
        .bbox_sigma
        .map(|bs| build_pixel_lists(&splats, w, h, bs));
    let clip = s::<T>(ALPHA_CLIP);
    let t_floor = opts.early_stop_transmittance.map(s::<T>);
    let half = s::<T>(0.5);

    let mut pixels = vec![T::zero(); w * h * 3];
    let mut alpha = vec![T::zero(); w * h];
    let mut exact_ids: Vec<u32> = Vec::new();
    if lists.is_none() {
        exact_ids = (0..splats.len() as u32).collect();
    }
    for iy in 0..h {
        for ix in 0..w {
            let p = iy * w + ix;
            let ids: &[u32] = match &lists {
                Some(l) => &l.entries[l.offsets[p] as usize..l.offsets[p + 1] as usize],
                None => &exact_ids,
            };
            let px = s::<T>(ix as f64) + half;
            let py = s::<T>(iy as f64) + half;
            let mut transmittance = T::one();
            let mut c = [T::zero(); 3];
            for &k in ids {
                let sp = &splats[k as usize];
                let weight = gaussian_weight(sp, px, py);
                let a = (sp.opacity * weight).min(clip);
                let at = a * transmittance;
                for ch in 0..3 {
                    c[ch] = c[ch] + sp.color[ch] * at;
                }
                transmittance = transmittance * (T::one() - a);
                if let Some(floor) = t_floor {
                    if transmittance < floor {
                        break;
                    }
                }
            }
            for ch in 0..3 {
                pixels[p * 3 + ch] = c[ch] + transmittance * background[ch];
            }
            alpha[p] = T::one() - transmittance;
        }
    }
    ImagePlane::new(w, h, pixels, Some(alpha))
}
