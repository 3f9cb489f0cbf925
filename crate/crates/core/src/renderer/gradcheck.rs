//! Finite-difference verification harness for the renderer's analytic
//! backward pass.
//!
//! The oracle side only ever calls [`super::render`] (forward): central
//! differences of the projected scalar `L = Σ upstream ⊙ render(...)` are
//! compared element-wise against [`super::render_gradients`]. Quaternion
//! perturbations are renormalized before rendering, so the finite difference
//! measures the same normalization-projected derivative the analytic pass
//! reports.

use rand::Rng;

use crate::camera::Camera;
use crate::gaussians::GaussianSet;
use crate::rng::draw_range;
use crate::tensor::Tensor;

use super::{render, render_gradients, RenderOpts};

/// Maximum relative error over all checked attribute components.
#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst: String,
}

fn scene_loss(
    g: &GaussianSet<f64>,
    cam: &Camera<f64>,
    bg: [f64; 3],
    upstream: &Tensor<f64>,
) -> f64 {
    let img = render(g, cam, bg, RenderOpts::exact()).expect("render");
    let chw = img.to_chw();
    let mut acc = 0.0;
    for (a, b) in chw.data().iter().zip(upstream.data()) {
        acc += a * b;
    }
    acc
}

struct Perturbed {
    positions: Vec<f64>,
    scales: Vec<f64>,
    rotations: Vec<f64>,
    colors: Vec<f64>,
    opacities: Vec<f64>,
}

impl Perturbed {
    fn from(g: &GaussianSet<f64>) -> Self {
        Perturbed {
            positions: g.positions().to_vec(),
            scales: g.scales().to_vec(),
            rotations: g.rotations().to_vec(),
            colors: g.colors().to_vec(),
            opacities: g.opacities().to_vec(),
        }
    }

    fn build(&self) -> GaussianSet<f64> {
        let mut rot = self.rotations.clone();
        for q in rot.chunks_exact_mut(4) {
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            for v in q.iter_mut() {
                *v /= n;
            }
        }
        GaussianSet::new(
            self.positions.clone(),
            self.scales.clone(),
            rot,
            self.colors.clone(),
            self.opacities.clone(),
        )
        .expect("perturbed set stays valid")
    }
}

/// Compare analytic and finite-difference gradients for every attribute of
/// every Gaussian plus the background. `step` is the FD half-step (the
/// contract uses 1e-4); components with `|analytic| <= grad_floor` are only
/// checked for FD agreement within the same floor.
pub fn check_scene_gradients(
    g: &GaussianSet<f64>,
    cam: &Camera<f64>,
    bg: [f64; 3],
    upstream: &Tensor<f64>,
    step: f64,
    rel_tol: f64,
    grad_floor: f64,
) -> GradCheckReport {
    let analytic = render_gradients(g, cam, bg, upstream, RenderOpts::exact()).expect("backward");
    let base = Perturbed::from(g);
    let mut report = GradCheckReport::default();

    let mut check = |label: &str, an: f64, eval: &mut dyn FnMut(f64) -> f64| {
        let plus = eval(step);
        let minus = eval(-step);
        let fd = (plus - minus) / (2.0 * step);
        report.checked += 1;
        if an.abs() <= grad_floor && fd.abs() <= grad_floor {
            return;
        }
        let rel = (an - fd).abs() / fd.abs().max(an.abs()).max(grad_floor);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = format!("{label}: analytic {an:.6e} vs fd {fd:.6e}");
        }
        assert!(
            rel < rel_tol,
            "{label}: analytic {an:.9e} vs fd {fd:.9e} (rel {rel:.3e})"
        );
    };

    let m = g.len();
    for i in 0..m {
        for c in 0..3 {
            check(
                &format!("mu[{i}][{c}]"),
                analytic.positions[i * 3 + c],
                &mut |h| {
                    let mut p = Perturbed::from(g);
                    p.positions[i * 3 + c] += h;
                    scene_loss(&p.build(), cam, bg, upstream)
                },
            );
            check(
                &format!("s[{i}][{c}]"),
                analytic.scales[i * 3 + c],
                &mut |h| {
                    let mut p = Perturbed::from(g);
                    p.scales[i * 3 + c] += h;
                    scene_loss(&p.build(), cam, bg, upstream)
                },
            );
            check(
                &format!("c[{i}][{c}]"),
                analytic.colors[i * 3 + c],
                &mut |h| {
                    let mut p = Perturbed::from(g);
                    p.colors[i * 3 + c] += h;
                    scene_loss(&p.build(), cam, bg, upstream)
                },
            );
        }
        for c in 0..4 {
            check(
                &format!("q[{i}][{c}]"),
                analytic.rotations[i * 4 + c],
                &mut |h| {
                    let mut p = Perturbed::from(g);
                    p.rotations[i * 4 + c] += h;
                    scene_loss(&p.build(), cam, bg, upstream)
                },
            );
        }
        check(&format!("alpha[{i}]"), analytic.opacities[i], &mut |h| {
            let mut p = Perturbed::from(g);
            p.opacities[i] += h;
            scene_loss(&p.build(), cam, bg, upstream)
        });
    }
    for c in 0..3 {
        check(&format!("bg[{c}]"), analytic.background[c], &mut |h| {
            let mut b = bg;
            b[c] += h;
            scene_loss(&base.build(), cam, b, upstream)
        });
    }
    report
}

/// Small random scene kept strictly inside every attribute range so finite
/// differences cannot cross a validation boundary.
pub fn random_interior_scene<R: Rng>(rng: &mut R, count: usize) -> GaussianSet<f64> {
    let mut positions = Vec::new();
    let mut scales = Vec::new();
    let mut rotations = Vec::new();
    let mut colors = Vec::new();
    let mut opacities = Vec::new();
    for _ in 0..count {
        for _ in 0..3 {
            positions.push(draw_range(rng, -0.5, 0.5));
        }
        for _ in 0..3 {
            // log-scale in (-6.5, -3.5): far from both activation bounds
            let ls: f64 = draw_range(rng, -6.5, -3.5);
            scales.push(ls.exp());
        }
        let mut q = [0.0f64; 4];
        let mut n = 0.0;
        while n < 1e-3 {
            for v in q.iter_mut() {
                *v = draw_range(rng, -1.0, 1.0);
            }
            n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        }
        for v in q {
            rotations.push(v / n);
        }
        for _ in 0..3 {
            colors.push(draw_range(rng, 0.05, 0.95));
        }
        opacities.push(draw_range(rng, 0.1, 0.9));
    }
    GaussianSet::new(positions, scales, rotations, colors, opacities).expect("interior scene")
}

/// Deterministic random upstream gradient in `[-1, 1]`.
pub fn random_upstream<R: Rng>(rng: &mut R, h: usize, w: usize) -> Tensor<f64> {
    Tensor::from_fn(&[3, h, w], |_| draw_range(rng, -1.0, 1.0))
}
