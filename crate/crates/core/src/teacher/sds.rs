//! Score-distillation residual: the teacher as a frozen plausibility scorer.

use crate::error::{DdError, Result};
use crate::nn::{Graph, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::schedule::NoiseSchedule;
use super::TeacherModel;

/// `w(t) · (ε̂(z_t; t, II, c̃) − ε)` where `z_t` is the forward-noised render.
///
/// Runs the teacher in inference mode — no gradient ever reaches its
/// weights. The residual is shaped like `rendered` and is consumed as the
/// gradient of the implicit-verification objective with respect to the
/// rendered image (stop-gradient through the scorer).
#[allow(clippy::too_many_arguments)]
pub fn sds_residual<T: Scalar>(
    model: &TeacherModel,
    store: &ParamStore<T>,
    schedule: &NoiseSchedule<T>,
    rendered: &Tensor<T>,
    t: usize,
    t_range: (usize, usize),
    ii: &Tensor<T>,
    plucker: &Tensor<T>,
    eps: &Tensor<T>,
    weight: T,
) -> Result<Tensor<T>> {
    let (t_min, t_max) = t_range;
    if t < t_min || t > t_max {
        return Err(DdError::Invariant(format!(
            "timestep {t} outside configured range [{t_min}, {t_max}]"
        )));
    }
    let shape = rendered.shape().to_vec();
    if shape.len() != 4 || shape[1] != 3 {
        return Err(DdError::Invariant(format!(
            "rendered must be [V,3,H,W], got {shape:?}"
        )));
    }
    if eps.shape() != rendered.shape() {
        return Err(DdError::Invariant("eps must match the rendered shape".into()));
    }
    let views = shape[0];
    let z_t = schedule.forward_diffuse(rendered, t, eps)?;

    let mut g = Graph::inference();
    let x = g.constant(z_t);
    let pl = g.constant(plucker.clone());
    let (h, w) = (ii.shape()[1], ii.shape()[2]);
    let ii_node = g.constant(ii.clone().reshaped(&[1, 3, h, w]));
    let ii_tokens = model.encode_ii(&mut g, store, ii_node);
    let out = model.forward(&mut g, store, x, &[t], pl, ii_tokens, views)?;
    let eps_hat = g.value(out);

    Ok(Tensor::new(
        &shape,
        eps_hat
            .data()
            .iter()
            .zip(eps.data())
            .map(|(&p, &e)| weight * (p - e))
            .collect(),
    ))
}
