//! Quaternion and covariance math shared by projection and its backward.

use crate::error::{DdError, Result};
use crate::scalar::{s, Scalar};

/// Normalize then convert (w,x,y,z) to a row-major rotation matrix.
pub fn quat_to_rotmat<T: Scalar>(q: [T; 4]) -> Result<[T; 9]> {
    if !q.iter().all(|v| v.is_finite()) {
        return Err(DdError::Invariant("non-finite quaternion".into()));
    }
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n < s(1e-8) {
        return Err(DdError::Invariant("zero-norm quaternion".into()));
    }
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let two = s::<T>(2.0);
    Ok([
        T::one() - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        T::one() - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        T::one() - two * (x * x + y * y),
    ])
}

/// Σ = R · diag(s²) · Rᵀ, row-major 3×3.
pub fn covariance3d<T: Scalar>(scales: [T; 3], q: [T; 4]) -> Result<[T; 9]> {
    if scales.iter().any(|&v| !(v > T::zero())) {
        return Err(DdError::Invariant(format!(
            "scales must be strictly positive, got {scales:?}"
        )));
    }
    let r = quat_to_rotmat(q)?;
    let s2 = [scales[0] * scales[0], scales[1] * scales[1], scales[2] * scales[2]];
    let mut out = [T::zero(); 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc = acc + r[i * 3 + k] * s2[k] * r[j * 3 + k];
            }
            out[i * 3 + j] = acc;
        }
    }
    Ok(out)
}

/// ∂R/∂q̂ for a unit quaternion, index `j` in (w,x,y,z) order; row-major 3×3.
pub(crate) fn rotmat_quat_jacobian<T: Scalar>(q: [T; 4], j: usize) -> [T; 9] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let two = s::<T>(2.0);
    let m: [T; 9] = match j {
        0 => [
            T::zero(), -z, y, //
            z, T::zero(), -x, //
            -y, x, T::zero(),
        ],
        1 => [
            T::zero(), y, z, //
            y, -(x + x), -w, //
            z, w, -(x + x),
        ],
        2 => [
            -(y + y), x, w, //
            x, T::zero(), z, //
            -w, z, -(y + y),
        ],
        3 => [
            -(z + z), -w, x, //
            w, -(z + z), y, //
            x, y, T::zero(),
        ],
        _ => unreachable!(),
    };
    let mut out = [T::zero(); 9];
    for i in 0..9 {
        out[i] = two * m[i];
    }
    out
}
