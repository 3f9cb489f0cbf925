//! Orbit cameras: pinhole intrinsics, look-at-origin extrinsics, and the
//! Plücker ray embedding used for camera conditioning.

use crate::error::{DdError, Result};
use crate::scalar::{s, Scalar};
use crate::tensor::Tensor;

/// Orbit-parameterized camera looking at the world origin.
///
/// Camera space is x-right, y-down, z-forward; `yaw = 0, pitch = 0` places
/// the camera on the +z axis (the canonical front view). Pixel `(ix, iy)`
/// has its center at continuous coordinates `(ix + 0.5, iy + 0.5)`; the
/// principal point sits at the image center.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera<T> {
    yaw_deg: T,
    pitch_deg: T,
    radius: T,
    fov_y_deg: T,
    width: usize,
    height: usize,
    // derived
    rotation: [T; 9], // world-to-camera, rows = (right, down, forward)
    position: [T; 3],
    fx: T,
    fy: T,
    cx: T,
    cy: T,
}

fn cross<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3<T: Scalar>(a: [T; 3]) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn normalize3<T: Scalar>(a: [T; 3]) -> [T; 3] {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Deterministic pose on the orbit sphere. Yaw is wrapped into
/// `[-180, 180)`; pitch must stay away from the poles.
pub fn orbit_camera<T: Scalar>(
    yaw_deg: T,
    pitch_deg: T,
    radius: T,
    fov_y_deg: T,
    width: usize,
    height: usize,
) -> Result<Camera<T>> {
    if !(yaw_deg.is_finite() && pitch_deg.is_finite() && radius.is_finite() && fov_y_deg.is_finite())
    {
        return Err(DdError::Invariant("camera parameters must be finite".into()));
    }
    if radius <= T::zero() {
        return Err(DdError::Invariant("camera radius must be > 0".into()));
    }
    if fov_y_deg <= s(10.0) || fov_y_deg >= s(120.0) {
        return Err(DdError::Invariant(format!(
            "fov_y must lie in (10, 120) degrees, got {fov_y_deg}"
        )));
    }
    if pitch_deg.abs() >= s(89.0) {
        return Err(DdError::Invariant("pitch too close to the pole".into()));
    }
    if width < 8 || height < 8 {
        return Err(DdError::Invariant("image must be at least 8x8".into()));
    }
    // wrap yaw into [-180, 180)
    let mut yaw = yaw_deg;
    let full = s::<T>(360.0);
    while yaw >= s(180.0) {
        yaw = yaw - full;
    }
    while yaw < s(-180.0) {
        yaw = yaw + full;
    }

    let deg = s::<T>(std::f64::consts::PI / 180.0);
    let (ya, pa) = (yaw * deg, pitch_deg * deg);
    let position = [
        radius * ya.sin() * pa.cos(),
        radius * pa.sin(),
        radius * ya.cos() * pa.cos(),
    ];
    let forward = normalize3([-position[0], -position[1], -position[2]]);
    let up = [T::zero(), T::one(), T::zero()];
    let right = normalize3(cross(forward, up));
    let down = cross(forward, right);
    let rotation = [
        right[0], right[1], right[2], down[0], down[1], down[2], forward[0], forward[1],
        forward[2],
    ];
    let half = s::<T>(0.5);
    let focal = s::<T>(height as f64) * half / (fov_y_deg * deg * half).tan();
    Ok(Camera {
        yaw_deg: yaw,
        pitch_deg,
        radius,
        fov_y_deg,
        width,
        height,
        rotation,
        position,
        fx: focal,
        fy: focal,
        cx: s::<T>(width as f64) * half,
        cy: s::<T>(height as f64) * half,
    })
}

impl<T: Scalar> Camera<T> {
    pub fn yaw_deg(&self) -> T {
        self.yaw_deg
    }
    pub fn pitch_deg(&self) -> T {
        self.pitch_deg
    }
    pub fn radius(&self) -> T {
        self.radius
    }
    pub fn fov_y_deg(&self) -> T {
        self.fov_y_deg
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn fx(&self) -> T {
        self.fx
    }
    pub fn fy(&self) -> T {
        self.fy
    }
    pub fn cx(&self) -> T {
        self.cx
    }
    pub fn cy(&self) -> T {
        self.cy
    }
    pub fn position(&self) -> [T; 3] {
        self.position
    }

    /// World-to-camera rotation, row-major rows = (right, down, forward).
    pub fn rotation(&self) -> &[T; 9] {
        &self.rotation
    }

    pub fn world_to_cam(&self, p: [T; 3]) -> [T; 3] {
        let d = [
            p[0] - self.position[0],
            p[1] - self.position[1],
            p[2] - self.position[2],
        ];
        let r = &self.rotation;
        [
            r[0] * d[0] + r[1] * d[1] + r[2] * d[2],
            r[3] * d[0] + r[4] * d[1] + r[5] * d[2],
            r[6] * d[0] + r[7] * d[1] + r[8] * d[2],
        ]
    }

    /// Unit world-space direction of the ray through pixel center `(ix, iy)`.
    pub fn ray_direction(&self, ix: usize, iy: usize) -> [T; 3] {
        let half = s::<T>(0.5);
        let px = (s::<T>(ix as f64) + half - self.cx) / self.fx;
        let py = (s::<T>(iy as f64) + half - self.cy) / self.fy;
        let r = &self.rotation;
        // camera-space (px, py, 1) through Rᵀ
        normalize3([
            r[0] * px + r[3] * py + r[6],
            r[1] * px + r[4] * py + r[7],
            r[2] * px + r[5] * py + r[8],
        ])
    }

    pub fn cast<U: Scalar>(&self) -> Camera<U> {
        orbit_camera(
            U::of(self.yaw_deg.dbl()),
            U::of(self.pitch_deg.dbl()),
            U::of(self.radius.dbl()),
            U::of(self.fov_y_deg.dbl()),
            self.width,
            self.height,
        )
        .expect("valid camera remains valid under cast")
    }
}

/// Plücker embedding: per pixel, channels 0–2 hold the unit ray direction
/// `d`, channels 3–5 the moment `m = o × d`. Shape `[6, H, W]`.
pub fn plucker_embed<T: Scalar>(cam: &Camera<T>) -> Tensor<T> {
    let (w, h) = (cam.width(), cam.height());
    let mut data = vec![T::zero(); 6 * h * w];
    let o = cam.position();
    for iy in 0..h {
        for ix in 0..w {
            let d = cam.ray_direction(ix, iy);
            let m = cross(o, d);
            let p = iy * w + ix;
            for c in 0..3 {
                data[c * h * w + p] = d[c];
                data[(3 + c) * h * w + p] = m[c];
            }
        }
    }
    Tensor::new(&[6, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_zero_sits_on_plus_z() {
        let cam = orbit_camera(0.0f64, 0.0, 2.0, 60.0, 32, 32).unwrap();
        let p = cam.position();
        assert!((p[0]).abs() < 1e-12 && (p[1]).abs() < 1e-12);
        assert!((p[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn yaw_180_sits_on_minus_z() {
        let cam = orbit_camera(180.0f64, 0.0, 2.0, 60.0, 32, 32).unwrap();
        let p = cam.position();
        assert!((p[2] + 2.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn yaw_mirror_symmetry() {
        let a = orbit_camera(90.0f64, 0.0, 2.0, 60.0, 32, 32).unwrap();
        let b = orbit_camera(-90.0f64, 0.0, 2.0, 60.0, 32, 32).unwrap();
        assert!((a.position()[0] + b.position()[0]).abs() < 1e-12);
        assert!((a.position()[2] - b.position()[2]).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_orthonormal() {
        for yaw in [-170.0, -45.0, 0.0, 33.0, 120.0] {
            for pitch in [-5.0, 0.0, 4.0, 45.0] {
                let cam = orbit_camera(yaw, pitch, 2.0f64, 49.0, 16, 16).unwrap();
                let r = cam.rotation();
                for i in 0..3 {
                    for j in 0..3 {
                        let mut acc = 0.0;
                        for k in 0..3 {
                            acc += r[i * 3 + k] * r[j * 3 + k];
                        }
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((acc - expect).abs() < 1e-6, "yaw {yaw} pitch {pitch}");
                    }
                }
                // looks at origin: origin projects onto the optical axis
                let t = cam.world_to_cam([0.0, 0.0, 0.0]);
                assert!(t[0].abs() < 1e-9 && t[1].abs() < 1e-9);
                assert!((t[2] - 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(orbit_camera(0.0f32, 0.0, -1.0, 60.0, 32, 32).is_err());
        assert!(orbit_camera(0.0f32, 0.0, 2.0, 5.0, 32, 32).is_err());
        assert!(orbit_camera(0.0f32, 0.0, 2.0, 130.0, 32, 32).is_err());
        assert!(orbit_camera(0.0f32, 89.5, 2.0, 60.0, 32, 32).is_err());
    }

    #[test]
    fn plucker_constraints_hold() {
        let cam = orbit_camera(25.0f64, 3.0, 2.0, 60.0, 17, 17).unwrap();
        let emb = plucker_embed(&cam);
        let hw = 17 * 17;
        let d = emb.data();
        for p in 0..hw {
            let dir = [d[p], d[hw + p], d[2 * hw + p]];
            let m = [d[3 * hw + p], d[4 * hw + p], d[5 * hw + p]];
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            let dm = dir[0] * m[0] + dir[1] * m[1] + dir[2] * m[2];
            assert!(dm.abs() < 1e-6);
        }
    }

    #[test]
    fn central_ray_through_origin_has_zero_moment() {
        // odd image size -> exact central pixel on the optical axis
        let cam = orbit_camera(0.0f64, 0.0, 2.0, 60.0, 33, 33).unwrap();
        let emb = plucker_embed(&cam);
        let hw = 33 * 33;
        let p = 16 * 33 + 16;
        let d = emb.data();
        assert!((d[p] - 0.0).abs() < 1e-9);
        assert!((d[hw + p] - 0.0).abs() < 1e-9);
        assert!((d[2 * hw + p] + 1.0).abs() < 1e-9);
        for c in 3..6 {
            assert!(d[c * hw + p].abs() < 1e-9);
        }
    }

    #[test]
    fn moment_matches_hand_cross_product() {
        // o = (1, 0, 2), d = (0, 0, -1): m = o × d = (0, 1, 0)
        let o = [1.0f64, 0.0, 2.0];
        let d = [0.0f64, 0.0, -1.0];
        let m = super::cross(o, d);
        assert_eq!(m, [0.0, 1.0, 0.0]);
    }
}
