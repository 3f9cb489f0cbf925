//! Procedural ground-truth scenes: clusters of small Gaussians sampled on
//! simple primitives, everything inside the unit sphere.

use rand::Rng;

use crate::error::Result;
use crate::gaussians::GaussianSet;
use crate::rng::{draw_range, draw_uniform};
use crate::scalar::{s, Scalar};

pub const MAX_SCENE_GAUSSIANS: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PrimitiveKind {
    Sphere,
    Box,
    Ellipsoid,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// Unit quaternion (w,x,y,z) orienting the primitive.
    pub orientation: [f64; 4],
    pub color: [f64; 3],
    pub gaussians: usize,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<PrimitiveSpec>,
}

fn rotate(q: [f64; 4], p: [f64; 3]) -> [f64; 3] {
    // rotation by unit quaternion via the matrix form
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let r = [
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ];
    [
        r[0] * p[0] + r[1] * p[1] + r[2] * p[2],
        r[3] * p[0] + r[4] * p[1] + r[5] * p[2],
        r[6] * p[0] + r[7] * p[1] + r[8] * p[2],
    ]
}

fn random_unit_quat<R: Rng>(rng: &mut R) -> [f64; 4] {
    loop {
        let q = [
            draw_range::<f64, _>(rng, -1.0, 1.0),
            draw_range::<f64, _>(rng, -1.0, 1.0),
            draw_range::<f64, _>(rng, -1.0, 1.0),
            draw_range::<f64, _>(rng, -1.0, 1.0),
        ];
        let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if n > 1e-3 {
            return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        }
    }
}

/// Local-frame sample points for one primitive. Sphere points come in
/// mirror pairs `(x,y,z) / (-x,y,-z)`, so a primitive centered at the origin
/// is exactly symmetric under a 180° yaw.
fn local_points<R: Rng>(spec: &PrimitiveSpec, rng: &mut R) -> Vec<[f64; 3]> {
    let e = spec.half_extents;
    let mut pts = Vec::with_capacity(spec.gaussians);
    match spec.kind {
        PrimitiveKind::Sphere | PrimitiveKind::Ellipsoid => {
            let pairs = spec.gaussians / 2;
            for _ in 0..pairs {
                // uniform direction, mild radial jitter toward the surface
                let mut d;
                loop {
                    d = [
                        draw_range::<f64, _>(rng, -1.0, 1.0),
                        draw_range::<f64, _>(rng, -1.0, 1.0),
                        draw_range::<f64, _>(rng, -1.0, 1.0),
                    ];
                    let n2 = d.iter().map(|v| v * v).sum::<f64>();
                    if n2 > 1e-6 && n2 <= 1.0 {
                        let n = n2.sqrt();
                        d = [d[0] / n, d[1] / n, d[2] / n];
                        break;
                    }
                }
                let r = draw_range::<f64, _>(rng, 0.75, 1.0);
                let p = [d[0] * e[0] * r, d[1] * e[1] * r, d[2] * e[2] * r];
                pts.push(p);
                pts.push([-p[0], p[1], -p[2]]);
            }
            if spec.gaussians % 2 == 1 {
                pts.push([0.0, e[1] * 0.9, 0.0]);
            }
        }
        PrimitiveKind::Box => {
            // faces weighted by area
            let areas = [e[1] * e[2], e[0] * e[2], e[0] * e[1]];
            let total: f64 = areas.iter().sum::<f64>() * 2.0;
            for _ in 0..spec.gaussians {
                let mut pick = draw_uniform::<f64, _>(rng) * total;
                let mut axis = 0;
                let mut sign = 1.0;
                for (i, &a) in areas.iter().enumerate() {
                    if pick < a {
                        axis = i;
                        sign = 1.0;
                        break;
                    }
                    pick -= a;
                    if pick < a {
                        axis = i;
                        sign = -1.0;
                        break;
                    }
                    pick -= a;
                }
                let mut p = [
                    draw_range::<f64, _>(rng, -1.0, 1.0) * e[0],
                    draw_range::<f64, _>(rng, -1.0, 1.0) * e[1],
                    draw_range::<f64, _>(rng, -1.0, 1.0) * e[2],
                ];
                p[axis] = sign * e[axis];
                pts.push(p);
            }
        }
    }
    pts
}

/// Instantiate one primitive as a Gaussian cluster.
pub fn primitive_gaussians<T: Scalar, R: Rng>(
    spec: &PrimitiveSpec,
    rng: &mut R,
) -> Result<GaussianSet<T>> {
    let pts = local_points(spec, rng);
    let m = pts.len();
    let mean_extent = (spec.half_extents[0] + spec.half_extents[1] + spec.half_extents[2]) / 3.0;
    // footprint sized to close the surface at this sample count
    let sigma = (2.2 * mean_extent / (m as f64).sqrt()).clamp(4e-3, 0.9 * (-3.0f64).exp());
    let mut positions = Vec::with_capacity(m * 3);
    let mut scales = Vec::with_capacity(m * 3);
    let mut rotations = Vec::with_capacity(m * 4);
    let mut colors = Vec::with_capacity(m * 3);
    let mut opacities = Vec::with_capacity(m);
    // sphere/ellipsoid points come in mirror pairs; a pair shares its color
    // jitter and opacity so the symmetry survives into the attributes
    let paired = matches!(spec.kind, PrimitiveKind::Sphere | PrimitiveKind::Ellipsoid);
    let mut last_color = [T::zero(); 3];
    let mut last_opacity = T::zero();
    for (i, p) in pts.into_iter().enumerate() {
        let world = rotate(spec.orientation, p);
        for c in 0..3 {
            positions.push(s::<T>(world[c] + spec.center[c]));
        }
        for _ in 0..3 {
            scales.push(s::<T>(sigma));
        }
        rotations.extend_from_slice(&[T::one(), T::zero(), T::zero(), T::zero()]);
        let mirror_of_previous = paired && i % 2 == 1 && i < (m / 2) * 2;
        if !mirror_of_previous {
            for c in 0..3 {
                let jitter: f64 = draw_range(rng, -0.03, 0.03);
                last_color[c] = s::<T>((spec.color[c] + jitter).clamp(0.0, 1.0));
            }
            last_opacity = s::<T>(draw_range::<f64, _>(rng, 0.75, 0.95));
        }
        colors.extend_from_slice(&last_color);
        opacities.push(last_opacity);
    }
    GaussianSet::new(positions, scales, rotations, colors, opacities)
}

/// Draw a random scene: 1–4 primitives, everything inside the unit sphere,
/// at most [`MAX_SCENE_GAUSSIANS`] Gaussians. Deterministic per rng state.
pub fn make_scene<T: Scalar, R: Rng>(rng: &mut R) -> Result<(SceneSpec, GaussianSet<T>)> {
    let n_prim = 1 + (rng.next_u64() % 4) as usize;
    let budget = MAX_SCENE_GAUSSIANS / n_prim;
    let mut primitives = Vec::with_capacity(n_prim);
    let mut sets = Vec::with_capacity(n_prim);
    for _ in 0..n_prim {
        let kind = match rng.next_u64() % 3 {
            0 => PrimitiveKind::Sphere,
            1 => PrimitiveKind::Box,
            _ => PrimitiveKind::Ellipsoid,
        };
        let base: f64 = draw_range(rng, 0.15, 0.35);
        let half_extents = match kind {
            PrimitiveKind::Sphere => [base, base, base],
            _ => [
                base * draw_range::<f64, _>(rng, 0.5, 1.2),
                base * draw_range::<f64, _>(rng, 0.5, 1.2),
                base * draw_range::<f64, _>(rng, 0.5, 1.2),
            ],
        };
        let orientation = match kind {
            PrimitiveKind::Sphere => [1.0, 0.0, 0.0, 0.0],
            _ => random_unit_quat(rng),
        };
        let max_e = half_extents.iter().cloned().fold(0.0, f64::max);
        let max_center = (1.0 - max_e * 1.8 - 0.1).max(0.0);
        let dir = random_unit_quat(rng); // reuse 4 draws; take xyz and normalize
        let dn = (dir[1] * dir[1] + dir[2] * dir[2] + dir[3] * dir[3]).sqrt().max(1e-9);
        let cr = draw_range::<f64, _>(rng, 0.0, max_center);
        let center = [dir[1] / dn * cr, dir[2] / dn * cr, dir[3] / dn * cr];
        let color = [
            draw_range::<f64, _>(rng, 0.1, 0.95),
            draw_range::<f64, _>(rng, 0.1, 0.95),
            draw_range::<f64, _>(rng, 0.1, 0.95),
        ];
        let gaussians = (budget as f64 * draw_range::<f64, _>(rng, 0.6, 1.0)) as usize;
        let spec = PrimitiveSpec { kind, center, half_extents, orientation, color, gaussians };
        sets.push(primitive_gaussians::<T, _>(&spec, rng)?);
        primitives.push(spec);
    }
    let set = GaussianSet::concat(&sets)?;
    Ok((SceneSpec { primitives }, set))
}

/// Provenance hash over the attribute arrays (f32 bytes).
pub fn scene_hash(set: &GaussianSet<f32>) -> String {
    let mut bytes = Vec::new();
    for arr in [set.positions(), set.scales(), set.rotations(), set.colors(), set.opacities()] {
        for v in arr {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::io::sha256_hex(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::orbit_camera;
    use crate::renderer::{render, RenderOpts};
    use crate::rng::seeded_rng;

    #[test]
    fn fixed_seed_gives_identical_scene_hash() {
        let mut r1 = seeded_rng(42, "scenes");
        let mut r2 = seeded_rng(42, "scenes");
        let (_, a) = make_scene::<f32, _>(&mut r1).unwrap();
        let (_, b) = make_scene::<f32, _>(&mut r2).unwrap();
        assert_eq!(scene_hash(&a), scene_hash(&b));
    }

    #[test]
    fn scenes_fit_inside_unit_sphere_and_budget() {
        let mut rng = seeded_rng(1, "scenes");
        for _ in 0..20 {
            let (_, set) = make_scene::<f32, _>(&mut rng).unwrap();
            assert!(set.len() <= MAX_SCENE_GAUSSIANS);
            for i in 0..set.len() {
                let p = set.position(i);
                let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                assert!(n <= 1.0, "gaussian outside unit sphere: {n}");
            }
        }
    }

    #[test]
    fn centered_sphere_is_yaw180_symmetric() {
        let mut rng = seeded_rng(7, "sphere-sym");
        let spec = PrimitiveSpec {
            kind: PrimitiveKind::Sphere,
            center: [0.0; 3],
            half_extents: [0.3; 3],
            orientation: [1.0, 0.0, 0.0, 0.0],
            color: [0.8, 0.3, 0.2],
            gaussians: 200,
        };
        let set = primitive_gaussians::<f64, _>(&spec, &mut rng).unwrap();
        let a = render(
            &set,
            &orbit_camera(0.0, 0.0, 2.0, 60.0, 32, 32).unwrap(),
            [1.0; 3],
            RenderOpts::exact(),
        )
        .unwrap();
        let b = render(
            &set,
            &orbit_camera(180.0, 0.0, 2.0, 60.0, 32, 32).unwrap(),
            [1.0; 3],
            RenderOpts::exact(),
        )
        .unwrap();
        let mut max = 0.0f64;
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            max = max.max((x - y).abs());
        }
        assert!(max < 1e-5, "yaw-180 symmetry broke: {max}");
    }
}
