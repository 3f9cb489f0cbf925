//! Data plumbing: procedural scenes, multi-view rendering, quadruple
//! collection via the teacher ODE, RGBA ingestion, persistent storage.

mod collect;
mod rgba;
mod scene;
mod store;

pub use collect::{
    collect_quadruples, ring_cameras, simulate_quadruple, CollectSource, CollectStats,
};
pub use rgba::ingest_rgba;
pub use scene::{
    make_scene, primitive_gaussians, scene_hash, PrimitiveKind, PrimitiveSpec, SceneSpec,
    MAX_SCENE_GAUSSIANS,
};
pub use store::{Provenance, Quadruple, QuadrupleStore, StoreManifest, RECORD_MAGIC};

use crate::camera::Camera;
use crate::error::Result;
use crate::gaussians::GaussianSet;
use crate::image_plane::ImagePlane;
use crate::renderer::{render, RenderOpts};
use crate::scalar::Scalar;

/// Render a scene from several cameras against white (the teacher-data
/// convention).
pub fn render_views<T: Scalar>(
    g: &GaussianSet<T>,
    cams: &[Camera<T>],
) -> Result<Vec<ImagePlane<T>>> {
    cams.iter()
        .map(|cam| render(g, cam, [T::one(); 3], RenderOpts::fast()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::orbit_camera;
    use crate::config::RunConfig;
    use crate::evalkit::psnr;
    use crate::rng::seeded_rng;
    use rand::RngCore;

    #[test]
    fn render_views_preserves_count_and_white_background() {
        let mut rng = seeded_rng(3, "rv");
        let (_, scene) = make_scene::<f32, _>(&mut rng).unwrap();
        let cams: Vec<_> = (0..3)
            .map(|i| orbit_camera(i as f32 * 120.0, 0.0, 2.0, 60.0, 16, 16).unwrap())
            .collect();
        let views = render_views(&scene, &cams).unwrap();
        assert_eq!(views.len(), 3);
        // where nothing was hit (alpha == 0) the pixel is exactly white
        for v in &views {
            let alpha = v.alpha().unwrap();
            for (p, &a) in alpha.iter().enumerate() {
                if a == 0.0 {
                    assert_eq!(v.pixels()[p * 3], 1.0);
                }
            }
        }
    }

    #[test]
    fn gt_scene_matches_itself_at_cap() {
        let mut rng = seeded_rng(4, "rv2");
        let (_, scene) = make_scene::<f32, _>(&mut rng).unwrap();
        let cam = orbit_camera(10.0f32, 0.0, 2.0, 60.0, 16, 16).unwrap();
        let a = render(&scene, &cam, [1.0; 3], RenderOpts::fast()).unwrap();
        let b = render(&scene, &cam, [1.0; 3], RenderOpts::fast()).unwrap();
        assert_eq!(psnr(&a, &b), 100.0);
    }

    #[test]
    fn quadruple_noise_passes_normality_check() {
        // pooled N entries over enough records: mean ±0.05, var 1 ±0.05
        let mut cfg = RunConfig::default();
        cfg.render_size = 16;
        cfg.n_views = 4;
        let mut draws = Vec::new();
        for i in 0..40u64 {
            let mut rng = crate::rng::seeded_rng_indexed(1000 + i, "quadruple", 0);
            // skip the draws the collector takes before the noise block
            let _scene_pick = rng.next_u64();
            let _yaw: f32 = crate::rng::draw_range(&mut rng, -180.0, 180.0);
            let _pitch: f32 = crate::rng::draw_range(&mut rng, -5.0, 5.0);
            let mut noise = vec![0.0f32; cfg.n_views * 3 * cfg.render_size * cfg.render_size];
            crate::rng::fill_normal(&mut rng, &mut noise);
            draws.extend(noise);
        }
        assert!(draws.len() >= 100_000, "{}", draws.len());
        let n = draws.len() as f64;
        let mean: f64 = draws.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = draws.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
