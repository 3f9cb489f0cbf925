//! Quadruple collection: simulate the teacher's deterministic ODE per
//! record. Embarrassingly parallel and resumable; records are keyed by seed
//! so the store contents do not depend on worker count or ordering.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::camera::{orbit_camera, plucker_embed, Camera};
use crate::config::RunConfig;
use crate::error::{DdError, Result};
use crate::gaussians::GaussianSet;
use crate::image_plane::ImagePlane;
use crate::nn::ParamStore;
use crate::renderer::{render, RenderOpts};
use crate::rng::{fill_normal, seeded_rng_indexed};
use crate::teacher::{sample_ode, NoiseSchedule, TeacherModel, TeacherSampler};
use crate::tensor::Tensor;

use super::store::{Provenance, Quadruple, QuadrupleStore};
use rand::RngCore;

/// Where input views come from: procedural GT scenes (rendered from a hidden
/// camera) or pre-ingested RGBA images.
pub enum CollectSource {
    Scenes(Vec<GaussianSet<f32>>),
    Images(Vec<ImagePlane<f32>>),
}

pub struct CollectStats {
    pub written: usize,
    pub skipped_existing: usize,
    pub failed_seeds: Vec<u64>,
}

/// The fixed ring of `n` teacher cameras (yaw `k·360/n`, pitch 0).
pub fn ring_cameras(cfg: &RunConfig) -> Result<Vec<Camera<f32>>> {
    (0..cfg.n_views)
        .map(|v| {
            orbit_camera(
                (v as f64 * 360.0 / cfg.n_views as f64) as f32,
                0.0,
                cfg.camera_radius as f32,
                cfg.camera_fov_y as f32,
                cfg.render_size,
                cfg.render_size,
            )
        })
        .collect()
}

fn ring_plucker(cams: &[Camera<f32>], cfg: &RunConfig) -> Tensor<f32> {
    let hw = cfg.render_size;
    let mut data = Vec::with_capacity(cams.len() * 6 * hw * hw);
    for cam in cams {
        data.extend_from_slice(plucker_embed(cam).data());
    }
    Tensor::new(&[cams.len(), 6, hw, hw], data)
}

/// Produce one quadruple for `seed`. Pure function of
/// `(seed, source, teacher weights, cfg)`.
pub fn simulate_quadruple(
    seed: u64,
    source: &CollectSource,
    model: &TeacherModel,
    store_params: &ParamStore<f32>,
    schedule: &NoiseSchedule<f32>,
    teacher_hash: [u8; 32],
    cfg: &RunConfig,
) -> Result<Quadruple> {
    let cams = ring_cameras(cfg)?;
    let plucker = ring_plucker(&cams, cfg);
    let hw = cfg.render_size;

    let mut rng = seeded_rng_indexed(seed, "quadruple", 0);
    // input view: hidden camera over a GT scene, or an ingested image
    let ii = match source {
        CollectSource::Scenes(scenes) => {
            if scenes.is_empty() {
                return Err(DdError::Invariant("no scenes to collect from".into()));
            }
            let scene = &scenes[(rng.next_u64() as usize) % scenes.len()];
            let yaw: f32 = crate::rng::draw_range(&mut rng, -180.0, 180.0);
            let pitch: f32 = crate::rng::draw_range(&mut rng, -5.0, 5.0);
            let hidden = orbit_camera(
                yaw,
                pitch,
                cfg.camera_radius as f32,
                cfg.camera_fov_y as f32,
                hw,
                hw,
            )?;
            render(scene, &hidden, [1.0; 3], RenderOpts::fast())?
        }
        CollectSource::Images(images) => {
            if images.is_empty() {
                return Err(DdError::Invariant("no images to collect from".into()));
            }
            images[(rng.next_u64() as usize) % images.len()].clone()
        }
    };

    let mut noise = vec![0.0f32; cfg.n_views * 3 * hw * hw];
    fill_normal(&mut rng, &mut noise);
    let noise = Tensor::new(&[cfg.n_views, 3, hw, hw], noise);

    let sampler = TeacherSampler {
        model,
        store: store_params,
        plucker,
        ii: ii.to_chw().reshaped(&[1, 3, hw, hw]),
        views: cfg.n_views,
    };
    let sample = sample_ode(&sampler, &noise, schedule, cfg.ddim_steps)?;

    // clip to [0,1] and split views
    let mut oi = Vec::with_capacity(cfg.n_views);
    let per = 3 * hw * hw;
    for v in 0..cfg.n_views {
        let view = Tensor::new(
            &[3, hw, hw],
            sample.data()[v * per..(v + 1) * per]
                .iter()
                .map(|&x| x.clamp(0.0, 1.0))
                .collect(),
        );
        oi.push(ImagePlane::from_chw(&view)?);
    }

    Ok(Quadruple {
        noise,
        cameras: cams,
        ii,
        oi,
        provenance: Provenance { seed, teacher_hash, ddim_steps: cfg.ddim_steps as u32 },
    })
}

/// Collect `count` records into `store`, skipping seeds already present.
/// `workers` threads pull record indices from a shared cursor; results are
/// identical for any worker count.
#[allow(clippy::too_many_arguments)]
pub fn collect_quadruples(
    store: &mut QuadrupleStore,
    source: &CollectSource,
    model: &TeacherModel,
    store_params: &ParamStore<f32>,
    schedule: &NoiseSchedule<f32>,
    teacher_hash: [u8; 32],
    cfg: &RunConfig,
    base_seed: u64,
    count: usize,
    workers: usize,
) -> Result<CollectStats> {
    let seeds: Vec<u64> = (0..count as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let todo: Vec<u64> = seeds.iter().copied().filter(|&s| !store.contains(s)).collect();
    let skipped_existing = seeds.len() - todo.len();

    let cursor = AtomicUsize::new(0);
    let failures: Mutex<Vec<u64>> = Mutex::new(Vec::new());
    let written = AtomicUsize::new(0);
    let store_ref: &QuadrupleStore = store;

    let workers = workers.max(1).min(todo.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= todo.len() {
                    break;
                }
                let seed = todo[i];
                match simulate_quadruple(
                    seed,
                    source,
                    model,
                    store_params,
                    schedule,
                    teacher_hash,
                    cfg,
                ) {
                    Ok(quad) => {
                        if store_ref.write_record(&quad).is_ok() {
                            written.fetch_add(1, Ordering::Relaxed);
                        } else {
                            failures.lock().unwrap().push(seed);
                        }
                    }
                    Err(_) => failures.lock().unwrap().push(seed),
                }
            });
        }
    });

    store.finalize_manifest()?;
    let mut failed_seeds = failures.into_inner().unwrap();
    failed_seeds.sort_unstable();
    Ok(CollectStats {
        written: written.into_inner(),
        skipped_existing,
        failed_seeds,
    })
}
