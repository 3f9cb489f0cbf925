//! Quadruple persistence.
//!
//! A store is a directory with `manifest.json` plus one binary record per
//! sample. Record layout (`q<seed-hex>.dd3q`, all little-endian):
//!
//! ```text
//! magic        "DD3Q"
//! version      u32 (1)
//! seed         u64
//! ddim_steps   u32
//! teacher_hash 32 bytes (SHA-256 of the teacher checkpoint)
//! 4 shape-tagged blocks, each: kind u32, shape header, f32 data
//!   kind 0: N  [n, 3, h, w]   initial Gaussian noise
//!   kind 1: C  [n, 4]         cameras as (yaw, pitch, radius, fov_y) rows
//!   kind 2: II [h, w, 3]      input view (row-major HWC)
//!   kind 3: OI [n, h, w, 3]   teacher ODE output views (HWC per view)
//! ```
//!
//! Records are keyed by seed; collection is resumable and order-independent.

use std::path::{Path, PathBuf};

use crate::camera::{orbit_camera, Camera};
use crate::error::{DdError, Result};
use crate::image_plane::ImagePlane;
use crate::io::{atomic_write, BinReader, BinWriter};
use crate::tensor::Tensor;

pub const RECORD_MAGIC: &[u8; 4] = b"DD3Q";
pub const RECORD_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub teacher_hash: [u8; 32],
    pub ddim_steps: u32,
}

/// One training record `{N, C, II, OI}`.
#[derive(Clone, Debug)]
pub struct Quadruple {
    /// `[n, 3, h, w]` unit-normal draw that seeded the ODE.
    pub noise: Tensor<f32>,
    /// The `n` cameras the teacher rendered along.
    pub cameras: Vec<Camera<f32>>,
    /// Input view (its camera stays hidden).
    pub ii: ImagePlane<f32>,
    /// Teacher ODE outputs, one per camera.
    pub oi: Vec<ImagePlane<f32>>,
    pub provenance: Provenance,
}

impl Quadruple {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = BinWriter::new(Vec::new());
        w.magic(RECORD_MAGIC)?;
        w.u32(RECORD_VERSION)?;
        w.u64(self.provenance.seed)?;
        w.u32(self.provenance.ddim_steps)?;
        w.bytes(&self.provenance.teacher_hash)?;
        // N
        w.u32(0)?;
        w.shape(self.noise.shape())?;
        w.f32_slice(self.noise.data())?;
        // C
        w.u32(1)?;
        w.shape(&[self.cameras.len(), 4])?;
        for cam in &self.cameras {
            w.f32_slice(&[cam.yaw_deg(), cam.pitch_deg(), cam.radius(), cam.fov_y_deg()])?;
        }
        // II
        w.u32(2)?;
        w.shape(&[self.ii.height(), self.ii.width(), 3])?;
        w.f32_slice(self.ii.pixels())?;
        // OI
        let (h, wd) = (self.ii.height(), self.ii.width());
        w.u32(3)?;
        w.shape(&[self.oi.len(), h, wd, 3])?;
        for img in &self.oi {
            w.f32_slice(img.pixels())?;
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::new(bytes);
        r.expect_magic(RECORD_MAGIC)?;
        let version = r.u32()?;
        if version != RECORD_VERSION {
            return Err(DdError::Format(format!("unsupported record version {version}")));
        }
        let seed = r.u64()?;
        let ddim_steps = r.u32()?;
        let teacher_hash: [u8; 32] = r.byte_array()?;

        let expect_block = |r: &mut BinReader<&[u8]>, kind: u32| -> Result<Vec<usize>> {
            let k = r.u32()?;
            if k != kind {
                return Err(DdError::Format(format!("expected block {kind}, found {k}")));
            }
            r.shape()
        };

        let shape_n = expect_block(&mut r, 0)?;
        if shape_n.len() != 4 || shape_n[1] != 3 {
            return Err(DdError::Format(format!("bad N shape {shape_n:?}")));
        }
        let noise = Tensor::new(&shape_n, r.f32_vec(shape_n.iter().product())?);
        let (n, h, w) = (shape_n[0], shape_n[2], shape_n[3]);

        let shape_c = expect_block(&mut r, 1)?;
        if shape_c != [n, 4] {
            return Err(DdError::Format(format!("bad C shape {shape_c:?}")));
        }
        let mut cameras = Vec::with_capacity(n);
        for _ in 0..n {
            let row = r.f32_vec(4)?;
            cameras.push(orbit_camera(row[0], row[1], row[2], row[3], w, h)?);
        }

        let shape_ii = expect_block(&mut r, 2)?;
        if shape_ii != [h, w, 3] {
            return Err(DdError::Format(format!("bad II shape {shape_ii:?}")));
        }
        let ii = ImagePlane::new(w, h, r.f32_vec(h * w * 3)?, None)?;

        let shape_oi = expect_block(&mut r, 3)?;
        if shape_oi != [n, h, w, 3] {
            return Err(DdError::Format(format!("bad OI shape {shape_oi:?}")));
        }
        let mut oi = Vec::with_capacity(n);
        for _ in 0..n {
            oi.push(ImagePlane::new(w, h, r.f32_vec(h * w * 3)?, None)?);
        }

        Ok(Quadruple {
            noise,
            cameras,
            ii,
            oi,
            provenance: Provenance { seed, teacher_hash, ddim_steps },
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StoreManifest {
    pub teacher_hash: String,
    pub schedule_timesteps: usize,
    pub schedule_hash: String,
    pub n_views: usize,
    pub height: usize,
    pub width: usize,
    pub ddim_steps: usize,
    /// Seeds present at the last manifest update; the directory scan is the
    /// source of truth (per-record files allow concurrent appends).
    pub records: Vec<u64>,
}

pub struct QuadrupleStore {
    dir: PathBuf,
    pub manifest: StoreManifest,
}

impl QuadrupleStore {
    pub fn create(dir: &Path, manifest: StoreManifest) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let store = QuadrupleStore { dir: dir.to_path_buf(), manifest };
        store.write_manifest()?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(DdError::Missing(format!("no manifest at {}", path.display())));
        }
        let manifest: StoreManifest = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| DdError::Format(format!("manifest: {e}")))?;
        Ok(QuadrupleStore { dir: dir.to_path_buf(), manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record_path(&self, seed: u64) -> PathBuf {
        self.dir.join(format!("q{seed:016x}.dd3q"))
    }

    pub fn contains(&self, seed: u64) -> bool {
        self.record_path(seed).exists()
    }

    pub fn write_record(&self, quad: &Quadruple) -> Result<()> {
        atomic_write(&self.record_path(quad.provenance.seed), &quad.to_bytes()?)
    }

    pub fn read_record(&self, seed: u64) -> Result<Quadruple> {
        let path = self.record_path(seed);
        if !path.exists() {
            return Err(DdError::Missing(format!("record {seed} not in store")));
        }
        Quadruple::from_bytes(&std::fs::read(path)?)
    }

    /// Sorted seeds found on disk.
    pub fn seeds(&self) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(hex) = name.strip_prefix('q').and_then(|s| s.strip_suffix(".dd3q")) {
                if let Ok(seed) = u64::from_str_radix(hex, 16) {
                    out.push(seed);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn len(&self) -> Result<usize> {
        Ok(self.seeds()?.len())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.seeds()?.is_empty())
    }

    /// Refresh `manifest.records` from the directory and write atomically.
    pub fn finalize_manifest(&mut self) -> Result<()> {
        self.manifest.records = self.seeds()?;
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| DdError::Format(format!("manifest encode: {e}")))?;
        atomic_write(&self.dir.join("manifest.json"), json.as_bytes())
    }
}
