//! Run configuration: flat `key = value` text files with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DdError, Result};

/// Every knob of the pipeline. Loss weights and schedule parameters follow
/// the published training setup; sizes are toy-scale defaults and all of
/// them are overridable from a config file.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    // -- joint objective --
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: f64,
    pub t_min: usize,
    pub t_max: usize,
    pub opacity_reg_weight: f64,
    pub sds_weight: f64,

    // -- optimizer --
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub ema_decay: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub checkpoint_every: usize,

    // -- geometry / rendering --
    pub gaussians_per_token: usize,
    pub render_size: usize,
    pub n_views: usize,
    pub camera_radius: f64,
    pub camera_fov_y: f64,

    // -- diffusion --
    pub ddim_steps: usize,
    pub timesteps: usize,

    // -- progressive decoding level weights --
    pub level_weights_mu: [f64; 3],
    pub level_weights_s: [f64; 3],
    pub level_weights_q: [f64; 3],
    pub level_weights_c: [f64; 2],
    pub level_weights_alpha: [f64; 2],

    // -- architecture widths (toy scale, all configurable) --
    pub token_dim: usize,
    pub attn_heads: usize,
    pub pe_channels: usize,
    pub pe_blocks: usize,
    pub pd_blocks: usize,
    pub image_patch: usize,
    pub image_encoder_blocks: usize,
    pub teacher_channels: usize,
    pub teacher_token_dim: usize,

    // -- teacher training --
    pub teacher_lr: f64,
    pub teacher_steps: usize,
    pub teacher_batch: usize,

    // -- ablation flags --
    pub use_pe: bool,
    pub use_progressive: bool,
    pub use_head_conditioning: bool,
    pub use_random_bgc: bool,
    pub use_iv: bool,
    pub use_es: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda1: 0.5,
            lambda2: 0.5,
            eta: 0.4,
            t_min: 20,
            t_max: 300,
            opacity_reg_weight: 0.01,
            sds_weight: 1.0,

            learning_rate: 1e-5,
            grad_clip: 5.0,
            ema_decay: 0.999,
            batch_size: 8,
            total_steps: 20_000,
            checkpoint_every: 500,

            gaussians_per_token: 32,
            render_size: 32,
            n_views: 4,
            camera_radius: 2.0,
            camera_fov_y: 60.0,

            ddim_steps: 50,
            timesteps: 1000,

            level_weights_mu: [0.15, 0.7, 0.15],
            level_weights_s: [0.15, 0.7, 0.15],
            level_weights_q: [0.15, 0.7, 0.15],
            level_weights_c: [0.2, 0.8],
            level_weights_alpha: [0.2, 0.8],

            token_dim: 256,
            attn_heads: 4,
            pe_channels: 64,
            pe_blocks: 2,
            pd_blocks: 3,
            image_patch: 4,
            image_encoder_blocks: 2,
            teacher_channels: 16,
            teacher_token_dim: 64,

            teacher_lr: 3e-4,
            teacher_steps: 4000,
            teacher_batch: 2,

            use_pe: true,
            use_progressive: true,
            use_head_conditioning: true,
            use_random_bgc: true,
            use_iv: true,
            use_es: true,
        }
    }
}

fn weights_sum_to_one(name: &str, w: &[f64]) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(DdError::Config(format!(
            "{name} must sum to 1 (got {sum:.8})"
        )));
    }
    if w.iter().any(|&x| x < 0.0) {
        return Err(DdError::Config(format!("{name} must be non-negative")));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        weights_sum_to_one("level_weights_mu", &self.level_weights_mu)?;
        weights_sum_to_one("level_weights_s", &self.level_weights_s)?;
        weights_sum_to_one("level_weights_q", &self.level_weights_q)?;
        weights_sum_to_one("level_weights_c", &self.level_weights_c)?;
        weights_sum_to_one("level_weights_alpha", &self.level_weights_alpha)?;
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(DdError::Config("lambda1/lambda2 must be >= 0".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(DdError::Config(format!("eta must be in (0,1], got {}", self.eta)));
        }
        if !(self.t_min > 0 && self.t_min < self.t_max && self.t_max < self.timesteps) {
            return Err(DdError::Config(format!(
                "need 0 < t_min < t_max < T, got t_min={} t_max={} T={}",
                self.t_min, self.t_max, self.timesteps
            )));
        }
        if self.render_size < 8 {
            return Err(DdError::Config("render_size must be >= 8".into()));
        }
        if !(self.camera_fov_y > 10.0 && self.camera_fov_y < 120.0) {
            return Err(DdError::Config("camera_fov_y must be in (10, 120)".into()));
        }
        if self.camera_radius <= 0.0 {
            return Err(DdError::Config("camera_radius must be > 0".into()));
        }
        if self.n_views == 0 || self.gaussians_per_token == 0 {
            return Err(DdError::Config("n_views and gaussians_per_token must be > 0".into()));
        }
        if self.token_dim % self.attn_heads != 0 {
            return Err(DdError::Config("token_dim must be divisible by attn_heads".into()));
        }
        if self.render_size % self.image_patch != 0 {
            return Err(DdError::Config("render_size must be divisible by image_patch".into()));
        }
        if !(self.use_es || self.use_iv) {
            return Err(DdError::Config(
                "at least one of use_es / use_iv must be enabled".into(),
            ));
        }
        if self.ddim_steps == 0 || self.timesteps % self.ddim_steps != 0 {
            return Err(DdError::Config(
                "ddim_steps must divide the training timestep count".into(),
            ));
        }
        Ok(())
    }

    /// Parse from flat `key = value` text. Unknown keys are rejected.
    pub fn from_str_cfg(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut map = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                DdError::Config(format!("line {}: expected `key = value`", ln + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        for (k, v) in map {
            cfg.set_field(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_cfg(&text)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    fn set_field(&mut self, key: &str, val: &str) -> Result<()> {
        fn f64v(key: &str, v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| DdError::Config(format!("{key}: bad float `{v}`")))
        }
        fn usizev(key: &str, v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| DdError::Config(format!("{key}: bad integer `{v}`")))
        }
        fn boolv(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(DdError::Config(format!("{key}: bad bool `{v}`"))),
            }
        }
        fn listv<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
            let items: Vec<f64> = v
                .trim_matches(|c| c == '[' || c == ']')
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| DdError::Config(format!("{key}: bad list `{v}`")))?;
            items
                .try_into()
                .map_err(|_| DdError::Config(format!("{key}: expected {N} entries")))
        }
        match key {
            "lambda1" => self.lambda1 = f64v(key, val)?,
            "lambda2" => self.lambda2 = f64v(key, val)?,
            "eta" => self.eta = f64v(key, val)?,
            "t_min" => self.t_min = usizev(key, val)?,
            "t_max" => self.t_max = usizev(key, val)?,
            "opacity_reg_weight" => self.opacity_reg_weight = f64v(key, val)?,
            "sds_weight" => self.sds_weight = f64v(key, val)?,
            "learning_rate" => self.learning_rate = f64v(key, val)?,
            "grad_clip" => self.grad_clip = f64v(key, val)?,
            "ema_decay" => self.ema_decay = f64v(key, val)?,
            "batch_size" => self.batch_size = usizev(key, val)?,
            "total_steps" => self.total_steps = usizev(key, val)?,
            "checkpoint_every" => self.checkpoint_every = usizev(key, val)?,
            "gaussians_per_token" => self.gaussians_per_token = usizev(key, val)?,
            "render_size" => self.render_size = usizev(key, val)?,
            "n_views" => self.n_views = usizev(key, val)?,
            "camera_radius" => self.camera_radius = f64v(key, val)?,
            "camera_fov_y" => self.camera_fov_y = f64v(key, val)?,
            "ddim_steps" => self.ddim_steps = usizev(key, val)?,
            "timesteps" => self.timesteps = usizev(key, val)?,
            "level_weights_mu" => self.level_weights_mu = listv(key, val)?,
            "level_weights_s" => self.level_weights_s = listv(key, val)?,
            "level_weights_q" => self.level_weights_q = listv(key, val)?,
            "level_weights_c" => self.level_weights_c = listv(key, val)?,
            "level_weights_alpha" => self.level_weights_alpha = listv(key, val)?,
            "token_dim" => self.token_dim = usizev(key, val)?,
            "attn_heads" => self.attn_heads = usizev(key, val)?,
            "pe_channels" => self.pe_channels = usizev(key, val)?,
            "pe_blocks" => self.pe_blocks = usizev(key, val)?,
            "pd_blocks" => self.pd_blocks = usizev(key, val)?,
            "image_patch" => self.image_patch = usizev(key, val)?,
            "image_encoder_blocks" => self.image_encoder_blocks = usizev(key, val)?,
            "teacher_channels" => self.teacher_channels = usizev(key, val)?,
            "teacher_token_dim" => self.teacher_token_dim = usizev(key, val)?,
            "teacher_lr" => self.teacher_lr = f64v(key, val)?,
            "teacher_steps" => self.teacher_steps = usizev(key, val)?,
            "teacher_batch" => self.teacher_batch = usizev(key, val)?,
            "use_pe" => self.use_pe = boolv(key, val)?,
            "use_progressive" => self.use_progressive = boolv(key, val)?,
            "use_head_conditioning" => self.use_head_conditioning = boolv(key, val)?,
            "use_random_bgc" => self.use_random_bgc = boolv(key, val)?,
            "use_iv" => self.use_iv = boolv(key, val)?,
            "use_es" => self.use_es = boolv(key, val)?,
            _ => return Err(DdError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("lambda1", self.lambda1.to_string());
        kv("lambda2", self.lambda2.to_string());
        kv("eta", self.eta.to_string());
        kv("t_min", self.t_min.to_string());
        kv("t_max", self.t_max.to_string());
        kv("opacity_reg_weight", self.opacity_reg_weight.to_string());
        kv("sds_weight", self.sds_weight.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("grad_clip", self.grad_clip.to_string());
        kv("ema_decay", self.ema_decay.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("gaussians_per_token", self.gaussians_per_token.to_string());
        kv("render_size", self.render_size.to_string());
        kv("n_views", self.n_views.to_string());
        kv("camera_radius", self.camera_radius.to_string());
        kv("camera_fov_y", self.camera_fov_y.to_string());
        kv("ddim_steps", self.ddim_steps.to_string());
        kv("timesteps", self.timesteps.to_string());
        let lw = |w: &[f64]| {
            let items: Vec<String> = w.iter().map(|x| x.to_string()).collect();
            format!("[{}]", items.join(", "))
        };
        kv("level_weights_mu", lw(&self.level_weights_mu));
        kv("level_weights_s", lw(&self.level_weights_s));
        kv("level_weights_q", lw(&self.level_weights_q));
        kv("level_weights_c", lw(&self.level_weights_c));
        kv("level_weights_alpha", lw(&self.level_weights_alpha));
        kv("token_dim", self.token_dim.to_string());
        kv("attn_heads", self.attn_heads.to_string());
        kv("pe_channels", self.pe_channels.to_string());
        kv("pe_blocks", self.pe_blocks.to_string());
        kv("pd_blocks", self.pd_blocks.to_string());
        kv("image_patch", self.image_patch.to_string());
        kv("image_encoder_blocks", self.image_encoder_blocks.to_string());
        kv("teacher_channels", self.teacher_channels.to_string());
        kv("teacher_token_dim", self.teacher_token_dim.to_string());
        kv("teacher_lr", self.teacher_lr.to_string());
        kv("teacher_steps", self.teacher_steps.to_string());
        kv("teacher_batch", self.teacher_batch.to_string());
        kv("use_pe", self.use_pe.to_string());
        kv("use_progressive", self.use_progressive.to_string());
        kv("use_head_conditioning", self.use_head_conditioning.to_string());
        kv("use_random_bgc", self.use_random_bgc.to_string());
        kv("use_iv", self.use_iv.to_string());
        kv("use_es", self.use_es.to_string());
        out
    }

    /// Per-view token counts implied by the architecture.
    pub fn image_tokens(&self) -> usize {
        let g = self.render_size / self.image_patch;
        g * g + 1 // patch grid + one learned global token
    }

    pub fn pattern_tokens(&self) -> usize {
        // PE runs at a stride-4 internal resolution; its output is patchified
        // at stride 8 in input-pixel units (stride 2 on the feature map).
        let g = self.render_size / 8;
        g * g * self.n_views
    }

    /// Total Gaussians emitted by the generator.
    pub fn total_gaussians(&self) -> usize {
        (self.pattern_tokens() + self.image_tokens()) * self.gaussians_per_token
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_text();
        let back = RunConfig::from_str_cfg(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn default_token_counts() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.image_tokens(), 65);
        assert_eq!(cfg.pattern_tokens(), 64);
        assert_eq!(cfg.total_gaussians(), 129 * 32);
    }

    #[test]
    fn rejects_bad_level_weights() {
        let mut cfg = RunConfig::default();
        cfg.level_weights_mu = [0.2, 0.7, 0.2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unknown_key() {
        assert!(RunConfig::from_str_cfg("nonsense = 1").is_err());
    }

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = RunConfig::from_str_cfg(
            "# comment\nlambda1 = 0.25 # inline\nuse_iv = false\nlevel_weights_c = [0.5, 0.5]\n",
        )
        .unwrap();
        assert_eq!(cfg.lambda1, 0.25);
        assert!(!cfg.use_iv);
        assert_eq!(cfg.level_weights_c, [0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_timestep_range() {
        let mut cfg = RunConfig::default();
        cfg.t_min = 400;
        cfg.t_max = 300;
        assert!(cfg.validate().is_err());
    }
}
