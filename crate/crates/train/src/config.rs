use serde::{Deserialize, Serialize};
use volsplat_core::losses::LossWeights;
use volsplat_core::raster::ExecMode;

use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    /// Position rate at the first and last iteration, times the scene extent;
    /// decays exponentially in between.
    pub position_init: f64,
    pub position_final: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    /// On log scale.
    pub scale: f64,
    pub rotation: f64,
    pub normal: f64,
    /// Offset color and shading terms.
    pub shading: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            opacity: 0.05,
            scale: 5e-3,
            rotation: 1e-3,
            normal: 0.01,
            shading: 0.01,
        }
    }
}

impl LearningRates {
    pub fn position(&self, extent: f64, iter: usize, iters: usize) -> f64 {
        let t = if iters <= 1 { 0.0 } else { (iter as f64 / (iters - 1) as f64).clamp(0.0, 1.0) };
        let log = (1.0 - t) * self.position_init.ln() + t * self.position_final.ln();
        log.exp() * extent
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub lr: LearningRates,
    pub weights: LossWeights,
    pub sh_degree: usize,
    /// Iterations per SH degree increase in stage 1.
    pub sh_degree_interval: usize,
    pub densify_interval: usize,
    pub densify_from: usize,
    /// Last densification iteration; `None` means half the stage length.
    pub densify_until: Option<usize>,
    pub densify_grad_threshold: f64,
    pub prune_opacity_threshold: f64,
    /// Clone (rather than split) when the largest scale is below this
    /// fraction of the scene extent.
    pub percent_dense: f64,
    pub max_primitives: usize,
    pub init_count: usize,
    pub init_opacity: f64,
    pub silhouette_carving: bool,
    /// Iterations between held-out PSNR log entries (0 disables them).
    pub log_interval: usize,
    pub seed: u64,
    pub sequential: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1_iters: 30_000,
            stage2_iters: 10_000,
            lr: LearningRates::default(),
            weights: LossWeights::default(),
            sh_degree: 3,
            sh_degree_interval: 1000,
            densify_interval: 100,
            densify_from: 500,
            densify_until: None,
            densify_grad_threshold: 2e-4,
            prune_opacity_threshold: 0.005,
            percent_dense: 0.01,
            max_primitives: 100_000,
            init_count: 5000,
            init_opacity: 0.1,
            silhouette_carving: false,
            log_interval: 100,
            seed: 0,
            sequential: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.densify_grad_threshold > 0.0) || !(self.prune_opacity_threshold > 0.0) {
            return bad("thresholds must be > 0");
        }
        if !(self.percent_dense > 0.0) {
            return bad("percent_dense must be > 0");
        }
        if self.densify_interval == 0 || self.sh_degree_interval == 0 {
            return bad("intervals must be > 0");
        }
        if self.sh_degree > volsplat_core::sh::MAX_SH_DEGREE {
            return bad("sh_degree must be <= 3");
        }
        if self.init_count == 0 || self.init_count > self.max_primitives {
            return bad("init_count must be in 1..=max_primitives");
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return bad("init_opacity must be in (0, 1)");
        }
        let lr = &self.lr;
        let rates = [
            lr.position_init,
            lr.position_final,
            lr.sh_dc,
            lr.sh_rest,
            lr.opacity,
            lr.scale,
            lr.rotation,
            lr.normal,
            lr.shading,
        ];
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || !(lr.position_init > 0.0 && lr.position_final > 0.0) {
            return bad("learning rates must be finite and nonnegative (positive for positions)");
        }
        Ok(())
    }

    pub fn exec(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }

    pub fn densify_until(&self, iters: usize) -> usize {
        self.densify_until.unwrap_or(iters / 2)
    }
}
