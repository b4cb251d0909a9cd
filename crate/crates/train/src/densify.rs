//! Adaptive density control: clone small primitives and split large ones
//! where the accumulated gradient is high, prune transparent ones.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use volsplat_core::gaussian::{normalize_quat, quat_to_rotation};
use volsplat_core::math::sigmoid;

use crate::config::TrainConfig;
use crate::splats::Splats;

/// Children of a split are this much smaller per axis.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

/// Mean gradient magnitude per primitive since the last densification.
#[derive(Clone, Debug, Default)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        GradStats {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn add(&mut self, i: usize, magnitude: f64) {
        self.sum[i] += magnitude;
        self.count[i] += 1;
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub count: usize,
}

/// One densify-and-prune pass. `extent` is the scene half-diagonal. New
/// primitives are capped at `cfg.max_primitives`, highest gradients first.
pub fn densify_and_prune(
    splats: &mut Splats,
    stats: &GradStats,
    cfg: &TrainConfig,
    extent: f64,
    rng: &mut ChaCha8Rng,
) -> DensifyReport {
    let n = splats.len();
    let mut candidates: Vec<usize> = (0..n).filter(|&i| stats.mean(i) >= cfg.densify_grad_threshold).collect();
    candidates.sort_by(|&a, &b| stats.mean(b).total_cmp(&stats.mean(a)).then(a.cmp(&b)));
    candidates.truncate(cfg.max_primitives.saturating_sub(n));
    candidates.sort_unstable();

    let mut report = DensifyReport::default();
    let mut keep = vec![true; n];
    let limit = (cfg.percent_dense * extent).ln() as f32;
    let shrink = SPLIT_SCALE_DIVISOR.ln() as f32;
    for &i in &candidates {
        let ls = splats.log_scale.value[i];
        let max_log = ls[0].max(ls[1]).max(ls[2]);
        let mu = splats.mu.value[i];
        if max_log <= limit {
            splats.push_copy(i, mu, ls);
            report.cloned += 1;
        } else {
            let r = quat_to_rotation(normalize_quat(splats.rotation.value[i]).map(|v| v as f64));
            let s = ls.map(|v| (v as f64).exp());
            let child_scale = ls.map(|v| v - shrink);
            for _ in 0..2 {
                let z: [f64; 3] = [0; 3].map(|_| StandardNormal.sample(rng));
                let local = [s[0] * z[0], s[1] * z[1], s[2] * z[2]];
                let p = [0, 1, 2].map(|a| mu[a] + (0..3).map(|b| r[a][b] * local[b]).sum::<f64>() as f32);
                splats.push_copy(i, p, child_scale);
            }
            keep[i] = false;
            report.split += 1;
        }
    }
    keep.resize(splats.len(), true);
    for (i, k) in keep.iter_mut().enumerate() {
        if *k && (sigmoid(splats.opacity.value[i][0] as f64)) < cfg.prune_opacity_threshold {
            *k = false;
            report.pruned += 1;
        }
    }
    if keep.iter().any(|k| !k) {
        splats.retain(&keep);
    }
    report.count = splats.len();
    report
}
