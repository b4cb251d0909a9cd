//! Training views and the per-scene palette.

use volsplat_core::shading::LightConfig;
use volsplat_core::{Camera, RgbaImage};
use volsplat_dvr::Dataset;
use volsplat_scene::ModelMeta;

use crate::error::{Result, TrainError};

#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    /// Premultiplied ground truth.
    pub image: RgbaImage,
}

#[derive(Clone, Debug)]
pub struct TrainData {
    pub views: Vec<View>,
    /// Held-out views for the training log.
    pub eval: Vec<View>,
    pub bbox: [[f64; 3]; 2],
    pub light: LightConfig,
    pub name: String,
    pub tf: serde_json::Value,
}

fn views_of(ds: &Dataset) -> Vec<View> {
    ds.cameras()
        .iter()
        .zip(&ds.images)
        .map(|(c, i)| View {
            camera: c.clone(),
            image: i.clone(),
        })
        .collect()
}

impl TrainData {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let tfs = &ds.manifest.tfs;
        let name = tfs.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join("+");
        TrainData {
            views: views_of(ds),
            eval: Vec::new(),
            bbox: ds.manifest.bbox,
            light: ds.manifest.light,
            name,
            tf: serde_json::to_value(tfs).unwrap_or_default(),
        }
    }

    pub fn with_eval(mut self, ds: &Dataset) -> Self {
        self.eval = views_of(ds);
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.views.len() < 2 {
            return Err(TrainError::DatasetEmpty);
        }
        for v in self.views.iter().chain(&self.eval) {
            if (v.image.width, v.image.height) != (v.camera.width, v.camera.height) || v.image.pixel_count() == 0 {
                return Err(TrainError::DatasetEmpty);
            }
        }
        Ok(())
    }

    /// Half the bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        let [lo, hi] = self.bbox;
        0.5 * (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            name: self.name.clone(),
            tf: self.tf.clone(),
            light: Some(self.light),
            bbox: Some(self.bbox),
            info: serde_json::Value::Null,
        }
    }

    pub fn palette(&self) -> [f32; 3] {
        foreground_palette(self.views.iter().map(|v| &v.image))
    }
}

/// Alpha-weighted mean straight color over all pixels: sum of premultiplied
/// rgb over sum of alpha. Mid-gray when every pixel is transparent.
pub fn foreground_palette<'a>(images: impl IntoIterator<Item = &'a RgbaImage>) -> [f32; 3] {
    let mut sum = [0.0f64; 3];
    let mut weight = 0.0f64;
    for img in images {
        for p in img.data.chunks_exact(4) {
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
            weight += p[3] as f64;
        }
    }
    if weight <= 0.0 {
        return [0.5; 3];
    }
    sum.map(|s| (s / weight).clamp(0.0, 1.0) as f32)
}
