//! Dataset directories: `manifest.json` plus one straight-alpha RGBA8 PNG per
//! camera.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volsplat_core::shading::LightConfig;
use volsplat_core::{Camera, RgbaImage};

use crate::error::{DvrError, Result};
use crate::raymarch::{render_view, MarchSettings, ShadingCoefficients};
use crate::tf::{TfSet, TransferFunction};
use crate::volume::{Volume, VolumeSpec};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub volume: VolumeSpec,
    pub tfs: Vec<TransferFunction>,
    pub light: LightConfig,
    pub shading: ShadingCoefficients,
    #[serde(default)]
    pub step: Option<f64>,
    /// Axis-aligned bounds of the volume, `[min, max]`.
    pub bbox: [[f64; 3]; 2],
    pub cameras: Vec<Camera>,
}

impl Manifest {
    pub fn march_settings(&self) -> MarchSettings {
        MarchSettings {
            step: self.step,
            shading: self.shading,
            light: self.light,
        }
    }

    pub fn tf_set(&self) -> TfSet {
        TfSet::new(self.tfs.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(DvrError::Dataset(format!("unsupported manifest version {}", self.version)));
        }
        for tf in &self.tfs {
            tf.validate()?;
        }
        self.light.validate().map_err(DvrError::Dataset)?;
        for (i, c) in self.cameras.iter().enumerate() {
            c.validate().map_err(|e| DvrError::Dataset(format!("camera {i}: {e}")))?;
            if c.file.is_none() {
                return Err(DvrError::Dataset(format!("camera {i} has no image file")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&std::fs::read(path)?)?;
        m.validate()?;
        Ok(m)
    }
}

/// Manifest plus ground-truth images, one per camera in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub images: Vec<RgbaImage>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.manifest.cameras
    }

    /// Writes the manifest and all images into `dir` (created if missing).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (cam, img) in self.manifest.cameras.iter().zip(&self.images) {
            let file = cam.file.as_deref().expect("validated camera file");
            img.save_png(dir.join(file))?;
        }
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        std::fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
        let mut images = Vec::with_capacity(manifest.cameras.len());
        for cam in &manifest.cameras {
            let path: PathBuf = dir.join(cam.file.as_deref().unwrap_or_default());
            let img = RgbaImage::load_png(&path)?;
            if (img.width, img.height) != (cam.width, cam.height) {
                return Err(DvrError::Dataset(format!(
                    "{} is {}x{}, camera expects {}x{}",
                    path.display(),
                    img.width,
                    img.height,
                    cam.width,
                    cam.height
                )));
            }
            images.push(img);
        }
        Ok(Dataset { manifest, images })
    }
}

/// Renders every camera with the oracle. Images are quantized to 8 bits so
/// the in-memory dataset equals what a reload from disk returns.
pub fn render_dataset(
    volume: &Volume,
    spec: VolumeSpec,
    tfs: &TfSet,
    cameras: Vec<Camera>,
    settings: &MarchSettings,
) -> Result<Dataset> {
    if cameras.is_empty() {
        return Err(DvrError::EmptyInput("camera rig"));
    }
    let (lo, hi) = volume.bbox();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        volume: spec,
        tfs: tfs.tfs.clone(),
        light: settings.light,
        shading: settings.shading,
        step: settings.step,
        bbox: [lo, hi],
        cameras,
    };
    manifest.validate()?;
    let images = manifest
        .cameras
        .iter()
        .map(|c| render_view(volume, tfs, c, settings).quantized())
        .collect();
    Ok(Dataset { manifest, images })
}

/// Renders and writes a dataset directory.
pub fn generate_dataset(
    volume: &Volume,
    spec: VolumeSpec,
    tfs: &TfSet,
    cameras: Vec<Camera>,
    settings: &MarchSettings,
    out_dir: impl AsRef<Path>,
) -> Result<Dataset> {
    let ds = render_dataset(volume, spec, tfs, cameras, settings)?;
    ds.save(out_dir)?;
    Ok(ds)
}
