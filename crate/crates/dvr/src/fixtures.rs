//! Desk-scale scenes shared by tests, the CLI and the service: a nested-shell
//! volume with a semi-transparent outer shell and an opaque-ish inner core,
//! each selected by its own basic TF.

use volsplat_core::shading::LightConfig;

use crate::raymarch::{MarchSettings, ShadingCoefficients};
use crate::tf::{TfSet, TransferFunction};
use crate::volume::{Volume, VolumeSpec};

/// Camera distance from the origin and vertical field of view that frame the
/// `[-1, 1]^3` volume.
pub const CAMERA_RADIUS: f64 = 4.0;
pub const CAMERA_FOV_Y: f64 = 0.6;

pub fn shells_spec(dims: usize) -> VolumeSpec {
    VolumeSpec::Shells { dims, wobble: 0.08 }
}

pub fn shells_volume(dims: usize) -> Volume {
    shells_spec(dims).build().expect("valid generator")
}

/// Outer shell around r = 0.7.
pub fn outer_tf() -> TransferFunction {
    TransferFunction::bump("outer", 0.2, 0.4, [0.25, 0.55, 0.95], 0.06).expect("valid tf")
}

/// Inner core around r = 0.35.
pub fn inner_tf() -> TransferFunction {
    TransferFunction::bump("inner", 0.55, 0.75, [0.95, 0.55, 0.2], 0.9).expect("valid tf")
}

pub fn combined_tfs() -> TfSet {
    TfSet::new(vec![outer_tf(), inner_tf()])
}

/// Lighting chosen so shaded colors stay within `[0, 1]`.
pub fn shading() -> ShadingCoefficients {
    ShadingCoefficients {
        ambient: 0.35,
        diffuse: 0.55,
        specular: 0.25,
        shininess: 16.0,
    }
}

pub fn march_settings(light: LightConfig) -> MarchSettings {
    MarchSettings {
        step: None,
        shading: shading(),
        light,
    }
}
