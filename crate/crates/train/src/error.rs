use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset needs at least 2 views with images")]
    DatasetEmpty,
    #[error("loss diverged (non-finite) at iteration {iteration}")]
    DivergedLoss { iteration: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] volsplat_core::CoreError),
    #[error(transparent)]
    Scene(#[from] volsplat_scene::SceneError),
    #[error(transparent)]
    Dvr(#[from] volsplat_dvr::DvrError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
