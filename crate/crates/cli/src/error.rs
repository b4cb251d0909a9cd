use std::fmt::Debug;

/// A failed command: `kind` is the innermost error variant name, used as the
/// machine-readable field of the stderr line.
#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Failure {
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Failure::new("InvalidArgument", message)
    }

    /// Single-line JSON for stderr.
    pub fn line(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

/// Wrapper variants that forward to another crate's error.
const WRAPPERS: [&str; 4] = ["Core", "Scene", "Dvr", "Train"];

/// Variant name from a derived `Debug` rendering, descending through wrappers:
/// `Scene(MixedStage)` gives `MixedStage`.
pub fn variant_name(debug: &str) -> String {
    let mut rest = debug;
    loop {
        let end = rest.find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(rest.len());
        let name = &rest[..end];
        let inner = &rest[end..];
        if WRAPPERS.contains(&name) && inner.starts_with('(') && inner[1..].starts_with(|c: char| c.is_ascii_uppercase()) {
            rest = &inner[1..];
            continue;
        }
        return if name.is_empty() { "Error".to_string() } else { name.to_string() };
    }
}

fn from_error<E: Debug + std::fmt::Display>(e: E) -> Failure {
    Failure::new(variant_name(&format!("{e:?}")), e.to_string())
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                from_error(e)
            }
        }
    )*};
}

failure_from!(
    volsplat_core::CoreError,
    volsplat_dvr::DvrError,
    volsplat_scene::SceneError,
    volsplat_train::TrainError
);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("Io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new("Json", e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Failure>;
