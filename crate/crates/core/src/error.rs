use thiserror::Error;

/// Errors raised by the navigation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("query ({x}, {y}) lies outside the terrain grid footprint")]
    OutOfBounds { x: f64, y: f64 },

    #[error("ray escapes DTM without intersecting the terrain")]
    RayEscapesDtm,

    #[error("ray origin at z={z} is not above the terrain surface (height {height})")]
    OriginBelowSurface { z: f64, height: f64 },

    #[error("invalid terrain grid: {0}")]
    InvalidGrid(String),

    #[error("point at depth z={z} lies behind the camera")]
    BehindCamera { z: f64 },

    #[error("degenerate projection direction: |s'u| = {denominator:e}")]
    DegenerateProjection { denominator: f64 },

    #[error("grazing incidence: |N'Rq| = {denominator:e}")]
    GrazingIncidence { denominator: f64 },

    #[error("second-camera point has vanishing norm {norm:e}")]
    VanishingPoint { norm: f64 },

    #[error("feature {index}: {source}")]
    Feature {
        index: usize,
        #[source]
        source: Box<NavError>,
    },

    #[error("need at least {required} flow correspondences, got {got}")]
    TooFewFeatures { required: usize, got: usize },

    #[error("degenerate geometry: Jacobian rank {rank} < 12 (condition number {condition:e})")]
    DegenerateGeometry { rank: usize, condition: f64 },

    #[error("degenerate attitude: pitch {pitch} rad too close to +/- pi/2")]
    DegenerateAttitude { pitch: f64 },

    #[error("singular innovation covariance (condition number {condition:e})")]
    SingularInnovation { condition: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),
}

impl NavError {
    pub(crate) fn for_feature(self, index: usize) -> Self {
        NavError::Feature {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, NavError>;
