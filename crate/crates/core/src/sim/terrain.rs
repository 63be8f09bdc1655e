use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TerrainKind, TerrainSpec};
use crate::dtm::TerrainGrid;
use crate::error::{NavError, Result};

/// Builds the scenario DTM. Rolling terrain is the sum of an x sinusoid and a y
/// sinusoid of equal amplitude and wavelength, with phases drawn from `spec.seed`.
pub fn synth_terrain(spec: &TerrainSpec) -> Result<TerrainGrid> {
    if let Some(path) = &spec.dtm_file {
        return TerrainGrid::load_ascii(path).map_err(|e| NavError::Scenario(format!("{path}: {e}")));
    }
    let build = |f: &dyn Fn(f64, f64) -> f64| {
        TerrainGrid::from_fn(spec.origin_x, spec.origin_y, spec.cell_size, spec.n_cols, spec.n_rows, f)
    };
    match spec.kind {
        TerrainKind::Flat => build(&|_, _| 0.0),
        TerrainKind::Inclined => build(&|x, _| spec.slope * x),
        TerrainKind::Rolling => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let phase_x: f64 = rng.random_range(0.0..TAU);
            let phase_y: f64 = rng.random_range(0.0..TAU);
            let k = TAU / spec.wavelength;
            let a = spec.amplitude;
            build(&|x, y| a * (k * x + phase_x).sin() + a * (k * y + phase_y).sin())
        }
    }
}
