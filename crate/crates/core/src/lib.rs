//! Stochastic SIS epidemic model: thresholds, the invariant density,
//! sample paths, ensembles, a Fokker–Planck solver and boundary
//! classification through the scale function.

pub mod density;
pub mod ensemble;
pub mod error;
pub mod feller;
pub mod fpe;
pub mod model;
pub mod noise;
pub mod quadrature;
pub mod sde;
pub mod stats;

pub use density::{
    concentration_mass, BoundaryLimit, DensityProfile, DensityQuery, Direction, LevelComparison,
    LevelOrder, Mode, Moments, MonotoneInterval, ProfileCase,
};
pub use ensemble::{
    histogram_distance, histogram_l1, run_ensemble, run_ensemble_with_workers, time_average,
    EnsembleConfig, EnsembleSummary, Histogram,
};
pub use error::{Result, SisError};
pub use feller::{classify_boundaries, BoundaryClassification, BoundaryVerdict, ScaleEvaluator};
pub use fpe::{evolve, init as fpe_init, steady_state, FpeState, Initial, SteadyState};
pub use model::{
    classify_asymptotic, classify_persistence, deterministic_levels, thresholds, tilde_level,
    AsymptoticRegime, DeterministicLevels, ModelParams, PersistenceClass, StochasticThresholds,
    ThresholdReport,
};
pub use sde::{hit_times, simulate_path, PathSpec, Scheme, Trajectory};
