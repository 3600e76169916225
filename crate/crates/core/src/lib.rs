//! Simulation of a delta-kicked quantum ratchet and of its optical
//! realization as a beam bouncing between a phase mirror and a lens.

pub mod config;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod floquet;
pub mod model;
pub mod observables;
pub mod optics;
pub mod spectral;

pub use config::{RunConfig, parse_config};
pub use error::{ConfigError, RatchetError, Result};
pub use evolution::{KickedRunParams, MomentumLadder, SpatialGrid, WaveState};
pub use model::{EffectivePlanck, Levels, MirrorProfile, RatchetPotential, ResonanceOrder};
pub use observables::{FitResult, StepStats};
pub use optics::{BeamField, FarFieldImage, OpticalGeometry};
