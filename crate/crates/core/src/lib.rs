//! Taxi fare optimization for parallel-road networks under learned travel
//! preferences.
//!
//! The crate is generic over the floating point type through [`Scalar`]; the
//! aliases below fix it to `f64`, which is what the command-line tool and the
//! survey service use.

pub mod bench;
pub mod choice;
pub mod config;
pub mod equilibrium;
pub mod learning;
pub mod neldermead;
pub mod network;
pub mod optimize;
pub mod protocol;
pub mod scalar;
pub mod synthetic;

pub use choice::{ChoiceError, ChoiceScales, Mode, OptionLayout, TransportOption};
pub use equilibrium::{EquilibriumError, EquilibriumSettings};
pub use learning::{ChainConfig, LearningError, Prior, QueryGenerator};
pub use optimize::{OptimizationRequest, OptimizeError};
pub use scalar::{ExtReal, Scalar};

pub type Real = f64;

pub type RoadSpec = network::RoadSpec<Real>;
pub type RailSpec = network::RailSpec<Real>;
pub type WalkSpec = network::WalkSpec<Real>;
pub type NetworkConfig = network::NetworkConfig<Real>;
pub type FlowState = network::FlowState<Real>;
pub type OptionSet = choice::OptionSet<Real>;
pub type PreferenceVector = choice::PreferenceVector<Real>;
pub type Scales = choice::ChoiceScales<Real>;
pub type Posterior = learning::Posterior<Real>;
pub type ResponseRecord = learning::ResponseRecord<Real>;
pub type FareVector = equilibrium::FareVector<Real>;
pub type Population = equilibrium::Population<Real>;
pub type UserEntry = equilibrium::UserEntry<Real>;
pub type SolutionReport = optimize::SolutionReport<Real>;
