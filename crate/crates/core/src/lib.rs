//! Chemostat foodwebs with Monod-Liebig uptake and intraspecific
//! self-limitation: monotone operators on the resource box, period-two
//! bounds on every equilibrium, stability and persistence certificates, and
//! a direct integrator for checking them.

pub mod certificates;
pub mod fixpoint;
pub mod model;
pub mod operators;
pub mod sim;

pub use certificates::{certify, CertificateOptions, CertificateReport};
pub use fixpoint::{iterate_period_two, PeriodTwoResult};
pub use model::{FoodwebModel, ModelConfig, ModelError};
pub use sim::{integrate, IntegrationControls, Trajectory};
