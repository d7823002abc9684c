pub mod banded;
pub mod dynamics;
pub mod error;
pub mod grassmann;
pub mod maslov;
pub mod ode;
pub mod pde;
pub mod quad;
pub mod scalar;
pub mod singular;
pub mod wave;

pub use dynamics::{Params, PhasePoint};
pub use error::{Error, Result};

/// Numeric aliases for the generic kernels.
pub type Plucker = grassmann::PluckerPoint<f64>;
pub type Frame = grassmann::LagrangianFrame<f64>;
