pub mod binding;
pub mod circuits;
pub mod cli;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod factoring;
pub mod fixtures;
pub mod net;
pub mod netfile;
pub mod oracle;
pub mod random;
pub mod session;

pub use binding::{Binding, VarId};
pub use error::{Error, Result};
pub use net::{BeliefNet, Evidence};
