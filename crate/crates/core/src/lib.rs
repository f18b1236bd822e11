//! Numerical semiclassics: classical flows with their linearization,
//! periodic orbits, Gaussian wave packets, grid quantum references and the
//! periodic-orbit expansion of regularized densities of states.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod hamiltonians;
pub mod linalg;
pub mod observable;
pub mod oscillatory;
pub mod ode;
pub mod orbits;
pub mod quadrature;
pub mod quantum_oracle;
pub mod traceformula;
pub mod validation;
pub mod wavepackets;
pub mod window;

pub use error::{Error, Result};
pub use hamiltonians::{Builtin, Hamiltonian, PhaseSpacePoint};
