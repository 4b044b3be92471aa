//! Spectral Galerkin laboratory for the truncated Birkhoff normal-form flow of
//! the fractional cubic NLS on the torus.
//!
//! Everything lives on the Fourier side: a state is the coefficient vector
//! `u(n)`, `|n| <= N`, and all norms are coefficient-sequence norms.
//!
//! * [`divisor`] small divisors and the combinatorial resonance test
//! * [`norms`] mass, Sobolev and Fourier-Lebesgue norms, the quartic `L^4` functional
//! * [`hamiltonian`] energy, the normal-form generator `F_N`, its vector field and `G_N`
//! * [`flow`] integration of the truncated Birkhoff flow
//! * [`measure`] seeded Gaussian / Gibbs sampling and Monte Carlo estimation
//! * [`transport`] transported density and the measure-level experiments
//! * [`oracle`] brute-force reference implementations used by the tests
//! * [`experiment`] record streams, manifests and the experiment runner

pub mod divisor;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod hamiltonian;
pub mod measure;
pub mod norms;
pub mod oracle;
pub mod params;
pub mod state;
pub mod stats;
#[doc(hidden)]
pub mod testutil;
pub mod transport;

pub use divisor::{divisor, is_resonant, Divisor, DivisorTable};
pub use error::{Error, Result};
pub use experiment::{Experiment, RunConfig, RunManifest};
pub use flow::{flow_map, flow_with_observable, Flow, FlowResult, IntegratorConfig, Method};
pub use hamiltonian::{EnergyBreakdown, Model, VectorFieldOutput};
pub use measure::{MCEstimate, SampleBatch};
pub use params::ModelParams;
pub use state::FourierState;
pub use transport::{SetPredicate, TransportReport};

pub use num_complex::Complex64;
