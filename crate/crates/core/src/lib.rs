//! Measurement grouping for qubit Hamiltonians: Pauli algebra, commutativity
//! graphs, classical baselines, exact-variance scoring and a GFlowNet sampler
//! over colorings of the complement graph.

pub mod autodiff;
pub mod baselines;
pub mod env;
pub mod graph;
pub mod hamiltonian;
pub mod optim;
pub mod pauli;
pub mod policy;
pub mod run;
pub mod statevector;
pub mod trainer;
pub mod variance;

pub use graph::{CommutGraph, Coloring, Scheme};
pub use hamiltonian::{QubitHamiltonian, Term};
pub use pauli::{Pauli, PauliWord, Phase};
