//! Signal processing on directed graphs.
//!
//! The crate is organised around the graph-shift operator `S` of a digraph.
//! Edge `(i -> j)` with weight `w` populates `S[(j, i)] = w`: columns are
//! sources, rows are destinations, so `(S x)_j` aggregates the values of the
//! in-neighbours of `j`. Every module follows this orientation.
//!
//! * [`graph`]: digraphs, shift operators, shift application.
//! * [`io`]: Matrix Market and CSV readers/writers.
//! * [`spectral`]: variation measures, eigenvector GFT, learned orthonormal DGFT.
//! * [`filters`]: polynomial, spectral, node-variant and edge-variant filters.
//! * [`sampling`]: selection sampling and bandlimited reconstruction.
//! * [`inverse`]: sparse deconvolution, system identification, blind deconvolution.
//! * [`stationary`]: stationary processes `x = H w` and covariance fitting.
//! * [`topoid`]: SEM, SVARM, CGP and commutativity-based topology inference.
//! * [`gnn`]: a single-channel graph neural network with polynomial-filter layers.
//! * [`synth`]: deterministic synthetic graphs and signals.

pub mod error;
pub mod filters;
pub mod gnn;
pub mod graph;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod sampling;
pub mod spectral;
pub mod stationary;
pub mod synth;
pub mod topoid;

pub use error::{GspError, Result};
pub use graph::{apply_shift, shift_powers, Digraph, Edge, GraphSignal, ShiftOperator};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
