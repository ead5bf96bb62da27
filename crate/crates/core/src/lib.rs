//! Lattice toolkit for Dual-Regev encryption with certified deletion.
//!
//! The crate combines exact arithmetic over `Z_q`, discrete Gaussian
//! distributions, and a sparse qudit state-vector simulator to run the
//! full pipeline of Gaussian-coset encryption schemes at desk scale:
//!
//! - [`modq`]: centered residue arithmetic, the gadget matrix and the
//!   Ajtai hash.
//! - [`gaussian`]: Gaussian mass, periodic Gaussians, truncated discrete
//!   Gaussian distributions and numerically certified identities
//!   (Poisson summation, tail bounds, shift bounds).
//! - [`sim`]: sparse multi-register qudit states over `Z_q`, the q-ary
//!   Fourier transform, generalized Paulis, measurements, density
//!   operators and dephasing channels.
//! - [`states`]: primal/dual Gaussian states and their Fourier duality.
//! - [`pke`]: Dual-Regev public-key bit encryption with publicly
//!   verifiable deletion certificates, plus a classical twin for
//!   large-parameter correctness runs.
//! - [`fhe`]: leveled GSW-style homomorphic encryption (classical and
//!   quantum), the homomorphic NAND unitary, and the interactive
//!   extract/rewind protocol.
//! - [`games`]: executable security-experiment harnesses and numerical
//!   verifiers for the entropic and channel-invariance statements.

pub mod error;
pub mod fhe;
pub mod games;
pub mod gaussian;
pub mod modq;
pub mod pke;
pub mod sim;
pub mod states;

pub use error::Error;

/// Default cap on the number of stored amplitudes in a sparse state.
pub const DEFAULT_SUPPORT_BUDGET: usize = 1 << 20;

/// Default cap on the side length of dense density-operator blocks.
pub const DEFAULT_DENSE_BUDGET: usize = 4096;
