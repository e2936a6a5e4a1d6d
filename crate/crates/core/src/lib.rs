//! Nuclear-spin entangling gates mediated by a transient optically excited
//! triplet.
//!
//! Two spin-½ nuclei `n` and `n′` never interact directly. Both couple by an
//! isotropic hyperfine interaction to an electron spin-1 that exists only
//! while the mediating molecule is optically excited. Second-order flip-flop
//! processes through the neighbouring triplet sublevels produce an effective
//! nuclear exchange inside each sublevel `T₊`, `T₀`, `T₋`, which microwave
//! pulses can switch on and off.
//!
//! The crate is organised bottom-up:
//!
//! - [`spincore`]: spin matrices, embeddings, and the 16-state basis layout
//! - [`hamiltonian`]: the full, excited, and ground Hamiltonians
//! - [`effective`]: perturbative spectrum and flip-flop couplings
//! - [`dynamics`]: propagators, pulse sequences, and optical decay
//! - [`entanglement`]: entangling power, concurrence, entanglement of formation
//! - [`kinetics`]: triplet sublevel populations, lifetimes, and trace fitting
//! - [`cli`]: configuration, sweeps, and CSV/JSON output used by the binary
//!
//! Units: every input frequency is an ordinary frequency in MHz. Internally
//! Hamiltonians are angular frequencies in rad/µs, and times are µs.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod effective;
pub mod entanglement;
pub mod error;
pub mod hamiltonian;
pub mod kinetics;
pub mod linalg;
pub mod spincore;

pub use error::{Error, Result};
pub use hamiltonian::SpinParams;
pub use spincore::{Operator, Sublevel};

/// 2π, the factor between MHz and rad/µs.
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Maximum entangling power of a two-qubit unitary.
pub const MAX_ENTANGLING_POWER: f64 = 2.0 / 9.0;
