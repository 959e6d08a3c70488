//! Numerical benchmark of the quantum switch against its four-box simulation
//! when the switched operation is realized by an energy-limited
//! Jaynes-Cummings interaction, plus fixed-causal-order tester optimization.

pub mod channels;
pub mod cli;
pub mod discrimination;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod record;
pub mod sdp;
pub mod tensor;
pub mod tester;

pub use error::{Error, Result};
