#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for a radially symmetric chemotaxis system with an
//! indirect signal, `u_t = Δu - ∇·(u∇v)`, `0 = Δv + w`, `w_t = Δw + u`.

pub mod barriers;
pub mod dynamics;
pub mod error;
pub mod gelfand;
pub mod ode;
pub mod radial;
pub mod steady;

pub use error::{Error, Result};
