//! Numerical solvers for singular first-order PDEs of Briot-Bouquet type,
//! t·u_t = F(t, x, u, u_x) with Re λ(0,0) > 0.

pub mod characteristics;
pub mod classifier;
pub mod error;
pub mod expr;
pub mod field;
pub mod germ;
pub mod grid;
pub mod linear;
pub mod nonlinear;
pub mod numerics;
pub mod ode;
pub mod par;
pub mod problem;
pub mod series;
pub mod solution;
pub mod tseries;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
