//! Self-contained numerical kernels used by the physics modules.
//!
//! Everything here is deterministic: parallel reductions preserve a fixed
//! summation order, and iterative solvers use fixed seeds and iteration
//! counts, so repeated runs produce bit-identical results.

pub mod dual;
pub mod fit;
pub mod interp;
pub mod ode;
pub mod quad;
pub mod sum;
pub mod tridiag;
