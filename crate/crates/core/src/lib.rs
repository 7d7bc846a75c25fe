//! BDF2 incremental pressure-correction finite element solver for the
//! 2D incompressible Navier-Stokes equations on the unit square.
//!
//! The prediction step solves a linearly implicit momentum equation for an
//! intermediate velocity in `U_h` (continuous Lagrange, homogeneous Dirichlet);
//! the projection step solves a pressure Poisson problem and represents the
//! projected velocity exactly as an element of `Y_h = U_h + grad P_h`.
//! The [`diagnostics`] module evaluates the discrete energy identities and
//! bounds satisfied by the scheme.

pub mod assembly;
pub mod fe;
pub mod linsolve;
pub mod mesh;
pub mod diagnostics;
pub mod scheme;
pub mod mms;
pub mod io;
