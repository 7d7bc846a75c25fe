//! Reference Lagrange elements, quadrature and global dof numbering.

mod quadrature;
mod reference;
mod space;

use thiserror::Error;

pub use quadrature::{quad_rule, QuadratureRule, MAX_DEGREE};
pub use reference::{eval_basis, BasisEval, ReferenceElement, EDGE_VERTICES};
pub use space::{build_space, AffineMap, FeSpace};

#[derive(Debug, Error, PartialEq)]
pub enum FeError {
    #[error("Lagrange degree {0} not supported (use 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("no quadrature rule of exactness {0} (maximum {max})", max = MAX_DEGREE)]
    UnsupportedQuadrature(usize),
    #[error("component count must be 1 or 2, got {0}")]
    Components(usize),
}

/// Quadrature exactness needed so that every bilinear and trilinear form of
/// the scheme is integrated exactly on affine cells.
pub fn assembly_quadrature_degree(degree_u: usize, degree_p: usize) -> usize {
    (2 * degree_u)
        .max(3 * degree_u - 1)
        .max(degree_u + degree_p)
        .max(2 * degree_p)
}
