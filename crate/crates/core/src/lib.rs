//! Hamiltonian dynamics of mechanical systems confined to a configuration
//! submanifold G(q) = 0.
//!
//! The library builds the reduced phase-space description on the intermediate
//! submanifold (all configuration coordinates, an irreducible set of momenta)
//! along several independent routes — non-canonical momenta adapted to the
//! constraint surface, Dirac-bracket restriction, an alternative momenta set,
//! and the plain Lagrange-multiplier second-order equations — and keeps them
//! in continuous agreement through runtime diagnostics. Lie-series
//! integration and a Liouville quadrature solver provide further
//! cross-checks. The particle on a sphere and the freely spinning rigid body
//! ship as built-in systems.

// Dense tensor assembly reads best with explicit index loops matching the
// component notation; the iterator forms obscure the index symmetry.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod field;
pub mod geometry;
pub mod lagrangian;
pub mod lie;
pub mod liouville;
pub mod numeric;
pub mod poisson;
pub mod reduction;
pub mod rigid_body;
pub mod sphere;
pub mod traj;
pub mod verify;

pub use error::{Error, Result};
pub use numeric::{Mat, Tolerances};
pub use traj::Trajectory;
