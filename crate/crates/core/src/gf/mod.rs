// SPDX-License-Identifier: Apache-2.0

//! Ring arithmetic, the diffusion matrix and GF(2) linear algebra.

pub mod gf2;
pub mod mds;
pub mod ring;

pub use gf2::{solve_gf2, BitMatrix, BitVec, SolveError};
pub use mds::{branch_number, MdsError, MdsSpec, XorCircuit, XorNode};
pub use ring::{ring_mul, RingElem};
