//! Penalty solvers, a projection oracle and verification tools for elliptic
//! variational inequalities with a gradient constraint and an obstacle.

pub mod cli;
pub mod experiments;
pub mod expr;
pub mod grid;
pub mod io;
pub mod lagrange;
pub mod oracle;
pub mod penalty;
pub mod problem;
pub mod solver;
pub mod sparse;
