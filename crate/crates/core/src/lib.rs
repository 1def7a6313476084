pub mod error;
pub mod linalg;
pub mod model;
pub mod solvers;
pub mod data;
pub mod eval;
pub mod selftest;
pub mod cli;
