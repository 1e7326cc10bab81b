//! Homogenization of magneto-transport in three-dimensional periodic
//! composites at low magnetic field.

pub mod effective;
pub mod io;
pub mod microstructure;
pub mod oracles;
pub mod solver;
pub mod spectral;
pub mod tensor;
pub mod verify;
