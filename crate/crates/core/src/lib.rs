//! Task-based runtime and local time stepping finite-volume solver.
//!
//! The crate is organised bottom-up: [`mesh`] builds and partitions the
//! mesh, [`numerics`] holds the finite-volume kernels, [`adaptive`] the
//! temporal level machinery and the sequential reference integrator,
//! [`runtime`] a sequential-task-flow runtime, [`taskgen`] turns solver
//! iterations into runtime tasks, [`dist`] runs several ranks with ghost
//! exchange, and [`cli`] wires everything behind a command line.

pub mod mesh;
pub mod numerics;
pub mod adaptive;
pub mod runtime;
pub mod taskgen;
pub mod dist;
pub mod cli;
