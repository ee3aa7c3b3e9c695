//! Simulation of phase-change-material (PCM) Mach–Zehnder interferometers
//! built from 2×2 multimode interference splitters, and of the photonic neural
//! networks mapped onto Clements meshes of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod mmi;
pub mod mode_solver;
pub mod mzi;
pub mod optics;
pub mod optimizer;
pub mod pcm;
pub mod pnn;

pub use error::{Error, Result};
pub use optics::{ComplexIndex, Db, FieldVector, TransferMatrix2x2, C64};
