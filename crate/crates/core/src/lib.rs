//! Sum-rate bounds for Gaussian multiterminal source coding: the Berger-Tung
//! inner bound, lower bounds built from remote-source models, and checks for
//! when the two coincide.

pub mod bd_reduce;
pub mod bt_solver;
pub mod error;
pub mod fixtures;
pub mod matlib;
pub mod remote_model;
pub mod report;
pub mod tightness;
pub mod two_terminal;

pub use bd_reduce::BDStructure;
pub use bt_solver::{BTSolution, MTProblem};
pub use error::{Error, Result};
pub use matlib::{BlockPattern, SymMatrix};
pub use remote_model::{GammaTilde, NoisePattern, RemoteModel};
pub use report::{CheckReport, Verdict};
pub use tightness::Certificate;
pub use two_terminal::TwoTermInstance;
