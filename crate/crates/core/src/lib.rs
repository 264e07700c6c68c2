//! Sparse solvers with approximate-inverse preconditioning applied on a
//! simulated analog crossbar accelerator.
//!
//! The crate provides CSR matrices with FLOP-counted kernels, test-problem
//! generators, a stochastic crossbar MVM model, SPAI and ILU(0)
//! preconditioners, preconditioned Richardson iteration and the noise-bound
//! analysis that certifies when analog application still converges.

pub mod device;
pub mod error;
pub mod noise;
pub mod precond;
pub mod problems;
pub mod richardson;
pub mod rng;
pub mod sparse;
pub mod spectral;

pub use device::{quantize, sample_error_matrix, CrossbarDevice, DeviceConfig};
pub use error::{Error, Result};
pub use precond::{ilu0_build, spai_build, Ilu0, Preconditioner, SpaiBuild, SpaiParams};
pub use problems::{fd_laplacian_3d, fe_laplacian_square, jacobi_scale, ProblemInstance};
pub use richardson::{
    flops_digital_run, solve, speedup_ideal, speedup_total, ExecMode, SolveOptions, SolveReport,
    SolveStatus,
};
pub use sparse::{FlopCounter, LinearOperator, SparseMatrix};
