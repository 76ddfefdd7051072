//! Experiment families: sparse linear inverse problems and regularized NMF.

pub mod inverse;
pub mod io;
pub mod nmf;

pub use inverse::{
    clipped_penalty, gen_inverse, laplace_scale, lq_fidelity, relative_error, snr_db, snr_db_power,
    ClippedPenalty, InverseInstance, InverseParams, InverseSnapshot, LqFidelity,
};
pub use io::{load_matrix_csv, read_matrix, write_matrix_csv};
pub use nmf::{nmf_kernel, nmf_objective, nmf_reformulate, NmfState, REFORMULATED_LP};
