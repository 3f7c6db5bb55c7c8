//! Numerical kernel: dense matrices, the discrete Fourier transform, seeded
//! randomness, and a central-difference gradient checker.

mod dft;
mod gradcheck;
mod matrix;
mod rng;

pub use dft::{dft, inverse_dft, ComplexSpectrum};
pub use gradcheck::{finite_diff_grad, max_relative_error, DEFAULT_STEP};
pub use matrix::{matmul, Matrix};
pub use rng::{derive_seed, Rng};
pub use rustfft::num_complex::Complex64;
