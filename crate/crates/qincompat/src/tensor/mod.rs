//! Labeled dense operators on finite tensor products.
//!
//! Subsystems are addressed by name, never by position. An operator carries
//! the ordered list of [`SystemLabel`]s it acts on; the matrix is stored dense
//! in row-major composite indexing with the leftmost system most significant,
//! matching the usual Kronecker-product convention.

mod block;
mod json;
mod ops;
mod spectra;
#[cfg(test)]
mod tests;

pub use block::{HermitianBlock, StateVector, SystemLabel};
pub use json::MatrixJson;
pub use ops::bell_phi_plus;
pub use spectra::HermitianEig;

/// Row-major strides for a list of subsystem dimensions; the leftmost factor
/// is the most significant digit.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Decodes `lin` into a multi-index over `dims` (row-major).
pub(crate) fn decode(mut lin: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = lin % dims[k];
        lin /= dims[k];
    }
}
