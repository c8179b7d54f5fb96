//! Dense real-matrix primitives.

mod lanczos;
mod mat;
mod partial;
mod power;
mod qr;
mod svd;

pub use lanczos::{lanczos_extremes, LanczosExtremes};
pub use mat::Mat;
pub use partial::SubspaceSvd;
pub use power::spectral_norm;
pub use qr::{haar_orthogonal, orthonormalize, qr};
pub use svd::{singular_values, svd, SvdFactors};
