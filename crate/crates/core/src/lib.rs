//! Block majorization-minimization with one block on the Grassmann manifold.
//!
//! - [`linalg`]: thin SVD, QR and seeded random matrices.
//! - [`grassmann`]: points, tangent vectors, principal angles, geodesics and
//!   the canonical distance on Gr(N, D).
//! - [`mm`]: the two-block MM driver, surrogate audits and stationarity probes.
//! - [`deconv`]: blind sparse deconvolution with the kernel on Gr(N, 1).

pub mod grassmann;
pub mod deconv;
pub mod linalg;
pub mod mm;
