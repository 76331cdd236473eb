//! N-adapted geometry on a product chart with a nonlinear connection:
//! canonical and Levi-Civita connections, normalized Ricci flow,
//! entropy-type functionals and spectral traces.

pub mod exprlang;
pub mod geometry;
pub mod connections;
pub mod flow;
pub mod functionals;
pub mod spectral;
