//! Renormalization-group construction of the two-dimensional lattice Coulomb
//! gas at the Kosterlitz–Thouless line.

pub mod kt_flow;
pub mod lattice_covariance;
pub mod numeric;
pub mod par;
pub mod partition_oracle;
pub mod polymer_geometry;
pub mod rg_coefficients;
pub mod stable_manifold;
