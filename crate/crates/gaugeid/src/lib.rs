pub mod dirac;
pub mod cauchy;
pub mod cgo;
pub mod cauchydata;
pub mod bessel;
pub mod diff;
pub mod error;
pub mod field;
pub mod gauge;
pub mod linalg;
pub mod quad;
pub mod recon;
pub mod scalar;
pub mod schrodinger;
pub mod cli;

pub use scalar::Real;

/// Double-precision grid handle.
pub type Grid64 = std::sync::Arc<field::DomainGrid<f64>>;
/// Single-precision grid handle.
pub type Grid32 = std::sync::Arc<field::DomainGrid<f32>>;
pub type Field64 = field::MatrixField<f64>;
pub type Field32 = field::MatrixField<f32>;
pub type Potential64 = dirac::BlockPotential<f64>;
pub type Potential32 = dirac::BlockPotential<f32>;
pub type Connection64 = schrodinger::ConnectionData<f64>;
pub type Connection32 = schrodinger::ConnectionData<f32>;
pub type CauchyData64 = cauchydata::CauchyDataMatrix<f64>;
pub type CauchyData32 = cauchydata::CauchyDataMatrix<f32>;
