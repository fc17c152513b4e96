//! Finite element solver for the Cahn–Hilliard–Navier–Stokes system using a
//! decoupled, first-order scalar auxiliary variable scheme with incremental
//! pressure correction on Taylor–Hood (P2/P1) elements.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod assembly;
pub mod fe;
pub mod linalg;
pub mod mesh;
pub mod real;
pub mod scheme;
pub mod verification;

pub use real::Real;

pub type Mesh = mesh::Mesh<f64>;
pub type Rect = mesh::Rect<f64>;
pub type DofMap = fe::DofMap<f64>;
pub type QuadratureRule = fe::QuadratureRule<f64>;
pub type SparseMatrix = linalg::SparseMatrix<f64>;
pub type SolverConfig = linalg::SolverConfig<f64>;
pub type Field = assembly::Field<f64>;
pub type Spaces = assembly::Spaces<f64>;
pub type SchemeParams = scheme::SchemeParams<f64>;
pub type State = scheme::State<f64>;
pub type EnergyReport = scheme::EnergyReport<f64>;
pub type Scheme = scheme::Scheme<f64>;
pub type ExactSolution = verification::ExactSolution<f64>;
pub type RateTable = verification::RateTable<f64>;
