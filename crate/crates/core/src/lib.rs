//! Aggregative games with coupling constraints: equilibrium computation,
//! clustering-based reduction to population games, and error certificates.

pub mod analysis;
mod clock;
pub mod cluster;
pub mod error;
pub mod experiment;
pub mod game;
pub mod margin;
pub mod oracle;
pub mod projection;
pub mod reduction;
pub mod scenario;
pub mod solver;

pub use cluster::{kmeans, ClusterAssignment, KMeansConfig};
pub use error::{Error, Result};
pub use game::{
    AggregativeCosts, Aggregation, CouplingConstraint, GameSpec, MonotonicityReport, PlayerParams,
    PriceFunction, Profile,
};
pub use margin::{max_coupling_margin, CouplingMargin};
pub use projection::BoxSimplexSet;
pub use solver::{
    solve_from, solve_svwe, solve_vne, EquilibriumKind, EquilibriumResult, SolverConfig, StepRule,
};
