//! Pathwise rough calculus on sampled paths.
//!
//! Paths live on a single dyadic time grid. Partitions are index subsets of that grid, so
//! every compensated sum, local time and rank decomposition is an exact rearrangement of
//! finitely many increments.

pub mod error;
pub mod integrate;
pub mod localtime;
pub mod partitions;
pub mod paths;
pub mod quadrature;
pub mod ranks;
pub mod stats;
pub mod tanaka;
pub mod variation;

pub use error::{Error, Result};
pub use integrate::{
    follmer_sum, stieltjes_pairing, tanaka_class, tanaka_meyer_sum, PathFunction,
    PiecewisePolynomial, Polynomial, StieltjesMeasure, TanakaMeyerVariant, TestFunction,
};
pub use localtime::{discrete_local_time, LocalTimeField, OccupationLocalTime, SpaceGrid};
pub use partitions::{dyadic_hierarchy, lebesgue_hierarchy, oscillation, PartitionHierarchy};
pub use paths::{generate, running_extrema, PathKind, PathOrigin, PathSpec, SampledPath};
pub use ranks::{build_rank_system, DecompositionRow, RankSystem};
pub use tanaka::{Exactness, IdentityReport, IdentityRow, ResidualKind};
pub use variation::{pth_variation, VariationCurve};
