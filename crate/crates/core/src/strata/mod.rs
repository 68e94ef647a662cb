//! Strata base-mixture optimization.

mod embed;
mod hull;
pub(crate) mod linalg;
pub mod oracle;
mod pca;
mod plan;
mod simplex;

pub use embed::{embed, is_feasible, unembed};
pub use hull::{hull_facets, Hull, Hyperplane};
pub use pca::{pca_reduce, EmbeddedPointSet, PcaBasis};
pub use plan::{
    decompose, optimize_layer, stratum_volumes, unit_vector_decomposition, unit_vector_layer,
    Decomposition, OptimizerConfig, PlanKind, StrataPlan,
};
pub use simplex::{
    barycentric_coords, min_enclosing_simplex, search_min_simplex, simplex_volume, Simplex,
    SimplexSearch, ENCLOSURE_TOLERANCE,
};
