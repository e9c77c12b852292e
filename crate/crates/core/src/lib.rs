//! Optimal resistance selection for Friedkin–Johnsen opinion dynamics.
//!
//! Given innate opinions `s`, a row-stochastic interaction matrix `P` and
//! per-agent resistance bounds `[lᵢ, uᵢ]`, the equilibrium opinions are
//! `z(α) = [I - (I - A)P]⁻¹ A s` with `A = diag(α)`. The crate minimizes
//! `1ᵀ z(α)`:
//!
//! * exactly, when every agent may be changed ([`search`]), using local search
//!   over extreme points with certified equilibrium estimates;
//! * heuristically, when at most `k` agents may be changed ([`budgeted`]).
//!
//! [`oracle`] holds brute-force references for small instances.

pub mod budgeted;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod instance;
pub mod oracle;
pub mod report;
pub mod search;

pub use budgeted::{solve_budgeted, BatchSize, BudgetConfig, BudgetStrategy, BudgetedResult};
pub use dynamics::{
    equilibrium_exact, gradient_exact, influence_exact, objective, DerivativeEstimate, EquilibriumEstimate,
    EquilibriumPath, Sign, DEFAULT_DENSE_LIMIT,
};
pub use error::{Error, Result};
pub use graph::{InteractionMatrix, WeightedEdgeList};
pub use instance::{generate_instance, perturb_innate, ProblemInstance, Profile, ResistanceVector};
pub use oracle::{brute_force_optimum, check_local_global, CornerEnumeration};
pub use search::{
    solve, verify_local_optimality, LocalOptimalityReport, SolveResult, SolveTrace, SolverConfig, Strategy, VerifyMode,
    VerifyOptions,
};
