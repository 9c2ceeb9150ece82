//! Test fixtures for `fairdecide`: seeded synthetic populations and
//! independent brute-force oracles for gaps and constrained optima.

pub mod counting;
pub mod generate;
pub mod optimum;

pub use counting::{brute_force_metrics, BruteGaps, CountingError, Exact};
pub use generate::{
    generate_population, Distortion, GroupSpec, Shape, SpecError, StratumSpec, SyntheticPopulation, SyntheticSpec,
    GENERATOR,
};
pub use optimum::{brute_force_optimum, threshold_pairs_within, OracleError, OracleOptimum};
