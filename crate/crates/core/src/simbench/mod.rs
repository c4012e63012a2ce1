//! Simulation designs and replication harnesses.
//!
//! Two longitudinal designs are provided: a four-predictor design for
//! comparing one-step and two-step fits by normalized coefficient MSE, and a
//! 500-predictor design with six active coefficients for variable selection.
//! Replicate `r` of a run with master seed `s` draws from a ChaCha8 stream
//! seeded with `splitmix64(s + r)`, so results do not depend on scheduling.

mod bench;
mod design;
mod generators;
mod metrics;

pub use bench::{
    equidistant_knots, run_table1, run_table2, select_equidistant, KnotStrategy, MethodSummary,
    Table1Config, Table1Replicate, Table1Summary, Table2Config, Table2Replicate, Table2Row,
    Table2Summary, EQUIDISTANT_MAX_KNOTS,
};
pub use design::{correlated_normal, exp_correlation_factor, ErrorProcess, LongitudinalDesign};
pub use generators::{simulate_tang, simulate_wei, Simulated, Truth, WEI_P};
pub use metrics::{mse_beta, mse_with};

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` under master seed `seed`.
pub fn replicate_seed(seed: u64, rep: u64) -> u64 {
    splitmix64(seed.wrapping_add(rep))
}
