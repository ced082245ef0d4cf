//! Every tunable default in one place.
//!
//! | name | value | used by |
//! |------|-------|---------|
//! | `DEFAULT_K_MAX` | 6 | largest cycle order computed without an explicit override |
//! | `DEFAULT_REPS` | 1000 | Monte Carlo replications per experiment |
//! | `DEFAULT_ALPHA` | 0.05 | test level |
//! | `DEFAULT_MC_DRAWS` | 2000 | prior draws per Monte Carlo likelihood estimate |
//! | `DEFAULT_BRUTE_BUDGET` | 1e8 | `n^k p^k` cap for brute-force cycles |
//! | `DEFAULT_EXACT_BUDGET` | 1e6 | `support^(n+p)` cap for exact discrete likelihoods |
//! | `DEFAULT_SEED` | 20190101 | master seed when none is given |

pub const DEFAULT_K_MAX: usize = 6;
pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MC_DRAWS: usize = 2000;
pub use crate::cycles::DEFAULT_BRUTE_BUDGET;
pub const DEFAULT_EXACT_BUDGET: f64 = 1e6;
pub const DEFAULT_SEED: u64 = 20_190_101;

/// Environment variable naming the default output directory for the CLI.
pub const OUTPUT_DIR_ENV: &str = "SPIKED_OUT_DIR";
