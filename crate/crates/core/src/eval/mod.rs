//! Offline experiments: follower asynchrony on synthetic pieces with
//! perturbed references, and one-step tempo prediction with grid search.
//!
//! All randomness comes from seeded ChaCha8 generators (`rand_chacha`
//! 0.9), so results are identical across runs and platforms.

pub mod corpus;
mod follower_exp;
mod grid;
mod metrics;
mod perturb;
mod report;
pub mod synth;
mod tempo_exp;

pub use follower_exp::{detection_times, follow, run_follower_experiment, window_end_of};
pub use grid::{default_grid, grid_search, load_grid, parse_grid, GridResult};
pub use metrics::{asynchrony_metrics, AsynchronyReport};
pub use perturb::perturb_performance;
pub use report::{follower_table, tempo_table, write_follower_csv, write_tempo_csv};
pub use tempo_exp::{compare_params, run_tempo_experiment, TempoErrorReport, TempoTrial};
