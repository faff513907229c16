//! Experiment runner: outage sweeps, federated-learning grids, the
//! accuracy-versus-density comparison and the oracle checks, all written as
//! CSV tables with a provenance footer.
//!
//! # CSV schemas
//!
//! | subcommand | file | columns |
//! |---|---|---|
//! | `outage` | `outage.csv` | `ratio, p_out_analytical, quad_error, p_out_mc, mc_halfwidth, trials` |
//! | `fl` | `fl.csv` | `p_out, K, partition_mode, seed, final_accuracy` |
//! | `fl` | `traces/fl_<mode>_k<K>_p<i>_seed<s>.csv` | `round, successes, participating_size, aggregated, test_accuracy, train_accuracy` |
//! | `fig3` | `fig3.csv` | `ratio, p_out_analytical, p_out_empirical, acc_simulated, acc_analytical` |
//! | `validate` | `validate.csv` | `check, statistic, threshold, passed` |
//!
//! Footer lines start with `#` and hold `key=value` pairs, always ending
//! with `config_sha256`, `seeds` and `version`.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod report;

pub use commands::{cmd_fig3, cmd_fl, cmd_outage, cmd_validate, Outcome};
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
pub use report::CsvReport;
