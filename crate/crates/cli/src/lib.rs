//! Scenario files, batch runs, output formats and the `impact-game` command
//! line tool built on [`impact_game_core`].

pub mod cli;
pub mod emit;
pub mod error;
pub mod presets;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use error::CliError;
pub use runner::{run_scenario, PointResult};
pub use scenario::{load_config, Scenario};
