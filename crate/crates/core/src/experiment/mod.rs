//! Scenario files, parameter sweeps and tabular output.

pub mod battery;
pub mod config;
pub mod sweep;
pub mod table;

pub use battery::{run_oracle_battery, BatteryCase, BatteryGrid};
pub use config::{ScenarioConfig, SweepConfig, SweepPoint};
pub use sweep::{evaluate_market, run_config, run_scenario, run_to_path, RowStatus, SweepRow};
pub use table::{emit_csv, format_number, header, read_csv};
