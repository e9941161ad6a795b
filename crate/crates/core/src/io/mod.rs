//! File formats: panel CSVs, binary draw files, result tables and the SVG
//! dashboard.

pub mod dashboard;
pub mod draws;
pub mod panel_csv;
pub mod tables;

pub use dashboard::{render_dashboard, render_panel, DashboardSpec, EventShade};
pub use draws::{decode_draws, encode_draws, load_draws, save_draws, DrawHeader};
pub use panel_csv::{load_panel, write_panel, LoadedPanel};
pub use tables::{parameter_table, write_csv, CountRow, FitRow, ParameterRow};
