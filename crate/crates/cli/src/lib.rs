//! Configuration parsing, CSV and SVG output, and the moment verification
//! battery behind the `metasim` binary.

pub mod config;
pub mod csv;
pub mod moments;
pub mod svg;

pub use config::{config_echo, manifest_text, parse_config, parse_str, ConfigError};
pub use csv::{fmt_g6, read_results, write_results, CsvRow, RESULT_HEADER};
pub use moments::{moment_battery, render_report, MomentCheck};
pub use svg::plot_summary;
