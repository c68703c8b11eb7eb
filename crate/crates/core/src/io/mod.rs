//! Configuration files, field files, reports and the run pipeline.

pub mod config;
pub mod field_io;
pub mod pipeline;
pub mod report;

pub use config::{load_config, parse_config, Mode, RunConfig};
pub use field_io::{dump_field, load_field, load_field_onto};
pub use pipeline::{run_pipeline, Outcome};
pub use report::Check;
