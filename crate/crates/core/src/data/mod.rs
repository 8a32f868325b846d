//! Data ingestion: CSV loading, stationarity transforms, panel assembly,
//! standardization. Pure functions over immutable inputs.

mod csv;
mod dataset;
mod meta;
mod transform;

pub use csv::{load_csv, parse_csv, RawSeries};
pub use dataset::{assemble, standardize, unstandardize, Dataset};
pub use meta::{ordered_schema, schema_from_json, Role, VariableMeta, VALID_TCODES};
pub use transform::{apply_tcode, tcode_lag};
