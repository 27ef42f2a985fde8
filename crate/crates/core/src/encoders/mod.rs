//! Encoders from raw inputs to SDRs, and the fixed-connection spatial
//! pooler that maps a concatenated input onto the column space.

mod category;
mod datetime;
mod pooler;
mod scalar;

pub use category::CategoryEncoder;
pub use datetime::{parse_timestamp, DatetimeEncoder, DatetimeParams};
pub use pooler::{PoolerParams, SpatialPooler};
pub use scalar::{ScalarEncoder, ScalarParams};
