mod conv;
mod elementwise;
mod reduce;
mod structural;

pub use conv::{Conv2dSpec, Padding};
pub use elementwise::DIV_EPSILON;
