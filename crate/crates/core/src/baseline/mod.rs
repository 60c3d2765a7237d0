//! Rule-based comparison prefetchers behind the same interface as the
//! learned controller.

mod bo;
mod isb;

pub use bo::{BestOffset, BoConfig};
pub use isb::{Isb, IsbConfig};
