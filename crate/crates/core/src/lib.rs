pub mod abstraction;
pub mod automata;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod imdp;
pub mod nn;
pub mod pipeline;
pub mod refine;
pub mod relax;
pub mod transition;

pub use error::{Error, Result};
