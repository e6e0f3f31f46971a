pub mod analysis;
pub mod blockmat;
pub mod error;
pub mod graph;
pub mod sdp;
pub mod solver;
pub mod sysmodel;

pub use error::{Error, Result};
