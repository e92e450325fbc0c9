//! Numerics for saddle-node intermittency in unimodal interval maps.

pub mod dd;
pub mod error;
pub mod family;
pub mod geometry;
pub mod induced;
pub mod intermittency;
pub mod mather;
pub mod orbit;
pub mod phase;
pub mod recurrence;
pub mod roots;
pub mod saddle_node;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use family::{Jet, UnimodalFamily};
pub use geometry::{Geometry, Surrogate};
pub use induced::{InducedContext, IntervalImage};
pub use mather::{MatherTable, MisiurewiczSequence};
pub use orbit::OrbitRecord;
pub use phase::{Ladder, PhaseChart, Side};
pub use saddle_node::{PeriodicPointTrack, SaddleNodeData};
