//! Shared fixtures for the kernel benchmarks.

use snlab_core::induced::build_induced;
use snlab_core::mather::FoldCharts;
use snlab_core::phase::gamma_ladder;
use snlab_core::{Geometry, InducedContext, Ladder, Result};

pub struct Fixture {
    pub geo: Geometry,
    pub ladder: Ladder,
    pub charts: FoldCharts,
    /// Induced map at `l = 120`, `theta = 0.37`.
    pub ctx: InducedContext,
}

impl Fixture {
    pub fn new() -> Result<Self> {
        let geo = Geometry::quadratic()?;
        let ladder = gamma_ladder(&geo, 119, 122)?;
        let charts = FoldCharts::build(&geo)?;
        let ctx = build_induced(&geo, &ladder, 120, 0.37)?;
        Ok(Fixture {
            geo,
            ladder,
            charts,
            ctx,
        })
    }
}
