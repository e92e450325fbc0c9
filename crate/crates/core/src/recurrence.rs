//! Critical neighbourhoods, binding periods and the bounded recurrence condition
//! along the induced critical orbit.

use rayon::prelude::*;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::induced::{breve_interval_step, build_induced, InducedContext};
use crate::mather::{MisiurewiczEntry, MisiurewiczSequence};
use crate::orbit::log_abs_deriv;
use crate::phase::Ladder;
use crate::saddle_node::newton_periodic;
use crate::stats::SlopeFit;

pub const BINDING_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecurrenceParams {
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
    pub iota: f64,
    /// `-ln delta`, rounded.
    pub r_delta: i64,
    /// `-iota ln delta`, rounded.
    pub r_delta_plus: i64,
}

impl Default for RecurrenceParams {
    fn default() -> Self {
        delta_partition(0.5, 0.05, (-10.0f64).exp(), 0.3)
    }
}

pub fn delta_partition(c: f64, alpha: f64, delta: f64, iota: f64) -> RecurrenceParams {
    RecurrenceParams {
        c,
        alpha,
        delta,
        iota,
        r_delta: (-delta.ln()).round() as i64,
        r_delta_plus: (-iota * delta.ln()).round() as i64,
    }
}

impl RecurrenceParams {
    /// Signed `r` with `x` in `I_r` (`I_{-r}` left of `c`); `None` at `c` or for `|x - c| >= 1`.
    pub fn depth(&self, x: f64) -> Option<i64> {
        let dist = (x - self.c).abs();
        if dist == 0.0 || dist >= 1.0 {
            return None;
        }
        let r = (-dist.ln()).ceil() as i64;
        // e^{-r} <= dist < e^{-r+1}; guard the rounding of ln at the edges
        let r = if dist < (-(r as f64)).exp() {
            r + 1
        } else if dist >= (-(r as f64) + 1.0).exp() {
            r - 1
        } else {
            r
        };
        Some(if x > self.c { r } else { -r })
    }

    /// `(r, m)` with `x` in `I_{r,m}`, `m = 1..=r^2`.
    pub fn cell(&self, x: f64) -> Option<(i64, i64)> {
        let r = self.depth(x)?;
        let ra = r.abs();
        let lo = (-(ra as f64)).exp();
        let hi = (-(ra as f64) + 1.0).exp();
        let frac = ((x - self.c).abs() - lo) / (hi - lo);
        let m = ((frac * (ra * ra) as f64).floor() as i64 + 1).clamp(1, ra * ra);
        Some((r, m))
    }

    pub fn in_delta(&self, x: f64) -> bool {
        x == self.c || self.depth(x).is_some_and(|r| r.abs() > self.r_delta)
    }

    pub fn in_delta_plus(&self, x: f64) -> bool {
        x == self.c || self.depth(x).is_some_and(|r| r.abs() > self.r_delta_plus)
    }
}

/// Binding period of `x`: the largest `m` with `|eta_j| <= e^{-2 alpha j}` for `j < m`,
/// `eta_j` the interval iterate of `(c, x)` (hull of the image components). The flag is
/// set when the cap stopped the count.
///
/// Below `LINEAR_LIMIT` the interval is carried as the critical-orbit endpoint and a signed
/// length advanced by the derivative; its endpoints would not be distinct doubles.
pub fn binding_period(ctx: &InducedContext, x: f64, alpha: f64, cap: usize) -> Result<(usize, bool)> {
    const LINEAR_LIMIT: f64 = 1e-7;
    let fam = &ctx.geo.fam;
    let p = ctx.native;
    let c = ctx.geo.c();
    if x == c {
        return Err(Error::EmptyInterval);
    }
    let bound = |j: usize| (-2.0 * alpha * j as f64).exp();
    // first step exactly: |f(x) - f(c)| without cancellation
    let pd = Dd::new(p);
    let len1 = (fam.map_dd(Dd::new(x), pd) - fam.map_dd(Dd::new(c), pd)).to_f64();
    let mut y = fam.map(c, p);
    let mut signed = len1;
    let mut eta = (y.min(y + signed), y.max(y + signed));
    let mut linear = signed.abs() < LINEAR_LIMIT;
    if !linear {
        eta = breve_interval_step(ctx, (c.min(x), c.max(x)))?.hull();
    }
    for j in 1..=cap {
        let len = if linear { signed.abs() } else { eta.1 - eta.0 };
        if len > bound(j) {
            return Ok((j, false));
        }
        if j == cap {
            break;
        }
        if linear {
            let n = match ctx.domain_of(y) {
                Some(i) => i * ctx.geo.q() + 1,
                None => 1,
            };
            let (y1, d) = fam.iterate_deriv(y, p, n);
            y = y1;
            signed *= d;
            if signed.abs() >= LINEAR_LIMIT {
                linear = false;
                eta = (y.min(y + signed), y.max(y + signed));
            }
        } else {
            eta = breve_interval_step(ctx, eta)?.hull();
        }
    }
    Ok((cap, true))
}

/// Landing of the critical orbit on a periodic cycle: from base iterate `landing` on the
/// orbit is continued on `cycle` exactly instead of by floating-point iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Pin {
    pub landing: usize,
    pub cycle: Vec<f64>,
}

/// Pin for a Misiurewicz entry: `f^{lq+m}(c) = y*` at `gamma*_l`.
pub fn misiurewicz_pin(geo: &Geometry, seq: &MisiurewiczSequence, entry: &MisiurewiczEntry) -> Result<Pin> {
    let native = geo.native(entry.gamma);
    let period = seq.target_period;
    let y = newton_periodic(&geo.fam, seq.target_seed, native, period)
        .ok_or(Error::NoConvergence { what: "periodic target" })?;
    let mut cycle = vec![y];
    for _ in 1..period {
        let last = *cycle.last().unwrap_or(&y);
        cycle.push(geo.fam.map(last, native));
    }
    Ok(Pin {
        landing: entry.l * geo.q() + seq.m,
        cycle,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Return {
    /// Induced time.
    pub k: usize,
    pub depth: i64,
    pub bound: bool,
}

#[derive(Clone, Debug)]
pub struct RecurrenceReport {
    pub l: usize,
    pub theta: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub br_pass: bool,
    pub first_fail: Option<usize>,
    pub returns: Vec<Return>,
    pub binding: Vec<(usize, usize)>,
    /// Running `sum ln |c~_i - c|` over returns to `Delta`, at the end of the run.
    pub log_product: f64,
    pub ce_slope: f64,
    pub base_iterates: usize,
}

impl RecurrenceReport {
    /// Sum of the depths of free returns.
    pub fn free_depth_sum(&self) -> i64 {
        self.returns.iter().filter(|r| !r.bound).map(|r| r.depth.abs()).sum()
    }
}

/// Bounded recurrence along `n` induced steps of the critical orbit.
pub fn br_check(ctx: &InducedContext, params: &RecurrenceParams, n: usize) -> Result<RecurrenceReport> {
    br_check_pinned(ctx, params, n, None)
}

pub fn br_check_pinned(
    ctx: &InducedContext,
    params: &RecurrenceParams,
    n: usize,
    pin: Option<&Pin>,
) -> Result<RecurrenceReport> {
    if !(ctx.gamma > 0.0) {
        return Err(Error::DisplacementSign { gamma: ctx.gamma });
    }
    let fam = &ctx.geo.fam;
    let p = ctx.native;
    let c = params.c;
    let mut x = c;
    let mut base = 0usize;
    let mut log_product = 0.0;
    let mut log_deriv = 0.0;
    let mut fit = SlopeFit::default();
    let mut first_fail = None;
    let mut returns = Vec::new();
    let mut binding = Vec::new();
    let mut bound_until = 0usize;
    for k in 1..=n {
        let steps = match ctx.domain_of(x) {
            Some(i) => i * ctx.geo.q() + 1,
            None => 1,
        };
        for _ in 0..steps {
            let d = fam.deriv(x, p);
            // the derivative along the orbit of f(c) starts after the first step
            if base > 0 {
                log_deriv += log_abs_deriv(d);
            }
            base += 1;
            x = match pin {
                Some(pin) if base >= pin.landing => pin.cycle[(base - pin.landing) % pin.cycle.len()],
                _ => fam.map(x, p),
            };
        }
        if k > 1 {
            fit.push((k - 1) as f64, log_deriv);
        }
        if params.in_delta(x) {
            let dist = (x - c).abs();
            log_product += if dist > 0.0 { dist.ln() } else { f64::NEG_INFINITY };
            let depth = params.depth(x).unwrap_or(i64::MAX);
            let bound = k <= bound_until;
            returns.push(Return { k, depth, bound });
            if x != c {
                let (pk, _) = binding_period(ctx, x, params.alpha, BINDING_CAP)?;
                binding.push((k, pk));
                bound_until = bound_until.max(k + pk);
            }
            if first_fail.is_none() && log_product < -params.alpha * k as f64 {
                first_fail = Some(k);
            }
        }
    }
    Ok(RecurrenceReport {
        l: ctx.l,
        theta: ctx.theta,
        gamma: ctx.gamma,
        horizon: n,
        br_pass: first_fail.is_none(),
        first_fail,
        returns,
        binding,
        log_product,
        ce_slope: if fit.count() >= 2 { fit.slope() } else { f64::NAN },
        base_iterates: base,
    })
}

/// The same condition on the base orbit `f^j(c)`, `j <= base_horizon`, with base time.
pub fn br_check_base(ctx: &InducedContext, params: &RecurrenceParams, base_horizon: usize) -> (bool, Option<usize>) {
    let fam = &ctx.geo.fam;
    let mut x = params.c;
    let mut log_product = 0.0;
    for j in 1..=base_horizon {
        x = fam.map(x, ctx.native);
        if params.in_delta(x) {
            log_product += (x - params.c).abs().ln();
            if log_product < -params.alpha * j as f64 {
                return (false, Some(j));
            }
        }
    }
    (true, None)
}

#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub theta: f64,
    pub gamma: f64,
    pub report: std::result::Result<RecurrenceReport, Error>,
}

#[derive(Clone, Debug)]
pub struct BrScan {
    pub l: usize,
    pub points: Vec<ScanPoint>,
}

impl BrScan {
    pub fn mask(&self) -> Vec<bool> {
        self.points
            .iter()
            .map(|p| p.report.as_ref().is_ok_and(|r| r.br_pass))
            .collect()
    }

    pub fn surviving_fraction(&self) -> f64 {
        let m = self.mask();
        m.iter().filter(|&&b| b).count() as f64 / m.len().max(1) as f64
    }

    /// Fraction surviving with positive CE slope.
    pub fn surviving_ce_fraction(&self) -> f64 {
        let n = self
            .points
            .iter()
            .filter(|p| p.report.as_ref().is_ok_and(|r| r.br_pass && r.ce_slope > 0.0))
            .count();
        n as f64 / self.points.len().max(1) as f64
    }
}

/// `br_check` on `grid` parameters `theta` evenly spread over `(center - eps, center + eps)`
/// in rung `l`.
pub fn br_scan(
    geo: &Geometry,
    ladder: &Ladder,
    l: usize,
    center: f64,
    eps: f64,
    grid: usize,
    params: &RecurrenceParams,
    n: usize,
) -> Result<BrScan> {
    if grid < 256 {
        return Err(Error::InsufficientPoints(grid));
    }
    if !(center - eps >= 0.0 && center + eps <= 1.0) {
        return Err(Error::Domain { what: "theta window", value: center });
    }
    let points = (0..grid)
        .into_par_iter()
        .map(|k| scan_point(geo, ladder, l, scan_theta(center, eps, grid, k), params, n))
        .collect();
    Ok(BrScan { l, points })
}

/// Midpoint of cell `k` of a `grid`-cell partition of `[center - eps, center + eps]`.
pub fn scan_theta(center: f64, eps: f64, grid: usize, k: usize) -> f64 {
    center - eps + 2.0 * eps * (k as f64 + 0.5) / grid as f64
}

pub fn scan_point(
    geo: &Geometry,
    ladder: &Ladder,
    l: usize,
    theta: f64,
    params: &RecurrenceParams,
    n: usize,
) -> ScanPoint {
    let gamma = ladder.theta_map(l, theta).unwrap_or(f64::NAN);
    let report = build_induced(geo, ladder, l, theta).and_then(|ctx| br_check(&ctx, params, n));
    ScanPoint { theta, gamma, report }
}
