//! The Mather invariant at the fold parameter, first-return maps near the fold
//! and Misiurewicz parameter sequences.

use rayon::prelude::*;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::phase::{circle_distance, Ladder, PhaseChart, Side};
use crate::roots::brent;
use crate::saddle_node::{newton_periodic, repelling_points_of_f0, PeriodicPointTrack};

pub const ORBIT_CAP: usize = 100_000;

/// Charts at `gamma = 0` on both sides of the fold.
#[derive(Clone, Debug)]
pub struct FoldCharts {
    pub stable: PhaseChart,
    pub unstable: PhaseChart,
}

impl FoldCharts {
    pub fn build(geo: &Geometry) -> Result<Self> {
        Ok(FoldCharts {
            stable: PhaseChart::build(geo, 0.0, Side::Stable)?,
            unstable: PhaseChart::build(geo, 0.0, Side::Unstable)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatherSample {
    pub tau: f64,
    /// Stable phase of the first hit of `[d, a)`; `None` when truncated.
    pub mbar: Option<f64>,
    /// Floor of the deepest unstable phase over re-entries to `(a, f^q(e)]`, capped above at 0
    /// and below at `-(j_max + 1)`.
    pub r: i64,
    /// Number of `f` iterates to the first hit of `[d, a)`.
    pub n: usize,
    pub landing: Option<f64>,
}

impl MatherSample {
    pub fn m(&self) -> Option<f64> {
        self.mbar.map(|v| v.rem_euclid(1.0))
    }

    pub fn in_v(&self, j: usize) -> bool {
        match self.mbar {
            Some(mb) => mb < j as f64 && (self.r.unsigned_abs() as usize) < j && self.n < j,
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discontinuity {
    pub tau: f64,
    pub jump: f64,
    /// Grid neighbours bracketing the jump.
    pub witness: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct MatherTable {
    pub samples: Vec<MatherSample>,
    pub discontinuities: Vec<Discontinuity>,
    pub j_max: usize,
    pub v_masks: Vec<Vec<bool>>,
}

/// Follow the `f_0` orbit of the point with unstable phase `tau` until it lands in `[d, a)`.
pub fn mather_point(geo: &Geometry, charts: &FoldCharts, tau: f64, j_max: usize) -> Result<MatherSample> {
    let cap = geo.deep + j_max + 8;
    let native = geo.native(0.0);
    let q = geo.q();
    let x = charts.unstable.tau_bar_inverse(tau)?;
    let a = geo.a();
    let mut y = x;
    let mut r: i64 = 0;
    // index of the last entry into (a, e); its unstable phase has floor -k where
    // k is the number of f^q steps needed to pass e
    let mut entry: Option<usize> = None;
    for i in 1..=ORBIT_CAP {
        y = geo.fam.map(y, native);
        if let Some(i0) = entry {
            if (i - i0) % q == 0 {
                if y >= geo.e {
                    r = r.min(-(((i - i0) / q) as i64));
                    entry = None;
                } else if (i - i0) / q > j_max {
                    r = r.min(-((j_max + 1) as i64));
                    entry = None;
                }
            }
        }
        if y >= geo.d && y < a {
            // the cap decides membership; the value comes from the double-double reduction
            let mbar = charts
                .stable
                .tau_bar_capped(y, cap)
                .ok()
                .and_then(|_| charts.stable.tau_bar(y).ok());
            return Ok(MatherSample {
                tau,
                mbar,
                r,
                n: i,
                landing: Some(y),
            });
        }
        if entry.is_none() && y > a && y < geo.e {
            entry = Some(i);
        }
    }
    Ok(MatherSample {
        tau,
        mbar: None,
        r,
        n: ORBIT_CAP,
        landing: None,
    })
}

/// Jump threshold (on the circle) for flagging a discontinuity of `M` between grid neighbours.
pub const JUMP_THRESHOLD: f64 = 0.1;

pub fn mather_grid(geo: &Geometry, charts: &FoldCharts, grid_size: usize, j_max: usize) -> Result<MatherTable> {
    let samples: Vec<MatherSample> = (0..grid_size)
        .into_par_iter()
        .map(|k| mather_point(geo, charts, k as f64 / grid_size as f64, j_max))
        .collect::<Result<Vec<_>>>()?;
    let mut discontinuities = Vec::new();
    for k in 0..grid_size {
        let k1 = (k + 1) % grid_size;
        let (Some(m0), Some(m1)) = (samples[k].m(), samples[k1].m()) else {
            continue;
        };
        if circle_distance(m0, m1) > JUMP_THRESHOLD {
            let hi = if k1 == 0 { 1.0 } else { samples[k1].tau };
            if let Some(d) = refine_jump(geo, charts, samples[k].tau, hi, (k, k1), j_max) {
                discontinuities.push(d);
            }
        }
    }
    let v_masks = (0..=j_max)
        .map(|j| samples.iter().map(|s| s.in_v(j)).collect())
        .collect();
    Ok(MatherTable {
        samples,
        discontinuities,
        j_max,
        v_masks,
    })
}

fn refine_jump(
    geo: &Geometry,
    charts: &FoldCharts,
    lo: f64,
    hi: f64,
    witness: (usize, usize),
    j_max: usize,
) -> Option<Discontinuity> {
    let m_at = |t: f64| mather_point(geo, charts, t.rem_euclid(1.0), j_max).ok().and_then(|s| s.m());
    let (mut lo, mut hi) = (lo, hi);
    let (mut mlo, mut mhi) = (m_at(lo)?, m_at(hi)?);
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let Some(mm) = m_at(mid) else { break };
        if circle_distance(mlo, mm) >= circle_distance(mm, mhi) {
            hi = mid;
            mhi = mm;
        } else {
            lo = mid;
            mlo = mm;
        }
    }
    Some(Discontinuity {
        tau: 0.5 * (lo + hi),
        jump: circle_distance(mlo, mhi),
        witness,
    })
}

impl MatherTable {
    pub fn v_set(&self, j: usize) -> (f64, Vec<bool>) {
        // R saturates at j_max + 1, so V(j) is only resolved up to j_max
        let mask = self.v_masks[j.min(self.j_max)].clone();
        let m = mask.iter().filter(|&&b| b).count() as f64 / mask.len().max(1) as f64;
        (m, mask)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }
}

/// Normalised phase of the first return to `E^{-i}` of the point of `E^{-i}` with phase `tau`.
pub fn first_return_phase(geo: &Geometry, unstable: &PhaseChart, i: usize, tau: f64) -> Result<f64> {
    let native = unstable.native;
    let x = unstable.tau_bar_inverse(tau - i as f64)?;
    let lo = unstable.tau_bar_inverse(-(i as f64))?;
    let hi = unstable.tau_bar_inverse(-(i as f64) + 1.0)?;
    let mut y = x;
    for _ in 0..ORBIT_CAP {
        y = geo.fam.map(y, native);
        if y >= lo && y < hi {
            return Ok(unstable.tau_bar(y)? + i as f64);
        }
    }
    Err(Error::Escape("first return"))
}

/// Grid indices usable as samples of `V(i-1)` for the return map on `E^{-i}`: interior
/// points of continuity intervals of `M` (a sample next to a jump can cross it under the
/// `O(gamma)` displacement of the chart).
pub fn return_map_samples(table: &MatherTable, i: usize) -> Vec<usize> {
    let n = table.samples.len();
    if i == 0 {
        return Vec::new();
    }
    (0..n)
        .filter(|&k| {
            let nb = [(k + n - 1) % n, k, (k + 1) % n];
            nb.iter().all(|&j| table.samples[j].in_v(i - 1))
                && nb.windows(2).all(|w| match (table.samples[w[0]].m(), table.samples[w[1]].m()) {
                    (Some(a), Some(b)) => circle_distance(a, b) < JUMP_THRESHOLD,
                    _ => false,
                })
        })
        .collect()
}

/// Smallest domain index `i` with at least `samples` usable return-map samples.
pub fn smallest_return_domain(table: &MatherTable, samples: usize) -> Option<usize> {
    (1..=table.j_max + 1).find(|&i| return_map_samples(table, i).len() >= samples)
}

/// Sup over `samples` eligible phases of the circle distance between the
/// normalised first-return map on `E^{-i}` at `g_l(theta)` and `M - theta`.
pub fn return_map_residual(
    geo: &Geometry,
    ladder: &Ladder,
    table: &MatherTable,
    i: usize,
    l: usize,
    theta: f64,
    samples: usize,
) -> Result<f64> {
    let gamma = ladder.theta_map(l, theta)?;
    let unstable = PhaseChart::build(geo, gamma, Side::Unstable)?;
    let stable = PhaseChart::build(geo, gamma, Side::Stable)?;
    // chart value of theta at this parameter
    let th = stable.tau_bar(geo.e)? - l as f64;
    let eligible = return_map_samples(table, i);
    if eligible.len() < samples {
        return Err(Error::InsufficientPoints(eligible.len()));
    }
    let eligible: Vec<&MatherSample> = eligible.iter().map(|&k| &table.samples[k]).collect();
    let take = samples.min(eligible.len());
    let mut worst: f64 = 0.0;
    for k in 0..take {
        let s = eligible[k * eligible.len() / take];
        let Some(m) = s.m() else { continue };
        let kappa = first_return_phase(geo, &unstable, i, s.tau)?;
        worst = worst.max(circle_distance(kappa, (m - th).rem_euclid(1.0)));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MisiurewiczEntry {
    pub l: usize,
    pub gamma: f64,
    /// Correction below the resolution of `gamma`; the root is `gamma + gamma_lo`.
    pub gamma_lo: f64,
    pub theta: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct MisiurewiczSequence {
    pub target_period: usize,
    pub target_seed: f64,
    pub m: usize,
    pub entries: Vec<std::result::Result<MisiurewiczEntry, Error>>,
}

impl MisiurewiczSequence {
    pub fn ok_entries(&self) -> Vec<&MisiurewiczEntry> {
        self.entries.iter().filter_map(|e| e.as_ref().ok()).collect()
    }
}

/// Continuation of the target periodic point to native parameter `native`.
pub fn target_at(geo: &Geometry, target: &PeriodicPointTrack, native: f64) -> Option<f64> {
    newton_periodic(&geo.fam, target.points[0], native, target.period)
}

fn landing_residual(geo: &Geometry, target: &PeriodicPointTrack, l: usize, m: usize, gamma: f64) -> f64 {
    let native = geo.native(gamma);
    let Some(y) = target_at(geo, target, native) else {
        return f64::NAN;
    };
    geo.fam.iterate_n(geo.c(), native, l * geo.q() + m) - y
}

fn target_dd(geo: &Geometry, target: &PeriodicPointTrack, p: Dd) -> Option<Dd> {
    let fam = &geo.fam;
    let mut y = Dd::new(newton_periodic(fam, target.points[0], p.hi, target.period)?);
    for _ in 0..2 {
        let g = fam.iterate_dd(y, p, target.period) - y;
        let (_, d) = fam.iterate_deriv(y.hi, p.hi, target.period);
        y = y - Dd::new(g.to_f64() / (d - 1.0));
    }
    Some(y)
}

fn landing_residual_dd(geo: &Geometry, target: &PeriodicPointTrack, l: usize, m: usize, gamma: Dd) -> f64 {
    let p = geo.fam.native_dd(gamma);
    let Some(y) = target_dd(geo, target, p) else {
        return f64::NAN;
    };
    (geo.fam.iterate_dd(Dd::new(geo.c()), p, l * geo.q() + m) - y).to_f64()
}

// secant steps on the double-double parameter
fn polish_root(geo: &Geometry, target: &PeriodicPointTrack, l: usize, m: usize, gamma: f64) -> (Dd, f64) {
    let mut g0 = Dd::new(gamma);
    let mut r0 = landing_residual_dd(geo, target, l, m, g0);
    let mut g1 = Dd::new(gamma * (1.0 + 1e-13));
    let mut r1 = landing_residual_dd(geo, target, l, m, g1);
    for _ in 0..8 {
        if !(r1.is_finite() && r0.is_finite()) || r1 == r0 {
            break;
        }
        let step = (g1 - g0).to_f64() * r1 / (r1 - r0);
        let g2 = g1 - Dd::new(step);
        let r2 = landing_residual_dd(geo, target, l, m, g2);
        (g0, r0, g1, r1) = (g1, r1, g2, r2);
        if r1 == 0.0 || step.abs() < 1e-30 {
            break;
        }
    }
    if r1.abs() <= r0.abs() {
        (g1, r1.abs())
    } else {
        (g0, r0.abs())
    }
}

fn rung_roots(geo: &Geometry, ladder: &Ladder, target: &PeriodicPointTrack, l: usize, m: usize, grid: usize) -> Vec<f64> {
    let (g_hi, g_lo) = (ladder.gamma(l), ladder.gamma(l + 1));
    let f = |g: f64| landing_residual(geo, target, l, m, g);
    let mut roots = Vec::new();
    let mut x0 = g_lo;
    let mut f0 = f(x0);
    for k in 1..=grid {
        let x1 = g_lo + (g_hi - g_lo) * k as f64 / grid as f64;
        let f1 = f(x1);
        if f0.is_finite() && f1.is_finite() && f0.signum() != f1.signum() {
            if let Some(r) = brent(f, x0, x1, 1e-20, 300) {
                if r > g_lo && r < g_hi {
                    roots.push(r);
                }
            }
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Parameters `gamma*_l` in each rung with `f^{lq+m}(c) = y*`, following one root branch.
pub fn misiurewicz_sequence(
    geo: &Geometry,
    ladder: &Ladder,
    target: &PeriodicPointTrack,
    l_min: usize,
    l_max: usize,
) -> Result<MisiurewiczSequence> {
    const GRID: usize = 256;
    const MAX_OFFSET: usize = 40;
    let mut chosen = None;
    for m in 1..=MAX_OFFSET {
        let roots = rung_roots(geo, ladder, target, l_min, m, GRID);
        if let Some(&r) = roots.first() {
            // prefer the root farthest from the rung ends
            let best = roots
                .iter()
                .copied()
                .max_by(|a, b| {
                    let ta = ladder.theta_of_gamma(*a).map(|t| t.1).unwrap_or(0.0);
                    let tb = ladder.theta_of_gamma(*b).map(|t| t.1).unwrap_or(0.0);
                    (ta.min(1.0 - ta)).total_cmp(&tb.min(1.0 - tb))
                })
                .unwrap_or(r);
            chosen = Some((m, best));
            break;
        }
    }
    let (m, first) = chosen.ok_or(Error::NoRootInRung { l: l_min })?;
    let mut prev_theta = ladder.theta_of_gamma(first)?.1;
    let mut entries = Vec::new();
    for l in l_min..=l_max {
        let roots = rung_roots(geo, ladder, target, l, m, GRID);
        let mut best: Option<(f64, f64)> = None;
        for r in roots {
            let th = ladder.theta_of_gamma(r)?.1;
            if best.map_or(true, |(_, bt)| (th - prev_theta).abs() < (bt - prev_theta).abs()) {
                best = Some((r, th));
            }
        }
        match best {
            Some((g, th)) => {
                prev_theta = th;
                let (root, residual) = polish_root(geo, target, l, m, g);
                entries.push(Ok(MisiurewiczEntry {
                    l,
                    gamma: root.hi,
                    gamma_lo: root.lo,
                    theta: th,
                    residual,
                }));
            }
            None => entries.push(Err(Error::NoRootInRung { l })),
        }
    }
    Ok(MisiurewiczSequence {
        target_period: target.period,
        target_seed: target.points[0],
        m,
        entries,
    })
}

/// The period-1 repeller `z0` of the geometry as a target for `misiurewicz_sequence`.
pub fn repeller_target(geo: &Geometry) -> Result<PeriodicPointTrack> {
    repelling_points_of_f0(&geo.fam, &geo.sn, 1, &geo.ebar)
        .into_iter()
        .find(|t| (t.points[0] - geo.z0).abs() < 1e-9)
        .ok_or(Error::NoConvergence { what: "repeller target" })
}

/// First repelling periodic point of exact period `period` of `f_0` whose orbit avoids `Ebar`;
/// the geometry's repeller `z0` for period 1.
pub fn periodic_target(geo: &Geometry, period: usize) -> Result<PeriodicPointTrack> {
    if period == 1 {
        return repeller_target(geo);
    }
    repelling_points_of_f0(&geo.fam, &geo.sn, period, &geo.ebar)
        .into_iter()
        .find(|t| t.period == period)
        .ok_or(Error::NoConvergence { what: "periodic target" })
}

/// Coverage of `[f^2(c), f(c)]` by the images of `(a, e]` under `f_0`: largest uncovered gap.
pub fn unstable_manifold_gap(geo: &Geometry, iterations: usize) -> f64 {
    let native = geo.native(0.0);
    let fam = &geo.fam;
    let c = geo.c();
    let image = |lo: f64, hi: f64| -> (f64, f64) {
        let (u, v) = (fam.map(lo, native), fam.map(hi, native));
        if lo < c && hi > c {
            (u.min(v), fam.map(c, native))
        } else {
            (u.min(v), u.max(v))
        }
    };
    let mut cur = (geo.a(), geo.e);
    let mut pieces = vec![cur];
    for _ in 0..iterations {
        cur = image(cur.0, cur.1);
        pieces.push(cur);
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lo = fam.map(fam.map(c, native), native);
    let hi = fam.map(c, native);
    let mut reach = lo;
    let mut gap: f64 = 0.0;
    for (a, b) in pieces {
        if a > reach {
            gap = gap.max(a.min(hi) - reach);
        }
        reach = reach.max(b);
    }
    gap.max(hi - reach).max(0.0)
}
