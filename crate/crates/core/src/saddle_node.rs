//! Fold orbit location and continuation of hyperbolic periodic points.

use crate::error::{Error, Result};
use crate::family::UnimodalFamily;

#[derive(Clone, Debug, PartialEq)]
pub struct SaddleNodeData {
    /// Native parameter at the fold.
    pub native: f64,
    pub q: usize,
    /// Orbit point nearest the critical point.
    pub a: f64,
    pub orbit_of_a: Vec<f64>,
    /// `D^2 f^q(a)`.
    pub second_deriv: f64,
    /// `d/dgamma f^q(a)`.
    pub param_deriv: f64,
}

const PARAM_STEP: f64 = 1e-7;

fn fold_residual(fam: &UnimodalFamily, q: usize, p: f64, x: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let j = fam.iterate_jet(x, p, q);
    let jp = fam.iterate_jet(x, p + PARAM_STEP, q);
    let jm = fam.iterate_jet(x, p - PARAM_STEP, q);
    let dfp = (jp.f - jm.f) / (2.0 * PARAM_STEP);
    let ddfp = (jp.df - jm.df) / (2.0 * PARAM_STEP);
    ([j.f - x, j.df - 1.0], [[dfp, j.df - 1.0], [ddfp, j.d2f]])
}

/// Newton iteration on `(f^q(x) - x, Df^q(x) - 1)` in `(p, x)` from a native-parameter seed.
pub fn locate_saddle_node(fam: &UnimodalFamily, q: usize, seed: (f64, f64)) -> Result<SaddleNodeData> {
    let (lo, hi) = fam.native_range();
    let (mut p, mut x) = seed;
    let mut converged = false;
    for _ in 0..100 {
        if !(lo..=hi).contains(&p) || !(0.0..=1.0).contains(&x) {
            break;
        }
        let (g, m) = fold_residual(fam, q, p, x);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dp = (g[0] * m[1][1] - m[0][1] * g[1]) / det;
        let dx = (m[0][0] * g[1] - m[1][0] * g[0]) / det;
        p -= dp;
        x -= dx;
        if dp.abs() < 1e-15 * p.abs().max(1.0) && dx.abs() < 1e-15 {
            converged = true;
            break;
        }
    }
    let inside = (lo..=hi).contains(&p) && (0.0..=1.0).contains(&x);
    if !inside {
        return Err(Error::NoConvergence { what: "saddle-node" });
    }
    let j = fam.iterate_jet(x, p, q);
    if !converged && ((j.f - x).abs() > 1e-12 || (j.df - 1.0).abs() > 1e-9) {
        return Err(Error::NoConvergence { what: "saddle-node" });
    }
    let mut orbit = Vec::with_capacity(q);
    let mut y = x;
    for _ in 0..q {
        orbit.push(y);
        y = fam.map(y, p);
    }
    // the orbit must have exact minimal period q
    for k in 1..q {
        if q % k == 0 && (fam.iterate_n(x, p, k) - x).abs() < 1e-8 {
            return Err(Error::NoConvergence { what: "saddle-node" });
        }
    }
    let c = fam.critical_point();
    let a = orbit
        .iter()
        .copied()
        .min_by(|u, v| (u - c).abs().total_cmp(&(v - c).abs()))
        .unwrap_or(x);
    let ja = fam.iterate_jet(a, p, q);
    let fp = fam.iterate_n(a, p + PARAM_STEP, q);
    let fm = fam.iterate_n(a, p - PARAM_STEP, q);
    let param_deriv = -(fp - fm) / (2.0 * PARAM_STEP);
    if param_deriv.abs() < 1e-8 {
        // transcritical or flip point: not a fold
        return Err(Error::NoConvergence { what: "saddle-node" });
    }
    if ja.d2f.abs() < 1e-6 {
        return Err(Error::Degenerate(ja.d2f));
    }
    let orbit_from_a = {
        let mut o = Vec::with_capacity(q);
        let mut y = a;
        for _ in 0..q {
            o.push(y);
            y = fam.map(y, p);
        }
        o
    };
    Ok(SaddleNodeData {
        native: p,
        q,
        a,
        orbit_of_a: orbit_from_a,
        second_deriv: ja.d2f,
        param_deriv,
    })
}

fn displacement_sign_changes(fam: &UnimodalFamily, sn: &SaddleNodeData, native: f64, half: f64) -> (usize, f64) {
    let q = sn.q;
    let n = 4000;
    let mut changes = 0;
    let mut min_abs = f64::INFINITY;
    let mut prev = f64::NAN;
    for k in 0..=n {
        let x = sn.a - half + 2.0 * half * k as f64 / n as f64;
        let g = fam.iterate_n(x, native, q) - x;
        min_abs = min_abs.min(g.abs());
        if k > 0 && g.signum() != prev.signum() {
            changes += 1;
        }
        prev = g;
    }
    (changes, min_abs)
}

/// Native parameter `sn.native - gamma`, after checking the orientation once.
pub fn gamma_convention(fam: &UnimodalFamily, sn: &SaddleNodeData, gamma: f64) -> Result<f64> {
    if gamma.abs() > 0.05 {
        return Err(Error::Domain {
            what: "gamma",
            value: gamma,
        });
    }
    validate_orientation(fam, sn)?;
    Ok(sn.native - gamma)
}

pub fn validate_orientation(fam: &UnimodalFamily, sn: &SaddleNodeData) -> Result<()> {
    let half = 0.01;
    let (after, min_after) = displacement_sign_changes(fam, sn, sn.native - 1e-4, half);
    if after != 0 || min_after <= 0.0 {
        return Err(Error::Orientation(format!(
            "displacement vanishes near a at gamma = +1e-4 ({after} sign changes)"
        )));
    }
    let (before, _) = displacement_sign_changes(fam, sn, sn.native + 1e-4, half);
    if before != 2 {
        return Err(Error::Orientation(format!(
            "expected two fixed points of f^q near a at gamma = -1e-4, found {before}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPointTrack {
    pub period: usize,
    pub gammas: Vec<f64>,
    pub points: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Grid value at which continuation stopped early, if any.
    pub stopped_at: Option<f64>,
}

impl PeriodicPointTrack {
    fn lookup(&self, gamma: f64, vals: &[f64]) -> Option<f64> {
        let g = &self.gammas;
        if g.is_empty() {
            return None;
        }
        if g.len() == 1 {
            return (g[0] == gamma).then_some(vals[0]);
        }
        let (lo, hi) = (g[0].min(g[g.len() - 1]), g[0].max(g[g.len() - 1]));
        if gamma < lo || gamma > hi {
            return None;
        }
        for k in 0..g.len() - 1 {
            let (a, b) = (g[k], g[k + 1]);
            if (gamma - a) * (gamma - b) <= 0.0 {
                let t = if b == a { 0.0 } else { (gamma - a) / (b - a) };
                return Some(vals[k] + t * (vals[k + 1] - vals[k]));
            }
        }
        None
    }

    pub fn point_at(&self, gamma: f64) -> Option<f64> {
        self.lookup(gamma, &self.points)
    }

    pub fn multiplier_at(&self, gamma: f64) -> Option<f64> {
        self.lookup(gamma, &self.multipliers)
    }
}

/// Multiplier of the period-`p` orbit through `x` by the chain rule.
pub fn multiplier(fam: &UnimodalFamily, x: f64, native: f64, period: usize) -> f64 {
    fam.iterate_deriv(x, native, period).1
}

/// Newton solve of `f^p(x) = x` near `x`.
pub fn newton_periodic(fam: &UnimodalFamily, mut x: f64, native: f64, period: usize) -> Option<f64> {
    for _ in 0..60 {
        let (y, d) = fam.iterate_deriv(x, native, period);
        let g = y - x;
        let dg = d - 1.0;
        if dg == 0.0 || !dg.is_finite() {
            return None;
        }
        let step = g / dg;
        x -= step;
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        if step.abs() < 1e-15 {
            break;
        }
    }
    let r = fam.iterate_n(x, native, period) - x;
    (r.abs() < 1e-12).then_some(x)
}

fn minimal_period(fam: &UnimodalFamily, x: f64, native: f64, period: usize) -> usize {
    for k in 1..period {
        if period % k == 0 && (fam.iterate_n(x, native, k) - x).abs() < 1e-9 {
            return k;
        }
    }
    period
}

fn in_any(x: f64, set: &[(f64, f64)]) -> bool {
    set.iter().any(|&(lo, hi)| x >= lo && x <= hi)
}

/// Repelling periodic points of `f_0` of period up to `max_period` whose orbits avoid `avoid`.
pub fn repelling_points_of_f0(
    fam: &UnimodalFamily,
    sn: &SaddleNodeData,
    max_period: usize,
    avoid: &[(f64, f64)],
) -> Vec<PeriodicPointTrack> {
    let native = sn.native;
    let max_period = max_period.min(12);
    let grid = 100_000;
    let mut out: Vec<PeriodicPointTrack> = Vec::new();
    for period in 1..=max_period {
        let mut found: Vec<f64> = Vec::new();
        let g = |x: f64| fam.iterate_n(x, native, period) - x;
        let mut x0 = 0.0;
        let mut g0 = g(x0);
        if g0 == 0.0 {
            found.push(0.0);
        }
        for k in 1..=grid {
            let x1 = k as f64 / grid as f64;
            let g1 = g(x1);
            if g1 == 0.0 {
                found.push(x1);
            } else if g0 != 0.0 && g0.signum() != g1.signum() {
                let (mut lo, mut hi) = (x0, x1);
                for _ in 0..60 {
                    let m = 0.5 * (lo + hi);
                    if g(m).signum() == g0.signum() {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let r = newton_periodic(fam, 0.5 * (lo + hi), native, period).unwrap_or(0.5 * (lo + hi));
                found.push(r);
            }
            x0 = x1;
            g0 = g1;
        }
        found.sort_by(f64::total_cmp);
        found.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        for x in found {
            if (fam.iterate_n(x, native, period) - x).abs() >= 1e-12 {
                continue;
            }
            if minimal_period(fam, x, native, period) != period {
                continue;
            }
            let m = multiplier(fam, x, native, period);
            if m.abs() <= 1.0 + 1e-6 {
                continue;
            }
            let mut y = x;
            let mut clear = true;
            for _ in 0..period {
                if in_any(y, avoid) {
                    clear = false;
                    break;
                }
                y = fam.map(y, native);
            }
            if clear {
                out.push(PeriodicPointTrack {
                    period,
                    gammas: vec![0.0],
                    points: vec![x],
                    multipliers: vec![m],
                    stopped_at: None,
                });
            }
        }
    }
    out
}

/// Newton continuation of a hyperbolic periodic point along `gamma_grid`, with `gamma = native_0 - native`.
pub fn continue_periodic_point(
    fam: &UnimodalFamily,
    sn: &SaddleNodeData,
    seed: (usize, f64, f64),
    gamma_grid: &[f64],
) -> Result<PeriodicPointTrack> {
    let (period, x_seed, g_seed) = seed;
    let m0 = multiplier(fam, x_seed, sn.native - g_seed, period);
    if (m0 - 1.0).abs() <= 0.05 || (m0.abs() - 1.0).abs() <= 0.05 {
        return Err(Error::ContinuationLost { gamma: g_seed });
    }
    let mut track = PeriodicPointTrack {
        period,
        gammas: Vec::new(),
        points: Vec::new(),
        multipliers: Vec::new(),
        stopped_at: None,
    };
    let mut x = x_seed;
    for &g in gamma_grid {
        let native = sn.native - g;
        let next = newton_periodic(fam, x, native, period);
        let Some(y) = next else {
            track.stopped_at = Some(g);
            break;
        };
        let m = multiplier(fam, y, native, period);
        if m.abs() <= 1.0 + 1e-6 {
            track.stopped_at = Some(g);
            break;
        }
        track.gammas.push(g);
        track.points.push(y);
        track.multipliers.push(m);
        x = y;
    }
    if track.points.is_empty() {
        return Err(Error::ContinuationLost {
            gamma: gamma_grid.first().copied().unwrap_or(g_seed),
        });
    }
    Ok(track)
}
