//! Time coordinates of the embedding flow near the fold, the ladder `gamma_l`
//! and the reparameterisation `g_l`.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Surrogate};
use crate::roots::{bisect_predicate, brent, gauss_legendre, GL_ORDER};

const MAX_STEPS: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Stable,
    Unstable,
}

#[derive(Clone, Debug)]
pub struct PhaseChart {
    pub gamma: f64,
    pub native: f64,
    pub side: Side,
    pub q: usize,
    pub d: f64,
    pub e: f64,
    pub b0: f64,
    pub b1: f64,
    geo: Geometry,
    edges: Vec<f64>,
    cum: Vec<f64>,
    norm: f64,
    // f^q(b0) - b1, carried below f64 resolution
    b1_lo: f64,
    base_offset: f64,
}

#[inline]
fn field(geo: &Geometry, z: f64, native: f64) -> f64 {
    match geo.surrogate {
        Surrogate::Euler => displacement(geo, z, native),
        Surrogate::Corrected => {
            let j = geo.fam.iterate_jet(z, native, geo.q());
            let d0 = displacement(geo, z, native);
            let d1 = j.df - 1.0;
            let d2 = j.d2f;
            d0 * (1.0 - 0.5 * d1 + d1 * d1 / 3.0) + d0 * d0 * d2 / 12.0
        }
    }
}

// f^q(z) - z without the cancellation of an f64 difference near the fold
fn displacement(geo: &Geometry, z: f64, native: f64) -> f64 {
    (geo.fam.iterate_dd(Dd::new(z), Dd::new(native), geo.q()) - Dd::new(z)).to_f64()
}

/// Point of least displacement of `f^q_gamma` on the lap (the bottleneck).
pub fn bottleneck(geo: &Geometry, native: f64) -> f64 {
    let q = geo.q();
    let mut x = geo.a();
    for _ in 0..60 {
        let j = geo.fam.iterate_jet(x, native, q);
        if j.d2f == 0.0 {
            break;
        }
        let step = (j.df - 1.0) / j.d2f;
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

impl PhaseChart {
    pub fn build(geo: &Geometry, gamma: f64, side: Side) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::DisplacementSign { gamma });
        }
        let native = geo.native(gamma);
        let (b0, b1) = if gamma == 0.0 {
            match side {
                Side::Stable => {
                    let b0 = geo.fam.iterate_n(geo.d, native, geo.q() * geo.deep);
                    (b0, geo.fq(b0, native))
                }
                Side::Unstable => {
                    let mut b1 = geo.e;
                    for _ in 0..geo.deep - 1 {
                        b1 = geo.fq_inverse(b1, native).ok_or(Error::OutOfDomain { x: b1 })?;
                    }
                    let b0 = geo.fq_inverse(b1, native).ok_or(Error::OutOfDomain { x: b1 })?;
                    (b0, b1)
                }
            }
        } else {
            let bs = bottleneck(geo, native);
            if geo.fq(bs, native) <= bs {
                return Err(Error::DisplacementSign { gamma });
            }
            match side {
                Side::Stable => (bs, geo.fq(bs, native)),
                Side::Unstable => {
                    let b0 = geo.fq_inverse(bs, native).ok_or(Error::OutOfDomain { x: bs })?;
                    (b0, bs)
                }
            }
        };
        let mut chart = PhaseChart {
            gamma,
            native,
            side,
            q: geo.q(),
            d: geo.d,
            e: geo.e,
            b0,
            b1,
            geo: geo.clone(),
            edges: Vec::new(),
            cum: Vec::new(),
            norm: 1.0,
            b1_lo: 0.0,
            base_offset: 0.0,
        };
        chart.b1_lo = (chart.fq_dd(b0) - Dd::new(b1)).to_f64();
        chart.refine()?;
        // normalised at the base point itself: the f64 orbit that placed b0 is off by
        // roundings worth ~1e-8 in phase near the fold
        chart.base_offset = chart.tau_raw(match side {
            Side::Stable => geo.d,
            Side::Unstable => geo.e,
        })?;
        Ok(chart)
    }

    fn panels(&self, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (xs, ws) = gauss_legendre();
        let mut edges = Vec::with_capacity(count + 1);
        let mut cum = Vec::with_capacity(count + 1);
        let w = (self.b1 - self.b0) / count as f64;
        let mut s = 0.0;
        cum.push(0.0);
        edges.push(self.b0);
        for k in 0..count {
            let a = self.b0 + w * k as f64;
            let b = if k + 1 == count { self.b1 } else { a + w };
            let h = 0.5 * (b - a);
            let m = 0.5 * (a + b);
            let mut part = 0.0;
            for i in 0..GL_ORDER {
                let v = field(&self.geo, m + h * xs[i], self.native);
                if !(v > 0.0) {
                    return Err(Error::NonMonotone);
                }
                part += ws[i] / v;
            }
            s += part * h;
            edges.push(b);
            cum.push(s);
        }
        Ok((edges, cum))
    }

    fn refine(&mut self) -> Result<()> {
        let probes: Vec<f64> = (0..20)
            .map(|k| self.b0 + (self.b1 - self.b0) * (k as f64 + 0.5) / 20.0)
            .collect();
        let mut count = 2;
        let (e, c) = self.panels(count)?;
        self.install(e, c);
        let mut prev: Vec<f64> = probes.iter().map(|&y| self.psi(y)).collect();
        loop {
            count *= 2;
            let (e, c) = self.panels(count)?;
            self.install(e, c);
            let cur: Vec<f64> = probes.iter().map(|&y| self.psi(y)).collect();
            let diff = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if diff < 1e-14 || count >= 1024 {
                break;
            }
            prev = cur;
        }
        if self.cum.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotone);
        }
        Ok(())
    }

    fn fq_dd(&self, x: f64) -> Dd {
        self.geo.fam.iterate_dd(Dd::new(x), Dd::new(self.native), self.q)
    }

    fn install(&mut self, edges: Vec<f64>, cum: Vec<f64>) {
        let tail = self.b1_lo / field(&self.geo, self.b1, self.native);
        self.norm = *cum.last().unwrap_or(&1.0) + tail;
        self.edges = edges;
        self.cum = cum;
    }

    /// Normalised phase of `y` in the fundamental domain `[b0, b1)`.
    pub fn psi(&self, y: f64) -> f64 {
        let k = match self.edges.binary_search_by(|e| e.total_cmp(&y)) {
            Ok(i) => i.min(self.edges.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.edges.len() - 2),
        };
        let a = self.edges[k];
        if y == a {
            return self.cum[k] / self.norm;
        }
        let (xs, ws) = gauss_legendre();
        let h = 0.5 * (y - a);
        let m = 0.5 * (y + a);
        let mut part = 0.0;
        for i in 0..GL_ORDER {
            part += ws[i] / field(&self.geo, m + h * xs[i], self.native);
        }
        (self.cum[k] + part * h) / self.norm
    }

    /// Inverse of `psi` on the domain.
    pub fn psi_inverse(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.b0;
        }
        let target = t;
        let (mut lo, mut hi) = (self.b0, self.b1);
        let mut y = self.b0 + t * (self.b1 - self.b0);
        for _ in 0..100 {
            let g = self.psi(y) - target;
            if g > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let slope = 1.0 / (field(&self.geo, y, self.native) * self.norm);
            let mut next = y - g / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 4.0 * f64::EPSILON * y.abs() {
                return next;
            }
            y = next;
        }
        y
    }

    /// Domain index and representative: `f^{qn}(x) = y` with `y in [b0, b1)`.
    pub fn reduce(&self, x: f64) -> Result<(f64, i64)> {
        self.reduce_capped(x, MAX_STEPS)
    }

    /// As `reduce`, failing once more than `cap` applications of `f^q` or its inverse are needed.
    pub fn reduce_capped(&self, x: f64, cap: usize) -> Result<(f64, i64)> {
        self.check_domain(x)?;
        let mut y = x;
        let mut n: i64 = 0;
        let mut steps = 0;
        while y < self.b0 {
            y = self.geo.fq(y, self.native);
            n += 1;
            steps += 1;
            if steps > cap || !(y < self.geo.lap.1) {
                return Err(Error::OutOfDomain { x });
            }
        }
        while y >= self.b1 {
            y = self
                .geo
                .fq_inverse(y, self.native)
                .ok_or(Error::OutOfDomain { x })?;
            n -= 1;
            steps += 1;
            if steps > cap {
                return Err(Error::OutOfDomain { x });
            }
        }
        if y < self.b0 {
            // rounding on the inverse branch; nudge back into the domain
            y = self.b0;
        }
        Ok((y, n))
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let ok = if self.gamma == 0.0 {
            let a = self.geo.a();
            match self.side {
                Side::Stable => x < a && x > self.geo.lap.0,
                Side::Unstable => x > a && x < self.geo.lap.1,
            }
        } else {
            x > self.geo.lap.0 && x < self.geo.lap.1
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x })
        }
    }

    // reduce with the orbit carried in double-double; near the fold one f64 rounding
    // is worth 1e-16 / (f^q(z) - z) in phase
    fn reduce_fine(&self, x: f64) -> Result<(Dd, i64)> {
        self.check_domain(x)?;
        let p = Dd::new(self.native);
        let mut y = Dd::new(x);
        let mut n: i64 = 0;
        while y.hi < self.b0 {
            y = self.geo.fam.iterate_dd(y, p, self.q);
            n += 1;
            if n as usize > MAX_STEPS || !(y.hi < self.geo.lap.1) {
                return Err(Error::OutOfDomain { x });
            }
        }
        while y.hi >= self.b1 {
            let z = self.geo.fq_inverse_dd(y, self.native).ok_or(Error::OutOfDomain { x })?;
            y = z;
            n -= 1;
            if (-n) as usize > MAX_STEPS {
                return Err(Error::OutOfDomain { x });
            }
        }
        if y.hi < self.b0 {
            y = Dd::new(self.b0);
        }
        Ok((y, n))
    }

    fn tau_raw(&self, x: f64) -> Result<f64> {
        let (y, n) = self.reduce_fine(x)?;
        Ok(self.psi_fine(y.hi, y.lo) - n as f64)
    }

    fn psi_fine(&self, y: f64, lo: f64) -> f64 {
        self.psi(y) + lo / (field(&self.geo, y, self.native) * self.norm)
    }

    /// `tau_bar` restricted to points at most `cap` domains from the chart's bottleneck domain.
    pub fn tau_bar_capped(&self, x: f64, cap: usize) -> Result<f64> {
        let (y, n) = self.reduce_capped(x, cap)?;
        Ok(self.psi(y) - n as f64 - self.base_offset)
    }

    /// `tau_bar`, zero at `d` (stable side) or `e` (unstable side).
    pub fn tau_bar(&self, x: f64) -> Result<f64> {
        Ok(self.tau_raw(x)? - self.base_offset)
    }

    /// Phase in `[0, 1)`.
    pub fn tau(&self, x: f64) -> Result<f64> {
        Ok(self.tau_bar(x)?.rem_euclid(1.0))
    }

    /// Point `x` with `tau_bar(x) = t`.
    pub fn tau_bar_inverse(&self, t: f64) -> Result<f64> {
        let total = t + self.base_offset;
        let k = total.floor();
        let y = self.psi_inverse(total - k);
        let mut x = y;
        let steps = k as i64;
        if steps >= 0 {
            for _ in 0..steps {
                x = self.geo.fq(x, self.native);
            }
        } else {
            for _ in 0..(-steps) {
                x = self.geo.fq_inverse(x, self.native).ok_or(Error::OutOfDomain { x })?;
            }
        }
        Ok(x)
    }
}

/// Total flow time from `d` to `e` at `gamma > 0`, measured in the stable chart.
pub fn crossing_time(geo: &Geometry, gamma: f64) -> Result<f64> {
    let chart = PhaseChart::build(geo, gamma, Side::Stable)?;
    chart.tau_bar(geo.e)
}

/// First `k` with `f^{qk}_gamma(d) >= e`, or `None` if it exceeds `limit`.
fn passage(geo: &Geometry, native: f64, limit: usize) -> Option<usize> {
    let mut x = geo.d;
    for k in 1..=limit {
        x = geo.fq(x, native);
        if x >= geo.e {
            return Some(k);
        }
    }
    None
}

fn ladder_residual_dd(geo: &Geometry, gamma: Dd, l: usize) -> Dd {
    let p = Dd::new(geo.sn.native) - gamma;
    geo.fam.iterate_dd(Dd::new(geo.d), p, geo.q() * l) - Dd::new(geo.e)
}

/// Root of `gamma -> f^{ql}_gamma(d) - e` inside a bracket where the predicate flips.
fn ladder_root(geo: &Geometry, l: usize, lo: f64, hi: f64) -> Result<f64> {
    let passes = |g: f64| passage(geo, geo.native(g), l).is_some();
    if passes(lo) || !passes(hi) {
        return Err(Error::BracketLoss {
            what: format!("gamma_{l}"),
        });
    }
    let (lo, hi) = bisect_predicate(passes, lo, hi, 200);
    // hi and lo are adjacent doubles (or within 1e-13 relative): polish in double-double
    if hi - lo < 1e-13 * hi {
        let (a, b) = (Dd::new(lo), Dd::new(hi));
        let fa = ladder_residual_dd(geo, a, l);
        let fb = ladder_residual_dd(geo, b, l);
        let denom = (fb - fa).to_f64();
        if denom > 0.0 && fa.hi <= 0.0 && fb.hi >= 0.0 {
            let t = -fa.to_f64() / denom;
            let root = (a + (b - a).mul_f64(t)).to_f64();
            if root >= lo && root <= hi {
                return Ok(root);
            }
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug)]
pub struct Ladder {
    pub geo: Geometry,
    pub l_min: usize,
    pub l_max: usize,
    /// `gammas[l - l_min]` for `l in l_min..=l_max + 1`.
    pub gammas: Vec<f64>,
}

pub fn gamma_ladder(geo: &Geometry, l_min: usize, l_max: usize) -> Result<Ladder> {
    if l_min < 1 || l_max < l_min {
        return Err(Error::Domain {
            what: "ladder range",
            value: l_min as f64,
        });
    }
    let mut hi = 1e-3;
    while passage(geo, geo.native(hi), l_min).is_none() {
        hi *= 2.0;
        if hi > 0.05 {
            return Err(Error::BracketLoss {
                what: format!("gamma_{l_min}"),
            });
        }
    }
    let mut gammas = Vec::with_capacity(l_max - l_min + 2);
    let mut g = ladder_root(geo, l_min, 0.0, hi)?;
    gammas.push(g);
    for l in l_min + 1..=l_max + 1 {
        let r = (l as f64 - 2.0) / l as f64;
        let mut lo = g * r * r;
        while passage(geo, geo.native(lo), l).is_some() {
            lo *= 0.5;
        }
        g = ladder_root(geo, l, lo, g)?;
        gammas.push(g);
    }
    Ok(Ladder {
        geo: geo.clone(),
        l_min,
        l_max,
        gammas,
    })
}

impl Ladder {
    pub fn gamma(&self, l: usize) -> f64 {
        self.gammas[l - self.l_min]
    }

    pub fn contains_rung(&self, l: usize) -> bool {
        l >= self.l_min && l <= self.l_max
    }

    /// `g_l(theta)`: the parameter whose crossing time from `d` to `e` is `l + theta`.
    pub fn theta_map(&self, l: usize, theta: f64) -> Result<f64> {
        if !self.contains_rung(l) || !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain {
                what: "theta",
                value: theta,
            });
        }
        let (g_hi, g_lo) = (self.gamma(l), self.gamma(l + 1));
        if theta == 0.0 {
            return Ok(g_hi);
        }
        if theta == 1.0 {
            return Ok(g_lo);
        }
        let target = l as f64 + theta;
        let mut err = None;
        let root = brent(
            |g| match crossing_time(&self.geo, g) {
                Ok(t) => t - target,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            },
            g_lo,
            g_hi,
            1e-18 * g_hi,
            200,
        );
        if let Some(e) = err {
            return Err(e);
        }
        root.ok_or_else(|| Error::BracketLoss {
            what: format!("g_{l}({theta})"),
        })
    }

    /// Inverse of `theta_map`: the rung containing `gamma` and the phase within it.
    pub fn theta_of_gamma(&self, gamma: f64) -> Result<(usize, f64)> {
        let first = self.gammas[0];
        let last = *self.gammas.last().unwrap_or(&first);
        if !(gamma <= first && gamma > last) {
            return Err(Error::Domain {
                what: "gamma outside ladder",
                value: gamma,
            });
        }
        // gammas decreasing: find l with gamma_{l+1} < gamma <= gamma_l
        let idx = self.gammas.partition_point(|&g| g >= gamma);
        let l = self.l_min + idx - 1;
        if gamma == self.gamma(l) {
            return Ok((l, 0.0));
        }
        let t = crossing_time(&self.geo, gamma)?;
        Ok((l, (t - l as f64).clamp(0.0, 1.0)))
    }
}

/// First landing of `x` in `I^u` under `f^q`, and the circle distance between
/// the unstable phase of the landing point and the stable phase of `x` rotated by
/// `-theta`, where `theta` is the fractional crossing time of the stable chart.
pub fn local_first_hit(stable: &PhaseChart, unstable: &PhaseChart, x: f64) -> Result<(f64, f64)> {
    let native = stable.native;
    let geo = &stable.geo;
    let theta = stable.tau_bar(geo.e)?.rem_euclid(1.0);
    let mut y = x;
    let mut steps = 0;
    while y < geo.e {
        y = geo.fq(y, native);
        steps += 1;
        if steps > MAX_STEPS || y >= geo.lap.1 {
            return Err(Error::Escape("bottleneck"));
        }
    }
    let tu = unstable.tau(y)?;
    // tau^s(f^{kq} x) = tau^s(x) + k, so read both phases at y along the same backward path
    let ts = (stable.tau_bar(y)? - theta).rem_euclid(1.0);
    Ok((y, circle_distance(tu, ts)))
}

pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Jump location `theta#` of `theta -> c^u(g_l(theta))`: the phase at which the
/// stable-side image of `c` reaches `e` exactly.
pub fn critical_jump(ladder: &Ladder, l: usize) -> Result<f64> {
    let geo = &ladder.geo;
    let mut theta = 0.5;
    for _ in 0..8 {
        let g = ladder.theta_map(l, theta)?;
        let native = geo.native(g);
        let cs = geo.fq(geo.c(), native);
        let chart = PhaseChart::build(geo, g, Side::Stable)?;
        let next = chart.tau_bar(cs)?.rem_euclid(1.0);
        if (next - theta).abs() < 1e-13 {
            return Ok(next);
        }
        theta = next;
    }
    Ok(theta)
}
