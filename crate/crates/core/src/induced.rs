//! The induced map that jumps over the bottleneck, its interval version with the
//! join rule, and the limit map at the fold.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::mather::FoldCharts;
use crate::orbit::log_abs_deriv;
use crate::phase::Ladder;

/// Fundamental domains `E^{-i} = [e_{-i}, e_{-i+1})`, `i = 0..=l`, at `gamma = g_l(theta)`.
/// `E^0 = [e, f^q(e))` is the unstable interval.
#[derive(Clone, Debug)]
pub struct InducedContext {
    pub l: usize,
    pub theta: f64,
    pub gamma: f64,
    pub native: f64,
    pub geo: Geometry,
    // ascending: pts[k] = e_{k-l-1}, k = 0..=l+3, so e_{-l-1} .. e_2; pts[0] may be -inf
    pts: Vec<f64>,
}

pub fn build_induced(geo: &Geometry, ladder: &Ladder, l: usize, theta: f64) -> Result<InducedContext> {
    let gamma = ladder.theta_map(l, theta)?;
    build_induced_at(geo, l, theta, gamma)
}

/// As `build_induced`, at an explicit parameter (which should lie in rung `l`).
pub fn build_induced_at(geo: &Geometry, l: usize, theta: f64, gamma: f64) -> Result<InducedContext> {
    if !(gamma > 0.0) {
        return Err(Error::DisplacementSign { gamma });
    }
    let native = geo.native(gamma);
    let mut back = Vec::with_capacity(l + 2);
    let mut y = Dd::new(geo.e);
    for i in 1..=l {
        y = geo.fq_inverse_dd(y, native).ok_or(Error::BackwardSolve(i))?;
        back.push(y.hi);
    }
    // e_{-l-1} can fall outside the image of the fold lap (d close to c); then
    // there is no domain E^{-l-1} and the left outer piece never counts as full
    back.push(geo.fq_inverse_dd(y, native).map_or(f64::NEG_INFINITY, |z| z.hi));
    back.reverse();
    let mut pts = back;
    let e1 = geo.fq(geo.e, native);
    let e2 = geo.fq(e1, native);
    pts.push(geo.e);
    pts.push(e1);
    pts.push(e2);
    let ctx = InducedContext {
        l,
        theta,
        gamma,
        native,
        geo: geo.clone(),
        pts,
    };
    ctx.validate()?;
    Ok(ctx)
}

impl InducedContext {
    /// `e_{-i}` for `-1 <= -i`, i.e. `e_k` with `k` in `-l-1..=2`.
    pub fn e_point(&self, k: i64) -> f64 {
        self.pts[(k + self.l as i64 + 1) as usize]
    }

    /// `[e_{-l}, f^q(e))`.
    pub fn tilde_e(&self) -> (f64, f64) {
        (self.e_point(-(self.l as i64)), self.e_point(1))
    }

    /// The `l + 1` discontinuities `e_{-l}, ..., e_0` of the induced map.
    pub fn discontinuities(&self) -> &[f64] {
        &self.pts[1..self.l + 2]
    }

    /// `i` with `x` in `E^{-i}`.
    pub fn domain_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.tilde_e();
        if !(x >= lo && x < hi) {
            return None;
        }
        // pts[1..=l+2] = e_{-l} .. e_1
        let k = self.pts[1..self.l + 3].partition_point(|&p| p <= x);
        Some(self.l + 1 - k)
    }

    fn validate(&self) -> Result<()> {
        if self.pts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Geometry("fundamental domains not ordered".into()));
        }
        let p = Dd::new(self.native);
        for k in 0..self.l + 1 {
            if !self.pts[k].is_finite() {
                continue;
            }
            let img = self.geo.fam.iterate_dd(Dd::new(self.pts[k]), p, self.geo.q()).hi;
            let target = self.pts[k + 1];
            let width = self.pts[k + 2] - self.pts[k + 1];
            if ((img - target) / width).abs() > 1e-10 {
                return Err(Error::Geometry(format!("f^q(e_{{-i-1}}) misses e_{{-i}} at k = {k}")));
            }
        }
        let d1 = self.geo.fq(self.geo.d, self.native);
        if self.tilde_e().0 > d1 {
            return Err(Error::Geometry("[d_1, e) not inside the induced region".into()));
        }
        Ok(())
    }

    fn count(&self, x: f64) -> usize {
        match self.domain_of(x) {
            Some(i) => i * self.geo.q() + 1,
            None => 1,
        }
    }
}

/// One step of the induced map and the number of `f` iterates it uses.
pub fn induced_step(ctx: &InducedContext, x: f64) -> (f64, usize) {
    let n = ctx.count(x);
    (ctx.geo.fam.iterate_n(x, ctx.native, n), n)
}

#[derive(Clone, Debug)]
pub struct InducedOrbit {
    pub orbit: Vec<f64>,
    /// Index into the base orbit of each induced point.
    pub base_index: Vec<usize>,
    pub log_deriv: f64,
    pub base_iterates: usize,
}

impl InducedOrbit {
    /// Induced steps per base iterate.
    pub fn ratio(&self) -> f64 {
        (self.orbit.len() - 1) as f64 / self.base_iterates.max(1) as f64
    }
}

/// `n` induced steps from `x0` with `ln |D f~^n(x0)|` by the chain rule over the base orbit.
pub fn induced_orbit_deriv(ctx: &InducedContext, x0: f64, n: usize) -> InducedOrbit {
    let fam = &ctx.geo.fam;
    let p = ctx.native;
    let mut orbit = Vec::with_capacity(n + 1);
    let mut base_index = Vec::with_capacity(n + 1);
    orbit.push(x0);
    base_index.push(0);
    let mut x = x0;
    let mut total = 0usize;
    let mut log_deriv = 0.0;
    for _ in 0..n {
        let k = ctx.count(x);
        for _ in 0..k {
            let (y, d) = fam.map_deriv(x, p);
            log_deriv += log_abs_deriv(d);
            x = y;
        }
        total += k;
        orbit.push(x);
        base_index.push(total);
    }
    InducedOrbit {
        orbit,
        base_index,
        log_deriv,
        base_iterates: total,
    }
}

/// A labelled piece of a partitioned interval and its image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImagePiece {
    pub source: (f64, f64),
    /// `k` in `-l-1..=1`: the piece lies in `E^{k}` (outer pieces: `-l-1` and `1`).
    pub label: i64,
    pub iterates: usize,
    pub image: (f64, f64),
    pub joined: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalImage {
    pub pieces: Vec<ImagePiece>,
}

impl IntervalImage {
    /// Connected components of the union of the piece images.
    pub fn components(&self) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = self.pieces.iter().map(|p| p.image).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    pub fn hull(&self) -> (f64, f64) {
        let lo = self.pieces.iter().map(|p| p.image.0).fold(f64::INFINITY, f64::min);
        let hi = self.pieces.iter().map(|p| p.image.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn image_under(ctx: &InducedContext, (lo, hi): (f64, f64), iterates: usize) -> (f64, f64) {
    let fam = &ctx.geo.fam;
    let p = ctx.native;
    let c = ctx.geo.c();
    // the fold branch is monotone on every piece; only the final f can straddle c
    let pre = iterates - 1;
    let (u, v) = (fam.iterate_n(lo, p, pre), fam.iterate_n(hi, p, pre));
    let (u, v) = (u.min(v), u.max(v));
    let (fu, fv) = (fam.map(u, p), fam.map(v, p));
    if u < c && v > c {
        (fu.min(fv), fam.map(c, p))
    } else {
        (fu.min(fv), fu.max(fv))
    }
}

/// One step of the interval iteration: partition by the fundamental domains, join
/// end pieces that do not contain a full domain, and advance each piece.
pub fn breve_interval_step(ctx: &InducedContext, interval: (f64, f64)) -> Result<IntervalImage> {
    let (lo, hi) = interval;
    if !(hi > lo) {
        return Err(Error::EmptyInterval);
    }
    let l = ctx.l as i64;
    // cut points e_{-l} .. e_1 split the line into labels -l-1 ..= 1
    let label = |x: f64| -> i64 {
        // number of cut points e_{-l} .. e_1 at or below x, shifted to a label
        let n = ctx.pts[1..ctx.l + 3].partition_point(|&p| p <= x) as i64;
        n - l - 1
    };
    let mut pieces: Vec<(i64, f64, f64, bool)> = Vec::new();
    for k in label(lo)..=label(hi).min(1) {
        let left = if k == -l - 1 { f64::NEG_INFINITY } else { ctx.e_point(k) };
        let right = if k == 1 { f64::INFINITY } else { ctx.e_point(k + 1) };
        let a = lo.max(left);
        let b = hi.min(right);
        if b > a {
            pieces.push((k, a, b, false));
        }
    }
    let full = |&(k, a, b, _): &(i64, f64, f64, bool)| -> bool {
        match k {
            k if k == -l - 1 => ctx.e_point(-l - 1).is_finite() && a <= ctx.e_point(-l - 1),
            1 => b >= ctx.e_point(2),
            k => a <= ctx.e_point(k) && b >= ctx.e_point(k + 1),
        }
    };
    if pieces.len() == 2 && !full(&pieces[0]) && !full(&pieces[1]) {
        let (p0, p1) = (pieces[0], pieces[1]);
        let keep = if p1.2 - p1.1 > p0.2 - p0.1 { p1.0 } else { p0.0 };
        pieces = vec![(keep, p0.1, p1.2, true)];
    } else if pieces.len() >= 2 {
        if !full(&pieces[0]) {
            let first = pieces.remove(0);
            pieces[0].1 = first.1;
            pieces[0].3 = true;
        }
        let n = pieces.len();
        if n >= 2 && !full(&pieces[n - 1]) {
            if let Some(last) = pieces.pop() {
                pieces[n - 2].2 = last.2;
                pieces[n - 2].3 = true;
            }
        }
    }
    let q = ctx.geo.q();
    let out = pieces
        .into_iter()
        .map(|(k, a, b, joined)| {
            let iterates = if k == -l - 1 || k == 1 { 1 } else { (-k) as usize * q + 1 };
            ImagePiece {
                source: (a, b),
                label: k,
                iterates,
                image: image_under(ctx, (a, b), iterates),
                joined,
            }
        })
        .collect();
    Ok(IntervalImage { pieces: out })
}

/// The limit of the induced maps along `g_l(theta)` as `l -> infinity`, built from
/// `f_0` and the fold charts. Diagnostic evaluator only.
#[derive(Clone, Debug)]
pub struct LimitMap {
    pub theta: f64,
    charts: FoldCharts,
    geo: Geometry,
    left: f64,
}

impl LimitMap {
    pub fn new(geo: &Geometry, charts: &FoldCharts, theta: f64) -> Result<Self> {
        let left = charts.stable.tau_bar_inverse(theta)?;
        Ok(LimitMap {
            theta,
            charts: charts.clone(),
            geo: geo.clone(),
            left,
        })
    }

    /// Left end of the induced region; the right end is `e`.
    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let geo = &self.geo;
        let native = geo.native(0.0);
        let a = geo.a();
        if x > a && x < geo.e {
            let mut y = x;
            let mut steps = 0;
            while y < geo.e {
                y = geo.fq(y, native);
                steps += 1;
                if steps > crate::mather::ORBIT_CAP {
                    return Err(Error::Escape("limit map"));
                }
            }
            return Ok(geo.fam.map(y, native));
        }
        if x > self.left && x < a {
            let t = self.charts.stable.tau(x)?;
            let u = (t - self.theta).rem_euclid(1.0);
            let y = self.charts.unstable.tau_bar_inverse(u)?;
            return Ok(geo.fam.map(y, native));
        }
        Ok(geo.fam.map(x, native))
    }
}
