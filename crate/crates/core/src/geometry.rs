//! Fixed geometry around the fold orbit at `gamma = 0`: the lap of `f^q` through `a`,
//! the endpoints `d`, `e`, the repeller `z0` and the neighbourhood `Ebar`.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::family::UnimodalFamily;
use crate::saddle_node::{locate_saddle_node, repelling_points_of_f0, validate_orientation, SaddleNodeData};

#[derive(Clone, Debug)]
pub struct Geometry {
    pub fam: UnimodalFamily,
    pub sn: SaddleNodeData,
    /// Open interval on which `f^q_0` is increasing and which contains `a`.
    pub lap: (f64, f64),
    pub d: f64,
    pub e: f64,
    /// Repelling fixed point with `f^j_0(e) = z0`.
    pub z0: f64,
    pub z0_steps: usize,
    /// `q` disjoint intervals, the images of `[d, f^q_0(e)]` under `f^i_0`, `i < q`.
    pub ebar: Vec<(f64, f64)>,
    /// Critical points of `f^q_0`.
    pub critical_points: Vec<f64>,
    pub surrogate: Surrogate,
    /// Depth, in fundamental domains, of the bottleneck domain used by the `gamma = 0` charts.
    pub deep: usize,
}

/// Vector field used for the time coordinate inside the bottleneck domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surrogate {
    /// `1 / (f^q(z) - z)`.
    Euler,
    /// Third-order corrected field `D - D D'/2 + D D'^2/3 + D^2 D''/12`.
    Corrected,
}

fn critical_points_of_fq(fam: &UnimodalFamily, native: f64) -> Vec<f64> {
    let n = 200_000;
    let q = fam.period();
    let mut out = Vec::new();
    let dfq = |x: f64| fam.iterate_deriv(x, native, q).1;
    let mut x0 = 0.0;
    let mut d0 = dfq(x0);
    for k in 1..=n {
        let x1 = k as f64 / n as f64;
        let d1 = dfq(x1);
        if d1 == 0.0 {
            out.push(x1);
        } else if d0 != 0.0 && d0.signum() != d1.signum() {
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..80 {
                let m = 0.5 * (lo + hi);
                if dfq(m).signum() == d0.signum() {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        x0 = x1;
        d0 = d1;
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

impl Geometry {
    /// Geometry for the built-in quadratic family.
    pub fn quadratic() -> Result<Self> {
        let fam = UnimodalFamily::quadratic();
        let sn = locate_saddle_node(&fam, 3, (3.83, 0.16))?;
        Geometry::new(&fam, sn)
    }

    pub fn new(fam: &UnimodalFamily, sn: SaddleNodeData) -> Result<Self> {
        let fam = fam.with_gamma_offset(sn.native).with_period(sn.q);
        validate_orientation(&fam, &sn)?;
        let p = sn.native;
        let q = sn.q;
        let a = sn.a;
        let c = fam.critical_point();
        let cps = critical_points_of_fq(&fam, p);
        let lap_lo = cps.iter().copied().filter(|&x| x < a).fold(0.0, f64::max);
        let lap_hi = cps.iter().copied().filter(|&x| x > a).fold(1.0, f64::min);
        let fq = |x: f64| fam.iterate_n(x, p, q);

        // stable end: halfway between the lap boundary and its image
        let flo = fq(lap_lo);
        let d = if flo > lap_lo && flo < a {
            0.5 * (lap_lo + flo)
        } else {
            lap_lo + 0.25 * (a - lap_lo)
        };

        // largest r > a such that f^i([a, r]) meets no critical point of f^q for i < q
        let mut marks = cps.clone();
        marks.push(c);
        let hits = |x: f64| -> bool {
            let mut ya = a;
            let mut yx = x;
            for _ in 0..q {
                let (lo, hi) = (ya.min(yx), ya.max(yx));
                if marks.iter().any(|&m| m > lo && m < hi) {
                    return true;
                }
                ya = fam.map(ya, p);
                yx = fam.map(yx, p);
            }
            false
        };
        let steps = 20_000;
        let mut r = lap_hi;
        for k in 1..=steps {
            let x = a + (lap_hi - a) * k as f64 / steps as f64;
            if hits(x) {
                let (_, hi) = crate::roots::bisect_predicate(hits, x - (lap_hi - a) / steps as f64, x, 80);
                r = hi;
                break;
            }
        }
        let target = a + 0.9 * (r - a);
        // e_max with f^q(e_max) = target
        let e_max = crate::roots::brent(|x| fq(x) - target, a, target, 1e-16, 200)
            .ok_or_else(|| Error::Geometry("cannot place e".into()))?;

        let z0 = repelling_points_of_f0(&fam, &sn, 1, &[])
            .into_iter()
            .map(|t| t.points[0])
            .filter(|&x| x > 1e-6)
            .fold(f64::NAN, f64::max);
        if !z0.is_finite() {
            return Err(Error::Geometry("no interior repelling fixed point".into()));
        }

        let lo_w = a + 0.8 * (e_max - a);
        let mut chosen = None;
        'outer: for j in 1..=30 {
            let g = |x: f64| fam.iterate_n(x, p, j) - z0;
            let n = 20_000;
            let mut best: Option<f64> = None;
            let mut x0 = lo_w;
            let mut g0 = g(x0);
            for k in 1..=n {
                let x1 = lo_w + (e_max - lo_w) * k as f64 / n as f64;
                let g1 = g(x1);
                if g0.signum() != g1.signum() {
                    if let Some(root) = crate::roots::brent(g, x0, x1, 0.0, 200) {
                        best = Some(root);
                    }
                }
                x0 = x1;
                g0 = g1;
            }
            if let Some(root) = best {
                let mut y = root;
                for _ in 0..j {
                    if (y - c).abs() < 1e-9 {
                        continue 'outer;
                    }
                    y = fam.map(y, p);
                }
                chosen = Some((root, j));
                break;
            }
        }
        let (e, z0_steps) = chosen.ok_or_else(|| Error::Geometry("no preimage of the repeller".into()))?;

        let top = fq(e);
        let mut ebar = Vec::with_capacity(q);
        let (mut u, mut v) = (d, top);
        for _ in 0..q {
            ebar.push((u.min(v), u.max(v)));
            u = fam.map(u, p);
            v = fam.map(v, p);
        }
        let geo = Geometry {
            fam,
            sn,
            lap: (lap_lo, lap_hi),
            d,
            e,
            z0,
            z0_steps,
            ebar,
            critical_points: cps,
            surrogate: Surrogate::Corrected,
            deep: 400,
        };
        geo.validate()?;
        Ok(geo)
    }

    fn validate(&self) -> Result<()> {
        let c = self.fam.critical_point();
        if self.in_ebar(c) {
            return Err(Error::Geometry("Ebar contains the critical point".into()));
        }
        if self.critical_points.iter().any(|&x| self.in_ebar(x)) {
            return Err(Error::Geometry("Ebar contains a critical point of f^q".into()));
        }
        if !(self.lap.0 < self.d && self.d < self.sn.a && self.sn.a < self.e && self.e < self.lap.1) {
            return Err(Error::Geometry("d < a < e ordering fails".into()));
        }
        Ok(())
    }

    pub fn with_surrogate(mut self, surrogate: Surrogate, deep: usize) -> Self {
        self.surrogate = surrogate;
        self.deep = deep.max(1);
        self
    }

    pub fn in_ebar(&self, x: f64) -> bool {
        self.ebar.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    pub fn a(&self) -> f64 {
        self.sn.a
    }

    pub fn q(&self) -> usize {
        self.sn.q
    }

    pub fn c(&self) -> f64 {
        self.fam.critical_point()
    }

    pub fn native(&self, gamma: f64) -> f64 {
        self.sn.native - gamma
    }

    #[inline]
    pub fn fq(&self, x: f64, native: f64) -> f64 {
        self.fam.iterate_n(x, native, self.sn.q)
    }

    /// Inverse of `f^q` on the lap through `a`, or `None` outside its range.
    pub fn fq_inverse(&self, x: f64, native: f64) -> Option<f64> {
        let q = self.sn.q;
        let (lo, hi) = self.lap;
        let flo = self.fam.iterate_n(lo, native, q);
        let fhi = self.fam.iterate_n(hi, native, q);
        if !(x > flo && x < fhi) {
            return None;
        }
        let (mut blo, mut bhi) = (lo, hi);
        let mut y = x - (self.fam.iterate_n(x.clamp(lo, hi), native, q) - x);
        if !(y > blo && y < bhi) {
            y = 0.5 * (blo + bhi);
        }
        for _ in 0..100 {
            let (fy, dfy) = self.fam.fq(y, native);
            let g = fy - x;
            if g == 0.0 {
                return Some(y);
            }
            if g > 0.0 {
                bhi = y;
            } else {
                blo = y;
            }
            let mut next = y - g / dfy;
            if !(next > blo && next < bhi) || !next.is_finite() {
                next = 0.5 * (blo + bhi);
            }
            if (next - y).abs() <= 1e-17 + 2.0 * f64::EPSILON * y.abs() {
                let (fn_, _) = self.fam.fq(next, native);
                return Some(if (fn_ - x).abs() < g.abs() { next } else { y });
            }
            y = next;
        }
        Some(y)
    }

    /// `fq_inverse` carried in double-double, for long backward chains near the fold.
    pub fn fq_inverse_dd(&self, x: Dd, native: f64) -> Option<Dd> {
        let p = Dd::new(native);
        let mut z = Dd::new(self.fq_inverse(x.hi, native)?);
        for _ in 0..2 {
            let r = self.fam.iterate_dd(z, p, self.sn.q) - x;
            let (_, df) = self.fam.fq(z.hi, native);
            z = z - Dd::new(r.to_f64() / df);
        }
        Some(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_geometry() {
        let g = Geometry::quadratic().unwrap();
        let mu = g.sn.native;
        assert!((g.z0 - (1.0 - 1.0 / mu)).abs() < 1e-12);
        assert!((g.fam.iterate_n(g.e, mu, g.z0_steps) - g.z0).abs() < 1e-9);
        assert!(g.lap.0 <= 0.5 + 1e-12);
        assert_eq!(g.ebar.len(), 3);
        assert!(!g.in_ebar(0.5));
        for w in 0..3 {
            assert!(g.in_ebar(g.sn.orbit_of_a[w]));
        }
    }

    #[test]
    fn inverse_of_return_map() {
        let g = Geometry::quadratic().unwrap();
        let p = g.native(1e-4);
        for k in 0..50 {
            let x = g.d + (g.e - g.d) * k as f64 / 49.0;
            let y = g.fq(x, p);
            let back = g.fq_inverse(y, p).unwrap();
            assert!((back - x).abs() < 1e-14, "{x} {back}");
        }
    }
}
