//! Laminar/burst statistics, the frequency of visits to the fixed neighbourhood `Ebar`,
//! empirical invariant measures, hitting times and periodic windows.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::induced::{build_induced_at, InducedContext};
use crate::orbit::lyapunov_slope_native;
use crate::phase::{crossing_time, Ladder};
pub use crate::stats::quasi_random;
use crate::stats::{linear_fit, mean, std_dev};

pub const BURN_IN: usize = 1000;
pub const BINS: usize = 4096;
/// Longest period searched by orbit closure.
pub const MAX_PERIOD: usize = 20_000;
const BATCHES: usize = 32;
/// Chebyshev nodes per rung for `g_l`.
pub const RUNG_NODES: usize = 25;
/// Screening threshold on the short Lyapunov mean.
pub const SCREEN_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub laminar: bool,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct LaminarProfile {
    pub ebar: Vec<(f64, f64)>,
    /// Run-length encoding of the indicator of `Ebar`, alternating by construction.
    pub segments: Vec<Segment>,
    pub chi: f64,
    /// Batch-means standard error of `chi`.
    pub stderr: f64,
    pub n_total: usize,
}

impl LaminarProfile {
    /// Lengths of the completed laminar runs (the first and last run are dropped as truncated).
    pub fn laminar_lengths(&self) -> Vec<usize> {
        self.interior(true)
    }

    pub fn burst_lengths(&self) -> Vec<usize> {
        self.interior(false)
    }

    fn interior(&self, laminar: bool) -> Vec<usize> {
        let n = self.segments.len();
        if n < 3 {
            return Vec::new();
        }
        self.segments[1..n - 1]
            .iter()
            .filter(|s| s.laminar == laminar)
            .map(|s| s.len)
            .collect()
    }

    pub fn mean_laminar(&self) -> Option<f64> {
        let v = self.laminar_lengths();
        (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
    }

    pub fn max_laminar(&self) -> Option<usize> {
        self.laminar_lengths().into_iter().max()
    }
}

fn in_set(set: &[(f64, f64)], x: f64) -> bool {
    set.iter().any(|&(lo, hi)| x >= lo && x <= hi)
}

/// Orbit of `x0` at `gamma` after `BURN_IN` discarded iterates, segmented by visits to `ebar`.
pub fn laminar_segments(geo: &Geometry, gamma: f64, x0: f64, n: usize, ebar: &[(f64, f64)]) -> LaminarProfile {
    let fam = &geo.fam;
    let p = geo.native(gamma);
    let x_start = fam.iterate_n(x0, p, BURN_IN);
    let mut x = x_start;
    let mut segments: Vec<Segment> = Vec::new();
    let batch = (n / BATCHES).max(1);
    let mut batch_hits = Vec::with_capacity(BATCHES + 1);
    let (mut hits, mut in_batch, mut total_hits) = (0usize, 0usize, 0usize);
    for _ in 0..n {
        let lam = in_set(ebar, x);
        match segments.last_mut() {
            Some(s) if s.laminar == lam => s.len += 1,
            _ => segments.push(Segment { laminar: lam, len: 1 }),
        }
        if lam {
            hits += 1;
            total_hits += 1;
        }
        in_batch += 1;
        if in_batch == batch {
            batch_hits.push(hits as f64 / batch as f64);
            hits = 0;
            in_batch = 0;
        }
        x = fam.map(x, p);
    }
    let chi = if n == 0 { 0.0 } else { total_hits as f64 / n as f64 };
    let stderr = if batch_hits.len() > 1 {
        std_dev(&batch_hits) / (batch_hits.len() as f64).sqrt()
    } else {
        0.0
    };
    LaminarProfile {
        ebar: ebar.to_vec(),
        segments,
        chi,
        stderr,
        n_total: n,
    }
}

#[derive(Clone, Debug)]
pub struct ChiEstimate {
    pub gamma: f64,
    pub chi: f64,
    /// Standard error of the mean over seeds.
    pub stderr: f64,
    pub per_seed: Vec<f64>,
    /// Root-mean-square of the per-seed batch errors.
    pub within_seed: f64,
    pub mean_laminar: Option<f64>,
}

impl ChiEstimate {
    pub fn spread(&self) -> f64 {
        std_dev(&self.per_seed)
    }

    /// The seeds agree within three per-seed standard errors.
    pub fn seed_independent(&self) -> bool {
        self.spread() < 3.0 * self.within_seed.max(f64::MIN_POSITIVE)
    }

    pub fn max_pairwise(&self) -> f64 {
        let lo = self.per_seed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.per_seed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Initial condition `k` of the fixed low-discrepancy sequence.
pub fn seed_point(k: usize) -> f64 {
    seeded_point(0, k)
}

/// Initial condition `k` of the low-discrepancy sequence with offset `seed`.
pub fn seeded_point(seed: u64, k: usize) -> f64 {
    quasi_random(seed, k, 0.01, 0.99)
}

/// `chi` over `seeds` initial conditions of `n` iterates each.
pub fn chi_estimate(geo: &Geometry, gamma: f64, seeds: usize, n: usize) -> ChiEstimate {
    chi_estimate_seeded(geo, gamma, 0, seeds, n)
}

pub fn chi_estimate_seeded(geo: &Geometry, gamma: f64, seed: u64, seeds: usize, n: usize) -> ChiEstimate {
    let profiles: Vec<LaminarProfile> = (0..seeds.max(1))
        .into_par_iter()
        .map(|k| laminar_segments(geo, gamma, seeded_point(seed, k), n, &geo.ebar))
        .collect();
    let per_seed: Vec<f64> = profiles.iter().map(|p| p.chi).collect();
    let within = (profiles.iter().map(|p| p.stderr * p.stderr).sum::<f64>() / profiles.len() as f64).sqrt();
    let lam: Vec<usize> = profiles.iter().flat_map(|p| p.laminar_lengths()).collect();
    ChiEstimate {
        gamma,
        chi: mean(&per_seed),
        stderr: std_dev(&per_seed) / (per_seed.len() as f64).sqrt(),
        within_seed: within,
        mean_laminar: (!lam.is_empty()).then(|| lam.iter().sum::<usize>() as f64 / lam.len() as f64),
        per_seed,
    }
}

#[derive(Clone, Debug)]
pub struct ScalingPoint {
    pub gamma: f64,
    pub chi: f64,
    pub stderr: f64,
    pub mean_laminar: Option<f64>,
    pub masked: bool,
}

#[derive(Clone, Debug)]
pub struct ScalingFit {
    /// Slope of `ln(1 - chi)` against `ln gamma`.
    pub slope: f64,
    /// `[min, max]` of `(1 - chi)/sqrt(gamma)` over the unmasked points.
    pub k_band: (f64, f64),
    /// Slope of `ln(mean laminar length)` against `ln gamma`.
    pub laminar_slope: f64,
    pub points: Vec<ScalingPoint>,
}

impl ScalingFit {
    pub fn unmasked(&self) -> usize {
        self.points.iter().filter(|p| !p.masked).count()
    }
}

/// `count` geometrically spaced values from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo * (r * i as f64).exp() })
        .collect()
}

pub fn scaling_point(geo: &Geometry, gamma: f64, masked: bool, seed: u64, seeds: usize, n: usize) -> ScalingPoint {
    if masked {
        return ScalingPoint {
            gamma,
            chi: f64::NAN,
            stderr: f64::NAN,
            mean_laminar: None,
            masked,
        };
    }
    let est = chi_estimate_seeded(geo, gamma, seed, seeds, n);
    ScalingPoint {
        gamma,
        chi: est.chi,
        stderr: est.stderr,
        mean_laminar: est.mean_laminar,
        masked,
    }
}

/// `chi` and mean laminar length on `gammas` (within `[1e-8, 1e-3]`), skipping masked
/// points, and the log-log fits over the rest.
pub fn scaling_fit(
    geo: &Geometry,
    gammas: &[f64],
    mask: &[bool],
    seed: u64,
    seeds: usize,
    n: usize,
) -> Result<ScalingFit> {
    if let Some(&g) = gammas.iter().find(|&&g| !(1e-8..=1e-3).contains(&g)) {
        return Err(Error::Domain {
            what: "scaling grid",
            value: g,
        });
    }
    let points = gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| scaling_point(geo, g, mask.get(i).copied().unwrap_or(false), seed, seeds, n))
        .collect();
    fit_scaling(points)
}

pub fn fit_scaling(points: Vec<ScalingPoint>) -> Result<ScalingFit> {
    let live: Vec<&ScalingPoint> = points.iter().filter(|p| !p.masked && p.chi < 1.0).collect();
    if live.len() < 6 {
        return Err(Error::InsufficientPoints(live.len()));
    }
    let xs: Vec<f64> = live.iter().map(|p| p.gamma.ln()).collect();
    let ys: Vec<f64> = live.iter().map(|p| (1.0 - p.chi).ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    let ks: Vec<f64> = live.iter().map(|p| (1.0 - p.chi) / p.gamma.sqrt()).collect();
    let k_band = (
        ks.iter().cloned().fold(f64::INFINITY, f64::min),
        ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let lam: Vec<(f64, f64)> = live
        .iter()
        .filter_map(|p| p.mean_laminar.map(|m| (p.gamma.ln(), m.ln())))
        .collect();
    if lam.len() < 6 {
        return Err(Error::InsufficientPoints(lam.len()));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = lam.into_iter().unzip();
    let (laminar_slope, _) = linear_fit(&lx, &ly);
    Ok(ScalingFit {
        slope,
        k_band,
        laminar_slope,
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureMode {
    Base,
    Induced,
    Pushforward,
}

impl MeasureMode {
    pub fn name(self) -> &'static str {
        match self {
            MeasureMode::Base => "base",
            MeasureMode::Induced => "induced",
            MeasureMode::Pushforward => "pushforward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base" => Some(MeasureMode::Base),
            "induced" => Some(MeasureMode::Induced),
            "pushforward" => Some(MeasureMode::Pushforward),
            _ => None,
        }
    }
}

/// Histogram on `bins` equal cells of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub source: MeasureMode,
    pub masses: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn width(&self) -> f64 {
        1.0 / self.masses.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins()).map(|i| i as f64 * self.width()).collect()
    }

    fn from_counts(source: MeasureMode, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let masses = counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
        EmpiricalMeasure { source, masses }
    }

    /// Mass of `[lo, hi]`, bins counted by their centre.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        let w = self.width();
        self.masses
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let m = (*i as f64 + 0.5) * w;
                m >= lo && m <= hi
            })
            .map(|(_, m)| m)
            .sum()
    }

    /// Mass of the bins lying entirely outside `[lo, hi]`.
    pub fn mass_outside(&self, lo: f64, hi: f64) -> f64 {
        let w = self.width();
        self.masses
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let a = *i as f64 * w;
                a + w < lo || a > hi
            })
            .map(|(_, m)| m)
            .sum()
    }

    pub fn mass_in_set(&self, set: &[(f64, f64)]) -> f64 {
        set.iter().map(|&(lo, hi)| self.mass(lo, hi)).sum()
    }

    pub fn total_variation(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.bins() != other.bins() {
            return Err(Error::Domain {
                what: "binning mismatch",
                value: other.bins() as f64,
            });
        }
        Ok(0.5 * self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Image of the histogram under `f`, by `per_bin` evenly spaced samples per bin.
    pub fn transport(&self, geo: &Geometry, native: f64, per_bin: usize) -> EmpiricalMeasure {
        let n = self.bins();
        let w = self.width();
        let mut out = vec![0.0; n];
        for (i, &m) in self.masses.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let share = m / per_bin as f64;
            for s in 0..per_bin {
                let x = (i as f64 + (s as f64 + 0.5) / per_bin as f64) * w;
                out[bin_of(geo.fam.map(x, native), n)] += share;
            }
        }
        EmpiricalMeasure {
            source: self.source,
            masses: out,
        }
    }

    /// Largest `mass(A)/sqrt(|A|)` over the given intervals.
    pub fn sqrt_tail_constant(&self, intervals: &[(f64, f64)]) -> f64 {
        intervals
            .iter()
            .filter(|(lo, hi)| hi > lo)
            .map(|&(lo, hi)| self.mass(lo, hi) / (hi - lo).sqrt())
            .fold(0.0, f64::max)
    }

    /// Smallest `eps` (to bin resolution) with at most `eps` of the mass farther than `eps`
    /// from every atom.
    pub fn atomic_distance(&self, atoms: &[f64]) -> f64 {
        let w = self.width();
        let dist: Vec<(f64, f64)> = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let x = (i as f64 + 0.5) * w;
                let d = atoms.iter().map(|a| (x - a).abs()).fold(f64::INFINITY, f64::min);
                (d, m)
            })
            .collect();
        let far = |eps: f64| dist.iter().filter(|(d, _)| *d > eps).map(|(_, m)| m).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if far(mid) <= mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn bin_of(x: f64, bins: usize) -> usize {
    ((x * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Induced context for an arbitrary `gamma > 0`, read off the crossing time.
pub fn context_for_gamma(geo: &Geometry, gamma: f64) -> Result<InducedContext> {
    let t = crossing_time(geo, gamma)?;
    let l = t.floor() as usize;
    build_induced_at(geo, l, t - l as f64, gamma)
}

/// Histogram of `n` samples started at `x0` after `BURN_IN` base iterates. Base and
/// pushforward modes count base iterates, induced mode counts induced steps.
pub fn measure_estimate(ctx: &InducedContext, mode: MeasureMode, x0: f64, n: usize, bins: usize) -> EmpiricalMeasure {
    let fam = &ctx.geo.fam;
    let p = ctx.native;
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins];
    let mut x = fam.iterate_n(x0, p, BURN_IN);
    match mode {
        MeasureMode::Base => {
            for _ in 0..n {
                counts[bin_of(x, bins)] += 1;
                x = fam.map(x, p);
            }
        }
        MeasureMode::Induced => {
            for _ in 0..n {
                counts[bin_of(x, bins)] += 1;
                x = fam.iterate_n(x, p, steps_of(ctx, x));
            }
        }
        MeasureMode::Pushforward => {
            // each induced visit to E^{-k} credits itself and its kq intermediate iterates
            let mut credited = 0;
            while credited < n {
                let steps = steps_of(ctx, x);
                for _ in 0..steps {
                    if credited == n {
                        break;
                    }
                    counts[bin_of(x, bins)] += 1;
                    credited += 1;
                    x = fam.map(x, p);
                }
            }
        }
    }
    EmpiricalMeasure::from_counts(mode, counts)
}

fn steps_of(ctx: &InducedContext, x: f64) -> usize {
    match ctx.domain_of(x) {
        Some(i) => i * ctx.geo.q() + 1,
        None => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingStats {
    /// Mean number of induced steps to enter `V`, over induced-orbit points outside `V`.
    pub induced_to_v: f64,
    /// Mean number of base iterates to enter `Etilde`, over base-orbit points outside it.
    pub base_to_etilde: f64,
}

/// Mean hitting time over the points of a sampled orbit outside `set`; the incomplete
/// final excursion is dropped.
fn mean_hitting<I: Iterator<Item = bool>>(inside: I) -> f64 {
    let (mut run, mut sum, mut count) = (0u64, 0.0f64, 0u64);
    for hit in inside {
        if hit {
            sum += (run * (run + 1) / 2) as f64;
            count += run;
            run = 0;
        } else {
            run += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn hitting_time_stats(ctx: &InducedContext, v: (f64, f64), x0: f64, n: usize) -> HittingStats {
    let fam = &ctx.geo.fam;
    let p = ctx.native;
    let start = fam.iterate_n(x0, p, BURN_IN);
    let mut x = start;
    let induced = mean_hitting((0..n).map(|_| {
        let hit = x >= v.0 && x <= v.1;
        x = fam.iterate_n(x, p, steps_of(ctx, x));
        hit
    }));
    let (elo, ehi) = ctx.tilde_e();
    let mut y = start;
    let base = mean_hitting((0..n).map(|_| {
        let hit = y >= elo && y < ehi;
        y = fam.map(y, p);
        hit
    }));
    HittingStats {
        induced_to_v: induced,
        base_to_etilde: base,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowPoint {
    pub gamma: f64,
    pub lyapunov: f64,
    /// Period found by orbit closure, when the attractor closes up.
    pub period: Option<usize>,
}

impl WindowPoint {
    pub fn masked(&self) -> bool {
        self.lyapunov < 0.0
    }
}

pub fn window_point(geo: &Geometry, gamma: f64, n: usize) -> WindowPoint {
    let p = geo.native(gamma);
    let x0 = seed_point(0);
    let lyapunov = lyapunov_slope_native(&geo.fam, x0, p, n, BURN_IN.min(n / 2));
    let period = if lyapunov < 0.0 {
        let x = geo.fam.iterate_n(x0, p, n);
        let tol = 1e-7;
        let mut y = x;
        (1..=MAX_PERIOD).find(|_| {
            y = geo.fam.map(y, p);
            (y - x).abs() < tol
        })
    } else {
        None
    };
    WindowPoint { gamma, lyapunov, period }
}

pub fn window_detect(geo: &Geometry, gammas: &[f64], n: usize) -> Vec<WindowPoint> {
    gammas.par_iter().map(|&g| window_point(geo, g, n)).collect()
}

/// Distinct periods with their multiplicity, sorted by period.
pub fn period_inventory(points: &[WindowPoint]) -> Vec<(usize, usize)> {
    let mut periods: Vec<usize> = points.iter().filter_map(|p| p.period).collect();
    periods.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for p in periods {
        match out.last_mut() {
            Some((q, n)) if *q == p => *n += 1,
            _ => out.push((p, 1)),
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct RungWindows {
    pub l: usize,
    pub thetas: Vec<f64>,
    pub points: Vec<WindowPoint>,
}

impl RungWindows {
    pub fn masked_fraction(&self) -> f64 {
        let n = self.points.len().max(1);
        self.points.iter().filter(|p| p.masked()).count() as f64 / n as f64
    }
}

/// Barycentric Chebyshev interpolant of `theta -> g_l(theta)` on one rung.
#[derive(Clone, Debug)]
pub struct RungMap {
    pub l: usize,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl RungMap {
    pub fn new(ladder: &Ladder, l: usize, nodes: usize) -> Result<Self> {
        let k = nodes.max(2);
        let xs: Vec<f64> = (0..k)
            .map(|j| 0.5 - 0.5 * (std::f64::consts::PI * j as f64 / (k - 1) as f64).cos())
            .collect();
        let values = xs
            .par_iter()
            .map(|&t| ladder.theta_map(l, t))
            .collect::<Result<Vec<f64>>>()?;
        Ok(RungMap { l, nodes: xs, values })
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let k = self.nodes.len();
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..k {
            let d = theta - self.nodes[j];
            if d == 0.0 {
                return self.values[j];
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == k - 1 {
                w *= 0.5;
            }
            num += w * self.values[j] / d;
            den += w / d;
        }
        num / den
    }
}

/// Mean of `ln|f'|` over `n` iterates after burn-in, logs taken once per eight factors.
pub fn lyapunov_mean(geo: &Geometry, gamma: f64, n: usize) -> f64 {
    let p = geo.native(gamma);
    let fam = &geo.fam;
    let mut x = fam.iterate_n(seed_point(0), p, BURN_IN);
    let mut s = 0.0;
    let mut k = 0;
    while k < n {
        let mut prod = 1.0;
        for _ in 0..8.min(n - k) {
            let (y, d) = fam.map_deriv(x, p);
            prod *= d;
            x = y;
            k += 1;
        }
        s += prod.abs().ln();
    }
    s / n.max(1) as f64
}

/// Windows over a uniform `theta` grid (cell midpoints) in rung `l`. Parameters come from a
/// Chebyshev interpolant of `g_l`; every grid point is screened by `lyapunov_mean` over
/// `n / 10` iterates and points below `SCREEN_MARGIN` are decided by `window_point` with `n`.
pub fn rung_windows(ladder: &Ladder, l: usize, grid: usize, n: usize) -> Result<RungWindows> {
    let map = RungMap::new(ladder, l, RUNG_NODES)?;
    let geo = &ladder.geo;
    let thetas: Vec<f64> = (0..grid).map(|i| (i as f64 + 0.5) / grid as f64).collect();
    let points = thetas
        .par_iter()
        .map(|&t| {
            let gamma = map.eval(t);
            let screen = lyapunov_mean(geo, gamma, (n / 10).max(1));
            if screen < SCREEN_MARGIN {
                window_point(geo, gamma, n)
            } else {
                WindowPoint {
                    gamma,
                    lyapunov: screen,
                    period: None,
                }
            }
        })
        .collect();
    Ok(RungWindows { l, points, thetas })
}

/// Nearest parameter `gamma (1 + k step)`, `k = 0, 1, -1, 2, ...`, with positive Lyapunov slope.
pub fn nearest_chaotic(geo: &Geometry, gamma: f64, step: f64, n: usize, tries: usize) -> Option<f64> {
    (0..tries)
        .map(|k| {
            let s = if k % 2 == 0 { (k / 2) as f64 } else { -((k / 2 + 1) as f64) };
            gamma * (1.0 + s * step)
        })
        .filter(|&g| g > 0.0)
        .find(|&g| window_point(geo, g, n).lyapunov > 0.0)
}
