use std::sync::OnceLock;

use snlab_core::geometry::Geometry;
use snlab_core::intermittency::{
    chi_estimate, context_for_gamma, fit_scaling, geometric_grid, hitting_time_stats, laminar_segments,
    measure_estimate, nearest_chaotic, period_inventory, rung_windows, scaling_fit, seed_point, window_point,
    quasi_random, EmpiricalMeasure, MeasureMode, RungMap, ScalingPoint, WindowPoint, BINS, BURN_IN,
};
use snlab_core::phase::gamma_ladder;
use snlab_core::Error;

fn geo() -> &'static Geometry {
    static G: OnceLock<Geometry> = OnceLock::new();
    G.get_or_init(|| Geometry::quadratic().unwrap())
}

fn chaotic(target: f64) -> f64 {
    nearest_chaotic(geo(), target, 1e-3, 200_000, 40).unwrap()
}

#[test]
fn chi_is_the_visit_frequency() {
    let g = geo();
    let gamma = chaotic(1e-4);
    let prof = laminar_segments(g, gamma, 0.3, 200_000, &g.ebar);
    let p = g.native(gamma);
    let mut x = g.fam.iterate_n(0.3, p, BURN_IN);
    let mut hits = 0;
    for _ in 0..200_000 {
        if g.ebar.iter().any(|&(lo, hi)| x >= lo && x <= hi) {
            hits += 1;
        }
        x = g.fam.map(x, p);
    }
    assert_eq!(prof.chi, hits as f64 / 200_000.0);
    let laminar: usize = prof.segments.iter().filter(|s| s.laminar).map(|s| s.len).sum();
    assert_eq!(laminar, hits);
}

#[test]
fn chi_rises_towards_one() {
    let chis: Vec<f64> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&t| chi_estimate(geo(), chaotic(t), 4, 500_000).chi)
        .collect();
    assert!(chis.windows(2).all(|w| w[1] > w[0]), "{chis:?}");
    assert!(chis[2] < 1.0 && chis[2] > 0.8);
}

#[test]
fn laminar_phases_lengthen() {
    let g = geo();
    let means: Vec<f64> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&t| laminar_segments(g, chaotic(t), 0.3, 1_000_000, &g.ebar).mean_laminar().unwrap())
        .collect();
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}

#[test]
fn chi_estimate_bookkeeping() {
    let est = chi_estimate(geo(), chaotic(1e-3), 5, 100_000);
    assert_eq!(est.per_seed.len(), 5);
    let mean = est.per_seed.iter().sum::<f64>() / 5.0;
    assert!((est.chi - mean).abs() < 1e-15);
    assert!(est.max_pairwise() >= 0.0);
    assert!(est.within_seed > 0.0);
    assert!(est.seed_independent(), "spread {} within {}", est.spread(), est.within_seed);
}

#[test]
fn grid_hits_both_ends() {
    let g = geometric_grid(1e-6, 1e-3, 12);
    assert_eq!(g[0], 1e-6);
    assert_eq!(g[11], 1e-3);
    assert!(g.windows(2).all(|w| (w[1] / w[0] - 10f64.powf(3.0 / 11.0)).abs() < 1e-12));
}

fn synthetic(k: f64, slope: f64, lam: f64) -> Vec<ScalingPoint> {
    geometric_grid(1e-6, 1e-3, 10)
        .into_iter()
        .map(|gamma| ScalingPoint {
            gamma,
            chi: 1.0 - k * gamma.powf(slope),
            stderr: 0.0,
            mean_laminar: Some(lam * gamma.powf(-slope)),
            masked: false,
        })
        .collect()
}

#[test]
fn fit_recovers_exact_power_laws() {
    let fit = fit_scaling(synthetic(2.0, 0.5, 3.0)).unwrap();
    assert!((fit.slope - 0.5).abs() < 1e-12);
    assert!((fit.laminar_slope + 0.5).abs() < 1e-12);
    assert!((fit.k_band.0 - 2.0).abs() < 1e-9 && (fit.k_band.1 - 2.0).abs() < 1e-9);
    assert_eq!(fit.unmasked(), 10);
}

#[test]
fn fit_skips_masked_points() {
    let mut pts = synthetic(2.0, 0.5, 3.0);
    for p in pts.iter_mut().step_by(3) {
        p.masked = true;
        p.chi = 0.0;
    }
    let fit = fit_scaling(pts).unwrap();
    assert_eq!(fit.unmasked(), 6);
    assert!((fit.slope - 0.5).abs() < 1e-12);
    let mut few = synthetic(2.0, 0.5, 3.0);
    few.truncate(5);
    assert!(matches!(fit_scaling(few), Err(Error::InsufficientPoints(5))));
}

#[test]
fn scaling_grid_is_bounded() {
    assert!(matches!(
        scaling_fit(geo(), &[1e-2], &[], 0, 1, 10),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn measures_are_probabilities_on_the_core() {
    let g = geo();
    let ctx = context_for_gamma(g, chaotic(1e-4)).unwrap();
    let fc = g.fam.map(g.c(), ctx.native);
    let f2c = g.fam.map(fc, ctx.native);
    for mode in [MeasureMode::Base, MeasureMode::Induced, MeasureMode::Pushforward] {
        let m = measure_estimate(&ctx, mode, 0.3, 200_000, 512);
        assert_eq!(m.source, mode);
        assert!((m.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(m.mass_outside(f2c, fc), 0.0);
        assert_eq!(MeasureMode::parse(mode.name()), Some(mode));
    }
}

#[test]
fn base_measure_is_invariant() {
    let g = geo();
    let ctx = context_for_gamma(g, chaotic(1e-3)).unwrap();
    let mu = ctx.native;
    let m = measure_estimate(&ctx, MeasureMode::Base, 0.3, 10_000_000, BINS);
    let image = m.transport(g, mu, 64);
    assert!((image.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let tv = image.total_variation(&m).unwrap();
    assert!(tv < 0.05, "{tv}");
    // preimage of [u, v] under mu x (1 - x), in closed form
    let branch = |y: f64, s: f64| 0.5 * (1.0 + s * (1.0 - 4.0 * y / mu).sqrt());
    for (u, v) in [(0.2, 0.35), (0.5, 0.6), (0.7, 0.9), (0.9, 0.95)] {
        let pre = m.mass(branch(u, -1.0), branch(v, -1.0)) + m.mass(branch(v, 1.0), branch(u, 1.0));
        let direct = m.mass(u, v);
        assert!((pre - direct).abs() < 5e-3, "[{u}, {v}]: {pre} vs {direct}");
    }
}

#[test]
fn independent_orbits_give_the_same_measure() {
    let g = geo();
    let ctx = context_for_gamma(g, chaotic(1e-4)).unwrap();
    let a = measure_estimate(&ctx, MeasureMode::Base, 0.3, 2_000_000, 256);
    let b = measure_estimate(&ctx, MeasureMode::Pushforward, 0.71, 2_000_000, 256);
    assert!(a.total_variation(&b).unwrap() < 0.05);
}

#[test]
fn context_matches_the_crossing_time() {
    let g = geo();
    let ladder = gamma_ladder(g, 100, 102).unwrap();
    let gamma = ladder.theta_map(100, 0.25).unwrap();
    let ctx = context_for_gamma(g, gamma).unwrap();
    assert_eq!(ctx.l, 100);
    assert!((ctx.theta - 0.25).abs() < 1e-6);
    assert_eq!(ctx.gamma, gamma);
}

#[test]
fn measure_arithmetic() {
    let m = EmpiricalMeasure {
        source: MeasureMode::Base,
        masses: vec![0.25, 0.0, 0.0, 0.75],
    };
    assert_eq!(m.edges(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(m.mass(0.0, 0.5), 0.25);
    assert_eq!(m.mass_outside(0.3, 1.0), 0.25);
    assert_eq!(m.mass_in_set(&[(0.0, 0.2), (0.8, 1.0)]), 1.0);
    assert_eq!(m.total_variation(&m).unwrap(), 0.0);
    let n = EmpiricalMeasure {
        source: MeasureMode::Base,
        masses: vec![1.0],
    };
    assert!(m.total_variation(&n).is_err());
    assert!((m.sqrt_tail_constant(&[(0.75, 1.0)]) - 1.5).abs() < 1e-15);
    assert!(m.atomic_distance(&[0.125, 0.875]) < 1e-9);
    assert!(m.atomic_distance(&[0.875]) >= 0.25);
}

#[test]
fn hitting_times_stay_bounded_as_gamma_shrinks() {
    let g = geo();
    let v = (0.4, 0.6);
    let stats: Vec<_> = [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&t| {
            let ctx = context_for_gamma(g, chaotic(t)).unwrap();
            hitting_time_stats(&ctx, v, seed_point(1), 1_000_000)
        })
        .collect();
    let to_v: Vec<f64> = stats.iter().map(|h| h.induced_to_v).collect();
    let (lo, hi) = to_v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(lo > 0.0 && hi < 2.0 * lo, "{to_v:?}");
    // into Etilde the mean falls as gamma shrinks; bounded by its value at 1e-4
    let to_e: Vec<f64> = stats.iter().map(|h| h.base_to_etilde).collect();
    assert!(to_e.iter().all(|&x| x > 0.0 && x <= to_e[0]), "{to_e:?}");
}

#[test]
fn everything_is_already_in_the_whole_interval() {
    let ctx = context_for_gamma(geo(), chaotic(1e-4)).unwrap();
    let h = hitting_time_stats(&ctx, (0.0, 1.0), 0.3, 10_000);
    assert_eq!(h.induced_to_v, 0.0);
}

#[test]
fn tail_constant_is_stable_in_gamma() {
    let g = geo();
    let intervals: Vec<(f64, f64)> = (0..100)
        .map(|k| {
            let a = quasi_random(11, k, 0.0, 1.0);
            (a, (a + quasi_random(12, k, 1e-4, 0.1)).min(1.0))
        })
        .collect();
    let ks: Vec<f64> = [1e-4, 1e-6]
        .iter()
        .map(|&t| {
            let ctx = context_for_gamma(g, chaotic(t)).unwrap();
            measure_estimate(&ctx, MeasureMode::Induced, 0.3, 2_000_000, BINS).sqrt_tail_constant(&intervals)
        })
        .collect();
    assert!(ks[0] > 0.0 && ks[1] < 2.0 * ks[0] && ks[0] < 2.0 * ks[1], "{ks:?}");
}

#[test]
fn measures_concentrate_on_the_fold_orbit() {
    let g = geo();
    let atoms = &g.sn.orbit_of_a;
    let dist: Vec<f64> = [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&t| {
            let ctx = context_for_gamma(g, chaotic(t)).unwrap();
            measure_estimate(&ctx, MeasureMode::Base, 0.3, 2_000_000, BINS).atomic_distance(atoms)
        })
        .collect();
    assert!(dist.windows(2).all(|w| w[1] < w[0]), "{dist:?}");
}

#[test]
fn laminar_lengths_scale_like_inverse_root_gamma() {
    let g = geo();
    let prof = |t: f64| laminar_segments(g, chaotic(t), 0.3, 5_000_000, &g.ebar);
    let (a, b) = (prof(1e-5), prof(2.5e-6));
    let ratio = b.mean_laminar().unwrap() / a.mean_laminar().unwrap();
    assert!((1.5..2.5).contains(&ratio), "{ratio}");
    // the longest laminar run is at most a fixed multiple of gamma^{-1/2}
    let k: Vec<f64> = [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&t| {
            let gamma = chaotic(t);
            laminar_segments(g, gamma, 0.3, 5_000_000, &g.ebar).max_laminar().unwrap() as f64 * gamma.sqrt()
        })
        .collect();
    assert!(k.iter().all(|&x| x > 0.5 && x < 2.0), "{k:?}");
}

#[test]
fn chi_is_continuous_near_the_fold() {
    for t in [1e-4, 1e-5] {
        let a = chi_estimate(geo(), chaotic(t), 8, 1_000_000);
        let b = chi_estimate(geo(), chaotic(1.1 * t), 8, 1_000_000);
        assert!((a.chi - b.chi).abs() < 5e-2);
        assert!(a.max_pairwise() < 1e-2);
    }
}

#[test]
fn windows_below_the_fold() {
    let g = geo();
    // just past the fold the period-three cycle is still attracting
    let w = window_point(g, -1e-4, 200_000);
    assert!(w.masked());
    assert_eq!(w.period, Some(3));
    let c = window_point(g, chaotic(1e-3), 200_000);
    assert!(!c.masked() && c.period.is_none());
}

#[test]
fn inventory_counts_periods() {
    let pt = |p| WindowPoint {
        gamma: 0.0,
        lyapunov: -1.0,
        period: p,
    };
    let inv = period_inventory(&[pt(Some(6)), pt(None), pt(Some(3)), pt(Some(6))]);
    assert_eq!(inv, vec![(3, 1), (6, 2)]);
}

#[test]
fn rung_interpolant_matches_the_ladder() {
    let g = geo();
    let ladder = gamma_ladder(g, 100, 102).unwrap();
    let map = RungMap::new(&ladder, 100, 25).unwrap();
    let width = ladder.gamma(100) - ladder.gamma(101);
    for theta in [0.013, 0.29, 0.5, 0.777, 0.99] {
        let exact = ladder.theta_map(100, theta).unwrap();
        assert!((map.eval(theta) - exact).abs() < 1e-8 * width, "theta = {theta}");
    }
}

#[test]
fn rung_windows_flag_negative_exponents() {
    let g = geo();
    let ladder = gamma_ladder(g, 100, 102).unwrap();
    let rw = rung_windows(&ladder, 100, 64, 100_000).unwrap();
    assert_eq!(rw.thetas.len(), 64);
    assert_eq!(rw.thetas[0], 0.5 / 64.0);
    for p in &rw.points {
        assert_eq!(p.masked(), p.lyapunov < 0.0);
        if p.masked() {
            assert_eq!(window_point(g, p.gamma, 100_000).lyapunov, p.lyapunov);
        }
    }
    let f = rw.masked_fraction();
    assert!((0.0..1.0).contains(&f));
}
