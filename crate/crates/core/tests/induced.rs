use std::sync::OnceLock;

use proptest::prelude::*;
use snlab_core::geometry::Geometry;
use snlab_core::induced::{breve_interval_step, build_induced, induced_orbit_deriv, induced_step, LimitMap};
use snlab_core::mather::FoldCharts;
use snlab_core::phase::{gamma_ladder, Ladder};
use snlab_core::{Error, InducedContext};

fn geo() -> &'static Geometry {
    static G: OnceLock<Geometry> = OnceLock::new();
    G.get_or_init(|| Geometry::quadratic().unwrap())
}

fn ladder() -> &'static Ladder {
    static L: OnceLock<Ladder> = OnceLock::new();
    L.get_or_init(|| gamma_ladder(geo(), 40, 201).unwrap())
}

fn ctx() -> &'static InducedContext {
    static C: OnceLock<InducedContext> = OnceLock::new();
    C.get_or_init(|| build_induced(geo(), ladder(), 100, 0.5).unwrap())
}

#[test]
fn partition_endpoints() {
    let c = ctx();
    let g = geo();
    assert_eq!(c.e_point(0), g.e);
    assert!((g.fq(c.e_point(-1), c.native) - g.e).abs() < 1e-12);
    let (lo, hi) = c.tilde_e();
    assert_eq!(lo, c.e_point(-100));
    assert_eq!(hi, c.e_point(1));
    assert!(lo <= g.fq(g.d, c.native));
}

#[test]
fn domains_tile_the_induced_region() {
    let c = ctx();
    let (lo, hi) = c.tilde_e();
    assert_eq!(c.domain_of(lo), Some(100));
    assert_eq!(c.domain_of(hi), None);
    assert_eq!(c.domain_of(c.e_point(0)), Some(0));
    for i in 1..=100i64 {
        let (a, b) = (c.e_point(-i), c.e_point(-i + 1));
        assert!(b > a);
        assert_eq!(c.domain_of(a), Some(i as usize));
        assert_eq!(c.domain_of(0.5 * (a + b)), Some(i as usize));
        assert_eq!(c.domain_of(b), Some(i as usize - 1));
    }
}

#[test]
fn domain_widths_dip_at_the_bottleneck() {
    let c = ctx();
    let widths: Vec<f64> = (0..=100i64).map(|i| c.e_point(-i + 1) - c.e_point(-i)).collect();
    let k = widths
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap();
    assert!(k > 10 && k < 90, "minimum at {k}");
    assert!(widths[..=k].windows(2).all(|w| w[1] < w[0]));
    assert!(widths[k..].windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn one_discontinuity_per_domain() {
    let c = ctx();
    let d = c.discontinuities();
    assert_eq!(d.len(), 101);
    assert!(d.windows(2).all(|w| w[1] > w[0]));
    for &x in d.iter().skip(1) {
        let left = induced_step(c, x - 1e-12 * x).0;
        let right = induced_step(c, x).0;
        assert!((left - right).abs() > 1e-6, "at {x}");
    }
}

#[test]
fn step_outside_is_one_iterate() {
    let c = ctx();
    for x in [0.1, 0.3, 0.5, 0.9] {
        assert!(c.domain_of(x).is_none());
        assert_eq!(induced_step(c, x), (geo().fam.map(x, c.native), 1));
    }
    let x = 0.5 * (c.e_point(0) + c.e_point(1));
    assert_eq!(induced_step(c, x), (geo().fam.map(x, c.native), 1));
}

#[test]
fn step_in_a_deep_domain_is_bitwise_the_base_orbit() {
    let c = ctx();
    let x = 0.5 * (c.e_point(-5) + c.e_point(-4));
    let mut y = x;
    for _ in 0..5 * 3 + 1 {
        y = geo().fam.map(y, c.native);
    }
    assert_eq!(induced_step(c, x), (y, 16));
}

#[test]
fn single_step_derivative() {
    let c = ctx();
    let o = induced_orbit_deriv(c, 0.3, 1);
    assert_eq!(o.base_iterates, 1);
    assert!((o.log_deriv - geo().fam.deriv(0.3, c.native).abs().ln()).abs() < 1e-15);
}

#[test]
fn induced_derivative_is_the_base_derivative() {
    let c = ctx();
    let o = induced_orbit_deriv(c, 0.2345, 50);
    let (_, d) = geo().fam.iterate_deriv(0.2345, c.native, o.base_iterates);
    assert!((o.log_deriv.exp() / d.abs() - 1.0).abs() < 1e-12);
    assert!(o.ratio() > 0.0 && o.ratio() <= 1.0);
}

#[test]
fn induced_expansion_along_the_critical_value() {
    let c = ctx();
    let g = geo();
    let fc = g.fam.map(g.c(), c.native);
    let o = induced_orbit_deriv(c, fc, 2000);
    let induced = o.log_deriv / 2000.0;
    let base = o.log_deriv / o.base_iterates as f64;
    assert!(induced > 0.0 && induced > base, "{induced} {base}");
}

#[test]
fn interval_away_from_the_domains_takes_one_step() {
    let c = ctx();
    let im = breve_interval_step(c, (0.2, 0.3)).unwrap();
    assert_eq!(im.pieces.len(), 1);
    assert_eq!(im.pieces[0].iterates, 1);
    let p = c.native;
    let f = &geo().fam;
    assert_eq!(im.pieces[0].image, (f.map(0.2, p), f.map(0.3, p)));
}

#[test]
fn full_domain_advances_as_one_piece() {
    let c = ctx();
    let im = breve_interval_step(c, (c.e_point(-7), c.e_point(-6))).unwrap();
    assert_eq!(im.pieces.len(), 1);
    assert_eq!(im.pieces[0].iterates, 7 * 3 + 1);
    assert!(!im.pieces[0].joined);
    // the image sits over f(I^u)
    let (a, b) = im.pieces[0].image;
    let f = &geo().fam;
    let (u, v) = (f.map(c.e_point(0), c.native), f.map(c.e_point(1), c.native));
    assert!((a - u.min(v)).abs() < 1e-8 && (b - u.max(v)).abs() < 1e-8);
}

#[test]
fn slivers_join_their_neighbours() {
    let c = ctx();
    let lo = c.e_point(-4) - 1e-9;
    let hi = c.e_point(-2) + 1e-9;
    let im = breve_interval_step(c, (lo, hi)).unwrap();
    assert!(im.pieces.len() <= 2);
    for p in &im.pieces {
        let k = p.label;
        let width = c.e_point(k + 1) - c.e_point(k);
        assert!(p.source.1 - p.source.0 >= width, "piece {k} narrower than its domain");
    }
    assert_eq!(im.pieces.first().unwrap().source.0, lo);
    assert_eq!(im.pieces.last().unwrap().source.1, hi);
    assert!(im.components().len() <= 2);
}

#[test]
fn two_slivers_join_into_the_longer() {
    let c = ctx();
    let e = c.e_point(-3);
    let w = c.e_point(-2) - e;
    let im = breve_interval_step(c, (e - 0.1 * w, e + 0.3 * w)).unwrap();
    assert_eq!(im.pieces.len(), 1);
    assert!(im.pieces[0].joined);
    assert_eq!(im.pieces[0].label, -3);
}

#[test]
fn empty_interval_is_an_error() {
    assert!(matches!(breve_interval_step(ctx(), (0.4, 0.4)), Err(Error::EmptyInterval)));
}

#[test]
fn induced_maps_approach_the_limit_map() {
    let g = geo();
    let charts = FoldCharts::build(g).unwrap();
    let theta = 0.3;
    let limit = LimitMap::new(g, &charts, theta).unwrap();
    let xs: Vec<f64> = (0..64).map(|k| g.d + (g.a() - g.d) * (k as f64 + 0.5) / 64.0).collect();
    // pointwise: the jumps of the induced maps move with l, so compare medians
    let median: Vec<f64> = [40, 80, 160]
        .iter()
        .map(|&l| {
            let c = build_induced(g, ladder(), l, theta).unwrap();
            let mut d: Vec<f64> = xs
                .iter()
                .map(|&x| (induced_step(&c, x).0 - limit.eval(x).unwrap()).abs())
                .collect();
            d.sort_by(f64::total_cmp);
            d[32]
        })
        .collect();
    assert!(median[0] > median[1] && median[1] > median[2], "{median:?}");
    assert!(median[2] < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn induced_orbit_is_a_subsequence_of_the_base_orbit(x0 in 0.01f64..0.99, n in 1usize..200) {
        let c = ctx();
        let o = induced_orbit_deriv(c, x0, n);
        let mut base = vec![x0];
        let mut y = x0;
        for _ in 0..o.base_iterates {
            y = geo().fam.map(y, c.native);
            base.push(y);
        }
        prop_assert_eq!(o.orbit.len(), n + 1);
        for (x, &k) in o.orbit.iter().zip(&o.base_index) {
            prop_assert_eq!(*x, base[k]);
        }
    }

    #[test]
    fn split_pieces_hold_a_full_domain(u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let c = ctx();
        let (lo, hi) = c.tilde_e();
        let (a, b) = (lo + (hi - lo) * u.min(v), lo + (hi - lo) * u.max(v));
        prop_assume!(b > a);
        let im = breve_interval_step(c, (a, b)).unwrap();
        prop_assert!(im.pieces.len() <= 2 || im.pieces.iter().all(|p| p.label != 0) || im.pieces.len() <= 101);
        for p in im.pieces.iter().filter(|p| !p.joined && im.pieces.len() > 1) {
            let k = p.label;
            if k > -101 && k < 1 {
                prop_assert!(p.source.0 <= c.e_point(k) && p.source.1 >= c.e_point(k + 1));
            }
        }
        for w in im.pieces.windows(2) {
            prop_assert!(w[0].source.1 <= w[1].source.0);
        }
    }
}
