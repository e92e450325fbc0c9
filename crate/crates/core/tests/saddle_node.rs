use snlab_core::geometry::Geometry;
use snlab_core::saddle_node::{
    continue_periodic_point, gamma_convention, locate_saddle_node, multiplier, repelling_points_of_f0,
};
use snlab_core::{Error, SaddleNodeData, UnimodalFamily};

fn quad() -> (UnimodalFamily, SaddleNodeData) {
    let fam = UnimodalFamily::quadratic();
    let sn = locate_saddle_node(&fam, 3, (3.83, 0.16)).unwrap();
    (fam, sn)
}

fn two_cycle(mu: f64) -> (f64, f64) {
    let b = 1.0 + 1.0 / mu;
    let c = (1.0 + mu) / (mu * mu);
    let disc = (b * b - 4.0 * c).sqrt();
    ((b - disc) / 2.0, (b + disc) / 2.0)
}

fn zeros_near_a(fam: &UnimodalFamily, a: f64, native: f64) -> (usize, f64) {
    let n = 20_000;
    let h = |x: f64| fam.iterate_n(x, native, 3) - x;
    let xs: Vec<f64> = (0..=n).map(|k| a - 0.01 + 0.02 * k as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let changes = vals.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    let min = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    (changes, min)
}

#[test]
fn fold_of_period_three_is_one_plus_two_root_two() {
    let (fam, sn) = quad();
    assert!((sn.native - (1.0 + 2.0 * 2f64.sqrt())).abs() < 1e-10);
    assert_eq!(sn.orbit_of_a.len(), 3);
    let p = sn.native;
    for &x in &sn.orbit_of_a {
        assert!((fam.iterate_n(x, p, 3) - x).abs() < 1e-12);
        assert!((fam.iterate_deriv(x, p, 3).1 - 1.0).abs() < 1e-9);
    }
    let c = fam.critical_point();
    let nearest = sn
        .orbit_of_a
        .iter()
        .cloned()
        .min_by(|x, y| (x - c).abs().total_cmp(&(y - c).abs()))
        .unwrap();
    assert_eq!(nearest, sn.a);
}

#[test]
fn nondegenerate_in_the_gamma_orientation() {
    let (_, sn) = quad();
    assert!(sn.second_deriv.abs() > 1e-6);
    assert!(sn.second_deriv * sn.param_deriv > 0.0);
}

#[test]
fn location_is_independent_of_the_seed() {
    let fam = UnimodalFamily::quadratic();
    let found: Vec<f64> = (0..10)
        .map(|k| {
            let seed = (3.826 + 0.0005 * k as f64, 0.15 + 0.002 * k as f64);
            locate_saddle_node(&fam, 3, seed).unwrap().native
        })
        .collect();
    for a in &found {
        for b in &found {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn period_one_has_no_fold() {
    let fam = UnimodalFamily::quadratic();
    assert!(matches!(
        locate_saddle_node(&fam, 1, (3.0, 2.0 / 3.0)),
        Err(Error::NoConvergence { .. }) | Err(Error::Degenerate(_))
    ));
}

#[test]
fn gamma_zero_is_the_fold() {
    let (fam, sn) = quad();
    assert_eq!(gamma_convention(&fam, &sn, 0.0).unwrap(), sn.native);
    assert!(gamma_convention(&fam, &sn, 0.2).is_err());
}

#[test]
fn positive_gamma_destroys_the_orbit() {
    let (fam, sn) = quad();
    let p = gamma_convention(&fam, &sn, 1e-4).unwrap();
    assert!((p - (sn.native - 1e-4)).abs() < 1e-15);
    let (changes, min) = zeros_near_a(&fam, sn.a, p);
    assert_eq!(changes, 0);
    assert!(min > 0.0);
}

#[test]
fn negative_gamma_has_two_fixed_points_of_fq_near_a() {
    let (fam, sn) = quad();
    let p = gamma_convention(&fam, &sn, -1e-4).unwrap();
    assert!((p - (sn.native + 1e-4)).abs() < 1e-15);
    assert_eq!(zeros_near_a(&fam, sn.a, p).0, 2);
}

#[test]
fn repelling_fixed_point() {
    let (fam, sn) = quad();
    let tracks = repelling_points_of_f0(&fam, &sn, 1, &[]);
    let x = 1.0 - 1.0 / sn.native;
    assert!(tracks.iter().any(|t| t.period == 1 && (t.points[0] - x).abs() < 1e-12));
}

#[test]
fn repelling_two_cycle() {
    let (fam, sn) = quad();
    let tracks = repelling_points_of_f0(&fam, &sn, 2, &[]);
    let (lo, hi) = two_cycle(sn.native);
    let twos: Vec<f64> = tracks.iter().filter(|t| t.period == 2).map(|t| t.points[0]).collect();
    assert_eq!(twos.len(), 2);
    assert!(twos.iter().any(|x| (x - lo).abs() < 1e-12));
    assert!(twos.iter().any(|x| (x - hi).abs() < 1e-12));
    assert!(multiplier(&fam, lo, sn.native, 2).abs() > 1.0);
}

#[test]
fn no_period_three_repeller_at_the_fold() {
    // both three-cycles of the quadratic family have merged into the neutral fold orbit
    let geo = Geometry::quadratic().unwrap();
    for ebar in [&geo.ebar[..], &[]] {
        let tracks = repelling_points_of_f0(&geo.fam, &geo.sn, 3, ebar);
        assert!(tracks.iter().all(|t| t.period != 3));
        assert!(tracks.iter().any(|t| t.period == 1));
    }
}

#[test]
fn reported_repellers_are_periodic_and_expanding() {
    let (fam, sn) = quad();
    for t in repelling_points_of_f0(&fam, &sn, 8, &[]) {
        let x = t.points[0];
        assert!((fam.iterate_n(x, sn.native, t.period) - x).abs() < 1e-12);
        assert!(t.multipliers[0].abs() > 1.0 + 1e-6);
    }
}

#[test]
fn fixed_point_continuation() {
    let (fam, sn) = quad();
    let grid: Vec<f64> = (0..=20).map(|k| 1e-3 * k as f64 / 20.0).collect();
    let x0 = 1.0 - 1.0 / sn.native;
    let t = continue_periodic_point(&fam, &sn, (1, x0, 0.0), &grid).unwrap();
    assert_eq!(t.points.len(), grid.len());
    for (g, x) in t.gammas.iter().zip(&t.points) {
        let mu = sn.native - g;
        assert!((x - (1.0 - 1.0 / mu)).abs() < 1e-12);
    }
    assert!(t.multipliers.iter().all(|m| m.abs() > 1.0));
}

#[test]
fn two_cycle_continuation() {
    let (fam, sn) = quad();
    let grid: Vec<f64> = (0..=20).map(|k| 1e-3 * k as f64 / 20.0).collect();
    let (lo, _) = two_cycle(sn.native);
    let t = continue_periodic_point(&fam, &sn, (2, lo, 0.0), &grid).unwrap();
    assert_eq!(t.points.len(), grid.len());
    for (g, x) in t.gammas.iter().zip(&t.points) {
        assert!((x - two_cycle(sn.native - g).0).abs() < 1e-12);
    }
}

#[test]
fn period_five_track_is_smooth_and_repelling() {
    let (fam, sn) = quad();
    let seed = repelling_points_of_f0(&fam, &sn, 5, &[])
        .into_iter()
        .find(|t| t.period == 5)
        .unwrap();
    let grid: Vec<f64> = (0..=50).map(|k| 1e-4 * k as f64 / 50.0).collect();
    let t = continue_periodic_point(&fam, &sn, (5, seed.points[0], 0.0), &grid).unwrap();
    assert_eq!(t.points.len(), grid.len());
    assert!(t.multipliers.iter().all(|m| m.abs() > 1.0));
    for (k, x) in t.points.iter().enumerate() {
        let p = sn.native - t.gammas[k];
        assert!((fam.iterate_n(*x, p, 5) - x).abs() < 1e-12);
    }
    // continuity against a finite-difference slope estimate
    let step = grid[1];
    let slopes: Vec<f64> = t.points.windows(2).map(|w| (w[1] - w[0]).abs() / step).collect();
    let local = slopes.iter().cloned().fold(0.0, f64::max);
    assert!(t.points.windows(2).all(|w| (w[1] - w[0]).abs() < 10.0 * step * local.max(1.0)));
    assert!(t.point_at(5e-5).is_some());
}

#[test]
fn continuation_refuses_a_neutral_seed() {
    let (fam, sn) = quad();
    assert!(matches!(
        continue_periodic_point(&fam, &sn, (3, sn.a, 0.0), &[0.0]),
        Err(Error::ContinuationLost { .. })
    ));
}
