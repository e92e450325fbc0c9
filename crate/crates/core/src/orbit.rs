//! Raw orbits, Schwarzian derivative and Lyapunov slopes.

use crate::error::{Error, Result};
use crate::family::{UnimodalFamily, LOG_DERIV_FLOOR};
use crate::stats::SlopeFit;

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitRecord {
    pub x0: f64,
    pub gamma: f64,
    pub samples: Vec<f64>,
    /// `log_deriv_partial_sums[k] = sum_{i<k} ln|f'(samples[i])|`.
    pub log_deriv_partial_sums: Vec<f64>,
}

#[inline]
pub fn log_abs_deriv(d: f64) -> f64 {
    let a = d.abs();
    if a < 1e-300 {
        LOG_DERIV_FLOOR
    } else {
        a.ln().max(LOG_DERIV_FLOOR)
    }
}

pub fn iterate(fam: &UnimodalFamily, x0: f64, gamma: f64, n: usize) -> Result<OrbitRecord> {
    let p = fam.native(gamma);
    fam.evaluate_native(x0, p)?;
    let mut samples = Vec::with_capacity(n + 1);
    let mut sums = Vec::with_capacity(n + 1);
    let mut x = x0;
    let mut s = 0.0;
    samples.push(x);
    sums.push(s);
    for _ in 0..n {
        let (y, d) = fam.map_deriv(x, p);
        s += log_abs_deriv(d);
        x = y;
        samples.push(x);
        sums.push(s);
    }
    Ok(OrbitRecord {
        x0,
        gamma,
        samples,
        log_deriv_partial_sums: sums,
    })
}

pub fn schwarzian_at(fam: &UnimodalFamily, x: f64, gamma: f64) -> Result<f64> {
    let p = fam.native(gamma);
    let j = fam.evaluate_native(x, p)?;
    if j.df.abs() < 1e-8 {
        return Err(Error::Singularity { x, deriv: j.df });
    }
    let t = fam.third_derivative(x, p);
    let r = j.d2f / j.df;
    Ok(t / j.df - 1.5 * r * r)
}

/// Least-squares slope of `k -> S_k`, `S_k = sum_{i<=k} ln|f'(x_i)|`, over `k in [burn_in, n]`.
pub fn lyapunov_slope(
    fam: &UnimodalFamily,
    x0: f64,
    gamma: f64,
    n: usize,
    burn_in: usize,
) -> Result<f64> {
    let p = fam.native(gamma);
    fam.evaluate_native(x0, p)?;
    if n <= burn_in {
        return Err(Error::Domain {
            what: "horizon",
            value: n as f64,
        });
    }
    Ok(lyapunov_slope_native(fam, x0, p, n, burn_in))
}

pub fn lyapunov_slope_native(fam: &UnimodalFamily, x0: f64, p: f64, n: usize, burn_in: usize) -> f64 {
    let mut fit = SlopeFit::default();
    let mut x = x0;
    let mut s = 0.0;
    for k in 0..=n {
        let (y, d) = fam.map_deriv(x, p);
        s += log_abs_deriv(d);
        if k >= burn_in {
            fit.push((k - burn_in) as f64, s);
        }
        x = y;
    }
    fit.slope()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_mu(mu: f64) -> (UnimodalFamily, f64) {
        let fam = UnimodalFamily::quadratic();
        let g = fam.gamma_of(mu);
        (fam, g)
    }

    #[test]
    fn full_map_critical_orbit() {
        let (fam, g) = at_mu(4.0);
        let o = iterate(&fam, 0.5, g, 2).unwrap();
        assert_eq!(o.samples, vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn superstable_fixed_point() {
        let (fam, g) = at_mu(2.0);
        let o = iterate(&fam, 0.3, g, 60).unwrap();
        assert!((o.samples[60] - 0.5).abs() < 1e-15);
        let s = lyapunov_slope(&fam, 0.3, g, 2000, 100).unwrap();
        assert!(s < 0.0);
    }

    #[test]
    fn schwarzian_closed_form() {
        let fam = UnimodalFamily::quadratic();
        assert!((schwarzian_at(&fam, 0.25, 0.0).unwrap() + 24.0).abs() < 1e-12);
        assert!((schwarzian_at(&fam, 0.0, 0.0).unwrap() + 6.0).abs() < 1e-12);
        assert!(matches!(
            schwarzian_at(&fam, 0.5, 0.0),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn chain_rule_partial_sums() {
        let (fam, g) = at_mu(3.9);
        let o = iterate(&fam, 0.123, g, 1000).unwrap();
        let p = 3.9;
        let mut prod = 0.0;
        for (k, x) in o.samples.iter().take(1000).enumerate() {
            prod += fam.deriv(*x, p).abs().ln();
            if k % 97 == 0 {
                let rel = (prod - o.log_deriv_partial_sums[k + 1]).abs();
                assert!(rel < 1e-10 * prod.abs().max(1.0));
            }
        }
    }
}
