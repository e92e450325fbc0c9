//! Small streaming estimators shared by the diagnostics.

/// Online least-squares slope of `y` against `x` (Welford-style update).
#[derive(Clone, Copy, Debug, Default)]
pub struct SlopeFit {
    n: f64,
    mx: f64,
    my: f64,
    sxx: f64,
    sxy: f64,
}

impl SlopeFit {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        let dx = x - self.mx;
        self.mx += dx / self.n;
        let dy = y - self.my;
        self.my += dy / self.n;
        self.sxx += dx * (x - self.mx);
        self.sxy += dx * (y - self.my);
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn slope(&self) -> f64 {
        if self.sxx > 0.0 {
            self.sxy / self.sxx
        } else {
            f64::NAN
        }
    }

    pub fn intercept(&self) -> f64 {
        self.my - self.slope() * self.mx
    }
}

/// Ordinary least squares on a finite sample: `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mut fit = SlopeFit::default();
    for (&x, &y) in xs.iter().zip(ys) {
        fit.push(x, y);
    }
    (fit.slope(), fit.intercept())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Additive-recurrence low-discrepancy sequence in `(lo, hi)`.
pub fn quasi_random(seed: u64, k: usize, lo: f64, hi: f64) -> f64 {
    const G: f64 = 0.618_033_988_749_894_8;
    let start = 0.5 + (seed as f64 * 0.754_877_666_246_692_7).fract();
    let u = (start + k as f64 * G).fract();
    lo + (hi - lo) * u
}
