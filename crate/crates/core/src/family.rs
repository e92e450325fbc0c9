//! One-parameter unimodal families and their evaluators.

use std::fmt;
use std::sync::Arc;

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Floor applied to `ln|f'|` when the derivative underflows.
pub const LOG_DERIV_FLOOR: f64 = -690.0;

/// Map value and its first two space derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

pub type Evaluator = Arc<dyn Fn(f64, f64) -> Jet + Send + Sync>;
pub type ThirdDerivative = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Quadratic,
    Custom {
        eval: Evaluator,
        third: Option<ThirdDerivative>,
    },
}

/// A family `f_p` of unimodal maps of `[0,1]` indexed by a native parameter `p`.
///
/// The signed parameter is `gamma = gamma_offset - p`, so positive `gamma`
/// lies on the side where the fold orbit has disappeared.
#[derive(Clone)]
pub struct UnimodalFamily {
    kind: Kind,
    native_range: (f64, f64),
    c: f64,
    q: usize,
    gamma_offset: f64,
    gamma_offset_dd: Dd,
}

impl fmt::Debug for UnimodalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnimodalFamily")
            .field("quadratic", &matches!(self.kind, Kind::Quadratic))
            .field("native_range", &self.native_range)
            .field("c", &self.c)
            .field("q", &self.q)
            .field("gamma_offset", &self.gamma_offset)
            .finish()
    }
}

/// `1 + 2 sqrt 2` as a double-double.
pub fn mu_sn_dd() -> Dd {
    let s2 = Dd {
        hi: std::f64::consts::SQRT_2,
        lo: -9.667_293_313_452_913e-17,
    };
    Dd::new(1.0) + s2.mul_f64(2.0)
}

impl UnimodalFamily {
    /// `f_mu(x) = mu x (1 - x)` with the period-3 fold at `mu = 1 + 2 sqrt 2`.
    pub fn quadratic() -> Self {
        let off = mu_sn_dd();
        UnimodalFamily {
            kind: Kind::Quadratic,
            native_range: (0.0, 4.0),
            c: 0.5,
            q: 3,
            gamma_offset: off.to_f64(),
            gamma_offset_dd: off,
        }
    }

    pub fn custom(
        eval: Evaluator,
        third: Option<ThirdDerivative>,
        native_range: (f64, f64),
        c: f64,
        q: usize,
        gamma_offset: f64,
    ) -> Self {
        UnimodalFamily {
            kind: Kind::Custom { eval, third },
            native_range,
            c,
            q,
            gamma_offset,
            gamma_offset_dd: Dd::new(gamma_offset),
        }
    }

    /// Same family with the signed parameter recentred at `offset`.
    pub fn with_gamma_offset(&self, offset: f64) -> Self {
        let mut out = self.clone();
        out.gamma_offset = offset;
        out.gamma_offset_dd = Dd::new(offset);
        out
    }

    pub fn with_period(&self, q: usize) -> Self {
        let mut out = self.clone();
        out.q = q;
        out
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Quadratic)
    }

    pub fn critical_point(&self) -> f64 {
        self.c
    }

    pub fn period(&self) -> usize {
        self.q
    }

    pub fn native_range(&self) -> (f64, f64) {
        self.native_range
    }

    pub fn gamma_offset(&self) -> f64 {
        self.gamma_offset
    }

    pub fn native(&self, gamma: f64) -> f64 {
        self.gamma_offset - gamma
    }

    pub fn native_dd(&self, gamma: Dd) -> Dd {
        self.gamma_offset_dd - gamma
    }

    pub fn gamma_of(&self, native: f64) -> f64 {
        self.gamma_offset - native
    }

    fn check(&self, x: f64, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain { what: "x", value: x });
        }
        if !(self.native_range.0..=self.native_range.1).contains(&p) {
            return Err(Error::Domain {
                what: "parameter",
                value: p,
            });
        }
        Ok(())
    }

    /// `(f, f', f'')` at signed parameter `gamma`.
    pub fn evaluate(&self, x: f64, gamma: f64) -> Result<Jet> {
        self.evaluate_native(x, self.native(gamma))
    }

    pub fn evaluate_native(&self, x: f64, p: f64) -> Result<Jet> {
        self.check(x, p)?;
        Ok(self.jet(x, p))
    }

    /// Unchecked evaluation at native parameter `p`.
    #[inline]
    pub fn jet(&self, x: f64, p: f64) -> Jet {
        match &self.kind {
            Kind::Quadratic => Jet {
                f: p * x * (1.0 - x),
                df: p * (1.0 - 2.0 * x),
                d2f: -2.0 * p,
            },
            Kind::Custom { eval, .. } => eval(x, p),
        }
    }

    #[inline]
    pub fn map(&self, x: f64, p: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => p * x * (1.0 - x),
            Kind::Custom { eval, .. } => eval(x, p).f,
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64, p: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => p * (1.0 - 2.0 * x),
            Kind::Custom { eval, .. } => eval(x, p).df,
        }
    }

    #[inline]
    pub fn map_deriv(&self, x: f64, p: f64) -> (f64, f64) {
        match &self.kind {
            Kind::Quadratic => (p * x * (1.0 - x), p * (1.0 - 2.0 * x)),
            Kind::Custom { eval, .. } => {
                let j = eval(x, p);
                (j.f, j.df)
            }
        }
    }

    /// Third space derivative; centred difference of `f''` when not supplied.
    pub fn third_derivative(&self, x: f64, p: f64) -> f64 {
        match &self.kind {
            Kind::Quadratic => 0.0,
            Kind::Custom { eval, third } => match third {
                Some(t) => t(x, p),
                None => {
                    let h = 1e-5;
                    (eval(x + h, p).d2f - eval(x - h, p).d2f) / (2.0 * h)
                }
            },
        }
    }

    /// Extended-precision map value; custom families fall back to `f64`.
    pub fn map_dd(&self, x: Dd, p: Dd) -> Dd {
        match &self.kind {
            Kind::Quadratic => p * x * (Dd::new(1.0) - x),
            Kind::Custom { eval, .. } => Dd::new(eval(x.to_f64(), p.to_f64()).f),
        }
    }

    /// `f^n(x)`.
    #[inline]
    pub fn iterate_n(&self, mut x: f64, p: f64, n: usize) -> f64 {
        for _ in 0..n {
            x = self.map(x, p);
        }
        x
    }

    /// `f^n(x)` and its derivative.
    pub fn iterate_deriv(&self, mut x: f64, p: f64, n: usize) -> (f64, f64) {
        let mut d = 1.0;
        for _ in 0..n {
            let (y, dy) = self.map_deriv(x, p);
            d *= dy;
            x = y;
        }
        (x, d)
    }

    /// `f^n(x)` with first and second derivatives.
    pub fn iterate_jet(&self, mut x: f64, p: f64, n: usize) -> Jet {
        let (mut d1, mut d2) = (1.0, 0.0);
        for _ in 0..n {
            let j = self.jet(x, p);
            d2 = j.d2f * d1 * d1 + j.df * d2;
            d1 *= j.df;
            x = j.f;
        }
        Jet {
            f: x,
            df: d1,
            d2f: d2,
        }
    }

    /// The fold return map `F = f^q` and its derivative.
    #[inline]
    pub fn fq(&self, x: f64, p: f64) -> (f64, f64) {
        self.iterate_deriv(x, p, self.q)
    }

    #[inline]
    pub fn fq_value(&self, x: f64, p: f64) -> f64 {
        self.iterate_n(x, p, self.q)
    }

    pub fn iterate_dd(&self, mut x: Dd, p: Dd, n: usize) -> Dd {
        for _ in 0..n {
            x = self.map_dd(x, p);
        }
        x
    }
}
