//! Physical and objective constants, the logarithmic double-well potential and
//! the proliferation function.

use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;

/// A potential derivative evaluated behind the separation safeguard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Safeguarded {
    pub value: f64,
    /// The raw argument was at or beyond `1 - sep_eps` in absolute value.
    pub clamped: bool,
}

/// Convex logarithmic part `F1(r) = (1+r) ln(1+r) + (1-r) ln(1-r)` and its derivatives.
///
/// Order 0 is evaluated on the closed interval `[-1, 1]` (with `0 ln 0 = 0`) and
/// is `+inf` outside. Orders 1..=3 clamp the argument to
/// `[-1 + sep_eps, 1 - sep_eps]` and flag the clamp.
pub fn f1_log(r: f64, order: usize, sep_eps: f64) -> Result<Safeguarded> {
    let limit = 1.0 - sep_eps;
    let clamped = r.abs() >= limit;
    let value = match order {
        0 => {
            if r.abs() > 1.0 {
                f64::INFINITY
            } else {
                xlnx(1.0 + r) + xlnx(1.0 - r)
            }
        }
        1..=3 => {
            let s = r.clamp(-limit, limit);
            match order {
                1 => ((1.0 + s) / (1.0 - s)).ln(),
                2 => 2.0 / (1.0 - s * s),
                _ => -1.0 / ((1.0 + s) * (1.0 + s)) + 1.0 / ((1.0 - s) * (1.0 - s)),
            }
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "F1 derivatives are available up to order 3, got {order}"
            )))
        }
    };
    Ok(Safeguarded { value, clamped })
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Concave quadratic part `F2(r) = k (1 - r^2)`.
pub fn f2(r: f64, order: usize, k: f64) -> Result<f64> {
    Ok(match order {
        0 => k * (1.0 - r * r),
        1 => -2.0 * k * r,
        2 => -2.0 * k,
        3 => 0.0,
        _ => {
            return Err(Error::InvalidInput(format!(
                "F2 derivatives are available up to order 3, got {order}"
            )))
        }
    })
}

/// Proliferation function family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proliferation {
    /// `P(r) = p0`.
    Constant { p0: f64 },
    /// `P(r) = p0 (1 + tanh(r / scale)) / 2`.
    LogisticSmooth { p0: f64, scale: f64 },
}

impl Proliferation {
    pub fn from_kind(kind: &str, p0: f64, scale: f64) -> Result<Self> {
        let p = match kind {
            "constant" => Proliferation::Constant { p0 },
            "logistic-smooth" | "logistic_smooth" => Proliferation::LogisticSmooth { p0, scale },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown proliferation family `{other}`"
                )))
            }
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Proliferation::Constant { p0 } if p0 >= 0.0 && p0.is_finite() => Ok(()),
            Proliferation::LogisticSmooth { p0, scale }
                if p0 >= 0.0 && p0.is_finite() && scale > 0.0 && scale.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidInput(format!(
                "proliferation coefficients must be nonnegative (scale positive): {self:?}"
            ))),
        }
    }

    /// `P^(order)(r)` for `order` in 0..=2.
    pub fn eval(&self, r: f64, order: usize) -> Result<f64> {
        if order > 2 {
            return Err(Error::InvalidInput(format!(
                "P derivatives are available up to order 2, got {order}"
            )));
        }
        Ok(match *self {
            Proliferation::Constant { p0 } => {
                if order == 0 {
                    p0
                } else {
                    0.0
                }
            }
            Proliferation::LogisticSmooth { p0, scale } => {
                let t = (r / scale).tanh();
                let sech2 = 1.0 - t * t;
                match order {
                    0 => 0.5 * p0 * (1.0 + t),
                    1 => 0.5 * p0 * sech2 / scale,
                    _ => -p0 * sech2 * t / (scale * scale),
                }
            }
        })
    }

    /// Uniform bound on `|P|`, `|P'|`, `|P''|` over the real line.
    pub fn derivative_bound(&self) -> f64 {
        match *self {
            Proliferation::Constant { p0 } => p0,
            Proliferation::LogisticSmooth { p0, scale } => {
                // max |sech^2 tanh| = 2 / (3 sqrt 3)
                let c2 = 2.0 / (3.0 * 3f64.sqrt());
                p0 * 1f64.max(0.5 / scale).max(c2 / (scale * scale))
            }
        }
    }
}

/// Constants of the state system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    /// Coefficient `k` of `F2(r) = k (1 - r^2)`.
    pub f2_k: f64,
    pub proliferation: Proliferation,
    /// Margin of the separation safeguard for `F1` derivatives.
    pub sep_eps: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            chi: 0.5,
            f2_k: 1.0,
            proliferation: Proliferation::LogisticSmooth {
                p0: 0.5,
                scale: 0.5,
            },
            sep_eps: 1e-6,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("chi", self.chi)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("model.{name} must be > 0, got {v}")));
            }
        }
        if !self.f2_k.is_finite() {
            return Err(Error::InvalidInput("model.f2_k must be finite".into()));
        }
        if !(self.sep_eps > 0.0 && self.sep_eps < 0.1) {
            return Err(Error::InvalidInput(format!(
                "model.sep_eps must lie in (0, 0.1), got {}",
                self.sep_eps
            )));
        }
        self.proliferation.validate()
    }

    /// `F'(r) = F1'(r) + F2'(r)`.
    pub fn f_prime(&self, r: f64) -> Safeguarded {
        let s = f1_order(r, 1, self.sep_eps);
        Safeguarded {
            value: s.value - 2.0 * self.f2_k * r,
            clamped: s.clamped,
        }
    }

    /// `F''(r)`.
    pub fn f_second(&self, r: f64) -> Safeguarded {
        let s = f1_order(r, 2, self.sep_eps);
        Safeguarded {
            value: s.value - 2.0 * self.f2_k,
            clamped: s.clamped,
        }
    }

    /// `F'''(r)`; the quadratic part contributes nothing.
    pub fn f_third(&self, r: f64) -> Safeguarded {
        f1_order(r, 3, self.sep_eps)
    }

    pub fn p(&self, r: f64, order: usize) -> f64 {
        self.proliferation
            .eval(r, order.min(2))
            .expect("order clamped to 2")
    }
}

fn f1_order(r: f64, order: usize, sep_eps: f64) -> Safeguarded {
    f1_log(r, order, sep_eps).expect("order within 1..=3")
}

/// Box bounds `lo_i <= u_i <= hi_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo1: f64,
    pub hi1: f64,
    pub lo2: f64,
    pub hi2: f64,
}

impl Bounds {
    pub fn symmetric(b: f64) -> Self {
        Self {
            lo1: -b,
            hi1: b,
            lo2: -b,
            hi2: b,
        }
    }

    pub fn component(&self, i: usize) -> (f64, f64) {
        if i == 0 {
            (self.lo1, self.hi1)
        } else {
            (self.lo2, self.hi2)
        }
    }

    /// `lo_i < 0 < hi_i` for both components.
    pub fn straddles_zero(&self) -> bool {
        self.lo1 < 0.0 && 0.0 < self.hi1 && self.lo2 < 0.0 && 0.0 < self.hi2
    }

    pub fn max_magnitude(&self) -> f64 {
        [self.lo1, self.hi1, self.lo2, self.hi2]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Constants and data of the cost functional.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub kappa: f64,
    /// Space-time target, one slice per time node.
    pub target_q: SpaceTimeField,
    /// Final-time target.
    pub target_omega: Vec<f64>,
    pub bounds: Bounds,
    /// Control weight `h(x, t) >= 0`, one slice per time cell.
    pub h_field: SpaceTimeField,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b1 >= 0.0 && self.b2 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "cost.b1 and cost.b2 must be >= 0, got {} and {}",
                self.b1, self.b2
            )));
        }
        if !(self.b3 > 0.0) {
            return Err(Error::InvalidInput(format!("cost.b3 must be > 0, got {}", self.b3)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cost.kappa must be > 0, got {}",
                self.kappa
            )));
        }
        let b = &self.bounds;
        if !(b.lo1 < b.hi1 && b.lo2 < b.hi2) {
            return Err(Error::InvalidInput(format!("cost.bounds must satisfy lo < hi: {b:?}")));
        }
        if self.h_field.as_slice().iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("cost.h must be finite and >= 0".into()));
        }
        Ok(())
    }
}
