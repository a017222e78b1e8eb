//! Scalar coefficients `a(x, y)` and their reciprocals.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// The power weight `y ↦ y^gamma`. For `gamma ∈ (-1, 1)` it belongs to the
/// strong A₂ class, and so does its reciprocal `y^(-gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerWeight {
    pub gamma: f64,
}

impl PowerWeight {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > -1.0 && gamma < 1.0) {
            return Err(Error::Domain(format!(
                "power weight exponent must lie in (-1, 1), got {gamma}"
            )));
        }
        Ok(PowerWeight { gamma })
    }

    pub fn reciprocal(self) -> Self {
        PowerWeight { gamma: -self.gamma }
    }

    pub fn eval(self, y: f64) -> f64 {
        if self.gamma == 0.0 {
            1.0
        } else {
            y.powf(self.gamma)
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

/// Either an exactly integrable power weight or a positive callback that is
/// integrated with tensor Gauss rules of the given order.
///
/// Points are `[x1, x2, y]`; `x2` is ignored on one-dimensional bases.
#[derive(Clone)]
pub enum Weight {
    Power(PowerWeight),
    Callback { f: ScalarFn, order: usize },
}

impl Weight {
    pub fn power(gamma: f64) -> Result<Self> {
        Ok(Weight::Power(PowerWeight::new(gamma)?))
    }

    pub fn constant() -> Self {
        Weight::Power(PowerWeight { gamma: 0.0 })
    }

    pub fn callback(f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static, order: usize) -> Self {
        Weight::Callback {
            f: Arc::new(f),
            order,
        }
    }

    pub fn eval(&self, p: &[f64; 3]) -> f64 {
        match self {
            Weight::Power(w) => w.eval(p[2]),
            Weight::Callback { f, .. } => f(p),
        }
    }

    pub fn reciprocal(&self) -> Weight {
        match self {
            Weight::Power(w) => Weight::Power(w.reciprocal()),
            Weight::Callback { f, order } => {
                let f = Arc::clone(f);
                Weight::Callback {
                    f: Arc::new(move |p: &[f64; 3]| 1.0 / f(p)),
                    order: *order,
                }
            }
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Power(w) => write!(f, "Power(y^{})", w.gamma),
            Weight::Callback { order, .. } => write!(f, "Callback(order {order})"),
        }
    }
}
