//! Piecewise-constant coefficient curves.
//!
//! A curve holds one value per right-open interval `[t_k, t_{k+1})`; the last
//! value extends to infinity. Integrals are exact sums of value times overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SppcError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct ParamCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl ParamCurve {
    pub fn constant(value: f64) -> Self {
        ParamCurve { breakpoints: vec![0.0], values: vec![value] }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(SppcError::invalid(
                "curve",
                format!(
                    "need one value per breakpoint, got {} breakpoints and {} values",
                    breakpoints.len(),
                    values.len()
                ),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(SppcError::invalid("curve", "first breakpoint must be 0"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SppcError::invalid("curve", "breakpoints must be strictly increasing"));
        }
        if breakpoints.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(SppcError::invalid("curve", "breakpoints and values must be finite"));
        }
        Ok(ParamCurve { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|v| *v == self.values[0])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    fn piece_index(&self, t: f64) -> usize {
        // index of the last breakpoint <= t
        self.breakpoints.partition_point(|b| *b <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.piece_index(t)]
    }

    /// Exact integral over `[s, t]`; negated when `t < s`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        if t < s {
            return -self.integral(t, s);
        }
        let mut acc = 0.0;
        let mut k = self.piece_index(s);
        let mut left = s;
        while left < t {
            let right = self.breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY).min(t);
            acc += self.values[k] * (right - left);
            left = right;
            k += 1;
        }
        acc
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ParamCurve { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|v| v * factor).collect() }
    }

    /// Pointwise map over the values, keeping the breakpoints.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ParamCurve { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CurveRepr {
    Constant(f64),
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl TryFrom<CurveRepr> for ParamCurve {
    type Error = SppcError;

    fn try_from(repr: CurveRepr) -> Result<Self> {
        match repr {
            CurveRepr::Constant(v) => ParamCurve::new(vec![0.0], vec![v]),
            CurveRepr::Piecewise { breakpoints, values } => ParamCurve::new(breakpoints, values),
        }
    }
}

impl From<ParamCurve> for CurveRepr {
    fn from(c: ParamCurve) -> Self {
        if c.values.len() == 1 {
            CurveRepr::Constant(c.values[0])
        } else {
            CurveRepr::Piecewise { breakpoints: c.breakpoints, values: c.values }
        }
    }
}
