//! Step-size schedules shared by the trainer and the baselines.

use crate::error::{Error, Result};
use crate::Float;
use std::fmt;
use std::str::FromStr;

/// A step-size sequence `n ↦ η_n`, indexed from `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule<F> {
    /// `η_n = c`.
    Constant(F),
    /// `η_n = n^{-p}`.
    InversePower { exponent: F },
    /// `η_n = max(n^{-p}, floor)`.
    PowerWithFloor { exponent: F, floor: F },
}

impl<F: Float> Schedule<F> {
    /// The published loopy-chain policy step size, `max(n^{-0.1}, 0.2)`.
    pub fn paper_loopy_01() -> Self {
        Schedule::PowerWithFloor {
            exponent: F::cast(0.1),
            floor: F::cast(0.2),
        }
    }

    /// Value at iteration `n ≥ 1`.
    pub fn at(&self, n: u64) -> F {
        let nf = F::cast(n.max(1) as f64);
        match *self {
            Schedule::Constant(c) => c,
            Schedule::InversePower { exponent } => nf.powf(-exponent),
            Schedule::PowerWithFloor { exponent, floor } => nf.powf(-exponent).max(floor),
        }
    }

    /// All produced values are positive.
    pub fn is_positive(&self) -> bool {
        match *self {
            Schedule::Constant(c) => c > F::zero(),
            Schedule::InversePower { .. } => true,
            Schedule::PowerWithFloor { floor, .. } => floor > F::zero(),
        }
    }
}

impl<F: Float> fmt::Display for Schedule<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Schedule::Constant(c) => write!(f, "const:{c}"),
            Schedule::InversePower { exponent } => write!(f, "power:{exponent}"),
            Schedule::PowerWithFloor { exponent, floor } => {
                if (exponent - F::cast(0.1)).abs() < F::cast(1e-15)
                    && (floor - F::cast(0.2)).abs() < F::cast(1e-15)
                {
                    write!(f, "paper-loopy-01")
                } else {
                    write!(f, "power-floor:{exponent}:{floor}")
                }
            }
        }
    }
}

impl<F: Float> FromStr for Schedule<F> {
    type Err = Error;

    /// Accepts `const:<c>`, `power:<p>` (meaning `n^{-p}`),
    /// `power-floor:<p>:<floor>`, and the built-in name `paper-loopy-01`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "paper-loopy-01" {
            return Ok(Self::paper_loopy_01());
        }
        let parse_f = |tok: &str| -> Result<F> {
            tok.parse::<f64>()
                .map(F::cast)
                .map_err(|e| Error::Parse(format!("bad schedule number {tok:?}: {e}")))
        };
        if let Some(rest) = s.strip_prefix("const:") {
            let c = parse_f(rest)?;
            if c <= F::zero() {
                return Err(Error::InvalidParameter("step size must be positive".into()));
            }
            return Ok(Schedule::Constant(c));
        }
        if let Some(rest) = s.strip_prefix("power-floor:") {
            let mut parts = rest.splitn(2, ':');
            let exponent = parse_f(parts.next().unwrap_or(""))?;
            let floor = parse_f(parts.next().unwrap_or(""))?;
            return Ok(Schedule::PowerWithFloor { exponent, floor });
        }
        if let Some(rest) = s.strip_prefix("power:") {
            return Ok(Schedule::InversePower {
                exponent: parse_f(rest)?,
            });
        }
        Err(Error::Parse(format!("unknown schedule {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn paper_loopy_schedule_values() {
        let s: Schedule<f64> = Schedule::paper_loopy_01();
        assert_abs_diff_eq!(s.at(1), 1.0);
        assert_abs_diff_eq!(s.at(1024), 1024f64.powf(-0.1), epsilon = 1e-15);
        // the 0.2 floor binds only past n ≈ 10^7
        assert!(s.at(10_000_000) > 0.2 - 1e-12);
        assert_abs_diff_eq!(s.at(100_000_000), 0.2);
    }

    #[test]
    fn parse_round_trip() {
        for text in ["const:0.04", "power:0.99", "paper-loopy-01", "power-floor:0.3:0.01"] {
            let s: Schedule<f64> = text.parse().unwrap();
            let shown = s.to_string();
            let reparsed: Schedule<f64> = shown.parse().unwrap();
            assert_eq!(s, reparsed, "{text} -> {shown}");
        }
    }

    #[test]
    fn inverse_power_decays() {
        let s: Schedule<f64> = "power:0.95".parse().unwrap();
        assert_abs_diff_eq!(s.at(10), 10f64.powf(-0.95), epsilon = 1e-15);
        assert!(s.at(100) < s.at(10));
    }

    #[test]
    fn rejects_garbage() {
        assert!("warp:9".parse::<Schedule<f64>>().is_err());
        assert!("const:-1".parse::<Schedule<f64>>().is_err());
        assert!("const:x".parse::<Schedule<f64>>().is_err());
    }
}
