//! Sampled CDF curves and their shared CSV schema.
//!
//! Analytic and empirical curves use the same columns so that containment
//! validation is a row-wise join:
//! `x,value,lower,upper,kind,policy,q`
//! - analytic bound pairs: value is the midpoint, lower/upper the sorted
//!   dominant/modified pair;
//! - empirical curves: value is the pooled estimate, lower/upper the
//!   value -/+ 2 standard errors.

use std::io::{self, Write};

use crate::model::SchedulingPolicy;

use super::AnalyticError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    SuccessProbability,
    MeanDelay,
    DelayOutage,
}

impl CurveKind {
    pub fn label(&self) -> &'static str {
        match self {
            CurveKind::SuccessProbability => "success_probability",
            CurveKind::MeanDelay => "mean_delay",
            CurveKind::DelayOutage => "delay_outage",
        }
    }
}

/// Monotone sampled cumulative distribution with an uncertainty band.
#[derive(Debug, Clone)]
pub struct CdfCurve {
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: CurveKind,
    pub policy: Option<SchedulingPolicy>,
    /// Interferer-activity annotation for the CSV `q` column (the network's
    /// muting probability p for bound-pair and empirical curves).
    pub q: f64,
}

impl CdfCurve {
    pub fn new(kind: CurveKind, policy: Option<SchedulingPolicy>, q: f64) -> Self {
        CdfCurve {
            grid: Vec::new(),
            value: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            kind,
            policy,
            q,
        }
    }

    pub fn push(&mut self, x: f64, value: f64, lower: f64, upper: f64) {
        debug_assert!(self.grid.last().is_none_or(|&last| x > last));
        self.grid.push(x);
        self.value.push(value.clamp(0.0, 1.0));
        self.lower.push(lower.clamp(0.0, 1.0));
        self.upper.push(upper.clamp(0.0, 1.0));
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Check the CDF-curve invariants: strictly increasing grid, values in
    /// [0, 1] and non-decreasing within `tol`.
    pub fn check(&self, tol: f64) -> Result<(), AnalyticError> {
        for i in 0..self.len() {
            if i > 0 && self.grid[i] <= self.grid[i - 1] {
                return Err(AnalyticError::OutOfDomain {
                    name: "grid",
                    value: self.grid[i],
                    domain: "strictly increasing",
                });
            }
            for series in [&self.value, &self.lower, &self.upper] {
                if !(-tol..=1.0 + tol).contains(&series[i]) {
                    return Err(AnalyticError::OutOfDomain {
                        name: "value",
                        value: series[i],
                        domain: "[0, 1] within tolerance",
                    });
                }
                if i > 0 && series[i] < series[i - 1] - tol {
                    return Err(AnalyticError::OutOfDomain {
                        name: "value",
                        value: series[i],
                        domain: "non-decreasing within tolerance",
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest gap between the bound columns.
    pub fn max_bound_gap(&self) -> f64 {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,value,lower,upper,kind,policy,q")?;
        let policy = self.policy.map_or("-", |p| p.label());
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.9},{:.9},{:.9},{:.9},{},{},{:.9}",
                self.grid[i],
                self.value[i],
                self.lower[i],
                self.upper[i],
                self.kind.label(),
                policy,
                self.q
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_stable() {
        let mut curve = CdfCurve::new(CurveKind::MeanDelay, Some(SchedulingPolicy::Fifo), 0.5);
        curve.push(1.0, 0.1, 0.05, 0.15);
        curve.push(2.0, 0.2, 0.1, 0.3);
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,value,lower,upper,kind,policy,q");
        assert_eq!(
            lines.next().unwrap(),
            "1.000000000,0.100000000,0.050000000,0.150000000,mean_delay,fifo,0.500000000"
        );
    }

    #[test]
    fn check_flags_violations() {
        let mut curve = CdfCurve::new(CurveKind::SuccessProbability, None, 0.5);
        curve.push(0.1, 0.5, 0.4, 0.6);
        curve.push(0.2, 0.1, 0.1, 0.1);
        assert!(curve.check(1e-3).is_err());

        let mut ok = CdfCurve::new(CurveKind::SuccessProbability, None, 0.5);
        ok.push(0.1, 0.1, 0.05, 0.15);
        ok.push(0.2, 0.3, 0.25, 0.35);
        assert!(ok.check(1e-3).is_ok());
    }
}
