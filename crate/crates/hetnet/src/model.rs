//! Domain types shared by every module: network description, user marks,
//! scheduling policies and interferer variants.
//!
//! A [`NetworkParams`] is immutable after [`NetworkParams::validate`]
//! succeeds and can be shared freely across worker threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violation of a construction invariant, reported with the offending value.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("network must have at least one tier")]
    NoTiers,
    #[error("tier {tier}: {field} must be positive, got {value}")]
    NonPositiveTierField {
        tier: usize,
        field: &'static str,
        value: f64,
    },
    #[error(
        "path loss exponent alpha must exceed 2 for the interference field to converge, got {0}"
    )]
    AlphaTooSmall(f64),
    #[error("reference path loss must be positive, got {0}")]
    NonPositiveRefLoss(f64),
    #[error("SIR threshold theta must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error("activity probability p must lie in [0, 1], got {0}")]
    ActivityOutOfRange(f64),
    #[error("user density lambda_u must be non-negative, got {0}")]
    NegativeUserDensity(f64),
    #[error("arrival-rate range must satisfy 0 <= xi_min <= xi_max <= 1, got [{0}, {1}]")]
    BadArrivalRange(f64, f64),
    #[error("delay-requirement range must satisfy 1 <= beta_min <= beta_max, got [{0}, {1}]")]
    BadDelayRange(f64, f64),
    #[error("delta must equal 2/alpha exactly ({expected}), got {actual}")]
    DeltaMismatch { expected: f64, actual: f64 },
    #[error("{field} must be finite")]
    NotFinite { field: &'static str },
}

/// One tier of base stations: fixed transmit power, deployment density and
/// association bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    /// Transmit power in milliwatts (configured in dBm, converted on load).
    pub power_mw: f64,
    /// Base stations per square meter.
    pub density: f64,
    /// Dimensionless association bias B_k.
    pub bias: f64,
}

/// Convert a power in dBm to milliwatts: P_mW = 10^(dBm/10).
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Static description of the K-tier network. The number of tiers is the
/// length of `tiers`; there is deliberately no separate K field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Ordered tier list, length K >= 1.
    pub tiers: Vec<TierSpec>,
    /// Path loss exponent, must exceed 2.
    pub alpha: f64,
    /// Reference path loss A. Cancels out of every in-scope quantity (all
    /// formulas use power ratios); carried for completeness.
    pub ref_loss: f64,
    /// SIR decoding threshold (linear, not dB).
    pub theta: f64,
    /// Per-slot activity probability: random muting keeps a base station on
    /// with probability p.
    pub p: f64,
    /// Users per square meter.
    pub lambda_u: f64,
    /// Arrival-rate range (packets per slot), uniform marks.
    pub xi_min: f64,
    pub xi_max: f64,
    /// Delay-requirement range (slots), uniform marks.
    pub beta_min: f64,
    pub beta_max: f64,
    /// Derived: 2/alpha. Set by [`NetworkParams::new`].
    pub delta: f64,
}

impl NetworkParams {
    /// Build a parameter set with `delta` derived from `alpha` and every
    /// invariant checked.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tiers: Vec<TierSpec>,
        alpha: f64,
        ref_loss: f64,
        theta: f64,
        p: f64,
        lambda_u: f64,
        xi_range: (f64, f64),
        beta_range: (f64, f64),
    ) -> Result<Self, ModelError> {
        let params = NetworkParams {
            tiers,
            alpha,
            ref_loss,
            theta,
            p,
            lambda_u,
            xi_min: xi_range.0,
            xi_max: xi_range.1,
            beta_min: beta_range.0,
            beta_max: beta_range.1,
            delta: 2.0 / alpha,
        };
        params.validate()?;
        Ok(params)
    }

    /// Check every construction invariant. Returns the first violation.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.tiers.is_empty() {
            return Err(ModelError::NoTiers);
        }
        for (k, tier) in self.tiers.iter().enumerate() {
            for (field, value) in [
                ("power", tier.power_mw),
                ("density", tier.density),
                ("bias", tier.bias),
            ] {
                if !value.is_finite() {
                    return Err(ModelError::NotFinite { field });
                }
                if value <= 0.0 {
                    return Err(ModelError::NonPositiveTierField {
                        tier: k + 1,
                        field,
                        value,
                    });
                }
            }
        }
        if !self.alpha.is_finite() || self.alpha <= 2.0 {
            return Err(ModelError::AlphaTooSmall(self.alpha));
        }
        if !self.ref_loss.is_finite() || self.ref_loss <= 0.0 {
            return Err(ModelError::NonPositiveRefLoss(self.ref_loss));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(ModelError::NonPositiveTheta(self.theta));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ModelError::ActivityOutOfRange(self.p));
        }
        if !self.lambda_u.is_finite() || self.lambda_u < 0.0 {
            return Err(ModelError::NegativeUserDensity(self.lambda_u));
        }
        if !(self.xi_min >= 0.0 && self.xi_min <= self.xi_max && self.xi_max <= 1.0) {
            return Err(ModelError::BadArrivalRange(self.xi_min, self.xi_max));
        }
        if !(self.beta_min >= 1.0 && self.beta_min <= self.beta_max) {
            return Err(ModelError::BadDelayRange(self.beta_min, self.beta_max));
        }
        let expected = 2.0 / self.alpha;
        if self.delta != expected {
            return Err(ModelError::DeltaMismatch {
                expected,
                actual: self.delta,
            });
        }
        Ok(())
    }

    /// Number of tiers K.
    pub fn num_tiers(&self) -> usize {
        self.tiers.len()
    }

    /// Mean arrival rate of the uniform mark distribution, (xi_min + xi_max)/2.
    pub fn mean_xi(&self) -> f64 {
        0.5 * (self.xi_min + self.xi_max)
    }
}

/// A user with its position and traffic marks (x_i, xi_i, beta_i).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedUser {
    /// Position in meters within the deployment window.
    pub position: [f64; 2],
    /// Bernoulli arrival rate, packets per slot.
    pub xi: f64,
    /// Mean-delay requirement in slots.
    pub beta: f64,
}

/// How a base station picks the user to serve in each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulingPolicy {
    /// Uniform choice over all attached users, empty queues included.
    Random,
    /// Earliest-arrived packet across all queues of the cell.
    Fifo,
    /// Users scheduled one by one; the cursor advances every slot.
    RoundRobin,
}

impl SchedulingPolicy {
    /// Short label used in CSV output and file names.
    pub fn label(&self) -> &'static str {
        match self {
            SchedulingPolicy::Random => "random",
            SchedulingPolicy::Fifo => "fifo",
            SchedulingPolicy::RoundRobin => "rr",
        }
    }
}

/// Which interference system the simulator realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterfererModel {
    /// Base stations transmit iff unmuted and the scheduled queue is non-empty.
    Original,
    /// Unmuted base stations always transmit, sending dummy packets when the
    /// scheduled queue is empty. Worst-case interference.
    Dominant,
    /// Interferers transmit only a newly eligible arrival of the scheduled
    /// user and never retransmit. Best-case interference.
    Modified,
}

impl InterfererModel {
    pub fn label(&self) -> &'static str {
        match self {
            InterfererModel::Original => "original",
            InterfererModel::Dominant => "dominant",
            InterfererModel::Modified => "modified",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_tier() -> NetworkParams {
        NetworkParams::new(
            vec![
                TierSpec {
                    power_mw: dbm_to_mw(39.0),
                    density: 1e-5,
                    bias: 1.0,
                },
                TierSpec {
                    power_mw: dbm_to_mw(24.0),
                    density: 5e-5,
                    bias: 1.0,
                },
            ],
            2.5,
            1.0,
            1.0,
            0.5,
            1e-4,
            (0.2, 0.6),
            (18.0, 20.0),
        )
        .unwrap()
    }

    #[test]
    fn dbm_conversion() {
        // 10^3.9 mW, checked against an independent calculator.
        assert_relative_eq!(dbm_to_mw(39.0), 7943.282347242816, max_relative = 1e-12);
        assert_eq!(dbm_to_mw(0.0), 1.0);
    }

    #[test]
    fn alpha_boundary_rejected() {
        let mut p = two_tier();
        p.alpha = 2.0;
        p.delta = 1.0;
        assert_eq!(p.validate(), Err(ModelError::AlphaTooSmall(2.0)));
    }

    #[test]
    fn delta_in_unit_interval_whenever_alpha_valid() {
        for alpha in [2.000001, 2.5, 3.0, 4.0, 6.0, 100.0] {
            let mut p = two_tier();
            p.alpha = alpha;
            p.delta = 2.0 / alpha;
            p.validate().unwrap();
            assert!(p.delta > 0.0 && p.delta < 1.0);
        }
    }

    #[test]
    fn delta_must_match_alpha() {
        let mut p = two_tier();
        p.delta = 0.5;
        assert!(matches!(
            p.validate(),
            Err(ModelError::DeltaMismatch { .. })
        ));
    }

    #[test]
    fn serialization_round_trip_is_identical() {
        let p = two_tier();
        let text = toml::to_string(&p).unwrap();
        let back: NetworkParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut p = two_tier();
        p.xi_min = 0.7;
        p.xi_max = 0.2;
        assert!(matches!(p.validate(), Err(ModelError::BadArrivalRange(..))));

        let mut p = two_tier();
        p.beta_min = 0.5;
        p.beta_max = 20.0;
        assert!(matches!(p.validate(), Err(ModelError::BadDelayRange(..))));

        let mut p = two_tier();
        p.tiers[1].density = 0.0;
        assert!(matches!(
            p.validate(),
            Err(ModelError::NonPositiveTierField { tier: 2, .. })
        ));
    }
}
