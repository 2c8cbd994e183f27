//! Statistical CDF of per-link success probabilities.
//!
//! With i.i.d. interferer activity q, the log success probability
//! Y = ln P(SIR > theta | Phi) of the typical user has characteristic
//! function -kappa^{-1}(omega, k, q)/P_k conditional on tier k, so the CDF
//! follows from one Gil-Pelaez inversion of the tier mixture:
//!
//! F(u, q) = 1/2 + (1/pi) sum_k int_0^inf Im{ u^{-i w} / kappa(w, k, q) } / w dw.

use num_complex::Complex64;

use super::curve::{CdfCurve, CurveKind};
use super::delay::upper_bound_activity;
use super::kappa::KappaTable;
use super::{AnalyticError, Estimate};
use crate::model::{NetworkParams, SchedulingPolicy};
use crate::specfun::{gil_pelaez_cdf, QuadratureSpec};

fn check_u(u: f64) -> Result<(), AnalyticError> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(AnalyticError::OutOfDomain {
            name: "u",
            value: u,
            domain: "(0, 1]",
        });
    }
    Ok(())
}

/// F(u, q): fraction of users whose conditional success probability is at
/// most `u`, when every interferer is active independently with probability
/// `q` per slot.
pub fn success_cdf(
    params: &NetworkParams,
    u: f64,
    q: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate, AnalyticError> {
    check_u(u)?;
    let table = KappaTable::new(params, q)?;
    success_cdf_with(&table, u, quad)
}

pub(crate) fn success_cdf_with(
    table: &KappaTable<'_>,
    u: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate, AnalyticError> {
    if table.q() == 0.0 {
        // No interference: every user succeeds with probability one.
        return Ok(Estimate::exact(if u < 1.0 { 0.0 } else { 1.0 }));
    }
    let failed = std::cell::RefCell::new(None);
    let charfn = |w: f64| -> Complex64 {
        match table.inverse_sum(w) {
            Ok(v) => -v,
            Err(e) => {
                failed.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let g = gil_pelaez_cdf(charfn, u.ln(), quad)
        .map_err(AnalyticError::engine(format!("success cdf at u={u}")))?;
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    Ok(Estimate::from_gil_pelaez(g))
}

/// Per-tier conditional CDF of the success probability given association to
/// tier `k`.
pub fn success_cdf_tier(
    params: &NetworkParams,
    k: usize,
    u: f64,
    q: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate, AnalyticError> {
    check_u(u)?;
    if k >= params.num_tiers() {
        return Err(AnalyticError::TierOutOfRange(k));
    }
    if q == 0.0 {
        return Ok(Estimate::exact(if u < 1.0 { 0.0 } else { 1.0 }));
    }
    let table = KappaTable::new(params, q)?;
    let pk = table.assoc[k];
    let failed = std::cell::RefCell::new(None);
    let charfn = |w: f64| -> Complex64 {
        match table.kappa_all(w) {
            Ok(v) => -(1.0 / v[k]) / pk,
            Err(e) => {
                failed.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let g = gil_pelaez_cdf(charfn, u.ln(), quad)
        .map_err(AnalyticError::engine(format!("tier success cdf at u={u}")))?;
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    Ok(Estimate::from_gil_pelaez(g))
}

/// Single-tier expression with the hypergeometric-series kernel. Only valid
/// for K = 1 and moderate `omega_max` (the generalized binomial series loses
/// precision at large omega); kept as an independent route to cross-check
/// the general implementation.
pub fn success_cdf_single_tier_series(
    params: &NetworkParams,
    u: f64,
    q: f64,
    quad: &QuadratureSpec,
    series: &crate::specfun::SeriesSpec,
) -> Result<Estimate, AnalyticError> {
    check_u(u)?;
    if params.num_tiers() != 1 {
        return Err(AnalyticError::TierOutOfRange(1));
    }
    if q == 0.0 {
        return Ok(Estimate::exact(if u < 1.0 { 0.0 } else { 1.0 }));
    }
    let failed = std::cell::RefCell::new(None);
    let charfn = |w: f64| -> Complex64 {
        match super::kappa(params, w, 0, q, super::KappaForm::Series, series) {
            Ok(v) => -1.0 / v,
            Err(e) => {
                failed.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let g = gil_pelaez_cdf(charfn, u.ln(), quad).map_err(AnalyticError::engine(format!(
        "single-tier series cdf at u={u}"
    )))?;
    if let Some(e) = failed.into_inner() {
        return Err(e);
    }
    Ok(Estimate::from_gil_pelaez(g))
}

/// Bounding pair of success-probability CDFs over a grid of u values:
/// the dominant system (q = p) against the modified system
/// (q = upper_bound_activity for the policy), returned sorted pointwise.
pub fn success_bounds_curve(
    params: &NetworkParams,
    policy: SchedulingPolicy,
    u_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<CdfCurve, AnalyticError> {
    let q_upper = upper_bound_activity(params, policy);
    let dominant = KappaTable::new(params, params.p)?;
    let modified = KappaTable::new(params, q_upper)?;

    let mut curve = CdfCurve::new(CurveKind::SuccessProbability, Some(policy), params.p);
    for &u in u_grid {
        let a = success_cdf_with(&dominant, u, quad)?.value;
        let b = success_cdf_with(&modified, u, quad)?.value;
        curve.push(u, 0.5 * (a + b), a.min(b), a.max(b));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::tests::fig2_params;
    use crate::model::TierSpec;
    use approx::assert_abs_diff_eq;

    fn single_tier(alpha: f64, theta: f64, p: f64) -> NetworkParams {
        NetworkParams::new(
            vec![TierSpec {
                power_mw: 1000.0,
                density: 1e-5,
                bias: 1.0,
            }],
            alpha,
            1.0,
            theta,
            p,
            5e-5,
            (0.2, 0.6),
            (18.0, 20.0),
        )
        .unwrap()
    }

    #[test]
    fn no_interference_is_a_step_at_one() {
        let p = single_tier(4.0, 1.0, 0.5);
        let quad = QuadratureSpec::default();
        for u in [0.05, 0.5, 0.99] {
            assert_eq!(success_cdf(&p, u, 0.0, &quad).unwrap().value, 0.0);
        }
        assert_eq!(success_cdf(&p, 1.0, 0.0, &quad).unwrap().value, 1.0);
    }

    #[test]
    fn monotone_in_u() {
        let p = single_tier(4.0, 1.0, 0.5);
        let quad = QuadratureSpec::default();
        let f03 = success_cdf(&p, 0.3, 0.5, &quad).unwrap().value;
        let f06 = success_cdf(&p, 0.6, 0.5, &quad).unwrap().value;
        assert!(f03 <= f06 + 2.0 * quad.abs_tol, "{f03} > {f06}");
    }

    #[test]
    fn monotone_in_q() {
        // More interference shifts success probabilities down, so the CDF
        // at any fixed u grows with q.
        let p = single_tier(4.0, 1.0, 0.5);
        let quad = QuadratureSpec::default();
        for u in [0.2, 0.5, 0.8] {
            let lo = success_cdf(&p, u, 0.25, &quad).unwrap().value;
            let hi = success_cdf(&p, u, 0.75, &quad).unwrap().value;
            assert!(lo <= hi + 2.0 * quad.abs_tol, "u={u}: {lo} > {hi}");
        }
    }

    #[test]
    fn unbiased_tiers_have_coinciding_conditional_cdfs() {
        // With B_1 = B_2 = 1 the per-tier success CDFs coincide.
        let p = fig2_params(2.5, 1.0);
        let quad = QuadratureSpec::default();
        for u in [0.2, 0.5, 0.8] {
            let t1 = success_cdf_tier(&p, 0, u, 0.5, &quad).unwrap().value;
            let t2 = success_cdf_tier(&p, 1, u, 0.5, &quad).unwrap().value;
            assert_abs_diff_eq!(t1, t2, epsilon = 2.0 * quad.abs_tol);
        }
    }

    #[test]
    fn mixture_equals_association_weighted_tiers() {
        let p = fig2_params(2.5, 1.0);
        let quad = QuadratureSpec::default();
        let assoc = crate::analytic::association_probabilities(&p);
        for u in [0.3, 0.7] {
            let mix = success_cdf(&p, u, 0.5, &quad).unwrap().value;
            let weighted: f64 = (0..2)
                .map(|k| assoc[k] * success_cdf_tier(&p, k, u, 0.5, &quad).unwrap().value)
                .sum();
            assert_abs_diff_eq!(mix, weighted, epsilon = 3.0 * quad.abs_tol);
        }
    }

    #[test]
    fn bias_scaling_invariance() {
        let p = fig2_params(2.5, 4.0);
        let mut scaled = p.clone();
        for t in &mut scaled.tiers {
            t.bias *= 8.0;
        }
        let quad = QuadratureSpec::default();
        for u in [0.25, 0.6] {
            let a = success_cdf(&p, u, 0.5, &quad).unwrap().value;
            let b = success_cdf(&scaled, u, 0.5, &quad).unwrap().value;
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn general_code_at_k1_matches_remark_2_series_route() {
        // Both routes truncated at the same moderate omega so the series
        // kernel stays in its numerically trustworthy range; the comparison
        // then isolates the kernel algebra.
        let p = single_tier(4.0, 1.0, 0.5);
        let quad = QuadratureSpec {
            omega_max: 15.0,
            abs_tol: 1e-6,
            rel_tol: 1e-9,
            max_subdiv: 4000,
        };
        let series = crate::specfun::SeriesSpec::default();
        for u in [0.2, 0.5, 0.8] {
            for q in [0.3, 1.0] {
                let general = success_cdf(&p, u, q, &quad).unwrap();
                let remark2 = success_cdf_single_tier_series(&p, u, q, &quad, &series).unwrap();
                assert_abs_diff_eq!(general.raw, remark2.raw, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn rejects_u_outside_domain() {
        let p = single_tier(4.0, 1.0, 0.5);
        let quad = QuadratureSpec::default();
        assert!(success_cdf(&p, 0.0, 0.5, &quad).is_err());
        assert!(success_cdf(&p, 1.2, 0.5, &quad).is_err());
    }
}
