//! The log-characteristic kernel kappa(omega, k, q) of the conditional
//! success probability, in its two algebraically equivalent forms:
//!
//! * Integral form (default): for each interfering tier i,
//!   I = int_0^1 (1 - z(y)^{i omega}) y^{-3} dy with
//!   z(y) = 1 - q c y^alpha / (1 + c y^alpha), c = theta B_k / B_i, and
//!   kappa = -2 sum_i (lambda_i/lambda_k) ((P_i B_i)/(P_k B_k))^delta I - 1/P_k.
//!   The y -> 0 singularity is integrable (integrand ~ i omega q c y^{alpha-3});
//!   the substitution u = y^{alpha-2} maps it to a bounded integrand.
//!
//! * Series form (cross-check): kappa = sum_{n>=1} binom(i omega, n) A_n - 1/P_k
//!   with hypergeometric coefficients A_n. The generalized binomial grows
//!   rapidly with omega before the geometric decay takes over, so this form
//!   is only numerically trustworthy at moderate omega; the integral form is
//!   the production path.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex64;

use super::{association_probabilities, AnalyticError};
use crate::model::NetworkParams;
use crate::specfun::{hyp2f1, integrate, one_minus_cis, SeriesSpec};

/// Which evaluation route to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaForm {
    Integral,
    Series,
}

// Tolerances of the inner tier-pair integral. Errors here enter the CDF
// through kappa^{-1} with |kappa| >= 1, so 1e-9 absolute is far below the
// 1e-4 CDF targets.
const INNER_ABS_TOL: f64 = 1e-9;
const INNER_REL_TOL: f64 = 1e-8;
const INNER_MAX_SUBDIV: u32 = 4000;

/// The two forms must agree to this relative tolerance in `kappa_cross_check`.
const FORM_AGREEMENT_RTOL: f64 = 1e-6;

fn check_args(params: &NetworkParams, k: usize, q: f64) -> Result<(), AnalyticError> {
    if k >= params.num_tiers() {
        return Err(AnalyticError::TierOutOfRange(k));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(AnalyticError::OutOfDomain {
            name: "q",
            value: q,
            domain: "[0, 1]",
        });
    }
    Ok(())
}

/// Inner integral for one (interferer tier, serving tier) pair:
/// int_0^1 (1 - z(y)^{i omega}) y^{-3} dy after u = y^{alpha - 2}.
fn tier_pair_integral(
    alpha: f64,
    c: f64,
    q: f64,
    omega: f64,
) -> Result<Complex64, crate::specfun::QuadError> {
    let gamma = 1.0 / (alpha - 2.0);
    let integrand = move |u: f64| -> Complex64 {
        // y^alpha underflows once gamma*alpha*ln(u) goes below ~-600; the
        // integrand is exactly at its y->0 limit gamma*i*omega*q*c there.
        if gamma * alpha * u.ln() < -600.0 {
            return Complex64::new(0.0, gamma * omega * q * c);
        }
        let y = u.powf(gamma);
        let cya = c * y.powf(alpha);
        let w = q * cya / (1.0 + cya);
        let phase = omega * (-w).ln_1p();
        let jacobian = gamma * u.powf(-(2.0 * gamma + 1.0));
        one_minus_cis(phase) * jacobian
    };
    integrate(
        integrand,
        0.0,
        1.0,
        INNER_ABS_TOL,
        INNER_REL_TOL,
        INNER_MAX_SUBDIV,
    )
    .map(|r| r.value)
}

fn kappa_integral_all(
    params: &NetworkParams,
    assoc: &[f64],
    omega: f64,
    q: f64,
) -> Result<Vec<Complex64>, AnalyticError> {
    let kcount = params.num_tiers();
    let mut out = Vec::with_capacity(kcount);
    for (tk, pk) in params.tiers.iter().zip(assoc) {
        if omega == 0.0 || q == 0.0 {
            out.push(Complex64::new(-1.0 / pk, 0.0));
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for ti in params.tiers.iter() {
            let ratio = ti.density / tk.density
                * ((ti.power_mw * ti.bias) / (tk.power_mw * tk.bias)).powf(params.delta);
            let c = params.theta * tk.bias / ti.bias;
            let integral = tier_pair_integral(params.alpha, c, q, omega).map_err(
                AnalyticError::quad(format!("kappa integral at omega={omega}")),
            )?;
            acc += integral * ratio;
        }
        out.push(acc * -2.0 - 1.0 / pk);
    }
    Ok(out)
}

fn kappa_series_one(
    params: &NetworkParams,
    assoc: &[f64],
    omega: f64,
    k: usize,
    q: f64,
    series: &SeriesSpec,
) -> Result<Complex64, AnalyticError> {
    let base = Complex64::new(-1.0 / assoc[k], 0.0);
    if omega == 0.0 || q == 0.0 {
        return Ok(base);
    }
    let tk = &params.tiers[k];
    let delta = params.delta;
    let j_omega = Complex64::new(0.0, omega);

    // Per-tier constants: prefactor and the geometric factor applied at each
    // order, (-q theta B_k / B_i)^n.
    let prefactors: Vec<f64> = params
        .tiers
        .iter()
        .map(|ti| {
            ti.density / tk.density
                * ((ti.bias * ti.power_mw) / (tk.bias * tk.power_mw)).powf(delta)
        })
        .collect();
    let steps: Vec<f64> = params
        .tiers
        .iter()
        .map(|ti| -q * params.theta * tk.bias / ti.bias)
        .collect();
    let args: Vec<f64> = params
        .tiers
        .iter()
        .map(|ti| -params.theta * tk.bias / ti.bias)
        .collect();

    let mut powers = vec![1.0f64; params.num_tiers()];
    let mut binom = Complex64::new(1.0, 0.0);
    let mut sum = base;
    let mut peak = sum.norm();
    let mut small_streak = 0;

    for n in 1..=series.n_max {
        let nf = n as f64;
        binom *= (j_omega - (nf - 1.0)) / nf;
        let mut coeff = 0.0;
        for (i, pre) in prefactors.iter().enumerate() {
            powers[i] *= steps[i];
            let f = hyp2f1(n, nf - delta, nf - delta + 1.0, args[i], series)
                .map_err(AnalyticError::engine(format!("kappa series 2F1 at n={n}")))?;
            coeff += pre * powers[i] * f;
        }
        let term = binom * (delta * coeff / (nf - delta));
        sum += term;
        peak = peak.max(term.norm());

        if term.norm() < series.tail_tol * sum.norm() {
            small_streak += 1;
            if small_streak >= 2 {
                if peak > 1e12 * sum.norm() {
                    return Err(AnalyticError::KappaSeriesPrecisionLoss {
                        peak,
                        sum: sum.norm(),
                    });
                }
                return Ok(sum);
            }
        } else {
            small_streak = 0;
        }
    }
    Err(AnalyticError::Engine {
        context: format!("kappa series at omega={omega}, k={k}"),
        source: crate::specfun::SpecfunError::SeriesNonConvergence {
            n_max: series.n_max,
            last_rel: 0.0,
        },
    })
}

/// kappa(omega, k, q) through the requested form. Both forms subtract the
/// 1/P_k term of the definition; at omega = 0 or q = 0 the value is exactly
/// -1/P_k.
pub fn kappa(
    params: &NetworkParams,
    omega: f64,
    k: usize,
    q: f64,
    form: KappaForm,
    series: &SeriesSpec,
) -> Result<Complex64, AnalyticError> {
    check_args(params, k, q)?;
    let assoc = association_probabilities(params);
    match form {
        KappaForm::Integral => Ok(kappa_integral_all(params, &assoc, omega, q)?[k]),
        KappaForm::Series => kappa_series_one(params, &assoc, omega, k, q, series),
    }
}

/// Evaluate both forms and fail unless they agree to 1e-6 relative.
pub fn kappa_cross_check(
    params: &NetworkParams,
    omega: f64,
    k: usize,
    q: f64,
    series: &SeriesSpec,
) -> Result<Complex64, AnalyticError> {
    let integral = kappa(params, omega, k, q, KappaForm::Integral, series)?;
    let series_val = kappa(params, omega, k, q, KappaForm::Series, series)?;
    let rel = (integral - series_val).norm() / integral.norm().max(f64::MIN_POSITIVE);
    if rel > FORM_AGREEMENT_RTOL {
        return Err(AnalyticError::KappaFormMismatch {
            integral: format!("{integral}"),
            series: format!("{series_val}"),
            rel,
        });
    }
    Ok(integral)
}

/// Memoized integral-form evaluations of kappa for every tier at once,
/// shared by all grid points of a curve. Keyed on the exact bit pattern of
/// omega: adaptive refinements revisit the same dyadic nodes across nearby
/// inversion calls, so the hit rate is high.
pub(crate) struct KappaTable<'a> {
    params: &'a NetworkParams,
    q: f64,
    pub(crate) assoc: Vec<f64>,
    cache: RefCell<HashMap<u64, Vec<Complex64>>>,
}

impl<'a> KappaTable<'a> {
    pub(crate) fn new(params: &'a NetworkParams, q: f64) -> Result<Self, AnalyticError> {
        check_args(params, 0, q)?;
        Ok(KappaTable {
            params,
            q,
            assoc: association_probabilities(params),
            cache: RefCell::new(HashMap::new()),
        })
    }

    pub(crate) fn q(&self) -> f64 {
        self.q
    }

    pub(crate) fn kappa_all(&self, omega: f64) -> Result<Vec<Complex64>, AnalyticError> {
        if let Some(hit) = self.cache.borrow().get(&omega.to_bits()) {
            return Ok(hit.clone());
        }
        let values = kappa_integral_all(self.params, &self.assoc, omega, self.q)?;
        self.cache
            .borrow_mut()
            .insert(omega.to_bits(), values.clone());
        Ok(values)
    }

    /// sum_k 1/kappa(omega, k, q): the tier mixture entering the
    /// success-CDF integrand (negated there).
    pub(crate) fn inverse_sum(&self, omega: f64) -> Result<Complex64, AnalyticError> {
        Ok(self.kappa_all(omega)?.iter().map(|k| 1.0 / k).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::tests::fig2_params;
    use crate::model::TierSpec;
    use approx::assert_relative_eq;

    fn single_tier(alpha: f64, theta: f64) -> NetworkParams {
        NetworkParams::new(
            vec![TierSpec {
                power_mw: 1000.0,
                density: 1e-5,
                bias: 1.0,
            }],
            alpha,
            1.0,
            theta,
            0.5,
            5e-5,
            (0.2, 0.6),
            (18.0, 20.0),
        )
        .unwrap()
    }

    #[test]
    fn kappa_degenerate_cases() {
        let p = single_tier(4.0, 1.0);
        let s = SeriesSpec::default();
        for form in [KappaForm::Integral, KappaForm::Series] {
            let at_q0 = kappa(&p, 1.0, 0, 0.0, form, &s).unwrap();
            assert_relative_eq!(at_q0.re, -1.0, epsilon = 1e-12);
            assert!(at_q0.im.abs() < 1e-12);
            let at_w0 = kappa(&p, 0.0, 0, 0.7, form, &s).unwrap();
            assert_relative_eq!(at_w0.re, -1.0, epsilon = 1e-12);
        }
        // Two-tier: -1/P_k per tier.
        let p2 = fig2_params(2.5, 1.0);
        let v = kappa(&p2, 0.0, 1, 0.3, KappaForm::Integral, &s).unwrap();
        assert_relative_eq!(v.re, -1.0 / 0.23985, epsilon = 1e-3);
    }

    #[test]
    fn kappa_forms_agree_single_tier() {
        // (K=1, alpha=4, theta=1, q=1, omega=1) plus nearby points.
        let p = single_tier(4.0, 1.0);
        let s = SeriesSpec::default();
        for omega in [0.25, 1.0, 2.0, 5.0] {
            kappa_cross_check(&p, omega, 0, 1.0, &s).unwrap();
        }
    }

    #[test]
    fn kappa_forms_agree_on_parameter_grid() {
        let s = SeriesSpec::default();
        for (params, label) in [
            (single_tier(4.0, 1.0), "single a4"),
            (single_tier(2.5, 0.5), "single a2.5"),
            (fig2_params(2.5, 1.0), "fig2"),
            (fig2_params(4.0, 4.0), "fig2 biased"),
        ] {
            for k in 0..params.num_tiers() {
                for q in [0.25, 1.0] {
                    for omega in [0.5, 2.0] {
                        kappa_cross_check(&params, omega, k, q, &s)
                            .unwrap_or_else(|e| panic!("{label} k={k} q={q} w={omega}: {e}"));
                    }
                }
            }
        }
    }

    #[test]
    fn kappa_integral_matches_brute_force_quadrature() {
        // Independent route: integrate the original y-integral directly on
        // [eps, 1] with the analytic small-y head correction ~ the integrand
        // being i w q c y^{alpha-3}.
        let p = single_tier(4.0, 1.0);
        let (q, omega) = (1.0, 1.0);
        let c = p.theta;
        let eps = 1e-6;
        let direct = integrate(
            |y: f64| {
                let cya = c * y.powf(p.alpha);
                let w = q * cya / (1.0 + cya);
                one_minus_cis(omega * (-w).ln_1p()) / (y * y * y)
            },
            eps,
            1.0,
            1e-12,
            1e-12,
            20000,
        )
        .unwrap()
        .value;
        // Head: int_0^eps i w q c y^{alpha-3} dy = i w q c eps^{alpha-2}/(alpha-2).
        let head = Complex64::new(
            0.0,
            omega * q * c * eps.powf(p.alpha - 2.0) / (p.alpha - 2.0),
        );
        let expected = (direct + head) * -2.0 - 1.0;

        let got = kappa(&p, omega, 0, q, KappaForm::Integral, &SeriesSpec::default()).unwrap();
        assert!(
            (got - expected).norm() < 1e-7,
            "kappa {got} vs brute force {expected}"
        );
    }

    #[test]
    fn kappa_rejects_bad_activity() {
        let p = single_tier(4.0, 1.0);
        assert!(kappa(&p, 1.0, 0, 1.5, KappaForm::Integral, &SeriesSpec::default()).is_err());
        assert!(kappa(&p, 1.0, 3, 0.5, KappaForm::Integral, &SeriesSpec::default()).is_err());
    }

    #[test]
    fn kappa_table_is_consistent_with_direct_calls() {
        let p = fig2_params(2.5, 1.0);
        let table = KappaTable::new(&p, 0.5).unwrap();
        for omega in [0.3, 1.7, 42.0] {
            let cached = table.kappa_all(omega).unwrap();
            let again = table.kappa_all(omega).unwrap();
            assert_eq!(cached, again);
            for (k, cached_k) in cached.iter().enumerate() {
                let direct = kappa(
                    &p,
                    omega,
                    k,
                    0.5,
                    KappaForm::Integral,
                    &SeriesSpec::default(),
                )
                .unwrap();
                assert!((cached_k - direct).norm() < 1e-12);
            }
        }
    }
}
