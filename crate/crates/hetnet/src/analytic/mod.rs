//! Closed-form network statistics: association probabilities, cell-area and
//! link-distance densities, user-count distributions, the success-probability
//! CDF, per-policy mean-delay CDFs with their bounding pairs, and delay
//! outage.

mod curve;
mod delay;
mod kappa;
mod success;

pub use curve::{CdfCurve, CurveKind};
pub use delay::{
    delay_bounds, delay_bounds_curve, delay_cdf, delay_outage, upper_bound_activity, DelayEvaluator,
};
pub use kappa::{kappa, kappa_cross_check, KappaForm};
pub use success::{
    success_bounds_curve, success_cdf, success_cdf_single_tier_series, success_cdf_tier,
};

use thiserror::Error;

use crate::model::NetworkParams;
use crate::specfun::{QuadError, SpecfunError};

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("tier index {0} out of range")]
    TierOutOfRange(usize),
    #[error("argument {name} = {value} outside its domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error(
        "kappa integral and series forms disagree: {integral} vs {series} (relative {rel:.3e})"
    )]
    KappaFormMismatch {
        integral: String,
        series: String,
        rel: f64,
    },
    #[error("kappa series lost too much precision (peak term {peak:.3e} vs sum {sum:.3e})")]
    KappaSeriesPrecisionLoss { peak: f64, sum: f64 },
    #[error("user-count distribution has no mass on N >= 1; the cell of an existing user is ill-defined")]
    EmptyCellDistribution,
    #[error("evaluating {context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: SpecfunError,
    },
}

impl AnalyticError {
    pub(crate) fn engine(context: impl Into<String>) -> impl FnOnce(SpecfunError) -> Self {
        let context = context.into();
        move |source| AnalyticError::Engine { context, source }
    }

    pub(crate) fn quad(context: impl Into<String>) -> impl FnOnce(QuadError) -> Self {
        let context = context.into();
        move |source| AnalyticError::Engine {
            context,
            source: SpecfunError::Quad(source),
        }
    }
}

/// A probability produced by the inversion engine. `value` is clamped to
/// [0, 1]; the pre-clamp value and error diagnostics are retained.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub raw: f64,
    pub quad_error: f64,
    pub tail_bound: f64,
}

impl Estimate {
    pub(crate) fn from_gil_pelaez(g: crate::specfun::GilPelaezCdf) -> Self {
        Estimate {
            value: g.cdf,
            raw: g.raw,
            quad_error: g.quad_error,
            tail_bound: g.tail_bound,
        }
    }

    /// The complementary probability, with diagnostics carried over.
    pub(crate) fn complement(self) -> Self {
        Estimate {
            value: (1.0 - self.value).clamp(0.0, 1.0),
            raw: 1.0 - self.raw,
            quad_error: self.quad_error,
            tail_bound: self.tail_bound,
        }
    }

    pub(crate) fn exact(value: f64) -> Self {
        Estimate {
            value,
            raw: value,
            quad_error: 0.0,
            tail_bound: 0.0,
        }
    }
}

fn check_tier(params: &NetworkParams, k: usize) -> Result<(), AnalyticError> {
    if k >= params.num_tiers() {
        return Err(AnalyticError::TierOutOfRange(k));
    }
    Ok(())
}

/// Probability that the typical user associates to tier `k`:
/// P_k = lambda_k (P_k B_k)^delta / sum_i lambda_i (P_i B_i)^delta.
pub fn association_probability(params: &NetworkParams, k: usize) -> f64 {
    let weights: Vec<f64> = params
        .tiers
        .iter()
        .map(|t| t.density * (t.power_mw * t.bias).powf(params.delta))
        .collect();
    let total: f64 = weights.iter().sum();
    weights[k] / total
}

/// All K association probabilities; they sum to one.
pub fn association_probabilities(params: &NetworkParams) -> Vec<f64> {
    (0..params.num_tiers())
        .map(|k| association_probability(params, k))
        .collect()
}

/// Density of the coverage area of a tier-`k` base station: a gamma shape
/// with rate 3.5 lambda_k / P_k, mean P_k / lambda_k.
pub fn cell_area_pdf(params: &NetworkParams, k: usize, x: f64) -> Result<f64, AnalyticError> {
    check_tier(params, k)?;
    if x < 0.0 {
        return Err(AnalyticError::OutOfDomain {
            name: "x",
            value: x,
            domain: "[0, inf)",
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let rate = params.tiers[k].density / association_probability(params, k);
    let scaled = x * rate;
    Ok((343.0 / 15.0)
        * (3.5 / std::f64::consts::PI).sqrt()
        * scaled.powf(2.5)
        * (-3.5 * scaled).exp()
        * rate)
}

/// Fraction of users whose mark falls at or below `x` within [lo, hi],
/// treating a degenerate range as all-inclusive at its single point.
fn mark_fraction(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else if x >= hi {
        1.0
    } else {
        0.0
    }
}

/// Distribution of the number of users in a tier-`k` cell with arrival rate
/// below `xi` and delay requirement below `beta`.
#[derive(Debug, Clone)]
pub struct UserCountDistribution {
    /// Compound constant C_0 of the generating function.
    pub c0: f64,
    /// P(N = n) for n = 0..=n_cap, truncated once the tail mass drops
    /// below 1e-8.
    pub pmf: Vec<f64>,
    /// Closed-form mean, 3.5 C_0.
    pub mean: f64,
}

/// PMF and mean of N_{k, xi, beta}:
/// P(N = n) = (2n+5)!!/(15 n!) (C0/2)^n (C0 + 1)^{-n - 3.5},
/// evaluated by the stable term-ratio recurrence.
pub fn user_count_distribution(
    params: &NetworkParams,
    k: usize,
    xi: f64,
    beta: f64,
) -> Result<UserCountDistribution, AnalyticError> {
    check_tier(params, k)?;
    if xi < params.xi_min || xi > params.xi_max {
        return Err(AnalyticError::OutOfDomain {
            name: "xi",
            value: xi,
            domain: "[xi_min, xi_max]",
        });
    }
    if beta < params.beta_min || beta > params.beta_max {
        return Err(AnalyticError::OutOfDomain {
            name: "beta",
            value: beta,
            domain: "[beta_min, beta_max]",
        });
    }
    let frac = mark_fraction(xi, params.xi_min, params.xi_max)
        * mark_fraction(beta, params.beta_min, params.beta_max);
    let c0 = frac * association_probability(params, k) * (2.0 / 7.0) * params.lambda_u
        / params.tiers[k].density;
    Ok(count_distribution_from_c0(c0))
}

/// Distribution of the total user count N_k of a tier-`k` cell
/// (xi = xi_max, beta = beta_max).
pub fn total_user_count_distribution(
    params: &NetworkParams,
    k: usize,
) -> Result<UserCountDistribution, AnalyticError> {
    user_count_distribution(params, k, params.xi_max, params.beta_max)
}

pub(crate) fn count_distribution_from_c0(c0: f64) -> UserCountDistribution {
    const TAIL: f64 = 1e-8;
    if c0 <= 0.0 {
        return UserCountDistribution {
            c0: 0.0,
            pmf: vec![1.0],
            mean: 0.0,
        };
    }
    let mut pmf = Vec::new();
    let mut term = (c0 + 1.0).powf(-3.5);
    let mut cum = 0.0;
    let mut n = 0usize;
    // P(n+1)/P(n) = (2n+7)/(2(n+1)) * C0/(C0+1); tail mass below 1e-8 ends
    // the expansion.
    loop {
        pmf.push(term);
        cum += term;
        if 1.0 - cum <= TAIL || n > 100_000 {
            break;
        }
        term *= (2.0 * n as f64 + 7.0) / (2.0 * (n as f64 + 1.0)) * c0 / (c0 + 1.0);
        n += 1;
    }
    UserCountDistribution {
        c0,
        pmf,
        mean: 3.5 * c0,
    }
}

/// Mean number of users in a tier-`k` cell, P_k lambda_u / lambda_k.
pub fn mean_user_count(params: &NetworkParams, k: usize) -> f64 {
    association_probability(params, k) * params.lambda_u / params.tiers[k].density
}

/// Mean total packet arrival rate at a tier-`k` base station:
/// (xi_max + xi_min)/2 * P_k lambda_u / lambda_k.
pub fn mean_total_arrival_rate(params: &NetworkParams, k: usize) -> f64 {
    params.mean_xi() * mean_user_count(params, k)
}

/// Conditional serving-link distance density,
/// (2 pi r lambda_k / P_k) exp(-pi r^2 lambda_k / P_k).
pub fn link_distance_pdf(params: &NetworkParams, k: usize, r: f64) -> Result<f64, AnalyticError> {
    check_tier(params, k)?;
    if r < 0.0 {
        return Err(AnalyticError::OutOfDomain {
            name: "r",
            value: r,
            domain: "[0, inf)",
        });
    }
    let rate = params.tiers[k].density / association_probability(params, k);
    Ok(2.0 * std::f64::consts::PI * r * rate * (-std::f64::consts::PI * r * r * rate).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dbm_to_mw, TierSpec};
    use crate::specfun::integrate;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    pub(crate) fn fig2_params(alpha: f64, b2: f64) -> NetworkParams {
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
                    bias: b2,
                },
            ],
            alpha,
            1.0,
            1.0,
            0.5,
            1e-4,
            (0.2, 0.6),
            (18.0, 20.0),
        )
        .unwrap()
    }

    fn single_tier(lambda: f64, lambda_u: f64) -> NetworkParams {
        NetworkParams::new(
            vec![TierSpec {
                power_mw: 1000.0,
                density: lambda,
                bias: 1.0,
            }],
            4.0,
            1.0,
            1.0,
            0.5,
            lambda_u,
            (0.2, 0.6),
            (18.0, 20.0),
        )
        .unwrap()
    }

    #[test]
    fn association_probability_cases() {
        let single = single_tier(1e-5, 1e-4);
        assert_eq!(association_probability(&single, 0), 1.0);

        let twin = NetworkParams::new(
            vec![
                TierSpec {
                    power_mw: 500.0,
                    density: 2e-5,
                    bias: 3.0,
                },
                TierSpec {
                    power_mw: 500.0,
                    density: 2e-5,
                    bias: 3.0,
                },
            ],
            3.0,
            1.0,
            1.0,
            0.5,
            1e-4,
            (0.2, 0.6),
            (18.0, 20.0),
        )
        .unwrap();
        assert_relative_eq!(association_probability(&twin, 0), 0.5, epsilon = 1e-15);

        // Fig. 2 parameters: direct evaluation of the ratio gives 0.760.
        let p = fig2_params(2.5, 1.0);
        assert_abs_diff_eq!(association_probability(&p, 0), 0.76015, epsilon = 5e-5);
        assert_abs_diff_eq!(association_probability(&p, 1), 0.23985, epsilon = 5e-5);
    }

    #[test]
    fn association_probabilities_sum_to_one() {
        let p = fig2_params(2.5, 10.0);
        let total: f64 = association_probabilities(&p).iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bias_scaling_leaves_association_probability_unchanged() {
        let p = fig2_params(2.5, 4.0);
        let before = association_probabilities(&p);
        let mut scaled = p.clone();
        for t in &mut scaled.tiers {
            t.bias *= 37.5;
        }
        let after = association_probabilities(&scaled);
        for (a, b) in before.iter().zip(&after) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn cell_area_pdf_normalizes_with_the_right_mean() {
        let p = fig2_params(2.5, 1.0);
        for k in 0..2 {
            assert_eq!(cell_area_pdf(&p, k, 0.0).unwrap(), 0.0);
            let mean_area = association_probability(&p, k) / p.tiers[k].density;
            // Integrate far into the tail: 60 mean areas.
            let hi = 60.0 * mean_area;
            let norm = integrate(
                |x| cell_area_pdf(&p, k, x).unwrap(),
                0.0,
                hi,
                1e-10,
                1e-10,
                4000,
            )
            .unwrap();
            assert_abs_diff_eq!(norm.value, 1.0, epsilon = 1e-8);
            let mean = integrate(
                |x| x * cell_area_pdf(&p, k, x).unwrap(),
                0.0,
                hi,
                1e-12,
                1e-10,
                4000,
            )
            .unwrap();
            assert_relative_eq!(mean.value, mean_area, max_relative = 1e-6);
        }
    }

    #[test]
    fn user_count_point_mass_when_c0_is_zero() {
        let p = fig2_params(2.5, 1.0);
        let d = user_count_distribution(&p, 0, p.xi_min, p.beta_max).unwrap();
        assert_eq!(d.c0, 0.0);
        assert_eq!(d.pmf, vec![1.0]);
        assert_eq!(d.mean, 0.0);
    }

    #[test]
    fn user_count_single_tier_ratio_ten() {
        // lambda_u / lambda = 10 at (xi_max, beta_max): C0 = 20/7 and
        // P(N = 0) = (1 + 20/7)^{-3.5} = 0.00886.
        let p = single_tier(1e-5, 1e-4);
        let d = total_user_count_distribution(&p, 0).unwrap();
        assert_relative_eq!(d.c0, 20.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.pmf[0], (27.0f64 / 7.0).powf(-3.5), epsilon = 1e-15);
        assert_abs_diff_eq!(d.pmf[0], 0.00886, epsilon = 1e-4);
    }

    #[test]
    fn user_count_pmf_sums_and_matches_mean() {
        for (params, k) in [
            (fig2_params(2.5, 1.0), 0),
            (fig2_params(2.5, 1.0), 1),
            (single_tier(1e-5, 1e-4), 0),
        ] {
            let d = total_user_count_distribution(&params, k).unwrap();
            let total: f64 = d.pmf.iter().sum();
            assert!(total >= 1.0 - 1e-8, "pmf mass {total}");
            let mean_num: f64 = d.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
            assert_relative_eq!(mean_num, d.mean, max_relative = 1e-6);
            // PGF identity G(1) = 1 is the same statement as the mass check,
            // evaluated on the truncated support.
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn fig2_macro_tier_mean_user_count() {
        let p = fig2_params(2.5, 1.0);
        assert_abs_diff_eq!(mean_user_count(&p, 0), 7.60, epsilon = 0.005);
    }

    #[test]
    fn mean_total_arrival_rate_fig3_point() {
        // At B2 = 1, alpha = 2.5: (0.2+0.6)/2 * 7.6015 = 3.0406 packets/slot.
        let p = fig2_params(2.5, 1.0);
        assert_abs_diff_eq!(mean_total_arrival_rate(&p, 0), 3.0406, epsilon = 1e-3);
        assert_abs_diff_eq!(mean_total_arrival_rate(&p, 0), 3.04, epsilon = 0.01);
    }

    #[test]
    fn offloading_shifts_load_to_picocells() {
        let mut prev_macro = f64::INFINITY;
        let mut prev_pico = 0.0;
        for b2 in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let p = fig2_params(2.5, b2);
            let macro_rate = mean_total_arrival_rate(&p, 0);
            let pico_rate = mean_total_arrival_rate(&p, 1);
            assert!(macro_rate < prev_macro);
            assert!(pico_rate > prev_pico);
            prev_macro = macro_rate;
            prev_pico = pico_rate;
        }
    }

    #[test]
    fn link_distance_pdf_properties() {
        let p = fig2_params(2.5, 1.0);
        assert_eq!(link_distance_pdf(&p, 0, 0.0).unwrap(), 0.0);
        // Rayleigh normalization, exact up to quadrature.
        let rate = p.tiers[0].density / association_probability(&p, 0);
        let hi = (40.0 / (std::f64::consts::PI * rate)).sqrt();
        let norm = integrate(
            |r| link_distance_pdf(&p, 0, r).unwrap(),
            0.0,
            hi,
            1e-12,
            1e-12,
            4000,
        )
        .unwrap();
        assert_abs_diff_eq!(norm.value, 1.0, epsilon = 1e-10);

        // K = 1 reduces to the plain contact distance of the PPP.
        let single = single_tier(3e-5, 1e-4);
        let r = 55.0;
        let expected =
            2.0 * std::f64::consts::PI * r * 3e-5 * (-std::f64::consts::PI * r * r * 3e-5).exp();
        assert_relative_eq!(
            link_distance_pdf(&single, 0, r).unwrap(),
            expected,
            epsilon = 1e-15
        );
    }
}
