//! Statistical CDF of the conditional mean delay per scheduling policy, the
//! dominant/modified bounding pairs, and delay outage.
//!
//! All three policies reduce to the same structure: D <= T is equivalent to
//! the conditional success probability exceeding a traffic- and
//! cell-size-dependent level v, so
//!
//! H(T, q) = sum_k P_k Pr( Y_k >= ln v_k ),  Y_k = ln P(SIR > theta | Phi),
//!
//! evaluated by one Gil-Pelaez inversion of the mixture characteristic
//! function  -p^{i w} sum_k kappa^{-1}(w, k, q) E[(W_k)^{-i w}]  at zero,
//! where W_k = p v_k:
//!
//! * random: W = N (xi0 + (1 - xi0)/T)
//! * FIFO: W = S + (1 - S)/T with S the summed arrival rate of the cell
//!   (Irwin-Hall over N uniforms)
//! * round-robin: W = xi0 + (1 - xi0)/(1/2 + T/N)
//!
//! The cell count N follows the tier's total-count PMF conditioned on
//! N >= 1 (the typical user's cell contains the typical user) truncated at
//! 1e-8 tail mass. The xi0 average over the uniform mark has a closed-form
//! antiderivative and is evaluated exactly.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::curve::{CdfCurve, CurveKind};
use super::kappa::KappaTable;
use super::{mean_user_count, total_user_count_distribution, AnalyticError, Estimate};
use crate::model::{NetworkParams, SchedulingPolicy};
use crate::specfun::{gauss_legendre, gil_pelaez_cdf, irwin_hall_pdf, QuadratureSpec};

/// Largest cell size whose FIFO arrival-sum expectation uses the exact
/// Irwin-Hall density; beyond it the alternating sum loses precision and a
/// fixed-seed Monte Carlo sample takes over.
const IRWIN_HALL_MAX_N: u32 = 12;
/// Monte Carlo draws for the fallback, compressed to equal-mass bins.
const FIFO_MC_DRAWS: usize = 100_000;
const FIFO_MC_BINS: usize = 512;
/// Gauss-Legendre nodes per unit piece of the Irwin-Hall support; resolves
/// the <= 3 phase cycles a piece picks up at omega_max = 200 with mark
/// ranges up to 0.4 wide.
const IH_NODES_PER_PIECE: usize = 16;
/// Cell sizes with conditional probability below this are dropped from the
/// mixtures (and the rest renormalized).
const COUNT_WEIGHT_FLOOR: f64 = 1e-7;
/// Gauss-Legendre nodes of the delay-outage beta average.
const OUTAGE_NODES: usize = 16;

/// Interferer activity probability of the modified (upper-bound) system for
/// a policy: p (xi_min + xi_max)/2 for random and round-robin scheduling,
/// min{1, p/2 (xi_min + xi_max) min_k mean-N_k} for FIFO.
pub fn upper_bound_activity(params: &NetworkParams, policy: SchedulingPolicy) -> f64 {
    let mean_rate = params.mean_xi();
    match policy {
        SchedulingPolicy::Random | SchedulingPolicy::RoundRobin => params.p * mean_rate,
        SchedulingPolicy::Fifo => {
            let min_mean = (0..params.num_tiers())
                .map(|k| mean_user_count(params, k))
                .fold(f64::INFINITY, f64::min);
            (params.p * mean_rate * min_mean).min(1.0)
        }
    }
}

/// E[(c + d xi)^{-i w}] for xi uniform on [a, b], via the exact
/// antiderivative (c + d xi)^{1 - i w} / (d (1 - i w)).
fn uniform_power_mean(a: f64, b: f64, c: f64, d: f64, omega: f64) -> Complex64 {
    debug_assert!(c + d * a > 0.0 && c + d * b > 0.0);
    if (b - a).abs() < 1e-14 || d.abs() < 1e-14 * c.abs() {
        let mid = c + d * 0.5 * (a + b);
        return cis(-omega * mid.ln());
    }
    let s = Complex64::new(1.0, -omega);
    let hi = (s * (c + d * b).ln()).exp();
    let lo = (s * (c + d * a).ln()).exp();
    (hi - lo) / ((b - a) * d * s)
}

#[inline]
fn cis(x: f64) -> Complex64 {
    let (s, c) = x.sin_cos();
    Complex64::new(c, s)
}

/// Tier-k cell-size distribution conditioned on N >= 1, truncated.
struct CellCounts {
    ns: Vec<u32>,
    weights: Vec<f64>,
    ln_ns: Vec<f64>,
}

impl CellCounts {
    fn build(params: &NetworkParams, k: usize) -> Result<Self, AnalyticError> {
        let dist = total_user_count_distribution(params, k)?;
        let mass: f64 = dist.pmf.iter().skip(1).sum();
        if mass <= 0.0 {
            return Err(AnalyticError::EmptyCellDistribution);
        }
        let mut ns = Vec::new();
        let mut weights = Vec::new();
        for (n, p) in dist.pmf.iter().enumerate().skip(1) {
            let w = p / mass;
            if w >= COUNT_WEIGHT_FLOOR {
                ns.push(n as u32);
                weights.push(w);
            }
        }
        let kept: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= kept;
        }
        let ln_ns = ns.iter().map(|&n| (n as f64).ln()).collect();
        Ok(CellCounts { ns, weights, ln_ns })
    }
}

/// Fixed-seed sample of the standard Irwin-Hall sum of n uniforms,
/// compressed to equal-mass bin means. Shared process-wide; the draws are a
/// pure function of n.
fn irwin_hall_sample(n: u32) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&n) {
        return hit.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1F0_0000_0000_0000 ^ n as u64);
    let mut draws: Vec<f64> = (0..FIFO_MC_DRAWS)
        .map(|_| (0..n).map(|_| rng.gen::<f64>()).sum())
        .collect();
    draws.sort_by(f64::total_cmp);
    let per_bin = FIFO_MC_DRAWS / FIFO_MC_BINS;
    let reps: Vec<f64> = (0..FIFO_MC_BINS)
        .map(|b| draws[b * per_bin..(b + 1) * per_bin].iter().sum::<f64>() / per_bin as f64)
        .collect();
    let reps = Arc::new(reps);
    cache.lock().unwrap().insert(n, reps.clone());
    reps
}

/// Quadrature/sample nodes for the standard Irwin-Hall sum of n uniforms:
/// (abscissa in [0, n], weight), weights normalized to one.
fn irwin_hall_nodes(n: u32) -> Vec<(f64, f64)> {
    if n <= IRWIN_HALL_MAX_N {
        let (gx, gw) = gauss_legendre(IH_NODES_PER_PIECE);
        let mut nodes = Vec::with_capacity(n as usize * IH_NODES_PER_PIECE);
        for piece in 0..n {
            for (x, w) in gx.iter().zip(&gw) {
                let s = piece as f64 + 0.5 * (x + 1.0);
                nodes.push((s, 0.5 * w * irwin_hall_pdf(n, s)));
            }
        }
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        for node in &mut nodes {
            node.1 /= total;
        }
        nodes
    } else {
        let reps = irwin_hall_sample(n);
        let w = 1.0 / reps.len() as f64;
        reps.iter().map(|&s| (s, w)).collect()
    }
}

/// Reusable H(T, q) evaluator for one (params, policy, q): the kappa table
/// and cell-count mixtures are shared across all T grid points.
pub struct DelayEvaluator<'a> {
    params: &'a NetworkParams,
    policy: SchedulingPolicy,
    quad: QuadratureSpec,
    kappa: KappaTable<'a>,
    counts: Vec<CellCounts>,
    /// FIFO only: per tier, per cell size n, the (S, weight) nodes of the
    /// standard Irwin-Hall distribution.
    fifo_nodes: Vec<Vec<Vec<(f64, f64)>>>,
}

impl<'a> DelayEvaluator<'a> {
    pub fn new(
        params: &'a NetworkParams,
        policy: SchedulingPolicy,
        q: f64,
        quad: &QuadratureSpec,
    ) -> Result<Self, AnalyticError> {
        let kappa = KappaTable::new(params, q)?;
        let counts: Vec<CellCounts> = (0..params.num_tiers())
            .map(|k| CellCounts::build(params, k))
            .collect::<Result<_, _>>()?;
        let fifo_nodes = if policy == SchedulingPolicy::Fifo {
            counts
                .iter()
                .map(|c| c.ns.iter().map(|&n| irwin_hall_nodes(n)).collect())
                .collect()
        } else {
            Vec::new()
        };
        Ok(DelayEvaluator {
            params,
            policy,
            quad: *quad,
            kappa,
            counts,
            fifo_nodes,
        })
    }

    /// E[(W_k)^{-i w}] for tier k at horizon T.
    fn traffic_mean(&self, k: usize, t: f64, omega: f64) -> Complex64 {
        let (a, b) = (self.params.xi_min, self.params.xi_max);
        let counts = &self.counts[k];
        match self.policy {
            SchedulingPolicy::Random => {
                // W = N (xi (T-1)/T + 1/T): the count and mark factors split.
                let count_mean: Complex64 = counts
                    .weights
                    .iter()
                    .zip(&counts.ln_ns)
                    .map(|(w, ln_n)| cis(-omega * ln_n) * *w)
                    .sum();
                count_mean * uniform_power_mean(a, b, 1.0 / t, (t - 1.0) / t, omega)
            }
            SchedulingPolicy::RoundRobin => {
                // W = xi + (1 - xi) / (1/2 + T/N), linear in xi per cell size.
                counts
                    .weights
                    .iter()
                    .zip(&counts.ns)
                    .map(|(w, &n)| {
                        let c = 1.0 / (0.5 + t / n as f64);
                        uniform_power_mean(a, b, c, 1.0 - c, omega) * *w
                    })
                    .sum()
            }
            SchedulingPolicy::Fifo => {
                // W = 1/T + (T-1)/T S with S = n a + (b - a) IH_n.
                let d = (t - 1.0) / t;
                let mut acc = Complex64::new(0.0, 0.0);
                for ((w, &n), nodes) in counts
                    .weights
                    .iter()
                    .zip(&counts.ns)
                    .zip(&self.fifo_nodes[k])
                {
                    let mut per_n = Complex64::new(0.0, 0.0);
                    for &(s, nw) in nodes {
                        let sum_xi = n as f64 * a + (b - a) * s;
                        per_n += cis(-omega * (1.0 / t + d * sum_xi).ln()) * nw;
                    }
                    acc += per_n * *w;
                }
                acc
            }
        }
    }

    /// H(T, q) = P(conditional mean delay <= T).
    pub fn cdf(&self, t: f64) -> Result<Estimate, AnalyticError> {
        if t < 1.0 {
            return Err(AnalyticError::OutOfDomain {
                name: "T",
                value: t,
                domain: "[1, inf)",
            });
        }
        let p = self.params.p;
        if p == 0.0 {
            // No slot is ever granted: every delay is infinite.
            return Ok(Estimate::exact(0.0));
        }
        let ln_p = p.ln();
        let failed = RefCell::new(None);
        let charfn = |w: f64| -> Complex64 {
            match self.kappa.kappa_all(w) {
                Ok(kappas) => {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (k, kap) in kappas.iter().enumerate() {
                        acc += self.traffic_mean(k, t, w) / kap;
                    }
                    -acc * cis(w * ln_p)
                }
                Err(e) => {
                    failed.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            }
        };
        let g = gil_pelaez_cdf(charfn, 0.0, &self.quad).map_err(AnalyticError::engine(format!(
            "delay cdf at T={t}, q={}, {:?}",
            self.kappa.q(),
            self.policy
        )))?;
        if let Some(e) = failed.into_inner() {
            return Err(e);
        }
        Ok(Estimate::from_gil_pelaez(g).complement())
    }
}

/// H_i(T, q) for the given scheduling policy with i.i.d. interferer
/// activity q.
pub fn delay_cdf(
    params: &NetworkParams,
    policy: SchedulingPolicy,
    t: f64,
    q: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate, AnalyticError> {
    DelayEvaluator::new(params, policy, q, quad)?.cdf(t)
}

/// Bounding pair (lower, upper) of the delay CDF at horizon T: the dominant
/// system H(T, p) against the modified system H(T, q_upper), sorted so that
/// lower <= upper pointwise.
pub fn delay_bounds(
    params: &NetworkParams,
    policy: SchedulingPolicy,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<(Estimate, Estimate), AnalyticError> {
    let dominant = delay_cdf(params, policy, t, params.p, quad)?;
    let modified = delay_cdf(
        params,
        policy,
        t,
        upper_bound_activity(params, policy),
        quad,
    )?;
    if dominant.value <= modified.value {
        Ok((dominant, modified))
    } else {
        Ok((modified, dominant))
    }
}

/// Bound-pair curve of the delay CDF over a grid of horizons.
pub fn delay_bounds_curve(
    params: &NetworkParams,
    policy: SchedulingPolicy,
    t_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<CdfCurve, AnalyticError> {
    let dominant = DelayEvaluator::new(params, policy, params.p, quad)?;
    let modified = DelayEvaluator::new(params, policy, upper_bound_activity(params, policy), quad)?;
    let mut curve = CdfCurve::new(CurveKind::MeanDelay, Some(policy), params.p);
    for &t in t_grid {
        let a = dominant.cdf(t)?.value;
        let b = modified.cdf(t)?.value;
        curve.push(t, 0.5 * (a + b), a.min(b), a.max(b));
    }
    Ok(curve)
}

/// Delay-outage bounds (lower, upper): the fraction of users whose
/// conditional mean delay exceeds their requirement beta_i,
/// eta = E_beta[1 - H(beta, q)], averaged over the uniform beta mark by
/// Gauss-Legendre (point evaluation on a degenerate range).
pub fn delay_outage(
    params: &NetworkParams,
    policy: SchedulingPolicy,
    quad: &QuadratureSpec,
) -> Result<(f64, f64), AnalyticError> {
    let eta = |q: f64| -> Result<f64, AnalyticError> {
        let eval = DelayEvaluator::new(params, policy, q, quad)?;
        let mean_h = if params.beta_max > params.beta_min {
            let (gx, gw) = gauss_legendre(OUTAGE_NODES);
            let mid = 0.5 * (params.beta_min + params.beta_max);
            let half = 0.5 * (params.beta_max - params.beta_min);
            let mut acc = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                acc += 0.5 * w * eval.cdf(mid + half * x)?.value;
            }
            acc
        } else {
            eval.cdf(params.beta_min)?.value
        };
        Ok((1.0 - mean_h).clamp(0.0, 1.0))
    };
    let a = eta(params.p)?;
    let b = eta(upper_bound_activity(params, policy))?;
    Ok((a.min(b), a.max(b)))
}
