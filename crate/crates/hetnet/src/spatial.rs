//! Random deployments on a torus, biased association and empirical cell
//! statistics.
//!
//! The window is a flat torus so that every point sees a statistically
//! identical neighborhood; empirical statistics then match the stationary
//! point-process formulas without edge corrections.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{MarkedUser, NetworkParams};

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("window side must be positive, got {0}")]
    BadWindow(f64),
    #[error("association requires at least one base station")]
    NoBaseStations,
    #[error("empirical statistics require at least one deployment")]
    NoDeployments,
    #[error("tier index {0} out of range")]
    TierOutOfRange(usize),
    #[error("malformed deployment CSV: {0}")]
    MalformedCsv(String),
}

/// One realization of the marked point processes.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    /// Torus side length L in meters; all coordinates lie in [0, L).
    pub window_side: f64,
    /// Base-station positions, one list per tier.
    pub bs_per_tier: Vec<Vec<[f64; 2]>>,
    /// Users with their traffic marks.
    pub users: Vec<MarkedUser>,
    /// Seed the realization was drawn from.
    pub seed: u64,
}

impl Deployment {
    pub fn total_bs(&self) -> usize {
        self.bs_per_tier.iter().map(Vec::len).sum()
    }
}

/// Serving assignment of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    /// Tier index of the serving base station.
    pub tier: usize,
    /// Index within that tier's point list.
    pub bs: usize,
    /// Torus link distance in meters.
    pub distance: f64,
}

/// Per-user association results, aligned with `Deployment::users`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMap {
    pub assignments: Vec<Association>,
}

/// Distance on the flat torus of side `side`.
pub fn torus_distance(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let mut dx = (a[0] - b[0]).abs();
    if dx > side - dx {
        dx = side - dx;
    }
    let mut dy = (a[1] - b[1]).abs();
    if dy > side - dy {
        dy = side - dy;
    }
    (dx * dx + dy * dy).sqrt()
}

/// Window side such that the sparsest tier still has an expected 50 base
/// stations, keeping weighted-cell statistics close to stationarity.
pub fn default_window_side(params: &NetworkParams) -> f64 {
    let min_density = params
        .tiers
        .iter()
        .map(|t| t.density)
        .fold(f64::INFINITY, f64::min);
    (50.0 / min_density).sqrt()
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng) as usize
}

/// Draw one deployment: Poisson tier counts, uniform positions, and i.i.d.
/// uniform marks. Deterministic given (params, window_side, seed).
pub fn sample_deployment(params: &NetworkParams, window_side: f64, seed: u64) -> Deployment {
    assert!(window_side > 0.0, "window side must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = window_side * window_side;

    let mut bs_per_tier = Vec::with_capacity(params.num_tiers());
    for (k, tier) in params.tiers.iter().enumerate() {
        let mean = tier.density * area;
        if mean < 1.0 {
            log::warn!(
                "tier {} expects fewer than one base station in the window ({mean:.3}); \
                 edge statistics will be unreliable",
                k + 1
            );
        }
        let count = poisson_count(&mut rng, mean);
        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            points.push([
                rng.gen::<f64>() * window_side,
                rng.gen::<f64>() * window_side,
            ]);
        }
        bs_per_tier.push(points);
    }

    let user_count = poisson_count(&mut rng, params.lambda_u * area);
    let mut users = Vec::with_capacity(user_count);
    for _ in 0..user_count {
        let position = [
            rng.gen::<f64>() * window_side,
            rng.gen::<f64>() * window_side,
        ];
        let xi = params.xi_min + (params.xi_max - params.xi_min) * rng.gen::<f64>();
        let beta = params.beta_min + (params.beta_max - params.beta_min) * rng.gen::<f64>();
        users.push(MarkedUser { position, xi, beta });
    }

    Deployment {
        window_side,
        bs_per_tier,
        users,
        seed,
    }
}

/// Map every user to the base station maximizing B_k P_k d^{-alpha} under
/// the torus metric, ties broken by lowest (tier, index).
pub fn associate_all(
    dep: &Deployment,
    params: &NetworkParams,
) -> Result<AssociationMap, SpatialError> {
    if dep.total_bs() == 0 {
        return Err(SpatialError::NoBaseStations);
    }
    let side = dep.window_side;
    let assignments = dep
        .users
        .par_iter()
        .map(|user| {
            let mut best: Option<(f64, usize, usize, f64)> = None;
            for (k, tier_points) in dep.bs_per_tier.iter().enumerate() {
                let weight = params.tiers[k].bias * params.tiers[k].power_mw;
                for (b, point) in tier_points.iter().enumerate() {
                    let d = torus_distance(user.position, *point, side);
                    let score = weight * d.powf(-params.alpha);
                    // Strictly-greater keeps the first (lowest tier, index)
                    // candidate on exact ties.
                    if best.is_none_or(|(s, ..)| score > s) {
                        best = Some((score, k, b, d));
                    }
                }
            }
            let (_, tier, bs, distance) = best.unwrap();
            Association { tier, bs, distance }
        })
        .collect();
    Ok(AssociationMap { assignments })
}

/// Users-per-cell histogram for one tier plus per-tier association fractions,
/// pooled over deployments.
#[derive(Debug, Clone)]
pub struct CellStatistics {
    /// Normalized histogram over n = 0, 1, 2, ... users per tier-`k` cell.
    pub users_per_cell: Vec<f64>,
    /// Fraction of users served by each tier.
    pub association_fraction: Vec<f64>,
    /// Pooled mean users per tier-`k` cell.
    pub mean_users_per_cell: f64,
    /// Number of tier-`k` cells pooled.
    pub cell_count: u64,
}

pub fn empirical_cell_statistics(
    data: &[(&Deployment, &AssociationMap)],
    tier: usize,
) -> Result<CellStatistics, SpatialError> {
    if data.is_empty() {
        return Err(SpatialError::NoDeployments);
    }
    let num_tiers = data[0].0.bs_per_tier.len();
    if tier >= num_tiers {
        return Err(SpatialError::TierOutOfRange(tier));
    }

    let mut histogram: Vec<u64> = Vec::new();
    let mut tier_users = vec![0u64; num_tiers];
    let mut cell_count = 0u64;
    let mut user_total = 0u64;

    for (dep, assoc) in data {
        let mut counts = vec![0u64; dep.bs_per_tier[tier].len()];
        for a in &assoc.assignments {
            tier_users[a.tier] += 1;
            user_total += 1;
            if a.tier == tier {
                counts[a.bs] += 1;
            }
        }
        cell_count += counts.len() as u64;
        for c in counts {
            let idx = c as usize;
            if idx >= histogram.len() {
                histogram.resize(idx + 1, 0);
            }
            histogram[idx] += 1;
        }
    }

    let users_per_cell: Vec<f64> = histogram
        .iter()
        .map(|&c| c as f64 / cell_count.max(1) as f64)
        .collect();
    let mean_users_per_cell = histogram
        .iter()
        .enumerate()
        .map(|(n, &c)| n as f64 * c as f64)
        .sum::<f64>()
        / cell_count.max(1) as f64;
    let association_fraction = tier_users
        .iter()
        .map(|&c| c as f64 / user_total.max(1) as f64)
        .collect();

    Ok(CellStatistics {
        users_per_cell,
        association_fraction,
        mean_users_per_cell,
        cell_count,
    })
}

/// Write a deployment as CSV: a metadata comment line, a header, then one
/// row per point with `kind,tier,x,y,xi,beta`.
pub fn write_deployment_csv<W: Write>(dep: &Deployment, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "# window_side={:.17e} seed={}",
        dep.window_side, dep.seed
    )?;
    writeln!(w, "kind,tier,x,y,xi,beta")?;
    for (k, points) in dep.bs_per_tier.iter().enumerate() {
        for p in points {
            writeln!(w, "bs,{},{:.17e},{:.17e},,", k + 1, p[0], p[1])?;
        }
    }
    for u in &dep.users {
        writeln!(
            w,
            "user,,{:.17e},{:.17e},{:.17e},{:.17e}",
            u.position[0], u.position[1], u.xi, u.beta
        )?;
    }
    Ok(())
}

/// Read a deployment written by [`write_deployment_csv`].
pub fn read_deployment_csv<R: BufRead>(r: R) -> Result<Deployment, SpatialError> {
    let bad = |msg: &str| SpatialError::MalformedCsv(msg.to_string());
    let mut lines = r.lines();
    let meta = lines
        .next()
        .ok_or_else(|| bad("empty file"))?
        .map_err(|e| bad(&e.to_string()))?;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| bad("missing metadata line"))?;
    let mut window_side = None;
    let mut seed = None;
    for field in meta.split_whitespace() {
        if let Some(v) = field.strip_prefix("window_side=") {
            window_side = v.parse::<f64>().ok();
        } else if let Some(v) = field.strip_prefix("seed=") {
            seed = v.parse::<u64>().ok();
        }
    }
    let window_side = window_side.ok_or_else(|| bad("missing window_side"))?;
    let seed = seed.ok_or_else(|| bad("missing seed"))?;

    let header = lines
        .next()
        .ok_or_else(|| bad("missing header"))?
        .map_err(|e| bad(&e.to_string()))?;
    if header != "kind,tier,x,y,xi,beta" {
        return Err(bad("unexpected header"));
    }

    let mut bs_per_tier: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut users = Vec::new();
    for line in lines {
        let line = line.map_err(|e| bad(&e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad("wrong field count"));
        }
        let x: f64 = fields[2].parse().map_err(|_| bad("bad x"))?;
        let y: f64 = fields[3].parse().map_err(|_| bad("bad y"))?;
        match fields[0] {
            "bs" => {
                let tier: usize = fields[1].parse().map_err(|_| bad("bad tier"))?;
                if tier == 0 {
                    return Err(bad("tier indices are 1-based"));
                }
                if bs_per_tier.len() < tier {
                    bs_per_tier.resize(tier, Vec::new());
                }
                bs_per_tier[tier - 1].push([x, y]);
            }
            "user" => {
                let xi: f64 = fields[4].parse().map_err(|_| bad("bad xi"))?;
                let beta: f64 = fields[5].parse().map_err(|_| bad("bad beta"))?;
                users.push(MarkedUser {
                    position: [x, y],
                    xi,
                    beta,
                });
            }
            other => return Err(bad(&format!("unknown kind {other}"))),
        }
    }
    Ok(Deployment {
        window_side,
        bs_per_tier,
        users,
        seed,
    })
}
