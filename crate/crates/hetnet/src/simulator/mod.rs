//! Slot-stepped Monte Carlo of the interacting-queues downlink and its
//! dominant/modified bounding variants.
//!
//! All per-slot randomness (arrivals, muting, random scheduling picks,
//! fading) is counter-based: each draw is a pure hash of
//! (stream, slot, ids), not a position in a sequential stream. Two runs on
//! the same deployment and seed therefore share every draw even when the
//! interferer model changes which draws are consumed - the stochastic
//! dominance between the three systems becomes a deterministic, slot-by-slot
//! set inclusion.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{CdfCurve, CurveKind};
use crate::model::{InterfererModel, NetworkParams, SchedulingPolicy};
use crate::spatial::{
    associate_all, default_window_side, sample_deployment, AssociationMap, Deployment, SpatialError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Simulation horizon and replication control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Total simulated slots per realization.
    pub slots: u32,
    /// Slots discarded before statistics accumulate.
    pub warmup: u32,
    /// Independent deployments.
    pub realizations: u32,
    /// Master seed; realization r derives its own stream from it.
    pub seed: u64,
    /// Torus side in meters; when absent, sized so the sparsest tier
    /// expects 50 base stations.
    pub window_side: Option<f64>,
    /// Queue length beyond which a user is declared unstable
    /// (conditional mean delay reported as +inf).
    pub stability_queue_cap: u32,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.slots <= self.warmup {
            return Err(SimError::InvalidConfig(format!(
                "slots ({}) must exceed warmup ({})",
                self.slots, self.warmup
            )));
        }
        if self.realizations < 1 {
            return Err(SimError::InvalidConfig("realizations must be >= 1".into()));
        }
        if self.stability_queue_cap < 1 {
            return Err(SimError::InvalidConfig(
                "stability_queue_cap must be >= 1".into(),
            ));
        }
        if let Some(w) = self.window_side {
            // Rejects NaN as well.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(w > 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "window_side must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one user over one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserDelayStat {
    pub xi: f64,
    pub beta: f64,
    pub tier: usize,
    /// Packets that arrived over the whole horizon (including warmup).
    pub arrivals: u64,
    /// Packets delivered over the whole horizon.
    pub delivered: u64,
    /// Mean sojourn of measured packets in slots; +inf for unstable users,
    /// NaN when no packet was measured.
    pub mean_delay: f64,
    /// Fraction of measured transmission attempts with SIR above theta;
    /// NaN when the user was never scheduled with a packet.
    pub success_ratio: f64,
    pub stable: bool,
    /// Queue length at the end of the horizon.
    pub final_queue_len: u32,
    /// Measured transmission attempts.
    pub attempts: u64,
}

// ---------------------------------------------------------------------------
// Counter-based randomness

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MULT_A: u64 = 0xD605_1A32_BC27_11A5;
const MULT_B: u64 = 0x8CB9_2BA7_2F3D_8DD7;

const STREAM_FADING: u64 = 1;
const STREAM_ARRIVAL: u64 = 2;
const STREAM_MUTING: u64 = 3;
const STREAM_SCHED: u64 = 4;

/// SplitMix64 finalizer: a fast full-avalanche mixer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn to_unit(k: u64) -> f64 {
    // 53 high bits into [0, 1).
    (k >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Per-realization stream roots.
#[derive(Clone, Copy)]
struct Streams {
    fading: u64,
    arrival: u64,
    muting: u64,
    sched: u64,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            fading: mix(seed.wrapping_add(STREAM_FADING.wrapping_mul(GOLDEN))),
            arrival: mix(seed.wrapping_add(STREAM_ARRIVAL.wrapping_mul(GOLDEN))),
            muting: mix(seed.wrapping_add(STREAM_MUTING.wrapping_mul(GOLDEN))),
            sched: mix(seed.wrapping_add(STREAM_SCHED.wrapping_mul(GOLDEN))),
        }
    }

    #[inline]
    fn slot(root: u64, t: u32) -> u64 {
        mix(root.wrapping_add((t as u64 + 1).wrapping_mul(MULT_A)))
    }

    #[inline]
    fn leaf(slot_base: u64, id: u64) -> u64 {
        mix(slot_base.wrapping_add((id + 1).wrapping_mul(MULT_B)))
    }

    /// Unit-mean exponential fading for the (slot, transmitter, receiver)
    /// link, identical across interferer models.
    #[inline]
    fn fading(tx_base: u64, rx: u32) -> f64 {
        let u = to_unit(Self::leaf(tx_base, rx as u64));
        -(1.0 - u).ln()
    }
}

#[inline]
fn bounded_index(k: u64, n: usize) -> usize {
    // Multiply-high maps the hash uniformly onto 0..n (bias < 2^-53).
    ((k as u128 * n as u128) >> 64) as usize
}

// ---------------------------------------------------------------------------
// Engine

/// Path gains P_tx * d^{-alpha} for every (base station, user) pair; the
/// geometry is static so these are computed once per realization.
struct Gains {
    table: Vec<f64>,
    n_users: usize,
}

impl Gains {
    fn build(dep: &Deployment, params: &NetworkParams, flat_bs: &[(usize, [f64; 2])]) -> Self {
        let n_users = dep.users.len();
        let mut table = vec![0.0; flat_bs.len() * n_users];
        for (b, (tier, pos)) in flat_bs.iter().enumerate() {
            let power = params.tiers[*tier].power_mw;
            for (u, user) in dep.users.iter().enumerate() {
                let d = crate::spatial::torus_distance(*pos, user.position, dep.window_side);
                table[b * n_users + u] = power * d.powf(-params.alpha);
            }
        }
        Gains { table, n_users }
    }

    #[inline]
    fn get(&self, bs: usize, user: u32) -> f64 {
        self.table[bs * self.n_users + user as usize]
    }
}

/// Hooks for invariants that need per-slot visibility; no-op in production.
pub(crate) trait SlotObserver {
    fn transmit_set(&mut self, _t: u32, _transmitting: &[bool]) {}
    fn departure(&mut self, _t: u32, _bs: usize, _user: u32, _arrival: u32) {}
}

pub(crate) struct NoopObserver;
impl SlotObserver for NoopObserver {}

enum Queues {
    /// Per-user FIFO of arrival slots (random / round-robin scheduling).
    PerUser(Vec<VecDeque<u32>>),
    /// Merged arrival-ordered queue per base station plus per-user lengths
    /// (FIFO scheduling). Entries are (arrival, sequence, user); a failed
    /// head keeps its position, which realizes retransmission at the head.
    Merged {
        heaps: Vec<BinaryHeap<Reverse<(u32, u64, u32)>>>,
        seq: Vec<u64>,
        len: Vec<u32>,
    },
    /// Modified system: only the previous slot's arrival survives, so the
    /// queue is at most one packet deep. Value is the arrival slot.
    Fresh(Vec<Option<u32>>),
}

struct UserAccum {
    arrivals: u64,
    delivered: u64,
    measured_delivered: u64,
    delay_sum: u64,
    attempts: u64,
    successes: u64,
    dropped: u64,
}

/// Run one realization and return per-user statistics.
///
/// Slot order: service (muting, scheduling, simultaneous SIR evaluation,
/// departures) happens first against the queues as of the previous slot,
/// then new arrivals are appended. A packet arriving in slot t is therefore
/// eligible from slot t+1 and its delay is departure - arrival >= 1.
pub fn run_realization(
    dep: &Deployment,
    assoc: &AssociationMap,
    params: &NetworkParams,
    policy: SchedulingPolicy,
    model: InterfererModel,
    sim: &SimConfig,
    seed: u64,
) -> Vec<UserDelayStat> {
    run_with_observer(
        dep,
        assoc,
        params,
        policy,
        model,
        sim,
        seed,
        &mut NoopObserver,
    )
}

#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub(crate) fn run_with_observer<O: SlotObserver>(
    dep: &Deployment,
    assoc: &AssociationMap,
    params: &NetworkParams,
    policy: SchedulingPolicy,
    model: InterfererModel,
    sim: &SimConfig,
    seed: u64,
    observer: &mut O,
) -> Vec<UserDelayStat> {
    let n_users = dep.users.len();
    let flat_bs: Vec<(usize, [f64; 2])> = dep
        .bs_per_tier
        .iter()
        .enumerate()
        .flat_map(|(tier, pts)| pts.iter().map(move |p| (tier, *p)))
        .collect();
    let n_bs = flat_bs.len();

    // Global BS index of each user's server and the attached-user lists.
    let tier_offsets: Vec<usize> = dep
        .bs_per_tier
        .iter()
        .scan(0usize, |acc, pts| {
            let off = *acc;
            *acc += pts.len();
            Some(off)
        })
        .collect();
    let serving: Vec<usize> = assoc
        .assignments
        .iter()
        .map(|a| tier_offsets[a.tier] + a.bs)
        .collect();
    let mut bs_users: Vec<Vec<u32>> = vec![Vec::new(); n_bs];
    for (u, &s) in serving.iter().enumerate() {
        bs_users[s].push(u as u32);
    }

    let gains = Gains::build(dep, params, &flat_bs);
    let streams = Streams::new(seed);
    let theta = params.theta;
    let p_on = params.p;

    let mut queues = match (policy, model) {
        (_, InterfererModel::Modified) => Queues::Fresh(vec![None; n_users]),
        (SchedulingPolicy::Fifo, _) => Queues::Merged {
            heaps: (0..n_bs).map(|_| BinaryHeap::new()).collect(),
            seq: vec![0; n_bs],
            len: vec![0; n_users],
        },
        _ => Queues::PerUser(vec![VecDeque::new(); n_users]),
    };

    let mut acc: Vec<UserAccum> = (0..n_users)
        .map(|_| UserAccum {
            arrivals: 0,
            delivered: 0,
            measured_delivered: 0,
            delay_sum: 0,
            attempts: 0,
            successes: 0,
            dropped: 0,
        })
        .collect();

    let mut transmitting = vec![false; n_bs];
    let mut tx_list: Vec<usize> = Vec::with_capacity(n_bs);
    let mut tx_base: Vec<u64> = Vec::with_capacity(n_bs);
    // (user, serving bs, arrival slot) of this slot's real transmissions.
    let mut attempts: Vec<(u32, usize, u32)> = Vec::with_capacity(n_bs);
    let mut fresh_next: Vec<u32> = Vec::new();

    for t in 0..sim.slots {
        let mute_base = Streams::slot(streams.muting, t);
        let sched_base = Streams::slot(streams.sched, t);
        let fade_base = Streams::slot(streams.fading, t);
        let arr_base = Streams::slot(streams.arrival, t);
        let measured = t >= sim.warmup;

        transmitting.iter_mut().for_each(|b| *b = false);
        tx_list.clear();
        attempts.clear();

        for bs in 0..n_bs {
            if to_unit(Streams::leaf(mute_base, bs as u64)) >= p_on {
                continue;
            }
            let users = &bs_users[bs];
            // The policy-scheduled user and its head-of-line packet.
            let scheduled: Option<(u32, Option<u32>)> = match &queues {
                Queues::PerUser(qs) => {
                    if users.is_empty() {
                        None
                    } else {
                        let u = match policy {
                            SchedulingPolicy::Random => {
                                users[bounded_index(
                                    Streams::leaf(sched_base, bs as u64),
                                    users.len(),
                                )]
                            }
                            SchedulingPolicy::RoundRobin => users[(t as usize) % users.len()],
                            SchedulingPolicy::Fifo => unreachable!(),
                        };
                        Some((u, qs[u as usize].front().copied()))
                    }
                }
                Queues::Merged { heaps, .. } => heaps[bs]
                    .peek()
                    .map(|Reverse((arrival, _, u))| (*u, Some(*arrival))),
                Queues::Fresh(fresh) => {
                    if users.is_empty() {
                        None
                    } else {
                        let u = match policy {
                            SchedulingPolicy::Random => {
                                users[bounded_index(
                                    Streams::leaf(sched_base, bs as u64),
                                    users.len(),
                                )]
                            }
                            SchedulingPolicy::RoundRobin => users[(t as usize) % users.len()],
                            // All eligible packets arrived in the same slot;
                            // the earliest-sequence tie rule picks the lowest
                            // attached user with a packet.
                            SchedulingPolicy::Fifo => {
                                match users.iter().find(|&&u| fresh[u as usize].is_some()) {
                                    Some(&u) => u,
                                    None => users[0],
                                }
                            }
                        };
                        Some((u, fresh[u as usize]))
                    }
                }
            };

            let payload = scheduled.and_then(|(u, head)| head.map(|arrival| (u, arrival)));
            let transmits = match model {
                InterfererModel::Dominant => true,
                InterfererModel::Original | InterfererModel::Modified => payload.is_some(),
            };
            if transmits {
                transmitting[bs] = true;
                tx_list.push(bs);
            }
            if let Some((u, arrival)) = payload {
                attempts.push((u, bs, arrival));
            }
        }

        observer.transmit_set(t, &transmitting);

        tx_base.clear();
        tx_base.extend(
            tx_list
                .iter()
                .map(|&bs| Streams::slot(fade_base, bs as u32)),
        );

        // Simultaneous SIR evaluation for every real transmission.
        for &(user, serving_bs, arrival) in &attempts {
            let mut interference = 0.0;
            let mut signal = 0.0;
            for (&tx, &base) in tx_list.iter().zip(&tx_base) {
                let power = gains.get(tx, user) * Streams::fading(base, user);
                if tx == serving_bs {
                    signal = power;
                } else {
                    interference += power;
                }
            }
            let success = signal > theta * interference;

            let a = &mut acc[user as usize];
            if measured {
                a.attempts += 1;
                a.successes += success as u64;
            }
            if success {
                a.delivered += 1;
                if arrival >= sim.warmup {
                    a.measured_delivered += 1;
                    a.delay_sum += (t - arrival) as u64;
                }
                observer.departure(t, serving_bs, user, arrival);
                match &mut queues {
                    Queues::PerUser(qs) => {
                        qs[user as usize].pop_front();
                    }
                    Queues::Merged { heaps, len, .. } => {
                        heaps[serving_bs].pop();
                        len[user as usize] -= 1;
                    }
                    Queues::Fresh(fresh) => fresh[user as usize] = None,
                }
            }
        }

        // Arrivals land after service: eligible from the next slot on.
        match &mut queues {
            Queues::PerUser(qs) => {
                for u in 0..n_users {
                    if to_unit(Streams::leaf(arr_base, u as u64)) < dep.users[u].xi {
                        acc[u].arrivals += 1;
                        qs[u].push_back(t);
                    }
                }
            }
            Queues::Merged { heaps, seq, len } => {
                for u in 0..n_users {
                    if to_unit(Streams::leaf(arr_base, u as u64)) < dep.users[u].xi {
                        acc[u].arrivals += 1;
                        let bs = serving[u];
                        heaps[bs].push(Reverse((t, seq[bs], u as u32)));
                        seq[bs] += 1;
                        len[u] += 1;
                    }
                }
            }
            Queues::Fresh(fresh) => {
                fresh_next.clear();
                for u in 0..n_users {
                    if to_unit(Streams::leaf(arr_base, u as u64)) < dep.users[u].xi {
                        acc[u].arrivals += 1;
                        fresh_next.push(u as u32);
                    }
                }
                // Undelivered eligible packets are dropped, never queued.
                for (u, slot) in fresh.iter_mut().enumerate() {
                    if slot.take().is_some() {
                        acc[u].dropped += 1;
                    }
                }
                for &u in &fresh_next {
                    fresh[u as usize] = Some(t);
                }
            }
        }
    }

    (0..n_users)
        .map(|u| {
            let a = &acc[u];
            let final_queue_len = match &queues {
                Queues::PerUser(qs) => qs[u].len() as u32,
                Queues::Merged { len, .. } => len[u],
                Queues::Fresh(fresh) => fresh[u].is_some() as u32,
            };
            debug_assert_eq!(
                a.arrivals,
                a.delivered + a.dropped + final_queue_len as u64,
                "packet conservation violated for user {u}"
            );
            let stable = final_queue_len <= sim.stability_queue_cap;
            let mean_delay = if !stable {
                f64::INFINITY
            } else if a.measured_delivered > 0 {
                a.delay_sum as f64 / a.measured_delivered as f64
            } else {
                f64::NAN
            };
            let success_ratio = if a.attempts > 0 {
                a.successes as f64 / a.attempts as f64
            } else {
                f64::NAN
            };
            UserDelayStat {
                xi: dep.users[u].xi,
                beta: dep.users[u].beta,
                tier: assoc.assignments[u].tier,
                arrivals: a.arrivals,
                delivered: a.delivered,
                mean_delay,
                success_ratio,
                stable,
                final_queue_len,
                attempts: a.attempts,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Experiment orchestration and aggregation

/// Deterministic per-realization seed derivation.
pub fn realization_seed(master: u64, realization: u32) -> u64 {
    mix(master.wrapping_add((realization as u64 + 1).wrapping_mul(GOLDEN)))
}

/// Sample `realizations` deployments and run them in parallel.
pub fn run_experiment(
    params: &NetworkParams,
    policy: SchedulingPolicy,
    model: InterfererModel,
    sim: &SimConfig,
) -> Result<Vec<Vec<UserDelayStat>>, SimError> {
    sim.validate()?;
    let window = sim
        .window_side
        .unwrap_or_else(|| default_window_side(params));
    (0..sim.realizations)
        .into_par_iter()
        .map(|r| {
            let seed = realization_seed(sim.seed, r);
            let dep = sample_deployment(params, window, seed);
            let assoc = associate_all(&dep, params)?;
            Ok(run_realization(
                &dep,
                &assoc,
                params,
                policy,
                model,
                sim,
                seed ^ 0x5EED_0000_0000_0001,
            ))
        })
        .collect()
}

/// Pooled summary across realizations.
#[derive(Debug, Clone)]
pub struct SimulationSummary {
    /// Empirical CDF of per-user mean delay; unstable users count as +inf.
    pub delay_cdf: CdfCurve,
    /// Empirical CDF of per-user success ratios.
    pub success_cdf: CdfCurve,
    /// Fraction of users whose mean delay exceeds their own requirement.
    pub delay_outage: f64,
    pub total_users: u64,
    /// Users contributing a delay sample (measured packets or unstable).
    pub delay_samples: u64,
    /// Users contributing a success-ratio sample.
    pub success_samples: u64,
    /// Users with neither (no measured traffic); excluded from the curves.
    pub users_no_data: u64,
    pub unstable: u64,
    /// Stability-cap sensitivity: how many users would be flagged at half
    /// and at double the configured cap.
    pub unstable_at_half_cap: u64,
    pub unstable_at_double_cap: u64,
}

/// Pool per-user samples into empirical curves on the given grids.
///
/// `activity` only annotates the CSV q column (use the network's p).
pub fn aggregate(
    stats: &[Vec<UserDelayStat>],
    policy: SchedulingPolicy,
    t_grid: &[f64],
    u_grid: &[f64],
    cap: u32,
    activity: f64,
) -> SimulationSummary {
    let all: Vec<&UserDelayStat> = stats.iter().flatten().collect();
    let total_users = all.len() as u64;

    let delays: Vec<f64> = all
        .iter()
        .filter(|s| !s.mean_delay.is_nan())
        .map(|s| s.mean_delay)
        .collect();
    let ratios: Vec<f64> = all
        .iter()
        .filter(|s| !s.success_ratio.is_nan())
        .map(|s| s.success_ratio)
        .collect();

    let mut delay_cdf = CdfCurve::new(CurveKind::MeanDelay, Some(policy), activity);
    let n = delays.len() as f64;
    for &t in t_grid {
        let f = delays.iter().filter(|&&d| d <= t).count() as f64 / n.max(1.0);
        let se = (f * (1.0 - f) / n.max(1.0)).sqrt();
        delay_cdf.push(t, f, f - 2.0 * se, f + 2.0 * se);
    }

    let mut success_cdf = CdfCurve::new(CurveKind::SuccessProbability, Some(policy), activity);
    let m = ratios.len() as f64;
    for &u in u_grid {
        let f = ratios.iter().filter(|&&r| r <= u).count() as f64 / m.max(1.0);
        let se = (f * (1.0 - f) / m.max(1.0)).sqrt();
        success_cdf.push(u, f, f - 2.0 * se, f + 2.0 * se);
    }

    let outage_pairs: Vec<(f64, f64)> = all
        .iter()
        .filter(|s| !s.mean_delay.is_nan())
        .map(|s| (s.mean_delay, s.beta))
        .collect();
    let delay_outage = outage_pairs.iter().filter(|(d, beta)| d > beta).count() as f64
        / (outage_pairs.len() as f64).max(1.0);

    SimulationSummary {
        delay_cdf,
        success_cdf,
        delay_outage,
        total_users,
        delay_samples: delays.len() as u64,
        success_samples: ratios.len() as u64,
        users_no_data: all
            .iter()
            .filter(|s| s.mean_delay.is_nan() && s.success_ratio.is_nan())
            .count() as u64,
        unstable: all.iter().filter(|s| !s.stable).count() as u64,
        unstable_at_half_cap: all.iter().filter(|s| s.final_queue_len > cap / 2).count() as u64,
        unstable_at_double_cap: all
            .iter()
            .filter(|s| s.final_queue_len > cap.saturating_mul(2))
            .count() as u64,
    }
}

/// Per-user statistics CSV:
/// `realization,user,tier,xi,beta,mean_delay,success_ratio,stable`.
pub fn write_user_stats_csv<W: std::io::Write>(
    stats: &[Vec<UserDelayStat>],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "realization,user,tier,xi,beta,mean_delay,success_ratio,stable"
    )?;
    for (r, realization) in stats.iter().enumerate() {
        for (u, s) in realization.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{:.9},{:.9},{},{},{}",
                r,
                u,
                s.tier + 1,
                s.xi,
                s.beta,
                s.mean_delay,
                s.success_ratio,
                s.stable
            )?;
        }
    }
    Ok(())
}
