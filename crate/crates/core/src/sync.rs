//! Multi-beam transmission synchronization.
//!
//! Each cycle splits the pending data across the operating links in
//! proportion to their linear SNR, lets every link drain its share, starts
//! the waiting timer (Timer2) when the first link is done and closes the
//! cycle when everyone is done or Timer2 runs out. Links still holding data
//! at that point get a smaller weight in the next cycle's split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkernel::{run_until, Context, EventQueue, EventTrace, Model, SimError, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("link {0} has a non-positive SNR weight")]
    NonPositiveSnr(usize),
    #[error("link {0} has a non-positive rate")]
    NonPositiveRate(usize),
    #[error("weights sum to zero")]
    ZeroWeights,
    #[error("{plan} shares but {rates} rate profiles")]
    LengthMismatch { plan: usize, rates: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    /// Timer1 cap. `None` derives it from the plan at cycle start.
    pub tau1: Option<SimTime>,
    /// Timer2 cap. `None` uses `tau2_fraction * tau1`.
    pub tau2: Option<SimTime>,
    pub tau2_fraction: f64,
    /// Floor for a rebalanced weight, as a fraction of the previous share.
    pub clamp_floor: f64,
    /// Payload bytes per frame; only matters with a non-zero overhead.
    pub frame_bytes: u64,
    /// Fixed airtime added per frame (preamble, ACK turnaround).
    pub frame_overhead: SimTime,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            tau1: None,
            tau2: None,
            tau2_fraction: 0.1,
            clamp_floor: 0.01,
            frame_bytes: 1500,
            frame_overhead: SimTime::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub total_bytes: u64,
    pub shares: Vec<u64>,
    /// Weights the shares were split by (linear SNR, or rebalanced weights).
    pub weights: Vec<f64>,
}

/// Splits `total_bytes` proportionally to the linear SNRs.
pub fn split_stream(total_bytes: u64, snrs_linear: &[f64]) -> Result<SplitPlan, SyncError> {
    if let Some(i) = snrs_linear.iter().position(|s| !(*s > 0.0)) {
        return Err(SyncError::NonPositiveSnr(i));
    }
    split_weighted(total_bytes, snrs_linear)
}

/// Largest-remainder apportionment; ties on the fractional part go to the
/// lower index.
fn split_weighted(total_bytes: u64, weights: &[f64]) -> Result<SplitPlan, SyncError> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err(SyncError::ZeroWeights);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total_bytes as f64 * w / sum).collect();
    let mut shares: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // float floors can overshoot by a byte when the quotas are huge
    let mut left = total_bytes as i128 - assigned as i128;
    let mut k = 0;
    while left > 0 {
        shares[order[k % order.len()]] += 1;
        left -= 1;
        k += 1;
    }
    while left < 0 {
        let i = order[order.len() - 1 - (k % order.len())];
        if shares[i] > 0 {
            shares[i] -= 1;
            left += 1;
        }
        k += 1;
    }
    Ok(SplitPlan { total_bytes, shares, weights: weights.to_vec() })
}

/// Piecewise-constant link rate, offsets relative to the cycle start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    /// `(offset, bits per second)`, sorted by offset, first offset zero.
    pub segments: Vec<(SimTime, f64)>,
}

impl RateProfile {
    pub fn constant(bps: f64) -> Self {
        RateProfile { segments: vec![(SimTime::ZERO, bps)] }
    }

    /// Drops to `factor * bps` from `at` onwards.
    pub fn with_drop(bps: f64, at: SimTime, factor: f64) -> Self {
        RateProfile { segments: vec![(SimTime::ZERO, bps), (at, bps * factor)] }
    }

    pub fn initial_rate(&self) -> f64 {
        self.segments.first().map(|s| s.1).unwrap_or(0.0)
    }

    fn is_valid(&self) -> bool {
        !self.segments.is_empty() && self.segments[0].0 == SimTime::ZERO && self.segments.iter().all(|s| s.1 > 0.0)
    }

    /// Seconds needed to push `bits` starting at `from` seconds.
    fn time_to_send(&self, bits: f64, from: f64) -> f64 {
        let mut t = from;
        let mut left = bits;
        for (i, &(start, rate)) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map(|s| s.0.as_secs_f64()).unwrap_or(f64::INFINITY);
            let seg_start = start.as_secs_f64().max(t);
            if seg_start >= end {
                continue;
            }
            let capacity = (end - seg_start) * rate;
            if capacity >= left {
                return seg_start + left / rate;
            }
            left -= capacity;
            t = end;
        }
        t
    }

    /// Bits pushed in `[from, to]` seconds.
    fn bits_between(&self, from: f64, to: f64) -> f64 {
        let mut bits = 0.0;
        for (i, &(start, rate)) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map(|s| s.0.as_secs_f64()).unwrap_or(f64::INFINITY);
            let lo = start.as_secs_f64().max(from);
            let hi = end.min(to);
            if hi > lo {
                bits += (hi - lo) * rate;
            }
        }
        bits
    }
}

/// Seconds from cycle start until `bytes` are fully sent.
fn completion_secs(bytes: u64, profile: &RateProfile, cfg: &SyncConfig) -> f64 {
    if bytes == 0 {
        return 0.0;
    }
    if cfg.frame_overhead == SimTime::ZERO {
        return profile.time_to_send(bytes as f64 * 8.0, 0.0);
    }
    let mut t = 0.0;
    let mut left = bytes;
    while left > 0 {
        let chunk = left.min(cfg.frame_bytes.max(1));
        t += cfg.frame_overhead.as_secs_f64();
        t = profile.time_to_send(chunk as f64 * 8.0, t);
        left -= chunk;
    }
    t
}

/// Bytes fully delivered `elapsed` seconds into the cycle.
fn bytes_sent_by(bytes: u64, profile: &RateProfile, cfg: &SyncConfig, elapsed: f64) -> u64 {
    if cfg.frame_overhead == SimTime::ZERO {
        let sent = (profile.bits_between(0.0, elapsed) / 8.0).floor() as u64;
        return sent.min(bytes);
    }
    let mut t = 0.0;
    let mut sent = 0;
    while sent < bytes {
        let chunk = (bytes - sent).min(cfg.frame_bytes.max(1));
        let done = profile.time_to_send(chunk as f64 * 8.0, t + cfg.frame_overhead.as_secs_f64());
        if done > elapsed {
            let start = t + cfg.frame_overhead.as_secs_f64();
            if elapsed > start {
                sent += ((profile.bits_between(start, elapsed) / 8.0).floor() as u64).min(chunk);
            }
            break;
        }
        sent += chunk;
        t = done;
    }
    sent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome {
    pub start: SimTime,
    pub end: SimTime,
    /// Finish time per link, `None` when cut off by Timer2.
    pub finish: Vec<Option<SimTime>>,
    /// Bytes still unsent at cycle end.
    pub remainders: Vec<u64>,
    pub overrun: bool,
    pub tau1: SimTime,
    pub tau2: SimTime,
    pub timer2_start: Option<SimTime>,
}

#[derive(Debug, Clone)]
enum SyncEvent {
    CycleStart { cycle: usize },
    LinkDone { cycle: usize, link: usize },
    Timer2Expire { cycle: usize },
}

/// One cycle of the synchronization process in flight.
struct Running {
    plan: SplitPlan,
    rates: Vec<RateProfile>,
    outcome: CycleOutcome,
    pending_done: Vec<Option<u64>>,
    timer2: Option<u64>,
}

struct SyncModel<'a> {
    cfg: &'a SyncConfig,
    /// Rate profiles for each cycle index.
    rates: &'a dyn Fn(usize) -> Vec<RateProfile>,
    cycles: usize,
    plan: SplitPlan,
    running: Option<Running>,
    outcomes: Vec<CycleOutcome>,
    plans: Vec<SplitPlan>,
}

fn derive_timers(plan: &SplitPlan, rates: &[RateProfile], cfg: &SyncConfig) -> (SimTime, SimTime) {
    let tau1 = cfg.tau1.unwrap_or_else(|| {
        let worst = plan.shares.iter().zip(rates).map(|(s, r)| *s as f64 * 8.0 / r.initial_rate()).fold(0.0, f64::max);
        SimTime::from_secs_f64(worst)
    });
    let tau2 =
        cfg.tau2.unwrap_or_else(|| SimTime::from_secs_f64(tau1.as_secs_f64() * cfg.tau2_fraction).max(SimTime(1)));
    (tau1, tau2)
}

impl SyncModel<'_> {
    fn close_cycle(&mut self, ctx: &mut Context<'_, SyncEvent>, cycle: usize) {
        let run = self.running.take().expect("cycle in flight");
        let mut outcome = run.outcome;
        outcome.end = ctx.now();
        ctx.note(
            "MTX",
            "CYCLE_END",
            format!("cycle={cycle} overrun={} remainders={}", outcome.overrun, join(&outcome.remainders)),
        );
        let next = rebalance(&run.plan, &outcome, self.cfg.clamp_floor);
        if outcome.overrun {
            let weights: Vec<String> = next.weights.iter().map(|w| format!("{w:.3}")).collect();
            ctx.note(
                "MTX",
                "REBALANCE",
                format!("cycle={cycle} weights={} shares={}", weights.join(":"), join(&next.shares)),
            );
            self.plan = next;
        }
        self.outcomes.push(outcome);
        if cycle + 1 < self.cycles {
            ctx.schedule_in(SimTime::ZERO, SyncEvent::CycleStart { cycle: cycle + 1 });
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":")
}

impl Model for SyncModel<'_> {
    type Event = SyncEvent;

    fn describe(&self, ev: &SyncEvent) -> Option<(String, String, String)> {
        Some(match ev {
            SyncEvent::CycleStart { cycle } => {
                ("MTX".into(), "CYCLE_START".into(), format!("cycle={cycle} shares={}", join(&self.plan.shares)))
            }
            SyncEvent::LinkDone { cycle, link } => (
                format!("vMTX{}", link + 1),
                "LINK_DONE".into(),
                format!("cycle={cycle} bytes={}", self.running.as_ref().map(|r| r.plan.shares[*link]).unwrap_or(0)),
            ),
            SyncEvent::Timer2Expire { cycle } => ("MTX".into(), "TIMER2_EXPIRE".into(), format!("cycle={cycle}")),
        })
    }

    fn handle(&mut self, ev: SyncEvent, ctx: &mut Context<'_, SyncEvent>) {
        match ev {
            SyncEvent::CycleStart { cycle } => {
                let rates = (self.rates)(cycle);
                let plan = self.plan.clone();
                self.plans.push(plan.clone());
                let (tau1, tau2) = derive_timers(&plan, &rates, self.cfg);
                let n = plan.shares.len();
                let mut pending_done = vec![None; n];
                for link in 0..n {
                    let secs = completion_secs(plan.shares[link], &rates[link], self.cfg);
                    pending_done[link] =
                        ctx.schedule_in(SimTime::from_secs_f64(secs), SyncEvent::LinkDone { cycle, link });
                }
                ctx.note("MTX", "TIMER1_START", format!("cycle={cycle} tau1={tau1} tau2={tau2}"));
                self.running = Some(Running {
                    plan,
                    rates,
                    outcome: CycleOutcome {
                        start: ctx.now(),
                        end: ctx.now(),
                        finish: vec![None; n],
                        remainders: vec![0; n],
                        overrun: false,
                        tau1,
                        tau2,
                        timer2_start: None,
                    },
                    pending_done,
                    timer2: None,
                });
            }
            SyncEvent::LinkDone { cycle, link } => {
                let now = ctx.now();
                let run = self.running.as_mut().expect("cycle in flight");
                run.outcome.finish[link] = Some(now);
                run.pending_done[link] = None;
                if run.outcome.timer2_start.is_none() {
                    run.outcome.timer2_start = Some(now);
                    let tau2 = run.outcome.tau2;
                    run.timer2 = ctx.schedule_in(tau2, SyncEvent::Timer2Expire { cycle });
                    ctx.note("MTX", "TIMER2_START", format!("cycle={cycle} first=vMTX{}", link + 1));
                }
                let run = self.running.as_mut().expect("cycle in flight");
                if run.pending_done.iter().all(Option::is_none) {
                    if let Some(t2) = run.timer2.take() {
                        ctx.cancel(t2);
                    }
                    self.close_cycle(ctx, cycle);
                }
            }
            SyncEvent::Timer2Expire { cycle } => {
                let now = ctx.now();
                let cfg = self.cfg;
                let run = self.running.as_mut().expect("cycle in flight");
                run.timer2 = None;
                let elapsed = (now - run.outcome.start).as_secs_f64();
                for link in 0..run.plan.shares.len() {
                    if let Some(seq) = run.pending_done[link].take() {
                        ctx.cancel(seq);
                        let share = run.plan.shares[link];
                        let sent = bytes_sent_by(share, &run.rates[link], cfg, elapsed);
                        run.outcome.remainders[link] = share - sent;
                        run.outcome.overrun = true;
                    }
                }
                self.close_cycle(ctx, cycle);
            }
        }
    }
}

/// Runs `cycles` consecutive synchronization cycles starting from `plan`.
/// `rates(c)` gives the per-link rate profiles of cycle `c`.
pub fn run_cycles(
    plan: SplitPlan,
    rates: &dyn Fn(usize) -> Vec<RateProfile>,
    cfg: &SyncConfig,
    cycles: usize,
) -> Result<(Vec<CycleOutcome>, Vec<SplitPlan>, EventTrace), SyncError> {
    for c in 0..cycles {
        let r = rates(c);
        if r.len() != plan.shares.len() {
            return Err(SyncError::LengthMismatch { plan: plan.shares.len(), rates: r.len() });
        }
        if let Some(i) = r.iter().position(|p| !p.is_valid()) {
            return Err(SyncError::NonPositiveRate(i));
        }
    }
    let mut queue = EventQueue::new();
    if cycles > 0 {
        queue.schedule(SimTime::ZERO, SyncEvent::CycleStart { cycle: 0 })?;
    }
    let mut model = SyncModel { cfg, rates, cycles, plan, running: None, outcomes: Vec::new(), plans: Vec::new() };
    let trace = run_until(&mut queue, &mut model, SimTime(u64::MAX))?;
    Ok((model.outcomes, model.plans, trace))
}

/// Runs a single cycle.
pub fn run_cycle(
    plan: &SplitPlan,
    rates: &[RateProfile],
    cfg: &SyncConfig,
) -> Result<(CycleOutcome, EventTrace), SyncError> {
    let owned = rates.to_vec();
    let (mut outcomes, _, trace) = run_cycles(plan.clone(), &move |_| owned.clone(), cfg, 1)?;
    Ok((outcomes.remove(0), trace))
}

/// Next split after a cycle: an overrunning link's weight drops from `D_i`
/// to `D_i - 2 D_i^re` (never below `floor * D_i`); everyone else keeps
/// their previous share as weight.
pub fn rebalance(prev: &SplitPlan, outcome: &CycleOutcome, floor: f64) -> SplitPlan {
    let weights: Vec<f64> = prev
        .shares
        .iter()
        .zip(&outcome.remainders)
        .map(|(&d, &re)| {
            let d = d as f64;
            if re == 0 {
                d
            } else {
                (d - 2.0 * re as f64).max(floor * d)
            }
        })
        .collect();
    match split_weighted(prev.total_bytes, &weights) {
        Ok(plan) => plan,
        // every share was zero; nothing to rebalance
        Err(_) => prev.clone(),
    }
}
