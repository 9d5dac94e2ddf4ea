//! Link-state machine and cooperative beam tracking.
//!
//! `N` operating links each carry periodic Data frames acknowledged by their
//! receiver. When a link is blocked, an unbroken link (the helper) carries
//! the `BBPO/CBPO` tracking fields that tell the blocked pair which candidate
//! beam pair to switch to; the blocked transmitter then sends a QoS Null on
//! that candidate and the link is restored if the Ack comes back. Once every
//! candidate has failed the pair reverts to its initial beams and probes
//! periodically. Degraded (not yet blocked) links get a conventional refine
//! exchange instead. Only one tracking or refine procedure runs at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::snr_db;
use crate::scenario::Scenario;
use crate::simkernel::{run_until, Context, EventQueue, EventTrace, Model, RngStream, SimError, SimTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("blockage probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("blockage intervals overlap on pair {0}")]
    OverlappingIntervals(u32),
    #[error("empty or reversed blockage interval on pair {0}")]
    EmptyInterval(u32),
    #[error("pair {0} is not part of the scenario")]
    UnknownPair(u32),
    #[error("need at least {need} beam pairs for {need} operating links, got {got}")]
    TooFewPairs { need: usize, got: usize },
    #[error("degrade threshold {degrade} dB must exceed blocked threshold {blocked} dB")]
    BadThresholds { degrade: f64, blocked: f64 },
    #[error("link {0} is not degraded")]
    NotDegraded(usize),
    #[error("link {0} is not blocked")]
    NotBlocked(usize),
    #[error("helper link {0} is not active")]
    HelperNotActive(usize),
    #[error("another procedure is running on link {0}")]
    Busy(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkStatus {
    Active,
    Degraded,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Operating,
    Candidate,
}

/// Snapshot of a beam pair's runtime state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRuntime {
    pub pair_id: u32,
    pub status: LinkStatus,
    pub role: Role,
    /// Position in the candidate list the link currently uses, 0 = initial pair.
    pub candidate_index: usize,
    pub probe_period: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingFields {
    pub blocked_beam_pair_order: u32,
    pub candidate_beam_pair_order: u32,
}

impl fmt::Display for TrackingFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BBPO={},CBPO={}", self.blocked_beam_pair_order, self.candidate_beam_pair_order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Data,
    Ack,
    QoSNull,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: FrameKind,
    /// 1-based vMTX/vMRX index.
    pub sender: usize,
    pub seq: u64,
    pub tracking: Option<TrackingFields>,
}

impl Frame {
    fn details(&self) -> String {
        match self.tracking {
            Some(t) => format!("seq={} {t}", self.seq),
            None => format!("seq={}", self.seq),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub degrade_db: f64,
    pub blocked_db: f64,
}

impl Thresholds {
    pub fn from_eta(eta_db: f64) -> Self {
        Thresholds { degrade_db: eta_db + 6.0, blocked_db: eta_db }
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.degrade_db > self.blocked_db {
            Ok(())
        } else {
            Err(TrackingError::BadThresholds { degrade: self.degrade_db, blocked: self.blocked_db })
        }
    }
}

/// Classifies a link from its SINR; an active blockage interval wins.
pub fn detect_state(sinr_db: f64, thresholds: &Thresholds, blockage_active: bool) -> LinkStatus {
    if blockage_active || sinr_db < thresholds.blocked_db {
        LinkStatus::Blocked
    } else if sinr_db < thresholds.degrade_db {
        LinkStatus::Degraded
    } else {
        LinkStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub link: usize,
    pub pair_id: u32,
    pub status: LinkStatus,
}

/// Picks the one request allowed to run: Degraded before Blocked, then the
/// lower pair id.
pub fn arbitrate(pending: &[Request]) -> Option<Request> {
    pending
        .iter()
        .filter(|r| r.status != LinkStatus::Active)
        .min_by_key(|r| (r.status != LinkStatus::Degraded, r.pair_id, r.link))
        .copied()
}

/// Preconditions of a refine exchange.
pub fn check_refine(link: &LinkRuntime, busy: Option<usize>) -> Result<(), TrackingError> {
    if let Some(b) = busy {
        return Err(TrackingError::Busy(b));
    }
    if link.status != LinkStatus::Degraded {
        return Err(TrackingError::NotDegraded(link.pair_id as usize));
    }
    Ok(())
}

/// Preconditions of a cooperative tracking procedure.
pub fn check_track(
    blocked: &LinkRuntime,
    helper: Option<&LinkRuntime>,
    busy: Option<usize>,
) -> Result<(), TrackingError> {
    if let Some(b) = busy {
        return Err(TrackingError::Busy(b));
    }
    if blocked.status != LinkStatus::Blocked {
        return Err(TrackingError::NotBlocked(blocked.pair_id as usize));
    }
    if let Some(h) = helper {
        if h.status != LinkStatus::Active {
            return Err(TrackingError::HelperNotActive(h.pair_id as usize));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInterval {
    pub pair: u32,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockageMode {
    None,
    Scripted(Vec<BlockInterval>),
    /// Each pair is blocked for a whole epoch with probability `p`.
    Bernoulli {
        p: f64,
        epoch: SimTime,
    },
    /// Alternating clear/blocked holds with exponential durations.
    OnOff {
        mean_blocked: SimTime,
        mean_clear: SimTime,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockageProcess {
    pub mode: BlockageMode,
    /// When false every pair shares a single draw (one obstacle blocks all).
    pub independent: bool,
}

impl BlockageProcess {
    pub fn none() -> Self {
        BlockageProcess { mode: BlockageMode::None, independent: true }
    }

    pub fn scripted(intervals: Vec<BlockInterval>) -> Self {
        BlockageProcess { mode: BlockageMode::Scripted(intervals), independent: true }
    }

    fn is_scripted(&self) -> bool {
        matches!(self.mode, BlockageMode::Scripted(_))
    }

    /// Concrete blocked intervals over `[0, horizon)`, sorted by pair then start.
    pub fn materialize(&self, pairs: &[u32], horizon: SimTime, seed: u64) -> Result<Vec<BlockInterval>, TrackingError> {
        let mut out = Vec::new();
        match &self.mode {
            BlockageMode::None => {}
            BlockageMode::Scripted(list) => {
                for iv in list {
                    if !pairs.contains(&iv.pair) {
                        return Err(TrackingError::UnknownPair(iv.pair));
                    }
                    if iv.end <= iv.start {
                        return Err(TrackingError::EmptyInterval(iv.pair));
                    }
                }
                out = list.clone();
            }
            BlockageMode::Bernoulli { p, epoch } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(TrackingError::InvalidProbability(*p));
                }
                let epoch = (*epoch).max(SimTime(1));
                let streams = if self.independent { pairs.len() } else { 1 };
                let mut rng = RngStream::new(seed, "blockage.bernoulli");
                let epochs = horizon.ticks().div_ceil(epoch.ticks());
                let mut draws = vec![Vec::with_capacity(epochs as usize); streams];
                for _ in 0..epochs {
                    for d in draws.iter_mut() {
                        d.push(rng.rng().gen_bool(*p));
                    }
                }
                for (i, &pair) in pairs.iter().enumerate() {
                    let d = &draws[if self.independent { i } else { 0 }];
                    let mut k = 0;
                    while k < d.len() {
                        if d[k] {
                            let s = k;
                            while k < d.len() && d[k] {
                                k += 1;
                            }
                            out.push(BlockInterval {
                                pair,
                                start: SimTime(s as u64 * epoch.ticks()),
                                end: SimTime(k as u64 * epoch.ticks()),
                            });
                        } else {
                            k += 1;
                        }
                    }
                }
            }
            BlockageMode::OnOff { mean_blocked, mean_clear } => {
                let streams = if self.independent { pairs.len() } else { 1 };
                let mut timelines = Vec::with_capacity(streams);
                for s in 0..streams {
                    let mut rng = RngStream::new(seed, &format!("blockage.onoff.{s}"));
                    let mut t = 0u64;
                    let mut spans = Vec::new();
                    while t < horizon.ticks() {
                        t += exp_ticks(rng.rng(), *mean_clear);
                        let len = exp_ticks(rng.rng(), *mean_blocked);
                        if t < horizon.ticks() {
                            spans.push((t, t + len));
                        }
                        t += len;
                    }
                    timelines.push(spans);
                }
                for (i, &pair) in pairs.iter().enumerate() {
                    for &(s, e) in &timelines[if self.independent { i } else { 0 }] {
                        out.push(BlockInterval { pair, start: SimTime(s), end: SimTime(e) });
                    }
                }
            }
        }
        out.sort_by_key(|iv| (iv.pair, iv.start));
        for w in out.windows(2) {
            if w[0].pair == w[1].pair && w[1].start < w[0].end {
                return Err(TrackingError::OverlappingIntervals(w[0].pair));
            }
        }
        Ok(out)
    }
}

fn exp_ticks(rng: &mut impl Rng, mean: SimTime) -> u64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    ((-(mean.ticks() as f64) * u.ln()).round() as u64).max(1)
}

/// Scripted drop in a pair's SNR (beam misalignment) until it is refined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misalignment {
    pub pair: u32,
    pub at: SimTime,
    pub penalty_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub id: u32,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub data_period: SimTime,
    /// Extra period per link index so the links' sequence numbers drift apart.
    pub data_period_step: SimTime,
    /// Frame plus turnaround until the Ack is back.
    pub airtime: SimTime,
    pub ack_timeout: SimTime,
    /// How long the helper may take to deliver a tracking field.
    pub switch_window: SimTime,
    pub probe_period: SimTime,
    pub refine_time: SimTime,
    /// Consecutive lost Data frames that declare a link blocked.
    pub miss_limit: u32,
    pub thresholds: Thresholds,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            data_period: SimTime(500),
            data_period_step: SimTime(50),
            airtime: SimTime(20),
            ack_timeout: SimTime::from_millis(1),
            switch_window: SimTime::from_millis(2),
            probe_period: SimTime::from_millis(10),
            refine_time: SimTime(200),
            miss_limit: 3,
            thresholds: Thresholds::from_eta(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingScenario {
    /// Every trained beam pair; the first `operating` ones carry data.
    pub pairs: Vec<PairSpec>,
    pub operating: usize,
    pub blockage: BlockageProcess,
    pub misalignments: Vec<Misalignment>,
    pub duration: SimTime,
    pub seed: u64,
    pub config: TrackingConfig,
}

impl TrackingScenario {
    /// Pencil-beam SNRs of the scenario's pairs at `pt_dbm`, best first.
    pub fn from_scenario(scn: &Scenario, operating: usize, pt_dbm: f64) -> Self {
        let k = scn.radio.pencil();
        let mut pairs: Vec<PairSpec> =
            scn.beam_pairs().iter().map(|bp| PairSpec { id: bp.id + 1, snr_db: snr_db(bp, pt_dbm, &k) }).collect();
        pairs.sort_by(|a, b| b.snr_db.total_cmp(&a.snr_db).then(a.id.cmp(&b.id)));
        TrackingScenario {
            pairs,
            operating,
            blockage: BlockageProcess::none(),
            misalignments: Vec::new(),
            duration: SimTime::from_millis(100),
            seed: 0,
            config: TrackingConfig::default(),
        }
    }

    pub fn n_cpair(&self) -> usize {
        self.pairs.len().saturating_sub(self.operating)
    }

    fn validate(&self) -> Result<(), TrackingError> {
        if self.operating == 0 || self.pairs.len() < self.operating {
            return Err(TrackingError::TooFewPairs { need: self.operating.max(1), got: self.pairs.len() });
        }
        self.config.thresholds.validate()?;
        for m in &self.misalignments {
            if !self.pairs.iter().any(|p| p.id == m.pair) {
                return Err(TrackingError::UnknownPair(m.pair));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Ev {
    DataTx { link: usize },
    Ack { link: usize, frame: Frame },
    DataTimeout { link: usize, frame: Frame },
    QosAck { link: usize, pair: u32, attempt: Option<usize> },
    QosTimeout { link: usize, pair: u32, attempt: Option<usize> },
    Probe { link: usize },
    RefineResponse { link: usize },
    RefineTimeout { link: usize },
    SwitchWindow { link: usize },
    BlockStart { pair: u32 },
    BlockEnd { pair: u32 },
    Misalign { pair: u32, penalty_db: f64 },
}

struct Link {
    initial_pair: u32,
    pair: u32,
    candidate_index: usize,
    status: LinkStatus,
    seq: u64,
    misses: u32,
    /// Out of service, not sending data.
    suspended: bool,
    probe: Option<u64>,
    next_data: Option<u64>,
    /// Set after a refine so a persistent degrade is not refined over and over.
    refined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    /// Waiting for the helper to deliver `CBPO = cbpo`.
    AwaitField { cbpo: usize, sent: bool },
    /// QoS Null sent on candidate `m`.
    AwaitQosAck { m: usize },
}

enum Procedure {
    Track { link: usize, helper: usize, candidates: Vec<u32>, phase: Phase, window: Option<u64> },
    Refine { link: usize, pending: Option<u64> },
}

impl Procedure {
    fn link(&self) -> usize {
        match self {
            Procedure::Track { link, .. } | Procedure::Refine { link, .. } => *link,
        }
    }
}

struct TrackingModel {
    cfg: TrackingConfig,
    snr: BTreeMap<u32, f64>,
    penalty: BTreeMap<u32, f64>,
    /// Pair order used to rank candidates.
    pair_order: Vec<u32>,
    blocked: BTreeMap<u32, Vec<(SimTime, SimTime)>>,
    immediate: bool,
    links: Vec<Link>,
    pending: BTreeSet<usize>,
    proc: Option<Procedure>,
    restorations: usize,
    field_violations: usize,
}

fn vmtx(i: usize) -> String {
    format!("vMTX{}", i + 1)
}

fn vmrx(i: usize) -> String {
    format!("vMRX{}", i + 1)
}

impl TrackingModel {
    fn is_blocked(&self, pair: u32, t: SimTime) -> bool {
        self.blocked.get(&pair).map(|v| v.iter().any(|&(s, e)| s <= t && t < e)).unwrap_or(false)
    }

    fn pair_snr(&self, pair: u32) -> f64 {
        self.snr[&pair] - self.penalty.get(&pair).copied().unwrap_or(0.0)
    }

    fn delivers(&self, pair: u32, t: SimTime) -> bool {
        !self.is_blocked(pair, t) && self.pair_snr(pair) >= self.cfg.thresholds.blocked_db
    }

    fn period(&self, link: usize) -> SimTime {
        SimTime(self.cfg.data_period.ticks() + link as u64 * self.cfg.data_period_step.ticks())
    }

    fn busy(&self) -> Option<usize> {
        self.proc.as_ref().map(Procedure::link)
    }

    fn runtime(&self, i: usize) -> LinkRuntime {
        let l = &self.links[i];
        LinkRuntime {
            pair_id: l.pair,
            status: l.status,
            role: Role::Operating,
            candidate_index: l.candidate_index,
            probe_period: self.cfg.probe_period,
        }
    }

    fn snapshot(&self) -> Vec<LinkRuntime> {
        let mut out: Vec<LinkRuntime> = (0..self.links.len()).map(|i| self.runtime(i)).collect();
        for &p in &self.pair_order {
            if !self.links.iter().any(|l| l.pair == p) {
                out.push(LinkRuntime {
                    pair_id: p,
                    status: detect_state(self.pair_snr(p), &self.cfg.thresholds, false),
                    role: Role::Candidate,
                    candidate_index: 0,
                    probe_period: self.cfg.probe_period,
                });
            }
        }
        out
    }

    fn send_data(&mut self, i: usize, ctx: &mut Context<'_, Ev>) {
        let now = ctx.now();
        self.links[i].seq += 1;
        let mut tracking = None;
        if let Some(Procedure::Track { helper, phase: Phase::AwaitField { cbpo, sent }, .. }) = &mut self.proc {
            if *helper == i && !*sent {
                if self.links[i].status == LinkStatus::Active {
                    tracking =
                        Some(TrackingFields { blocked_beam_pair_order: 1, candidate_beam_pair_order: *cbpo as u32 });
                    *sent = true;
                } else {
                    self.field_violations += 1;
                }
            }
        }
        let frame = Frame { kind: FrameKind::Data, sender: i + 1, seq: self.links[i].seq, tracking };
        ctx.note(vmtx(i), "Data", frame.details());
        if self.delivers(self.links[i].pair, now) {
            ctx.schedule_in(self.cfg.airtime, Ev::Ack { link: i, frame });
        } else {
            ctx.schedule_in(self.cfg.ack_timeout, Ev::DataTimeout { link: i, frame });
        }
        let period = self.period(i);
        self.links[i].next_data = ctx.schedule_in(period, Ev::DataTx { link: i });
    }

    fn send_qos(&mut self, i: usize, attempt: Option<usize>, ctx: &mut Context<'_, Ev>) {
        let pair = self.links[i].pair;
        let what = match attempt {
            Some(m) => format!("pair={pair} m={m}"),
            None => format!("pair={pair} probe"),
        };
        ctx.note(vmtx(i), "QoSNull", what);
        if self.delivers(pair, ctx.now()) {
            ctx.schedule_in(self.cfg.airtime, Ev::QosAck { link: i, pair, attempt });
        } else {
            ctx.schedule_in(self.cfg.ack_timeout, Ev::QosTimeout { link: i, pair, attempt });
        }
    }

    fn request(&mut self, i: usize, ctx: &mut Context<'_, Ev>) {
        if self.busy() != Some(i) {
            self.pending.insert(i);
        }
        self.try_grant(ctx);
    }

    fn try_grant(&mut self, ctx: &mut Context<'_, Ev>) {
        if self.proc.is_some() {
            return;
        }
        let reqs: Vec<Request> = self
            .pending
            .iter()
            .map(|&i| Request { link: i, pair_id: self.links[i].pair, status: self.links[i].status })
            .collect();
        self.pending.retain(|&i| self.links[i].status != LinkStatus::Active);
        if let Some(r) = arbitrate(&reqs) {
            self.pending.remove(&r.link);
            match r.status {
                LinkStatus::Degraded => self.start_refine(r.link, ctx),
                LinkStatus::Blocked => self.start_track(r.link, ctx),
                LinkStatus::Active => unreachable!("arbitrate skips active links"),
            }
        }
    }

    fn pick_helper(&self, blocked: usize) -> Option<usize> {
        (0..self.links.len())
            .filter(|&i| i != blocked)
            .filter(|&i| {
                let l = &self.links[i];
                l.status == LinkStatus::Active && !l.suspended && l.misses == 0
            })
            .max_by(|&a, &b| {
                let (pa, pb) = (self.links[a].pair, self.links[b].pair);
                self.pair_snr(pa).total_cmp(&self.pair_snr(pb)).then(pb.cmp(&pa))
            })
    }

    fn start_probing(&mut self, i: usize, ctx: &mut Context<'_, Ev>) {
        if self.links[i].probe.is_none() {
            let period = self.cfg.probe_period;
            self.links[i].probe = ctx.schedule_in(period, Ev::Probe { link: i });
        }
    }

    fn start_track(&mut self, b: usize, ctx: &mut Context<'_, Ev>) {
        let blocked = self.runtime(b);
        check_track(&blocked, None, self.busy()).expect("track granted to a blocked link while idle");
        let in_use: BTreeSet<u32> = self.links.iter().map(|l| l.pair).collect();
        let candidates: Vec<u32> = self.pair_order.iter().copied().filter(|p| !in_use.contains(p)).collect();
        ctx.note("MTX", "TRACK_START", format!("{} n_cpair={}", vmtx(b), candidates.len()));
        if candidates.is_empty() {
            ctx.note("MTX", "TRACK_END", format!("{} result=probing reason=no_candidates", vmtx(b)));
            self.start_probing(b, ctx);
            self.try_grant(ctx);
            return;
        }
        let Some(helper) = self.pick_helper(b) else {
            ctx.note("MTX", "TRACK_END", format!("{} result=probing reason=no_helper", vmtx(b)));
            self.start_probing(b, ctx);
            self.try_grant(ctx);
            return;
        };
        debug_assert!(check_track(&blocked, Some(&self.runtime(helper)), None).is_ok());
        ctx.note("MTX", "HELPER", format!("{} helps {}", vmtx(helper), vmtx(b)));
        let window = ctx.schedule_in(self.cfg.switch_window, Ev::SwitchWindow { link: b });
        self.proc = Some(Procedure::Track {
            link: b,
            helper,
            candidates,
            phase: Phase::AwaitField { cbpo: 1, sent: false },
            window,
        });
    }

    fn finish(&mut self, ctx: &mut Context<'_, Ev>) {
        self.proc = None;
        self.try_grant(ctx);
    }

    fn abort_track(&mut self, reason: &str, ctx: &mut Context<'_, Ev>) {
        if let Some(Procedure::Track { link, window, .. }) = self.proc.take() {
            if let Some(w) = window {
                ctx.cancel(w);
            }
            let l = &mut self.links[link];
            l.pair = l.initial_pair;
            l.candidate_index = 0;
            ctx.note("MTX", "TRACK_ABORT", format!("{} reason={reason}", vmtx(link)));
            ctx.note("MTX", "TRACK_END", format!("{} result=aborted", vmtx(link)));
            if self.links[link].suspended && self.links[link].probe.is_none() {
                self.pending.insert(link);
            }
            self.finish(ctx);
        }
    }

    fn start_refine(&mut self, d: usize, ctx: &mut Context<'_, Ev>) {
        check_refine(&self.runtime(d), self.busy()).expect("refine granted to a degraded link while idle");
        ctx.note("MTX", "REFINE_START", vmtx(d));
        let frame = Frame { kind: FrameKind::Refine, sender: d + 1, seq: self.links[d].seq, tracking: None };
        ctx.note(vmtx(d), "Refine", format!("request {}", frame.details()));
        let pending = if self.delivers(self.links[d].pair, ctx.now()) {
            ctx.schedule_in(self.cfg.refine_time, Ev::RefineResponse { link: d })
        } else {
            ctx.schedule_in(self.cfg.ack_timeout, Ev::RefineTimeout { link: d })
        };
        self.proc = Some(Procedure::Refine { link: d, pending });
    }

    /// Takes link `i` out of service and queues or escalates its recovery.
    fn mark_blocked(&mut self, i: usize, reason: &str, ctx: &mut Context<'_, Ev>) {
        if self.links[i].suspended {
            return;
        }
        let l = &mut self.links[i];
        l.status = LinkStatus::Blocked;
        l.suspended = true;
        l.initial_pair = l.pair;
        l.candidate_index = 0;
        if let Some(seq) = l.next_data.take() {
            ctx.cancel(seq);
        }
        ctx.note(vmtx(i), "BLOCKED", format!("pair={} reason={reason}", self.links[i].pair));
        match &self.proc {
            Some(Procedure::Refine { link, pending }) if *link == i => {
                if let Some(p) = *pending {
                    ctx.cancel(p);
                }
                ctx.note("MTX", "ESCALATE", format!("{} refine->track", vmtx(i)));
                ctx.note("MTX", "REFINE_END", format!("{} result=escalated", vmtx(i)));
                self.proc = None;
                self.start_track(i, ctx);
            }
            Some(Procedure::Track { helper, .. }) if *helper == i => {
                self.abort_track("helper_blocked", ctx);
                self.request(i, ctx);
            }
            _ => self.request(i, ctx),
        }
    }

    fn restore(&mut self, i: usize, ctx: &mut Context<'_, Ev>) {
        let now = ctx.now();
        let snr = self.pair_snr(self.links[i].pair);
        let blocked_now = self.is_blocked(self.links[i].pair, now);
        let l = &mut self.links[i];
        l.suspended = false;
        l.misses = 0;
        if let Some(p) = l.probe.take() {
            ctx.cancel(p);
        }
        l.status = detect_state(snr, &self.cfg.thresholds, blocked_now);
        l.refined = false;
        l.next_data = ctx.schedule_in(self.cfg.airtime, Ev::DataTx { link: i });
        self.restorations += 1;
        ctx.note(
            vmtx(i),
            "RESTORED",
            format!(
                "pair={} m={} status={:?}",
                self.links[i].pair, self.links[i].candidate_index, self.links[i].status
            ),
        );
        if self.links[i].status == LinkStatus::Degraded {
            self.pending.insert(i);
        }
    }

    /// Re-derives a serving link's status after an Ack.
    fn reassess(&mut self, i: usize, ctx: &mut Context<'_, Ev>) {
        let snr = self.pair_snr(self.links[i].pair);
        let new = detect_state(snr, &self.cfg.thresholds, false);
        let old = self.links[i].status;
        if new == old || new == LinkStatus::Blocked {
            // a blocked-by-SNR link loses its Data frames and is caught by the miss counter
            return;
        }
        self.links[i].status = new;
        ctx.note(vmrx(i), "STATUS", format!("{old:?}->{new:?} snr={snr:.2}"));
        if new == LinkStatus::Degraded {
            if let Some(Procedure::Track { helper, .. }) = &self.proc {
                if *helper == i {
                    self.abort_track("helper_degraded", ctx);
                }
            }
            if !self.links[i].refined {
                self.request(i, ctx);
            }
        }
    }
}

impl Model for TrackingModel {
    type Event = Ev;

    fn describe(&self, ev: &Ev) -> Option<(String, String, String)> {
        match ev {
            Ev::Ack { link, frame } => Some((vmrx(*link), "Ack".into(), format!("seq={}", frame.seq))),
            Ev::DataTimeout { link, frame } => Some((vmtx(*link), "ACK_TIMEOUT".into(), format!("seq={}", frame.seq))),
            Ev::QosAck { link, pair, .. } => Some((vmrx(*link), "Ack".into(), format!("QoSNull pair={pair}"))),
            Ev::QosTimeout { link, pair, .. } => {
                Some((vmtx(*link), "ACK_TIMEOUT".into(), format!("QoSNull pair={pair}")))
            }
            Ev::RefineResponse { link } => Some((vmrx(*link), "Refine".into(), "response".into())),
            Ev::RefineTimeout { link } => Some((vmtx(*link), "REFINE_TIMEOUT".into(), String::new())),
            Ev::BlockStart { pair } => Some(("env".into(), "BLOCK_START".into(), format!("pair={pair}"))),
            Ev::BlockEnd { pair } => Some(("env".into(), "BLOCK_END".into(), format!("pair={pair}"))),
            Ev::Misalign { pair, penalty_db } => {
                Some(("env".into(), "MISALIGN".into(), format!("pair={pair} penalty_db={penalty_db}")))
            }
            Ev::DataTx { .. } | Ev::Probe { .. } | Ev::SwitchWindow { .. } => None,
        }
    }

    fn handle(&mut self, ev: Ev, ctx: &mut Context<'_, Ev>) {
        match ev {
            Ev::DataTx { link } => {
                if !self.links[link].suspended {
                    self.send_data(link, ctx);
                }
            }
            Ev::Ack { link, frame } => {
                if self.links[link].suspended {
                    return;
                }
                self.links[link].misses = 0;
                if let (Some(f), Some(Procedure::Track { helper, phase: Phase::AwaitField { cbpo, sent: true }, .. })) =
                    (frame.tracking, &self.proc)
                {
                    if *helper == link && f.candidate_beam_pair_order as usize == *cbpo {
                        self.field_delivered(ctx);
                    }
                }
                self.reassess(link, ctx);
            }
            Ev::DataTimeout { link, frame } => {
                if frame.tracking.is_some() {
                    if let Some(Procedure::Track { helper, .. }) = &self.proc {
                        if *helper == link {
                            self.abort_track("helper_lost", ctx);
                        }
                    }
                }
                if self.links[link].suspended {
                    return;
                }
                self.links[link].misses += 1;
                if self.links[link].misses >= self.cfg.miss_limit {
                    self.mark_blocked(link, "missed_acks", ctx);
                }
            }
            Ev::QosAck { link, pair, attempt } => match attempt {
                Some(m) => {
                    let ours = matches!(&self.proc, Some(Procedure::Track { link: b, phase: Phase::AwaitQosAck { m: pm }, .. })
                        if *b == link && *pm == m);
                    if ours && self.links[link].pair == pair {
                        self.restore(link, ctx);
                        ctx.note("MTX", "TRACK_END", format!("{} result=restored m={m}", vmtx(link)));
                        self.finish(ctx);
                    }
                }
                None => {
                    if self.links[link].suspended && self.links[link].probe.is_some() {
                        self.restore(link, ctx);
                        self.try_grant(ctx);
                    }
                }
            },
            Ev::QosTimeout { link, attempt: Some(m), .. } => {
                let n_cand = match &self.proc {
                    Some(Procedure::Track { link: b, phase: Phase::AwaitQosAck { m: pm }, candidates, .. })
                        if *b == link && *pm == m =>
                    {
                        candidates.len()
                    }
                    _ => return,
                };
                let next = if m < n_cand { m + 1 } else { 0 };
                let window = ctx.schedule_in(self.cfg.switch_window, Ev::SwitchWindow { link });
                if let Some(Procedure::Track { phase, window: w, .. }) = &mut self.proc {
                    *phase = Phase::AwaitField { cbpo: next, sent: false };
                    *w = window;
                }
            }
            Ev::QosTimeout { attempt: None, .. } => {}
            Ev::Probe { link } => {
                if self.links[link].suspended && self.links[link].probe.is_some() {
                    let period = self.cfg.probe_period;
                    self.links[link].probe = ctx.schedule_in(period, Ev::Probe { link });
                    self.send_qos(link, None, ctx);
                }
            }
            Ev::SwitchWindow { link } => {
                if matches!(&self.proc, Some(Procedure::Track { link: b, phase: Phase::AwaitField { .. }, .. }) if *b == link)
                {
                    if let Some(Procedure::Track { window, .. }) = &mut self.proc {
                        *window = None;
                    }
                    self.abort_track("switch_window", ctx);
                }
            }
            Ev::RefineResponse { link } => {
                if !matches!(&self.proc, Some(Procedure::Refine { link: d, .. }) if *d == link) {
                    return;
                }
                let pair = self.links[link].pair;
                if self.is_blocked(pair, ctx.now()) {
                    self.mark_blocked(link, "refine", ctx);
                    return;
                }
                self.penalty.remove(&pair);
                let snr = self.pair_snr(pair);
                let status = detect_state(snr, &self.cfg.thresholds, false);
                self.links[link].status = status;
                self.links[link].refined = true;
                ctx.note("MTX", "REFINE_END", format!("{} result={status:?} snr={snr:.2}", vmtx(link)));
                self.finish(ctx);
            }
            Ev::RefineTimeout { link } => {
                if matches!(&self.proc, Some(Procedure::Refine { link: d, .. }) if *d == link) {
                    self.mark_blocked(link, "refine", ctx);
                }
            }
            Ev::BlockStart { pair } => {
                if !self.immediate {
                    return;
                }
                if let Some(i) = self.links.iter().position(|l| l.pair == pair && !l.suspended) {
                    self.mark_blocked(i, "blockage", ctx);
                }
            }
            Ev::BlockEnd { .. } => {}
            Ev::Misalign { pair, penalty_db } => {
                *self.penalty.entry(pair).or_insert(0.0) += penalty_db;
                if let Some(i) = self.links.iter().position(|l| l.pair == pair) {
                    self.links[i].refined = false;
                }
            }
        }
    }
}

impl TrackingModel {
    /// The helper's frame carrying the current tracking field was acked.
    fn field_delivered(&mut self, ctx: &mut Context<'_, Ev>) {
        let Some(Procedure::Track { link: b, candidates, phase, window, .. }) = &mut self.proc else {
            return;
        };
        let Phase::AwaitField { cbpo, .. } = *phase else {
            return;
        };
        let b = *b;
        if let Some(w) = window.take() {
            ctx.cancel(w);
        }
        if cbpo == 0 {
            let l = &mut self.links[b];
            l.pair = l.initial_pair;
            l.candidate_index = 0;
            ctx.note("MTX", "REVERT", format!("{} pair={}", vmtx(b), self.links[b].pair));
            ctx.note("MTX", "TRACK_END", format!("{} result=probing", vmtx(b)));
            self.start_probing(b, ctx);
            self.finish(ctx);
            return;
        }
        let pair = candidates[cbpo - 1];
        *phase = Phase::AwaitQosAck { m: cbpo };
        self.links[b].pair = pair;
        self.links[b].candidate_index = cbpo;
        ctx.note("MTX", "SWITCH", format!("{} m={cbpo} pair={pair}", vmtx(b)));
        self.send_qos(b, Some(cbpo), ctx);
    }
}

#[derive(Debug, Clone)]
pub struct TrackingReport {
    pub trace: EventTrace,
    pub links: Vec<LinkRuntime>,
    pub restorations: usize,
    /// Tracking fields that would have ridden on a non-Active helper.
    pub field_violations: usize,
}

/// Runs a tracking scenario to its duration.
pub fn run_tracking(scn: &TrackingScenario) -> Result<TrackingReport, TrackingError> {
    scn.validate()?;
    let ids: Vec<u32> = scn.pairs.iter().map(|p| p.id).collect();
    let intervals = scn.blockage.materialize(&ids, scn.duration, scn.seed)?;
    let mut blocked: BTreeMap<u32, Vec<(SimTime, SimTime)>> = BTreeMap::new();
    let mut queue = EventQueue::new();
    for iv in &intervals {
        blocked.entry(iv.pair).or_default().push((iv.start, iv.end));
        queue.schedule(iv.start, Ev::BlockStart { pair: iv.pair })?;
        queue.schedule(iv.end, Ev::BlockEnd { pair: iv.pair })?;
    }
    for m in &scn.misalignments {
        queue.schedule(m.at, Ev::Misalign { pair: m.pair, penalty_db: m.penalty_db })?;
    }
    let cfg = scn.config.clone();
    let links: Vec<Link> = scn.pairs[..scn.operating]
        .iter()
        .map(|p| Link {
            initial_pair: p.id,
            pair: p.id,
            candidate_index: 0,
            status: detect_state(p.snr_db, &cfg.thresholds, false),
            seq: 0,
            misses: 0,
            suspended: false,
            probe: None,
            next_data: None,
            refined: false,
        })
        .collect();
    for i in 0..links.len() {
        let first = SimTime(cfg.data_period.ticks() + i as u64 * cfg.data_period_step.ticks());
        queue.schedule(first, Ev::DataTx { link: i })?;
    }
    let mut model = TrackingModel {
        snr: scn.pairs.iter().map(|p| (p.id, p.snr_db)).collect(),
        penalty: BTreeMap::new(),
        pair_order: ids,
        blocked,
        immediate: scn.blockage.is_scripted(),
        links,
        pending: BTreeSet::new(),
        proc: None,
        restorations: 0,
        field_violations: 0,
        cfg,
    };
    let trace = run_until(&mut queue, &mut model, scn.duration)?;
    Ok(TrackingReport {
        links: model.snapshot(),
        trace,
        restorations: model.restorations,
        field_violations: model.field_violations,
    })
}

/// Trace kinds that belong to a tracking or refine procedure.
pub const PROCEDURE_KINDS: [&str; 10] = [
    "TRACK_START",
    "TRACK_END",
    "TRACK_ABORT",
    "HELPER",
    "SWITCH",
    "REVERT",
    "REFINE_START",
    "REFINE_END",
    "ESCALATE",
    "QoSNull",
];

/// Checks that procedures never overlap: every START comes while idle and
/// is closed by an END for the same link.
pub fn check_single_procedure(trace: &EventTrace) -> Result<(), String> {
    let mut running: Option<String> = None;
    for e in trace.iter() {
        let subject = e.details.split_whitespace().next().unwrap_or("").to_string();
        match e.kind.as_str() {
            "TRACK_START" | "REFINE_START" => {
                if let Some(r) = &running {
                    return Err(format!("{} {} while {r} is running: {e}", e.kind, subject));
                }
                running = Some(subject);
            }
            "TRACK_END" | "REFINE_END" => match &running {
                Some(r) if *r == subject => running = None,
                _ => return Err(format!("unmatched {}: {e}", e.kind)),
            },
            _ => {}
        }
    }
    Ok(())
}

/// Checks that candidate orders sent within each procedure run 1, 2, ... with
/// no repeats and that 0 only ever comes last.
pub fn check_candidate_order(trace: &EventTrace) -> Result<(), String> {
    let mut last: Option<u32> = None;
    for e in trace.iter() {
        match e.kind.as_str() {
            "TRACK_START" => last = Some(0),
            "Data" => {
                if let Some(pos) = e.details.find("CBPO=") {
                    let m: u32 = e.details[pos + 5..].trim().parse().map_err(|_| format!("bad field: {e}"))?;
                    let prev = last.ok_or_else(|| format!("field outside a procedure: {e}"))?;
                    if prev == u32::MAX {
                        return Err(format!("field after revert: {e}"));
                    }
                    if m == 0 {
                        last = Some(u32::MAX);
                    } else if m != prev + 1 {
                        return Err(format!("candidate {m} after {prev}: {e}"));
                    } else {
                        last = Some(m);
                    }
                }
            }
            "TRACK_END" => last = None,
            _ => {}
        }
    }
    Ok(())
}

fn base_pairs(n_pairs: usize) -> Vec<PairSpec> {
    // link 3 has the best SNR so it serves as helper
    let snrs = [20.0, 18.0, 25.0, 15.0, 12.0, 11.0, 10.0, 9.0];
    (0..n_pairs).map(|i| PairSpec { id: i as u32 + 1, snr_db: snrs[i % snrs.len()] }).collect()
}

/// Three operating links, two candidates. vMTX2 degrades at 3 ms and is
/// refined; vMTX1 is blocked from 5 ms on, candidate 1 is clear.
pub fn fig6_script() -> TrackingScenario {
    TrackingScenario {
        pairs: base_pairs(5),
        operating: 3,
        blockage: BlockageProcess::scripted(vec![BlockInterval {
            pair: 1,
            start: SimTime::from_millis(5),
            end: SimTime::from_millis(60),
        }]),
        misalignments: vec![Misalignment { pair: 2, at: SimTime::from_millis(3), penalty_db: 15.0 }],
        duration: SimTime::from_millis(20),
        seed: 0,
        config: TrackingConfig::default(),
    }
}

/// Like [`fig6_script`] without the degrade, with candidate 1 blocked too.
pub fn second_candidate_script() -> TrackingScenario {
    let mut s = fig6_script();
    s.misalignments.clear();
    s.blockage = BlockageProcess::scripted(vec![
        BlockInterval { pair: 1, start: SimTime::from_millis(5), end: SimTime::from_millis(60) },
        BlockInterval { pair: 4, start: SimTime::from_millis(5), end: SimTime::from_millis(60) },
    ]);
    s
}

/// Both candidates blocked: revert with CBPO=0, then probe until the
/// initial pair clears at 40 ms.
pub fn all_candidates_blocked_script() -> TrackingScenario {
    let mut s = fig6_script();
    s.misalignments.clear();
    s.blockage = BlockageProcess::scripted(vec![
        BlockInterval { pair: 1, start: SimTime::from_millis(5), end: SimTime::from_millis(40) },
        BlockInterval { pair: 4, start: SimTime::from_millis(5), end: SimTime::from_millis(60) },
        BlockInterval { pair: 5, start: SimTime::from_millis(5), end: SimTime::from_millis(60) },
    ]);
    s.duration = SimTime::from_millis(60);
    s
}

/// No candidates (N_pair = N): the blocked link only probes.
pub fn no_candidate_script() -> TrackingScenario {
    let mut s = all_candidates_blocked_script();
    s.pairs = base_pairs(3);
    s.blockage = BlockageProcess::scripted(vec![BlockInterval {
        pair: 1,
        start: SimTime::from_millis(5),
        end: SimTime::from_millis(200),
    }]);
    s
}

/// Every operating pair blocked at once; nobody can help.
pub fn all_links_blocked_script() -> TrackingScenario {
    let mut s = fig6_script();
    s.misalignments.clear();
    s.pairs = base_pairs(3);
    s.blockage = BlockageProcess::scripted(
        (1..=3)
            .map(|p| BlockInterval { pair: p, start: SimTime::from_millis(5), end: SimTime::from_millis(200) })
            .collect(),
    );
    s.duration = SimTime::from_millis(60);
    s
}

/// Randomized blockage scenario used for the safety sweep.
pub fn random_scenario(seed: u64) -> TrackingScenario {
    let mut rng = RngStream::new(seed, "tracking.random");
    let r = rng.rng();
    let operating = r.gen_range(2..=4);
    let n_pairs = operating + r.gen_range(0..=3);
    let pairs: Vec<PairSpec> =
        (0..n_pairs).map(|i| PairSpec { id: i as u32 + 1, snr_db: r.gen_range(3.0..30.0) }).collect();
    let mode = if r.gen_bool(0.5) {
        BlockageMode::Bernoulli { p: r.gen_range(0.05..0.5), epoch: SimTime(r.gen_range(1_000..8_000)) }
    } else {
        BlockageMode::OnOff {
            mean_blocked: SimTime(r.gen_range(1_000..20_000)),
            mean_clear: SimTime(r.gen_range(2_000..40_000)),
        }
    };
    let independent = r.gen_bool(0.8);
    let misalignments = (0..r.gen_range(0..3))
        .map(|_| Misalignment {
            pair: r.gen_range(1..=n_pairs as u32),
            at: SimTime(r.gen_range(0..80_000)),
            penalty_db: r.gen_range(1.0..20.0),
        })
        .collect();
    TrackingScenario {
        pairs,
        operating,
        blockage: BlockageProcess { mode, independent },
        misalignments,
        duration: SimTime::from_millis(100),
        seed,
        config: TrackingConfig::default(),
    }
}
