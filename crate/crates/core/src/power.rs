//! Multi-beam power allocation over a set of T-R beam pairs.
//!
//! In the pencil-beam regime every link is interference free, so a pair is
//! summarised by its SNR per milliwatt of transmit power at the narrowest
//! allowed beamwidths. On top of that sit the per-link optimum, the
//! priority (PPA) and average (APA) allocators, and an exhaustive grid
//! search used to check both.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    db_to_lin, dbm_to_mw, lin_to_db, link_rate_from_linear, main_lobe_gain, noise_power_mw, BeamPair, RadioConstants,
};

/// Largest pair set the exhaustive oracle accepts.
pub const ORACLE_MAX_PAIRS: usize = 6;
/// Minimum number of geometric power levels per beam in the oracle grid.
pub const ORACLE_MIN_GRID: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("oracle supports at most {cap} pairs, got {n}")]
    OracleTooLarge { n: usize, cap: usize },
    #[error("oracle grid needs at least {min} levels, got {got}")]
    GridTooCoarse { got: usize, min: usize },
    #[error("invalid power budget: {0}")]
    Budget(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// Per-beam cap, dBm.
    pub p_max_dbm: f64,
    /// Transmitter total cap, dBm.
    pub total_max_dbm: f64,
    pub n_max: usize,
    /// Admission threshold, dB.
    pub eta_db: f64,
}

impl Default for PowerBudget {
    fn default() -> Self {
        PowerBudget { p_max_dbm: 3.0, total_max_dbm: 9.0, n_max: 10, eta_db: 0.0 }
    }
}

impl PowerBudget {
    pub fn validate(&self) -> Result<(), PowerError> {
        if self.n_max < 1 {
            return Err(PowerError::Budget("n_max must be at least 1"));
        }
        if self.p_max_mw() > self.total_max_mw() {
            return Err(PowerError::Budget("per-beam cap exceeds the total cap"));
        }
        Ok(())
    }

    pub fn p_max_mw(&self) -> f64 {
        dbm_to_mw(self.p_max_dbm)
    }

    pub fn total_max_mw(&self) -> f64 {
        dbm_to_mw(self.total_max_dbm)
    }

    pub fn with_eta(&self, eta_db: f64) -> Self {
        PowerBudget { eta_db, ..self.clone() }
    }

    /// `(floor, ceil)` of `P_max / p_max`. Ratios within 1e-9 of an integer
    /// count as that integer, so a zero-power remainder link never appears.
    pub fn power_ratio_bounds(&self) -> (usize, usize) {
        let ratio = self.total_max_mw() / self.p_max_mw();
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * ratio {
            (nearest as usize, nearest as usize)
        } else {
            (ratio.floor() as usize, ratio.ceil() as usize)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamwidthBounds {
    pub xi_t_min: f64,
    pub xi_t_max: f64,
    pub xi_r_min: f64,
    pub xi_r_max: f64,
}

impl BeamwidthBounds {
    pub fn fixed(xi_t: f64, xi_r: f64) -> Self {
        BeamwidthBounds { xi_t_min: xi_t, xi_t_max: xi_t, xi_r_min: xi_r, xi_r_max: xi_r }
    }

    pub fn is_valid(&self) -> bool {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= hi && hi <= 2.0 * PI;
        ok(self.xi_t_min, self.xi_t_max) && ok(self.xi_r_min, self.xi_r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Ppa,
    Apa,
    Oracle,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Ppa => "ppa",
            Policy::Apa => "apa",
            Policy::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub policy: Policy,
    /// Chosen pair ids, best link first.
    pub chosen: Vec<u32>,
    pub pt_mw: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub rate_bps: f64,
    /// Set when not even the best pair clears the threshold.
    pub infeasible: bool,
    /// Passes of the allocator's main loop.
    pub iterations: usize,
}

impl Allocation {
    fn empty(policy: Policy, iterations: usize) -> Self {
        Allocation {
            policy,
            chosen: Vec::new(),
            pt_mw: Vec::new(),
            snr_db: Vec::new(),
            rate_bps: 0.0,
            infeasible: true,
            iterations,
        }
    }

    pub fn total_power_mw(&self) -> f64 {
        self.pt_mw.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// Checks the per-beam cap, the total cap, strict positivity, the
    /// threshold and the link count against `budget`.
    pub fn is_feasible_under(&self, budget: &PowerBudget, n_pair: usize) -> bool {
        let tol = 1e-9;
        let p = budget.p_max_mw();
        let total = budget.total_max_mw();
        self.chosen.len() <= n_pair.min(budget.n_max)
            && self.pt_mw.iter().all(|&x| x > 0.0 && x <= p * (1.0 + tol))
            && self.total_power_mw() <= total * (1.0 + tol)
            && self.snr_db.iter().all(|&s| s >= budget.eta_db)
    }
}

/// A pair with its pencil-beam SNR per milliwatt.
#[derive(Debug, Clone, Copy)]
struct RankedPair {
    id: u32,
    gain: f64,
}

/// Linear SNR per mW of transmit power at the narrowest beamwidths, side
/// lobes neglected.
pub fn pencil_gain(pair: &BeamPair, bounds: &BeamwidthBounds, k: &RadioConstants) -> f64 {
    let gt = 2.0 * PI / bounds.xi_t_min;
    let gr = 2.0 * PI / bounds.xi_r_min;
    gt * gr / db_to_lin(pair.loss_db(k)) / noise_power_mw(k)
}

/// Pairs sorted by decreasing pencil-beam gain, lower id first on ties.
fn rank(pairs: &[BeamPair], bounds: &BeamwidthBounds, k: &RadioConstants) -> Vec<RankedPair> {
    let mut ranked: Vec<RankedPair> =
        pairs.iter().map(|p| RankedPair { id: p.id, gain: pencil_gain(p, bounds, k) }).collect();
    ranked.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.id.cmp(&b.id)));
    ranked
}

fn meets(snr_lin: f64, eta_db: f64) -> bool {
    lin_to_db(snr_lin) >= eta_db
}

fn build(policy: Policy, links: &[(RankedPair, f64)], bandwidth_hz: f64, iterations: usize) -> Allocation {
    if links.is_empty() {
        return Allocation::empty(policy, iterations);
    }
    let mut rate = 0.0;
    let mut chosen = Vec::with_capacity(links.len());
    let mut pt_mw = Vec::with_capacity(links.len());
    let mut snr_db = Vec::with_capacity(links.len());
    for (pair, pt) in links {
        let snr = pt * pair.gain;
        rate += link_rate_from_linear(bandwidth_hz, snr);
        chosen.push(pair.id);
        pt_mw.push(*pt);
        snr_db.push(lin_to_db(snr));
    }
    Allocation { policy, chosen, pt_mw, snr_db, rate_bps: rate, infeasible: false, iterations }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkOptimum {
    pub pt_mw: f64,
    pub xi_t: f64,
    pub xi_r: f64,
    pub snr_db: f64,
    pub rate_bps: f64,
}

/// Best single-link operating point with pencil beams: full per-beam power
/// and the narrowest beams on both sides.
pub fn prop1_link_optimum(
    pair: &BeamPair,
    budget: &PowerBudget,
    bounds: &BeamwidthBounds,
    k: &RadioConstants,
) -> LinkOptimum {
    let pt = budget.p_max_mw();
    let snr = pt * pencil_gain(pair, bounds, k);
    LinkOptimum {
        pt_mw: pt,
        xi_t: bounds.xi_t_min,
        xi_r: bounds.xi_r_min,
        snr_db: lin_to_db(snr),
        rate_bps: link_rate_from_linear(k.bandwidth_hz, snr),
    }
}

/// Priority power allocation.
///
/// Pairs whose full-power SNR misses the threshold are dropped first. The
/// best `floor(P_max/p_max)` of the rest get `p_max`; if the next pair can
/// still clear the threshold on the leftover power it is added with that
/// remainder.
pub fn ppa_allocate(
    pairs: &[BeamPair],
    budget: &PowerBudget,
    bounds: &BeamwidthBounds,
    k: &RadioConstants,
) -> Allocation {
    let p = budget.p_max_mw();
    let admissible: Vec<RankedPair> =
        rank(pairs, bounds, k).into_iter().filter(|r| meets(p * r.gain, budget.eta_db)).collect();
    if admissible.is_empty() {
        return Allocation::empty(Policy::Ppa, 1);
    }
    let limit = admissible.len().min(budget.n_max);
    let (floor, ceil) = budget.power_ratio_bounds();
    let full = |n: usize| admissible[..n].iter().map(|r| (*r, p)).collect::<Vec<_>>();

    let links = if floor >= limit {
        full(limit)
    } else if ceil == floor {
        full(floor)
    } else {
        let w = admissible[floor];
        let remainder = budget.total_max_mw() - floor as f64 * p;
        let mut links = full(floor);
        if remainder > 0.0 && meets(remainder * w.gain, budget.eta_db) {
            links.push((w, remainder));
        }
        links
    };
    build(Policy::Ppa, &links, k.bandwidth_hz, 1)
}

/// Average power allocation: split the total evenly (capped at `p_max`)
/// over the best `min(N_pair, N_max)` pairs and drop the worst link until
/// every remaining one clears the threshold.
pub fn apa_allocate(
    pairs: &[BeamPair],
    budget: &PowerBudget,
    bounds: &BeamwidthBounds,
    k: &RadioConstants,
) -> Allocation {
    let mut active = rank(pairs, bounds, k);
    active.truncate(budget.n_max);
    let mut iterations = 0;
    while !active.is_empty() {
        iterations += 1;
        let pt = (budget.total_max_mw() / active.len() as f64).min(budget.p_max_mw());
        // equal powers: the worst link is the last in rank order
        let worst = active.last().expect("non-empty");
        if !meets(pt * worst.gain, budget.eta_db) {
            active.pop();
            continue;
        }
        let links: Vec<_> = active.iter().map(|r| (*r, pt)).collect();
        return build(Policy::Apa, &links, k.bandwidth_hz, iterations);
    }
    Allocation::empty(Policy::Apa, iterations)
}

pub fn allocate(
    policy: Policy,
    pairs: &[BeamPair],
    budget: &PowerBudget,
    bounds: &BeamwidthBounds,
    k: &RadioConstants,
) -> Result<Allocation, PowerError> {
    match policy {
        Policy::Ppa => Ok(ppa_allocate(pairs, budget, bounds, k)),
        Policy::Apa => Ok(apa_allocate(pairs, budget, bounds, k)),
        Policy::Oracle => oracle_allocate(pairs, budget, bounds, k, ORACLE_MIN_GRID),
    }
}

/// Power levels tried by the oracle for every beam, descending.
///
/// Geometric spacing between `0.01 p_max` and `p_max`, plus the PPA
/// remainder and every APA equal-split value so that both closed forms are
/// grid points.
pub fn oracle_grid(budget: &PowerBudget, steps: usize, n_pair: usize) -> Vec<f64> {
    let p = budget.p_max_mw();
    let total = budget.total_max_mw();
    let lo = 0.01 * p;
    let mut levels: Vec<f64> = (0..steps).map(|i| lo * (p / lo).powf(i as f64 / (steps - 1) as f64)).collect();
    levels.push(p);
    let (floor, _) = budget.power_ratio_bounds();
    let remainder = total - floor as f64 * p;
    if remainder > 0.0 && remainder < p {
        levels.push(remainder);
    }
    for n in 1..=n_pair.max(1) {
        let share = total / n as f64;
        if share <= p {
            levels.push(share);
        }
    }
    levels.retain(|x| *x > 0.0 && *x <= p);
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    levels
}

struct Search<'a> {
    ranked: &'a [RankedPair],
    levels: &'a [f64],
    limit: usize,
    total: f64,
    eta_db: f64,
    bandwidth_hz: f64,
    /// Linear side-lobe coupling; zero in the pencil-beam regime.
    leak: Option<SideLobes>,
    current: Vec<(usize, f64)>,
    best_rate: f64,
    best: Vec<(usize, f64)>,
}

/// Interference model for `z > 0`: link `i` sees `sum_j p_j * z * g_r / (L_i P_N)`.
struct SideLobes {
    /// `z * g_r / (L_i * P_N)` per ranked pair.
    coupling: Vec<f64>,
}

impl Search<'_> {
    fn rate_of(&self, pt: f64, gain: f64) -> f64 {
        link_rate_from_linear(self.bandwidth_hz, pt * gain)
    }

    fn upper_bound(&self, from: usize, budget_left: f64, slots_left: usize) -> f64 {
        let cap = self.levels[0].min(budget_left);
        let mut tail: Vec<f64> = self.ranked[from..].iter().map(|r| self.rate_of(cap, r.gain)).collect();
        tail.sort_by(|a, b| b.total_cmp(a));
        tail.iter().take(slots_left).sum()
    }

    fn leaf_rate(&self) -> Option<f64> {
        let mut rate = 0.0;
        for &(i, pt) in &self.current {
            let snr = match &self.leak {
                None => pt * self.ranked[i].gain,
                Some(sl) => {
                    let others: f64 = self.current.iter().filter(|(j, _)| *j != i).map(|(_, q)| q).sum();
                    pt * self.ranked[i].gain / (1.0 + others * sl.coupling[i])
                }
            };
            if !meets(snr, self.eta_db) {
                return None;
            }
            rate += link_rate_from_linear(self.bandwidth_hz, snr);
        }
        Some(rate)
    }

    fn visit(&mut self, idx: usize, used: f64, acc: f64) {
        if idx == self.ranked.len() || self.current.len() == self.limit {
            if self.current.is_empty() {
                return;
            }
            let rate = match self.leak {
                None => acc,
                Some(_) => match self.leaf_rate() {
                    Some(r) => r,
                    None => return,
                },
            };
            if rate > self.best_rate {
                self.best_rate = rate;
                self.best = self.current.clone();
            }
            return;
        }
        let left = self.total - used;
        if acc + self.upper_bound(idx, left, self.limit - self.current.len()) <= self.best_rate {
            return;
        }
        let gain = self.ranked[idx].gain;
        for li in 0..self.levels.len() {
            let pt = self.levels[li];
            if pt > left * (1.0 + 1e-12) {
                continue;
            }
            if !meets(pt * gain, self.eta_db) {
                // levels descend, so no lower one clears the threshold either
                break;
            }
            self.current.push((idx, pt));
            let r = self.rate_of(pt, gain);
            self.visit(idx + 1, used + pt, acc + r);
            self.current.pop();
        }
        self.visit(idx + 1, used, acc);
    }
}

/// Exhaustive search over subsets and per-beam grid powers for the
/// rate-maximising feasible allocation. With `z > 0` the side-lobe SINR is
/// used for the rate and the threshold.
pub fn oracle_allocate(
    pairs: &[BeamPair],
    budget: &PowerBudget,
    bounds: &BeamwidthBounds,
    k: &RadioConstants,
    grid_steps: usize,
) -> Result<Allocation, PowerError> {
    if pairs.len() > ORACLE_MAX_PAIRS {
        return Err(PowerError::OracleTooLarge { n: pairs.len(), cap: ORACLE_MAX_PAIRS });
    }
    if grid_steps < ORACLE_MIN_GRID {
        return Err(PowerError::GridTooCoarse { got: grid_steps, min: ORACLE_MIN_GRID });
    }
    let levels = oracle_grid(budget, grid_steps, pairs.len());
    let (ranked, leak) = if k.z > 0.0 {
        // main-lobe gains shrink with side lobes on
        let gt = main_lobe_gain(bounds.xi_t_min, k.z);
        let gr = main_lobe_gain(bounds.xi_r_min, k.z);
        let noise = noise_power_mw(k);
        let mut ranked = Vec::new();
        let mut coupling = Vec::new();
        for r in rank(pairs, bounds, k) {
            let pair = pairs.iter().find(|p| p.id == r.id).expect("ranked from pairs");
            let loss = db_to_lin(pair.loss_db(k));
            ranked.push(RankedPair { id: r.id, gain: gt * gr / loss / noise });
            coupling.push(k.z * gr / loss / noise);
        }
        (ranked, Some(SideLobes { coupling }))
    } else {
        (rank(pairs, bounds, k), None)
    };
    let mut search = Search {
        ranked: &ranked,
        levels: &levels,
        limit: pairs.len().min(budget.n_max),
        total: budget.total_max_mw(),
        eta_db: budget.eta_db,
        bandwidth_hz: k.bandwidth_hz,
        leak,
        current: Vec::new(),
        best_rate: 0.0,
        best: Vec::new(),
    };
    if search.limit > 0 {
        search.visit(0, 0.0, 0.0);
    }
    let Search { best, leak, .. } = search;
    if best.is_empty() {
        return Ok(Allocation::empty(Policy::Oracle, 1));
    }
    match leak {
        None => {
            let links: Vec<_> = best.iter().map(|&(i, pt)| (ranked[i], pt)).collect();
            Ok(build(Policy::Oracle, &links, k.bandwidth_hz, 1))
        }
        Some(sl) => {
            let mut alloc = Allocation::empty(Policy::Oracle, 1);
            alloc.infeasible = false;
            for &(i, pt) in &best {
                let others: f64 = best.iter().filter(|(j, _)| *j != i).map(|(_, q)| q).sum();
                let sinr = pt * ranked[i].gain / (1.0 + others * sl.coupling[i]);
                alloc.chosen.push(ranked[i].id);
                alloc.pt_mw.push(pt);
                alloc.snr_db.push(lin_to_db(sinr));
                alloc.rate_bps += link_rate_from_linear(k.bandwidth_hz, sinr);
            }
            Ok(alloc)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyComparison {
    pub ppa: Allocation,
    pub apa: Allocation,
    /// `floor(P_max/p_max) >= min(N_pair, N_max)`.
    pub equality_regime: bool,
    /// Same chosen sets, powers and rates.
    pub identical: bool,
}

pub fn compare_policies(
    pairs: &[BeamPair],
    budget: &PowerBudget,
    bounds: &BeamwidthBounds,
    k: &RadioConstants,
) -> PolicyComparison {
    let ppa = ppa_allocate(pairs, budget, bounds, k);
    let apa = apa_allocate(pairs, budget, bounds, k);
    let (floor, _) = budget.power_ratio_bounds();
    let equality_regime = floor >= pairs.len().min(budget.n_max);
    let identical = ppa.chosen == apa.chosen && ppa.pt_mw == apa.pt_mw && ppa.rate_bps == apa.rate_bps;
    debug_assert!(!equality_regime || identical, "PPA and APA must agree in the equality regime");
    PolicyComparison { ppa, apa, equality_regime, identical }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PathGeometry;
    use crate::scenario::Scenario;

    fn reference() -> (Vec<BeamPair>, PowerBudget, BeamwidthBounds, RadioConstants) {
        let s = Scenario::reference();
        let k = s.radio.pencil();
        (s.beam_pairs(), s.budget.clone(), s.bounds, k)
    }

    #[test]
    fn link_optimum_matches_hand_budget() {
        let (pairs, budget, bounds, k) = reference();
        let opt = prop1_link_optimum(&pairs[0], &budget, &bounds, &k);
        // 3 dBm + 10 log10(36 * 24) - L_LOS - P_N
        let hand = 3.0 + 10.0 * (36.0f64 * 24.0).log10() - 80.1036 + 76.2391;
        assert!((opt.snr_db - hand).abs() < 1e-3);
        // summing the terms rounded to 0.01 dB gives 28.51
        assert!((opt.snr_db - 28.51).abs() < 0.015);
        assert_eq!(opt.pt_mw, budget.p_max_mw());
        assert_eq!(opt.xi_t, bounds.xi_t_min);
    }

    #[test]
    fn link_optimum_monotone_in_power_and_beamwidth() {
        let (pairs, budget, bounds, k) = reference();
        let base = prop1_link_optimum(&pairs[1], &budget, &bounds, &k);
        let more = prop1_link_optimum(&pairs[1], &PowerBudget { p_max_dbm: 4.0, ..budget.clone() }, &bounds, &k);
        assert!(more.rate_bps > base.rate_bps);
        let narrow = BeamwidthBounds { xi_t_min: bounds.xi_t_min / 2.0, ..bounds };
        let n = prop1_link_optimum(&pairs[1], &budget, &narrow, &k);
        assert!((n.snr_db - base.snr_db - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn power_ratio_of_reference_budget() {
        let b = PowerBudget::default();
        let ratio = b.total_max_mw() / b.p_max_mw();
        assert!((ratio - 3.981).abs() < 1e-3);
        assert_eq!(b.power_ratio_bounds(), (3, 4));
        let rem = b.total_max_mw() - 3.0 * b.p_max_mw();
        assert!((rem - 1.957).abs() < 1e-3);
        assert!((lin_to_db(rem) - 2.92).abs() < 0.005);
        let exact = PowerBudget { total_max_dbm: 3.0 + lin_to_db(2.0), ..b };
        assert_eq!(exact.power_ratio_bounds(), (2, 2));
    }

    #[test]
    fn ppa_two_pairs_takes_full_power() {
        let (pairs, budget, bounds, k) = reference();
        let a = ppa_allocate(&pairs[..2], &budget, &bounds, &k);
        assert_eq!(a.chosen, vec![0, 1]);
        assert!(a.pt_mw.iter().all(|&p| p == budget.p_max_mw()));
    }

    #[test]
    fn ppa_remainder_link_and_threshold_flip() {
        let (pairs, budget, bounds, k) = reference();
        let a = ppa_allocate(&pairs, &budget, &bounds, &k);
        assert_eq!(a.len(), 4);
        assert!((a.pt_mw[3] - 1.957).abs() < 1e-3);
        assert!(a.pt_mw[..3].iter().all(|&p| p == budget.p_max_mw()));
        // raise eta just above the remainder link's SNR but below its full-power SNR
        let w_snr = a.snr_db[3];
        let flipped = ppa_allocate(&pairs, &budget.with_eta(w_snr + 0.01), &bounds, &k);
        assert_eq!(flipped.len(), 3);
        assert_eq!(flipped.chosen, a.chosen[..3].to_vec());
        let oracle_rate: f64 = a.snr_db.iter().map(|s| crate::channel::link_rate_bps(k.bandwidth_hz, *s)).sum();
        assert!((oracle_rate - a.rate_bps).abs() <= 1e-6 * a.rate_bps);
    }

    #[test]
    fn exact_integer_ratio_uses_floor_branch() {
        let (pairs, _, bounds, k) = reference();
        let budget = PowerBudget { p_max_dbm: 3.0, total_max_dbm: 3.0 + lin_to_db(2.0), n_max: 10, eta_db: 0.0 };
        let a = ppa_allocate(&pairs, &budget, &bounds, &k);
        assert_eq!(a.len(), 2);
        assert!(a.pt_mw.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn apa_equal_split_and_cap() {
        let (pairs, budget, bounds, k) = reference();
        let four = apa_allocate(&pairs[..4], &budget, &bounds, &k);
        assert_eq!(four.len(), 4);
        assert!((four.pt_mw[0] - 1.986).abs() < 1e-3);
        assert!(four.pt_mw[0] < budget.p_max_mw());
        let two = apa_allocate(&pairs[..2], &budget, &bounds, &k);
        assert!(two.pt_mw.iter().all(|&p| p == budget.p_max_mw()));
        assert!((two.pt_mw[0] - 1.995).abs() < 1e-3);
    }

    #[test]
    fn everything_below_threshold_is_infeasible() {
        let (pairs, budget, bounds, k) = reference();
        let high = budget.with_eta(60.0);
        let apa = apa_allocate(&pairs, &high, &bounds, &k);
        assert!(apa.infeasible && apa.is_empty());
        assert!(apa.iterations <= pairs.len().min(high.n_max));
        let ppa = ppa_allocate(&pairs, &high, &bounds, &k);
        assert!(ppa.infeasible && ppa.rate_bps == 0.0);
    }

    #[test]
    fn oracle_single_pair() {
        let (pairs, budget, bounds, k) = reference();
        let o = oracle_allocate(&pairs[..1], &budget, &bounds, &k, 64).unwrap();
        assert_eq!(o.pt_mw, vec![budget.p_max_mw().min(budget.total_max_mw())]);
        let p1 = prop1_link_optimum(&pairs[0], &budget, &bounds, &k);
        assert!((o.rate_bps - p1.rate_bps).abs() <= 1e-9 * p1.rate_bps);
    }

    #[test]
    fn oracle_rejects_large_or_coarse_instances() {
        let (pairs, budget, bounds, k) = reference();
        assert!(matches!(
            oracle_allocate(&pairs, &budget, &bounds, &k, 64),
            Err(PowerError::OracleTooLarge { n: 9, cap: 6 })
        ));
        assert!(matches!(
            oracle_allocate(&pairs[..2], &budget, &bounds, &k, 10),
            Err(PowerError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn oracle_dominates_closed_forms_on_reference() {
        let (pairs, budget, bounds, k) = reference();
        for eta in [0.0, 10.0, 18.0, 25.0] {
            let b = budget.with_eta(eta);
            let o = oracle_allocate(&pairs[..6], &b, &bounds, &k, 64).unwrap();
            let ppa = ppa_allocate(&pairs[..6], &b, &bounds, &k);
            let apa = apa_allocate(&pairs[..6], &b, &bounds, &k);
            assert!(o.rate_bps >= ppa.rate_bps.max(apa.rate_bps) * (1.0 - 1e-12));
            assert!(o.is_feasible_under(&b, 6));
        }
    }

    #[test]
    fn oracle_with_side_lobes_respects_threshold() {
        let s = Scenario::reference();
        let pairs = s.beam_pairs();
        let o = oracle_allocate(&pairs[..3], &s.budget.with_eta(10.0), &s.bounds, &s.radio, 64).unwrap();
        assert!(!o.infeasible);
        assert!(o.snr_db.iter().all(|&x| x >= 10.0));
    }

    #[test]
    fn comparison_flags_regime() {
        let (pairs, budget, bounds, k) = reference();
        let c = compare_policies(&pairs[..2], &budget, &bounds, &k);
        assert!(c.equality_regime && c.identical);
        let c = compare_policies(&pairs, &budget, &bounds, &k);
        assert!(!c.equality_regime);
    }

    #[test]
    fn budget_validation() {
        assert!(PowerBudget::default().validate().is_ok());
        let bad = PowerBudget { p_max_dbm: 10.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let g = PathGeometry::los(4.0).unwrap();
        assert!(BeamPair::new(0, g, 0.0, 1.0).is_err());
        assert!(BeamwidthBounds::fixed(0.1, 0.2).is_valid());
        assert!(!BeamwidthBounds { xi_t_min: 0.3, xi_t_max: 0.2, xi_r_min: 0.1, xi_r_max: 0.1 }.is_valid());
    }
}
