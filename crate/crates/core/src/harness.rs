//! Experiment configuration, runners and CSV output.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    db_to_lin, link_rate_bps, link_rate_from_linear, mw_to_dbm, sinr_db, BeamPair, ChannelError, LossModel,
    PathGeometry, RadioConstants,
};
use crate::power::{
    apa_allocate, oracle_allocate, pencil_gain, ppa_allocate, Allocation, BeamwidthBounds, PowerBudget, ORACLE_MIN_GRID,
};
use crate::scenario::{Scenario, REFERENCE_THETA_R, REFERENCE_THETA_T};
use crate::simkernel::{EventTrace, RngStream, SimTime, TraceEntry};
use crate::sync::{run_cycles, split_stream, RateProfile, SyncConfig};
use crate::tracking::{self, run_tracking, TrackingScenario};
use crate::training::{beam_combining, combining_test_count, plan_sweep, Candidate, CandidateSet};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Tracking(#[from] tracking::TrackingError),
    #[error(transparent)]
    Sync(#[from] crate::sync::SyncError),
    #[error(transparent)]
    Power(#[from] crate::power::PowerError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Channel(_) => 2,
            HarnessError::Infeasible(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    Ppa,
    Apa,
    Both,
}

fn range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id used in rows and file names of the rate-vs-eta runner.
    pub name: String,
    pub fc_ghz: f64,
    pub bandwidth_hz: f64,
    pub n_max: usize,
    pub p_max_dbm: f64,
    #[serde(rename = "P_max_dbm")]
    pub total_max_dbm: f64,
    pub r_los_m: f64,
    pub xi_t_deg: f64,
    pub xi_r_deg: f64,
    pub a_los: f64,
    pub a_nlos: f64,
    pub n_los: f64,
    pub n_nlos: f64,
    pub z: f64,
    pub nf_db: f64,
    pub loss_model: LossModel,
    pub beta: f64,
    /// Reflection angles; the LOS pair is added implicitly.
    pub theta_t_deg: Vec<f64>,
    pub theta_r_deg: Vec<f64>,
    /// Axes of the rate map.
    pub map_theta_t_deg: Vec<f64>,
    pub map_theta_r_deg: Vec<f64>,
    pub eta_db: Vec<f64>,
    pub p_sweep: Vec<f64>,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub trials: u64,
    pub policy: PolicyChoice,
    /// Sector counts for the training demo.
    pub sectors: Vec<usize>,
    pub n_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let k = RadioConstants::default();
        let b = PowerBudget::default();
        ExperimentConfig {
            name: "fig9".into(),
            fc_ghz: k.fc_ghz,
            bandwidth_hz: k.bandwidth_hz,
            n_max: b.n_max,
            p_max_dbm: b.p_max_dbm,
            total_max_dbm: b.total_max_dbm,
            r_los_m: 4.0,
            xi_t_deg: 10.0,
            xi_r_deg: 15.0,
            a_los: k.a_los,
            a_nlos: k.a_nlos,
            n_los: k.n_los,
            n_nlos: k.n_nlos,
            z: k.z,
            nf_db: k.nf_db,
            loss_model: k.loss_model,
            beta: k.beta,
            theta_t_deg: REFERENCE_THETA_T.to_vec(),
            theta_r_deg: REFERENCE_THETA_R.to_vec(),
            map_theta_t_deg: range(10.0, 80.0, 10.0),
            map_theta_r_deg: range(10.0, 80.0, 10.0),
            eta_db: range(0.0, 30.0, 1.0),
            p_sweep: range(0.0, 1.0, 0.1),
            n_list: vec![1, 2, 4, 8],
            seed: 1,
            trials: 100_000,
            policy: PolicyChoice::Both,
            sectors: vec![8, 16, 32, 64, 128],
            n_cap: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `fig10a` / `fig10b` presets: 100 m LOS with the reference angles, and with all
    /// reflections at 80 degrees.
    pub fn fig10(variant: char) -> Self {
        let mut c = ExperimentConfig { r_los_m: 100.0, ..Default::default() };
        match variant {
            'a' => c.name = "fig10a".into(),
            _ => {
                c.name = "fig10b".into();
                c.theta_t_deg = vec![80.0; 8];
                c.theta_r_deg = vec![80.0; 8];
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.theta_t_deg.len() != self.theta_r_deg.len() {
            return bad("theta_t_deg and theta_r_deg must have equal length");
        }
        if self.p_sweep.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("p_sweep values must lie in [0, 1]");
        }
        if self.trials < 1 {
            return bad("trials must be at least 1");
        }
        if self.n_list.contains(&0) {
            return bad("n_list entries must be positive");
        }
        if self.sectors.contains(&0) || self.n_cap == 0 {
            return bad("sector counts and n_cap must be positive");
        }
        if !(self.xi_t_deg > 0.0 && self.xi_t_deg <= 360.0 && self.xi_r_deg > 0.0 && self.xi_r_deg <= 360.0) {
            return bad("beamwidths must lie in (0, 360] degrees");
        }
        if self.eta_db.iter().chain(&self.theta_t_deg).chain(&self.theta_r_deg).any(|v| !v.is_finite()) {
            return bad("sweep values must be finite");
        }
        self.radio().validate()?;
        self.budget(0.0).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.scenario()?;
        Ok(())
    }

    pub fn radio(&self) -> RadioConstants {
        RadioConstants {
            fc_ghz: self.fc_ghz,
            bandwidth_hz: self.bandwidth_hz,
            nf_db: self.nf_db,
            a_los: self.a_los,
            a_nlos: self.a_nlos,
            n_los: self.n_los,
            n_nlos: self.n_nlos,
            z: self.z,
            beta: self.beta,
            loss_model: self.loss_model,
        }
    }

    pub fn budget(&self, eta_db: f64) -> PowerBudget {
        PowerBudget { p_max_dbm: self.p_max_dbm, total_max_dbm: self.total_max_dbm, n_max: self.n_max, eta_db }
    }

    pub fn scenario(&self) -> Result<Scenario, HarnessError> {
        Ok(Scenario::with_reflections(
            self.radio(),
            self.r_los_m,
            &self.theta_t_deg,
            &self.theta_r_deg,
            self.xi_t_deg,
            self.xi_r_deg,
            self.budget(0.0),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub x_name: String,
    pub x_value: f64,
    pub metric: String,
    pub value: f64,
    pub units: String,
}

impl ResultRow {
    pub fn new(
        experiment: &str,
        x_name: &str,
        x_value: f64,
        metric: impl Into<String>,
        value: f64,
        units: &str,
    ) -> Self {
        ResultRow {
            experiment: experiment.into(),
            x_name: x_name.into(),
            x_value,
            metric: metric.into(),
            value,
            units: units.into(),
        }
    }
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    if let Some(bad) = rows.iter().find(|r| !r.value.is_finite() || !r.x_value.is_finite() || r.units.is_empty()) {
        return Err(HarnessError::Infeasible(format!("non-finite or unit-less row: {bad:?}")));
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &EventTrace) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path)?;
    f.write_all(trace.render().as_bytes())?;
    Ok(())
}

/// Probability that every link is blocked.
pub fn outage_analytic(p: &[f64]) -> f64 {
    p.iter().product()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// 95 % normal-approximation half-width.
    pub half_width: f64,
}

/// Fraction of `trials` in which `n` independent Bernoulli(`p`) blockage
/// draws all come up blocked.
pub fn outage_monte_carlo(p: f64, n: usize, trials: u64, seed: u64) -> Estimate {
    let mut rng = RngStream::new(seed, &format!("outage.p{p}.n{n}"));
    let r = rng.rng();
    let mut hits = 0u64;
    for _ in 0..trials {
        if (0..n).all(|_| r.gen::<f64>() < p) {
            hits += 1;
        }
    }
    let q = hits as f64 / trials as f64;
    Estimate { value: q, half_width: 1.96 * (q * (1.0 - q) / trials as f64).sqrt() }
}

pub fn run_outage(cfg: &ExperimentConfig) -> Vec<ResultRow> {
    let points: Vec<(f64, usize)> = cfg.p_sweep.iter().flat_map(|&p| cfg.n_list.iter().map(move |&n| (p, n))).collect();
    points
        .par_iter()
        .map(|&(p, n)| {
            let analytic = outage_analytic(&vec![p; n]);
            let mc = outage_monte_carlo(p, n, cfg.trials, cfg.seed);
            vec![
                ResultRow::new("outage", "p", p, format!("analytic@N={n}"), analytic, "probability"),
                ResultRow::new("outage", "p", p, format!("monte_carlo@N={n}"), mc.value, "probability"),
                ResultRow::new("outage", "p", p, format!("half_width@N={n}"), mc.half_width, "probability"),
            ]
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// SINR and rate of the LOS pair and one reflection on the angle grid,
/// both beams at `p_max` with side-lobe leakage.
pub fn run_fig8(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let k = cfg.radio();
    let (xi_t, xi_r) = (cfg.xi_t_deg.to_radians(), cfg.xi_r_deg.to_radians());
    let los = BeamPair::new(0, PathGeometry::los(cfg.r_los_m)?, xi_t, xi_r)?;
    let mut points = Vec::new();
    for &tr in &cfg.map_theta_r_deg {
        for &tt in &cfg.map_theta_t_deg {
            points.push((tr, tt));
        }
    }
    let blocks: Result<Vec<Vec<ResultRow>>, HarnessError> = points
        .par_iter()
        .map(|&(tr, tt)| {
            let nlos = BeamPair::new(1, PathGeometry::nlos_deg(tt, tr, cfg.r_los_m)?, xi_t, xi_r)?;
            let active = [(los, cfg.p_max_dbm), (nlos, cfg.p_max_dbm)];
            let s_los = sinr_db(&los, &active, &k);
            let s_nlos = sinr_db(&nlos, &active, &k);
            let tag = |m: &str| format!("{m}@theta_r={tr}");
            Ok(vec![
                ResultRow::new("fig8", "theta_t_deg", tt, tag("los_sinr_db"), s_los, "dB"),
                ResultRow::new("fig8", "theta_t_deg", tt, tag("nlos_sinr_db"), s_nlos, "dB"),
                ResultRow::new(
                    "fig8",
                    "theta_t_deg",
                    tt,
                    tag("los_rate_mbps"),
                    link_rate_bps(k.bandwidth_hz, s_los) / 1e6,
                    "Mbps",
                ),
                ResultRow::new(
                    "fig8",
                    "theta_t_deg",
                    tt,
                    tag("nlos_rate_mbps"),
                    link_rate_bps(k.bandwidth_hz, s_nlos) / 1e6,
                    "Mbps",
                ),
            ])
        })
        .collect();
    Ok(blocks?.into_iter().flatten().collect())
}

/// Best single pair at `min(p_max, P_max)` with pencil beams; zero if it
/// misses the threshold or there are no pairs.
pub fn siso_rate_bps(pairs: &[BeamPair], budget: &PowerBudget, bounds: &BeamwidthBounds, k: &RadioConstants) -> f64 {
    let pt = budget.p_max_mw().min(budget.total_max_mw());
    pairs
        .iter()
        .map(|p| pt * pencil_gain(p, bounds, k))
        .filter(|snr| 10.0 * snr.log10() >= budget.eta_db)
        .map(|snr| link_rate_from_linear(k.bandwidth_hz, snr))
        .fold(0.0, f64::max)
}

/// Rate versus threshold for SISO (LOS), PPA and APA, plus the LOS-blocked
/// case where only the reflections remain.
pub fn run_fig9_10(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let scn = cfg.scenario()?;
    let k = scn.radio.pencil();
    let all = scn.beam_pairs();
    let los: Vec<BeamPair> = all[..1].to_vec();
    let nlos = scn.without_los().beam_pairs();
    let id = cfg.name.as_str();
    let blocks: Vec<Vec<ResultRow>> = cfg
        .eta_db
        .par_iter()
        .map(|&eta| {
            let b = cfg.budget(eta);
            let mut rows = Vec::new();
            let mut push =
                |metric: &str, v: f64, units: &str| rows.push(ResultRow::new(id, "eta_db", eta, metric, v, units));
            push("siso_rate_mbps", siso_rate_bps(&los, &b, &scn.bounds, &k) / 1e6, "Mbps");
            push("siso_los_blocked_rate_mbps", 0.0, "Mbps");
            let mut emit = |tag: &str, a: &Allocation| {
                push(&format!("{tag}_rate_mbps"), a.rate_bps / 1e6, "Mbps");
                push(&format!("{tag}_links"), a.len() as f64, "links");
                push(
                    &format!("{tag}_power_dbm"),
                    if a.is_empty() { 0.0 } else { mw_to_dbm(a.total_power_mw()) },
                    "dBm",
                );
            };
            if cfg.policy != PolicyChoice::Apa {
                emit("ppa", &ppa_allocate(&all, &b, &scn.bounds, &k));
                emit("ppa_los_blocked", &ppa_allocate(&nlos, &b, &scn.bounds, &k));
            }
            if cfg.policy != PolicyChoice::Ppa {
                emit("apa", &apa_allocate(&all, &b, &scn.bounds, &k));
                emit("apa_los_blocked", &apa_allocate(&nlos, &b, &scn.bounds, &k));
            }
            rows
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Pulls one metric out of a table as `(x, value)` points in row order.
pub fn series(rows: &[ResultRow], metric: &str) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r.metric == metric).map(|r| (r.x_value, r.value)).collect()
}

/// Scan rounds for single- vs multi-beam sweeps and greedy vs exhaustive
/// pairing tests. The trace lists the sectors scanned in every round of
/// the largest sweep.
pub fn run_training_demo(cfg: &ExperimentConfig) -> (Vec<ResultRow>, EventTrace) {
    let mut rows = Vec::new();
    let mut trace = EventTrace::default();
    let slot = SimTime(100);
    for &m in &cfg.sectors {
        let multi = plan_sweep(m, cfg.n_cap);
        let single = plan_sweep(m, 1);
        rows.push(ResultRow::new("training", "sectors", m as f64, "rounds_multi", multi.rounds as f64, "rounds"));
        rows.push(ResultRow::new("training", "sectors", m as f64, "rounds_single", single.rounds as f64, "rounds"));
    }
    if let Some(&m) = cfg.sectors.iter().max() {
        let plan = plan_sweep(m, cfg.n_cap);
        for (r, sectors) in plan.layout.iter().enumerate() {
            let list: Vec<String> = sectors.iter().map(|s| s.to_string()).collect();
            trace.push(TraceEntry::new(
                SimTime(slot.ticks() * r as u64),
                "MTX",
                "SWEEP_ROUND",
                format!("round={r} sectors={}", list.join(",")),
            ));
        }
    }
    for n in 1..=cfg.n_cap {
        let set = |n: usize| {
            CandidateSet::new(
                (0..n).map(|i| Candidate { beam: i as u32, sector: i, snr_db: 30.0 - i as f64 }).collect(),
            )
        };
        // every pair passes; SNR falls off with the beam indices
        let c = beam_combining(&set(n), &set(n), f64::NEG_INFINITY, |t, r| 30.0 - (t + r) as f64);
        let x = n as f64;
        rows.push(ResultRow::new("training", "n_beams", x, "tests_greedy", c.tests as f64, "tests"));
        rows.push(ResultRow::new(
            "training",
            "n_beams",
            x,
            "tests_closed_form",
            combining_test_count(n, n) as f64,
            "tests",
        ));
        rows.push(ResultRow::new("training", "n_beams", x, "tests_exhaustive", (n * n) as f64, "tests"));
    }
    (rows, trace)
}

/// Named tracking scripts accepted by [`tracking_script`].
pub const TRACKING_SCRIPTS: [&str; 6] =
    ["fig6", "second-candidate", "all-candidates-blocked", "no-candidates", "all-links-blocked", "random"];

pub fn tracking_script(name: &str, seed: u64) -> Result<TrackingScenario, HarnessError> {
    Ok(match name {
        "fig6" => tracking::fig6_script(),
        "second-candidate" => tracking::second_candidate_script(),
        "all-candidates-blocked" => tracking::all_candidates_blocked_script(),
        "no-candidates" => tracking::no_candidate_script(),
        "all-links-blocked" => tracking::all_links_blocked_script(),
        "random" => tracking::random_scenario(seed),
        "none" => {
            let mut s = tracking::fig6_script();
            s.blockage = tracking::BlockageProcess::none();
            s.misalignments.clear();
            s
        }
        other => return Err(HarnessError::Config(format!("unknown tracking script {other:?}"))),
    })
}

pub fn run_tracking_scenario(script: &TrackingScenario) -> Result<(Vec<ResultRow>, EventTrace), HarnessError> {
    let rep = run_tracking(script)?;
    let count = |kind: &str| rep.trace.of_kind(kind).count() as f64;
    let x = script.seed as f64;
    let rows = vec![
        ResultRow::new("tracking", "seed", x, "restorations", rep.restorations as f64, "events"),
        ResultRow::new("tracking", "seed", x, "track_procedures", count("TRACK_START"), "events"),
        ResultRow::new("tracking", "seed", x, "refine_procedures", count("REFINE_START"), "events"),
        ResultRow::new("tracking", "seed", x, "aborts", count("TRACK_ABORT"), "events"),
        ResultRow::new("tracking", "seed", x, "qos_null_frames", count("QoSNull"), "frames"),
        ResultRow::new("tracking", "seed", x, "data_frames", count("Data"), "frames"),
    ];
    Ok((rows, rep.trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncDemo {
    pub total_bytes: u64,
    pub snr_db: Vec<f64>,
    pub cycles: usize,
    /// Link 0 runs at this fraction of its nominal rate from `drop_at` on.
    pub drop_factor: f64,
    pub drop_at: SimTime,
}

impl Default for SyncDemo {
    fn default() -> Self {
        SyncDemo { total_bytes: 300_000, snr_db: vec![13.0, 10.0], cycles: 6, drop_factor: 0.5, drop_at: SimTime(100) }
    }
}

/// Synchronized cycles where link 0 slows down mid-cycle; rates are the
/// Shannon rates of the configured SNRs.
pub fn run_sync_demo(cfg: &ExperimentConfig, demo: &SyncDemo) -> Result<(Vec<ResultRow>, EventTrace), HarnessError> {
    let lin: Vec<f64> = demo.snr_db.iter().map(|s| db_to_lin(*s)).collect();
    let rates: Vec<f64> = lin.iter().map(|s| link_rate_from_linear(cfg.bandwidth_hz, *s)).collect();
    let plan = split_stream(demo.total_bytes, &lin)?;
    let profiles = |_c: usize| {
        rates
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                if i == 0 {
                    RateProfile::with_drop(r, demo.drop_at, demo.drop_factor)
                } else {
                    RateProfile::constant(r)
                }
            })
            .collect::<Vec<_>>()
    };
    let (outcomes, plans, trace) = run_cycles(plan, &profiles, &SyncConfig::default(), demo.cycles)?;
    let mut rows = Vec::new();
    for (c, (o, p)) in outcomes.iter().zip(&plans).enumerate() {
        let x = c as f64;
        for (i, s) in p.shares.iter().enumerate() {
            rows.push(ResultRow::new("sync", "cycle", x, format!("share@link={}", i + 1), *s as f64, "bytes"));
            rows.push(ResultRow::new(
                "sync",
                "cycle",
                x,
                format!("remainder@link={}", i + 1),
                o.remainders[i] as f64,
                "bytes",
            ));
        }
        rows.push(ResultRow::new("sync", "cycle", x, "cycle_time_us", (o.end - o.start).ticks() as f64, "us"));
        rows.push(ResultRow::new("sync", "cycle", x, "overrun", o.overrun as u8 as f64, "flag"));
    }
    Ok((rows, trace))
}

/// One randomized pencil-beam instance for the oracle comparison.
#[derive(Debug, Clone)]
pub struct Instance {
    pub pairs: Vec<BeamPair>,
    pub budget: PowerBudget,
    pub bounds: BeamwidthBounds,
    pub radio: RadioConstants,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let radio = RadioConstants::default().pencil();
    let r_los = rng.gen_range(2.0..20.0);
    let n = rng.gen_range(1..=6);
    let xi_t = rng.gen_range(5.0f64..30.0).to_radians();
    let xi_r = rng.gen_range(5.0f64..30.0).to_radians();
    let mut pairs = vec![BeamPair::new(0, PathGeometry::los(r_los).expect("positive"), xi_t, xi_r).expect("valid")];
    while pairs.len() < n {
        let tt = rng.gen_range(5.0f64..85.0);
        let tr = rng.gen_range(5.0f64..85.0);
        let g = PathGeometry::nlos_deg(tt, tr, r_los).expect("angles below 90 degrees");
        pairs.push(BeamPair::new(pairs.len() as u32, g, xi_t, xi_r).expect("valid"));
    }
    let p_max_dbm = rng.gen_range(-5.0..10.0);
    let budget = PowerBudget {
        p_max_dbm,
        total_max_dbm: p_max_dbm + rng.gen_range(0.0..10.0),
        n_max: rng.gen_range(1..=8),
        eta_db: rng.gen_range(-5.0..30.0),
    };
    Instance { pairs, budget, bounds: BeamwidthBounds::fixed(xi_t, xi_r), radio }
}

#[derive(Debug, Clone)]
pub struct ValidationCase {
    pub oracle: Allocation,
    pub ppa: Allocation,
    pub apa: Allocation,
    pub equality_regime: bool,
}

impl ValidationCase {
    /// Grid slack: both closed forms are grid points, so only rounding remains.
    pub fn slack(&self) -> f64 {
        1e-9 * self.ppa.rate_bps.max(self.apa.rate_bps) + 1.0
    }

    pub fn oracle_dominates(&self) -> bool {
        self.oracle.rate_bps >= self.ppa.rate_bps.max(self.apa.rate_bps) - self.slack()
    }

    pub fn closed_forms_match_oracle(&self) -> bool {
        let same = |a: &Allocation, b: &Allocation| {
            a.chosen == b.chosen && (a.rate_bps - b.rate_bps).abs() <= 1e-9 * a.rate_bps.max(1.0)
        };
        same(&self.oracle, &self.ppa) && same(&self.oracle, &self.apa)
    }
}

pub fn validate_instance(inst: &Instance) -> Result<ValidationCase, HarnessError> {
    let ppa = ppa_allocate(&inst.pairs, &inst.budget, &inst.bounds, &inst.radio);
    let apa = apa_allocate(&inst.pairs, &inst.budget, &inst.bounds, &inst.radio);
    let oracle = oracle_allocate(&inst.pairs, &inst.budget, &inst.bounds, &inst.radio, ORACLE_MIN_GRID)?;
    let (floor, _) = inst.budget.power_ratio_bounds();
    let equality_regime = floor >= inst.pairs.len().min(inst.budget.n_max);
    Ok(ValidationCase { oracle, ppa, apa, equality_regime })
}

/// Oracle against both closed forms on `trials` random instances.
pub fn run_validate(cfg: &ExperimentConfig, trials: usize) -> Result<(Vec<ResultRow>, usize), HarnessError> {
    let mut rng = RngStream::new(cfg.seed, "validate.instances");
    let instances: Vec<Instance> = (0..trials).map(|_| random_instance(rng.rng())).collect();
    let cases: Result<Vec<ValidationCase>, HarnessError> = instances.par_iter().map(validate_instance).collect();
    let mut rows = Vec::new();
    let mut failures = 0;
    for (i, c) in cases?.iter().enumerate() {
        let ok = c.oracle_dominates() && (!c.equality_regime || c.closed_forms_match_oracle());
        failures += usize::from(!ok);
        let x = i as f64;
        rows.push(ResultRow::new("validate", "instance", x, "oracle_rate_mbps", c.oracle.rate_bps / 1e6, "Mbps"));
        rows.push(ResultRow::new("validate", "instance", x, "ppa_rate_mbps", c.ppa.rate_bps / 1e6, "Mbps"));
        rows.push(ResultRow::new("validate", "instance", x, "apa_rate_mbps", c.apa.rate_bps / 1e6, "Mbps"));
        rows.push(ResultRow::new("validate", "instance", x, "equality_regime", c.equality_regime as u8 as f64, "flag"));
        rows.push(ResultRow::new("validate", "instance", x, "pass", ok as u8 as f64, "flag"));
    }
    Ok((rows, failures))
}

/// `2 pi` check of the sectored pattern: main lobe over `xi` plus side lobes.
pub fn pattern_total(xi: f64, z: f64) -> f64 {
    crate::channel::main_lobe_gain(xi, z) * xi + z * (2.0 * PI - xi)
}
