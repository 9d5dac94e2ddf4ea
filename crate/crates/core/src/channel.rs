//! Link-budget model: reflection geometry, log-distance path loss, the ideal
//! sectored antenna pattern, thermal noise, SINR with side-lobe leakage and
//! Shannon rate.
//!
//! Powers are handled in linear milliwatts internally. Distances are meters
//! and angles are radians.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("reflection angles |theta_t| + |theta_r| = {0} rad leave no valid triangle")]
    AngleDomain(f64),
    #[error("LOS distance must be positive, got {0} m")]
    Distance(f64),
    #[error("beamwidth {0} rad outside (0, 2pi]")]
    Beamwidth(f64),
    #[error("invalid radio constants: {0}")]
    Constants(&'static str),
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_lin(dbm)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    lin_to_db(mw)
}

/// Which loss model [`path_loss_db`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossModel {
    /// `A + 20 log10(fc) + 10 n log10(R)`.
    #[default]
    LogDistance,
    /// Free-space Friis loss with exponential medium absorption.
    FriisAbsorption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConstants {
    pub fc_ghz: f64,
    pub bandwidth_hz: f64,
    pub nf_db: f64,
    pub a_los: f64,
    pub a_nlos: f64,
    pub n_los: f64,
    pub n_nlos: f64,
    /// Average side-lobe gain, linear.
    pub z: f64,
    /// Absorption factor per meter; only used by [`LossModel::FriisAbsorption`].
    pub beta: f64,
    pub loss_model: LossModel,
}

impl Default for RadioConstants {
    fn default() -> Self {
        RadioConstants {
            fc_ghz: 60.0,
            bandwidth_hz: 1.5e9,
            nf_db: 6.0,
            a_los: 32.5,
            a_nlos: 45.5,
            n_los: 2.0,
            n_nlos: 1.4,
            z: 0.1,
            beta: 0.0,
            loss_model: LossModel::LogDistance,
        }
    }
}

impl RadioConstants {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.fc_ghz > 0.0) {
            return Err(ChannelError::Constants("fc_ghz must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(ChannelError::Constants("bandwidth_hz must be positive"));
        }
        if !(0.0..1.0).contains(&self.z) {
            return Err(ChannelError::Constants("z must lie in [0, 1)"));
        }
        if !(self.n_los > 0.0 && self.n_nlos > 0.0) {
            return Err(ChannelError::Constants("path-loss exponents must be positive"));
        }
        if !(self.beta >= 0.0) {
            return Err(ChannelError::Constants("beta must be non-negative"));
        }
        Ok(())
    }

    /// Same constants with side lobes switched off.
    pub fn pencil(&self) -> RadioConstants {
        RadioConstants { z: 0.0, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathKind {
    Los,
    Nlos,
}

/// Position of one propagation path relative to the LOS boresight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGeometry {
    pub kind: PathKind,
    pub theta_t: f64,
    pub theta_r: f64,
    pub r_los: f64,
}

impl PathGeometry {
    pub fn los(r_los: f64) -> Result<Self, ChannelError> {
        if !(r_los > 0.0) {
            return Err(ChannelError::Distance(r_los));
        }
        Ok(PathGeometry { kind: PathKind::Los, theta_t: 0.0, theta_r: 0.0, r_los })
    }

    /// First-order reflection leaving the transmitter at `theta_t` and
    /// arriving at `theta_r` off boresight.
    pub fn nlos(theta_t: f64, theta_r: f64, r_los: f64) -> Result<Self, ChannelError> {
        if !(r_los > 0.0) {
            return Err(ChannelError::Distance(r_los));
        }
        let (at, ar) = (theta_t.abs(), theta_r.abs());
        if !(at > 0.0 && at < PI && ar > 0.0 && ar < PI - at) {
            return Err(ChannelError::AngleDomain(at + ar));
        }
        Ok(PathGeometry { kind: PathKind::Nlos, theta_t, theta_r, r_los })
    }

    pub fn nlos_deg(theta_t_deg: f64, theta_r_deg: f64, r_los: f64) -> Result<Self, ChannelError> {
        Self::nlos(theta_t_deg.to_radians(), theta_r_deg.to_radians(), r_los)
    }

    pub fn distance(&self) -> f64 {
        nlos_distance(self).expect("geometry validated at construction")
    }
}

/// Path length by the law of sines. LOS geometries return `r_los`.
pub fn nlos_distance(g: &PathGeometry) -> Result<f64, ChannelError> {
    if g.kind == PathKind::Los {
        return Ok(g.r_los);
    }
    let (at, ar) = (g.theta_t.abs(), g.theta_r.abs());
    if at + ar >= PI || at == 0.0 || ar == 0.0 {
        return Err(ChannelError::AngleDomain(at + ar));
    }
    Ok((at.sin() + ar.sin()) / (PI - at - ar).sin() * g.r_los)
}

/// One transmit/receive beam pairing over a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamPair {
    pub id: u32,
    pub geometry: PathGeometry,
    pub xi_t: f64,
    pub xi_r: f64,
}

impl BeamPair {
    pub fn new(id: u32, geometry: PathGeometry, xi_t: f64, xi_r: f64) -> Result<Self, ChannelError> {
        for xi in [xi_t, xi_r] {
            if !(xi > 0.0 && xi <= TWO_PI) {
                return Err(ChannelError::Beamwidth(xi));
            }
        }
        Ok(BeamPair { id, geometry, xi_t, xi_r })
    }

    pub fn distance(&self) -> f64 {
        self.geometry.distance()
    }

    pub fn loss_db(&self, k: &RadioConstants) -> f64 {
        path_loss_db(k, self.geometry.kind, self.distance())
    }
}

pub fn path_loss_db(k: &RadioConstants, kind: PathKind, r_m: f64) -> f64 {
    match k.loss_model {
        LossModel::LogDistance => {
            let (a, n) = match kind {
                PathKind::Los => (k.a_los, k.n_los),
                PathKind::Nlos => (k.a_nlos, k.n_nlos),
            };
            a + 20.0 * k.fc_ghz.log10() + 10.0 * n * r_m.log10()
        }
        LossModel::FriisAbsorption => {
            let lambda = 299_792_458.0 / (k.fc_ghz * 1e9);
            // (4 pi R / lambda)^2 e^{beta R}
            20.0 * (4.0 * PI * r_m / lambda).log10() + lin_to_db((k.beta * r_m).exp())
        }
    }
}

pub fn received_power_mw(pt_dbm: f64, gt_lin: f64, gr_lin: f64, k: &RadioConstants, kind: PathKind, r_m: f64) -> f64 {
    dbm_to_mw(pt_dbm) * gt_lin * gr_lin / db_to_lin(path_loss_db(k, kind, r_m))
}

/// Average main-lobe gain of the ideal sectored pattern.
pub fn main_lobe_gain(xi: f64, z: f64) -> f64 {
    (TWO_PI - (TWO_PI - xi) * z) / xi
}

pub fn noise_power_dbm(k: &RadioConstants) -> f64 {
    -174.0 + 10.0 * k.bandwidth_hz.log10() + k.nf_db
}

pub fn noise_power_mw(k: &RadioConstants) -> f64 {
    dbm_to_mw(noise_power_dbm(k))
}

/// Per-link breakdown of the SINR computation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub pt_dbm: f64,
    pub gt_db: f64,
    pub gr_db: f64,
    pub loss_db: f64,
    pub noise_dbm: f64,
    pub interference_mw: f64,
    pub sinr_db: f64,
}

/// SINR budget of `victim` while the pairs in `active` transmit at the given
/// powers (dBm). Side-lobe leakage from every other active pair reaches the
/// victim receiver through the victim's own path loss.
pub fn link_budget(victim: &BeamPair, active: &[(BeamPair, f64)], k: &RadioConstants) -> LinkBudget {
    let pt_dbm =
        active.iter().find(|(p, _)| p.id == victim.id).map(|(_, pt)| *pt).expect("victim must be in the active set");
    let gt = main_lobe_gain(victim.xi_t, k.z);
    let gr = main_lobe_gain(victim.xi_r, k.z);
    let loss_lin = db_to_lin(victim.loss_db(k));
    let signal = dbm_to_mw(pt_dbm) * gt * gr / loss_lin;
    let interference: f64 =
        active.iter().filter(|(p, _)| p.id != victim.id).map(|(_, pt)| dbm_to_mw(*pt) * k.z * gr / loss_lin).sum();
    let noise = noise_power_mw(k);
    LinkBudget {
        pt_dbm,
        gt_db: lin_to_db(gt),
        gr_db: lin_to_db(gr),
        loss_db: lin_to_db(loss_lin),
        noise_dbm: mw_to_dbm(noise),
        interference_mw: interference,
        sinr_db: lin_to_db(signal / (noise + interference)),
    }
}

pub fn sinr_db(victim: &BeamPair, active: &[(BeamPair, f64)], k: &RadioConstants) -> f64 {
    link_budget(victim, active, k).sinr_db
}

/// Interference-free SNR of a single pair.
pub fn snr_db(pair: &BeamPair, pt_dbm: f64, k: &RadioConstants) -> f64 {
    let gt = main_lobe_gain(pair.xi_t, k.z);
    let gr = main_lobe_gain(pair.xi_r, k.z);
    pt_dbm + lin_to_db(gt * gr) - pair.loss_db(k) - noise_power_dbm(k)
}

pub fn link_rate_bps(bandwidth_hz: f64, sinr_db: f64) -> f64 {
    link_rate_from_linear(bandwidth_hz, db_to_lin(sinr_db))
}

pub fn link_rate_from_linear(bandwidth_hz: f64, sinr_lin: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr_lin).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn equilateral_reflection_doubles_distance() {
        let g = PathGeometry::nlos_deg(60.0, 60.0, 4.0).unwrap();
        assert!(close(nlos_distance(&g).unwrap(), 8.0, 1e-12));
        let los = PathGeometry::los(4.0).unwrap();
        assert_eq!(nlos_distance(&los).unwrap(), 4.0);
    }

    #[test]
    fn reflection_distance_matches_triangle_construction() {
        // Place Tx at the origin and Rx at (R, 0); intersect the two rays.
        let (tt, tr, r) = (10f64.to_radians(), 20f64.to_radians(), 4.0);
        let s = r * tr.sin() / (PI - tt - tr).sin();
        let reflector = (s * tt.cos(), s * tt.sin());
        let d1 = (reflector.0.powi(2) + reflector.1.powi(2)).sqrt();
        let d2 = ((r - reflector.0).powi(2) + reflector.1.powi(2)).sqrt();
        let oracle = d1 + d2;
        let g = PathGeometry::nlos(tt, tr, r).unwrap();
        assert!(close(nlos_distance(&g).unwrap(), oracle, 1e-12));
        assert!(close(oracle, 4.1254, 1e-4));
    }

    #[test]
    fn rejects_degenerate_triangles() {
        assert!(PathGeometry::nlos_deg(100.0, 80.0, 4.0).is_err());
        assert!(PathGeometry::nlos_deg(0.0, 20.0, 4.0).is_err());
        assert!(PathGeometry::nlos_deg(10.0, 20.0, 0.0).is_err());
        let bad = PathGeometry { kind: PathKind::Nlos, theta_t: 2.0, theta_r: 1.5, r_los: 4.0 };
        assert!(matches!(nlos_distance(&bad), Err(ChannelError::AngleDomain(_))));
    }

    #[test]
    fn path_loss_values() {
        let k = RadioConstants::default();
        assert!(close(path_loss_db(&k, PathKind::Los, 4.0), 80.10, 0.005));
        assert!(close(path_loss_db(&k, PathKind::Nlos, 8.0), 93.71, 0.005));
        let k1 = RadioConstants { fc_ghz: 1.0, ..k.clone() };
        assert!(close(path_loss_db(&k1, PathKind::Los, 1.0), 32.5, 1e-12));
        // Friis at 60 GHz, 4 m
        let friis = 20.0 * (4.0 * PI * 4.0 / (299_792_458.0 / 60e9)).log10();
        assert!(close(path_loss_db(&k, PathKind::Los, 4.0), friis, 0.1));
        let kf = RadioConstants { loss_model: LossModel::FriisAbsorption, ..k };
        assert!(close(path_loss_db(&kf, PathKind::Los, 4.0), friis, 1e-9));
    }

    #[test]
    fn absorption_adds_loss() {
        let k = RadioConstants { loss_model: LossModel::FriisAbsorption, beta: 0.01, ..Default::default() };
        let k0 = RadioConstants { beta: 0.0, ..k.clone() };
        let extra = path_loss_db(&k, PathKind::Los, 10.0) - path_loss_db(&k0, PathKind::Los, 10.0);
        assert!(close(extra, lin_to_db(0.1f64.exp()), 1e-9));
    }

    #[test]
    fn received_power_examples() {
        let k = RadioConstants { fc_ghz: 1.0, a_los: 0.0, ..Default::default() };
        assert!(close(received_power_mw(0.0, 1.0, 1.0, &k, PathKind::Los, 1.0), 1.0, 1e-12));
        let k = RadioConstants::default();
        let pr = received_power_mw(3.0, 1.0, 1.0, &k, PathKind::Los, 4.0);
        let expected = dbm_to_mw(3.0 - path_loss_db(&k, PathKind::Los, 4.0));
        assert!(close(pr / expected, 1.0, 1e-12));
        // 3 dBm - 80.104 dB = -77.104 dBm
        assert!(close(pr, 1.9479e-8, 0.0001e-8));
        let far = received_power_mw(3.0, 1.0, 1.0, &k, PathKind::Los, 8.0);
        assert!(close(pr / far, 4.0, 1e-12));
    }

    #[test]
    fn main_lobe_gain_examples() {
        let xi = 10f64.to_radians();
        assert!(close(main_lobe_gain(xi, 0.1), 32.5, 1e-12));
        assert!(close(lin_to_db(main_lobe_gain(xi, 0.1)), 15.12, 0.005));
        assert!(close(main_lobe_gain(xi, 0.0), 36.0, 1e-12));
        assert!(close(main_lobe_gain(TWO_PI, 0.7), 1.0, 1e-15));
    }

    #[test]
    fn noise_examples() {
        let mut k = RadioConstants::default();
        assert!(close(noise_power_dbm(&k), -76.24, 0.005));
        k.bandwidth_hz = 1.0;
        k.nf_db = 0.0;
        assert_eq!(noise_power_dbm(&k), -174.0);
        k.bandwidth_hz = 2.16e9;
        k.nf_db = 6.0;
        assert!(close(noise_power_dbm(&k), -74.655, 0.001));
    }

    fn table_pair(id: u32, g: PathGeometry) -> BeamPair {
        BeamPair::new(id, g, 10f64.to_radians(), 15f64.to_radians()).unwrap()
    }

    #[test]
    fn single_los_link_budget() {
        let k = RadioConstants::default();
        let los = table_pair(0, PathGeometry::los(4.0).unwrap());
        let b = link_budget(&los, &[(los, 3.0)], &k);
        // hand summation with the rounded terms
        assert!(close(b.sinr_db, 3.0 + 15.12 + 13.36 - 80.10 + 76.24, 0.02));
        assert!(close(b.sinr_db, snr_db(&los, 3.0, &k), 1e-9));
        assert_eq!(b.interference_mw, 0.0);
    }

    #[test]
    fn interference_lowers_sinr() {
        let k = RadioConstants::default();
        let a = table_pair(0, PathGeometry::los(4.0).unwrap());
        let b = table_pair(1, PathGeometry::los(4.0).unwrap());
        let with = sinr_db(&a, &[(a, 3.0), (b, 3.0)], &k);
        let kz = RadioConstants { z: 0.0, ..k.clone() };
        let without = sinr_db(&a, &[(a, 3.0), (b, 3.0)], &kz);
        assert!(with < without);
        assert!(close(without, snr_db(&a, 3.0, &kz), 1e-9));
    }

    #[test]
    fn rate_examples() {
        assert_eq!(link_rate_from_linear(1.5e9, 0.0), 0.0);
        assert_eq!(link_rate_bps(1.5e9, f64::NEG_INFINITY), 0.0);
        // 1.5e9 * log2(1 + 31.623)
        assert!(close(link_rate_bps(1.5e9, 15.0) / 1e9, 7.5417, 1e-4));
        assert!(close(link_rate_bps(3e9, 15.0), 2.0 * link_rate_bps(1.5e9, 15.0), 1e-3));
    }

    #[test]
    fn nlos_beats_los_loss() {
        let k = RadioConstants::default();
        for tt in (5..90).step_by(5) {
            for tr in (5..90).step_by(5) {
                let g = PathGeometry::nlos_deg(tt as f64, tr as f64, 4.0).unwrap();
                assert!(path_loss_db(&k, PathKind::Nlos, g.distance()) > path_loss_db(&k, PathKind::Los, 4.0));
            }
        }
    }

    proptest! {
        #[test]
        fn pattern_conserves_power(xi in 1e-4..TWO_PI, z in 0.0..0.999f64) {
            let g = main_lobe_gain(xi, z);
            prop_assert!((g * xi + z * (TWO_PI - xi) - TWO_PI).abs() <= 1e-12);
        }

        #[test]
        fn distance_is_symmetric(a in 0.01..1.5f64, b in 0.01..1.5f64, r in 0.5..200.0f64) {
            let d1 = PathGeometry::nlos(a, b, r).unwrap().distance();
            let d2 = PathGeometry::nlos(b, a, r).unwrap().distance();
            prop_assert!((d1 - d2).abs() <= 1e-12 * d1);
        }

        #[test]
        fn distance_grows_with_each_angle(a in 0.01..1.5f64, b in 0.01..1.5f64, step in 0.001..0.05f64) {
            prop_assume!(a + b + step < PI);
            let base = PathGeometry::nlos(a, b, 4.0).unwrap().distance();
            prop_assert!(PathGeometry::nlos(a + step, b, 4.0).unwrap().distance() > base);
            prop_assert!(PathGeometry::nlos(a, b + step, 4.0).unwrap().distance() > base);
        }

        #[test]
        fn nlos_loss_dominates(r_los in 1.0..100.0f64, extra in 0.0..100.0f64) {
            let k = RadioConstants::default();
            prop_assert!(path_loss_db(&k, PathKind::Nlos, r_los + extra) > path_loss_db(&k, PathKind::Los, r_los));
        }

        #[test]
        fn db_round_trip(x in -200.0..200.0f64) {
            let lin = db_to_lin(x);
            prop_assert!((lin_to_db(lin) - x).abs() <= 1e-12 * x.abs().max(1.0));
            prop_assert!((db_to_lin(lin_to_db(lin)) / lin - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn sinr_reduces_to_snr_without_side_lobes(tt in 5.0..80.0f64, tr in 5.0..80.0f64, pt in -10.0..10.0f64) {
            let k = RadioConstants { z: 0.0, ..Default::default() };
            let los = table_pair(0, PathGeometry::los(4.0).unwrap());
            let n = table_pair(1, PathGeometry::nlos_deg(tt, tr, 4.0).unwrap());
            let s = sinr_db(&n, &[(los, pt), (n, pt)], &k);
            prop_assert!((s - snr_db(&n, pt, &k)).abs() <= 1e-9);
            let kz = RadioConstants::default();
            let single = sinr_db(&n, &[(n, pt)], &kz);
            prop_assert!((single - snr_db(&n, pt, &kz)).abs() <= 1e-9);
        }
    }
}
