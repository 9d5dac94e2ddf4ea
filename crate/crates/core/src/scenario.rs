//! Immutable deployment description shared by the training, power and
//! harness code: one LOS path plus first-order reflections, the radio
//! constants and the beam/power limits.

use serde::{Deserialize, Serialize};

use crate::channel::{BeamPair, ChannelError, PathGeometry, RadioConstants};
use crate::power::{BeamwidthBounds, PowerBudget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub radio: RadioConstants,
    pub r_los: f64,
    /// Propagation paths. Index 0 is the LOS path when `has_los` is set.
    pub paths: Vec<PathGeometry>,
    /// Operating transmit beamwidth, radians.
    pub xi_t: f64,
    /// Operating receive beamwidth, radians.
    pub xi_r: f64,
    pub budget: PowerBudget,
    pub bounds: BeamwidthBounds,
}

impl Scenario {
    /// LOS path plus one reflection per `(theta_t, theta_r)` entry, all in
    /// degrees. Beamwidth bounds collapse onto the operating beamwidths.
    pub fn with_reflections(
        radio: RadioConstants,
        r_los: f64,
        theta_t_deg: &[f64],
        theta_r_deg: &[f64],
        xi_t_deg: f64,
        xi_r_deg: f64,
        budget: PowerBudget,
    ) -> Result<Self, ChannelError> {
        let mut paths = vec![PathGeometry::los(r_los)?];
        for (t, r) in theta_t_deg.iter().zip(theta_r_deg) {
            paths.push(PathGeometry::nlos_deg(*t, *r, r_los)?);
        }
        let (xi_t, xi_r) = (xi_t_deg.to_radians(), xi_r_deg.to_radians());
        Ok(Scenario { radio, r_los, paths, xi_t, xi_r, budget, bounds: BeamwidthBounds::fixed(xi_t, xi_r) })
    }

    /// Reference radio constants with the default reflection angles.
    pub fn reference() -> Self {
        Self::with_reflections(
            RadioConstants::default(),
            4.0,
            &REFERENCE_THETA_T,
            &REFERENCE_THETA_R,
            10.0,
            15.0,
            PowerBudget::default(),
        )
        .expect("reference geometry is valid")
    }

    /// One beam pair per path; the pair id is the path index.
    pub fn beam_pairs(&self) -> Vec<BeamPair> {
        self.paths
            .iter()
            .enumerate()
            .map(|(i, g)| BeamPair::new(i as u32, *g, self.xi_t, self.xi_r).expect("beamwidths validated"))
            .collect()
    }

    /// Same scenario without its LOS path.
    pub fn without_los(&self) -> Self {
        let mut s = self.clone();
        s.paths.retain(|g| g.kind != crate::channel::PathKind::Los);
        s
    }
}

pub const REFERENCE_THETA_T: [f64; 8] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0];
pub const REFERENCE_THETA_R: [f64; 8] = [20.0, 30.0, 40.0, 40.0, 60.0, 70.0, 80.0, 80.0];
