//! Three-blob dispersive readout with relaxation during integration.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::device::{ChiConvention, DeviceParams, DimonLevel};
use crate::error::{Error, Result};

pub type Iq = [f64; 2];

/// Default blob radius in units of σ.
pub const DEFAULT_RADIUS_SIGMA: f64 = 5.0;
/// Default integration time (μs).
pub const DEFAULT_T_RO_US: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    /// Blob centres for `|00⟩`, `|01⟩`, `|10⟩`.
    pub means: [Iq; 3],
    pub sigma: f64,
    pub t_ro_us: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self::circle(1.0, DEFAULT_RADIUS_SIGMA, DEFAULT_T_RO_US)
    }
}

impl ReadoutModel {
    /// Centres at 90°, 210°, 330° on a circle of `radius_sigma · σ`.
    pub fn circle(sigma: f64, radius_sigma: f64, t_ro_us: f64) -> Self {
        let r = radius_sigma * sigma;
        let at = |deg: f64| {
            let a = deg.to_radians();
            [r * a.cos(), r * a.sin()]
        };
        Self {
            means: [at(90.0), at(210.0), at(330.0)],
            sigma,
            t_ro_us,
        }
    }

    /// Centres from the Lorentzian resonator response, driven at ω_R − (χ_QR + χ_DR)/2.
    ///
    /// Each excitation pulls the resonator down by its half-shift χ.
    pub fn dispersive(params: &DeviceParams, convention: ChiConvention, amplitude: f64, sigma: f64, t_ro_us: f64) -> Result<Self> {
        let (chi_qr, chi_dr) = params.chi_pair(convention);
        let drive = params.omega_r - (chi_qr + chi_dr) / 2.0;
        let half_width = params.kappa_r / 2.0;
        let response = |res: f64| {
            let d = drive - res;
            let den = half_width * half_width + d * d;
            [amplitude * half_width * half_width / den, -amplitude * half_width * d / den]
        };
        let model = Self {
            means: [
                response(params.omega_r),
                response(params.omega_r - chi_qr),
                response(params.omega_r - chi_dr),
            ],
            sigma,
            t_ro_us,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("readout sigma must be positive"));
        }
        if !(self.t_ro_us >= 0.0 && self.t_ro_us.is_finite()) {
            return Err(Error::invalid("readout time must be >= 0"));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if self.means[i] == self.means[j] {
                    return Err(Error::invalid("readout blob centres must be distinct"));
                }
            }
        }
        Ok(())
    }

    pub fn mean_of(&self, level: DimonLevel) -> Iq {
        self.means[blob_index(level)]
    }

    /// Smallest centre-to-centre distance in units of σ.
    pub fn min_separation_sigma(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..3 {
            for j in i + 1..3 {
                let d = (self.means[i][0] - self.means[j][0]).hypot(self.means[i][1] - self.means[j][1]);
                best = best.min(d);
            }
        }
        best / self.sigma
    }
}

/// Blob that a level emits from; doubly-excited levels use a single-excitation parent.
pub fn readout_level(level: DimonLevel) -> DimonLevel {
    use DimonLevel::*;
    match level {
        G00 => G00,
        L01 | E11 | E02 => L01,
        L10 | E20 => L10,
    }
}

fn blob_index(level: DimonLevel) -> usize {
    readout_level(level).index()
}

/// Relaxation time governing decay during readout for a level (μs).
pub fn readout_t1_us(params: &DeviceParams, level: DimonLevel) -> f64 {
    match readout_level(level) {
        DimonLevel::L10 => params.t1_d_us,
        _ => params.t1_q_us,
    }
}

/// Samples one integrated IQ point.
///
/// An excited level decays at a time drawn from Exp(T1); if that falls inside
/// the window the centre is pulled toward `|00⟩` by the undecayed fraction.
/// Half of the window then lands on the ground side of the boundary, so the
/// `|00⟩` assignment rate is 1 − exp(−t_RO/(2 T1)).
pub fn generate_iq<R: Rng + ?Sized>(level: DimonLevel, model: &ReadoutModel, t1_us: f64, rng: &mut R) -> Iq {
    let target = model.mean_of(level);
    let ground = model.means[0];
    let mut centre = target;
    if readout_level(level) != DimonLevel::G00 && model.t_ro_us > 0.0 && t1_us.is_finite() && t1_us > 0.0 {
        let tau = Exp::new(1.0 / t1_us).expect("T1 > 0").sample(rng);
        if tau < model.t_ro_us {
            let f = tau / model.t_ro_us;
            centre = [
                ground[0] + f * (target[0] - ground[0]),
                ground[1] + f * (target[1] - ground[1]),
            ];
        }
    }
    let gi: f64 = rng.sample(StandardNormal);
    let gq: f64 = rng.sample(StandardNormal);
    [centre[0] + model.sigma * gi, centre[1] + model.sigma * gq]
}

/// Misassignment bound for two isotropic blobs `d` σ apart: Q(d/2).
pub fn pairwise_error_bound(separation_sigma: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(separation_sigma / (2.0 * 2f64.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;
    use crate::dynamics::shot_rng;

    #[test]
    fn default_geometry_is_equilateral() {
        let m = ReadoutModel::default();
        let sep = m.min_separation_sigma();
        assert!((sep - 5.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((m.means[0][1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_point_is_the_mean() {
        let m = ReadoutModel::circle(1e-300, 5.0, 0.0);
        let mut rng = shot_rng(1, 0);
        let p = generate_iq(DimonLevel::L01, &m, 50.0, &mut rng);
        assert!((p[0] - m.means[1][0]).abs() < 1e-200 && (p[1] - m.means[1][1]).abs() < 1e-200);
    }

    #[test]
    fn higher_levels_share_parent_blobs() {
        let m = ReadoutModel::default();
        assert_eq!(m.mean_of(DimonLevel::E11), m.mean_of(DimonLevel::L01));
        assert_eq!(m.mean_of(DimonLevel::E02), m.mean_of(DimonLevel::L01));
        assert_eq!(m.mean_of(DimonLevel::E20), m.mean_of(DimonLevel::L10));
    }

    #[test]
    fn dispersive_geometry_is_distinct() {
        let p = DeviceConfig::preset("q1").unwrap().to_params().unwrap();
        let m = ReadoutModel::dispersive(&p, ChiConvention::HalfShift, 1.0, 0.05, 1.0).unwrap();
        assert!(m.min_separation_sigma() > 1.0);
        // drive sits midway between the two single-excitation resonances
        assert!((m.means[1][0] - m.means[2][0]).abs() < 0.2);
    }

    #[test]
    fn centre_distance_bound() {
        // six sigma between centres gives Q(3) per neighbour
        assert!((pairwise_error_bound(6.0) - 1.3499e-3).abs() < 1e-6);
        assert!(pairwise_error_bound(6.0 * 3f64.sqrt()) < 1e-5);
    }
}
