//! Device parameters and closed-form dimon physics.
//!
//! Frequencies are held internally as angular frequencies in rad/s. Coherence
//! times stay in microseconds, matching the rate units used by the dynamics
//! module (1/μs). Config files use the laboratory presentation: ω/2π in GHz,
//! α/2π, η/2π, κ/2π and 2χ/2π in MHz, times in μs.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_TH: f64 = 0.02;

pub fn ghz_to_rad(ghz: f64) -> f64 {
    2.0 * PI * ghz * 1e9
}

pub fn mhz_to_rad(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6
}

pub fn rad_to_ghz(w: f64) -> f64 {
    w / (2.0 * PI * 1e9)
}

pub fn rad_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e6)
}

/// One of the six ladder states `|mn⟩` (m D-mode excitations, n Q-mode excitations).
///
/// The declaration order is the canonical index order used by rate matrices
/// and population vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DimonLevel {
    #[serde(rename = "00")]
    G00,
    #[serde(rename = "01")]
    L01,
    #[serde(rename = "10")]
    L10,
    #[serde(rename = "11")]
    E11,
    #[serde(rename = "02")]
    E02,
    #[serde(rename = "20")]
    E20,
}

impl DimonLevel {
    pub const COUNT: usize = 6;
    pub const ALL: [DimonLevel; 6] = [
        DimonLevel::G00,
        DimonLevel::L01,
        DimonLevel::L10,
        DimonLevel::E11,
        DimonLevel::E02,
        DimonLevel::E20,
    ];
    /// The three states the end-of-line readout distinguishes, in tie-break order.
    pub const READOUT: [DimonLevel; 3] = [DimonLevel::G00, DimonLevel::L01, DimonLevel::L10];

    /// Logical |0⟩_L.
    pub const LOGICAL_ZERO: DimonLevel = DimonLevel::L10;
    /// Logical |1⟩_L.
    pub const LOGICAL_ONE: DimonLevel = DimonLevel::L01;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// `(m, n)` excitation numbers of the D and Q modes.
    pub fn excitations(self) -> (u32, u32) {
        match self {
            DimonLevel::G00 => (0, 0),
            DimonLevel::L01 => (0, 1),
            DimonLevel::L10 => (1, 0),
            DimonLevel::E11 => (1, 1),
            DimonLevel::E02 => (0, 2),
            DimonLevel::E20 => (2, 0),
        }
    }

    pub fn from_excitations(m: u32, n: u32) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.excitations() == (m, n))
    }

    pub fn is_logical(self) -> bool {
        matches!(self, DimonLevel::L01 | DimonLevel::L10)
    }

    pub fn label(self) -> &'static str {
        match self {
            DimonLevel::G00 => "00",
            DimonLevel::L01 => "01",
            DimonLevel::L10 => "10",
            DimonLevel::E11 => "11",
            DimonLevel::E02 => "02",
            DimonLevel::E20 => "20",
        }
    }
}

impl fmt::Display for DimonLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DimonLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('|').trim_end_matches('>').trim_end_matches('⟩');
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.label() == t)
            .ok_or_else(|| Error::invalid(format!("unknown level label {s:?}")))
    }
}

/// Physical mode of the dimon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    D,
    Q,
}

impl Mode {
    /// Level holding one excitation of this mode and none of the other.
    pub fn excited_level(self) -> DimonLevel {
        match self {
            Mode::D => DimonLevel::L10,
            Mode::Q => DimonLevel::L01,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::D => "D",
            Mode::Q => "Q",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "D" | "d" => Ok(Mode::D),
            "Q" | "q" => Ok(Mode::Q),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// How the stored dispersive shifts enter the photon-shot-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiConvention {
    /// χ is half the full resonator shift 2χ.
    #[default]
    HalfShift,
    /// The full shift 2χ is used in place of χ.
    FullShift,
}

/// Parameters of one dimon and its readout resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_d: f64,
    pub omega_q: f64,
    pub alpha_d: f64,
    pub alpha_q: f64,
    pub eta: f64,
    pub omega_r: f64,
    pub kappa_r: f64,
    /// Dispersive half-shifts χ (rad/s).
    pub chi_dr: f64,
    pub chi_qr: f64,
    pub g_qr: Option<f64>,
    pub t1_d_us: f64,
    pub t1_q_us: f64,
    pub t2e_d_us: f64,
    pub t2e_q_us: f64,
    pub t2r_d_us: f64,
    pub t2r_q_us: f64,
    /// E_J1/E_J2 in canonical order (≤ 1).
    pub r_junction: f64,
    pub n_th_d: f64,
    pub n_th_q: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let freqs = [
            ("omega_D", self.omega_d),
            ("omega_Q", self.omega_q),
            ("omega_R", self.omega_r),
        ];
        for (name, v) in freqs {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.omega_q <= self.omega_d {
            return Err(Error::invalid(format!(
                "omega_Q ({:.4} GHz) must exceed omega_D ({:.4} GHz)",
                rad_to_ghz(self.omega_q),
                rad_to_ghz(self.omega_d)
            )));
        }
        if !(self.kappa_r > 0.0) {
            return Err(Error::invalid("kappa_R must be positive"));
        }
        let times = [
            ("T1_D", self.t1_d_us),
            ("T1_Q", self.t1_q_us),
            ("T2E_D", self.t2e_d_us),
            ("T2E_Q", self.t2e_q_us),
            ("T2R_D", self.t2r_d_us),
            ("T2R_Q", self.t2r_q_us),
        ];
        for (name, t) in times {
            // +inf is allowed and means the channel is switched off
            if t.is_nan() || t <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {t}")));
            }
        }
        if !(self.r_junction > 0.0 && self.r_junction <= 1.0) {
            return Err(Error::invalid(format!(
                "r_junction must lie in (0, 1] after canonical ordering, got {}",
                self.r_junction
            )));
        }
        for (name, n) in [("n_th_D", self.n_th_d), ("n_th_Q", self.n_th_q)] {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {n}")));
            }
        }
        Ok(())
    }

    /// Mode detuning Δ = ω_Q − ω_D (rad/s).
    pub fn detuning(&self) -> f64 {
        self.omega_q - self.omega_d
    }

    pub fn with_n_th(mut self, n_th: f64) -> Self {
        self.n_th_d = n_th;
        self.n_th_q = n_th;
        self
    }

    pub fn t1_us(&self, mode: Mode) -> f64 {
        match mode {
            Mode::D => self.t1_d_us,
            Mode::Q => self.t1_q_us,
        }
    }

    /// Shifts entering the photon-shot-noise ratio under the given convention.
    pub fn chi_pair(&self, convention: ChiConvention) -> (f64, f64) {
        match convention {
            ChiConvention::HalfShift => (self.chi_qr, self.chi_dr),
            ChiConvention::FullShift => (2.0 * self.chi_qr, 2.0 * self.chi_dr),
        }
    }

    pub fn photon_dephasing_ratio(&self, convention: ChiConvention) -> Result<DephasingRatio> {
        let (qr, dr) = self.chi_pair(convention);
        photon_dephasing_ratio(qr, dr, self.kappa_r)
    }

    pub fn junction_sensitivity(&self) -> Result<JunctionSensitivity> {
        junction_sensitivity(self.r_junction, self.detuning())
    }

    pub fn level_energy(&self, level: DimonLevel) -> f64 {
        let (m, n) = level.excitations();
        level_energy(self, m, n)
    }
}

/// On-disk device description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct DeviceConfig {
    pub omega_D_GHz: f64,
    pub omega_Q_GHz: f64,
    pub alpha_D_MHz: f64,
    pub alpha_Q_MHz: f64,
    pub eta_MHz: f64,
    pub omega_R_GHz: f64,
    pub kappa_R_MHz: f64,
    pub two_chi_DR_MHz: f64,
    pub two_chi_QR_MHz: f64,
    pub T1_D_us: f64,
    pub T1_Q_us: f64,
    pub T2E_D_us: f64,
    pub T2E_Q_us: f64,
    pub T2R_D_us: f64,
    pub T2R_Q_us: f64,
    pub r_junction: f64,
    #[serde(default = "default_n_th")]
    pub n_th: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_QR_MHz: Option<f64>,
}

fn default_n_th() -> f64 {
    DEFAULT_N_TH
}

const Q1_JSON: &str = include_str!("../../../configs/q1.json");
const Q2_JSON: &str = include_str!("../../../configs/q2.json");
const Q3_JSON: &str = include_str!("../../../configs/q3.json");

impl DeviceConfig {
    /// One of the shipped device descriptions: `q1`, `q2` or `q3`.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name.to_ascii_lowercase().as_str() {
            "q1" => Q1_JSON,
            "q2" => Q2_JSON,
            "q3" => Q3_JSON,
            other => return Err(Error::invalid(format!("unknown device preset {other:?}"))),
        };
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    /// Converts to internal units. Full shifts 2χ are halved here.
    pub fn to_params(&self) -> Result<DeviceParams> {
        let r = if self.r_junction > 1.0 {
            1.0 / self.r_junction
        } else {
            self.r_junction
        };
        let p = DeviceParams {
            omega_d: ghz_to_rad(self.omega_D_GHz),
            omega_q: ghz_to_rad(self.omega_Q_GHz),
            alpha_d: mhz_to_rad(self.alpha_D_MHz),
            alpha_q: mhz_to_rad(self.alpha_Q_MHz),
            eta: mhz_to_rad(self.eta_MHz),
            omega_r: ghz_to_rad(self.omega_R_GHz),
            kappa_r: mhz_to_rad(self.kappa_R_MHz),
            chi_dr: mhz_to_rad(self.two_chi_DR_MHz / 2.0),
            chi_qr: mhz_to_rad(self.two_chi_QR_MHz / 2.0),
            g_qr: self.g_QR_MHz.map(mhz_to_rad),
            t1_d_us: self.T1_D_us,
            t1_q_us: self.T1_Q_us,
            t2e_d_us: self.T2E_D_us,
            t2e_q_us: self.T2E_Q_us,
            t2r_d_us: self.T2R_D_us,
            t2r_q_us: self.T2R_Q_us,
            r_junction: r,
            n_th_d: self.n_th,
            n_th_q: self.n_th,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Energy of `|mn⟩` relative to vacuum (rad/s).
///
/// Symbol values are substituted verbatim, including the sign of η.
pub fn level_energy(params: &DeviceParams, m: u32, n: u32) -> f64 {
    let (m, n) = (m as f64, n as f64);
    m * params.omega_d + n * params.omega_q
        - params.alpha_d / 2.0 * m * (m - 1.0)
        - params.alpha_q / 2.0 * n * (n - 1.0)
        - params.eta * m * n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveShifts {
    pub chi_qr: f64,
    pub chi_dr: f64,
    /// g/(ω_R − ω_Q); the dispersive approximation wants this small.
    pub coupling_ratio: f64,
}

/// Dispersive shifts of the Q and D modes inherited through the Q–resonator coupling.
pub fn dispersive_shifts(
    g_qr: f64,
    omega_r: f64,
    omega_q: f64,
    alpha_q: f64,
    eta: f64,
) -> Result<DispersiveShifts> {
    let detuning = omega_r - omega_q;
    if detuning == 0.0 {
        return Err(Error::Domain(
            "resonator and Q mode are resonant; dispersive model undefined".into(),
        ));
    }
    let ratio = g_qr / detuning;
    if ratio.abs() > 0.1 {
        log::warn!("g/(omega_R - omega_Q) = {ratio:.3} is outside the dispersive regime");
    }
    let r2 = ratio * ratio;
    Ok(DispersiveShifts {
        chi_qr: alpha_q * r2,
        chi_dr: eta * r2,
        coupling_ratio: ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DephasingRatio {
    /// Γ_φ^L / Γ_φ^phys.
    pub ratio: f64,
    /// 1 − ratio.
    pub reduction: f64,
}

/// Ratio of logical to average physical photon-shot-noise dephasing.
///
/// Inputs must share units; the result is dimensionless.
pub fn photon_dephasing_ratio(chi_qr: f64, chi_dr: f64, kappa: f64) -> Result<DephasingRatio> {
    let mean = (chi_qr + chi_dr) / 2.0;
    if mean == 0.0 {
        return Err(Error::Domain("mean dispersive shift is zero".into()));
    }
    let diff = chi_qr - chi_dr;
    let k2 = kappa * kappa;
    let ratio = diff * diff * (k2 + 4.0 * mean * mean) / (mean * mean * (k2 + 4.0 * diff * diff));
    Ok(DephasingRatio {
        ratio,
        reduction: 1.0 - ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JunctionSensitivity {
    /// 1 − √r.
    pub factor: f64,
    /// (1 − √r)/Δ in seconds per radian; the overall prefactor is not modeled.
    pub sensitivity: f64,
}

/// Sensitivity of the mode detuning to junction-energy fluctuations.
///
/// Ratios above one are put in canonical order (r → 1/r).
pub fn junction_sensitivity(r: f64, delta: f64) -> Result<JunctionSensitivity> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("junction ratio must be positive, got {r}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("detuning must be positive, got {delta}")));
    }
    let r = if r > 1.0 { 1.0 / r } else { r };
    let factor = 1.0 - r.sqrt();
    Ok(JunctionSensitivity {
        factor,
        sensitivity: factor / delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q1() -> DeviceParams {
        DeviceConfig::preset("q1").unwrap().to_params().unwrap()
    }

    #[test]
    fn vacuum_energy_is_zero() {
        assert_eq!(level_energy(&q1(), 0, 0), 0.0);
    }

    #[test]
    fn single_excitation_energies_match_table() {
        let p = q1();
        assert_relative_eq!(level_energy(&p, 1, 0), ghz_to_rad(4.707), max_relative = 1e-14);
        assert_relative_eq!(level_energy(&p, 0, 1), ghz_to_rad(5.468), max_relative = 1e-14);
    }

    #[test]
    fn doubly_excited_energy_uses_eta_verbatim() {
        // 4.707 + 5.468 - (-0.283) GHz
        assert_relative_eq!(level_energy(&q1(), 1, 1), ghz_to_rad(10.458), max_relative = 1e-12);
    }

    #[test]
    fn zero_coupling_gives_zero_shift() {
        let p = q1();
        let s = dispersive_shifts(0.0, p.omega_r, p.omega_q, p.alpha_q, p.eta).unwrap();
        assert_eq!(s.chi_qr, 0.0);
        assert_eq!(s.chi_dr, 0.0);
    }

    #[test]
    fn shift_ratio_equals_eta_over_alpha() {
        let p = q1();
        let s = dispersive_shifts(mhz_to_rad(45.0), p.omega_r, p.omega_q, p.alpha_q, p.eta).unwrap();
        assert_relative_eq!(s.chi_dr / s.chi_qr, p.eta / p.alpha_q, max_relative = 1e-14);
    }

    #[test]
    fn q1_shift_at_five_percent_coupling() {
        let p = q1();
        let g = 0.05 * (p.omega_r - p.omega_q);
        let s = dispersive_shifts(g, p.omega_r, p.omega_q, mhz_to_rad(-156.0), p.eta).unwrap();
        assert_relative_eq!(rad_to_mhz(s.chi_qr), -0.39, max_relative = 1e-12);
    }

    #[test]
    fn resonant_coupling_is_an_error() {
        let w = ghz_to_rad(5.0);
        assert!(matches!(
            dispersive_shifts(1.0, w, w, -1.0, -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn equal_shifts_are_fully_protected() {
        let r = photon_dephasing_ratio(0.8, 0.8, 0.5).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert_eq!(r.reduction, 1.0);
    }

    #[test]
    fn one_sided_shift_limit() {
        let (c, k) = (1.0, 0.3);
        let expected = 4.0 * (k * k + c * c) / (k * k + 4.0 * c * c);
        let r = photon_dephasing_ratio(c, 0.0, k).unwrap();
        assert_relative_eq!(r.ratio, expected, max_relative = 1e-14);
        let narrow = photon_dephasing_ratio(c, 0.0, 1e-9).unwrap();
        assert_relative_eq!(narrow.ratio, 1.0, max_relative = 1e-9);
        let wide = photon_dephasing_ratio(c, 0.0, 1e9).unwrap();
        assert_relative_eq!(wide.ratio, 4.0, max_relative = 1e-9);
    }

    #[test]
    fn q1_half_shift_ratio() {
        let r = photon_dephasing_ratio(0.93, 0.71, 0.81).unwrap();
        assert!((r.ratio - 0.2834).abs() < 5e-5, "{}", r.ratio);
        let from_config = q1().photon_dephasing_ratio(ChiConvention::HalfShift).unwrap();
        assert_relative_eq!(from_config.ratio, r.ratio, max_relative = 1e-12);
    }

    #[test]
    fn q1_full_shift_reduction() {
        let r = q1().photon_dephasing_ratio(ChiConvention::FullShift).unwrap();
        assert!((r.reduction - 0.4256).abs() < 1e-3, "{}", r.reduction);
    }

    #[test]
    fn zero_mean_shift_is_an_error() {
        assert!(photon_dephasing_ratio(0.5, -0.5, 1.0).is_err());
    }

    #[test]
    fn symmetric_junctions_are_protected() {
        let s = junction_sensitivity(1.0, 1.0).unwrap();
        assert_eq!(s.factor, 0.0);
        assert_eq!(s.sensitivity, 0.0);
    }

    #[test]
    fn junction_factors() {
        let s = junction_sensitivity(0.963, 1.0).unwrap();
        assert!((s.factor - 0.01867).abs() < 1e-5);
        let delta = ghz_to_rad(1.041);
        let s = junction_sensitivity(0.931, delta).unwrap();
        assert!((s.factor - 0.03512).abs() < 1e-5);
        assert_relative_eq!(s.sensitivity, s.factor / delta, max_relative = 1e-15);
    }

    #[test]
    fn junction_ratio_is_canonicalised() {
        let a = junction_sensitivity(0.9, 2.0).unwrap();
        let b = junction_sensitivity(1.0 / 0.9, 2.0).unwrap();
        assert_relative_eq!(a.factor, b.factor, max_relative = 1e-14);
        assert!(junction_sensitivity(0.0, 1.0).is_err());
        assert!(junction_sensitivity(-0.5, 1.0).is_err());
    }

    #[test]
    fn presets_load_and_halve_shifts() {
        let cfg = DeviceConfig::preset("q2").unwrap();
        let p = cfg.to_params().unwrap();
        assert_relative_eq!(rad_to_mhz(p.chi_qr), 1.09, max_relative = 1e-12);
        assert_relative_eq!(rad_to_mhz(p.chi_dr), 0.815, max_relative = 1e-12);
        assert_eq!(p.t1_q_us, 55.4);
        assert_eq!(p.n_th_d, DEFAULT_N_TH);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut v: serde_json::Value = serde_json::from_str(Q1_JSON).unwrap();
        v["bogus"] = serde_json::json!(1.0);
        assert!(DeviceConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn invalid_mode_order_rejected() {
        let mut cfg = DeviceConfig::preset("q1").unwrap();
        cfg.omega_D_GHz = 6.0;
        assert!(cfg.to_params().is_err());
    }

    #[test]
    fn level_labels_round_trip() {
        for l in DimonLevel::ALL {
            assert_eq!(l.label().parse::<DimonLevel>().unwrap(), l);
            assert_eq!(DimonLevel::from_index(l.index()), Some(l));
            let (m, n) = l.excitations();
            assert_eq!(DimonLevel::from_excitations(m, n), Some(l));
        }
        assert_eq!("|01>".parse::<DimonLevel>().unwrap(), DimonLevel::L01);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = DeviceParams> {
            (3.0..5.0f64, 0.2..1.5f64, -300.0..-50.0f64, -300.0..-50.0f64, -400.0..400.0f64)
                .prop_map(|(wd, delta, ad, aq, eta)| {
                    let mut p = q1();
                    p.omega_d = ghz_to_rad(wd);
                    p.omega_q = ghz_to_rad(wd + delta);
                    p.alpha_d = mhz_to_rad(ad);
                    p.alpha_q = mhz_to_rad(aq);
                    p.eta = mhz_to_rad(eta);
                    p
                })
        }

        proptest! {
            #[test]
            fn transition_frequency_identity(p in params()) {
                prop_assert_eq!(level_energy(&p, 1, 0) - level_energy(&p, 0, 0), p.omega_d);
                prop_assert_eq!(level_energy(&p, 0, 1) - level_energy(&p, 0, 0), p.omega_q);
            }

            #[test]
            fn energy_linear_in_eta(p in params(), m in 0u32..3, n in 0u32..3, s in 0.1..3.0f64) {
                let mut q = p.clone();
                q.eta = p.eta * s;
                let lhs = level_energy(&q, m, n) - level_energy(&p, m, n);
                let rhs = -(s - 1.0) * p.eta * (m * n) as f64;
                prop_assert!((lhs - rhs).abs() <= 1e-6 * p.omega_q);
            }

            #[test]
            fn dephasing_ratio_scale_invariant(a in 0.1..3.0f64, b in 0.1..3.0f64, k in 0.05..3.0f64, s in 0.01..100.0f64) {
                let r1 = photon_dephasing_ratio(a, b, k).unwrap().ratio;
                let r2 = photon_dephasing_ratio(s * a, s * b, s * k).unwrap().ratio;
                prop_assert!((r1 - r2).abs() <= 1e-10 * r1.abs().max(1e-12));
            }

            #[test]
            fn dephasing_ratio_symmetric(a in 0.1..3.0f64, b in 0.1..3.0f64, k in 0.05..3.0f64) {
                let r1 = photon_dephasing_ratio(a, b, k).unwrap().ratio;
                let r2 = photon_dephasing_ratio(b, a, k).unwrap().ratio;
                prop_assert!((r1 - r2).abs() <= 1e-12 * r1.abs().max(1e-12));
            }

            #[test]
            fn junction_sensitivity_decreasing(r1 in 0.01..1.0f64, r2 in 0.01..1.0f64) {
                prop_assume!(r1 < r2);
                let s1 = junction_sensitivity(r1, 1.0).unwrap().sensitivity;
                let s2 = junction_sensitivity(r2, 1.0).unwrap().sensitivity;
                prop_assert!(s1 > s2);
            }
        }
    }
}
