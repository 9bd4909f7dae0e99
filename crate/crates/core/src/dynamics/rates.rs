//! Population dynamics on the six-level ladder.
//!
//! Generator convention: `R[(to, from)]` holds the rate from `from` to `to`
//! (1/μs), so `dp/dt = R p` and every column sums to zero.

use nalgebra::{SMatrix, SVector};

use crate::device::{DeviceParams, DimonLevel};
use crate::error::{Error, Result};

pub type Populations = [f64; 6];

type Mat6 = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    generator: Mat6,
}

impl RateMatrix {
    /// Builds a generator from off-diagonal rates; diagonals are filled in.
    pub fn from_rates(rates: &[(DimonLevel, DimonLevel, f64)]) -> Result<Self> {
        let mut g = Mat6::zeros();
        for &(from, to, rate) in rates {
            if from == to {
                return Err(Error::invalid(format!("self-transition on {from}")));
            }
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::invalid(format!("rate {from}->{to} must be finite and >= 0")));
            }
            if is_forbidden(from, to) && rate > 0.0 {
                return Err(Error::invalid(format!("direct {from}->{to} transition is forbidden")));
            }
            g[(to.index(), from.index())] += rate;
        }
        for c in 0..6 {
            let out: f64 = (0..6).filter(|&r| r != c).map(|r| g[(r, c)]).sum();
            g[(c, c)] = -out;
        }
        Ok(Self { generator: g })
    }

    pub fn rate(&self, from: DimonLevel, to: DimonLevel) -> f64 {
        if from == to {
            return 0.0;
        }
        self.generator[(to.index(), from.index())]
    }

    /// Total rate of leaving `level`.
    pub fn exit_rate(&self, level: DimonLevel) -> f64 {
        -self.generator[(level.index(), level.index())]
    }

    pub fn generator(&self) -> &SMatrix<f64, 6, 6> {
        &self.generator
    }

    pub fn is_zero(&self) -> bool {
        self.generator.iter().all(|&x| x == 0.0)
    }
}

fn is_forbidden(a: DimonLevel, b: DimonLevel) -> bool {
    matches!(
        (a, b),
        (DimonLevel::L01, DimonLevel::L10) | (DimonLevel::L10, DimonLevel::L01)
    )
}

/// Relaxation and thermal re-excitation rates of the truncated bosonic ladder.
///
/// Decay out of a level with `k` quanta in a mode happens at `k Γ`, excitation
/// into it at `k n_th Γ`. Levels beyond the six modeled ones are dropped.
pub fn build_rate_matrix(params: &DeviceParams) -> RateMatrix {
    use DimonLevel::*;
    let gd = 1.0 / params.t1_d_us;
    let gq = 1.0 / params.t1_q_us;
    let (nd, nq) = (params.n_th_d, params.n_th_q);
    let rates = [
        (L01, G00, gq),
        (L10, G00, gd),
        (E11, L01, gd),
        (E11, L10, gq),
        (E02, L01, 2.0 * gq),
        (E20, L10, 2.0 * gd),
        (G00, L01, nq * gq),
        (G00, L10, nd * gd),
        (L01, E11, nd * gd),
        (L10, E11, nq * gq),
        (L01, E02, 2.0 * nq * gq),
        (L10, E20, 2.0 * nd * gd),
    ];
    RateMatrix::from_rates(&rates).expect("ladder rates are valid for validated params")
}

fn check_stochastic(p: &Populations) -> Result<()> {
    if p.iter().any(|&x| !x.is_finite() || x < -1e-15) {
        return Err(Error::invalid("initial populations must be finite and non-negative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("initial populations sum to {s}, expected 1")));
    }
    Ok(())
}

/// `exp(R t) p0` by scaling and squaring of a truncated Taylor series.
pub fn propagate_exact(rates: &RateMatrix, p0: &Populations, t_us: f64) -> Result<Populations> {
    check_stochastic(p0)?;
    if !(t_us >= 0.0 && t_us.is_finite()) {
        return Err(Error::invalid(format!("propagation time must be >= 0, got {t_us}")));
    }
    let prop = expm(&(rates.generator * t_us));
    let v = prop * SVector::<f64, 6>::from_column_slice(p0);
    let mut out = [0.0; 6];
    for (o, x) in out.iter_mut().zip(v.iter()) {
        *o = x.max(0.0);
    }
    Ok(out)
}

fn expm(a: &Mat6) -> Mat6 {
    let norm = (0..6)
        .map(|c| a.column(c).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let mut sum = Mat6::identity();
    let mut term = Mat6::identity();
    for k in 1..=30 {
        term = term * scaled / k as f64;
        sum += term;
        if term.amax() < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Unit population vector on one level.
pub fn populations_of(level: DimonLevel) -> Populations {
    let mut p = [0.0; 6];
    p[level.index()] = 1.0;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceConfig;
    use approx::assert_relative_eq;
    use DimonLevel::*;

    fn q(name: &str) -> DeviceParams {
        DeviceConfig::preset(name).unwrap().to_params().unwrap()
    }

    #[test]
    fn q2_q_mode_decay_rate() {
        let r = build_rate_matrix(&q("q2"));
        assert_eq!(r.rate(L01, G00), 1.0 / 55.4);
    }

    #[test]
    fn zero_temperature_has_no_upward_rates() {
        let r = build_rate_matrix(&q("q1").with_n_th(0.0));
        for (from, to) in [(G00, L01), (G00, L10), (L01, E11), (L10, E11), (L01, E02), (L10, E20)] {
            assert_eq!(r.rate(from, to), 0.0);
        }
    }

    #[test]
    fn no_direct_logical_transition() {
        for name in ["q1", "q2", "q3"] {
            let r = build_rate_matrix(&q(name).with_n_th(0.1));
            assert_eq!(r.rate(L01, L10), 0.0);
            assert_eq!(r.rate(L10, L01), 0.0);
        }
        assert!(RateMatrix::from_rates(&[(L01, L10, 1.0)]).is_err());
    }

    #[test]
    fn columns_sum_to_zero() {
        let r = build_rate_matrix(&q("q3").with_n_th(0.07));
        for c in 0..6 {
            let s: f64 = r.generator().column(c).iter().sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn identity_at_time_zero() {
        let r = build_rate_matrix(&q("q1"));
        let p0 = [0.1, 0.2, 0.3, 0.2, 0.1, 0.1];
        let p = propagate_exact(&r, &p0, 0.0).unwrap();
        for (a, b) in p.iter().zip(p0.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_exponential_decay() {
        let params = q("q1").with_n_th(0.0);
        let r = build_rate_matrix(&params);
        let p = propagate_exact(&r, &populations_of(L01), params.t1_q_us).unwrap();
        assert!((p[L01.index()] - (-1.0f64).exp()).abs() < 1e-10);
        assert!((p[G00.index()] - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn no_path_between_poles_without_reexcitation() {
        let r = build_rate_matrix(&q("q1").with_n_th(0.0));
        for t in [1.0, 30.0, 500.0, 1e4] {
            let p = propagate_exact(&r, &populations_of(L01), t).unwrap();
            assert_eq!(p[L10.index()], 0.0);
        }
    }

    #[test]
    fn doubly_excited_cascade_closed_form() {
        // |02⟩ → |01⟩ at 2Γ, then |01⟩ → |00⟩ at Γ
        let params = q("q2").with_n_th(0.0);
        let r = build_rate_matrix(&params);
        let g = 1.0 / params.t1_q_us;
        let t = 40.0;
        let p = propagate_exact(&r, &populations_of(E02), t).unwrap();
        let p02 = (-2.0 * g * t).exp();
        let p01 = 2.0 * ((-g * t).exp() - (-2.0 * g * t).exp());
        assert!((p[E02.index()] - p02).abs() < 1e-10);
        assert!((p[L01.index()] - p01).abs() < 1e-10);
    }

    #[test]
    fn matches_pade_exponential() {
        let r = build_rate_matrix(&q("q3").with_n_th(0.09));
        let p0 = [0.05, 0.4, 0.35, 0.1, 0.05, 0.05];
        for t in [0.3, 17.0, 250.0, 5000.0] {
            let ours = propagate_exact(&r, &p0, t).unwrap();
            let reference = (r.generator() * t).exp() * SVector::<f64, 6>::from_column_slice(&p0);
            for i in 0..6 {
                assert!((ours[i] - reference[i]).abs() < 1e-10, "t={t} i={i}");
            }
            assert!((ours.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_stochastic_input() {
        let r = build_rate_matrix(&q("q1"));
        assert!(propagate_exact(&r, &[0.5, 0.2, 0.0, 0.0, 0.0, 0.0], 1.0).is_err());
        assert!(propagate_exact(&r, &[1.2, -0.2, 0.0, 0.0, 0.0, 0.0], 1.0).is_err());
        assert!(propagate_exact(&r, &populations_of(G00), -1.0).is_err());
    }
}
