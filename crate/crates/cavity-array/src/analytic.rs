//! Closed-form strong-coupling (RWA) and degenerate-case solutions.
//!
//! Within the fully rotating-wave model at resonance, a single excitation
//! stays in the four-state manifold
//! `{|000>e, |100>g, |010>g, |001>g}` and the rightmost-cavity amplitude
//! is `delta(t) = T [cos(lambda t) - 1] / 2` with
//! `lambda = sqrt(g^2 + J1^2 + J2^2)` and `T = 2 J1 J2 / lambda^2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::SimError;
use crate::Result;

/// Closed-form quantities of the single-excitation RWA solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScSolution {
    pub g: f64,
    pub j1: f64,
    pub j2: f64,
    /// Oscillation frequency `sqrt(g^2 + J1^2 + J2^2)`.
    pub lambda: f64,
    /// Transfer amplitude `2 J1 J2 / lambda^2`.
    pub amplitude_t: f64,
    /// Crossover parameter `g / sqrt(J1^2 + J2^2)`.
    pub crossover_gt: f64,
}

impl ScSolution {
    pub fn new(g: f64, j1: f64, j2: f64) -> Result<Self> {
        let lambda_sq = g * g + j1 * j1 + j2 * j2;
        if lambda_sq == 0.0 {
            return Err(SimError::AllCouplingsZero);
        }
        let lambda = lambda_sq.sqrt();
        let jj = (j1 * j1 + j2 * j2).sqrt();
        Ok(ScSolution {
            g,
            j1,
            j2,
            lambda,
            amplitude_t: 2.0 * j1 * j2 / lambda_sq,
            crossover_gt: if jj > 0.0 { g / jj } else { f64::INFINITY },
        })
    }
}

/// Transfer amplitude `T = 2 J1 J2 / (g^2 + J1^2 + J2^2)`.
pub fn rwa_amplitude(g: f64, j1: f64, j2: f64) -> Result<f64> {
    Ok(ScSolution::new(g, j1, j2)?.amplitude_t)
}

/// Rightmost-cavity amplitude `delta(t) = T [cos(lambda t) - 1] / 2`
/// at resonance; `|delta|^2` is the rightmost-cavity population.
pub fn rwa_delta(g: f64, j1: f64, j2: f64, t: f64) -> Result<f64> {
    let sol = ScSolution::new(g, j1, j2)?;
    Ok(sol.amplitude_t * ((sol.lambda * t).cos() - 1.0) / 2.0)
}

/// RWA population-inversion time, or `NoInversion` when the coupling
/// exceeds `sqrt(J1^2 + J2^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InversionTime {
    At(f64),
    NoInversion,
}

impl InversionTime {
    pub fn time(&self) -> Option<f64> {
        match self {
            InversionTime::At(t) => Some(*t),
            InversionTime::NoInversion => None,
        }
    }
}

/// `T_inv = arccos(1 - lambda^2 / (J1^2 + J2^2)) / lambda`;
/// `NoInversion` for `g > sqrt(J1^2 + J2^2)`.
pub fn rwa_inversion_time(g: f64, j1: f64, j2: f64) -> Result<InversionTime> {
    let sol = ScSolution::new(g, j1, j2)?;
    let jj_sq = j1 * j1 + j2 * j2;
    if jj_sq == 0.0 {
        return Ok(InversionTime::NoInversion);
    }
    let arg = 1.0 - sol.lambda * sol.lambda / jj_sq;
    if arg < -1.0 {
        return Ok(InversionTime::NoInversion);
    }
    Ok(InversionTime::At(arg.clamp(-1.0, 1.0).acos() / sol.lambda))
}

/// Degenerate-qubit photon-number difference
/// `Delta N(t) = cos(sqrt(2) J t)` for homogeneous hopping, independent
/// of the cavity-qubit coupling.
pub fn degenerate_delta_n(j: f64, t: f64) -> f64 {
    (std::f64::consts::SQRT_2 * j * t).cos()
}

/// Complex amplitudes of the single-excitation manifold
/// `(alpha, beta, gamma, delta)` on `{|000>e, |100>g, |010>g, |001>g}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleExcitationAmplitudes {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub gamma: Complex64,
    pub delta: Complex64,
}

impl SingleExcitationAmplitudes {
    pub fn norm_sqr(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr() + self.gamma.norm_sqr() + self.delta.norm_sqr()
    }
}

/// Evolve `|100>g` for time `t` inside the single-excitation manifold by
/// spectral solution of the 4x4 coupling matrix (resonant case; the
/// common diagonal shift contributes only a global phase).
pub fn single_excitation_evolution(
    g: f64,
    j1: f64,
    j2: f64,
    t: f64,
) -> Result<SingleExcitationAmplitudes> {
    ScSolution::new(g, j1, j2)?;
    // Basis order (alpha, beta, gamma, delta).
    let h4 = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.0, g, 0.0, //
            0.0, 0.0, -j1, 0.0, //
            g, -j1, 0.0, -j2, //
            0.0, 0.0, -j2, 0.0,
        ],
    );
    let eig = h4.symmetric_eigen();
    let psi0 = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
    // psi(t) = sum_k e^{-i E_k t} v_k <v_k|psi0>
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for k in 0..4 {
        let vk = eig.eigenvectors.column(k);
        let weight: f64 = vk.dot(&psi0);
        let phase = Complex64::from_polar(1.0, -eig.eigenvalues[k] * t);
        for (i, o) in out.iter_mut().enumerate() {
            *o += phase * (weight * vk[i]);
        }
    }
    Ok(SingleExcitationAmplitudes {
        alpha: out[0],
        beta: out[1],
        gamma: out[2],
        delta: out[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn amplitude_closed_form_values() {
        // g=0, J1=J2: T = 1.
        assert_abs_diff_eq!(rwa_amplitude(0.0, 0.1, 0.1).unwrap(), 1.0, epsilon = 1e-14);
        // g=0.002, J1=J2=0.001: T = 2e-6 / 6e-6 = 1/3.
        assert_abs_diff_eq!(
            rwa_amplitude(0.002, 0.001, 0.001).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        // g=0, J1=0.001, J2=0.005: T = 2*5e-6/26e-6 = 5/13.
        assert_abs_diff_eq!(
            rwa_amplitude(0.0, 0.001, 0.005).unwrap(),
            5.0 / 13.0,
            epsilon = 1e-12
        );
        assert!(rwa_amplitude(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn amplitude_is_maximal_at_matched_hopping() {
        // Over J2 at fixed (g, J1), Eq's argmax sits at J2 = sqrt(g^2 + J1^2).
        let g = 0.01f64;
        let j1 = 0.001;
        let j2_star = f64::sqrt(g * g + j1 * j1);
        let t_star = rwa_amplitude(g, j1, j2_star).unwrap();
        for j2 in [0.5 * j2_star, 0.9 * j2_star, 1.1 * j2_star, 2.0 * j2_star] {
            assert!(rwa_amplitude(g, j1, j2).unwrap() < t_star);
        }
        // g = 0: maximum at J2 = J1 with T = 1.
        assert_abs_diff_eq!(rwa_amplitude(0.0, 0.003, 0.003).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn transfer_never_complete_for_finite_coupling() {
        for g in [1e-4, 1e-3, 0.01, 0.1] {
            for j2 in [0.5e-3, 1e-3, 2e-3, 1e-2] {
                assert!(rwa_amplitude(g, 1e-3, j2).unwrap() < 1.0);
            }
        }
    }

    #[test]
    fn delta_profile() {
        let (g, j1, j2) = (0.002, 0.001, 0.001);
        let sol = ScSolution::new(g, j1, j2).unwrap();
        assert_abs_diff_eq!(rwa_delta(g, j1, j2, 0.0).unwrap(), 0.0, epsilon = 1e-14);
        // t = pi/lambda: delta = -T.
        let t_peak = std::f64::consts::PI / sol.lambda;
        assert_abs_diff_eq!(
            rwa_delta(g, j1, j2, t_peak).unwrap(),
            -sol.amplitude_t,
            epsilon = 1e-12
        );
        // |delta(t)|^2 <= T^2 everywhere.
        for k in 0..200 {
            let t = k as f64 * 10.0;
            let d = rwa_delta(g, j1, j2, t).unwrap();
            assert!(d * d <= sol.amplitude_t * sol.amplitude_t + 1e-15);
        }
    }

    #[test]
    fn inversion_time_closed_form() {
        // g = 0, J1 = J2 = J: arccos(0)/lambda = pi / (2 sqrt(2) J).
        let j = 0.1;
        let expect = std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2 * j);
        match rwa_inversion_time(0.0, j, j).unwrap() {
            InversionTime::At(t) => assert_abs_diff_eq!(t, expect, epsilon = 1e-12),
            InversionTime::NoInversion => panic!("expected inversion"),
        }
        // Boundary g = sqrt(J1^2 + J2^2): arccos(-1)/lambda = pi/lambda.
        let g = (2.0f64).sqrt() * j;
        let lambda = (g * g + 2.0 * j * j).sqrt();
        match rwa_inversion_time(g, j, j).unwrap() {
            InversionTime::At(t) => {
                assert_abs_diff_eq!(t, std::f64::consts::PI / lambda, epsilon = 1e-12)
            }
            InversionTime::NoInversion => panic!("boundary case still inverts"),
        }
        // Just above the boundary: no inversion.
        assert_eq!(
            rwa_inversion_time(1.001 * g, j, j).unwrap(),
            InversionTime::NoInversion
        );
    }

    #[test]
    fn degenerate_delta_profile() {
        let j = 0.1;
        assert_abs_diff_eq!(degenerate_delta_n(j, 0.0), 1.0, epsilon = 1e-14);
        let t_full = std::f64::consts::PI / (std::f64::consts::SQRT_2 * j);
        assert_abs_diff_eq!(degenerate_delta_n(j, t_full), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_excitation_initial_condition() {
        let amps = single_excitation_evolution(0.01, 0.005, 0.007, 0.0).unwrap();
        assert_abs_diff_eq!(amps.beta.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amps.alpha.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amps.gamma.norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amps.delta.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_excitation_delta_matches_closed_form() {
        for &(g, j1, j2) in &[
            (0.002, 0.001, 0.001),
            (0.01, 0.001, 0.003),
            (0.0, 0.005, 0.005),
            (0.05, 0.02, 0.01),
        ] {
            for k in 0..50 {
                let t = k as f64 * 7.3;
                let amps = single_excitation_evolution(g, j1, j2, t).unwrap();
                let expect = rwa_delta(g, j1, j2, t).unwrap();
                assert_abs_diff_eq!(amps.delta.re, expect, epsilon = 1e-10);
                assert_abs_diff_eq!(amps.delta.im, 0.0, epsilon = 1e-10);
                assert_abs_diff_eq!(amps.norm_sqr(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn dark_state_overlap_is_conserved() {
        // |E> = (g |100>g + J |000>e)/sqrt(g^2+J^2) is stationary in the
        // homogeneous case; the overlap of psi(t) with it stays fixed.
        let (g, j) = (0.03, 0.01);
        let norm = f64::sqrt(g * g + j * j);
        let overlap_at = |t: f64| {
            let a = single_excitation_evolution(g, j, j, t).unwrap();
            // <E|psi> with E = (alpha: j, beta: g)/norm
            (a.alpha * (j / norm) + a.beta * (g / norm)).norm()
        };
        let base = overlap_at(0.0);
        assert!(base > 0.0);
        for k in 1..40 {
            assert_abs_diff_eq!(overlap_at(k as f64 * 13.7), base, epsilon = 1e-10);
        }
    }
}
