//! Hamiltonian assembly for the three-cavity array with a central qubit.
//!
//! The full model is
//!
//! ```text
//! H = sum_l omega a_l^dag a_l + (omega_q/2) sigma_z + g sigma_x (a_2^dag + a_2)
//!     - sum_l J_l (a_l^dag a_{l+1} + a_l^dag a_{l+1}^dag + H.c.)
//! ```
//!
//! with counter-rotating terms in both the cavity-qubit and the
//! cavity-cavity interaction. Energies are in units of the resonator
//! frequency, so `omega = 1` throughout.
//!
//! Note that the full hopping group collapses to a product of quadratures:
//! `a_l^dag a_m + a_l a_m^dag + a_l^dag a_m^dag + a_l a_m = X_l X_m` with
//! `X = a + a^dag`. The propagator's split exploits this.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::fock::{mode_op, qubit_op, ModeOpKind, Operator, QubitOpKind, SpaceDescriptor};
use crate::Result;

/// Which interaction structure to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Counter-rotating terms kept in both interactions.
    Full,
    /// RWA on the cavity-qubit coupling only.
    QubitRwa,
    /// RWA on both the cavity-qubit coupling and the hopping.
    FullRwa,
    /// Degenerate-qubit effective model: no sigma_z term, coupling g/2,
    /// RWA hopping.
    DegenerateEffective,
}

/// Physical parameters in units of the resonator frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Cavity frequency; fixed to 1 (sets the energy scale).
    pub omega: f64,
    /// Qubit frequency in units of omega.
    pub omega_q: f64,
    /// Cavity-qubit coupling in units of omega.
    pub g: f64,
    /// Hopping amplitude between cavities 1 and 2.
    pub j1: f64,
    /// Hopping amplitude between cavities 2 and 3.
    pub j2: f64,
    pub variant: Variant,
}

impl SystemParams {
    pub fn new(omega_q: f64, g: f64, j1: f64, j2: f64, variant: Variant) -> Result<Self> {
        let p = SystemParams {
            omega: 1.0,
            omega_q,
            g,
            j1,
            j2,
            variant,
        };
        p.validate()?;
        Ok(p)
    }

    /// Full model at resonance parameters.
    pub fn full(omega_q: f64, g: f64, j1: f64, j2: f64) -> Result<Self> {
        Self::new(omega_q, g, j1, j2, Variant::Full)
    }

    /// Fully rotating-wave model.
    pub fn full_rwa(omega_q: f64, g: f64, j1: f64, j2: f64) -> Result<Self> {
        Self::new(omega_q, g, j1, j2, Variant::FullRwa)
    }

    /// Degenerate-qubit effective model (omega_q drops out).
    pub fn degenerate(g: f64, j1: f64, j2: f64) -> Result<Self> {
        Self::new(0.0, g, j1, j2, Variant::DegenerateEffective)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.omega - 1.0).abs() > 1e-12 {
            return Err(SimError::InvalidParams(
                "omega must be 1 (energies are in units of the resonator frequency)".into(),
            ));
        }
        if self.g < 0.0 || self.j1 < 0.0 || self.j2 < 0.0 {
            return Err(SimError::InvalidParams(format!(
                "couplings must be nonnegative: g={}, j1={}, j2={}",
                self.g, self.j1, self.j2
            )));
        }
        if !self.omega_q.is_finite() || !self.g.is_finite() || !self.j1.is_finite() || !self.j2.is_finite()
        {
            return Err(SimError::InvalidParams("parameters must be finite".into()));
        }
        Ok(())
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Free part: `sum_l omega n_l + (omega_q/2) sigma_z` (diagonal).
///
/// `include_qubit = false` drops the sigma_z term (degenerate model).
pub fn free_hamiltonian(space: SpaceDescriptor, params: &SystemParams, include_qubit: bool) -> Operator {
    let mut triplets = Vec::with_capacity(space.dim());
    for idx in 0..space.dim() {
        let (occ, q) = space.decode(idx);
        let mut e = params.omega * (occ[0] + occ[1] + occ[2]) as f64;
        if include_qubit {
            e += 0.5 * params.omega_q * q.sigma_z();
        }
        triplets.push((idx, idx, re(e)));
    }
    Operator::from_triplets(space, triplets, true).expect("diagonal operator is hermitian")
}

/// Cavity-qubit coupling `c * sigma_x (a_2^dag + a_2)`.
pub fn qubit_coupling_full(space: SpaceDescriptor, c: f64) -> Operator {
    let sx = qubit_op(space, QubitOpKind::SigmaX).expect("valid space");
    let a2 = mode_op(space, 2, ModeOpKind::Annihilate).expect("valid cavity");
    let adag2 = mode_op(space, 2, ModeOpKind::Create).expect("valid cavity");
    let x2 = a2
        .linear_combination(re(1.0), &adag2, re(1.0))
        .expect("same space");
    let prod = sx.matmul(&x2).expect("same space");
    prod.linear_combination(re(c), &Operator::zeros(space), re(0.0))
        .expect("same space")
}

/// RWA cavity-qubit coupling `c * (sigma_+ a_2 + sigma_- a_2^dag)`.
pub fn qubit_coupling_rwa(space: SpaceDescriptor, c: f64) -> Operator {
    let sp = qubit_op(space, QubitOpKind::SigmaPlus).expect("valid space");
    let sm = qubit_op(space, QubitOpKind::SigmaMinus).expect("valid space");
    let a2 = mode_op(space, 2, ModeOpKind::Annihilate).expect("valid cavity");
    let adag2 = mode_op(space, 2, ModeOpKind::Create).expect("valid cavity");
    let up = sp.matmul(&a2).expect("same space");
    let down = sm.matmul(&adag2).expect("same space");
    up.linear_combination(re(c), &down, re(c)).expect("same space")
}

/// Hopping between `cavity` and `cavity+1` with amplitude `-j`.
///
/// Full form carries the counter-rotating pair terms and equals
/// `-j X_l X_{l+1}`; the RWA form keeps only `a^dag a + H.c.`.
pub fn hopping_term(space: SpaceDescriptor, cavity: usize, j: f64, rwa: bool) -> Result<Operator> {
    if !(1..=2).contains(&cavity) {
        return Err(SimError::CavityOutOfRange(cavity));
    }
    let al = mode_op(space, cavity, ModeOpKind::Annihilate)?;
    let adagl = mode_op(space, cavity, ModeOpKind::Create)?;
    let ar = mode_op(space, cavity + 1, ModeOpKind::Annihilate)?;
    let adagr = mode_op(space, cavity + 1, ModeOpKind::Create)?;

    // a_l^dag a_r + a_r^dag a_l
    let exchange = adagl
        .matmul(&ar)?
        .linear_combination(re(1.0), &adagr.matmul(&al)?, re(1.0))?;
    if rwa {
        return exchange.linear_combination(re(-j), &Operator::zeros(space), re(0.0));
    }
    // + a_l^dag a_r^dag + a_l a_r
    let pair = adagl
        .matmul(&adagr)?
        .linear_combination(re(1.0), &al.matmul(&ar)?, re(1.0))?;
    exchange
        .linear_combination(re(1.0), &pair, re(1.0))?
        .linear_combination(re(-j), &Operator::zeros(space), re(0.0))
}

/// Full Hamiltonian with counter-rotating terms in both interactions.
pub fn hamiltonian_full(space: SpaceDescriptor, params: &SystemParams) -> Operator {
    assemble(space, params, false, false, true)
}

/// RWA variants: `qubit_rwa` replaces the qubit coupling with
/// `g (sigma_+ a_2 + sigma_- a_2^dag)`, `hopping_rwa` drops the
/// `a^dag a^dag + a a` hopping terms.
pub fn hamiltonian_rwa(
    space: SpaceDescriptor,
    params: &SystemParams,
    qubit_rwa: bool,
    hopping_rwa: bool,
) -> Operator {
    assemble(space, params, qubit_rwa, hopping_rwa, true)
}

/// Degenerate-qubit effective model: no sigma_z term, coupling g/2,
/// RWA hopping.
pub fn hamiltonian_degenerate(space: SpaceDescriptor, params: &SystemParams) -> Operator {
    assemble(space, params, false, true, false)
}

/// Hamiltonian for the params' variant.
pub fn hamiltonian(space: SpaceDescriptor, params: &SystemParams) -> Operator {
    match params.variant {
        Variant::Full => hamiltonian_full(space, params),
        Variant::QubitRwa => hamiltonian_rwa(space, params, true, false),
        Variant::FullRwa => hamiltonian_rwa(space, params, true, true),
        Variant::DegenerateEffective => hamiltonian_degenerate(space, params),
    }
}

fn assemble(
    space: SpaceDescriptor,
    params: &SystemParams,
    qubit_rwa: bool,
    hopping_rwa: bool,
    include_qubit_energy: bool,
) -> Operator {
    let coupling = if include_qubit_energy {
        params.g
    } else {
        // Degenerate effective model carries g/2.
        params.g / 2.0
    };
    let mut h = free_hamiltonian(space, params, include_qubit_energy);
    let qc = if qubit_rwa {
        qubit_coupling_rwa(space, coupling)
    } else {
        qubit_coupling_full(space, coupling)
    };
    h = h
        .linear_combination(re(1.0), &qc, re(1.0))
        .expect("same space");
    for (cavity, j) in [(1, params.j1), (2, params.j2)] {
        let hop = hopping_term(space, cavity, j, hopping_rwa).expect("valid pair");
        h = h
            .linear_combination(re(1.0), &hop, re(1.0))
            .expect("same space");
    }
    h
}

/// Parity operator `Pi = sigma_z exp(i pi sum_l n_l)`, the Z2 symmetry of
/// the full model. Diagonal with entries `sigma_z(q) * (-1)^(n1+n2+n3)`.
pub fn parity_op(space: SpaceDescriptor) -> Operator {
    let triplets = (0..space.dim()).map(|idx| {
        let (occ, q) = space.decode(idx);
        let sign = q.sigma_z() * if (occ[0] + occ[1] + occ[2]) % 2 == 0 { 1.0 } else { -1.0 };
        (idx, idx, re(sign))
    });
    Operator::from_triplets(space, triplets, true).expect("diagonal operator")
}

/// Total-excitation operator `N_tot = sum_l n_l + sigma_+ sigma_-`,
/// conserved by the fully rotating-wave model.
pub fn total_excitation_op(space: SpaceDescriptor) -> Operator {
    let triplets = (0..space.dim()).map(|idx| {
        let (occ, q) = space.decode(idx);
        let qn = match q {
            crate::fock::QubitLevel::Ground => 0.0,
            crate::fock::QubitLevel::Excited => 1.0,
        };
        (idx, idx, re((occ[0] + occ[1] + occ[2]) as f64 + qn))
    });
    Operator::from_triplets(space, triplets, true).expect("diagonal operator")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_space, fock_state, QubitLevel};
    use approx::assert_abs_diff_eq;

    fn commutator_norm(a: &Operator, b: &Operator) -> f64 {
        let ab = a.matmul(b).unwrap();
        let ba = b.matmul(a).unwrap();
        ab.linear_combination(re(1.0), &ba, re(-1.0)).unwrap().max_abs()
    }

    #[test]
    fn decoupled_spectrum() {
        // g = 0, J = 0, omega_q = 1: eigenvalues are n1+n2+n3 +/- 1/2.
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.0, 0.0, 0.0).unwrap();
        let h = hamiltonian_full(space, &params);
        let dense = h.to_dense_real().unwrap();
        let eig = dense.symmetric_eigen();
        let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = Vec::new();
        for n1 in 0..=2usize {
            for n2 in 0..=2usize {
                for n3 in 0..=2usize {
                    for s in [-0.5, 0.5] {
                        expected.push((n1 + n2 + n3) as f64 + s);
                    }
                }
            }
        }
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn initial_state_energy() {
        // <100,g|H|100,g> = omega - omega_q/2 = 0.5 at resonance.
        let space = build_space(3).unwrap();
        let params = SystemParams::full(1.0, 0.3, 0.1, 0.1).unwrap();
        let h = hamiltonian_full(space, &params);
        let psi0 = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        assert_abs_diff_eq!(h.expectation(&psi0).re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn full_model_commutes_with_parity() {
        let space = build_space(3).unwrap();
        let params = SystemParams::full(0.8, 0.6, 0.1, 0.15).unwrap();
        let h = hamiltonian_full(space, &params);
        let pi = parity_op(space);
        assert!(commutator_norm(&h, &pi) < 1e-12);
    }

    #[test]
    fn full_rwa_conserves_total_excitations() {
        let space = build_space(3).unwrap();
        let params = SystemParams::full_rwa(1.0, 0.05, 0.01, 0.02).unwrap();
        let h = hamiltonian_rwa(space, &params, true, true);
        let ntot = total_excitation_op(space);
        assert!(commutator_norm(&h, &ntot) < 1e-12);
    }

    #[test]
    fn rwa_difference_is_counter_rotating_terms() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.4, 0.1, 0.2).unwrap();
        let full = hamiltonian_full(space, &params);
        let rwa = hamiltonian_rwa(space, &params, true, true);
        let diff = full
            .linear_combination(re(1.0), &rwa, re(-1.0))
            .unwrap();

        // Counter-rotating qubit part: g (sigma_+ a^dag + sigma_- a).
        let sp = qubit_op(space, QubitOpKind::SigmaPlus).unwrap();
        let sm = qubit_op(space, QubitOpKind::SigmaMinus).unwrap();
        let a2 = mode_op(space, 2, ModeOpKind::Annihilate).unwrap();
        let adag2 = mode_op(space, 2, ModeOpKind::Create).unwrap();
        let cr_qubit = sp
            .matmul(&adag2)
            .unwrap()
            .linear_combination(re(params.g), &sm.matmul(&a2).unwrap(), re(params.g))
            .unwrap();

        // Counter-rotating hopping: -J (a^dag a^dag + a a) per pair.
        let mut expected = cr_qubit;
        for (cavity, j) in [(1usize, params.j1), (2usize, params.j2)] {
            let al = mode_op(space, cavity, ModeOpKind::Annihilate).unwrap();
            let adagl = mode_op(space, cavity, ModeOpKind::Create).unwrap();
            let ar = mode_op(space, cavity + 1, ModeOpKind::Annihilate).unwrap();
            let adagr = mode_op(space, cavity + 1, ModeOpKind::Create).unwrap();
            let pair = adagl
                .matmul(&adagr)
                .unwrap()
                .linear_combination(re(1.0), &al.matmul(&ar).unwrap(), re(1.0))
                .unwrap();
            expected = expected
                .linear_combination(re(1.0), &pair, re(-j))
                .unwrap();
        }
        assert!(diff.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn qubit_rwa_matches_full_at_zero_coupling() {
        let space = build_space(2).unwrap();
        let params = SystemParams::new(1.0, 0.0, 0.1, 0.2, Variant::QubitRwa).unwrap();
        let full = hamiltonian_full(space, &params);
        let rwa = hamiltonian_rwa(space, &params, true, false);
        assert!(full.max_abs_diff(&rwa) < 1e-14);
    }

    #[test]
    fn full_rwa_single_excitation_block() {
        // FullRWA restricted to the single-excitation sector must match the
        // 4x4 matrix in the basis {|000>e, |100>g, |010>g, |001>g}.
        let space = build_space(1).unwrap();
        let params = SystemParams::full_rwa(1.0, 0.3, 0.1, 0.2).unwrap();
        let h = hamiltonian_rwa(space, &params, true, true);
        let basis = [
            fock_state(space, [0, 0, 0], QubitLevel::Excited).unwrap(),
            fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap(),
            fock_state(space, [0, 1, 0], QubitLevel::Ground).unwrap(),
            fock_state(space, [0, 0, 1], QubitLevel::Ground).unwrap(),
        ];
        // Common diagonal omega/2 on top of the coupling structure.
        let expected = [
            [0.5, 0.0, params.g, 0.0],
            [0.0, 0.5, -params.j1, 0.0],
            [params.g, -params.j1, 0.5, -params.j2],
            [0.0, 0.0, -params.j2, 0.5],
        ];
        for (i, bi) in basis.iter().enumerate() {
            let mut out = vec![Complex64::new(0.0, 0.0); space.dim()];
            h.apply(bi.amplitudes(), &mut out);
            for (j, bj) in basis.iter().enumerate() {
                let elem: Complex64 = bj
                    .amplitudes()
                    .iter()
                    .zip(&out)
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                assert_abs_diff_eq!(elem.re, expected[j][i], epsilon = 1e-12);
                assert_abs_diff_eq!(elem.im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_conserves_sigma_x() {
        let space = build_space(2).unwrap();
        let params = SystemParams::degenerate(0.7, 0.1, 0.1).unwrap();
        let h = hamiltonian_degenerate(space, &params);
        let sx = qubit_op(space, QubitOpKind::SigmaX).unwrap();
        assert!(commutator_norm(&h, &sx) < 1e-12);
    }

    #[test]
    fn degenerate_reduces_to_hopping_chain_at_zero_g() {
        let space = build_space(2).unwrap();
        let params = SystemParams::degenerate(0.0, 0.1, 0.1).unwrap();
        let h = hamiltonian_degenerate(space, &params);
        let mut expected = free_hamiltonian(space, &params, false);
        for cavity in 1..=2 {
            expected = expected
                .linear_combination(
                    re(1.0),
                    &hopping_term(space, cavity, 0.1, true).unwrap(),
                    re(1.0),
                )
                .unwrap();
        }
        assert!(h.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn hamiltonians_are_hermitian() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(0.9, 0.5, 0.1, 0.12).unwrap();
        for h in [
            hamiltonian_full(space, &params),
            hamiltonian_rwa(space, &params, true, false),
            hamiltonian_rwa(space, &params, false, true),
            hamiltonian_rwa(space, &params, true, true),
            hamiltonian_degenerate(space, &params),
        ] {
            assert!(h.hermiticity_deviation() < 1e-12);
        }
    }

    #[test]
    fn negative_couplings_rejected() {
        assert!(SystemParams::full(1.0, -0.1, 0.1, 0.1).is_err());
        assert!(SystemParams::full(1.0, 0.1, -0.1, 0.1).is_err());
    }
}
