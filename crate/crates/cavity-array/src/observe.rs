//! Expectation values, reduced density matrices and state-transfer fidelity.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::SimError;
use crate::fock::{SpaceDescriptor, StateVector};
use crate::Result;

/// Diagonal of the photon-number operator for one cavity.
pub fn photon_number_diagonal(space: SpaceDescriptor, cavity: usize) -> Vec<f64> {
    let l = space.levels();
    let stride = space.cavity_stride(cavity);
    (0..space.dim()).map(|idx| ((idx / stride) % l) as f64).collect()
}

/// Diagonal of the qubit excitation `sigma_+ sigma_-`.
pub fn qubit_excitation_diagonal(space: SpaceDescriptor) -> Vec<f64> {
    let stride = space.qubit_stride();
    (0..space.dim()).map(|idx| (idx / stride) as f64).collect()
}

/// Diagonal of `N_tot = sum_l n_l + sigma_+ sigma_-`.
pub fn total_excitation_diagonal(space: SpaceDescriptor) -> Vec<f64> {
    (0..space.dim())
        .map(|idx| {
            let (occ, q) = space.decode(idx);
            (occ[0] + occ[1] + occ[2]) as f64
                + match q {
                    crate::fock::QubitLevel::Ground => 0.0,
                    crate::fock::QubitLevel::Excited => 1.0,
                }
        })
        .collect()
}

/// Diagonal of the parity operator `sigma_z exp(i pi sum n_l)`.
pub fn parity_diagonal(space: SpaceDescriptor) -> Vec<f64> {
    (0..space.dim())
        .map(|idx| {
            let (occ, q) = space.decode(idx);
            let photon_sign = if (occ[0] + occ[1] + occ[2]) % 2 == 0 { 1.0 } else { -1.0 };
            q.sigma_z() * photon_sign
        })
        .collect()
}

fn diagonal_expectation(state: &StateVector, diag: &[f64]) -> f64 {
    state
        .amplitudes()
        .iter()
        .zip(diag)
        .map(|(a, &w)| w * a.norm_sqr())
        .sum()
}

/// Average photon number `<a_i^dag a_i>` in one cavity.
pub fn photon_number(state: &StateVector, cavity: usize) -> Result<f64> {
    if !(1..=3).contains(&cavity) {
        return Err(SimError::CavityOutOfRange(cavity));
    }
    Ok(diagonal_expectation(
        state,
        &photon_number_diagonal(state.space(), cavity),
    ))
}

/// Qubit excitation probability `<sigma_+ sigma_->`.
pub fn qubit_excitation(state: &StateVector) -> f64 {
    diagonal_expectation(state, &qubit_excitation_diagonal(state.space()))
}

/// Total excitations `<sum_l n_l + sigma_+ sigma_->`.
pub fn total_excitations(state: &StateVector) -> f64 {
    diagonal_expectation(state, &total_excitation_diagonal(state.space()))
}

/// Single-cavity reduced state: an `(n_max+1) x (n_max+1)` density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Wrap a matrix, checking hermiticity (1e-10), unit trace (1e-10)
    /// and eigenvalue nonnegativity (-1e-10).
    pub fn from_elements(elements: DMatrix<Complex64>) -> Result<Self> {
        let dm = DensityMatrix { elements };
        dm.validate()?;
        Ok(dm)
    }

    fn from_elements_unchecked(elements: DMatrix<Complex64>) -> Self {
        DensityMatrix { elements }
    }

    /// Pure state |phi><phi| from single-mode amplitudes.
    pub fn pure(amplitudes: &[Complex64]) -> Self {
        let n = amplitudes.len();
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = amplitudes[i] * amplitudes[j].conj() / norm_sqr;
            }
        }
        DensityMatrix { elements: m }
    }

    pub fn levels(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.levels()).map(|i| self.elements[(i, i)]).sum()
    }

    /// Tr[rho^2]; equals 1 iff the state is pure.
    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.levels() {
            for j in 0..self.levels() {
                acc += (self.elements[(i, j)] * self.elements[(j, i)]).re;
            }
        }
        acc
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.levels();
        let mut herm_dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                herm_dev = herm_dev.max((self.elements[(i, j)] - self.elements[(j, i)].conj()).norm());
            }
        }
        if herm_dev > 1e-10 {
            return Err(SimError::NotHermitian(herm_dev));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(SimError::InvalidParams(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        // Hermitian part eigenvalues must be >= -1e-10.
        let herm = self.elements.map(|z| z) * Complex64::new(0.5, 0.0)
            + self.elements.adjoint() * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        for e in eig.eigenvalues.iter() {
            if *e < -1e-10 {
                return Err(SimError::InvalidParams(format!(
                    "density matrix has negative eigenvalue {e}"
                )));
            }
        }
        Ok(())
    }
}

/// Partial trace over the other two cavities and the qubit.
pub fn reduced_cavity_state(state: &StateVector, cavity: usize) -> Result<DensityMatrix> {
    if !(1..=3).contains(&cavity) {
        return Err(SimError::CavityOutOfRange(cavity));
    }
    let space = state.space();
    let l = space.levels();
    let stride = space.cavity_stride(cavity);
    let dim = space.dim();
    let amps = state.amplitudes();

    let mut rho = DMatrix::from_element(l, l, Complex64::new(0.0, 0.0));
    // Group flat indices by their environment part: idx = env + m * stride,
    // where env runs over all indices with this cavity's digit set to zero.
    let block = l * stride;
    let n_blocks = dim / block;
    for b in 0..n_blocks {
        for lo in 0..stride {
            let base = b * block + lo;
            for m in 0..l {
                let am = amps[base + m * stride];
                if am == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for n in 0..l {
                    rho[(m, n)] += am * amps[base + n * stride].conj();
                }
            }
        }
    }
    Ok(DensityMatrix::from_elements_unchecked(rho))
}

/// Transfer fidelity `F = Tr[rho_0 rho_3(t)]` where `rho_3` is the reduced
/// state of the rightmost cavity.
///
/// This is the overlap functional, not the Uhlmann fidelity: for mixed
/// states it stays below 1 even under perfect transfer, which is why
/// [`DensityMatrix::purity`] is reported alongside it.
pub fn transfer_fidelity(rho0: &DensityMatrix, state: &StateVector) -> Result<f64> {
    let rho3 = reduced_cavity_state(state, 3)?;
    Ok(overlap(rho0, &rho3))
}

/// Tr[a b] for two density matrices of equal dimension.
pub fn overlap(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    assert_eq!(a.levels(), b.levels());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.levels() {
        for j in 0..a.levels() {
            acc += a.elements()[(i, j)] * b.elements()[(j, i)];
        }
    }
    acc.re
}
