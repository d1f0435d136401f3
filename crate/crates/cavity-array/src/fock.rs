//! Truncated tensor-product Hilbert space for three cavities and one qubit.
//!
//! The basis is `|n1 n2 n3> ⊗ |q>` with per-cavity photon numbers
//! `0..=n_max` and qubit levels g/e. Flat indices are row-major over
//! `(q, n1, n2, n3)` with the qubit slowest:
//!
//! ```text
//! index = ((q * L + n1) * L + n2) * L + n3,   L = n_max + 1
//! ```
//!
//! The ground state `|g>` is the -1 eigenstate of sigma_z, so the qubit
//! energy term `+omega_q/2 * sigma_z` is minimized by `|g>`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::SimError;
use crate::Result;

/// Number of cavities in the array (fixed).
pub const N_CAVITIES: usize = 3;

/// Tail-weight threshold above which coherent-state truncation is rejected.
pub const COHERENT_TAIL_THRESHOLD: f64 = 1e-6;

/// Qubit level: `Ground` is the -1 eigenstate of sigma_z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitLevel {
    Ground,
    Excited,
}

impl QubitLevel {
    /// sigma_z eigenvalue: -1 for g, +1 for e.
    pub fn sigma_z(self) -> f64 {
        match self {
            QubitLevel::Ground => -1.0,
            QubitLevel::Excited => 1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            QubitLevel::Ground => 0,
            QubitLevel::Excited => 1,
        }
    }
}

/// Layout of the truncated Hilbert space: three bosonic modes with a
/// common photon cutoff plus one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    n_max: usize,
}

impl SpaceDescriptor {
    /// Photon-number cutoff (inclusive): each cavity holds 0..=n_max photons.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Levels per cavity, `n_max + 1`.
    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    /// Total dimension `2 * (n_max + 1)^3`.
    pub fn dim(&self) -> usize {
        2 * self.levels().pow(3)
    }

    /// Flat index of `|n1 n2 n3> ⊗ |q>`.
    pub fn encode(&self, occupations: [usize; 3], qubit: QubitLevel) -> usize {
        let l = self.levels();
        debug_assert!(occupations.iter().all(|&n| n < l));
        ((qubit.index() * l + occupations[0]) * l + occupations[1]) * l + occupations[2]
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, index: usize) -> ([usize; 3], QubitLevel) {
        let l = self.levels();
        debug_assert!(index < self.dim());
        let n3 = index % l;
        let rest = index / l;
        let n2 = rest % l;
        let rest = rest / l;
        let n1 = rest % l;
        let q = rest / l;
        let qubit = if q == 0 {
            QubitLevel::Ground
        } else {
            QubitLevel::Excited
        };
        ([n1, n2, n3], qubit)
    }

    /// Stride of cavity axis `cavity` (1..=3) in the flat layout.
    pub fn cavity_stride(&self, cavity: usize) -> usize {
        let l = self.levels();
        match cavity {
            1 => l * l,
            2 => l,
            3 => 1,
            _ => panic!("cavity index {cavity} out of range"),
        }
    }

    /// Stride of the qubit axis in the flat layout.
    pub fn qubit_stride(&self) -> usize {
        self.levels().pow(3)
    }
}

/// Build the space descriptor for a given photon cutoff.
///
/// Rejects `n_max = 0`: the array must be able to hold one photon.
pub fn build_space(n_max: usize) -> Result<SpaceDescriptor> {
    if n_max == 0 {
        return Err(SimError::CutoffTooSmall);
    }
    Ok(SpaceDescriptor { n_max })
}

/// Kind of single-mode operator on a cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeOpKind {
    Annihilate,
    Create,
    Number,
}

/// Kind of qubit operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitOpKind {
    SigmaX,
    SigmaZ,
    SigmaPlus,
    SigmaMinus,
}

/// Sparse operator on the full space, stored in CSR form.
#[derive(Debug, Clone)]
pub struct Operator {
    space: SpaceDescriptor,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
    hermitian_hint: bool,
}

impl Operator {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    ///
    /// When `hermitian_hint` is set, the assembled matrix is checked
    /// against its adjoint to 1e-12 in max-norm.
    pub fn from_triplets(
        space: SpaceDescriptor,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
        hermitian_hint: bool,
    ) -> Result<Self> {
        let dim = space.dim();
        let mut entries: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(SimError::DimensionMismatch {
                    expected: dim,
                    got: r.max(c) + 1,
                });
            }
            if v != Complex64::new(0.0, 0.0) {
                *entries.entry((r, c)).or_insert(Complex64::new(0.0, 0.0)) += v;
            }
        }

        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (&(r, c), &v) in &entries {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }

        let op = Operator {
            space,
            row_ptr,
            col_idx,
            values,
            hermitian_hint,
        };
        if hermitian_hint {
            let dev = op.hermiticity_deviation();
            if dev >= 1e-12 {
                return Err(SimError::NotHermitian(dev));
            }
        }
        Ok(op)
    }

    /// Zero operator.
    pub fn zeros(space: SpaceDescriptor) -> Self {
        Operator {
            space,
            row_ptr: vec![0; space.dim() + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            hermitian_hint: true,
        }
    }

    pub fn space(&self) -> SpaceDescriptor {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    /// Iterate over stored entries as (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// max |O - O^dag| over all matrix elements.
    pub fn hermiticity_deviation(&self) -> f64 {
        let map: BTreeMap<(usize, usize), Complex64> =
            self.entries().map(|(r, c, v)| ((r, c), v)).collect();
        let mut dev: f64 = 0.0;
        for (&(r, c), &v) in &map {
            let vt = map
                .get(&(c, r))
                .copied()
                .unwrap_or(Complex64::new(0.0, 0.0));
            dev = dev.max((v - vt.conj()).norm());
        }
        dev
    }

    /// y = O x.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for r in 0..self.dim() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// <psi|O|psi>.
    pub fn expectation(&self, state: &StateVector) -> Complex64 {
        assert_eq!(state.space(), self.space);
        let x = state.amplitudes();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..self.dim() {
            let mut row = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * x[self.col_idx[k]];
            }
            acc += x[r].conj() * row;
        }
        acc
    }

    /// Adjoint O^dag.
    pub fn adjoint(&self) -> Self {
        let triplets: Vec<_> = self.entries().map(|(r, c, v)| (c, r, v.conj())).collect();
        Operator::from_triplets(self.space, triplets, self.hermitian_hint)
            .expect("adjoint preserves dimensions")
    }

    /// a*self + b*other.
    pub fn linear_combination(&self, a: Complex64, other: &Operator, b: Complex64) -> Result<Self> {
        if self.space != other.space {
            return Err(SimError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let triplets = self
            .entries()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(other.entries().map(|(r, c, v)| (r, c, b * v)));
        Operator::from_triplets(self.space, triplets, false)
    }

    /// Matrix product self * other (dense-free, for small operators in tests
    /// and symmetry checks).
    pub fn matmul(&self, other: &Operator) -> Result<Self> {
        if self.space != other.space {
            return Err(SimError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let mut triplets = Vec::new();
        for r in 0..self.dim() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let v = self.values[k];
                for k2 in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    triplets.push((r, other.col_idx[k2], v * other.values[k2]));
                }
            }
        }
        Operator::from_triplets(self.space, triplets, false)
    }

    /// max |self - other| over all matrix elements.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        let mut map: BTreeMap<(usize, usize), Complex64> =
            self.entries().map(|(r, c, v)| ((r, c), v)).collect();
        for (r, c, v) in other.entries() {
            *map.entry((r, c)).or_insert(Complex64::new(0.0, 0.0)) -= v;
        }
        map.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Dense complex matrix (small spaces only; used by oracles and tests).
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let dim = self.dim();
        let mut m = nalgebra::DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Dense real matrix; errors if any entry has an imaginary part above
    /// 1e-14 (all model Hamiltonians are real in the Fock basis).
    pub fn to_dense_real(&self) -> Result<nalgebra::DMatrix<f64>> {
        let dim = self.dim();
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for (r, c, v) in self.entries() {
            if v.im.abs() > 1e-14 {
                return Err(SimError::InvalidParams(format!(
                    "operator entry ({r},{c}) has imaginary part {:.3e}",
                    v.im
                )));
            }
            m[(r, c)] += v.re;
        }
        Ok(m)
    }
}

/// Ladder/number operator on one cavity, tensor-embedded in the full space.
pub fn mode_op(space: SpaceDescriptor, cavity: usize, kind: ModeOpKind) -> Result<Operator> {
    if !(1..=N_CAVITIES).contains(&cavity) {
        return Err(SimError::CavityOutOfRange(cavity));
    }
    let l = space.levels();
    let stride = space.cavity_stride(cavity);
    let mut triplets = Vec::new();
    // Enumerate flat indices by their occupation on this cavity.
    for idx in 0..space.dim() {
        let n = (idx / stride) % l;
        match kind {
            // a |n> = sqrt(n) |n-1>
            ModeOpKind::Annihilate => {
                if n >= 1 {
                    triplets.push((idx - stride, idx, Complex64::new((n as f64).sqrt(), 0.0)));
                }
            }
            // a^dag |n> = sqrt(n+1) |n+1>, truncated at the cutoff
            ModeOpKind::Create => {
                if n + 1 < l {
                    triplets.push((idx + stride, idx, Complex64::new(((n + 1) as f64).sqrt(), 0.0)));
                }
            }
            ModeOpKind::Number => {
                if n > 0 {
                    triplets.push((idx, idx, Complex64::new(n as f64, 0.0)));
                }
            }
        }
    }
    Operator::from_triplets(space, triplets, kind == ModeOpKind::Number)
}

/// Pauli/ladder operator on the qubit, tensor-embedded in the full space.
pub fn qubit_op(space: SpaceDescriptor, kind: QubitOpKind) -> Result<Operator> {
    let stride = space.qubit_stride();
    let mut triplets = Vec::new();
    for idx in 0..space.dim() {
        let q = idx / stride; // 0 = g, 1 = e
        match kind {
            QubitOpKind::SigmaX => {
                let flipped = if q == 0 { idx + stride } else { idx - stride };
                triplets.push((flipped, idx, Complex64::new(1.0, 0.0)));
            }
            QubitOpKind::SigmaZ => {
                let sign = if q == 0 { -1.0 } else { 1.0 };
                triplets.push((idx, idx, Complex64::new(sign, 0.0)));
            }
            // sigma_+ |g> = |e>
            QubitOpKind::SigmaPlus => {
                if q == 0 {
                    triplets.push((idx + stride, idx, Complex64::new(1.0, 0.0)));
                }
            }
            QubitOpKind::SigmaMinus => {
                if q == 1 {
                    triplets.push((idx - stride, idx, Complex64::new(1.0, 0.0)));
                }
            }
        }
    }
    let hermitian = matches!(kind, QubitOpKind::SigmaX | QubitOpKind::SigmaZ);
    Operator::from_triplets(space, triplets, hermitian)
}

/// Complex amplitude vector over the tensor-product basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    space: SpaceDescriptor,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Zero vector (not normalized; fill before use).
    pub fn zeros(space: SpaceDescriptor) -> Self {
        StateVector {
            space,
            amplitudes: vec![Complex64::new(0.0, 0.0); space.dim()],
        }
    }

    pub fn from_amplitudes(space: SpaceDescriptor, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(SimError::DimensionMismatch {
                expected: space.dim(),
                got: amplitudes.len(),
            });
        }
        Ok(StateVector { space, amplitudes })
    }

    pub fn space(&self) -> SpaceDescriptor {
        self.space
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    /// Owned amplitude buffer, for propagator-internal buffer swaps.
    pub(crate) fn amplitudes_vec_mut(&mut self) -> &mut Vec<Complex64> {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
    }

    /// <self|other>.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.space, other.space);
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// l2 distance ||self - other||.
    pub fn distance(&self, other: &StateVector) -> f64 {
        assert_eq!(self.space, other.space);
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Basis state `|n1 n2 n3> ⊗ |q>`.
pub fn fock_state(
    space: SpaceDescriptor,
    occupations: [usize; 3],
    qubit: QubitLevel,
) -> Result<StateVector> {
    for &n in &occupations {
        if n > space.n_max() {
            return Err(SimError::OccupationExceedsCutoff {
                occupation: n,
                n_max: space.n_max(),
            });
        }
    }
    let mut state = StateVector::zeros(space);
    state.amplitudes[space.encode(occupations, qubit)] = Complex64::new(1.0, 0.0);
    Ok(state)
}

/// Truncated coherent state `|alpha>` in cavity 1, vacuum elsewhere,
/// qubit in `|g>`. Renormalized after truncation.
///
/// Fails when the overlap deficit against the untruncated state,
/// `1 - sqrt(kept weight)`, exceeds [`COHERENT_TAIL_THRESHOLD`], unless
/// `force` is set.
pub fn coherent_state_left(
    space: SpaceDescriptor,
    alpha: Complex64,
    force: bool,
) -> Result<StateVector> {
    let l = space.levels();
    // c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!)
    let mut coeffs = Vec::with_capacity(l);
    let prefactor = (-alpha.norm_sqr() / 2.0).exp();
    let mut c = Complex64::new(prefactor, 0.0);
    coeffs.push(c);
    for n in 1..l {
        c *= alpha / (n as f64).sqrt();
        coeffs.push(c);
    }
    let kept: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let tail = (1.0 - kept.min(1.0).sqrt()).max(0.0);
    if tail > COHERENT_TAIL_THRESHOLD && !force {
        return Err(SimError::CoherentTruncation {
            tail,
            threshold: COHERENT_TAIL_THRESHOLD,
        });
    }

    let mut state = StateVector::zeros(space);
    let stride = space.cavity_stride(1);
    let base = space.encode([0, 0, 0], QubitLevel::Ground);
    for (n, &cn) in coeffs.iter().enumerate() {
        state.amplitudes[base + n * stride] = cn;
    }
    state.normalize();
    Ok(state)
}

/// `p|0> + e^{i theta} sqrt(1-p^2) |1>` in cavity 1, vacuum elsewhere,
/// qubit in `|g>`.
pub fn superposition_state_left(space: SpaceDescriptor, p: f64, theta: f64) -> Result<StateVector> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::InvalidSuperposition(p));
    }
    let mut state = StateVector::zeros(space);
    let zero = space.encode([0, 0, 0], QubitLevel::Ground);
    let one = space.encode([1, 0, 0], QubitLevel::Ground);
    state.amplitudes[zero] = Complex64::new(p, 0.0);
    state.amplitudes[one] = Complex64::from_polar((1.0 - p * p).sqrt(), theta);
    Ok(state)
}

/// Initial-state selector shared by scenarios, sweeps and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    /// `|100> ⊗ |g>`: one photon in the leftmost cavity.
    SinglePhoton,
    /// Coherent state of amplitude `alpha` in the leftmost cavity.
    Coherent { alpha: f64 },
    /// `p|0> + e^{i theta} sqrt(1-p^2)|1>` in the leftmost cavity.
    Superposition { p: f64, theta: f64 },
}

impl InitialState {
    pub fn build(&self, space: SpaceDescriptor) -> Result<StateVector> {
        match *self {
            InitialState::SinglePhoton => fock_state(space, [1, 0, 0], QubitLevel::Ground),
            InitialState::Coherent { alpha } => {
                coherent_state_left(space, Complex64::new(alpha, 0.0), false)
            }
            InitialState::Superposition { p, theta } => superposition_state_left(space, p, theta),
        }
    }
}
