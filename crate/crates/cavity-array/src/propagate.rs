//! Time evolution by exact eigendecomposition (oracle) and 4th-order
//! Suzuki-Trotter splitting (production path), plus trajectory recording
//! and photon-cutoff convergence control.
//!
//! The Trotter split uses three exactly exponentiable pieces:
//!
//! - `A`: free energies `sum omega n_l + (omega_q/2) sigma_z`, diagonal
//!   in the Fock basis;
//! - `B`: the cavity-qubit coupling `g sigma_x X_2` with `X = a + a^dag`;
//! - `C`: the hopping `-J_1 X_1 X_2 - J_2 X_2 X_3` (the counter-rotating
//!   hopping terms recombine into quadrature products).
//!
//! `B` and `C` are both diagonal in the frame obtained by rotating every
//! cavity into the X eigenbasis and the qubit into the sigma_x eigenbasis,
//! so each Trotter factor reduces to a handful of small axis transforms
//! and an elementwise phase multiply. RWA variants use per-block
//! eigendecompositions instead.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::fock::{InitialState, Operator, SpaceDescriptor, StateVector};
use crate::model::{self, SystemParams, Variant};
use crate::observe;
use crate::Result;

/// Exact propagation is refused above this dimension.
pub const EXACT_DIM_GUARD: usize = 5000;

/// Default Trotter step (units of 1/omega).
pub const DEFAULT_DT: f64 = 0.01;

/// Default sampling interval (units of 1/omega).
pub const DEFAULT_DT_SAMPLE: f64 = 0.1;

/// 4th-order Suzuki composition coefficient p = 1/(4 - 4^(1/3)).
pub const SUZUKI_P: f64 = 0.414_490_771_794_375_7;

fn suzuki_p() -> f64 {
    1.0 / (4.0 - 4.0f64.powf(1.0 / 3.0))
}

// ---------------------------------------------------------------------------
// Split terms
// ---------------------------------------------------------------------------

/// Exponentiation recipe of a split term.
#[derive(Debug, Clone)]
enum TermRep {
    /// Diagonal in the Fock basis.
    Diagonal { values: Vec<f64> },
    /// Diagonal after per-axis orthogonal transforms: the X eigenvector
    /// matrix on each flagged cavity and a Hadamard on the qubit.
    /// `values` live in the transformed frame, indexed by flat index.
    AxisFrame {
        cavities: [bool; 3],
        hadamard: bool,
        v: Arc<Vec<f64>>, // levels x levels, row-major, columns = eigenvectors
        values: Vec<f64>,
    },
    /// Diagonal after orthogonal transforms on the joint block of the
    /// listed axes (`(stride, len)`, slowest first). The block matrix is
    /// split into its connected components (invariant sectors), each with
    /// its own small eigendecomposition.
    Block {
        axes: Vec<(usize, usize)>,
        sectors: Arc<Vec<BlockSector>>,
    },
}

/// One invariant sector of a joint-block term.
#[derive(Debug, Clone)]
struct BlockSector {
    /// Block indices belonging to this sector.
    members: Vec<usize>,
    /// Row-major m x m orthogonal eigenvector matrix (columns = eigenvectors).
    v: Vec<f64>,
    eigvals: Vec<f64>,
}

/// Decompose a symmetric block matrix into connected components and
/// eigendecompose each. Singleton sectors with zero diagonal are dropped
/// (they contribute no phase).
fn sector_decompose(block: &DMatrix<f64>) -> Result<Vec<BlockSector>> {
    let bd = block.nrows();
    // Union-find over nonzero couplings.
    let mut parent: Vec<usize> = (0..bd).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..bd {
        for j in i + 1..bd {
            if block[(i, j)] != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..bd {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut sectors = Vec::new();
    for members in groups.into_values() {
        let m = members.len();
        if m == 1 && block[(members[0], members[0])] == 0.0 {
            continue;
        }
        let mut sub = DMatrix::zeros(m, m);
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                sub[(a, b)] = block[(i, j)];
            }
        }
        let eig = sub.symmetric_eigen();
        let v = dmatrix_to_row_major(&eig.eigenvectors);
        let defect = orthogonality_defect(&v, m);
        if defect >= 1e-12 {
            return Err(SimError::FactorNotUnitary(defect));
        }
        sectors.push(BlockSector {
            members,
            v,
            eigvals: eig.eigenvalues.iter().copied().collect(),
        });
    }
    Ok(sectors)
}

/// One piece of the Hamiltonian splitting: its sparse matrix plus the
/// recipe for exponentiating it exactly.
#[derive(Debug, Clone)]
pub struct SplitTerm {
    pub label: &'static str,
    pub matrix: Operator,
    rep: TermRep,
}

impl SplitTerm {
    fn same_frame(&self, other: &SplitTerm) -> bool {
        match (&self.rep, &other.rep) {
            (TermRep::Diagonal { .. }, TermRep::Diagonal { .. }) => true,
            (
                TermRep::AxisFrame {
                    cavities: c1,
                    hadamard: h1,
                    v: v1,
                    ..
                },
                TermRep::AxisFrame {
                    cavities: c2,
                    hadamard: h2,
                    v: v2,
                    ..
                },
            ) => c1 == c2 && h1 == h2 && Arc::ptr_eq(v1, v2),
            (
                TermRep::Block {
                    axes: a1,
                    sectors: s1,
                },
                TermRep::Block {
                    axes: a2,
                    sectors: s2,
                },
            ) => a1 == a2 && Arc::ptr_eq(s1, s2),
            _ => false,
        }
    }

    /// Apply the term (as a multiplicative operator, not its exponential)
    /// through the factored representation. Used to cross-check the
    /// recipe against the sparse matrix at setup.
    fn apply_via_rep(&self, space: SpaceDescriptor, x: &[Complex64], ws: &mut Workspace) -> Vec<Complex64> {
        let mut state = x.to_vec();
        match &self.rep {
            TermRep::Diagonal { values } => {
                for (s, &v) in state.iter_mut().zip(values) {
                    *s *= v;
                }
            }
            TermRep::AxisFrame {
                cavities,
                hadamard,
                v,
                values,
            } => {
                axis_frame_transform(space, *cavities, *hadamard, v, true, &mut state, ws);
                for (s, &val) in state.iter_mut().zip(values) {
                    *s *= val;
                }
                axis_frame_transform(space, *cavities, *hadamard, v, false, &mut state, ws);
            }
            TermRep::Block { axes, sectors } => {
                // Components in dropped zero sectors are annihilated by the
                // term, so build the image from zero.
                let (bases, offsets) = block_layout(space, axes);
                let mut image = vec![Complex64::new(0.0, 0.0); state.len()];
                let max_m = sectors.iter().map(|s| s.members.len()).max().unwrap_or(0);
                let mut gathered = vec![Complex64::new(0.0, 0.0); max_m];
                let mut transformed = vec![Complex64::new(0.0, 0.0); max_m];
                for &base in &bases {
                    for sector in sectors.iter() {
                        let m = sector.members.len();
                        for (j, &member) in sector.members.iter().enumerate() {
                            gathered[j] = state[base + offsets[member]];
                        }
                        block_matvec(&sector.v, m, true, &gathered[..m], &mut transformed[..m]);
                        for (t, &e) in transformed[..m].iter_mut().zip(&sector.eigvals) {
                            *t *= e;
                        }
                        block_matvec(&sector.v, m, false, &transformed[..m], &mut gathered[..m]);
                        for (j, &member) in sector.members.iter().enumerate() {
                            image[base + offsets[member]] = gathered[j];
                        }
                    }
                }
                state = image;
            }
        }
        state
    }
}

/// Maximum departure of `V^T V` from the identity.
fn orthogonality_defect(v: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[k * n + i] * v[k * n + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).abs());
        }
    }
    worst
}

fn dmatrix_to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = m[(i, j)];
        }
    }
    out
}

/// Eigendecomposition of the cavity quadrature X = a + a^dag on one mode.
fn quadrature_eigensystem(levels: usize) -> Result<(Arc<Vec<f64>>, Vec<f64>)> {
    let mut x = DMatrix::zeros(levels, levels);
    for n in 0..levels - 1 {
        let v = ((n + 1) as f64).sqrt();
        x[(n, n + 1)] = v;
        x[(n + 1, n)] = v;
    }
    let eig = x.symmetric_eigen();
    let v = dmatrix_to_row_major(&eig.eigenvectors);
    let defect = orthogonality_defect(&v, levels);
    if defect >= 1e-12 {
        return Err(SimError::FactorNotUnitary(defect));
    }
    Ok((Arc::new(v), eig.eigenvalues.iter().copied().collect()))
}

/// sigma_x eigenvector matrix: columns |+>, |-> in the (g, e) basis.
const HADAMARD: [f64; 4] = [
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::FRAC_1_SQRT_2,
    -std::f64::consts::FRAC_1_SQRT_2,
];

fn diagonal_of(op: &Operator) -> Vec<f64> {
    let mut d = vec![0.0; op.dim()];
    for (r, c, v) in op.entries() {
        if r == c {
            d[r] = v.re;
        }
    }
    d
}

/// Assemble the Trotter split for the params' model variant.
///
/// The terms always sum to [`model::hamiltonian`] for the same inputs;
/// [`trotter4_propagator`] re-checks that at setup.
pub fn split_terms(space: SpaceDescriptor, params: &SystemParams) -> Result<Vec<SplitTerm>> {
    params.validate()?;
    let levels = space.levels();
    let (vx, xvals) = quadrature_eigensystem(levels)?;
    let dim = space.dim();

    let qubit_energy = params.variant != Variant::DegenerateEffective;
    let free = model::free_hamiltonian(space, params, qubit_energy);
    let term_a = SplitTerm {
        label: "free",
        rep: TermRep::Diagonal {
            values: diagonal_of(&free),
        },
        matrix: free,
    };

    // sigma_x eigenvalue after the Hadamard rotation: +1 on index 0, -1 on 1.
    let sx_sign = |q: usize| if q == 0 { 1.0 } else { -1.0 };
    // Transformed-frame index helpers share the flat layout.
    let l3 = levels * levels * levels;

    let coupling_term = |c: f64, cavities: [bool; 3]| -> SplitTerm {
        let mut values = vec![0.0; dim];
        for (idx, value) in values.iter_mut().enumerate() {
            let n3 = idx % levels;
            let n2 = (idx / levels) % levels;
            let q = idx / l3;
            let _ = n3;
            *value = c * sx_sign(q) * xvals[n2];
        }
        SplitTerm {
            label: "qubit-coupling",
            matrix: model::qubit_coupling_full(space, c),
            rep: TermRep::AxisFrame {
                cavities,
                hadamard: true,
                v: Arc::clone(&vx),
                values,
            },
        }
    };

    let full_hopping_term = || -> Result<SplitTerm> {
        let mut values = vec![0.0; dim];
        for (idx, value) in values.iter_mut().enumerate() {
            let n3 = idx % levels;
            let n2 = (idx / levels) % levels;
            let n1 = (idx / (levels * levels)) % levels;
            *value = -params.j1 * xvals[n1] * xvals[n2] - params.j2 * xvals[n2] * xvals[n3];
        }
        let m1 = model::hopping_term(space, 1, params.j1, false)?;
        let m2 = model::hopping_term(space, 2, params.j2, false)?;
        let matrix = m1.linear_combination(Complex64::new(1.0, 0.0), &m2, Complex64::new(1.0, 0.0))?;
        Ok(SplitTerm {
            label: "hopping",
            matrix,
            rep: TermRep::AxisFrame {
                cavities: [true, true, true],
                hadamard: true,
                v: Arc::clone(&vx),
                values,
            },
        })
    };

    // RWA qubit coupling g (sigma_+ a_2 + sigma_- a_2^dag): block on (n2, q),
    // block-diagonal over the conserved pair excitation n2 + q.
    let rwa_coupling_term = |c: f64| -> Result<SplitTerm> {
        let bd = levels * 2;
        let mut block = DMatrix::zeros(bd, bd);
        for n in 1..levels {
            // |n, g> <-> |n-1, e>
            let from = n * 2;
            let to = (n - 1) * 2 + 1;
            let v = c * (n as f64).sqrt();
            block[(to, from)] = v;
            block[(from, to)] = v;
        }
        Ok(SplitTerm {
            label: "qubit-coupling-rwa",
            matrix: model::qubit_coupling_rwa(space, c),
            rep: TermRep::Block {
                axes: vec![(space.cavity_stride(2), levels), (space.qubit_stride(), 2)],
                sectors: Arc::new(sector_decompose(&block)?),
            },
        })
    };

    // RWA hopping -j (a_l^dag a_r + H.c.): block on (n_l, n_r),
    // block-diagonal over the conserved pair occupation n_l + n_r.
    let rwa_hopping_term = |pair: usize, j: f64| -> Result<SplitTerm> {
        let bd = levels * levels;
        let mut block = DMatrix::zeros(bd, bd);
        for nl in 0..levels {
            for nr in 0..levels {
                // a_l^dag a_r |nl, nr> = sqrt((nl+1) nr) |nl+1, nr-1>
                if nl + 1 < levels && nr >= 1 {
                    let from = nl * levels + nr;
                    let to = (nl + 1) * levels + (nr - 1);
                    let v = -j * (((nl + 1) * nr) as f64).sqrt();
                    block[(to, from)] += v;
                    block[(from, to)] += v;
                }
            }
        }
        Ok(SplitTerm {
            label: if pair == 1 { "hopping-12-rwa" } else { "hopping-23-rwa" },
            matrix: model::hopping_term(space, pair, j, true)?,
            rep: TermRep::Block {
                axes: vec![
                    (space.cavity_stride(pair), levels),
                    (space.cavity_stride(pair + 1), levels),
                ],
                sectors: Arc::new(sector_decompose(&block)?),
            },
        })
    };

    let terms = match params.variant {
        Variant::Full => vec![
            term_a,
            coupling_term(params.g, [true, true, true]),
            full_hopping_term()?,
        ],
        Variant::QubitRwa => vec![
            term_a,
            rwa_coupling_term(params.g)?,
            full_hopping_term()?,
        ],
        Variant::FullRwa => vec![
            term_a,
            rwa_coupling_term(params.g)?,
            rwa_hopping_term(1, params.j1)?,
            rwa_hopping_term(2, params.j2)?,
        ],
        Variant::DegenerateEffective => vec![
            term_a,
            coupling_term(params.g / 2.0, [false, true, false]),
            rwa_hopping_term(1, params.j1)?,
            rwa_hopping_term(2, params.j2)?,
        ],
    };
    Ok(terms)
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// Scratch buffers reused across propagation steps.
pub struct Workspace {
    buf: Vec<Complex64>,
    gather_in: Vec<Complex64>,
    gather_out: Vec<Complex64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Workspace {
            buf: vec![Complex64::new(0.0, 0.0); dim],
            gather_in: Vec::new(),
            gather_out: Vec::new(),
        }
    }
}

/// output = M input along one axis, where M[i,k] is `v[i*l+k]` or its
/// transpose. Fibers run over every combination of the other axes.
fn apply_axis(
    v: &[f64],
    l: usize,
    transpose: bool,
    stride: usize,
    input: &[Complex64],
    output: &mut [Complex64],
) {
    let dim = input.len();
    let block = l * stride;
    debug_assert_eq!(dim % block, 0);
    if stride == 1 {
        // Contiguous fibers of length l.
        for (inb, outb) in input.chunks_exact(l).zip(output.chunks_exact_mut(l)) {
            for (i, out) in outb.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, inp) in inb.iter().enumerate() {
                    let c = if transpose { v[k * l + i] } else { v[i * l + k] };
                    acc += *inp * c;
                }
                *out = acc;
            }
        }
        return;
    }
    for (inb, outb) in input.chunks_exact(block).zip(output.chunks_exact_mut(block)) {
        for i in 0..l {
            let out_row = &mut outb[i * stride..(i + 1) * stride];
            for k in 0..l {
                let c = if transpose { v[k * l + i] } else { v[i * l + k] };
                let in_row = &inb[k * stride..(k + 1) * stride];
                if k == 0 {
                    for (o, inp) in out_row.iter_mut().zip(in_row) {
                        *o = *inp * c;
                    }
                } else {
                    for (o, inp) in out_row.iter_mut().zip(in_row) {
                        *o += *inp * c;
                    }
                }
            }
        }
    }
}

/// Rotate the state into (or back from) the per-axis transformed frame.
fn axis_frame_transform(
    space: SpaceDescriptor,
    cavities: [bool; 3],
    hadamard: bool,
    v: &Arc<Vec<f64>>,
    forward: bool,
    state: &mut Vec<Complex64>,
    ws: &mut Workspace,
) {
    let l = space.levels();
    ws.buf.resize(state.len(), Complex64::new(0.0, 0.0));
    // Into the eigenbasis: w = V^T psi; back: psi = V w.
    let transpose = forward;
    for cavity in 1..=3usize {
        if cavities[cavity - 1] {
            apply_axis(v, l, transpose, space.cavity_stride(cavity), state, &mut ws.buf);
            std::mem::swap(state, &mut ws.buf);
        }
    }
    if hadamard {
        apply_axis(&HADAMARD, 2, transpose, space.qubit_stride(), state, &mut ws.buf);
        std::mem::swap(state, &mut ws.buf);
    }
}

/// Dense small matvec: out = M in with M[i,k] = v[i*bd+k] (or transpose).
fn block_matvec(v: &[f64], bd: usize, transpose: bool, input: &[Complex64], output: &mut [Complex64]) {
    for (i, out) in output.iter_mut().enumerate().take(bd) {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, inp) in input.iter().enumerate() {
            let c = if transpose { v[k * bd + i] } else { v[i * bd + k] };
            acc += *inp * c;
        }
        *out = acc;
    }
}

/// Base offsets (block axes at zero) and in-block offsets for a joint block.
fn block_layout(space: SpaceDescriptor, axes: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let dim = space.dim();
    let mut bases = Vec::new();
    'outer: for idx in 0..dim {
        for &(stride, len) in axes {
            if (idx / stride) % len != 0 {
                continue 'outer;
            }
        }
        bases.push(idx);
    }
    let block_dim: usize = axes.iter().map(|&(_, len)| len).product();
    let mut offsets = Vec::with_capacity(block_dim);
    for b in 0..block_dim {
        let mut rem = b;
        let mut off = 0;
        for &(stride, len) in axes.iter().rev() {
            off += (rem % len) * stride;
            rem /= len;
        }
        offsets.push(off);
    }
    (bases, offsets)
}

// ---------------------------------------------------------------------------
// Compiled propagators
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CompiledOp {
    /// Elementwise phase multiply in the Fock basis.
    Phase(Vec<Complex64>),
    /// Rotate into a per-axis frame, phase, rotate back.
    AxisConj {
        cavities: [bool; 3],
        hadamard: bool,
        v: Arc<Vec<f64>>,
        phase: Vec<Complex64>,
    },
    /// Per invariant sector: gather, rotate, phase, rotate back, scatter.
    BlockConj {
        bases: Vec<usize>,
        offsets: Vec<usize>,
        sectors: Arc<Vec<BlockSector>>,
        /// Per sector, per eigenindex.
        phases: Vec<Vec<Complex64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ExactEig,
    Trotter4,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ExactEig => "exact-eig",
            Method::Trotter4 => "trotter4",
        }
    }
}

enum PropKind {
    Exact {
        // Column-major eigenvector matrix (columns orthonormal).
        v: DMatrix<f64>,
        phases: Vec<Complex64>,
    },
    Trotter {
        program: Vec<CompiledOp>,
    },
}

/// Unitary one-step propagator: advances a state by exactly `dt`.
pub struct Propagator {
    method: Method,
    dt: f64,
    space: SpaceDescriptor,
    kind: PropKind,
}

impl Propagator {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn space(&self) -> SpaceDescriptor {
        self.space
    }

    /// Advance the state by one step of `dt`.
    pub fn step(&self, state: &mut StateVector, ws: &mut Workspace) {
        assert_eq!(state.space(), self.space);
        let space = self.space;
        let amps = state.amplitudes_vec_mut();
        match &self.kind {
            PropKind::Exact { v: evecs, phases } => exact_step(evecs, phases, amps, ws),
            PropKind::Trotter { program } => {
                for op in program {
                    apply_compiled(space, op, amps, ws);
                }
            }
        }
    }

    /// Worst unitarity defect across cached factors:
    /// max |V^T V - I| over transforms and max ||phase| - 1|.
    pub fn max_factor_defect(&self) -> f64 {
        match &self.kind {
            PropKind::Exact { v, phases } => {
                let n = v.nrows();
                let rm = dmatrix_to_row_major(v);
                let mut d = if n <= 800 {
                    orthogonality_defect(&rm, n)
                } else {
                    sampled_orthogonality_defect(&rm, n)
                };
                for p in phases {
                    d = d.max((p.norm() - 1.0).abs());
                }
                d
            }
            PropKind::Trotter { program } => {
                let mut d: f64 = 0.0;
                for op in program {
                    match op {
                        CompiledOp::Phase(ph) => {
                            for p in ph {
                                d = d.max((p.norm() - 1.0).abs());
                            }
                        }
                        CompiledOp::AxisConj { v, phase, .. } => {
                            let l = (v.len() as f64).sqrt() as usize;
                            d = d.max(orthogonality_defect(v, l));
                            for p in phase {
                                d = d.max((p.norm() - 1.0).abs());
                            }
                        }
                        CompiledOp::BlockConj { sectors, phases, .. } => {
                            for sector in sectors.iter() {
                                d = d.max(orthogonality_defect(&sector.v, sector.members.len()));
                            }
                            for p in phases.iter().flatten() {
                                d = d.max((p.norm() - 1.0).abs());
                            }
                        }
                    }
                }
                d
            }
        }
    }
}

fn sampled_orthogonality_defect(v: &[f64], n: usize) -> f64 {
    // Spot-check 64 column pairs plus 64 column norms.
    let mut worst: f64 = 0.0;
    let mut rng = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        rng as usize
    };
    for _ in 0..64 {
        let i = next() % n;
        let j = next() % n;
        let mut acc = 0.0;
        for k in 0..n {
            acc += v[k * n + i] * v[k * n + j];
        }
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((acc - target).abs());
    }
    for _ in 0..64 {
        let i = next() % n;
        let mut acc = 0.0;
        for k in 0..n {
            acc += v[k * n + i] * v[k * n + i];
        }
        worst = worst.max((acc - 1.0).abs());
    }
    worst
}

fn apply_compiled(space: SpaceDescriptor, op: &CompiledOp, state: &mut Vec<Complex64>, ws: &mut Workspace) {
    match op {
        CompiledOp::Phase(phase) => {
            for (s, p) in state.iter_mut().zip(phase) {
                *s *= p;
            }
        }
        CompiledOp::AxisConj {
            cavities,
            hadamard,
            v,
            phase,
        } => {
            axis_frame_transform(space, *cavities, *hadamard, v, true, state, ws);
            for (s, p) in state.iter_mut().zip(phase) {
                *s *= p;
            }
            axis_frame_transform(space, *cavities, *hadamard, v, false, state, ws);
        }
        CompiledOp::BlockConj {
            bases,
            offsets,
            sectors,
            phases,
        } => {
            let max_m = sectors.iter().map(|s| s.members.len()).max().unwrap_or(0);
            ws.gather_in.resize(max_m, Complex64::new(0.0, 0.0));
            ws.gather_out.resize(max_m, Complex64::new(0.0, 0.0));
            for &base in bases {
                for (sector, phase) in sectors.iter().zip(phases) {
                    let m = sector.members.len();
                    for (j, &member) in sector.members.iter().enumerate() {
                        ws.gather_in[j] = state[base + offsets[member]];
                    }
                    block_matvec(&sector.v, m, true, &ws.gather_in[..m], &mut ws.gather_out[..m]);
                    for (t, p) in ws.gather_out[..m].iter_mut().zip(phase) {
                        *t *= p;
                    }
                    block_matvec(&sector.v, m, false, &ws.gather_out[..m], &mut ws.gather_in[..m]);
                    for (j, &member) in sector.members.iter().enumerate() {
                        state[base + offsets[member]] = ws.gather_in[j];
                    }
                }
            }
        }
    }
}

fn exact_step(v: &DMatrix<f64>, phases: &[Complex64], state: &mut [Complex64], ws: &mut Workspace) {
    let n = phases.len();
    let vs = v.as_slice(); // column-major
    ws.buf.resize(n, Complex64::new(0.0, 0.0));
    // w = V^T psi, then phase
    for j in 0..n {
        let col = &vs[j * n..(j + 1) * n];
        let mut acc = Complex64::new(0.0, 0.0);
        for (ci, si) in col.iter().zip(state.iter()) {
            acc += *si * *ci;
        }
        ws.buf[j] = acc * phases[j];
    }
    // psi = V w
    for s in state.iter_mut() {
        *s = Complex64::new(0.0, 0.0);
    }
    for j in 0..n {
        let col = &vs[j * n..(j + 1) * n];
        let wj = ws.buf[j];
        for (ci, si) in col.iter().zip(state.iter_mut()) {
            *si += wj * *ci;
        }
    }
}

/// Exact propagator `U(dt) = exp(-i H dt)` by spectral decomposition.
///
/// Serves as the brute-force oracle; guarded at [`EXACT_DIM_GUARD`].
pub fn exact_propagator(h: &Operator, dt: f64) -> Result<Propagator> {
    let dim = h.dim();
    if dim > EXACT_DIM_GUARD {
        return Err(SimError::DimensionGuard {
            dim,
            guard: EXACT_DIM_GUARD,
        });
    }
    let dev = h.hermiticity_deviation();
    if dev >= 1e-12 {
        return Err(SimError::NotHermitian(dev));
    }
    let dense = h.to_dense_real()?;
    let eig = dense.symmetric_eigen();
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * dt))
        .collect();
    let prop = Propagator {
        method: Method::ExactEig,
        dt,
        space: h.space(),
        kind: PropKind::Exact {
            v: eig.eigenvectors,
            phases,
        },
    };
    let defect = prop.max_factor_defect();
    if defect >= 1e-11 {
        return Err(SimError::FactorNotUnitary(defect));
    }
    Ok(prop)
}

/// 4th-order Suzuki-Trotter propagator over the given split terms.
///
/// `S4(dt) = S2(p dt) S2(p dt) S2((1-4p) dt) S2(p dt) S2(p dt)` with
/// `p = 1/(4 - 4^(1/3))` and `S2` the symmetric splitting. Factors whose
/// terms share a diagonalizing frame are merged, so the full model costs
/// five frame conjugations per step.
///
/// Fails if the terms do not sum to `h` (1e-10 max-norm) or if a term's
/// factored form disagrees with its matrix.
pub fn trotter4_propagator(h: &Operator, terms: &[SplitTerm], dt: f64) -> Result<Propagator> {
    let space = h.space();
    let dim = h.dim();

    // Terms must sum to H.
    let mut sum = Operator::zeros(space);
    for t in terms {
        sum = sum.linear_combination(Complex64::new(1.0, 0.0), &t.matrix, Complex64::new(1.0, 0.0))?;
    }
    let mismatch = sum.max_abs_diff(h);
    if mismatch > 1e-10 {
        return Err(SimError::TermSumMismatch(mismatch));
    }

    // Each term's factored representation must reproduce its matrix.
    let mut ws = Workspace::new(dim);
    let mut probe_rng = 0x2545f4914f6cdd1du64;
    for term in terms {
        let mut probe = vec![Complex64::new(0.0, 0.0); dim];
        for p in probe.iter_mut() {
            probe_rng ^= probe_rng << 13;
            probe_rng ^= probe_rng >> 7;
            probe_rng ^= probe_rng << 17;
            let re = (probe_rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            probe_rng ^= probe_rng << 13;
            probe_rng ^= probe_rng >> 7;
            probe_rng ^= probe_rng << 17;
            let im = (probe_rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            *p = Complex64::new(re, im);
        }
        let via_rep = term.apply_via_rep(space, &probe, &mut ws);
        let mut via_matrix = vec![Complex64::new(0.0, 0.0); dim];
        term.matrix.apply(&probe, &mut via_matrix);
        let scale = 1.0 + term.matrix.max_abs() * (dim as f64).sqrt();
        let deviation = via_rep
            .iter()
            .zip(&via_matrix)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if deviation > 1e-10 * scale {
            return Err(SimError::TermInconsistent {
                label: term.label.to_string(),
                deviation,
            });
        }
    }

    // Factor sequence of S4 as (term index, coefficient * dt).
    let p = suzuki_p();
    let mut sequence: Vec<(usize, f64)> = Vec::new();
    for c in [p, p, 1.0 - 4.0 * p, p, p] {
        let tau = c * dt;
        let m = terms.len();
        for i in 0..m - 1 {
            sequence.push((i, tau / 2.0));
        }
        sequence.push((m - 1, tau));
        for i in (0..m - 1).rev() {
            sequence.push((i, tau / 2.0));
        }
    }

    // Merge adjacent factors sharing a frame and compile phases.
    let mut program: Vec<CompiledOp> = Vec::new();
    let mut i = 0;
    while i < sequence.len() {
        let (base_term, _) = sequence[i];
        let mut group = vec![sequence[i]];
        let mut j = i + 1;
        while j < sequence.len() && terms[sequence[j].0].same_frame(&terms[base_term]) {
            group.push(sequence[j]);
            j += 1;
        }
        i = j;
        program.push(compile_group(space, terms, &group));
    }

    Ok(Propagator {
        method: Method::Trotter4,
        dt,
        space,
        kind: PropKind::Trotter { program },
    })
}

fn compile_group(space: SpaceDescriptor, terms: &[SplitTerm], group: &[(usize, f64)]) -> CompiledOp {
    let rep = &terms[group[0].0].rep;
    match rep {
        TermRep::Diagonal { .. } => {
            let mut exponent = vec![0.0; space.dim()];
            for &(ti, coeff) in group {
                if let TermRep::Diagonal { values } = &terms[ti].rep {
                    for (e, &v) in exponent.iter_mut().zip(values) {
                        *e += coeff * v;
                    }
                }
            }
            CompiledOp::Phase(exponent_to_phase(&exponent))
        }
        TermRep::AxisFrame {
            cavities,
            hadamard,
            v,
            ..
        } => {
            let mut exponent = vec![0.0; space.dim()];
            for &(ti, coeff) in group {
                if let TermRep::AxisFrame { values, .. } = &terms[ti].rep {
                    for (e, &val) in exponent.iter_mut().zip(values) {
                        *e += coeff * val;
                    }
                }
            }
            CompiledOp::AxisConj {
                cavities: *cavities,
                hadamard: *hadamard,
                v: Arc::clone(v),
                phase: exponent_to_phase(&exponent),
            }
        }
        TermRep::Block { axes, sectors } => {
            let (bases, offsets) = block_layout(space, axes);
            // Same frame implies a shared sector set, so only the summed
            // coefficient differs between merged factors.
            let total_coeff: f64 = group.iter().map(|&(_, c)| c).sum();
            let phases = sectors
                .iter()
                .map(|s| {
                    s.eigvals
                        .iter()
                        .map(|&e| Complex64::from_polar(1.0, -total_coeff * e))
                        .collect()
                })
                .collect();
            CompiledOp::BlockConj {
                bases,
                offsets,
                sectors: Arc::clone(sectors),
                phases,
            }
        }
    }
}

fn exponent_to_phase(exponent: &[f64]) -> Vec<Complex64> {
    exponent
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e))
        .collect()
}

/// Convenience: Trotter propagator for the params' model variant.
pub fn trotter_for(space: SpaceDescriptor, params: &SystemParams, dt: f64) -> Result<Propagator> {
    let h = model::hamiltonian(space, params);
    let terms = split_terms(space, params)?;
    trotter4_propagator(&h, &terms, dt)
}

/// Convenience: exact propagator for the params' model variant.
pub fn exact_for(space: SpaceDescriptor, params: &SystemParams, dt: f64) -> Result<Propagator> {
    let h = model::hamiltonian(space, params);
    exact_propagator(&h, dt)
}

// ---------------------------------------------------------------------------
// Observables and trajectories
// ---------------------------------------------------------------------------

/// An observable recorded along a trajectory.
pub enum Observable {
    /// Diagonal in the Fock basis: expectation is a weighted probability sum.
    Diagonal(Vec<f64>),
    /// General sparse Hermitian operator.
    Matrix(Operator),
    /// Arbitrary derived quantity (fidelity, purity, ...).
    Custom(Box<dyn Fn(&StateVector) -> f64 + Send + Sync>),
}

/// Named observables evaluated at every sample time.
pub struct ObservableRegistry {
    names: Vec<String>,
    observables: Vec<Observable>,
}

impl ObservableRegistry {
    pub fn new() -> Self {
        ObservableRegistry {
            names: Vec::new(),
            observables: Vec::new(),
        }
    }

    /// Standard record: per-cavity photon numbers, qubit excitation,
    /// total excitations and the parity monitor.
    pub fn standard(space: SpaceDescriptor) -> Self {
        let mut reg = Self::new();
        for cavity in 1..=3usize {
            reg.push(
                format!("n{cavity}"),
                Observable::Diagonal(observe::photon_number_diagonal(space, cavity)),
            );
        }
        reg.push(
            "qubit_excitation",
            Observable::Diagonal(observe::qubit_excitation_diagonal(space)),
        );
        reg.push(
            "n_total",
            Observable::Diagonal(observe::total_excitation_diagonal(space)),
        );
        reg.push(
            "parity",
            Observable::Diagonal(observe::parity_diagonal(space)),
        );
        reg
    }

    /// Add an energy monitor for the given Hamiltonian.
    pub fn with_energy(mut self, h: &Operator) -> Self {
        self.push("energy", Observable::Matrix(h.clone()));
        self
    }

    pub fn push(&mut self, name: impl Into<String>, obs: Observable) {
        self.names.push(name.into());
        self.observables.push(obs);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn eval(&self, state: &StateVector) -> Vec<f64> {
        self.observables
            .iter()
            .map(|obs| match obs {
                Observable::Diagonal(d) => state
                    .amplitudes()
                    .iter()
                    .zip(d)
                    .map(|(a, &w)| w * a.norm_sqr())
                    .sum(),
                Observable::Matrix(m) => m.expectation(state).re,
                Observable::Custom(f) => f(state),
            })
            .collect()
    }
}

impl Default for ObservableRegistry {
    fn default() -> Self {
        Self::new()
    }
}

/// Metadata carried by every trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub params: SystemParams,
    pub n_max: usize,
    pub method: Method,
    pub dt: f64,
    pub dt_sample: f64,
    pub t_end: f64,
    /// max |norm(psi) - 1| observed at sample times.
    pub norm_drift: f64,
    /// Set when an early-stop predicate ended the evolution.
    pub stopped_early: bool,
}

/// Uniformly sampled time series of recorded observables.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub snapshots: Vec<(f64, StateVector)>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| SimError::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn dt_sample(&self) -> f64 {
        self.meta.dt_sample
    }
}

/// Early-stop and snapshot options for [`evolve_opts`].
pub struct EvolveOptions<'a> {
    /// Called on every sampled record; returning true ends the evolution.
    pub stop: Option<&'a (dyn Fn(&[f64]) -> bool + Sync)>,
    /// Store the full state every k-th sample.
    pub snapshot_every: Option<usize>,
}

impl Default for EvolveOptions<'_> {
    fn default() -> Self {
        EvolveOptions {
            stop: None,
            snapshot_every: None,
        }
    }
}

fn commensurate_steps(dt_sample: f64, dt: f64) -> Result<usize> {
    if dt <= 0.0 || dt_sample <= 0.0 {
        return Err(SimError::NonCommensurateSampling { dt_sample, dt });
    }
    let k = (dt_sample / dt).round();
    if k < 1.0 || (dt_sample - k * dt).abs() > 1e-9 * dt_sample {
        return Err(SimError::NonCommensurateSampling { dt_sample, dt });
    }
    Ok(k as usize)
}

/// Evolve and record observables on the uniform grid `t_k = k dt_sample`.
pub fn evolve(
    state0: &StateVector,
    prop: &Propagator,
    params: &SystemParams,
    t_end: f64,
    dt_sample: f64,
    registry: &ObservableRegistry,
) -> Result<Trajectory> {
    evolve_opts(state0, prop, params, t_end, dt_sample, registry, &EvolveOptions::default())
}

/// [`evolve`] with early-stop / snapshot options.
pub fn evolve_opts(
    state0: &StateVector,
    prop: &Propagator,
    params: &SystemParams,
    t_end: f64,
    dt_sample: f64,
    registry: &ObservableRegistry,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    let steps_per_sample = commensurate_steps(dt_sample, prop.dt())?;
    let n_samples = ((t_end / dt_sample) + 1e-9).floor() as usize;

    let mut state = state0.clone();
    let mut ws = Workspace::new(state.space().dim());
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut rows = Vec::with_capacity(n_samples + 1);
    let mut snapshots = Vec::new();
    let mut norm_drift: f64 = (state.norm() - 1.0).abs();
    let mut stopped_early = false;

    let record =
        |k: usize, state: &StateVector, times: &mut Vec<f64>, rows: &mut Vec<Vec<f64>>| -> Vec<f64> {
            let row = registry.eval(state);
            times.push(k as f64 * dt_sample);
            rows.push(row.clone());
            row
        };

    let row0 = record(0, &state, &mut times, &mut rows);
    if let Some(every) = options.snapshot_every {
        if every > 0 {
            snapshots.push((0.0, state.clone()));
        }
    }
    let stop_now = options.stop.map(|f| f(&row0)).unwrap_or(false);
    if !stop_now {
        'sampling: for k in 1..=n_samples {
            for _ in 0..steps_per_sample {
                prop.step(&mut state, &mut ws);
            }
            let drift = (state.norm() - 1.0).abs();
            norm_drift = norm_drift.max(drift);
            if drift > 1e-6 {
                return Err(SimError::NormDrift { norm: state.norm() });
            }
            let row = record(k, &state, &mut times, &mut rows);
            if let Some(every) = options.snapshot_every {
                if every > 0 && k % every == 0 {
                    snapshots.push((k as f64 * dt_sample, state.clone()));
                }
            }
            if let Some(stop) = options.stop {
                if stop(&row) {
                    stopped_early = true;
                    break 'sampling;
                }
            }
        }
    } else {
        stopped_early = true;
    }

    Ok(Trajectory {
        times,
        columns: registry.names().to_vec(),
        rows,
        snapshots,
        meta: TrajectoryMeta {
            params: *params,
            n_max: state0.space().n_max(),
            method: prop.method(),
            dt: prop.dt(),
            dt_sample,
            t_end,
            norm_drift,
            stopped_early,
        },
    })
}

// ---------------------------------------------------------------------------
// Cutoff convergence
// ---------------------------------------------------------------------------

/// A propagation scenario used for cutoff-convergence testing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scenario {
    pub initial: InitialState,
    pub t_end: f64,
    pub dt: f64,
    pub dt_sample: f64,
}

/// Diagnostics from [`converge_cutoff`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    /// `(n_max, max photon-number difference vs n_max+2)` per comparison.
    pub tested: Vec<(usize, f64)>,
    /// max over time of the total population with any cavity at the cutoff,
    /// measured at the converged n_max.
    pub leakage: Option<f64>,
}

/// Largest allowed cutoff before convergence fails.
pub const CONVERGE_N_MAX_LIMIT: usize = 16;

fn cutoff_population_diagonal(space: SpaceDescriptor) -> Vec<f64> {
    (0..space.dim())
        .map(|idx| {
            let (occ, _) = space.decode(idx);
            if occ.iter().any(|&n| n == space.n_max()) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn run_convergence_probe(
    params: &SystemParams,
    scenario: &Scenario,
    n_max: usize,
) -> Result<Trajectory> {
    let space = crate::fock::build_space(n_max)?;
    let state0 = scenario.initial.build(space)?;
    let prop = trotter_for(space, params, scenario.dt)?;
    let mut registry = ObservableRegistry::new();
    for cavity in 1..=3usize {
        registry.push(
            format!("n{cavity}"),
            Observable::Diagonal(observe::photon_number_diagonal(space, cavity)),
        );
    }
    registry.push(
        "cutoff_population",
        Observable::Diagonal(cutoff_population_diagonal(space)),
    );
    evolve(&state0, &prop, params, scenario.t_end, scenario.dt_sample, &registry)
}

fn photon_diff(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for cavity in 1..=3usize {
        let ca = a.column(&format!("n{cavity}"))?;
        let cb = b.column(&format!("n{cavity}"))?;
        for (x, y) in ca.iter().zip(&cb) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Raise the photon cutoff until per-cavity photon numbers agree between
/// `n_max` and `n_max + 2` to within `tol` over the whole scenario.
///
/// Returns the converged `n_max` plus diagnostics including the top-level
/// leakage. Errors if no convergence below [`CONVERGE_N_MAX_LIMIT`].
pub fn converge_cutoff(
    params: &SystemParams,
    scenario: &Scenario,
    n_max_start: usize,
    tol: f64,
) -> Result<(usize, ConvergenceDiagnostics)> {
    if !tol.is_finite() {
        return Ok((
            n_max_start,
            ConvergenceDiagnostics {
                tested: Vec::new(),
                leakage: None,
            },
        ));
    }
    let mut n = n_max_start.max(1);
    let mut tested = Vec::new();
    let mut current = run_convergence_probe(params, scenario, n)?;
    loop {
        if n + 2 > CONVERGE_N_MAX_LIMIT {
            return Err(SimError::ConvergenceFailure(format!(
                "no convergence below n_max = {CONVERGE_N_MAX_LIMIT}; tested {tested:?} (scenario {scenario:?})"
            )));
        }
        let next = run_convergence_probe(params, scenario, n + 2)?;
        let diff = photon_diff(&current, &next)?;
        tested.push((n, diff));
        if diff < tol {
            let leakage = current
                .column("cutoff_population")?
                .into_iter()
                .fold(0.0f64, f64::max);
            return Ok((
                n,
                ConvergenceDiagnostics {
                    tested,
                    leakage: Some(leakage),
                },
            ));
        }
        n += 2;
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_space, fock_state, QubitLevel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn suzuki_p_constant_matches() {
        assert_abs_diff_eq!(SUZUKI_P, suzuki_p(), epsilon = 1e-15);
    }

    #[test]
    fn exact_identity_at_zero_dt() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.4, 0.1, 0.1).unwrap();
        let h = model::hamiltonian_full(space, &params);
        let prop = exact_propagator(&h, 0.0).unwrap();
        let mut psi = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let original = psi.clone();
        let mut ws = Workspace::new(space.dim());
        prop.step(&mut psi, &mut ws);
        assert!(psi.distance(&original) < 1e-12);
    }

    #[test]
    fn exact_diagonal_hamiltonian_rotates_phases() {
        let space = build_space(1).unwrap();
        // g = J = 0: H is diagonal with energies n1+n2+n3 + wq/2 sz.
        let params = SystemParams::full(1.0, 0.0, 0.0, 0.0).unwrap();
        let h = model::hamiltonian_full(space, &params);
        let dt = 0.37;
        let prop = exact_propagator(&h, dt).unwrap();
        let mut psi = StateVector::zeros(space);
        let idx_a = space.encode([1, 0, 0], QubitLevel::Ground);
        let idx_b = space.encode([0, 0, 0], QubitLevel::Excited);
        psi.amplitudes_mut()[idx_a] = Complex64::new(0.6, 0.0);
        psi.amplitudes_mut()[idx_b] = Complex64::new(0.0, 0.8);
        let mut ws = Workspace::new(space.dim());
        prop.step(&mut psi, &mut ws);
        // E(100,g) = 1 - 0.5 = 0.5; E(000,e) = +0.5
        let expect_a = Complex64::new(0.6, 0.0) * Complex64::from_polar(1.0, -0.5 * dt);
        let expect_b = Complex64::new(0.0, 0.8) * Complex64::from_polar(1.0, -0.5 * dt);
        assert!((psi.amplitudes()[idx_a] - expect_a).norm() < 1e-12);
        assert!((psi.amplitudes()[idx_b] - expect_b).norm() < 1e-12);
    }

    #[test]
    fn vacuum_rabi_oscillation() {
        // n_max=1, J=0, RWA: |000>|e> <-> |010>|g> at frequency 2g.
        let space = build_space(1).unwrap();
        let g = 0.3;
        let params = SystemParams::full_rwa(1.0, g, 0.0, 0.0).unwrap();
        let h = model::hamiltonian(space, &params);
        let dt = 0.05;
        let prop = exact_propagator(&h, dt).unwrap();
        let state0 = fock_state(space, [0, 0, 0], QubitLevel::Excited).unwrap();
        let registry = ObservableRegistry::standard(space);
        let traj = evolve(&state0, &prop, &params, 40.0, dt, &registry).unwrap();
        let pe = traj.column("qubit_excitation").unwrap();
        for (k, t) in traj.times.iter().enumerate() {
            let expected = (g * t).cos().powi(2);
            assert_abs_diff_eq!(pe[k], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn trotter_exact_for_commuting_terms() {
        // g = 0, J = 0: every split term is diagonal, so Trotter is exact
        // even at a large dt.
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.0, 0.0, 0.0).unwrap();
        let dt = 0.7;
        let trotter = trotter_for(space, &params, dt).unwrap();
        let exact = exact_for(space, &params, dt).unwrap();
        let mut a = fock_state(space, [1, 1, 0], QubitLevel::Excited).unwrap();
        let mut b = a.clone();
        let mut ws = Workspace::new(space.dim());
        for _ in 0..20 {
            trotter.step(&mut a, &mut ws);
            exact.step(&mut b, &mut ws);
        }
        assert!(a.distance(&b) < 1e-12);
    }

    #[test]
    fn trotter_agrees_with_exact_full_model() {
        let space = build_space(4).unwrap();
        let params = SystemParams::full(1.0, 0.5, 0.1, 0.1).unwrap();
        let trotter = trotter_for(space, &params, 0.01).unwrap();
        let exact = exact_for(space, &params, 0.01).unwrap();
        let mut a = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let mut b = a.clone();
        let mut ws = Workspace::new(space.dim());
        for _ in 0..500 {
            trotter.step(&mut a, &mut ws);
            exact.step(&mut b, &mut ws);
        }
        assert!(a.distance(&b) < 1e-8, "distance = {}", a.distance(&b));
    }

    #[test]
    fn trotter_agrees_with_exact_all_variants() {
        let space = build_space(3).unwrap();
        for variant in [
            Variant::QubitRwa,
            Variant::FullRwa,
            Variant::DegenerateEffective,
        ] {
            let params = SystemParams::new(1.0, 0.4, 0.1, 0.15, variant).unwrap();
            let trotter = trotter_for(space, &params, 0.02).unwrap();
            let exact = exact_for(space, &params, 0.02).unwrap();
            let mut a = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
            let mut b = a.clone();
            let mut ws = Workspace::new(space.dim());
            for _ in 0..200 {
                trotter.step(&mut a, &mut ws);
                exact.step(&mut b, &mut ws);
            }
            assert!(
                a.distance(&b) < 1e-7,
                "variant {variant:?}: distance = {}",
                a.distance(&b)
            );
        }
    }

    #[test]
    fn trotter_fourth_order_scaling() {
        let space = build_space(3).unwrap();
        let params = SystemParams::full(1.0, 0.5, 0.1, 0.1).unwrap();
        let state0 = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let t_end = 2.0;
        let mut ws = Workspace::new(space.dim());

        let exact = exact_for(space, &params, t_end).unwrap();
        let mut reference = state0.clone();
        exact.step(&mut reference, &mut ws);

        let mut errors = Vec::new();
        for &dt in &[0.1, 0.05, 0.025] {
            let prop = trotter_for(space, &params, dt).unwrap();
            let mut psi = state0.clone();
            let steps = (t_end / dt).round() as usize;
            for _ in 0..steps {
                prop.step(&mut psi, &mut ws);
            }
            errors.push(psi.distance(&reference));
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (8.0..=32.0).contains(&ratio),
                "halving dt should shrink the error ~16x, got {ratio} (errors {errors:?})"
            );
        }
    }

    #[test]
    fn trotter_factors_are_unitary() {
        let space = build_space(3).unwrap();
        for variant in [Variant::Full, Variant::FullRwa, Variant::DegenerateEffective] {
            let params = SystemParams::new(1.0, 0.6, 0.1, 0.1, variant).unwrap();
            let prop = trotter_for(space, &params, 0.01).unwrap();
            assert!(prop.max_factor_defect() < 1e-12);
        }
    }

    #[test]
    fn trotter_norm_preserved_many_steps() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.9, 0.1, 0.1).unwrap();
        let prop = trotter_for(space, &params, 0.01).unwrap();
        let mut psi = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let mut ws = Workspace::new(space.dim());
        for _ in 0..10_000 {
            prop.step(&mut psi, &mut ws);
        }
        assert!((psi.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn term_sum_mismatch_detected() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.5, 0.1, 0.1).unwrap();
        let h = model::hamiltonian_full(space, &params);
        let mut terms = split_terms(space, &params).unwrap();
        terms.pop();
        assert!(matches!(
            trotter4_propagator(&h, &terms, 0.01),
            Err(SimError::TermSumMismatch(_))
        ));
    }

    #[test]
    fn exact_dimension_guard() {
        // n_max = 13 gives dim 5488 > guard.
        let space = build_space(13).unwrap();
        let params = SystemParams::full(1.0, 0.0, 0.0, 0.0).unwrap();
        let h = model::free_hamiltonian(space, &params, true);
        assert!(matches!(
            exact_propagator(&h, 0.1),
            Err(SimError::DimensionGuard { .. })
        ));
    }

    #[test]
    fn evolve_zero_horizon_records_initial_sample() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.3, 0.1, 0.1).unwrap();
        let prop = trotter_for(space, &params, 0.01).unwrap();
        let psi = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let registry = ObservableRegistry::standard(space);
        let traj = evolve(&psi, &prop, &params, 0.0, 0.1, &registry).unwrap();
        assert_eq!(traj.times.len(), 1);
        assert_abs_diff_eq!(traj.rows[0][0], 1.0, epsilon = 1e-12); // n1
        assert_abs_diff_eq!(traj.rows[0][4], 1.0, epsilon = 1e-12); // n_total
    }

    #[test]
    fn evolve_rejects_non_commensurate_sampling() {
        let space = build_space(2).unwrap();
        let params = SystemParams::full(1.0, 0.3, 0.1, 0.1).unwrap();
        let prop = trotter_for(space, &params, 0.03).unwrap();
        let psi = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let registry = ObservableRegistry::standard(space);
        assert!(matches!(
            evolve(&psi, &prop, &params, 1.0, 0.1, &registry),
            Err(SimError::NonCommensurateSampling { .. })
        ));
    }

    #[test]
    fn conserved_charges_under_exact_evolution() {
        let space = build_space(3).unwrap();
        // Full model conserves parity.
        let params = SystemParams::full(1.0, 0.7, 0.1, 0.1).unwrap();
        let prop = exact_for(space, &params, 0.1).unwrap();
        let psi = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let registry = ObservableRegistry::standard(space);
        let traj = evolve(&psi, &prop, &params, 20.0, 0.1, &registry).unwrap();
        let parity = traj.column("parity").unwrap();
        for p in &parity {
            assert_abs_diff_eq!(*p, parity[0], epsilon = 1e-8);
        }
        // FullRWA conserves total excitations.
        let params = SystemParams::full_rwa(1.0, 0.1, 0.05, 0.05).unwrap();
        let prop = exact_for(space, &params, 0.1).unwrap();
        let traj = evolve(&psi, &prop, &params, 20.0, 0.1, &registry).unwrap();
        let ntot = traj.column("n_total").unwrap();
        for n in &ntot {
            assert_abs_diff_eq!(*n, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn converge_cutoff_sc_is_immediate() {
        // Excitation-conserving SC dynamics never sees the cutoff.
        let params = SystemParams::full_rwa(1.0, 0.01, 0.01, 0.01).unwrap();
        let scenario = Scenario {
            initial: InitialState::SinglePhoton,
            t_end: 20.0,
            dt: 0.05,
            dt_sample: 0.5,
        };
        let (n_max, diag) = converge_cutoff(&params, &scenario, 2, 1e-8).unwrap();
        assert!(n_max <= 4);
        assert!(diag.leakage.unwrap() < 1e-8);
    }

    #[test]
    fn converge_cutoff_infinite_tol_short_circuits() {
        let params = SystemParams::full(1.0, 0.9, 0.1, 0.1).unwrap();
        let scenario = Scenario {
            initial: InitialState::SinglePhoton,
            t_end: 10.0,
            dt: 0.01,
            dt_sample: 0.1,
        };
        let (n_max, diag) = converge_cutoff(&params, &scenario, 7, f64::INFINITY).unwrap();
        assert_eq!(n_max, 7);
        assert!(diag.tested.is_empty());
    }

    #[test]
    fn early_stop_truncates_trajectory() {
        let space = build_space(2).unwrap();
        let params = SystemParams::degenerate(0.0, 0.1, 0.1).unwrap();
        let prop = trotter_for(space, &params, 0.01).unwrap();
        let psi = fock_state(space, [1, 0, 0], QubitLevel::Ground).unwrap();
        let registry = ObservableRegistry::standard(space);
        let idx_n1 = registry.index_of("n1").unwrap();
        let idx_n3 = registry.index_of("n3").unwrap();
        let stop = move |row: &[f64]| row[idx_n3] > row[idx_n1];
        let traj = evolve_opts(
            &psi,
            &prop,
            &params,
            100.0,
            0.1,
            &registry,
            &EvolveOptions {
                stop: Some(&stop),
                snapshot_every: None,
            },
        )
        .unwrap();
        assert!(traj.meta.stopped_early);
        // Crossing of cos(sqrt(2) J t) at t = pi/(2 sqrt(2) J) ~ 11.1.
        let t_last = *traj.times.last().unwrap();
        assert!(t_last < 12.0, "stopped at {t_last}");
    }
}
