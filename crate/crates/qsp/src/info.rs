//! Density matrices, entropies and the exhaustive leakage verifiers.
//!
//! The verifiers quantify what each party can learn from its view of the
//! protocol. Views that are diagonal in the computational basis are handled
//! by exact counting (prop1_bound); the same ensembles can also be built as
//! explicit density matrices and pushed through eigensolves, giving two
//! independent evaluation paths that must agree. Classical announcements are
//! modeled as classical coordinates of the ensemble label rather than as
//! quantum registers, which is equivalent for the Holevo quantity and
//! exponentially cheaper.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::modmath::{derive_vn, mod_inv, two_adic, ModMathError, Modulus};
use crate::sim::{
    apply_bsum, apply_mul, apply_qft, apply_rot, apply_sum, apply_xor, RegisterLayout, SimError,
    StateVector,
};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const EIGENVALUE_CLAMP: f64 = 1e-10;

/// Largest reduced matrix dimension reduce() will materialize.
pub const MAX_REDUCED_DIM: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum InfoError {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("trace deviates from 1 by {0:.3e}")]
    TraceNotOne(f64),
    #[error("eigenvalue {0:.3e} is below the negativity tolerance")]
    NegativeEigenvalue(f64),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("ensemble priors sum to {0}, expected 1")]
    PriorsNotNormalized(f64),
    #[error("matrix dimensions disagree")]
    DimensionMismatch,
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitiesNotNormalized(f64),
    #[error("reduced dimension {0} exceeds the {MAX_REDUCED_DIM} cap")]
    ReducedTooLarge(usize),
    #[error("alpha counts for secret {x} total {got}, expected D*|S_C| = {want}")]
    AlphaTotalMismatch { x: usize, got: u64, want: u64 },
    #[error("beta counts total {got}, expected D*|S_X|*|S_C| = {want}")]
    BetaTotalMismatch { got: u64, want: u64 },
    #[error("beta[{index}] = {beta} but the alpha column sums to {alpha_sum}")]
    BetaColumnMismatch { index: usize, beta: u64, alpha_sum: u64 },
    #[error("alpha table has {got} secrets, expected |S_X| = {want}")]
    SecretCountMismatch { got: u64, want: u64 },
    #[error("count {0} is not a power of two, exact entropy accounting impossible")]
    NonDyadicCount(u64),
    #[error("enumeration at width {0} is out of the supported range")]
    EnumerationTooLarge(u32),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Math(#[from] ModMathError),
}

// ======================================================================
// density matrices
// ======================================================================

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace before accepting the matrix.
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self, InfoError> {
        if !mat.is_square() {
            return Err(InfoError::DimensionMismatch);
        }
        let mut asym = 0.0f64;
        for i in 0..mat.nrows() {
            for j in i..mat.ncols() {
                asym = asym.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
            }
        }
        if asym > HERMITIAN_TOL {
            return Err(InfoError::NotHermitian(asym));
        }
        let trace: Complex64 = mat.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(InfoError::TraceNotOne((trace - Complex64::new(1.0, 0.0)).norm()));
        }
        Ok(Self { mat })
    }

    pub fn from_pure(state: &StateVector) -> Result<Self, InfoError> {
        let n = state.dimension();
        let mut mat = DMatrix::zeros(n, n);
        let amps = state.amplitudes();
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = amps[i] * amps[j].conj();
            }
        }
        Self::new(mat)
    }

    /// Diagonal mixture from a probability vector.
    pub fn from_diagonal(probs: &[f64]) -> Result<Self, InfoError> {
        let mut mat = DMatrix::zeros(probs.len(), probs.len());
        for (i, &p) in probs.iter().enumerate() {
            mat[(i, i)] = Complex64::new(p, 0.0);
        }
        Self::new(mat)
    }

    pub fn mix(parts: &[(f64, &DensityMatrix)]) -> Result<Self, InfoError> {
        let first = parts.first().ok_or(InfoError::EmptyEnsemble)?;
        let n = first.1.dim();
        let mut mat = DMatrix::zeros(n, n);
        let mut total = 0.0;
        for (p, rho) in parts {
            if rho.dim() != n {
                return Err(InfoError::DimensionMismatch);
            }
            mat += rho.mat.clone() * Complex64::new(*p, 0.0);
            total += p;
        }
        if (total - 1.0).abs() > TRACE_TOL {
            return Err(InfoError::PriorsNotNormalized(total));
        }
        Self::new(mat)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// Eigenvalues sorted descending; noise below EIGENVALUE_CLAMP is set to
    /// zero, anything more negative is rejected.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, InfoError> {
        let eig = self.mat.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        for v in &mut vals {
            if *v < -EIGENVALUE_CLAMP {
                return Err(InfoError::NegativeEigenvalue(*v));
            }
            if *v < EIGENVALUE_CLAMP {
                *v = 0.0;
            }
        }
        vals.sort_by(|a, b| b.total_cmp(a));
        Ok(vals)
    }

    pub fn von_neumann_entropy(&self) -> Result<f64, InfoError> {
        Ok(self
            .eigenvalues()?
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -v * v.log2())
            .sum())
    }

    pub fn max_entry_distance(&self, other: &DensityMatrix) -> Result<f64, InfoError> {
        if self.dim() != other.dim() {
            return Err(InfoError::DimensionMismatch);
        }
        Ok((&self.mat - &other.mat).iter().map(|z| z.norm()).fold(0.0, f64::max))
    }
}

/// Partial trace keeping the named registers (in the given order, packed
/// LSB-first into the reduced basis label) and tracing out the rest.
pub fn reduce(state: &StateVector, keep: &[&str]) -> Result<DensityMatrix, InfoError> {
    let layout = state.layout();
    let mut kept_spans = Vec::new();
    for name in keep {
        let id = layout.reg(name)?;
        kept_spans.push((layout.offset(id), layout.width(id)));
    }
    let mut env_spans = Vec::new();
    for (name, _) in layout.names() {
        if !keep.contains(&name.as_str()) {
            let id = layout.reg(&name)?;
            env_spans.push((layout.offset(id), layout.width(id)));
        }
    }
    let kept_bits: u32 = kept_spans.iter().map(|s| s.1).sum();
    let env_bits: u32 = env_spans.iter().map(|s| s.1).sum();
    let kdim = 1usize << kept_bits;
    if kdim > MAX_REDUCED_DIM {
        return Err(InfoError::ReducedTooLarge(kdim));
    }

    let scatter = |spans: &[(u32, u32)], mut label: usize| -> usize {
        let mut global = 0usize;
        for (off, w) in spans {
            global |= (label & ((1 << w) - 1)) << off;
            label >>= w;
        }
        global
    };
    let kept_scatter: Vec<usize> = (0..kdim).map(|a| scatter(&kept_spans, a)).collect();

    let amps = state.amplitudes();
    let mut mat = DMatrix::zeros(kdim, kdim);
    let mut col = vec![Complex64::new(0.0, 0.0); kdim];
    for e in 0..1usize << env_bits {
        let base = scatter(&env_spans, e);
        for (a, slot) in col.iter_mut().enumerate() {
            *slot = amps[base | kept_scatter[a]];
        }
        for i in 0..kdim {
            if col[i].norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..kdim {
                mat[(i, j)] += col[i] * col[j].conj();
            }
        }
    }
    DensityMatrix::new(mat)
}

// ======================================================================
// classical entropies and the Holevo quantity
// ======================================================================

pub fn shannon_entropy(probs: &[f64]) -> Result<f64, InfoError> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > TRACE_TOL {
        return Err(InfoError::ProbabilitiesNotNormalized(total));
    }
    Ok(probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum())
}

/// I(X;Y) from a joint table indexed [x][y].
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64, InfoError> {
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > TRACE_TOL {
        return Err(InfoError::ProbabilitiesNotNormalized(total));
    }
    let cols = joint.first().map_or(0, Vec::len);
    if joint.iter().any(|row| row.len() != cols) {
        return Err(InfoError::DimensionMismatch);
    }
    let px: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let mut py = vec![0.0; cols];
    for row in joint {
        for (j, p) in row.iter().enumerate() {
            py[j] += p;
        }
    }
    let mut info = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                info += p * (p / (px[i] * py[j])).log2();
            }
        }
    }
    Ok(info)
}

pub struct ClassicalQuantumEnsemble {
    items: Vec<(u64, f64, DensityMatrix)>,
}

impl ClassicalQuantumEnsemble {
    pub fn new(items: Vec<(u64, f64, DensityMatrix)>) -> Result<Self, InfoError> {
        let first = items.first().ok_or(InfoError::EmptyEnsemble)?;
        let dim = first.2.dim();
        if items.iter().any(|(_, _, rho)| rho.dim() != dim) {
            return Err(InfoError::DimensionMismatch);
        }
        let total: f64 = items.iter().map(|(_, p, _)| p).sum();
        if (total - 1.0).abs() > TRACE_TOL {
            return Err(InfoError::PriorsNotNormalized(total));
        }
        Ok(Self { items })
    }

    pub fn average(&self) -> Result<DensityMatrix, InfoError> {
        let parts: Vec<(f64, &DensityMatrix)> =
            self.items.iter().map(|(_, p, rho)| (*p, rho)).collect();
        DensityMatrix::mix(&parts)
    }

    pub fn items(&self) -> &[(u64, f64, DensityMatrix)] {
        &self.items
    }
}

/// S(rho_bar) - sum_x p_x S(rho_x): an upper bound on the information any
/// measurement can extract about the label.
pub fn holevo_bound(ensemble: &ClassicalQuantumEnsemble) -> Result<f64, InfoError> {
    let mixed = ensemble.average()?.von_neumann_entropy()?;
    let mut conditional = 0.0;
    for (_, p, rho) in ensemble.items() {
        conditional += p * rho.von_neumann_entropy()?;
    }
    Ok(mixed - conditional)
}

// ======================================================================
// counting bound on information disclosure
// ======================================================================

/// Information upper bound from exact view-string counts: alpha_counts[x][b]
/// is how often secret x produces string b, beta_counts[b] the total.
/// Evaluates log2|S_X| - [sum_b beta log2 beta - sum_x sum_b alpha log2 alpha]
/// / (D |S_X| |S_C|) after verifying every total.
pub fn prop1_bound(
    alpha_counts: &[Vec<u64>],
    beta_counts: &[u64],
    d_size: u64,
    s_x: u64,
    s_c: u64,
) -> Result<f64, InfoError> {
    if alpha_counts.len() as u64 != s_x {
        return Err(InfoError::SecretCountMismatch { got: alpha_counts.len() as u64, want: s_x });
    }
    if alpha_counts.iter().any(|row| row.len() != beta_counts.len()) {
        return Err(InfoError::DimensionMismatch);
    }
    let per_x = d_size * s_c;
    for (x, row) in alpha_counts.iter().enumerate() {
        let got: u64 = row.iter().sum();
        if got != per_x {
            return Err(InfoError::AlphaTotalMismatch { x, got, want: per_x });
        }
    }
    let beta_total: u64 = beta_counts.iter().sum();
    if beta_total != d_size * s_x * s_c {
        return Err(InfoError::BetaTotalMismatch { got: beta_total, want: d_size * s_x * s_c });
    }
    for (index, &beta) in beta_counts.iter().enumerate() {
        let alpha_sum: u64 = alpha_counts.iter().map(|row| row[index]).sum();
        if alpha_sum != beta {
            return Err(InfoError::BetaColumnMismatch { index, beta, alpha_sum });
        }
    }

    let xlogx = |c: u64| if c == 0 { 0.0 } else { c as f64 * (c as f64).log2() };
    let beta_term: f64 = beta_counts.iter().map(|&b| xlogx(b)).sum();
    let alpha_term: f64 = alpha_counts.iter().flatten().map(|&a| xlogx(a)).sum();
    Ok((s_x as f64).log2() - (beta_term - alpha_term) / (d_size * s_x * s_c) as f64)
}

// ======================================================================
// receiver-view enumeration (honest sender, curious receiver)
// ======================================================================

pub const DEFAULT_RECEIVER_KEYS: [u64; 3] = [3, 5, 7];

#[derive(Debug, Clone, Serialize)]
pub struct CountingReport {
    pub d: u32,
    pub secret_count: u64,
    pub context_count: u64,
    pub image_size: u64,
    pub bound_bits: f64,
}

struct ViewTables {
    dsz: u64,
    n: u64,
    s_c: u64,
    /// alpha[x][string]; strings pack the view fields d bits apiece.
    alpha: Vec<Vec<u64>>,
}

fn check_enumeration_width(d: u32, max: u32) -> Result<(), InfoError> {
    if !(2..=max).contains(&d) {
        return Err(InfoError::EnumerationTooLarge(d));
    }
    Ok(())
}

/// Enumerates the receiver's full round view (t1, t2, g contents plus the
/// unmask announcements) over every secret, mask tuple and branch.
fn enumerate_receiver_views(d: u32, k: [u64; 3]) -> Result<ViewTables, InfoError> {
    check_enumeration_width(d, 4)?;
    let m = Modulus::new(d).expect("width checked");
    let dsz = m.size();
    let n = dsz / 4;
    let s_c = dsz * dsz * dsz * (dsz / 2);
    let (k1, k2, k3) = (m.reduce(k[0]), m.reduce(k[1]), m.reduce(k[2]));

    let mut alpha = vec![vec![0u64; 1 << (5 * d)]; n as usize];
    for x in 0..n {
        let p = m.reduce(2 * x + 1);
        let row = &mut alpha[x as usize];
        for c3 in (1..dsz).step_by(2) {
            for c1 in 0..dsz {
                for c2 in 0..dsz {
                    for c4 in 0..dsz {
                        let r1 = m.add(m.add(k1, m.mul(p, k2)), m.mul(c3, k3));
                        let r2 = m.add(m.add(m.mul(c1, k1), m.mul(c2, k2)), m.mul(c4, k3));
                        let r3 = mod_inv(r1, &m)?;
                        let r4 = m.sub(c1, m.mul(r2, r3));
                        for j in 0..dsz {
                            let b1 = m.add(j, c1);
                            let b2 = m.add(m.mul(j, p), c2);
                            let b3 = m.add(m.mul(j, c3), c4);
                            let s = b1
                                | (b2 << d)
                                | (b3 << (2 * d))
                                | (r3 << (3 * d))
                                | (r4 << (4 * d));
                            row[s as usize] += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(ViewTables { dsz, n, s_c, alpha })
}

/// Variant with the bonding register unmasked (c3 = c4 = 0): its contents
/// reduce to a combination the receiver can predict, and the unmasked bond
/// coefficient k1 + p k2 joins the view directly.
fn enumerate_receiver_views_no_masking(d: u32) -> Result<ViewTables, InfoError> {
    check_enumeration_width(d, 4)?;
    let m = Modulus::new(d).expect("width checked");
    let dsz = m.size();
    let n = dsz / 4;
    let s_c = dsz * dsz;
    let [k1, k2, _] = DEFAULT_RECEIVER_KEYS.map(|k| m.reduce(k));

    let mut alpha = vec![vec![0u64; 1 << (3 * d)]; n as usize];
    for x in 0..n {
        let p = m.reduce(2 * x + 1);
        let r1 = m.add(k1, m.mul(p, k2));
        let row = &mut alpha[x as usize];
        for c1 in 0..dsz {
            for c2 in 0..dsz {
                for j in 0..dsz {
                    let b1 = m.add(j, c1);
                    let b2 = m.add(m.mul(j, p), c2);
                    let s = b1 | (b2 << d) | (r1 << (2 * d));
                    row[s as usize] += 1;
                }
            }
        }
    }
    Ok(ViewTables { dsz, n, s_c, alpha })
}

fn counting_report(d: u32, t: &ViewTables) -> Result<CountingReport, InfoError> {
    let len = t.alpha[0].len();
    let mut beta = vec![0u64; len];
    for row in &t.alpha {
        for (b, a) in beta.iter_mut().zip(row) {
            *b += a;
        }
    }
    let image_size = beta.iter().filter(|&&b| b > 0).count() as u64;
    let bound = prop1_bound(&t.alpha, &beta, t.dsz, t.n, t.s_c)?;
    Ok(CountingReport {
        d,
        secret_count: t.n,
        context_count: t.s_c,
        image_size,
        bound_bits: bound,
    })
}

/// Exact count-based information bound for the full protocol round; the
/// image size doubles as a check of the unmask-equation solvability count.
pub fn lemma2_counting(d: u32) -> Result<CountingReport, InfoError> {
    lemma2_counting_with_keys(d, DEFAULT_RECEIVER_KEYS)
}

pub fn lemma2_counting_with_keys(d: u32, k: [u64; 3]) -> Result<CountingReport, InfoError> {
    let t = enumerate_receiver_views(d, k)?;
    counting_report(d, &t)
}

/// Same bound for the unmasked variant; a strictly positive result shows the
/// masked bonding register is what closes the leak.
pub fn lemma2_counting_no_masking(d: u32) -> Result<CountingReport, InfoError> {
    let t = enumerate_receiver_views_no_masking(d)?;
    counting_report(d, &t)
}

/// Second, independent evaluation path: the same ensembles as explicit
/// density matrices. The classical announcement fields split every matrix
/// into orthogonal blocks, so the Holevo quantity decomposes exactly into
/// I(X;R) plus the block-averaged quantum term; each block is eigensolved
/// densely. quantum_fields says how many leading d-bit fields of the view
/// string are quantum registers (the rest are classical announcements).
fn dense_holevo_from_tables(d: u32, t: &ViewTables, quantum_fields: u32) -> Result<f64, InfoError> {
    let qbits = quantum_fields * d;
    let qdim = 1usize << qbits;
    let qmask = (qdim - 1) as u64;
    let nx = t.n as usize;

    // per classical block: dense quantum counts for each secret
    let mut blocks: BTreeMap<u64, Vec<Vec<u64>>> = BTreeMap::new();
    for (x, row) in t.alpha.iter().enumerate() {
        for (s, &count) in row.iter().enumerate() {
            if count > 0 {
                let r = (s as u64) >> qbits;
                let q = (s as u64) & qmask;
                blocks.entry(r).or_insert_with(|| vec![vec![0u64; qdim]; nx])[x][q as usize] +=
                    count;
            }
        }
    }

    let per_x_total = (t.dsz * t.s_c) as f64;
    let grand_total = per_x_total * t.n as f64;

    // classical information in the announcements themselves
    let joint: Vec<Vec<f64>> = (0..nx)
        .map(|x| {
            blocks
                .values()
                .map(|per_x| per_x[x].iter().sum::<u64>() as f64 / grand_total)
                .collect()
        })
        .collect();
    let classical = mutual_information(&joint)?;

    // quantum information within each block
    let mut quantum = 0.0;
    for per_x in blocks.values() {
        let totals: Vec<u64> = per_x.iter().map(|c| c.iter().sum()).collect();
        let block_total: u64 = totals.iter().sum();
        let p_r = block_total as f64 / grand_total;
        let mut sigmas = Vec::with_capacity(nx);
        for (x, counts) in per_x.iter().enumerate() {
            if totals[x] == 0 {
                sigmas.push(None);
                continue;
            }
            let probs: Vec<f64> =
                counts.iter().map(|&c| c as f64 / totals[x] as f64).collect();
            sigmas.push(Some(DensityMatrix::from_diagonal(&probs)?));
        }
        let parts: Vec<(f64, &DensityMatrix)> = sigmas
            .iter()
            .enumerate()
            .filter_map(|(x, s)| {
                s.as_ref().map(|rho| (totals[x] as f64 / block_total as f64, rho))
            })
            .collect();
        let mixed = DensityMatrix::mix(&parts)?;
        let mut chi = mixed.von_neumann_entropy()?;
        for (p, rho) in &parts {
            chi -= p * rho.von_neumann_entropy()?;
        }
        quantum += p_r * chi;
    }
    Ok(classical + quantum)
}

pub fn lemma2_dense_holevo(d: u32) -> Result<f64, InfoError> {
    let t = enumerate_receiver_views(d, DEFAULT_RECEIVER_KEYS)?;
    dense_holevo_from_tables(d, &t, 3)
}

pub fn lemma2_dense_holevo_no_masking(d: u32) -> Result<f64, InfoError> {
    let t = enumerate_receiver_views_no_masking(d)?;
    dense_holevo_from_tables(d, &t, 2)
}

/// Monolithic variant of the dense path for the unmasked ensemble: classical
/// coordinates embedded as orthogonal blocks of one big matrix, one
/// holevo_bound call, no decomposition. Feasible because the support stays
/// small; validates the block decomposition used above.
pub fn lemma2_dense_holevo_no_masking_monolithic(d: u32) -> Result<f64, InfoError> {
    let t = enumerate_receiver_views_no_masking(d)?;
    let len = t.alpha[0].len();
    let support: Vec<usize> = (0..len)
        .filter(|&s| t.alpha.iter().any(|row| row[s] > 0))
        .collect();
    if support.len() > MAX_REDUCED_DIM {
        return Err(InfoError::ReducedTooLarge(support.len()));
    }
    let per_x_total = (t.dsz * t.s_c) as f64;
    let mut items = Vec::new();
    for (x, row) in t.alpha.iter().enumerate() {
        let probs: Vec<f64> = support.iter().map(|&s| row[s] as f64 / per_x_total).collect();
        items.push((x as u64, 1.0 / t.n as f64, DensityMatrix::from_diagonal(&probs)?));
    }
    holevo_bound(&ClassicalQuantumEnsemble::new(items)?)
}

// ======================================================================
// phase-blindness of the transferred registers
// ======================================================================

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub max_reduced_deviation: f64,
    pub control_full_deviation: f64,
}

fn entangled_after_phase_input(
    d: u32,
    c: [u64; 4],
    k: [u64; 3],
    p: u64,
    s: u64,
    q: u64,
) -> Result<StateVector, InfoError> {
    let m = Modulus::new(d).expect("width validated by layout");
    let layout = RegisterLayout::uniform(&["h", "t1", "t2", "g"], d)?;
    let h = layout.reg("h")?;
    let t1 = layout.reg("t1")?;
    let t2 = layout.reg("t2")?;
    let g = layout.reg("g")?;
    let mut st = StateVector::zero_state(layout);

    apply_qft(&mut st, h, false)?;
    apply_xor(&mut st, h, t1)?;
    apply_xor(&mut st, h, t2)?;
    apply_xor(&mut st, h, g)?;
    apply_mul(&mut st, t2, p)?;
    apply_mul(&mut st, g, c[2])?;
    apply_sum(&mut st, t1, c[0])?;
    apply_sum(&mut st, t2, c[1])?;
    apply_sum(&mut st, g, c[3])?;

    apply_mul(&mut st, t1, k[0])?;
    apply_mul(&mut st, t2, k[1])?;
    apply_mul(&mut st, g, k[2])?;
    apply_bsum(&mut st, t1, g)?;
    apply_bsum(&mut st, t2, g)?;
    apply_mul(&mut st, t1, mod_inv(k[0], &m)?)?;
    apply_mul(&mut st, t2, mod_inv(k[1], &m)?)?;

    apply_rot(&mut st, t1, s)?;
    apply_rot(&mut st, t2, q)?;
    Ok(st)
}

/// Shows the transferred registers carry no trace of the phase inputs: over
/// the given (s, q) family the reduced state on (t1, t2, g) is constant,
/// while the full four-register state (the control) is not.
pub fn lemma1_check(
    d: u32,
    c: [u64; 4],
    k: [u64; 3],
    p: u64,
    phase_pairs: &[(u64, u64)],
) -> Result<Lemma1Report, InfoError> {
    let Some(&first_pair) = phase_pairs.first() else {
        return Ok(Lemma1Report { max_reduced_deviation: 0.0, control_full_deviation: 0.0 });
    };
    let first_state = entangled_after_phase_input(d, c, k, p, first_pair.0, first_pair.1)?;
    let first_reduced = reduce(&first_state, &["t1", "t2", "g"])?;

    let mut max_reduced = 0.0f64;
    let mut max_full = 0.0f64;
    for &(s, q) in &phase_pairs[1..] {
        let state = entangled_after_phase_input(d, c, k, p, s, q)?;
        let reduced = reduce(&state, &["t1", "t2", "g"])?;
        max_reduced = max_reduced.max(first_reduced.max_entry_distance(&reduced)?);

        let a = first_state.amplitudes();
        let b = state.amplitudes();
        let mut dev = 0.0f64;
        for i in 0..a.len() {
            if a[i].norm_sqr() == 0.0 && b[i].norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..a.len() {
                dev = dev.max((a[i] * a[j].conj() - b[i] * b[j].conj()).norm());
            }
        }
        max_full = max_full.max(dev);
    }
    Ok(Lemma1Report { max_reduced_deviation: max_reduced, control_full_deviation: max_full })
}

// ======================================================================
// forged-superposition survivor analysis
// ======================================================================

#[derive(Debug, Clone, Serialize)]
pub struct SubgroupClass {
    pub valuation: u32,
    pub subgroup_size: u64,
    pub class_count: u64,
    pub pass_probability: f64,
    pub survivor_entropy_bits: f64,
    #[serde(skip)]
    pub survivor_eigenvalues: Vec<f64>,
}

/// Leakage summary serialized for reports: what an attack learns on average,
/// the analytic ceiling, and how often the honest test catches it.
#[derive(Debug, Clone, Serialize)]
pub struct LeakageReport {
    pub attack: String,
    pub leakage_bits: f64,
    pub bound_bits: f64,
    pub detected_fraction: f64,
    #[serde(skip)]
    pub classes: Vec<SubgroupClass>,
}

fn survivor_density(d: u32, pass_set: &[u64]) -> Result<DensityMatrix, InfoError> {
    let m = Modulus::new(d).expect("width checked");
    let dsz = m.size() as usize;
    let js = pass_set.len() as f64;
    let mut mat = DMatrix::<Complex64>::zeros(dsz, dsz);
    let odd_count = (m.size() / 2) as f64;
    for s in (1..m.size()).step_by(2) {
        for &j1 in pass_set {
            for &j2 in pass_set {
                let phase = 2.0 * std::f64::consts::PI
                    * (m.mul(j1, s) as f64 - m.mul(j2, s) as f64)
                    / m.size() as f64;
                mat[(j1 as usize, j2 as usize)] +=
                    Complex64::from_polar(1.0 / (js * odd_count), phase);
            }
        }
    }
    DensityMatrix::new(mat)
}

/// Classifies the forged-superposition pass sets by the two-adic valuation of
/// 1 - k1 r3, eigensolves the survivor state mixed over the peer's odd phase
/// secret, and averages the per-class Holevo quantities (detected runs
/// contribute zero).
pub fn lemma3_verifier(d: u32) -> Result<LeakageReport, InfoError> {
    lemma3_verifier_with_offset(d, 0)
}

pub fn lemma3_verifier_with_offset(d: u32, r4: u64) -> Result<LeakageReport, InfoError> {
    if !(2..=6).contains(&d) {
        return Err(InfoError::EnumerationTooLarge(d));
    }
    let m = Modulus::new(d).expect("width checked");
    let dsz = m.size();
    let r4 = m.reduce(r4);

    // class key: two-adic valuation of 1 - k1 r3
    let mut class_pairs: BTreeMap<u32, u64> = BTreeMap::new();
    let mut class_pass_sets: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for k1 in (1..dsz).step_by(2) {
        for r3 in (1..dsz).step_by(2) {
            let delta = m.sub(1, m.mul(k1, r3));
            let val = two_adic(delta, &m).exponent;
            let pass_set: Vec<u64> = (0..dsz).filter(|&j| m.mul(j, delta) == r4).collect();
            if let Some(existing) = class_pass_sets.get(&val) {
                debug_assert_eq!(existing.len(), pass_set.len());
            } else {
                class_pass_sets.insert(val, pass_set);
            }
            *class_pairs.entry(val).or_insert(0) += 1;
        }
    }

    let total_pairs: u64 = class_pairs.values().sum();
    let mut classes = Vec::new();
    let mut leakage = 0.0;
    let mut detected = 0.0;
    for (&val, &count) in &class_pairs {
        let pass_set = &class_pass_sets[&val];
        let p_class = count as f64 / total_pairs as f64;
        let pass_probability = pass_set.len() as f64 / dsz as f64;
        let (entropy, eigs) = if pass_set.is_empty() {
            (0.0, Vec::new())
        } else {
            let rho = survivor_density(d, pass_set)?;
            (rho.von_neumann_entropy()?, rho.eigenvalues()?)
        };
        leakage += p_class * pass_probability * entropy;
        detected += p_class * (1.0 - pass_probability);
        classes.push(SubgroupClass {
            valuation: val,
            subgroup_size: pass_set.len() as u64,
            class_count: count,
            pass_probability,
            survivor_entropy_bits: entropy,
            survivor_eigenvalues: eigs,
        });
    }

    let dd = d as f64;
    Ok(LeakageReport {
        attack: "forged-superposition".to_string(),
        leakage_bits: leakage,
        bound_bits: (dd * dd + dd - 2.0) / (2.0 * dsz as f64),
        detected_fraction: detected,
        classes,
    })
}

// ======================================================================
// sender-side view of the combined messages
// ======================================================================

#[derive(Debug, Clone, Serialize)]
pub struct Lemma4Report {
    pub n: usize,
    pub m: u32,
    pub secret_entropy_bits: f64,
    pub conditional_entropy_bits: f64,
    pub output_entropy_bits: f64,
    pub extra_information_bits: f64,
}

/// Exhaustively verifies that the combined messages tell the sender nothing
/// about the peer's inputs beyond the protocol output itself. All counts are
/// powers of two, so the entropy bookkeeping is exact integer arithmetic.
pub fn lemma4_verifier(x: &[u64], m: u32) -> Result<Lemma4Report, InfoError> {
    let n = x.len();
    if n == 0 || n > 3 || m == 0 || m > 2 {
        return Err(InfoError::EnumerationTooLarge(m));
    }
    let md = Modulus::new(m + 2).expect("m + 2 <= 4");
    let nsz = 1u64 << m;
    let x: Vec<u64> = x.iter().map(|&xi| xi % nsz).collect();

    // key: (secret index, view index); count tuples of split draws
    let secret_count = nsz.pow(n as u32) * nsz;
    let split_count = nsz.pow(n as u32 - 1);
    let total = secret_count * split_count;

    let mut joint: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    let mut by_view: BTreeMap<u64, u64> = BTreeMap::new();
    let mut by_output: BTreeMap<u64, u64> = BTreeMap::new();
    for ycode in 0..nsz.pow(n as u32) {
        let y: Vec<u64> = (0..n).map(|i| (ycode >> (m * i as u32)) & (nsz - 1)).collect();
        for v in 0..nsz {
            let secret = ycode * nsz + v;
            for split in 0..split_count {
                let mut parts: Vec<u64> =
                    (0..n - 1).map(|i| (split >> (m * i as u32)) & (nsz - 1)).collect();
                parts.push(0);
                let vn = derive_vn(v, &parts[..n - 1], m);
                parts[n - 1] = vn;

                let mut view = 0u64;
                let mut msum = 0u64;
                for i in 0..n {
                    let mi =
                        md.add(md.add(md.mul(4 * x[i], y[i]), md.reduce(4 * parts[i])), 2 * x[i]);
                    view |= mi << ((m + 2) * i as u32);
                    msum = md.add(msum, md.sub(mi, md.reduce(2 * x[i])));
                }
                debug_assert_eq!(msum % 4, 0);
                let u = (msum / 4) % nsz;
                debug_assert_eq!(
                    u,
                    (x.iter().zip(&y).map(|(a, b)| a * b).sum::<u64>() + v) % nsz
                );

                *joint.entry((secret, view)).or_insert(0) += 1;
                *by_view.entry(view).or_insert(0) += 1;
                *by_output.entry(u).or_insert(0) += 1;
            }
        }
    }

    let ilog = |c: u64| -> Result<i64, InfoError> {
        if !c.is_power_of_two() {
            return Err(InfoError::NonDyadicCount(c));
        }
        Ok(c.ilog2() as i64)
    };

    // every entropy term times the tuple total stays an integer
    let log_total = ilog(total)?;
    let mut secret_term = 0i64; // T * H(X_B)
    let mut by_secret: BTreeMap<u64, u64> = BTreeMap::new();
    for (&(secret, _), &c) in &joint {
        *by_secret.entry(secret).or_insert(0) += c;
    }
    for &c in by_secret.values() {
        secret_term += c as i64 * (log_total - ilog(c)?);
    }
    let mut conditional_term = 0i64; // T * H(X_B | view)
    for (&(_, view), &c) in &joint {
        conditional_term += c as i64 * (ilog(by_view[&view])? - ilog(c)?);
    }
    let mut output_term = 0i64; // T * H(u)
    for &c in by_output.values() {
        output_term += c as i64 * (log_total - ilog(c)?);
    }

    let extra = secret_term - conditional_term - output_term;
    Ok(Lemma4Report {
        n,
        m,
        secret_entropy_bits: secret_term as f64 / total as f64,
        conditional_entropy_bits: conditional_term as f64 / total as f64,
        output_entropy_bits: output_term as f64 / total as f64,
        extra_information_bits: extra as f64 / total as f64,
    })
}

// ======================================================================
// tests
// ======================================================================
