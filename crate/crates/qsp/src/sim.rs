//! Register-structured state-vector simulator.
//!
//! A state lives over an ordered list of named registers; basis labels are
//! LSB-first inside each register (bit i of a register's value has weight
//! 2^i). Permutation gates (SUM, MUL, XOR, BSUM) are implemented as exact
//! index remappings and diagonal gates (ROT) as phase tables, never as dense
//! matrices. The QFT is a per-register size-D discrete Fourier transform on
//! amplitude slices.
//!
//! Tolerance ladder used across the crate:
//!
//! | constant             | value   | used for                       |
//! |----------------------|---------|--------------------------------|
//! | GATE_NORM_TOL        | 1e-12   | per-gate norm drift            |
//! | STATE_TOL            | 1e-9    | end-to-end state comparisons   |
//! | MEASURE_NORM_TOL     | 1e-6    | norm guard before sampling     |
//! | DETERMINISTIC_MASS   | 1-1e-9  | single-outcome measure shortcut|

use num_complex::Complex64;
use rand::{Rng, RngExt};
use serde::Serialize;
use thiserror::Error;

use crate::modmath::Modulus;

pub type C64 = Complex64;

pub const GATE_NORM_TOL: f64 = 1e-12;
pub const STATE_TOL: f64 = 1e-9;
pub const MEASURE_NORM_TOL: f64 = 1e-6;
pub const DETERMINISTIC_MASS: f64 = 1.0 - 1e-9;

/// Hard cap on total qubits; 2^24 amplitudes is the largest state this crate
/// is willing to allocate.
pub const MAX_QUBITS: u32 = 24;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("layout needs {0} qubits, exceeding the cap of {MAX_QUBITS}")]
    LayoutTooLarge(u32),
    #[error("duplicate register name {0}")]
    DuplicateRegister(String),
    #[error("unknown register {0}")]
    UnknownRegister(String),
    #[error("register width must be at least 1")]
    EmptyRegister,
    #[error("source and destination must be different registers")]
    SameRegister,
    #[error("register widths differ ({0} vs {1})")]
    WidthMismatch(u32, u32),
    #[error("multiplier {0} is even, MUL is only a permutation for odd factors")]
    EvenMultiplier(u64),
    #[error("state norm deviates from 1 by {0:.3e}")]
    NormDeviation(f64),
    #[error("states have different dimensions")]
    DimensionMismatch,
    #[error("basis value {value} out of range for register of width {width}")]
    ValueOutOfRange { value: u64, width: u32 },
}

// ======================================================================
// layout
// ======================================================================

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct RegisterInfo {
    name: String,
    width: u32,
    offset: u32,
}

/// Ordered list of named registers. The first register occupies the lowest
/// global bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterLayout {
    regs: Vec<RegisterInfo>,
    total: u32,
}

/// Handle to a register inside the layout it was looked up from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegId(usize);

impl RegisterLayout {
    pub fn new(spec: &[(&str, u32)]) -> Result<Self, SimError> {
        let mut regs = Vec::with_capacity(spec.len());
        let mut offset = 0u32;
        for (name, width) in spec {
            if *width == 0 {
                return Err(SimError::EmptyRegister);
            }
            if regs.iter().any(|r: &RegisterInfo| r.name == *name) {
                return Err(SimError::DuplicateRegister(name.to_string()));
            }
            regs.push(RegisterInfo { name: name.to_string(), width: *width, offset });
            offset += *width;
        }
        if offset > MAX_QUBITS {
            return Err(SimError::LayoutTooLarge(offset));
        }
        Ok(Self { regs, total: offset })
    }

    /// Convenience constructor for n registers of equal width.
    pub fn uniform(names: &[&str], width: u32) -> Result<Self, SimError> {
        let spec: Vec<(&str, u32)> = names.iter().map(|n| (*n, width)).collect();
        Self::new(&spec)
    }

    pub fn reg(&self, name: &str) -> Result<RegId, SimError> {
        self.regs
            .iter()
            .position(|r| r.name == name)
            .map(RegId)
            .ok_or_else(|| SimError::UnknownRegister(name.to_string()))
    }

    pub fn total_qubits(&self) -> u32 {
        self.total
    }

    pub fn register_count(&self) -> usize {
        self.regs.len()
    }

    pub fn name(&self, reg: RegId) -> &str {
        &self.regs[reg.0].name
    }

    pub fn width(&self, reg: RegId) -> u32 {
        self.regs[reg.0].width
    }

    pub fn offset(&self, reg: RegId) -> u32 {
        self.regs[reg.0].offset
    }

    /// Register dimension D = 2^width.
    pub fn dim(&self, reg: RegId) -> u64 {
        1u64 << self.regs[reg.0].width
    }

    pub fn modulus(&self, reg: RegId) -> Modulus {
        Modulus::new(self.regs[reg.0].width).expect("register width within modulus range")
    }

    pub fn names(&self) -> Vec<(String, u32)> {
        self.regs.iter().map(|r| (r.name.clone(), r.width)).collect()
    }

    /// Extracts this register's value from a global basis index.
    #[inline]
    pub fn value_of(&self, reg: RegId, index: usize) -> u64 {
        let r = &self.regs[reg.0];
        ((index as u64) >> r.offset) & ((1u64 << r.width) - 1)
    }
}

// ======================================================================
// state
// ======================================================================

#[derive(Debug, Clone)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<C64>,
}

/// One measurement event: the sampled value and the collapsed posterior.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub register: String,
    pub value: u64,
    pub probability: f64,
    pub posterior: StateVector,
}

/// Serializable snapshot of the non-negligible amplitudes of a state.
#[derive(Debug, Clone, Serialize)]
pub struct StateDump {
    pub registers: Vec<(String, u32)>,
    pub entries: Vec<AmplitudeEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeEntry {
    pub index: u64,
    pub values: Vec<u64>,
    pub re: f64,
    pub im: f64,
}

impl StateVector {
    /// |0...0> over the given layout.
    pub fn zero_state(layout: RegisterLayout) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << layout.total];
        amps[0] = C64::new(1.0, 0.0);
        Self { layout, amps }
    }

    /// Basis state with one value per register, in layout order.
    pub fn basis_state(layout: RegisterLayout, values: &[u64]) -> Result<Self, SimError> {
        assert_eq!(values.len(), layout.regs.len(), "one value per register");
        let mut index = 0u64;
        for (reg, &v) in layout.regs.iter().zip(values) {
            if v >= (1u64 << reg.width) {
                return Err(SimError::ValueOutOfRange { value: v, width: reg.width });
            }
            index |= v << reg.offset;
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << layout.total];
        amps[index as usize] = C64::new(1.0, 0.0);
        Ok(Self { layout, amps })
    }

    /// Builds a state from explicit amplitudes (normalized by the caller).
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<C64>) -> Result<Self, SimError> {
        if amps.len() != 1usize << layout.total {
            return Err(SimError::DimensionMismatch);
        }
        Ok(Self { layout, amps })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn dimension(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Packs one value per register into a global amplitude index.
    pub fn pack(&self, values: &[u64]) -> usize {
        assert_eq!(values.len(), self.layout.regs.len());
        let mut index = 0u64;
        for (reg, &v) in self.layout.regs.iter().zip(values) {
            debug_assert!(v < (1u64 << reg.width));
            index |= v << reg.offset;
        }
        index as usize
    }

    pub fn debug_dump(&self, tol: f64) -> StateDump {
        let mut entries = Vec::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > tol * tol {
                let values = (0..self.layout.regs.len())
                    .map(|r| self.layout.value_of(RegId(r), i))
                    .collect();
                entries.push(AmplitudeEntry { index: i as u64, values, re: a.re, im: a.im });
            }
        }
        StateDump { registers: self.layout.names(), entries }
    }
}

// ======================================================================
// semantic gates
// ======================================================================

fn remap_register(state: &mut StateVector, reg: RegId, table: &[u64]) {
    let off = state.layout.offset(reg);
    let mask = (state.layout.dim(reg) - 1) << off;
    let mut out = vec![C64::new(0.0, 0.0); state.amps.len()];
    for (idx, &a) in state.amps.iter().enumerate() {
        let v = ((idx as u64) & mask) >> off;
        let nidx = ((idx as u64) & !mask) | (table[v as usize] << off);
        out[nidx as usize] = a;
    }
    state.amps = out;
}

/// Quantum Fourier transform on one register: |a> -> (1/sqrt(D)) sum_j w^{aj} |j>
/// with w = e^{i 2 pi / D}; the inverse flag conjugates the kernel.
pub fn apply_qft(state: &mut StateVector, reg: RegId, inverse: bool) -> Result<(), SimError> {
    let off = state.layout.offset(reg);
    let width = state.layout.width(reg);
    let dsz = 1usize << width;
    let sign = if inverse { -1.0 } else { 1.0 };
    let scale = 1.0 / (dsz as f64).sqrt();
    let omega: Vec<C64> = (0..dsz)
        .map(|k| C64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * k as f64 / dsz as f64))
        .collect();

    let len = state.amps.len();
    let low_mask = (1usize << off) - 1;
    let mut slice_in = vec![C64::new(0.0, 0.0); dsz];
    for rest in 0..(len >> width) {
        let base = (rest & low_mask) | ((rest & !low_mask) << width);
        for (a, s) in slice_in.iter_mut().enumerate() {
            *s = state.amps[base | (a << off)];
        }
        for j in 0..dsz {
            let mut acc = C64::new(0.0, 0.0);
            for (a, s) in slice_in.iter().enumerate() {
                acc += *s * omega[(a * j) % dsz];
            }
            state.amps[base | (j << off)] = acc * scale;
        }
    }
    Ok(())
}

/// Phase rotation |a> -> w^{ab} |a> on one register.
pub fn apply_rot(state: &mut StateVector, reg: RegId, b: u64) -> Result<(), SimError> {
    let m = state.layout.modulus(reg);
    let dsz = m.size();
    let table: Vec<C64> = (0..dsz)
        .map(|a| {
            let e = m.mul(a, b);
            C64::from_polar(1.0, 2.0 * std::f64::consts::PI * e as f64 / dsz as f64)
        })
        .collect();
    let off = state.layout.offset(reg);
    let mask = dsz - 1;
    for (idx, a) in state.amps.iter_mut().enumerate() {
        let v = ((idx as u64) >> off) & mask;
        *a *= table[v as usize];
    }
    Ok(())
}

/// Modular addition |a> -> |a + b mod D| on one register.
pub fn apply_sum(state: &mut StateVector, reg: RegId, b: u64) -> Result<(), SimError> {
    let m = state.layout.modulus(reg);
    let table: Vec<u64> = (0..m.size()).map(|a| m.add(a, b)).collect();
    remap_register(state, reg, &table);
    Ok(())
}

/// Modular multiplication |a> -> |a b mod D| on one register; b must be odd.
pub fn apply_mul(state: &mut StateVector, reg: RegId, b: u64) -> Result<(), SimError> {
    let m = state.layout.modulus(reg);
    if m.reduce(b) % 2 == 0 {
        return Err(SimError::EvenMultiplier(b));
    }
    let table: Vec<u64> = (0..m.size()).map(|a| m.mul(a, b)).collect();
    remap_register(state, reg, &table);
    Ok(())
}

fn apply_two_register<F: Fn(u64, u64) -> u64>(
    state: &mut StateVector,
    src: RegId,
    dst: RegId,
    f: F,
) -> Result<(), SimError> {
    if src == dst {
        return Err(SimError::SameRegister);
    }
    let (ws, wd) = (state.layout.width(src), state.layout.width(dst));
    if ws != wd {
        return Err(SimError::WidthMismatch(ws, wd));
    }
    let soff = state.layout.offset(src);
    let doff = state.layout.offset(dst);
    let mask = state.layout.dim(dst) - 1;
    let dmask = mask << doff;
    let mut out = vec![C64::new(0.0, 0.0); state.amps.len()];
    for (idx, &a) in state.amps.iter().enumerate() {
        let sv = ((idx as u64) >> soff) & mask;
        let dv = ((idx as u64) >> doff) & mask;
        let nidx = ((idx as u64) & !dmask) | (f(sv, dv) << doff);
        out[nidx as usize] = a;
    }
    state.amps = out;
    Ok(())
}

/// Two-register modular addition |a>|b> -> |a>|b + a mod D|.
pub fn apply_bsum(state: &mut StateVector, src: RegId, dst: RegId) -> Result<(), SimError> {
    let m = state.layout.modulus(dst);
    apply_two_register(state, src, dst, |a, b| m.add(b, a))
}

/// Bitwise XOR |a>|b> -> |a>|b xor a>.
pub fn apply_xor(state: &mut StateVector, src: RegId, dst: RegId) -> Result<(), SimError> {
    apply_two_register(state, src, dst, |a, b| b ^ a)
}

/// General relabeling |a>_src |b>_dst -> |a>_src |f(a,b)>_dst.
///
/// Unitarity requires f(a, .) to be a bijection for every fixed a; that is the
/// caller's obligation (debug builds spot-check it). XOR and BSUM are special
/// cases; adversary models use this for ancilla-entangling maps.
pub fn apply_pairwise_map(
    state: &mut StateVector,
    src: RegId,
    dst: RegId,
    f: &dyn Fn(u64, u64) -> u64,
) -> Result<(), SimError> {
    #[cfg(debug_assertions)]
    {
        let dim = state.layout.dim(dst).min(64);
        let mut seen = vec![false; dim as usize];
        for b in 0..dim {
            let v = f(0, b);
            assert!(v < state.layout.dim(dst) && !seen[(v % dim) as usize], "map not injective");
            seen[(v % dim) as usize] = true;
        }
    }
    apply_two_register(state, src, dst, f)
}

// ======================================================================
// measurement and comparison
// ======================================================================

/// Born-rule marginal over one register's values.
pub fn measurement_probabilities(state: &StateVector, reg: RegId) -> Vec<f64> {
    let off = state.layout.offset(reg);
    let mask = state.layout.dim(reg) - 1;
    let mut probs = vec![0.0; state.layout.dim(reg) as usize];
    for (idx, a) in state.amps.iter().enumerate() {
        probs[(((idx as u64) >> off) & mask) as usize] += a.norm_sqr();
    }
    probs
}

/// Measures one register in the computational basis.
///
/// The state must be normalized within MEASURE_NORM_TOL. When a single value
/// holds at least DETERMINISTIC_MASS of the probability, that value is
/// returned without consuming randomness, so honest-protocol transcripts are
/// reproducible bit for bit.
pub fn measure<R: Rng>(
    state: &StateVector,
    reg: RegId,
    rng: &mut R,
) -> Result<MeasurementOutcome, SimError> {
    let probs = measurement_probabilities(state, reg);
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MEASURE_NORM_TOL {
        return Err(SimError::NormDeviation((total - 1.0).abs()));
    }

    let (argmax, &pmax) = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("register has at least one value");
    let value = if pmax >= DETERMINISTIC_MASS {
        argmax as u64
    } else {
        let mut u = rng.random::<f64>() * total;
        let mut chosen = probs.len() - 1;
        for (v, &p) in probs.iter().enumerate() {
            if u < p {
                chosen = v;
                break;
            }
            u -= p;
        }
        chosen as u64
    };

    let p = probs[value as usize];
    let off = state.layout.offset(reg);
    let mask = state.layout.dim(reg) - 1;
    let scale = 1.0 / p.sqrt();
    let mut post = state.clone();
    for (idx, a) in post.amps.iter_mut().enumerate() {
        if (((idx as u64) >> off) & mask) == value {
            *a *= scale;
        } else {
            *a = C64::new(0.0, 0.0);
        }
    }
    Ok(MeasurementOutcome {
        register: state.layout.name(reg).to_string(),
        value,
        probability: p,
        posterior: post,
    })
}

/// Global-phase-insensitive overlap |<s1|s2>|.
pub fn fidelity(s1: &StateVector, s2: &StateVector) -> Result<f64, SimError> {
    if s1.amps.len() != s2.amps.len() {
        return Err(SimError::DimensionMismatch);
    }
    let inner = s1
        .amps
        .iter()
        .zip(&s2.amps)
        .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b);
    Ok(inner.norm())
}

/// Largest per-amplitude difference; phase sensitive, for exact comparisons.
pub fn max_amplitude_deviation(s1: &StateVector, s2: &StateVector) -> Result<f64, SimError> {
    if s1.amps.len() != s2.amps.len() {
        return Err(SimError::DimensionMismatch);
    }
    Ok(s1
        .amps
        .iter()
        .zip(&s2.amps)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

// ======================================================================
// tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(d: u32) -> (RegisterLayout, RegId) {
        let layout = RegisterLayout::new(&[("r", d)]).unwrap();
        let reg = layout.reg("r").unwrap();
        (layout, reg)
    }

    fn random_state(layout: RegisterLayout, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<C64> = (0..1usize << layout.total_qubits())
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector::from_amplitudes(layout, amps).unwrap()
    }

    #[test]
    fn layout_rejects_bad_specs() {
        assert_eq!(
            RegisterLayout::new(&[("a", 13), ("b", 12)]).unwrap_err(),
            SimError::LayoutTooLarge(25)
        );
        assert!(matches!(
            RegisterLayout::new(&[("a", 2), ("a", 2)]).unwrap_err(),
            SimError::DuplicateRegister(_)
        ));
        assert_eq!(RegisterLayout::new(&[("a", 0)]).unwrap_err(), SimError::EmptyRegister);
    }

    #[test]
    fn basis_state_is_lsb_first() {
        let layout = RegisterLayout::new(&[("a", 2), ("b", 2)]).unwrap();
        let s = StateVector::basis_state(layout, &[1, 2]).unwrap();
        // register a occupies bits 0..2, register b bits 2..4
        assert_abs_diff_eq!(s.amplitudes()[1 + 2 * 4].re, 1.0);
        let a = s.layout().reg("a").unwrap();
        let b = s.layout().reg("b").unwrap();
        assert_eq!(s.layout().value_of(a, 9), 1);
        assert_eq!(s.layout().value_of(b, 9), 2);
    }

    #[test]
    fn qft_of_zero_is_uniform() {
        let (layout, reg) = single(2);
        let mut s = StateVector::zero_state(layout);
        apply_qft(&mut s, reg, false).unwrap();
        for a in s.amplitudes() {
            assert_abs_diff_eq!(a.re, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn qft_single_qubit_is_hadamard() {
        let (layout, reg) = single(1);
        let mut s = StateVector::basis_state(layout, &[1]).unwrap();
        apply_qft(&mut s, reg, false).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.amplitudes()[0].re, r, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[1].re, -r, epsilon = 1e-12);
    }

    #[test]
    fn qft_inverse_roundtrip() {
        for d in 1..=6 {
            let (layout, reg) = single(d);
            let s0 = random_state(layout, 7 + d as u64);
            let mut s = s0.clone();
            apply_qft(&mut s, reg, false).unwrap();
            assert!((s.norm_sq() - 1.0).abs() < GATE_NORM_TOL);
            apply_qft(&mut s, reg, true).unwrap();
            assert!(max_amplitude_deviation(&s, &s0).unwrap() < STATE_TOL);
        }
    }

    #[test]
    fn rot_known_phases() {
        let (layout, reg) = single(4);
        let mut s = StateVector::basis_state(layout.clone(), &[3]).unwrap();
        apply_rot(&mut s, reg, 0).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[3].re, 1.0, epsilon = 1e-12);

        let mut s = StateVector::basis_state(layout, &[1]).unwrap();
        apply_rot(&mut s, reg, 8).unwrap();
        // w^8 at D=16 is e^{i pi} = -1
        assert_abs_diff_eq!(s.amplitudes()[1].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[1].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rot_phases_are_additive() {
        let (layout, reg) = single(3);
        let mut s1 = random_state(layout.clone(), 11);
        let mut s2 = s1.clone();
        apply_rot(&mut s1, reg, 3).unwrap();
        apply_rot(&mut s1, reg, 6).unwrap();
        apply_rot(&mut s2, reg, (3 + 6) % 8).unwrap();
        assert!(max_amplitude_deviation(&s1, &s2).unwrap() < GATE_NORM_TOL);
    }

    #[test]
    fn sum_and_mul_permute_basis_states() {
        let (layout, reg) = single(4);
        let mut s = StateVector::basis_state(layout.clone(), &[3]).unwrap();
        apply_sum(&mut s, reg, 5).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[8].re, 1.0);

        let mut s = StateVector::basis_state(layout.clone(), &[15]).unwrap();
        apply_sum(&mut s, reg, 1).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0);

        let mut s = StateVector::basis_state(layout.clone(), &[3]).unwrap();
        apply_mul(&mut s, reg, 9).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[11].re, 1.0);

        let mut s = StateVector::basis_state(layout, &[5]).unwrap();
        assert_eq!(apply_mul(&mut s, reg, 6).unwrap_err(), SimError::EvenMultiplier(6));
    }

    #[test]
    fn permutation_gates_move_amplitudes_exactly() {
        let (layout, reg) = single(3);
        let s0 = random_state(layout, 23);
        let mut s = s0.clone();
        apply_sum(&mut s, reg, 5).unwrap();
        apply_mul(&mut s, reg, 3).unwrap();
        // same multiset of amplitude bit patterns, no arithmetic applied
        let key = |v: &[C64]| {
            let mut k: Vec<(u64, u64)> =
                v.iter().map(|a| (a.re.to_bits(), a.im.to_bits())).collect();
            k.sort_unstable();
            k
        };
        assert_eq!(key(s0.amplitudes()), key(s.amplitudes()));
    }

    #[test]
    fn mul_inverse_pair_is_identity() {
        let (layout, reg) = single(4);
        let m = Modulus::new(4).unwrap();
        for b in (1..16).step_by(2) {
            let s0 = random_state(layout.clone(), 100 + b);
            let mut s = s0.clone();
            apply_mul(&mut s, reg, b).unwrap();
            apply_mul(&mut s, reg, crate::modmath::mod_inv(b, &m).unwrap()).unwrap();
            assert!(max_amplitude_deviation(&s, &s0).unwrap() == 0.0);
        }
    }

    #[test]
    fn bsum_and_xor_two_register_semantics() {
        let layout = RegisterLayout::uniform(&["a", "b"], 4).unwrap();
        let a = layout.reg("a").unwrap();
        let b = layout.reg("b").unwrap();

        let mut s = StateVector::basis_state(layout.clone(), &[5, 3]).unwrap();
        apply_bsum(&mut s, a, b).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[s.pack(&[5, 8])].re, 1.0);

        let mut s = StateVector::basis_state(layout.clone(), &[5, 3]).unwrap();
        apply_xor(&mut s, a, b).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[s.pack(&[5, 6])].re, 1.0);

        for j in 0..16u64 {
            let mut s = StateVector::basis_state(layout.clone(), &[j, j]).unwrap();
            apply_xor(&mut s, a, b).unwrap();
            assert_abs_diff_eq!(s.amplitudes()[s.pack(&[j, 0])].re, 1.0);
        }

        let mut s = StateVector::basis_state(layout, &[1, 1]).unwrap();
        assert_eq!(apply_bsum(&mut s, a, a).unwrap_err(), SimError::SameRegister);
    }

    #[test]
    fn rot_on_linked_registers_accumulates_linear_phase() {
        // State (1/sqrt(D)) sum_j |j>|j a1>|j a2>; ROT(b1) on the second and
        // ROT(b2) on the third register must produce per-branch phase
        // w^{j (a1 b1 + a2 b2)}.
        let d = 3u32;
        let m = Modulus::new(d).unwrap();
        let dsz = m.size();
        let layout = RegisterLayout::uniform(&["p", "q1", "q2"], d).unwrap();
        let (a1, a2, b1, b2) = (3u64, 5u64, 6u64, 7u64);

        let scale = 1.0 / (dsz as f64).sqrt();
        let mut amps = vec![C64::new(0.0, 0.0); 1 << layout.total_qubits()];
        let mut target = amps.clone();
        for j in 0..dsz {
            let idx =
                (j | (m.mul(j, a1) << d) | (m.mul(j, a2) << (2 * d))) as usize;
            amps[idx] = C64::new(scale, 0.0);
            let phase = m.mul(j, m.add(m.mul(a1, b1), m.mul(a2, b2)));
            target[idx] = C64::from_polar(
                scale,
                2.0 * std::f64::consts::PI * phase as f64 / dsz as f64,
            );
        }
        let mut s = StateVector::from_amplitudes(layout.clone(), amps).unwrap();
        let target = StateVector::from_amplitudes(layout.clone(), target).unwrap();
        apply_rot(&mut s, layout.reg("q1").unwrap(), b1).unwrap();
        apply_rot(&mut s, layout.reg("q2").unwrap(), b2).unwrap();
        assert!(fidelity(&s, &target).unwrap() >= 1.0 - STATE_TOL);
        assert!(max_amplitude_deviation(&s, &target).unwrap() < STATE_TOL);
    }

    #[test]
    fn sum_commutes_with_rot_up_to_global_phase() {
        let (layout, reg) = single(4);
        let (b, c) = (7u64, 9u64);
        let s0 = random_state(layout, 31);

        let mut s_sum_rot = s0.clone();
        apply_sum(&mut s_sum_rot, reg, c).unwrap();
        apply_rot(&mut s_sum_rot, reg, b).unwrap();

        let mut s_rot_sum = s0;
        apply_rot(&mut s_rot_sum, reg, b).unwrap();
        apply_sum(&mut s_rot_sum, reg, c).unwrap();

        assert_abs_diff_eq!(
            fidelity(&s_sum_rot, &s_rot_sum).unwrap(),
            1.0,
            epsilon = STATE_TOL
        );
        // the relative factor is exactly w^{bc}
        let expected = C64::from_polar(
            1.0,
            2.0 * std::f64::consts::PI * ((b * c) % 16) as f64 / 16.0,
        );
        let i = s_rot_sum
            .amplitudes()
            .iter()
            .position(|a| a.norm() > 1e-3)
            .unwrap();
        let ratio = s_sum_rot.amplitudes()[i] / s_rot_sum.amplitudes()[i];
        assert!((ratio - expected).norm() < 1e-9);
    }

    #[test]
    fn norm_preserved_across_gate_pipeline() {
        let layout = RegisterLayout::uniform(&["a", "b"], 3).unwrap();
        let a = layout.reg("a").unwrap();
        let b = layout.reg("b").unwrap();
        let mut s = random_state(layout, 5);
        apply_qft(&mut s, a, false).unwrap();
        apply_rot(&mut s, a, 5).unwrap();
        apply_sum(&mut s, b, 3).unwrap();
        apply_mul(&mut s, b, 5).unwrap();
        apply_bsum(&mut s, a, b).unwrap();
        apply_xor(&mut s, a, b).unwrap();
        apply_qft(&mut s, a, true).unwrap();
        assert!((s.norm_sq() - 1.0).abs() < 7.0 * GATE_NORM_TOL);
    }

    #[test]
    fn measure_deterministic_on_point_mass() {
        let layout = RegisterLayout::uniform(&["a", "g"], 3).unwrap();
        let a = layout.reg("a").unwrap();
        let g = layout.reg("g").unwrap();
        let mut s = StateVector::basis_state(layout, &[5, 0]).unwrap();
        apply_qft(&mut s, a, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = measure(&s, g, &mut rng).unwrap();
        assert_eq!(out.value, 0);
        assert!((out.probability - 1.0).abs() < 1e-12);
        assert!((out.posterior.norm_sq() - 1.0).abs() < 1e-12);
        // the shortcut must not consume randomness
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rng.random::<u64>(), rng2.random::<u64>());
    }

    #[test]
    fn measure_uniform_frequencies_within_binomial_noise() {
        let (layout, reg) = single(3);
        let mut s = StateVector::zero_state(layout);
        apply_qft(&mut s, reg, false).unwrap();
        let shots = 4096;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0u64; 8];
        for _ in 0..shots {
            counts[measure(&s, reg, &mut rng).unwrap().value as usize] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / shots as f64;
            assert!((freq - p).abs() < 5.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn measure_collapses_entangled_partner() {
        let layout = RegisterLayout::uniform(&["a", "b"], 2).unwrap();
        let a = layout.reg("a").unwrap();
        let b = layout.reg("b").unwrap();
        let mut s = StateVector::zero_state(layout);
        apply_qft(&mut s, a, false).unwrap();
        apply_xor(&mut s, a, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = measure(&s, a, &mut rng).unwrap();
        let probs = measurement_probabilities(&out.posterior, b);
        assert_abs_diff_eq!(probs[out.value as usize], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_rejects_denormalized_state() {
        let (layout, reg) = single(2);
        let mut s = StateVector::zero_state(layout);
        s.amplitudes_mut()[0] = C64::new(0.5, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(measure(&s, reg, &mut rng), Err(SimError::NormDeviation(_))));
    }

    #[test]
    fn fidelity_examples() {
        let (layout, _) = single(3);
        let s = random_state(layout.clone(), 3);
        assert_abs_diff_eq!(fidelity(&s, &s).unwrap(), 1.0, epsilon = 1e-12);

        let mut rotated = s.clone();
        let phase = C64::from_polar(1.0, 1.234);
        rotated.amplitudes_mut().iter_mut().for_each(|a| *a *= phase);
        assert_abs_diff_eq!(fidelity(&s, &rotated).unwrap(), 1.0, epsilon = 1e-12);

        let z = StateVector::basis_state(layout.clone(), &[0]).unwrap();
        let o = StateVector::basis_state(layout, &[1]).unwrap();
        assert_abs_diff_eq!(fidelity(&z, &o).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn debug_dump_lists_nonzero_entries() {
        let layout = RegisterLayout::uniform(&["a", "b"], 2).unwrap();
        let a = layout.reg("a").unwrap();
        let b = layout.reg("b").unwrap();
        let mut s = StateVector::zero_state(layout);
        apply_qft(&mut s, a, false).unwrap();
        apply_xor(&mut s, a, b).unwrap();
        let dump = s.debug_dump(1e-9);
        assert_eq!(dump.entries.len(), 4);
        for e in &dump.entries {
            assert_eq!(e.values[0], e.values[1]);
        }
        assert!(serde_json::to_string(&dump).unwrap().contains("registers"));
    }
}
