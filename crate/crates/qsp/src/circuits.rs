//! Elementary-gate decompositions of the semantic gates.
//!
//! Circuits are gate lists over local qubits 0..qubits and are applied to a
//! state through a qubit map from local to global indices. Phase params are
//! interpreted against the circuit's register width d: P(j) multiplies the
//! target's |1> branch by w^(2^j) with w = e^{i 2 pi / 2^d}, so params j >= d
//! are exact identities. Emitters keep such identity gates when a uniform
//! index pattern matters for counting (ROT, BSUM) and skip them when they
//! know the operand bits (Shor-style multiplier).

use num_complex::Complex64;
use thiserror::Error;

use crate::modmath::{mod_inv, Modulus};
use crate::sim::{SimError, StateVector, C64};

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("register width {0} out of the supported 1..=12 range")]
    WidthOutOfRange(u32),
    #[error("multiplier {0} is even, only odd factors are invertible modulo 2^d")]
    EvenMultiplier(u64),
    #[error("qubit map has {got} entries, circuit needs {need}")]
    QubitMapMismatch { need: usize, got: usize },
    #[error("qubit map entry {0} exceeds the state's qubit count")]
    QubitOutOfRange(usize),
    #[error("qubit map assigns qubit {0} twice")]
    DuplicateQubit(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One hardware-level gate. Controlled phases carry a power-of-two exponent;
/// CSum adds a constant to a contiguous slice of qubits under one control.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElementaryGate {
    H { target: usize },
    P { target: usize, param: u32 },
    PDag { target: usize, param: u32 },
    CP { control: usize, target: usize, param: u32 },
    CPDag { control: usize, target: usize, param: u32 },
    Cnot { control: usize, target: usize },
    Toffoli { controls: [usize; 2], target: usize },
    CSum { control: usize, target_low: usize, width: u32, addend: u64 },
}

impl ElementaryGate {
    /// Cost used by the scaling study: a width-l CSum counts as l elementary
    /// additions, everything else as 1.
    pub fn weighted_cost(&self) -> u64 {
        match self {
            ElementaryGate::CSum { width, .. } => *width as u64,
            _ => 1,
        }
    }

    fn text_line(&self) -> String {
        match self {
            ElementaryGate::H { target } => format!("H {target}"),
            ElementaryGate::P { target, param } => format!("P {target} {param}"),
            ElementaryGate::PDag { target, param } => format!("PDAG {target} {param}"),
            ElementaryGate::CP { control, target, param } => {
                format!("CP {target} {control} {param}")
            }
            ElementaryGate::CPDag { control, target, param } => {
                format!("CPDAG {target} {control} {param}")
            }
            ElementaryGate::Cnot { control, target } => format!("CNOT {target} {control}"),
            ElementaryGate::Toffoli { controls, target } => {
                format!("TOFFOLI {target} {} {}", controls[0], controls[1])
            }
            ElementaryGate::CSum { control, target_low, width, addend } => {
                let hi = target_low + *width as usize - 1;
                format!("CSUM {target_low}..{hi} {control} {addend}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    pub qubits: usize,
    /// Register width d the phase params refer to.
    pub phase_width: u32,
    pub gates: Vec<ElementaryGate>,
}

impl Circuit {
    fn new(qubits: usize, phase_width: u32) -> Self {
        Self { qubits, phase_width, gates: Vec::new() }
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn weighted_cost(&self) -> u64 {
        self.gates.iter().map(ElementaryGate::weighted_cost).sum()
    }

    /// Adjoint circuit: gates reversed, phases conjugated, additions negated.
    pub fn dagger(&self) -> Self {
        let gates = self
            .gates
            .iter()
            .rev()
            .map(|g| match g.clone() {
                ElementaryGate::P { target, param } => ElementaryGate::PDag { target, param },
                ElementaryGate::PDag { target, param } => ElementaryGate::P { target, param },
                ElementaryGate::CP { control, target, param } => {
                    ElementaryGate::CPDag { control, target, param }
                }
                ElementaryGate::CPDag { control, target, param } => {
                    ElementaryGate::CP { control, target, param }
                }
                ElementaryGate::CSum { control, target_low, width, addend } => {
                    let m = 1u64 << width;
                    ElementaryGate::CSum {
                        control,
                        target_low,
                        width,
                        addend: (m - addend % m) % m,
                    }
                }
                other => other,
            })
            .collect();
        Self { qubits: self.qubits, phase_width: self.phase_width, gates }
    }

    /// One gate per line: KIND target [control(s)] [param].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            out.push_str(&g.text_line());
            out.push('\n');
        }
        out
    }
}

// ======================================================================
// builders
// ======================================================================

fn check_width(d: u32) -> Result<(), CircuitError> {
    if d == 0 || d > 12 {
        return Err(CircuitError::WidthOutOfRange(d));
    }
    Ok(())
}

fn push_swap(c: &mut Circuit, a: usize, b: usize) {
    c.gates.push(ElementaryGate::Cnot { control: a, target: b });
    c.gates.push(ElementaryGate::Cnot { control: b, target: a });
    c.gates.push(ElementaryGate::Cnot { control: a, target: b });
}

/// Fourier transform on d qubits: Hadamards and controlled phases processed
/// from the top bit down, then a bit reversal done with CNOT triples.
pub fn build_qft(d: u32) -> Circuit {
    let d = d as usize;
    let mut c = Circuit::new(d, d as u32);
    for q in (0..d).rev() {
        c.gates.push(ElementaryGate::H { target: q });
        for qp in (0..q).rev() {
            c.gates.push(ElementaryGate::CP {
                control: qp,
                target: q,
                param: (d - 1 - (q - qp)) as u32,
            });
        }
    }
    for q in 0..d / 2 {
        push_swap(&mut c, q, d - 1 - q);
    }
    c
}

pub fn build_qft_inverse(d: u32) -> Circuit {
    build_qft(d).dagger()
}

/// Diagonal phase |a> -> w^{ab} |a>: one P(i+k) on qubit i per set bit k of b,
/// identity params included so the pattern is the same for every odd b.
pub fn build_rot(d: u32, b: u64) -> Circuit {
    let mut c = Circuit::new(d as usize, d);
    let b = b & ((1u64 << d) - 1);
    for i in 0..d as usize {
        for k in 0..d {
            if (b >> k) & 1 == 1 {
                c.gates.push(ElementaryGate::P { target: i, param: i as u32 + k });
            }
        }
    }
    c
}

/// Adder |a> -> |a + b mod 2^d| as QFT, phases, inverse QFT.
pub fn build_draper_sum(d: u32, b: u64) -> Circuit {
    let mut c = build_qft(d);
    c.gates.extend(build_rot(d, b).gates);
    c.gates.extend(build_qft_inverse(d).gates);
    c
}

/// Two-register adder |a>|t> -> |a>|t + a mod 2^d| on qubits 0..d (source)
/// and d..2d (destination): Fourier-space controlled phases CP(i+k) from
/// source bit k to destination bit i, all d^2 pairs.
pub fn build_bsum(d: u32) -> Circuit {
    let du = d as usize;
    let mut c = Circuit::new(2 * du, d);
    let qft = build_qft(d);
    c.gates.extend(shift_qubits(&qft.gates, du));
    for i in 0..du {
        for k in 0..du {
            c.gates.push(ElementaryGate::CP {
                control: k,
                target: du + i,
                param: (i + k) as u32,
            });
        }
    }
    c.gates.extend(shift_qubits(&qft.dagger().gates, du));
    c
}

/// Bitwise |a>|t> -> |a>|t xor a> on qubits 0..d and d..2d.
pub fn build_xor(d: u32) -> Circuit {
    let du = d as usize;
    let mut c = Circuit::new(2 * du, d);
    for k in 0..du {
        c.gates.push(ElementaryGate::Cnot { control: k, target: du + k });
    }
    c
}

/// In-place odd multiplier |a> -> |a b mod 2^d| without auxiliary qubits.
///
/// With b = 1 + 2w, a b = a + sum_k a_k w 2^{k+1}, so stage l (ascending,
/// control qubit d-1-l) adds w mod 2^l into the top-l slice of qubits.
/// Controls always sit below the bits a stage rewrites, so every control
/// still reads the original operand bit.
pub fn build_special_mul(d: u32, b: u64) -> Result<Circuit, CircuitError> {
    check_width(d)?;
    let m = Modulus::new(d).expect("width checked");
    let b = m.reduce(b);
    if b % 2 == 0 {
        return Err(CircuitError::EvenMultiplier(b));
    }
    let w = (b - 1) / 2;
    let du = d as usize;
    let mut c = Circuit::new(du, d);
    for l in 1..du {
        c.gates.push(ElementaryGate::CSum {
            control: du - 1 - l,
            target_low: du - l,
            width: l as u32,
            addend: w & ((1u64 << l) - 1),
        });
    }
    Ok(c)
}

fn shift_qubits(gates: &[ElementaryGate], by: usize) -> Vec<ElementaryGate> {
    gates
        .iter()
        .map(|g| match g.clone() {
            ElementaryGate::H { target } => ElementaryGate::H { target: target + by },
            ElementaryGate::P { target, param } => {
                ElementaryGate::P { target: target + by, param }
            }
            ElementaryGate::PDag { target, param } => {
                ElementaryGate::PDag { target: target + by, param }
            }
            ElementaryGate::CP { control, target, param } => {
                ElementaryGate::CP { control: control + by, target: target + by, param }
            }
            ElementaryGate::CPDag { control, target, param } => {
                ElementaryGate::CPDag { control: control + by, target: target + by, param }
            }
            ElementaryGate::Cnot { control, target } => {
                ElementaryGate::Cnot { control: control + by, target: target + by }
            }
            ElementaryGate::Toffoli { controls, target } => ElementaryGate::Toffoli {
                controls: [controls[0] + by, controls[1] + by],
                target: target + by,
            },
            ElementaryGate::CSum { control, target_low, width, addend } => {
                ElementaryGate::CSum {
                    control: control + by,
                    target_low: target_low + by,
                    width,
                    addend,
                }
            }
        })
        .collect()
}

/// Fourier-space controlled phases implementing |h>|t> -> |h>|t + b h mod 2^d>
/// when the destination slice is already Fourier transformed. Identity params
/// are skipped here because b is known.
fn push_scaled_bsum_phases(c: &mut Circuit, d: u32, b: u64, src_base: usize, dst_base: usize) {
    for i in 0..d as usize {
        for k in 0..d as usize {
            for r in 0..d as usize {
                if (b >> r) & 1 == 1 {
                    let param = (i + k + r) as u32;
                    if param < d {
                        c.gates.push(ElementaryGate::CP {
                            control: src_base + k,
                            target: dst_base + i,
                            param,
                        });
                    }
                }
            }
        }
    }
}

/// Out-of-place odd multiplier on 2d qubits: the register sits on 0..d, a
/// scratch register on d..2d starts and ends at |0>. Computes t += b h,
/// h -= b^{-1} t, then swaps the registers.
pub fn build_shor_mul(d: u32, b: u64) -> Result<Circuit, CircuitError> {
    check_width(d)?;
    let m = Modulus::new(d).expect("width checked");
    let b = m.reduce(b);
    if b % 2 == 0 {
        return Err(CircuitError::EvenMultiplier(b));
    }
    let binv_neg = m.neg(mod_inv(b, &m).expect("odd b is invertible"));
    let du = d as usize;
    let qft = build_qft(d);
    let mut c = Circuit::new(2 * du, d);

    c.gates.extend(shift_qubits(&qft.gates, du));
    push_scaled_bsum_phases(&mut c, d, b, 0, du);
    c.gates.extend(shift_qubits(&qft.dagger().gates, du));

    c.gates.extend(qft.gates.iter().cloned());
    push_scaled_bsum_phases(&mut c, d, binv_neg, du, 0);
    c.gates.extend(qft.dagger().gates);

    for q in 0..du {
        push_swap(&mut c, q, du + q);
    }
    Ok(c)
}

// ======================================================================
// application
// ======================================================================

fn phase_factor(param: u32, phase_width: u32, conjugate: bool) -> C64 {
    let dsz = 1u64 << phase_width;
    let e = if param >= 64 { 0 } else { (1u64 << param) % dsz };
    let sign = if conjugate { -1.0 } else { 1.0 };
    Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * e as f64 / dsz as f64)
}

/// Runs a circuit on a state, with qubit_map sending each local qubit to a
/// global qubit index.
pub fn apply_circuit(
    state: &mut StateVector,
    circuit: &Circuit,
    qubit_map: &[usize],
) -> Result<(), CircuitError> {
    if qubit_map.len() != circuit.qubits {
        return Err(CircuitError::QubitMapMismatch {
            need: circuit.qubits,
            got: qubit_map.len(),
        });
    }
    let total = state.layout().total_qubits() as usize;
    let mut seen = 0u64;
    for &q in qubit_map {
        if q >= total {
            return Err(CircuitError::QubitOutOfRange(q));
        }
        if seen & (1 << q) != 0 {
            return Err(CircuitError::DuplicateQubit(q));
        }
        seen |= 1 << q;
    }

    for gate in &circuit.gates {
        apply_gate(state, gate, qubit_map, circuit.phase_width);
    }
    Ok(())
}

fn apply_gate(state: &mut StateVector, gate: &ElementaryGate, map: &[usize], phase_width: u32) {
    let len = state.dimension();
    match gate {
        ElementaryGate::H { target } => {
            let bit = 1usize << map[*target];
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let amps = state.amplitudes_mut();
            for idx in 0..len {
                if idx & bit == 0 {
                    let a0 = amps[idx];
                    let a1 = amps[idx | bit];
                    amps[idx] = (a0 + a1) * r;
                    amps[idx | bit] = (a0 - a1) * r;
                }
            }
        }
        ElementaryGate::P { target, param } | ElementaryGate::PDag { target, param } => {
            let conj = matches!(gate, ElementaryGate::PDag { .. });
            let bit = 1usize << map[*target];
            let f = phase_factor(*param, phase_width, conj);
            let amps = state.amplitudes_mut();
            for idx in 0..len {
                if idx & bit != 0 {
                    amps[idx] *= f;
                }
            }
        }
        ElementaryGate::CP { control, target, param }
        | ElementaryGate::CPDag { control, target, param } => {
            let conj = matches!(gate, ElementaryGate::CPDag { .. });
            let cbit = 1usize << map[*control];
            let tbit = 1usize << map[*target];
            let f = phase_factor(*param, phase_width, conj);
            let amps = state.amplitudes_mut();
            for idx in 0..len {
                if idx & cbit != 0 && idx & tbit != 0 {
                    amps[idx] *= f;
                }
            }
        }
        ElementaryGate::Cnot { control, target } => {
            let cbit = 1usize << map[*control];
            let tbit = 1usize << map[*target];
            let amps = state.amplitudes_mut();
            for idx in 0..len {
                if idx & cbit != 0 && idx & tbit == 0 {
                    amps.swap(idx, idx | tbit);
                }
            }
        }
        ElementaryGate::Toffoli { controls, target } => {
            let c0 = 1usize << map[controls[0]];
            let c1 = 1usize << map[controls[1]];
            let tbit = 1usize << map[*target];
            let amps = state.amplitudes_mut();
            for idx in 0..len {
                if idx & c0 != 0 && idx & c1 != 0 && idx & tbit == 0 {
                    amps.swap(idx, idx | tbit);
                }
            }
        }
        ElementaryGate::CSum { control, target_low, width, addend } => {
            let cbit = 1usize << map[*control];
            let slice: Vec<usize> =
                (0..*width as usize).map(|i| map[*target_low + i]).collect();
            let modulo = 1u64 << width;
            let add = addend % modulo;
            let mut out = vec![C64::new(0.0, 0.0); len];
            for (idx, &a) in state.amplitudes().iter().enumerate() {
                if idx & cbit == 0 {
                    out[idx] += a;
                    continue;
                }
                let mut v = 0u64;
                for (i, &q) in slice.iter().enumerate() {
                    v |= (((idx >> q) & 1) as u64) << i;
                }
                let nv = (v + add) % modulo;
                let mut nidx = idx;
                for (i, &q) in slice.iter().enumerate() {
                    nidx = (nidx & !(1usize << q)) | ((((nv >> i) & 1) as usize) << q);
                }
                out[nidx] += a;
            }
            let amps = state.amplitudes_mut();
            amps.copy_from_slice(&out);
        }
    }
}

// ======================================================================
// gate-count scaling
// ======================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticGateKind {
    Qft,
    Rot,
    Sum,
    Mul,
    Bsum,
    Xor,
}

/// Builds the widest-operand instance of a semantic gate (b = 2^d - 1 where a
/// constant is involved) for cost measurements.
pub fn semantic_circuit(kind: SemanticGateKind, d: u32) -> Circuit {
    let full = (1u64 << d) - 1;
    match kind {
        SemanticGateKind::Qft => build_qft(d),
        SemanticGateKind::Rot => build_rot(d, full),
        SemanticGateKind::Sum => build_draper_sum(d, full),
        SemanticGateKind::Mul => build_special_mul(d, full).expect("2^d - 1 is odd"),
        SemanticGateKind::Bsum => build_bsum(d),
        SemanticGateKind::Xor => build_xor(d),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScalingRow {
    pub d: u32,
    pub raw_count: usize,
    pub weighted_cost: u64,
}

pub fn gate_count_scaling(kind: SemanticGateKind, widths: &[u32]) -> Vec<ScalingRow> {
    widths
        .iter()
        .map(|&d| {
            let c = semantic_circuit(kind, d);
            ScalingRow { d, raw_count: c.gate_count(), weighted_cost: c.weighted_cost() }
        })
        .collect()
}

/// Least-squares coefficient of y = c d^2 through the origin.
pub fn quadratic_coefficient(rows: &[ScalingRow]) -> f64 {
    let num: f64 = rows.iter().map(|r| (r.d as f64).powi(2) * r.weighted_cost as f64).sum();
    let den: f64 = rows.iter().map(|r| (r.d as f64).powi(4)).sum();
    num / den
}

/// Ratio of the d^2 fit coefficients over widths 2..=5 and 5..=8; a value
/// near 1 means the cost grows quadratically across the whole range.
pub fn quadratic_fit_stability(kind: SemanticGateKind) -> f64 {
    let lo = gate_count_scaling(kind, &[2, 3, 4, 5]);
    let hi = gate_count_scaling(kind, &[5, 6, 7, 8]);
    quadratic_coefficient(&lo) / quadratic_coefficient(&hi)
}

// ======================================================================
// tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{
        apply_bsum, apply_mul, apply_qft, apply_rot, apply_sum, apply_xor,
        max_amplitude_deviation, RegisterLayout,
    };
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(layout: RegisterLayout, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<C64> = (0..1usize << layout.total_qubits())
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector::from_amplitudes(layout, amps).unwrap()
    }

    fn identity_map(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn qft_circuit_matches_semantic_gate() {
        for d in 1..=4u32 {
            let layout = RegisterLayout::new(&[("r", d)]).unwrap();
            let reg = layout.reg("r").unwrap();
            let mut via_circuit = random_state(layout, 40 + d as u64);
            let mut via_gate = via_circuit.clone();
            apply_circuit(&mut via_circuit, &build_qft(d), &identity_map(d as usize)).unwrap();
            apply_qft(&mut via_gate, reg, false).unwrap();
            assert!(max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9);

            apply_circuit(&mut via_circuit, &build_qft_inverse(d), &identity_map(d as usize))
                .unwrap();
            apply_qft(&mut via_gate, reg, true).unwrap();
            assert!(max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9);
        }
    }

    #[test]
    fn qft_shape_examples() {
        let c = build_qft(1);
        assert_eq!(c.gates, vec![ElementaryGate::H { target: 0 }]);

        let c = build_qft(4);
        let h_and_cp = c
            .gates
            .iter()
            .filter(|g| matches!(g, ElementaryGate::H { .. } | ElementaryGate::CP { .. }))
            .count();
        let cnots = c
            .gates
            .iter()
            .filter(|g| matches!(g, ElementaryGate::Cnot { .. }))
            .count();
        assert_eq!(h_and_cp, 10);
        assert_eq!(cnots, 6);
    }

    #[test]
    fn rot_circuit_matches_semantic_gate() {
        for d in 1..=4u32 {
            let dsz = 1u64 << d;
            for b in [0, 1, dsz / 2, dsz - 1] {
                let layout = RegisterLayout::new(&[("r", d)]).unwrap();
                let reg = layout.reg("r").unwrap();
                let mut via_circuit = random_state(layout, 60 + d as u64 + b);
                let mut via_gate = via_circuit.clone();
                apply_circuit(&mut via_circuit, &build_rot(d, b), &identity_map(d as usize))
                    .unwrap();
                apply_rot(&mut via_gate, reg, b).unwrap();
                assert!(max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn draper_sum_circuit_matches_on_all_basis_states() {
        let d = 3u32;
        let dsz = 1u64 << d;
        let layout = RegisterLayout::new(&[("r", d)]).unwrap();
        let reg = layout.reg("r").unwrap();
        for b in 0..dsz {
            let circuit = build_draper_sum(d, b);
            for a in 0..dsz {
                let mut via_circuit =
                    StateVector::basis_state(layout.clone(), &[a]).unwrap();
                let mut via_gate = via_circuit.clone();
                apply_circuit(&mut via_circuit, &circuit, &identity_map(d as usize)).unwrap();
                apply_sum(&mut via_gate, reg, b).unwrap();
                assert!(
                    max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9,
                    "d={d} b={b} a={a}"
                );
            }
        }
    }

    #[test]
    fn special_mul_matches_for_every_odd_factor_at_width_4() {
        let d = 4u32;
        let layout = RegisterLayout::new(&[("r", d)]).unwrap();
        let reg = layout.reg("r").unwrap();
        for b in (1..16u64).step_by(2) {
            let circuit = build_special_mul(d, b).unwrap();
            assert_eq!(circuit.gate_count(), 3);
            for a in 0..16u64 {
                let mut via_circuit =
                    StateVector::basis_state(layout.clone(), &[a]).unwrap();
                let mut via_gate = via_circuit.clone();
                apply_circuit(&mut via_circuit, &circuit, &identity_map(4)).unwrap();
                apply_mul(&mut via_gate, reg, b).unwrap();
                assert!(
                    max_amplitude_deviation(&via_circuit, &via_gate).unwrap() == 0.0,
                    "b={b} a={a}"
                );
            }
        }
        assert_eq!(
            build_special_mul(4, 6).unwrap_err(),
            CircuitError::EvenMultiplier(6)
        );
    }

    #[test]
    fn special_mul_stage_controls_read_original_bits() {
        // worked example: 3 * 9 = 27 = 11 mod 16
        let layout = RegisterLayout::new(&[("r", 4)]).unwrap();
        let mut s = StateVector::basis_state(layout, &[3]).unwrap();
        apply_circuit(&mut s, &build_special_mul(4, 9).unwrap(), &identity_map(4)).unwrap();
        assert!((s.amplitudes()[11].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shor_mul_computes_product_and_clears_scratch() {
        for d in 2..=4u32 {
            let dsz = 1u64 << d;
            let layout = RegisterLayout::new(&[("r", d), ("scratch", d)]).unwrap();
            for b in (1..dsz).step_by(2) {
                let circuit = build_shor_mul(d, b).unwrap();
                assert_eq!(circuit.qubits, 2 * d as usize);
                for a in 0..dsz {
                    let mut s =
                        StateVector::basis_state(layout.clone(), &[a, 0]).unwrap();
                    apply_circuit(&mut s, &circuit, &identity_map(2 * d as usize)).unwrap();
                    let expect = s.pack(&[(a * b) % dsz, 0]);
                    assert!(
                        (s.amplitudes()[expect].norm() - 1.0).abs() < 1e-9,
                        "d={d} b={b} a={a}"
                    );
                }
            }
        }
    }

    #[test]
    fn bsum_and_xor_circuits_match_semantic_gates() {
        let d = 3u32;
        let layout = RegisterLayout::uniform(&["a", "b"], d).unwrap();
        let a = layout.reg("a").unwrap();
        let b = layout.reg("b").unwrap();

        let mut via_circuit = random_state(layout.clone(), 77);
        let mut via_gate = via_circuit.clone();
        apply_circuit(&mut via_circuit, &build_bsum(d), &identity_map(6)).unwrap();
        apply_bsum(&mut via_gate, a, b).unwrap();
        assert!(max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9);

        let mut via_circuit = random_state(layout, 78);
        let mut via_gate = via_circuit.clone();
        apply_circuit(&mut via_circuit, &build_xor(d), &identity_map(6)).unwrap();
        apply_xor(&mut via_gate, a, b).unwrap();
        assert!(max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9);
    }

    #[test]
    fn qubit_map_routes_registers_and_is_validated() {
        // bsum from the second register into the first
        let d = 2u32;
        let layout = RegisterLayout::uniform(&["a", "b"], d).unwrap();
        let a = layout.reg("a").unwrap();
        let b = layout.reg("b").unwrap();
        let mut via_circuit = StateVector::basis_state(layout.clone(), &[1, 3]).unwrap();
        let mut via_gate = via_circuit.clone();
        apply_circuit(&mut via_circuit, &build_bsum(d), &[2, 3, 0, 1]).unwrap();
        apply_bsum(&mut via_gate, b, a).unwrap();
        assert!(max_amplitude_deviation(&via_circuit, &via_gate).unwrap() < 1e-9);

        let mut s = StateVector::basis_state(layout, &[0, 0]).unwrap();
        assert_eq!(
            apply_circuit(&mut s, &build_xor(d), &[0, 1]).unwrap_err(),
            CircuitError::QubitMapMismatch { need: 4, got: 2 }
        );
        assert_eq!(
            apply_circuit(&mut s, &build_xor(d), &[0, 1, 2, 9]).unwrap_err(),
            CircuitError::QubitOutOfRange(9)
        );
        assert_eq!(
            apply_circuit(&mut s, &build_xor(d), &[0, 1, 2, 2]).unwrap_err(),
            CircuitError::DuplicateQubit(2)
        );
    }

    #[test]
    fn dagger_undoes_circuit() {
        let d = 3u32;
        let layout = RegisterLayout::new(&[("r", d)]).unwrap();
        let s0 = random_state(layout, 91);
        let mut s = s0.clone();
        let c = build_draper_sum(d, 5);
        apply_circuit(&mut s, &c, &identity_map(3)).unwrap();
        apply_circuit(&mut s, &c.dagger(), &identity_map(3)).unwrap();
        assert!(max_amplitude_deviation(&s, &s0).unwrap() < 1e-9);

        let c = build_special_mul(d, 5).unwrap();
        let mut s = s0.clone();
        apply_circuit(&mut s, &c, &identity_map(3)).unwrap();
        apply_circuit(&mut s, &c.dagger(), &identity_map(3)).unwrap();
        assert!(max_amplitude_deviation(&s, &s0).unwrap() == 0.0);
    }

    #[test]
    fn first_round_message_preparation_circuit_matches_direct_state() {
        // QFT on h, copy h into t1/t2/g, scale t2 and g, then shift all
        // three; the result must be the linked superposition
        // (1/4) sum_j |j> |j+c1> |j p + c2> |j c3 + c4> at d = 4.
        let d = 4u32;
        let m = Modulus::new(d).unwrap();
        let (p, c1, c2, c3, c4) = (3u64, 2u64, 15u64, 9u64, 12u64);
        let layout = RegisterLayout::uniform(&["h", "t1", "t2", "g"], d).unwrap();
        let h_map = identity_map(4);
        let ht1: Vec<usize> = (0..8).collect();
        let ht2: Vec<usize> = (0..4).chain(8..12).collect();
        let hg: Vec<usize> = (0..4).chain(12..16).collect();
        let t2_map: Vec<usize> = (8..12).collect();
        let g_map: Vec<usize> = (12..16).collect();
        let t1_map: Vec<usize> = (4..8).collect();

        let mut s = StateVector::zero_state(layout.clone());
        apply_circuit(&mut s, &build_qft(d), &h_map).unwrap();
        apply_circuit(&mut s, &build_xor(d), &ht1).unwrap();
        apply_circuit(&mut s, &build_xor(d), &ht2).unwrap();
        apply_circuit(&mut s, &build_xor(d), &hg).unwrap();
        apply_circuit(&mut s, &build_special_mul(d, p).unwrap(), &t2_map).unwrap();
        apply_circuit(&mut s, &build_special_mul(d, c3).unwrap(), &g_map).unwrap();
        apply_circuit(&mut s, &build_draper_sum(d, c1), &t1_map).unwrap();
        apply_circuit(&mut s, &build_draper_sum(d, c2), &t2_map).unwrap();
        apply_circuit(&mut s, &build_draper_sum(d, c4), &g_map).unwrap();

        let mut amps = vec![C64::new(0.0, 0.0); 1 << 16];
        for j in 0..16u64 {
            let idx = j
                | (m.add(j, c1) << 4)
                | (m.add(m.mul(j, p), c2) << 8)
                | (m.add(m.mul(j, c3), c4) << 12);
            amps[idx as usize] = C64::new(0.25, 0.0);
        }
        let target = StateVector::from_amplitudes(layout, amps).unwrap();
        assert!(max_amplitude_deviation(&s, &target).unwrap() < 1e-9);
        // spot check one branch: j = 1 lands on |1>|3>|2>|5>
        assert!((s.amplitudes()[s.pack(&[1, 3, 2, 5])].re - 0.25).abs() < 1e-9);
    }

    #[test]
    fn gate_count_tables() {
        let qft: Vec<usize> =
            (2..=8).map(|d| build_qft(d).gate_count()).collect();
        assert_eq!(qft, vec![6, 9, 16, 21, 30, 37, 48]);

        for d in 2..=8u32 {
            let full = (1u64 << d) - 1;
            assert_eq!(build_rot(d, full).gate_count(), (d * d) as usize);
            assert_eq!(
                build_draper_sum(d, full).gate_count(),
                (d * d) as usize + 2 * build_qft(d).gate_count()
            );
            assert_eq!(
                build_bsum(d).gate_count(),
                (d * d) as usize + 2 * build_qft(d).gate_count()
            );
            assert_eq!(build_xor(d).gate_count(), d as usize);
            let mul = build_special_mul(d, full).unwrap();
            assert_eq!(mul.gate_count(), d as usize - 1);
            assert_eq!(mul.weighted_cost(), (d * (d - 1) / 2) as u64);
        }
    }

    #[test]
    fn quadratic_fit_is_stable_across_width_ranges() {
        for kind in [
            SemanticGateKind::Qft,
            SemanticGateKind::Rot,
            SemanticGateKind::Sum,
            SemanticGateKind::Mul,
            SemanticGateKind::Bsum,
        ] {
            let ratio = quadratic_fit_stability(kind);
            assert!(
                (1.0 / 1.2..=1.2).contains(&ratio),
                "{kind:?} fit ratio {ratio}"
            );
        }
    }

    #[test]
    fn text_dump_format() {
        let c = build_special_mul(3, 5).unwrap();
        assert_eq!(c.to_text(), "CSUM 2..2 1 0\nCSUM 1..2 0 2\n");

        let c = build_qft(2);
        assert_eq!(
            c.to_text(),
            "H 1\nCP 1 0 0\nH 0\nCNOT 1 0\nCNOT 0 1\nCNOT 1 0\n"
        );

        let c = build_qft_inverse(1);
        assert_eq!(c.to_text(), "H 0\n");

        let line = build_rot(2, 2).to_text();
        assert_eq!(line, "P 0 1\nP 1 2\n");
        assert_eq!(
            build_rot(2, 2).dagger().to_text(),
            "PDAG 1 2\nPDAG 0 1\n"
        );
    }

    #[test]
    fn in_place_builders_use_no_auxiliary_qubits() {
        for d in 2..=6u32 {
            let full = (1u64 << d) - 1;
            for c in [
                build_qft(d),
                build_rot(d, full),
                build_draper_sum(d, full),
                build_special_mul(d, full).unwrap(),
            ] {
                assert_eq!(c.qubits, d as usize);
                for g in &c.gates {
                    let mut touched = vec![];
                    match g {
                        ElementaryGate::H { target }
                        | ElementaryGate::P { target, .. }
                        | ElementaryGate::PDag { target, .. } => touched.push(*target),
                        ElementaryGate::CP { control, target, .. }
                        | ElementaryGate::CPDag { control, target, .. }
                        | ElementaryGate::Cnot { control, target } => {
                            touched.extend([*control, *target])
                        }
                        ElementaryGate::Toffoli { controls, target } => {
                            touched.extend([controls[0], controls[1], *target])
                        }
                        ElementaryGate::CSum { control, target_low, width, .. } => {
                            touched.push(*control);
                            touched.push(*target_low + *width as usize - 1);
                        }
                    }
                    assert!(touched.into_iter().all(|q| q < d as usize));
                }
            }
            assert_eq!(build_bsum(d).qubits, 2 * d as usize);
            assert_eq!(build_shor_mul(d, full).unwrap().qubits, 2 * d as usize);
        }
    }
}
