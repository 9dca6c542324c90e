//! Six-step two-party scalar-product exchange over four shared registers.
//!
//! One round computes `M_i = s_i + p_i q_i mod D` without either side seeing
//! the other's factor: Alice encodes `p_i` across an entangled register
//! quartet, Bob imprints `s_i, q_i` as phases, and two interleaved honesty
//! tests force both parties to prove they followed the script before any
//! result register is opened. "Sending a particle" is modelled as an
//! ownership transfer on a shared state vector; a party may only gate or
//! measure registers it currently owns.

use crate::modmath::{derive_vn, mod_inv, ModMathError, Modulus};
use crate::sim::{
    self, MeasurementOutcome, RegId, RegisterLayout, SimError, StateVector, C64,
    DETERMINISTIC_MASS,
};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Detection label for a failed check of Alice's announcements (step 4).
pub const STEP_ALICE_TEST: &str = "alice-honesty-test";
/// Detection label for a failed check of the returned registers (step 5).
pub const STEP_BOB_TEST: &str = "bob-honesty-test";
/// Detection label for a result register that is not concentrated (step 6).
pub const STEP_EXTRACT: &str = "result-extraction";

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("output width m must be between 1 and 4, got {0}")]
    WidthOutOfRange(u32),
    #[error("vector dimension n must be at least 1")]
    EmptyVector,
    #[error("expected {want} values, got {got}")]
    LengthMismatch { want: usize, got: usize },
    #[error("value {value} outside [0, {bound})")]
    InputOutOfRange { value: u64, bound: u64 },
    #[error("{party} does not own register {register}")]
    OwnershipViolation { party: Party, register: String },
    #[error("registers are not in the initial all-zero state")]
    RegistersNotFresh,
    #[error("strategy delta {0} must be even to keep the announced value odd")]
    OddStrategyDelta(u64),
    #[error("pinned v parts sum to {got} mod N, expected {want}")]
    SplitSumMismatch { want: u64, got: u64 },
    #[error("result register is not concentrated on a single value")]
    ResidualEntanglement,
    #[error("output residue {0} is not divisible by 4")]
    ResidueNotDivisible(u64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Math(#[from] ModMathError),
}

/// The two protocol participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Party::Alice => write!(f, "Alice"),
            Party::Bob => write!(f, "Bob"),
        }
    }
}

/// Global sizes shared by both parties: output width `m` (results live in
/// `Z_N`, `N = 2^m`) and vector dimension `n`. Registers are `d = m + 2` bits
/// wide so that the doubled-and-offset encodings stay collision free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    m: u32,
    n: usize,
}

impl ProtocolParams {
    pub fn new(m: u32, n: usize) -> Result<Self, ProtocolError> {
        // Four d-bit registers must fit the simulator's qubit budget.
        if m == 0 || m > 4 {
            return Err(ProtocolError::WidthOutOfRange(m));
        }
        if n == 0 {
            return Err(ProtocolError::EmptyVector);
        }
        Ok(ProtocolParams { m, n })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Working register width d = m + 2.
    pub fn d(&self) -> u32 {
        self.m + 2
    }

    /// Output modulus N = 2^m.
    pub fn output_modulus(&self) -> u64 {
        1 << self.m
    }

    /// Register modulus D = 2^d.
    pub fn register_modulus(&self) -> Modulus {
        Modulus::new(self.d()).expect("d is validated by ProtocolParams::new")
    }
}

/// Alice's per-round values: her input `x`, the odd factor `p = 2x + 1`, and
/// the four masking addends (`c3` odd so it can multiply reversibly).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliceRound {
    pub x: u64,
    pub p: u64,
    pub c: [u64; 4],
}

impl AliceRound {
    pub fn new(x: u64, c: [u64; 4], params: &ProtocolParams) -> Result<Self, ProtocolError> {
        let nn = params.output_modulus();
        let dd = params.register_modulus().size();
        if x >= nn {
            return Err(ProtocolError::InputOutOfRange { value: x, bound: nn });
        }
        for value in c {
            if value >= dd {
                return Err(ProtocolError::InputOutOfRange { value, bound: dd });
            }
        }
        if c[2] % 2 == 0 {
            return Err(ModMathError::EvenHasNoInverse(c[2]).into());
        }
        Ok(AliceRound { x, p: 2 * x + 1, c })
    }
}

/// Bob's per-round values: his input `y`, the additive share `v_i`, the odd
/// factor `q = 2y + 1`, the phase addend `s = 4v - 2y - 1 mod D`, and the
/// three odd bonding keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BobRound {
    pub y: u64,
    pub v: u64,
    pub q: u64,
    pub s: u64,
    pub k: [u64; 3],
}

impl BobRound {
    pub fn new(y: u64, v: u64, k: [u64; 3], params: &ProtocolParams) -> Result<Self, ProtocolError> {
        let nn = params.output_modulus();
        let md = params.register_modulus();
        if y >= nn {
            return Err(ProtocolError::InputOutOfRange { value: y, bound: nn });
        }
        for value in k {
            if value >= md.size() {
                return Err(ProtocolError::InputOutOfRange { value, bound: md.size() });
            }
            if value % 2 == 0 {
                return Err(ModMathError::EvenHasNoInverse(value).into());
            }
        }
        // Only 4v mod D enters the exchange, so an oversized share is reduced
        // rather than rejected; pinned example tables use raw values above N.
        let s = md.sub(md.mul(4, v), md.add(md.mul(2, y), 1));
        Ok(BobRound { y, v: md.reduce(v), q: 2 * y + 1, s, k })
    }
}

/// Per-register owner map, in layout order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleOwnership {
    owners: Vec<Party>,
}

impl ParticleOwnership {
    fn all_alice(count: usize) -> Self {
        ParticleOwnership { owners: vec![Party::Alice; count] }
    }
}

/// One round's simulator: the four shared registers (`h`, `t1`, `t2`, `g`,
/// plus an optional adversarial probe register `e`) together with their
/// current owners. Every gate and measurement is checked against ownership.
#[derive(Debug, Clone)]
pub struct RoundEngine {
    state: StateVector,
    names: Vec<&'static str>,
    ownership: ParticleOwnership,
}

const REGISTERS: [&str; 4] = ["h", "t1", "t2", "g"];
const PROBE_REGISTER: &str = "e";

impl RoundEngine {
    /// Fresh all-zero registers, all owned by Alice.
    pub fn new(params: &ProtocolParams) -> Result<Self, ProtocolError> {
        let layout = RegisterLayout::uniform(&REGISTERS, params.d())?;
        Ok(RoundEngine {
            state: StateVector::zero_state(layout),
            names: REGISTERS.to_vec(),
            ownership: ParticleOwnership::all_alice(REGISTERS.len()),
        })
    }

    /// Like [`RoundEngine::new`] but with a fifth register `e` that Bob owns
    /// from the start, for probe-ancilla adversary models.
    pub fn with_probe_register(params: &ProtocolParams) -> Result<Self, ProtocolError> {
        let names = [REGISTERS[0], REGISTERS[1], REGISTERS[2], REGISTERS[3], PROBE_REGISTER];
        let layout = RegisterLayout::uniform(&names, params.d())?;
        let mut ownership = ParticleOwnership::all_alice(names.len());
        ownership.owners[4] = Party::Bob;
        Ok(RoundEngine { state: StateVector::zero_state(layout), names: names.to_vec(), ownership })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    /// Modulus of the uniform register width.
    pub fn modulus(&self) -> Modulus {
        self.state.layout().modulus(self.reg("h").expect("h always exists"))
    }

    fn reg(&self, register: &str) -> Result<RegId, ProtocolError> {
        Ok(self.state.layout().reg(register)?)
    }

    fn index_of(&self, register: &str) -> Result<usize, ProtocolError> {
        self.names
            .iter()
            .position(|n| *n == register)
            .ok_or(ProtocolError::Sim(SimError::UnknownRegister(register.to_string())))
    }

    pub fn owner(&self, register: &str) -> Result<Party, ProtocolError> {
        Ok(self.ownership.owners[self.index_of(register)?])
    }

    /// All registers and their current owners, in layout order.
    pub fn owners(&self) -> Vec<(String, Party)> {
        self.names
            .iter()
            .zip(&self.ownership.owners)
            .map(|(n, o)| (n.to_string(), *o))
            .collect()
    }

    fn checked(&self, party: Party, register: &str) -> Result<RegId, ProtocolError> {
        if self.ownership.owners[self.index_of(register)?] != party {
            return Err(ProtocolError::OwnershipViolation {
                party,
                register: register.to_string(),
            });
        }
        self.reg(register)
    }

    /// Hand a register over; only its current owner may send it.
    pub fn transfer(&mut self, register: &str, from: Party, to: Party) -> Result<(), ProtocolError> {
        self.checked(from, register)?;
        let idx = self.index_of(register)?;
        self.ownership.owners[idx] = to;
        Ok(())
    }

    /// Replace the whole state; allowed only for a party that owns every
    /// register (a sender preparing particles before any handoff).
    pub fn load_state(&mut self, party: Party, amps: Vec<C64>) -> Result<(), ProtocolError> {
        if self.ownership.owners.iter().any(|o| *o != party) {
            return Err(ProtocolError::OwnershipViolation {
                party,
                register: "all".to_string(),
            });
        }
        self.state = StateVector::from_amplitudes(self.state.layout().clone(), amps)?;
        Ok(())
    }

    pub fn qft(&mut self, party: Party, register: &str, inverse: bool) -> Result<(), ProtocolError> {
        let reg = self.checked(party, register)?;
        Ok(sim::apply_qft(&mut self.state, reg, inverse)?)
    }

    pub fn rot(&mut self, party: Party, register: &str, b: u64) -> Result<(), ProtocolError> {
        let reg = self.checked(party, register)?;
        Ok(sim::apply_rot(&mut self.state, reg, b)?)
    }

    pub fn sum(&mut self, party: Party, register: &str, b: u64) -> Result<(), ProtocolError> {
        let reg = self.checked(party, register)?;
        Ok(sim::apply_sum(&mut self.state, reg, b)?)
    }

    pub fn mul(&mut self, party: Party, register: &str, b: u64) -> Result<(), ProtocolError> {
        let reg = self.checked(party, register)?;
        Ok(sim::apply_mul(&mut self.state, reg, b)?)
    }

    pub fn bsum(&mut self, party: Party, src: &str, dst: &str) -> Result<(), ProtocolError> {
        let s = self.checked(party, src)?;
        let d = self.checked(party, dst)?;
        Ok(sim::apply_bsum(&mut self.state, s, d)?)
    }

    pub fn xor(&mut self, party: Party, src: &str, dst: &str) -> Result<(), ProtocolError> {
        let s = self.checked(party, src)?;
        let d = self.checked(party, dst)?;
        Ok(sim::apply_xor(&mut self.state, s, d)?)
    }

    /// Value-controlled rewrite of `dst` keyed on `src`, for adversarial
    /// entangling maps; `f(src_value, dst_value)` must be injective in its
    /// second argument.
    pub fn pairwise(
        &mut self,
        party: Party,
        src: &str,
        dst: &str,
        f: &dyn Fn(u64, u64) -> u64,
    ) -> Result<(), ProtocolError> {
        let s = self.checked(party, src)?;
        let d = self.checked(party, dst)?;
        Ok(sim::apply_pairwise_map(&mut self.state, s, d, f)?)
    }

    /// Born marginal of one owned register.
    pub fn probabilities(&self, party: Party, register: &str) -> Result<Vec<f64>, ProtocolError> {
        let reg = self.checked(party, register)?;
        Ok(sim::measurement_probabilities(&self.state, reg))
    }

    /// Measure an owned register and collapse the shared state onto the
    /// sampled outcome.
    pub fn measure_collapse<R: Rng>(
        &mut self,
        party: Party,
        register: &str,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, ProtocolError> {
        let reg = self.checked(party, register)?;
        let outcome = sim::measure(&self.state, reg, rng)?;
        self.state = outcome.posterior.clone();
        Ok(outcome)
    }

    fn require_fresh(&self) -> Result<(), ProtocolError> {
        let amps = self.state.amplitudes();
        if (amps[0] - C64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(ProtocolError::RegistersNotFresh);
        }
        Ok(())
    }
}

// ======================================================================
// the six operation steps
// ======================================================================

/// Step 1: Alice spreads `h` into a uniform superposition, copies it into the
/// three travelling registers, folds in her factor and masks, and sends
/// `t1, t2, g` to Bob. Leaves the state
/// `(1/sqrt(D)) sum_j |j, j+c1, j*p+c2, j*c3+c4>`.
pub fn alice_input_step(eng: &mut RoundEngine, round: &AliceRound) -> Result<(), ProtocolError> {
    eng.require_fresh()?;
    eng.qft(Party::Alice, "h", false)?;
    eng.xor(Party::Alice, "h", "t1")?;
    eng.xor(Party::Alice, "h", "t2")?;
    eng.xor(Party::Alice, "h", "g")?;
    eng.mul(Party::Alice, "t2", round.p)?;
    eng.mul(Party::Alice, "g", round.c[2])?;
    eng.sum(Party::Alice, "t1", round.c[0])?;
    eng.sum(Party::Alice, "t2", round.c[1])?;
    eng.sum(Party::Alice, "g", round.c[3])?;
    eng.transfer("t1", Party::Alice, Party::Bob)?;
    eng.transfer("t2", Party::Alice, Party::Bob)?;
    eng.transfer("g", Party::Alice, Party::Bob)?;
    Ok(())
}

/// Which travelling registers a forging sender puts into superposition while
/// keeping `h` and the rest at |0>.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeCase {
    /// Independent uniform superpositions on both `t1` and `t2`.
    SuperposeBoth,
    /// Uniform superposition on `t1` only.
    SuperposeT1,
    /// Uniform superposition on `t2` only.
    SuperposeT2,
}

/// Adversarial replacement for step 1: product-state forgeries that try to
/// capture Bob's phase inputs without the entangled structure.
pub fn forged_input_step(eng: &mut RoundEngine, case: ForgeCase) -> Result<(), ProtocolError> {
    eng.require_fresh()?;
    match case {
        ForgeCase::SuperposeBoth => {
            eng.qft(Party::Alice, "t1", false)?;
            eng.qft(Party::Alice, "t2", false)?;
        }
        ForgeCase::SuperposeT1 => eng.qft(Party::Alice, "t1", false)?,
        ForgeCase::SuperposeT2 => eng.qft(Party::Alice, "t2", false)?,
    }
    eng.transfer("t1", Party::Alice, Party::Bob)?;
    eng.transfer("t2", Party::Alice, Party::Bob)?;
    eng.transfer("g", Party::Alice, Party::Bob)?;
    Ok(())
}

/// Step 2: Bob welds the three received registers into one linear relation.
/// Afterwards `g` carries `j*r1 + r2` with `r1 = k1 + p*k2 + c3*k3` and
/// `r2 = c1*k1 + c2*k2 + c4*k3`, while `t1, t2` are restored.
pub fn bondage_step(eng: &mut RoundEngine, k: &[u64; 3]) -> Result<(), ProtocolError> {
    let md = eng.modulus();
    eng.mul(Party::Bob, "t1", k[0])?;
    eng.mul(Party::Bob, "t2", k[1])?;
    eng.mul(Party::Bob, "g", k[2])?;
    eng.bsum(Party::Bob, "t1", "g")?;
    eng.bsum(Party::Bob, "t2", "g")?;
    eng.mul(Party::Bob, "t1", mod_inv(k[0], &md)?)?;
    eng.mul(Party::Bob, "t2", mod_inv(k[1], &md)?)?;
    Ok(())
}

/// Step 3: Bob rotates his phase inputs onto the bonded pair. Every branch
/// `j` picks up `omega^(j*(s + p*q))` plus a global phase that drops out.
pub fn bob_input_step(eng: &mut RoundEngine, s: u64, q: u64) -> Result<(), ProtocolError> {
    eng.rot(Party::Bob, "t1", s)?;
    eng.rot(Party::Bob, "t2", q)?;
    Ok(())
}

/// The linear coefficients `(r1, r2)` that step 2 welds into `g`.
pub fn bond_coefficients(p: u64, c: &[u64; 4], k: &[u64; 3], md: &Modulus) -> (u64, u64) {
    let r1 = md.add(k[0], md.add(md.mul(p, k[1]), md.mul(c[2], k[2])));
    let r2 = md.add(md.mul(c[0], k[0]), md.add(md.mul(c[1], k[1]), md.mul(c[3], k[2])));
    (r1, r2)
}

/// Step 4b: Alice's answers `r3 = r1^-1` and `r4 = c1 - r2*r3`.
pub fn honesty_answers(
    r1: u64,
    r2: u64,
    c1: u64,
    md: &Modulus,
) -> Result<(u64, u64), ProtocolError> {
    let r3 = mod_inv(r1, md)?;
    Ok((r3, md.sub(c1, md.mul(r2, r3))))
}

/// Step 4c: Bob unwinds `g` with Alice's announced answers and checks that it
/// collapses back onto `t1`. Passes only when the measured difference is 0.
/// The caller completes a pass by returning `t1, t2` to Alice.
pub fn alice_honesty_test<R: Rng>(
    eng: &mut RoundEngine,
    r3: u64,
    r4: u64,
    rng: &mut R,
) -> Result<bool, ProtocolError> {
    eng.mul(Party::Bob, "g", r3)?;
    eng.sum(Party::Bob, "g", r4)?;
    eng.xor(Party::Bob, "t1", "g")?;
    let outcome = eng.measure_collapse(Party::Bob, "g", rng)?;
    Ok(outcome.value == 0)
}

/// Step 4 handoff: Bob sends `t1, t2` back after a passed test.
pub fn return_verified_registers(eng: &mut RoundEngine) -> Result<(), ProtocolError> {
    eng.transfer("t1", Party::Bob, Party::Alice)?;
    eng.transfer("t2", Party::Bob, Party::Alice)?;
    Ok(())
}

/// Step 5: Alice strips her own masks, divides out her factor, and compares
/// both returned registers against `h`. Passes only when both measure 0.
pub fn bob_honesty_test<R: Rng>(
    eng: &mut RoundEngine,
    c1: u64,
    c2: u64,
    p: u64,
    rng: &mut R,
) -> Result<bool, ProtocolError> {
    let md = eng.modulus();
    eng.sum(Party::Alice, "t1", md.neg(c1))?;
    eng.sum(Party::Alice, "t2", md.neg(c2))?;
    eng.mul(Party::Alice, "t2", mod_inv(p, &md)?)?;
    eng.xor(Party::Alice, "h", "t1")?;
    eng.xor(Party::Alice, "h", "t2")?;
    let first = eng.measure_collapse(Party::Alice, "t1", rng)?;
    let second = eng.measure_collapse(Party::Alice, "t2", rng)?;
    Ok(first.value == 0 && second.value == 0)
}

/// Step 6: Alice rotates `h` back to the computational basis and reads the
/// round result. Errors if the register is not concentrated on one value,
/// which means something upstream left `h` entangled.
pub fn extract_result<R: Rng>(eng: &mut RoundEngine, rng: &mut R) -> Result<u64, ProtocolError> {
    eng.qft(Party::Alice, "h", true)?;
    let probs = eng.probabilities(Party::Alice, "h")?;
    let pmax = probs.iter().cloned().fold(0.0f64, f64::max);
    if pmax < DETERMINISTIC_MASS {
        return Err(ProtocolError::ResidualEntanglement);
    }
    Ok(eng.measure_collapse(Party::Alice, "h", rng)?.value)
}

/// Step 6 without the concentration guard: sample whatever the corrupted
/// result register yields. Used by adversary analyses.
pub fn force_extract_result<R: Rng>(
    eng: &mut RoundEngine,
    rng: &mut R,
) -> Result<u64, ProtocolError> {
    eng.qft(Party::Alice, "h", true)?;
    Ok(eng.measure_collapse(Party::Alice, "h", rng)?.value)
}

/// Output stage: `u = (sum_i (M_i - 2 x_i) mod D) / 4`, which equals
/// `(x . y + v) mod N` on honest runs.
pub fn compute_output(
    m_values: &[u64],
    x: &[u64],
    params: &ProtocolParams,
) -> Result<u64, ProtocolError> {
    if m_values.len() != x.len() {
        return Err(ProtocolError::LengthMismatch { want: x.len(), got: m_values.len() });
    }
    let md = params.register_modulus();
    let mut acc = 0u64;
    for (mi, xi) in m_values.iter().zip(x) {
        if *mi >= md.size() {
            return Err(ProtocolError::InputOutOfRange { value: *mi, bound: md.size() });
        }
        acc = md.add(acc, md.sub(*mi, md.mul(2, *xi)));
    }
    if acc % 4 != 0 {
        return Err(ProtocolError::ResidueNotDivisible(acc));
    }
    Ok(acc / 4)
}

// ======================================================================
// whole-protocol orchestration
// ======================================================================

/// How Alice deviates from the script, if at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AliceStrategy {
    Honest,
    /// Replace step 1 with a product-state forgery; announce a random odd
    /// `r3` and `r4 = 0` at step 4b.
    ForgeState(ForgeCase),
    /// Follow the script but shift the announced answers. `r3_offset` must be
    /// even so the announced `r3` stays odd.
    FalseAnswer { r3_offset: u64, r4_offset: u64 },
}

/// How Bob deviates from the script, if at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BobStrategy {
    Honest,
    /// Skip his step-4 check and instead measure `t1, t2, g` outright once
    /// Alice's answers have arrived; the run records his view and stops.
    MeasureView,
    /// Tamper with `t1` between his passed step-4 check and the handoff.
    InterceptResend(InterceptMode),
    /// Announce shifted keys at step 4a while the state carries the real
    /// ones. Deltas must be even so announced keys stay odd.
    FalseK { delta: [u64; 3] },
    /// Entangle a probe register with `t1`'s value before returning it:
    /// `|a>_t1 |z>_e -> |a> |z + map[a]>`. The map must list D values.
    EntangleProbe { map: Vec<u64> },
    /// Shift `t1` by one before returning it; a deterministic step-5 control.
    ExtraSumOnT1,
}

/// What Bob does to an intercepted `t1` before sending it back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterceptMode {
    /// Measure `t1` in the Fourier basis, then forward a fresh uniformly
    /// drawn basis state.
    FourierBasis,
    /// Measure `t1` and `t2` in the computational basis and forward the
    /// collapsed values unchanged.
    ComputationalBasis,
    /// Forward the registers untouched (honest control).
    Untouched,
}

/// Record of one round: masks, announced keys, the bond coefficients with the
/// announced answers, both test outcomes (None when the step was never
/// reached), and the extracted result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub i: usize,
    pub c: [u64; 4],
    pub k: [u64; 3],
    pub r: [u64; 4],
    pub alice_test: Option<bool>,
    pub bob_test: Option<bool>,
    #[serde(rename = "M")]
    pub m_value: Option<u64>,
}

/// A failed check: which test tripped, in which 1-based round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub step: String,
    pub round: usize,
}

/// Full record of one run: every random draw, message, test outcome,
/// detection event, and the assembled output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub seed: u64,
    pub m: u32,
    pub n: usize,
    pub rounds: Vec<RoundRecord>,
    pub output: Option<u64>,
    pub detections: Vec<Detection>,
}

/// Bob's view when he abandons the round and measures everything he holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasuredView {
    pub round: usize,
    pub t1: u64,
    pub t2: u64,
    pub g: u64,
    pub k: [u64; 3],
    pub r3: u64,
    pub r4: u64,
}

/// A finished run: the transcript plus any adversarial observations.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub transcript: Transcript,
    pub observations: Vec<MeasuredView>,
}

/// Replaces the per-round random draws for exact reproduction of recorded
/// runs: all n additive shares of v, and each round's masks and keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinnedDraws {
    pub v_parts: Vec<u64>,
    pub rounds: Vec<RoundDraws>,
}

/// One round's pinned masks `c1..c4` and keys `k1..k3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundDraws {
    pub c: [u64; 4],
    pub k: [u64; 3],
}

fn draw_range<R: Rng>(rng: &mut R, bound: u64) -> u64 {
    rng.random_range(0..bound)
}

fn draw_odd<R: Rng>(rng: &mut R, bound: u64) -> u64 {
    rng.random_range(0..bound / 2) * 2 + 1
}

/// Run the whole protocol with fresh randomness derived from `seed`.
pub fn run_protocol(
    x: &[u64],
    y: &[u64],
    v: u64,
    params: &ProtocolParams,
    alice: &AliceStrategy,
    bob: &BobStrategy,
    seed: u64,
) -> Result<RunOutcome, ProtocolError> {
    run_protocol_impl(x, y, v, params, alice, bob, seed, None)
}

/// Run the whole protocol with every random draw pinned; `seed` only feeds
/// measurement sampling (honest rounds never consult it).
pub fn run_protocol_pinned(
    x: &[u64],
    y: &[u64],
    v: u64,
    draws: &PinnedDraws,
    params: &ProtocolParams,
    alice: &AliceStrategy,
    bob: &BobStrategy,
    seed: u64,
) -> Result<RunOutcome, ProtocolError> {
    run_protocol_impl(x, y, v, params, alice, bob, seed, Some(draws))
}

fn validate_strategies(
    alice: &AliceStrategy,
    bob: &BobStrategy,
    params: &ProtocolParams,
) -> Result<(), ProtocolError> {
    if let AliceStrategy::FalseAnswer { r3_offset, .. } = alice {
        if r3_offset % 2 != 0 {
            return Err(ProtocolError::OddStrategyDelta(*r3_offset));
        }
    }
    match bob {
        BobStrategy::FalseK { delta } => {
            for d in delta {
                if d % 2 != 0 {
                    return Err(ProtocolError::OddStrategyDelta(*d));
                }
            }
        }
        BobStrategy::EntangleProbe { map } => {
            let dd = params.register_modulus().size();
            if map.len() as u64 != dd {
                return Err(ProtocolError::LengthMismatch {
                    want: dd as usize,
                    got: map.len(),
                });
            }
            for value in map {
                if *value >= dd {
                    return Err(ProtocolError::InputOutOfRange { value: *value, bound: dd });
                }
            }
        }
        _ => {}
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_protocol_impl(
    x: &[u64],
    y: &[u64],
    v: u64,
    params: &ProtocolParams,
    alice: &AliceStrategy,
    bob: &BobStrategy,
    seed: u64,
    pinned: Option<&PinnedDraws>,
) -> Result<RunOutcome, ProtocolError> {
    let n = params.n();
    let nn = params.output_modulus();
    let md = params.register_modulus();
    if x.len() != n {
        return Err(ProtocolError::LengthMismatch { want: n, got: x.len() });
    }
    if y.len() != n {
        return Err(ProtocolError::LengthMismatch { want: n, got: y.len() });
    }
    if v >= nn {
        return Err(ProtocolError::InputOutOfRange { value: v, bound: nn });
    }
    validate_strategies(alice, bob, params)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let v_parts: Vec<u64> = match pinned {
        Some(draws) => {
            if draws.v_parts.len() != n {
                return Err(ProtocolError::LengthMismatch { want: n, got: draws.v_parts.len() });
            }
            if draws.rounds.len() != n {
                return Err(ProtocolError::LengthMismatch { want: n, got: draws.rounds.len() });
            }
            let got = draws.v_parts.iter().fold(0, |acc, p| (acc + p) % nn);
            if got != v {
                return Err(ProtocolError::SplitSumMismatch { want: v, got });
            }
            draws.v_parts.clone()
        }
        None => {
            let mut parts: Vec<u64> = (1..n).map(|_| draw_range(&mut rng, nn)).collect();
            parts.push(derive_vn(v, &parts, params.m()));
            parts
        }
    };

    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(n);
    let mut detections: Vec<Detection> = Vec::new();
    let mut observations: Vec<MeasuredView> = Vec::new();
    let mut m_values: Vec<u64> = Vec::with_capacity(n);

    for i in 0..n {
        let round_no = i + 1;
        let (c, k_true) = match pinned {
            Some(draws) => (draws.rounds[i].c, draws.rounds[i].k),
            None => (
                [
                    draw_range(&mut rng, md.size()),
                    draw_range(&mut rng, md.size()),
                    draw_odd(&mut rng, md.size()),
                    draw_range(&mut rng, md.size()),
                ],
                [
                    draw_odd(&mut rng, md.size()),
                    draw_odd(&mut rng, md.size()),
                    draw_odd(&mut rng, md.size()),
                ],
            ),
        };
        let around = AliceRound::new(x[i], c, params)?;
        let bround = BobRound::new(y[i], v_parts[i], k_true, params)?;

        let mut eng = match bob {
            BobStrategy::EntangleProbe { .. } => RoundEngine::with_probe_register(params)?,
            _ => RoundEngine::new(params)?,
        };

        // Step 1: Alice's state preparation and send.
        let forged = matches!(alice, AliceStrategy::ForgeState(_));
        match alice {
            AliceStrategy::ForgeState(case) => forged_input_step(&mut eng, *case)?,
            _ => alice_input_step(&mut eng, &around)?,
        }

        // Step 2: Bob bonds the registers with his real keys.
        bondage_step(&mut eng, &k_true)?;

        // Step 3: Bob's phase inputs.
        bob_input_step(&mut eng, bround.s, bround.q)?;
        if let BobStrategy::EntangleProbe { map } = bob {
            eng.pairwise(Party::Bob, "t1", "e", &|a, z| md.add(z, map[a as usize]))?;
        }

        // Step 4a: Bob announces keys (possibly shifted).
        let k_announced = match bob {
            BobStrategy::FalseK { delta } => [
                md.add(k_true[0], delta[0]),
                md.add(k_true[1], delta[1]),
                md.add(k_true[2], delta[2]),
            ],
            _ => k_true,
        };

        // Step 4b: Alice answers from the keys she heard.
        let (state_r1, state_r2) = bond_coefficients(around.p, &around.c, &k_true, &md);
        let (r3, r4) = match alice {
            AliceStrategy::ForgeState(_) => (draw_odd(&mut rng, md.size()), 0),
            AliceStrategy::Honest => {
                let (heard_r1, heard_r2) = bond_coefficients(around.p, &around.c, &k_announced, &md);
                honesty_answers(heard_r1, heard_r2, c[0], &md)?
            }
            AliceStrategy::FalseAnswer { r3_offset, r4_offset } => {
                let (heard_r1, heard_r2) = bond_coefficients(around.p, &around.c, &k_announced, &md);
                let (r3, r4) = honesty_answers(heard_r1, heard_r2, c[0], &md)?;
                (md.add(r3, *r3_offset), md.add(r4, *r4_offset))
            }
        };
        // The record keeps the coefficients actually welded into the state
        // alongside the announced answers; forged rounds have no coefficients.
        let r_record = if forged { [0, 0, r3, r4] } else { [state_r1, state_r2, r3, r4] };

        // Step 4c: Bob verifies, or deviates.
        if matches!(bob, BobStrategy::MeasureView) {
            let t1 = eng.measure_collapse(Party::Bob, "t1", &mut rng)?.value;
            let t2 = eng.measure_collapse(Party::Bob, "t2", &mut rng)?.value;
            let g = eng.measure_collapse(Party::Bob, "g", &mut rng)?.value;
            observations.push(MeasuredView { round: round_no, t1, t2, g, k: k_announced, r3, r4 });
            rounds.push(RoundRecord {
                i: round_no,
                c,
                k: k_announced,
                r: r_record,
                alice_test: None,
                bob_test: None,
                m_value: None,
            });
            break;
        }
        let pass4 = alice_honesty_test(&mut eng, r3, r4, &mut rng)?;
        if !pass4 {
            rounds.push(RoundRecord {
                i: round_no,
                c,
                k: k_announced,
                r: r_record,
                alice_test: Some(false),
                bob_test: None,
                m_value: None,
            });
            detections.push(Detection { step: STEP_ALICE_TEST.to_string(), round: round_no });
            break;
        }

        // Bob may tamper with what he holds before handing it back.
        match bob {
            BobStrategy::InterceptResend(InterceptMode::FourierBasis) => {
                eng.qft(Party::Bob, "t1", true)?;
                let seen = eng.measure_collapse(Party::Bob, "t1", &mut rng)?.value;
                let fresh = draw_range(&mut rng, md.size());
                eng.sum(Party::Bob, "t1", md.sub(fresh, seen))?;
            }
            BobStrategy::InterceptResend(InterceptMode::ComputationalBasis) => {
                eng.measure_collapse(Party::Bob, "t1", &mut rng)?;
                eng.measure_collapse(Party::Bob, "t2", &mut rng)?;
            }
            BobStrategy::ExtraSumOnT1 => eng.sum(Party::Bob, "t1", 1)?,
            _ => {}
        }
        return_verified_registers(&mut eng)?;

        if forged {
            // A forging Alice has no masks to unwind; the exchange cannot
            // produce an output and ends with whatever she captured.
            rounds.push(RoundRecord {
                i: round_no,
                c,
                k: k_announced,
                r: r_record,
                alice_test: Some(true),
                bob_test: None,
                m_value: None,
            });
            continue;
        }

        // Step 5: Alice verifies the returned registers.
        let pass5 = bob_honesty_test(&mut eng, c[0], c[1], around.p, &mut rng)?;
        if !pass5 {
            rounds.push(RoundRecord {
                i: round_no,
                c,
                k: k_announced,
                r: r_record,
                alice_test: Some(true),
                bob_test: Some(false),
                m_value: None,
            });
            detections.push(Detection { step: STEP_BOB_TEST.to_string(), round: round_no });
            break;
        }

        // Step 6: read the round result.
        match extract_result(&mut eng, &mut rng) {
            Ok(mi) => {
                m_values.push(mi);
                rounds.push(RoundRecord {
                    i: round_no,
                    c,
                    k: k_announced,
                    r: r_record,
                    alice_test: Some(true),
                    bob_test: Some(true),
                    m_value: Some(mi),
                });
            }
            Err(ProtocolError::ResidualEntanglement) => {
                rounds.push(RoundRecord {
                    i: round_no,
                    c,
                    k: k_announced,
                    r: r_record,
                    alice_test: Some(true),
                    bob_test: Some(true),
                    m_value: None,
                });
                detections.push(Detection { step: STEP_EXTRACT.to_string(), round: round_no });
                break;
            }
            Err(other) => return Err(other),
        }
    }

    let output = if m_values.len() == n {
        Some(compute_output(&m_values, x, params)?)
    } else {
        None
    };

    Ok(RunOutcome {
        transcript: Transcript {
            seed,
            m: params.m(),
            n,
            rounds,
            output,
            detections,
        },
        observations,
    })
}
