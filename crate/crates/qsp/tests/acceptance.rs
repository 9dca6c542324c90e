//! End-to-end acceptance checks: pinned-run reproduction, honest-protocol
//! properties over random instances, circuit equivalences, the privacy and
//! counting statements, adversary detection rates, matrix products, and
//! gate-count scaling. Each check prints a single summary line on success
//! and asserts its stated tolerance and, where given, its runtime budget.

use std::time::{Duration, Instant};

use qsp::attacks::{forgery_attack_alice, intercept_resend_bob, measurement_attack_bob};
use qsp::circuits::{
    apply_circuit, build_bsum, build_draper_sum, build_qft, build_qft_inverse, build_rot,
    build_shor_mul, build_special_mul, build_xor, quadratic_fit_stability, Circuit,
    SemanticGateKind,
};
use qsp::fixtures::{by_name, Fixture};
use qsp::info::{lemma2_counting, lemma2_counting_no_masking, lemma3_verifier, lemma4_verifier};
use qsp::matmul::{plain_matmul_oracle, run_matmul, MatrixInput};
use qsp::modmath::{mod_inv, prop2_count_bruteforce, prop2_probability, Modulus};
use qsp::protocol::{
    alice_honesty_test, alice_input_step, bob_honesty_test, bob_input_step, bond_coefficients,
    bondage_step, honesty_answers, return_verified_registers, run_protocol, run_protocol_pinned,
    AliceRound, AliceStrategy, BobRound, BobStrategy, ForgeCase, InterceptMode, Party,
    ProtocolParams, RoundEngine,
};
use qsp::sim::{
    apply_bsum, apply_mul, apply_qft, apply_rot, apply_sum, apply_xor, max_amplitude_deviation,
    RegId, RegisterLayout, SimError, StateVector,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ======================================================================
// shared helpers
// ======================================================================

/// Replays one honest round with fixed parameters and returns the result
/// register's distribution right before the final measurement.
fn round_distribution(
    params: &ProtocolParams,
    x: u64,
    c: [u64; 4],
    k: [u64; 3],
    s: u64,
    q: u64,
) -> Vec<f64> {
    let md = params.register_modulus();
    let alice = AliceRound::new(x, c, params).unwrap();
    let mut eng = RoundEngine::new(params).unwrap();
    alice_input_step(&mut eng, &alice).unwrap();
    bondage_step(&mut eng, &k).unwrap();
    bob_input_step(&mut eng, s, q).unwrap();
    let (r1, r2) = bond_coefficients(alice.p, &c, &k, &md);
    let (r3, r4) = honesty_answers(r1, r2, c[0], &md).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(alice_honesty_test(&mut eng, r3, r4, &mut rng).unwrap());
    return_verified_registers(&mut eng).unwrap();
    assert!(bob_honesty_test(&mut eng, c[0], c[1], alice.p, &mut rng).unwrap());
    eng.qft(Party::Alice, "h", true).unwrap();
    eng.probabilities(Party::Alice, "h").unwrap()
}

/// Runs a pinned fixture, asserts every recorded round result and the
/// output, and checks that `shots` samples of each round's final
/// measurement all land on the recorded value.
fn reproduce_fixture(fixture: &Fixture, shots: u64) {
    let params = fixture.params();
    let out = run_protocol_pinned(
        &fixture.x(),
        &fixture.y(),
        fixture.v,
        &fixture.draws(),
        &params,
        &AliceStrategy::Honest,
        &BobStrategy::Honest,
        7,
    )
    .unwrap();

    assert!(out.transcript.detections.is_empty());
    assert_eq!(out.transcript.output, Some(fixture.u));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (index, round) in fixture.rounds.iter().enumerate() {
        assert_eq!(
            out.transcript.rounds[index].m_value,
            Some(round.m_value),
            "round {} result",
            index + 1
        );
        let bob = BobRound::new(round.y, round.v, round.k, &params).unwrap();
        let probs = round_distribution(&params, round.x, round.c, round.k, bob.s, bob.q);
        for _ in 0..shots {
            let mut t: f64 = rng.random();
            let mut value = probs.len() - 1;
            for (candidate, p) in probs.iter().enumerate() {
                if t < *p {
                    value = candidate;
                    break;
                }
                t -= p;
            }
            assert_eq!(value as u64, round.m_value, "round {} shot", index + 1);
        }
    }
}

fn one_register_deviation(
    d: u32,
    circuit: &Circuit,
    apply: &dyn Fn(&mut StateVector, RegId) -> Result<(), SimError>,
) -> f64 {
    let layout = RegisterLayout::new(&[("r", d)]).unwrap();
    let reg = layout.reg("r").unwrap();
    let map: Vec<usize> = (0..d as usize).collect();
    let mut worst = 0.0f64;
    for a in 0..1u64 << d {
        let mut via_circuit = StateVector::basis_state(layout.clone(), &[a]).unwrap();
        let mut via_gate = via_circuit.clone();
        apply_circuit(&mut via_circuit, circuit, &map).unwrap();
        apply(&mut via_gate, reg).unwrap();
        worst = worst.max(max_amplitude_deviation(&via_circuit, &via_gate).unwrap());
    }
    worst
}

fn two_register_deviation(
    d: u32,
    circuit: &Circuit,
    apply: &dyn Fn(&mut StateVector, RegId, RegId) -> Result<(), SimError>,
) -> f64 {
    let layout = RegisterLayout::uniform(&["a", "b"], d).unwrap();
    let ra = layout.reg("a").unwrap();
    let rb = layout.reg("b").unwrap();
    let map: Vec<usize> = (0..2 * d as usize).collect();
    let mut worst = 0.0f64;
    for a in 0..1u64 << d {
        for b in 0..1u64 << d {
            let mut via_circuit = StateVector::basis_state(layout.clone(), &[a, b]).unwrap();
            let mut via_gate = via_circuit.clone();
            apply_circuit(&mut via_circuit, circuit, &map).unwrap();
            apply(&mut via_gate, ra, rb).unwrap();
            worst = worst.max(max_amplitude_deviation(&via_circuit, &via_gate).unwrap());
        }
    }
    worst
}

// ======================================================================
// criteria
// ======================================================================

#[test]
fn criterion_01_pinned_first_table_reproduces_exactly() {
    let clock = Instant::now();
    let fixture = by_name("table3").unwrap();
    assert_eq!(fixture.expected_m(), vec![2, 12, 2, 8]);
    assert_eq!(fixture.u, 0);
    reproduce_fixture(&fixture, 1000);
    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "acceptance 01 pass: table3 rounds (2,12,2,8), u=0, 4x1000 shots on the spike in {elapsed:?}"
    );
}

#[test]
fn criterion_02_pinned_second_table_reproduces_with_errata() {
    let fixture = by_name("table4").unwrap();
    assert_eq!(fixture.expected_m(), vec![4, 10, 6, 0]);
    assert_eq!(fixture.u, 2);
    reproduce_fixture(&fixture, 1000);

    // The two corrected fields must come from the defining relations, not
    // from the recorded values.
    assert_eq!(fixture.errata.len(), 2);
    let params = fixture.params();
    let md = params.register_modulus();
    for erratum in &fixture.errata {
        let round = fixture.rounds[erratum.round - 1];
        let (r1, r2) = bond_coefficients(round.p, &round.c, &round.k, &md);
        let (r3, r4) = honesty_answers(r1, r2, round.c[0], &md).unwrap();
        let derived = match erratum.field {
            "r3" => r3,
            "r4" => r4,
            other => panic!("unexpected erratum field {other}"),
        };
        assert_eq!(erratum.derived, derived);
        assert_eq!(round.r[2], r3);
        assert_eq!(round.r[3], r4);
        assert_ne!(erratum.printed, erratum.derived);
    }
    println!("acceptance 02 pass: table4 rounds (4,10,6,0), u=2, both errata formula-derived");
}

#[test]
fn criterion_03_honest_runs_match_the_classical_product() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1105);
    for trial in 0..200u64 {
        let m = rng.random_range(1..=3u32);
        let n = rng.random_range(1..=4usize);
        let nn = 1u64 << m;
        let x: Vec<u64> = (0..n).map(|_| rng.random_range(0..nn)).collect();
        let y: Vec<u64> = (0..n).map(|_| rng.random_range(0..nn)).collect();
        let v = rng.random_range(0..nn);
        let params = ProtocolParams::new(m, n).unwrap();
        let out = run_protocol(
            &x,
            &y,
            v,
            &params,
            &AliceStrategy::Honest,
            &BobStrategy::Honest,
            9000 + trial,
        )
        .unwrap();

        let expected = (x.iter().zip(&y).map(|(a, b)| a * b).sum::<u64>() + v) % nn;
        assert_eq!(out.transcript.output, Some(expected), "trial {trial}");
        assert!(out.transcript.detections.is_empty(), "trial {trial}");
        for round in &out.transcript.rounds {
            assert_eq!(round.alice_test, Some(true), "trial {trial}");
            assert_eq!(round.bob_test, Some(true), "trial {trial}");
        }
    }
    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!("acceptance 03 pass: 200 random honest instances exact in {elapsed:?}");
}

#[test]
fn criterion_04_circuits_equal_their_semantic_gates() {
    let clock = Instant::now();
    let mut worst = 0.0f64;
    for d in 2..=4u32 {
        let dd = 1u64 << d;
        worst = worst.max(one_register_deviation(d, &build_qft(d), &|s, r| {
            apply_qft(s, r, false)
        }));
        worst = worst.max(one_register_deviation(d, &build_qft_inverse(d), &|s, r| {
            apply_qft(s, r, true)
        }));
        for b in 0..dd {
            worst = worst.max(one_register_deviation(d, &build_rot(d, b), &move |s, r| {
                apply_rot(s, r, b)
            }));
            worst = worst.max(one_register_deviation(
                d,
                &build_draper_sum(d, b),
                &move |s, r| apply_sum(s, r, b),
            ));
        }
        for b in (1..dd).step_by(2) {
            worst = worst.max(one_register_deviation(
                d,
                &build_special_mul(d, b).unwrap(),
                &move |s, r| apply_mul(s, r, b),
            ));
        }
        worst = worst.max(two_register_deviation(d, &build_bsum(d), &apply_bsum));
        worst = worst.max(two_register_deviation(d, &build_xor(d), &apply_xor));
    }
    assert!(worst < 1e-9, "max deviation {worst:.3e}");

    // The in-place multiplier again, exhaustively over every odd factor at
    // the protocol's working width, plus the scratch-register variant.
    let d = 4u32;
    let dd = 1u64 << d;
    for b in (1..dd).step_by(2) {
        let dev = one_register_deviation(d, &build_special_mul(d, b).unwrap(), &move |s, r| {
            apply_mul(s, r, b)
        });
        assert!(dev < 1e-9, "b={b} deviation {dev:.3e}");
    }
    let layout = RegisterLayout::new(&[("r", d), ("scratch", d)]).unwrap();
    let map: Vec<usize> = (0..2 * d as usize).collect();
    for b in (1..dd).step_by(2) {
        let circuit = build_shor_mul(d, b).unwrap();
        for a in 0..dd {
            let mut state = StateVector::basis_state(layout.clone(), &[a, 0]).unwrap();
            apply_circuit(&mut state, &circuit, &map).unwrap();
            let expect = state.pack(&[(a * b) % dd, 0]);
            assert!(
                (state.amplitudes()[expect].norm() - 1.0).abs() < 1e-9,
                "shor b={b} a={a}"
            );
        }
    }

    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "acceptance 04 pass: all circuits match semantics at d=2..4, worst {worst:.1e}, in {elapsed:?}"
    );
}

#[test]
fn criterion_05_receiver_view_counting_bound_is_zero() {
    let report = lemma2_counting(3).unwrap();
    assert!(report.bound_bits.abs() < 1e-9, "bound {}", report.bound_bits);
    assert_eq!(report.image_size, 8u64.pow(4) / 2);

    let without = lemma2_counting_no_masking(3).unwrap();
    assert!(without.bound_bits > 0.0, "no-masking bound {}", without.bound_bits);
    println!(
        "acceptance 05 pass: view bound {:.1e} bits, image 2048, without bonding {:.3} bits",
        report.bound_bits, without.bound_bits
    );
}

#[test]
fn criterion_06_forged_superposition_leakage_under_bound() {
    let report = lemma3_verifier(3).unwrap();
    assert!(
        report.leakage_bits <= 5.0 / 8.0 + 1e-9,
        "leakage {} bits",
        report.leakage_bits
    );

    for class in &report.classes {
        let size = class.subgroup_size;
        let expect = (size as f64).log2() - 1.0;
        assert!(
            (class.survivor_entropy_bits - expect).abs() < 1e-9,
            "size {size}: entropy {}",
            class.survivor_entropy_bits
        );
        let nonzero: Vec<f64> = class
            .survivor_eigenvalues
            .iter()
            .copied()
            .filter(|ev| *ev > 1e-9)
            .collect();
        assert_eq!(nonzero.len() as u64, size / 2, "size {size} multiplicity");
        for ev in nonzero {
            assert!((ev - 2.0 / size as f64).abs() < 1e-9, "size {size} eigenvalue {ev}");
        }
    }
    println!(
        "acceptance 06 pass: leakage {:.4} <= 5/8 bits, {} classes with flat survivor spectra",
        report.leakage_bits,
        report.classes.len()
    );
}

#[test]
fn criterion_07_sender_gains_no_information_beyond_output() {
    for (n, m) in [(2usize, 1u32), (2, 2), (3, 1)] {
        let nn = 1u64 << m;
        for code in 0..nn.pow(n as u32) {
            let x: Vec<u64> = (0..n).map(|i| (code >> (m * i as u32)) & (nn - 1)).collect();
            let report = lemma4_verifier(&x, m).unwrap();
            assert_eq!(report.extra_information_bits, 0.0, "n={n} m={m} x={x:?}");
        }
    }
    println!("acceptance 07 pass: surplus information 0 exactly at (2,1), (2,2), (3,1)");
}

#[test]
fn criterion_08_collapse_probabilities_match_brute_force() {
    for d in 2..=6u32 {
        let md = Modulus::new(d).unwrap();
        for a in 0..md.size() {
            for c in 0..md.size() {
                assert_eq!(
                    prop2_probability(a, c, &md).count_in(&md),
                    prop2_count_bruteforce(a, c, &md).unwrap(),
                    "d={d} a={a} c={c}"
                );
            }
        }
    }
    println!("acceptance 08 pass: collapse counts exact for all (a, c) at d=2..6");
}

#[test]
fn criterion_09_detection_rates_match_analytic_values() {
    let params = ProtocolParams::new(2, 1).unwrap();

    let forgery = forgery_attack_alice(ForgeCase::SuperposeBoth, &params, 4096, 21).unwrap();
    assert_eq!(forgery.stats.analytic_rate, 1.0 - 1.0 / 16.0);
    assert!(
        forgery.stats.within_tolerance(),
        "forgery rate {} vs {} +- {}",
        forgery.stats.empirical_rate,
        forgery.stats.analytic_rate,
        forgery.stats.tolerance()
    );

    let intercept = intercept_resend_bob(InterceptMode::FourierBasis, &params, 4096, 22).unwrap();
    assert_eq!(intercept.analytic_rate, 1.0 - 1.0 / 16.0);
    assert!(
        intercept.within_tolerance(),
        "intercept rate {} vs {} +- {}",
        intercept.empirical_rate,
        intercept.analytic_rate,
        intercept.tolerance()
    );
    println!(
        "acceptance 09 pass: forgery {:.4} and intercept {:.4} within 4 sigma of 15/16",
        forgery.stats.empirical_rate, intercept.empirical_rate
    );
}

#[test]
fn criterion_10_measured_views_are_input_independent() {
    let params = ProtocolParams::new(1, 1).unwrap();
    let report = measurement_attack_bob(&params, 4096, 23).unwrap();
    assert!(
        report.all_pairs_within_threshold,
        "tv {} over threshold {}",
        report.tv_observed, report.tv_threshold
    );
    assert_eq!(report.exact_distributions_identical, Some(true));
    assert_eq!(report.stats.detections, 0);
    println!(
        "acceptance 10 pass: view tv {:.4} under noise floor {:.4}, exact distributions identical",
        report.tv_observed, report.tv_threshold
    );
}

#[test]
fn criterion_11_protocol_matrix_product_equals_classical() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1789);
    for trial in 0..50u64 {
        let k = rng.random_range(1..=3usize);
        let n = rng.random_range(1..=3usize);
        let c = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=2u32);
        let nn = 1u64 << m;
        let mut draw = |rows: usize, cols: usize| -> Vec<Vec<u64>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0..nn)).collect())
                .collect()
        };
        let input = MatrixInput::new(draw(k, n), draw(n, c), draw(k, c), m).unwrap();
        let outcome = run_matmul(&input, 5000 + trial).unwrap();
        assert_eq!(outcome.u, plain_matmul_oracle(&input), "trial {trial}");
    }
    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!("acceptance 11 pass: 50 random matrix products exact in {elapsed:?}");
}

#[test]
fn criterion_12_gate_counts_scale_quadratically() {
    for d in 2..=8u32 {
        assert_eq!(build_xor(d).gate_count(), d as usize);
    }
    for kind in [
        SemanticGateKind::Qft,
        SemanticGateKind::Rot,
        SemanticGateKind::Sum,
        SemanticGateKind::Mul,
    ] {
        let ratio = quadratic_fit_stability(kind);
        assert!(
            (1.0 / 1.2..=1.2).contains(&ratio),
            "{kind:?} quadratic fit ratio {ratio}"
        );
    }
    println!("acceptance 12 pass: xor count = d, quadratic fits stable within 20% for d=2..8");
}

// ======================================================================
// cross-checks used by the criteria
// ======================================================================

#[test]
fn pinned_answers_satisfy_their_defining_relations() {
    for name in ["table3", "table4"] {
        let fixture = by_name(name).unwrap();
        let md = fixture.params().register_modulus();
        for round in &fixture.rounds {
            let (r1, r2) = bond_coefficients(round.p, &round.c, &round.k, &md);
            assert_eq!(round.r[0], r1, "{name} r1");
            assert_eq!(round.r[1], r2, "{name} r2");
            assert_eq!(round.r[2], mod_inv(r1, &md).unwrap(), "{name} r3");
            assert_eq!(round.r[3], md.sub(round.c[0], md.mul(r2, round.r[2])), "{name} r4");
        }
    }
}
