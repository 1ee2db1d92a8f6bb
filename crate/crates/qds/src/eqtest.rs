//! Quantum equality and validity tests as exact two-outcome measurements.
//!
//! All three tests are realized as projective measurements rather than
//! explicit ancilla circuits; the outcome statistics are identical and the
//! pass post-states agree (projection onto the relevant subspace):
//!
//! * swap test — symmetric-subspace projector on two equal-width registers;
//!   for a product input `|psi>|phi>` the pass probability is
//!   `(1 + |<psi|phi>|^2) / 2`.
//! * key verification — projector `|f_k><f_k|` on one register; a pure input
//!   `phi` fails with probability `1 - |<phi|f_k>|^2`.
//! * symmetry test — projector onto the completely symmetric subspace of
//!   `s >= 2` registers; for `s = 2` this is exactly the swap projector.

use crate::owf::{eval_family, CodeSpec, FamilyParams, OwfError};
use crate::statevec::{measure_projector, MeasureOutcome, Projector, PureState, StateError};
use rand::Rng;
use thiserror::Error;

/// Outcome of an equality/validity test; see [`MeasureOutcome`].
pub type TestOutcome = MeasureOutcome;

#[derive(Debug, Error)]
pub enum EqTestError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Owf(#[from] OwfError),
    #[error("delta {0} outside [0, 1]")]
    DeltaRange(f64),
    #[error("symmetry test needs at least 2 registers, got {0}")]
    TooFewRegisters(usize),
}

/// Swap test between registers `reg_a` and `reg_b`.
pub fn swap_test<R: Rng>(
    state: &PureState,
    reg_a: &str,
    reg_b: &str,
    rng: &mut R,
) -> Result<TestOutcome, EqTestError> {
    check_equal_widths(state, &[reg_a, reg_b])?;
    let projector = Projector::symmetrizer(&[reg_a, reg_b]);
    Ok(measure_projector(state, &projector, rng)?)
}

/// Probability that a swap test on two states with overlap `delta` fails:
/// `(1 - delta^2) / 2`.
pub fn swap_fail_probability(delta: f64) -> Result<f64, EqTestError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(EqTestError::DeltaRange(delta));
    }
    Ok((1.0 - delta * delta) / 2.0)
}

/// Verification test: does register `reg` hold `|f_k>`?
///
/// On entangled inputs this measures the local projector `|f_k><f_k|`,
/// collapsing the global state, exactly as the uncompute-and-measure circuit
/// does to the register.
pub fn verify_key<R: Rng>(
    state: &PureState,
    reg: &str,
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    key: u64,
    rng: &mut R,
) -> Result<TestOutcome, EqTestError> {
    let target = eval_family(family, code, key)?;
    if state.layout().width_of(reg)? != target.layout().total_width() {
        return Err(StateError::WidthMismatch(reg.into(), crate::owf::KEY_REGISTER.into()).into());
    }
    let projector = Projector::rank_one(&[reg], target.amplitudes().to_vec())?;
    Ok(measure_projector(state, &projector, rng)?)
}

/// Test for complete symmetry of the `s >= 2` listed registers.
pub fn symmetry_test<R: Rng>(
    state: &PureState,
    regs: &[&str],
    rng: &mut R,
) -> Result<TestOutcome, EqTestError> {
    if regs.len() < 2 {
        return Err(EqTestError::TooFewRegisters(regs.len()));
    }
    check_equal_widths(state, regs)?;
    let projector = Projector::symmetrizer(regs);
    Ok(measure_projector(state, &projector, rng)?)
}

fn check_equal_widths(state: &PureState, regs: &[&str]) -> Result<(), EqTestError> {
    let w0 = state.layout().width_of(regs[0])?;
    for r in &regs[1..] {
        if state.layout().width_of(r)? != w0 {
            return Err(StateError::WidthMismatch(regs[0].into(), (*r).into()).into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::statevec::{pass_probability, Projector, RegisterLayout};
    use num_complex::Complex64;

    fn product_pair(a: &PureState, b: &PureState) -> PureState {
        a.rename_register("f", "x")
            .unwrap()
            .tensor(&b.rename_register("f", "y").unwrap())
            .unwrap()
    }

    #[test]
    fn swap_test_on_identical_states_always_passes() {
        let fam = FamilyParams::single_qubit_rotation(3).unwrap();
        let mut rng = stream_rng(1, 0);
        for k in 0..8 {
            let f = eval_family(&fam, None, k).unwrap();
            let s = product_pair(&f, &f);
            let out = swap_test(&s, "x", "y", &mut rng).unwrap();
            assert!(out.passed);
            assert!((out.pass_probability - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_test_orthogonal_states_pass_half() {
        let fam = FamilyParams::single_qubit_rotation(1).unwrap();
        let a = eval_family(&fam, None, 0).unwrap();
        let b = eval_family(&fam, None, 1).unwrap();
        let s = product_pair(&a, &b);
        let mut rng = stream_rng(2, 0);
        let out = swap_test(&s, "x", "y", &mut rng).unwrap();
        assert!((out.pass_probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn swap_test_matches_product_formula() {
        // delta = cos(pi/4): pass probability (1 + 1/2)/2 = 0.75.
        let fam = FamilyParams::single_qubit_rotation(2).unwrap();
        let a = eval_family(&fam, None, 0).unwrap();
        let b = eval_family(&fam, None, 1).unwrap();
        let s = product_pair(&a, &b);
        let mut rng = stream_rng(3, 0);
        let out = swap_test(&s, "x", "y", &mut rng).unwrap();
        assert!((out.pass_probability - 0.75).abs() < 1e-12);

        // 100 random product pairs.
        let mut rng = stream_rng(4, 0);
        let layout = RegisterLayout::new(vec![("f", 2)]).unwrap();
        for _ in 0..100 {
            let a = PureState::random(layout.clone(), &mut rng);
            let b = PureState::random(layout.clone(), &mut rng);
            let ov = a.inner_product(&b).unwrap().norm_sqr();
            let s = product_pair(&a, &b);
            let out = swap_test(&s, "x", "y", &mut rng).unwrap();
            assert!((out.pass_probability - (1.0 + ov) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn swap_fail_probability_formula() {
        assert_eq!(swap_fail_probability(1.0).unwrap(), 0.0);
        assert_eq!(swap_fail_probability(0.0).unwrap(), 0.5);
        assert!((swap_fail_probability(0.70711).unwrap() - 0.25).abs() < 1e-5);
        assert!(swap_fail_probability(1.5).is_err());
    }

    #[test]
    fn verify_key_statistics() {
        let fam = FamilyParams::single_qubit_rotation(2).unwrap();
        let mut rng = stream_rng(5, 0);
        // Eigenstate passes surely.
        let f1 = eval_family(&fam, None, 1).unwrap();
        let out = verify_key(&f1, "f", &fam, None, 1, &mut rng).unwrap();
        assert!(out.passed && (out.pass_probability - 1.0).abs() < 1e-12);
        // Orthogonal state never passes: |f_2> = |1> is orthogonal to |f_0>.
        let f2 = eval_family(&fam, None, 2).unwrap();
        let out = verify_key(&f2, "f", &fam, None, 0, &mut rng).unwrap();
        assert!(!out.passed && out.pass_probability < 1e-12);
        // Overlap delta: pass probability delta^2 = 0.5.
        let out = verify_key(&f1, "f", &fam, None, 0, &mut rng).unwrap();
        assert!((out.pass_probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetry_test_s2_matches_swap_test() {
        let mut rng = stream_rng(6, 0);
        let layout = RegisterLayout::new(vec![("x", 1), ("y", 1)]).unwrap();
        for _ in 0..100 {
            let s = PureState::random(layout.clone(), &mut rng);
            let p_swap = pass_probability(&s, &Projector::symmetrizer(&["x", "y"])).unwrap();
            let out = symmetry_test(&s, &["x", "y"], &mut rng).unwrap();
            assert!((out.pass_probability - p_swap).abs() < 1e-12);
        }
    }

    #[test]
    fn product_power_always_passes_symmetry() {
        let mut rng = stream_rng(7, 0);
        let layout = RegisterLayout::new(vec![("f", 1)]).unwrap();
        for _ in 0..20 {
            let psi = PureState::random(layout.clone(), &mut rng);
            let s = psi
                .rename_register("f", "a")
                .unwrap()
                .tensor(&psi.rename_register("f", "b").unwrap())
                .unwrap()
                .tensor(&psi.rename_register("f", "c").unwrap())
                .unwrap();
            let out = symmetry_test(&s, &["a", "b", "c"], &mut rng).unwrap();
            assert!(out.passed);
            assert!((out.pass_probability - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_test_001_matches_matrix_oracle() {
        // Independent oracle: the 8x8 symmetrizer matrix averaged over the 6
        // explicit permutation matrices of three qubits, applied to |001>.
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut matrix = vec![[0.0f64; 8]; 8];
        for perm in &perms {
            for col in 0..8usize {
                // Qubit q of the column index moves to position perm[q].
                let mut row = 0usize;
                for q in 0..3 {
                    let bit = (col >> (2 - q)) & 1;
                    row |= bit << (2 - perm[q]);
                }
                matrix[row][col] += 1.0 / 6.0;
            }
        }
        let input = 0b001usize;
        let mut projected = [0.0f64; 8];
        for r in 0..8 {
            projected[r] = matrix[r][input];
        }
        let oracle: f64 = projected.iter().map(|x| x * x).sum();
        assert!((oracle - 1.0 / 3.0).abs() < 1e-15);

        let layout = RegisterLayout::new(vec![("a", 1), ("b", 1), ("c", 1)]).unwrap();
        let s = PureState::basis_state(layout, input).unwrap();
        let mut rng = stream_rng(8, 0);
        let out = symmetry_test(&s, &["a", "b", "c"], &mut rng).unwrap();
        assert!((out.pass_probability - oracle).abs() < 1e-12);
    }

    #[test]
    fn symmetry_test_at_least_as_sensitive_as_embedded_swaps() {
        let mut rng = stream_rng(9, 0);
        let layout = RegisterLayout::new(vec![("f", 1)]).unwrap();
        for _ in 0..50 {
            let states: Vec<PureState> = (0..3)
                .map(|_| PureState::random(layout.clone(), &mut rng))
                .collect();
            let labels = ["a", "b", "c"];
            let mut joint: Option<PureState> = None;
            for (st, label) in states.iter().zip(labels.iter()) {
                let renamed = st.rename_register("f", label).unwrap();
                joint = Some(match joint {
                    None => renamed,
                    Some(j) => j.tensor(&renamed).unwrap(),
                });
            }
            let joint = joint.unwrap();
            let sym_fail =
                1.0 - pass_probability(&joint, &Projector::symmetrizer(&labels)).unwrap();
            for i in 0..3 {
                for j in (i + 1)..3 {
                    let pair_fail = 1.0
                        - pass_probability(
                            &joint,
                            &Projector::symmetrizer(&[labels[i], labels[j]]),
                        )
                        .unwrap();
                    assert!(sym_fail >= pair_fail - 1e-12);
                }
            }
        }
    }

    #[test]
    fn passed_symmetry_test_is_idempotent() {
        let mut rng = stream_rng(10, 0);
        let layout = RegisterLayout::new(vec![("a", 1), ("b", 1), ("c", 1)]).unwrap();
        for _ in 0..20 {
            let s = PureState::random(layout.clone(), &mut rng);
            let out = symmetry_test(&s, &["a", "b", "c"], &mut rng).unwrap();
            if out.passed {
                let again = symmetry_test(&out.post_state, &["a", "b", "c"], &mut rng).unwrap();
                assert!(again.passed);
                assert!((again.pass_probability - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entangled_verify_collapses_partner() {
        // (|f_0>|0> + |f_2>|1>)/sqrt2 with L=2: verifying key 0 on the first
        // register collapses the partner to |0>.
        let fam = FamilyParams::single_qubit_rotation(2).unwrap();
        let f0 = eval_family(&fam, None, 0).unwrap();
        let f2 = eval_family(&fam, None, 2).unwrap();
        let layout = RegisterLayout::new(vec![("x", 1), ("anc", 1)]).unwrap();
        let mut amps = vec![Complex64::new(0.0, 0.0); 4];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (j, a) in f0.amplitudes().iter().enumerate() {
            amps[j << 1] += a * h;
        }
        for (j, a) in f2.amplitudes().iter().enumerate() {
            amps[(j << 1) | 1] += a * h;
        }
        let s = PureState::from_amplitudes(layout, amps).unwrap();
        let mut rng = stream_rng(11, 0);
        let out = verify_key(&s, "x", &fam, None, 0, &mut rng).unwrap();
        assert!((out.pass_probability - 0.5).abs() < 1e-12);
        if out.passed {
            let (bits, _) = out
                .post_state
                .sample_computational(&["anc"], &mut rng)
                .unwrap();
            assert!(!bits[0]);
        }
    }
}
