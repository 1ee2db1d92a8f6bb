//! Attack engines: a forging Eve constrained to measurements on the
//! circulating public-key copies, and a repudiating sender who prepares
//! entangled or symmetric key states, with exact or Monte Carlo evaluation
//! of the success probability.
//!
//! Repudiation scale is handled structurally: the per-column slot states
//! (4-5 qubits per column for the single-qubit family) are analyzed exactly
//! and the resulting per-column outcome distributions are convolved across
//! the `M` columns. Fully entangled cross-column strategies are supported in
//! Monte Carlo mode but capped by the simulator's register limit.
//!
//! Monte Carlo trials are embarrassingly parallel: each trial owns its
//! generator stream (derived from the master seed by trial index) and its
//! session state, and only counts are aggregated.

use crate::analysis::{binomial_cdf_below, binomial_ci95, expected_guessed_keys};
use crate::eqtest::EqTestError;
use crate::owf::{self, CodeSpec, FamilyParams, OwfError};
use crate::protocol::{
    self, distributed_swap_distribute, keygen, sign, verify, GlobalKeyState, Holder, PrivateKeySet,
    ProtocolConfig, ProtocolError, SignedMessage, SlotId, Verdict,
};
use crate::report::fmt_sig12;
use crate::rng::stream_rng;
use crate::statevec::{Projector, PureState, RegisterLayout, StateError};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    EqTest(#[from] EqTestError),
    #[error(transparent)]
    Owf(#[from] OwfError),
    #[error("target bit must differ from the observed message bit")]
    SameBit,
    #[error("key enumeration over {0} bits is too large (limit 20)")]
    KeySpaceTooLarge(u32),
    #[error("strategy not supported here: {0}")]
    UnsupportedStrategy(String),
    #[error("exact convolution requires a strategy independent across key columns")]
    NotIndependent,
    #[error("cheat state spec is not normalizable")]
    Degenerate,
}

// ---------------------------------------------------------------------------
// Forging Eve
// ---------------------------------------------------------------------------

/// Measurement basis for one public-key copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureBasis {
    /// Full computational-basis readout of the copy's register.
    Computational,
    /// Single-qubit basis rotated by the angle (rotation family only).
    Rotated(f64),
}

/// What Eve does with the copies before guessing.
#[derive(Debug, Clone)]
pub enum ForgerStrategy {
    /// Uniform independent guesses for every unrevealed key.
    RandomGuess,
    /// Measure copy `c` of every key with `plan[c]` (when set), then output
    /// the maximum-likelihood key consistent with the outcomes, ties broken
    /// by lowest key value.
    MeasureThenGuess { plan: Vec<Option<MeasureBasis>> },
}

impl ForgerStrategy {
    pub fn measure_all_computational(copies: usize) -> Self {
        ForgerStrategy::MeasureThenGuess {
            plan: vec![Some(MeasureBasis::Computational); copies],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ForgerStrategy::RandomGuess => "random-guess",
            ForgerStrategy::MeasureThenGuess { .. } => "measure-then-guess",
        }
    }
}

/// One recorded measurement outcome.
#[derive(Debug, Clone)]
pub enum Observation {
    Computational(Vec<bool>),
    Rotated { angle: f64, along: bool },
}

/// Likelihood of `observation` given the key state `amps`.
fn observation_likelihood(observation: &Observation, amps: &[Complex64]) -> f64 {
    match observation {
        Observation::Computational(bits) => {
            let mut idx = 0usize;
            for b in bits {
                idx = (idx << 1) | usize::from(*b);
            }
            amps[idx].norm_sqr()
        }
        Observation::Rotated { angle, along } => {
            let p = (amps[0] * angle.cos() + amps[1] * angle.sin()).norm_sqr();
            if *along {
                p
            } else {
                1.0 - p
            }
        }
    }
}

/// Maximum-likelihood key given independent observations of its copies;
/// ties resolve to the lowest key value.
pub fn max_likelihood_key(observations: &[Observation], candidates: &[Vec<Complex64>]) -> u64 {
    let mut best_key = 0u64;
    let mut best = f64::MIN;
    for (key, amps) in candidates.iter().enumerate() {
        let mut lik = 1.0f64;
        for obs in observations {
            lik *= observation_likelihood(obs, amps);
        }
        if lik > best {
            best = lik;
            best_key = key as u64;
        }
    }
    best_key
}

fn candidate_states(
    family: &FamilyParams,
    code: Option<&CodeSpec>,
) -> Result<Vec<Vec<Complex64>>, AttackError> {
    if family.key_bits > 20 {
        return Err(AttackError::KeySpaceTooLarge(family.key_bits));
    }
    let mut out = Vec::with_capacity(1 << family.key_bits);
    for key in 0..(1u64 << family.key_bits) {
        out.push(owf::eval_family(family, code, key)?.amplitudes().to_vec());
    }
    Ok(out)
}

/// Eve's substitution: measures her copies of the `target_bit` keys per the
/// strategy (collapsing the global state), then emits a forged signed
/// message for `target_bit`. Only Eve-held registers may be touched and the
/// private keys are never read.
pub fn eve_guess<R: Rng>(
    global: &mut GlobalKeyState,
    observed: &SignedMessage,
    target_bit: bool,
    strategy: &ForgerStrategy,
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    rng: &mut R,
) -> Result<SignedMessage, AttackError> {
    match observed.bit() {
        Some(bit) if bit != target_bit => {}
        Some(_) => return Err(AttackError::SameBit),
        None => {
            return Err(AttackError::UnsupportedStrategy(
                "substitution targets single-bit messages".into(),
            ))
        }
    }
    let columns = observed.columns();
    let guesses = match strategy {
        ForgerStrategy::RandomGuess => {
            let mask = if family.key_bits == 64 {
                u64::MAX
            } else {
                (1u64 << family.key_bits) - 1
            };
            (0..columns).map(|_| rng.gen::<u64>() & mask).collect()
        }
        ForgerStrategy::MeasureThenGuess { plan } => {
            let candidates = candidate_states(family, code)?;
            let bit = u8::from(target_bit);
            let mut guesses = Vec::with_capacity(columns);
            for column in 0..columns {
                let mut observations = Vec::new();
                for (copy, basis) in plan.iter().enumerate() {
                    let Some(basis) = basis else { continue };
                    let slot = SlotId::new(column, bit, copy);
                    match basis {
                        MeasureBasis::Computational => {
                            let bits = global.measure_slot_computational(Holder::Eve, slot, rng)?;
                            observations.push(Observation::Computational(bits));
                        }
                        MeasureBasis::Rotated(angle) => {
                            let along =
                                global.measure_slot_rotated(Holder::Eve, slot, *angle, rng)?;
                            observations.push(Observation::Rotated {
                                angle: *angle,
                                along,
                            });
                        }
                    }
                }
                guesses.push(max_likelihood_key(&observations, &candidates));
            }
            guesses
        }
    };
    Ok(SignedMessage {
        message: vec![target_bit],
        codeword: vec![target_bit; columns],
        revealed: guesses,
    })
}

// ---------------------------------------------------------------------------
// Attack reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Forge,
    Repudiate,
    TwoGroup,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackKind::Forge => write!(f, "forge"),
            AttackKind::Repudiate => write!(f, "repudiate"),
            AttackKind::TwoGroup => write!(f, "two-group"),
        }
    }
}

/// Estimated success probability of an attack, with its confidence interval
/// and an optional analytic reference value.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub kind: AttackKind,
    /// `None` for exact computation.
    pub trials: Option<u64>,
    pub successes: Option<u64>,
    pub estimate: f64,
    pub ci95: (f64, f64),
    pub comparison_bound: Option<f64>,
    pub bound_ref: String,
    /// Extra `key=value` fields carried into the report line.
    pub extras: Vec<(String, String)>,
}

impl AttackReport {
    fn monte_carlo(kind: AttackKind, trials: u64, successes: u64) -> Self {
        let estimate = successes as f64 / trials as f64;
        Self {
            kind,
            trials: Some(trials),
            successes: Some(successes),
            estimate,
            ci95: binomial_ci95(successes, trials),
            comparison_bound: None,
            bound_ref: String::new(),
            extras: Vec::new(),
        }
    }

    fn exact(kind: AttackKind, probability: f64) -> Self {
        Self {
            kind,
            trials: None,
            successes: None,
            estimate: probability,
            ci95: (probability, probability),
            comparison_bound: None,
            bound_ref: String::new(),
            extras: Vec::new(),
        }
    }

    fn with_extra(mut self, key: &str, value: String) -> Self {
        self.extras.push((key.into(), value));
        self
    }

    /// `attack=<kind> trials=<n|exact> successes=<n|exact> estimate=<p>
    /// ci95=<lo>,<hi> bound=<b|none>` plus any extra fields.
    pub fn report_line(&self) -> String {
        let trials = self.trials.map_or("exact".to_string(), |t| t.to_string());
        let successes = self
            .successes
            .map_or("exact".to_string(), |s| s.to_string());
        let bound = self.comparison_bound.map_or("none".to_string(), fmt_sig12);
        let mut line = format!(
            "attack={} trials={} successes={} estimate={} ci95={},{} bound={}",
            self.kind,
            trials,
            successes,
            fmt_sig12(self.estimate),
            fmt_sig12(self.ci95.0),
            fmt_sig12(self.ci95.1),
            bound,
        );
        if !self.bound_ref.is_empty() {
            line.push_str(&format!(" bound_ref={}", self.bound_ref));
        }
        for (k, v) in &self.extras {
            line.push_str(&format!(" {k}={v}"));
        }
        line
    }
}

// ---------------------------------------------------------------------------
// Forgery experiment
// ---------------------------------------------------------------------------

/// Analytic reference for the forgery acceptance probability: each key Eve
/// failed to guess passes verification with probability `delta^2`, so the
/// tally behaves like `Binomial(M - G, 1 - delta^2)` and the recipient
/// accepts when it stays below `c2 M`. This models the information argument,
/// not any particular measurement, and ignores state damage from Eve's own
/// measurements.
fn forge_reference_bound(config: &ProtocolConfig) -> (f64, f64) {
    let m = config.m;
    let g = expected_guessed_keys(
        config.family.key_bits,
        config.family.qubits,
        config.copies,
        2 * m,
    );
    let wrong = m.saturating_sub(g.ceil() as usize);
    let fail_prob = 1.0 - config.family.delta * config.family.delta;
    let accept = binomial_cdf_below(wrong, fail_prob, config.ladder.top_threshold() * m as f64);
    (accept, g)
}

/// Full forging experiment. Per trial: Alice generates keys and honest
/// public-key copies, Eve intercepts every copy in transit and measures per
/// her strategy, Alice signs bit 0, Eve substitutes bit 1 with her guessed
/// keys, and Bob verifies against the copy he finally receives. Success is
/// any acceptance (0-ACC or better) of the forged bit.
pub fn forge_experiment(
    config: &ProtocolConfig,
    strategy: &ForgerStrategy,
    trials: u64,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    config.validate()?;
    if let ForgerStrategy::MeasureThenGuess { plan } = strategy {
        if plan.len() > config.copies {
            return Err(AttackError::UnsupportedStrategy(format!(
                "plan covers {} copies but only {} circulate",
                plan.len(),
                config.copies
            )));
        }
    }
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<u64, AttackError> {
            let mut rng = stream_rng(seed, trial + 1);
            let keys = keygen(config.m, config.family.key_bits, &mut rng);
            let mut global = protocol::make_public_keys(&keys, config)?;
            global.set_all_holders(Holder::Eve);
            let observed = sign(false, &keys);
            let forged = eve_guess(
                &mut global,
                &observed,
                true,
                strategy,
                &config.family,
                config.code(),
                &mut rng,
            )?;
            // Eve forwards the copies; Bob keeps copy 0 of every key.
            for column in 0..config.m {
                for bit in 0..2u8 {
                    let slot = SlotId::new(column, bit, 0);
                    global.set_holder(slot, Holder::Recipient(0))?;
                    global.assign_kept(0, slot)?;
                }
            }
            let (_, verdict) = verify(&mut global, 0, &forged, config, &mut rng)?;
            Ok(u64::from(verdict.accepted()))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let (bound, g) = forge_reference_bound(config);
    Ok(
        AttackReport::monte_carlo(AttackKind::Forge, trials, successes)
            .with_extra("strategy", strategy.name().into())
            .with_extra("note", "heuristic-lower-bound".into())
            .with_extra("key_bits", config.family.key_bits.to_string())
            .with_extra(
                "holevo_budget_bits",
                (config.copies * config.family.qubits).to_string(),
            )
            .with_extra("expected_guessed", fmt_sig12(g))
            .with_extra("delta", fmt_sig12(config.family.delta))
            .map_bound(bound, "binomial-model"),
    )
}

impl AttackReport {
    fn map_bound(mut self, bound: f64, reference: &str) -> Self {
        self.comparison_bound = Some(bound);
        self.bound_ref = reference.into();
        self
    }
}

// ---------------------------------------------------------------------------
// Cheating sender state construction
// ---------------------------------------------------------------------------

/// Reference to a single-copy state used inside a cheat spec.
#[derive(Debug, Clone)]
pub enum SingleState {
    /// The honest `|f_k>`.
    KeyState,
    /// The deterministic first orthogonal completion `|f_perp^0>`.
    Orthogonal,
    /// Explicit amplitudes over one copy register.
    Explicit(Vec<Complex64>),
}

/// Basis element for one (Bob, Charlie) pair of copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairBasis {
    /// `|f>|f>`
    KeyKey,
    /// `|f_perp^a>|f_perp^a'>`
    PerpPerp { a: usize, a2: usize },
    /// `(|f>|f_perp^a> + |f_perp^a>|f>)/sqrt(2)`
    Plus { a: usize },
    /// `(|f>|f_perp^a> - |f_perp^a>|f>)/sqrt(2)`
    Minus { a: usize },
}

/// One term of a kept/test pair decomposition.
#[derive(Debug, Clone, Copy)]
pub struct PairTerm {
    pub kept: PairBasis,
    pub test: PairBasis,
}

/// Per-column cheating state specification.
#[derive(Debug, Clone)]
pub enum CheatSpec {
    Honest,
    /// `psi` to the first party, `phi` to the others, superposed with the
    /// branch where the roles are exchanged. `sign = -1` is the
    /// antisymmetric combination, which on four slots equals the symmetric
    /// type-2 term `(|+>_K |->_T + |->_K |+>_T)/sqrt(2)`.
    PairSuperposition {
        psi: SingleState,
        phi: SingleState,
        sign: f64,
    },
    /// Superposition of kept/test pair-basis terms on four slots.
    PairCombination(Vec<(Complex64, PairTerm)>),
    /// Arbitrary explicit state. Registers `s0..s{T-1}` map to the copy
    /// slots; any other register rides along as the sender's ancilla.
    Explicit(PureState),
}

impl CheatSpec {
    /// Type-1 combination that crosses honest kept keys with a shared-plus
    /// pair: `|ff>_K |+>_T + |+>_K |ff>_T`. Passes every distribution test
    /// with certainty while leaving both recipients identical verification
    /// marginals.
    pub fn type1_crossed() -> Self {
        CheatSpec::PairCombination(vec![
            (
                Complex64::new(1.0, 0.0),
                PairTerm {
                    kept: PairBasis::KeyKey,
                    test: PairBasis::Plus { a: 0 },
                },
            ),
            (
                Complex64::new(1.0, 0.0),
                PairTerm {
                    kept: PairBasis::Plus { a: 0 },
                    test: PairBasis::KeyKey,
                },
            ),
        ])
    }

    /// The symmetric type-2 combination, carrying a pure `|->` on the test
    /// pair in each branch: `(|+>_K |->_T + |->_K |+>_T)/sqrt(2)`.
    pub fn type2_minus() -> Self {
        CheatSpec::PairSuperposition {
            psi: SingleState::KeyState,
            phi: SingleState::Orthogonal,
            sign: -1.0,
        }
    }

    pub fn symmetric_pair() -> Self {
        CheatSpec::PairSuperposition {
            psi: SingleState::KeyState,
            phi: SingleState::Orthogonal,
            sign: 1.0,
        }
    }
}

/// Which slot arrangement the cheat state is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotTopology {
    /// `copies` slots all routed through the trusted center.
    TrustedCenter { copies: usize },
    /// Four slots: Bob kept, Bob test, Charlie kept, Charlie test.
    DistributedSwap,
    /// Eleven slots: Bob holds five (kept, two per group test), Charlie and
    /// Diane three each (kept, send-to-Bob, retained).
    TwoGroup,
}

impl SlotTopology {
    pub fn slot_count(&self) -> usize {
        match self {
            SlotTopology::TrustedCenter { copies } => *copies,
            SlotTopology::DistributedSwap => 4,
            SlotTopology::TwoGroup => 11,
        }
    }

    /// Slot ranges per party, first party listed first.
    fn party_slots(&self) -> Vec<Vec<usize>> {
        match self {
            SlotTopology::TrustedCenter { copies } => (0..*copies).map(|c| vec![c]).collect(),
            SlotTopology::DistributedSwap => vec![vec![0, 1], vec![2, 3]],
            SlotTopology::TwoGroup => {
                vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7], vec![8, 9, 10]]
            }
        }
    }
}

/// Alice's cheating strategy: one state spec per key column of the signed
/// bit. With `independent_across_indices` the columns are separate blocks
/// and the exact convolution applies; otherwise all columns share one block
/// (subject to the register limit).
#[derive(Debug, Clone)]
pub struct AliceStrategy {
    pub specs: Vec<CheatSpec>,
    pub independent_across_indices: bool,
}

impl AliceStrategy {
    pub fn honest(m: usize) -> Self {
        Self::uniform(CheatSpec::Honest, m)
    }

    pub fn uniform(spec: CheatSpec, m: usize) -> Self {
        Self {
            specs: vec![spec; m],
            independent_across_indices: true,
        }
    }

    /// First `affected` columns get `spec`, the rest stay honest.
    pub fn with_affected(spec: CheatSpec, affected: usize, m: usize) -> Self {
        let mut specs = vec![spec; affected.min(m)];
        specs.resize(m, CheatSpec::Honest);
        Self {
            specs,
            independent_across_indices: true,
        }
    }

    pub fn symmetric_pair(m: usize) -> Self {
        Self::uniform(CheatSpec::symmetric_pair(), m)
    }

    pub fn type2_minus(affected: usize, m: usize) -> Self {
        Self::with_affected(CheatSpec::type2_minus(), affected, m)
    }

    pub fn type1_crossed(m: usize) -> Self {
        Self::uniform(CheatSpec::type1_crossed(), m)
    }
}

/// Deterministic orthonormal completion of `f`: Gram-Schmidt over the
/// computational basis, keeping residuals in index order.
pub fn orthogonal_basis(f: &[Complex64]) -> Vec<Vec<Complex64>> {
    let dim = f.len();
    let mut basis: Vec<Vec<Complex64>> = vec![f.to_vec()];
    let mut out = Vec::new();
    for i in 0..dim {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[i] = Complex64::new(1.0, 0.0);
        for b in &basis {
            let ip: Complex64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
            for (vj, bj) in v.iter_mut().zip(b.iter()) {
                *vj -= ip * bj;
            }
        }
        let n2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if n2 > 1e-18 {
            let scale = 1.0 / n2.sqrt();
            for x in v.iter_mut() {
                *x *= scale;
            }
            basis.push(v.clone());
            out.push(v);
        }
        if out.len() == dim - 1 {
            break;
        }
    }
    out
}

fn single_state_amps(
    which: &SingleState,
    f: &[Complex64],
    perp: &[Vec<Complex64>],
) -> Result<Vec<Complex64>, AttackError> {
    match which {
        SingleState::KeyState => Ok(f.to_vec()),
        SingleState::Orthogonal => Ok(perp[0].clone()),
        SingleState::Explicit(v) => {
            if v.len() != f.len() {
                return Err(AttackError::UnsupportedStrategy(
                    "explicit single state has the wrong dimension".into(),
                ));
            }
            Ok(v.clone())
        }
    }
}

/// Kronecker product of single-copy amplitude vectors, first factor most
/// significant.
fn kron_all(factors: &[&[Complex64]]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(1.0, 0.0)];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for a in &out {
            for b in *f {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// Pair-basis state over two copies, first ket most significant.
fn pair_basis_amps(
    basis: PairBasis,
    f: &[Complex64],
    perp: &[Vec<Complex64>],
) -> Result<Vec<Complex64>, AttackError> {
    let pick = |a: usize| -> Result<&Vec<Complex64>, AttackError> {
        perp.get(a).ok_or_else(|| {
            AttackError::UnsupportedStrategy(format!("orthogonal index {a} out of range"))
        })
    };
    match basis {
        PairBasis::KeyKey => Ok(kron_all(&[f, f])),
        PairBasis::PerpPerp { a, a2 } => Ok(kron_all(&[pick(a)?, pick(a2)?])),
        PairBasis::Plus { a } | PairBasis::Minus { a } => {
            let g = pick(a)?;
            let fg = kron_all(&[f, g]);
            let gf = kron_all(&[g, f]);
            let sign = if matches!(basis, PairBasis::Plus { .. }) {
                1.0
            } else {
                -1.0
            };
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            Ok(fg
                .iter()
                .zip(gf.iter())
                .map(|(x, y)| (x + sign * y) * scale)
                .collect())
        }
    }
}

/// Builds one column's slot state for the given topology. Register labels
/// are the actual slot labels of `(column, bit)`; explicit-spec ancilla
/// registers are made column-unique.
pub fn build_column_state(
    spec: &CheatSpec,
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    key: u64,
    column: usize,
    bit: u8,
    topology: SlotTopology,
) -> Result<PureState, AttackError> {
    let n = family.qubits;
    let count = topology.slot_count();
    let labels: Vec<String> = (0..count)
        .map(|c| SlotId::new(column, bit, c).label())
        .collect();
    let f = owf::eval_family(family, code, key)?.amplitudes().to_vec();
    let perp = orthogonal_basis(&f);

    let raw: Vec<Complex64> = match spec {
        CheatSpec::Honest => {
            let factors: Vec<&[Complex64]> = (0..count).map(|_| f.as_slice()).collect();
            kron_all(&factors)
        }
        CheatSpec::PairSuperposition { psi, phi, sign } => {
            let psi = single_state_amps(psi, &f, &perp)?;
            let phi = single_state_amps(phi, &f, &perp)?;
            let parties = topology.party_slots();
            if parties.len() < 2 {
                return Err(AttackError::UnsupportedStrategy(
                    "pair superposition needs at least two parties".into(),
                ));
            }
            let branch = |first_gets_psi: bool| -> Vec<Complex64> {
                let mut per_slot: Vec<&[Complex64]> = vec![&f; count];
                for (p, slots) in parties.iter().enumerate() {
                    let state = if (p == 0) == first_gets_psi {
                        psi.as_slice()
                    } else {
                        phi.as_slice()
                    };
                    for &s in slots {
                        per_slot[s] = state;
                    }
                }
                kron_all(&per_slot)
            };
            let b1 = branch(true);
            let b2 = branch(false);
            b1.iter()
                .zip(b2.iter())
                .map(|(x, y)| x + *sign * y)
                .collect()
        }
        CheatSpec::PairCombination(terms) => {
            if topology != SlotTopology::DistributedSwap {
                return Err(AttackError::UnsupportedStrategy(
                    "pair combinations are defined on the four-slot arrangement".into(),
                ));
            }
            // Kept pair = slots (0, 2), test pair = slots (1, 3).
            let dim = 1usize << (4 * n);
            let mask = (1usize << n) - 1;
            let mut acc = vec![Complex64::new(0.0, 0.0); dim];
            for (coeff, term) in terms {
                let kept = pair_basis_amps(term.kept, &f, &perp)?;
                let test = pair_basis_amps(term.test, &f, &perp)?;
                for (idx, slot) in acc.iter_mut().enumerate() {
                    let x0 = (idx >> (3 * n)) & mask;
                    let x1 = (idx >> (2 * n)) & mask;
                    let x2 = (idx >> n) & mask;
                    let x3 = idx & mask;
                    *slot += coeff * kept[(x0 << n) | x2] * test[(x1 << n) | x3];
                }
            }
            acc
        }
        CheatSpec::Explicit(state) => {
            let mut renamed = state.clone();
            for (reg, _) in state.layout().registers() {
                if let Some(idx) = reg
                    .strip_prefix('s')
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|i| *i < count)
                {
                    renamed = renamed.rename_register(reg, &labels[idx])?;
                } else {
                    renamed = renamed.rename_register(reg, &format!("{reg}_c{column}b{bit}"))?;
                }
            }
            for label in &labels {
                if !renamed.layout().contains(label) {
                    return Err(AttackError::UnsupportedStrategy(format!(
                        "explicit state misses slot register {label}"
                    )));
                }
            }
            return Ok(renamed);
        }
    };

    let norm2: f64 = raw.iter().map(|a| a.norm_sqr()).sum();
    if norm2 < 1e-12 {
        return Err(AttackError::Degenerate);
    }
    let scale = 1.0 / norm2.sqrt();
    let amps: Vec<Complex64> = raw.iter().map(|a| a * scale).collect();
    let layout = RegisterLayout::new(labels.iter().map(|l| (l.clone(), n)).collect::<Vec<_>>())?;
    Ok(PureState::from_amplitudes(layout, amps)?)
}

/// Builds the global key state a cheating Alice hands out for the signed
/// bit's columns. Honest columns of the unsigned bit pass every test with
/// probability 1 and are never verified, so they are not materialized.
pub fn build_cheat_state(
    strategy: &AliceStrategy,
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    keys: &PrivateKeySet,
    bit: bool,
    topology: SlotTopology,
) -> Result<GlobalKeyState, AttackError> {
    if strategy.specs.len() != keys.m() {
        return Err(AttackError::UnsupportedStrategy(format!(
            "{} specs for {} key columns",
            strategy.specs.len(),
            keys.m()
        )));
    }
    let b = u8::from(bit);
    let count = topology.slot_count();
    let mut blocks = Vec::new();
    let mut joint: Option<PureState> = None;
    let mut joint_slots = Vec::new();
    for (column, spec) in strategy.specs.iter().enumerate() {
        let key = keys.key(bit, column);
        let state = build_column_state(spec, family, code, key, column, b, topology)?;
        let slots: Vec<SlotId> = (0..count).map(|c| SlotId::new(column, b, c)).collect();
        if strategy.independent_across_indices {
            blocks.push((state, slots));
        } else {
            joint = Some(match joint {
                None => state,
                Some(j) => j.tensor(&state)?,
            });
            joint_slots.extend(slots);
        }
    }
    if let Some(state) = joint {
        blocks.push((state, joint_slots));
    }
    Ok(GlobalKeyState::from_blocks(blocks)?)
}

// ---------------------------------------------------------------------------
// Exact per-column analysis
// ---------------------------------------------------------------------------

/// Joint unconditional probabilities of (all tests pass, recipient verify
/// outcomes) for one column.
#[derive(Debug, Clone)]
pub struct ColumnLaw {
    /// Probability that every distribution test on this column passes.
    pub pass_all: f64,
    /// Joint probabilities of each recipient-failure pattern, conditioned
    /// jointly on passing: entry `mask` has bit `r` set when recipient `r`
    /// fails verification. Entries sum to `pass_all`.
    pub outcomes: Vec<f64>,
}

fn project(state: &[Complex64], projector: &Projector, layout: &PureState) -> Vec<Complex64> {
    // Helper for unnormalized sequential projection; wraps the raw
    // amplitudes back into the layout of `layout`.
    let carrier = PureState::from_raw_unchecked(layout.layout().clone(), state.to_vec());
    projector.apply(&carrier).expect("projector application")
}

impl ColumnLaw {
    /// Sequentially projects the column state onto the all-pass branch of
    /// `tests`, then splits by the verification outcome of each kept slot.
    fn analyze(
        state: &PureState,
        tests: &[Projector],
        kept: &[(String, Vec<Complex64>)],
    ) -> Result<Self, AttackError> {
        let mut amps = state.amplitudes().to_vec();
        for test in tests {
            amps = project(&amps, test, state);
        }
        let pass_all: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let mut branches: Vec<Vec<Complex64>> = vec![amps];
        for (label, target) in kept {
            let projector = Projector::rank_one(&[label.as_str()], target.clone())?;
            let mut next = Vec::with_capacity(branches.len() * 2);
            for branch in &branches {
                let pass = project(branch, &projector, state);
                let fail: Vec<Complex64> =
                    branch.iter().zip(pass.iter()).map(|(a, p)| a - p).collect();
                next.push(pass);
                next.push(fail);
            }
            branches = next;
        }
        // Branch order: recipient 0 varies slowest with pass before fail, so
        // reindex into fail-bit masks.
        let recipients = kept.len();
        let mut outcomes = vec![0.0; 1 << recipients];
        for (i, branch) in branches.iter().enumerate() {
            let mut mask = 0usize;
            for r in 0..recipients {
                let fail_bit = (i >> (recipients - 1 - r)) & 1;
                if fail_bit == 1 {
                    mask |= 1 << r;
                }
            }
            outcomes[mask] = branch.iter().map(|a| a.norm_sqr()).sum();
        }
        // Branches below the impossible-branch tolerance are unreachable by
        // sampling; zero them so rounding residue cannot masquerade as a
        // cheating probability.
        let mut pass_all = pass_all;
        if pass_all < crate::statevec::IMPOSSIBLE_BRANCH_TOL {
            pass_all = 0.0;
        }
        for q in outcomes.iter_mut() {
            if *q < crate::statevec::IMPOSSIBLE_BRANCH_TOL {
                *q = 0.0;
            }
        }
        Ok(Self { pass_all, outcomes })
    }
}

/// The projector sequence of the distributed swap test on one column.
fn swap_test_sequence(column: usize, bit: u8) -> Vec<Projector> {
    let lbl = |copy: usize| SlotId::new(column, bit, copy).label();
    vec![
        Projector::symmetrizer(&[&lbl(0), &lbl(1)]),
        Projector::symmetrizer(&[&lbl(2), &lbl(3)]),
        Projector::symmetrizer(&[&lbl(1), &lbl(3)]),
    ]
}

/// The projector sequence of the two-group distribution on one column.
fn two_group_sequence(column: usize, bit: u8) -> Vec<Projector> {
    let lbl = |copy: usize| SlotId::new(column, bit, copy).label();
    vec![
        // First tests: Bob's five copies, Charlie's three, Diane's three.
        Projector::symmetrizer(&[&lbl(0), &lbl(1), &lbl(2), &lbl(3), &lbl(4)]),
        Projector::symmetrizer(&[&lbl(5), &lbl(6), &lbl(7)]),
        Projector::symmetrizer(&[&lbl(8), &lbl(9), &lbl(10)]),
        // Group R1 = {Bob, Charlie}: Bob tests his retained copy against
        // Charlie's forwarded one and vice versa.
        Projector::symmetrizer(&[&lbl(1), &lbl(6)]),
        Projector::symmetrizer(&[&lbl(7), &lbl(2)]),
        // Group R2 = {Bob, Diane}.
        Projector::symmetrizer(&[&lbl(3), &lbl(9)]),
        Projector::symmetrizer(&[&lbl(10), &lbl(4)]),
    ]
}

/// Convolves per-column outcome laws into the joint tally distribution.
/// `joint[i]` indexes tallies `(s_0, ..., s_{R-1})` in mixed radix `m + 1`.
fn convolve_columns(laws: &[ColumnLaw], recipients: usize) -> Vec<f64> {
    let m = laws.len();
    let side = m + 1;
    let size = side.pow(recipients as u32);
    let mut dp = vec![0.0f64; size];
    dp[0] = 1.0;
    let mut strides = vec![0usize; recipients];
    for (r, stride) in strides.iter_mut().enumerate() {
        *stride = side.pow(r as u32);
    }
    for law in laws {
        let mut next = vec![0.0f64; size];
        for (idx, p) in dp.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for (mask, q) in law.outcomes.iter().enumerate() {
                if *q == 0.0 {
                    continue;
                }
                let mut target = idx;
                for (r, stride) in strides.iter().enumerate() {
                    if (mask >> r) & 1 == 1 {
                        target += stride;
                    }
                }
                next[target] += p * q;
            }
        }
        dp = next;
    }
    dp
}

/// Exact joint law of the repudiation experiment for strategies independent
/// across columns.
#[derive(Debug, Clone)]
pub struct RepudiationAnalysis {
    pub m: usize,
    /// Probability that every distribution test passes.
    pub pass_all: f64,
    /// Joint probability of tallies `(s_bob, s_charlie)` and all tests
    /// passing: `joint[s_b * (m+1) + s_c]`.
    pub joint: Vec<f64>,
    /// Probability of passing all tests with one top-level acceptance and
    /// one rejection.
    pub p_cheat: f64,
}

fn verify_targets(
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    key: u64,
    column: usize,
    bit: u8,
    kept_copies: &[usize],
) -> Result<Vec<(String, Vec<Complex64>)>, AttackError> {
    let f = owf::eval_family(family, code, key)?.amplitudes().to_vec();
    Ok(kept_copies
        .iter()
        .map(|c| (SlotId::new(column, bit, *c).label(), f.clone()))
        .collect())
}

/// Exact convolution of the distributed-swap repudiation experiment.
pub fn repudiate_exact(
    config: &ProtocolConfig,
    strategy: &AliceStrategy,
    keys: &PrivateKeySet,
    bit: bool,
) -> Result<RepudiationAnalysis, AttackError> {
    if !strategy.independent_across_indices {
        return Err(AttackError::NotIndependent);
    }
    let b = u8::from(bit);
    let m = keys.m();
    let mut laws = Vec::with_capacity(m);
    for (column, spec) in strategy.specs.iter().enumerate() {
        let key = keys.key(bit, column);
        let state = build_column_state(
            spec,
            &config.family,
            config.code(),
            key,
            column,
            b,
            SlotTopology::DistributedSwap,
        )?;
        let tests = swap_test_sequence(column, b);
        let kept = verify_targets(&config.family, config.code(), key, column, b, &[0, 2])?;
        laws.push(ColumnLaw::analyze(&state, &tests, &kept)?);
    }
    let pass_all: f64 = laws.iter().map(|l| l.pass_all).product();
    let joint = convolve_columns(&laws, 2);
    let side = m + 1;
    let top = Verdict::Accept(config.ladder.top_level());
    let mut p_cheat = 0.0;
    for sb in 0..=m {
        let vb = protocol::verdict_from_tally(sb, m, &config.ladder);
        for sc in 0..=m {
            let vc = protocol::verdict_from_tally(sc, m, &config.ladder);
            let split =
                (vb == top && vc == Verdict::Reject) || (vc == top && vb == Verdict::Reject);
            if split {
                p_cheat += joint[sb + side * sc];
            }
        }
    }
    Ok(RepudiationAnalysis {
        m,
        pass_all,
        joint,
        p_cheat,
    })
}

/// Evaluation mode for the repudiation experiments.
#[derive(Debug, Clone, Copy)]
pub enum RepudiationMode {
    ExactConvolution,
    MonteCarlo { trials: u64 },
}

/// Repudiation experiment with the distributed swap test: Alice prepares the
/// strategy state, the distribution runs, she signs bit 0, and both
/// recipients verify. Success means every test passed yet one recipient
/// reached the top acceptance level while the other rejected.
pub fn repudiate_experiment(
    config: &ProtocolConfig,
    strategy: &AliceStrategy,
    mode: RepudiationMode,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    let bit = false;
    match mode {
        RepudiationMode::ExactConvolution => {
            let mut rng = stream_rng(seed, 0);
            let keys = keygen(config.m, config.family.key_bits, &mut rng);
            let analysis = repudiate_exact(config, strategy, &keys, bit)?;
            Ok(AttackReport::exact(AttackKind::Repudiate, analysis.p_cheat)
                .with_extra("mode", "exact".into())
                .with_extra("M", config.m.to_string())
                .with_extra("pass_all", fmt_sig12(analysis.pass_all)))
        }
        RepudiationMode::MonteCarlo { trials } => {
            let successes: u64 = (0..trials)
                .into_par_iter()
                .map(|trial| -> Result<u64, AttackError> {
                    let mut rng = stream_rng(seed, trial + 1);
                    let keys = keygen(config.m, config.family.key_bits, &mut rng);
                    let mut global = build_cheat_state(
                        strategy,
                        &config.family,
                        config.code(),
                        &keys,
                        bit,
                        SlotTopology::DistributedSwap,
                    )?;
                    if !distributed_swap_distribute(&mut global, &mut rng)?.completed() {
                        return Ok(0);
                    }
                    let msg = sign(bit, &keys);
                    let (_, vb) = verify(&mut global, 0, &msg, config, &mut rng)?;
                    let (_, vc) = verify(&mut global, 1, &msg, config, &mut rng)?;
                    let top = Verdict::Accept(config.ladder.top_level());
                    let split = (vb == top && vc == Verdict::Reject)
                        || (vc == top && vb == Verdict::Reject);
                    Ok(u64::from(split))
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(
                AttackReport::monte_carlo(AttackKind::Repudiate, trials, successes)
                    .with_extra("mode", "mc".into())
                    .with_extra("M", config.m.to_string()),
            )
        }
    }
}

/// Exact law of the two-group experiment.
#[derive(Debug, Clone)]
pub struct TwoGroupAnalysis {
    pub m: usize,
    pub pass_all: f64,
    /// `P(pass and |s_C - s_D| >= 2 Delta M)` for `Delta = c2 - c1`.
    pub violation_cd: f64,
    /// `P(pass and |s_B - s_X| >= Delta M)` for X = Charlie / Diane.
    pub violation_bc: f64,
    pub violation_bd: f64,
}

/// Exact convolution of the two-group distribution: Bob shares test keys
/// with Charlie's group and Diane's group separately; the tally gap between
/// Charlie and Diane is bounded by twice the single-group margin.
pub fn two_group_exact(
    config: &ProtocolConfig,
    strategy: &AliceStrategy,
    keys: &PrivateKeySet,
    bit: bool,
) -> Result<TwoGroupAnalysis, AttackError> {
    if !strategy.independent_across_indices {
        return Err(AttackError::NotIndependent);
    }
    let b = u8::from(bit);
    let m = keys.m();
    let mut laws = Vec::with_capacity(m);
    for (column, spec) in strategy.specs.iter().enumerate() {
        let key = keys.key(bit, column);
        let state = build_column_state(
            spec,
            &config.family,
            config.code(),
            key,
            column,
            b,
            SlotTopology::TwoGroup,
        )?;
        let tests = two_group_sequence(column, b);
        let kept = verify_targets(&config.family, config.code(), key, column, b, &[0, 5, 8])?;
        laws.push(ColumnLaw::analyze(&state, &tests, &kept)?);
    }
    let pass_all: f64 = laws.iter().map(|l| l.pass_all).product();
    let joint = convolve_columns(&laws, 3);
    let side = m + 1;
    let delta = config.ladder.top_threshold() - config.ladder.c1();
    let gap_cd = 2.0 * delta * m as f64;
    let gap_single = delta * m as f64;
    let mut violation_cd = 0.0;
    let mut violation_bc = 0.0;
    let mut violation_bd = 0.0;
    for sb in 0..=m {
        for sc in 0..=m {
            for sd in 0..=m {
                let p = joint[sb + side * sc + side * side * sd];
                if p == 0.0 {
                    continue;
                }
                if (sc as f64 - sd as f64).abs() >= gap_cd {
                    violation_cd += p;
                }
                if (sb as f64 - sc as f64).abs() >= gap_single {
                    violation_bc += p;
                }
                if (sb as f64 - sd as f64).abs() >= gap_single {
                    violation_bd += p;
                }
            }
        }
    }
    Ok(TwoGroupAnalysis {
        m,
        pass_all,
        violation_cd,
        violation_bc,
        violation_bd,
    })
}

/// Runs the two-group distribution on a built global state, sampling every
/// test. Kept keys go to recipients 0 (Bob), 1 (Charlie), 2 (Diane).
pub fn two_group_distribute<R: Rng>(
    global: &mut GlobalKeyState,
    rng: &mut R,
) -> Result<protocol::DistributionOutcome, AttackError> {
    let groups = global.groups();
    for (_, slots) in &groups {
        if slots.len() != 11 {
            return Err(AttackError::Protocol(ProtocolError::SlotCount {
                needed: 11,
                got: slots.len(),
            }));
        }
    }
    for ((column, bit), slots) in &groups {
        let tests: Vec<(Vec<usize>, &'static str)> = vec![
            (vec![0, 1, 2, 3, 4], "first-symmetry"),
            (vec![5, 6, 7], "first-symmetry"),
            (vec![8, 9, 10], "first-symmetry"),
            (vec![1, 6], "second-symmetry"),
            (vec![7, 2], "second-symmetry"),
            (vec![3, 9], "second-symmetry"),
            (vec![10, 4], "second-symmetry"),
        ];
        for (copies, stage) in tests {
            let ids: Vec<SlotId> = copies.iter().map(|c| slots[*c]).collect();
            let outcome = global.symmetry_test(&ids, rng)?;
            if !outcome.passed {
                return Ok(protocol::DistributionOutcome::Aborted {
                    column: *column,
                    bit: *bit,
                    stage,
                });
            }
        }
    }
    for (_, slots) in &groups {
        for (r, kept) in [(0usize, slots[0]), (1, slots[5]), (2, slots[8])] {
            global.set_holder(kept, Holder::Recipient(r))?;
            global.assign_kept(r, kept)?;
        }
        for c in [1, 2, 3, 4, 6, 7, 9, 10] {
            global.set_holder(slots[c], Holder::Discarded)?;
        }
    }
    Ok(protocol::DistributionOutcome::Completed)
}

/// Two-group experiment: exact or Monte Carlo estimate of the probability
/// that all tests pass yet Charlie's and Diane's tallies differ by at least
/// `2 (c2 - c1) M`.
pub fn two_group_experiment(
    config: &ProtocolConfig,
    strategy: &AliceStrategy,
    mode: RepudiationMode,
    seed: u64,
) -> Result<AttackReport, AttackError> {
    let bit = false;
    match mode {
        RepudiationMode::ExactConvolution => {
            let mut rng = stream_rng(seed, 0);
            let keys = keygen(config.m, config.family.key_bits, &mut rng);
            let analysis = two_group_exact(config, strategy, &keys, bit)?;
            let bound = 2.0 * analysis.violation_bc.max(analysis.violation_bd);
            Ok(
                AttackReport::exact(AttackKind::TwoGroup, analysis.violation_cd)
                    .map_bound(bound, "2x-max-single-group")
                    .with_extra("mode", "exact".into())
                    .with_extra("M", config.m.to_string())
                    .with_extra("pass_all", fmt_sig12(analysis.pass_all))
                    .with_extra("violation_bc", fmt_sig12(analysis.violation_bc))
                    .with_extra("violation_bd", fmt_sig12(analysis.violation_bd)),
            )
        }
        RepudiationMode::MonteCarlo { trials } => {
            let delta = config.ladder.top_threshold() - config.ladder.c1();
            let gap = 2.0 * delta * config.m as f64;
            let successes: u64 = (0..trials)
                .into_par_iter()
                .map(|trial| -> Result<u64, AttackError> {
                    let mut rng = stream_rng(seed, trial + 1);
                    let keys = keygen(config.m, config.family.key_bits, &mut rng);
                    let mut global = build_cheat_state(
                        strategy,
                        &config.family,
                        config.code(),
                        &keys,
                        bit,
                        SlotTopology::TwoGroup,
                    )?;
                    if !two_group_distribute(&mut global, &mut rng)?.completed() {
                        return Ok(0);
                    }
                    let msg = sign(bit, &keys);
                    let (tc, _) = verify(&mut global, 1, &msg, config, &mut rng)?;
                    let (td, _) = verify(&mut global, 2, &msg, config, &mut rng)?;
                    let diff = (tc.s as f64 - td.s as f64).abs();
                    Ok(u64::from(diff >= gap))
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(
                AttackReport::monte_carlo(AttackKind::TwoGroup, trials, successes)
                    .with_extra("mode", "mc".into())
                    .with_extra("M", config.m.to_string()),
            )
        }
    }
}
