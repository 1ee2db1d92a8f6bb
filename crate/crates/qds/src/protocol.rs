//! The signature protocol proper: key generation, public-key creation and
//! distribution (trusted center, distributed swap test, distributed symmetry
//! test), signing, verification tallies, and the threshold verdict ladder.
//!
//! A message is signed through *key columns*: each column owns one pair of
//! private keys `(k0, k1)` and signs one codeword bit. The single-bit protocol
//! uses `M` columns that all sign the same bit — exactly the repetition-code
//! special case of the multi-bit protocol, which assigns one column per
//! encoded bit.
//!
//! # Global key state
//!
//! [`GlobalKeyState`] tracks every public-key copy in circulation as a slot
//! `(column, bit, copy)` inside a simulated block. Honest blocks are exact
//! tensor products of `|f_k>` copies; a cheating sender may instead install
//! entangled blocks (see [`crate::adversary`]). Independent columns live in
//! separate blocks so the repudiation analysis stays exact without ever
//! materializing a state over all `2 M T n` qubits; fully entangled
//! cross-column states are possible but capped by the register limit.
//!
//! Slots are held by parties and measurement access is checked against the
//! holder. Verified keys are marked spent rather than erased, so experiments
//! can inspect post-states while reuse is still rejected.

use crate::eqtest::{self, EqTestError, TestOutcome};
use crate::owf::{self, CodeSpec, FamilyKind, FamilyParams, OwfError};
use crate::statevec::{measure_projector, Projector, PureState, StateError};
use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    EqTest(#[from] EqTestError),
    #[error(transparent)]
    Owf(#[from] OwfError),
    #[error("thresholds must satisfy 0 <= c1 < c2 < ... < cq < 1")]
    BadLadder,
    #[error(
        "{copies} copies x {qubits} qubits can reveal all {key_bits} key bits \
         (T*n >= L); enable holevo_override to run anyway"
    )]
    HolevoViolation {
        copies: usize,
        qubits: usize,
        key_bits: u32,
    },
    #[error("configuration: {0}")]
    BadConfig(String),
    #[error("slot {0} does not exist")]
    UnknownSlot(SlotId),
    #[error("slot {0} was already spent")]
    SpentSlot(SlotId),
    #[error("slot {slot} is held by {holder}, not {party}")]
    AccessDenied {
        slot: SlotId,
        holder: Holder,
        party: Holder,
    },
    #[error("slots {0} and {1} live in different blocks")]
    CrossBlockTest(SlotId, SlotId),
    #[error("recipient {recipient} holds no kept key for column {column} bit {bit}")]
    NoKeptKey {
        recipient: usize,
        column: usize,
        bit: u8,
    },
    #[error("distribution needs {needed} copies per key, found {got}")]
    SlotCount { needed: usize, got: usize },
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// Private keys and signing
// ---------------------------------------------------------------------------

/// One column's pair of L-bit private keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPair {
    pub k0: u64,
    pub k1: u64,
}

impl KeyPair {
    pub fn key(&self, bit: bool) -> u64 {
        if bit {
            self.k1
        } else {
            self.k0
        }
    }
}

/// Alice's `M` pairs of `L`-bit strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateKeySet {
    key_bits: u32,
    pairs: Vec<KeyPair>,
}

impl PrivateKeySet {
    pub fn new(key_bits: u32, pairs: Vec<KeyPair>) -> Self {
        Self { key_bits, pairs }
    }

    pub fn m(&self) -> usize {
        self.pairs.len()
    }

    pub fn key_bits(&self) -> u32 {
        self.key_bits
    }

    pub fn pairs(&self) -> &[KeyPair] {
        &self.pairs
    }

    pub fn key(&self, bit: bool, index: usize) -> u64 {
        self.pairs[index].key(bit)
    }

    /// Text format: header `keys M L family ...`, then `i hex(k0) hex(k1)`.
    pub fn to_file_string(&self, family: &FamilyParams) -> String {
        let mut out = format!(
            "keys {} {} {}\n",
            self.m(),
            self.key_bits,
            family.file_line()
        );
        for (i, pair) in self.pairs.iter().enumerate() {
            out.push_str(&format!("{} {:x} {:x}\n", i, pair.k0, pair.k1));
        }
        out
    }

    pub fn parse(text: &str) -> Result<(Self, FamilyParams), ProtocolError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(ProtocolError::Parse {
            line: 1,
            msg: "empty key file".into(),
        })?;
        let fields: Vec<&str> = header.splitn(4, ' ').collect();
        if fields.len() != 4 || fields[0] != "keys" {
            return Err(ProtocolError::Parse {
                line: 1,
                msg: "expected header `keys M L family ...`".into(),
            });
        }
        let m: usize = fields[1].parse().map_err(|_| ProtocolError::Parse {
            line: 1,
            msg: "bad M".into(),
        })?;
        let key_bits: u32 = fields[2].parse().map_err(|_| ProtocolError::Parse {
            line: 1,
            msg: "bad L".into(),
        })?;
        let family = FamilyParams::parse(fields[3])?;
        let mut pairs = vec![KeyPair { k0: 0, k1: 0 }; m];
        let mut seen = 0usize;
        for (lineno, line) in lines {
            let err = |msg: &str| ProtocolError::Parse {
                line: lineno + 1,
                msg: msg.into(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err("expected `i hex(k0) hex(k1)`"));
            }
            let i: usize = fields[0].parse().map_err(|_| err("bad index"))?;
            if i >= m {
                return Err(err("index out of range"));
            }
            let k0 = u64::from_str_radix(fields[1], 16).map_err(|_| err("bad k0"))?;
            let k1 = u64::from_str_radix(fields[2], 16).map_err(|_| err("bad k1"))?;
            pairs[i] = KeyPair { k0, k1 };
            seen += 1;
        }
        if seen != m {
            return Err(ProtocolError::Parse {
                line: 1,
                msg: format!("expected {m} key lines, found {seen}"),
            });
        }
        Ok((Self { key_bits, pairs }, family))
    }
}

/// Draws `m` pairs of independent uniform `key_bits`-bit strings.
pub fn keygen<R: Rng>(m: usize, key_bits: u32, rng: &mut R) -> PrivateKeySet {
    assert!(m >= 1 && (1..=64).contains(&key_bits));
    let mask = if key_bits == 64 {
        u64::MAX
    } else {
        (1u64 << key_bits) - 1
    };
    let pairs = (0..m)
        .map(|_| KeyPair {
            k0: rng.gen::<u64>() & mask,
            k1: rng.gen::<u64>() & mask,
        })
        .collect();
    PrivateKeySet { key_bits, pairs }
}

/// A signed message: the logical message bits, the signed codeword (one bit
/// per key column), and the revealed private key per column. Keys of the
/// complementary bit values are never part of this value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedMessage {
    pub message: Vec<bool>,
    pub codeword: Vec<bool>,
    pub revealed: Vec<u64>,
}

impl SignedMessage {
    /// The message bit of a single-bit signature.
    pub fn bit(&self) -> Option<bool> {
        if self.message.len() == 1 {
            Some(self.message[0])
        } else {
            None
        }
    }

    pub fn columns(&self) -> usize {
        self.codeword.len()
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "signature {} {}\n",
            bits_to_string(&self.message),
            self.columns()
        );
        for (i, (bit, key)) in self.codeword.iter().zip(self.revealed.iter()).enumerate() {
            out.push_str(&format!("{} {} {:x}\n", i, u8::from(*bit), key));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(ProtocolError::Parse {
            line: 1,
            msg: "empty signature file".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "signature" {
            return Err(ProtocolError::Parse {
                line: 1,
                msg: "expected header `signature <message> <columns>`".into(),
            });
        }
        let message = bits_from_string(fields[1]).ok_or(ProtocolError::Parse {
            line: 1,
            msg: "bad message bits".into(),
        })?;
        let columns: usize = fields[2].parse().map_err(|_| ProtocolError::Parse {
            line: 1,
            msg: "bad column count".into(),
        })?;
        let mut codeword = vec![false; columns];
        let mut revealed = vec![0u64; columns];
        let mut seen = 0usize;
        for (lineno, line) in lines {
            let err = |msg: &str| ProtocolError::Parse {
                line: lineno + 1,
                msg: msg.into(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err("expected `i bit hex(key)`"));
            }
            let i: usize = fields[0].parse().map_err(|_| err("bad column"))?;
            if i >= columns {
                return Err(err("column out of range"));
            }
            codeword[i] = match fields[1] {
                "0" => false,
                "1" => true,
                _ => return Err(err("bad bit")),
            };
            revealed[i] = u64::from_str_radix(fields[2], 16).map_err(|_| err("bad key"))?;
            seen += 1;
        }
        if seen != columns {
            return Err(ProtocolError::Parse {
                line: 1,
                msg: format!("expected {columns} column lines, found {seen}"),
            });
        }
        Ok(Self {
            message,
            codeword,
            revealed,
        })
    }
}

fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

fn bits_from_string(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Signs a single bit: reveals `(b, k_b^1, ..., k_b^M)` and nothing of the
/// `k_{1-b}` strings.
pub fn sign(bit: bool, keys: &PrivateKeySet) -> SignedMessage {
    SignedMessage {
        message: vec![bit],
        codeword: vec![bit; keys.m()],
        revealed: keys.pairs.iter().map(|p| p.key(bit)).collect(),
    }
}

/// Signs a multi-bit message through an error-correcting code: the codeword
/// comes from the code's generator and each codeword bit is signed by its
/// own key column. The single-bit protocol is the special case of a
/// repetition code.
pub fn sign_multibit(
    message: &[bool],
    message_code: &CodeSpec,
    keysets: &[PrivateKeySet],
) -> Result<SignedMessage, ProtocolError> {
    if message.len() != message_code.dimension() {
        return Err(ProtocolError::Mismatch(format!(
            "message has {} bits, code dimension is {}",
            message.len(),
            message_code.dimension()
        )));
    }
    if keysets.len() != message_code.length() {
        return Err(ProtocolError::Mismatch(format!(
            "{} keysets for a length-{} code",
            keysets.len(),
            message_code.length()
        )));
    }
    let mut packed = 0u64;
    for (i, b) in message.iter().enumerate() {
        if *b {
            packed |= 1 << i;
        }
    }
    let cw = message_code.encode(packed)?;
    let mut codeword = Vec::new();
    let mut revealed = Vec::new();
    for (pos, keyset) in keysets.iter().enumerate() {
        let bit = (cw >> pos) & 1 == 1;
        for pair in keyset.pairs() {
            codeword.push(bit);
            revealed.push(pair.key(bit));
        }
    }
    Ok(SignedMessage {
        message: message.to_vec(),
        codeword,
        revealed,
    })
}

/// Key columns of a multi-bit session, flattened in signing order.
pub fn flatten_keysets(keysets: &[PrivateKeySet]) -> Vec<KeyPair> {
    keysets
        .iter()
        .flat_map(|ks| ks.pairs().iter().copied())
        .collect()
}

// ---------------------------------------------------------------------------
// Thresholds and verdicts
// ---------------------------------------------------------------------------

/// Acceptance thresholds `0 = c0 <= c1 < c2 < ... < cq < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdLadder {
    levels: Vec<f64>,
}

impl ThresholdLadder {
    pub fn new(levels: Vec<f64>) -> Result<Self, ProtocolError> {
        if levels.is_empty() || !(levels[0] >= 0.0) {
            return Err(ProtocolError::BadLadder);
        }
        for w in levels.windows(2) {
            if !(w[0] < w[1]) {
                return Err(ProtocolError::BadLadder);
            }
        }
        if !(*levels.last().unwrap() < 1.0) {
            return Err(ProtocolError::BadLadder);
        }
        Ok(Self { levels })
    }

    pub fn two(c1: f64, c2: f64) -> Result<Self, ProtocolError> {
        Self::new(vec![c1, c2])
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of thresholds `q`; the top acceptance level is `q - 1`.
    pub fn q(&self) -> usize {
        self.levels.len()
    }

    pub fn c1(&self) -> f64 {
        self.levels[0]
    }

    pub fn top_threshold(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    pub fn top_level(&self) -> usize {
        self.q() - 1
    }
}

/// `r`-ACC (valid, transferable `r` more times) or REJ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept(usize),
    Reject,
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept(r) => write!(f, "{r}-ACC"),
            Verdict::Reject => write!(f, "REJ"),
        }
    }
}

/// Maps a failure tally to a verdict.
///
/// Boundary convention: `s <= c1 M` accepts at the top level, `s >= cq M`
/// rejects, interior bands `c_{r-1} M < s < c_r M` give `(q - r)`-ACC, and a
/// tie at an interior threshold resolves to the lower acceptance level.
pub fn verdict_from_tally(s: usize, m: usize, ladder: &ThresholdLadder) -> Verdict {
    let s = s as f64;
    let m = m as f64;
    if s <= ladder.c1() * m {
        return Verdict::Accept(ladder.top_level());
    }
    if s >= ladder.top_threshold() * m {
        return Verdict::Reject;
    }
    let q = ladder.q();
    let mut band = 2;
    for r in 2..=q {
        if s >= ladder.levels[r - 2] * m {
            band = r;
        }
    }
    Verdict::Accept(q - band)
}

/// Strict upper bound `(1 - delta^2)(M - G)/M` on admissible `c2`.
pub fn choose_c2_bound(delta: f64, guessed: f64, m: usize) -> f64 {
    assert!((0.0..=1.0).contains(&delta), "delta outside [0, 1]");
    assert!(
        (0.0..=m as f64).contains(&guessed),
        "expected guessed keys outside [0, M]"
    );
    (1.0 - delta * delta) * (m as f64 - guessed) / m as f64
}

/// Default rejection threshold: 80% of the admissible bound, computed with
/// the expected number of guessable keys (clamped to `M`).
pub fn default_c2(family: &FamilyParams, copies: usize, m: usize) -> f64 {
    let g = crate::analysis::expected_guessed_keys(family.key_bits, family.qubits, copies, 2 * m)
        .min(m as f64);
    0.8 * choose_c2_bound(family.delta, g, m)
}

/// Protocol parameters shared by all participants.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub family: FamilyParams,
    pub code: Option<CodeSpec>,
    /// Key pairs per message bit (the security parameter).
    pub m: usize,
    /// Copies of each public key in circulation (`T`).
    pub copies: usize,
    pub ladder: ThresholdLadder,
    pub holevo_override: bool,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.m == 0 {
            return Err(ProtocolError::BadConfig("M must be >= 1".into()));
        }
        if self.copies == 0 {
            return Err(ProtocolError::BadConfig("T must be >= 1".into()));
        }
        match self.family.kind {
            FamilyKind::CodeFingerprint => {
                let code = self.code.as_ref().ok_or_else(|| {
                    ProtocolError::BadConfig("fingerprint family needs a code".into())
                })?;
                if code.dimension() as u32 != self.family.key_bits {
                    return Err(ProtocolError::BadConfig(
                        "code dimension must equal key length".into(),
                    ));
                }
            }
            FamilyKind::SingleQubitRotation => {}
        }
        if !self.holevo_override && !self.family.within_holevo_budget(self.copies) {
            return Err(ProtocolError::HolevoViolation {
                copies: self.copies,
                qubits: self.family.qubits,
                key_bits: self.family.key_bits,
            });
        }
        Ok(())
    }

    pub fn code(&self) -> Option<&CodeSpec> {
        self.code.as_ref()
    }
}

// ---------------------------------------------------------------------------
// Global key state
// ---------------------------------------------------------------------------

/// Address of one public-key copy: key column, signed bit value, copy slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotId {
    pub column: usize,
    pub bit: u8,
    pub copy: usize,
}

impl SlotId {
    pub fn new(column: usize, bit: u8, copy: usize) -> Self {
        Self { column, bit, copy }
    }

    /// Register label of this slot inside its block.
    pub fn label(&self) -> String {
        format!("c{}b{}s{}", self.column, self.bit, self.copy)
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Who currently holds a public-key copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holder {
    Alice,
    Center,
    Eve,
    Recipient(usize),
    Discarded,
}

impl fmt::Display for Holder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holder::Alice => write!(f, "alice"),
            Holder::Center => write!(f, "center"),
            Holder::Eve => write!(f, "eve"),
            Holder::Recipient(r) => write!(f, "recipient{r}"),
            Holder::Discarded => write!(f, "discarded"),
        }
    }
}

struct SlotState {
    block: usize,
    holder: Holder,
    spent: bool,
}

struct KeyBlock {
    state: PureState,
    slots: Vec<SlotId>,
}

/// The joint (possibly entangled) state of all public-key copies plus any
/// ancilla the sender keeps, organized in independent blocks.
pub struct GlobalKeyState {
    blocks: Vec<KeyBlock>,
    slots: BTreeMap<SlotId, SlotState>,
    kept: BTreeMap<(usize, usize, u8), SlotId>,
}

impl GlobalKeyState {
    /// Builds the state from blocks. Each block's layout must contain one
    /// register named `slot.label()` per listed slot; additional registers
    /// (sender ancillas) are allowed and simply ride along.
    pub fn from_blocks(blocks: Vec<(PureState, Vec<SlotId>)>) -> Result<Self, ProtocolError> {
        let mut slot_map = BTreeMap::new();
        let mut stored = Vec::with_capacity(blocks.len());
        for (b, (state, slots)) in blocks.into_iter().enumerate() {
            for slot in &slots {
                if !state.layout().contains(&slot.label()) {
                    return Err(ProtocolError::UnknownSlot(*slot));
                }
                if slot_map
                    .insert(
                        *slot,
                        SlotState {
                            block: b,
                            holder: Holder::Alice,
                            spent: false,
                        },
                    )
                    .is_some()
                {
                    return Err(ProtocolError::Mismatch(format!("duplicate slot {slot}")));
                }
            }
            stored.push(KeyBlock { state, slots });
        }
        Ok(Self {
            blocks: stored,
            slots: slot_map,
            kept: BTreeMap::new(),
        })
    }

    /// All `(column, bit)` groups present, each with its copy slots in order.
    pub fn groups(&self) -> Vec<((usize, u8), Vec<SlotId>)> {
        let mut groups: BTreeMap<(usize, u8), Vec<SlotId>> = BTreeMap::new();
        for slot in self.slots.keys() {
            groups
                .entry((slot.column, slot.bit))
                .or_default()
                .push(*slot);
        }
        groups.into_iter().collect()
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn holder(&self, slot: SlotId) -> Result<Holder, ProtocolError> {
        Ok(self.slot_state(slot)?.holder)
    }

    pub fn set_holder(&mut self, slot: SlotId, holder: Holder) -> Result<(), ProtocolError> {
        self.slot_state_mut(slot)?.holder = holder;
        Ok(())
    }

    pub fn set_all_holders(&mut self, holder: Holder) {
        for state in self.slots.values_mut() {
            state.holder = holder;
        }
    }

    pub fn is_spent(&self, slot: SlotId) -> Result<bool, ProtocolError> {
        Ok(self.slot_state(slot)?.spent)
    }

    /// Registers `slot` as `recipient`'s kept verification key.
    pub fn assign_kept(&mut self, recipient: usize, slot: SlotId) -> Result<(), ProtocolError> {
        self.slot_state(slot)?;
        self.kept.insert((recipient, slot.column, slot.bit), slot);
        Ok(())
    }

    pub fn kept_slot(&self, recipient: usize, column: usize, bit: u8) -> Option<SlotId> {
        self.kept.get(&(recipient, column, bit)).copied()
    }

    /// The simulated block state containing `slot`.
    pub fn block_state(&self, slot: SlotId) -> Result<&PureState, ProtocolError> {
        let s = self.slot_state(slot)?;
        Ok(&self.blocks[s.block].state)
    }

    /// Block states with their slots, for dumps and inspection.
    pub fn iter_blocks(&self) -> impl Iterator<Item = (&PureState, &[SlotId])> {
        self.blocks.iter().map(|b| (&b.state, b.slots.as_slice()))
    }

    fn slot_state(&self, slot: SlotId) -> Result<&SlotState, ProtocolError> {
        self.slots
            .get(&slot)
            .ok_or(ProtocolError::UnknownSlot(slot))
    }

    fn slot_state_mut(&mut self, slot: SlotId) -> Result<&mut SlotState, ProtocolError> {
        self.slots
            .get_mut(&slot)
            .ok_or(ProtocolError::UnknownSlot(slot))
    }

    fn same_block(&self, slots: &[SlotId]) -> Result<usize, ProtocolError> {
        let first = self.slot_state(slots[0])?.block;
        for s in &slots[1..] {
            if self.slot_state(*s)?.block != first {
                return Err(ProtocolError::CrossBlockTest(slots[0], *s));
            }
        }
        Ok(first)
    }

    fn check_access(&self, party: Holder, slot: SlotId) -> Result<(), ProtocolError> {
        let holder = self.holder(slot)?;
        if holder != party {
            return Err(ProtocolError::AccessDenied {
                slot,
                holder,
                party,
            });
        }
        Ok(())
    }

    /// Swap test between two copies, collapsing the shared block.
    pub fn swap_test<R: Rng>(
        &mut self,
        a: SlotId,
        b: SlotId,
        rng: &mut R,
    ) -> Result<TestOutcome, ProtocolError> {
        let block = self.same_block(&[a, b])?;
        let outcome = eqtest::swap_test(&self.blocks[block].state, &a.label(), &b.label(), rng)?;
        self.blocks[block].state = outcome.post_state.clone();
        Ok(outcome)
    }

    /// Symmetry test over `s >= 2` copies, collapsing the shared block.
    pub fn symmetry_test<R: Rng>(
        &mut self,
        slots: &[SlotId],
        rng: &mut R,
    ) -> Result<TestOutcome, ProtocolError> {
        let block = self.same_block(slots)?;
        let labels: Vec<String> = slots.iter().map(|s| s.label()).collect();
        let refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
        let outcome = eqtest::symmetry_test(&self.blocks[block].state, &refs, rng)?;
        self.blocks[block].state = outcome.post_state.clone();
        Ok(outcome)
    }

    /// Verification test of `key` against a slot, collapsing its block.
    /// Does not touch holders or spent flags; callers enforce discipline.
    pub fn verify_slot<R: Rng>(
        &mut self,
        slot: SlotId,
        family: &FamilyParams,
        code: Option<&CodeSpec>,
        key: u64,
        rng: &mut R,
    ) -> Result<TestOutcome, ProtocolError> {
        let block = self.slot_state(slot)?.block;
        let outcome = eqtest::verify_key(
            &self.blocks[block].state,
            &slot.label(),
            family,
            code,
            key,
            rng,
        )?;
        self.blocks[block].state = outcome.post_state.clone();
        Ok(outcome)
    }

    /// Computational-basis measurement of a slot by `party`; access is
    /// rejected unless `party` holds the slot.
    pub fn measure_slot_computational<R: Rng>(
        &mut self,
        party: Holder,
        slot: SlotId,
        rng: &mut R,
    ) -> Result<Vec<bool>, ProtocolError> {
        self.check_access(party, slot)?;
        let block = self.slot_state(slot)?.block;
        let label = slot.label();
        let (bits, post) = self.blocks[block]
            .state
            .sample_computational(&[label.as_str()], rng)?;
        self.blocks[block].state = post;
        Ok(bits)
    }

    /// Measures a single-qubit slot in the basis rotated by `angle`; returns
    /// true when the outcome lies along the rotated |0>.
    pub fn measure_slot_rotated<R: Rng>(
        &mut self,
        party: Holder,
        slot: SlotId,
        angle: f64,
        rng: &mut R,
    ) -> Result<bool, ProtocolError> {
        self.check_access(party, slot)?;
        let block = self.slot_state(slot)?.block;
        let label = slot.label();
        if self.blocks[block].state.layout().width_of(&label)? != 1 {
            return Err(ProtocolError::Mismatch(
                "rotated measurement requires a 1-qubit slot".into(),
            ));
        }
        let projector = Projector::rank_one(
            &[label.as_str()],
            vec![
                Complex64::new(angle.cos(), 0.0),
                Complex64::new(angle.sin(), 0.0),
            ],
        )?;
        let outcome = measure_projector(&self.blocks[block].state, &projector, rng)?;
        self.blocks[block].state = outcome.post_state;
        Ok(outcome.passed)
    }
}

/// Honest public keys for arbitrary key columns: an exact tensor product of
/// `T` copies of `|f_{k_b}>` per column and bit value.
pub fn make_public_keys_for_columns(
    pairs: &[KeyPair],
    config: &ProtocolConfig,
) -> Result<GlobalKeyState, ProtocolError> {
    config.validate()?;
    let mut blocks = Vec::new();
    for (column, pair) in pairs.iter().enumerate() {
        for bit in 0..2u8 {
            let key = pair.key(bit == 1);
            let single = owf::eval_family(&config.family, config.code(), key)?;
            let mut slots = Vec::with_capacity(config.copies);
            let mut state: Option<PureState> = None;
            for copy in 0..config.copies {
                let slot = SlotId::new(column, bit, copy);
                let renamed = single.rename_register(owf::KEY_REGISTER, &slot.label())?;
                state = Some(match state {
                    None => renamed,
                    Some(s) => s.tensor(&renamed)?,
                });
                slots.push(slot);
            }
            blocks.push((state.unwrap(), slots));
        }
    }
    GlobalKeyState::from_blocks(blocks)
}

/// Honest public keys for a single-bit session.
pub fn make_public_keys(
    keys: &PrivateKeySet,
    config: &ProtocolConfig,
) -> Result<GlobalKeyState, ProtocolError> {
    if keys.m() != config.m {
        return Err(ProtocolError::Mismatch(format!(
            "key set has {} pairs, config expects {}",
            keys.m(),
            config.m
        )));
    }
    make_public_keys_for_columns(&keys.pairs, config)
}

// ---------------------------------------------------------------------------
// Distribution
// ---------------------------------------------------------------------------

/// Result of a key-distribution phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistributionOutcome {
    Completed,
    /// Some equality test failed; the sender is considered cheating and the
    /// whole protocol is abandoned.
    Aborted {
        column: usize,
        bit: u8,
        stage: &'static str,
    },
}

impl DistributionOutcome {
    pub fn completed(&self) -> bool {
        matches!(self, DistributionOutcome::Completed)
    }
}

/// Trusted-center distribution: the center swap-tests disjoint consecutive
/// copy pairs of every key on the (possibly entangled) state, aborts on any
/// failure, and otherwise forwards one copy per recipient.
pub fn trusted_center_distribute<R: Rng>(
    global: &mut GlobalKeyState,
    recipients: usize,
    rng: &mut R,
) -> Result<DistributionOutcome, ProtocolError> {
    if recipients == 0 {
        return Err(ProtocolError::BadConfig(
            "need at least one recipient".into(),
        ));
    }
    let groups = global.groups();
    for (_, slots) in &groups {
        if slots.len() < recipients {
            return Err(ProtocolError::SlotCount {
                needed: recipients,
                got: slots.len(),
            });
        }
    }
    for (_, slots) in &groups {
        for s in slots {
            global.set_holder(*s, Holder::Center)?;
        }
    }
    for ((column, bit), slots) in &groups {
        for pair in slots.chunks_exact(2) {
            let outcome = global.swap_test(pair[0], pair[1], rng)?;
            if !outcome.passed {
                return Ok(DistributionOutcome::Aborted {
                    column: *column,
                    bit: *bit,
                    stage: "center-swap",
                });
            }
        }
    }
    for (_, slots) in &groups {
        for (r, slot) in slots.iter().take(recipients).enumerate() {
            global.set_holder(*slot, Holder::Recipient(r))?;
            global.assign_kept(r, *slot)?;
        }
        for slot in slots.iter().skip(recipients) {
            global.set_holder(*slot, Holder::Discarded)?;
        }
    }
    Ok(DistributionOutcome::Completed)
}

/// Distributed swap test for two recipients with `T = 4` copies per key:
/// each recipient swap-tests their own two copies, both forward one test
/// copy, and a final swap test runs on the two forwarded copies. Any failure
/// aborts; test copies are discarded and kept copies retained.
pub fn distributed_swap_distribute<R: Rng>(
    global: &mut GlobalKeyState,
    rng: &mut R,
) -> Result<DistributionOutcome, ProtocolError> {
    let groups = global.groups();
    for (_, slots) in &groups {
        if slots.len() != 4 {
            return Err(ProtocolError::SlotCount {
                needed: 4,
                got: slots.len(),
            });
        }
    }
    for ((column, bit), slots) in &groups {
        // Slots: 0 = Bob kept, 1 = Bob test, 2 = Charlie kept, 3 = Charlie test.
        for (kept, test) in [(slots[0], slots[1]), (slots[2], slots[3])] {
            let outcome = global.swap_test(kept, test, rng)?;
            if !outcome.passed {
                return Ok(DistributionOutcome::Aborted {
                    column: *column,
                    bit: *bit,
                    stage: "own-swap",
                });
            }
        }
        let outcome = global.swap_test(slots[1], slots[3], rng)?;
        if !outcome.passed {
            return Ok(DistributionOutcome::Aborted {
                column: *column,
                bit: *bit,
                stage: "cross-swap",
            });
        }
    }
    for (_, slots) in &groups {
        global.set_holder(slots[0], Holder::Recipient(0))?;
        global.assign_kept(0, slots[0])?;
        global.set_holder(slots[2], Holder::Recipient(1))?;
        global.assign_kept(1, slots[2])?;
        global.set_holder(slots[1], Holder::Discarded)?;
        global.set_holder(slots[3], Holder::Discarded)?;
    }
    Ok(DistributionOutcome::Completed)
}

/// Distributed symmetry test for `t >= 2` recipients with `T = t (t + 1)`
/// copies per key. Recipient `r` holds slots `r(t+1) .. (r+1)(t+1)` of each
/// key: the first is kept for verification, the next `t - 1` are forwarded
/// (one to each other recipient), and the last is retained for the second
/// test. Each recipient first symmetry-tests all `t + 1` copies, then
/// symmetry-tests the `t` received-plus-retained test keys.
pub fn distributed_symmetry_distribute<R: Rng>(
    global: &mut GlobalKeyState,
    t: usize,
    rng: &mut R,
) -> Result<DistributionOutcome, ProtocolError> {
    if t < 2 {
        return Err(ProtocolError::BadConfig(
            "distributed symmetry test needs t >= 2 recipients".into(),
        ));
    }
    let per = t + 1;
    let groups = global.groups();
    for (_, slots) in &groups {
        if slots.len() != t * per {
            return Err(ProtocolError::SlotCount {
                needed: t * per,
                got: slots.len(),
            });
        }
    }
    for ((column, bit), slots) in &groups {
        for r in 0..t {
            let own: Vec<SlotId> = slots[r * per..(r + 1) * per].to_vec();
            let outcome = global.symmetry_test(&own, rng)?;
            if !outcome.passed {
                return Ok(DistributionOutcome::Aborted {
                    column: *column,
                    bit: *bit,
                    stage: "first-symmetry",
                });
            }
        }
        for r in 0..t {
            // Own retained test key plus the one forwarded by each other
            // recipient: sender r' addresses its m-th fellow (skipping
            // itself) with slot r'*(t+1) + 1 + m.
            let mut test_keys = vec![slots[r * per + t]];
            for sender in 0..t {
                if sender == r {
                    continue;
                }
                let rank = if r < sender { r } else { r - 1 };
                test_keys.push(slots[sender * per + 1 + rank]);
            }
            let outcome = global.symmetry_test(&test_keys, rng)?;
            if !outcome.passed {
                return Ok(DistributionOutcome::Aborted {
                    column: *column,
                    bit: *bit,
                    stage: "second-symmetry",
                });
            }
        }
    }
    for (_, slots) in &groups {
        for r in 0..t {
            let kept = slots[r * per];
            global.set_holder(kept, Holder::Recipient(r))?;
            global.assign_kept(r, kept)?;
            for slot in &slots[r * per + 1..(r + 1) * per] {
                global.set_holder(*slot, Holder::Discarded)?;
            }
        }
    }
    Ok(DistributionOutcome::Completed)
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// A recipient's count of failed key verifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecipientTally {
    pub recipient: usize,
    pub s: usize,
    pub m: usize,
}

impl RecipientTally {
    /// `recipient=<id> s=<int> M=<int> verdict=<r-ACC|REJ>`
    pub fn report_line(&self, verdict: Verdict) -> String {
        format!(
            "recipient={} s={} M={} verdict={}",
            self.recipient, self.s, self.m, verdict
        )
    }
}

/// Checks every revealed key against the recipient's kept copies, counts
/// failures, and maps the tally through the verdict ladder. All of the
/// recipient's kept keys (used and unused) are marked spent afterwards; a
/// second verification against the same registers is rejected.
pub fn verify<R: Rng>(
    global: &mut GlobalKeyState,
    recipient: usize,
    msg: &SignedMessage,
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<(RecipientTally, Verdict), ProtocolError> {
    if msg.revealed.len() != msg.codeword.len() {
        return Err(ProtocolError::Mismatch(
            "signature key count differs from codeword length".into(),
        ));
    }
    let columns = msg.columns();
    let mut s = 0usize;
    for (column, (bit, key)) in msg.codeword.iter().zip(msg.revealed.iter()).enumerate() {
        let bit = u8::from(*bit);
        let slot = global
            .kept_slot(recipient, column, bit)
            .ok_or(ProtocolError::NoKeptKey {
                recipient,
                column,
                bit,
            })?;
        if global.is_spent(slot)? {
            return Err(ProtocolError::SpentSlot(slot));
        }
        global.check_access(Holder::Recipient(recipient), slot)?;
        let outcome = global.verify_slot(slot, &config.family, config.code(), *key, rng)?;
        if !outcome.passed {
            s += 1;
        }
    }
    // Step 4: discard all used and unused keys.
    let kept: Vec<SlotId> = global
        .kept
        .iter()
        .filter(|((r, _, _), _)| *r == recipient)
        .map(|(_, slot)| *slot)
        .collect();
    for slot in kept {
        global.slot_state_mut(slot)?.spent = true;
    }
    let tally = RecipientTally {
        recipient,
        s,
        m: columns,
    };
    let verdict = verdict_from_tally(s, columns, &config.ladder);
    Ok((tally, verdict))
}
