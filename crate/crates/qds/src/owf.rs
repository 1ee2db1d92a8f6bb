//! Quantum one-way function families `k -> |f_k>` with certified pairwise
//! overlap bounds, plus the binary linear code machinery behind the
//! fingerprint family.
//!
//! Two families are provided:
//!
//! * single-qubit rotation: `|f_j> = cos(j*theta)|0> + sin(j*theta)|1>` with
//!   `theta = pi / 2^L`, one qubit per key, overlap bound `cos(theta)`.
//! * code fingerprint: `|f_k> = (1/sqrt(Nc)) sum_i |i>|E(k)_i>` for a binary
//!   linear `[Nc, K]` code `E`, giving overlap `1 - d_H(E(k), E(k'))/Nc`.
//!
//! Private keys are bit strings stored in `u64`, so `L <= 64` throughout
//! (`L <= 26` for the rotation family, where `cos(pi/2^L)` must stay strictly
//! below 1 in f64).

use crate::statevec::{PureState, RegisterLayout, StateError};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Register label used for states produced by [`eval_family`].
pub const KEY_REGISTER: &str = "f";

/// Largest rotation-family key length with `cos(pi/2^L) < 1` in f64.
pub const MAX_ROTATION_BITS: u32 = 26;

/// Largest code dimension for exhaustive distance certification.
pub const MAX_EXHAUSTIVE_DIMENSION: usize = 16;

#[derive(Debug, Error)]
pub enum OwfError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("key length {0} outside supported range {1}..={2}")]
    KeyLength(u32, u32, u32),
    #[error("key {key:#x} does not fit in {bits} bits")]
    KeyRange { key: u64, bits: u32 },
    #[error("code fingerprint family needs a code")]
    MissingCode,
    #[error("code dimension {0} does not match key length {1}")]
    CodeKeyMismatch(usize, u32),
    #[error("code length {0} outside supported range 1..=64")]
    CodeLength(usize),
    #[error("code dimension {dimension} invalid for length {length}")]
    CodeDimension { dimension: usize, length: usize },
    #[error("generator rows are linearly dependent over GF(2)")]
    SingularGenerator,
    #[error("message {message:#x} does not fit in {bits} code dimension bits")]
    MessageRange { message: u64, bits: usize },
    #[error("declared minimum distance {declared} but found codeword of weight {found}")]
    WrongMinDistance { declared: usize, found: usize },
    #[error("exhaustive certification limited to dimension <= {0}")]
    ExhaustiveTooLarge(usize),
    #[error("delta {0} outside [0, 1)")]
    DeltaRange(f64),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Binary linear `[length, dimension]` code given by generator rows.
///
/// Coordinate `i` of a codeword is bit `i` of the `u64`; row strings in the
/// file format list coordinate 0 first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSpec {
    length: usize,
    rows: Vec<u64>,
    min_distance: Option<usize>,
}

impl CodeSpec {
    pub fn new(length: usize, rows: Vec<u64>) -> Result<Self, OwfError> {
        if length == 0 || length > 64 {
            return Err(OwfError::CodeLength(length));
        }
        if rows.is_empty() || rows.len() > length {
            return Err(OwfError::CodeDimension {
                dimension: rows.len(),
                length,
            });
        }
        let mask = mask_bits(length as u32);
        if rows.iter().any(|r| r & !mask != 0) {
            return Err(OwfError::CodeLength(length));
        }
        if gf2_rank(&rows) != rows.len() {
            return Err(OwfError::SingularGenerator);
        }
        Ok(Self {
            length,
            rows,
            min_distance: None,
        })
    }

    /// Repetition code `[length, 1]`.
    pub fn repetition(length: usize) -> Result<Self, OwfError> {
        let mut code = Self::new(length, vec![mask_bits(length as u32)])?;
        code.min_distance = Some(length);
        Ok(code)
    }

    /// Uniformly random generator rows, resampled until full rank.
    pub fn random<R: Rng>(length: usize, dimension: usize, rng: &mut R) -> Result<Self, OwfError> {
        if length == 0 || length > 64 {
            return Err(OwfError::CodeLength(length));
        }
        if dimension == 0 || dimension > length {
            return Err(OwfError::CodeDimension { dimension, length });
        }
        let mask = mask_bits(length as u32);
        loop {
            let rows: Vec<u64> = (0..dimension).map(|_| rng.gen::<u64>() & mask).collect();
            if gf2_rank(&rows) == dimension {
                return Self::new(length, rows);
            }
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    pub fn generator_rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn min_distance(&self) -> Option<usize> {
        self.min_distance
    }

    /// GF(2) product of the message with the generator rows; linear by
    /// construction.
    pub fn encode(&self, message: u64) -> Result<u64, OwfError> {
        if self.dimension() < 64 && message >> self.dimension() != 0 {
            return Err(OwfError::MessageRange {
                message,
                bits: self.dimension(),
            });
        }
        let mut cw = 0u64;
        for (i, row) in self.rows.iter().enumerate() {
            if (message >> i) & 1 == 1 {
                cw ^= row;
            }
        }
        Ok(cw)
    }

    /// Minimum weight over all nonzero codewords, by exhaustive scan.
    pub fn min_distance_exhaustive(&self) -> Result<usize, OwfError> {
        if self.dimension() > MAX_EXHAUSTIVE_DIMENSION {
            return Err(OwfError::ExhaustiveTooLarge(MAX_EXHAUSTIVE_DIMENSION));
        }
        let mut best = self.length;
        for m in 1..(1u64 << self.dimension()) {
            let w = self.encode(m)?.count_ones() as usize;
            best = best.min(w);
        }
        Ok(best)
    }

    /// Certifies and records the minimum distance.
    pub fn certify_min_distance(&mut self) -> Result<usize, OwfError> {
        let d = self.min_distance_exhaustive()?;
        if let Some(declared) = self.min_distance {
            if declared != d {
                return Err(OwfError::WrongMinDistance { declared, found: d });
            }
        }
        self.min_distance = Some(d);
        Ok(d)
    }

    /// Text format: first line `code Nc K`, then K generator rows as 0/1
    /// strings (coordinate 0 leftmost).
    pub fn to_file_string(&self) -> String {
        let mut out = format!("code {} {}\n", self.length, self.dimension());
        for row in &self.rows {
            for i in 0..self.length {
                out.push(if (row >> i) & 1 == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, OwfError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(OwfError::Parse {
            line: 1,
            msg: "empty code file".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "code" {
            return Err(OwfError::Parse {
                line: 1,
                msg: "expected header `code Nc K`".into(),
            });
        }
        let length: usize = fields[1].parse().map_err(|_| OwfError::Parse {
            line: 1,
            msg: "bad code length".into(),
        })?;
        let dimension: usize = fields[2].parse().map_err(|_| OwfError::Parse {
            line: 1,
            msg: "bad code dimension".into(),
        })?;
        let mut rows = Vec::with_capacity(dimension);
        for (lineno, line) in lines.take(dimension) {
            let line = line.trim();
            if line.len() != length {
                return Err(OwfError::Parse {
                    line: lineno + 1,
                    msg: format!("row has {} characters, expected {length}", line.len()),
                });
            }
            let mut row = 0u64;
            for (i, ch) in line.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => row |= 1 << i,
                    _ => {
                        return Err(OwfError::Parse {
                            line: lineno + 1,
                            msg: format!("bad character `{ch}` in row"),
                        })
                    }
                }
            }
            rows.push(row);
        }
        if rows.len() != dimension {
            return Err(OwfError::Parse {
                line: 1,
                msg: format!("expected {dimension} rows, found {}", rows.len()),
            });
        }
        Self::new(length, rows)
    }
}

fn mask_bits(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

fn gf2_rank(rows: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &row in rows {
        let mut v = row;
        for &b in &basis {
            let pivot = 1u64 << (63 - b.leading_zeros());
            if v & pivot != 0 {
                v ^= b;
            }
        }
        if v != 0 {
            basis.push(v);
        }
    }
    basis.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    SingleQubitRotation,
    CodeFingerprint,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::SingleQubitRotation => write!(f, "rotation"),
            FamilyKind::CodeFingerprint => write!(f, "fingerprint"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaCertainty {
    Exact,
    Sampled,
}

impl fmt::Display for DeltaCertainty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaCertainty::Exact => write!(f, "exact"),
            DeltaCertainty::Sampled => write!(f, "sampled"),
        }
    }
}

/// One-way function family descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    pub kind: FamilyKind,
    /// Private-key bit length.
    pub key_bits: u32,
    /// Qubits per public key.
    pub qubits: usize,
    /// Certified pairwise overlap bound.
    pub delta: f64,
    pub delta_certainty: DeltaCertainty,
}

impl FamilyParams {
    /// Rotation family: `theta = pi/2^L`, `delta = cos(theta)` exactly.
    pub fn single_qubit_rotation(key_bits: u32) -> Result<Self, OwfError> {
        if key_bits == 0 || key_bits > MAX_ROTATION_BITS {
            return Err(OwfError::KeyLength(key_bits, 1, MAX_ROTATION_BITS));
        }
        Ok(Self {
            kind: FamilyKind::SingleQubitRotation,
            key_bits,
            qubits: 1,
            delta: rotation_step(key_bits).cos(),
            delta_certainty: DeltaCertainty::Exact,
        })
    }

    /// Fingerprint family for `code` with an already-certified `delta`.
    pub fn code_fingerprint(
        code: &CodeSpec,
        delta: f64,
        delta_certainty: DeltaCertainty,
    ) -> Result<Self, OwfError> {
        if !(0.0..1.0).contains(&delta) {
            return Err(OwfError::DeltaRange(delta));
        }
        Ok(Self {
            kind: FamilyKind::CodeFingerprint,
            key_bits: code.dimension() as u32,
            qubits: index_width(code.length()) + 1,
            delta,
            delta_certainty,
        })
    }

    /// Fingerprint family with `delta` certified by `mode`.
    pub fn code_fingerprint_certified<R: Rng>(
        code: &CodeSpec,
        mode: CertifyMode,
        rng: &mut R,
    ) -> Result<Self, OwfError> {
        let draft = Self::code_fingerprint(code, 0.0, DeltaCertainty::Exact)?;
        let (delta, certainty) = certify_delta(&draft, Some(code), mode, rng)?;
        Self::code_fingerprint(code, delta, certainty)
    }

    /// Holevo budget: `copies * qubits < key_bits` keeps guessing hard.
    pub fn within_holevo_budget(&self, copies: usize) -> bool {
        copies * self.qubits < self.key_bits as usize
    }

    pub fn key_count(&self) -> u64 {
        if self.key_bits >= 64 {
            u64::MAX
        } else {
            1u64 << self.key_bits
        }
    }

    pub fn check_key(&self, key: u64) -> Result<(), OwfError> {
        if self.key_bits < 64 && key >> self.key_bits != 0 {
            return Err(OwfError::KeyRange {
                key,
                bits: self.key_bits,
            });
        }
        Ok(())
    }

    /// One line `family kind L n delta certainty`.
    pub fn file_line(&self) -> String {
        format!(
            "family {} {} {} {:.16e} {}",
            self.kind, self.key_bits, self.qubits, self.delta, self.delta_certainty
        )
    }

    pub fn parse(line: &str) -> Result<Self, OwfError> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| OwfError::Parse {
            line: 1,
            msg: msg.into(),
        };
        if fields.len() != 6 || fields[0] != "family" {
            return Err(err("expected `family kind L n delta certainty`"));
        }
        let kind = match fields[1] {
            "rotation" => FamilyKind::SingleQubitRotation,
            "fingerprint" => FamilyKind::CodeFingerprint,
            other => return Err(err(&format!("unknown family kind `{other}`"))),
        };
        let key_bits: u32 = fields[2].parse().map_err(|_| err("bad L"))?;
        let qubits: usize = fields[3].parse().map_err(|_| err("bad n"))?;
        let delta: f64 = fields[4].parse().map_err(|_| err("bad delta"))?;
        let delta_certainty = match fields[5] {
            "exact" => DeltaCertainty::Exact,
            "sampled" => DeltaCertainty::Sampled,
            other => return Err(err(&format!("unknown certainty `{other}`"))),
        };
        Ok(Self {
            kind,
            key_bits,
            qubits,
            delta,
            delta_certainty,
        })
    }
}

fn rotation_step(key_bits: u32) -> f64 {
    PI / 2f64.powi(key_bits as i32)
}

fn index_width(length: usize) -> usize {
    let mut w = 0;
    while (1usize << w) < length {
        w += 1;
    }
    w
}

/// Evaluates `k -> |f_k>` into a fresh state on register [`KEY_REGISTER`].
pub fn eval_family(
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    key: u64,
) -> Result<PureState, OwfError> {
    family.check_key(key)?;
    match family.kind {
        FamilyKind::SingleQubitRotation => {
            let angle = key as f64 * rotation_step(family.key_bits);
            Ok(PureState::single_qubit(
                KEY_REGISTER,
                Complex64::new(angle.cos(), 0.0),
                Complex64::new(angle.sin(), 0.0),
            )?)
        }
        FamilyKind::CodeFingerprint => {
            let code = code.ok_or(OwfError::MissingCode)?;
            if code.dimension() as u32 != family.key_bits {
                return Err(OwfError::CodeKeyMismatch(code.dimension(), family.key_bits));
            }
            let cw = code.encode(key)?;
            let layout = RegisterLayout::single(KEY_REGISTER, family.qubits)?;
            let mut amps = vec![Complex64::new(0.0, 0.0); layout.dim()];
            let coeff = 1.0 / (code.length() as f64).sqrt();
            for i in 0..code.length() {
                let bit = ((cw >> i) & 1) as usize;
                amps[(i << 1) | bit] = Complex64::new(coeff, 0.0);
            }
            Ok(PureState::from_amplitudes(layout, amps)?)
        }
    }
}

/// `|<f_k|f_k'>|` by closed formula: `|cos((j - j') theta)|` for the rotation
/// family and `1 - d_H(E(k), E(k'))/Nc` for the fingerprint family.
pub fn pairwise_overlap(
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    k: u64,
    k2: u64,
) -> Result<f64, OwfError> {
    family.check_key(k)?;
    family.check_key(k2)?;
    match family.kind {
        FamilyKind::SingleQubitRotation => {
            let diff = k as i64 - k2 as i64;
            Ok((diff as f64 * rotation_step(family.key_bits)).cos().abs())
        }
        FamilyKind::CodeFingerprint => {
            let code = code.ok_or(OwfError::MissingCode)?;
            let d = (code.encode(k)? ^ code.encode(k2)?).count_ones() as f64;
            Ok(1.0 - d / code.length() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CertifyMode {
    Exhaustive,
    Sampled { pairs: usize },
}

/// Certifies the family's overlap bound.
///
/// Exhaustive mode returns the true maximum overlap over distinct key pairs
/// (for the rotation family this is `cos(pi/2^L)` in closed form; for linear
/// fingerprint codes it is `1 - d_min/Nc` with `d_min` found by scanning all
/// nonzero codewords). Sampled mode returns the maximum over randomly drawn
/// pairs and is flagged as such.
pub fn certify_delta<R: Rng>(
    family: &FamilyParams,
    code: Option<&CodeSpec>,
    mode: CertifyMode,
    rng: &mut R,
) -> Result<(f64, DeltaCertainty), OwfError> {
    match (family.kind, mode) {
        (FamilyKind::SingleQubitRotation, _) => {
            // Overlap depends only on |j - j'|; the maximum sits at adjacent
            // keys regardless of mode.
            Ok((rotation_step(family.key_bits).cos(), DeltaCertainty::Exact))
        }
        (FamilyKind::CodeFingerprint, CertifyMode::Exhaustive) => {
            let code = code.ok_or(OwfError::MissingCode)?;
            if code.dimension() > MAX_EXHAUSTIVE_DIMENSION {
                return Err(OwfError::ExhaustiveTooLarge(MAX_EXHAUSTIVE_DIMENSION));
            }
            let d = code.min_distance_exhaustive()?;
            Ok((1.0 - d as f64 / code.length() as f64, DeltaCertainty::Exact))
        }
        (FamilyKind::CodeFingerprint, CertifyMode::Sampled { pairs }) => {
            let code = code.ok_or(OwfError::MissingCode)?;
            let mask = mask_bits(family.key_bits);
            let mut max = 0.0f64;
            for _ in 0..pairs {
                let k = rng.gen::<u64>() & mask;
                let mut k2 = rng.gen::<u64>() & mask;
                while k2 == k {
                    k2 = rng.gen::<u64>() & mask;
                }
                max = max.max(pairwise_overlap(family, Some(code), k, k2)?);
            }
            Ok((max, DeltaCertainty::Sampled))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn rotation_key_zero_is_ket0() {
        let fam = FamilyParams::single_qubit_rotation(4).unwrap();
        let s = eval_family(&fam, None, 0).unwrap();
        assert_eq!(s.amplitudes()[0].re, 1.0);
        assert_eq!(s.amplitudes()[1].re, 0.0);
    }

    #[test]
    fn rotation_l1_key_one_is_ket1() {
        let fam = FamilyParams::single_qubit_rotation(1).unwrap();
        let s = eval_family(&fam, None, 1).unwrap();
        assert!(s.amplitudes()[0].re.abs() < 1e-15);
        assert!((s.amplitudes()[1].re - 1.0).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn rotation_l2_key_one_is_diagonal() {
        let fam = FamilyParams::single_qubit_rotation(2).unwrap();
        let s = eval_family(&fam, None, 1).unwrap();
        assert!((s.amplitudes()[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s.amplitudes()[1].re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s.amplitudes()[0].re - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn overlap_equal_keys_is_one() {
        let fam = FamilyParams::single_qubit_rotation(5).unwrap();
        assert_eq!(pairwise_overlap(&fam, None, 7, 7).unwrap(), 1.0);
    }

    #[test]
    fn rotation_adjacent_overlap_matches_delta() {
        let fam = FamilyParams::single_qubit_rotation(2).unwrap();
        let ov = pairwise_overlap(&fam, None, 0, 1).unwrap();
        assert!((ov - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((ov - fam.delta).abs() < 1e-15);
    }

    #[test]
    fn rotation_overlap_depends_only_on_distance() {
        let fam = FamilyParams::single_qubit_rotation(4).unwrap();
        for d in 1u64..16 {
            let base = pairwise_overlap(&fam, None, 0, d).unwrap();
            for k in 0u64..16 - d {
                let ov = pairwise_overlap(&fam, None, k, k + d).unwrap();
                assert!((ov - base).abs() < 1e-12);
            }
        }
        // Maximum over distinct pairs is attained at adjacent keys.
        let delta = fam.delta;
        for d in 1u64..16 {
            assert!(pairwise_overlap(&fam, None, 0, d).unwrap() <= delta + 1e-12);
        }
    }

    #[test]
    fn rotation_injective_exhaustively() {
        for l in 1..=6u32 {
            let fam = FamilyParams::single_qubit_rotation(l).unwrap();
            let count = 1u64 << l;
            for k in 0..count {
                for k2 in (k + 1)..count {
                    let ov = pairwise_overlap(&fam, None, k, k2).unwrap();
                    assert!(ov <= fam.delta + 1e-12, "L={l} k={k} k2={k2} ov={ov}");
                    assert!(fam.delta < 1.0);
                }
            }
        }
        // Up to L = 12 the overlap depends only on the key distance, so the
        // per-distance scan covers every pair.
        let fam = FamilyParams::single_qubit_rotation(12).unwrap();
        assert!(fam.delta < 1.0);
        for d in 1..(1u64 << 12) {
            let ov = pairwise_overlap(&fam, None, 0, d).unwrap();
            assert!(ov <= fam.delta + 1e-12, "d={d} ov={ov}");
        }
    }

    #[test]
    fn fingerprint_overlap_matches_inner_product() {
        let mut rng = stream_rng(21, 0);
        let code = CodeSpec::random(32, 10, &mut rng).unwrap();
        let fam =
            FamilyParams::code_fingerprint_certified(&code, CertifyMode::Exhaustive, &mut rng)
                .unwrap();
        for _ in 0..100 {
            let k = rng.gen::<u64>() & 0x3ff;
            let k2 = rng.gen::<u64>() & 0x3ff;
            let formula = pairwise_overlap(&fam, Some(&code), k, k2).unwrap();
            let a = eval_family(&fam, Some(&code), k).unwrap();
            let b = eval_family(&fam, Some(&code), k2).unwrap();
            let ip = a.inner_product(&b).unwrap().norm();
            assert!((formula - ip).abs() < 1e-12);
        }
    }

    #[test]
    fn repetition_code_is_maximally_distant() {
        let code = CodeSpec::repetition(4).unwrap();
        let mut rng = stream_rng(0, 0);
        let fam =
            FamilyParams::code_fingerprint_certified(&code, CertifyMode::Exhaustive, &mut rng)
                .unwrap();
        assert_eq!(code.min_distance_exhaustive().unwrap(), 4);
        assert_eq!(fam.delta, 0.0);
        // The two codewords are complementary: overlap at half distance checks
        // the formula shape too.
        let half = pairwise_overlap(&fam, Some(&code), 0, 1).unwrap();
        assert_eq!(half, 0.0);
    }

    #[test]
    fn overlap_at_half_distance_is_half() {
        // [2,1] code with codewords 00 and 11 has d = Nc: use a crafted code
        // where dist(E(0), E(1)) = Nc/2 instead.
        let code = CodeSpec::new(4, vec![0b0011]).unwrap();
        let fam = FamilyParams::code_fingerprint(&code, 0.5, DeltaCertainty::Exact).unwrap();
        let ov = pairwise_overlap(&fam, Some(&code), 0, 1).unwrap();
        assert_eq!(ov, 0.5);
    }

    #[test]
    fn exhaustive_certification_matches_pairwise_scan() {
        let mut rng = stream_rng(33, 0);
        let code = CodeSpec::random(32, 10, &mut rng).unwrap();
        let fam = FamilyParams::code_fingerprint(&code, 0.5, DeltaCertainty::Exact).unwrap();
        let (delta, certainty) =
            certify_delta(&fam, Some(&code), CertifyMode::Exhaustive, &mut rng).unwrap();
        assert_eq!(certainty, DeltaCertainty::Exact);
        // Independent oracle: brute force over all distinct codeword pairs.
        let mut dmin = code.length();
        for a in 0u64..(1 << 10) {
            let ca = code.encode(a).unwrap();
            for b in (a + 1)..(1 << 10) {
                let cb = code.encode(b).unwrap();
                dmin = dmin.min((ca ^ cb).count_ones() as usize);
            }
        }
        assert!((delta - (1.0 - dmin as f64 / 32.0)).abs() < 1e-15);
    }

    #[test]
    fn sampled_certification_is_flagged_and_bounded() {
        let mut rng = stream_rng(34, 0);
        let code = CodeSpec::random(32, 10, &mut rng).unwrap();
        let fam = FamilyParams::code_fingerprint(&code, 0.5, DeltaCertainty::Exact).unwrap();
        let (exact, _) =
            certify_delta(&fam, Some(&code), CertifyMode::Exhaustive, &mut rng).unwrap();
        let (sampled, certainty) = certify_delta(
            &fam,
            Some(&code),
            CertifyMode::Sampled { pairs: 200 },
            &mut rng,
        )
        .unwrap();
        assert_eq!(certainty, DeltaCertainty::Sampled);
        assert!(sampled <= exact + 1e-15);
    }

    #[test]
    fn encode_is_linear() {
        let mut rng = stream_rng(35, 0);
        let code = CodeSpec::random(8, 3, &mut rng).unwrap();
        assert_eq!(code.encode(0).unwrap(), 0);
        for a in 0u64..8 {
            for b in 0u64..8 {
                let lhs = code.encode(a).unwrap() ^ code.encode(b).unwrap();
                let rhs = code.encode(a ^ b).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn repetition_encodes_by_copying() {
        let code = CodeSpec::repetition(3).unwrap();
        assert_eq!(code.encode(1).unwrap(), 0b111);
        assert_eq!(code.encode(0).unwrap(), 0);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        let fam = FamilyParams::single_qubit_rotation(2).unwrap();
        assert!(matches!(
            eval_family(&fam, None, 4).unwrap_err(),
            OwfError::KeyRange { .. }
        ));
        let code = CodeSpec::repetition(4).unwrap();
        let fp = FamilyParams::code_fingerprint(&code, 0.0, DeltaCertainty::Exact).unwrap();
        assert!(matches!(
            eval_family(&fp, None, 0).unwrap_err(),
            OwfError::MissingCode
        ));
    }

    #[test]
    fn code_files_round_trip() {
        let mut rng = stream_rng(36, 0);
        let code = CodeSpec::random(12, 5, &mut rng).unwrap();
        let text = code.to_file_string();
        let back = CodeSpec::parse(&text).unwrap();
        assert_eq!(code.generator_rows(), back.generator_rows());
        let fam = FamilyParams::single_qubit_rotation(8).unwrap();
        let line = fam.file_line();
        let back = FamilyParams::parse(&line).unwrap();
        assert_eq!(fam, back);
    }

    #[test]
    fn singular_generators_rejected() {
        assert!(matches!(
            CodeSpec::new(4, vec![0b0011, 0b0011]).unwrap_err(),
            OwfError::SingularGenerator
        ));
    }
}
