//! Analytic formulas and numerical experiments behind the security bounds:
//! binary (Hamming) entropy, the low-weight-superposition tail lemma, the
//! information/guessing budget, and interval statistics for Monte Carlo
//! reports.

use crate::rng::SimRng;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("argument {name} = {value} outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("lemma experiment limited to M <= {0} qubits")]
    TooManyQubits(usize),
    #[error("weight cap r = {r} exceeds M = {m}")]
    WeightCap { r: usize, m: usize },
}

fn domain(name: &'static str, value: f64, range: &'static str) -> AnalysisError {
    AnalysisError::Domain { name, value, range }
}

/// Binary entropy `H(x) = -x log2 x - (1-x) log2 (1-x)` with `0 log 0 = 0`.
pub fn hamming_entropy(x: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("x", x, "[0, 1]"));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// Tail bound `2^(1 + [H(1/2 - Delta) + H(c) - 1] M)` for a superposition of
/// at most `c*M` minus-factors measured in the computational basis.
///
/// Values `>= 1` carry no information; callers flag them as vacuous rather
/// than clamping.
pub fn lemma_bound(m: usize, delta: f64, c: f64) -> Result<f64, AnalysisError> {
    if !(0.0 < delta && delta < 0.5) {
        return Err(domain("Delta", delta, "(0, 1/2)"));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(domain("c", c, "[0, 1]"));
    }
    let exponent = 1.0 + (hamming_entropy(0.5 - delta)? + hamming_entropy(c)? - 1.0) * m as f64;
    Ok(exponent.exp2())
}

/// A bound `>= 1` excludes nothing.
pub fn is_vacuous(bound: f64) -> bool {
    !(bound < 1.0)
}

/// Expected number of keys an information-bounded forger guesses exactly:
/// `2^-(L - T n) * key_count`.
pub fn expected_guessed_keys(l: u32, n: usize, copies: usize, key_count: usize) -> f64 {
    let missing_bits = l as f64 - (copies * n) as f64;
    (-missing_bits).exp2() * key_count as f64
}

/// Bound `2^-(1 - H((1 - c2 + c1)/2) - H(c)) M` on the probability that a
/// low-minus-weight cheating state separates two recipients' tallies by more
/// than `(c2 - c1) M`.
pub fn repudiation_bound(m: usize, c1: f64, c2: f64, c: f64) -> Result<f64, AnalysisError> {
    if !(0.0..1.0).contains(&c1) {
        return Err(domain("c1", c1, "[0, 1)"));
    }
    if !(c1 < c2 && c2 < 1.0) {
        return Err(domain("c2", c2, "(c1, 1)"));
    }
    if !(0.0 < c && c < 1.0) {
        return Err(domain("c", c, "(0, 1)"));
    }
    let rate = 1.0 - hamming_entropy((1.0 - c2 + c1) / 2.0)? - hamming_entropy(c)?;
    Ok((-rate * m as f64).exp2())
}

/// Wilson score interval at 95% confidence.
pub fn binomial_ci95(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials >= 1, "trials must be >= 1");
    assert!(successes <= trials, "successes must not exceed trials");
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // At the boundaries center and spread cancel exactly in real arithmetic;
    // pin the endpoints so rounding residue does not leak into reports.
    let lo = if successes == 0 {
        0.0
    } else {
        ((center - spread) / denom).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        ((center + spread) / denom).min(1.0)
    };
    (lo, hi)
}

/// `C(n, k)` as f64 (exact for the small arguments used here).
pub fn binomial_coefficient(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// `P(X < k)` for `X ~ Binomial(n, p)`; `k` is a real threshold.
pub fn binomial_cdf_below(n: usize, p: f64, k: f64) -> f64 {
    let mut acc = 0.0;
    for x in 0..=n {
        if (x as f64) < k {
            acc += binomial_coefficient(n, x) * p.powi(x as i32) * (1.0 - p).powi((n - x) as i32);
        }
    }
    acc.min(1.0)
}

/// Outcome of a [`lemma_experiment`] run.
#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub m: usize,
    pub r: usize,
    pub delta: f64,
    pub samples: usize,
    /// Largest exact out-of-range probability over the sampled states.
    pub max_tail: f64,
    pub mean_tail: f64,
    pub bound: f64,
    pub vacuous: bool,
    /// Every sampled tail is at most the bound (trivially true when vacuous).
    pub satisfied: bool,
    /// Number of basis words of minus-weight at most `r` (exact count).
    pub term_count: usize,
    /// Word count the bound's derivation assumes, about `C(M, r)`.
    pub term_count_approx: f64,
    /// Largest |empirical - exact| tail over samples, when shots were taken.
    pub empirical_max_deviation: Option<f64>,
}

/// Samples random superpositions of plus/minus words with at most `r` minus
/// factors, rotates to the computational basis, and computes the exact
/// probability of observing a weight outside `M(1/2 +- Delta)`.
///
/// Tail probabilities come from direct summation over amplitudes, not from
/// measurement shots; `trials_per_state > 0` adds an empirical cross-check.
pub fn lemma_experiment(
    m: usize,
    r: usize,
    delta: f64,
    samples: usize,
    trials_per_state: usize,
    rng: &mut SimRng,
) -> Result<LemmaReport, AnalysisError> {
    if m == 0 || m > 20 {
        return Err(AnalysisError::TooManyQubits(20));
    }
    if r > m {
        return Err(AnalysisError::WeightCap { r, m });
    }
    if !(0.0 < delta && delta < 0.5) {
        return Err(domain("Delta", delta, "(0, 1/2)"));
    }
    let dim = 1usize << m;
    let words: Vec<usize> = (0..dim).filter(|w| w.count_ones() as usize <= r).collect();
    let lo = m as f64 * (0.5 - delta);
    let hi = m as f64 * (0.5 + delta);
    let out_of_range: Vec<bool> = (0..dim)
        .map(|y| {
            let w = y.count_ones() as f64;
            w < lo || w > hi
        })
        .collect();

    let bound = lemma_bound(m, delta, r as f64 / m as f64)?;
    let mut max_tail = 0.0f64;
    let mut sum_tail = 0.0f64;
    let mut max_dev: Option<f64> = None;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    for _ in 0..samples {
        for a in amps.iter_mut() {
            *a = Complex64::new(0.0, 0.0);
        }
        let mut norm2 = 0.0;
        for &w in &words {
            let a = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            norm2 += a.norm_sqr();
            amps[w] = a;
        }
        let scale = 1.0 / norm2.sqrt();
        for a in amps.iter_mut() {
            *a *= scale;
        }
        // |+/-> words to the computational basis: apply H to every qubit.
        walsh_hadamard(&mut amps);
        let tail: f64 = amps
            .iter()
            .zip(out_of_range.iter())
            .filter(|(_, out)| **out)
            .map(|(a, _)| a.norm_sqr())
            .sum();
        max_tail = max_tail.max(tail);
        sum_tail += tail;

        if trials_per_state > 0 {
            let probs: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
            let mut hits = 0usize;
            for _ in 0..trials_per_state {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut y = dim - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        y = i;
                        break;
                    }
                }
                if out_of_range[y] {
                    hits += 1;
                }
            }
            let emp = hits as f64 / trials_per_state as f64;
            let dev = (emp - tail).abs();
            max_dev = Some(max_dev.map_or(dev, |d: f64| d.max(dev)));
        }
    }
    // The word count 2^(M H(r/M)) behind the bound dominates the true count
    // only for r <= M/2; beyond that the derivation breaks down even when
    // the formula evaluates below 1.
    let vacuous = is_vacuous(bound) || 2 * r > m;
    Ok(LemmaReport {
        m,
        r,
        delta,
        samples,
        max_tail,
        mean_tail: if samples > 0 {
            sum_tail / samples as f64
        } else {
            0.0
        },
        bound,
        vacuous,
        satisfied: max_tail <= bound,
        term_count: words.len(),
        term_count_approx: binomial_coefficient(m, r),
        empirical_max_deviation: max_dev,
    })
}

/// In-place normalized Walsh-Hadamard transform (`H` on every qubit).
fn walsh_hadamard(amps: &mut [Complex64]) {
    let n = amps.len();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let x = amps[j];
                let y = amps[j + h];
                amps[j] = (x + y) * scale;
                amps[j + h] = (x - y) * scale;
            }
            i += h * 2;
        }
        h *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn entropy_known_values() {
        assert_eq!(hamming_entropy(0.5).unwrap(), 1.0);
        assert_eq!(hamming_entropy(0.0).unwrap(), 0.0);
        assert_eq!(hamming_entropy(1.0).unwrap(), 0.0);
        // Direct numerical evaluation of the formula at x = 0.11.
        let expect = -(0.11f64 * 0.11f64.log2() + 0.89 * 0.89f64.log2());
        let h = hamming_entropy(0.11).unwrap();
        assert!((h - expect).abs() < 1e-15);
        assert!((h - 0.4999).abs() < 1e-3);
        assert!(hamming_entropy(1.2).is_err());
    }

    #[test]
    fn entropy_symmetric_concave_maximal_at_half() {
        let mut prev_left = 0.0;
        for i in 0..=1000usize {
            let x = i as f64 / 1000.0;
            let h = hamming_entropy(x).unwrap();
            let h_mirror = hamming_entropy(1.0 - x).unwrap();
            assert!((h - h_mirror).abs() < 1e-12);
            assert!(h <= 1.0 + 1e-15);
            if x <= 0.5 {
                assert!(h + 1e-12 >= prev_left);
                prev_left = h;
            }
        }
        // Concavity on a coarse grid: midpoint value dominates the average.
        for i in 1..50usize {
            for j in (i + 1)..50 {
                let a = i as f64 / 50.0;
                let b = j as f64 / 50.0;
                let mid = hamming_entropy((a + b) / 2.0).unwrap();
                let avg = (hamming_entropy(a).unwrap() + hamming_entropy(b).unwrap()) / 2.0;
                assert!(mid + 1e-12 >= avg);
            }
        }
    }

    #[test]
    fn lemma_bound_evaluates_formula() {
        // M=16, Delta=0.25, c=1/8, by direct arithmetic.
        let h1 = hamming_entropy(0.25).unwrap();
        let h2 = hamming_entropy(0.125).unwrap();
        let expect = (1.0 + (h1 + h2 - 1.0) * 16.0).exp2();
        let bound = lemma_bound(16, 0.25, 0.125).unwrap();
        assert!((bound - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn lemma_bound_decreasing_when_condition_holds() {
        // Delta=0.25 needs H(c) < 1 - H(0.25) ~ 0.189, i.e. c below ~0.0295;
        // c=0.02 satisfies the entropy condition and the bound shrinks.
        let cond = hamming_entropy(0.25).unwrap() + hamming_entropy(0.02).unwrap();
        assert!(cond < 1.0);
        let mut prev = f64::INFINITY;
        for m in [8, 16, 32, 64, 128] {
            let b = lemma_bound(m, 0.25, 0.02).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(lemma_bound(1024, 0.25, 0.02).unwrap() < 1e-12);
        // Outside the condition the exponent flips sign and the bound grows.
        assert!(lemma_bound(128, 0.25, 0.05).unwrap() > lemma_bound(64, 0.25, 0.05).unwrap());
    }

    #[test]
    fn lemma_bound_vacuous_near_zero_gap() {
        // Delta -> 0: H(1/2) = 1 so the bound is at least 2.
        let b = lemma_bound(64, 1e-9, 0.3).unwrap();
        assert!(b >= 2.0 - 1e-9);
        assert!(is_vacuous(b));
    }

    #[test]
    fn guess_budget_formula() {
        assert_eq!(expected_guessed_keys(4, 1, 4, 32), 32.0);
        assert_eq!(expected_guessed_keys(16, 1, 6, 1024), 1.0);
        assert_eq!(expected_guessed_keys(8, 1, 4, 32), 2.0);
        // Monotone in copies, antitone in key bits.
        let mut prev = 0.0;
        for copies in 1..6 {
            let g = expected_guessed_keys(12, 1, copies, 64);
            assert!(g > prev);
            prev = g;
        }
        let mut prev = f64::INFINITY;
        for l in 8..16 {
            let g = expected_guessed_keys(l, 1, 4, 64);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn repudiation_bound_limits() {
        // c2 - c1 -> 1: exponent is 1 - H(c).
        let c = 0.05f64;
        let b = repudiation_bound(32, 0.0, 1.0 - 1e-12, c).unwrap();
        let expect = (-(1.0 - hamming_entropy(c).unwrap()) * 32.0).exp2();
        assert!((b - expect).abs() < 1e-6 * expect);
        // Small gap makes the exponent non-positive: vacuous.
        let b = repudiation_bound(32, 0.0, 0.01, 0.4).unwrap();
        assert!(is_vacuous(b));
        assert!(repudiation_bound(32, 0.5, 0.2, 0.1).is_err());
    }

    #[test]
    fn wilson_interval_values() {
        let (lo, hi) = binomial_ci95(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.037).abs() < 1e-3);
        let (lo, hi) = binomial_ci95(50, 100);
        assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert!(lo < 0.5 && hi > 0.5);
        let (_, hi) = binomial_ci95(100, 100);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn lemma_experiment_r0_matches_binomial_tail() {
        // r = 0 leaves the single all-plus word: the rotated weight is
        // Binomial(M, 1/2) and the tail must match exactly.
        let mut rng = stream_rng(40, 0);
        let m = 12;
        let delta = 0.25;
        let rep = lemma_experiment(m, 0, delta, 3, 0, &mut rng).unwrap();
        let lo = m as f64 * (0.5 - delta);
        let hi = m as f64 * (0.5 + delta);
        let mut tail = 0.0;
        for w in 0..=m {
            let wf = w as f64;
            if wf < lo || wf > hi {
                tail += binomial_coefficient(m, w) / (1u64 << m) as f64;
            }
        }
        assert!((rep.max_tail - tail).abs() < 1e-12);
        assert_eq!(rep.term_count, 1);
    }

    #[test]
    fn lemma_experiment_small_instance() {
        let mut rng = stream_rng(41, 0);
        let rep = lemma_experiment(12, 2, 0.25, 50, 0, &mut rng).unwrap();
        assert!(rep.satisfied);
        assert_eq!(rep.term_count, 1 + 12 + 66);
        // r = M is degenerate: the bound is vacuous and flagged.
        let rep = lemma_experiment(6, 6, 0.25, 5, 0, &mut rng).unwrap();
        assert!(rep.vacuous);
    }

    #[test]
    fn lemma_experiment_empirical_cross_check() {
        let mut rng = stream_rng(42, 0);
        let rep = lemma_experiment(8, 1, 0.25, 4, 4000, &mut rng).unwrap();
        let dev = rep.empirical_max_deviation.unwrap();
        // 4000 shots puts the frequency within a few sigma of the exact tail.
        assert!(dev < 0.05, "deviation {dev}");
    }
}
