use crate::bits::TernaryPlanes;
use crate::error::{ForgeError, Result};
use crate::sequence::TestSequence;
use crate::symbolic::{apply_code, correlate, Block, Code, CodeFamily};

/// Length of `y` that test (R) reads at multiplier `m` and length `n_k`.
pub fn required_length(m: u32, n_k: usize) -> Option<usize> {
    let starts = (m as usize).checked_mul(m as usize)?.checked_sub(1)?.checked_mul(n_k)?;
    starts.checked_add(n_k)?.checked_sub(1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub passes: bool,
    /// Largest `|corr|` seen; on failure, scanning stops at the first
    /// offending window.
    pub worst: f64,
}

/// Test (R) for blocks of one length, prepared once per level.
///
/// With `y` in `{-1, 0, 1}` the sums are formed from popcounts; they are
/// exact integers, so after the same final division the verdicts agree
/// with the plain loop bit for bit.
pub struct CorrelationTest<'a> {
    y: &'a [f64],
    planes: Option<TernaryPlanes>,
    codes: Vec<Code>,
    bound: f64,
    starts: usize,
    length: usize,
}

impl<'a> CorrelationTest<'a> {
    pub fn new(y: &'a TestSequence, family: &CodeFamily, eps_plus_delta: f64, m: u32, n_k: usize) -> Result<Self> {
        if family.is_empty() {
            return Err(ForgeError::invalid("test (R) needs at least one code"));
        }
        if family.max_window() > n_k {
            return Err(ForgeError::invalid(format!(
                "code window {} exceeds the block length {n_k}",
                family.max_window()
            )));
        }
        let need = required_length(m, n_k)
            .ok_or_else(|| ForgeError::Capacity(format!("(m^2 - 1) N_k overflows for m = {m}, N_k = {n_k}")))?;
        if y.len() < need {
            return Err(ForgeError::SequenceTooShort {
                required: need,
                available: y.len(),
            });
        }
        let y = &y.values()[..need];
        Ok(CorrelationTest {
            y,
            planes: TernaryPlanes::new(y),
            codes: family.sign_representatives().into_iter().cloned().collect(),
            bound: 2.0 * eps_plus_delta,
            starts: (m as usize * m as usize - 1) * n_k,
            length: n_k,
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn check(&self, b: &Block) -> Result<Verdict> {
        self.scan(b, true)
    }

    /// `max |corr|` over every window and code, without early exit.
    pub fn max_abs_correlation(&self, b: &Block) -> Result<f64> {
        Ok(self.scan(b, false)?.worst)
    }

    fn scan(&self, b: &Block, stop_early: bool) -> Result<Verdict> {
        if b.len() != self.length {
            return Err(ForgeError::invalid(format!(
                "test (R) is prepared for length {}, got {}",
                self.length,
                b.len()
            )));
        }
        let mut worst = 0.0f64;
        for f in &self.codes {
            let fb = apply_code(f, b)?;
            let len = fb.len();
            let denom = len as f64;
            match &self.planes {
                Some(planes) => {
                    debug_assert!(planes.len() >= self.starts + len - 1);
                    let mask = fb.plus_mask();
                    for start in 0..self.starts {
                        let c = (planes.window_dot(start, &mask, len) as f64 / denom).abs();
                        worst = worst.max(c);
                        if stop_early && c >= self.bound {
                            return Ok(Verdict { passes: false, worst });
                        }
                    }
                }
                None => {
                    let signs = fb.to_f64();
                    for start in 0..self.starts {
                        let c = correlate(&signs, &self.y[start..start + len])?.abs();
                        worst = worst.max(c);
                        if stop_early && c >= self.bound {
                            return Ok(Verdict { passes: false, worst });
                        }
                    }
                }
            }
        }
        Ok(Verdict {
            passes: worst < self.bound,
            worst,
        })
    }
}

/// Test (R): `|corr(f(B), y_j ..)| < 2(eps + delta)` for every
/// `j = 1 ..= (m^2 - 1) N_k` and every `f` in the family. `f(B)` is one
/// symbol shorter per extra window position and is compared with the
/// equally long stretch of `y` starting at `y_j`.
pub fn correlation_test(
    b: &Block,
    y: &TestSequence,
    family: &CodeFamily,
    eps_plus_delta: f64,
    m: u32,
    n_k: usize,
) -> Result<bool> {
    if b.len() != n_k {
        return Err(ForgeError::invalid(format!(
            "block length {} differs from N_k = {n_k}",
            b.len()
        )));
    }
    Ok(CorrelationTest::new(y, family, eps_plus_delta, m, n_k)?
        .check(b)?
        .passes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{SequenceSource, TestSequence};
    use crate::symbolic::enumerate_codes;

    fn seq(values: Vec<f64>) -> TestSequence {
        TestSequence::new(values, SequenceSource::Synthetic { seed: 0 }).unwrap()
    }

    #[test]
    fn alternating_y_is_orthogonal_to_constants_on_even_lengths() {
        let y = seq((0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let b = Block::parse("01", 2).unwrap();
        let fam = enumerate_codes(2, 1).unwrap();
        // A bound just above 1 cannot be reached by ±1 data.
        assert!(correlation_test(&b, &y, &fam, 0.5 + 1e-9, 2, 2).unwrap());
        assert!(!correlation_test(&b, &y, &fam, 0.5, 2, 2).unwrap());
        let constant = crate::symbolic::CodeFamily {
            step: 1,
            codes: vec![Code::constant(0, 2, 1).unwrap()],
        };
        assert!(correlation_test(&b, &y, &constant, 0.01, 2, 2).unwrap());
        let b4 = Block::parse("0110", 2).unwrap();
        assert!(correlation_test(&b4, &y, &constant, 0.01, 2, 4).unwrap());
        let odd = Block::parse("011", 2).unwrap();
        assert!(!correlation_test(&odd, &y, &constant, 0.1, 2, 3).unwrap());
    }

    #[test]
    fn constant_y_fails_below_half() {
        let y = seq(vec![1.0; 40]);
        let b = Block::parse("0110", 2).unwrap();
        let constant = crate::symbolic::CodeFamily {
            step: 1,
            codes: vec![Code::constant(0, 2, 1).unwrap()],
        };
        assert!(!correlation_test(&b, &y, &constant, 0.49, 2, 4).unwrap());
        assert!(correlation_test(&b, &y, &constant, 0.5 + 1e-9, 2, 4).unwrap());
    }

    #[test]
    fn short_sequence_is_refused() {
        let y = seq(vec![1.0; 10]);
        let b = Block::parse("0110", 2).unwrap();
        let fam = enumerate_codes(2, 1).unwrap();
        match correlation_test(&b, &y, &fam, 0.3, 2, 4) {
            Err(ForgeError::SequenceTooShort { required, .. }) => assert_eq!(required, 15),
            other => panic!("{other:?}"),
        }
    }
}
