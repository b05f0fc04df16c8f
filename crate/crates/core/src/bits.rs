//! Bit-parallel dot products between ±1 masks and {-1, 0, 1} sequences.
//!
//! For a sign mask `S` (bit set = +1) and a ternary window split into its
//! `+1` plane `P` and `-1` plane `Q`,
//! `sum s_i y_i = 2|P∩S| - |P| - 2|Q∩S| + |Q|`. Every quantity is an exact
//! integer, so results equal the plain floating-point loop bit for bit.

/// `copies[s][t]` holds source bits `64t + s ..= 64t + s + 63`, so any window
/// start can be read as an aligned word slice.
pub(crate) struct ShiftedBits {
    copies: Vec<Vec<u64>>,
}

impl ShiftedBits {
    pub(crate) fn new(words: &[u64]) -> Self {
        let nw = words.len() + 1;
        let at = |i: usize| words.get(i).copied().unwrap_or(0);
        let copies = (0..64u32)
            .map(|s| {
                (0..nw)
                    .map(|t| {
                        if s == 0 {
                            at(t)
                        } else {
                            (at(t) >> s) | (at(t + 1) << (64 - s))
                        }
                    })
                    .collect()
            })
            .collect();
        ShiftedBits { copies }
    }

    #[inline]
    pub(crate) fn window(&self, start: usize) -> &[u64] {
        &self.copies[start % 64][start / 64..]
    }
}

/// `popcount(a & b)` over the first `nbits` bits.
#[inline]
pub(crate) fn and_count(a: &[u64], b: &[u64], nbits: usize) -> u32 {
    let full = nbits / 64;
    let mut total: u32 = a[..full]
        .iter()
        .zip(&b[..full])
        .map(|(x, y)| (x & y).count_ones())
        .sum();
    let rem = nbits % 64;
    if rem != 0 {
        let mask = (1u64 << rem) - 1;
        total += (a[full] & b[full] & mask).count_ones();
    }
    total
}

fn pack(len: usize, bit: impl Fn(usize) -> bool) -> Vec<u64> {
    let mut words = vec![0u64; len.div_ceil(64)];
    for i in (0..len).filter(|&i| bit(i)) {
        words[i / 64] |= 1 << (i % 64);
    }
    words
}

/// A {-1, 0, 1} sequence split into shifted `+1` and `-1` planes.
pub(crate) struct TernaryPlanes {
    len: usize,
    plus: ShiftedBits,
    minus: ShiftedBits,
    plus_prefix: Vec<u32>,
    minus_prefix: Vec<u32>,
}

impl TernaryPlanes {
    /// `None` unless every value is exactly -1, 0 or 1.
    pub(crate) fn new(values: &[f64]) -> Option<Self> {
        if !values.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0) {
            return None;
        }
        let prefix = |target: f64| {
            let mut acc = 0u32;
            let mut out = Vec::with_capacity(values.len() + 1);
            out.push(0);
            for &v in values {
                acc += (v == target) as u32;
                out.push(acc);
            }
            out
        };
        Some(TernaryPlanes {
            len: values.len(),
            plus: ShiftedBits::new(&pack(values.len(), |i| values[i] == 1.0)),
            minus: ShiftedBits::new(&pack(values.len(), |i| values[i] == -1.0)),
            plus_prefix: prefix(1.0),
            minus_prefix: prefix(-1.0),
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// `sum_{i < nbits} s_i * y[start + i]` with `y` 0-based.
    #[inline]
    pub(crate) fn window_dot(&self, start: usize, mask: &[u64], nbits: usize) -> i64 {
        debug_assert!(start + nbits <= self.len);
        let p = and_count(self.plus.window(start), mask, nbits) as i64;
        let q = and_count(self.minus.window(start), mask, nbits) as i64;
        let pc = (self.plus_prefix[start + nbits] - self.plus_prefix[start]) as i64;
        let qc = (self.minus_prefix[start + nbits] - self.minus_prefix[start]) as i64;
        2 * p - pc - 2 * q + qc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_dot_matches_plain_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..700).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
        let planes = TernaryPlanes::new(&y).unwrap();
        for _ in 0..200 {
            let nbits = rng.gen_range(1..200);
            let start = rng.gen_range(0..y.len() - nbits);
            let signs: Vec<i8> = (0..nbits).map(|_| if rng.gen() { 1 } else { -1 }).collect();
            let mask = pack(nbits, |i| signs[i] > 0);
            let expect: f64 = (0..nbits).map(|i| signs[i] as f64 * y[start + i]).sum();
            assert_eq!(planes.window_dot(start, &mask, nbits) as f64, expect);
        }
    }

    #[test]
    fn rejects_non_ternary() {
        assert!(TernaryPlanes::new(&[1.0, 0.5]).is_none());
    }
}
