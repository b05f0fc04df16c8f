//! Blocks, codes, correlation and frequency.

mod block;
mod code;

pub(crate) use block::BlockBuilder;
pub use block::{Block, SignBlock, MAX_ALPHABET, MAX_DIGIT_ALPHABET};
pub use code::{enumerate_codes, Code, CodeFamily, CodeWindows, MAX_ENUMERATED_TABLE};

use num_rational::Ratio;

use crate::error::{ForgeError, Result};

/// `(1/n) * sum d_i c_i`.
pub fn correlate(d: &[f64], c: &[f64]) -> Result<f64> {
    if d.len() != c.len() || d.is_empty() {
        return Err(ForgeError::invalid(format!(
            "correlation needs equal nonzero lengths, got {} and {}",
            d.len(),
            c.len()
        )));
    }
    let sum: f64 = d.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok(sum / d.len() as f64)
}

/// Number of `i` with `c[i..i+|d|] = d`.
pub fn count_occurrences(c: &Block, d: &Block) -> Result<usize> {
    if d.len() > c.len() {
        return Err(ForgeError::invalid(format!(
            "cannot count a block of length {} inside one of length {}",
            d.len(),
            c.len()
        )));
    }
    if d.alphabet_size() != c.alphabet_size() {
        return Err(ForgeError::invalid("blocks over different alphabets"));
    }
    let n = d.len();
    Ok((0..=c.len() - n)
        .filter(|&i| (0..n).all(|t| c.get(i + t) == d.get(t)))
        .count())
}

/// Occurrences of `d` in `c` divided by `|c|` (not by the number of positions).
pub fn freq(c: &Block, d: &Block) -> Result<Ratio<u64>> {
    let count = count_occurrences(c, d)?;
    Ok(Ratio::new(count as u64, c.len() as u64))
}

/// Occurrence counts of every length-`n` block in `c`, indexed by base-N value.
pub fn occurrence_counts(c: &Block, n: usize) -> Result<Vec<u32>> {
    if n == 0 || n > c.len() {
        return Err(ForgeError::invalid(format!(
            "short length {n} must lie in 1..={}",
            c.len()
        )));
    }
    let base = c.alphabet_size();
    let size = base
        .checked_pow(n as u32)
        .filter(|&s| s <= 1 << 24)
        .ok_or_else(|| ForgeError::Capacity(format!("N^n too large for N={base}, n={n}")))?;
    let mut counts = vec![0u32; size];
    let mut idx = c.window_index(0, n);
    counts[idx] += 1;
    for i in n..c.len() {
        idx = (idx * base) % size + c.get(i) as usize;
        counts[idx] += 1;
    }
    Ok(counts)
}

/// The block `D` whose base-N index over length `n` is `index`.
pub fn block_from_index(index: usize, n: usize, alphabet: usize) -> Block {
    let mut symbols = vec![0u8; n];
    let mut rest = index;
    for slot in symbols.iter_mut().rev() {
        *slot = (rest % alphabet) as u8;
        rest /= alphabet;
    }
    Block::new(&symbols, alphabet).expect("index digits are valid symbols")
}

/// Slides `f` across `b`; the output has length `|b| - w + 1`.
pub fn apply_code(f: &Code, b: &Block) -> Result<SignBlock> {
    let w = f.window();
    if b.len() < w {
        return Err(ForgeError::invalid(format!(
            "block of length {} is shorter than the code window {w}",
            b.len()
        )));
    }
    if b.alphabet_size() != f.alphabet_size() {
        return Err(ForgeError::invalid("code and block use different alphabets"));
    }
    let base = b.alphabet_size();
    let size = f.table().len();
    let mut idx = b.window_index(0, w);
    let mut signs = Vec::with_capacity(b.len() - w + 1);
    signs.push(f.eval_index(idx));
    for i in w..b.len() {
        idx = (idx * base) % size + b.get(i) as usize;
        signs.push(f.eval_index(idx));
    }
    Ok(SignBlock::from_trusted(signs))
}

/// Juxtaposes the parts in order.
pub fn concat(parts: &[Block]) -> Result<Block> {
    let first = parts
        .first()
        .ok_or_else(|| ForgeError::invalid("concat needs at least one part"))?;
    let alphabet = first.alphabet_size();
    if parts.iter().any(|p| p.alphabet_size() != alphabet) {
        return Err(ForgeError::invalid("concat parts use different alphabets"));
    }
    concat_refs(parts.iter(), alphabet)
}

pub(crate) fn concat_refs<'a>(parts: impl Iterator<Item = &'a Block> + Clone, alphabet: usize) -> Result<Block> {
    let total: usize = parts.clone().map(Block::len).sum();
    let mut b = BlockBuilder::with_capacity(alphabet, total);
    for p in parts {
        b.extend(p);
    }
    Ok(b.finish())
}
