use std::fmt;

use crate::error::{ForgeError, Result};

pub const MAX_ALPHABET: usize = 256;
/// Block text uses one base-N digit per symbol: `0-9` then `a-z`.
pub const MAX_DIGIT_ALPHABET: usize = 36;

fn bits_per_symbol(alphabet: usize) -> u32 {
    usize::BITS - (alphabet - 1).leading_zeros()
}

/// A finite word over the alphabet `{0, ..., N-1}`.
///
/// Symbols are packed at `ceil(log2 N)` bits each without straddling word
/// boundaries, and unused bits are kept zero, so derived equality, ordering
/// and hashing act on a canonical form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    alphabet: u16,
    len: usize,
    words: Vec<u64>,
}

impl Block {
    pub fn new(symbols: &[u8], alphabet: usize) -> Result<Block> {
        check_alphabet(alphabet)?;
        if symbols.is_empty() {
            return Err(ForgeError::invalid("blocks have length >= 1"));
        }
        if let Some(s) = symbols.iter().find(|&&s| s as usize >= alphabet) {
            return Err(ForgeError::invalid(format!(
                "symbol {s} is outside an alphabet of size {alphabet}"
            )));
        }
        let mut b = BlockBuilder::with_capacity(alphabet, symbols.len());
        for &s in symbols {
            b.push(s);
        }
        Ok(b.finish())
    }

    /// The one-symbol block `(s)`.
    pub fn symbol(s: u8, alphabet: usize) -> Result<Block> {
        Block::new(&[s], alphabet)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet as usize
    }

    #[inline]
    fn layout(&self) -> (u32, usize) {
        let bits = bits_per_symbol(self.alphabet as usize);
        (bits, (64 / bits) as usize)
    }

    /// Symbol at 0-based position `i`.
    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        debug_assert!(i < self.len);
        let (bits, per_word) = self.layout();
        let w = self.words[i / per_word];
        let shift = (i % per_word) as u32 * bits;
        ((w >> shift) & ((1u64 << bits) - 1)) as u8
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = u8> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_symbols(&self) -> Vec<u8> {
        self.iter().collect()
    }

    /// The subblock of `len` symbols starting at 0-based `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Block> {
        if len == 0 || start + len > self.len {
            return Err(ForgeError::invalid(format!(
                "slice [{start}, {}) of a block of length {}",
                start + len,
                self.len
            )));
        }
        let mut b = BlockBuilder::with_capacity(self.alphabet as usize, len);
        for i in start..start + len {
            b.push(self.get(i));
        }
        Ok(b.finish())
    }

    /// Cuts the block into consecutive pieces of length `piece_len`.
    pub fn split(&self, piece_len: usize) -> Result<Vec<Block>> {
        if piece_len == 0 || !self.len.is_multiple_of(piece_len) {
            return Err(ForgeError::invalid(format!(
                "a block of length {} does not split into pieces of length {piece_len}",
                self.len
            )));
        }
        (0..self.len / piece_len)
            .map(|i| self.slice(i * piece_len, piece_len))
            .collect()
    }

    /// Base-N index of the window `[start, start + n)`, first symbol most significant.
    #[inline]
    pub fn window_index(&self, start: usize, n: usize) -> usize {
        let base = self.alphabet as usize;
        (start..start + n).fold(0, |acc, i| acc * base + self.get(i) as usize)
    }

    pub fn parse(text: &str, alphabet: usize) -> Result<Block> {
        if alphabet > MAX_DIGIT_ALPHABET {
            return Err(ForgeError::invalid(format!(
                "digit serialisation supports alphabets up to {MAX_DIGIT_ALPHABET}"
            )));
        }
        let symbols = text
            .trim()
            .chars()
            .map(|c| {
                c.to_digit(alphabet as u32)
                    .map(|d| d as u8)
                    .ok_or_else(|| ForgeError::invalid(format!("{c:?} is not a base-{alphabet} digit")))
            })
            .collect::<Result<Vec<u8>>>()?;
        Block::new(&symbols, alphabet)
    }

    pub fn to_digits(&self) -> String {
        self.iter()
            .map(|s| char::from_digit(s as u32, MAX_DIGIT_ALPHABET as u32).unwrap_or('?'))
            .collect()
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block[N={}]({})", self.alphabet, self.to_digits())
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_digits())
    }
}

pub(crate) fn check_alphabet(alphabet: usize) -> Result<()> {
    if !(2..=MAX_ALPHABET).contains(&alphabet) {
        return Err(ForgeError::invalid(format!(
            "alphabet size must lie in 2..={MAX_ALPHABET}, got {alphabet}"
        )));
    }
    Ok(())
}

/// Appends symbols into a packed [`Block`]. Symbols are not range checked.
pub(crate) struct BlockBuilder {
    alphabet: u16,
    bits: u32,
    per_word: usize,
    len: usize,
    words: Vec<u64>,
}

impl BlockBuilder {
    pub(crate) fn with_capacity(alphabet: usize, len: usize) -> Self {
        let bits = bits_per_symbol(alphabet);
        let per_word = (64 / bits) as usize;
        BlockBuilder {
            alphabet: alphabet as u16,
            bits,
            per_word,
            len: 0,
            words: Vec::with_capacity(len.div_ceil(per_word)),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, s: u8) {
        let slot = self.len % self.per_word;
        if slot == 0 {
            self.words.push(0);
        }
        *self.words.last_mut().unwrap() |= (s as u64) << (slot as u32 * self.bits);
        self.len += 1;
    }

    pub(crate) fn extend(&mut self, b: &Block) {
        for s in b.iter() {
            self.push(s);
        }
    }

    pub(crate) fn finish(self) -> Block {
        Block {
            alphabet: self.alphabet,
            len: self.len,
            words: self.words,
        }
    }
}

/// A block over `{-1, +1}`, the output of a code.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignBlock {
    signs: Vec<i8>,
}

impl SignBlock {
    pub fn new(signs: Vec<i8>) -> Result<SignBlock> {
        if let Some(s) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(ForgeError::invalid(format!("sign blocks hold only ±1, found {s}")));
        }
        Ok(SignBlock { signs })
    }

    pub(crate) fn from_trusted(signs: Vec<i8>) -> SignBlock {
        SignBlock { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| s as f64).collect()
    }

    /// Bitmask of the `+1` positions, bit `i` of word `i / 64`.
    pub(crate) fn plus_mask(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.signs.len().div_ceil(64)];
        for (i, &s) in self.signs.iter().enumerate() {
            if s > 0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        words
    }
}
