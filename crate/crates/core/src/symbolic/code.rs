use std::fmt;

use serde::{Deserialize, Serialize};

use super::block::{check_alphabet, Block};
use crate::error::{ForgeError, Result};

/// Largest `N^w` for which [`enumerate_codes`] will list all `2^(N^w)` tables.
pub const MAX_ENUMERATED_TABLE: usize = 16;

/// A ±1-valued function of `window` consecutive symbols.
///
/// `table[i]` is the value on the window whose base-N index is `i`
/// (lexicographic order, first symbol most significant).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Code {
    id: u32,
    window: usize,
    alphabet: u16,
    table: Vec<i8>,
}

impl Code {
    pub fn new(id: u32, window: usize, alphabet: usize, table: Vec<i8>) -> Result<Code> {
        check_alphabet(alphabet)?;
        if window == 0 {
            return Err(ForgeError::invalid("code windows have length >= 1"));
        }
        let size = table_size(alphabet, window)
            .ok_or_else(|| ForgeError::Capacity(format!("N^w overflows for N={alphabet}, w={window}")))?;
        if table.len() != size {
            return Err(ForgeError::invalid(format!(
                "a window-{window} code over {alphabet} symbols needs {size} table entries, got {}",
                table.len()
            )));
        }
        if table.iter().any(|&s| s != 1 && s != -1) {
            return Err(ForgeError::invalid("code tables hold only ±1"));
        }
        Ok(Code {
            id,
            window,
            alphabet: alphabet as u16,
            table,
        })
    }

    pub fn constant(id: u32, alphabet: usize, sign: i8) -> Result<Code> {
        Code::new(id, 1, alphabet, vec![sign; alphabet])
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet as usize
    }

    pub fn table(&self) -> &[i8] {
        &self.table
    }

    pub fn is_constant(&self) -> bool {
        self.table.iter().all(|&s| s == self.table[0])
    }

    #[inline]
    pub fn eval_index(&self, index: usize) -> i8 {
        self.table[index]
    }

    /// Value on the window of `b` starting at 0-based `start`.
    pub fn eval_at(&self, b: &Block, start: usize) -> i8 {
        self.table[b.window_index(start, self.window)]
    }

    /// The same function with the sign flipped.
    pub fn negated(&self) -> Code {
        Code {
            table: self.table.iter().map(|&s| -s).collect(),
            ..self.clone()
        }
    }

    /// `w:<window>;table:<+/- per window in lexicographic order>`.
    pub fn serialize(&self) -> String {
        let signs: String = self.table.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
        format!("w:{};table:{signs}", self.window)
    }

    pub fn parse(text: &str, id: u32, alphabet: usize) -> Result<Code> {
        let bad = || ForgeError::invalid(format!("malformed code {text:?}"));
        let (w, table) = text.trim().split_once(';').ok_or_else(bad)?;
        let window: usize = w.strip_prefix("w:").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let signs = table
            .strip_prefix("table:")
            .ok_or_else(bad)?
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(bad()),
            })
            .collect::<Result<Vec<i8>>>()?;
        Code::new(id, window, alphabet, signs)
    }

    /// True when the value ignores the last symbol of the window.
    fn factors_through_prefix(&self) -> bool {
        let n = self.alphabet as usize;
        self.window > 1 && self.table.chunks(n).all(|chunk| chunk.iter().all(|&s| s == chunk[0]))
    }
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Code#{}({})", self.id, self.serialize())
    }
}

fn table_size(alphabet: usize, window: usize) -> Option<usize> {
    u32::try_from(window).ok().and_then(|w| alphabet.checked_pow(w))
}

/// A finite family `F_k` of codes used at one construction step.
#[derive(Clone, Debug)]
pub struct CodeFamily {
    pub step: u32,
    pub codes: Vec<Code>,
}

impl CodeFamily {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn max_window(&self) -> usize {
        self.codes.iter().map(Code::window).max().unwrap_or(0)
    }

    pub fn contains(&self, code: &Code) -> bool {
        self.codes
            .iter()
            .any(|c| c.table == code.table && c.window == code.window)
    }

    /// One representative per `{f, -f}` pair; `|corr(f)| = |corr(-f)|`.
    pub fn sign_representatives(&self) -> Vec<&Code> {
        let mut seen: Vec<&Code> = Vec::new();
        for c in &self.codes {
            let dup = seen
                .iter()
                .any(|s| s.window == c.window && s.table.iter().zip(&c.table).all(|(a, b)| *a == -*b));
            if !dup {
                seen.push(c);
            }
        }
        seen
    }

    pub fn with_step(mut self, step: u32) -> Self {
        self.step = step;
        self
    }
}

/// Every ±1 function of at most `w_max` symbols, listed once each.
///
/// A window-`w` table whose value ignores the last symbol is the same
/// function as a window-`(w-1)` code and is skipped. Ids are assigned in
/// listing order, so `enumerate_codes(N, w)` is a prefix of
/// `enumerate_codes(N, w + 1)`.
pub fn enumerate_codes(alphabet: usize, w_max: usize) -> Result<CodeFamily> {
    check_alphabet(alphabet)?;
    if w_max == 0 {
        return Err(ForgeError::invalid("w_max must be >= 1"));
    }
    let size = table_size(alphabet, w_max)
        .filter(|&s| s <= MAX_ENUMERATED_TABLE)
        .ok_or_else(|| {
            ForgeError::Capacity(format!(
                "N^w_max must be <= {MAX_ENUMERATED_TABLE} to enumerate all codes \
             (N={alphabet}, w_max={w_max}); supply an explicit code list instead"
            ))
        })?;
    debug_assert!(size <= MAX_ENUMERATED_TABLE);
    let mut codes = Vec::new();
    let mut next_id = 0u32;
    for w in 1..=w_max {
        let entries = table_size(alphabet, w).unwrap();
        for bits in 0u64..(1u64 << entries) {
            let table = (0..entries)
                .map(|i| if (bits >> i) & 1 == 0 { 1 } else { -1 })
                .collect();
            let code = Code {
                id: next_id,
                window: w,
                alphabet: alphabet as u16,
                table,
            };
            if code.factors_through_prefix() {
                continue;
            }
            codes.push(code);
            next_id += 1;
        }
    }
    Ok(CodeFamily { step: 0, codes })
}

/// Window schedule `w_k`: 1 before `switch_at`, 2 from then on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CodeWindows {
    #[serde(default)]
    pub switch_at: Option<u32>,
}

impl CodeWindows {
    pub fn window(&self, k: u32) -> usize {
        match self.switch_at {
            Some(k1) if k >= k1 => 2,
            _ => 1,
        }
    }

    pub fn family(&self, alphabet: usize, k: u32) -> Result<CodeFamily> {
        Ok(enumerate_codes(alphabet, self.window(k))?.with_step(k))
    }
}
