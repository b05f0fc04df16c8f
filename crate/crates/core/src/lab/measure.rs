use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::symbolic::{occurrence_counts, Block};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSource {
    Block,
    SampledOrbit,
    Table,
}

/// Cylinder frequencies of every block of length `1..=depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub alphabet: usize,
    pub depth: usize,
    /// Length of the generating block, 0 for hand-made tables.
    pub source_len: usize,
    pub source: MeasureSource,
    /// `tables[n - 1][index of D]` for `|D| = n`.
    tables: Vec<Vec<f64>>,
}

/// `table[D] = freq(C, D)` for all `|D| <= depth`.
pub fn empirical_measure(c: &Block, depth: usize) -> Result<EmpiricalMeasure> {
    empirical_measure_from(c, depth, MeasureSource::Block)
}

pub(crate) fn empirical_measure_from(c: &Block, depth: usize, source: MeasureSource) -> Result<EmpiricalMeasure> {
    if depth == 0 || c.len() < depth {
        return Err(ForgeError::invalid(format!(
            "depth {depth} needs a block of at least that length, got {}",
            c.len()
        )));
    }
    let len = c.len() as f64;
    let tables = (1..=depth)
        .map(|n| Ok(occurrence_counts(c, n)?.into_iter().map(|x| x as f64 / len).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalMeasure {
        alphabet: c.alphabet_size(),
        depth,
        source_len: c.len(),
        source,
        tables,
    })
}

impl EmpiricalMeasure {
    /// A measure given directly by its tables; `tables[n - 1]` has `N^n` entries.
    pub fn from_tables(alphabet: usize, tables: Vec<Vec<f64>>) -> Result<EmpiricalMeasure> {
        if tables.is_empty() {
            return Err(ForgeError::invalid("at least one table is needed"));
        }
        for (i, t) in tables.iter().enumerate() {
            if t.len() != alphabet.pow(i as u32 + 1) {
                return Err(ForgeError::invalid(format!("table {} has the wrong size", i + 1)));
            }
            if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(ForgeError::invalid("frequencies lie in [0, 1]"));
            }
        }
        Ok(EmpiricalMeasure {
            alphabet,
            depth: tables.len(),
            source_len: 0,
            source: MeasureSource::Table,
            tables,
        })
    }

    pub fn table(&self, n: usize) -> &[f64] {
        &self.tables[n - 1]
    }

    pub fn get(&self, d: &Block) -> Option<f64> {
        if d.is_empty() || d.len() > self.depth || d.alphabet_size() != self.alphabet {
            return None;
        }
        Some(self.tables[d.len() - 1][d.window_index(0, d.len())])
    }

    /// `max_D |mu(D) - nu(D)|` over blocks of length `n`.
    pub fn sup_difference(&self, other: &EmpiricalMeasure, n: usize) -> f64 {
        self.table(n)
            .iter()
            .zip(other.table(n))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Each length-`n` table sums into `[1 - (n-1)/len, 1]`.
    pub fn normalisation_holds(&self) -> bool {
        (1..=self.depth).all(|n| {
            let s: f64 = self.table(n).iter().sum();
            let low = if self.source_len > 0 {
                1.0 - (n as f64 - 1.0) / self.source_len as f64
            } else {
                0.0
            };
            s <= 1.0 + 1e-12 && s >= low - 1e-12
        })
    }

    /// `mu(D') >= sum_s mu(D' s) - 1/len` for every one-symbol extension.
    pub fn consistency_holds(&self) -> bool {
        let slack = if self.source_len > 0 {
            1.0 / self.source_len as f64
        } else {
            1.0
        };
        (1..self.depth).all(|n| {
            let short = self.table(n);
            let long = self.table(n + 1);
            short.iter().enumerate().all(|(i, &v)| {
                let ext: f64 = long[i * self.alphabet..(i + 1) * self.alphabet].iter().sum();
                v + slack + 1e-12 >= ext && ext + slack + 1e-12 >= v
            })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    /// `sum_{n <= n_max} 2^-n sum_D |mu(D) - nu(D)|`.
    pub value: f64,
    /// `2 * 2^-n_max`, bounding the omitted lengths.
    pub tail_bound: f64,
}

pub fn measure_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, n_max: usize) -> Result<Distance> {
    if n_max == 0 || mu.depth < n_max || nu.depth < n_max {
        return Err(ForgeError::invalid(format!(
            "distance to depth {n_max} needs both measures that deep (have {} and {})",
            mu.depth, nu.depth
        )));
    }
    if mu.alphabet != nu.alphabet {
        return Err(ForgeError::invalid("measures over different alphabets"));
    }
    let mut value = 0.0;
    let mut weight = 1.0;
    for n in 1..=n_max {
        weight *= 0.5;
        let s: f64 = mu.table(n).iter().zip(nu.table(n)).map(|(a, b)| (a - b).abs()).sum();
        value += weight * s;
    }
    Ok(Distance {
        value,
        tail_bound: 2.0 * weight,
    })
}

/// `N^n theta + 2^(1-n)`.
pub fn closeness_bound(alphabet: usize, n: usize, theta: f64) -> f64 {
    (alphabet as f64).powi(n as i32) * theta + 2f64.powi(1 - n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let m = empirical_measure(&Block::parse("010", 2).unwrap(), 1).unwrap();
        assert_eq!(m.table(1), &[2.0 / 3.0, 1.0 / 3.0]);
        let a = empirical_measure(&Block::parse("0000", 2).unwrap(), 2).unwrap();
        assert_eq!(a.table(2), &[0.75, 0.0, 0.0, 0.0]);
        assert!(a.normalisation_holds() && a.consistency_holds());
        assert!(empirical_measure(&Block::parse("01", 2).unwrap(), 3).is_err());
    }

    #[test]
    fn opposite_constants_are_far_apart() {
        let depth = 5;
        let point = |s: usize| {
            (1..=depth)
                .map(|n| {
                    let size = 2usize.pow(n as u32);
                    let mut t = vec![0.0; size];
                    t[if s == 0 { 0 } else { size - 1 }] = 1.0;
                    t
                })
                .collect::<Vec<_>>()
        };
        let a = EmpiricalMeasure::from_tables(2, point(0)).unwrap();
        let b = EmpiricalMeasure::from_tables(2, point(1)).unwrap();
        let d = measure_distance(&a, &b, depth).unwrap();
        assert_eq!(d.value, 2.0 * (1.0 - 0.5f64.powi(depth as i32)));
        assert_eq!(measure_distance(&a, &a, depth).unwrap().value, 0.0);
    }
}
