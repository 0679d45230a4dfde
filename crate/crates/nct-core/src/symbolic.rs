//! Words over `{1..N}`, the shift, reversal, common prefixes, and Bernoulli
//! measures on cylinders.
//!
//! Infinite words are represented as a finite prefix plus a periodic tail
//! (eventually periodic words are dense in the full shift, and every
//! computation here needs only a finite prefix with a controlled tail).
//!
//! Serialization: words print as digit strings for alphabets up to 9 symbols
//! and comma-separated integers otherwise; tailed words as `prefix:(tail)`.

use crate::{Error, Result};

/// Finite word over `{1..N}`. The empty word is the identity under
/// concatenation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds from 1-based symbols, checking the range `1..=n_maps`.
    pub fn new(symbols: &[u8], n_maps: usize) -> Result<Self> {
        for &s in symbols {
            if s == 0 || s as usize > n_maps {
                return Err(Error::InvalidArg(format!(
                    "symbol {s} out of range 1..={n_maps}"
                )));
            }
        }
        Ok(Word(symbols.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn reversed(&self) -> Word {
        let mut v = self.0.clone();
        v.reverse();
        Word(v)
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Renders using the serialization convention for an `n_maps`-symbol
    /// alphabet.
    pub fn display(&self, n_maps: usize) -> String {
        if self.0.is_empty() {
            return String::new();
        }
        if n_maps <= 9 {
            self.0.iter().map(|s| char::from(b'0' + s)).collect()
        } else {
            self.0
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
    }

    /// Parses either a digit string (`"121"`) or comma-separated integers
    /// (`"1,2,1"`).
    pub fn parse(text: &str, n_maps: usize) -> Result<Word> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Word::empty());
        }
        // Wide alphabets always use the comma form, even for one symbol.
        let symbols: Vec<u8> = if n_maps > 9 || text.contains(',') {
            text.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<u8>()
                        .map_err(|_| Error::InvalidArg(format!("bad symbol `{p}`")))
                })
                .collect::<Result<_>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as u8)
                        .ok_or_else(|| Error::InvalidArg(format!("bad symbol `{c}`")))
                })
                .collect::<Result<_>>()?
        };
        Word::new(&symbols, n_maps)
    }
}

/// Infinite word: finite prefix followed by a repeating non-empty tail.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TailedWord {
    prefix: Word,
    tail: Word,
}

impl TailedWord {
    pub fn new(prefix: Word, tail: Word) -> Result<Self> {
        if tail.is_empty() {
            return Err(Error::InvalidArg("tail must be non-empty".into()));
        }
        Ok(TailedWord { prefix, tail })
    }

    /// Prefix with the default constant tail `1`.
    pub fn from_prefix(prefix: Word) -> Self {
        TailedWord {
            prefix,
            tail: Word(vec![1]),
        }
    }

    /// Constant word `s^infinity`.
    pub fn constant(s: u8, n_maps: usize) -> Result<Self> {
        Ok(TailedWord {
            prefix: Word::empty(),
            tail: Word::new(&[s], n_maps)?,
        })
    }

    pub fn prefix(&self) -> &Word {
        &self.prefix
    }

    pub fn tail(&self) -> &Word {
        &self.tail
    }

    /// 0-based symbol access.
    #[inline]
    pub fn symbol(&self, k: usize) -> u8 {
        if k < self.prefix.len() {
            self.prefix.0[k]
        } else {
            self.tail.0[(k - self.prefix.len()) % self.tail.len()]
        }
    }

    /// First `n` symbols as a finite word.
    pub fn truncate(&self, n: usize) -> Word {
        Word((0..n).map(|k| self.symbol(k)).collect())
    }

    /// Left shift: drops the first symbol.
    pub fn shift(&self) -> TailedWord {
        if self.prefix.is_empty() {
            let mut t = self.tail.0.clone();
            t.rotate_left(1);
            TailedWord {
                prefix: Word::empty(),
                tail: Word(t),
            }
        } else {
            TailedWord {
                prefix: Word(self.prefix.0[1..].to_vec()),
                tail: self.tail.clone(),
            }
        }
    }

    /// Shift applied `n` times.
    pub fn shift_n(&self, n: usize) -> TailedWord {
        let mut w = self.clone();
        for _ in 0..n {
            w = w.shift();
        }
        w
    }

    /// Prepends a finite word.
    pub fn prepend(&self, head: &Word) -> TailedWord {
        TailedWord {
            prefix: head.concat(&self.prefix),
            tail: self.tail.clone(),
        }
    }

    pub fn display(&self, n_maps: usize) -> String {
        format!(
            "{}:({})",
            self.prefix.display(n_maps),
            self.tail.display(n_maps)
        )
    }

    /// Parses `prefix:(tail)`, or a bare prefix with the default tail `1`.
    pub fn parse(text: &str, n_maps: usize) -> Result<TailedWord> {
        let text = text.trim();
        if let Some((pre, rest)) = text.split_once(':') {
            let rest = rest.trim();
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::InvalidArg(format!("expected `prefix:(tail)`, got `{text}`")))?;
            TailedWord::new(Word::parse(pre, n_maps)?, Word::parse(inner, n_maps)?)
        } else {
            Ok(TailedWord::from_prefix(Word::parse(text, n_maps)?))
        }
    }
}

/// Longest common prefix of two infinite words, truncated at `max_depth`.
/// The flag reports whether truncation was hit.
pub fn common_prefix(i: &TailedWord, j: &TailedWord, max_depth: usize) -> Result<(Word, bool)> {
    if max_depth == 0 {
        return Err(Error::InvalidArg("max_depth must be >= 1".into()));
    }
    let mut out = Vec::new();
    for k in 0..max_depth {
        let a = i.symbol(k);
        if a != j.symbol(k) {
            return Ok((Word(out), false));
        }
        out.push(a);
    }
    Ok((Word(out), true))
}

/// Probability vector on `{1..N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliWeights(Vec<f64>);

impl BernoulliWeights {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidArg("weights must be non-empty".into()));
        }
        if p.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArg("weights must be non-negative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArg(format!(
                "weights must sum to 1 (got {total})"
            )));
        }
        Ok(BernoulliWeights(p))
    }

    pub fn uniform(n: usize) -> Self {
        BernoulliWeights(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weight of a 1-based symbol.
    #[inline]
    pub fn weight(&self, symbol: u8) -> f64 {
        self.0[symbol as usize - 1]
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

/// Bernoulli mass of the cylinder `[w]`: the product of the symbol weights.
/// The empty word has mass 1.
pub fn cylinder_mass(p: &BernoulliWeights, w: &Word) -> f64 {
    w.symbols().iter().map(|&s| p.weight(s)).product()
}

/// Default cap on enumerated words (bounds memory/time for word sums).
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;

/// `N^n` as f64 for cap checks (exact for everything under the cap).
pub fn word_count(n_maps: usize, len: usize) -> f64 {
    (n_maps as f64).powi(len as i32)
}

/// Errors unless `N^n` fits under `cap`.
pub fn check_cap(n_maps: usize, len: usize, cap: u64) -> Result<()> {
    let needed = word_count(n_maps, len);
    if needed > cap as f64 {
        return Err(Error::CapExceeded { needed, cap });
    }
    Ok(())
}

/// Streams all words of length `n` in lexicographic order.
pub fn enumerate_words(
    n_maps: usize,
    n: usize,
    cap: u64,
) -> Result<impl Iterator<Item = Word>> {
    check_cap(n_maps, n, cap)?;
    let mut current: Option<Vec<u8>> = Some(vec![1u8; n]);
    let iter = std::iter::from_fn(move || {
        let word = current.clone()?;
        // Odometer increment, least-significant symbol on the right.
        let next = {
            let mut w = word.clone();
            let mut k = n;
            loop {
                if k == 0 {
                    break None;
                }
                if w[k - 1] < n_maps as u8 {
                    w[k - 1] += 1;
                    break Some(w);
                }
                w[k - 1] = 1;
                k -= 1;
            }
        };
        current = next;
        Some(Word(word))
    });
    Ok(iter)
}
