use crate::error::{Error, Result};

/// Dense joint alphabets above this many entries are refused rather than
/// materialized.
pub const MATERIALIZE_CAP: usize = 1 << 26;

/// Mixed-radix codec for a joint alphabet over an ordered occasion list.
///
/// The first-listed occasion is the most significant digit; all modules
/// agree on this encoding bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Radix {
    sizes: Vec<usize>,
}

impl Radix {
    pub fn new(sizes: Vec<usize>) -> Self {
        debug_assert!(sizes.iter().all(|&s| s >= 1));
        Radix { sizes }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Joint alphabet size, or an error above `cap`.
    pub fn size_capped(&self, cap: usize, what: &'static str) -> Result<usize> {
        let mut n: u128 = 1;
        for &s in &self.sizes {
            n = n.saturating_mul(s as u128);
            if n > cap as u128 {
                return Err(Error::Tractability {
                    what,
                    needed: n,
                    cap: cap as u128,
                });
            }
        }
        Ok(n as usize)
    }

    /// Joint size; panics on overflow (callers with untrusted sizes use
    /// [`Radix::size_capped`]).
    pub fn size(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.sizes.len());
        let mut idx = 0;
        for (d, s) in digits.iter().zip(&self.sizes) {
            debug_assert!(d < s);
            idx = idx * s + d;
        }
        idx
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &s) in self.sizes.iter().enumerate().rev() {
            out[slot] = index % s;
            index /= s;
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        self.decode_into(index, &mut out);
        out
    }

    /// Digit of `index` at `slot`.
    pub fn digit(&self, index: usize, slot: usize) -> usize {
        let tail: usize = self.sizes[slot + 1..].iter().product();
        (index / tail) % self.sizes[slot]
    }

    /// Sub-codec over the given slots (in the given order).
    pub fn project(&self, slots: &[usize]) -> Radix {
        Radix::new(slots.iter().map(|&s| self.sizes[s]).collect())
    }

    /// Joint index over `slots` extracted from a full `index`.
    pub fn extract(&self, index: usize, slots: &[usize]) -> usize {
        let mut idx = 0;
        for &slot in slots {
            idx = idx * self.sizes[slot] + self.digit(index, slot);
        }
        idx
    }

    /// Scatter a joint index over `slots` into a full digit buffer.
    pub fn scatter(&self, slots: &[usize], mut sub: usize, digits: &mut [usize]) {
        for &slot in slots.iter().rev() {
            digits[slot] = sub % self.sizes[slot];
            sub /= self.sizes[slot];
        }
    }

    /// Full joint index assembled from digits over `slots` (joint `sub`)
    /// and digits over `rest_slots` (joint `rest`).
    pub fn combine(&self, slots: &[usize], sub: usize, rest_slots: &[usize], rest: usize) -> usize {
        let mut digits = vec![0usize; self.sizes.len()];
        self.scatter(slots, sub, &mut digits);
        self.scatter(rest_slots, rest, &mut digits);
        self.encode(&digits)
    }
}
