//! Survival vectors: which components of the system are still running.
//!
//! Component `k` (zero-based) is alive iff bit `k` is set. Masks are ordered
//! lexicographically on the component tuple `(i_1, ..., i_N)`, component 1
//! being the most significant, which is the order used for tie-breaking.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SurvivalVector {
    bits: u32,
    len: u8,
}

impl SurvivalVector {
    pub const MAX_COMPONENTS: usize = 32;

    pub fn all_alive(len: usize) -> Self {
        assert!(len <= Self::MAX_COMPONENTS, "at most 32 components");
        let bits = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
        Self {
            bits,
            len: len as u8,
        }
    }

    pub fn all_stopped(len: usize) -> Self {
        assert!(len <= Self::MAX_COMPONENTS, "at most 32 components");
        Self {
            bits: 0,
            len: len as u8,
        }
    }

    /// Builds a mask from raw bits; bits above `len` must be clear.
    pub fn from_bits(bits: u32, len: usize) -> Result<Self> {
        if len > Self::MAX_COMPONENTS {
            return Err(Error::Config(format!("{len} components exceeds 32")));
        }
        if len < 32 && bits >> len != 0 {
            return Err(Error::Contract(format!(
                "mask {bits:#b} has bits set above component count {len}"
            )));
        }
        Ok(Self {
            bits,
            len: len as u8,
        })
    }

    pub fn from_flags(flags: &[bool]) -> Self {
        let mut v = Self::all_stopped(flags.len());
        for (k, &alive) in flags.iter().enumerate() {
            if alive {
                v.bits |= 1 << k;
            }
        }
        v
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn len(self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_alive(self, k: usize) -> bool {
        debug_assert!(k < self.len());
        self.bits >> k & 1 == 1
    }

    #[inline]
    pub fn count_alive(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn none_alive(self) -> bool {
        self.bits == 0
    }

    /// `self <= other` coordinate-wise.
    #[inline]
    pub fn is_submask_of(self, other: Self) -> bool {
        self.len == other.len && self.bits & !other.bits == 0
    }

    /// Returns a copy with component `k` (zero-based) marked stopped.
    #[inline]
    pub fn stop(self, k: usize) -> Self {
        debug_assert!(k < self.len());
        Self {
            bits: self.bits & !(1 << k),
            len: self.len,
        }
    }

    /// Components alive in `self` but not in `next`.
    #[inline]
    pub fn stopped_between(self, next: Self) -> impl Iterator<Item = usize> {
        let diff = self.bits & !next.bits;
        (0..self.len()).filter(move |&k| diff >> k & 1 == 1)
    }

    /// Writes the mask as 0/1 reals.
    pub fn write_f64(self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        for (k, o) in out.iter_mut().enumerate() {
            *o = (self.bits >> k & 1) as f64;
        }
    }

    pub fn to_flags(self) -> Vec<bool> {
        (0..self.len()).map(|k| self.is_alive(k)).collect()
    }

    /// Every mask over `len` components, `0..2^len` in bit order.
    pub fn all_masks(len: usize) -> impl Iterator<Item = Self> {
        assert!(len < 32, "cannot enumerate 2^32 masks");
        (0..1u32 << len).map(move |bits| Self {
            bits,
            len: len as u8,
        })
    }

    #[inline]
    fn reversed_bits(self) -> u32 {
        if self.len == 0 {
            0
        } else {
            self.bits.reverse_bits() >> (32 - self.len as u32)
        }
    }

    #[inline]
    fn from_reversed(rev: u32, len: u8) -> Self {
        let bits = if len == 0 {
            0
        } else {
            rev.reverse_bits() >> (32 - len as u32)
        };
        Self { bits, len }
    }
}

impl fmt::Debug for SurvivalVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SurvivalVector{self}")
    }
}

impl fmt::Display for SurvivalVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for k in 0..self.len() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", self.bits >> k & 1)?;
        }
        write!(f, ")")
    }
}

/// Iterator over all submasks of a mask, in descending lexicographic order
/// (the mask itself first, the empty mask last).
#[derive(Clone, Debug)]
pub struct Submasks {
    support: u32,
    next: Option<u32>,
    len: u8,
}

impl Iterator for Submasks {
    type Item = SurvivalVector;

    #[inline]
    fn next(&mut self) -> Option<SurvivalVector> {
        let cur = self.next?;
        self.next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & self.support)
        };
        Some(SurvivalVector::from_reversed(cur, self.len))
    }
}

pub fn submasks(i: SurvivalVector) -> Submasks {
    let support = i.reversed_bits();
    Submasks {
        support,
        next: Some(support),
        len: i.len,
    }
}

/// All `i' <= i`, exactly `2^|i|_1` of them, `i` first.
pub fn enumerate_submasks(i: SurvivalVector) -> Vec<SurvivalVector> {
    submasks(i).collect()
}

/// `i^{-l}`: `l = 0` leaves `i` unchanged, `l in 1..=N` clears component `l`
/// (one-based, idempotent on already stopped components).
pub fn drop_one(i: SurvivalVector, l: usize) -> Result<SurvivalVector> {
    if l > i.len() {
        return Err(Error::Contract(format!(
            "drop index {l} outside [0, {}]",
            i.len()
        )));
    }
    Ok(if l == 0 { i } else { i.stop(l - 1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(flags: &[u8]) -> SurvivalVector {
        SurvivalVector::from_flags(&flags.iter().map(|&b| b == 1).collect::<Vec<_>>())
    }

    #[test]
    fn submask_order_matches_lexicographic_descent() {
        let got = enumerate_submasks(sv(&[1, 0, 1]));
        assert_eq!(
            got,
            vec![sv(&[1, 0, 1]), sv(&[1, 0, 0]), sv(&[0, 0, 1]), sv(&[0, 0, 0])]
        );
    }

    #[test]
    fn empty_mask_has_single_submask() {
        assert_eq!(
            enumerate_submasks(SurvivalVector::all_stopped(4)),
            vec![SurvivalVector::all_stopped(4)]
        );
    }

    #[test]
    fn full_mask_of_ten_has_1024_distinct_submasks() {
        let full = SurvivalVector::all_alive(10);
        let subs = enumerate_submasks(full);
        assert_eq!(subs.len(), 1024);
        let mut bits: Vec<u32> = subs.iter().map(|s| s.bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        assert_eq!(bits.len(), 1024);
        assert!(subs.iter().all(|s| s.is_submask_of(full)));
    }

    #[test]
    fn drop_one_cases() {
        let i = sv(&[1, 1, 0]);
        assert_eq!(drop_one(i, 1).unwrap(), sv(&[0, 1, 0]));
        assert_eq!(drop_one(i, 0).unwrap(), i);
        assert_eq!(drop_one(i, 3).unwrap(), i);
        assert!(drop_one(i, 4).is_err());
    }

    #[test]
    fn from_bits_rejects_high_bits() {
        assert!(SurvivalVector::from_bits(0b1000, 3).is_err());
        assert!(SurvivalVector::from_bits(0b111, 3).is_ok());
    }

    #[test]
    fn display_lists_components() {
        assert_eq!(sv(&[1, 0, 1]).to_string(), "(1,0,1)");
    }
}
