//! Order-independent floating point accumulation.
//!
//! Every reduction in the optimizer goes through [`FixedSum`]. Each term is
//! truncated once onto a 2^-62 grid and accumulated as an `i128`, so the
//! result depends only on the multiset of terms: permuting rows or model
//! columns, or splitting the work across threads, yields bit-identical sums.

use std::iter::Sum;
use std::ops::AddAssign;

const FRACTION_BITS: u32 = 62;
const SCALE: f64 = (1u64 << FRACTION_BITS) as f64;
/// Largest magnitude a single term may have without overflowing one `i128` slot.
pub const MAX_TERM: f64 = (1u64 << 40) as f64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FixedSum {
    acc: i128,
}

impl FixedSum {
    pub const ZERO: FixedSum = FixedSum { acc: 0 };

    #[inline]
    pub fn add(&mut self, x: f64) {
        debug_assert!(x.is_finite() && x.abs() < MAX_TERM, "term out of range: {x}");
        // Integer and fractional parts separately; `as` truncates, which is
        // as deterministic as rounding and far cheaper than an f64 -> i128 cast.
        let whole = x as i64;
        let frac = ((x - whole as f64) * SCALE) as i64;
        self.acc += ((whole as i128) << FRACTION_BITS) + frac as i128;
    }

    #[inline]
    pub fn merge(&mut self, other: FixedSum) {
        self.acc += other.acc;
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.acc as f64 / SCALE
    }
}

impl AddAssign<f64> for FixedSum {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

impl AddAssign<FixedSum> for FixedSum {
    fn add_assign(&mut self, rhs: FixedSum) {
        self.merge(rhs);
    }
}

impl Sum<f64> for FixedSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut s = FixedSum::ZERO;
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Convenience: order-independent sum of an iterator.
pub fn fixed_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().sum::<FixedSum>().value()
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sums_small_integers_exactly() {
        assert_eq!(fixed_sum([1.0, 2.0, 3.5, -0.5]), 6.0);
        assert_eq!(fixed_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn sigmoid_and_softplus_agree() {
        for &x in &[-40.0, -3.0, -0.1, 0.0, 0.7, 5.0, 40.0] {
            let s: f64 = sigmoid(x);
            assert!((s.ln() + softplus(-x)).abs() < 1e-12);
        }
        assert!((sigmoid(0.5) - 0.622_459_331_201_854_6).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn permutation_does_not_change_the_sum(
            xs in prop::collection::vec(-1e3f64..1e3, 0..60),
            seed in any::<u64>(),
        ) {
            let mut ys = xs.clone();
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..ys.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                ys.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(fixed_sum(xs.iter().copied()).to_bits(), fixed_sum(ys).to_bits());
        }

        #[test]
        fn doubling_terms_doubles_the_sum(xs in prop::collection::vec(-1e3f64..1e3, 0..60)) {
            let once = fixed_sum(xs.iter().copied());
            let twice = fixed_sum(xs.iter().chain(xs.iter()).copied());
            prop_assert_eq!((2.0 * once).to_bits(), twice.to_bits());
        }

        #[test]
        fn close_to_naive_sum(xs in prop::collection::vec(-1e3f64..1e3, 0..60)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((fixed_sum(xs.iter().copied()) - naive).abs() < 1e-9);
        }
    }
}
