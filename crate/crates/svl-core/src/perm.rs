//! Exact fractional permissions in `[0, 1]`.
//!
//! A permission is a rational kept in lowest terms. The interval includes 0,
//! and a zero permission to a location is the same as owning nothing at all;
//! heap normalization relies on that identity. Two operations matter beyond
//! ordinary rational arithmetic:
//!
//! * addition is partial: a sum above 1 signals an inconsistent heap and is
//!   reported as [`FracError::ExceedsOne`];
//! * cut-off subtraction is total: `a - b` is clamped to 0 when `b > a`.
//!
//! The type is generic over the integer backend so the same arithmetic runs
//! on fixed-width integers in tests and on arbitrary-precision integers in
//! the verifier (see the [`Perm`](crate::Perm) alias at the crate root).

use num_integer::Integer;
use num_traits::{CheckedAdd, CheckedMul};
use std::cmp::Ordering;
use std::fmt;
use std::hash::Hash;

/// Integer backends usable as numerator/denominator of a [`Fraction`].
pub trait PermInt:
    Integer + CheckedAdd + CheckedMul + Clone + Hash + fmt::Debug + fmt::Display + From<u32>
{
}

impl<T> PermInt for T where
    T: Integer + CheckedAdd + CheckedMul + Clone + Hash + fmt::Debug + fmt::Display + From<u32>
{
}

/// Errors from permission arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FracError {
    /// The result would leave `[0, 1]`; for addition this means the heap
    /// holds more than full permission to a location.
    #[error("permission outside [0,1]: {0}")]
    ExceedsOne(String),
    /// The backend integer type cannot represent an intermediate value.
    /// Cannot occur with an arbitrary-precision backend.
    #[error("integer backend overflow")]
    ReprOverflow,
}

/// An exact rational permission in `[0, 1]`, stored in lowest terms.
///
/// Invariants: `0 <= num/den <= 1`, `den > 0`, `gcd(num, den) = 1`, and zero
/// is represented as `0/1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fraction<I: PermInt> {
    num: I,
    den: I,
}

impl<I: PermInt> Fraction<I> {
    /// Builds `num/den` reduced to lowest terms.
    ///
    /// Fails with [`FracError::ExceedsOne`] when the value is negative,
    /// above 1, or the denominator is zero.
    pub fn new(num: I, den: I) -> Result<Self, FracError> {
        if den.is_zero() || num < I::zero() || den < I::zero() || num > den {
            return Err(FracError::ExceedsOne(format!("{num}/{den}")));
        }
        let g = num.gcd(&den);
        if g.is_zero() {
            // num = den = 0 handled above; g = 0 only for 0/0.
            return Err(FracError::ExceedsOne("0/0".into()));
        }
        Ok(Fraction {
            num: num.div_floor(&g),
            den: den.div_floor(&g),
        })
    }

    pub fn zero() -> Self {
        Fraction {
            num: I::zero(),
            den: I::one(),
        }
    }

    pub fn one() -> Self {
        Fraction {
            num: I::one(),
            den: I::one(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    pub fn numer(&self) -> &I {
        &self.num
    }

    pub fn denom(&self) -> &I {
        &self.den
    }

    /// `a + b`, defined only while the sum stays within `[0, 1]`.
    pub fn add(&self, other: &Self) -> Result<Self, FracError> {
        let (n, d) = self.cross(other)?;
        let sum = n.0.checked_add(&n.1).ok_or(FracError::ReprOverflow)?;
        if sum > d {
            return Err(FracError::ExceedsOne(format!(
                "{} + {}",
                self, other
            )));
        }
        Self::new(sum, d)
    }

    /// Exact subtraction `a - b`; fails when `b > a`.
    pub fn sub(&self, other: &Self) -> Result<Self, FracError> {
        if self < other {
            return Err(FracError::ExceedsOne(format!("{} - {}", self, other)));
        }
        let (n, d) = self.cross(other)?;
        Self::new(n.0 - n.1, d)
    }

    /// Cut-off subtraction: `a - b` when `a >= b`, and 0 otherwise. Total.
    pub fn cutoff_sub(&self, other: &Self) -> Self {
        if self < other {
            Self::zero()
        } else {
            self.sub(other).expect("a >= b implies exact subtraction")
        }
    }

    /// Both numerators brought over the common denominator `den_a * den_b`.
    fn cross(&self, other: &Self) -> Result<((I, I), I), FracError> {
        let d = self
            .den
            .checked_mul(&other.den)
            .ok_or(FracError::ReprOverflow)?;
        let na = self
            .num
            .checked_mul(&other.den)
            .ok_or(FracError::ReprOverflow)?;
        let nb = other
            .num
            .checked_mul(&self.den)
            .ok_or(FracError::ReprOverflow)?;
        Ok(((na, nb), d))
    }
}

impl<I: PermInt> PartialOrd for Fraction<I> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<I: PermInt> Ord for Fraction<I> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Denominators are positive, so cross-multiplication preserves order.
        let na = self.num.clone() * other.den.clone();
        let nb = other.num.clone() * self.den.clone();
        na.cmp(&nb)
    }
}

impl<I: PermInt> fmt::Display for Fraction<I> {
    /// Renders as `num/den`, with `0` and `1` printed bare. This rendering
    /// is used verbatim in verification reports.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "0")
        } else if self.is_one() {
            write!(f, "1")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type F = Fraction<i64>;

    fn f(n: i64, d: i64) -> F {
        F::new(n, d).unwrap()
    }

    #[test]
    fn add_merges_halves_to_full() {
        assert_eq!(f(1, 2).add(&f(1, 2)).unwrap(), F::one());
    }

    #[test]
    fn add_zero_is_identity() {
        assert_eq!(F::zero().add(&f(3, 7)).unwrap(), f(3, 7));
    }

    #[test]
    fn add_rejects_sum_above_one() {
        assert!(matches!(
            f(3, 4).add(&f(1, 2)),
            Err(FracError::ExceedsOne(_))
        ));
    }

    #[test]
    fn cutoff_sub_cases() {
        assert_eq!(f(3, 4).cutoff_sub(&f(1, 2)), f(1, 4));
        assert_eq!(f(1, 4).cutoff_sub(&f(1, 4)), F::zero());
        assert_eq!(f(1, 4).cutoff_sub(&f(1, 2)), F::zero());
    }

    #[test]
    fn ordering_is_by_rational_value() {
        assert!(f(1, 3) < f(1, 2));
        assert_eq!(f(2, 4), f(1, 2));
        assert!(F::one() > F::zero());
    }

    #[test]
    fn construction_rejects_out_of_range() {
        assert!(F::new(5, 4).is_err());
        assert!(F::new(-1, 4).is_err());
        assert!(F::new(1, 0).is_err());
    }

    #[test]
    fn canonical_form() {
        let h = F::new(4, 8).unwrap();
        assert_eq!((h.numer(), h.denom()), (&1i64, &2i64));
        assert_eq!(F::new(0, 9).unwrap(), F::zero());
    }

    #[test]
    fn display_rendering() {
        assert_eq!(F::zero().to_string(), "0");
        assert_eq!(F::one().to_string(), "1");
        assert_eq!(f(2, 6).to_string(), "1/3");
    }
}
