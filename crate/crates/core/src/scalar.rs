use num_rational::Ratio;
use num_traits::Num;
use std::fmt::Debug;

/// A numeric type a rule-based score can be computed in.
///
/// Scores are built from ratios of small counts, so any field that can
/// represent `num / den` works: `f32`, `f64`, or an exact [`Ratio`].
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    /// `num / den`. `den` must be non-zero.
    fn ratio(num: usize, den: usize) -> Self;

    fn to_f64(&self) -> f64;
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {
        $(
            impl Scalar for $t {
                fn ratio(num: usize, den: usize) -> Self {
                    num as $t / den as $t
                }

                fn to_f64(&self) -> f64 {
                    *self as f64
                }
            }
        )*
    };
}

impl_float_scalar!(f32, f64);

impl Scalar for Ratio<i64> {
    fn ratio(num: usize, den: usize) -> Self {
        Ratio::new(num as i64, den as i64)
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let third = <Ratio<i64> as Scalar>::ratio(1, 3);
        assert_eq!(third + third + third, Ratio::from_integer(1));
        assert_eq!(<Ratio<i64> as Scalar>::ratio(2, 4), Ratio::new(1, 2));
    }

    #[test]
    fn float_ratio() {
        assert_eq!(<f64 as Scalar>::ratio(1, 2), 0.5);
        assert_eq!(<f32 as Scalar>::ratio(3, 4), 0.75);
        assert_eq!(Ratio::new(1i64, 4).to_f64(), 0.25);
    }
}
