//! Float math shims and small statistics helpers.
//!
//! The crate is `no_std`, so transcendental functions come from `libm`
//! through the [`FloatExt`] extension trait.

#[cfg_attr(test, allow(dead_code))]
pub(crate) trait FloatExt {
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn floor(self) -> Self;
    fn powi(self, n: i32) -> Self;
}

impl FloatExt for f64 {
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        libm::tanh(self)
    }
    #[inline]
    fn floor(self) -> f64 {
        libm::floor(self)
    }
    #[inline]
    fn powi(self, n: i32) -> f64 {
        libm::pow(self, n as f64)
    }
}

/// Mean of a slice. Returns 0 for an empty slice.
pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divides by n).
pub(crate) fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub(crate) fn population_std(values: &[f64]) -> f64 {
    population_variance(values).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_of_small_vector() {
        // var([1,2,3]) with 1/n normalization is 2/3
        let v = [1.0, 2.0, 3.0];
        assert!((population_variance(&v) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn std_of_constant_is_zero() {
        assert_eq!(population_std(&[4.0, 4.0, 4.0]), 0.0);
    }
}
