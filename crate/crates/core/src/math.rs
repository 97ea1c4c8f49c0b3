//! Scalar helpers backed by `libm` so results do not depend on whether the
//! platform `std` math is linked.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(exp(-x))
    } else {
        libm::log1p(exp(x))
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Running mean; exact when all values are equal.
pub fn mean(xs: &[f64]) -> f64 {
    let mut m = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        m += (x - m) / (i + 1) as f64;
    }
    m
}

/// Sample mean and standard error of the mean.
pub fn mean_and_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, sqrt(var / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_bounded() {
        for &x in &[-40.0, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0 || x.abs() >= 40.0);
            assert!((s + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn mean_of_constant_values_is_exact() {
        let xs = [0.1 + 0.2; 100];
        assert_eq!(mean(&xs), 0.1 + 0.2);
        assert_eq!(mean_and_sem(&xs).1, 0.0);
        assert_eq!(mean(&[]), 0.0);
        assert!((mean(&[1.0, 2.0, 6.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn softplus_matches_naive_form() {
        for &x in &[-5.0, -0.1, 0.0, 0.3, 7.0] {
            let naive = ln(1.0 + exp(x));
            assert!((softplus(x) - naive).abs() < 1e-12);
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
