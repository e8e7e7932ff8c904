//! Normal quantiles from an independent implementation.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

pub fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Root of the increasing function `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `c` with `P(max_j |Z_j| <= c) = level` for `p` independent standard normals.
pub fn independent_two_sided(p: i32, level: f64) -> f64 {
    bisect(|c| (2.0 * phi(c) - 1.0).powi(p) - level, 0.0, 10.0)
}
