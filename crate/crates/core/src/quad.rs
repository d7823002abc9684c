use crate::error::{Error, Result};

/// Romberg extrapolation of the trapezoid rule on [lo, hi].
pub fn romberg<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rtol: f64) -> Result<f64> {
    const LEVELS: usize = 22;
    let mut prev = vec![0.0; LEVELS];
    let mut cur = vec![0.0; LEVELS];
    let mut h = hi - lo;
    prev[0] = 0.5 * h * (f(lo) + f(hi));
    let mut n = 1usize;
    for k in 1..LEVELS {
        h *= 0.5;
        let mid: f64 = (0..n).map(|j| f(lo + (2 * j + 1) as f64 * h)).sum();
        n *= 2;
        cur[0] = 0.5 * prev[0] + h * mid;
        let mut pow = 1.0;
        for j in 1..=k {
            pow *= 4.0;
            cur[j] = cur[j - 1] + (cur[j - 1] - prev[j - 1]) / (pow - 1.0);
        }
        if k >= 4 && (cur[k] - prev[k - 1]).abs() <= rtol * cur[k].abs().max(1e-300) {
            return Ok(cur[k]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Err(Error::Quadrature(format!("Romberg on [{lo}, {hi}] after {LEVELS} levels")))
}

/// Extends a bound outward in unit steps until |f| drops below `floor` times the scale.
pub fn tail_bound<F: Fn(f64) -> f64>(f: &F, start: f64, dir: f64, scale: f64, floor: f64) -> f64 {
    let mut z = start;
    for _ in 0..100_000 {
        if f(z).abs() <= floor * scale {
            return z;
        }
        z += dir;
    }
    z
}

/// Integral over the real line of an exponentially decaying integrand.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, rtol: f64) -> Result<f64> {
    let scale = (-20..=20).map(|k| f(k as f64).abs()).fold(0.0, f64::max);
    let lo = tail_bound(&f, 0.0, -1.0, scale, 1e-16);
    let hi = tail_bound(&f, 0.0, 1.0, scale, 1e-16);
    romberg(f, lo, hi, rtol)
}
