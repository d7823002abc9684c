use nalgebra::SVector;

use crate::error::{Error, Result};

/// Dormand-Prince 5(4) with a PI-free classic step controller.
#[derive(Clone, Copy, Debug)]
pub struct Dopri {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri {
    fn default() -> Self {
        Dopri { rtol: 1e-10, atol: 1e-12, h_init: 1e-2, h_min: 1e-12, h_max: 1.0, max_steps: 5_000_000 }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Dopri {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Dopri { rtol, atol, ..Default::default() }
    }

    /// Integrates y' = f(z, y) from z0 to z1 (either direction).
    ///
    /// `observe` runs after every accepted step and may rewrite the state in place
    /// (used for renormalization); the next step restarts from the modified state.
    pub fn integrate<const N: usize, F, O>(
        &self,
        mut f: F,
        z0: f64,
        z1: f64,
        y0: SVector<f64, N>,
        mut observe: O,
    ) -> Result<SVector<f64, N>>
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
        O: FnMut(f64, &mut SVector<f64, N>),
    {
        let dir = if z1 >= z0 { 1.0 } else { -1.0 };
        let span = (z1 - z0).abs();
        let mut z = z0;
        let mut y = y0;
        if span == 0.0 {
            return Ok(y);
        }
        let mut h = self.h_init.min(self.h_max).min(span);
        let mut k = [SVector::<f64, N>::zeros(); 7];
        for _ in 0..self.max_steps {
            let remaining = (z1 - z).abs();
            if remaining <= 1e-14 * span.max(1.0) {
                return Ok(y);
            }
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let hs = dir * h;
            k[0] = f(z, &y);
            for s in 1..7 {
                let mut ys = y;
                for j in 0..s {
                    if A[s][j] != 0.0 {
                        ys += k[j] * (hs * A[s][j]);
                    }
                }
                k[s] = f(z + C[s] * hs, &ys);
            }
            let mut y_new = y;
            let mut err = SVector::<f64, N>::zeros();
            for s in 0..7 {
                if B[s] != 0.0 {
                    y_new += k[s] * (hs * B[s]);
                }
                if E[s] != 0.0 {
                    err += k[s] * (hs * E[s]);
                }
            }
            let mut norm = 0.0;
            for i in 0..N {
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                norm += (err[i] / sc).powi(2);
            }
            let norm = (norm / N as f64).sqrt();
            if !norm.is_finite() {
                h *= 0.25;
                if h < self.h_min {
                    return Err(Error::Integration { z, reason: "non-finite state".into() });
                }
                continue;
            }
            if norm <= 1.0 {
                z = if last { z1 } else { z + hs };
                y = y_new;
                observe(z, &mut y);
                let fac = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * fac).min(self.h_max);
                if last {
                    return Ok(y);
                }
            } else {
                h *= (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9);
                if h < self.h_min {
                    return Err(Error::Integration { z, reason: format!("step size underflow (h = {h:e})") });
                }
            }
        }
        Err(Error::Integration { z, reason: "too many steps".into() })
    }

    /// Integrate without observation.
    pub fn solve<const N: usize, F>(&self, f: F, z0: f64, z1: f64, y0: SVector<f64, N>) -> Result<SVector<f64, N>>
    where
        F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
    {
        self.integrate(f, z0, z1, y0, |_, _| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn harmonic_oscillator() {
        let d = Dopri::with_tol(1e-12, 1e-14);
        let y = d
            .solve(|_, y: &Vector2<f64>| Vector2::new(y[1], -y[0]), 0.0, 10.0, Vector2::new(1.0, 0.0))
            .unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn backward_exponential() {
        let d = Dopri::default();
        let y = d
            .solve(|_, y: &SVector<f64, 1>| *y * 0.5, 4.0, 0.0, SVector::<f64, 1>::new(2f64.exp()))
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn observer_can_renormalize() {
        let d = Dopri::default();
        let mut count = 0;
        let y = d
            .integrate(
                |_, y: &Vector2<f64>| Vector2::new(2.0 * y[0], y[1]),
                0.0,
                30.0,
                Vector2::new(1.0, 1.0),
                |_, y| {
                    count += 1;
                    *y /= y.norm();
                },
            )
            .unwrap();
        assert!(count > 0);
        assert!((y.norm() - 1.0).abs() < 1e-12);
        assert!(y[1].abs() < 1e-12);
    }
}
