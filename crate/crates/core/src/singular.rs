use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use nalgebra::Vector4;
use serde::Serialize;

use crate::dynamics::{cubic_eval, layer_pair, layer_vectors, Params, PhasePoint};
use crate::error::{Error, Result};
use crate::quad::{integrate_line, romberg};
use crate::scalar::{lit, Scalar};

const QUAD_RTOL: f64 = 1e-13;

pub fn singular_speed(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::Domain(format!("a = {a} must lie in (0, 1/2)")));
    }
    Ok(SQRT_2 * (a - 0.5))
}

/// Jump-off point (u*, v*) = (2(a+1)/3, f(u*)); exact for rational scalars.
pub fn jump_off_point<T: Scalar>(a: T) -> (T, T) {
    let u = lit::<T>(2) * (a + T::one()) / lit(3);
    (u, cubic_eval(u, a).0)
}

/// Landing value of u on the left branch, u* - 1 = 2(a - 1/2)/3.
pub fn landing_left(a: f64) -> f64 {
    2.0 * (a - 0.5) / 3.0
}

/// McKean front: u = 1/(1 + exp(-z/sqrt 2)), w = u' = u(1-u)/sqrt 2.
pub fn front_profile(z: f64, _a: f64) -> (f64, f64) {
    let u = 1.0 / (1.0 + (-z * FRAC_1_SQRT_2).exp());
    (u, FRAC_1_SQRT_2 * u * (1.0 - u))
}

/// K = 2 pi / (sqrt 2 sin(pi (1 - 2a))).
pub fn y_constant(a: f64) -> f64 {
    2.0 * PI / (SQRT_2 * (PI * (1.0 - 2.0 * a)).sin())
}

/// K as the quadrature of e^{c* s} u_f(s) over the real line.
pub fn y_constant_quadrature(a: f64) -> Result<f64> {
    let c = singular_speed(a)?;
    integrate_line(|s| (c * s).exp() * front_profile(s, a).0, QUAD_RTOL)
}

/// Bounded solution of y' = -c* y - u_f, i.e. y(z) = int_0^inf e^{c* t} u_f(z + t) dt.
pub fn front_y(z: f64, a: f64) -> Result<f64> {
    let c = singular_speed(a)?;
    let hi = 40.0 / c.abs();
    romberg(|t| (c * t).exp() * front_profile(z + t, a).0, 0.0, hi, QUAD_RTOL)
}

/// Back: u_b = u* - u_f, w_b = -w_f and y~ = y - (gamma v* - u*)/c*.
///
/// y~ solves y~' = -c* y~ + u_f with y~(-inf) = 0, so y~ = -y_f and y~(+inf) = 1/c*.
pub fn back_profile(z: f64, a: f64) -> Result<(f64, f64, f64)> {
    let (us, _) = jump_off_point(a);
    let (uf, wf) = front_profile(z, a);
    Ok((us - uf, -wf, -front_y(z, a)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A normally hyperbolic branch of the critical manifold v = f(u), w = 0.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CriticalBranch {
    pub side: Side,
    /// Interval of u on which the branch is represented (f' < 0 in the interior).
    pub u_range: (f64, f64),
    a: f64,
}

impl CriticalBranch {
    pub fn new(side: Side, a: f64) -> Self {
        let disc = ((1.0 + a).powi(2) - 3.0 * a).sqrt();
        let (lo_knee, hi_knee) = ((1.0 + a - disc) / 3.0, (1.0 + a + disc) / 3.0);
        let u_range = match side {
            Side::Left => (-3.0, lo_knee),
            Side::Right => (hi_knee, 4.0),
        };
        CriticalBranch { side, u_range, a }
    }

    pub fn left(a: f64) -> Self {
        Self::new(Side::Left, a)
    }

    pub fn right(a: f64) -> Self {
        Self::new(Side::Right, a)
    }

    /// Image of the branch under f, as (min, max).
    pub fn v_range(&self) -> (f64, f64) {
        let f0 = cubic_eval(self.u_range.0, self.a).0;
        let f1 = cubic_eval(self.u_range.1, self.a).0;
        (f0.min(f1), f0.max(f1))
    }

    /// g = f^{-1} on the branch: safeguarded Newton with bisection fallback.
    pub fn g(&self, v: f64) -> Result<f64> {
        let (vmin, vmax) = self.v_range();
        if !(v >= vmin && v <= vmax) {
            return Err(Error::OutsideBranch(v));
        }
        // f is decreasing on the branch
        let (mut lo, mut hi) = self.u_range;
        let mut u = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (f, df, _) = cubic_eval(u, self.a);
            let r = f - v;
            if r.abs() <= 1e-15 * (1.0 + v.abs()) {
                return Ok(u);
            }
            if r > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let step = r / df;
            let cand = u - step;
            u = if df < 0.0 && cand > lo && cand < hi { cand } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * (1.0 + u.abs()) || step.abs() <= 1e-16 * (1.0 + u.abs()) {
                return Ok(u);
            }
        }
        Ok(u)
    }

    pub fn g_prime(&self, v: f64) -> Result<f64> {
        let u = self.g(v)?;
        Ok(1.0 / cubic_eval(u, self.a).1)
    }

    /// g''(v) = -f''(u)/f'(u)^3.
    pub fn g_second(&self, v: f64) -> Result<f64> {
        let u = self.g(v)?;
        let (_, df, d2f) = cubic_eval(u, self.a);
        Ok(-d2f / df.powi(3))
    }
}

/// dv/dzeta = (gamma v - g(v))/c on the branch, with c = p.c.
pub fn slow_flow_rhs(v: f64, branch: &CriticalBranch, p: &Params) -> Result<f64> {
    Ok((p.gamma * v - branch.g(v)?) / p.c)
}

/// Point of the critical manifold above u: (u, f(u), 0, (gamma f(u) - u)/c).
pub fn critical_point(u: f64, p: &Params) -> PhasePoint {
    let v = cubic_eval(u, p.a).0;
    Vector4::new(u, v, 0.0, (p.gamma * v - u) / p.c)
}

#[derive(Clone, Debug)]
pub struct LayerEigen {
    /// {mu1, 0, -c, mu4}
    pub mu: [f64; 4],
    /// eta1 = (f', 0, f' mu1, mu1), eta2 = (1, f', 0, (gamma f' - 1)/c), eta3 = e4,
    /// eta4 = (f', 0, f' mu4, mu4); not normalized.
    pub eta: [Vector4<f64>; 4],
}

/// Layer eigenpairs of A(0) at eps = 0 over the critical-manifold point with first coordinate u.
pub fn layer_eigenpairs(u: f64, p: &Params) -> Result<LayerEigen> {
    let (_, df, _) = cubic_eval(u, p.a);
    if !(df < 0.0) {
        return Err(Error::NotNormallyHyperbolic { u, df });
    }
    let (mu1, mu4) = layer_pair(df, p.c);
    Ok(LayerEigen { mu: [mu1, 0.0, -p.c, mu4], eta: layer_vectors(df, mu1, mu4, p) })
}

/// Eigenbasis at q used by the second corner: eta2 rescaled by 1/f'(u*) = -1/a.
pub fn corner_q_basis(p: &Params) -> [Vector4<f64>; 4] {
    let a = p.a;
    let (mu1, mu4) = layer_pair(-a, p.c);
    [
        Vector4::new(-a, 0.0, -a * mu1, mu1),
        Vector4::new(-1.0 / a, 1.0, 0.0, (p.gamma + 1.0 / a) / p.c),
        Vector4::new(0.0, 0.0, 0.0, 1.0),
        Vector4::new(-a, 0.0, -a * mu4, mu4),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Front,
    SlowRight,
    Back,
    SlowLeft,
    Corner,
}

impl Segment {
    pub fn tag(&self) -> &'static str {
        match self {
            Segment::Front => "front",
            Segment::SlowRight => "slow_right",
            Segment::Back => "back",
            Segment::SlowLeft => "slow_left",
            Segment::Corner => "corner",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SingularOrbit {
    pub params: Params,
    /// (z, point) on the front.
    pub front: Vec<(f64, PhasePoint)>,
    /// (v, point) from p up to q.
    pub slow_right: Vec<(f64, PhasePoint)>,
    /// (z, point) on the back.
    pub back: Vec<(f64, PhasePoint)>,
    /// (v, point) from q-hat down to 0.
    pub slow_left: Vec<(f64, PhasePoint)>,
    pub p: PhasePoint,
    pub q: PhasePoint,
    pub q_hat: PhasePoint,
    pub u_star: f64,
    pub v_star: f64,
    pub k: f64,
    pub c_star: f64,
}

impl SingularOrbit {
    /// All samples with their segment tags, in traversal order.
    pub fn rows(&self) -> Vec<(f64, PhasePoint, Segment)> {
        let mut out = Vec::new();
        out.extend(self.front.iter().map(|&(s, x)| (s, x, Segment::Front)));
        out.extend(self.slow_right.iter().map(|&(s, x)| (s, x, Segment::SlowRight)));
        out.extend(self.back.iter().map(|&(s, x)| (s, x, Segment::Back)));
        out.extend(self.slow_left.iter().map(|&(s, x)| (s, x, Segment::SlowLeft)));
        out
    }
}

/// Half-width of the fast-segment sampling window.
pub const FAST_HALF_WIDTH: f64 = 60.0;

pub fn assemble_singular_orbit(params: &Params) -> Result<SingularOrbit> {
    let a = params.a;
    let c = singular_speed(a)?;
    let p = Params { eps: 0.0, c, ..*params };
    let (us, vs) = jump_off_point(a);
    let n_fast = 401;
    let n_slow = 201;
    let zs = (0..n_fast).map(|k| -FAST_HALF_WIDTH + 2.0 * FAST_HALF_WIDTH * k as f64 / (n_fast - 1) as f64);
    let mut front = Vec::with_capacity(n_fast);
    let mut back = Vec::with_capacity(n_fast);
    let ybar = (p.gamma * vs - us) / c;
    for z in zs {
        let (u, w) = front_profile(z, a);
        let y = front_y(z, a)?;
        front.push((z, Vector4::new(u, 0.0, w, y)));
        back.push((z, Vector4::new(us - u, vs, -w, ybar - y)));
    }
    let right = CriticalBranch::right(a);
    let left = CriticalBranch::left(a);
    let mut slow_right = Vec::with_capacity(n_slow);
    let mut slow_left = Vec::with_capacity(n_slow);
    for k in 0..n_slow {
        let v = vs * k as f64 / (n_slow - 1) as f64;
        slow_right.push((v, critical_point(right.g(v)?, &p)));
        let v = vs * (1.0 - k as f64 / (n_slow - 1) as f64);
        slow_left.push((v, critical_point(left.g(v)?, &p)));
    }
    // pin the corner samples to their exact values
    let p_pt = Vector4::new(1.0, 0.0, 0.0, -1.0 / c);
    let q = Vector4::new(us, vs, 0.0, (p.gamma * vs - us) / c);
    let q_hat = Vector4::new(us - 1.0, vs, 0.0, (p.gamma * vs - us + 1.0) / c);
    slow_right[0].1 = p_pt;
    slow_right[n_slow - 1].1 = q;
    slow_left[0].1 = q_hat;
    slow_left[n_slow - 1].1 = Vector4::zeros();
    Ok(SingularOrbit {
        params: p,
        front,
        slow_right,
        back,
        slow_left,
        p: p_pt,
        q,
        q_hat,
        u_star: us,
        v_star: vs,
        k: y_constant(a),
        c_star: c,
    })
}

/// Front: int e^{c* s} w_f(s)^2 ds (> 0). Back: int e^{c* z} w_b(z) dz (< 0).
pub fn melnikov_integrals(a: f64) -> Result<(f64, f64)> {
    let c = singular_speed(a)?;
    let front = integrate_line(|s| (c * s).exp() * front_profile(s, a).1.powi(2), QUAD_RTOL)?;
    let back = integrate_line(|s| -(c * s).exp() * front_profile(s, a).1, QUAD_RTOL)?;
    Ok((front, back))
}

/// Duration in the slow time zeta to travel from v0 to v1 along a branch.
pub fn slow_transit_time(branch: &CriticalBranch, p: &Params, v0: f64, v1: f64) -> Result<f64> {
    romberg(
        |v| 1.0 / slow_flow_rhs(v, branch, p).unwrap_or(f64::NAN),
        v0,
        v1,
        1e-10,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_rational::Ratio;

    fn base() -> Params {
        Params::singular(0.25, 1.0, 0.0).unwrap()
    }

    #[test]
    fn speeds() {
        assert_abs_diff_eq!(singular_speed(0.25).unwrap(), -SQRT_2 / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(singular_speed(0.1).unwrap(), -0.565_685_424_949_238, epsilon = 1e-12);
        assert!(singular_speed(0.499_999).unwrap() < 0.0);
        assert!(singular_speed(0.6).is_err());
    }

    #[test]
    fn jump_off_point_is_exact_for_rationals() {
        let (u, v) = jump_off_point(Ratio::new(1i64, 4));
        assert_eq!(u, Ratio::new(5, 6));
        assert_eq!(v, Ratio::new(35, 432));
        let (_, df, _) = cubic_eval(u, Ratio::new(1i64, 4));
        assert_eq!(df, Ratio::new(-1, 4));
    }

    #[test]
    fn front_profile_values() {
        let (u, w) = front_profile(0.0, 0.25);
        assert_eq!(u, 0.5);
        assert_abs_diff_eq!(w, SQRT_2 / 8.0, epsilon = 1e-16);
        let z = SQRT_2 * 3f64.ln();
        assert_abs_diff_eq!(front_profile(z, 0.25).0, 0.75, epsilon = 1e-15);
        assert!(front_profile(60.0, 0.25).0 > 1.0 - 1e-15);
        assert!(front_profile(-60.0, 0.25).0 < 1e-15);
    }

    #[test]
    fn k_constant() {
        let k = y_constant_quadrature(0.25).unwrap();
        assert_abs_diff_eq!(k, PI * SQRT_2, epsilon = 1e-9);
        for &a in &[0.05, 0.1, 0.3, 0.45] {
            let k = y_constant_quadrature(a).unwrap();
            assert_abs_diff_eq!(k, y_constant(a), epsilon = 1e-8 * y_constant(a));
        }
    }

    #[test]
    fn front_y_limits_and_ode() {
        let a = 0.25;
        let c = singular_speed(a).unwrap();
        assert_abs_diff_eq!(front_y(80.0, a).unwrap(), -1.0 / c, epsilon = 1e-9);
        assert_abs_diff_eq!(-1.0 / c, 2.828_427_124_746_19, epsilon = 1e-12);
        let k = y_constant(a);
        let z = -60.0;
        assert_abs_diff_eq!((c * z).exp() * front_y(z, a).unwrap(), k, epsilon = 1e-6);
        let h = 1e-4;
        for &z in &[-5.0, -1.0, 0.0, 0.7, 3.0, 9.0] {
            let d = (front_y(z + h, a).unwrap() - front_y(z - h, a).unwrap()) / (2.0 * h);
            let r = d + c * front_y(z, a).unwrap() + front_profile(z, a).0;
            assert!(r.abs() < 1e-8, "residual {r} at {z}");
        }
    }

    #[test]
    fn back_profile_values() {
        let a = 0.25;
        let (u, w, _) = back_profile(0.0, a).unwrap();
        assert_abs_diff_eq!(u, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w, -SQRT_2 / 8.0, epsilon = 1e-16);
        let c = singular_speed(a).unwrap();
        let k = y_constant(a);
        let z = -50.0;
        let h = 1e-3;
        let d = (back_profile(z + h, a).unwrap().2 - back_profile(z - h, a).unwrap().2) / (2.0 * h);
        assert_abs_diff_eq!((c * z).exp() * d, c * k, epsilon = 1e-5);
        assert!(c * k < 0.0);
        assert_abs_diff_eq!(back_profile(80.0, a).unwrap().2, 1.0 / c, epsilon = 1e-9);
        // phase-space identity of the back
        for &z in &[-3.0, 0.0, 2.0] {
            let (u, w, _) = back_profile(z, a).unwrap();
            let us = 5.0 / 6.0;
            assert_abs_diff_eq!(w, -FRAC_1_SQRT_2 * (us - u) * (1.0 - (us - u)), epsilon = 1e-15);
        }
    }

    #[test]
    fn branch_inverse_round_trip() {
        let a = 0.25;
        for br in [CriticalBranch::left(a), CriticalBranch::right(a)] {
            let (lo, hi) = br.u_range;
            for k in 1..50 {
                let u = lo + (hi - lo) * k as f64 / 50.0;
                assert!(cubic_eval(u, a).1 < 0.0);
                let v = cubic_eval(u, a).0;
                assert_abs_diff_eq!(br.g(v).unwrap(), u, epsilon = 1e-10);
            }
        }
        assert!(CriticalBranch::right(a).g(0.2).is_err());
    }

    #[test]
    fn slow_flow_directions() {
        let p = base();
        let r = slow_flow_rhs(0.0, &CriticalBranch::right(0.25), &p).unwrap();
        assert_abs_diff_eq!(r, 2.828_427_124_746_19, epsilon = 1e-9);
        assert_abs_diff_eq!(slow_flow_rhs(0.0, &CriticalBranch::left(0.25), &p).unwrap(), 0.0, epsilon = 1e-14);
        let (_, vs) = jump_off_point(0.25);
        assert!(slow_flow_rhs(vs, &CriticalBranch::left(0.25), &p).unwrap() < 0.0);
    }

    #[test]
    fn layer_eigenpairs_residual() {
        let p = base();
        for &u in &[0.0, 1.0, 5.0 / 6.0, -1.0 / 6.0, -0.05, 0.9] {
            let e = layer_eigenpairs(u, &p).unwrap();
            let a = crate::dynamics::linearization(u, 0.0, &p).unwrap();
            for k in 0..4 {
                let r = a * e.eta[k] - e.eta[k] * e.mu[k];
                assert!(r.norm() < 1e-10, "u={u} k={k} {r}");
            }
        }
        let e = layer_eigenpairs(0.0, &p).unwrap();
        assert_abs_diff_eq!(e.mu[0], -0.25 * SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(e.mu[3], FRAC_1_SQRT_2, epsilon = 1e-15);
        let e = layer_eigenpairs(1.0, &p).unwrap();
        assert_abs_diff_eq!(e.mu[3], SQRT_2 * 0.75, epsilon = 1e-15);
        assert!(layer_eigenpairs(0.5, &p).is_err());
    }

    #[test]
    fn corner_q_basis_matches_rescaling() {
        let p = base();
        let b = corner_q_basis(&p);
        let e = layer_eigenpairs(5.0 / 6.0, &p).unwrap();
        let r = b[1] - e.eta[1] / (-0.25);
        assert!(r.norm() < 1e-12);
        let h = FRAC_1_SQRT_2;
        assert!((b[3] - Vector4::new(-0.25, 0.0, -0.25 * h, h)).norm() < 1e-14);
    }

    #[test]
    fn assembled_orbit() {
        let o = assemble_singular_orbit(&base()).unwrap();
        assert_abs_diff_eq!(o.u_star, 5.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.v_star, 35.0 / 432.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.q[3], (35.0 / 432.0 - 5.0 / 6.0) / (-SQRT_2 / 4.0), epsilon = 1e-12);
        assert_abs_diff_eq!(o.q[3], 2.127_867_6, epsilon = 1e-6);
        let landing = o.front.last().unwrap().1;
        assert!((landing - o.slow_right[0].1).norm() < 1e-8);
        assert!(o.front[0].1.norm() < 1e-8);
        assert!((o.back[0].1 - o.q).norm() < 1e-8);
        assert!((o.back.last().unwrap().1 - o.q_hat).norm() < 1e-8);
        let r = CriticalBranch::right(0.25);
        let l = CriticalBranch::left(0.25);
        assert_abs_diff_eq!(r.g(o.v_star).unwrap(), o.u_star, epsilon = 1e-12);
        assert_abs_diff_eq!(l.g(o.v_star).unwrap(), o.u_star - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn melnikov_signs_and_stability() {
        let (f, b) = melnikov_integrals(0.25).unwrap();
        assert!(f > 0.0 && b < 0.0);
        let c = singular_speed(0.25).unwrap();
        let coarse = romberg(|s| (c * s).exp() * front_profile(s, 0.25).1.powi(2), -120.0, 120.0, 1e-8).unwrap();
        assert!(((coarse - f) / f).abs() < 1e-8);
    }

    #[test]
    fn layer_shooting_splits_on_front_y() {
        // the cylinder argument: y above/below the bounded solution escapes to +/- infinity
        let a = 0.25;
        let p = base();
        let z0 = -20.0;
        let (u0, w0) = front_profile(z0, a);
        let y0 = front_y(z0, a).unwrap();
        let ode = crate::ode::Dopri::with_tol(1e-11, 1e-13);
        for (off, sign) in [(1e-3, 1.0), (-1e-3, -1.0)] {
            let end = ode
                .solve(
                    |_, x: &Vector4<f64>| crate::dynamics::vector_field(x, &p),
                    z0,
                    15.0,
                    Vector4::new(u0, 0.0, w0, y0 + off),
                )
                .unwrap();
            assert!(sign * (end[3] - front_y(15.0, a).unwrap()) > 1.0, "{end}");
        }
    }

    #[test]
    fn front_from_layer_integration() {
        let p = base();
        let z0 = -30.0;
        let (u0, w0) = front_profile(z0, 0.25);
        let y0 = front_y(z0, 0.25).unwrap();
        let ode = crate::ode::Dopri::with_tol(1e-12, 1e-14);
        let mut worst: f64 = 0.0;
        ode.integrate(
            |_, x: &Vector4<f64>| crate::dynamics::vector_field(x, &p),
            z0,
            10.0,
            Vector4::new(u0, 0.0, w0, y0),
            |_, x| worst = worst.max((x[2] - FRAC_1_SQRT_2 * x[0] * (1.0 - x[0])).abs()),
        )
        .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn cubic_symmetry() {
        let a = 0.25;
        let m = (1.0 + a) / 3.0;
        for k in 0..20 {
            let s = k as f64 * 0.07;
            assert_abs_diff_eq!(cubic_eval(m + s, a).1, cubic_eval(m - s, a).1, epsilon = 1e-13);
        }
    }
}
