use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// A point (u, v, w, y) of the traveling-wave phase space, in that order.
pub type PhasePoint = Vector4<f64>;

/// Smallness threshold for eps used by assertions that need a clean fast/slow split.
pub const EPS_MAX_DEFAULT: f64 = 1e-3;

/// f(u) = u(1-u)(u-a) with its first two derivatives.
pub fn cubic_eval<T: Scalar>(u: T, a: T) -> (T, T, T) {
    let one = T::one();
    let two: T = lit(2);
    let f = u * (one - u) * (u - a);
    let df = -lit::<T>(3) * u * u + two * (one + a) * u - a;
    let d2f = -lit::<T>(6) * u + two * (one + a);
    (f, df, d2f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub gamma: f64,
    pub eps: f64,
    pub c: f64,
}

impl Params {
    pub fn new(a: f64, gamma: f64, eps: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::Domain(format!("a = {a} must lie in (0, 1/2)")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma = {gamma} must be >= 0")));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("eps = {eps} must be >= 0")));
        }
        if !c.is_finite() {
            return Err(Error::Domain(format!("c = {c} must be finite")));
        }
        Ok(Params { a, gamma, eps, c })
    }

    /// Parameters with the speed set to the singular value c* = sqrt(2)(a - 1/2).
    pub fn singular(a: f64, gamma: f64, eps: f64) -> Result<Self> {
        Self::new(a, gamma, eps, singular_speed_unchecked(a))
    }

    pub fn with_c(self, c: f64) -> Self {
        Params { c, ..self }
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Params { eps, ..self }
    }

    pub fn c_star(&self) -> f64 {
        singular_speed_unchecked(self.a)
    }

    /// (gamma eps - a)^2 - 4 eps; the real-eigenvalue formulas need this to be >= 0.
    pub fn discriminant(&self) -> f64 {
        (self.gamma * self.eps - self.a).powi(2) - 4.0 * self.eps
    }

    pub fn eps_is_small(&self, eps_max: f64) -> bool {
        self.eps <= eps_max
    }
}

pub(crate) fn singular_speed_unchecked(a: f64) -> f64 {
    std::f64::consts::SQRT_2 * (a - 0.5)
}

pub fn vector_field(x: &PhasePoint, p: &Params) -> PhasePoint {
    let (u, v, w, y) = (x[0], x[1], x[2], x[3]);
    let (f, _, _) = cubic_eval(u, p.a);
    Vector4::new(w, p.eps * y, -p.c * w - f + v, -p.c * y + p.gamma * v - u)
}

/// Jacobian of the vector field; depends on the state only through u.
pub fn jacobian(x: &PhasePoint, p: &Params) -> Matrix4<f64> {
    frozen_matrix(x[0], 0.0, p)
}

fn frozen_matrix(u_base: f64, lambda: f64, p: &Params) -> Matrix4<f64> {
    let (_, df, _) = cubic_eval(u_base, p.a);
    let coupling = if lambda == 0.0 { p.gamma } else { lambda / p.eps + p.gamma };
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, p.eps, //
        lambda - df, 1.0, -p.c, 0.0, //
        -1.0, coupling, 0.0, -p.c,
    )
}

/// A(lambda) frozen at u = u_base. At u_base = 0 this is the asymptotic matrix A_inf(lambda).
pub fn linearization(u_base: f64, lambda: f64, p: &Params) -> Result<Matrix4<f64>> {
    if lambda != 0.0 && p.eps == 0.0 {
        return Err(Error::SingularLambda(lambda));
    }
    Ok(frozen_matrix(u_base, lambda, p))
}

pub fn a_infinity(lambda: f64, p: &Params) -> Result<Matrix4<f64>> {
    linearization(0.0, lambda, p)
}

#[derive(Clone, Debug)]
pub struct RestSpectrum {
    /// Eigenvalues in increasing order.
    pub mu: [f64; 4],
    /// Unit eigenvectors matching `mu`.
    pub eigvecs: [Vector4<f64>; 4],
    /// False when the radical formulas did not apply and a numeric eigensolve was used.
    pub closed_form: bool,
}

impl RestSpectrum {
    pub fn is_hyperbolic(&self) -> bool {
        self.mu.iter().all(|m| m.abs() > 0.0)
    }

    /// mu1 < mu2 < 0 < -c < mu3 < mu4.
    pub fn is_ordered(&self, c: f64) -> bool {
        let m = self.mu;
        m[0] < m[1] && m[1] < 0.0 && 0.0 < -c && -c < m[2] && m[2] < m[3]
    }
}

pub fn rest_spectrum(lambda: f64, p: &Params) -> Result<RestSpectrum> {
    frozen_spectrum(0.0, lambda, p)
}

/// Eigen-decomposition of A(lambda) frozen at u = u_base.
///
/// With m = mu(mu + c) the characteristic polynomial factors as
/// m^2 - (2 lambda + eps gamma - f') m - (f' - lambda)(lambda + eps gamma) + eps = 0,
/// whose discriminant (eps gamma + f')^2 - 4 eps does not depend on lambda.
pub fn frozen_spectrum(u_base: f64, lambda: f64, p: &Params) -> Result<RestSpectrum> {
    let (_, df, _) = cubic_eval(u_base, p.a);
    if p.eps == 0.0 {
        if lambda != 0.0 {
            return Err(Error::SingularLambda(lambda));
        }
        let (mu1, mu4) = layer_pair(df, p.c);
        let vecs = layer_vectors(df, mu1, mu4, p);
        let mut out = RestSpectrum {
            mu: [mu1, 0.0, -p.c, mu4],
            eigvecs: vecs.map(|v| v.normalize()),
            closed_form: true,
        };
        sort_spectrum(&mut out);
        return Ok(out);
    }
    let disc = (p.eps * p.gamma + df).powi(2) - 4.0 * p.eps;
    let mid = 2.0 * lambda + p.eps * p.gamma - df;
    let ms = [(mid + disc.max(0.0).sqrt()) / 2.0, (mid - disc.max(0.0).sqrt()) / 2.0];
    let closed = disc >= 0.0 && ms.iter().all(|m| p.c * p.c + 4.0 * m >= 0.0);
    if !closed {
        return numeric_spectrum(u_base, lambda, p, disc);
    }
    let (mp, mm) = (ms[0], ms[1]);
    let rp = (p.c * p.c + 4.0 * mp).sqrt();
    let rm = (p.c * p.c + 4.0 * mm).sqrt();
    let mu = [
        -p.c / 2.0 - rp / 2.0,
        -p.c / 2.0 - rm / 2.0,
        -p.c / 2.0 + rm / 2.0,
        -p.c / 2.0 + rp / 2.0,
    ];
    let eig = |m: f64| -> Vector4<f64> {
        let q = m * (m + p.c) + df - lambda;
        Vector4::new(1.0, q, m, m * q / p.eps).normalize()
    };
    let mut out = RestSpectrum { mu, eigvecs: mu.map(eig), closed_form: true };
    sort_spectrum(&mut out);
    Ok(out)
}

fn sort_spectrum(s: &mut RestSpectrum) {
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&i, &j| s.mu[i].total_cmp(&s.mu[j]));
    s.mu = idx.map(|i| s.mu[i]);
    s.eigvecs = idx.map(|i| s.eigvecs[i]);
}

fn numeric_spectrum(u_base: f64, lambda: f64, p: &Params, disc: f64) -> Result<RestSpectrum> {
    let a = frozen_matrix(u_base, lambda, p);
    let ev = a.complex_eigenvalues();
    let scale = a.norm();
    if ev.iter().any(|z| z.im.abs() > 1e-10 * scale.max(1.0)) {
        return Err(Error::NegativeDiscriminant(disc));
    }
    let mu = [ev[0].re, ev[1].re, ev[2].re, ev[3].re];
    let mut out = RestSpectrum {
        mu,
        eigvecs: mu.map(|m| null_vector(&(a - Matrix4::identity() * m))),
        closed_form: false,
    };
    sort_spectrum(&mut out);
    Ok(out)
}

/// Right singular vector of the smallest singular value, sign fixed so the largest entry is positive.
pub(crate) fn null_vector(m: &Matrix4<f64>) -> Vector4<f64> {
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let v: Vector4<f64> = vt.row(k).transpose();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        -v
    } else {
        v
    }
}

/// Roots of mu^2 + c mu + f' = 0, smaller first.
pub(crate) fn layer_pair(df: f64, c: f64) -> (f64, f64) {
    let r = (c * c - 4.0 * df).sqrt();
    ((-c - r) / 2.0, (-c + r) / 2.0)
}

/// Layer eigenvectors (eta1, eta2, eta3, eta4) at eps = 0 in their unscaled form.
pub(crate) fn layer_vectors(df: f64, mu1: f64, mu4: f64, p: &Params) -> [Vector4<f64>; 4] {
    [
        Vector4::new(df, 0.0, df * mu1, mu1),
        Vector4::new(1.0, df, 0.0, (p.gamma * df - 1.0) / p.c),
        Vector4::new(0.0, 0.0, 0.0, 1.0),
        Vector4::new(df, 0.0, df * mu4, mu4),
    ]
}

/// Eigenvalues of A_inf(lambda) for complex lambda, from the same factorization.
pub fn a_infinity_eigenvalues(lambda: Complex64, p: &Params) -> [Complex64; 4] {
    let root = Complex64::new(p.discriminant(), 0.0).sqrt();
    let mid = 2.0 * lambda + p.a + p.eps * p.gamma;
    let c = Complex64::new(p.c, 0.0);
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (k, m) in [(mid + root) / 2.0, (mid - root) / 2.0].into_iter().enumerate() {
        let r = (c * c + 4.0 * m).sqrt();
        out[2 * k] = (-c - r) / 2.0;
        out[2 * k + 1] = (-c + r) / 2.0;
    }
    out
}

/// The two values of lambda for which A_inf(lambda) has the eigenvalue i kappa.
pub fn dispersion_relation(kappa: f64, p: &Params) -> [Complex64; 2] {
    let m = Complex64::new(-kappa * kappa, p.c * kappa);
    let half = (p.a + p.eps * p.gamma) / 2.0;
    let r = Complex64::new(((p.a - p.eps * p.gamma) / 2.0).powi(2) - p.eps, 0.0).sqrt();
    [m - half + r, m - half - r]
}

#[derive(Clone, Debug, Serialize)]
pub struct EssentialMargin {
    /// (Re lambda, Im lambda, min |Re mu|) per grid point.
    pub samples: Vec<(f64, f64, f64)>,
    /// Largest Re lambda on the grid at which some mu is within tolerance of the imaginary axis.
    /// This is the empirical half-plane bound K; `None` when no grid point touches the axis.
    pub spectral_gap_bound: Option<f64>,
}

pub fn essential_spectrum_margin(grid: &[Complex64], p: &Params, tol: f64) -> Result<EssentialMargin> {
    if p.eps <= 0.0 {
        return Err(Error::Domain("essential spectrum scan needs eps > 0".into()));
    }
    let samples: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&l| {
            let m = a_infinity_eigenvalues(l, p)
                .iter()
                .map(|z| z.re.abs())
                .fold(f64::INFINITY, f64::min);
            (l.re, l.im, m)
        })
        .collect();
    let bound = samples
        .iter()
        .filter(|s| s.2 <= tol)
        .map(|s| s.0)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    Ok(EssentialMargin { samples, spectral_gap_bound: bound })
}
