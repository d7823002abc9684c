use nalgebra::{Matrix4, Vector4};

use crate::dynamics::{frozen_spectrum, linearization, Params};
use crate::error::{Error, Result};
use crate::grassmann::{detection_p6, integrate_plucker, j_matrix, plucker_of, symplectic_form, to_arr, PluckerPath, PluckerPoint, P6};
use crate::ode::Dopri;
use crate::wave::WaveProfile;

/// Integrator settings shared by all bundle computations.
pub fn bundle_ode() -> Dopri {
    Dopri { rtol: 1e-11, atol: 1e-13, h_max: 0.5, ..Dopri::default() }
}

/// A(lambda, z) along the profile.
pub fn a_along(profile: &WaveProfile, lambda: f64) -> impl Fn(f64) -> Matrix4<f64> + '_ {
    move |z| linearization(profile.u_at(z), lambda, &profile.params).expect("eps > 0 on a solved profile")
}

/// Plücker vector of the stable (`stable = true`) or unstable plane of A_inf(lambda).
///
/// At lambda = 0 the sign is fixed against the opposite plane; for lambda > 0 it is carried
/// along by continuation in lambda, so the orientation varies continuously.
pub fn asymptotic_plane(p: &Params, lambda: f64, stable: bool) -> Result<P6> {
    let plane = |lam: f64, st: bool| -> Result<P6> {
        let s = frozen_spectrum(0.0, lam, p)?;
        if !(s.mu[1] < 0.0 && s.mu[2] > 0.0) {
            return Err(Error::NotHyperbolic(format!("A_inf({lam}) eigenvalues {:?}", s.mu)));
        }
        let (i, j) = if st { (0, 1) } else { (2, 3) };
        let q = plucker_of(&s.eigvecs[i], &s.eigvecs[j]);
        Ok(q / q.norm())
    };
    let q0 = plane(0.0, stable)?;
    let d = detection_p6(&q0, &plane(0.0, !stable)?);
    if d.abs() < 1e-3 {
        return Err(Error::Precondition("stable and unstable planes of A_inf(0) nearly intersect".into()));
    }
    let mut cur = if d > 0.0 { q0 } else { -q0 };
    let mut lam = 0.0;
    let mut h = lambda / 16.0;
    while lam < lambda {
        let next = (lam + h).min(lambda);
        let q = plane(next, stable)?;
        let dot = q.dot(&cur);
        if dot.abs() < 0.95 {
            h *= 0.5;
            if h < 1e-14 * lambda.max(1.0) {
                return Err(Error::Precondition(format!("asymptotic plane jumps near lambda = {next}")));
            }
            continue;
        }
        cur = if dot > 0.0 { q } else { -q };
        lam = next;
        h *= 1.5;
    }
    Ok(cur)
}

/// E^u(lambda, z) by forward Plücker integration from the left end of the profile.
pub fn unstable_bundle(profile: &WaveProfile, lambda: f64, z_end: f64, ode: &Dopri) -> Result<PluckerPath> {
    let p0 = asymptotic_plane(&profile.params, lambda, false)?;
    integrate_plucker(a_along(profile, lambda), &p0, profile.z[0], z_end, ode)
}

/// E^s(lambda, z) by backward Plücker integration from the right end of the profile.
pub fn stable_bundle(profile: &WaveProfile, lambda: f64, z_stop: f64, ode: &Dopri) -> Result<PluckerPath> {
    let p0 = asymptotic_plane(&profile.params, lambda, true)?;
    let z1 = *profile.z.last().expect("nonempty");
    integrate_plucker(a_along(profile, lambda), &p0, z1, z_stop, ode)
}

/// E^u(0, z) carried as span{phi'(z), xi(z)}.
///
/// At lambda = 0 the plane sits at a saddle of the induced flow while the wave creeps
/// along a slow manifold, so plain forward Plücker integration drifts off it at rate |c|.
/// Since phi' is known from the profile it is kept in the plane exactly; only the
/// complementary direction is integrated, and that direction is attracting.
///
/// The interpolated profile solves its ODE only to collocation accuracy, so phi'(z) and
/// the integrated direction drift apart symplectically by that much. Each step projects
/// xi back into the symplectic complement of phi'; the largest per-step correction is kept.
#[derive(Clone, Debug)]
pub struct AnchoredBundle {
    pub z: Vec<f64>,
    /// Unit complement, orthogonal to phi'(z) and J phi'(z).
    pub xi: Vec<Vector4<f64>>,
    pub max_lagrangian_defect: f64,
    pub max_correction: f64,
}

fn unit_velocity(profile: &WaveProfile, z: f64) -> Vector4<f64> {
    profile.derivative_at(z).normalize()
}

/// Removes the components of xi along t and along Jt, so that span{t, xi} is
/// Lagrangian exactly. Returns the size of the symplectic correction.
fn project_out(xi: &mut Vector4<f64>, t: &Vector4<f64>) -> f64 {
    let n = (j_matrix() * t).normalize();
    let drift = n.dot(xi) / xi.norm();
    *xi -= t * t.dot(xi) + n * n.dot(xi);
    *xi /= xi.norm();
    drift.abs()
}

impl AnchoredBundle {
    pub fn compute(profile: &WaveProfile, z_end: f64, ode: &Dopri) -> Result<Self> {
        let z0 = profile.z[0];
        let t0 = unit_velocity(profile, z0);
        let s = frozen_spectrum(0.0, 0.0, &profile.params)?;
        // the unstable eigenvector least aligned with phi'
        let mut xi0 = [s.eigvecs[2], s.eigvecs[3]]
            .into_iter()
            .map(|v| v - t0 * t0.dot(&v))
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("two vectors");
        let mut corr = project_out(&mut xi0, &t0);
        let a = a_along(profile, 0.0);
        let mut out = AnchoredBundle { z: vec![z0], xi: vec![xi0], max_lagrangian_defect: 0.0, max_correction: 0.0 };
        let mut zs = Vec::new();
        let mut xs = Vec::new();
        ode.integrate(
            |z, x| a(z) * x,
            z0,
            z_end,
            xi0,
            |z, x| {
                corr = corr.max(project_out(x, &unit_velocity(profile, z)));
                zs.push(z);
                xs.push(*x);
            },
        )?;
        out.max_correction = corr;
        out.z.extend(zs);
        out.xi.extend(xs);
        for k in 0..out.z.len() {
            out.max_lagrangian_defect = out.max_lagrangian_defect.max(out.defect(profile, k));
        }
        Ok(out)
    }

    fn defect(&self, profile: &WaveProfile, k: usize) -> f64 {
        PluckerPoint::from_vec(&self.plucker(profile, k)).lagrangian_defect()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Orthonormal frame (phi'/|phi'|, xi) at sample k.
    pub fn frame(&self, profile: &WaveProfile, k: usize) -> (Vector4<f64>, Vector4<f64>) {
        (unit_velocity(profile, self.z[k]), self.xi[k])
    }

    pub fn plucker(&self, profile: &WaveProfile, k: usize) -> P6 {
        let (t, x) = self.frame(profile, k);
        plucker_of(&t, &x)
    }

    /// Frame at an arbitrary z >= z[k], integrating from sample k.
    pub fn frame_at(&self, profile: &WaveProfile, k: usize, z: f64, ode: &Dopri) -> Result<(Vector4<f64>, Vector4<f64>)> {
        let a = a_along(profile, 0.0);
        let mut x = ode.integrate(|s, x| a(s) * x, self.z[k], z, self.xi[k], |s, x| {
            project_out(x, &unit_velocity(profile, s));
        })?;
        let t = unit_velocity(profile, z);
        project_out(&mut x, &t);
        Ok((t, x))
    }
}

/// Windowed check of the conservation law e^{cz} omega(u, v) = const for solutions of
/// the eigenvalue equation: the span is tiled by windows of length `window`, each started
/// from a fresh pair with omega = -1. Returns the largest relative drift.
///
/// Whole-span pairs are useless here: both solutions align with the dominant direction and
/// omega(u, v) is lost to cancellation well before any real drift would show.
pub fn symplectic_drift(profile: &WaveProfile, lambda: f64, z0: f64, z1: f64, window: f64, ode: &Dopri) -> Result<f64> {
    let c = profile.params.c;
    let a = a_along(profile, lambda);
    let rhs = |z: f64, s: &nalgebra::SVector<f64, 8>| {
        let m = a(z);
        let u = m * Vector4::new(s[0], s[1], s[2], s[3]);
        let v = m * Vector4::new(s[4], s[5], s[6], s[7]);
        nalgebra::SVector::<f64, 8>::from_column_slice(&[u[0], u[1], u[2], u[3], v[0], v[1], v[2], v[3]])
    };
    let omega = |s: &nalgebra::SVector<f64, 8>| {
        symplectic_form(&[s[0], s[1], s[2], s[3]], &[s[4], s[5], s[6], s[7]])
    };
    let mut worst: f64 = 0.0;
    let mut start = z0;
    while start < z1 {
        let end = (start + window).min(z1);
        // u = x, v = J x gives omega(u, v) = -|x|^2
        let x = Vector4::new(1.0, 0.5, -0.25, 0.75).normalize();
        let jx = j_matrix() * x;
        let s0 = nalgebra::SVector::<f64, 8>::from_column_slice(&[x[0], x[1], x[2], x[3], jx[0], jx[1], jx[2], jx[3]]);
        let w0 = omega(&s0);
        ode.integrate(rhs, start, end, s0, |z, s| {
            let w = (c * (z - start)).exp() * omega(s);
            worst = worst.max(((w - w0) / w0).abs());
        })?;
        start = end;
    }
    Ok(worst)
}

/// Lagrangian defect of a Plücker path, for reporting.
pub fn path_defects(path: &PluckerPath) -> (f64, f64) {
    (path.max_lagrangian_defect, path.max_relation_defect)
}

pub(crate) fn arr(v: &Vector4<f64>) -> [f64; 4] {
    to_arr(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::PluckerPoint;

    #[test]
    fn asymptotic_planes_are_lagrangian_and_oriented() {
        let p = Params::singular(0.25, 1.0, 5e-4).unwrap().with_c(-0.3147);
        for lam in [0.0, 0.01, 0.3, 1.0, 5.0] {
            let s = asymptotic_plane(&p, lam, true).unwrap();
            let u = asymptotic_plane(&p, lam, false).unwrap();
            assert!(PluckerPoint::from_vec(&s).lagrangian_defect() < 1e-12);
            assert!(PluckerPoint::from_vec(&u).lagrangian_defect() < 1e-12);
            // transverse for every lambda to the right of the essential spectrum
            assert!(detection_p6(&s, &u).abs() > 1e-8, "lambda {lam}");
        }
        // continuity in lambda: nearby planes have nearby (not flipped) coordinates
        let a = asymptotic_plane(&p, 0.5, true).unwrap();
        let b = asymptotic_plane(&p, 0.5001, true).unwrap();
        assert!((a - b).norm() < 1e-3);
    }

    #[test]
    fn projection_keeps_the_plane_lagrangian() {
        let t = Vector4::new(0.3, -0.1, 0.8, 0.2).normalize();
        let mut x = Vector4::new(1.0, 2.0, -0.5, 0.25);
        project_out(&mut x, &t);
        assert!(symplectic_form(&arr(&t), &arr(&x)).abs() < 1e-15);
        assert!(t.dot(&x).abs() < 1e-15);
        assert!((x.norm() - 1.0).abs() < 1e-15);
    }
}
