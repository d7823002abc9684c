use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::dynamics::{linearization, Params, PhasePoint};
use crate::error::{Error, Result};
use crate::grassmann::{detection_p6, plane_angle, plucker_of, symplectic_form, LagrangianFrame, PluckerPoint, P6};
use crate::maslov::bundle::{arr, asymptotic_plane, bundle_ode, stable_bundle, AnchoredBundle};
use crate::singular::{jump_off_point, layer_eigenpairs, Segment};
use crate::wave::WaveProfile;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MaslovOptions {
    /// u(tau) = tau_fraction * (u* - 1): 0 is the rest state, 1 the landing point of the back.
    pub tau_fraction: f64,
    /// Smallest admissible |det[V^u(0), E^s(0, z)]| for z >= tau (unit Plücker vectors).
    pub margin_min: f64,
    /// Crossings with |Gamma| below this are degenerate.
    pub regularity: f64,
    /// Bisection tolerance for crossing locations.
    pub z_tol: f64,
    /// Radius of the corner neighbourhoods around p, q and q-hat in (u, v, w, y).
    pub corner_radius: f64,
    /// |w| above this marks a fast segment.
    pub fast_w: f64,
    /// Relative singular-value cut for the intersection dimension.
    pub sv_cut: f64,
}

impl Default for MaslovOptions {
    fn default() -> Self {
        MaslovOptions {
            tau_fraction: 0.02,
            margin_min: 1e-3,
            regularity: 1e-6,
            z_tol: 1e-8,
            corner_radius: 0.05,
            fast_w: 1e-2,
            sv_cut: 1e-7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferencePlane {
    pub tau: f64,
    pub u_tau: f64,
    /// Unit Plücker vector of E^s(0, tau).
    pub plane: [f64; 6],
    pub transversality_margin: f64,
    /// Angle to the leading-order model span{(1, f', 0, (gamma f' - 1)/c), (f', 0, f' mu1, mu1)}.
    pub model_angle: f64,
    pub lagrangian_defect: f64,
}

impl ReferencePlane {
    pub fn p6(&self) -> P6 {
        P6::from_row_slice(&self.plane)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Crossing {
    pub z: f64,
    pub u: f64,
    pub dim: usize,
    /// Spans the intersection; scaled to unit u-component when that is not tiny.
    pub xi: [f64; 4],
    pub gamma: f64,
    pub sign: i32,
    pub segment: Segment,
    /// sigma_min / sigma_max of [E^s(0, tau) | E^u(0, z)] at the crossing.
    pub sigma_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Endpoint {
    pub tau: f64,
    pub gamma: f64,
    pub n_plus: i32,
    pub xi: [f64; 4],
    /// Angle between the endpoint intersection and phi'(tau).
    pub alignment: f64,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateLedger {
    pub entries: Vec<Crossing>,
    pub endpoint: Endpoint,
    pub total: i32,
    pub reference: ReferencePlane,
    pub max_lagrangian_defect: f64,
    /// Largest per-step symplectic correction applied to the anchored bundle.
    pub max_correction: f64,
    /// Sampled detection form (z, beta, u) along E^u(0, z), z <= tau.
    #[serde(skip)]
    pub beta_trace: Vec<[f64; 3]>,
}

/// The three ε = 0 corners p, q and q-hat.
pub fn corner_points(p: &Params) -> [PhasePoint; 3] {
    let c = p.c_star();
    let (us, vs) = jump_off_point(p.a);
    [
        PhasePoint::new(1.0, 0.0, 0.0, -1.0 / c),
        PhasePoint::new(us, vs, 0.0, (p.gamma * vs - us) / c),
        PhasePoint::new(us - 1.0, vs, 0.0, (p.gamma * vs - us + 1.0) / c),
    ]
}

pub fn corner_distance(x: &PhasePoint, p: &Params) -> f64 {
    corner_points(p).iter().map(|q| (x - q).norm()).fold(f64::INFINITY, f64::min)
}

/// Segment label of a profile point at z (the front sits at z = 0).
pub fn segment_at(profile: &WaveProfile, z: f64, z_back: f64, opts: &MaslovOptions) -> Segment {
    let x = profile.state_at(z);
    if corner_distance(&x, &profile.params) < opts.corner_radius {
        return Segment::Corner;
    }
    let fast = x[2].abs() > opts.fast_w;
    if z < 0.0 && !fast {
        // the rest state ahead of the front closes the slow return
        return Segment::SlowLeft;
    }
    match (z < z_back, fast) {
        (true, true) => Segment::Front,
        (true, false) => Segment::SlowRight,
        (false, true) => Segment::Back,
        (false, false) => Segment::SlowLeft,
    }
}

fn back_of(profile: &WaveProfile) -> Result<f64> {
    profile.back_position().ok_or_else(|| Error::Precondition("profile has no back".into()))
}

/// Where u first rises through `level` on the slow return after the back.
fn return_crossing(profile: &WaveProfile, z_back: f64, level: f64) -> Result<f64> {
    let k0 = profile.z.partition_point(|&z| z < z_back);
    let kmin = (k0..profile.z.len())
        .min_by(|&i, &j| profile.states[i][0].total_cmp(&profile.states[j][0]))
        .ok_or_else(|| Error::NoReferencePoint("empty tail".into()))?;
    let k = (kmin..profile.z.len() - 1)
        .find(|&i| profile.states[i][0] < level && profile.states[i + 1][0] >= level)
        .ok_or_else(|| Error::NoReferencePoint(format!("u never returns to {level}")))?;
    let (mut lo, mut hi) = (profile.z[k], profile.z[k + 1]);
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        let m = 0.5 * (lo + hi);
        if profile.u_at(m) < level {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn model_plane(u_tau: f64, p: &Params) -> Result<LagrangianFrame<f64>> {
    let ps = p.with_c(p.c_star());
    let le = layer_eigenpairs(u_tau, &ps)?;
    Ok(LagrangianFrame::from_vectors(&le.eta[1], &le.eta[0]))
}

/// E^s(0, tau) with tau on the slow return where u = tau_fraction (u* - 1).
pub fn compute_reference_plane(profile: &WaveProfile, opts: &MaslovOptions) -> Result<ReferencePlane> {
    if !(opts.tau_fraction > 0.0 && opts.tau_fraction < 1.0) {
        return Err(Error::Domain(format!("tau_fraction = {} must lie in (0, 1)", opts.tau_fraction)));
    }
    let p = &profile.params;
    let landing = jump_off_point(p.a).0 - 1.0;
    let z_back = back_of(profile)?;
    let tau = return_crossing(profile, z_back, opts.tau_fraction * landing)?;
    let ode = bundle_ode();
    let path = stable_bundle(profile, 0.0, tau, &ode)?;
    let vu = asymptotic_plane(p, 0.0, false)?;
    let margin = path.p.iter().map(|q| detection_p6(&vu, q).abs()).fold(f64::INFINITY, f64::min);
    if margin < opts.margin_min {
        return Err(Error::NoReferencePoint(format!("E^s(0, z) nearly meets V^u(0) beyond tau = {tau} (margin {margin:e})")));
    }
    let (_, q) = path.last().expect("nonempty path");
    let u_tau = profile.u_at(tau);
    let computed = PluckerPoint::from_vec(&q).frame();
    let model_angle = plane_angle(&computed, &model_plane(u_tau, p)?)?;
    Ok(ReferencePlane {
        tau,
        u_tau,
        plane: [q[0], q[1], q[2], q[3], q[4], q[5]],
        transversality_margin: margin,
        model_angle,
        lagrangian_defect: path.max_lagrangian_defect,
    })
}

/// Gamma = omega(xi, A(0, z) xi) and its sign (0 when below the regularity threshold).
pub fn crossing_form_sign(xi: &Vector4<f64>, z: f64, profile: &WaveProfile, regularity: f64) -> (f64, i32) {
    let a = linearization(profile.u_at(z), 0.0, &profile.params).expect("lambda = 0");
    let g = symplectic_form(&arr(xi), &arr(&(a * xi)));
    let s = if g.abs() < regularity { 0 } else if g > 0.0 { 1 } else { -1 };
    (g, s)
}

/// Definition of the index: interior signs plus n_+ of the endpoint form.
pub fn maslov_index(signs: &[i32], endpoint_gamma: f64) -> i32 {
    signs.iter().sum::<i32>() + i32::from(endpoint_gamma > 0.0)
}

struct Intersection {
    xi: Vector4<f64>,
    dim: usize,
    ratio: f64,
}

fn intersect(q: &P6, t: &Vector4<f64>, x: &Vector4<f64>, sv_cut: f64) -> Result<Intersection> {
    let (q1, q2) = PluckerPoint::from_vec(q).frame().orthonormal()?;
    let m = Matrix4::from_columns(&[q1, q2, *t, *x]);
    let svd = m.svd(false, true);
    let s = svd.singular_values;
    let vt = svd.v_t.expect("requested");
    let (kmin, smin) = s.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, v)| (k, *v)).expect("4");
    let smax = s.max();
    let dim = s.iter().filter(|&&v| v < sv_cut * smax).count().max(1);
    let coef = vt.row(kmin);
    let xi = t * coef[2] + x * coef[3];
    Ok(Intersection { xi, dim, ratio: smin / smax })
}

fn scaled(xi: &Vector4<f64>) -> Vector4<f64> {
    if xi[0].abs() >= 1e-3 * xi.norm() {
        xi / xi[0]
    } else {
        xi / xi.norm()
    }
}

/// Every interior zero of beta(z) = det[E^s(0, tau), E^u(0, z)] on (z_min, tau), located
/// by bracketing on the integration samples and bisection.
pub fn locate_conjugate_points(
    profile: &WaveProfile,
    bundle: &AnchoredBundle,
    reference: &ReferencePlane,
    opts: &MaslovOptions,
) -> Result<(Vec<Crossing>, Vec<[f64; 3]>)> {
    let q = reference.p6();
    let ode = bundle_ode();
    let z_back = back_of(profile)?;
    let beta: Vec<f64> = (0..bundle.len()).map(|k| detection_p6(&bundle.plucker(profile, k), &q)).collect();
    let trace = (0..bundle.len()).map(|k| [bundle.z[k], beta[k], profile.u_at(bundle.z[k])]).collect();
    // beta vanishes at tau itself; a bracket touching the endpoint is the endpoint crossing
    let scale = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let last = bundle.len() - 1;
    let mut out = Vec::new();
    for k in 0..last {
        let (b0, b1) = (beta[k], beta[k + 1]);
        if b0 == 0.0 || b0.signum() == b1.signum() {
            continue;
        }
        if k + 1 == last || (reference.tau - bundle.z[k + 1]) < 1e-9 * reference.tau.abs().max(1.0) {
            continue;
        }
        let eval = |z: f64| -> Result<f64> {
            let (t, x) = bundle.frame_at(profile, k, z, &ode)?;
            Ok(detection_p6(&plucker_of(&t, &x), &q))
        };
        let (mut lo, mut hi) = (bundle.z[k], bundle.z[k + 1]);
        let mut flo = b0;
        while hi - lo > opts.z_tol {
            let m = 0.5 * (lo + hi);
            let fm = eval(m)?;
            if fm == 0.0 {
                lo = m;
                hi = m;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = m;
                flo = fm;
            } else {
                hi = m;
            }
        }
        let zs = 0.5 * (lo + hi);
        let (t, x) = bundle.frame_at(profile, k, zs, &ode)?;
        let hit = intersect(&q, &t, &x, opts.sv_cut)?;
        let xi = scaled(&hit.xi);
        let (gamma, sign) = crossing_form_sign(&xi, zs, profile, opts.regularity);
        if sign == 0 {
            return Err(Error::DegenerateCrossing { z: zs, value: gamma });
        }
        out.push(Crossing {
            z: zs,
            u: profile.u_at(zs),
            dim: hit.dim,
            xi: arr(&xi),
            gamma,
            sign,
            segment: segment_at(profile, zs, z_back, opts),
            sigma_ratio: hit.ratio,
        });
    }
    // two sign changes inside one step would cancel unseen; the step cap keeps steps far
    // shorter than any crossing spacing, but flag near-touching minima anyway
    for k in 1..last {
        let (bm, b, bp) = (beta[k - 1].abs(), beta[k].abs(), beta[k + 1].abs());
        if b < bm && b < bp && b < 1e-9 * scale && beta[k - 1].signum() == beta[k + 1].signum() {
            return Err(Error::Unresolved(bundle.z[k]));
        }
    }
    Ok((out, trace))
}

/// Full ledger for a solved pulse. A degenerate crossing moves tau a little further
/// along the slow return and tries again (at most three times).
pub fn compute_ledger(profile: &WaveProfile, opts: &MaslovOptions) -> Result<ConjugateLedger> {
    let mut o = *opts;
    let mut tries = 0;
    loop {
        match ledger_at(profile, &o) {
            Err(Error::DegenerateCrossing { .. }) if tries < 3 => {
                tries += 1;
                o.tau_fraction *= 0.8;
            }
            r => return r,
        }
    }
}

fn ledger_at(profile: &WaveProfile, opts: &MaslovOptions) -> Result<ConjugateLedger> {
    let reference = compute_reference_plane(profile, opts)?;
    let ode = bundle_ode();
    let bundle = AnchoredBundle::compute(profile, reference.tau, &ode)?;
    let (entries, beta_trace) = locate_conjugate_points(profile, &bundle, &reference, opts)?;
    let k = bundle.len() - 1;
    let (t, x) = bundle.frame(profile, k);
    let hit = intersect(&reference.p6(), &t, &x, opts.sv_cut)?;
    let xi = scaled(&hit.xi);
    let (gamma, sign) = crossing_form_sign(&xi, reference.tau, profile, opts.regularity);
    if sign == 0 {
        return Err(Error::DegenerateCrossing { z: reference.tau, value: gamma });
    }
    let endpoint = Endpoint {
        tau: reference.tau,
        gamma,
        n_plus: i32::from(gamma > 0.0),
        xi: arr(&xi),
        alignment: line_angle(&xi, &t),
        dim: hit.dim,
    };
    let signs: Vec<i32> = entries.iter().map(|e| e.sign).collect();
    let total = maslov_index(&signs, gamma);
    let max_lagrangian_defect = bundle.max_lagrangian_defect.max(reference.lagrangian_defect);
    Ok(ConjugateLedger { entries, endpoint, total, reference, max_lagrangian_defect, max_correction: bundle.max_correction, beta_trace })
}

/// Angle between two lines.
pub fn line_angle(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    let s = (a - b * (a.dot(b) / b.norm_squared())).norm() / a.norm();
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_arithmetic() {
        assert_eq!(maslov_index(&[-1, 1, -1], 0.3), 0);
        assert_eq!(maslov_index(&[], 0.3), 1);
        assert_eq!(maslov_index(&[], -0.3), 0);
    }

    #[test]
    fn corners_at_quarter() {
        let p = Params::singular(0.25, 1.0, 1e-4).unwrap();
        let [cp, cq, cqh] = corner_points(&p);
        assert_eq!(cp[0], 1.0);
        assert!((cq[0] - 5.0 / 6.0).abs() < 1e-15 && (cqh[0] + 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(cq[1], cqh[1]);
    }

    #[test]
    fn line_angle_basics() {
        let a = Vector4::new(1.0, 0.0, 0.0, 0.0);
        assert!(line_angle(&a, &(-a * 3.0)) < 1e-15);
        assert!((line_angle(&a, &Vector4::new(0.0, 1.0, 0.0, 0.0)) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn reflected_signs_negate_the_interior_sum(signs in prop::collection::vec(prop::bool::ANY, 0..12)) {
            let s: Vec<i32> = signs.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let r: Vec<i32> = s.iter().map(|x| -x).collect();
            // endpoint contributes 0 for negative Gamma, so only the interior sum flips
            prop_assert_eq!(maslov_index(&s, -1.0), -maslov_index(&r, -1.0));
            prop_assert_eq!(maslov_index(&s, 1.0) - maslov_index(&s, -1.0), 1);
        }
    }
}
