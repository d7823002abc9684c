use std::f64::consts::SQRT_2;

use nalgebra::Vector4;
use serde::Serialize;

use crate::dynamics::{cubic_eval, Params};
use crate::error::{Error, Result};
use crate::grassmann::{change_basis_plucker, det_columns, detection_form, plucker_of, symplectic_form, to_arr, BasisTag, PluckerPoint};
use crate::singular::{corner_q_basis, jump_off_point, layer_eigenpairs, y_constant};

/// Report for the corner at p (q-hat is its mirror image and gives the same numbers).
#[derive(Clone, Debug, Serialize)]
pub struct CornerPReport {
    pub a: f64,
    pub k: f64,
    /// V^s(0) in the eigenbasis at p, scaled so that p12 = -2a(3 - 2a).
    pub plucker: [f64; 6],
    pub coef_a: f64,
    pub coef_b: f64,
    pub coef_c: f64,
    /// min_z h(z) = 2 sqrt(AC) - B.
    pub min_h: f64,
    pub closed_form: f64,
    /// Largest mismatch of A, B, C against their closed forms.
    pub coef_error: f64,
    /// Smallest h over a z-grid, along both gamma-tilde paths.
    pub sampled_min_plus: f64,
    pub sampled_min_minus: f64,
}

/// 8a(1-a) sqrt((1-2a)(3-2a)) - 4a(1-2a)(3-2a).
pub fn corner_p_closed_form(a: f64) -> f64 {
    8.0 * a * (1.0 - a) * ((1.0 - 2.0 * a) * (3.0 - 2.0 * a)).sqrt() - 4.0 * a * (1.0 - 2.0 * a) * (3.0 - 2.0 * a)
}

/// Eigenbasis at p = (1, 0, 0, .) with the scalings used by the corner argument:
/// eta1 = (a-1, 0, (1-a)/sqrt2, -1/sqrt2), eta2 = (1, a-1, 0, (gamma(a-1) - 1)/c), eta3 = e4,
/// eta4 = (1, 0, sqrt2(1-a), -sqrt2).
pub fn corner_p_basis(p: &Params) -> Result<[Vector4<f64>; 4]> {
    let le = layer_eigenpairs(1.0, p)?;
    let df = a_minus_one(p.a);
    let mut e = le.eta;
    e[3] /= df;
    Ok(e)
}

fn a_minus_one(a: f64) -> f64 {
    cubic_eval(1.0, a).1
}

fn h_path(z: f64, k: f64, sign: f64) -> PluckerPoint<f64> {
    let r = (z * SQRT_2 / 2.0).exp();
    PluckerPoint::new([0.0, 1.0 / r, sign * k, sign, k * r, 0.0])
}

pub fn corner_p(a: f64, gamma: f64) -> Result<CornerPReport> {
    let p = Params::singular(a, gamma, 0.0)?;
    let basis = corner_p_basis(&p)?;
    let omega = |i: usize, j: usize| symplectic_form(&to_arr(&basis[i]), &to_arr(&basis[j]));
    let k = -omega(1, 2) / omega(0, 3);
    // V^s(0) = span{eta1(0), eta2(0)}: the u -> 0 limit of the reference plane
    let rest = layer_eigenpairs(0.0, &p)?;
    let vs = PluckerPoint::from_vec(&plucker_of(&rest.eta[0], &rest.eta[1]));
    let nb = [to_arr(&basis[0]), to_arr(&basis[1]), to_arr(&basis[2]), to_arr(&basis[3])];
    let q = change_basis_plucker(&vs, &nb, BasisTag::Eigen(1.0))?;
    let target = -2.0 * a * (3.0 - 2.0 * a);
    if q.p[0].abs() < 1e-14 {
        return Err(Error::Corner(format!("p12 of V^s(0) vanishes in the eigenbasis at a = {a}")));
    }
    let s = target / q.p[0];
    let pl = q.p.map(|x| x * s);
    let (ca, cb, cc) = (-pl[4], -(k * pl[3] + pl[2]), -k * pl[1]);
    let want = [
        a * (1.0 - 2.0 * a) * (3.0 - 2.0 * a) * (1.0 - a),
        4.0 * a * (1.0 - 2.0 * a) * (3.0 - 2.0 * a),
        16.0 * a * (1.0 - a),
    ];
    let coef_error = [ca - want[0], cb - want[1], cc - want[2]].iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let min_h = 2.0 * (ca * cc).sqrt() - cb;
    let qp = PluckerPoint::new(pl);
    let sampled = |sign: f64| -> Result<f64> {
        let mut m = f64::INFINITY;
        for i in 0..=400 {
            let z = -20.0 + 0.1 * i as f64;
            m = m.min(detection_form(&h_path(z, k, sign), &qp)?);
        }
        Ok(m)
    };
    let rep = CornerPReport {
        a,
        k,
        plucker: pl,
        coef_a: ca,
        coef_b: cb,
        coef_c: cc,
        min_h,
        closed_form: corner_p_closed_form(a),
        coef_error,
        sampled_min_plus: sampled(1.0)?,
        sampled_min_minus: sampled(-1.0)?,
    };
    if !(rep.min_h > 0.0) || !(ca > 0.0 && cc > 0.0) {
        return Err(Error::Corner(format!("h(z) is not positive at a = {a}: 2 sqrt(AC) - B = {}", rep.min_h)));
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct CornerQReport {
    pub a: f64,
    pub u_tau: f64,
    /// dv/dzeta at q on the right branch; > 0 means phi' enters along +eta2.
    pub entrance_rate: f64,
    /// c* K; < 0 selects the path gamma-minus on exit.
    pub exit_ck: f64,
    /// det[r1, r2, eta2, eta4] and det[r1, r2, -eta3, eta4] with r1, r2 the model reference plane.
    pub det_entry: f64,
    pub det_exit: f64,
    pub det_entry_closed: f64,
    pub det_exit_closed: f64,
}

fn model_reference(u_tau: f64, p: &Params) -> Result<(Vector4<f64>, Vector4<f64>, f64)> {
    let le = layer_eigenpairs(u_tau, p)?;
    Ok((le.eta[1], le.eta[0], le.mu[0]))
}

pub fn corner_q(a: f64, gamma: f64, u_tau: f64) -> Result<CornerQReport> {
    let p = Params::singular(a, gamma, 0.0)?;
    let landing = jump_off_point(a).0 - 1.0;
    if !(u_tau > landing && u_tau < 0.0) {
        return Err(Error::Domain(format!("u_tau = {u_tau} must lie in ({landing}, 0)")));
    }
    let (us, vs) = jump_off_point(a);
    let c = p.c;
    let entrance_rate = (gamma * vs - us) / c;
    let exit_ck = c * y_constant(a);
    let [_, e2, e3, e4] = corner_q_basis(&p);
    let (r1, r2, mu1) = model_reference(u_tau, &p)?;
    let (r1, r2) = (to_arr(&r1), to_arr(&r2));
    let det_entry = det_columns(&r1, &r2, &to_arr(&e2), &to_arr(&e4));
    let det_exit = det_columns(&r1, &r2, &to_arr(&-e3), &to_arr(&e4));
    let df = cubic_eval(u_tau, a).1;
    let delta = -df - a;
    let qq = SQRT_2 / 2.0 - mu1;
    let det_entry_closed = delta * (delta * a * SQRT_2 + 2.0 * qq * a * a - delta * mu1) / (-2.0 * a * c);
    let det_exit_closed = df * df * a * (SQRT_2 - 2.0 * mu1) / 2.0;
    let rep = CornerQReport { a, u_tau, entrance_rate, exit_ck, det_entry, det_exit, det_entry_closed, det_exit_closed };
    if !(entrance_rate > 0.0 && exit_ck < 0.0 && det_entry > 0.0 && det_exit > 0.0) {
        return Err(Error::Corner(format!("corner q check fails at a = {a}, u_tau = {u_tau}: {rep:?}")));
    }
    Ok(rep)
}

/// Evenly spaced interior grid of n points on (lo, hi).
pub fn interior_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect()
}
