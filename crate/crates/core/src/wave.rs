use nalgebra::{Matrix4, RowVector4, Vector4};
use serde::Serialize;

use crate::banded::BandMatrix;
use crate::dynamics::{frozen_spectrum, jacobian, vector_field, Params, PhasePoint};
use crate::error::{Error, Result};
use crate::ode::Dopri;
use crate::singular::{front_profile, front_y, jump_off_point, CriticalBranch, SingularOrbit};
use crate::Frame;

/// Eigen-splitting of the linearization at a hyperbolic equilibrium.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub mu: [f64; 4],
    pub vecs: [Vector4<f64>; 4],
    /// Rows of the inverse eigenvector matrix (left eigenvectors, dual to `vecs`).
    pub left: [RowVector4<f64>; 4],
}

impl Splitting {
    /// Splitting of A(0) frozen at u (the Jacobian at any equilibrium with that u).
    pub fn at(u: f64, p: &Params) -> Result<Self> {
        let s = frozen_spectrum(u, 0.0, p)?;
        if !(s.mu[1] < 0.0 && s.mu[2] > 0.0) {
            return Err(Error::NotHyperbolic(format!("eigenvalues {:?}", s.mu)));
        }
        let v = Matrix4::from_columns(&s.eigvecs);
        let w = v.try_inverse().ok_or_else(|| Error::Singular("eigenvector matrix".into()))?;
        Ok(Splitting { mu: s.mu, vecs: s.eigvecs, left: [0, 1, 2, 3].map(|k| w.row(k).into_owned()) })
    }

    pub fn stable_frame(&self) -> Frame {
        Frame::from_vectors(&self.vecs[0], &self.vecs[1])
    }

    pub fn unstable_frame(&self) -> Frame {
        Frame::from_vectors(&self.vecs[2], &self.vecs[3])
    }

    /// Spectral projector onto the stable (`true`) or unstable subspace.
    pub fn projector(&self, stable: bool) -> Matrix4<f64> {
        let ks = if stable { [0, 1] } else { [2, 3] };
        ks.iter().map(|&k| self.vecs[k] * self.left[k]).sum()
    }
}

/// (V^u(0), V^s(0)): unstable and stable planes of A_inf(0).
pub fn boundary_projectors(p: &Params) -> Result<(Frame, Frame)> {
    let s = Splitting::at(0.0, p)?;
    Ok((s.unstable_frame(), s.stable_frame()))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BvpOptions {
    /// Newton stopping tolerance on the max-norm of the discrete residual.
    pub tol: f64,
    pub max_newton: usize,
    /// Target arc length of the profile per mesh interval.
    pub arc_step: f64,
    pub h_max: f64,
    /// Equidistribution passes after the first converged solve.
    pub refinements: usize,
    /// Length of the domain left of the front (z < 0).
    pub left_length: f64,
    /// The tail is cut where the slow variable has decayed by this factor.
    pub tail_decay: f64,
    /// Allowed distance of the endpoints from the rest state.
    pub tol_bc: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            tol: 1e-10,
            max_newton: 40,
            arc_step: 0.005,
            h_max: 1.0,
            refinements: 2,
            left_length: 50.0,
            tail_decay: 1e-4,
            tol_bc: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    Pulse,
    Front,
}

#[derive(Clone, Debug)]
pub struct WaveProfile {
    pub kind: WaveKind,
    /// Parameters with c set to the computed speed.
    pub params: Params,
    pub z: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub c_eps: f64,
    pub eps: f64,
    /// Max-norm of the discrete residual at the accepted solution.
    pub residual: f64,
    /// Index of the node carrying the phase condition u = 1/2.
    pub phase_index: usize,
    pub newton_iterations: usize,
    /// Pivot-magnitude ratio of the final Jacobian factorization.
    pub pivot_ratio: f64,
    /// Right-hand equilibrium (origin for a pulse).
    pub right_state: PhasePoint,
}

impl WaveProfile {
    pub fn z_range(&self) -> (f64, f64) {
        (self.z[0], *self.z.last().expect("nonempty"))
    }

    fn interval(&self, z: f64) -> usize {
        let n = self.z.len();
        match self.z.binary_search_by(|x| x.total_cmp(&z)) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.clamp(1, n - 1) - 1,
        }
    }

    /// Piecewise cubic Hermite interpolant with nodal slopes F(U_i); this is the
    /// collocation polynomial itself. Clamped outside the grid.
    pub fn state_at(&self, z: f64) -> PhasePoint {
        let (lo, hi) = self.z_range();
        let z = z.clamp(lo, hi);
        let i = self.interval(z);
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        let h = z1 - z0;
        let t = (z - z0) / h;
        let (u0, u1) = (self.states[i], self.states[i + 1]);
        let (f0, f1) = (vector_field(&u0, &self.params), vector_field(&u1, &self.params));
        let h00 = (1.0 + 2.0 * t) * (1.0 - t).powi(2);
        let h10 = t * (1.0 - t).powi(2);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        u0 * h00 + f0 * (h10 * h) + u1 * h01 + f1 * (h11 * h)
    }

    /// phi'(z) = F(phi(z)).
    pub fn derivative_at(&self, z: f64) -> PhasePoint {
        vector_field(&self.state_at(z), &self.params)
    }

    /// Derivative of the interpolating polynomial (for consistency checks against F).
    pub fn poly_derivative_at(&self, z: f64) -> PhasePoint {
        let i = self.interval(z);
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        let h = z1 - z0;
        let t = ((z - z0) / h).clamp(0.0, 1.0);
        let (u0, u1) = (self.states[i], self.states[i + 1]);
        let (f0, f1) = (vector_field(&u0, &self.params), vector_field(&u1, &self.params));
        let d00 = 6.0 * t * t - 6.0 * t;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t * t - 2.0 * t;
        (u0 * d00 + u1 * d01) / h + f0 * d10 + f1 * d11
    }

    pub fn u_at(&self, z: f64) -> f64 {
        self.state_at(z)[0]
    }

    /// Largest v over the grid.
    pub fn max_v(&self) -> f64 {
        self.states.iter().map(|x| x[1]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Location of the back: first downward crossing of u = u* - 1/2 after the front.
    pub fn back_position(&self) -> Option<f64> {
        let level = jump_off_point(self.params.a).0 - 0.5;
        (self.phase_index..self.z.len() - 1).find_map(|i| {
            let (a, b) = (self.states[i][0] - level, self.states[i + 1][0] - level);
            (a > 0.0 && b <= 0.0).then(|| self.z[i] + (self.z[i + 1] - self.z[i]) * a / (a - b))
        })
    }

    /// Max over interval midpoints of |poly' - F(poly)| (the collocation defect off the nodes).
    pub fn midpoint_defect(&self) -> f64 {
        (0..self.z.len() - 1)
            .map(|i| {
                let zm = 0.5 * (self.z[i] + self.z[i + 1]);
                (self.poly_derivative_at(zm) - self.derivative_at(zm)).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Rows (z, u, v, w, y) for export.
    pub fn rows(&self) -> Vec<[f64; 5]> {
        self.z.iter().zip(&self.states).map(|(&z, x)| [z, x[0], x[1], x[2], x[3]]).collect()
    }
}

// ---------------------------------------------------------------------------
// seeds

/// Slow-flow trajectory v(zeta) on a branch, sampled uniformly in zeta.
struct SlowTable {
    dzeta: f64,
    v: Vec<f64>,
}

impl SlowTable {
    /// Integrates dv/dzeta = (gamma v - g(v))/c from v0 until `stop(v)` or `zeta_max`.
    fn build(branch: &CriticalBranch, p: &Params, v0: f64, zeta_max: f64, stop: impl Fn(f64) -> bool) -> Result<Self> {
        let n = 4000;
        let dzeta = zeta_max / n as f64;
        let ode = Dopri::with_tol(1e-11, 1e-14);
        let mut v = vec![v0];
        let mut cur = nalgebra::SVector::<f64, 1>::new(v0);
        for k in 0..n {
            cur = ode.solve(
                |_, x| {
                    let vv = x[0].clamp(branch.v_range().0, branch.v_range().1);
                    nalgebra::SVector::<f64, 1>::new((p.gamma * vv - branch.g(vv).unwrap_or(0.0)) / p.c)
                },
                k as f64 * dzeta,
                (k + 1) as f64 * dzeta,
                cur,
            )?;
            v.push(cur[0]);
            if stop(cur[0]) {
                break;
            }
        }
        Ok(SlowTable { dzeta, v })
    }

    fn duration(&self) -> f64 {
        self.dzeta * (self.v.len() - 1) as f64
    }

    fn at(&self, zeta: f64) -> f64 {
        let s = (zeta / self.dzeta).max(0.0);
        let k = (s.floor() as usize).min(self.v.len() - 2);
        let t = (s - k as f64).min(1.0);
        self.v[k] * (1.0 - t) + self.v[k + 1] * t
    }
}

fn slow_state(branch: &CriticalBranch, v: f64, p: &Params) -> Result<(f64, f64)> {
    let u = branch.g(v)?;
    Ok((u, (p.gamma * v - u) / p.c))
}

/// Seed grid: fine inside the fast windows, coarse in between, with nodes at every `knots` entry.
fn seed_grid(z0: f64, z1: f64, windows: &[(f64, f64)], knots: &[f64]) -> Vec<f64> {
    let mut z = vec![z0];
    let mut cur = z0;
    while cur < z1 {
        let fine = windows.iter().any(|&(a, b)| cur >= a - 1.0 && cur <= b);
        let h = if fine { 0.05 } else { 0.5 };
        let next = cur + h;
        cur = knots.iter().copied().find(|&k| k > cur && k < next).unwrap_or(next);
        z.push(cur.min(z1));
    }
    z
}

struct Seed {
    z: Vec<f64>,
    states: Vec<PhasePoint>,
    z_back: f64,
}

fn pulse_seed(p: &Params, opts: &BvpOptions) -> Result<Seed> {
    let a = p.a;
    let c = p.c;
    let (_, vs) = jump_off_point(a);
    let right = CriticalBranch::right(a);
    let left = CriticalBranch::left(a);
    let tr = SlowTable::build(&right, p, 0.0, 0.2, |v| v >= vs)?;
    // stop exactly at v*: trim the overshoot by linear interpolation of the last step
    let zeta_r = {
        let n = tr.v.len();
        let (v0, v1) = (tr.v[n - 2], tr.v[n - 1]);
        tr.dzeta * ((n - 2) as f64 + (vs - v0) / (v1 - v0))
    };
    let tl = SlowTable::build(&left, p, vs, 3.0, |v| v <= opts.tail_decay * vs)?;
    let zb = zeta_r / p.eps;
    let z_end = zb + tl.duration() / p.eps;
    let half = 30.0;
    let z = seed_grid(-opts.left_length, z_end, &[(-opts.left_length, half), (zb - half, zb + half)], &[0.0, zb]);
    let mut states = Vec::with_capacity(z.len());
    for &zz in &z {
        let (uf, wf) = front_profile(zz, a);
        let yf = if zz < half + 40.0 { front_y(zz, a)? } else { -1.0 / c };
        let sb = zz - zb;
        let (ubf, wbf) = front_profile(sb, a);
        let ybf = if sb.abs() < half + 40.0 { front_y(sb, a)? } else if sb < 0.0 { 0.0 } else { -1.0 / c };
        let x = if zz <= 0.0 {
            Vector4::new(uf, 0.0, wf, yf)
        } else if zz <= zb {
            let v = tr.at(p.eps * zz).min(vs);
            let (u, y) = slow_state(&right, v, p)?;
            Vector4::new(u + (uf - 1.0) - ubf, v, wf - wbf, y + (yf + 1.0 / c) - ybf)
        } else {
            let v = tl.at(p.eps * sb);
            let (u, y) = slow_state(&left, v, p)?;
            Vector4::new(u + (1.0 - ubf), v, -wbf, y + (-ybf - 1.0 / c))
        };
        states.push(x);
    }
    Ok(Seed { z, states, z_back: zb })
}

// ---------------------------------------------------------------------------
// collocation

/// Two-point BVP in (U, c) or, with a second pinned node, in (U, c, eps).
///
/// Unknowns are stored per node as (u, v, w, y, c[, eps]); the parameters are
/// carried on every node with continuity rows so the Jacobian stays banded.
struct Bvp<'a> {
    p: Params,
    z: &'a [f64],
    /// (node, prescribed u), sorted by node. One pin fixes translation; a second frees eps.
    pins: Vec<(usize, f64)>,
    right_u: f64,
    right_state: PhasePoint,
}

impl<'a> Bvp<'a> {
    fn n(&self) -> usize {
        self.z.len()
    }

    fn stride(&self) -> usize {
        4 + self.pins.len()
    }

    fn unpack(&self, x: &[f64], i: usize) -> (PhasePoint, Params) {
        let s = self.stride();
        let b = s * i;
        let mut p = self.p.with_c(x[b + 4]);
        if s == 6 {
            p = p.with_eps(x[b + 5]);
        }
        (Vector4::new(x[b], x[b + 1], x[b + 2], x[b + 3]), p)
    }

    fn pack(&self, states: &[PhasePoint], p: &Params) -> Vec<f64> {
        let free_eps = self.stride() == 6;
        states
            .iter()
            .flat_map(|u| {
                let mut v = vec![u[0], u[1], u[2], u[3], p.c];
                if free_eps {
                    v.push(p.eps);
                }
                v
            })
            .collect()
    }

    fn pins_up_to(&self, i: usize) -> usize {
        self.pins.iter().filter(|(k, _)| *k <= i).count()
    }

    fn interval_row(&self, i: usize) -> usize {
        2 + self.stride() * i + self.pins_up_to(i)
    }

    fn pin_row(&self, j: usize) -> usize {
        let k = self.pins[j].0;
        2 + self.stride() * k + j
    }

    fn band(&self) -> usize {
        2 * self.stride() - 2
    }

    fn bc_rows(&self, x: &[f64]) -> Result<([RowVector4<f64>; 2], [RowVector4<f64>; 2])> {
        let (_, p0) = self.unpack(x, 0);
        let (_, pn) = self.unpack(x, self.n() - 1);
        let l = Splitting::at(0.0, &p0)?;
        let r = Splitting::at(self.right_u, &pn)?;
        Ok(([l.left[0], l.left[1]], [r.left[2], r.left[3]]))
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let s = self.stride();
        let mut r = vec![0.0; s * n];
        let (lb, rb) = self.bc_rows(x)?;
        let (u0, _) = self.unpack(x, 0);
        r[0] = (lb[0] * u0)[0];
        r[1] = (lb[1] * u0)[0];
        for i in 0..n - 1 {
            let (ui, pi) = self.unpack(x, i);
            let (uj, _) = self.unpack(x, i + 1);
            let h = self.z[i + 1] - self.z[i];
            let fi = vector_field(&ui, &pi);
            let fj = vector_field(&uj, &pi);
            let um = (ui + uj) * 0.5 + (fi - fj) * (h / 8.0);
            let fm = vector_field(&um, &pi);
            let res = uj - ui - (fi + fm * 4.0 + fj) * (h / 6.0);
            let row = self.interval_row(i);
            r[row..row + 4].copy_from_slice(res.as_slice());
            for q in 4..s {
                r[row + q] = x[s * (i + 1) + q] - x[s * i + q];
            }
        }
        for (j, &(k, target)) in self.pins.iter().enumerate() {
            r[self.pin_row(j)] = x[s * k] - target;
        }
        let (un, _) = self.unpack(x, n - 1);
        let d = un - self.right_state;
        r[s * n - 2] = (rb[0] * d)[0];
        r[s * n - 1] = (rb[1] * d)[0];
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<BandMatrix> {
        let n = self.n();
        let s = self.stride();
        let mut m = BandMatrix::new(s * n, self.band(), self.band());
        let (lb, rb) = self.bc_rows(x)?;
        for (row, l) in lb.iter().enumerate() {
            for j in 0..4 {
                m.add(row, j, l[j]);
            }
        }
        let id = Matrix4::<f64>::identity();
        for i in 0..n - 1 {
            let (ui, pi) = self.unpack(x, i);
            let (uj, _) = self.unpack(x, i + 1);
            let h = self.z[i + 1] - self.z[i];
            let fi = vector_field(&ui, &pi);
            let fj = vector_field(&uj, &pi);
            let um = (ui + uj) * 0.5 + (fi - fj) * (h / 8.0);
            let (ji, jj, jm) = (jacobian(&ui, &pi), jacobian(&uj, &pi), jacobian(&um, &pi));
            let da = -id - (ji + jm * (id * 0.5 + ji * (h / 8.0)) * 4.0) * (h / 6.0);
            let db = id - (jj + jm * (id * 0.5 - jj * (h / 8.0)) * 4.0) * (h / 6.0);
            // parameter sensitivities: dF/dc = (0, 0, -w, -y), dF/deps = (0, y, 0, 0)
            let sens = |d: fn(&PhasePoint) -> PhasePoint| {
                let (a, b, c) = (d(&ui), d(&uj), d(&um));
                -(a + (c + jm * (a - b) * (h / 8.0)) * 4.0 + b) * (h / 6.0)
            };
            let dc = sens(|x| Vector4::new(0.0, 0.0, -x[2], -x[3]));
            let de = sens(|x| Vector4::new(0.0, x[3], 0.0, 0.0));
            let row = self.interval_row(i);
            for r in 0..4 {
                for col in 0..4 {
                    m.add(row + r, s * i + col, da[(r, col)]);
                    m.add(row + r, s * (i + 1) + col, db[(r, col)]);
                }
                m.add(row + r, s * i + 4, dc[r]);
                if s == 6 {
                    m.add(row + r, s * i + 5, de[r]);
                }
            }
            for q in 4..s {
                m.add(row + q, s * i + q, -1.0);
                m.add(row + q, s * (i + 1) + q, 1.0);
            }
        }
        for (j, &(k, _)) in self.pins.iter().enumerate() {
            m.add(self.pin_row(j), s * k, 1.0);
        }
        for (t, l) in rb.iter().enumerate() {
            for j in 0..4 {
                m.add(s * n - 2 + t, s * (n - 1) + j, l[j]);
            }
        }
        Ok(m)
    }
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Solved {
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    pivot_ratio: f64,
}

/// Damped Newton with the step accepted on the natural level |J(x)^{-1} F(x + t dx)|.
fn newton(bvp: &Bvp, mut x: Vec<f64>, opts: &BvpOptions) -> Result<Solved> {
    let mut r = bvp.residual(&x)?;
    let mut nr = max_norm(&r);
    let mut t_prev: f64 = 1.0;
    for it in 0..=opts.max_newton {
        let lu = bvp.jacobian(&x)?.factor()?;
        if nr <= opts.tol {
            return Ok(Solved { x, residual: nr, iterations: it, pivot_ratio: lu.pivot_ratio() });
        }
        if it == opts.max_newton {
            break;
        }
        let mut dx: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve(&mut dx);
        let ndx = l2(&dx);
        let mut t = (2.0 * t_prev).min(1.0);
        loop {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + t * b).collect();
            if let Ok(rt) = bvp.residual(&xt) {
                if rt.iter().all(|v| v.is_finite()) {
                    let mut bar: Vec<f64> = rt.iter().map(|v| -v).collect();
                    lu.solve(&mut bar);
                    if l2(&bar) <= (1.0 - 0.25 * t) * ndx || max_norm(&rt) <= opts.tol {
                        x = xt;
                        r = rt;
                        break;
                    }
                }
            }
            t *= 0.5;
            if t < 1.0 / 4096.0 {
                return Err(Error::NewtonDiverged { iters: it, residual: nr });
            }
        }
        t_prev = t;
        nr = max_norm(&r);
    }
    Err(Error::NewtonDiverged { iters: opts.max_newton, residual: nr })
}

/// Redistributes nodes so each interval carries about `arc_step` of arc length
/// (at most `h_max` long). Nodes listed in `keep` survive unchanged.
fn equidistribute(z: &[f64], states: &[PhasePoint], keep: &[f64], opts: &BvpOptions) -> Vec<f64> {
    let n = z.len();
    let mut rho: Vec<f64> = (0..n - 1)
        .map(|i| {
            let h = z[i + 1] - z[i];
            let arc = (states[i + 1] - states[i]).norm();
            (arc / (opts.arc_step * h)).max(1.0 / opts.h_max)
        })
        .collect();
    // limit the growth of the mesh density between neighbours
    for i in 1..rho.len() {
        rho[i] = rho[i].max(rho[i - 1] / 1.3);
    }
    for i in (0..rho.len() - 1).rev() {
        rho[i] = rho[i].max(rho[i + 1] / 1.3);
    }
    let mut cum = vec![0.0; n];
    for i in 0..n - 1 {
        cum[i + 1] = cum[i] + rho[i] * (z[i + 1] - z[i]);
    }
    let mut breaks: Vec<usize> = keep
        .iter()
        .map(|k| z.iter().position(|x| x == k).expect("kept node present in the mesh"))
        .collect();
    breaks.push(0);
    breaks.push(n - 1);
    breaks.sort_unstable();
    breaks.dedup();
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let total = cum[hi] - cum[lo];
        let m = (total.ceil() as usize).max(1);
        out.push(z[lo]);
        let mut j = lo;
        for k in 1..m {
            let target = cum[lo] + total * k as f64 / m as f64;
            while cum[j + 1] < target {
                j += 1;
            }
            let t = (target - cum[j]) / (cum[j + 1] - cum[j]);
            out.push(z[j] + t * (z[j + 1] - z[j]));
        }
    }
    out.push(z[n - 1]);
    out
}

fn profile_from(kind: WaveKind, p: &Params, z: Vec<f64>, states: Vec<PhasePoint>, right_state: PhasePoint) -> WaveProfile {
    WaveProfile {
        kind,
        params: *p,
        z,
        states,
        c_eps: p.c,
        eps: p.eps,
        residual: f64::NAN,
        phase_index: 0,
        newton_iterations: 0,
        pivot_ratio: f64::NAN,
        right_state,
    }
}

fn hermite_resample(z: &[f64], states: &[PhasePoint], p: &Params, new_z: &[f64]) -> Vec<PhasePoint> {
    let tmp = profile_from(WaveKind::Pulse, p, z.to_vec(), states.to_vec(), Vector4::zeros());
    new_z.iter().map(|&x| tmp.state_at(x)).collect()
}

/// Mesh state carried between solves.
struct Iterate {
    z: Vec<f64>,
    states: Vec<PhasePoint>,
    p: Params,
}

/// Newton solve on the current mesh followed by `passes` equidistribute-and-resolve rounds.
/// `pins` are given as (z, u) and must be mesh nodes.
fn solve_adaptive(
    mut it: Iterate,
    pins_z: &[(f64, f64)],
    right_u: f64,
    right_state: PhasePoint,
    passes: usize,
    opts: &BvpOptions,
) -> Result<(Iterate, Solved, usize)> {
    let keep: Vec<f64> = pins_z.iter().map(|p| p.0).collect();
    let nz = equidistribute(&it.z, &it.states, &keep, opts);
    it.states = hermite_resample(&it.z, &it.states, &it.p, &nz);
    it.z = nz;
    let mut pass = 0;
    loop {
        let pins: Vec<(usize, f64)> = pins_z
            .iter()
            .map(|&(zk, u)| (it.z.iter().position(|&x| x == zk).expect("pinned node"), u))
            .collect();
        let bvp = Bvp { p: it.p, z: &it.z, pins, right_u, right_state };
        let sol = newton(&bvp, bvp.pack(&it.states, &it.p), opts)?;
        let (_, p_new) = bvp.unpack(&sol.x, 0);
        it.p = p_new;
        it.states = (0..it.z.len()).map(|i| bvp.unpack(&sol.x, i).0).collect();
        if pass == passes {
            let phase = bvp.pins[0].0;
            return Ok((it, sol, phase));
        }
        pass += 1;
        let nz = equidistribute(&it.z, &it.states, &keep, opts);
        it.states = hermite_resample(&it.z, &it.states, &it.p, &nz);
        it.z = nz;
    }
}

fn finish(kind: WaveKind, it: Iterate, sol: Solved, phase: usize, right_state: PhasePoint, opts: &BvpOptions) -> Result<WaveProfile> {
    let defect = it.states[0].norm().max((it.states[it.states.len() - 1] - right_state).norm());
    if defect > opts.tol_bc {
        return Err(Error::DomainTooShort(defect));
    }
    Ok(WaveProfile {
        kind,
        params: it.p,
        c_eps: it.p.c,
        eps: it.p.eps,
        z: it.z,
        states: it.states,
        residual: sol.residual,
        phase_index: phase,
        newton_iterations: sol.iterations,
        pivot_ratio: sol.pivot_ratio,
        right_state,
    })
}

fn check_eps(p: &Params) -> Result<()> {
    if !(p.eps > 0.0 && p.eps <= crate::dynamics::EPS_MAX_DEFAULT) {
        return Err(Error::Domain(format!(
            "eps = {} must lie in (0, {}]",
            p.eps,
            crate::dynamics::EPS_MAX_DEFAULT
        )));
    }
    Ok(())
}

/// Moves the back of a pulse iterate from `zb` to `zb_new`: the slow stretch between
/// the layers is rescaled, the fast layers are only translated, and the slow tail after the
/// back is scaled by `tail_factor`.
fn stretch(it: &Iterate, zb: f64, zb_new: f64, tail_factor: f64) -> Iterate {
    let (z0, z1) = (it.z[0], *it.z.last().expect("nonempty"));
    let w = (zb / 3.0).min(25.0);
    let z1_new = zb_new + w + (z1 - zb - w) * tail_factor;
    let old = [z0, w, zb - w, zb, zb + w, z1];
    let new = [z0, w, zb_new - w, zb_new, zb_new + w, z1_new];
    let map = |x: f64| {
        let k = (0..5).find(|&k| x <= old[k + 1]).unwrap_or(4);
        if x == old[k + 1] {
            return new[k + 1];
        }
        if old[k] == new[k] && old[k + 1] == new[k + 1] {
            return x;
        }
        let t = (x - old[k]) / (old[k + 1] - old[k]);
        new[k] + t * (new[k + 1] - new[k])
    };
    Iterate { z: it.z.iter().map(|&x| map(x)).collect(), states: it.states.clone(), p: it.p }
}

/// Pinned-back continuation: with u(zb) = u* - 1/2 imposed, eps becomes an unknown.
/// The back position is moved by secant steps on the model zb = alpha + beta/eps until
/// the solved eps matches the request. Running into the fold of the pulse branch
/// (beta changing sign or the slow stretch collapsing) is reported as `Error::Fold`.
/// `tail_eps` is the eps the current tail length was sized for.
fn hit_eps(it: Iterate, zb: f64, eps: f64, mut tail_eps: f64, opts: &BvpOptions) -> Result<(Iterate, f64)> {
    let level = jump_off_point(it.p.a).0 - 0.5;
    let pins = |zb: f64| [(0.0, 0.5), (zb, level)];
    let (mut cur, _, _) = solve_adaptive(it, &pins(zb), 0.0, Vector4::zeros(), 0, opts)?;
    let mut hist: Vec<(f64, f64)> = vec![(zb, cur.p.eps)];
    let eps_max = |h: &[(f64, f64)]| h.iter().map(|x| x.1).fold(0.0, f64::max);
    for _ in 0..40 {
        let (zc, ec) = *hist.last().expect("nonempty");
        if ((ec - eps) / eps).abs() < 1e-9 {
            return Ok((cur, zc));
        }
        let beta = if hist.len() < 2 {
            zc * ec
        } else {
            let (za, ea) = hist[hist.len() - 2];
            (zc - za) / (1.0 / ec - 1.0 / ea)
        };
        if !(beta > 0.0) {
            return Err(Error::Fold { eps_fold: eps_max(&hist), requested: eps });
        }
        let target = (zc + beta * (1.0 / eps - 1.0 / ec)).clamp(0.5 * zc, 2.0 * zc);
        if target < MIN_BACK {
            return Err(Error::Fold { eps_fold: eps_max(&hist), requested: eps });
        }
        let next = stretch(&cur, zc, target, tail_eps / eps);
        tail_eps = eps;
        let (solved, _, _) = solve_adaptive(next, &pins(target), 0.0, Vector4::zeros(), 0, opts)?;
        cur = solved;
        hist.push((target, cur.p.eps));
    }
    Err(Error::NewtonDiverged { iters: 40, residual: (hist.last().expect("nonempty").1 - eps).abs() })
}

/// Shortest front-to-back distance still treated as a separated pulse.
const MIN_BACK: f64 = 12.0;

fn pulse_from_pinned(it: Iterate, zb: f64, eps: f64, tail_eps: f64, opts: &BvpOptions) -> Result<WaveProfile> {
    let (mut it, _) = hit_eps(it, zb, eps, tail_eps, opts)?;
    it.p = it.p.with_eps(eps);
    let (it, sol, phase) = solve_adaptive(it, &[(0.0, 0.5)], 0.0, Vector4::zeros(), opts.refinements, opts)?;
    finish(WaveKind::Pulse, it, sol, phase, Vector4::zeros(), opts)
}

/// Homoclinic pulse at p.eps, seeded from the singular orbit.
pub fn solve_pulse(p: &Params, seed: &SingularOrbit, opts: &BvpOptions) -> Result<WaveProfile> {
    check_eps(p)?;
    if seed.params.a != p.a || seed.params.gamma != p.gamma {
        return Err(Error::Precondition("seed orbit was assembled at different (a, gamma)".into()));
    }
    let ps = p.with_c(seed.c_star);
    let s = pulse_seed(&ps, opts)?;
    pulse_from_pinned(Iterate { z: s.z, states: s.states, p: ps }, s.z_back, p.eps, p.eps, opts)
}

/// Re-solves a converged pulse at a new eps, warm-started by stretching the slow parts.
pub fn continue_pulse(prev: &WaveProfile, eps: f64, opts: &BvpOptions) -> Result<WaveProfile> {
    check_eps(&prev.params.with_eps(eps))?;
    let zb_old = prev.back_position().ok_or_else(|| Error::Precondition("no back in previous profile".into()))?;
    // put a node exactly on the back
    let mut z = prev.z.clone();
    let k = z.partition_point(|&x| x < zb_old);
    z.insert(k, zb_old);
    let states = z.iter().map(|&x| prev.state_at(x)).collect();
    let it = Iterate { z, states, p: prev.params };
    pulse_from_pinned(it, zb_old, eps, prev.eps, opts)
}

/// Solves along `eps_list`, each step warm-started from the previous profile.
/// On failure returns the profiles computed so far, the failing eps and the error.
pub fn continue_in_eps(
    p: &Params,
    seed: &SingularOrbit,
    eps_list: &[f64],
    opts: &BvpOptions,
) -> std::result::Result<Vec<WaveProfile>, (Vec<WaveProfile>, f64, Error)> {
    let mut out: Vec<WaveProfile> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let res = match out.last() {
            None => solve_pulse(&p.with_eps(eps), seed, opts),
            Some(prev) => continue_pulse(prev, eps, opts),
        };
        match res {
            Ok(w) => out.push(w),
            Err(e) => return Err((out, eps, e)),
        }
    }
    Ok(out)
}

/// Roots of u = gamma f(u) besides u = 0, ascending; empty when there are fewer than three roots.
pub fn nontrivial_equilibria(a: f64, gamma: f64) -> Vec<f64> {
    if gamma <= 0.0 {
        return vec![];
    }
    // u^2 - (1 + a) u + a + 1/gamma = 0
    let disc = (1.0 - a).powi(2) - 4.0 / gamma;
    if disc <= 0.0 {
        return vec![];
    }
    let r = disc.sqrt();
    vec![(1.0 + a - r) / 2.0, (1.0 + a + r) / 2.0]
}

/// The equilibrium Q = (u3, u3/gamma, 0, 0) of the large-gamma regime.
pub fn front_target(p: &Params) -> Result<PhasePoint> {
    let roots = nontrivial_equilibria(p.a, p.gamma);
    let u3 = *roots
        .last()
        .ok_or_else(|| Error::Precondition(format!("u = gamma f(u) has one real root at gamma = {}", p.gamma)))?;
    Ok(Vector4::new(u3, u3 / p.gamma, 0.0, 0.0))
}

/// Heteroclinic front from the origin to Q.
pub fn solve_front(p: &Params, opts: &BvpOptions) -> Result<WaveProfile> {
    check_eps(p)?;
    let q = front_target(p)?;
    let ps = p.with_c(p.c_star());
    let c = ps.c;
    let right = CriticalBranch::right(p.a);
    let vq = q[1];
    let decay = opts.tail_decay;
    let tr = SlowTable::build(&right, &ps, 0.0, 5.0, |v| (vq - v).abs() <= decay * vq)?;
    let z_end = tr.duration() / p.eps;
    let z = seed_grid(-opts.left_length, z_end.max(60.0), &[(-opts.left_length, 30.0)], &[0.0]);
    let mut states = Vec::with_capacity(z.len());
    for &zz in &z {
        let (uf, wf) = front_profile(zz, p.a);
        let yf = if zz < 70.0 { front_y(zz, p.a)? } else { -1.0 / c };
        let x = if zz <= 0.0 {
            Vector4::new(uf, 0.0, wf, yf)
        } else {
            let v = tr.at(p.eps * zz);
            let (u, y) = slow_state(&right, v, &ps)?;
            Vector4::new(u + uf - 1.0, v, wf, y + yf + 1.0 / c)
        };
        states.push(x);
    }
    let it = Iterate { z, states, p: ps };
    let (it, sol, phase) = solve_adaptive(it, &[(0.0, 0.5)], q[0], q, opts.refinements, opts)?;
    finish(WaveKind::Front, it, sol, phase, q, opts)
}
