//! Method-of-lines check of orbital stability in the co-moving frame
//! u_t = u_zz + c u_z + f(u) - v, v_t = v_zz + c v_z + eps (u - gamma v).

use serde::Serialize;

use crate::banded::{BandLu, BandMatrix};
use crate::dynamics::{cubic_eval, Params};
use crate::error::{Error, Result};
use crate::wave::WaveProfile;

/// Uniform grid on [z0, z1] with Dirichlet rest-state values at both ends.
#[derive(Clone, Debug, Serialize)]
pub struct PdeGrid {
    pub z0: f64,
    pub z1: f64,
    pub nx: usize,
    pub dt: f64,
    pub params: Params,
}

/// Bound on |f'| over the range any bounded run visits.
fn reaction_lipschitz(a: f64) -> f64 {
    (0..=200).map(|i| cubic_eval(-0.5 + 2.0 * i as f64 / 200.0, a).1.abs()).fold(0.0, f64::max)
}

impl PdeGrid {
    /// Checks the explicit-reaction step bound dt L_f <= 1/2 and a cell Péclet number below 1.
    pub fn new(z0: f64, z1: f64, nx: usize, dt: f64, params: Params) -> Result<Self> {
        if !(z1 > z0) || nx < 3 || !(dt > 0.0) {
            return Err(Error::Precondition(format!("bad grid [{z0}, {z1}], nx = {nx}, dt = {dt}")));
        }
        let g = PdeGrid { z0, z1, nx, dt, params };
        let lf = reaction_lipschitz(params.a).max(params.eps * (1.0 + params.gamma));
        if dt * lf > 0.5 {
            return Err(Error::Precondition(format!("dt = {dt} violates the reaction bound dt <= {}", 0.5 / lf)));
        }
        if params.c.abs() * g.dx() / 2.0 >= 1.0 {
            return Err(Error::Precondition(format!("cell Péclet number {} >= 1", params.c.abs() * g.dx() / 2.0)));
        }
        Ok(g)
    }

    pub fn dx(&self) -> f64 {
        (self.z1 - self.z0) / (self.nx - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx).map(|i| self.z0 + dx * i as f64).collect()
    }

    /// Nodes with 0.1 < u < 0.9 along the front of the profile.
    pub fn front_nodes(&self, profile: &WaveProfile) -> usize {
        let k = profile.phase_index;
        let z = &profile.z;
        let s = &profile.states;
        let lo = (0..=k).rev().find(|&i| s[i][0] <= 0.1).map_or(z[0], |i| z[i]);
        let hi = (k..z.len()).find(|&i| s[i][0] >= 0.9).map_or(z[z.len() - 1], |i| z[i]);
        ((hi - lo).abs() / self.dx()).floor() as usize
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Zero,
    /// amp * phi'(z) in both components.
    Translation { amp: f64 },
    /// amp * exp(-((z - center)/width)^2) added to u.
    Bump { amp: f64, center: f64, width: f64 },
}

impl Perturbation {
    fn apply(&self, z: f64, profile: &WaveProfile) -> (f64, f64) {
        match *self {
            Perturbation::Zero => (0.0, 0.0),
            Perturbation::Translation { amp } => {
                let d = profile.derivative_at(z);
                (amp * d[0], amp * d[1])
            }
            Perturbation::Bump { amp, center, width } => (amp * (-((z - center) / width).powi(2)).exp(), 0.0),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// Time between distance samples.
    pub sample_every: f64,
    /// Half-width of the shift search window around the previous optimum.
    pub shift_window: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { t_end: 200.0, sample_every: 5.0, shift_window: 2.0 }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DecayTrace {
    pub t: Vec<f64>,
    /// min_k sup_z |(u, v)(z, t) - phi(z + k)|.
    pub d: Vec<f64>,
    pub k: Vec<f64>,
    /// sup |u| (a collapsing pulse shows up here).
    pub max_u: Vec<f64>,
}

impl DecayTrace {
    pub fn ratio(&self) -> f64 {
        self.d.last().copied().unwrap_or(f64::NAN) / self.d[0]
    }
}

/// Distance from (u, v) to the shifted profile, minimized over k in [k0 - w, k0 + w].
pub fn shift_distance(nodes: &[f64], u: &[f64], v: &[f64], profile: &WaveProfile, k0: f64, w: f64) -> (f64, f64) {
    let dist = |k: f64| {
        nodes.iter().enumerate().fold(0.0f64, |m, (i, &z)| {
            let p = profile.state_at(z + k);
            m.max((u[i] - p[0]).abs()).max((v[i] - p[1]).abs())
        })
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (k0 - w, k0 + w);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (dist(x1), dist(x2));
    while hi - lo > 1e-7 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = dist(x2);
        }
    }
    let k = 0.5 * (lo + hi);
    let (d, kk) = [(dist(k), k), (dist(k0), k0)].into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("two");
    (d, kk)
}

/// (3/2 I - dt L) for SBDF2, or (I - dt L) for the first backward Euler step, with
/// L = d_zz + c d_z on interior nodes and identity rows at the Dirichlet ends.
fn implicit_operator(grid: &PdeGrid, lead: f64) -> Result<BandLu> {
    let n = grid.nx;
    let dx = grid.dx();
    let c = grid.params.c;
    let (lo, hi) = (1.0 / (dx * dx) - c / (2.0 * dx), 1.0 / (dx * dx) + c / (2.0 * dx));
    let mut m = BandMatrix::new(n, 1, 1);
    m.add(0, 0, 1.0);
    m.add(n - 1, n - 1, 1.0);
    for i in 1..n - 1 {
        m.add(i, i - 1, -grid.dt * lo);
        m.add(i, i, lead + grid.dt * 2.0 / (dx * dx));
        m.add(i, i + 1, -grid.dt * hi);
    }
    m.factor()
}

fn reaction(u: &[f64], v: &[f64], p: &Params) -> (Vec<f64>, Vec<f64>) {
    let nu = u.iter().zip(v).map(|(&a, &b)| cubic_eval(a, p.a).0 - b).collect();
    let nv = u.iter().zip(v).map(|(&a, &b)| p.eps * (a - p.gamma * b)).collect();
    (nu, nv)
}

/// Evolves profile + perturbation with SBDF2 (diffusion and advection implicit, reaction
/// explicit) and records the shift-minimized distance to the profile.
pub fn evolve(grid: &PdeGrid, profile: &WaveProfile, pert: Perturbation, opts: &EvolveOptions) -> Result<DecayTrace> {
    let p = grid.params;
    let nodes = grid.nodes();
    let n = grid.nx;
    let mut u: Vec<f64> = Vec::with_capacity(n);
    let mut v: Vec<f64> = Vec::with_capacity(n);
    for (i, &z) in nodes.iter().enumerate() {
        let s = profile.state_at(z);
        let (du, dv) = if i == 0 || i == n - 1 { (0.0, 0.0) } else { pert.apply(z, profile) };
        let edge = i == 0 || i == n - 1;
        u.push(if edge { 0.0 } else { s[0] + du });
        v.push(if edge { 0.0 } else { s[1] + dv });
    }
    let euler = implicit_operator(grid, 1.0)?;
    let bdf2 = implicit_operator(grid, 1.5)?;
    let mut trace = DecayTrace::default();
    let record = |tr: &mut DecayTrace, t: f64, u: &[f64], v: &[f64]| {
        let k0 = tr.k.last().copied().unwrap_or(0.0);
        let (d, k) = shift_distance(&nodes, u, v, profile, k0, opts.shift_window);
        tr.t.push(t);
        tr.d.push(d);
        tr.k.push(k);
        tr.max_u.push(u.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    };
    record(&mut trace, 0.0, &u, &v);
    let steps = (opts.t_end / grid.dt).round() as usize;
    let every = ((opts.sample_every / grid.dt).round() as usize).max(1);
    let (mut nu_old, mut nv_old) = reaction(&u, &v, &p);
    let (mut u_old, mut v_old) = (u.clone(), v.clone());
    for step in 1..=steps {
        let (nu, nv) = reaction(&u, &v, &p);
        let (mut ru, mut rv);
        if step == 1 {
            ru = (0..n).map(|i| u[i] + grid.dt * nu[i]).collect::<Vec<_>>();
            rv = (0..n).map(|i| v[i] + grid.dt * nv[i]).collect::<Vec<_>>();
        } else {
            ru = (0..n).map(|i| 2.0 * u[i] - 0.5 * u_old[i] + grid.dt * (2.0 * nu[i] - nu_old[i])).collect();
            rv = (0..n).map(|i| 2.0 * v[i] - 0.5 * v_old[i] + grid.dt * (2.0 * nv[i] - nv_old[i])).collect();
        }
        ru[0] = 0.0;
        ru[n - 1] = 0.0;
        rv[0] = 0.0;
        rv[n - 1] = 0.0;
        let op = if step == 1 { &euler } else { &bdf2 };
        op.solve(&mut ru);
        op.solve(&mut rv);
        u_old = std::mem::replace(&mut u, ru);
        v_old = std::mem::replace(&mut v, rv);
        nu_old = nu;
        nv_old = nv;
        let sup = u.iter().chain(&v).fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
        if sup > 10.0 {
            return Err(Error::BlowUp(step as f64 * grid.dt));
        }
        if step % every == 0 || step == steps {
            record(&mut trace, step as f64 * grid.dt, &u, &v);
        }
    }
    Ok(trace)
}
