use nalgebra::{DMatrix, Vector4};
use serde::Serialize;

use crate::dynamics::Params;
use crate::error::{Error, Result};
use crate::grassmann::{symplectic_form, to_arr};
use crate::singular::layer_eigenpairs;

#[derive(Clone, Debug, Serialize)]
pub struct FixedPlane {
    /// 1-based eigen-indices, eigenvalues sorted increasingly.
    pub pair: (usize, usize),
    pub lagrangian: bool,
    /// |omega| on the normalized eigenvectors.
    pub omega: f64,
    /// Rates of the linearized induced flow on the tangent space of Lambda(2); empty when
    /// the plane is not Lagrangian.
    pub rates: Vec<f64>,
    pub unstable_dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShaymanReport {
    pub u: f64,
    pub mu: [f64; 4],
    pub planes: Vec<FixedPlane>,
    /// How far the Lagrangian tangent space is from invariant under the linearization.
    pub invariance_defect: f64,
}

impl ShaymanReport {
    pub fn unstable_dims(&self) -> Vec<((usize, usize), usize)> {
        self.planes.iter().filter(|p| p.lagrangian).map(|p| (p.pair, p.unstable_dim)).collect()
    }
}

/// Fixed points of the induced flow on Lambda(2) for the layer linearization at (u, eps = 0).
///
/// In the chart T: X -> C around X = span{e_i, e_j} the flow linearizes to
/// T' = B_C T - T B_X; the Lagrangian planes form the kernel of
/// T -> omega(e_i, T e_j) + omega(T e_i, e_j), a 3-dimensional subspace.
pub fn shayman_classification(u: f64, a: f64, gamma: f64) -> Result<ShaymanReport> {
    let p = Params::singular(a, gamma, 0.0)?;
    let le = layer_eigenpairs(u, &p)?;
    // sort by eigenvalue: mu = {mu1, 0, -c, mu4} is already increasing
    let mu = le.mu;
    if mu.windows(2).any(|w| !(w[1] - w[0] > 1e-10)) {
        return Err(Error::Precondition(format!("eigenvalues collide at u = {u}: {mu:?}")));
    }
    let e: Vec<Vector4<f64>> = le.eta.iter().map(|v| v.normalize()).collect();
    let om = |x: &Vector4<f64>, y: &Vector4<f64>| symplectic_form(&to_arr(x), &to_arr(y));
    let mut planes = Vec::new();
    let mut invariance_defect: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let w = om(&e[i], &e[j]);
            let lagrangian = w.abs() < 1e-10;
            let mut fp = FixedPlane { pair: (i + 1, j + 1), lagrangian, omega: w.abs(), rates: vec![], unstable_dim: 0 };
            if lagrangian {
                let comp: Vec<usize> = (0..4).filter(|&k| k != i && k != j).collect();
                let x = [i, j];
                // unknowns T[kk][l]: coefficient of e_comp[kk] in the image of e_x[l]
                let idx = |kk: usize, l: usize| 2 * kk + l;
                let mut m = DMatrix::<f64>::zeros(4, 4);
                let mut cons = DMatrix::<f64>::zeros(1, 4);
                for kk in 0..2 {
                    for l in 0..2 {
                        m[(idx(kk, l), idx(kk, l))] = mu[comp[kk]] - mu[x[l]];
                    }
                    // omega(e_i, T e_j) + omega(T e_i, e_j)
                    cons[(0, idx(kk, 1))] += om(&e[i], &e[comp[kk]]);
                    cons[(0, idx(kk, 0))] += om(&e[comp[kk]], &e[j]);
                }
                let r = cons.row(0).transpose().normalize();
                let proj_ker = DMatrix::<f64>::identity(4, 4) - &r * r.transpose();
                let svd = proj_ker.svd(true, false);
                let u_mat = svd.u.expect("requested");
                // singular values are {1, 1, 1, 0}; the unit ones span the kernel
                let cols: Vec<usize> = (0..4).filter(|&c| svd.singular_values[c] > 0.5).collect();
                let k = DMatrix::from_columns(&cols.iter().map(|&c| u_mat.column(c).into_owned()).collect::<Vec<_>>());
                let mk = &m * &k;
                let proj = k.transpose() * &mk;
                invariance_defect = invariance_defect.max((&mk - &k * &proj).norm());
                let ev = proj.complex_eigenvalues();
                let mut rates: Vec<f64> = ev.iter().map(|z| z.re).collect();
                rates.sort_by(f64::total_cmp);
                if rates.iter().any(|r| r.abs() < 1e-10) {
                    return Err(Error::Precondition(format!("fixed plane X{}{} is not hyperbolic at u = {u}", i + 1, j + 1)));
                }
                fp.unstable_dim = rates.iter().filter(|&&r| r > 0.0).count();
                fp.rates = rates;
            }
            planes.push(fp);
        }
    }
    Ok(ShaymanReport { u, mu, planes, invariance_defect })
}
