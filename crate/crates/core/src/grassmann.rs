use nalgebra::{Matrix4, SVector, Vector4};

use crate::error::{Error, Result};
use crate::ode::Dopri;
use crate::scalar::Scalar;

/// Index pairs of the Plücker coordinates in storage order p12, p13, p14, p23, p24, p34.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BasisTag {
    Standard,
    /// Eigenbasis of the layer linearization at the given u.
    Eigen(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagrangianFrame<T> {
    pub cols: [[T; 4]; 2],
    pub basis: BasisTag,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PluckerPoint<T> {
    pub p: [T; 6],
    pub basis: BasisTag,
}

impl<T: Scalar> LagrangianFrame<T> {
    pub fn new(a: [T; 4], b: [T; 4]) -> Self {
        LagrangianFrame { cols: [a, b], basis: BasisTag::Standard }
    }

    pub fn tagged(self, basis: BasisTag) -> Self {
        LagrangianFrame { basis, ..self }
    }

    pub fn omega(&self) -> T {
        symplectic_form(&self.cols[0], &self.cols[1])
    }
}

impl<T: Scalar> PluckerPoint<T> {
    pub fn new(p: [T; 6]) -> Self {
        PluckerPoint { p, basis: BasisTag::Standard }
    }

    /// p12 p34 - p13 p24 + p14 p23.
    pub fn relation(&self) -> T {
        let p = &self.p;
        p[0] * p[5] - p[1] * p[4] + p[2] * p[3]
    }

    /// p13 - p24, which vanishes exactly on Lagrangian planes for omega = e1*^e3* - e2*^e4*.
    pub fn lagrangian_residual(&self) -> T {
        self.p[1] - self.p[4]
    }

    /// Antisymmetric accessor p_ij for any i, j in 0..4.
    pub fn get(&self, i: usize, j: usize) -> T {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => T::zero(),
            std::cmp::Ordering::Less => self.p[pair_index(i, j)],
            std::cmp::Ordering::Greater => -self.p[pair_index(j, i)],
        }
    }
}

fn pair_index(i: usize, j: usize) -> usize {
    PAIRS.iter().position(|&q| q == (i, j)).expect("i < j < 4")
}

fn abs<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        -x
    } else {
        x
    }
}

/// omega(x, y) = <x, J y> = x1 y3 - x2 y4 - x3 y1 + x4 y2.
pub fn symplectic_form<T: Scalar>(x: &[T; 4], y: &[T; 4]) -> T {
    x[0] * y[2] - x[1] * y[3] - x[2] * y[0] + x[3] * y[1]
}

/// The fixed complex structure J (J^2 = -I).
pub fn j_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    )
}

pub fn plucker_embed<T: Scalar>(frame: &LagrangianFrame<T>) -> Result<PluckerPoint<T>> {
    let [a, b] = &frame.cols;
    let p = PAIRS.map(|(i, j)| a[i] * b[j] - a[j] * b[i]);
    if p.iter().all(|x| *x == T::zero()) {
        return Err(Error::RankDeficient);
    }
    Ok(PluckerPoint { p, basis: frame.basis })
}

/// p12 q34 - p13 q24 + p14 q23 + p23 q14 - p24 q13 + p34 q12; equals det[a, b, c, d]
/// for P = a^b and Q = c^d.
pub fn detection_form<T: Scalar>(p: &PluckerPoint<T>, q: &PluckerPoint<T>) -> Result<T> {
    if p.basis != q.basis {
        return Err(Error::BasisMismatch);
    }
    Ok(detection_raw(&p.p, &q.p))
}

pub(crate) fn detection_raw<T: Scalar>(p: &[T; 6], q: &[T; 6]) -> T {
    p[0] * q[5] - p[1] * q[4] + p[2] * q[3] + p[3] * q[2] - p[4] * q[1] + p[5] * q[0]
}

/// Matrix of the derivation B^I + I^B on the Plücker coordinates:
/// p_ij' = sum_k (B_ik p_kj + B_jk p_ik).
pub fn induced_matrix<T: Scalar>(b: &[[T; 4]; 4]) -> [[T; 6]; 6] {
    let mut m = [[T::zero(); 6]; 6];
    // coefficient of stored coordinate for p_xy: (index, sign)
    let coord = |x: usize, y: usize| -> Option<(usize, T)> {
        match x.cmp(&y) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some((pair_index(x, y), T::one())),
            std::cmp::Ordering::Greater => Some((pair_index(y, x), -T::one())),
        }
    };
    for (row, &(i, j)) in PAIRS.iter().enumerate() {
        for k in 0..4 {
            if let Some((idx, s)) = coord(k, j) {
                m[row][idx] = m[row][idx] + b[i][k] * s;
            }
            if let Some((idx, s)) = coord(i, k) {
                m[row][idx] = m[row][idx] + b[j][k] * s;
            }
        }
    }
    m
}

pub fn induced_derivative<T: Scalar>(b: &[[T; 4]; 4], p: &PluckerPoint<T>) -> PluckerPoint<T> {
    let m = induced_matrix(b);
    let mut out = [T::zero(); 6];
    for r in 0..6 {
        for c in 0..6 {
            out[r] = out[r] + m[r][c] * p.p[c];
        }
    }
    PluckerPoint { p: out, basis: p.basis }
}

/// Inverse of a 4x4 matrix by Gauss-Jordan elimination with largest-magnitude pivoting.
pub fn invert<T: Scalar>(m: &[[T; 4]; 4]) -> Result<[[T; 4]; 4]> {
    let mut a = *m;
    let mut inv = [[T::zero(); 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&x, &y| abs(a[x][col]).partial_cmp(&abs(a[y][col])).unwrap_or(std::cmp::Ordering::Equal))
            .expect("nonempty");
        if a[piv][col] == T::zero() {
            return Err(Error::Singular("basis matrix".into()));
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for k in 0..4 {
            a[col][k] = a[col][k] / d;
            inv[col][k] = inv[col][k] / d;
        }
        for r in 0..4 {
            if r != col && a[r][col] != T::zero() {
                let f = a[r][col];
                for k in 0..4 {
                    a[r][k] = a[r][k] - f * a[col][k];
                    inv[r][k] = inv[r][k] - f * inv[col][k];
                }
            }
        }
    }
    Ok(inv)
}

/// Matrix whose columns are the given basis vectors.
fn columns<T: Scalar>(basis: &[[T; 4]; 4]) -> [[T; 4]; 4] {
    let mut m = [[T::zero(); 4]; 4];
    for (c, v) in basis.iter().enumerate() {
        for r in 0..4 {
            m[r][c] = v[r];
        }
    }
    m
}

fn mat_vec<T: Scalar>(m: &[[T; 4]; 4], v: &[T; 4]) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r] = out[r] + m[r][c] * v[c];
        }
    }
    out
}

/// Coordinates of the frame's columns with respect to `new_basis`.
pub fn change_basis_frame<T: Scalar>(
    frame: &LagrangianFrame<T>,
    new_basis: &[[T; 4]; 4],
    tag: BasisTag,
) -> Result<LagrangianFrame<T>> {
    let inv = invert(&columns(new_basis))?;
    Ok(LagrangianFrame { cols: frame.cols.map(|c| mat_vec(&inv, &c)), basis: tag })
}

/// Plücker coordinates with respect to `new_basis`, via the second compound of the inverse.
pub fn change_basis_plucker<T: Scalar>(
    p: &PluckerPoint<T>,
    new_basis: &[[T; 4]; 4],
    tag: BasisTag,
) -> Result<PluckerPoint<T>> {
    let inv = invert(&columns(new_basis))?;
    let mut out = [T::zero(); 6];
    for (r, &(i, j)) in PAIRS.iter().enumerate() {
        for (c, &(k, l)) in PAIRS.iter().enumerate() {
            let minor = inv[i][k] * inv[j][l] - inv[i][l] * inv[j][k];
            out[r] = out[r] + minor * p.p[c];
        }
    }
    Ok(PluckerPoint { p: out, basis: tag })
}

/// 4x4 determinant by cofactor expansion (exact for rationals).
pub fn det4<T: Scalar>(m: &[[T; 4]; 4]) -> T {
    let det3 = |r: [usize; 3], c: [usize; 3]| -> T {
        m[r[0]][c[0]] * (m[r[1]][c[1]] * m[r[2]][c[2]] - m[r[1]][c[2]] * m[r[2]][c[1]])
            - m[r[0]][c[1]] * (m[r[1]][c[0]] * m[r[2]][c[2]] - m[r[1]][c[2]] * m[r[2]][c[0]])
            + m[r[0]][c[2]] * (m[r[1]][c[0]] * m[r[2]][c[1]] - m[r[1]][c[1]] * m[r[2]][c[0]])
    };
    let mut total = T::zero();
    for c in 0..4 {
        let rest: Vec<usize> = (0..4).filter(|&k| k != c).collect();
        let minor = det3([1, 2, 3], [rest[0], rest[1], rest[2]]);
        let term = m[0][c] * minor;
        total = if c % 2 == 0 { total + term } else { total - term };
    }
    total
}

/// det[a, b, c, d] with the vectors as columns.
pub fn det_columns<T: Scalar>(a: &[T; 4], b: &[T; 4], c: &[T; 4], d: &[T; 4]) -> T {
    det4(&columns(&[*a, *b, *c, *d]))
}

// ---------------------------------------------------------------------------
// f64 numerics

pub type P6 = SVector<f64, 6>;

pub fn to_arr(v: &Vector4<f64>) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

pub fn mat_arr(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = m[(r, c)];
        }
    }
    out
}

pub fn induced_matrix_f64(b: &Matrix4<f64>) -> nalgebra::SMatrix<f64, 6, 6> {
    let m = induced_matrix(&mat_arr(b));
    nalgebra::SMatrix::<f64, 6, 6>::from_fn(|r, c| m[r][c])
}

pub fn plucker_of(a: &Vector4<f64>, b: &Vector4<f64>) -> P6 {
    let a = to_arr(a);
    let b = to_arr(b);
    P6::from_fn(|k, _| {
        let (i, j) = PAIRS[k];
        a[i] * b[j] - a[j] * b[i]
    })
}

/// Detection form on raw Plücker vectors (same basis assumed).
pub fn detection_p6(p: &P6, q: &P6) -> f64 {
    detection_raw(&[p[0], p[1], p[2], p[3], p[4], p[5]], &[q[0], q[1], q[2], q[3], q[4], q[5]])
}

impl PluckerPoint<f64> {
    pub fn from_vec(v: &P6) -> Self {
        PluckerPoint::new([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn as_vec(&self) -> P6 {
        P6::from_row_slice(&self.p)
    }

    pub fn norm(&self) -> f64 {
        self.p.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Unit norm with the first nonzero coordinate positive (for storage and display only;
    /// crossing detection works with orientation-continuous representatives).
    pub fn canonical(&self) -> Self {
        let n = self.norm();
        let lead = self.p.iter().copied().find(|x| x.abs() > 1e-14 * n).unwrap_or(1.0);
        let s = if lead < 0.0 { -1.0 / n } else { 1.0 / n };
        PluckerPoint { p: self.p.map(|x| x * s), basis: self.basis }
    }

    /// An oriented frame (x, y) with x ^ y a positive multiple of the point.
    pub fn frame(&self) -> LagrangianFrame<f64> {
        let (k, _) = self
            .p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("six coordinates");
        let (i, j) = PAIRS[k];
        let row = |i: usize| [0, 1, 2, 3].map(|m| self.get(i, m));
        let x = row(i);
        let mut y = row(j);
        if self.p[k] < 0.0 {
            y = y.map(|t| -t);
        }
        LagrangianFrame { cols: [x, y], basis: self.basis }
    }

    /// Relative Lagrangian residual |p13 - p24| / |P|.
    pub fn lagrangian_defect(&self) -> f64 {
        self.lagrangian_residual().abs() / self.norm()
    }

    pub fn relation_defect(&self) -> f64 {
        self.relation().abs() / self.norm().powi(2)
    }
}

impl LagrangianFrame<f64> {
    pub fn col(&self, k: usize) -> Vector4<f64> {
        Vector4::from_row_slice(&self.cols[k])
    }

    pub fn from_vectors(a: &Vector4<f64>, b: &Vector4<f64>) -> Self {
        LagrangianFrame::new(to_arr(a), to_arr(b))
    }

    /// Columns orthonormalized by Gram-Schmidt (same oriented plane).
    pub fn orthonormal(&self) -> Result<(Vector4<f64>, Vector4<f64>)> {
        let a = self.col(0);
        let na = a.norm();
        if na == 0.0 {
            return Err(Error::RankDeficient);
        }
        let a = a / na;
        let b = self.col(1) - a * a.dot(&self.col(1));
        let nb = b.norm();
        if nb <= 1e-12 * self.col(1).norm() {
            return Err(Error::RankDeficient);
        }
        Ok((a, b / nb))
    }
}

/// Largest principal angle between two 2-planes.
pub fn plane_angle(p: &LagrangianFrame<f64>, q: &LagrangianFrame<f64>) -> Result<f64> {
    let (a1, a2) = p.orthonormal()?;
    let (b1, b2) = q.orthonormal()?;
    let m = nalgebra::Matrix2::new(a1.dot(&b1), a1.dot(&b2), a2.dot(&b1), a2.dot(&b2));
    let s = m.svd(false, false).singular_values;
    let smin = s[0].min(s[1]).clamp(0.0, 1.0);
    Ok(smin.acos())
}

/// Renormalized Plücker trajectory: every accepted step is rescaled to unit norm
/// (positive factor only, so orientation is continuous along the path).
#[derive(Clone, Debug, Default)]
pub struct PluckerPath {
    pub z: Vec<f64>,
    pub p: Vec<P6>,
    pub max_lagrangian_defect: f64,
    pub max_relation_defect: f64,
}

impl PluckerPath {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn last(&self) -> Option<(f64, P6)> {
        self.z.last().map(|&z| (z, *self.p.last().expect("same length")))
    }
}

/// Integrates P' = M(B(z)) P with per-step renormalization from z0 to z1.
pub fn integrate_plucker<F>(b_of_z: F, p0: &P6, z0: f64, z1: f64, ode: &Dopri) -> Result<PluckerPath>
where
    F: Fn(f64) -> Matrix4<f64>,
{
    let mut path = PluckerPath::default();
    let start = p0 / p0.norm();
    let mut record = |z: f64, p: &mut P6| {
        *p /= p.norm();
        let pt = PluckerPoint::from_vec(p);
        path.max_lagrangian_defect = path.max_lagrangian_defect.max(pt.lagrangian_defect());
        path.max_relation_defect = path.max_relation_defect.max(pt.relation_defect());
        path.z.push(z);
        path.p.push(*p);
    };
    let mut s = start;
    record(z0, &mut s);
    ode.integrate(|z, p| induced_matrix_f64(&b_of_z(z)) * p, z0, z1, start, &mut record)?;
    if path.max_relation_defect > 1e-6 {
        return Err(Error::Integration {
            z: *path.z.last().unwrap_or(&z0),
            reason: format!("Plücker relation defect {:e}", path.max_relation_defect),
        });
    }
    Ok(path)
}
