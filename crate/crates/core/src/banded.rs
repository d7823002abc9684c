use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` superdiagonals, stored row by row with
/// `kl` spare superdiagonals for pivoting fill-in. Entry (i, j) lives at
/// `data[i * w + (j + kl - i)]`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, w, data: vec![0.0; n * w] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize + self.kl as isize - i as isize;
        (off >= 0 && (off as usize) < self.w && i < self.n && j < self.n).then(|| i * self.w + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds to entry (i, j); panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j).expect("checked");
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry inside band");
        self.data[s] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with partial pivoting, in place.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("band LU pivot {k}")));
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let d = self.get(k, k);
            for r in k + 1..=last_row {
                let l = self.get(r, k) / d;
                if l == 0.0 {
                    continue;
                }
                self.set(r, k, l);
                for j in k + 1..=last_col {
                    let u = self.get(k, j);
                    if u != 0.0 {
                        let s = self.slot(r, j).expect("fill-in inside storage");
                        self.data[s] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    /// max |U_kk| / min |U_kk|; a cheap proxy for the conditioning of the factored system.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.m.n).map(|k| self.m.get(k, k).abs()).collect();
        let hi = d.iter().copied().fold(0.0, f64::max);
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    pub fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + m.kl).min(n - 1) {
                    b[r] -= m.get(r, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + m.ku + m.kl).min(n - 1) {
                s -= m.get(k, j) * b[j];
            }
            b[k] = s / m.get(k, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn build(n: usize, kl: usize, ku: usize, vals: &[f64]) -> (BandMatrix, DMatrix<f64>) {
        let mut b = BandMatrix::new(n, kl, ku);
        let mut d = DMatrix::zeros(n, n);
        let mut it = vals.iter().cycle();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = *it.next().unwrap();
                b.add(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn needs_pivoting() {
        // zero leading diagonal forces a row swap
        let (b, d) = build(6, 2, 1, &[0.0, 1.0, 2.0, 3.0, -1.0, 0.5, 4.0, 0.0, 2.5]);
        let rhs: Vec<f64> = (0..6).map(|k| k as f64 - 2.0).collect();
        let mut x = rhs.clone();
        let lu = b.factor().unwrap();
        lu.solve(&mut x);
        let want = d.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for k in 0..6 {
            assert!((x[k] - want[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_detected() {
        let b = BandMatrix::new(3, 1, 1);
        assert!(b.factor().is_err());
    }

    proptest! {
        #[test]
        fn matches_dense(n in 3usize..40, kl in 0usize..5, ku in 0usize..5,
                         vals in prop::collection::vec(-1.0f64..1.0, 17..60),
                         rhs in prop::collection::vec(-5.0f64..5.0, 40)) {
            let (b, d) = build(n, kl, ku, &vals);
            let dense = d.clone().lu();
            prop_assume!(dense.determinant().abs() > 1e-6);
            let want = dense.solve(&DVector::from_column_slice(&rhs[..n])).unwrap();
            let mut x = rhs[..n].to_vec();
            b.factor().unwrap().solve(&mut x);
            let resid = &d * DVector::from_vec(x.clone()) - DVector::from_column_slice(&rhs[..n]);
            prop_assert!(resid.norm() < 1e-8 * (1.0 + want.norm()), "resid {}", resid.norm());
        }
    }
}
