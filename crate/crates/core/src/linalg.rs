//! Jacobian storage and the shifted solves `(sI + J) x = b` used by Newton.

use nalgebra::{DMatrix, DVector};

/// Band matrix in row-major band storage.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + j + self.kl - i)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Add `v` at `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solve `(shift·I + self) x = b` by band LU without pivoting.
    ///
    /// Newton matrices here are diagonally dominant or symmetric positive
    /// definite, for which elimination without pivoting is stable.
    pub fn shifted_solve(&self, shift: f64, b: &[f64]) -> Option<Vec<f64>> {
        let mut a = self.clone();
        for i in 0..a.n {
            a.add(i, i, shift);
        }
        let n = a.n;
        let mut x = b.to_vec();
        let scale = a.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let piv = a.get(k, k);
            if !(piv.abs() > 1e-14 * scale) || !piv.is_finite() {
                return None;
            }
            let rmax = (k + a.kl).min(n - 1);
            let cmax = (k + a.ku).min(n - 1);
            for i in k + 1..=rmax {
                let f = a.get(i, k) / piv;
                if f == 0.0 {
                    continue;
                }
                for j in k..=cmax {
                    let v = a.get(k, j);
                    if v != 0.0 {
                        let id = a.idx(i, j).unwrap();
                        a.data[id] -= f * v;
                    }
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + a.ku).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=cmax {
                s -= a.get(k, j) * x[j];
            }
            x[k] = s / a.get(k, k);
        }
        Some(x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Jacobian `∂A/∂u`.
#[derive(Clone, Debug)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Banded(BandMatrix),
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.nrows(),
            Jacobian::Banded(b) => b.n,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Jacobian::Dense(m) => (m * DVector::from_column_slice(x)).as_slice().to_vec(),
            Jacobian::Banded(b) => b.matvec(x),
        }
    }

    /// Solve `(shift·I + J) x = b`; `None` when the matrix is numerically singular.
    pub fn shifted_solve(&self, shift: f64, b: &[f64]) -> Option<Vec<f64>> {
        match self {
            Jacobian::Dense(m) => {
                let mut a = m.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += shift;
                }
                let x = a.lu().solve(&DVector::from_column_slice(b))?;
                x.iter().all(|v| v.is_finite()).then(|| x.as_slice().to_vec())
            }
            Jacobian::Banded(bm) => bm.shifted_solve(shift, b),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.clone(),
            Jacobian::Banded(b) => b.to_dense(),
        }
    }
}
