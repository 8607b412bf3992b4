//! Discrete monotone operators `A(t, ·)` on Dirichlet grids: generalized
//! porous medium, fast diffusion, p-Laplace and a nodal scalar model.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, Jacobian};

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Reaction term `s ↦ (f(t, s), ∂_s f(t, s))`.
pub type ReactionFn = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

pub fn constant(v: f64) -> TimeFn {
    Arc::new(move |_| v)
}

/// Uniform Dirichlet grid of interior nodes on `[0, L]^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub h: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::ParamOutOfRange(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 2 {
            return Err(Error::ParamOutOfRange(format!("grid needs n >= 2 interior points, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::ParamOutOfRange(format!("domain length must be positive, got {length}")));
        }
        Ok(SpatialGrid { dim, n, length, h: length / (n + 1) as f64 })
    }

    /// Number of unknowns.
    pub fn size(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Cell volume `h^dim` used in discrete integrals.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Coordinates of unknown `k`.
    pub fn node(&self, k: usize) -> Vec<f64> {
        if self.dim == 1 {
            vec![(k + 1) as f64 * self.h]
        } else {
            vec![((k % self.n) + 1) as f64 * self.h, ((k / self.n) + 1) as f64 * self.h]
        }
    }

    /// Sample a function at the nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.size()).map(|k| f(&self.node(k))).collect()
    }
}

/// Unnormalized DST-I: `X_i = Σ_m x_m sin(π i m/(n+1))`, `i, m = 1..n`.
struct Dst {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst {
    fn new(n: usize) -> Self {
        Dst { n, fft: FftPlanner::new().plan_fft_forward(2 * (n + 1)) }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let m = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for i in 0..n {
            buf[i + 1] = Complex64::new(x[i], 0.0);
            buf[m - 1 - i] = Complex64::new(-x[i], 0.0);
        }
        self.fft.process(&mut buf);
        (1..=n).map(|i| -0.5 * buf[i].im).collect()
    }

    /// Tensor transform along both axes of an `n × n` array (x fastest).
    fn apply_2d(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        for row in 0..n {
            let r = self.apply(&x[row * n..(row + 1) * n]);
            tmp[row * n..(row + 1) * n].copy_from_slice(&r);
        }
        let mut out = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            for r in 0..n {
                col[r] = tmp[r * n + c];
            }
            let t = self.apply(&col);
            for r in 0..n {
                out[r * n + c] = t[r];
            }
        }
        out
    }
}

/// Discrete Dirichlet eigenbasis with eigenvalues raised to `alpha_frac`.
///
/// Eigenvalues are those of the three-point (or five-point) Laplacian,
/// `μ_i = (4/h²) sin²(iπ/(2(n+1)))`, so that `alpha_frac = 1` reproduces the
/// finite-difference operator exactly. Eigenvectors are normalized in the
/// cell-volume weighted discrete `L²`.
#[derive(Clone)]
pub struct EigenBasis {
    pub grid: SpatialGrid,
    pub alpha_frac: f64,
    /// `μ` indexed like the unknowns (x index fastest in 2D).
    pub eigenvalues: Vec<f64>,
    dst: Arc<Dst>,
}

impl fmt::Debug for EigenBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EigenBasis({:?}, alpha_frac={})", self.grid, self.alpha_frac)
    }
}

impl EigenBasis {
    pub fn new(grid: SpatialGrid, alpha_frac: f64) -> Result<Self> {
        if !(alpha_frac > 0.0 && alpha_frac <= 1.0) {
            return Err(Error::ParamOutOfRange(format!("alpha_frac = {alpha_frac} must lie in (0, 1]")));
        }
        let n = grid.n;
        let mu1: Vec<f64> = (1..=n)
            .map(|i| {
                let s = (i as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin();
                4.0 / (grid.h * grid.h) * s * s
            })
            .collect();
        let eigenvalues = if grid.dim == 1 {
            mu1
        } else {
            (0..n * n).map(|k| mu1[k % n] + mu1[k / n]).collect()
        };
        Ok(EigenBasis { grid, alpha_frac, eigenvalues, dst: Arc::new(Dst::new(n)) })
    }

    /// Eigenvalues in nondecreasing order.
    pub fn sorted_eigenvalues(&self) -> Vec<f64> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    fn norm_factor(&self) -> f64 {
        (2.0 / self.grid.length).powf(0.5 * self.grid.dim as f64)
    }

    fn raw(&self, x: &[f64]) -> Vec<f64> {
        if self.grid.dim == 1 {
            self.dst.apply(x)
        } else {
            self.dst.apply_2d(x)
        }
    }

    /// Coefficients `x̂_i = Σ_m h^d x_m e_i(x_m)`.
    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let c = self.grid.cell_volume() * self.norm_factor();
        self.raw(x).into_iter().map(|v| v * c).collect()
    }

    /// Nodal values `Σ_i x̂_i e_i`.
    pub fn synthesize(&self, coef: &[f64]) -> Vec<f64> {
        let c = self.norm_factor();
        self.raw(coef).into_iter().map(|v| v * c).collect()
    }

    /// Nodal values of the unit eigenvector with flat index `k`.
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let mut coef = vec![0.0; self.grid.size()];
        coef[k] = 1.0;
        self.synthesize(&coef)
    }

    /// `(-L) x` with `-L = (-Δ_h)^{alpha_frac}`.
    pub fn apply_power(&self, x: &[f64]) -> Vec<f64> {
        let mut c = self.coefficients(x);
        for (ci, mu) in c.iter_mut().zip(&self.eigenvalues) {
            *ci *= mu.powf(self.alpha_frac);
        }
        self.synthesize(&c)
    }

    fn dense_power(&self) -> nalgebra::DMatrix<f64> {
        let d = self.grid.size();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.apply_power(&e);
            e[j] = 0.0;
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

/// `⟨x, y⟩_H = Σ_i μ_i^{-alpha_frac} x̂_i ŷ_i`.
pub fn h_inner(basis: &EigenBasis, x: &[f64], y: &[f64]) -> Result<f64> {
    let d = basis.grid.size();
    for v in [x, y] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
    }
    let xc = basis.coefficients(x);
    let yc = basis.coefficients(y);
    Ok(xc
        .iter()
        .zip(&yc)
        .zip(&basis.eigenvalues)
        .map(|((a, b), mu)| a * b * mu.powf(-basis.alpha_frac))
        .sum())
}

/// Inner product used to test monotonicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    L2Nodal,
    HminusOne,
}

/// Structural constants from the hemicontinuity, monotonicity, coercivity
/// and growth conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub alpha: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone)]
enum Kind {
    Porous {
        grid: SpatialGrid,
        basis: EigenBasis,
        dense: Option<Arc<nalgebra::DMatrix<f64>>>,
        r: f64,
        eps: f64,
        psi_scale: TimeFn,
        phi_scale: TimeFn,
    },
    PLaplace {
        grid: SpatialGrid,
        p: f64,
        eps: f64,
        scale: TimeFn,
        reaction: Option<ReactionFn>,
    },
    Scalar {
        dim: usize,
        a: f64,
        b: f64,
    },
}

/// A discrete operator `A(t, ·)` with analytic Jacobian and declared constants.
#[derive(Clone)]
pub struct OperatorModel {
    pub name: String,
    pub constants: Constants,
    pub pairing: Pairing,
    /// Forcing bound `g(t)` from the growth condition.
    pub g_bound: TimeFn,
    /// Regularization used by degenerate operators (reported in diagnostics).
    pub eps_reg: f64,
    kind: Kind,
}

impl fmt::Debug for OperatorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperatorModel({}, {:?})", self.name, self.constants)
    }
}

/// Default regularization for degenerate operators.
pub const DEFAULT_EPS_REG: f64 = 1e-8;

/// Upper clamp for `Ψ'` of the fast-diffusion nonlinearity at zero.
const PSI_PRIME_MAX: f64 = 1e8;

fn psi_pair(s: f64, r: f64, eps: f64) -> (f64, f64) {
    // Ψ_ε(s) = s (s² + ε²)^{(r-1)/2}
    if r == 1.0 {
        return (s, 1.0);
    }
    let q = s * s + eps * eps;
    if q == 0.0 {
        let d = if r > 1.0 { 0.0 } else { PSI_PRIME_MAX };
        return (0.0, d);
    }
    let base = q.powf(0.5 * (r - 1.0));
    let val = s * base;
    let der = base / q * (r * s * s + eps * eps);
    (val, der.min(PSI_PRIME_MAX))
}

/// Generalized porous medium operator `A(t,u) = -L Ψ(t,u) - Φ(t,u)` with
/// `Ψ(t,s) = h(t) s|s|^{r-1}`, `Φ(t,s) = g(t) s` and `-L = (-Δ_h)^{alpha_frac}`.
pub fn porous_medium_operator(grid: SpatialGrid, r: f64, psi_scale: TimeFn, phi_scale: TimeFn, alpha_frac: f64) -> Result<OperatorModel> {
    if !(r.is_finite()) || r < 1.0 {
        return Err(Error::BadExponent(r));
    }
    let phi_max = sample_sup(&phi_scale);
    build_porous(grid, r, 0.0, psi_scale, phi_scale, alpha_frac, "porous_medium", phi_max)
}

/// Fast diffusion, `0 < r < 1`, with `Ψ_ε(s) = h(t) s (s² + ε²)^{(r-1)/2}`.
pub fn fast_diffusion_operator(grid: SpatialGrid, r: f64, psi_scale: TimeFn, eps_reg: f64, alpha_frac: f64) -> Result<OperatorModel> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::ParamOutOfRange(format!("fast diffusion needs r in (0, 1), got {r}")));
    }
    if !(eps_reg >= 0.0) {
        return Err(Error::ParamOutOfRange(format!("eps_reg must be nonnegative, got {eps_reg}")));
    }
    build_porous(grid, r, eps_reg, psi_scale, constant(0.0), alpha_frac, "fast_diffusion", 0.0)
}

fn sample_sup(f: &TimeFn) -> f64 {
    (0..=100).map(|i| f(i as f64 * 0.1)).fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn build_porous(grid: SpatialGrid, r: f64, eps: f64, psi_scale: TimeFn, phi_scale: TimeFn, alpha_frac: f64, name: &str, c1: f64) -> Result<OperatorModel> {
    let basis = EigenBasis::new(grid, alpha_frac)?;
    let dense = (alpha_frac < 1.0).then(|| Arc::new(basis.dense_power()));
    Ok(OperatorModel {
        name: name.into(),
        constants: Constants { alpha: r + 1.0, delta: 1.0, c1, c2: c1 },
        pairing: Pairing::HminusOne,
        g_bound: constant(0.0),
        eps_reg: eps,
        kind: Kind::Porous { grid, basis, dense, r, eps, psi_scale, phi_scale },
    })
}

/// p-Laplace operator `A(u) = -div_h(h(t)|∇_h u|_ε^{p-2} ∇_h u) - f(t, u)`.
///
/// In 1D the gradient lives on cell faces; in 2D on P1 triangles (each square
/// split along its anti-diagonal), so `p = 2` gives the five-point Laplacian.
pub fn p_laplace_operator(grid: SpatialGrid, p: f64, scale: TimeFn, reaction: Option<ReactionFn>, eps_reg: f64) -> Result<OperatorModel> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::ParamOutOfRange(format!("p-Laplace needs p >= 2, got {p}")));
    }
    if !(eps_reg >= 0.0) {
        return Err(Error::ParamOutOfRange(format!("eps_reg must be nonnegative, got {eps_reg}")));
    }
    // sup of ∂_s f bounds the loss of monotonicity
    let c1 = match &reaction {
        Some(f) => (0..=40)
            .flat_map(|i| (0..=40).map(move |j| (i as f64 * 0.25, -5.0 + j as f64 * 0.25)))
            .map(|(t, s)| f(t, s).1)
            .fold(0.0, f64::max),
        None => 0.0,
    };
    Ok(OperatorModel {
        name: "p_laplace".into(),
        constants: Constants { alpha: p, delta: 1.0, c1, c2: c1 },
        pairing: Pairing::L2Nodal,
        g_bound: constant(0.0),
        eps_reg,
        kind: Kind::PLaplace { grid, p, eps: eps_reg, scale, reaction },
    })
}

/// Linear reaction `f(t, s) = c·s`.
pub fn linear_reaction(c: f64) -> ReactionFn {
    Arc::new(move |_, s| (c * s, c))
}

/// Nodal model `A(u)_i = a u_i + b u_i³` on `R^dim` (relaxation and
/// weakly monotone test problems).
pub fn scalar_operator(dim: usize, a: f64, b: f64) -> Result<OperatorModel> {
    if dim == 0 {
        return Err(Error::ParamOutOfRange("scalar operator needs dim >= 1".into()));
    }
    if b < 0.0 {
        return Err(Error::ParamOutOfRange(format!("cubic coefficient must be nonnegative, got {b}")));
    }
    let alpha = if b > 0.0 { 4.0 } else { 2.0 };
    let c1 = (-a).max(0.0);
    Ok(OperatorModel {
        name: "scalar".into(),
        constants: Constants { alpha, delta: if b > 0.0 { b } else { a.max(0.0) }, c1, c2: c1 },
        pairing: Pairing::L2Nodal,
        g_bound: constant(0.0),
        eps_reg: 0.0,
        kind: Kind::Scalar { dim, a, b },
    })
}

fn pad(grid: &SpatialGrid, u: &[f64], i: isize, j: isize) -> f64 {
    let n = grid.n as isize;
    if i < 0 || j < 0 || i >= n || j >= n {
        0.0
    } else {
        u[(i + j * n) as usize]
    }
}

/// Triangles of the 2D mesh as node index triples `(i, j)` offsets; nodes
/// outside the interior carry the Dirichlet value 0.
fn triangles(n: usize) -> impl Iterator<Item = [(isize, isize); 3]> {
    let n = n as isize;
    (-1..n).flat_map(move |j| {
        (-1..n).flat_map(move |i| {
            // lower: (i,j),(i+1,j),(i,j+1); upper: (i+1,j+1),(i,j+1),(i+1,j)
            [[(i, j), (i + 1, j), (i, j + 1)], [(i + 1, j + 1), (i, j + 1), (i + 1, j)]]
        })
    })
}

impl OperatorModel {
    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Porous { grid, .. } | Kind::PLaplace { grid, .. } => grid.size(),
            Kind::Scalar { dim, .. } => *dim,
        }
    }

    pub fn grid(&self) -> Option<&SpatialGrid> {
        match &self.kind {
            Kind::Porous { grid, .. } | Kind::PLaplace { grid, .. } => Some(grid),
            Kind::Scalar { .. } => None,
        }
    }

    pub fn basis(&self) -> Option<&EigenBasis> {
        match &self.kind {
            Kind::Porous { basis, .. } => Some(basis),
            _ => None,
        }
    }

    pub fn with_forcing_bound(mut self, g: TimeFn) -> Self {
        self.g_bound = g;
        self
    }

    /// Replace the declared constants (the validator checks them).
    pub fn with_constants(mut self, c: Constants) -> Self {
        self.constants = c;
        self
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        Ok(())
    }

    /// `A(t, u)`.
    pub fn apply(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(u)?;
        Ok(match &self.kind {
            Kind::Porous { grid, basis, r, eps, psi_scale, phi_scale, .. } => {
                let hs = psi_scale(t);
                let g = phi_scale(t);
                let psi: Vec<f64> = u.iter().map(|&s| hs * psi_pair(s, *r, *eps).0).collect();
                let mut out = if basis.alpha_frac == 1.0 { neg_laplacian(grid, &psi) } else { basis.apply_power(&psi) };
                for (o, s) in out.iter_mut().zip(u) {
                    *o -= g * s;
                }
                out
            }
            Kind::PLaplace { grid, p, eps, scale, reaction } => {
                let mut out = p_laplace_apply(grid, *p, *eps, scale(t), u);
                if let Some(f) = reaction {
                    for (o, &s) in out.iter_mut().zip(u) {
                        *o -= f(t, s).0;
                    }
                }
                out
            }
            Kind::Scalar { a, b, .. } => u.iter().map(|&s| a * s + b * s * s * s).collect(),
        })
    }

    /// Analytic Jacobian `∂A/∂u (t, u)`.
    pub fn jacobian(&self, t: f64, u: &[f64]) -> Result<Jacobian> {
        self.check_dim(u)?;
        Ok(match &self.kind {
            Kind::Porous { grid, dense, r, eps, psi_scale, phi_scale, .. } => {
                let hs = psi_scale(t);
                let g = phi_scale(t);
                let dpsi: Vec<f64> = u.iter().map(|&s| hs * psi_pair(s, *r, *eps).1).collect();
                match dense {
                    Some(m) => {
                        let mut j = (**m).clone();
                        for c in 0..j.ncols() {
                            for rr in 0..j.nrows() {
                                j[(rr, c)] *= dpsi[c];
                            }
                        }
                        for i in 0..j.nrows() {
                            j[(i, i)] -= g;
                        }
                        Jacobian::Dense(j)
                    }
                    None => {
                        let mut b = laplacian_band(grid, &dpsi);
                        for i in 0..b.n {
                            b.add(i, i, -g);
                        }
                        Jacobian::Banded(b)
                    }
                }
            }
            Kind::PLaplace { grid, p, eps, scale, reaction } => {
                let mut b = p_laplace_jacobian(grid, *p, *eps, scale(t), u);
                if let Some(f) = reaction {
                    for (i, &s) in u.iter().enumerate() {
                        b.add(i, i, -f(t, s).1);
                    }
                }
                Jacobian::Banded(b)
            }
            Kind::Scalar { a, b, .. } => {
                let mut m = BandMatrix::zeros(u.len(), 0, 0);
                for (i, &s) in u.iter().enumerate() {
                    m.add(i, i, a + 3.0 * b * s * s);
                }
                Jacobian::Banded(m)
            }
        })
    }

    /// Inner product selected by the pairing.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        match (&self.kind, self.pairing) {
            (Kind::Porous { basis, .. }, Pairing::HminusOne) => h_inner(basis, x, y).unwrap_or(f64::NAN),
            _ => self.volume() * x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    /// Norm induced by [`inner`](Self::inner).
    pub fn h_norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    fn volume(&self) -> f64 {
        self.grid().map_or(1.0, |g| g.cell_volume())
    }

    /// Discrete norm of the reflexive space `V`.
    pub fn v_norm(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Porous { grid, r, .. } => {
                let q = r + 1.0;
                (grid.cell_volume() * x.iter().map(|v| v.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
            }
            Kind::PLaplace { grid, p, .. } => grad_p_norm(grid, *p, x),
            Kind::Scalar { b, .. } => {
                let q = if *b > 0.0 { 4.0 } else { 2.0 };
                x.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
            }
        }
    }
}

/// `-Δ_h x` with homogeneous Dirichlet data.
pub fn neg_laplacian(grid: &SpatialGrid, x: &[f64]) -> Vec<f64> {
    let h2 = grid.h * grid.h;
    let n = grid.n as isize;
    if grid.dim == 1 {
        (0..n)
            .map(|i| {
                let l = if i > 0 { x[(i - 1) as usize] } else { 0.0 };
                let r = if i + 1 < n { x[(i + 1) as usize] } else { 0.0 };
                (2.0 * x[i as usize] - l - r) / h2
            })
            .collect()
    } else {
        let mut out = vec![0.0; x.len()];
        for j in 0..n {
            for i in 0..n {
                let c = pad(grid, x, i, j);
                let s = pad(grid, x, i - 1, j) + pad(grid, x, i + 1, j) + pad(grid, x, i, j - 1) + pad(grid, x, i, j + 1);
                out[(i + j * n) as usize] = (4.0 * c - s) / h2;
            }
        }
        out
    }
}

/// Band matrix of `-Δ_h · diag(d)`.
fn laplacian_band(grid: &SpatialGrid, d: &[f64]) -> BandMatrix {
    let h2 = grid.h * grid.h;
    let n = grid.n;
    if grid.dim == 1 {
        let mut b = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            b.add(i, i, 2.0 * d[i] / h2);
            if i > 0 {
                b.add(i, i - 1, -d[i - 1] / h2);
            }
            if i + 1 < n {
                b.add(i, i + 1, -d[i + 1] / h2);
            }
        }
        b
    } else {
        let size = n * n;
        let mut b = BandMatrix::zeros(size, n, n);
        for j in 0..n {
            for i in 0..n {
                let k = i + j * n;
                b.add(k, k, 4.0 * d[k] / h2);
                let mut nb = |kk: usize| b.add(k, kk, -d[kk] / h2);
                if i > 0 {
                    nb(k - 1);
                }
                if i + 1 < n {
                    nb(k + 1);
                }
                if j > 0 {
                    nb(k - n);
                }
                if j + 1 < n {
                    nb(k + n);
                }
            }
        }
        b
    }
}

/// `a(g) = |g|_ε^{p-2}` and `a'(g)·g`-type second derivative factor
/// `(p-2)|g|_ε^{p-4}`.
fn flux_coefs(q: f64, p: f64, eps: f64) -> (f64, f64) {
    let s = q + eps * eps;
    if p == 2.0 {
        return (1.0, 0.0);
    }
    if s == 0.0 {
        return (0.0, 0.0);
    }
    (s.powf(0.5 * (p - 2.0)), (p - 2.0) * s.powf(0.5 * (p - 4.0)))
}

fn p_laplace_apply(grid: &SpatialGrid, p: f64, eps: f64, scale: f64, u: &[f64]) -> Vec<f64> {
    let h = grid.h;
    let n = grid.n;
    if grid.dim == 1 {
        let val = |i: isize| if i < 0 || i >= n as isize { 0.0 } else { u[i as usize] };
        // face f sits between nodes f-1 and f
        let flux: Vec<f64> = (0..=n as isize)
            .map(|f| {
                let g = (val(f) - val(f - 1)) / h;
                scale * flux_coefs(g * g, p, eps).0 * g
            })
            .collect();
        (0..n).map(|i| -(flux[i + 1] - flux[i]) / h).collect()
    } else {
        let mut out = vec![0.0; n * n];
        let area = 0.5 * h * h;
        for tri in triangles(n) {
            let [a, b, c] = tri;
            // local gradient: vertex a is the right-angle corner
            let ua = pad(grid, u, a.0, a.1);
            let ub = pad(grid, u, b.0, b.1);
            let uc = pad(grid, u, c.0, c.1);
            let sx = (b.0 - a.0) as f64;
            let sy = (c.1 - a.1) as f64;
            let gx = sx * (ub - ua) / h;
            let gy = sy * (uc - ua) / h;
            let coef = scale * flux_coefs(gx * gx + gy * gy, p, eps).0;
            let (fx, fy) = (coef * gx, coef * gy);
            // ∂g/∂u: gx = sx(ub - ua)/h, gy = sy(uc - ua)/h
            let contrib = [
                (a, -(sx * fx + sy * fy) / h),
                (b, sx * fx / h),
                (c, sy * fy / h),
            ];
            for ((i, j), v) in contrib {
                if i >= 0 && j >= 0 && (i as usize) < n && (j as usize) < n {
                    out[i as usize + j as usize * n] += area * v;
                }
            }
        }
        let vol = grid.cell_volume();
        out.iter().map(|v| v / vol).collect()
    }
}

fn p_laplace_jacobian(grid: &SpatialGrid, p: f64, eps: f64, scale: f64, u: &[f64]) -> BandMatrix {
    let h = grid.h;
    let n = grid.n;
    if grid.dim == 1 {
        let val = |i: isize| if i < 0 || i >= n as isize { 0.0 } else { u[i as usize] };
        let mut b = BandMatrix::zeros(n, 1, 1);
        for f in 0..=n as isize {
            let g = (val(f) - val(f - 1)) / h;
            let (a, a2) = flux_coefs(g * g, p, eps);
            // d(flux)/dg = a + a2 g²
            let k = scale * (a + a2 * g * g) / (h * h);
            // flux_f enters node f-1 with +1/h and node f with -1/h
            let nodes = [(f - 1, 1.0), (f, -1.0)];
            for (ni, si) in nodes {
                if ni < 0 || ni >= n as isize {
                    continue;
                }
                for (nj, sj) in nodes {
                    if nj < 0 || nj >= n as isize {
                        continue;
                    }
                    b.add(ni as usize, nj as usize, k * si * sj);
                }
            }
        }
        b
    } else {
        let size = n * n;
        let mut b = BandMatrix::zeros(size, n, n);
        let area = 0.5 * h * h;
        let vol = grid.cell_volume();
        for tri in triangles(n) {
            let [a, bb, c] = tri;
            let ua = pad(grid, u, a.0, a.1);
            let ub = pad(grid, u, bb.0, bb.1);
            let uc = pad(grid, u, c.0, c.1);
            let sx = (bb.0 - a.0) as f64;
            let sy = (c.1 - a.1) as f64;
            let gx = sx * (ub - ua) / h;
            let gy = sy * (uc - ua) / h;
            let (a0, a2) = flux_coefs(gx * gx + gy * gy, p, eps);
            // Hessian of the local energy in g: scale (a0 I + a2 g gᵀ)
            let hxx = scale * (a0 + a2 * gx * gx);
            let hyy = scale * (a0 + a2 * gy * gy);
            let hxy = scale * a2 * gx * gy;
            // dg/du rows for vertices a, b, c
            let dg = [(a, -sx / h, -sy / h), (bb, sx / h, 0.0), (c, 0.0, sy / h)];
            for &(vi, xi, yi) in &dg {
                if vi.0 < 0 || vi.1 < 0 || vi.0 >= n as isize || vi.1 >= n as isize {
                    continue;
                }
                let ri = vi.0 as usize + vi.1 as usize * n;
                for &(vj, xj, yj) in &dg {
                    if vj.0 < 0 || vj.1 < 0 || vj.0 >= n as isize || vj.1 >= n as isize {
                        continue;
                    }
                    let cj = vj.0 as usize + vj.1 as usize * n;
                    let v = xi * (hxx * xj + hxy * yj) + yi * (hxy * xj + hyy * yj);
                    b.add(ri, cj, area * v / vol);
                }
            }
        }
        b
    }
}

fn grad_p_norm(grid: &SpatialGrid, p: f64, u: &[f64]) -> f64 {
    let h = grid.h;
    let n = grid.n;
    if grid.dim == 1 {
        let val = |i: isize| if i < 0 || i >= n as isize { 0.0 } else { u[i as usize] };
        let s: f64 = (0..=n as isize).map(|f| ((val(f) - val(f - 1)) / h).abs().powf(p)).sum();
        (h * s).powf(1.0 / p)
    } else {
        let area = 0.5 * h * h;
        let s: f64 = triangles(n)
            .map(|[a, b, c]| {
                let ua = pad(grid, u, a.0, a.1);
                let gx = (pad(grid, u, b.0, b.1) - ua) / h;
                let gy = (pad(grid, u, c.0, c.1) - ua) / h;
                area * (gx * gx + gy * gy).powf(0.5 * p)
            })
            .sum();
        s.powf(1.0 / p)
    }
}

/// Outcome of one structural condition in [`validate_h_conditions`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: String,
    pub pass: bool,
    /// Measured constant: max jump (H1), empirical C₁ (H2), empirical δ (H3), growth constant (H4).
    pub measured: f64,
    pub declared: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HConditionReport {
    pub operator: String,
    pub samples: usize,
    pub checks: Vec<ConditionCheck>,
}

impl HConditionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == name)
    }
}

fn random_state(rng: &mut ChaCha8Rng, d: usize, amp: f64) -> Vec<f64> {
    (0..d).map(|_| amp * rng.random_range(-1.0..1.0)).collect()
}

/// Sample-based check of hemicontinuity, weak monotonicity, coercivity and
/// growth at time `t`, reporting empirical constants.
pub fn validate_h_conditions(op: &OperatorModel, t: f64, samples: usize, tol: f64, seed: u64) -> Result<HConditionReport> {
    if samples < 100 {
        return Err(Error::ParamOutOfRange(format!("validator needs at least 100 samples, got {samples}")));
    }
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dot = |x: &[f64], y: &[f64]| op.inner(x, y);
    let amp = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-1.0..1.0));
    let mut checks = Vec::new();

    // (H1): s ↦ ⟨A(v1 + s v2), v⟩ has vanishing jumps under refinement
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..samples.min(200) {
        let a = amp(&mut rng);
        let v1 = random_state(&mut rng, d, a);
        let v2 = random_state(&mut rng, d, a);
        let v = random_state(&mut rng, d, 1.0);
        let s0: f64 = rng.random_range(0.0..1.0);
        let f = |s: f64| -> Result<f64> {
            let x: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| p + s * q).collect();
            Ok(dot(&op.apply(t, &x)?, &v))
        };
        let base = f(s0)?;
        let coarse = (f(s0 + 1e-3)? - base).abs();
        let fine = (f(s0 + 1e-7)? - base).abs();
        let scale = base.abs().max(coarse).max(1e-300);
        worst_ratio = worst_ratio.max(if coarse > 1e-12 * scale { fine / coarse } else { fine / scale });
    }
    checks.push(ConditionCheck {
        condition: "H1".into(),
        pass: worst_ratio < 1e-2,
        measured: worst_ratio,
        declared: 0.0,
        detail: "max ratio of jump at ds=1e-7 to jump at ds=1e-3".into(),
    });

    // (H2): ⟨A x - A y, x - y⟩ ≥ -C₁ ‖x - y‖²
    let mut c1_emp: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..samples {
        let a = amp(&mut rng);
        let x = random_state(&mut rng, d, a);
        let y = random_state(&mut rng, d, a);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
        let ax = op.apply(t, &x)?;
        let ay = op.apply(t, &y)?;
        let da: Vec<f64> = ax.iter().zip(&ay).map(|(p, q)| p - q).collect();
        let lhs = dot(&da, &diff);
        let nn = dot(&diff, &diff);
        if nn > 0.0 {
            c1_emp = c1_emp.max(-lhs / nn);
            worst_margin = worst_margin.min((lhs + op.constants.c1 * nn) / nn);
        }
    }
    checks.push(ConditionCheck {
        condition: "H2".into(),
        pass: worst_margin >= -tol,
        measured: c1_emp.max(0.0),
        declared: op.constants.c1,
        detail: format!("worst normalized margin {worst_margin:.3e}"),
    });

    // (H3): ⟨A v, v⟩ ≥ δ ‖v‖_V^α - C₂ ‖v‖²
    let mut delta_emp = f64::INFINITY;
    for _ in 0..samples {
        let a = amp(&mut rng);
        let v = random_state(&mut rng, d, a);
        let lhs = dot(&op.apply(t, &v)?, &v) + op.constants.c2 * dot(&v, &v);
        let vn = op.v_norm(&v).powf(op.constants.alpha);
        if vn > 0.0 {
            delta_emp = delta_emp.min(lhs / vn);
        }
    }
    checks.push(ConditionCheck {
        condition: "H3".into(),
        pass: delta_emp > tol,
        measured: delta_emp,
        declared: op.constants.delta,
        detail: "min of (⟨Av,v⟩ + C₂‖v‖²)/‖v‖_V^α".into(),
    });

    // (H4): dual-norm lower bound ⟨A v, w⟩/‖w‖_V against 1 + ‖v‖_V^{α-1}
    let mut by_amp = Vec::new();
    for &a in &[1.0, 10.0, 100.0] {
        let mut worst: f64 = 0.0;
        for _ in 0..samples / 3 {
            let v = random_state(&mut rng, d, a);
            let av = op.apply(t, &v)?;
            let growth = 1.0 + op.v_norm(&v).powf(op.constants.alpha - 1.0);
            for w in [v.clone(), random_state(&mut rng, d, 1.0)] {
                let wn = op.v_norm(&w);
                if wn > 0.0 {
                    worst = worst.max(dot(&av, &w).abs() / wn / growth);
                }
            }
        }
        by_amp.push(worst);
    }
    let c_emp = by_amp.iter().copied().fold(0.0, f64::max);
    checks.push(ConditionCheck {
        condition: "H4".into(),
        pass: c_emp.is_finite() && by_amp[2] <= 2.0 * by_amp[0].max(by_amp[1]) + tol,
        measured: c_emp,
        declared: f64::NAN,
        detail: format!("growth constants at amplitudes 1, 10, 100: {by_amp:?}"),
    });

    Ok(HConditionReport { operator: op.name.clone(), samples, checks })
}
