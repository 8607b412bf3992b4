//! Additive noise with memory: the effective kernel `κ = k̃₁ ∗ k₂`, sampled
//! stochastic convolutions `F(t) = ∫₀ᵗ κ(t-s) B(s) dW(s)`, and pathwise
//! solution of the shifted equation for `u = X - F`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fftconv;
use crate::io;
use crate::kernels::{cell_integrals, numeric_sonine, Family, KernelSpec};
use crate::memory::make_scheme;
use crate::operators::{EigenBasis, OperatorModel};
use crate::solver::{integrate, ForcingFn, SolveConfig, StepSystem, Trajectory};
use crate::special::gamma;

/// `t ↦ B(t)`, a `d_state × d_noise` matrix.
pub type DiffusionFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// `B(t) = b·I` (rectangular when `d_noise ≠ d_state`).
pub fn constant_diffusion(d_state: usize, d_noise: usize, b: f64) -> DiffusionFn {
    let m = DMatrix::from_fn(d_state, d_noise, |i, j| if i == j { b } else { 0.0 });
    Arc::new(move |_| m.clone())
}

/// Noise along the first `d_noise` eigenvectors, amplitude `b·k^{-decay}`.
pub fn modal_diffusion(basis: &EigenBasis, d_noise: usize, b: f64, decay: f64) -> DiffusionFn {
    let d = basis.grid.size();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| basis.eigenvalues[i].total_cmp(&basis.eigenvalues[j]));
    let mut m = DMatrix::zeros(d, d_noise);
    for (k, &idx) in order.iter().take(d_noise).enumerate() {
        let e = basis.eigenvector(idx);
        let amp = b * ((k + 1) as f64).powf(-decay);
        for i in 0..d {
            m[(i, k)] = amp * e[i];
        }
    }
    Arc::new(move |_| m.clone())
}

/// How `κ` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum KappaMethod {
    /// `k₁ = k₂`, so `κ ≡ 1`.
    Unit,
    /// Two power kernels: `κ(t) = t^p/Γ(1+p)`.
    Power { p: f64 },
    /// Piecewise-constant conjugate of `k₁` convolved with exact cell integrals of `k₂`.
    Numeric,
}

/// `κ` on the grid `t_m = mτ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveKernel {
    pub tau: f64,
    pub n: usize,
    pub method: KappaMethod,
    /// `κ(t_m)`, `m = 1..=n`.
    pub values: Vec<f64>,
    /// Cell averages `κ̄_m = τ⁻¹∫_{mτ}^{(m+1)τ} κ`, `m = 0..n`.
    pub cell_avg: Vec<f64>,
    /// Local power `p` in `κ(t) ≈ c t^p` near zero.
    pub local_exponent: f64,
    /// `∫₀^{min(1,T)} κ²` from the cell averages.
    pub l2_unit: f64,
}

/// `κ = k̃₁ ∗ k₂` on a uniform grid.
pub fn effective_kernel(k1: &KernelSpec, k2: &KernelSpec, tau: f64, n: usize) -> Result<EffectiveKernel> {
    if !(tau > 0.0) || n < 4 {
        return Err(Error::ParamOutOfRange(format!("effective kernel grid needs tau > 0, n >= 4 (tau={tau}, n={n})")));
    }
    let closed = match (k1.family(), k2.family()) {
        (a, b) if a == b && !matches!(a, Family::Custom { .. }) => Some(KappaMethod::Unit),
        (Family::Caputo { beta }, Family::Caputo { beta: g }) => Some(KappaMethod::Power { p: beta - g }),
        _ => None,
    };
    let (method, values, prim) = match closed {
        Some(KappaMethod::Unit) => (KappaMethod::Unit, vec![1.0; n], (0..=n).map(|m| m as f64 * tau).collect::<Vec<_>>()),
        Some(KappaMethod::Power { p }) => {
            if p <= -0.5 {
                return Err(Error::NotSquareIntegrable(format!("kappa ~ t^{p:.3}; needs gamma < beta + 1/2")));
            }
            let g1 = 1.0 / gamma(1.0 + p);
            let g2 = 1.0 / gamma(2.0 + p);
            let vals = (1..=n).map(|m| g1 * (m as f64 * tau).powf(p)).collect();
            let prim = (0..=n).map(|m| if m == 0 { 0.0 } else { g2 * (m as f64 * tau).powf(1.0 + p) }).collect();
            (KappaMethod::Power { p }, vals, prim)
        }
        _ => {
            let (c, _) = numeric_sonine(k1, tau, n)?;
            // κ(t_m) = Σ_j c_j ∫_{cell j} k₂(t_m - s) ds
            let d = cell_integrals(k2, tau, n);
            let conv = fftconv::convolve(&c, &d);
            let vals: Vec<f64> = conv[..n].to_vec();
            // P_κ(t_m) = Σ_j c_j ∫_{cell j} K₂(t_m - s) ds
            let p2: Vec<f64> = (0..=n).into_par_iter().map(|m| k2.primitive2(m as f64 * tau)).collect();
            let e: Vec<f64> = p2.windows(2).map(|w| w[1] - w[0]).collect();
            let pc = fftconv::convolve(&c, &e);
            let mut prim = vec![0.0];
            prim.extend(pc.iter().take(n));
            (KappaMethod::Numeric, vals, prim)
        }
    };
    let cell_avg: Vec<f64> = prim.windows(2).map(|w| (w[1] - w[0]) / tau).collect();
    // P_κ(t) ~ t^{1+p}
    let local_exponent = local_power(&prim);
    if method == KappaMethod::Numeric && !(local_exponent > -0.5) {
        return Err(Error::NotSquareIntegrable(format!("numeric kappa behaves like t^{local_exponent:.3} near 0")));
    }
    let m1 = ((1.0 / tau).round() as usize).clamp(1, n);
    let l2_unit = tau * cell_avg[..m1].iter().map(|v| v * v).sum::<f64>();
    if !l2_unit.is_finite() {
        return Err(Error::NotSquareIntegrable("integral of kappa^2 over [0,1] diverges".into()));
    }
    Ok(EffectiveKernel { tau, n, method, values, cell_avg, local_exponent, l2_unit })
}

/// Exponent `p` with `∫₀ᵗ κ ~ t^{1+p}`, read off two dyadic grid points
/// far enough from the first cells, where the numeric conjugate is least accurate.
fn local_power(prim: &[f64]) -> f64 {
    let n = prim.len() - 1;
    let hi = (n / 4).clamp(2, 64);
    (prim[hi] / prim[hi / 2]).log2() - 1.0
}

/// Additive noise specification.
#[derive(Clone)]
pub struct NoiseModel {
    pub kappa: EffectiveKernel,
    pub diffusion: DiffusionFn,
    pub d_state: usize,
    pub d_noise: usize,
    /// Master seed; path `p` uses ChaCha stream `p`, step `j` a fixed word offset.
    pub seed: u64,
}

impl std::fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NoiseModel(d_state={}, d_noise={}, seed={}, kappa={:?})", self.d_state, self.d_noise, self.seed, self.kappa.method)
    }
}

impl NoiseModel {
    pub fn new(k1: &KernelSpec, k2: &KernelSpec, diffusion: DiffusionFn, d_state: usize, d_noise: usize, seed: u64, tau: f64, n: usize) -> Result<Self> {
        let b0 = diffusion(0.0);
        if b0.nrows() != d_state || b0.ncols() != d_noise {
            return Err(Error::DimensionMismatch { expected: d_state * d_noise, got: b0.nrows() * b0.ncols() });
        }
        let kappa = effective_kernel(k1, k2, tau, n)?;
        Ok(NoiseModel { kappa, diffusion, d_state, d_noise, seed })
    }

    fn words_per_step(&self) -> u128 {
        // each Box-Muller pair consumes two u64, i.e. four 32-bit words
        4 * self.d_noise.div_ceil(2) as u128
    }

    /// Exact discrete variance `τ Σ_j κ̄²_{n-1-j} ‖B(t_j)‖²_HS` of `F_n` (summed over components).
    pub fn discrete_variance(&self, n: usize) -> f64 {
        let tau = self.kappa.tau;
        (0..n)
            .map(|j| {
                let b = (self.diffusion)(j as f64 * tau);
                let k = self.kappa.cell_avg[n - 1 - j];
                tau * k * k * b.norm_squared()
            })
            .sum()
    }
}

/// Standard normal vector for `(seed, path, step)` from a counter-addressed ChaCha stream.
pub fn gaussian_increment(seed: u64, path: u64, step: u64, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng.set_word_pos(step as u128 * 4 * d.div_ceil(2) as u128);
    box_muller(&mut rng, d)
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(d + 1);
    while out.len() < d {
        let r = (-2.0 * uniform_open(rng).ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * uniform_open(rng);
        out.push(r * th.cos());
        out.push(r * th.sin());
    }
    out.truncate(d);
    out
}

/// `F_0 … F_N` for one path: `F_n = Σ_{j<n} κ̄_{n-1-j} B(t_j) ξ_j √τ`.
pub fn sample_noise_path(model: &NoiseModel, path_id: u64) -> Vec<Vec<f64>> {
    let tau = model.kappa.tau;
    let n = model.kappa.n;
    let d = model.d_state;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(path_id);
    let sq = tau.sqrt();
    // columns b_j = B(t_j) ξ_j √τ, per state component
    let mut comps = vec![vec![0.0; n]; d];
    for j in 0..n {
        rng.set_word_pos(j as u128 * model.words_per_step());
        let xi = box_muller(&mut rng, model.d_noise);
        let b = (model.diffusion)(j as f64 * tau);
        for i in 0..d {
            let mut s = 0.0;
            for (k, x) in xi.iter().enumerate() {
                s += b[(i, k)] * x;
            }
            comps[i][j] = s * sq;
        }
    }
    let conv: Vec<Vec<f64>> = comps.iter().map(|c| fftconv::convolve(&model.kappa.cell_avg, c)).collect();
    (0..=n).map(|m| (0..d).map(|i| if m == 0 { 0.0 } else { conv[i][m - 1] }).collect()).collect()
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Pointwise ensemble statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// Largest step residual of the shifted equation over all paths.
    pub max_residual: f64,
    /// Per-path `X` when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<Vec<f64>>>>,
}

impl Ensemble {
    /// CSV with header `t,mean_1..d,var_1..d,se_1..d`.
    pub fn to_csv(&self) -> String {
        let d = self.mean.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        for tag in ["mean", "var", "se"] {
            header.extend((1..=d).map(|i| format!("{tag}_{i}")));
        }
        io::csv_string(
            &header,
            (0..self.times.len()).map(|n| {
                let mut row = vec![self.times[n]];
                row.extend(&self.mean[n]);
                row.extend(&self.var[n]);
                row.extend(&self.se[n]);
                row
            }),
        )
    }
}

/// Options for [`solve_spde`].
#[derive(Clone, Copy, Debug)]
pub struct EnsembleOptions {
    pub n_paths: usize,
    pub keep_paths: bool,
    /// Paths solved concurrently before being folded into the statistics.
    pub chunk: usize,
}

impl EnsembleOptions {
    pub fn new(n_paths: usize) -> Self {
        EnsembleOptions { n_paths, keep_paths: false, chunk: 256 }
    }
}

/// One path: solve for `u` with `Ã(t,u) = A(t, u + F(t))` and return `X = u + F`.
pub fn solve_path(k1: &KernelSpec, noise: &NoiseModel, op: &OperatorModel, x0: &[f64], forcing: &ForcingFn, cfg: &SolveConfig, path_id: u64) -> Result<Trajectory> {
    let scheme = make_scheme(k1, cfg.backend, cfg.tau, cfg.n)?;
    path_on_scheme(&scheme, noise, op, x0, forcing, cfg, path_id)
}

fn path_on_scheme(
    scheme: &crate::memory::MemoryScheme,
    noise: &NoiseModel,
    op: &OperatorModel,
    x0: &[f64],
    forcing: &ForcingFn,
    cfg: &SolveConfig,
    path_id: u64,
) -> Result<Trajectory> {
    let wrap = |e: Error| Error::Path { path: path_id, source: Box::new(e) };
    let f = sample_noise_path(noise, path_id);
    let zero = f.iter().flatten().all(|v| *v == 0.0);
    let sys = StepSystem { op, shift: if zero { None } else { Some(&f) }, linear: 0.0 };
    let ff = forcing.clone();
    let mut traj = integrate(scheme, &sys, x0, &move |_, t| ff(t), &cfg.newton).map_err(wrap)?;
    if !zero {
        for (x, fv) in traj.states.iter_mut().zip(&f) {
            for (a, b) in x.iter_mut().zip(fv) {
                *a += b;
            }
        }
    }
    Ok(traj)
}

/// Ensemble of pathwise solutions with pointwise mean, variance and standard error.
pub fn solve_spde(k1: &KernelSpec, noise: &NoiseModel, op: &OperatorModel, x0: &[f64], forcing: ForcingFn, cfg: &SolveConfig, opts: EnsembleOptions) -> Result<Ensemble> {
    cfg.validate()?;
    if (cfg.tau - noise.kappa.tau).abs() > 1e-12 * cfg.tau || cfg.n > noise.kappa.n {
        return Err(Error::ParamOutOfRange("noise grid does not match the solver grid".into()));
    }
    if noise.d_state != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: noise.d_state });
    }
    if opts.n_paths < 2 {
        return Err(Error::ParamOutOfRange("an ensemble needs at least two paths".into()));
    }
    let scheme = make_scheme(k1, cfg.backend, cfg.tau, cfg.n)?;
    let d = op.dim();
    let nt = cfg.n + 1;
    let mut shift: Option<Vec<Vec<f64>>> = None;
    let mut s1 = vec![vec![Kahan::default(); d]; nt];
    let mut s2 = vec![vec![Kahan::default(); d]; nt];
    let mut kept = opts.keep_paths.then(Vec::new);
    let mut max_residual: f64 = 0.0;
    let mut times = Vec::new();
    let chunk = opts.chunk.max(1);
    for start in (0..opts.n_paths).step_by(chunk) {
        let end = (start + chunk).min(opts.n_paths);
        let batch: Vec<Trajectory> = (start..end)
            .into_par_iter()
            .map(|p| path_on_scheme(&scheme, noise, op, x0, &forcing, cfg, p as u64))
            .collect::<Result<_>>()?;
        for tr in batch {
            if times.is_empty() {
                times = tr.times.clone();
            }
            max_residual = max_residual.max(tr.max_residual());
            // shifted sums keep the variance accurate
            let c = shift.get_or_insert_with(|| tr.states.clone());
            for n in 0..nt {
                for i in 0..d {
                    let x = tr.states[n][i] - c[n][i];
                    s1[n][i].add(x);
                    s2[n][i].add(x * x);
                }
            }
            if let Some(k) = kept.as_mut() {
                k.push(tr.states);
            }
        }
    }
    let np = opts.n_paths as f64;
    let c = shift.expect("at least one path");
    let mut mean = vec![vec![0.0; d]; nt];
    let mut var = vec![vec![0.0; d]; nt];
    let mut se = vec![vec![0.0; d]; nt];
    for n in 0..nt {
        for i in 0..d {
            let m = s1[n][i].sum / np;
            mean[n][i] = c[n][i] + m;
            var[n][i] = ((s2[n][i].sum - np * m * m) / (np - 1.0)).max(0.0);
            se[n][i] = (var[n][i] / np).sqrt();
        }
    }
    Ok(Ensemble { times, n_paths: opts.n_paths, mean, var, se, max_residual, paths: kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{catalogue, make_kernel};
    use crate::operators::scalar_operator;
    use crate::quadrature::tanh_sinh;
    use crate::solver::{run, zero_forcing};
    use crate::special::mittag_leffler_half_neg;
    use approx::assert_relative_eq;

    fn caputo(beta: f64) -> KernelSpec {
        make_kernel(&Family::Caputo { beta }).unwrap()
    }

    #[test]
    fn equal_kernels_collapse_to_one() {
        for k in catalogue() {
            let kap = effective_kernel(&k, &k, 0.01, 200).unwrap();
            assert_eq!(kap.method, KappaMethod::Unit);
            assert!(kap.values.iter().chain(&kap.cell_avg).all(|v| (v - 1.0).abs() <= 1e-10));
        }
    }

    #[test]
    fn numeric_route_also_collapses() {
        // a closure copy is not recognized as equal, so κ goes through the Volterra solve
        let k = Arc::new(make_kernel(&Family::GammaSub { a: 1.0, b: 1.0 }).unwrap());
        let (ka, kb) = (Arc::clone(&k), Arc::clone(&k));
        let copy = KernelSpec::custom(crate::kernels::CustomKernel {
            label: "copy".into(),
            k: Arc::new(move |t| ka.k(t)),
            primitive: Some(Arc::new(move |t| kb.primitive(t))),
            k_tilde: None,
            singular_at_zero: true,
        });
        let kap = effective_kernel(&copy, &copy, 0.01, 200).unwrap();
        assert_eq!(kap.method, KappaMethod::Numeric);
        let dev = kap.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-10, "{dev}");
    }

    #[test]
    fn caputo_pair_closed_form() {
        let kap = effective_kernel(&caputo(0.7), &caputo(0.4), 0.01, 100).unwrap();
        assert_relative_eq!(kap.values[99], 1.0 / gamma(1.3), max_relative = 1e-12);
        // Γ(1.3) from its defining integral
        let g = crate::quadrature::exp_sinh(|x: f64, _| x.powf(0.3) * (-x).exp(), 0.0, 1e-14).value;
        assert_relative_eq!(kap.values[99], 1.0 / g, max_relative = 1e-10);
        assert_relative_eq!(kap.values[99], 1.114_242_5, max_relative = 1e-7);
        assert!(matches!(effective_kernel(&caputo(0.3), &caputo(0.9), 0.01, 100), Err(Error::NotSquareIntegrable(_))));
    }

    #[test]
    fn numeric_kappa_matches_caputo_closed_form() {
        let ts = make_kernel(&Family::MultiTerm { terms: vec![[1.0, 0.4]] }).unwrap();
        let kap = effective_kernel(&caputo(0.7), &ts, 1e-3, 2000).unwrap();
        assert_eq!(kap.method, KappaMethod::Numeric);
        let exact = |t: f64| t.powf(0.3) / gamma(1.3);
        for m in [500usize, 1000, 2000] {
            assert_relative_eq!(kap.values[m - 1], exact(m as f64 * 1e-3), max_relative = 1e-3);
        }
        assert!((kap.local_exponent - 0.3).abs() < 0.05);
    }

    #[test]
    fn zero_diffusion_gives_zero_noise() {
        let k = caputo(0.5);
        let m = NoiseModel::new(&k, &k, constant_diffusion(2, 2, 0.0), 2, 2, 1, 0.1, 10).unwrap();
        assert!(sample_noise_path(&m, 3).iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn increments_are_counter_addressed() {
        let k = caputo(0.5);
        let m = NoiseModel::new(&k, &k, constant_diffusion(1, 1, 1.0), 1, 1, 42, 0.1, 8).unwrap();
        let f = sample_noise_path(&m, 5);
        // with κ ≡ 1 the path is a Brownian sum of the addressed increments
        let mut w = 0.0;
        for j in 0..8u64 {
            w += gaussian_increment(42, 5, j, 1)[0] * 0.1f64.sqrt();
            assert!((f[j as usize + 1][0] - w).abs() < 1e-12);
        }
        assert_ne!(sample_noise_path(&m, 6)[8][0], f[8][0]);
    }

    #[test]
    fn brownian_variance_monte_carlo() {
        let k = caputo(0.5);
        let b = 0.7;
        let m = NoiseModel::new(&k, &k, constant_diffusion(1, 1, b), 1, 1, 7, 0.05, 20).unwrap();
        let paths: Vec<f64> = (0..10_000u64).into_par_iter().map(|p| sample_noise_path(&m, p)[20][0]).collect();
        let n = paths.len() as f64;
        let mean = paths.iter().sum::<f64>() / n;
        let var = paths.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let fourth = paths.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let se_var = ((fourth - var * var) / n).sqrt();
        let expect = b * b * 1.0;
        assert_relative_eq!(m.discrete_variance(20), expect, max_relative = 1e-12);
        assert!((var - expect).abs() <= 3.0 * se_var, "{var} vs {expect} (se {se_var})");
    }

    #[test]
    fn general_kappa_isometry_against_quadrature() {
        let (k1, k2) = (caputo(0.6), caputo(0.3));
        let tau = 1.0 / 400.0;
        let m = NoiseModel::new(&k1, &k2, constant_diffusion(1, 1, 1.0), 1, 1, 11, tau, 400).unwrap();
        // ∫₀¹ κ²(1-s) ds with κ = t^{0.3}/Γ(1.3)
        let quad = tanh_sinh(|s: f64, _, _| (s.powf(0.3) / gamma(1.3)).powi(2), 0.0, 1.0, 1e-12).value;
        let disc = m.discrete_variance(400);
        assert!((disc - quad).abs() < 5e-3 * quad, "{disc} vs {quad}");
    }

    #[test]
    fn linear_ensemble_mean_matches_deterministic() {
        let k = caputo(0.5);
        let op = scalar_operator(1, 1.0, 0.0).unwrap();
        let cfg = SolveConfig::new(1.0 / 64.0, 64);
        let noise = NoiseModel::new(&k, &k, constant_diffusion(1, 1, 0.5), 1, 1, 3, cfg.tau, cfg.n).unwrap();
        let ens = solve_spde(&k, &noise, &op, &[1.0], zero_forcing(1), &cfg, EnsembleOptions::new(2000)).unwrap();
        let det = run(&k, &op, &[1.0], zero_forcing(1), &cfg).unwrap();
        let (m, se) = (ens.mean[64][0], ens.se[64][0]);
        assert!((m - det.last()[0]).abs() <= 3.0 * se);
        assert!((m - mittag_leffler_half_neg(1.0)).abs() <= 3.0 * se + 0.01);
        let again = solve_spde(&k, &noise, &op, &[1.0], zero_forcing(1), &cfg, EnsembleOptions::new(2000)).unwrap();
        assert_eq!(ens.to_csv(), again.to_csv());
    }

    #[test]
    fn zero_noise_paths_equal_deterministic_run_bitwise() {
        let k = caputo(0.5);
        let op = scalar_operator(2, 1.0, 1.0).unwrap();
        let cfg = SolveConfig::new(0.05, 20);
        let noise = NoiseModel::new(&k, &k, constant_diffusion(2, 2, 0.0), 2, 2, 3, cfg.tau, cfg.n).unwrap();
        let det = run(&k, &op, &[1.0, -0.5], zero_forcing(2), &cfg).unwrap();
        let mut opts = EnsembleOptions::new(4);
        opts.keep_paths = true;
        let ens = solve_spde(&k, &noise, &op, &[1.0, -0.5], zero_forcing(2), &cfg, opts).unwrap();
        for p in ens.paths.unwrap() {
            assert_eq!(p, det.states);
        }
    }

    #[test]
    fn modal_diffusion_has_expected_hilbert_schmidt_norm() {
        let grid = crate::operators::SpatialGrid::new(1, 16, 1.0).unwrap();
        let basis = EigenBasis::new(grid, 1.0).unwrap();
        let b = modal_diffusion(&basis, 3, 2.0, 1.0)(0.0);
        // columns are unit in the h-weighted norm
        let hs: f64 = grid.h * b.norm_squared();
        assert_relative_eq!(hs, 4.0 * (1.0 + 0.25 + 1.0 / 9.0), max_relative = 1e-12);
    }
}
