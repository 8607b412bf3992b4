//! Implicit time stepping for `∂_t(k ∗ (u - u₀)) + A(t, u) = f`.
//!
//! The stepped unknown is `v = u - u₀`, so `v₀ = 0` and the memory term never
//! sees the initial jump. Two strategies are provided: Newton per step and
//! the global weighted fixed-point iteration with a measured contraction
//! factor.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kernels::{sonine_conjugate, KernelSpec};
use crate::linalg::Jacobian;
use crate::memory::{apply_memory_full, cq_conjugate_weights, make_scheme, Backend, MemoryScheme};
use crate::operators::OperatorModel;
use crate::quadrature::tanh_sinh;

/// Forcing `t ↦ f(t)` as a nodal vector.
pub type ForcingFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Zero forcing in dimension `d`.
pub fn zero_forcing(d: usize) -> ForcingFn {
    Arc::new(move |_| vec![0.0; d])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    NewtonPerStep,
    WeightedFixedPoint,
}

/// Starting point of each Newton solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    #[default]
    Previous,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of step halvings in the Armijo line search.
    pub max_halvings: usize,
    pub initial_guess: InitialGuess,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 50, abs_tol: 1e-12, rel_tol: 1e-11, max_halvings: 30, initial_guess: InitialGuess::Previous }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    /// Weight exponent; chosen by [`choose_gamma`] when absent.
    pub gamma: Option<f64>,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { gamma: None, max_sweeps: 200, sweep_tol: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub tau: f64,
    pub n: usize,
    pub backend: Backend,
    pub strategy: Strategy,
    pub newton: NewtonOptions,
    pub fixedpoint: FixedPointOptions,
}

impl SolveConfig {
    pub fn new(tau: f64, n: usize) -> Self {
        SolveConfig {
            tau,
            n,
            backend: Backend::CqBackwardEuler,
            strategy: Strategy::NewtonPerStep,
            newton: NewtonOptions::default(),
            fixedpoint: FixedPointOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ParamOutOfRange(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) || self.n == 0 {
            return bad(format!("need tau > 0 and n >= 1 (tau={}, n={})", self.tau, self.n));
        }
        let nw = &self.newton;
        if !(nw.abs_tol > 0.0 && nw.rel_tol > 0.0) || nw.max_iter == 0 {
            return bad("Newton tolerances and max_iter must be positive".into());
        }
        let fp = &self.fixedpoint;
        if !(fp.sweep_tol > 0.0) || fp.max_sweeps == 0 {
            return bad("sweep_tol and max_sweeps must be positive".into());
        }
        if let Some(g) = fp.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.n as f64
    }
}

/// Work counters, in units of state-vector operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub operator_evals: u64,
    pub jacobian_evals: u64,
    pub linear_solves: u64,
    /// Vector AXPYs spent on memory sums.
    pub memory_terms: u64,
}

impl OpCounters {
    fn add(&mut self, o: &OpCounters) {
        self.operator_evals += o.operator_evals;
        self.jacobian_evals += o.jacobian_evals;
        self.linear_solves += o.linear_solves;
        self.memory_terms += o.memory_terms;
    }

    pub fn total(&self) -> u64 {
        self.operator_evals + self.jacobian_evals + self.linear_solves + self.memory_terms
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `‖R‖_H / w₀` at acceptance.
    pub residual: f64,
    pub newton_iterations: usize,
    pub converged: bool,
    /// Memory-sum work for this step (vector AXPYs).
    pub memory_terms: u64,
}

/// Discrete solution with per-step diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// One entry per step `n = 1..=N`.
    pub diagnostics: Vec<StepDiagnostics>,
    pub h_norms: Vec<f64>,
    pub v_norms: Vec<f64>,
    /// `½‖u‖²_H`.
    pub energy: Vec<f64>,
    pub counters: OpCounters,
    /// Integral-form check, filled in by [`run`].
    pub integral_check: Option<IntegralFormCheck>,
    /// Wall time spent in memory sums (not serialized, varies between runs).
    #[serde(skip)]
    pub memory_seconds: f64,
}

/// Diagnostics written next to the trajectory CSV.
#[derive(Serialize)]
struct Sidecar<'a> {
    steps: usize,
    tau: f64,
    diagnostics: &'a [StepDiagnostics],
    h_norms: &'a [f64],
    v_norms: &'a [f64],
    energy: &'a [f64],
    counters: OpCounters,
    integral_check: Option<IntegralFormCheck>,
    max_residual: f64,
    max_newton_iterations: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn max_residual(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max)
    }

    /// CSV with header `t,u_1..u_d`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("u_{i}")));
        io::csv_string(
            &header,
            self.times.iter().zip(&self.states).map(|(t, u)| {
                let mut row = vec![*t];
                row.extend_from_slice(u);
                row
            }),
        )
    }

    pub fn diagnostics_json(&self) -> String {
        let tau = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 0.0 };
        let side = Sidecar {
            steps: self.diagnostics.len(),
            tau,
            diagnostics: &self.diagnostics,
            h_norms: &self.h_norms,
            v_norms: &self.v_norms,
            energy: &self.energy,
            counters: self.counters,
            integral_check: self.integral_check,
            max_residual: self.max_residual(),
            max_newton_iterations: self.diagnostics.iter().map(|d| d.newton_iterations).max().unwrap_or(0),
        };
        serde_json::to_string_pretty(&side).expect("diagnostics serialize")
    }

    /// Write `<stem>.csv` and `<stem>.json` atomically.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        io::atomic_write(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        io::atomic_write(&dir.join(format!("{stem}.json")), self.diagnostics_json().as_bytes())
    }
}

/// The operator actually seen by a step: `A(t, u + F_n) + c·u`.
#[derive(Clone, Copy)]
pub(crate) struct StepSystem<'a> {
    pub op: &'a OperatorModel,
    pub shift: Option<&'a [Vec<f64>]>,
    pub linear: f64,
}

impl<'a> StepSystem<'a> {
    pub fn plain(op: &'a OperatorModel) -> Self {
        StepSystem { op, shift: None, linear: 0.0 }
    }

    fn arg(&self, n: usize, u: &[f64]) -> Vec<f64> {
        match self.shift {
            Some(f) => u.iter().zip(&f[n]).map(|(a, b)| a + b).collect(),
            None => u.to_vec(),
        }
    }

    fn apply(&self, n: usize, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let mut a = self.op.apply(t, &self.arg(n, u))?;
        if self.linear != 0.0 {
            for (ai, ui) in a.iter_mut().zip(u) {
                *ai += self.linear * ui;
            }
        }
        Ok(a)
    }

    fn jacobian(&self, n: usize, t: f64, u: &[f64]) -> Result<Jacobian> {
        self.op.jacobian(t, &self.arg(n, u))
    }
}

/// Result of one implicit step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// False when Newton stopped without meeting the tolerance; `u` is then
    /// the best iterate found.
    pub converged: bool,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Newton for `w₀ v + Ã(t, u₀ + v) = rhs`.
#[allow(clippy::too_many_arguments)]
fn newton(
    sys: &StepSystem,
    step: usize,
    t: f64,
    w0: f64,
    rhs: &[f64],
    u0: &[f64],
    guess: Vec<f64>,
    opts: &NewtonOptions,
    counters: &mut OpCounters,
) -> Result<StepOutcome> {
    let op = sys.op;
    let eval = |v: &[f64], counters: &mut OpCounters| -> Result<(Vec<f64>, f64)> {
        let u: Vec<f64> = u0.iter().zip(v).map(|(a, b)| a + b).collect();
        let a = sys.apply(step, t, &u)?;
        counters.operator_evals += 1;
        let r: Vec<f64> = (0..v.len()).map(|i| w0 * v[i] + a[i] - rhs[i]).collect();
        // residuals below this level are indistinguishable from rounding
        let w0v: Vec<f64> = v.iter().map(|x| w0 * x).collect();
        let floor = 64.0 * f64::EPSILON * (op.h_norm(&w0v) + op.h_norm(&a) + op.h_norm(rhs)) / w0;
        Ok((r, floor))
    };
    let norm = |r: &[f64]| op.h_norm(r) / w0;
    let tol_at = |v: &[f64], floor: f64| {
        let u: Vec<f64> = u0.iter().zip(v).map(|(a, b)| a + b).collect();
        opts.abs_tol.max(opts.rel_tol * op.h_norm(&u)).max(floor)
    };

    let mut v = guess;
    let (mut r, mut floor) = eval(&v, counters)?;
    let mut rn = norm(&r);
    for it in 0..opts.max_iter {
        if !rn.is_finite() {
            break;
        }
        if rn <= tol_at(&v, floor) {
            return Ok(StepOutcome { u: u0.iter().zip(&v).map(|(a, b)| a + b).collect(), iterations: it, residual: rn, converged: true });
        }
        let u: Vec<f64> = u0.iter().zip(&v).map(|(a, b)| a + b).collect();
        let jac = sys.jacobian(step, t, &u)?;
        counters.jacobian_evals += 1;
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = jac.shifted_solve(w0 + sys.linear, &neg).ok_or(Error::SingularJacobian { step })?;
        counters.linear_solves += 1;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut trial = v.clone();
            axpy(&mut trial, lambda, &delta);
            let (rt, ft) = eval(&trial, counters)?;
            let rtn = norm(&rt);
            if rtn.is_finite() && (rtn <= (1.0 - 1e-4 * lambda) * rn || rtn <= tol_at(&trial, ft)) {
                v = trial;
                r = rt;
                rn = rtn;
                floor = ft;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = rn <= tol_at(&v, floor);
    Ok(StepOutcome {
        u: u0.iter().zip(&v).map(|(a, b)| a + b).collect(),
        iterations: opts.max_iter,
        residual: rn,
        converged,
    })
}

/// One implicit step from the history `u₀ … u_{n-1}`.
///
/// Solves `w₀(u_n - u₀) + A(t_n, u_n) = f_n - Σ_{j=1}^{n} w_j (u_{n-j} - u₀)`
/// by damped Newton with the analytic Jacobian `w₀I + ∂A`.
pub fn step(scheme: &MemoryScheme, op: &OperatorModel, history: &[Vec<f64>], t_n: f64, f_n: &[f64], opts: &NewtonOptions) -> Result<StepOutcome> {
    let n = history.len();
    if n == 0 {
        return Err(Error::ParamOutOfRange("history must contain u0".into()));
    }
    if n > scheme.n {
        return Err(Error::HistoryTooLong { len: n, max: scheme.n });
    }
    let w0 = scheme.w0();
    if !(w0 > 0.0) {
        return Err(Error::ParamOutOfRange(format!("scheme weight w0 = {w0} must be positive")));
    }
    let d = op.dim();
    for u in history {
        if u.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: u.len() });
        }
    }
    if f_n.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: f_n.len() });
    }
    let u0 = &history[0];
    let mut rhs = f_n.to_vec();
    for j in 1..=n {
        let w = scheme.weights[j];
        for i in 0..d {
            rhs[i] -= w * (history[n - j][i] - u0[i]);
        }
    }
    let guess = match opts.initial_guess {
        InitialGuess::Previous => history[n - 1].iter().zip(u0).map(|(a, b)| a - b).collect(),
        InitialGuess::Zero => vec![0.0; d],
    };
    let mut counters = OpCounters::default();
    newton(&StepSystem::plain(op), n, t_n, w0, &rhs, u0, guess, opts, &mut counters)
}

/// March the step equation over the whole grid.
pub(crate) fn integrate(
    scheme: &MemoryScheme,
    sys: &StepSystem,
    u0: &[f64],
    forcing: &dyn Fn(usize, f64) -> Vec<f64>,
    opts: &NewtonOptions,
) -> Result<Trajectory> {
    let op = sys.op;
    let d = op.dim();
    if u0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: u0.len() });
    }
    let w0 = scheme.w0();
    if !(w0 > 0.0) {
        return Err(Error::ParamOutOfRange(format!("scheme weight w0 = {w0} must be positive")));
    }
    let nsteps = scheme.n;
    let tau = scheme.tau;
    let mut counters = OpCounters::default();
    let mut vs: Vec<Vec<f64>> = vec![vec![0.0; d]];
    let mut states = vec![u0.to_vec()];
    let mut diagnostics = Vec::with_capacity(nsteps);
    let mut memory_seconds = 0.0;
    for n in 1..=nsteps {
        let t = n as f64 * tau;
        let clock = Instant::now();
        let mut rhs = forcing(n, t);
        if rhs.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: rhs.len() });
        }
        // v₀ = 0 contributes nothing
        for j in 1..n {
            axpy(&mut rhs, -scheme.weights[j], &vs[n - j]);
        }
        let mem_terms = (n - 1) as u64;
        counters.memory_terms += mem_terms;
        memory_seconds += clock.elapsed().as_secs_f64();
        let guess = match opts.initial_guess {
            InitialGuess::Previous => vs[n - 1].clone(),
            InitialGuess::Zero => vec![0.0; d],
        };
        let out = newton(sys, n, t, w0, &rhs, u0, guess, opts, &mut counters)?;
        if !out.converged {
            return Err(Error::NewtonDiverged { step: n, residual: out.residual, iterations: out.iterations });
        }
        vs.push(out.u.iter().zip(u0).map(|(a, b)| a - b).collect());
        diagnostics.push(StepDiagnostics { residual: out.residual, newton_iterations: out.iterations, converged: true, memory_terms: mem_terms });
        states.push(out.u);
    }
    let times: Vec<f64> = (0..=nsteps).map(|n| n as f64 * tau).collect();
    let h_norms: Vec<f64> = states.iter().map(|u| op.h_norm(u)).collect();
    let v_norms = states.iter().map(|u| op.v_norm(u)).collect();
    let energy = h_norms.iter().map(|h| 0.5 * h * h).collect();
    Ok(Trajectory { times, states, diagnostics, h_norms, v_norms, energy, counters, integral_check: None, memory_seconds })
}

/// Solve on `[0, τN]` with the configured strategy; reports the integral-form
/// residual whenever a conjugate kernel is available.
pub fn run(kernel: &KernelSpec, op: &OperatorModel, u0: &[f64], forcing: ForcingFn, cfg: &SolveConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let scheme = make_scheme(kernel, cfg.backend, cfg.tau, cfg.n)?;
    let mut traj = match cfg.strategy {
        Strategy::NewtonPerStep => {
            let f = forcing.clone();
            integrate(&scheme, &StepSystem::plain(op), u0, &move |_, t| f(t), &cfg.newton)?
        }
        Strategy::WeightedFixedPoint => weighted_fixed_point_with(kernel, &scheme, op, u0, forcing.clone(), cfg)?.0,
    };
    traj.integral_check = Some(integral_form_check(kernel, cfg.backend, op, &traj, &forcing));
    Ok(traj)
}

/// Like [`run`] with a prebuilt memory scheme (no integral-form residual).
pub fn run_with_scheme(scheme: &MemoryScheme, op: &OperatorModel, u0: &[f64], forcing: ForcingFn, opts: &NewtonOptions) -> Result<Trajectory> {
    integrate(scheme, &StepSystem::plain(op), u0, &move |_, t| forcing(t), opts)
}

/// First and second primitives of `k̃` on the grid `mτ`, `m = 0..=n`.
fn conjugate_primitives(kernel: &KernelSpec, tau: f64, n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    use rayon::prelude::*;
    if kernel.has_closed_conjugate() {
        let kt = |s: f64| kernel.k_tilde(s).unwrap_or(f64::NAN);
        let cells: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|m| {
                let (a, b) = (m as f64 * tau, (m + 1) as f64 * tau);
                let p1 = tanh_sinh(|x, _, _| kt(x), a, b, 1e-12).value;
                // ∫_a^b (b - s) k̃(s) ds
                let p2 = tanh_sinh(|x, _, db| db * kt(x), a, b, 1e-12).value;
                (p1, p2)
            })
            .collect();
        let mut p1 = vec![0.0; n + 1];
        let mut p2 = vec![0.0; n + 1];
        for m in 0..n {
            p1[m + 1] = p1[m] + cells[m].0;
            // P2(b) = P2(a) + τ P1(a) + ∫_a^b (b - s) k̃(s) ds
            p2[m + 1] = p2[m] + tau * p1[m] + cells[m].1;
        }
        return (p1.iter().chain(&p2).all(|v| v.is_finite())).then_some((p1, p2));
    }
    let (c, _) = sonine_conjugate(kernel, tau, n.max(2)).ok()?;
    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    for m in 0..n {
        p1[m + 1] = p1[m] + tau * c[m];
        p2[m + 1] = p2[m] + tau * p1[m] + 0.5 * tau * tau * c[m];
    }
    Some((p1, p2))
}

/// Post-hoc check of the integral form `u - u₀ = k̃ ∗ (f - A(·, u))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralFormCheck {
    /// `max_n ‖u_n - u₀ - Σ_j ω_{n-j} r_j‖_H`, with `ω` the convolution
    /// quadrature of `k̃` (symbol `1/ψ`) and `r = f - A(u)`. Only for the
    /// convolution-quadrature backend.
    pub cq_residual: Option<f64>,
    /// Bound on `cq_residual` implied by the per-step Newton residuals.
    pub cq_tolerance: Option<f64>,
    /// Relative residual with exact cell integrals of `k̃` and the integrand
    /// interpolated linearly in time: a consistency measure, `O(τ^β)` for
    /// solutions behaving like `t^β` near zero.
    pub consistency: Option<f64>,
}

impl IntegralFormCheck {
    pub fn pass(&self) -> bool {
        match (self.cq_residual, self.cq_tolerance) {
            (Some(r), Some(t)) => r <= t,
            _ => true,
        }
    }
}

fn integrand(op: &OperatorModel, traj: &Trajectory, forcing: &ForcingFn) -> Option<Vec<Vec<f64>>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            let a = op.apply(t, u).ok()?;
            Some(forcing(t).iter().zip(&a).map(|(f, a)| f - a).collect())
        })
        .collect()
}

/// Relative accuracy of contour-computed CQ weights.
const CQ_WEIGHT_ACCURACY: f64 = 1e-8;

/// Evaluate [`IntegralFormCheck`] for a finished run.
pub fn integral_form_check(kernel: &KernelSpec, backend: Backend, op: &OperatorModel, traj: &Trajectory, forcing: &ForcingFn) -> IntegralFormCheck {
    let mut out = IntegralFormCheck { cq_residual: None, cq_tolerance: None, consistency: None };
    let n = traj.diagnostics.len();
    if n == 0 {
        return out;
    }
    let Some(r) = integrand(op, traj, forcing) else { return out };
    let tau = traj.times[1] - traj.times[0];
    let u0 = &traj.states[0];
    let d = u0.len();
    if backend == Backend::CqBackwardEuler {
        if let (Ok(om), Ok(w)) = (cq_conjugate_weights(kernel, tau, n), crate::memory::cq_weights(kernel, tau, n)) {
            // discrete equation holds for n ≥ 1 only, so r₀ is replaced by 0
            let mut comps = vec![vec![0.0; n + 1]; d];
            for (i, comp) in comps.iter_mut().enumerate() {
                let series: Vec<f64> = (0..=n).map(|k| if k == 0 { 0.0 } else { r[k][i] }).collect();
                let conv = crate::fftconv::convolve(&om, &series);
                for k in 0..=n {
                    comp[k] = traj.states[k][i] - u0[i] - conv[k];
                }
            }
            let worst = (1..=n)
                .map(|k| op.h_norm(&(0..d).map(|i| comps[i][k]).collect::<Vec<_>>()))
                .fold(0.0, f64::max);
            let w0 = w.w0();
            let om_sum: f64 = om.iter().map(|v| v.abs()).sum();
            let r_scale = r.iter().skip(1).map(|x| op.h_norm(x)).fold(0.0, f64::max);
            let v_scale = traj.states.iter().map(|u| op.h_norm(&u.iter().zip(u0).map(|(a, b)| a - b).collect::<Vec<_>>())).fold(0.0, f64::max);
            let newton = traj.max_residual() * w0;
            // Newton residuals, plus the contour-weight accuracy certified by
            // the aliasing check (relative 1e-8) acting on both sequences
            let tol = om_sum * newton + CQ_WEIGHT_ACCURACY * (om_sum * r_scale + v_scale);
            out.cq_residual = Some(worst);
            out.cq_tolerance = Some(tol);
        }
    }
    if let Some((p1, p2)) = conjugate_primitives(kernel, tau, n) {
        // hat-function weights for cell offset m: left and right node
        let right: Vec<f64> = (0..n).map(|m| (p2[m + 1] - p2[m]) / tau - p1[m]).collect();
        let left: Vec<f64> = (0..n).map(|m| p1[m + 1] - p1[m] - right[m]).collect();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 1..=n {
            let mut res: Vec<f64> = traj.states[k].iter().zip(u0).map(|(a, b)| a - b).collect();
            scale = scale.max(op.h_norm(&res));
            for j in 1..=k {
                let m = k - j;
                axpy(&mut res, -left[m], &r[j - 1]);
                axpy(&mut res, -right[m], &r[j]);
            }
            worst = worst.max(op.h_norm(&res));
        }
        out.consistency = Some(if scale > 0.0 { worst / scale } else { worst });
    }
    out
}

/// Smallest `γ` (doubling, then bisection) with `ψ(γ) ≥ 2C₁·1.25`.
pub fn choose_gamma(kernel: &KernelSpec, c1: f64) -> Result<f64> {
    if !(c1 >= 0.0) {
        return Err(Error::ParamOutOfRange(format!("C1 must be nonnegative, got {c1}")));
    }
    if c1 == 0.0 {
        return Ok(1.0);
    }
    let target = 2.0 * c1 * 1.25;
    let cap = 2f64.powi(40);
    let (mut lo, mut hi) = (0.0, 1.0);
    while kernel.psi_real(hi)? < target {
        if hi >= cap {
            return Err(Error::NotAttainable { sup: kernel.psi_real(cap)?, needed: 2.0 * c1 });
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kernel.psi_real(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(Σ_n ‖a_n - b_n‖²_H e^{-γ t_n} τ)^{1/2}` over `n ≥ 1`.
pub fn weighted_distance(op: &OperatorModel, a: &Trajectory, b: &Trajectory, gamma: f64) -> f64 {
    weighted_norm(op, &a.times, |n| a.states[n].iter().zip(&b.states[n]).map(|(x, y)| x - y).collect(), gamma)
}

fn weighted_norm(op: &OperatorModel, times: &[f64], diff: impl Fn(usize) -> Vec<f64>, gamma: f64) -> f64 {
    let tau = times[1] - times[0];
    (1..times.len())
        .map(|n| {
            let h = op.h_norm(&diff(n));
            h * h * (-gamma * times[n]).exp() * tau
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub gamma: f64,
    pub psi_gamma: f64,
    /// `2C₁/ψ(γ)`.
    pub bound: f64,
    pub sweeps: usize,
    /// Weighted norms of successive `g` increments.
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Largest ratio of successive increments above the noise floor.
    pub rho_hat: f64,
    pub converged: bool,
}

/// Iterate `g ↦ C₁ u_g` where `u_g` solves `∂(k ∗ (u - u₀)) + A(u) + C₁u = g + f`.
pub fn weighted_fixed_point(kernel: &KernelSpec, op: &OperatorModel, u0: &[f64], forcing: ForcingFn, cfg: &SolveConfig) -> Result<(Trajectory, FixedPointReport)> {
    cfg.validate()?;
    let scheme = make_scheme(kernel, cfg.backend, cfg.tau, cfg.n)?;
    weighted_fixed_point_with(kernel, &scheme, op, u0, forcing, cfg)
}

fn weighted_fixed_point_with(
    kernel: &KernelSpec,
    scheme: &MemoryScheme,
    op: &OperatorModel,
    u0: &[f64],
    forcing: ForcingFn,
    cfg: &SolveConfig,
) -> Result<(Trajectory, FixedPointReport)> {
    let c1 = op.constants.c1;
    let gamma = match cfg.fixedpoint.gamma {
        Some(g) => g,
        None => choose_gamma(kernel, c1)?,
    };
    let psi_gamma = kernel.psi_real(gamma)?;
    if c1 > 0.0 && !(psi_gamma > 2.0 * c1) {
        return Err(Error::NotAttainable { sup: psi_gamma, needed: 2.0 * c1 });
    }
    let bound = 2.0 * c1 / psi_gamma;
    let sys = StepSystem { op, shift: None, linear: c1 };
    let d = op.dim();
    let n = scheme.n;
    let mut g: Vec<Vec<f64>> = vec![vec![0.0; d]; n + 1];
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut rho_hat: f64 = 0.0;
    let mut violations = 0;
    let mut counters = OpCounters::default();
    let tol = cfg.fixedpoint.sweep_tol;
    for sweep in 1..=cfg.fixedpoint.max_sweeps {
        let gg = &g;
        let f = forcing.clone();
        let traj = integrate(scheme, &sys, u0, &move |k, t| f(t).iter().zip(&gg[k]).map(|(a, b)| a + b).collect(), &cfg.newton)?;
        counters.add(&traj.counters);
        let next: Vec<Vec<f64>> = traj.states.iter().map(|u| u.iter().map(|x| c1 * x).collect()).collect();
        let inc = weighted_norm(op, &traj.times, |k| next[k].iter().zip(&g[k]).map(|(a, b)| a - b).collect(), gamma);
        if let Some(&prev) = increments.last() {
            let ratio: f64 = if prev > 0.0 { inc / prev } else { 0.0 };
            ratios.push(ratio);
            if prev > 10.0 * tol {
                rho_hat = rho_hat.max(ratio);
                if ratio > bound + 0.1 {
                    violations += 1;
                    if violations >= 3 {
                        return Err(Error::ContractionViolated { measured: ratio, bound });
                    }
                } else {
                    violations = 0;
                }
            }
        }
        increments.push(inc);
        g = next;
        if inc < tol || c1 == 0.0 {
            let mut traj = traj;
            traj.counters = counters;
            // Each sweep solves a shifted problem; report residuals of the actual equation.
            let true_res = equation_residuals(scheme, op, &traj, &forcing)?;
            for (diag, r) in traj.diagnostics.iter_mut().zip(true_res) {
                diag.residual = r;
            }
            let report = FixedPointReport { gamma, psi_gamma, bound, sweeps: sweep, increments, ratios, rho_hat, converged: true };
            return Ok((traj, report));
        }
    }
    Err(Error::ContractionViolated { measured: rho_hat, bound })
}

/// `‖w ∗ (u - u₀)(t_n) + A(t_n, u_n) - f(t_n)‖_H / w₀` for `n = 1..=N`.
fn equation_residuals(scheme: &MemoryScheme, op: &OperatorModel, traj: &Trajectory, forcing: &ForcingFn) -> Result<Vec<f64>> {
    let d = op.dim();
    let u0 = &traj.states[0];
    let mut mem = vec![vec![0.0; d]; traj.states.len()];
    for i in 0..d {
        let v: Vec<f64> = traj.states.iter().map(|u| u[i] - u0[i]).collect();
        for (n, m) in apply_memory_full(scheme, &v)?.into_iter().enumerate() {
            mem[n][i] = m;
        }
    }
    let w0 = scheme.w0();
    (1..traj.states.len())
        .map(|n| {
            let t = traj.times[n];
            let a = op.apply(t, &traj.states[n])?;
            let f = forcing(t);
            let r: Vec<f64> = (0..d).map(|i| mem[n][i] + a[i] - f[i]).collect();
            Ok(op.h_norm(&r) / w0)
        })
        .collect()
}
