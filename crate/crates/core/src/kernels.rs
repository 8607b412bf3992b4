//! Memory kernels `k`, their Sonine conjugates `k̃`, Laplace transforms and
//! Bernstein symbols `ψ(λ) = λ·Lk(λ)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fftconv;
use crate::quadrature::{exp_sinh, gauss_kronrod, tanh_sinh};
use crate::special::{cln_1p, cpow, e1, e1_scaled, gamma, gamma_lr, lower_gamma_complex};

/// Kernel family and parameters, as written in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `k(t) = t^{-β}/Γ(1-β)`.
    Caputo { beta: f64 },
    /// `k(t) = 1_{(0,δ]}(t) (t^{-β} - δ^{-β})/Γ(1-β)`.
    TruncatedStable { beta: f64, delta: f64 },
    /// `k(t) = ∫₀¹ t^{β-1}/Γ(β) dβ`.
    DistributedOrder,
    /// `k(t) = t^{-β} e^{-λt}/Γ(1-β)`.
    ExpWeighted { beta: f64, lambda: f64 },
    /// `k(t) = a Γ(0, bt)`.
    GammaSub { a: f64, b: f64 },
    /// `k(t) = Σ a_j t^{-β_j}/Γ(1-β_j)` with `terms = [[a_j, β_j], ...]`.
    MultiTerm { terms: Vec<[f64; 2]> },
    /// First-order limit: `k = δ₀`, `ψ(λ) = λ`.
    Classical,
    /// User kernel, tabulated in a two-column CSV file `t,k`.
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<String>,
    },
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied kernel given by closures.
#[derive(Clone)]
pub struct CustomKernel {
    pub label: String,
    pub k: ScalarFn,
    /// Exact primitive `K(t) = ∫₀ᵗ k`; when absent it is computed by quadrature.
    pub primitive: Option<ScalarFn>,
    pub k_tilde: Option<ScalarFn>,
    pub singular_at_zero: bool,
}

#[derive(Clone)]
struct Term {
    a: f64,
    beta: f64,
    g1: f64,
    g2: f64,
    g3: f64,
}

impl Term {
    fn new(a: f64, beta: f64) -> Self {
        Term {
            a,
            beta,
            g1: 1.0 / gamma(1.0 - beta),
            g2: 1.0 / gamma(2.0 - beta),
            g3: 1.0 / gamma(3.0 - beta),
        }
    }
}

#[derive(Clone)]
enum Repr {
    Power(Vec<Term>),
    Truncated { beta: f64, delta: f64, g1: f64 },
    DistributedOrder,
    ExpWeighted { beta: f64, mu: f64, g1: f64, gb: f64 },
    GammaSub { a: f64, b: f64 },
    Classical,
    Custom(CustomKernel),
}

/// An admissible kernel with its evaluators.
#[derive(Clone)]
pub struct KernelSpec {
    family: Family,
    repr: Repr,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KernelSpec({})", self.id())
    }
}

fn check_beta(name: &str, beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange(format!("{name} = {beta} must lie in (0, 1)")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange(format!("{name} = {v} must be positive")))
    }
}

/// Build a kernel from a family description, validating parameters.
pub fn make_kernel(family: &Family) -> Result<KernelSpec> {
    let repr = match family {
        Family::Caputo { beta } => {
            check_beta("beta", *beta)?;
            Repr::Power(vec![Term::new(1.0, *beta)])
        }
        Family::TruncatedStable { beta, delta } => {
            check_beta("beta", *beta)?;
            check_positive("delta", *delta)?;
            Repr::Truncated { beta: *beta, delta: *delta, g1: 1.0 / gamma(1.0 - beta) }
        }
        Family::DistributedOrder => Repr::DistributedOrder,
        Family::ExpWeighted { beta, lambda } => {
            check_beta("beta", *beta)?;
            check_positive("lambda", *lambda)?;
            Repr::ExpWeighted {
                beta: *beta,
                mu: *lambda,
                g1: 1.0 / gamma(1.0 - beta),
                gb: 1.0 / gamma(*beta),
            }
        }
        Family::GammaSub { a, b } => {
            check_positive("a", *a)?;
            check_positive("b", *b)?;
            Repr::GammaSub { a: *a, b: *b }
        }
        Family::MultiTerm { terms } => {
            if terms.is_empty() {
                return Err(Error::ParamOutOfRange("multi_term needs at least one term".into()));
            }
            let mut prev = 0.0;
            let mut out = Vec::with_capacity(terms.len());
            for (j, [a, beta]) in terms.iter().enumerate() {
                check_positive(&format!("a_{}", j + 1), *a)?;
                check_beta(&format!("beta_{}", j + 1), *beta)?;
                if *beta <= prev {
                    return Err(Error::ParamOutOfRange(format!(
                        "exponents must be strictly increasing: beta_{} = {beta} <= {prev}",
                        j + 1
                    )));
                }
                prev = *beta;
                out.push(Term::new(*a, *beta));
            }
            Repr::Power(out)
        }
        Family::Classical => Repr::Classical,
        Family::Custom { file: Some(path) } => return load_tabulated(Path::new(path)),
        Family::Custom { file: None } => {
            return Err(Error::ParamOutOfRange(
                "custom kernel needs a data file (or use KernelSpec::custom)".into(),
            ))
        }
    };
    Ok(KernelSpec { family: family.clone(), repr })
}

/// Read a tabulated kernel from a CSV file with columns `t,k`.
///
/// Values are interpolated linearly, held constant before the first and
/// after the last sample. The primitive is exact for the interpolant.
pub fn load_tabulated(path: &Path) -> Result<KernelSpec> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Config(format!("{}: {:?}", path.display(), other)),
        })?;
    let mut ts = Vec::new();
    let mut ks = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Error::Config(format!("{}: line {} needs two columns", path.display(), line + 1)));
        }
        let (Ok(t), Ok(k)) = (rec[0].parse::<f64>(), rec[1].parse::<f64>()) else {
            if line == 0 {
                continue; // header
            }
            return Err(Error::Config(format!("{}: line {} is not numeric", path.display(), line + 1)));
        };
        ts.push(t);
        ks.push(k);
    }
    let label = format!("custom({})", path.display());
    let mut spec = tabulated(label, ts, ks)?;
    spec.family = Family::Custom { file: Some(path.display().to_string()) };
    Ok(spec)
}

/// Kernel interpolated linearly through samples `(t_i, k_i)`.
pub fn tabulated(label: String, ts: Vec<f64>, ks: Vec<f64>) -> Result<KernelSpec> {
    if ts.len() < 2 || ts.len() != ks.len() {
        return Err(Error::ParamOutOfRange("tabulated kernel needs at least two (t, k) rows".into()));
    }
    if ts[0] < 0.0 || ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::ParamOutOfRange("tabulated times must be nonnegative and strictly increasing".into()));
    }
    if ks.iter().chain(&ts).any(|v| !v.is_finite()) {
        return Err(Error::ParamOutOfRange("tabulated values must be finite".into()));
    }
    // cumulative integral at each node, with constant extension on [0, t_0]
    let mut cum = vec![ks[0] * ts[0]];
    for i in 1..ts.len() {
        let area = 0.5 * (ks[i] + ks[i - 1]) * (ts[i] - ts[i - 1]);
        cum.push(cum[i - 1] + area);
    }
    let ts = Arc::new(ts);
    let ks = Arc::new(ks);
    let cum = Arc::new(cum);
    let (t1, k1) = (Arc::clone(&ts), Arc::clone(&ks));
    let eval = move |t: f64| -> f64 {
        let n = t1.len();
        if t <= t1[0] {
            return k1[0];
        }
        if t >= t1[n - 1] {
            return k1[n - 1];
        }
        let i = t1.partition_point(|&x| x <= t);
        let w = (t - t1[i - 1]) / (t1[i] - t1[i - 1]);
        k1[i - 1] * (1.0 - w) + k1[i] * w
    };
    let eval = Arc::new(eval);
    let e2 = Arc::clone(&eval);
    let prim = move |t: f64| -> f64 {
        let n = ts.len();
        if t <= 0.0 {
            return 0.0;
        }
        if t <= ts[0] {
            return ks[0] * t;
        }
        if t >= ts[n - 1] {
            return cum[n - 1] + ks[n - 1] * (t - ts[n - 1]);
        }
        let i = ts.partition_point(|&x| x <= t);
        cum[i - 1] + 0.5 * (ks[i - 1] + e2(t)) * (t - ts[i - 1])
    };
    Ok(KernelSpec::custom(CustomKernel {
        label,
        k: eval,
        primitive: Some(Arc::new(prim)),
        k_tilde: None,
        singular_at_zero: false,
    }))
}

fn cexpm1_neg(z: Complex64) -> Complex64 {
    // 1 - e^{-z}
    if z.norm() < 1e-5 {
        z - z * z / 2.0 + z * z * z / 6.0
    } else {
        Complex64::new(1.0, 0.0) - (-z).exp()
    }
}

/// `(λ - 1)/ln λ`, with the removable singularity at `λ = 1`.
fn dist_order_psi(lam: Complex64) -> Complex64 {
    let w = lam - 1.0;
    if w.norm() < 1e-3 {
        // w / ln(1+w) = 1 + w/2 - w²/12 + w³/24 - 19w⁴/720
        let w2 = w * w;
        Complex64::new(1.0, 0.0) + w / 2.0 - w2 / 12.0 + w2 * w / 24.0 - w2 * w2 * (19.0 / 720.0)
    } else {
        w / cln_1p(w)
    }
}

/// `∫₀¹ β t^{β-1+shift} / Γ(1+β+shift) dβ`-type integrals in the
/// distributed-order family: returns `∫₀¹ w(β) t^{β+p} / Γ(1+β+q) dβ`.
fn dist_order_integral(t: f64, p: f64, q: f64, weight: impl Fn(f64) -> f64) -> f64 {
    let lt = t.ln();
    if lt < -1.0 {
        // substitute x = β·(-ln t) so the mass near β = 0 is resolved
        let l = -lt;
        let upper = l.min(60.0);
        let r = gauss_kronrod(
            |x: f64| {
                let b = x / l;
                weight(b) * (-x).exp() / gamma(1.0 + b + q)
            },
            0.0,
            upper,
            0.0,
            1e-14,
            400,
        );
        t.powf(p) * r.value / l
    } else {
        let r = gauss_kronrod(
            |b: f64| weight(b) * (b * lt).exp() / gamma(1.0 + b + q),
            0.0,
            1.0,
            0.0,
            1e-14,
            400,
        );
        t.powf(p) * r.value
    }
}

fn dist_order_k(t: f64) -> f64 {
    // t^{β-1}/Γ(β) = β t^{β-1}/Γ(1+β)
    dist_order_integral(t, -1.0, 0.0, |b| b)
}

fn dist_order_primitive(t: f64) -> f64 {
    dist_order_integral(t, 0.0, 0.0, |_| 1.0)
}

fn dist_order_primitive2(t: f64) -> f64 {
    dist_order_integral(t, 1.0, 1.0, |_| 1.0)
}

fn dist_order_levy_density(t: f64) -> f64 {
    // -k'(t) = (1-β) t^{β-2}/Γ(β) = β(1-β) t^{β-2}/Γ(1+β)
    dist_order_integral(t, -2.0, 0.0, |b| b * (1.0 - b))
}

impl KernelSpec {
    /// Wrap a closure-defined kernel.
    pub fn custom(kernel: CustomKernel) -> Self {
        KernelSpec { family: Family::Custom { file: None }, repr: Repr::Custom(kernel) }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Short human-readable identifier such as `caputo(beta=0.5)`.
    pub fn id(&self) -> String {
        match &self.family {
            Family::Caputo { beta } => format!("caputo(beta={beta})"),
            Family::TruncatedStable { beta, delta } => format!("truncated_stable(beta={beta},delta={delta})"),
            Family::DistributedOrder => "distributed_order".into(),
            Family::ExpWeighted { beta, lambda } => format!("exp_weighted(beta={beta},lambda={lambda})"),
            Family::GammaSub { a, b } => format!("gamma_sub(a={a},b={b})"),
            Family::MultiTerm { terms } => {
                let parts: Vec<String> = terms.iter().map(|[a, b]| format!("{a}*{b}")).collect();
                format!("multi_term({})", parts.join(","))
            }
            Family::Classical => "classical".into(),
            Family::Custom { .. } => match &self.repr {
                Repr::Custom(c) => c.label.clone(),
                _ => "custom".into(),
            },
        }
    }

    pub fn is_classical(&self) -> bool {
        matches!(self.repr, Repr::Classical)
    }

    /// True iff `k(0+) = ∞` (an atom at zero counts as singular).
    pub fn singular_at_zero(&self) -> bool {
        match &self.repr {
            Repr::Custom(c) => c.singular_at_zero,
            _ => true,
        }
    }

    /// Kernel value `k(t)` for `t > 0`.
    pub fn k(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        if t == 0.0 && self.singular_at_zero() {
            return f64::INFINITY;
        }
        match &self.repr {
            Repr::Power(terms) => terms.iter().map(|p| p.a * p.g1 * t.powf(-p.beta)).sum(),
            Repr::Truncated { beta, delta, g1 } => {
                if t >= *delta {
                    0.0
                } else {
                    g1 * (t.powf(-beta) - delta.powf(-beta))
                }
            }
            Repr::DistributedOrder => dist_order_k(t),
            Repr::ExpWeighted { beta, mu, g1, .. } => g1 * t.powf(-beta) * (-mu * t).exp(),
            Repr::GammaSub { a, b } => a * e1(b * t),
            Repr::Classical => 0.0,
            Repr::Custom(c) => (c.k)(t),
        }
    }

    /// Whether `K` is available in closed form (or exactly for tabulated data).
    pub fn has_exact_primitive(&self) -> bool {
        match &self.repr {
            Repr::Custom(c) => c.primitive.is_some(),
            _ => true,
        }
    }

    /// Primitive `K(t) = ∫₀ᵗ k(s) ds`.
    pub fn primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::Power(terms) => terms.iter().map(|p| p.a * p.g2 * t.powf(1.0 - p.beta)).sum(),
            Repr::Truncated { beta, delta, g1 } => {
                let m = t.min(*delta);
                g1 * (m.powf(1.0 - beta) / (1.0 - beta) - delta.powf(-beta) * m)
            }
            Repr::DistributedOrder => dist_order_primitive(t),
            Repr::ExpWeighted { beta, mu, .. } => mu.powf(beta - 1.0) * gamma_lr(1.0 - beta, mu * t),
            Repr::GammaSub { a, b } => a * (t * e1(b * t) - (-b * t).exp_m1() / b),
            Repr::Classical => 1.0,
            Repr::Custom(c) => match &c.primitive {
                Some(p) => p(t),
                None => tanh_sinh(|_, da, _| (c.k)(da), 0.0, t, 1e-12).value,
            },
        }
    }

    /// Second primitive `∫₀ᵗ K(s) ds`.
    pub fn primitive2(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.repr {
            Repr::Power(terms) => terms.iter().map(|p| p.a * p.g3 * t.powf(2.0 - p.beta)).sum(),
            Repr::Truncated { beta, delta, g1 } => {
                let m = t.min(*delta);
                let inner = g1 * (m.powf(2.0 - beta) / ((1.0 - beta) * (2.0 - beta)) - delta.powf(-beta) * m * m / 2.0);
                inner + self.primitive(*delta) * (t - m)
            }
            Repr::DistributedOrder => dist_order_primitive2(t),
            Repr::GammaSub { a, b } => {
                let bt = b * t;
                let em = (-bt).exp();
                a * (t * t * e1(bt) / 2.0 + (1.0 - em * (1.0 + bt)) / (2.0 * b * b) + t / b + (-bt).exp_m1() / (b * b))
            }
            Repr::Classical => t,
            _ => tanh_sinh(|_, da, _| self.primitive(da), 0.0, t, 1e-12).value,
        }
    }

    /// Closed-form Sonine conjugate `k̃(t)` where one is known.
    pub fn k_tilde(&self, t: f64) -> Option<f64> {
        if t <= 0.0 {
            let limit = if self.is_classical() { 1.0 } else { f64::INFINITY };
            return self.k_tilde(1.0).map(|_| limit);
        }
        match &self.repr {
            Repr::Power(terms) if terms.len() == 1 && terms[0].a == 1.0 => {
                let b = terms[0].beta;
                Some(t.powf(b - 1.0) / gamma(b))
            }
            Repr::DistributedOrder => Some(e1_scaled(t)),
            Repr::ExpWeighted { beta, mu, gb, .. } => {
                let x = mu * t;
                Some(mu.powf(1.0 - beta) * (gamma_lr(*beta, x) + gb * x.powf(beta - 1.0) * (-x).exp()))
            }
            Repr::Classical => Some(1.0),
            Repr::Custom(c) => c.k_tilde.as_ref().map(|f| f(t)),
            _ => None,
        }
    }

    pub fn has_closed_conjugate(&self) -> bool {
        self.k_tilde(1.0).is_some()
    }

    /// Bernstein symbol `ψ(λ) = λ·Lk(λ)` for `Re λ ≥ 0`.
    pub fn psi(&self, lam: Complex64) -> Result<Complex64> {
        if lam.re < 0.0 || !lam.re.is_finite() || !lam.im.is_finite() {
            return Err(Error::SymbolEvaluationFailure { re: lam.re, im: lam.im });
        }
        if lam.norm() == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let v = match &self.repr {
            Repr::Power(terms) => terms.iter().map(|p| cpow(lam, p.beta) * p.a).sum(),
            Repr::Truncated { beta, delta, g1 } => {
                let z = lam * *delta;
                let lg = lower_gamma_complex(1.0 - beta, z);
                (cpow(lam, *beta) * lg - cexpm1_neg(z) * delta.powf(-beta)) * *g1
            }
            Repr::DistributedOrder => dist_order_psi(lam),
            Repr::ExpWeighted { beta, mu, .. } => lam * cpow(lam + *mu, beta - 1.0),
            Repr::GammaSub { a, b } => cln_1p(lam / *b) * *a,
            Repr::Classical => lam,
            Repr::Custom(c) => lam * custom_laplace(c, lam)?,
        };
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::SymbolEvaluationFailure { re: lam.re, im: lam.im })
        }
    }

    /// `ψ(λ)` for real `λ ≥ 0`.
    pub fn psi_real(&self, lam: f64) -> Result<f64> {
        Ok(self.psi(Complex64::new(lam, 0.0))?.re)
    }

    /// Laplace transform `Lk(λ)` for `Re λ > 0`.
    pub fn laplace_k(&self, lam: Complex64) -> Result<Complex64> {
        if let Repr::Custom(c) = &self.repr {
            return custom_laplace(c, lam);
        }
        if lam.norm() == 0.0 {
            return Err(Error::EvaluationFailure("Lk is evaluated only for Re λ > 0".into()));
        }
        Ok(self.psi(lam)? / lam)
    }

    /// Laplace transform of the conjugate, `Lk̃(λ) = 1/ψ(λ)`.
    pub fn laplace_k_tilde(&self, lam: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(1.0, 0.0) / self.psi(lam)?)
    }

    /// Lévy tail `M((s, ∞)) = k(s)`.
    pub fn levy_tail(&self, s: f64) -> f64 {
        self.k(s)
    }

    /// Density of the Lévy measure `M(dx) = -k'(x) dx`, when it is absolutely continuous.
    pub fn levy_density(&self, x: f64) -> Option<f64> {
        if x <= 0.0 {
            return None;
        }
        match &self.repr {
            Repr::Power(terms) => Some(terms.iter().map(|p| p.a * p.beta * p.g1 * x.powf(-1.0 - p.beta)).sum()),
            Repr::Truncated { beta, delta, g1 } => Some(if x > *delta { 0.0 } else { beta * g1 * x.powf(-1.0 - beta) }),
            Repr::DistributedOrder => Some(dist_order_levy_density(x)),
            Repr::ExpWeighted { beta, mu, g1, .. } => {
                Some(g1 * (beta * x.powf(-1.0 - beta) + mu * x.powf(-beta)) * (-mu * x).exp())
            }
            Repr::GammaSub { a, b } => Some(a * (-b * x).exp() / x),
            Repr::Classical | Repr::Custom(_) => None,
        }
    }

    /// Upper end of the support of `M`, if finite.
    fn levy_support_end(&self) -> Option<f64> {
        match &self.repr {
            Repr::Truncated { delta, .. } => Some(*delta),
            _ => None,
        }
    }
}

/// Laplace transform of a closure kernel by truncated quadrature on `[0, T_L]`
/// with `T_L` chosen so that `k(T_L)·|e^{-λT_L}/λ| < 1e-12`.
fn custom_laplace(c: &CustomKernel, lam: Complex64) -> Result<Complex64> {
    if lam.re < 0.0 || lam.norm() == 0.0 {
        return Err(Error::EvaluationFailure("custom Laplace transform needs Re λ ≥ 0, λ ≠ 0".into()));
    }
    let mut t_l = 1.0;
    loop {
        let bound = (c.k)(t_l).abs() * (-lam.re * t_l).exp() / lam.norm();
        if bound < 1e-12 {
            break;
        }
        t_l *= 2.0;
        if t_l > 1e7 {
            return Err(Error::EvaluationFailure(format!(
                "no truncation point with tail bound below 1e-12 at λ = {lam}"
            )));
        }
    }
    let head = tanh_sinh(|x, da, _| (-lam * x).exp() * (c.k)(da), 0.0, 1.0_f64.min(t_l), 1e-12);
    let mut total = head.value;
    let mut err = head.error;
    if t_l > 1.0 {
        let tail = gauss_kronrod(|x| (-lam * x).exp() * (c.k)(x), 1.0, t_l, 1e-14, 1e-12, 20_000);
        total += tail.value;
        err += tail.error;
    }
    if !(err <= 1e-8 * total.norm().max(1e-12)) {
        return Err(Error::EvaluationFailure(format!(
            "Laplace quadrature did not converge at λ = {lam} (error {err:.3e})"
        )));
    }
    Ok(total)
}

/// `∫(1 - e^{-λx}) M(dx)` by quadrature of the Lévy density.
pub fn levy_symbol(kernel: &KernelSpec, lam: f64) -> Result<f64> {
    if kernel.levy_density(1.0).is_none() {
        return Err(Error::UnsupportedKernel(format!("{} has no Lévy density", kernel.id())));
    }
    let dens = |x: f64| kernel.levy_density(x).unwrap_or(0.0);
    let one_minus = |x: f64| -(-lam * x).exp_m1();
    let split = kernel.levy_support_end().unwrap_or(1.0);
    let head = tanh_sinh(|_, da, _| one_minus(da) * dens(da), 0.0, split, 1e-13);
    let mut total = head.value;
    if kernel.levy_support_end().is_none() {
        let tail = exp_sinh(|x, _| one_minus(x) * dens(x), split, 1e-13);
        total += tail.value;
    }
    Ok(total)
}

/// How a Sonine conjugate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SonineMethod {
    ClosedForm,
    NumericVolterra,
}

/// Comparison of the Laplace transform of `k̃` against `1/ψ(λ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub lambda: f64,
    pub computed: f64,
    pub expected: f64,
    pub rel_error: f64,
}

/// Certificate for `(k̃ ∗ k)(t) = 1` on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SonineReport {
    pub kernel: String,
    pub grid: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_residual: f64,
    pub method: SonineMethod,
    pub tau: f64,
    pub laplace_checks: Vec<LaplaceCheck>,
}

impl SonineReport {
    pub fn max_laplace_error(&self) -> f64 {
        self.laplace_checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }
}

/// Residual tolerance for closed-form pairs.
pub const SONINE_TOL_CLOSED: f64 = 1e-6;
/// Residual tolerance for numerically solved conjugates.
pub const SONINE_TOL_NUMERIC: f64 = 1e-4;

/// Points where the Sonine residual is reported: log-spaced in `[max(τ, 1e-3), T]`.
fn residual_points(tau: f64, n: usize, count: usize) -> Vec<usize> {
    let t_end = tau * n as f64;
    let t_lo = tau.max(1e-3).min(t_end);
    let mut idx: Vec<usize> = (0..count)
        .map(|i| {
            let t = t_lo * (t_end / t_lo).powf(i as f64 / (count - 1).max(1) as f64);
            ((t / tau).round() as usize).clamp(1, n)
        })
        .collect();
    idx.dedup();
    idx
}

fn derivative(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x;
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// `(k̃ ∗ k)(t)` for a closed-form conjugate.
///
/// On `[0, t/2]` the singular factor `k` enters only through `K` (integration
/// by parts); on `[t/2, t]` the singular factor `k̃(t-s)` is resolved by the
/// double-exponential rule.
pub fn conjugate_convolution(kernel: &KernelSpec, k_tilde: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let a = 0.5 * t;
    let boundary = k_tilde(t - a) * kernel.primitive(a);
    let ibp = tanh_sinh(|_, da, _| derivative(k_tilde, t - da) * kernel.primitive(da), 0.0, a, 1e-12);
    let near = tanh_sinh(|x, _, db| k_tilde(db) * kernel.k(x), a, t, 1e-12);
    boundary + ibp.value + near.value
}

/// Compute `k̃` on the grid `t_j = jτ`, `j = 1..=n`, and certify the Sonine identity.
///
/// For numerically solved conjugates the returned values are the cell
/// constants on `(t_{j-1}, t_j]`.
pub fn sonine_conjugate(kernel: &KernelSpec, tau: f64, n: usize) -> Result<(Vec<f64>, SonineReport)> {
    if !(tau > 0.0) || n < 2 {
        return Err(Error::ParamOutOfRange(format!("Sonine grid needs tau > 0 and n >= 2 (tau={tau}, n={n})")));
    }
    if kernel.has_closed_conjugate() {
        let closed = closed_form_sonine(kernel, tau, n);
        if closed.1.max_residual <= SONINE_TOL_CLOSED {
            return Ok(closed);
        }
    }
    let (c, report) = numeric_sonine(kernel, tau, n)?;
    if report.max_residual > SONINE_TOL_NUMERIC {
        return Err(Error::IllConditioned { residual: report.max_residual, tol: SONINE_TOL_NUMERIC });
    }
    Ok((c, report))
}

fn closed_form_sonine(kernel: &KernelSpec, tau: f64, n: usize) -> (Vec<f64>, SonineReport) {
    let samples: Vec<f64> = (1..=n).map(|j| kernel.k_tilde(j as f64 * tau).unwrap()).collect();
    let idx = residual_points(tau, n, 96);
    let kt = |t: f64| kernel.k_tilde(t).unwrap();
    use rayon::prelude::*;
    let residual: Vec<f64> = idx
        .par_iter()
        .map(|&j| {
            if kernel.is_classical() {
                0.0
            } else {
                (conjugate_convolution(kernel, &kt, j as f64 * tau) - 1.0).abs()
            }
        })
        .collect();
    let max_residual = residual.iter().copied().fold(0.0, f64::max);
    let report = SonineReport {
        kernel: kernel.id(),
        grid: idx.iter().map(|&j| j as f64 * tau).collect(),
        residual,
        max_residual,
        method: SonineMethod::ClosedForm,
        tau,
        laplace_checks: Vec::new(),
    };
    (samples, report)
}

/// Collocation matrix entries `d_m = K((m+1)τ) - K(mτ)`.
pub(crate) fn cell_integrals(kernel: &KernelSpec, tau: f64, n: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let prim: Vec<f64> = (0..=n).into_par_iter().map(|m| kernel.primitive(m as f64 * tau)).collect();
    prim.windows(2).map(|w| w[1] - w[0]).collect()
}

pub(crate) fn numeric_sonine(kernel: &KernelSpec, tau: f64, n: usize) -> Result<(Vec<f64>, SonineReport)> {
    let d = cell_integrals(kernel, tau, n);
    let ones = vec![1.0; n];
    let c = fftconv::solve_lower_toeplitz(&d, &ones)?;
    let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some((j, v)) = c.iter().enumerate().find(|(_, v)| **v < -1e-8 * scale) {
        return Err(Error::NoConjugate(format!(
            "conjugate turns negative ({v:.3e}) at t = {:.4e}",
            (j + 1) as f64 * tau
        )));
    }
    // independent check of the triangular solve by a fresh convolution
    let conv = fftconv::convolve(&c, &d);
    let t_lo = 1e-3_f64.max(tau);
    let mut max_residual: f64 = 0.0;
    for (j, v) in conv.iter().take(n).enumerate() {
        if (j + 1) as f64 * tau >= t_lo * (1.0 - 1e-12) {
            max_residual = max_residual.max((v - 1.0).abs());
        }
    }
    let idx = residual_points(tau, n, 256);
    let residual: Vec<f64> = idx.iter().map(|&j| (conv[j - 1] - 1.0).abs()).collect();
    let mut laplace_checks = Vec::new();
    for lam in [1.0, 2.0] {
        let step = -(-lam * tau).exp_m1() / lam;
        let mut acc = 0.0;
        for (j, cj) in c.iter().enumerate() {
            acc += cj * (-lam * j as f64 * tau).exp();
        }
        let computed = acc * step;
        let expected = 1.0 / kernel.psi_real(lam)?;
        laplace_checks.push(LaplaceCheck { lambda: lam, computed, expected, rel_error: (computed / expected - 1.0).abs() });
    }
    let report = SonineReport {
        kernel: kernel.id(),
        grid: idx.iter().map(|&j| j as f64 * tau).collect(),
        residual,
        max_residual,
        method: SonineMethod::NumericVolterra,
        tau,
        laplace_checks,
    };
    Ok((c, report))
}

/// One sub-condition of the admissibility check.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConditionRecord {
    pub condition: String,
    pub pass: bool,
    pub worst_point: f64,
    pub worst_value: f64,
}

/// Result of [`verify_kernel_conditions`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelConditionReport {
    pub kernel: String,
    pub singular_at_zero: bool,
    pub records: Vec<ConditionRecord>,
}

impl KernelConditionReport {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

/// Options for [`verify_kernel_conditions`].
#[derive(Clone, Copy, Debug)]
pub struct ConditionOptions {
    /// Relative slack for sign and monotonicity tests.
    pub tol: f64,
    /// Far point for the vanishing test.
    pub t_big: f64,
    /// `k(t_big)` must fall below `vanish_ratio · k(1)`.
    pub vanish_ratio: f64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions { tol: 1e-12, t_big: 1e12, vanish_ratio: 0.1 }
    }
}

/// Log-spaced points `a·(b/a)^{i/(n-1)}`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1).max(1) as f64)).collect()
}

/// Sampled checks of nonnegativity, monotonicity, vanishing at infinity,
/// local integrability and the Bernstein shape of `ψ`.
pub fn verify_kernel_conditions(kernel: &KernelSpec, grid: &[f64], opts: ConditionOptions) -> KernelConditionReport {
    let vals: Vec<f64> = grid.iter().map(|&t| kernel.k(t)).collect();
    let mut records = Vec::new();

    let (wi, wv) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    records.push(ConditionRecord {
        condition: "nonnegative".into(),
        pass: wv >= -opts.tol * scale && vals.iter().all(|v| !v.is_nan()),
        worst_point: grid.get(wi).copied().unwrap_or(f64::NAN),
        worst_value: wv,
    });

    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_t = f64::NAN;
    for i in 1..vals.len() {
        let rise = vals[i] - vals[i - 1];
        if rise > worst_rise {
            worst_rise = rise;
            worst_t = grid[i];
        }
    }
    records.push(ConditionRecord {
        condition: "non_increasing".into(),
        pass: worst_rise <= opts.tol * scale,
        worst_point: worst_t,
        worst_value: worst_rise,
    });

    let far = kernel.k(opts.t_big);
    let k1 = kernel.k(1.0);
    records.push(ConditionRecord {
        condition: "vanishing_at_infinity".into(),
        pass: far.is_finite() && far.abs() <= opts.vanish_ratio * k1.abs().max(f64::MIN_POSITIVE),
        worst_point: opts.t_big,
        worst_value: far,
    });

    let big_k = kernel.primitive(1.0);
    records.push(ConditionRecord {
        condition: "locally_integrable".into(),
        pass: big_k.is_finite() && big_k >= 0.0,
        worst_point: 1.0,
        worst_value: big_k,
    });

    let lams = log_grid(1e-2, 1e3, 41);
    match lams.iter().map(|&l| kernel.psi_real(l)).collect::<Result<Vec<f64>>>() {
        Ok(psi) => {
            let mut worst_drop = f64::NEG_INFINITY;
            let mut drop_at = f64::NAN;
            for i in 1..psi.len() {
                let drop = psi[i - 1] - psi[i];
                if drop > worst_drop {
                    worst_drop = drop;
                    drop_at = lams[i];
                }
            }
            let pscale = psi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            records.push(ConditionRecord {
                condition: "symbol_nondecreasing".into(),
                pass: psi[0] >= 0.0 && worst_drop <= 1e-12 * pscale,
                worst_point: drop_at,
                worst_value: worst_drop,
            });
            // concavity: secant slopes decrease on the log grid
            let mut worst = f64::NEG_INFINITY;
            let mut at = f64::NAN;
            for i in 2..psi.len() {
                let s1 = (psi[i - 1] - psi[i - 2]) / (lams[i - 1] - lams[i - 2]);
                let s2 = (psi[i] - psi[i - 1]) / (lams[i] - lams[i - 1]);
                let v = (s2 - s1) / s1.abs().max(f64::MIN_POSITIVE);
                if v > worst {
                    worst = v;
                    at = lams[i - 1];
                }
            }
            records.push(ConditionRecord {
                condition: "symbol_concave".into(),
                pass: worst <= 1e-9,
                worst_point: at,
                worst_value: worst,
            });
        }
        Err(_) => records.push(ConditionRecord {
            condition: "symbol_nondecreasing".into(),
            pass: false,
            worst_point: f64::NAN,
            worst_value: f64::NAN,
        }),
    }

    KernelConditionReport { kernel: kernel.id(), singular_at_zero: kernel.singular_at_zero(), records }
}

/// The kernels used throughout the test-suite and the CLI `verify` command.
pub fn catalogue() -> Vec<KernelSpec> {
    [
        Family::Caputo { beta: 0.25 },
        Family::Caputo { beta: 0.5 },
        Family::Caputo { beta: 0.75 },
        Family::TruncatedStable { beta: 0.5, delta: 1.0 },
        Family::DistributedOrder,
        Family::ExpWeighted { beta: 0.5, lambda: 1.0 },
        Family::GammaSub { a: 1.0, b: 1.0 },
        Family::MultiTerm { terms: vec![[1.0, 0.3], [1.0, 0.7]] },
        Family::Classical,
    ]
    .iter()
    .map(|f| make_kernel(f).expect("catalogue parameters are valid"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn kern(f: Family) -> KernelSpec {
        make_kernel(&f).unwrap()
    }

    #[test]
    fn caputo_value_at_one() {
        let k = kern(Family::Caputo { beta: 0.5 });
        assert_relative_eq!(k.k(1.0), 1.0 / std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(k.levy_tail(1.0), 0.564_189_583_547_756_3, max_relative = 1e-14);
    }

    #[test]
    fn parameter_validation_names_the_constraint() {
        let err = make_kernel(&Family::Caputo { beta: 1.2 }).unwrap_err();
        assert!(matches!(err, Error::ParamOutOfRange(ref m) if m.contains("beta")));
        assert!(make_kernel(&Family::GammaSub { a: -1.0, b: 1.0 }).is_err());
        assert!(make_kernel(&Family::TruncatedStable { beta: 0.5, delta: 0.0 }).is_err());
        assert!(make_kernel(&Family::MultiTerm { terms: vec![[1.0, 0.7], [1.0, 0.3]] }).is_err());
    }

    #[test]
    fn truncated_vanishes_past_cutoff() {
        let k = kern(Family::TruncatedStable { beta: 0.5, delta: 1.0 });
        assert_eq!(k.k(2.0), 0.0);
    }

    #[test]
    fn gamma_sub_tail_and_limit() {
        let k = kern(Family::GammaSub { a: 1.0, b: 1.0 });
        assert_relative_eq!(k.levy_tail(1.0), 0.219_383_934_395_520_3, max_relative = 1e-13);
        assert!(k.k(800.0) < 1e-300);
    }

    #[test]
    fn psi_examples() {
        let c = kern(Family::Caputo { beta: 0.5 });
        assert_relative_eq!(c.psi_real(4.0).unwrap(), 2.0, max_relative = 1e-15);
        let g = kern(Family::GammaSub { a: 2.0, b: 3.0 });
        assert_relative_eq!(g.psi_real(3.0).unwrap(), 2.0 * 2f64.ln(), max_relative = 1e-15);
        for k in catalogue() {
            assert_eq!(k.psi(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn caputo_psi_matches_levy_integral() {
        let c = kern(Family::Caputo { beta: 0.5 });
        assert_relative_eq!(levy_symbol(&c, 4.0).unwrap(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn primitives_differentiate_to_kernel() {
        for k in catalogue().iter().filter(|k| !k.is_classical()) {
            for &t in &[0.05, 0.3, 0.9, 2.0, 7.0] {
                let h = 1e-4 * t;
                let fd = (k.primitive(t + h) - k.primitive(t - h)) / (2.0 * h);
                assert_relative_eq!(fd, k.k(t), max_relative = 1e-6, epsilon = 1e-10);
                let fd2 = (k.primitive2(t + h) - k.primitive2(t - h)) / (2.0 * h);
                assert_relative_eq!(fd2, k.primitive(t), max_relative = 1e-6, epsilon = 1e-10);
            }
        }
    }

    fn direct_quadrature_is_feasible(k: &KernelSpec) -> bool {
        // k ~ 1/(t ln²t) near zero defeats direct quadrature of the distributed-order kernel
        !k.is_classical() && k.family() != &Family::DistributedOrder
    }

    #[test]
    fn distributed_order_matches_integrals_over_order() {
        let k = kern(Family::DistributedOrder);
        for &t in &[1e-6f64, 0.01, 0.5, 3.0, 1e4] {
            let kq = gauss_kronrod(|b: f64| t.powf(b - 1.0) / gamma(b), 0.0, 1.0, 0.0, 1e-13, 2000).value;
            let pq = gauss_kronrod(|b: f64| t.powf(b) / gamma(1.0 + b), 0.0, 1.0, 0.0, 1e-13, 2000).value;
            assert_relative_eq!(k.k(t), kq, max_relative = 1e-10);
            assert_relative_eq!(k.primitive(t), pq, max_relative = 1e-10);
        }
    }

    #[test]
    fn primitive_matches_quadrature_of_kernel() {
        // K(t) against a direct double-exponential integral of k
        for k in catalogue().iter().filter(|k| direct_quadrature_is_feasible(k)) {
            for &t in &[0.01, 0.5, 3.0] {
                let q = tanh_sinh(|_, da, _| k.k(da), 0.0, t, 1e-12).value;
                assert_relative_eq!(q, k.primitive(t), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn distributed_order_symbol_matches_quadrature_in_beta() {
        let k = kern(Family::DistributedOrder);
        for &lam in &[0.3f64, 0.999_9, 1.0, 1.000_2, 2.0, 17.0] {
            let q = gauss_kronrod(|b: f64| lam.powf(b), 0.0, 1.0, 0.0, 1e-14, 100).value;
            assert_relative_eq!(k.psi_real(lam).unwrap(), q, max_relative = 1e-12);
        }
        let z = Complex64::new(0.5, 2.0);
        let q = gauss_kronrod(|b: f64| z.powf(b), 0.0, 1.0, 0.0, 1e-14, 100).value;
        assert!((k.psi(z).unwrap() - q).norm() < 1e-12);
    }

    #[test]
    fn truncated_symbol_matches_cq_moment_identity() {
        // Lk(λ) = ∫₀^δ k(t) e^{-λt} dt evaluated directly
        let k = kern(Family::TruncatedStable { beta: 0.4, delta: 1.5 });
        for lam in [Complex64::new(0.7, 0.0), Complex64::new(3.0, 5.0), Complex64::new(0.01, 40.0)] {
            let q = tanh_sinh(|x, da, _| (-lam * x).exp() * k.k(da), 0.0, 1.5, 1e-13).value;
            let got = k.laplace_k(lam).unwrap();
            assert!((got - q).norm() < 1e-9 * q.norm(), "λ={lam}: {got} vs {q}");
        }
    }

    #[test]
    fn laplace_transforms_match_direct_integrals() {
        for k in catalogue().iter().filter(|k| direct_quadrature_is_feasible(k)) {
            for lam in [Complex64::new(1.0, 0.0), Complex64::new(2.0, 1.5)] {
                let head = tanh_sinh(|x, da, _| (-lam * x).exp() * k.k(da), 0.0, 1.0, 1e-13).value;
                let tail = exp_sinh(|x, _| (-lam * x).exp() * k.k(x), 1.0, 1e-13).value;
                let got = k.laplace_k(lam).unwrap();
                assert!((got - head - tail).norm() < 1e-8 * got.norm(), "{}: {got} vs {}", k.id(), head + tail);
            }
        }
    }

    #[test]
    fn conjugate_duality_in_laplace_domain() {
        // Lk̃ by direct quadrature of the closed-form conjugate
        for k in catalogue().iter().filter(|k| k.has_closed_conjugate() && !k.is_classical()) {
            for &lam in &[1.0, 2.0, 5.0] {
                let f = |x: f64| (-lam * x).exp() * k.k_tilde(x).unwrap();
                let head = tanh_sinh(|x, da, _| (-lam * x).exp() * k.k_tilde(da).unwrap(), 0.0, 1.0, 1e-13).value;
                let tail = exp_sinh(|x, _| f(x), 1.0, 1e-13).value;
                let lk = k.laplace_k(Complex64::new(lam, 0.0)).unwrap().re;
                assert_relative_eq!((head + tail) * lk, 1.0 / lam, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn closed_form_conjugates_satisfy_sonine() {
        for k in catalogue().iter().filter(|k| k.has_closed_conjugate()) {
            let kt = |t: f64| k.k_tilde(t).unwrap();
            for &t in &[1e-3, 0.1, 1.0, 10.0] {
                if k.is_classical() {
                    continue;
                }
                let v = conjugate_convolution(k, &kt, t);
                assert!((v - 1.0).abs() < 1e-8, "{} at t={t}: {v}", k.id());
            }
        }
    }

    #[test]
    fn caputo_sonine_matches_beta_function() {
        // ∫₀¹ s^{β-1}(1-s)^{-β} ds = Γ(β)Γ(1-β) makes (k̃∗k) ≡ 1
        let k = kern(Family::Caputo { beta: 0.5 });
        let (kt, rep) = sonine_conjugate(&k, 1e-3, 10_000).unwrap();
        assert_eq!(rep.method, SonineMethod::ClosedForm);
        assert_relative_eq!(kt[999], 1.0 / std::f64::consts::PI.sqrt(), max_relative = 1e-12);
        assert!(rep.max_residual <= 1e-6);
    }

    #[test]
    fn multi_term_numeric_conjugate_has_expected_laplace_transform() {
        let k = kern(Family::MultiTerm { terms: vec![[1.0, 0.3], [1.0, 0.7]] });
        let (_, rep) = sonine_conjugate(&k, 2.5e-5, 400_000).unwrap();
        assert_eq!(rep.method, SonineMethod::NumericVolterra);
        let at2 = rep.laplace_checks.iter().find(|c| c.lambda == 2.0).unwrap();
        let expected = 1.0 / (2f64.powf(0.3) + 2f64.powf(0.7));
        assert_relative_eq!(at2.expected, expected, max_relative = 1e-14);
        assert!((at2.computed - expected).abs() <= 1e-4, "{at2:?}");
        assert!(rep.max_residual <= 1e-4);
        assert!(rep.residual.iter().all(|r| *r >= 0.0));
        assert!(rep.grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn numeric_route_reproduces_caputo_conjugate() {
        // a custom copy of Caputo 0.5 with exact primitive and no conjugate
        let c = Arc::new(|t: f64| t.powf(-0.5) / std::f64::consts::PI.sqrt());
        let p = Arc::new(|t: f64| 2.0 * t.sqrt() / std::f64::consts::PI.sqrt());
        let k = KernelSpec::custom(CustomKernel {
            label: "caputo-copy".into(),
            k: c,
            primitive: Some(p),
            k_tilde: None,
            singular_at_zero: true,
        });
        let (_, rep) = sonine_conjugate(&k, 1e-3, 30_000).unwrap();
        for chk in &rep.laplace_checks {
            assert!(chk.rel_error < 5e-3, "{chk:?}");
        }
    }

    #[test]
    fn condition_checks() {
        let grid = log_grid(1e-4, 1e4, 200);
        let c = kern(Family::Caputo { beta: 0.5 });
        assert!(verify_kernel_conditions(&c, &grid, Default::default()).all_pass());
        let d = kern(Family::DistributedOrder);
        let rep = verify_kernel_conditions(&d, &grid, Default::default());
        assert!(rep.all_pass(), "{rep:?}");
        assert!(rep.singular_at_zero);
        let bad = KernelSpec::custom(CustomKernel {
            label: "sin+1".into(),
            k: Arc::new(|t: f64| t.sin() + 1.0),
            primitive: Some(Arc::new(|t: f64| t - t.cos() + 1.0)),
            k_tilde: None,
            singular_at_zero: false,
        });
        let rep = verify_kernel_conditions(&bad, &grid, Default::default());
        let mono = rep.records.iter().find(|r| r.condition == "non_increasing").unwrap();
        assert!(!mono.pass);
    }

    #[test]
    fn custom_laplace_matches_closed_form() {
        let k = KernelSpec::custom(CustomKernel {
            label: "exp".into(),
            k: Arc::new(|t: f64| (-t).exp()),
            primitive: None,
            k_tilde: None,
            singular_at_zero: false,
        });
        let lam = Complex64::new(0.5, 3.0);
        let want = Complex64::new(1.0, 0.0) / (lam + 1.0);
        assert!((k.laplace_k(lam).unwrap() - want).norm() < 1e-10);
        assert_relative_eq!(k.primitive(2.0), 1.0 - (-2.0f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn tabulated_kernel_interpolates() {
        let k = tabulated("t".into(), vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(k.k(0.5), 1.5);
        assert_relative_eq!(k.primitive(2.0), 2.0);
        assert_relative_eq!(k.primitive(0.5), 0.875);
    }

    proptest! {
        #[test]
        fn symbols_are_bernstein_like(idx in 0usize..9, l1 in 0.01f64..50.0, ratio in 1.01f64..3.0) {
            let k = &catalogue()[idx];
            let l2 = l1 * ratio;
            let l3 = l2 * ratio;
            let (p1, p2, p3) = (k.psi_real(l1).unwrap(), k.psi_real(l2).unwrap(), k.psi_real(l3).unwrap());
            prop_assert!(p1 > 0.0);
            prop_assert!(p2 >= p1 * (1.0 - 1e-14));
            // concavity: slope over [l2,l3] does not exceed slope over [l1,l2]
            let s1 = (p2 - p1) / (l2 - l1);
            let s2 = (p3 - p2) / (l3 - l2);
            prop_assert!(s2 <= s1 * (1.0 + 1e-9) + 1e-13);
        }

        #[test]
        fn kernels_are_nonnegative_and_non_increasing(idx in 0usize..8, t in 1e-4f64..50.0, r in 1.0001f64..2.0) {
            let k = &catalogue()[idx];
            let (a, b) = (k.k(t), k.k(t * r));
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!(b <= a * (1.0 + 1e-12));
        }

        #[test]
        fn psi_real_on_real_axis(idx in 0usize..9, l in 0.01f64..100.0) {
            let v = catalogue()[idx].psi(Complex64::new(l, 0.0)).unwrap();
            prop_assert!(v.im.abs() <= 1e-12 * v.re.abs());
        }
    }
}
