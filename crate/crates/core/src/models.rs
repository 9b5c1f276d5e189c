//! The four coupled-oscillator systems: a linear (Ornstein–Uhlenbeck) pair,
//! two phase rings on the torus, and a pair of three-state cycles.
//!
//! All models share the perturbation structure `ω → ω+τ` on the first
//! oscillator plus a symmetric coupling of strength `κ`.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, FourierSeries, Poly4, State};
use crate::error::{invalid, Error, Result};
use crate::spectral_core::{c, eig_dense_named, leading_pair_indices, matvec, CMat, Label, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "linear4d")]
    Linear4D,
    #[serde(rename = "ring2d")]
    Ring2D,
    #[serde(rename = "ringcos2d")]
    RingCos2D,
    #[serde(rename = "discrete9d")]
    Discrete9D,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear4D => "linear4d",
            ModelKind::Ring2D => "ring2d",
            ModelKind::RingCos2D => "ringcos2d",
            ModelKind::Discrete9D => "discrete9d",
        }
    }

    pub fn is_ring(self) -> bool {
        matches!(self, ModelKind::Ring2D | ModelKind::RingCos2D)
    }
}

/// A validated model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledModel {
    pub kind: ModelKind,
    pub omega: f64,
    pub tau: f64,
    pub kappa: f64,
    /// Linear damping (Linear4D only).
    pub eta: f64,
    /// Noise intensity `D` (continuous models only).
    pub diffusion: f64,
}

impl CoupledModel {
    pub fn new(kind: ModelKind, omega: f64, tau: f64, kappa: f64, eta: f64, diffusion: f64) -> Result<Self> {
        let m = Self { kind, omega, tau, kappa, eta, diffusion };
        m.validate()?;
        Ok(m)
    }

    pub fn linear4d(eta: f64, omega: f64, diffusion: f64, tau: f64, kappa: f64) -> Result<Self> {
        Self::new(ModelKind::Linear4D, omega, tau, kappa, eta, diffusion)
    }

    pub fn ring2d(omega: f64, diffusion: f64, tau: f64, kappa: f64) -> Result<Self> {
        Self::new(ModelKind::Ring2D, omega, tau, kappa, 0.0, diffusion)
    }

    pub fn ring_cos2d(omega: f64, diffusion: f64, tau: f64, kappa: f64) -> Result<Self> {
        Self::new(ModelKind::RingCos2D, omega, tau, kappa, 0.0, diffusion)
    }

    pub fn discrete9d(omega: f64, tau: f64, kappa: f64) -> Result<Self> {
        Self::new(ModelKind::Discrete9D, omega, tau, kappa, 0.0, 0.0)
    }

    /// Same system at another `(κ, τ)`.
    pub fn with_coupling(&self, kappa: f64, tau: f64) -> Result<Self> {
        Self::new(self.kind, self.omega, tau, kappa, self.eta, self.diffusion)
    }

    /// The uncoupled, identical system `κ = τ = 0`.
    pub fn unperturbed(&self) -> Self {
        Self { tau: 0.0, kappa: 0.0, ..*self }
    }

    pub fn is_continuous(&self) -> bool {
        self.kind != ModelKind::Discrete9D
    }

    fn validate(&self) -> Result<()> {
        let all = [self.omega, self.tau, self.kappa, self.eta, self.diffusion];
        if all.iter().any(|x| !x.is_finite()) {
            return invalid("model parameters must be finite");
        }
        if self.omega <= 0.0 {
            return invalid(format!("omega must be positive, got {}", self.omega));
        }
        match self.kind {
            ModelKind::Linear4D => {
                if self.eta <= 0.0 {
                    return invalid(format!("eta must be positive, got {}", self.eta));
                }
            }
            ModelKind::Discrete9D => {
                let lim = self.omega.min(self.omega + self.tau);
                if self.kappa < 0.0 || self.kappa >= lim {
                    return invalid(format!(
                        "discrete model requires 0 <= kappa < min(omega, omega+tau) = {lim}, got kappa = {}",
                        self.kappa
                    ));
                }
            }
            _ => {}
        }
        if self.is_continuous() && self.diffusion < 0.0 {
            return invalid(format!("diffusion must be nonnegative, got {}", self.diffusion));
        }
        Ok(())
    }

    pub(crate) fn require_noise(&self) -> Result<()> {
        if self.is_continuous() && self.diffusion <= 0.0 {
            return invalid("this operation needs a positive diffusion D");
        }
        Ok(())
    }

    /// Drift vector at a continuous state.
    pub fn drift(&self, s: &[f64]) -> Vec<f64> {
        let (w, t, k) = (self.omega, self.tau, self.kappa);
        match self.kind {
            ModelKind::Linear4D => {
                let a = linear_drift(self.eta, w, t, k);
                (0..4).map(|i| (0..4).map(|j| a[i][j] * s[j]).sum()).collect()
            }
            ModelKind::Ring2D => vec![w + t + k * (s[1] - s[0]).sin(), w + k * (s[0] - s[1]).sin()],
            ModelKind::RingCos2D => vec![w + t + k * (s[1] - s[0]).cos(), w + k * (s[0] - s[1]).cos()],
            ModelKind::Discrete9D => Vec::new(),
        }
    }
}

fn unsupported<T>(m: &CoupledModel, what: &str) -> Result<T> {
    Err(Error::Unsupported { model: m.kind.name(), what: what.to_string() })
}

/// Drift matrix of the linear model.
pub fn linear_drift(eta: f64, omega: f64, tau: f64, kappa: f64) -> [[f64; 4]; 4] {
    let wt = omega + tau;
    let mut a = [[-eta, wt, 0.0, 0.0], [-wt, -eta, 0.0, 0.0], [0.0, 0.0, -eta, omega], [0.0, 0.0, -omega, -eta]];
    let cpl = [[-1.0, 0.0, 1.0, 0.0], [0.0, -1.0, 0.0, 1.0], [1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] += kappa * cpl[i][j];
        }
    }
    a
}

/// Joint state index with the first oscillator's state varying fastest.
#[inline]
pub fn joint_index(i: usize, j: usize) -> usize {
    i + 3 * j
}

/// Transition-rate matrix of the nine-state system, `C[to][from]`, with zero
/// column sums. Transitions landing on a diagonal state `(A_i, B_i)` gain `κ`;
/// transitions between two off-diagonal states lose `κ`.
pub fn discrete_rate_matrix(omega: f64, tau: f64, kappa: f64) -> [[f64; 9]; 9] {
    let mut m = [[0.0; 9]; 9];
    for s in 0..9 {
        let (i, j) = (s % 3, s / 3);
        for (ni, nj, base) in [((i + 1) % 3, j, omega + tau), (i, (j + 1) % 3, omega)] {
            let to = joint_index(ni, nj);
            let rate = if ni == nj {
                base + kappa
            } else if i != j {
                base - kappa
            } else {
                base
            };
            m[to][s] += rate;
            m[s][s] -= rate;
        }
    }
    m
}

/// Exact finite generator: the drift matrix `A` for Linear4D, the rate
/// matrix `C` for Discrete9D.
pub fn generator_matrix(model: &CoupledModel) -> Result<CMat> {
    match model.kind {
        ModelKind::Linear4D => {
            let a = linear_drift(model.eta, model.omega, model.tau, model.kappa);
            Ok(Mat::from_fn(4, 4, |i, j| c(a[i][j], 0.0)))
        }
        ModelKind::Discrete9D => {
            let m = discrete_rate_matrix(model.omega, model.tau, model.kappa);
            Ok(Mat::from_fn(9, 9, |i, j| c(m[i][j], 0.0)))
        }
        _ => unsupported(model, "no finite exact generator; use cf_solver"),
    }
}

/// Closed-form leading pair `(λ₊, λ₋)` (both with positive imaginary part).
pub fn exact_lambda_pm(model: &CoupledModel) -> Result<(C64, C64)> {
    let (w, t, k) = (model.omega, model.tau, model.kappa);
    match model.kind {
        ModelKind::Linear4D => {
            let re = -model.eta - k;
            let s = w + t / 2.0;
            let disc = 4.0 * k * k - t * t;
            Ok(if disc > 0.0 {
                let h = 0.5 * disc.sqrt();
                (c(re + h, s), c(re - h, s))
            } else if disc == 0.0 {
                (c(re, s), c(re, s))
            } else {
                let h = 0.5 * (-disc).sqrt();
                (c(re, s + h), c(re, s - h))
            })
        }
        ModelKind::Discrete9D => {
            let r3 = 3f64.sqrt();
            let base = c(-1.5 * w - 0.75 * t, r3 / 2.0 * w + r3 / 4.0 * t);
            let disc = 3.0 * t * t - 4.0 * k * k;
            Ok(if disc > 0.0 {
                let d = c(r3, -1.0) / 4.0 * disc.sqrt();
                (base + d, base - d)
            } else if disc == 0.0 {
                (base, base)
            } else {
                let d = c(1.0, r3) / 4.0 * (-disc).sqrt();
                (base + d, base - d)
            })
        }
        _ => unsupported(model, "no closed-form eigenvalues for D > 0"),
    }
}

/// Leading eigenvalue and the four eigenfunctions of the uncoupled identical
/// system, plus its stationary density.
#[derive(Debug, Clone)]
pub struct UnperturbedEigendata {
    pub lambda1: C64,
    pub q1x: Descriptor,
    pub q1y: Descriptor,
    pub p1x: Descriptor,
    pub p1y: Descriptor,
    pub p0: Descriptor,
}

/// Eigendata of the model evaluated at `κ = τ = 0`.
pub fn unperturbed_eigendata(model: &CoupledModel) -> Result<UnperturbedEigendata> {
    model.require_noise()?;
    let w = model.omega;
    let z = c(0.0, 0.0);
    match model.kind {
        ModelKind::Linear4D => {
            let (eta, d) = (model.eta, model.diffusion);
            let s = (eta / (2.0 * d)).sqrt();
            let var = d / eta;
            let q = |o: usize| {
                let mut v = [z; 4];
                v[o] = c(0.0, s);
                v[o + 1] = c(s, 0.0);
                Descriptor::Poly(Poly4::linear(&v))
            };
            let p = |o: usize| {
                let mut v = [z; 4];
                v[o] = c(0.0, -s);
                v[o + 1] = c(s, 0.0);
                Descriptor::GaussPoly { poly: Poly4::linear(&v), var }
            };
            Ok(UnperturbedEigendata {
                lambda1: c(-eta, w),
                q1x: q(0),
                q1y: q(2),
                p1x: p(0),
                p1y: p(2),
                p0: Descriptor::GaussPoly { poly: Poly4::constant(c(1.0, 0.0)), var },
            })
        }
        ModelKind::Ring2D | ModelKind::RingCos2D => {
            let u = 1.0 / (4.0 * PI * PI);
            Ok(UnperturbedEigendata {
                lambda1: c(-model.diffusion, w),
                q1x: Descriptor::Fourier(FourierSeries::mode(1, 0, c(1.0, 0.0))),
                q1y: Descriptor::Fourier(FourierSeries::mode(0, 1, c(1.0, 0.0))),
                p1x: Descriptor::Fourier(FourierSeries::mode(-1, 0, c(u, 0.0))),
                p1y: Descriptor::Fourier(FourierSeries::mode(0, -1, c(u, 0.0))),
                p0: Descriptor::Fourier(FourierSeries::mode(0, 0, c(u, 0.0))),
            })
        }
        ModelKind::Discrete9D => {
            let th = 2.0 * PI / 3.0;
            let q: Vec<C64> = (0..3).map(|i| C64::from_polar(1.0, th * i as f64)).collect();
            let p: Vec<C64> = (0..3).map(|i| C64::from_polar(1.0 / 3.0, -th * i as f64)).collect();
            let third = c(1.0 / 3.0, 0.0);
            let over = |f: &dyn Fn(usize, usize) -> C64| Descriptor::States((0..9).map(|s| f(s % 3, s / 3)).collect());
            Ok(UnperturbedEigendata {
                lambda1: c(-1.5, 3f64.sqrt() / 2.0) * w,
                q1x: over(&|i, _| q[i]),
                q1y: over(&|_, j| q[j]),
                p1x: over(&|i, _| p[i] * third),
                p1y: over(&|_, j| p[j] * third),
                p0: Descriptor::States(vec![c(1.0 / 9.0, 0.0); 9]),
            })
        }
    }
}

/// `|Im λ₁ / Re λ₁|`.
pub fn quality_factor(lambda1: C64) -> Result<f64> {
    if lambda1.re == 0.0 {
        return invalid("quality factor undefined for an undamped mode (Re λ = 0)");
    }
    Ok((lambda1.im / lambda1.re).abs())
}

/// Image of one Fourier mode `e^{i(jx+ky)}` under the backward generator of
/// a ring model: `(dj, dk, coefficient)` triples.
pub fn ring_backward_mode(model: &CoupledModel, j: i64, k: i64) -> [(i64, i64, C64); 3] {
    let (w, t, kap, d) = (model.omega, model.tau, model.kappa, model.diffusion);
    let (jf, kf) = (j as f64, k as f64);
    let diag = c(-d * (jf * jf + kf * kf), (w + t) * jf + w * kf);
    let (lo, hi) = match model.kind {
        ModelKind::RingCos2D => (c(0.0, kap * (jf + kf) / 2.0), c(0.0, kap * (jf + kf) / 2.0)),
        _ => (c(kap * (jf - kf) / 2.0, 0.0), c(kap * (kf - jf) / 2.0, 0.0)),
    };
    [(0, 0, diag), (-1, 1, lo), (1, -1, hi)]
}

/// Image of one Fourier mode under the forward (Fokker–Planck) generator.
pub fn ring_forward_mode(model: &CoupledModel, j: i64, k: i64) -> [(i64, i64, C64); 3] {
    let (w, t, kap, d) = (model.omega, model.tau, model.kappa, model.diffusion);
    let (jf, kf) = (j as f64, k as f64);
    let diag = c(-d * (jf * jf + kf * kf), -((w + t) * jf + w * kf));
    let (lo, hi) = match model.kind {
        ModelKind::RingCos2D => (c(0.0, -kap * (jf + kf) / 2.0), c(0.0, -kap * (jf + kf) / 2.0)),
        _ => (c(kap * (kf - jf + 2.0) / 2.0, 0.0), c(kap * (jf - kf + 2.0) / 2.0, 0.0)),
    };
    [(0, 0, diag), (-1, 1, lo), (1, -1, hi)]
}

fn apply_modes(f: &FourierSeries, rule: impl Fn(i64, i64) -> [(i64, i64, C64); 3]) -> FourierSeries {
    let mut out = FourierSeries::zero();
    for (&(j, k), v) in &f.terms {
        for (dj, dk, coef) in rule(j, k) {
            out.add_term(j + dj, k + dk, v * coef);
        }
    }
    out
}

/// Backward generator `L†` applied symbolically.
pub fn backward_generator(model: &CoupledModel, f: &Descriptor) -> Result<Descriptor> {
    match (model.kind, f) {
        (ModelKind::Linear4D, Descriptor::Poly(p)) => {
            let a = linear_drift(model.eta, model.omega, model.tau, model.kappa);
            let mut out = Poly4::zero();
            for i in 0..4 {
                let di = p.deriv(i);
                for (j, aij) in a[i].iter().enumerate() {
                    if *aij != 0.0 {
                        out = out.add(&di.mul_var(j).scale(c(*aij, 0.0)));
                    }
                }
                out = out.add(&di.deriv(i).scale(c(model.diffusion, 0.0)));
            }
            Ok(Descriptor::Poly(out))
        }
        (ModelKind::Ring2D | ModelKind::RingCos2D, Descriptor::Fourier(s)) => {
            Ok(Descriptor::Fourier(apply_modes(s, |j, k| ring_backward_mode(model, j, k))))
        }
        (ModelKind::Discrete9D, Descriptor::States(v)) if v.len() == 9 => {
            let ct = generator_matrix(model)?.transpose().to_owned();
            Ok(Descriptor::States(matvec(ct.as_ref(), v)))
        }
        _ => invalid(format!("descriptor does not match model {}", model.kind.name())),
    }
}

/// Forward generator `L` applied symbolically to a density.
pub fn forward_generator(model: &CoupledModel, rho: &Descriptor) -> Result<Descriptor> {
    match (model.kind, rho) {
        (ModelKind::Linear4D, Descriptor::GaussPoly { poly, var }) => {
            // L[p·g] = g·[−∇·(Az p) + (Az p)·z/s + D(Δp − 2 z·∇p/s + p(|z|²/s² − 4/s))]
            let a = linear_drift(model.eta, model.omega, model.tau, model.kappa);
            let s = *var;
            let d = model.diffusion;
            let mut out = Poly4::zero();
            for i in 0..4 {
                let mut azp = Poly4::zero();
                for (j, aij) in a[i].iter().enumerate() {
                    if *aij != 0.0 {
                        azp = azp.add(&poly.mul_var(j).scale(c(*aij, 0.0)));
                    }
                }
                out = out.add(&azp.deriv(i).scale(c(-1.0, 0.0)));
                out = out.add(&azp.mul_var(i).scale(c(1.0 / s, 0.0)));
                out = out.add(&poly.deriv(i).deriv(i).scale(c(d, 0.0)));
                out = out.add(&poly.deriv(i).mul_var(i).scale(c(-2.0 * d / s, 0.0)));
                out = out.add(&poly.mul_var(i).mul_var(i).scale(c(d / (s * s), 0.0)));
            }
            out = out.add(&poly.scale(c(-4.0 * d / s, 0.0)));
            Ok(Descriptor::GaussPoly { poly: out, var: s })
        }
        (ModelKind::Ring2D | ModelKind::RingCos2D, Descriptor::Fourier(f)) => {
            Ok(Descriptor::Fourier(apply_modes(f, |j, k| ring_forward_mode(model, j, k))))
        }
        (ModelKind::Discrete9D, Descriptor::States(v)) if v.len() == 9 => {
            let cm = generator_matrix(model)?;
            Ok(Descriptor::States(matvec(cm.as_ref(), v)))
        }
        _ => invalid(format!("density does not match model {}", model.kind.name())),
    }
}

/// Test function for [`apply_backward_generator`].
pub enum TestFunction<'a> {
    /// Closed-form descriptor; derivatives are exact.
    Closed(&'a Descriptor),
    /// Black-box function differentiated by finite differences with step `h`.
    Numeric { f: &'a dyn Fn(&State) -> C64, h: f64 },
}

/// `(L†f)(point)`.
pub fn apply_backward_generator(model: &CoupledModel, f: &TestFunction<'_>, point: &State) -> Result<C64> {
    match f {
        TestFunction::Closed(d) => backward_generator(model, d)?.eval(point),
        TestFunction::Numeric { f, h } => {
            if model.kind == ModelKind::Discrete9D {
                let State::Index(s) = *point else { return invalid("discrete model needs a state index") };
                if s >= 9 {
                    return invalid(format!("state {s} out of range"));
                }
                let cm = discrete_rate_matrix(model.omega, model.tau, model.kappa);
                return Ok((0..9).map(|t| f(&State::Index(t)) * cm[t][s]).sum());
            }
            let x: Vec<f64> = match point {
                State::R4(z) => z.to_vec(),
                State::Torus(t) => t.to_vec(),
                State::Index(_) => return invalid("continuous model needs a continuous state"),
            };
            if (model.kind == ModelKind::Linear4D) != (x.len() == 4) {
                return invalid("state dimension does not match model");
            }
            let mk = |v: &[f64]| -> State {
                if v.len() == 4 {
                    State::R4([v[0], v[1], v[2], v[3]])
                } else {
                    State::Torus([v[0], v[1]])
                }
            };
            let drift = model.drift(&x);
            let f0 = f(&mk(&x));
            let mut acc = c(0.0, 0.0);
            for i in 0..x.len() {
                let at = |m: f64| {
                    let mut y = x.clone();
                    y[i] += m * h;
                    y
                };
                if at(1.0)[i] == x[i] || at(2.0)[i] == at(1.0)[i] {
                    return invalid(format!("finite-difference step {h} underflows at coordinate {i}"));
                }
                let (p1, m1) = (f(&mk(&at(1.0))), f(&mk(&at(-1.0))));
                let (p2, m2) = (f(&mk(&at(2.0))), f(&mk(&at(-2.0))));
                let d1 = (p1 - m1) / (2.0 * h);
                let d2 = (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * h * h);
                acc += d1 * drift[i] + d2 * model.diffusion;
            }
            Ok(acc)
        }
    }
}

/// Solves `a X + X aᵀ = −q` for a 4×4 real matrix.
pub fn lyapunov4(a: &[[f64; 4]; 4], q: &[[f64; 4]; 4]) -> Result<[[f64; 4]; 4]> {
    let n = 4;
    // row-major vec(X): index i*4 + j
    let big = Mat::from_fn(16, 16, |r, s| {
        let (i, j) = (r / n, r % n);
        let (k, l) = (s / n, s % n);
        let mut v = 0.0;
        if l == j {
            v += a[i][k];
        }
        if k == i {
            v += a[j][l];
        }
        c(v, 0.0)
    });
    let rhs: Vec<C64> = (0..16).map(|r| c(-q[r / n][r % n], 0.0)).collect();
    let x = crate::spectral_core::solve(big.as_ref(), &rhs)?;
    let mut out = [[0.0; 4]; 4];
    for r in 0..16 {
        out[r / n][r % n] = x[r].re;
    }
    Ok(out)
}

/// Exact stationary covariance of the linear model.
pub fn stationary_covariance(model: &CoupledModel) -> Result<[[f64; 4]; 4]> {
    if model.kind != ModelKind::Linear4D {
        return unsupported(model, "stationary covariance is defined for the linear model");
    }
    let a = linear_drift(model.eta, model.omega, model.tau, model.kappa);
    let mut q = [[0.0; 4]; 4];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = 2.0 * model.diffusion;
    }
    lyapunov4(&a, &q)
}

/// Stationary distribution of the nine-state chain (kernel of `C`).
pub fn discrete_stationary(model: &CoupledModel) -> Result<Vec<f64>> {
    if model.kind != ModelKind::Discrete9D {
        return unsupported(model, "stationary vector is defined for the discrete model");
    }
    let cm = discrete_rate_matrix(model.omega, model.tau, model.kappa);
    let a = Mat::from_fn(9, 9, |i, j| c(if i == 8 { 1.0 } else { cm[i][j] }, 0.0));
    let mut rhs = vec![c(0.0, 0.0); 9];
    rhs[8] = c(1.0, 0.0);
    let p = crate::spectral_core::solve(a.as_ref(), &rhs)?;
    Ok(p.into_iter().map(|z| z.re).collect())
}

/// A backward eigenfunction with its eigenvalue.
#[derive(Debug, Clone)]
pub struct QFunction {
    pub lambda: C64,
    pub q: Descriptor,
    pub label: Label,
}

/// Exact leading Q-function pair and stationary density for the models with a
/// finite generator. Eigenfunctions are normalised to unit variance; `plus` is
/// the branch matching the closed-form `λ₊`.
pub fn exact_q_pair(model: &CoupledModel) -> Result<(QFunction, QFunction, Descriptor)> {
    let (backward, density) = match model.kind {
        ModelKind::Linear4D => {
            model.require_noise()?;
            let a = generator_matrix(model)?;
            (a.transpose().to_owned(), Descriptor::Gaussian { cov: stationary_covariance(model)? })
        }
        ModelKind::Discrete9D => {
            let cm = generator_matrix(model)?;
            let p = discrete_stationary(model)?;
            (cm.transpose().to_owned(), Descriptor::States(p.into_iter().map(|x| c(x, 0.0)).collect()))
        }
        _ => return unsupported(model, "exact Q-functions need a finite generator; use cf_solver"),
    };
    let pairs = eig_dense_named("backward generator", backward.as_ref())?;
    let lambdas: Vec<C64> = pairs.iter().map(|p| p.lambda).collect();
    let (ia, ib) = leading_pair_indices(&lambdas)?;
    let (lp, _) = exact_lambda_pm(model)?;
    let (ip, im) = if (lambdas[ia] - lp).norm() <= (lambdas[ib] - lp).norm() { (ia, ib) } else { (ib, ia) };
    let make = |idx: usize, label: Label| -> Result<QFunction> {
        let v = &pairs[idx].right_vec;
        let q = match model.kind {
            ModelKind::Linear4D => Descriptor::Poly(Poly4::linear(v)),
            _ => Descriptor::States(v.clone()),
        };
        Ok(QFunction { lambda: pairs[idx].lambda, q: q.normalized(&density)?, label })
    };
    Ok((make(ip, Label::Plus)?, make(im, Label::Minus)?, density))
}
