//! First-order perturbation theory around the uncoupled identical system:
//! the 2×2 matrix `M`, its splitting discriminant, the Kato-type (KT)
//! boundary and the first-order corrections to the stationary density and
//! to the leading eigenfunctions.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, FourierSeries, Poly4};
use crate::error::{invalid, Error, Result};
use crate::models::{
    backward_generator, discrete_rate_matrix, forward_generator, linear_drift, lyapunov4, unperturbed_eigendata,
    CoupledModel, ModelKind,
};
use crate::spectral_core::{bordered_lstsq, c, leading_pair_indices, CMat, C64};

type M2 = [[C64; 2]; 2];

const Z: C64 = C64 { re: 0.0, im: 0.0 };

/// The perturbation matrix `M(κ,τ) = τ·[[a1,b1],[c1,d1]] + κ·K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MMatrix {
    pub entries: M2,
    pub a1: C64,
    pub b1: C64,
    pub c1: C64,
    pub d1: C64,
    pub alpha: C64,
    pub beta: C64,
    /// Full coupling part `K`; equals `[[α, β], [β, α]]` for symmetric couplings.
    pub kappa_part: M2,
    pub kappa: f64,
    pub tau: f64,
}

impl MMatrix {
    fn from_parts(tau_part: M2, kappa_part: M2, kappa: f64, tau: f64) -> Self {
        let mut entries = [[Z; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                entries[i][j] = tau_part[i][j] * tau + kappa_part[i][j] * kappa;
            }
        }
        Self {
            entries,
            a1: tau_part[0][0],
            b1: tau_part[0][1],
            c1: tau_part[1][0],
            d1: tau_part[1][1],
            alpha: kappa_part[0][0],
            beta: kappa_part[0][1],
            kappa_part,
            kappa,
            tau,
        }
    }

    /// The same decomposition re-evaluated at another `(κ, τ)`.
    pub fn at(&self, kappa: f64, tau: f64) -> Self {
        let tp = [[self.a1, self.b1], [self.c1, self.d1]];
        Self::from_parts(tp, self.kappa_part, kappa, tau)
    }

    pub fn trace(&self) -> C64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn det(&self) -> C64 {
        let e = &self.entries;
        e[0][0] * e[1][1] - e[0][1] * e[1][0]
    }

    fn scale(&self) -> f64 {
        self.entries.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `M_ab = ⟨P_a, L†_pert Q_b⟩` evaluated in closed form for the unit
/// perturbation `(κ, τ)`.
fn unit_matrix(model: &CoupledModel, kappa: f64, tau: f64) -> Result<M2> {
    let base = model.unperturbed();
    let pert = CoupledModel { kappa, tau, ..base };
    let e = unperturbed_eigendata(&base)?;
    let ps = [&e.p1x, &e.p1y];
    let qs = [&e.q1x, &e.q1y];
    let mut m = [[Z; 2]; 2];
    for (b, q) in qs.iter().enumerate() {
        let lq = perturbation_backward(&pert, &base, q)?;
        for (a, p) in ps.iter().enumerate() {
            m[a][b] = Descriptor::pairing(p, &lq)?;
        }
    }
    Ok(m)
}

/// `(L†(κ,τ) − L†(0,0)) f`.
fn perturbation_backward(pert: &CoupledModel, base: &CoupledModel, f: &Descriptor) -> Result<Descriptor> {
    let full = backward_generator(pert, f)?;
    let unp = backward_generator(base, f)?;
    full.add(&unp.scale(c(-1.0, 0.0)))
}

/// `M` derived from the closed-form eigendata for every model kind.
pub fn derived_m_matrix(model: &CoupledModel) -> Result<MMatrix> {
    let tp = unit_matrix(model, 0.0, 1.0)?;
    let kp = unit_matrix(model, 1.0, 0.0)?;
    Ok(MMatrix::from_parts(tp, kp, model.kappa, model.tau))
}

/// The nine-state `M` with the entries stated in the literature.
pub fn stated_discrete_m(kappa: f64, tau: f64) -> MMatrix {
    let r3 = 3f64.sqrt();
    let tp = [[c(-3.0 / 8.0, 5.0 * r3 / 8.0), c(21.0 / 16.0, 0.0)], [c(0.5, -r3 / 2.0), c(-9.0 / 8.0, -r3 / 8.0)]];
    let kp = [[c(0.5, r3 / 2.0), c(1.5, 0.0)], [Z, c(-0.5, -r3 / 2.0)]];
    MMatrix::from_parts(tp, kp, kappa, tau)
}

/// `M` for the model at its own `(κ, τ)`. For Discrete9D this returns the
/// stated matrix; use [`derived_m_matrix`] for the self-consistent one.
pub fn build_m_matrix(model: &CoupledModel) -> Result<MMatrix> {
    match model.kind {
        ModelKind::Discrete9D => Ok(stated_discrete_m(model.kappa, model.tau)),
        _ => derived_m_matrix(model),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SplitRealParts,
    Coalesced,
    SplitImagParts,
    MixedSplit,
    NoSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub discriminant: C64,
    pub upsilon: C64,
    pub lambda_c_plus: C64,
    pub lambda_c_minus: C64,
    pub v_plus: [C64; 2],
    pub v_minus: [C64; 2],
    pub regime: Regime,
    /// `M` is non-diagonalizable (coalesced and not scalar).
    pub defective: bool,
}

/// Principal square root with the branch cut resolved toward `+i`.
pub fn principal_sqrt(z: C64) -> C64 {
    let r = z.sqrt();
    if r.re == 0.0 && r.im < 0.0 {
        -r
    } else {
        r
    }
}

fn eigvec(m: &M2, lam: C64, fallback: [C64; 2]) -> [C64; 2] {
    let u = [m[0][1], lam - m[0][0]];
    let w = [lam - m[1][1], m[1][0]];
    let nu = u[0].norm() + u[1].norm();
    let nw = w[0].norm() + w[1].norm();
    let scale = m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let v = if nu.max(nw) <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        fallback
    } else if nu >= nw {
        u
    } else {
        w
    };
    if v[0].norm() > 1e-12 * (v[0].norm() + v[1].norm()) {
        [c(1.0, 0.0), v[1] / v[0]]
    } else {
        [Z, c(1.0, 0.0)]
    }
}

/// Closed-form diagonalization of `M` with regime classification.
pub fn splitting_report(m: &MMatrix) -> SplittingReport {
    let e = &m.entries;
    let scale = m.scale();
    let tr = m.trace();
    let disc2 = (e[0][0] - e[1][1]) * (e[0][0] - e[1][1]) + e[0][1] * e[1][0] * 4.0;
    let d = principal_sqrt(disc2);
    let upsilon = tr / 2.0;
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let scalar = e[0][1].norm() <= tol && e[1][0].norm() <= tol && (e[0][0] - e[1][1]).norm() <= tol;
    let coalesced = disc2.norm() <= 1e-12 * scale * scale || scale == 0.0;
    let rtol = 1e-10 * d.norm();
    let regime = if scalar {
        Regime::NoSplit
    } else if coalesced {
        Regime::Coalesced
    } else if d.im.abs() <= rtol {
        Regime::SplitRealParts
    } else if d.re.abs() <= rtol {
        Regime::SplitImagParts
    } else {
        Regime::MixedSplit
    };
    let (lp, lm) = (upsilon + d / 2.0, upsilon - d / 2.0);
    let (fp, fm) = if (lp - e[0][0]).norm() <= (lp - e[1][1]).norm() {
        ([c(1.0, 0.0), Z], [Z, c(1.0, 0.0)])
    } else {
        ([Z, c(1.0, 0.0)], [c(1.0, 0.0), Z])
    };
    let (v_plus, v_minus) = if scalar { (fp, fm) } else { (eigvec(e, lp, fp), eigvec(e, lm, fm)) };
    SplittingReport {
        discriminant: d,
        upsilon,
        lambda_c_plus: lp,
        lambda_c_minus: lm,
        v_plus,
        v_minus,
        regime,
        defective: regime == Regime::Coalesced,
    }
}

/// Coupling `κ* ≥ 0` where the splitting discriminant vanishes at detuning
/// `τ*`, or `None` if neither branch is real.
pub fn kt_boundary(model: &CoupledModel, tau_star: f64) -> Result<Option<f64>> {
    let m = derived_m_matrix(model)?;
    kt_from_m(&m, tau_star)
}

/// KT boundary from a given `M` decomposition.
pub fn kt_from_m(m: &MMatrix, tau_star: f64) -> Result<Option<f64>> {
    if !tau_star.is_finite() {
        return invalid("tau must be finite");
    }
    let coef_scale = [m.a1, m.d1, m.alpha, m.beta].iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m.beta.norm() <= 1e-14 * coef_scale.max(f64::MIN_POSITIVE) {
        return invalid("no-splitting regime; KT boundary undefined");
    }
    let root = principal_sqrt((m.a1 - m.d1) * (m.a1 - m.d1));
    let k = c(0.0, tau_star.abs()) * root / (m.beta * 2.0);
    let mut best = None;
    for cand in [k, -k] {
        if cand.im.abs() <= 1e-10 * cand.norm() && cand.re >= -1e-14 * coef_scale {
            best = Some(cand.re.max(0.0));
        }
    }
    let Some(kappa) = best else { return Ok(None) };
    // κ = 0 at τ = 0 only bounds a region if coupling alone splits real parts
    if kappa == 0.0 && splitting_report(&m.at(1.0, 0.0)).regime == Regime::SplitImagParts {
        return Ok(None);
    }
    let at = m.at(kappa, tau_star);
    let e = &at.entries;
    let disc2 = (e[0][0] - e[1][1]) * (e[0][0] - e[1][1]) + e[0][1] * e[1][0] * 4.0;
    let bound = 1e-10 * (kappa.abs() + tau_star.abs()).powi(2) * coef_scale.max(1.0).powi(2);
    if disc2.norm() > bound {
        return Err(Error::Solve(format!("KT post-check failed: |D²| = {:.3e}", disc2.norm())));
    }
    Ok(Some(kappa))
}

/// Measured spectral-gap ratio against the leading oscillatory pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `min Re λ' / Re λ₁` over the remaining nonzero, non-conjugate eigenvalues.
    pub ratio: f64,
    pub upsilon: f64,
    pub satisfied: bool,
}

/// Checks `Re λ' < υ·Re λ₁` for the spectrum `lambdas` (any order).
pub fn oscillatory_gap(lambdas: &[C64], upsilon: f64) -> Result<GapReport> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| b.re.total_cmp(&a.re));
    let (ia, ib) = leading_pair_indices(&sorted)?;
    let lead = [sorted[ia], sorted[ib]];
    let l1 = lead[0];
    if l1.re >= 0.0 {
        return invalid("leading eigenvalue is not damped");
    }
    let scale = sorted.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let mut used = [false; 4];
    let mut ratio = f64::INFINITY;
    for l in &sorted {
        if l.norm() <= tol {
            continue;
        }
        let targets = [lead[0], lead[1], lead[0].conj(), lead[1].conj()];
        if let Some(t) = (0..4).find(|&t| !used[t] && (l - targets[t]).norm() <= tol) {
            used[t] = true;
            continue;
        }
        ratio = ratio.min(l.re / l1.re);
    }
    Ok(GapReport { ratio, upsilon, satisfied: ratio > upsilon })
}

fn check_residual(what: &str, res: f64, tol: f64) -> Result<()> {
    if !(res <= tol) {
        return Err(Error::Solve(format!("{what}: residual {res:.3e} exceeds {tol:.1e}")));
    }
    Ok(())
}

/// First-order correction `𝒫_c` to the stationary density, with zero total mass.
pub fn stationary_correction(model: &CoupledModel) -> Result<Descriptor> {
    let base = model.unperturbed();
    let e = unperturbed_eigendata(&base)?;
    match model.kind {
        ModelKind::Ring2D | ModelKind::RingCos2D => {
            let Descriptor::Fourier(rhs) = forward_generator(model, &e.p0)? else { unreachable!() };
            let mut out = FourierSeries::zero();
            for (&(j, k), v) in &rhs.terms {
                if (j, k) == (0, 0) {
                    continue;
                }
                let (jf, kf) = (j as f64, k as f64);
                let sym = c(-base.diffusion * (jf * jf + kf * kf), -base.omega * (jf + kf));
                out.add_term(j, k, -v / sym);
            }
            let pc = Descriptor::Fourier(out.pruned(0.0));
            let lhs = forward_generator(&base, &pc)?.add(&forward_generator(model, &e.p0)?)?;
            let Descriptor::Fourier(r) = lhs else { unreachable!() };
            check_residual("stationary correction", r.max_abs(), 1e-8)?;
            Ok(pc)
        }
        ModelKind::Discrete9D => {
            let c0 = discrete_rate_matrix(base.omega, 0.0, 0.0);
            let cp = discrete_rate_matrix(model.omega, model.tau, model.kappa);
            let op = Mat::from_fn(9, 9, |i, j| c(c0[i][j], 0.0));
            let rhs: Vec<C64> =
                (0..9).map(|i| c(-(0..9).map(|j| (cp[i][j] - c0[i][j]) / 9.0).sum::<f64>(), 0.0)).collect();
            let (sol, res, cons) = bordered_lstsq(op.as_ref(), &[vec![c(1.0, 0.0); 9]], &rhs)?;
            check_residual("stationary correction", res, 1e-8)?;
            check_residual("stationary correction mass", cons, 1e-10)?;
            Ok(Descriptor::States(sol))
        }
        ModelKind::Linear4D => {
            let (eta, d) = (base.eta, base.diffusion);
            let var = d / eta;
            let a0 = linear_drift(eta, base.omega, 0.0, 0.0);
            let a = linear_drift(eta, model.omega, model.tau, model.kappa);
            let mut q = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    q[i][j] = var * ((a[i][j] - a0[i][j]) + (a[j][i] - a0[j][i]));
                }
            }
            let s1 = lyapunov4(&a0, &q)?;
            let w = 1.0 / var;
            let mut quad = [[Z; 4]; 4];
            let mut tr = 0.0;
            for i in 0..4 {
                tr += s1[i][i];
                for j in 0..4 {
                    quad[i][j] = c(0.5 * w * w * s1[i][j], 0.0);
                }
            }
            let poly = Poly4::quadratic(&quad).add(&Poly4::constant(c(-0.5 * w * tr, 0.0)));
            let pc = Descriptor::GaussPoly { poly, var };
            let lhs = forward_generator(&base, &pc)?.add(&forward_generator(model, &e.p0)?)?;
            let Descriptor::GaussPoly { poly: r, .. } = lhs else { unreachable!() };
            check_residual("stationary correction", r.max_abs(), 1e-8)?;
            check_residual("stationary correction mass", pc.integral()?.norm(), 1e-10)?;
            Ok(pc)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// First-order eigenfunction `v·(Q*_{1x}, Q*_{1y}) + 𝒬*_c`.
#[derive(Debug, Clone)]
pub struct CorrectedEigenfunction {
    pub lambda: C64,
    pub lambda_c: C64,
    pub zeroth: Descriptor,
    pub correction: Descriptor,
    pub first_order: Descriptor,
}

/// Solves for the first-order eigenfunction correction on the given branch.
pub fn eigfn_correction(model: &CoupledModel, branch: Branch) -> Result<CorrectedEigenfunction> {
    let base = model.unperturbed();
    let e = unperturbed_eigendata(&base)?;
    let m = derived_m_matrix(model)?;
    let rep = splitting_report(&m);
    if rep.regime == Regime::Coalesced {
        return invalid("eigenfunction corrections are undefined at a KT point");
    }
    let (lc, v) = match branch {
        Branch::Plus => (rep.lambda_c_plus, rep.v_plus),
        Branch::Minus => (rep.lambda_c_minus, rep.v_minus),
    };
    let zeroth = e.q1x.scale(v[0]).add(&e.q1y.scale(v[1]))?;
    // rhs = −(L†_pert − λ_c) zeroth
    let rhs = perturbation_backward(model, &base, &zeroth)?.scale(c(-1.0, 0.0)).add(&zeroth.scale(lc))?;
    let rhs_scale = zeroth_scale(&rhs).max(f64::MIN_POSITIVE);
    for (name, p) in [("P1x", &e.p1x), ("P1y", &e.p1y)] {
        let r = Descriptor::pairing(p, &rhs)?.norm();
        if r > 1e-8 * rhs_scale.max(1.0) {
            return Err(Error::Fredholm { pairing: name.into(), residual: r });
        }
    }
    let correction = match model.kind {
        ModelKind::Ring2D | ModelKind::RingCos2D => {
            let Descriptor::Fourier(r) = &rhs else { unreachable!() };
            let mut out = FourierSeries::zero();
            for (&(j, k), val) in &r.terms {
                if (j, k) == (1, 0) || (j, k) == (0, 1) {
                    continue;
                }
                let (jf, kf) = (j as f64, k as f64);
                let sym = c(-base.diffusion * (jf * jf + kf * kf), base.omega * (jf + kf)) - e.lambda1;
                out.add_term(j, k, val / sym);
            }
            let d = Descriptor::Fourier(out);
            let lhs = backward_generator(&base, &d)?.add(&d.scale(-e.lambda1))?;
            let Descriptor::Fourier(res) = lhs.add(&rhs.scale(c(-1.0, 0.0)))? else { unreachable!() };
            check_residual("eigenfunction correction", res.max_abs(), 1e-8)?;
            d
        }
        ModelKind::Discrete9D => {
            let Descriptor::States(r) = &rhs else { unreachable!() };
            let c0 = discrete_rate_matrix(base.omega, 0.0, 0.0);
            let op = Mat::from_fn(9, 9, |i, j| c(c0[j][i], 0.0) - if i == j { e.lambda1 } else { Z });
            solve_constrained(&op, &[&e.p1x, &e.p1y], r).map(Descriptor::States)?
        }
        ModelKind::Linear4D => {
            let Descriptor::Poly(r) = &rhs else { unreachable!() };
            if r.degree() > 1 {
                return Err(Error::Solve("linear-model right-hand side is not linear".into()));
            }
            let rc = r.linear_coeffs();
            let a0 = linear_drift(base.eta, base.omega, 0.0, 0.0);
            let op = Mat::from_fn(4, 4, |i, j| c(a0[j][i], 0.0) - if i == j { e.lambda1 } else { Z });
            let var = base.diffusion / base.eta;
            let row = |p: &Descriptor| -> Vec<C64> {
                let Descriptor::GaussPoly { poly, .. } = p else { unreachable!() };
                poly.linear_coeffs().iter().map(|x| x * var).collect()
            };
            let cons = [row(&e.p1x), row(&e.p1y)];
            let (sol, res, cmax) = bordered_lstsq(op.as_ref(), &cons, &rc)?;
            check_residual("eigenfunction correction", res, 1e-8)?;
            check_residual("eigenfunction orthogonality", cmax, 1e-10)?;
            Descriptor::Poly(Poly4::linear(&sol))
        }
    };
    let first_order = zeroth.add(&correction)?;
    Ok(CorrectedEigenfunction { lambda: e.lambda1 + lc, lambda_c: lc, zeroth, correction, first_order })
}

fn zeroth_scale(d: &Descriptor) -> f64 {
    match d {
        Descriptor::Poly(p) | Descriptor::GaussPoly { poly: p, .. } => p.max_abs(),
        Descriptor::Fourier(f) => f.max_abs(),
        Descriptor::States(v) => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Descriptor::Gaussian { .. } => 1.0,
    }
}

fn solve_constrained(op: &CMat, dens: &[&Descriptor], rhs: &[C64]) -> Result<Vec<C64>> {
    let cons: Vec<Vec<C64>> = dens
        .iter()
        .map(|d| match d {
            Descriptor::States(v) => Ok(v.clone()),
            _ => invalid("expected a state vector"),
        })
        .collect::<Result<_>>()?;
    let (sol, res, cmax) = bordered_lstsq(op.as_ref(), &cons, rhs)?;
    check_residual("eigenfunction correction", res, 1e-8)?;
    check_residual("eigenfunction orthogonality", cmax, 1e-10)?;
    Ok(sol)
}

/// Torus density `P₀ + 𝒫_c` evaluated on an `n×n` grid of cell centres,
/// integrated over each cell to first order (midpoint rule).
pub fn ring_first_order_cells(model: &CoupledModel, n: usize) -> Result<Vec<f64>> {
    let Descriptor::Fourier(pc) = stationary_correction(model)? else {
        return invalid("ring model expected");
    };
    let h = 2.0 * PI / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            let (x, y) = ((a as f64 + 0.5) * h, (b as f64 + 0.5) * h);
            out.push((1.0 / (4.0 * PI * PI) + pc.eval(x, y).re) * h * h);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{exact_lambda_pm, generator_matrix};
    use crate::spectral_core::{eig_dense, hdot, norm};
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn lin(t: f64, k: f64) -> CoupledModel {
        CoupledModel::linear4d(0.1, 2.0, 0.1, t, k).unwrap()
    }

    fn ring(t: f64, k: f64) -> CoupledModel {
        CoupledModel::ring2d(2.0, 0.1, t, k).unwrap()
    }

    fn ringcos(t: f64, k: f64) -> CoupledModel {
        CoupledModel::ring_cos2d(2.0, 0.1, t, k).unwrap()
    }

    fn assert_m(m: &MMatrix, want: M2) {
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(m.entries[i][j], want[i][j], 1e-12), "({i},{j}): {} vs {}", m.entries[i][j], want[i][j]);
            }
        }
    }

    #[test]
    fn m_matrices() {
        let (k, t) = (0.3, 0.7);
        assert_m(&build_m_matrix(&lin(t, k)).unwrap(), [[c(-k, t), c(k, 0.0)], [c(k, 0.0), c(-k, 0.0)]]);
        assert_m(&build_m_matrix(&ring(t, k)).unwrap(), [[c(0.0, t), c(k / 2.0, 0.0)], [c(k / 2.0, 0.0), Z]]);
        assert_m(&build_m_matrix(&ringcos(t, k)).unwrap(), [[c(0.0, t), c(0.0, k / 2.0)], [c(0.0, k / 2.0), Z]]);
    }

    #[test]
    fn discrete_derived_m() {
        let m = derived_m_matrix(&CoupledModel::discrete9d(1.0, 0.0, 0.0).unwrap()).unwrap();
        let r3 = 3f64.sqrt();
        assert!(close(m.a1, c(-1.5, r3 / 2.0), 1e-12));
        assert!(close(m.beta, c(0.5, r3 / 2.0), 1e-12));
        for z in [m.b1, m.c1, m.d1, m.alpha, m.kappa_part[1][1]] {
            assert!(z.norm() < 1e-12);
        }
        assert!(close(m.kappa_part[1][0], m.beta, 1e-12));
    }

    #[test]
    fn discrete_stated_m_entries() {
        let (k, t) = (0.2, 0.4);
        let m = build_m_matrix(&CoupledModel::discrete9d(1.0, t, k).unwrap()).unwrap();
        let r3 = 3f64.sqrt();
        let m11 = c(0.5, r3 / 2.0) * k - c(3.0 / 8.0, -5.0 * r3 / 8.0) * t;
        let m12 = c(1.5 * k + 21.0 / 16.0 * t, 0.0);
        let m21 = c(0.5, -r3 / 2.0) * t;
        let m22 = -c(0.5, r3 / 2.0) * k - c(9.0 / 8.0, r3 / 8.0) * t;
        assert_m(&m, [[m11, m12], [m21, m22]]);
    }

    #[test]
    fn splitting_examples() {
        let r = splitting_report(&build_m_matrix(&lin(0.5, 0.25)).unwrap());
        assert_eq!(r.regime, Regime::Coalesced);
        assert!(r.defective);
        assert!(close(r.lambda_c_plus, c(-0.25, 0.25), 1e-12) && close(r.lambda_c_minus, c(-0.25, 0.25), 1e-12));

        let r = splitting_report(&build_m_matrix(&ring(0.1, 0.2)).unwrap());
        assert_eq!(r.regime, Regime::SplitRealParts);
        assert!(close(r.discriminant, c(0.03f64.sqrt(), 0.0), 1e-12));
        assert!(close(r.lambda_c_plus, c(0.0866025, 0.05), 1e-6));

        for (t, k) in [(0.1, 0.2), (-0.3, 0.05), (0.5, 0.5)] {
            let r = splitting_report(&build_m_matrix(&ringcos(t, k)).unwrap());
            assert_eq!(r.regime, Regime::SplitImagParts);
            assert!(close(r.discriminant, c(0.0, (t * t + k * k).sqrt()), 1e-12));
        }

        let r = splitting_report(&build_m_matrix(&ring(0.0, 0.0)).unwrap());
        assert_eq!(r.regime, Regime::NoSplit);
    }

    #[test]
    fn sqrt_branch() {
        assert_eq!(principal_sqrt(c(-4.0, -0.0)), c(0.0, 2.0));
        assert_eq!(principal_sqrt(c(-4.0, 0.0)), c(0.0, 2.0));
        assert!(principal_sqrt(c(-1.0, -1.0)).re > 0.0);
    }

    #[test]
    fn kt_examples() {
        assert!((kt_boundary(&lin(0.0, 0.0), 0.5).unwrap().unwrap() - 0.25).abs() < 1e-12);
        let d = CoupledModel::discrete9d(1.0, 0.0, 0.0).unwrap();
        assert!((kt_boundary(&d, 0.5).unwrap().unwrap() - 3f64.sqrt() / 4.0).abs() < 1e-12);
        assert!((kt_boundary(&ring(0.0, 0.0), -0.3).unwrap().unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(kt_boundary(&ringcos(0.0, 0.0), 0.5).unwrap(), None);
        let mut m = derived_m_matrix(&ring(0.0, 0.0)).unwrap();
        m.beta = Z;
        assert!(kt_from_m(&m, 0.5).is_err());
    }

    #[test]
    fn ring_stationary_correction_closed_form() {
        let (k, d) = (0.2, 0.1);
        let Descriptor::Fourier(pc) = stationary_correction(&ring(0.0, k)).unwrap() else { panic!() };
        let want = k / (8.0 * PI * PI * d);
        assert!(close(pc.coeff(1, -1), c(want, 0.0), 1e-12));
        assert!(close(pc.coeff(-1, 1), c(want, 0.0), 1e-12));
        assert_eq!(pc.terms.len(), 2);
        let Descriptor::Fourier(pc) = stationary_correction(&ringcos(0.3, 0.4)).unwrap() else { panic!() };
        assert!(pc.max_abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_zero_correction() {
        for m in [lin(0.0, 0.0), ring(0.0, 0.0), CoupledModel::discrete9d(1.0, 0.0, 0.0).unwrap()] {
            let pc = stationary_correction(&m).unwrap();
            assert!(zeroth_scale(&pc) < 1e-14);
        }
    }

    #[test]
    fn discrete_stationary_correction_dense_check() {
        let m = CoupledModel::discrete9d(1.0, 0.0, 0.2).unwrap();
        let Descriptor::States(pc) = stationary_correction(&m).unwrap() else { panic!() };
        assert!(pc.iter().sum::<C64>().norm() < 1e-10);
        // independent route: first-order expansion of the exact stationary vector
        let eps = 1e-4;
        let p = crate::models::discrete_stationary(&CoupledModel::discrete9d(1.0, 0.0, 0.2 * eps).unwrap()).unwrap();
        for (a, b) in p.iter().zip(&pc) {
            assert!(((a - 1.0 / 9.0) / eps - b.re).abs() < 1e-4);
        }
    }

    #[test]
    fn linear_stationary_correction_matches_exact_covariance() {
        let (t, k) = (0.3, 0.2);
        let pc = stationary_correction(&lin(t, k)).unwrap();
        let Descriptor::GaussPoly { poly, var } = &pc else { panic!() };
        let eps = 1e-5;
        let s = crate::models::stationary_covariance(&lin(t * eps, k * eps)).unwrap();
        // second moments of 𝒫_c equal the covariance derivative
        for i in 0..4 {
            for j in 0..4 {
                let mut e = [0; 4];
                e[i] += 1;
                e[j] += 1;
                let mut mono = Poly4::zero();
                mono.add_term(e, c(1.0, 0.0));
                let m2 = poly.mul(&mono).gaussian_mean(*var).re;
                let want = (s[i][j] - if i == j { 1.0 } else { 0.0 }) / eps;
                assert!((m2 - want).abs() < 1e-4, "({i},{j}) {m2} vs {want}");
            }
        }
    }

    #[test]
    fn identical_ring_zeroth_order() {
        let f = eigfn_correction(&ring(0.0, 0.2), Branch::Plus).unwrap();
        let Descriptor::Fourier(z) = &f.zeroth else { panic!() };
        assert!(close(z.coeff(1, 0), c(1.0, 0.0), 1e-14) && close(z.coeff(0, 1), c(1.0, 0.0), 1e-14));
        let f = eigfn_correction(&ring(0.0, 0.0), Branch::Minus).unwrap();
        let Descriptor::Fourier(z) = &f.zeroth else { panic!() };
        assert!(close(z.coeff(0, 1), c(1.0, 0.0), 1e-14) && z.coeff(1, 0).norm() < 1e-14);
    }

    #[test]
    fn correction_rejected_at_kt() {
        assert!(eigfn_correction(&lin(0.5, 0.25), Branch::Plus).is_err());
    }

    #[test]
    fn linear_correction_is_exact_eigenvector_direction() {
        // the linear model's eigenfunctions are linear, so the first-order
        // eigenfunction lies within O(ε²) of the exact one
        let mut errs = Vec::new();
        for eps in [0.01, 0.02, 0.04] {
            let m = lin(0.3 * eps, 0.5 * eps);
            let f = eigfn_correction(&m, Branch::Plus).unwrap();
            let Descriptor::Poly(p) = &f.first_order else { panic!() };
            let at = generator_matrix(&m).unwrap().transpose().to_owned();
            let ex = eig_dense(at.as_ref()).unwrap();
            let (lp, _) = exact_lambda_pm(&m).unwrap();
            let best = ex.iter().min_by(|a, b| (a.lambda - lp).norm().total_cmp(&(b.lambda - lp).norm())).unwrap();
            let v = p.linear_coeffs().to_vec();
            let cosang = hdot(&best.right_vec, &v).norm() / (norm(&best.right_vec) * norm(&v));
            errs.push((1.0 - cosang.min(1.0)).sqrt());
        }
        for (e, eps) in errs.iter().zip([0.01, 0.02, 0.04]) {
            assert!(*e <= 10.0 * eps * eps, "{errs:?}");
        }
    }

    #[test]
    fn discrete_eigvec_angle_is_second_order() {
        let ks = [0.01, 0.02, 0.04, 0.08];
        let mut angles = Vec::new();
        for &k in &ks {
            let m = CoupledModel::discrete9d(1.0, 0.0, k).unwrap();
            let f = eigfn_correction(&m, Branch::Plus).unwrap();
            let Descriptor::States(v) = &f.first_order else { panic!() };
            let ct = generator_matrix(&m).unwrap().transpose().to_owned();
            let ex = eig_dense(ct.as_ref()).unwrap();
            let best = ex.iter().min_by(|a, b| (a.lambda - f.lambda).norm().total_cmp(&(b.lambda - f.lambda).norm())).unwrap();
            let cosang = hdot(&best.right_vec, v).norm() / (norm(&best.right_vec) * norm(v));
            angles.push(cosang.min(1.0).acos());
        }
        let n = ks.len() as f64;
        let xs: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
        let ys: Vec<f64> = angles.iter().map(|a| a.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 2.0).abs() <= 0.2, "slope {slope}, angles {angles:?}");
    }

    #[test]
    fn ring_correction_solves() {
        for branch in [Branch::Plus, Branch::Minus] {
            let f = eigfn_correction(&ring(0.1, 0.2), branch).unwrap();
            let Descriptor::Fourier(c1) = &f.correction else { panic!() };
            assert!(c1.coeff(1, 0).norm() < 1e-14 && c1.coeff(0, 1).norm() < 1e-14);
            assert!(c1.max_abs() > 0.0);
        }
    }

    #[test]
    fn gap_ratio() {
        let l = [c(0.0, 0.0), c(-0.1, 2.0), c(-0.1, -2.0), c(-0.3, 2.0), c(-0.3, -2.0), c(-0.4, 4.0)];
        let g = oscillatory_gap(&l, 1.0).unwrap();
        assert!((g.ratio - 4.0).abs() < 1e-12 && g.satisfied);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reconstruction_and_symmetry(t in -1.0f64..1.0, k in 0.0f64..1.0) {
            let models = [
                lin(t, k), ring(t, k), ringcos(t, k),
                CoupledModel { kind: ModelKind::Discrete9D, omega: 1.0, tau: t, kappa: k, eta: 0.0, diffusion: 0.0 },
            ];
            for m in models {
                let mm = derived_m_matrix(&m).unwrap();
                prop_assert!(mm.b1.norm() < 1e-12 && mm.c1.norm() < 1e-12);
                prop_assert!((mm.kappa_part[0][1] - mm.kappa_part[1][0]).norm() < 1e-12);
                prop_assert!((mm.kappa_part[0][0] - mm.kappa_part[1][1]).norm() < 1e-12);
                let want = [[mm.a1 * t + mm.alpha * k, mm.beta * k], [mm.beta * k, mm.d1 * t + mm.alpha * k]];
                for i in 0..2 { for j in 0..2 {
                    prop_assert!((mm.entries[i][j] - want[i][j]).norm() < 1e-12);
                }}
                let r = splitting_report(&mm);
                prop_assert!((r.lambda_c_plus + r.lambda_c_minus - mm.trace()).norm() < 1e-12);
                prop_assert!((r.lambda_c_plus - (r.upsilon + r.discriminant / 2.0)).norm() < 1e-12);
            }
        }

        #[test]
        fn kt_point_coalesces(t in -1.0f64..1.0) {
            prop_assume!(t.abs() > 1e-3);
            let d0 = CoupledModel::discrete9d(1.0, 0.0, 0.0).unwrap();
            for m in [lin(0.0, 0.0), ring(0.0, 0.0), d0] {
                let k = kt_boundary(&m, t).unwrap().unwrap();
                let mm = derived_m_matrix(&m).unwrap().at(k, t);
                let r = splitting_report(&mm);
                prop_assert!((r.lambda_c_plus - r.lambda_c_minus).norm() < 1e-7);
                let e = &mm.entries;
                let disc2 = (e[0][0] - e[1][1]).powi(2) + e[0][1] * e[1][0] * 4.0;
                prop_assert!(disc2.norm() < 1e-12);
            }
        }

        #[test]
        fn fredholm_rhs_orthogonal(t in -0.5f64..0.5, k in 0.0f64..0.5) {
            let ratio = if t == 0.0 { f64::INFINITY } else { k / t.abs() };
            prop_assume!((ratio - 0.5).abs() > 1e-3 && (ratio - 1.0).abs() > 1e-3 && (ratio - 0.866).abs() > 1e-2);
            for m in [lin(t, k), ring(t, k), ringcos(t, k)] {
                for b in [Branch::Plus, Branch::Minus] {
                    prop_assert!(eigfn_correction(&m, b).is_ok());
                }
            }
        }
    }
}
