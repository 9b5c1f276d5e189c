//! Closed-form descriptors for observables and densities.
//!
//! Eigenfunctions and densities are carried symbolically so inner products
//! can be evaluated exactly: polynomials on R⁴ (optionally times an isotropic
//! Gaussian), truncated double Fourier series on the torus, and vectors over
//! the nine joint states.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_core::{c, C64};

/// A point of a model's state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum State {
    R4([f64; 4]),
    Torus([f64; 2]),
    Index(usize),
}

/// Sparse complex polynomial in four real variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly4 {
    pub terms: BTreeMap<[u32; 4], C64>,
}

impl Poly4 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(v: C64) -> Self {
        let mut p = Self::zero();
        p.add_term([0; 4], v);
        p
    }

    /// `Σ coeffs[i]·z_i`.
    pub fn linear(coeffs: &[C64]) -> Self {
        let mut p = Self::zero();
        for (i, &v) in coeffs.iter().enumerate().take(4) {
            let mut e = [0; 4];
            e[i] = 1;
            p.add_term(e, v);
        }
        p
    }

    /// `Σ q[i][j]·z_i z_j`.
    pub fn quadratic(q: &[[C64; 4]; 4]) -> Self {
        let mut p = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut e = [0; 4];
                e[i] += 1;
                e[j] += 1;
                p.add_term(e, q[i][j]);
            }
        }
        p
    }

    pub fn add_term(&mut self, e: [u32; 4], v: C64) {
        if v == c(0.0, 0.0) {
            return;
        }
        let t = self.terms.entry(e).or_insert(c(0.0, 0.0));
        *t += v;
    }

    pub fn add(&self, o: &Poly4) -> Poly4 {
        let mut p = self.clone();
        for (e, v) in &o.terms {
            p.add_term(*e, *v);
        }
        p
    }

    pub fn scale(&self, s: C64) -> Poly4 {
        Poly4 { terms: self.terms.iter().map(|(e, v)| (*e, v * s)).collect() }
    }

    pub fn mul(&self, o: &Poly4) -> Poly4 {
        let mut p = Poly4::zero();
        for (ea, va) in &self.terms {
            for (eb, vb) in &o.terms {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2], ea[3] + eb[3]];
                p.add_term(e, va * vb);
            }
        }
        p
    }

    /// Multiplies by the coordinate `z_i`.
    pub fn mul_var(&self, i: usize) -> Poly4 {
        Poly4 {
            terms: self
                .terms
                .iter()
                .map(|(e, v)| {
                    let mut e = *e;
                    e[i] += 1;
                    (e, *v)
                })
                .collect(),
        }
    }

    pub fn deriv(&self, i: usize) -> Poly4 {
        let mut p = Poly4::zero();
        for (e, v) in &self.terms {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                p.add_term(f, v * e[i] as f64);
            }
        }
        p
    }

    pub fn conj(&self) -> Poly4 {
        Poly4 { terms: self.terms.iter().map(|(e, v)| (*e, v.conj())).collect() }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, z: &[f64; 4]) -> C64 {
        self.terms
            .iter()
            .map(|(e, v)| v * (0..4).map(|i| z[i].powi(e[i] as i32)).product::<f64>())
            .sum()
    }

    /// Coefficient of `z_i` in the linear part.
    pub fn linear_coeffs(&self) -> [C64; 4] {
        let mut out = [c(0.0, 0.0); 4];
        for (i, o) in out.iter_mut().enumerate() {
            let mut e = [0; 4];
            e[i] = 1;
            *o = self.terms.get(&e).copied().unwrap_or(c(0.0, 0.0));
        }
        out
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `E[p(Z)]` for `Z ~ N(0, var·I)`.
    pub fn gaussian_mean(&self, var: f64) -> C64 {
        self.terms.iter().map(|(e, v)| v * e.iter().map(|&k| iso_moment(k, var)).product::<f64>()).sum()
    }

    /// `E[p(Z)]` for `Z ~ N(0, cov)`, polynomial degree at most 2.
    pub fn gaussian_mean_cov(&self, cov: &[[f64; 4]; 4]) -> Result<C64> {
        if self.degree() > 2 {
            return Err(Error::InvalidParameter("covariance moments implemented up to degree 2".into()));
        }
        let mut s = c(0.0, 0.0);
        for (e, v) in &self.terms {
            let idx: Vec<usize> = (0..4).flat_map(|i| std::iter::repeat(i).take(e[i] as usize)).collect();
            s += match idx.len() {
                0 => *v,
                2 => v * cov[idx[0]][idx[1]],
                _ => c(0.0, 0.0),
            };
        }
        Ok(s)
    }
}

fn iso_moment(k: u32, var: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = k / 2;
    let dfact: f64 = (1..k).step_by(2).map(|x| x as f64).product();
    var.powi(half as i32) * dfact
}

/// Sparse double Fourier series `Σ c_{j,k} e^{i(jx+ky)}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FourierSeries {
    pub terms: BTreeMap<(i64, i64), C64>,
}

impl FourierSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn mode(j: i64, k: i64, v: C64) -> Self {
        let mut s = Self::zero();
        s.add_term(j, k, v);
        s
    }

    pub fn add_term(&mut self, j: i64, k: i64, v: C64) {
        if v == c(0.0, 0.0) {
            return;
        }
        *self.terms.entry((j, k)).or_insert(c(0.0, 0.0)) += v;
    }

    pub fn coeff(&self, j: i64, k: i64) -> C64 {
        self.terms.get(&(j, k)).copied().unwrap_or(c(0.0, 0.0))
    }

    pub fn add(&self, o: &FourierSeries) -> FourierSeries {
        let mut s = self.clone();
        for (&(j, k), &v) in &o.terms {
            s.add_term(j, k, v);
        }
        s
    }

    pub fn scale(&self, f: C64) -> FourierSeries {
        FourierSeries { terms: self.terms.iter().map(|(m, v)| (*m, v * f)).collect() }
    }

    /// Drops coefficients with magnitude below `tol`.
    pub fn pruned(&self, tol: f64) -> FourierSeries {
        FourierSeries { terms: self.terms.iter().filter(|(_, v)| v.norm() >= tol).map(|(m, v)| (*m, *v)).collect() }
    }

    pub fn eval(&self, x: f64, y: f64) -> C64 {
        self.terms.iter().map(|(&(j, k), v)| v * C64::from_polar(1.0, j as f64 * x + k as f64 * y)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `∬ f dx dy` over the torus.
    pub fn integral(&self) -> C64 {
        self.coeff(0, 0) * 4.0 * PI * PI
    }
}

/// Symbolic observable or density.
#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    /// Polynomial observable on R⁴.
    Poly(Poly4),
    /// Density `poly(z)·N(z; 0, var·I)` on R⁴.
    GaussPoly { poly: Poly4, var: f64 },
    /// Density `N(z; 0, cov)` on R⁴.
    Gaussian { cov: [[f64; 4]; 4] },
    /// Function on the torus.
    Fourier(FourierSeries),
    /// Function or measure on the nine joint states.
    States(Vec<C64>),
}

impl Descriptor {
    pub fn eval(&self, s: &State) -> Result<C64> {
        match (self, s) {
            (Descriptor::Poly(p), State::R4(z)) => Ok(p.eval(z)),
            (Descriptor::GaussPoly { poly, var }, State::R4(z)) => Ok(poly.eval(z) * iso_gauss(z, *var)),
            (Descriptor::Gaussian { cov }, State::R4(z)) => gauss_density(z, cov),
            (Descriptor::Fourier(f), State::Torus([x, y])) => Ok(f.eval(*x, *y)),
            (Descriptor::States(v), State::Index(i)) => {
                v.get(*i).copied().ok_or_else(|| Error::InvalidParameter(format!("state {i} out of range")))
            }
            _ => Err(Error::InvalidParameter("descriptor does not match the state space".into())),
        }
    }

    /// Scales by a complex constant.
    pub fn scale(&self, s: C64) -> Descriptor {
        match self {
            Descriptor::Poly(p) => Descriptor::Poly(p.scale(s)),
            Descriptor::GaussPoly { poly, var } => Descriptor::GaussPoly { poly: poly.scale(s), var: *var },
            Descriptor::Fourier(f) => Descriptor::Fourier(f.scale(s)),
            Descriptor::States(v) => Descriptor::States(v.iter().map(|x| x * s).collect()),
            Descriptor::Gaussian { .. } => self.clone(),
        }
    }

    /// Sum of two descriptors of the same kind.
    pub fn add(&self, o: &Descriptor) -> Result<Descriptor> {
        match (self, o) {
            (Descriptor::Poly(a), Descriptor::Poly(b)) => Ok(Descriptor::Poly(a.add(b))),
            (Descriptor::GaussPoly { poly: a, var: va }, Descriptor::GaussPoly { poly: b, var: vb })
                if (va - vb).abs() <= 1e-15 * va.abs() =>
            {
                Ok(Descriptor::GaussPoly { poly: a.add(b), var: *va })
            }
            (Descriptor::Fourier(a), Descriptor::Fourier(b)) => Ok(Descriptor::Fourier(a.add(b))),
            (Descriptor::States(a), Descriptor::States(b)) if a.len() == b.len() => {
                Ok(Descriptor::States(a.iter().zip(b).map(|(x, y)| x + y).collect()))
            }
            _ => Err(Error::InvalidParameter("cannot add descriptors of different kinds".into())),
        }
    }

    /// `∫ self` over the state space (total mass for densities).
    pub fn integral(&self) -> Result<C64> {
        match self {
            Descriptor::GaussPoly { poly, var } => Ok(poly.gaussian_mean(*var)),
            Descriptor::Gaussian { .. } => Ok(c(1.0, 0.0)),
            Descriptor::Fourier(f) => Ok(f.integral()),
            Descriptor::States(v) => Ok(v.iter().sum()),
            Descriptor::Poly(_) => Err(Error::InvalidParameter("polynomial is not integrable on R⁴".into())),
        }
    }

    /// Bilinear pairing `∫ density·observable` (no conjugation).
    pub fn pairing(density: &Descriptor, obs: &Descriptor) -> Result<C64> {
        match (density, obs) {
            (Descriptor::GaussPoly { poly, var }, Descriptor::Poly(q)) => Ok(poly.mul(q).gaussian_mean(*var)),
            (Descriptor::Gaussian { cov }, Descriptor::Poly(q)) => q.gaussian_mean_cov(cov),
            (Descriptor::Fourier(p), Descriptor::Fourier(q)) => {
                let mut s = c(0.0, 0.0);
                for (&(j, k), v) in &p.terms {
                    s += v * q.coeff(-j, -k);
                }
                Ok(s * 4.0 * PI * PI)
            }
            (Descriptor::States(p), Descriptor::States(q)) if p.len() == q.len() => {
                Ok(p.iter().zip(q).map(|(a, b)| a * b).sum())
            }
            _ => Err(Error::InvalidParameter("incompatible descriptors for pairing".into())),
        }
    }

    /// `∫ f·conj(g)·density`.
    pub fn expectation(f: &Descriptor, g: &Descriptor, density: &Descriptor) -> Result<C64> {
        match (f, g) {
            (Descriptor::Poly(a), Descriptor::Poly(b)) => {
                Descriptor::pairing(density, &Descriptor::Poly(a.mul(&b.conj())))
            }
            (Descriptor::Fourier(a), Descriptor::Fourier(b)) => {
                let Descriptor::Fourier(p) = density else {
                    return Err(Error::InvalidParameter("torus observables need a Fourier density".into()));
                };
                let mut s = c(0.0, 0.0);
                for (&(ja, ka), va) in &a.terms {
                    for (&(jb, kb), vb) in &b.terms {
                        s += va * vb.conj() * p.coeff(jb - ja, kb - ka);
                    }
                }
                Ok(s * 4.0 * PI * PI)
            }
            (Descriptor::States(a), Descriptor::States(b)) => {
                let Descriptor::States(p) = density else {
                    return Err(Error::InvalidParameter("state observables need a state density".into()));
                };
                if a.len() != b.len() || a.len() != p.len() {
                    return Err(Error::InvalidParameter("state vector length mismatch".into()));
                }
                Ok(a.iter().zip(b).zip(p).map(|((x, y), w)| x * y.conj() * w).sum())
            }
            _ => Err(Error::InvalidParameter("incompatible descriptors for expectation".into())),
        }
    }

    /// Rescales an observable to unit variance `∫|f|²·density = 1`.
    pub fn normalized(&self, density: &Descriptor) -> Result<Descriptor> {
        let v = Descriptor::expectation(self, self, density)?.re;
        if !(v > 0.0) {
            return Err(Error::InvalidParameter("observable has zero variance".into()));
        }
        Ok(self.scale(c(1.0 / v.sqrt(), 0.0)))
    }
}

fn iso_gauss(z: &[f64; 4], var: f64) -> f64 {
    let r2: f64 = z.iter().map(|x| x * x).sum();
    (-r2 / (2.0 * var)).exp() / (2.0 * PI * var).powi(2)
}

fn gauss_density(z: &[f64; 4], cov: &[[f64; 4]; 4]) -> Result<C64> {
    let a = crate::spectral_core::cmat_from_real(4, |i, j| cov[i][j]);
    let zc: Vec<C64> = z.iter().map(|&x| c(x, 0.0)).collect();
    let sol = crate::spectral_core::solve(a.as_ref(), &zc)?;
    let q: f64 = sol.iter().zip(z).map(|(s, x)| s.re * x).sum();
    let det = a.as_ref().determinant().re;
    if !(det > 0.0) {
        return Err(Error::InvalidParameter("covariance is not positive definite".into()));
    }
    Ok(c((-0.5 * q).exp() / ((2.0 * PI).powi(2) * det.sqrt()), 0.0))
}
