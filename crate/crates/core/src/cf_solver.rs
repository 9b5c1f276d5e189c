//! Fourier–Galerkin solver for the ring models.
//!
//! In the basis `e^{i(jx+ky)}` the backward operator only couples modes with
//! the same lattice index `N = j+k`, so each lattice is a tridiagonal system in
//! `z_j = c_{j, N−j}`, `j ∈ [−J, J]`. Eigenvalues come from dense
//! diagonalization of that block; eigenfunctions are rebuilt from
//! continued-fraction ratios.

use std::f64::consts::PI;
use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::descriptor::FourierSeries;
use crate::error::{invalid, Error, Result};
use crate::models::{ring_backward_mode, ring_forward_mode, CoupledModel};
use crate::spectral_core::{c, eig_dense_named, eigenvalues_dense, CMat, ComplexEigenpair, C64};

/// Tridiagonal block of one lattice `N`. Row `i` (mode `j = i − J`) reads
/// `sub[i]·z_{j−1} + diag[i]·z_j + sup[i]·z_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalBlock {
    pub n: i64,
    pub j: usize,
    pub sub: Vec<C64>,
    pub diag: Vec<C64>,
    pub sup: Vec<C64>,
}

impl TridiagonalBlock {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_dense(&self) -> CMat {
        let m = self.len();
        Mat::from_fn(m, m, |r, s| {
            if r == s {
                self.diag[r]
            } else if s + 1 == r {
                self.sub[r]
            } else if r + 1 == s {
                self.sup[r]
            } else {
                c(0.0, 0.0)
            }
        })
    }

    /// `(T − λ) z`.
    pub fn apply_shifted(&self, lambda: C64, z: &[C64]) -> Vec<C64> {
        let m = self.len();
        (0..m)
            .map(|r| {
                let mut v = (self.diag[r] - lambda) * z[r];
                if r > 0 {
                    v += self.sub[r] * z[r - 1];
                }
                if r + 1 < m {
                    v += self.sup[r] * z[r + 1];
                }
                v
            })
            .collect()
    }

    fn scale(&self) -> f64 {
        self.diag.iter().chain(&self.sub).chain(&self.sup).map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn check_ring(model: &CoupledModel, jmax: usize) -> Result<()> {
    if !model.kind.is_ring() {
        return Err(Error::Unsupported { model: model.kind.name(), what: "Fourier solver needs a ring model".into() });
    }
    if jmax < 4 {
        return invalid(format!("truncation J must be at least 4, got {jmax}"));
    }
    Ok(())
}

/// Tridiagonal block of the backward (`forward = false`) or forward operator.
pub fn tridiagonal(model: &CoupledModel, n: i64, jmax: usize, forward: bool) -> Result<TridiagonalBlock> {
    check_ring(model, jmax)?;
    let ji = jmax as i64;
    let rule = |j: i64| {
        if forward {
            ring_forward_mode(model, j, n - j)
        } else {
            ring_backward_mode(model, j, n - j)
        }
    };
    let m = 2 * jmax + 1;
    let (mut sub, mut diag, mut sup) = (vec![c(0.0, 0.0); m], vec![c(0.0, 0.0); m], vec![c(0.0, 0.0); m]);
    for (i, j) in (-ji..=ji).enumerate() {
        let [(_, _, d), (_, _, lo), (_, _, hi)] = rule(j);
        diag[i] = d;
        // source j feeds row j−1 through `lo` and row j+1 through `hi`
        if i > 0 {
            sup[i - 1] = lo;
        }
        if i + 1 < m {
            sub[i + 1] = hi;
        }
    }
    Ok(TridiagonalBlock { n, j: jmax, sub, diag, sup })
}

/// Truncated spectrum of one lattice.
#[derive(Debug, Clone)]
pub struct RingSpectrum {
    pub n: i64,
    pub j: usize,
    /// Sorted by descending real part.
    pub pairs: Vec<ComplexEigenpair>,
    /// Set when the leading eigenvalue moves by more than 1e-8 at `J + 10`.
    pub warning: Option<String>,
}

fn convergence_warning(model: &CoupledModel, n: i64, jmax: usize, forward: bool, lead: C64) -> Result<Option<String>> {
    let wider = tridiagonal(model, n, jmax + 10, forward)?;
    let ev = eigenvalues_dense("ring block", wider.to_dense().as_ref())?;
    let l2 = ev.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re)).unwrap_or(lead);
    let shift = (l2 - lead).norm();
    Ok((shift > 1e-8).then(|| format!("leading eigenvalue moves by {shift:.3e} from J={jmax} to J={}", jmax + 10)))
}

/// Eigenpairs of the backward operator on lattice `n` truncated at `|j| ≤ J`.
pub fn ring_spectrum(model: &CoupledModel, n: i64, jmax: usize) -> Result<RingSpectrum> {
    let t = tridiagonal(model, n, jmax, false)?;
    let pairs = eig_dense_named("ring backward block", t.to_dense().as_ref())?;
    let warning = convergence_warning(model, n, jmax, false, pairs[0].lambda)?;
    Ok(RingSpectrum { n, j: jmax, pairs, warning })
}

/// Eigenpairs of the forward operator on lattice `−n`, which carries the same
/// spectrum as the backward operator on lattice `n`.
pub fn ring_forward_spectrum(model: &CoupledModel, n: i64, jmax: usize) -> Result<RingSpectrum> {
    let t = tridiagonal(model, -n, jmax, true)?;
    let pairs = eig_dense_named("ring forward block", t.to_dense().as_ref())?;
    let warning = convergence_warning(model, -n, jmax, true, pairs[0].lambda)?;
    Ok(RingSpectrum { n: -n, j: jmax, pairs, warning })
}

/// Backward eigenvalues only, sorted by descending real part.
pub fn ring_eigenvalues(model: &CoupledModel, n: i64, jmax: usize) -> Result<Vec<C64>> {
    let t = tridiagonal(model, n, jmax, false)?;
    let mut ev = eigenvalues_dense("ring backward block", t.to_dense().as_ref())?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(ev)
}

/// The two leading backward eigenvalues on lattice `N = 1`.
pub fn ring_leading_pair(model: &CoupledModel, jmax: usize) -> Result<(C64, C64)> {
    let ev = ring_eigenvalues(model, 1, jmax)?;
    Ok((ev[0], ev[1]))
}

/// Solves a tridiagonal system by the Thomas algorithm.
fn thomas(sub: &[C64], diag: &[C64], sup: &[C64], rhs: &[C64]) -> Result<Vec<C64>> {
    let m = diag.len();
    let mut cp = vec![c(0.0, 0.0); m];
    let mut dp = vec![c(0.0, 0.0); m];
    for i in 0..m {
        let denom = if i == 0 { diag[0] } else { diag[i] - sub[i] * cp[i - 1] };
        if denom.norm() == 0.0 || !denom.is_finite() {
            return Err(Error::Solve(format!("zero pivot at row {i} of tridiagonal solve")));
        }
        cp[i] = if i + 1 < m { sup[i] / denom } else { c(0.0, 0.0) };
        dp[i] = if i == 0 { rhs[0] / denom } else { (rhs[i] - sub[i] * dp[i - 1]) / denom };
    }
    let mut x = vec![c(0.0, 0.0); m];
    for i in (0..m).rev() {
        x[i] = if i + 1 < m { dp[i] - cp[i] * x[i + 1] } else { dp[i] };
    }
    Ok(x)
}

/// Coefficient vector on one lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    pub n: i64,
    pub j: usize,
    /// Continued-fraction depth, if the field came from [`cf_eigenfunction`].
    pub m: Option<usize>,
    pub lambda: Option<C64>,
    /// `z_j` for `j = −J..=J`.
    pub coeffs: Vec<C64>,
    /// True when the direct eigenvector replaced the continued fraction.
    pub fallback: bool,
    /// Relative residual `‖(T−λ)z‖ / (‖T‖·‖z‖)`.
    pub residual: f64,
}

impl FourierField {
    /// `z_j`, zero outside the truncation.
    pub fn coeff(&self, j: i64) -> C64 {
        let i = j + self.j as i64;
        if i < 0 || i as usize >= self.coeffs.len() {
            c(0.0, 0.0)
        } else {
            self.coeffs[i as usize]
        }
    }

    pub fn to_series(&self) -> FourierSeries {
        let mut s = FourierSeries::zero();
        for (i, v) in self.coeffs.iter().enumerate() {
            let j = i as i64 - self.j as i64;
            s.add_term(j, self.n - j, *v);
        }
        s
    }

    pub fn eval(&self, x: f64, y: f64) -> C64 {
        let jj = self.j as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = (i as i64 - jj) as f64;
                let k = (self.n - (i as i64 - jj)) as f64;
                v * C64::from_polar(1.0, j * x + k * y)
            })
            .sum()
    }

    /// CSV with columns `j,k,re,im`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "j,k,re,im")?;
        for (i, v) in self.coeffs.iter().enumerate() {
            let j = i as i64 - self.j as i64;
            writeln!(w, "{},{},{:.17e},{:.17e}", j, self.n - j, v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Stationary density on lattice 0 with `c_{0,0} = 1/(4π²)`.
pub fn stationary_field(model: &CoupledModel, jmax: usize) -> Result<FourierField> {
    model.require_noise()?;
    let t = tridiagonal(model, 0, jmax, true)?;
    let r0 = c(1.0 / (4.0 * PI * PI), 0.0);
    let ji = jmax;
    let mut z = vec![c(0.0, 0.0); 2 * jmax + 1];
    z[ji] = r0;
    // rows j = 1..J
    {
        let rows = ji + 1..2 * ji + 1;
        let sub: Vec<C64> = rows.clone().map(|r| t.sub[r]).collect();
        let diag: Vec<C64> = rows.clone().map(|r| t.diag[r]).collect();
        let sup: Vec<C64> = rows.clone().map(|r| t.sup[r]).collect();
        let mut rhs = vec![c(0.0, 0.0); ji];
        rhs[0] = -t.sub[ji + 1] * r0;
        let x = thomas(&sub, &diag, &sup, &rhs)?;
        z[ji + 1..].copy_from_slice(&x);
    }
    // rows j = −J..−1
    {
        let rows = 0..ji;
        let sub: Vec<C64> = rows.clone().map(|r| t.sub[r]).collect();
        let diag: Vec<C64> = rows.clone().map(|r| t.diag[r]).collect();
        let sup: Vec<C64> = rows.clone().map(|r| t.sup[r]).collect();
        let mut rhs = vec![c(0.0, 0.0); ji];
        rhs[ji - 1] = -t.sup[ji - 1] * r0;
        let x = thomas(&sub, &diag, &sup, &rhs)?;
        z[..ji].copy_from_slice(&x);
    }
    let res = relative_residual(&t, c(0.0, 0.0), &z);
    if res > 1e-8 {
        return Err(Error::Solve(format!("stationary field residual {res:.3e}")));
    }
    Ok(FourierField { n: 0, j: jmax, m: None, lambda: Some(c(0.0, 0.0)), coeffs: z, fallback: false, residual: res })
}

fn relative_residual(t: &TridiagonalBlock, lambda: C64, z: &[C64]) -> f64 {
    let r = t.apply_shifted(lambda, z);
    let rn = r.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let zn = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    rn / ((t.scale() + lambda.norm()) * zn).max(f64::MIN_POSITIVE)
}

/// `M`-th approximant `b₀ + a₁/(b₁ + a₂/(b₂ + …))` via the fundamental
/// recurrences; `None` when the denominator vanishes.
fn cf_value(a: impl Fn(usize) -> C64, b: impl Fn(usize) -> C64, depth: usize) -> Option<C64> {
    let (mut a_prev, mut a_cur) = (c(1.0, 0.0), b(0));
    let (mut b_prev, mut b_cur) = (c(0.0, 0.0), c(1.0, 0.0));
    for k in 1..=depth {
        let (ak, bk) = (a(k), b(k));
        let a_next = bk * a_cur + ak * a_prev;
        let b_next = bk * b_cur + ak * b_prev;
        a_prev = a_cur;
        b_prev = b_cur;
        a_cur = a_next;
        b_cur = b_next;
        let s = a_cur.norm().max(b_cur.norm());
        if s > 1e100 || (s < 1e-100 && s > 0.0) {
            a_prev /= s;
            b_prev /= s;
            a_cur /= s;
            b_cur /= s;
        }
    }
    let v = a_cur / b_cur;
    (b_cur.norm() > 0.0 && v.is_finite()).then_some(v)
}

/// Eigenfunction for `lambda` on lattice `n`, rebuilt from continued-fraction
/// ratios of depth `m` and normalised to unit variance under the stationary
/// density.
pub fn cf_eigenfunction(model: &CoupledModel, lambda: C64, n: i64, jmax: usize, m: usize) -> Result<FourierField> {
    let t = tridiagonal(model, n, jmax, false)?;
    let len = t.len();
    let q = |i: usize| t.diag[i] - lambda;
    let direct = direct_eigenvector(&t, lambda)?;
    let anchor = {
        let center = jmax;
        let dn = direct.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if direct[center].norm() >= 1e-8 * dn {
            center
        } else {
            let best = direct.iter().map(|x| x.norm()).fold(0.0, f64::max);
            (0..len)
                .filter(|&i| direct[i].norm() >= best * (1.0 - 1e-12))
                .min_by_key(|&i| (i as i64 - center as i64).abs())
                .unwrap_or(center)
        }
    };

    let mut z = vec![c(0.0, 0.0); len];
    z[anchor] = c(1.0, 0.0);
    let mut ok = true;
    // upward: z_{i+1} = S_i z_i
    for i in anchor..len - 1 {
        let depth = m.min(len - 2 - i);
        let denom = cf_value(|k| -t.sup[i + k] * t.sub[i + k + 1], |k| q(i + k + 1), depth);
        match denom {
            Some(d) if d.norm() > 0.0 => z[i + 1] = -t.sub[i + 1] / d * z[i],
            _ => {
                ok = false;
                break;
            }
        }
    }
    // downward: z_{i−1} = R_i z_i
    if ok {
        for i in (1..=anchor).rev() {
            let depth = m.min(i - 1);
            let denom = cf_value(|k| -t.sub[i - k] * t.sup[i - k - 1], |k| q(i - k - 1), depth);
            match denom {
                Some(d) if d.norm() > 0.0 => z[i - 1] = -t.sup[i - 1] / d * z[i],
                _ => {
                    ok = false;
                    break;
                }
            }
        }
    }
    if ok && z.iter().any(|x| !x.is_finite()) {
        ok = false;
    }
    let mut fallback = false;
    let mut res = if ok { relative_residual(&t, lambda, &z) } else { f64::INFINITY };
    if !ok || res > 1e-6 {
        fallback = true;
        z = direct;
        res = relative_residual(&t, lambda, &z);
        if res > 1e-6 {
            return Err(Error::Solve(format!("{lambda} is not an eigenvalue of lattice {n} (residual {res:.3e})")));
        }
    }
    let mut field = FourierField { n, j: jmax, m: Some(m), lambda: Some(lambda), coeffs: z, fallback, residual: res };
    normalize_field(model, &mut field, anchor)?;
    Ok(field)
}

/// Eigenvector of the truncated block by inverse iteration; a single unit
/// mode when the block is diagonal.
fn direct_eigenvector(t: &TridiagonalBlock, lambda: C64) -> Result<Vec<C64>> {
    let len = t.len();
    let center = t.j as i64;
    if t.sub.iter().chain(&t.sup).all(|x| x.norm() == 0.0) {
        let dist = |i: usize| (t.diag[i] - lambda).norm();
        let best = (0..len).map(dist).fold(f64::INFINITY, f64::min);
        let i = (0..len)
            .filter(|&i| dist(i) <= best + 1e-12 * t.scale())
            .min_by_key(|&i| (i as i64 - center).abs())
            .unwrap_or(t.j);
        let mut v = vec![c(0.0, 0.0); len];
        v[i] = c(1.0, 0.0);
        return Ok(v);
    }
    let shift = lambda + c(1e-10, 1e-10) * (t.scale() + lambda.norm());
    let d: Vec<C64> = t.diag.iter().map(|x| x - shift).collect();
    let mut v: Vec<C64> = (0..len).map(|i| c(1.0, 0.1 * i as f64).unscale(len as f64)).collect();
    for _ in 0..4 {
        v = thomas(&t.sub, &d, &t.sup, &v)?;
        let nv = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
    }
    Ok(v)
}

/// `E|Q|²` of a lattice field under the stationary density `p` (lattice 0).
pub fn field_variance(field: &FourierField, p: &FourierField) -> f64 {
    let len = field.coeffs.len() as i64;
    let mut s = c(0.0, 0.0);
    for a in 0..len {
        let za = field.coeffs[a as usize];
        if za.norm() == 0.0 {
            continue;
        }
        for b in 0..len {
            s += za * field.coeffs[b as usize].conj() * p.coeff(b - a);
        }
    }
    (s * 4.0 * PI * PI).re
}

fn normalize_field(model: &CoupledModel, field: &mut FourierField, anchor: usize) -> Result<()> {
    let p = stationary_field(model, field.j)?;
    let v = field_variance(field, &p);
    if !(v > 0.0) {
        return Err(Error::Solve("eigenfunction has zero variance".into()));
    }
    let ph = field.coeffs[anchor].conj() / field.coeffs[anchor].norm().max(f64::MIN_POSITIVE);
    let s = ph / v.sqrt();
    field.coeffs.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{derived_m_matrix, splitting_report};
    use crate::spectral_core::{dot, hdot, norm};

    fn ring(t: f64, k: f64) -> CoupledModel {
        CoupledModel::ring2d(2.0, 0.1, t, k).unwrap()
    }

    #[test]
    fn tridiagonal_entries() {
        let (k, t) = (0.3, 0.2);
        let m = ring(t, k);
        let n = 1;
        let b = tridiagonal(&m, n, 5, false).unwrap();
        for (i, j) in (-5i64..=5).enumerate() {
            let (jf, nf) = (j as f64, n as f64);
            let d = c(-0.1 * (jf * jf + (nf - jf).powi(2)), 2.2 * jf + 2.0 * (nf - jf));
            assert!((b.diag[i] - d).norm() < 1e-14);
            if i > 0 {
                assert!((b.sub[i] - c(k / 2.0 * (nf - 2.0 * (jf - 1.0)), 0.0)).norm() < 1e-14);
            }
            if i < 10 {
                assert!((b.sup[i] - c(k / 2.0 * (2.0 * (jf + 1.0) - nf), 0.0)).norm() < 1e-14);
            }
        }
        let cb = tridiagonal(&CoupledModel::ring_cos2d(2.0, 0.1, t, k).unwrap(), 3, 5, false).unwrap();
        assert!((cb.sub[3] - c(0.0, k * 1.5)).norm() < 1e-14 && (cb.sup[3] - c(0.0, k * 1.5)).norm() < 1e-14);
    }

    #[test]
    fn forward_is_reversed_transpose() {
        for m in [ring(0.3, 0.4), CoupledModel::ring_cos2d(2.0, 0.1, 0.3, 0.4).unwrap()] {
            let b = tridiagonal(&m, 1, 6, false).unwrap().to_dense();
            let f = tridiagonal(&m, -1, 6, true).unwrap().to_dense();
            let len = b.nrows();
            for r in 0..len {
                for s in 0..len {
                    assert!((f[(len - 1 - r, len - 1 - s)] - b[(s, r)]).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(tridiagonal(&ring(0.0, 0.0), 1, 3, false).is_err());
        let lin = CoupledModel::linear4d(0.1, 2.0, 0.1, 0.0, 0.0).unwrap();
        assert!(matches!(ring_eigenvalues(&lin, 1, 10), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn uncoupled_leading_pair() {
        let (a, b) = ring_leading_pair(&ring(0.0, 0.0), 250).unwrap();
        assert!((a - c(-0.1, 2.0)).norm() < 1e-8 && (b - c(-0.1, 2.0)).norm() < 1e-8);
    }

    #[test]
    fn conjugate_lattice() {
        let m = ring(0.2, 0.3);
        let p = ring_eigenvalues(&m, 1, 30).unwrap();
        let q = ring_eigenvalues(&m, -1, 30).unwrap();
        for l in &p {
            let best = q.iter().map(|x| (x - l.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
    }

    #[test]
    fn forward_spectrum_matches() {
        let m = ring(0.2, 0.3);
        let b = ring_spectrum(&m, 1, 40).unwrap();
        let f = ring_forward_spectrum(&m, 1, 40).unwrap();
        assert!(b.warning.is_none());
        for p in &b.pairs {
            let best = f.pairs.iter().map(|x| (x.lambda - p.lambda).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8);
        }
        // biorthonormal: forward vector on lattice −1 reversed pairs with backward
        let (q, pf) = (&b.pairs[0], f.pairs.iter().min_by(|x, y| (x.lambda - b.pairs[0].lambda).norm().total_cmp(&(y.lambda - b.pairs[0].lambda).norm())).unwrap());
        let rev: Vec<C64> = pf.right_vec.iter().rev().copied().collect();
        let g = dot(&rev, &q.right_vec);
        let other = dot(&rev, &b.pairs[1].right_vec);
        assert!(g.norm() > 1e-3 && (other / g).norm() < 1e-8);
    }

    #[test]
    fn stationary_uncoupled_uniform() {
        let p = stationary_field(&ring(0.0, 0.0), 20).unwrap();
        assert!((p.coeff(0) - c(1.0 / (4.0 * PI * PI), 0.0)).norm() < 1e-15);
        assert!(p.coeffs.iter().enumerate().all(|(i, z)| i == 20 || z.norm() < 1e-15));
        let f = ring_forward_spectrum(&ring(0.0, 0.0), 0, 10).unwrap();
        assert!(f.pairs[0].lambda.norm() < 1e-12);
    }

    #[test]
    fn stationary_first_order() {
        let (k, d) = (0.02, 0.1);
        let p = stationary_field(&ring(0.0, k), 60).unwrap();
        let want = k / (8.0 * PI * PI * d);
        assert!((p.coeff(1).re - want).abs() < 0.1 * want);
        assert!((p.coeff(-1).re - want).abs() < 0.1 * want);
        let eps = 1e-5;
        let p = stationary_field(&ring(0.0, k * eps), 60).unwrap();
        assert!((p.coeff(1).re / eps - want).abs() < 1e-4 * want);
    }

    #[test]
    fn uncoupled_field_is_single_mode() {
        let f = cf_eigenfunction(&ring(0.0, 0.0), c(-0.1, 2.0), 1, 250, 50).unwrap();
        assert_eq!(f.m, Some(50));
        let big: Vec<usize> = (0..f.coeffs.len()).filter(|&i| f.coeffs[i].norm() > 1e-12).collect();
        assert_eq!(big.len(), 1);
        assert!((f.coeffs[big[0]] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cf_matches_dense_eigenvector() {
        for (t, k) in [(0.5, 0.2), (0.5, 0.38), (0.1, 0.3), (0.0, 0.25)] {
            let m = ring(t, k);
            let s = ring_spectrum(&m, 1, 60).unwrap();
            for p in &s.pairs[..2] {
                let f = cf_eigenfunction(&m, p.lambda, 1, 60, 50).unwrap();
                assert!(!f.fallback, "fallback at {t},{k}");
                assert!(f.residual < 1e-6);
                let cs = hdot(&p.right_vec, &f.coeffs).norm() / (norm(&p.right_vec) * norm(&f.coeffs));
                assert!(cs >= 1.0 - 1e-6, "cosine {cs}");
                let st = stationary_field(&m, 60).unwrap();
                assert!((field_variance(&f, &st) - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_non_eigenvalue() {
        assert!(cf_eigenfunction(&ring(0.2, 0.3), c(-0.5, 1.0), 1, 30, 20).is_err());
    }

    #[test]
    fn cos_first_order_matches_m() {
        // leading pair − λ₁ ≈ eigenvalues of M at small coupling
        let eps = 1e-3;
        let m = CoupledModel::ring_cos2d(2.0, 0.1, 0.3 * eps, 0.4 * eps).unwrap();
        let ev = ring_eigenvalues(&m, 1, 30).unwrap();
        let r = splitting_report(&derived_m_matrix(&m).unwrap());
        for lc in [r.lambda_c_plus, r.lambda_c_minus] {
            let want = c(-0.1, 2.0) + lc;
            let best = ev.iter().map(|x| (x - want).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-5, "{best}");
        }
    }

    #[test]
    fn ring_first_order_slope() {
        let mut errs = Vec::new();
        let epss = [0.02, 0.04, 0.08, 0.16];
        for eps in epss {
            let m = ring(0.3 * eps, 0.5 * eps);
            let (a, _) = ring_leading_pair(&m, 40).unwrap();
            let r = splitting_report(&derived_m_matrix(&m).unwrap());
            errs.push((a - (c(-0.1, 2.0) + r.lambda_c_plus)).norm());
        }
        let slope = (errs[3] / errs[0]).ln() / (epss[3] / epss[0] as f64).ln();
        assert!(slope >= 1.8, "{slope} {errs:?}");
    }

    #[test]
    fn field_export() {
        let f = cf_eigenfunction(&ring(0.1, 0.1), ring_leading_pair(&ring(0.1, 0.1), 10).unwrap().0, 1, 10, 10).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("j,k,re,im\n-10,11,"));
        assert_eq!(s.lines().count(), 22);
        let back: FourierField = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let (x, y) = (0.7, 2.1);
        assert!((f.eval(x, y) - f.to_series().eval(x, y)).norm() < 1e-12);
    }
}
