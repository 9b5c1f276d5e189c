//! Dense complex eigensolvers, bi-orthonormal left/right pairing and
//! continuity-based tracking of an eigenvalue pair across a parameter sweep.

use faer::linalg::solvers::{DenseSolveCore, SolveLstsq};
use faer::{Mat, MatRef};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

/// Shorthand for a complex literal.
#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Builds a complex matrix from row slices.
pub fn cmat_from_rows(rows: &[Vec<C64>]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

/// Builds a complex matrix from a real row-major closure.
pub fn cmat_from_real(n: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    Mat::from_fn(n, n, |i, j| c(f(i, j), 0.0))
}

pub fn matvec(a: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum())
        .collect()
}

/// Unconjugated bilinear product `Σ a_i b_i`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hermitian product `Σ conj(a_i) b_i`.
pub fn hdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Frobenius norm.
pub fn fro(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Plus,
    Minus,
    Other,
}

/// One eigenvalue with its right and left eigenvectors.
///
/// After pairing, `dot(left_vec, right_vec) == 1`. Members of a defective
/// cluster carry an empty `left_vec` and `defective == true`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexEigenpair {
    pub lambda: C64,
    pub right_vec: Vec<C64>,
    pub left_vec: Vec<C64>,
    pub label: Label,
    pub defective: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Relative distance below which eigenvalues are grouped into a cluster.
    pub cluster_tol: f64,
    /// Pairing condition number above which a cluster is declared defective.
    pub max_pairing_cond: f64,
    /// Relative residual bound `‖Av − λv‖ ≤ tol·‖A‖·‖v‖`.
    pub residual_tol: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { cluster_tol: 1e-6, max_pairing_cond: 1e6, residual_tol: 1e-9 }
    }
}

/// All eigenpairs of a square complex matrix, sorted by descending real part
/// then descending imaginary part.
pub fn eig_dense(a: MatRef<'_, C64>) -> Result<Vec<ComplexEigenpair>> {
    eig_dense_with("matrix", a, EigOptions::default())
}

pub fn eig_dense_named(name: &str, a: MatRef<'_, C64>) -> Result<Vec<ComplexEigenpair>> {
    eig_dense_with(name, a, EigOptions::default())
}

pub fn eig_dense_with(name: &str, a: MatRef<'_, C64>, opts: EigOptions) -> Result<Vec<ComplexEigenpair>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidParameter(format!(
            "{name}: matrix must be square, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let fail = || Error::NoConvergence { name: name.to_string(), dim: n };
    let scale = fro(a).max(f64::MIN_POSITIVE);

    let evd = a.eigen().map_err(|_| fail())?;
    let lambdas: Vec<C64> = evd.S().column_vector().iter().copied().collect();
    let mut rights: Vec<Vec<C64>> = (0..n)
        .map(|k| {
            let col: Vec<C64> = (0..n).map(|i| evd.U()[(i, k)]).collect();
            let nv = norm(&col);
            col.into_iter().map(|x| x / nv).collect()
        })
        .collect();
    if lambdas.iter().any(|l| !l.is_finite()) || rights.iter().flatten().any(|x| !x.is_finite()) {
        return Err(fail());
    }
    for (k, r) in rights.iter().enumerate() {
        let av = matvec(a, r);
        let res: f64 = av.iter().zip(r).map(|(x, y)| (x - lambdas[k] * y).norm_sqr()).sum::<f64>().sqrt();
        if res > opts.residual_tol * scale {
            return Err(fail());
        }
    }

    // left eigenvectors from the conjugate-transpose problem
    let ah = a.adjoint().to_owned();
    let evd_h = ah.eigen().map_err(|_| fail())?;
    let mu: Vec<C64> = evd_h.S().column_vector().iter().map(|z| z.conj()).collect();
    let lefts_raw: Vec<Vec<C64>> = (0..n)
        .map(|k| (0..n).map(|i| evd_h.U()[(i, k)].conj()).collect())
        .collect();

    let clusters = cluster(&lambdas, opts.cluster_tol * scale.max(1.0));
    let mut lefts: Vec<Vec<C64>> = vec![Vec::new(); n];
    let mut defective = vec![false; n];
    let mut used = vec![false; n];
    for cl in &clusters {
        let m = cl.len();
        let centre: C64 = cl.iter().map(|&i| lambdas[i]).sum::<C64>() / m as f64;
        let mut cand: Vec<usize> = (0..n).filter(|&k| !used[k]).collect();
        cand.sort_by(|&x, &y| (mu[x] - centre).norm().total_cmp(&(mu[y] - centre).norm()));
        let pick: Vec<usize> = cand.into_iter().take(m).collect();
        for &k in &pick {
            used[k] = true;
        }
        let lmat: Vec<Vec<C64>> = pick
            .iter()
            .map(|&k| {
                let v = &lefts_raw[k];
                let nv = norm(v);
                v.iter().map(|x| x / nv).collect()
            })
            .collect();
        let g = Mat::from_fn(m, m, |p, q| dot(&lmat[p], &rights[cl[q]]));
        match pairing_inverse(&g, opts.max_pairing_cond) {
            Some(ginv) => {
                for (q, &idx) in cl.iter().enumerate() {
                    let mut l = vec![c(0.0, 0.0); n];
                    for (p, lv) in lmat.iter().enumerate() {
                        let w = ginv[(q, p)];
                        for (li, x) in l.iter_mut().zip(lv) {
                            *li += w * x;
                        }
                    }
                    lefts[idx] = l;
                }
            }
            None => {
                for &idx in cl {
                    defective[idx] = true;
                }
            }
        }
    }

    let mut out: Vec<ComplexEigenpair> = (0..n)
        .map(|k| ComplexEigenpair {
            lambda: lambdas[k],
            right_vec: std::mem::take(&mut rights[k]),
            left_vec: std::mem::take(&mut lefts[k]),
            label: Label::Other,
            defective: defective[k],
        })
        .collect();
    sort_eigenpairs(&mut out, scale);
    Ok(out)
}

/// Eigenvalues only, sorted like [`eig_dense`].
pub fn eigenvalues_dense(name: &str, a: MatRef<'_, C64>) -> Result<Vec<C64>> {
    let n = a.nrows();
    let mut ev = a.eigenvalues().map_err(|_| Error::NoConvergence { name: name.to_string(), dim: n })?;
    if ev.iter().any(|l| !l.is_finite()) {
        return Err(Error::NoConvergence { name: name.to_string(), dim: n });
    }
    let scale = fro(a).max(f64::MIN_POSITIVE);
    let q = 1e-12 * scale;
    ev.sort_by(|x, y| order_key(*y, q).partial_cmp(&order_key(*x, q)).unwrap());
    Ok(ev)
}

fn order_key(l: C64, q: f64) -> (f64, f64) {
    ((l.re / q).round(), l.im)
}

fn sort_eigenpairs(v: &mut [ComplexEigenpair], scale: f64) {
    let q = 1e-12 * scale;
    v.sort_by(|x, y| order_key(y.lambda, q).partial_cmp(&order_key(x.lambda, q)).unwrap());
}

fn cluster(l: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = l.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (l[i] - l[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn pairing_inverse(g: &CMat, max_cond: f64) -> Option<CMat> {
    if g.nrows() == 1 {
        let z = g[(0, 0)];
        return if z.norm() > 0.0 { Some(Mat::from_fn(1, 1, |_, _| z.inv())) } else { None };
    }
    // vectors are unit-normalised, so ‖G⁻¹‖ is the cluster's eigenvector conditioning
    let inv = g.partial_piv_lu().inverse();
    let cond = fro(inv.as_ref());
    if cond.is_finite() && cond < max_cond {
        Some(inv)
    } else {
        None
    }
}

/// Indices (into a sorted eigenpair list or eigenvalue list) of the leading
/// nontrivial pair: the two non-zero eigenvalues with positive imaginary part
/// and greatest real part.
pub fn leading_pair_indices(lambdas: &[C64]) -> Result<(usize, usize)> {
    let scale = lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut it = lambdas
        .iter()
        .enumerate()
        .filter(|(_, l)| l.im > tol && l.norm() > tol)
        .map(|(i, _)| i);
    match (it.next(), it.next()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::InvalidParameter("spectrum has fewer than two oscillatory eigenvalues".into())),
    }
}

/// Two eigenvalue branches followed across a parameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigSweepTrack {
    pub parameter_values: Vec<f64>,
    pub tracked_pairs: Vec<(ComplexEigenpair, ComplexEigenpair)>,
    pub coalescence_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Relative tolerance for `|λ_a − λ_b| < tol·|λ_a|`.
    pub coalescence_tol: f64,
    /// Minimum overlap of a branch with its predecessor.
    pub min_overlap: f64,
    /// Relative gap between the second and third best candidate below which
    /// the successor is ambiguous.
    pub ambiguity: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { coalescence_tol: 1e-6, min_overlap: 0.5, ambiguity: 0.01 }
    }
}

fn cosine(a: &[C64], b: &[C64]) -> f64 {
    hdot(a, b).norm() / (norm(a) * norm(b))
}

/// Follows two branches through `matrices` starting from `seed`, which must be
/// eigenpairs of the first matrix.
///
/// The pair is carried as a two-dimensional right-eigenvector subspace so the
/// tracker can pass through a coalescence where the individual eigenvectors
/// become parallel. Within the pair, labels follow the larger individual
/// overlap, falling back to eigenvalue proximity when the overlaps tie.
pub fn track_pair(
    matrices: &[CMat],
    parameter_values: &[f64],
    seed: (ComplexEigenpair, ComplexEigenpair),
    opts: TrackOptions,
) -> Result<EigSweepTrack> {
    if matrices.len() != parameter_values.len() {
        return Err(Error::InvalidParameter("one parameter value per matrix required".into()));
    }
    if matrices.is_empty() {
        return Err(Error::InvalidParameter("empty matrix sequence".into()));
    }
    let (mut a, mut b) = seed;
    a.label = Label::Plus;
    b.label = Label::Minus;
    let mut pairs = Vec::with_capacity(matrices.len());
    let mut coal = Vec::new();
    let is_coal = |x: &ComplexEigenpair, y: &ComplexEigenpair| {
        (x.lambda - y.lambda).norm() < opts.coalescence_tol * x.lambda.norm().max(f64::MIN_POSITIVE)
    };
    if is_coal(&a, &b) {
        coal.push(0);
    }
    pairs.push((a.clone(), b.clone()));

    for (k, m) in matrices.iter().enumerate().skip(1) {
        let cand = eig_dense_named(&format!("sweep matrix {k}"), m.as_ref())?;
        let basis = orthonormal_basis(&[&a.right_vec, &b.right_vec]);
        let mut scored: Vec<(usize, f64)> = cand
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s: f64 = basis.iter().map(|q| cosine(q, &p.right_vec).powi(2)).sum::<f64>().sqrt();
                (i, s)
            })
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1));
        if scored.len() < 2 {
            return Err(Error::Tracking { index: k, reason: "fewer than two eigenpairs".into() });
        }
        let (i1, s1) = scored[0];
        let (i2, s2) = scored[1];
        if s2 < opts.min_overlap || s1 < opts.min_overlap {
            return Err(Error::Tracking { index: k, reason: format!("overlap {s2:.3} below {}", opts.min_overlap) });
        }
        if let Some(&(_, s3)) = scored.get(2) {
            if s2 - s3 < opts.ambiguity * s2 {
                return Err(Error::Tracking {
                    index: k,
                    reason: format!("ambiguous successor (overlaps {s2:.4} and {s3:.4})"),
                });
            }
        }
        let (p1, p2) = (&cand[i1], &cand[i2]);
        let straight = cosine(&a.right_vec, &p1.right_vec) * cosine(&b.right_vec, &p2.right_vec);
        let swapped = cosine(&a.right_vec, &p2.right_vec) * cosine(&b.right_vec, &p1.right_vec);
        let keep = if (straight - swapped).abs() > opts.ambiguity * straight.max(swapped) {
            straight > swapped
        } else {
            let d_straight = (a.lambda - p1.lambda).norm() + (b.lambda - p2.lambda).norm();
            let d_swapped = (a.lambda - p2.lambda).norm() + (b.lambda - p1.lambda).norm();
            d_straight <= d_swapped
        };
        let (mut na, mut nb) = if keep { (p1.clone(), p2.clone()) } else { (p2.clone(), p1.clone()) };
        na.label = Label::Plus;
        nb.label = Label::Minus;
        if is_coal(&na, &nb) {
            coal.push(k);
        }
        pairs.push((na.clone(), nb.clone()));
        a = na;
        b = nb;
    }
    Ok(EigSweepTrack { parameter_values: parameter_values.to_vec(), tracked_pairs: pairs, coalescence_indices: coal })
}

fn orthonormal_basis(vs: &[&Vec<C64>]) -> Vec<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for v in vs {
        let mut w: Vec<C64> = v.to_vec();
        let nv = norm(&w);
        for q in &basis {
            let p = hdot(q, &w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= p * qi;
            }
        }
        let nw = norm(&w);
        if nw > 1e-6 * nv {
            basis.push(w.into_iter().map(|x| x / nw).collect());
        }
    }
    basis
}

/// Least-squares solution of `op·x = rhs` subject to `constraints[i]·x = 0`
/// (unconjugated), solved as one stacked system.
///
/// Returns the solution together with the operator residual norm and the
/// largest constraint violation.
pub fn bordered_lstsq(op: MatRef<'_, C64>, constraints: &[Vec<C64>], rhs: &[C64]) -> Result<(Vec<C64>, f64, f64)> {
    let (n, m) = (op.nrows(), op.ncols());
    if rhs.len() != n || constraints.iter().any(|c| c.len() != m) {
        return Err(Error::Solve("dimension mismatch in bordered system".into()));
    }
    let k = constraints.len();
    let big = Mat::from_fn(n + k, m, |i, j| if i < n { op[(i, j)] } else { constraints[i - n][j] });
    let b = Mat::from_fn(n + k, 1, |i, _| if i < n { rhs[i] } else { c(0.0, 0.0) });
    let x = big.qr().solve_lstsq(&b);
    let sol: Vec<C64> = (0..m).map(|i| x[(i, 0)]).collect();
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve("non-finite least-squares solution".into()));
    }
    let r = matvec(op, &sol);
    let res = r.iter().zip(rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let cons = constraints.iter().map(|c| dot(c, &sol).norm()).fold(0.0, f64::max);
    Ok((sol, res, cons))
}

/// Solves a square system `a·x = b` by partial-pivot LU.
pub fn solve(a: MatRef<'_, C64>, b: &[C64]) -> Result<Vec<C64>> {
    use faer::linalg::solvers::Solve;
    let n = a.nrows();
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    let v: Vec<C64> = (0..n).map(|i| x[(i, 0)]).collect();
    if v.iter().any(|z| !z.is_finite()) {
        return Err(Error::Solve("singular system".into()));
    }
    Ok(v)
}
