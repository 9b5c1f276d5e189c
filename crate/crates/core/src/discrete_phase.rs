//! Phase locking of the nine-state system seen through its two three-state
//! subsystems.
//!
//! The leading backward eigenvectors `q₊`, `q₋` of the joint chain are
//! projected onto oscillator A (`P_A = [I I I]`, summing over B's state) and
//! oscillator B (`P_B = I ⊗ [1 1 1]`, summing over A's state). Above the KT
//! point the argument differences of the projections stop changing with `κ`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::{discrete_stationary, generator_matrix, CoupledModel, ModelKind};
use crate::spectral_core::{c, eig_dense_named, leading_pair_indices, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPhases {
    pub kappa_values: Vec<f64>,
    /// `arg(P_A q₊)` per state of A.
    pub phase_a: Vec<[f64; 3]>,
    /// `arg(P_B q₋)` per state of B.
    pub phase_b: Vec<[f64; 3]>,
    /// `phase_a − phase_b` per state.
    pub phase_diff: Vec<[f64; 3]>,
    /// Successive differences `arg a_{i+1} − arg a_i` within `P_A q₊`.
    pub within_a: Vec<[f64; 3]>,
    pub within_b: Vec<[f64; 3]>,
    /// True where a projected component vanishes and its argument is undefined.
    pub flagged: Vec<bool>,
}

/// `P_A v`: component `i` is `Σ_j v[i + 3j]`.
pub fn project_a(v: &[C64]) -> [C64; 3] {
    let mut out = [c(0.0, 0.0); 3];
    for (s, x) in v.iter().enumerate() {
        out[s % 3] += x;
    }
    out
}

/// `P_B v`: component `j` is `Σ_i v[i + 3j]`.
pub fn project_b(v: &[C64]) -> [C64; 3] {
    let mut out = [c(0.0, 0.0); 3];
    for (s, x) in v.iter().enumerate() {
        out[s / 3] += x;
    }
    out
}

/// Gauge-fixed leading pair `(q₊, q₋)` of the backward generator: unit
/// variance under the stationary vector, `q₊[0]` real positive and
/// `E[q₊·conj(q₋)]` real nonnegative.
pub fn aligned_pair(model: &CoupledModel) -> Result<(Vec<C64>, Vec<C64>)> {
    if model.kind != ModelKind::Discrete9D {
        return invalid("projected phases are defined for the discrete model");
    }
    let p = discrete_stationary(model)?;
    let ct = generator_matrix(model)?.transpose().to_owned();
    let pairs = eig_dense_named("discrete backward generator", ct.as_ref())?;
    let lambdas: Vec<C64> = pairs.iter().map(|q| q.lambda).collect();
    let (ia, ib) = leading_pair_indices(&lambdas)?;
    let unit = |v: &[C64]| -> Vec<C64> {
        let var: f64 = v.iter().zip(&p).map(|(x, w)| x.norm_sqr() * w).sum();
        v.iter().map(|x| x / var.sqrt()).collect()
    };
    let mut qp = unit(&pairs[ia].right_vec);
    let mut qm = unit(&pairs[ib].right_vec);
    if qp[0].norm() > 0.0 {
        let ph = qp[0].conj() / qp[0].norm();
        qp.iter_mut().for_each(|x| *x *= ph);
    }
    let z: C64 = qp.iter().zip(&qm).zip(&p).map(|((a, b), w)| a * b.conj() * w).sum();
    if z.norm() > 1e-12 {
        let rot = C64::from_polar(1.0, z.arg());
        qm.iter_mut().for_each(|x| *x *= rot);
    }
    Ok((qp, qm))
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Adds the multiple of `2π` that keeps each entry closest to its predecessor.
fn unwrap_series(v: &mut [[f64; 3]]) {
    for k in 1..v.len() {
        for i in 0..3 {
            let prev = v[k - 1][i];
            let d = v[k][i] - prev;
            v[k][i] -= 2.0 * PI * (d / (2.0 * PI)).round();
        }
    }
}

/// Projected phases and their differences along `kappa_grid`.
pub fn project_and_diff(model: &CoupledModel, kappa_grid: &[f64]) -> Result<ProjectedPhases> {
    if kappa_grid.is_empty() {
        return invalid("kappa grid must be nonempty");
    }
    let mut out = ProjectedPhases {
        kappa_values: kappa_grid.to_vec(),
        phase_a: Vec::new(),
        phase_b: Vec::new(),
        phase_diff: Vec::new(),
        within_a: Vec::new(),
        within_b: Vec::new(),
        flagged: Vec::new(),
    };
    for &k in kappa_grid {
        let m = model.with_coupling(k, model.tau)?;
        let (qp, qm) = aligned_pair(&m)?;
        let (a, b) = (project_a(&qp), project_b(&qm));
        let scale = qp.iter().chain(&qm).map(|x| x.norm()).fold(0.0, f64::max);
        let flag = a.iter().chain(&b).any(|x| x.norm() <= 1e-10 * scale);
        let pa = a.map(|x| wrap(x.arg()));
        let pb = b.map(|x| wrap(x.arg()));
        out.phase_diff.push([0, 1, 2].map(|i| wrap(pa[i] - pb[i])));
        out.within_a.push([0, 1, 2].map(|i| wrap(pa[(i + 1) % 3] - pa[i])));
        out.within_b.push([0, 1, 2].map(|i| wrap(pb[(i + 1) % 3] - pb[i])));
        out.phase_a.push(pa);
        out.phase_b.push(pb);
        out.flagged.push(flag);
    }
    for s in [&mut out.phase_a, &mut out.phase_b, &mut out.phase_diff, &mut out.within_a, &mut out.within_b] {
        unwrap_series(s);
    }
    Ok(out)
}

impl ProjectedPhases {
    /// CSV: `kappa`, three within-A differences, three within-B differences,
    /// three cross differences, `flagged`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "kappa,within_a0,within_a1,within_a2,within_b0,within_b1,within_b2,cross0,cross1,cross2,flagged")?;
        for k in 0..self.kappa_values.len() {
            let row: Vec<String> = self.within_a[k]
                .iter()
                .chain(&self.within_b[k])
                .chain(&self.phase_diff[k])
                .map(|v| format!("{v:.12}"))
                .collect();
            writeln!(w, "{},{},{}", self.kappa_values[k], row.join(","), self.flagged[k])?;
        }
        Ok(())
    }

    /// Largest spread `max − min` of any cross-difference component over
    /// grid points with `lo < κ ≤ hi`.
    pub fn cross_variation(&self, lo: f64, hi: f64) -> f64 {
        let idx: Vec<usize> =
            (0..self.kappa_values.len()).filter(|&i| self.kappa_values[i] > lo && self.kappa_values[i] <= hi).collect();
        (0..3)
            .map(|c| {
                let vals = idx.iter().map(|&i| self.phase_diff[i][c]);
                let mx = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                let mn = vals.fold(f64::INFINITY, f64::min);
                if mx >= mn {
                    mx - mn
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}
