//! Synchronization classification and Arnold-tongue sweeps over `(τ, κ)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf_solver::ring_leading_pair;
use crate::error::{invalid, Result};
use crate::models::{generator_matrix, CoupledModel, ModelKind};
use crate::perturbation::{derived_m_matrix, kt_boundary};
use crate::spectral_core::{eigenvalues_dense, leading_pair_indices, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Synchronized,
    NotSynchronized,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMethod {
    ExactMatrix,
    CFSolver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Fourier truncation for ring models.
    pub j: usize,
    /// `tol_im = tol_im_rel·|Im λ₊|`.
    pub tol_im_rel: f64,
    /// `tol_re = tol_re_rel·|Re λ₊|`.
    pub tol_re_rel: f64,
    /// Bisection tolerance on the boundary and half-width of the flip probe.
    pub kappa_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { j: 40, tol_im_rel: 1e-6, tol_re_rel: 1e-6, kappa_tol: 1e-4 }
    }
}

pub fn method_for(kind: ModelKind) -> SweepMethod {
    if kind.is_ring() {
        SweepMethod::CFSolver
    } else {
        SweepMethod::ExactMatrix
    }
}

/// The two leading eigenvalues with positive imaginary part, ordered by
/// descending real part.
pub fn leading_pair(model: &CoupledModel, opts: &ClassifyOptions) -> Result<(C64, C64)> {
    if model.kind.is_ring() {
        return ring_leading_pair(model, opts.j);
    }
    let mut ev = eigenvalues_dense("generator", generator_matrix(model)?.as_ref())?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let (a, b) = leading_pair_indices(&ev)?;
    Ok((ev[a], ev[b]))
}

/// Classification from the pair alone, without the flip probe.
fn raw_class(model: &CoupledModel, pair: (C64, C64), opts: &ClassifyOptions) -> Result<Classification> {
    let (a, b) = pair;
    let d = a - b;
    if model.kind == ModelKind::Discrete9D {
        // side of the exact coalescence locus: sign of Re[(Δλ)²·conj(u)] with
        // u the phase of the detuning coefficient (a₁−d₁)²
        let m = derived_m_matrix(model)?;
        let u = (m.a1 - m.d1) * (m.a1 - m.d1);
        let u = u / u.norm();
        let g = (d * d * u.conj()).re;
        let tol = opts.tol_re_rel * a.re.abs();
        return Ok(if d.norm() <= tol {
            Classification::Boundary
        } else if g < 0.0 {
            Classification::Synchronized
        } else {
            Classification::NotSynchronized
        });
    }
    let tol_im = opts.tol_im_rel * a.im.abs();
    let tol_re = opts.tol_re_rel * a.re.abs();
    Ok(if d.im.abs() >= tol_im {
        Classification::NotSynchronized
    } else if d.re.abs() > tol_re {
        Classification::Synchronized
    } else {
        Classification::Boundary
    })
}

fn raw_at(model: &CoupledModel, kappa: f64, opts: &ClassifyOptions) -> Result<Classification> {
    let m = model.with_coupling(kappa, model.tau)?;
    raw_class(&m, leading_pair(&m, opts)?, opts)
}

/// Classifies one parameter point. A point whose classification changes
/// within `±kappa_tol` in `κ` is reported as `Boundary`.
pub fn classify_point(model: &CoupledModel, opts: &ClassifyOptions) -> Result<Classification> {
    let here = raw_at(model, model.kappa, opts)?;
    if here == Classification::Boundary {
        return Ok(here);
    }
    let h = opts.kappa_tol;
    let lo = (model.kappa - h).max(0.0);
    let below = if lo < model.kappa { raw_at(model, lo, opts)? } else { here };
    let above = match raw_at(model, model.kappa + h, opts) {
        Ok(c) => c,
        // upper probe may leave the valid parameter range
        Err(e) if e.is_input_error() => here,
        Err(e) => return Err(e),
    };
    Ok(if below != above { Classification::Boundary } else { here })
}

fn merged(model: &CoupledModel, kappa: f64, opts: &ClassifyOptions) -> Result<bool> {
    Ok(raw_at(model, kappa, opts)? != Classification::NotSynchronized)
}

/// Lowest `κ` on `kappa_grid` at which the pair is merged, refined by
/// bisection against the preceding grid point.
pub fn refine_boundary(model: &CoupledModel, kappa_grid: &[f64], opts: &ClassifyOptions) -> Result<Option<f64>> {
    let mut prev: Option<f64> = None;
    for &k in kappa_grid {
        if merged(model, k, opts)? {
            let Some(mut lo) = prev else { return Ok(Some(k)) };
            let mut hi = k;
            while hi - lo > opts.kappa_tol {
                let mid = 0.5 * (lo + hi);
                if merged(model, mid, opts)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev = Some(k);
    }
    Ok(None)
}

/// A grid point whose classification failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub tau_index: usize,
    pub kappa_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TongueGrid {
    pub model: CoupledModel,
    pub tau_values: Vec<f64>,
    pub kappa_values: Vec<f64>,
    /// `classification[t][k]`; `None` where the point failed.
    pub classification: Vec<Vec<Option<Classification>>>,
    pub boundary_curve: Vec<Option<f64>>,
    pub analytic_line: Vec<Option<f64>>,
    pub method: SweepMethod,
    pub options: ClassifyOptions,
    /// `(tau_index, kappa_index)` of points that break monotonicity in `κ`.
    pub violations: Vec<(usize, usize)>,
    pub failures: Vec<PointFailure>,
}

fn label(c: Option<Classification>) -> &'static str {
    match c {
        Some(Classification::Synchronized) => "sync",
        Some(Classification::NotSynchronized) => "nosync",
        Some(Classification::Boundary) => "boundary",
        None => "failed",
    }
}

impl TongueGrid {
    /// Matrix CSV: one row per `τ`, one column per `κ`.
    pub fn write_classification_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let head: Vec<String> = self.kappa_values.iter().map(|k| format!("{k}")).collect();
        writeln!(w, "tau,{}", head.join(","))?;
        for (t, row) in self.tau_values.iter().zip(&self.classification) {
            let cells: Vec<&str> = row.iter().map(|c| label(*c)).collect();
            writeln!(w, "{t},{}", cells.join(","))?;
        }
        Ok(())
    }

    /// CSV `tau,kappa_star,kappa_analytic`; empty cells where undefined.
    pub fn write_boundary_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "tau,kappa_star,kappa_analytic")?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
        for ((t, b), a) in self.tau_values.iter().zip(&self.boundary_curve).zip(&self.analytic_line) {
            writeln!(w, "{t},{},{}", f(*b), f(*a))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn count(&self, c: Classification) -> usize {
        self.classification.iter().flatten().filter(|x| **x == Some(c)).count()
    }
}

/// Classifies every `(τ, κ)` point for the family of `template`, refines
/// the boundary per `τ` and overlays the first-order KT line.
pub fn sweep(template: &CoupledModel, tau_grid: &[f64], kappa_grid: &[f64], opts: &ClassifyOptions) -> Result<TongueGrid> {
    if tau_grid.is_empty() || kappa_grid.is_empty() {
        return invalid("tau and kappa grids must be nonempty");
    }
    if kappa_grid.iter().any(|k| *k < 0.0 || !k.is_finite()) || tau_grid.iter().any(|t| !t.is_finite()) {
        return invalid("grid values must be finite with kappa >= 0");
    }
    if kappa_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("kappa grid must be strictly increasing");
    }
    let nk = kappa_grid.len();
    let points: Vec<(usize, usize)> = (0..tau_grid.len()).flat_map(|t| (0..nk).map(move |k| (t, k))).collect();
    let results: Vec<Result<Classification>> = points
        .par_iter()
        .map(|&(t, k)| {
            let m = template.with_coupling(kappa_grid[k], tau_grid[t])?;
            classify_point(&m, opts)
        })
        .collect();
    let mut classification = vec![vec![None; nk]; tau_grid.len()];
    let mut failures = Vec::new();
    for (&(t, k), r) in points.iter().zip(results) {
        match r {
            Ok(c) => classification[t][k] = Some(c),
            Err(e) => failures.push(PointFailure { tau_index: t, kappa_index: k, message: e.to_string() }),
        }
    }
    let rows: Vec<(Option<f64>, Option<f64>, Option<String>)> = tau_grid
        .par_iter()
        .map(|&tau| {
            let row_model = CoupledModel { tau, kappa: 0.0, ..*template };
            let b = refine_boundary(&row_model, kappa_grid, opts);
            let a = kt_boundary(&row_model, tau);
            let err = b.as_ref().err().map(|e| e.to_string()).or_else(|| a.as_ref().err().map(|e| e.to_string()));
            (b.ok().flatten(), a.ok().flatten(), err)
        })
        .collect();
    let mut boundary_curve = Vec::with_capacity(rows.len());
    let mut analytic_line = Vec::with_capacity(rows.len());
    for (t, (b, a, e)) in rows.into_iter().enumerate() {
        boundary_curve.push(b);
        analytic_line.push(a);
        if let Some(message) = e {
            failures.push(PointFailure { tau_index: t, kappa_index: usize::MAX, message });
        }
    }
    let mut violations = Vec::new();
    for (t, row) in classification.iter().enumerate() {
        let mut seen_sync = false;
        for (k, c) in row.iter().enumerate() {
            match c {
                Some(Classification::Synchronized) => seen_sync = true,
                Some(Classification::NotSynchronized) if seen_sync => violations.push((t, k)),
                _ => {}
            }
        }
    }
    Ok(TongueGrid {
        model: *template,
        tau_values: tau_grid.to_vec(),
        kappa_values: kappa_grid.to_vec(),
        classification,
        boundary_curve,
        analytic_line,
        method: method_for(template.kind),
        options: *opts,
        violations,
        failures,
    })
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}
