//! One function per subcommand. Each reads the resolved configuration and
//! writes its tables through an [`Emitter`].

use std::f64::consts::PI;

use anyhow::{anyhow, Result};
use qsync::cf_solver::{cf_eigenfunction, ring_leading_pair, stationary_field};
use qsync::descriptor::{Descriptor, Poly4};
use qsync::discrete_phase::project_and_diff;
use qsync::models::{
    discrete_stationary, exact_q_pair, joint_index, stationary_covariance, unperturbed_eigendata, CoupledModel,
    ModelKind,
};
use qsync::perturbation::{build_m_matrix, kt_boundary, splitting_report, stationary_correction};
use qsync::simulate::{
    em_q_series, em_stream, gillespie, gillespie_events, occupancy, q_series, EmOptions, Observable, QLabel, QSeries,
};
use qsync::spectra::{analytic_cross, gauge_align, lorentzian_power, rotate, welch_csd, welch_psd};
use qsync::tongue::{leading_pair, sweep, Classification};
use qsync::{c, C64};
use rayon::prelude::*;

use crate::config::{ConfigError, RunConfig};
use crate::output::{push_c, Cell, Emitter};

fn nonempty(v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(ConfigError(format!("[sweep] {what} grid is empty")).into());
    }
    Ok(v)
}

fn em_options(cfg: &RunConfig) -> EmOptions {
    let s = &cfg.simulation;
    EmOptions { stride: s.stride, discard: s.discard, ..EmOptions::new(s.dt, s.t_end, s.seed) }
}

/// Leading eigenvalues over the κ grid at fixed τ, with the first-order
/// prediction and the KT marker.
pub fn eig(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let model = cfg.model()?;
    let kappas = nonempty(cfg.sweep.kappa.values(), "kappa")?;
    let opts = cfg.solver.classify_options();
    let l1 = unperturbed_eigendata(&model.unperturbed())?.lambda1;
    let rows = kappas
        .par_iter()
        .map(|&k| -> Result<Vec<Cell>> {
            let m = model.with_coupling(k, model.tau)?;
            let (a, b) = leading_pair(&m, &opts)?;
            let r = splitting_report(&build_m_matrix(&m)?);
            let fp = l1 + r.lambda_c_plus;
            // equal real parts leave the solver's order arbitrary
            let (a, b) = if (a - fp).norm() <= (b - fp).norm() { (a, b) } else { (b, a) };
            let mut row = vec![Cell::Num(k)];
            for z in [a, b, l1 + r.lambda_c_plus, l1 + r.lambda_c_minus] {
                push_c(&mut row, z);
            }
            row.push(Cell::Text(format!("{:?}", r.regime)));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let kt = match kt_boundary(&model, model.tau) {
        Ok(Some(k)) => format!("kt_kappa = {k}"),
        Ok(None) => "kt_kappa = none".to_string(),
        Err(e) => format!("kt_kappa undefined: {e}"),
    };
    out.table(
        "eig",
        &[
            "kappa", "re_plus", "im_plus", "re_minus", "im_minus", "fo_re_plus", "fo_im_plus", "fo_re_minus",
            "fo_im_minus", "regime",
        ],
        &rows,
        &[format!("tau = {}", model.tau), kt],
    )
}

/// KT coupling per τ and the first-order splitting regime on the grid.
pub fn kt(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let model = cfg.model()?;
    let taus = nonempty(cfg.sweep.tau.values(), "tau")?;
    let kappas = nonempty(cfg.sweep.kappa.values(), "kappa")?;
    let mut rows = Vec::new();
    for &t in &taus {
        let row_model = CoupledModel { tau: t, ..model };
        rows.push(vec![Cell::Num(t), Cell::from(kt_boundary(&row_model, t)?)]);
    }
    out.table("kt", &["tau", "kappa_star"], &rows, &[])?;
    let m0 = build_m_matrix(&model)?;
    let mut rows = Vec::new();
    for &t in &taus {
        for &k in &kappas {
            let r = splitting_report(&m0.at(k, t));
            let mut row = vec![Cell::Num(t), Cell::Num(k), Cell::Text(format!("{:?}", r.regime))];
            push_c(&mut row, r.discriminant);
            rows.push(row);
        }
    }
    out.table("kt_regimes", &["tau", "kappa", "regime", "disc_re", "disc_im"], &rows, &[])
}

fn class_name(c: Option<Classification>) -> &'static str {
    match c {
        Some(Classification::Synchronized) => "sync",
        Some(Classification::NotSynchronized) => "nosync",
        Some(Classification::Boundary) => "boundary",
        None => "failed",
    }
}

/// Arnold-tongue sweep with refined boundary and analytic overlay.
pub fn tongue(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let model = cfg.model()?;
    let taus = cfg.sweep.tau.values();
    let kappas = cfg.sweep.kappa.values();
    let g = sweep(&model, &taus, &kappas, &cfg.solver.classify_options())?;
    let mut rows = Vec::new();
    for (t, row) in g.classification.iter().enumerate() {
        for (k, cl) in row.iter().enumerate() {
            rows.push(vec![Cell::Num(g.tau_values[t]), Cell::Num(g.kappa_values[k]), Cell::from(class_name(*cl))]);
        }
    }
    let notes = vec![
        format!("method = {:?}", g.method),
        format!("monotonicity violations = {}", g.violations.len()),
        format!("failed points = {}", g.failures.len()),
    ];
    out.table("tongue_classification", &["tau", "kappa", "class"], &rows, &notes)?;
    let rows: Vec<Vec<Cell>> = g
        .tau_values
        .iter()
        .zip(&g.boundary_curve)
        .zip(&g.analytic_line)
        .map(|((t, b), a)| vec![Cell::Num(*t), Cell::from(*b), Cell::from(*a)])
        .collect();
    out.table("tongue_boundary", &["tau", "kappa_star", "kappa_analytic"], &rows, &notes)?;
    if !g.failures.is_empty() {
        let rows: Vec<Vec<Cell>> = g
            .failures
            .iter()
            .map(|f| {
                let k = if f.kappa_index == usize::MAX { Cell::Empty } else { Cell::from(f.kappa_index) };
                vec![Cell::from(f.tau_index), k, Cell::Text(f.message.replace(',', ";"))]
            })
            .collect();
        out.table("tongue_failures", &["tau_index", "kappa_index", "message"], &rows, &[])?;
    }
    Ok(())
}

struct QPair {
    lambda_plus: C64,
    lambda_minus: C64,
    plus: Observable,
    minus: Observable,
    alpha: f64,
    overlap: C64,
}

fn q_pair(cfg: &RunConfig, model: &CoupledModel) -> Result<QPair> {
    if model.kind.is_ring() {
        let (j, m, n) = (cfg.solver.j, cfg.solver.m, cfg.solver.n);
        let (lp, lm) = ring_leading_pair(model, j)?;
        let fp = cf_eigenfunction(model, lp, n, j, m)?;
        let fm = cf_eigenfunction(model, lm, n, j, m)?;
        let p = stationary_field(model, j)?;
        let g = gauge_align(
            &Descriptor::Fourier(fp.to_series()),
            &Descriptor::Fourier(fm.to_series()),
            &Descriptor::Fourier(p.to_series()),
        )?;
        return Ok(QPair {
            lambda_plus: lp,
            lambda_minus: lm,
            plus: Observable::Field(fp),
            minus: Observable::Field(fm),
            alpha: g.alpha,
            overlap: g.aligned_overlap,
        });
    }
    let (qp, qm, density) = exact_q_pair(model)?;
    let g = gauge_align(&qp.q, &qm.q, &density)?;
    Ok(QPair {
        lambda_plus: qp.lambda,
        lambda_minus: qm.lambda,
        plus: Observable::Closed(qp.q),
        minus: Observable::Closed(qm.q),
        alpha: g.alpha,
        overlap: g.aligned_overlap,
    })
}

fn sample_variance(s: &QSeries) -> f64 {
    let n = s.values.len() as f64;
    let mean = s.values.iter().sum::<C64>() / n;
    s.values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / n
}

/// Analytic and Welch power and cross spectra of the leading Q-functions,
/// plus the raw-coordinate comparison.
pub fn spectra(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let model = cfg.model()?;
    let pair = q_pair(cfg, &model)?;
    let freqs = cfg.nu_grid();
    let pp = lorentzian_power(pair.lambda_plus, &freqs)?;
    let pm = lorentzian_power(pair.lambda_minus, &freqs)?;
    let cr = analytic_cross(pair.lambda_plus, pair.lambda_minus, pair.overlap, &freqs)?;
    let mut notes = vec![
        format!("lambda_plus = {}", pair.lambda_plus),
        format!("lambda_minus = {}", pair.lambda_minus),
        format!("gauge_alpha = {}", pair.alpha),
        format!("aligned_overlap = {}", pair.overlap.re),
    ];
    let rows: Vec<Vec<Cell>> = (0..freqs.len())
        .map(|i| vec![Cell::Num(freqs[i]), Cell::Num(pp.values[i].re), Cell::Num(pm.values[i].re)])
        .collect();
    out.table("analytic_power", &["nu", "plus", "minus"], &rows, &notes)?;
    let rows: Vec<Vec<Cell>> = (0..freqs.len())
        .map(|i| {
            let mut r = vec![Cell::Num(freqs[i])];
            push_c(&mut r, cr.values[i]);
            r
        })
        .collect();
    out.table("analytic_cross", &["nu", "re", "im"], &rows, &notes)?;
    if cfg.spectra.analytic_only {
        return Ok(());
    }
    let s = &cfg.simulation;
    if s.t_end <= 0.0 {
        return Err(ConfigError("[simulation] t_end must be positive unless spectra.analytic_only".into()).into());
    }
    let obs = [
        (pair.plus, QLabel::Plus),
        (pair.minus, QLabel::Minus),
        (Observable::Raw(0), QLabel::RawA),
        (Observable::Raw(1), QLabel::RawB),
    ];
    let series: Vec<QSeries> = if model.kind == ModelKind::Discrete9D {
        let mut tr = gillespie(&model, s.t_end, s.seed, s.grid_dt)?;
        tr.t0_discard = s.discard;
        obs.iter().map(|(o, l)| q_series(&tr, o, *l)).collect::<qsync::Result<_>>()?
    } else {
        em_q_series(&model, &em_options(cfg), &obs)?
    };
    let minus = rotate(&series[1], pair.alpha);
    let (seg, ov) = (cfg.spectra.segment_len, cfg.spectra.overlap);
    let psd: Vec<_> = [&series[0], &minus, &series[2], &series[3]]
        .iter()
        .map(|x| welch_psd(x, seg, ov))
        .collect::<qsync::Result<_>>()?;
    let csd = welch_csd(&series[0], &minus, seg, ov)?;
    notes.push(format!("samples = {}, sample_dt = {}", series[0].values.len(), series[0].dt));
    notes.push(format!(
        "sample variance plus = {}, minus = {}",
        sample_variance(&series[0]),
        sample_variance(&series[1])
    ));
    let rows: Vec<Vec<Cell>> = (0..csd.freqs.len())
        .map(|i| {
            let mut r = vec![Cell::Num(csd.freqs[i])];
            r.extend(psd.iter().map(|p| Cell::Num(p.values[i].re)));
            r
        })
        .collect();
    out.table("welch_power", &["nu", "plus", "minus", "raw_a", "raw_b"], &rows, &notes)?;
    let rows: Vec<Vec<Cell>> = (0..csd.freqs.len())
        .map(|i| {
            let mut r = vec![Cell::Num(csd.freqs[i])];
            push_c(&mut r, csd.values[i]);
            r
        })
        .collect();
    out.table("welch_cross", &["nu", "re", "im"], &rows, &notes)
}

/// Stationary density: exact or lattice solution, the first-order
/// approximation and a Monte Carlo estimate.
pub fn stationary(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let model = cfg.model()?;
    let s = &cfg.simulation;
    let simulate = s.t_end > 0.0;
    let pc = stationary_correction(&model)?;
    match model.kind {
        ModelKind::Ring2D | ModelKind::RingCos2D => {
            let Descriptor::Fourier(pc) = pc else { return Err(anyhow!("ring correction is not a Fourier series")) };
            let lattice = stationary_field(&model, cfg.solver.j)?;
            let n = s.bins;
            let h = 2.0 * PI / n as f64;
            let mut hist = vec![0.0; n * n];
            if simulate {
                let mut count = 0.0;
                let opts = EmOptions { stride: 1, ..em_options(cfg) };
                let start = (s.discard / s.dt).ceil() as usize;
                em_stream(&model, &opts, |i, x| {
                    if i >= start {
                        let a = ((x[0].rem_euclid(2.0 * PI) / h) as usize).min(n - 1);
                        let b = ((x[1].rem_euclid(2.0 * PI) / h) as usize).min(n - 1);
                        hist[a + n * b] += 1.0;
                        count += 1.0;
                    }
                })?;
                if count == 0.0 {
                    return Err(ConfigError("[simulation] t_end does not exceed the discard window".into()).into());
                }
                hist.iter_mut().for_each(|v| *v /= count * h * h);
            }
            let mut rows = Vec::with_capacity(n * n);
            for b in 0..n {
                for a in 0..n {
                    let (x, y) = ((a as f64 + 0.5) * h, (b as f64 + 0.5) * h);
                    let fo = 1.0 / (4.0 * PI * PI) + pc.eval(x, y).re;
                    let mc = if simulate { Cell::Num(hist[a + n * b]) } else { Cell::Empty };
                    rows.push(vec![Cell::Num(x), Cell::Num(y), Cell::Num(fo), Cell::Num(lattice.eval(x, y).re), mc]);
                }
            }
            out.table("stationary", &["x", "y", "first_order", "lattice", "monte_carlo"], &rows, &[])
        }
        ModelKind::Linear4D => {
            let exact = stationary_covariance(&model)?;
            let var = model.diffusion / model.eta;
            let mut mc = [[0.0; 4]; 4];
            if simulate {
                let mut count = 0.0;
                em_stream(&model, &em_options(cfg), |i, x| {
                    if i as f64 * s.dt * s.stride as f64 >= s.discard {
                        for p in 0..4 {
                            for q in 0..4 {
                                mc[p][q] += x[p] * x[q];
                            }
                        }
                        count += 1.0;
                    }
                })?;
                if count == 0.0 {
                    return Err(ConfigError("[simulation] t_end does not exceed the discard window".into()).into());
                }
                mc.iter_mut().flatten().for_each(|v| *v /= count);
            }
            let mut rows = Vec::new();
            for i in 0..4 {
                for j in 0..4 {
                    let mut e = [0u32; 4];
                    e[i] += 1;
                    e[j] += 1;
                    let mut poly = Poly4::zero();
                    poly.add_term(e, c(1.0, 0.0));
                    let corr = Descriptor::pairing(&pc, &Descriptor::Poly(poly))?.re;
                    let fo = if i == j { var } else { 0.0 } + corr;
                    let m = if simulate { Cell::Num(mc[i][j]) } else { Cell::Empty };
                    rows.push(vec![Cell::from(i + 1), Cell::from(j + 1), Cell::Num(exact[i][j]), Cell::Num(fo), m]);
                }
            }
            out.table("stationary_covariance", &["i", "j", "exact", "first_order", "monte_carlo"], &rows, &[])
        }
        ModelKind::Discrete9D => {
            let Descriptor::States(pc) = pc else { return Err(anyhow!("discrete correction is not a state vector")) };
            let exact = discrete_stationary(&model)?;
            let occ = if simulate { Some(occupancy(&gillespie_events(&model, s.t_end, s.seed, 0, 0)?, s.t_end)) } else { None };
            let mut rows = Vec::new();
            for j in 0..3 {
                for i in 0..3 {
                    let st = joint_index(i, j);
                    rows.push(vec![
                        Cell::from(st),
                        Cell::from(i),
                        Cell::from(j),
                        Cell::Num(exact[st]),
                        Cell::Num(1.0 / 9.0 + pc[st].re),
                        occ.map_or(Cell::Empty, |o| Cell::Num(o[st])),
                    ]);
                }
            }
            out.table("stationary", &["state", "i", "j", "exact", "first_order", "occupancy"], &rows, &[])
        }
    }
}

/// Projected phase differences of the nine-state model along the κ grid.
pub fn phasediff(cfg: &RunConfig, out: &mut Emitter) -> Result<()> {
    let model = cfg.model()?;
    let kappas = nonempty(cfg.sweep.kappa.values(), "kappa")?;
    let p = project_and_diff(&model, &kappas)?;
    let kt = kt_boundary(&model, model.tau)?;
    let rows: Vec<Vec<Cell>> = (0..kappas.len())
        .map(|k| {
            let mut r = vec![Cell::Num(kappas[k])];
            for arr in [&p.within_a[k], &p.within_b[k], &p.phase_diff[k]] {
                r.extend(arr.iter().map(|v| Cell::Num(*v)));
            }
            r.push(Cell::from(if p.flagged[k] { "true" } else { "false" }));
            r
        })
        .collect();
    out.table(
        "phasediff",
        &[
            "kappa", "within_a0", "within_a1", "within_a2", "within_b0", "within_b1", "within_b2", "cross0", "cross1",
            "cross2", "flagged",
        ],
        &rows,
        &[format!("tau = {}, kt_kappa = {}", model.tau, kt.map_or("none".into(), |k| k.to_string()))],
    )
}
