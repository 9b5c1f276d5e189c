//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line.

use std::f64::consts::PI;
use std::time::Instant;

use qsync::cf_solver::{ring_leading_pair, stationary_field};
use qsync::descriptor::Descriptor;
use qsync::discrete_phase::project_and_diff;
use qsync::models::{exact_lambda_pm, exact_q_pair, generator_matrix, CoupledModel};
use qsync::perturbation::{build_m_matrix, derived_m_matrix, kt_boundary, splitting_report, stated_discrete_m, MMatrix};
use qsync::perturbation::{ring_first_order_cells, stationary_correction};
use qsync::simulate::{em_q_series, ensemble_mean, euler_maruyama_with, EmOptions, Observable, QLabel, QSeries};
use qsync::spectra::{gauge_align, lorentzian_power, relative_l2, rotate, symmetry_mismatch, welch_csd, welch_psd};
use qsync::spectral_core::{eigenvalues_dense, leading_pair_indices};
use qsync::tongue::{linspace, refine_boundary, sweep, Classification, ClassifyOptions};
use qsync::{c, C64};

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n:>2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn lin(tau: f64, kappa: f64) -> CoupledModel {
    CoupledModel::linear4d(0.1, 2.0, 0.1, tau, kappa).unwrap()
}

fn nearest(values: &[C64], z: C64) -> f64 {
    values.iter().map(|v| (v - z).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_01_linear_eigenvalue_oracle() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for tau in linspace(-1.0, 1.0, 20) {
        for kappa in linspace(0.0, 1.0, 20) {
            let m = lin(tau, kappa);
            let ev = eigenvalues_dense("drift", generator_matrix(&m).unwrap().as_ref()).unwrap();
            let (lp, lm) = exact_lambda_pm(&m).unwrap();
            for z in [lp, lm, lp.conj(), lm.conj()] {
                worst = worst.max(nearest(&ev, z));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(1, worst <= 1e-10 && secs < 1.0, format!("max error {worst:.2e}, {secs:.3} s"));
}

#[test]
fn criterion_02_discrete_eigenvalue_oracle() {
    let t0 = Instant::now();
    let omega: f64 = 2.0;
    let mut worst: f64 = 0.0;
    let mut ordering_ok = true;
    for tau in linspace(-1.0, 1.0, 20) {
        let kmax = omega.min(omega + tau);
        for kappa in linspace(0.0, 0.95 * kmax, 20) {
            let m = CoupledModel::discrete9d(omega, tau, kappa).unwrap();
            let mut ev = eigenvalues_dense("rates", generator_matrix(&m).unwrap().as_ref()).unwrap();
            ev.sort_by(|a, b| b.re.total_cmp(&a.re));
            let (ia, ib) = leading_pair_indices(&ev).unwrap();
            let lead = [ev[ia], ev[ib]];
            let (lp, lm) = exact_lambda_pm(&m).unwrap();
            for z in [lp, lm] {
                let e = nearest(&lead, z);
                worst = worst.max(e);
                ordering_ok &= e <= 1e-6;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        2,
        worst <= 1e-10 && ordering_ok && secs < 1.0,
        format!("max error {worst:.2e} against the two leading eigenvalues, {secs:.3} s"),
    );
}

fn m_error(m: &MMatrix, want: [[C64; 2]; 2]) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            e = e.max((m.entries[i][j] - want[i][j]).norm());
        }
    }
    e
}

#[test]
fn criterion_03_m_matrix_fidelity() {
    let r3 = 3f64.sqrt();
    let mut worst: f64 = 0.0;
    for (tau, kappa) in [(0.5, 0.25), (0.3, 0.7), (-0.4, 0.1)] {
        let z = c(0.0, 0.0);
        let lm = build_m_matrix(&lin(tau, kappa)).unwrap();
        worst = worst.max(m_error(&lm, [[c(-kappa, tau), c(kappa, 0.0)], [c(kappa, 0.0), c(-kappa, 0.0)]]));
        let rm = build_m_matrix(&CoupledModel::ring2d(2.0, 0.1, tau, kappa).unwrap()).unwrap();
        worst = worst.max(m_error(&rm, [[c(0.0, tau), c(kappa / 2.0, 0.0)], [c(kappa / 2.0, 0.0), z]]));
        let cm = build_m_matrix(&CoupledModel::ring_cos2d(2.0, 0.1, tau, kappa).unwrap()).unwrap();
        worst = worst.max(m_error(&cm, [[c(0.0, tau), c(0.0, kappa / 2.0)], [c(0.0, kappa / 2.0), z]]));
        let dm = build_m_matrix(&CoupledModel::discrete9d(2.0, tau, kappa).unwrap()).unwrap();
        let u = c(0.5, r3 / 2.0);
        let want = [
            [u * kappa - c(3.0 / 8.0, -5.0 * r3 / 8.0) * tau, c(1.5 * kappa + 21.0 / 16.0 * tau, 0.0)],
            [c(0.5, -r3 / 2.0) * tau, -u * kappa - c(9.0 / 8.0, r3 / 8.0) * tau],
        ];
        worst = worst.max(m_error(&dm, want));
    }
    report(3, worst <= 1e-12, format!("max entry error {worst:.2e} over four model kinds"));
}

/// Returns `(max error, fitted log-log slope)` of the first-order prediction
/// along the ray `ε·(κ, τ)`.
fn first_order_errors(model: &CoupledModel, m: &MMatrix, eps: &[f64]) -> (Vec<f64>, f64) {
    let l1 = exact_lambda_pm(&model.unperturbed()).unwrap().0;
    let errs: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let mm = model.with_coupling(e * model.kappa, e * model.tau).unwrap();
            let (lp, lm) = exact_lambda_pm(&mm).unwrap();
            let r = splitting_report(&m.at(e * model.kappa, e * model.tau));
            let pred = [l1 + r.lambda_c_plus, l1 + r.lambda_c_minus];
            [lp, lm].iter().map(|z| nearest(&pred, *z)).fold(0.0, f64::max)
        })
        .collect();
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (errs, sxy / sxx)
}

#[test]
fn criterion_04_first_order_accuracy() {
    let t0 = Instant::now();
    let eps = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let mut pass = true;
    let mut detail = Vec::new();
    let models = [
        ("linear", lin(0.3, 0.5)),
        ("discrete", CoupledModel::discrete9d(2.0, 0.3, 0.5).unwrap()),
    ];
    for (name, model) in models {
        let m = derived_m_matrix(&model).unwrap();
        let (errs, slope) = first_order_errors(&model, &m, &eps);
        let worst = errs.iter().copied().fold(0.0, f64::max);
        // an error at roundoff level leaves the slope undefined
        let roundoff = worst <= 1e-12;
        pass &= roundoff || slope >= 1.8;
        let fit = if roundoff { "at roundoff, slope undefined".to_string() } else { format!("slope {slope:.2}") };
        detail.push(format!("{name}: max error {worst:.1e}, {fit}"));
    }
    let model = CoupledModel::discrete9d(2.0, 0.3, 0.5).unwrap();
    let (errs, _) = first_order_errors(&model, &stated_discrete_m(0.5, 0.3), &eps);
    let worst = errs.iter().copied().fold(0.0, f64::max);
    detail.push(format!("discrete stated M (informational): max error {worst:.1e}"));
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 5.0;
    report(4, pass, format!("{}; {secs:.3} s", detail.join("; ")));
}

#[test]
fn criterion_05_cf_solver() {
    let t0 = Instant::now();
    let m = CoupledModel::ring2d(2.0, 0.1, 0.0, 0.0).unwrap();
    let (lead, _) = ring_leading_pair(&m, 250).unwrap();
    let err = (lead - c(-0.1, 2.0)).norm();
    let row = CoupledModel::ring2d(2.0, 0.1, 0.5, 0.0).unwrap();
    let opts = ClassifyOptions { j: 60, ..Default::default() };
    let kstar = refine_boundary(&row, &linspace(0.0, 0.6, 31), &opts).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = err <= 1e-8 && kstar.is_some_and(|k| (k - 0.336).abs() <= 0.01) && secs < 60.0;
    report(5, pass, format!("J=250 leading error {err:.2e}; coalescence at κ = {kstar:?}; {secs:.2} s"));
}

#[test]
fn criterion_06_tongue_slopes() {
    let t0 = Instant::now();
    let taus = linspace(-0.5, 0.5, 51);
    let mut small: Vec<usize> = (0..taus.len()).filter(|&i| taus[i].abs() > 1e-12).collect();
    small.sort_by(|&a, &b| taus[a].abs().total_cmp(&taus[b].abs()).then(taus[b].total_cmp(&taus[a])));
    let opts = ClassifyOptions::default();
    let cases = [
        ("linear", lin(0.0, 0.0), linspace(0.0, 0.4, 21), 0.5),
        ("ring D=0.1", CoupledModel::ring2d(2.0, 0.1, 0.0, 0.0).unwrap(), linspace(0.0, 0.6, 31), 1.0),
        ("discrete", CoupledModel::discrete9d(2.0, 0.0, 0.0).unwrap(), linspace(0.0, 0.6, 31), 3f64.sqrt() / 2.0),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, template, kappas, want) in cases {
        let g = sweep(&template, &taus, &kappas, &opts).unwrap();
        // the two smallest nonzero |τ| on each side of zero
        let mut ratios = Vec::new();
        for &i in small.iter().take(4) {
            let r = g.boundary_curve[i].map(|b| b / taus[i].abs());
            pass &= r.is_some_and(|r| (r - want).abs() <= 0.05 * want);
            ratios.push(r.map_or("none".to_string(), |r| format!("{r:.4}")));
        }
        pass &= g.failures.is_empty();
        detail.push(format!("{name} (want {want:.4}): {}", ratios.join(" ")));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    report(6, pass, format!("{}; {secs:.1} s", detail.join("; ")));
}

#[test]
fn criterion_07_ringcos_negative_result() {
    let m = CoupledModel::ring_cos2d(2.0, 0.1, 0.0, 0.0).unwrap();
    let taus = linspace(-0.5, 0.5, 11);
    let g = sweep(&m, &taus, &linspace(0.0, 0.5, 11), &ClassifyOptions::default()).unwrap();
    let n_sync = g.count(Classification::Synchronized);
    let kt_none = taus.iter().all(|&t| kt_boundary(&m, t).unwrap().is_none());
    report(
        7,
        n_sync == 0 && kt_none && g.failures.is_empty(),
        format!("{n_sync} synchronized points; kt none on every τ: {kt_none}"),
    );
}

#[test]
fn criterion_08_stationary_correction() {
    let (kappa, d) = (0.2, 0.1);
    let m = CoupledModel::ring2d(2.0, d, 0.0, kappa).unwrap();
    let Descriptor::Fourier(pc) = stationary_correction(&m).unwrap() else { panic!("ring correction is a Fourier series") };
    let want = kappa / (8.0 * PI * PI * d);
    let mut coef_err: f64 = 0.0;
    for (&(j, k), v) in &pc.terms {
        let w = if (j, k) == (1, -1) || (j, k) == (-1, 1) { want } else { 0.0 };
        coef_err = coef_err.max((v - c(w, 0.0)).norm());
    }
    for key in [(1, -1), (-1, 1)] {
        coef_err = coef_err.max((pc.coeff(key.0, key.1) - c(want, 0.0)).norm());
    }

    let n = 20;
    let opts = EmOptions { stride: 1, ..EmOptions::new(0.01, 1e4 + 100.0, 8) };
    let tr = euler_maruyama_with(&m, &opts).unwrap();
    let h = 2.0 * PI / n as f64;
    let start = (tr.t0_discard / tr.dt).ceil() as usize;
    let mut hist = vec![0.0; n * n];
    for i in start..tr.len() {
        let s = tr.sample(i);
        let a = ((s[0].rem_euclid(2.0 * PI) / h) as usize).min(n - 1);
        let b = ((s[1].rem_euclid(2.0 * PI) / h) as usize).min(n - 1);
        hist[a + n * b] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|v| *v /= total);
    let model_cells = ring_first_order_cells(&m, n).unwrap();
    let tv = 0.5 * hist.iter().zip(&model_cells).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let negative = model_cells.iter().filter(|v| **v < 0.0).count();
    let exact = stationary_field(&m, 60).unwrap();
    let exact_cells: Vec<f64> = (0..n * n)
        .map(|i| {
            let (a, b) = (i % n, i / n);
            exact.eval((a as f64 + 0.5) * h, (b as f64 + 0.5) * h).re * h * h
        })
        .collect();
    let tv_exact = 0.5 * hist.iter().zip(&exact_cells).map(|(a, b)| (a - b).abs()).sum::<f64>();
    report(
        8,
        coef_err <= 1e-8 && tv < 0.02,
        format!(
            "coefficient error {coef_err:.2e}; {} EM steps, TV vs first order {tv:.4} ({negative} negative cells), TV vs lattice stationary {tv_exact:.4}",
            tr.len() - start
        ),
    );
}

fn q_runs(model: &CoupledModel, dt: f64, t_end: f64, stride: usize, seed: u64) -> (Vec<QSeries>, C64, C64, C64) {
    let (qp, qm, density) = exact_q_pair(model).unwrap();
    let g = gauge_align(&qp.q, &qm.q, &density).unwrap();
    let opts = EmOptions { stride, ..EmOptions::new(dt, t_end, seed) };
    let obs = [(Observable::Closed(qp.q), QLabel::Plus), (Observable::Closed(qm.q), QLabel::Minus)];
    let mut s = em_q_series(model, &opts, &obs).unwrap();
    s[1] = rotate(&s[1], g.alpha);
    (s, qp.lambda, qm.lambda, g.aligned_overlap)
}

#[test]
fn criterion_09_lorentzian_spectra() {
    let t0 = Instant::now();
    let m = lin(0.0, 0.0);
    let (s, lp, _, _) = q_runs(&m, 1e-3, 2e5, 20, 11);
    let est = welch_psd(&s[0], 16384, 0.5).unwrap();
    let l1 = exact_lambda_pm(&m).unwrap().0;
    let reference = |nu: f64| lorentzian_power(l1, &[nu]).unwrap().values[0].re;
    let err = relative_l2(&est, reference, 1.0, 3.0);
    let m2 = lin(0.5, 0.4);
    let (s2, _, _, _) = q_runs(&m2, 1e-3, 2e5, 20, 12);
    let pp = welch_psd(&s2[0], 1024, 0.5).unwrap();
    let pm = welch_psd(&s2[1], 1024, 0.5).unwrap();
    let (bp, bm) = (pp.peak_bin(), pm.peak_bin());
    let secs = t0.elapsed().as_secs_f64();
    report(
        9,
        err <= 0.10 && bp == bm && secs < 300.0,
        format!(
            "relative L2 {err:.4} (λ {lp:.4}); above KT peaks at ν = {:.4} and {:.4}; {secs:.1} s",
            pp.freqs[bp], pm.freqs[bm]
        ),
    );
}

#[test]
fn criterion_10_cross_spectrum_reality() {
    let t0 = Instant::now();
    let run = |kappa: f64, seed: u64| {
        let m = lin(0.5, kappa);
        let (s, _, _, ov) = q_runs(&m, 1e-3, 2e5, 20, seed);
        (welch_csd(&s[0], &s[1], 4096, 0.5).unwrap(), ov)
    };
    let (at, ov_at) = run(0.25, 21);
    let band = |e: &qsync::spectra::SpectralEstimate| e.window_range(1.25, 3.25);
    let at = band(&at);
    let im = at.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let re = at.values.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let ratio = im / re;
    let center = 2.25;
    let half = 1.0;
    let (below, _) = run(0.1, 22);
    let (above, _) = run(0.4, 23);
    let ims = |e: &qsync::spectra::SpectralEstimate| e.values.iter().map(|v| v.im).collect::<Vec<_>>();
    let even = symmetry_mismatch(&below.freqs, &ims(&below), center, half, false);
    let odd = symmetry_mismatch(&above.freqs, &ims(&above), center, half, true);
    let secs = t0.elapsed().as_secs_f64();
    report(
        10,
        ratio <= 0.10 && even <= 0.15 && odd <= 0.15,
        format!("at KT ‖Im‖/‖Re‖ = {ratio:.4} (overlap {ov_at:.3}); below-KT even mismatch {even:.3}; above-KT odd mismatch {odd:.3}; {secs:.1} s"),
    );
}

#[test]
fn criterion_11_mean_linearity() {
    let m = lin(0.0, 0.0);
    let (qp, _, _) = exact_q_pair(&m).unwrap();
    let x0 = [1.0, 0.5, -0.3, 0.2];
    let times = [0.5, 1.0];
    let stats = ensemble_mean(&m, &x0, &qp.q, &times, 1e-3, 2000, 5).unwrap();
    let q0 = qp.q.eval(&qsync::descriptor::State::R4(x0)).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (t, (mean, se)) in times.iter().zip(&stats) {
        let want = (qp.lambda * *t).exp() * q0;
        let z = (mean - want).norm() / se;
        pass &= z <= 3.0;
        detail.push(format!("t={t}: |mean − e^(λt)Q(x0)| = {:.2} SE", z));
    }
    report(11, pass, detail.join("; "));
}

#[test]
fn criterion_12_discrete_phase_locking() {
    let omega = 2.0;
    let tau = 0.5;
    let m = CoupledModel::discrete9d(omega, tau, 0.0).unwrap();
    let kt = kt_boundary(&m, tau).unwrap().unwrap();
    let grid = linspace(0.01, 1.4, 140);
    let p = project_and_diff(&m, &grid).unwrap();
    let above = p.cross_variation(kt, 1.4);
    let below = p.cross_variation(0.0, kt);
    let flagged = p.flagged.iter().filter(|f| **f).count();
    report(
        12,
        above <= 1e-3 && below > 1e-2,
        format!("KT κ* = {kt:.5}; variation above {above:.2e}, below {below:.3e}; {flagged} flagged grid points"),
    );
}
