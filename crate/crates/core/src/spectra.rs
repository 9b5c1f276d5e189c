//! Power and cross spectra in Q-coordinates.
//!
//! Convention: angular frequency `ν`, spectrum `S(ν) = ∫ C(t) e^{−iνt} dt` of
//! the stationary correlation `C(t) = E[a(t+s)·conj(b(s))]`. Under it a
//! unit-variance series has `∫ S dν / 2π = 1`, and the periodogram of a
//! sampled series is `dt·|FFT(w·y)|² / Σw²`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::descriptor::Descriptor;
use crate::error::{invalid, Result};
use crate::simulate::QSeries;
use crate::spectral_core::{c, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Power,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    Welch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub freqs: Vec<f64>,
    pub values: Vec<C64>,
    pub kind: SpectrumKind,
    pub method: Method,
    pub segment_len: Option<usize>,
    pub overlap: Option<f64>,
    pub window: Option<String>,
}

impl SpectralEstimate {
    /// CSV with columns `nu,re,im`, preceded by `# `-prefixed metadata lines.
    pub fn write_csv<W: Write>(&self, w: &mut W, metadata: &[String]) -> Result<()> {
        for m in metadata {
            writeln!(w, "# {m}")?;
        }
        writeln!(w, "nu,re,im")?;
        for (f, v) in self.freqs.iter().zip(&self.values) {
            writeln!(w, "{f:.17e},{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    /// Index of the largest real part.
    pub fn peak_bin(&self) -> usize {
        (0..self.values.len()).max_by(|&a, &b| self.values[a].re.total_cmp(&self.values[b].re)).unwrap_or(0)
    }

    /// Restriction to `lo ≤ ν ≤ hi`.
    pub fn window_range(&self, lo: f64, hi: f64) -> SpectralEstimate {
        let keep: Vec<usize> = (0..self.freqs.len()).filter(|&i| self.freqs[i] >= lo && self.freqs[i] <= hi).collect();
        SpectralEstimate {
            freqs: keep.iter().map(|&i| self.freqs[i]).collect(),
            values: keep.iter().map(|&i| self.values[i]).collect(),
            ..self.clone()
        }
    }
}

fn check_stable(l: C64) -> Result<()> {
    if !(l.re < 0.0) {
        return invalid(format!("eigenvalue {l} is not damped"));
    }
    Ok(())
}

/// `S(ν) = 2|μ| / (μ² + (ν−ω)²)` for `λ = μ + iω`.
pub fn lorentzian_power(lambda: C64, freqs: &[f64]) -> Result<SpectralEstimate> {
    check_stable(lambda)?;
    let (mu, w) = (lambda.re, lambda.im);
    let values = freqs.iter().map(|nu| c(2.0 * mu.abs() / (mu * mu + (nu - w).powi(2)), 0.0)).collect();
    Ok(analytic(freqs, values, SpectrumKind::Power))
}

/// Two-pole cross spectrum `−ov·(1/(λ₊−iν) + 1/(conj λ₋+iν))`.
pub fn analytic_cross(lp: C64, lm: C64, overlap: C64, freqs: &[f64]) -> Result<SpectralEstimate> {
    check_stable(lp)?;
    check_stable(lm)?;
    let values = freqs
        .iter()
        .map(|&nu| -overlap * (1.0 / (lp - c(0.0, nu)) + 1.0 / (lm.conj() + c(0.0, nu))))
        .collect();
    Ok(analytic(freqs, values, SpectrumKind::Cross))
}

fn analytic(freqs: &[f64], values: Vec<C64>, kind: SpectrumKind) -> SpectralEstimate {
    SpectralEstimate {
        freqs: freqs.to_vec(),
        values,
        kind,
        method: Method::Analytic,
        segment_len: None,
        overlap: None,
        window: None,
    }
}

/// Result of [`gauge_align`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    /// Rotation `Q*₋ → Q*₋·e^{iα}`, `α ∈ [0, 2π)`.
    pub alpha: f64,
    /// `E[Q*₊·conj(Q*₋ e^{iα})]`, real and nonnegative.
    pub aligned_overlap: C64,
    /// False when the overlap vanishes and `α` is undefined.
    pub defined: bool,
}

fn gauge_from_overlap(z: C64) -> Gauge {
    if z.norm() <= 1e-12 {
        return Gauge { alpha: 0.0, aligned_overlap: c(0.0, 0.0), defined: false };
    }
    let mut alpha = z.arg().rem_euclid(2.0 * PI);
    if alpha >= 2.0 * PI {
        alpha = 0.0;
    }
    Gauge { alpha, aligned_overlap: c(z.norm(), 0.0), defined: true }
}

/// Phase that makes the overlap of two unit-variance eigenfunctions real
/// and nonnegative under `stationary`.
pub fn gauge_align(q_plus: &Descriptor, q_minus: &Descriptor, stationary: &Descriptor) -> Result<Gauge> {
    let z = Descriptor::expectation(q_plus, q_minus, stationary)?;
    Ok(gauge_from_overlap(z))
}

/// Empirical counterpart of [`gauge_align`] from two sampled series.
pub fn gauge_align_series(a: &QSeries, b: &QSeries) -> Result<Gauge> {
    if a.values.len() != b.values.len() || a.values.is_empty() {
        return invalid("series lengths differ or are empty");
    }
    let z = a.values.iter().zip(&b.values).map(|(x, y)| x * y.conj()).sum::<C64>() / a.values.len() as f64;
    Ok(gauge_from_overlap(z))
}

/// Multiplies every sample by `e^{iα}`.
pub fn rotate(series: &QSeries, alpha: f64) -> QSeries {
    let r = C64::from_polar(1.0, alpha);
    QSeries { values: series.values.iter().map(|v| v * r).collect(), ..series.clone() }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Averaged Hann-windowed periodogram.
pub fn welch_psd(series: &QSeries, segment_len: usize, overlap_frac: f64) -> Result<SpectralEstimate> {
    let mut e = welch_csd(series, series, segment_len, overlap_frac)?;
    e.kind = SpectrumKind::Power;
    Ok(e)
}

/// Averaged Hann-windowed cross-periodogram `dt·F_a·conj(F_b)/Σw²`.
pub fn welch_csd(a: &QSeries, b: &QSeries, segment_len: usize, overlap_frac: f64) -> Result<SpectralEstimate> {
    if segment_len < 16 {
        return invalid(format!("segment length must be at least 16, got {segment_len}"));
    }
    if !(0.0..1.0).contains(&overlap_frac) {
        return invalid(format!("overlap fraction must lie in [0, 1), got {overlap_frac}"));
    }
    if a.values.len() != b.values.len() || (a.dt - b.dt).abs() > 1e-15 * a.dt {
        return invalid("cross spectrum needs series of equal length and spacing");
    }
    let n = a.values.len();
    if n < 2 * segment_len {
        return invalid(format!("series of length {n} is shorter than two segments of {segment_len}"));
    }
    let dt = a.dt;
    let step = ((segment_len as f64) * (1.0 - overlap_frac)).round().max(1.0) as usize;
    let starts: Vec<usize> = (0..).map(|k| k * step).take_while(|s| s + segment_len <= n).collect();
    let w = hann(segment_len);
    let wsum: f64 = w.iter().map(|x| x * x).sum();
    let mean_a = a.values.iter().sum::<C64>() / n as f64;
    let mean_b = b.values.iter().sum::<C64>() / n as f64;
    let same = std::ptr::eq(a, b);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let transform = |x: &[C64], mean: C64| -> Vec<C64> {
        let mut buf: Vec<C64> = x.iter().zip(&w).map(|(v, wi)| (v - mean) * *wi).collect();
        fft.process(&mut buf);
        buf
    };
    let per: Vec<Vec<C64>> = starts
        .par_iter()
        .map(|&s| {
            let fa = transform(&a.values[s..s + segment_len], mean_a);
            let fb = if same { fa.clone() } else { transform(&b.values[s..s + segment_len], mean_b) };
            fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect()
        })
        .collect();
    let mut acc = vec![c(0.0, 0.0); segment_len];
    for p in &per {
        for (s, v) in acc.iter_mut().zip(p) {
            *s += v;
        }
    }
    let norm = dt / (wsum * per.len() as f64);
    // reorder to ascending frequency
    let half = segment_len / 2;
    let mut freqs = Vec::with_capacity(segment_len);
    let mut values = Vec::with_capacity(segment_len);
    let df = 2.0 * PI / (segment_len as f64 * dt);
    for i in 0..segment_len {
        let k = (i + segment_len - half) % segment_len;
        let signed = if k >= segment_len - half { k as i64 - segment_len as i64 } else { k as i64 };
        freqs.push(signed as f64 * df);
        values.push(acc[k] * norm);
    }
    Ok(SpectralEstimate {
        freqs,
        values,
        kind: SpectrumKind::Cross,
        method: Method::Welch,
        segment_len: Some(segment_len),
        overlap: Some(overlap_frac),
        window: Some("hann".into()),
    })
}

/// `‖est − reference‖₂ / ‖reference‖₂` over bins with `lo ≤ ν ≤ hi`, using
/// the real parts.
pub fn relative_l2(est: &SpectralEstimate, reference: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (f, v) in est.freqs.iter().zip(&est.values) {
        if *f >= lo && *f <= hi {
            let r = reference(*f);
            num += (v.re - r).powi(2);
            den += r * r;
        }
    }
    (num / den).sqrt()
}

fn interp(freqs: &[f64], vals: &[f64], x: f64) -> Option<f64> {
    if x < freqs[0] || x > *freqs.last()? {
        return None;
    }
    let i = freqs.partition_point(|f| *f <= x).clamp(1, freqs.len() - 1);
    let (x0, x1) = (freqs[i - 1], freqs[i]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    Some(vals[i - 1] * (1.0 - t) + vals[i] * t)
}

/// Relative departure of `vals` from even (`odd = false`) or odd symmetry
/// about `center` over offsets up to `half_width`:
/// `‖g(ν*+d) ∓ g(ν*−d)‖ / (‖g(ν*+d)‖ + ‖g(ν*−d)‖)`, in `[0, 1]`.
pub fn symmetry_mismatch(freqs: &[f64], vals: &[f64], center: f64, half_width: f64, odd: bool) -> f64 {
    let sign = if odd { -1.0 } else { 1.0 };
    let (mut d2, mut np, mut nm) = (0.0, 0.0, 0.0);
    for (f, v) in freqs.iter().zip(vals) {
        let d = f - center;
        if d <= 0.0 || d > half_width {
            continue;
        }
        let Some(mirror) = interp(freqs, vals, center - d) else { continue };
        d2 += (v - sign * mirror).powi(2);
        np += v * v;
        nm += mirror * mirror;
    }
    d2.sqrt() / (np.sqrt() + nm.sqrt()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::FourierSeries;
    use crate::simulate::QLabel;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn series(values: Vec<C64>, dt: f64) -> QSeries {
        QSeries { dt, values, label: QLabel::Plus }
    }

    #[test]
    fn lorentzian_values() {
        let s = lorentzian_power(c(-0.1, 2.0), &[2.0, 2.1]).unwrap();
        assert!((s.values[0].re - 20.0).abs() < 1e-12 && (s.values[1].re - 10.0).abs() < 1e-10);
        assert!(lorentzian_power(c(0.0, 2.0), &[1.0]).is_err());
    }

    #[test]
    fn lorentzian_integrates_to_one() {
        for l in [c(-0.1, 2.0), c(-1.0, -3.0), c(-0.02, 0.0)] {
            // ∫ = 2|μ|·(π/|μ|) analytically over ℝ; trapezoid on a wide grid plus tails
            let h = l.re.abs() / 50.0;
            let span = 4000.0 * l.re.abs();
            let n = (2.0 * span / h) as usize;
            let freqs: Vec<f64> = (0..=n).map(|i| l.im - span + i as f64 * h).collect();
            let s = lorentzian_power(l, &freqs).unwrap();
            let mut integral: f64 = s.values.iter().map(|v| v.re).sum::<f64>() * h;
            integral += 2.0 * 2.0 * (l.re.abs() / span); // tails ≈ 2|μ|/x² integrated
            assert!((integral / (2.0 * PI) - 1.0).abs() < 1e-4, "{integral}");
        }
    }

    #[test]
    fn cross_reduces_to_power() {
        let freqs: Vec<f64> = (0..100).map(|i| 1.0 + i as f64 * 0.02).collect();
        let l = c(-0.2, 2.25);
        let a = analytic_cross(l, l, c(1.0, 0.0), &freqs).unwrap();
        let p = lorentzian_power(l, &freqs).unwrap();
        for (x, y) in a.values.iter().zip(&p.values) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn cross_symmetry_regimes() {
        let freqs: Vec<f64> = (0..=400).map(|i| 1.0 + i as f64 * 0.005).collect();
        // equal imaginary parts (above KT): Im odd about ν*
        let s = analytic_cross(c(-0.1, 2.0), c(-0.3, 2.0), c(1.0, 0.0), &freqs).unwrap();
        let im: Vec<f64> = s.values.iter().map(|v| v.im).collect();
        assert!(symmetry_mismatch(&freqs, &im, 2.0, 0.9, true) < 1e-9);
        // equal real parts (below KT): Im even about ν*
        let s = analytic_cross(c(-0.2, 2.1), c(-0.2, 1.9), c(1.0, 0.0), &freqs).unwrap();
        let im: Vec<f64> = s.values.iter().map(|v| v.im).collect();
        assert!(symmetry_mismatch(&freqs, &im, 2.0, 0.9, false) < 1e-9);
        let mid = freqs.iter().position(|f| (f - 2.0).abs() < 1e-9).unwrap();
        assert!((im[mid + 1] - im[mid]) * (im[mid] - im[mid - 1]) <= 0.0);
    }

    #[test]
    fn gauge_examples() {
        let p0 = Descriptor::Fourier(FourierSeries::mode(0, 0, c(1.0 / (4.0 * PI * PI), 0.0)));
        let q = Descriptor::Fourier(FourierSeries::mode(1, 0, c(1.0, 0.0)));
        let g = gauge_align(&q, &q, &p0).unwrap();
        assert!(g.defined && g.alpha == 0.0 && (g.aligned_overlap - c(1.0, 0.0)).norm() < 1e-14);
        for xi in [0.3, 2.0, -1.0, 3.1] {
            let qm = q.scale(C64::from_polar(1.0, xi));
            let g = gauge_align(&q, &qm, &p0).unwrap();
            assert!((g.aligned_overlap - c(1.0, 0.0)).norm() < 1e-12);
            let qm2 = qm.scale(C64::from_polar(1.0, g.alpha));
            let g2 = gauge_align(&q, &qm2, &p0).unwrap();
            assert!(g2.alpha.min(2.0 * PI - g2.alpha) < 1e-10);
        }
        let qy = Descriptor::Fourier(FourierSeries::mode(0, 1, c(1.0, 0.0)));
        let g = gauge_align(&q, &qy, &p0).unwrap();
        assert!(!g.defined && g.aligned_overlap.norm() == 0.0);
    }

    #[test]
    fn white_noise_flat() {
        let mut rng = crate::simulate::rng_for(1, 0);
        let n = 1 << 16;
        let dt = 0.1;
        let v: Vec<C64> = (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                c(a, b) / 2f64.sqrt()
            })
            .collect();
        let s = welch_psd(&series(v, dt), 256, 0.5).unwrap();
        let mean = s.values.iter().map(|x| x.re).sum::<f64>() / s.values.len() as f64;
        assert!((mean - dt).abs() < 0.1 * dt, "{mean}");
        assert!(s.freqs.windows(2).all(|w| w[1] > w[0]));
        assert!(s.values.iter().all(|v| v.im.abs() < 1e-12 && v.re >= 0.0));
    }

    #[test]
    fn welch_rejects() {
        let s = series(vec![c(1.0, 0.0); 100], 0.1);
        assert!(welch_psd(&s, 8, 0.5).is_err());
        assert!(welch_psd(&s, 64, 0.5).is_err());
        assert!(welch_psd(&s, 32, 1.0).is_err());
    }

    #[test]
    fn csd_hermitian_and_self() {
        let mut rng = crate::simulate::rng_for(2, 0);
        let a: Vec<C64> = (0..4096).map(|_| c(rng.random::<f64>(), rng.random::<f64>())).collect();
        let b: Vec<C64> = (0..4096).map(|_| c(rng.random::<f64>(), rng.random::<f64>())).collect();
        let (sa, sb) = (series(a.clone(), 0.05), series(b, 0.05));
        let ab = welch_csd(&sa, &sb, 128, 0.5).unwrap();
        let ba = welch_csd(&sb, &sa, 128, 0.5).unwrap();
        for (x, y) in ab.values.iter().zip(&ba.values) {
            assert_eq!(*x, y.conj());
        }
        let sa2 = series(a, 0.05);
        let p = welch_psd(&sa, 128, 0.5).unwrap();
        let cs = welch_csd(&sa, &sa2, 128, 0.5).unwrap();
        for (x, y) in p.values.iter().zip(&cs.values) {
            assert!((x - y).norm() <= 1e-15 * x.norm().max(1e-300));
        }
    }

    #[test]
    fn csv_export() {
        let s = lorentzian_power(c(-0.1, 2.0), &[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &["model = linear4d".into()]).unwrap();
        let t = String::from_utf8(buf).unwrap();
        assert!(t.starts_with("# model = linear4d\nnu,re,im\n1.0"));
    }

    proptest! {
        #[test]
        fn gauge_idempotent(re in -1.0f64..1.0, im in -1.0f64..1.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let g = gauge_from_overlap(c(re, im));
            let rotated = c(re, im) * C64::from_polar(1.0, -g.alpha);
            prop_assert!(rotated.im.abs() < 1e-12 && rotated.re > 0.0);
            let g2 = gauge_from_overlap(rotated);
            prop_assert!(g2.alpha.min(2.0 * PI - g2.alpha) < 1e-10);
        }

        #[test]
        fn lorentzian_nonnegative(mu in -3.0f64..-0.01, w in -5.0f64..5.0, nu in -10.0f64..10.0) {
            let s = lorentzian_power(c(mu, w), &[nu]).unwrap();
            prop_assert!(s.values[0].re > 0.0 && s.values[0].im == 0.0);
        }
    }
}
