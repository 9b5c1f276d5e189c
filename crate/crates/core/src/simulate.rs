//! Trajectory generation and Q-coordinate observables.
//!
//! Continuous models are integrated with Euler–Maruyama; the nine-state model
//! with Gillespie's direct method, sampled onto a uniform grid. Every run
//! draws from a ChaCha8 stream keyed by `(seed, stream)`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf_solver::FourierField;
use crate::descriptor::{Descriptor, State};
use crate::error::{invalid, Error, Result};
use crate::models::{discrete_rate_matrix, linear_drift, CoupledModel, ModelKind};
use crate::spectral_core::{c, C64};

const TWO_PI: f64 = 2.0 * PI;

/// Default transient discarded before Q-series evaluation.
pub const DEFAULT_DISCARD: f64 = 10.0;

/// Seeded generator for task `stream`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sampled path. `data` holds `dim` values per sample; discrete states are
/// stored as their index.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model: CoupledModel,
    pub dt: f64,
    pub dim: usize,
    pub data: Vec<f64>,
    pub seed: u64,
    pub t0_discard: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn state(&self, i: usize) -> State {
        to_state(self.model.kind, self.sample(i))
    }

    /// CSV with a `t` column followed by one column per coordinate.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let names: Vec<String> = match self.model.kind {
            ModelKind::Linear4D => (1..=4).map(|i| format!("x{i}")).collect(),
            ModelKind::Discrete9D => vec!["state".into()],
            _ => vec!["x".into(), "y".into()],
        };
        writeln!(w, "t,{}", names.join(","))?;
        for i in 0..self.len() {
            let vals: Vec<String> = self.sample(i).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{:.17e},{}", i as f64 * self.dt, vals.join(","))?;
        }
        Ok(())
    }

    /// Binary record: magic `QSYNCTRJ`, `u32` header length, JSON header
    /// (model, dt, seed, discard, dim, samples), then little-endian `f64`
    /// samples.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = BinaryHeader {
            model: self.model,
            dt: self.dt,
            seed: self.seed,
            t0_discard: self.t0_discard,
            dim: self.dim,
            samples: self.len(),
        };
        let h = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(h.len() as u32).to_le_bytes())?;
        w.write_all(&h)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return invalid("not a trajectory record");
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut h = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut h)?;
        let header: BinaryHeader = serde_json::from_slice(&h)?;
        let mut data = Vec::with_capacity(header.dim * header.samples);
        let mut buf = [0u8; 8];
        for _ in 0..header.dim * header.samples {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(Self {
            model: header.model,
            dt: header.dt,
            dim: header.dim,
            data,
            seed: header.seed,
            t0_discard: header.t0_discard,
        })
    }
}

const MAGIC: &[u8; 8] = b"QSYNCTRJ";

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    model: CoupledModel,
    dt: f64,
    seed: u64,
    t0_discard: f64,
    dim: usize,
    samples: usize,
}

fn to_state(kind: ModelKind, s: &[f64]) -> State {
    match kind {
        ModelKind::Linear4D => State::R4([s[0], s[1], s[2], s[3]]),
        ModelKind::Discrete9D => State::Index(s[0] as usize),
        _ => State::Torus([s[0], s[1]]),
    }
}

fn dim_of(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Linear4D => 4,
        ModelKind::Discrete9D => 1,
        _ => 2,
    }
}

/// Integration settings for [`euler_maruyama_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub stream: u64,
    /// Keep every `stride`-th step.
    pub stride: usize,
    pub discard: f64,
    /// Initial state; the origin (or state 0) when absent.
    pub x0: Option<Vec<f64>>,
}

impl EmOptions {
    pub fn new(dt: f64, t_end: f64, seed: u64) -> Self {
        Self { dt, t_end, seed, stream: 0, stride: 1, discard: DEFAULT_DISCARD, x0: None }
    }
}

/// Drives an Euler–Maruyama integration, handing each kept sample to `visit`.
/// Returns the number of kept samples.
pub fn em_stream(model: &CoupledModel, opts: &EmOptions, mut visit: impl FnMut(usize, &[f64])) -> Result<usize> {
    if !model.is_continuous() {
        return Err(Error::Unsupported { model: model.kind.name(), what: "Euler–Maruyama needs a continuous model".into() });
    }
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return invalid(format!("dt must be positive, got {}", opts.dt));
    }
    if !(opts.t_end > 0.0) || !opts.t_end.is_finite() {
        return invalid(format!("t_end must be positive, got {}", opts.t_end));
    }
    if opts.stride == 0 {
        return invalid("stride must be at least 1");
    }
    let dim = dim_of(model.kind);
    let mut x = match &opts.x0 {
        Some(v) if v.len() == dim => v.clone(),
        Some(v) => return invalid(format!("initial state has {} components, expected {dim}", v.len())),
        None => vec![0.0; dim],
    };
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut rng = rng_for(opts.seed, opts.stream);
    let amp = (2.0 * model.diffusion * opts.dt).sqrt();
    let a = linear_drift(model.eta, model.omega, model.tau, model.kappa);
    let (w, t, k) = (model.omega, model.tau, model.kappa);
    let mut f = vec![0.0; dim];
    let mut kept = 0;
    visit(kept, &x);
    kept += 1;
    for step in 1..=steps {
        match model.kind {
            ModelKind::Linear4D => {
                for i in 0..4 {
                    f[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2] + a[i][3] * x[3];
                }
            }
            ModelKind::Ring2D => {
                let s = (x[1] - x[0]).sin();
                f[0] = w + t + k * s;
                f[1] = w - k * s;
            }
            _ => {
                let cs = (x[1] - x[0]).cos();
                f[0] = w + t + k * cs;
                f[1] = w + k * cs;
            }
        }
        for i in 0..dim {
            let xi: f64 = rng.sample(StandardNormal);
            x[i] += f[i] * opts.dt + amp * xi;
        }
        if model.kind.is_ring() {
            for v in x.iter_mut() {
                *v = v.rem_euclid(TWO_PI);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        if step % opts.stride == 0 {
            visit(kept, &x);
            kept += 1;
        }
    }
    Ok(kept)
}

/// Euler–Maruyama path from the origin with default discard.
pub fn euler_maruyama(model: &CoupledModel, dt: f64, t_end: f64, seed: u64) -> Result<Trajectory> {
    euler_maruyama_with(model, &EmOptions::new(dt, t_end, seed))
}

pub fn euler_maruyama_with(model: &CoupledModel, opts: &EmOptions) -> Result<Trajectory> {
    let dim = dim_of(model.kind);
    let mut data = Vec::new();
    em_stream(model, opts, |_, x| data.extend_from_slice(x))?;
    Ok(Trajectory {
        model: *model,
        dt: opts.dt * opts.stride as f64,
        dim,
        data,
        seed: opts.seed,
        t0_discard: opts.discard,
    })
}

/// One Gillespie jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub state: usize,
}

/// Exact jump times of the nine-state chain from state `s0` up to `t_end`.
/// The first entry is `(0, s0)`.
pub fn gillespie_events(model: &CoupledModel, t_end: f64, seed: u64, stream: u64, s0: usize) -> Result<Vec<Event>> {
    if model.kind != ModelKind::Discrete9D {
        return Err(Error::Unsupported { model: model.kind.name(), what: "Gillespie needs the discrete model".into() });
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return invalid(format!("t_end must be positive, got {t_end}"));
    }
    if s0 >= 9 {
        return invalid(format!("initial state {s0} out of range"));
    }
    let cm = discrete_rate_matrix(model.omega, model.tau, model.kappa);
    let mut rng = rng_for(seed, stream);
    let mut ev = vec![Event { t: 0.0, state: s0 }];
    let (mut t, mut s) = (0.0, s0);
    loop {
        let total = -cm[s][s];
        if !(total > 0.0) {
            return Err(Error::Absorbing { state: s, t });
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += wait;
        if t > t_end {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut next = s;
        for (to, row) in cm.iter().enumerate() {
            if to == s || row[s] <= 0.0 {
                continue;
            }
            next = to;
            u -= row[s];
            if u < 0.0 {
                break;
            }
        }
        s = next;
        ev.push(Event { t, state: s });
    }
    Ok(ev)
}

/// Gillespie path sampled on a grid of spacing `grid_dt`, each grid point
/// taking the state of the most recent jump.
pub fn gillespie(model: &CoupledModel, t_end: f64, seed: u64, grid_dt: f64) -> Result<Trajectory> {
    if !(grid_dt > 0.0) || !grid_dt.is_finite() {
        return invalid(format!("grid_dt must be positive, got {grid_dt}"));
    }
    let ev = gillespie_events(model, t_end, seed, 0, 0)?;
    let n = (t_end / grid_dt).floor() as usize + 1;
    let mut data = Vec::with_capacity(n);
    let mut e = 0;
    for i in 0..n {
        let t = i as f64 * grid_dt;
        while e + 1 < ev.len() && ev[e + 1].t <= t {
            e += 1;
        }
        data.push(ev[e].state as f64);
    }
    Ok(Trajectory { model: *model, dt: grid_dt, dim: 1, data, seed, t0_discard: DEFAULT_DISCARD })
}

/// Time-weighted state occupancy of an event list up to `t_end`.
pub fn occupancy(events: &[Event], t_end: f64) -> [f64; 9] {
    let mut occ = [0.0; 9];
    for (i, e) in events.iter().enumerate() {
        let stop = events.get(i + 1).map_or(t_end, |n| n.t);
        occ[e.state] += stop - e.t;
    }
    occ.iter_mut().for_each(|v| *v /= t_end);
    occ
}

/// Which observable a series carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QLabel {
    Plus,
    Minus,
    #[serde(rename = "1x")]
    X1,
    #[serde(rename = "1y")]
    Y1,
    /// Raw-coordinate comparison observable of oscillator A.
    RawA,
    /// Raw-coordinate comparison observable of oscillator B.
    RawB,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSeries {
    pub dt: f64,
    pub values: Vec<C64>,
    pub label: QLabel,
}

/// Observable evaluated along a path.
#[derive(Debug, Clone)]
pub enum Observable {
    Closed(Descriptor),
    /// Ring eigenfunction in lattice form.
    Field(FourierField),
    /// Raw phase-like coordinate of one oscillator (`0` = A, `1` = B):
    /// `x₂ + i x₁` (linear), `e^{ix}` (ring), `e^{2πi k/3}` (discrete).
    Raw(usize),
}

impl Observable {
    fn prepare(&self) -> Evaluator<'_> {
        match self {
            Observable::Field(f) => {
                let max = f.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let lo = f.coeffs.iter().position(|z| z.norm() > 1e-15 * max).unwrap_or(0);
                let hi = f.coeffs.iter().rposition(|z| z.norm() > 1e-15 * max).unwrap_or(0);
                Evaluator::Field { n: f.n, j0: lo as i64 - f.j as i64, coeffs: &f.coeffs[lo..=hi] }
            }
            Observable::Closed(d) => Evaluator::Closed(d),
            Observable::Raw(o) => Evaluator::Raw(*o),
        }
    }
}

enum Evaluator<'a> {
    Closed(&'a Descriptor),
    Field { n: i64, j0: i64, coeffs: &'a [C64] },
    Raw(usize),
}

impl Evaluator<'_> {
    fn eval(&self, kind: ModelKind, s: &[f64]) -> Result<C64> {
        match self {
            Evaluator::Closed(d) => d.eval(&to_state(kind, s)),
            Evaluator::Field { n, j0, coeffs } => {
                if !kind.is_ring() {
                    return invalid("Fourier field needs a ring trajectory");
                }
                let (x, y) = (s[0], s[1]);
                // Σ z_j e^{i(jx + (N−j)y)} = e^{iNy} Σ z_j e^{ij(x−y)}
                let step = C64::from_polar(1.0, x - y);
                let mut p = C64::from_polar(1.0, *j0 as f64 * (x - y));
                let mut acc = c(0.0, 0.0);
                for z in coeffs.iter() {
                    acc += z * p;
                    p *= step;
                }
                Ok(acc * C64::from_polar(1.0, *n as f64 * y))
            }
            Evaluator::Raw(o) => {
                let o = *o;
                if o > 1 {
                    return invalid("raw observable index must be 0 or 1");
                }
                Ok(match kind {
                    ModelKind::Linear4D => c(s[2 * o + 1], s[2 * o]),
                    ModelKind::Discrete9D => {
                        let st = s[0] as usize;
                        let k = if o == 0 { st % 3 } else { st / 3 };
                        C64::from_polar(1.0, TWO_PI * k as f64 / 3.0)
                    }
                    _ => C64::from_polar(1.0, s[o]),
                })
            }
        }
    }
}

/// Evaluates `obs` along `traj`, dropping samples with `t < traj.t0_discard`.
pub fn q_series(traj: &Trajectory, obs: &Observable, label: QLabel) -> Result<QSeries> {
    let ev = obs.prepare();
    let start = (traj.t0_discard / traj.dt).ceil().max(0.0) as usize;
    if start >= traj.len() {
        return invalid("trajectory shorter than the discard window");
    }
    let values = (start..traj.len()).map(|i| ev.eval(traj.model.kind, traj.sample(i))).collect::<Result<Vec<_>>>()?;
    Ok(QSeries { dt: traj.dt, values, label })
}

/// Integrates and evaluates several observables without storing the path.
pub fn em_q_series(model: &CoupledModel, opts: &EmOptions, obs: &[(Observable, QLabel)]) -> Result<Vec<QSeries>> {
    let evs: Vec<Evaluator<'_>> = obs.iter().map(|(o, _)| o.prepare()).collect();
    let sample_dt = opts.dt * opts.stride as f64;
    let start = (opts.discard / sample_dt).ceil().max(0.0) as usize;
    let mut out: Vec<Vec<C64>> = vec![Vec::new(); obs.len()];
    let mut err = None;
    em_stream(model, opts, |i, x| {
        if i < start || err.is_some() {
            return;
        }
        for (e, o) in evs.iter().zip(out.iter_mut()) {
            match e.eval(model.kind, x) {
                Ok(v) => o.push(v),
                Err(er) => err = Some(er),
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    if out.first().is_some_and(|v| v.is_empty()) {
        return invalid("simulation shorter than the discard window");
    }
    Ok(out.into_iter().zip(obs).map(|(values, (_, label))| QSeries { dt: sample_dt, values, label: *label }).collect())
}

/// Ensemble mean of `obs` at `times` over `runs` independent paths from `x0`,
/// with its standard error.
pub fn ensemble_mean(
    model: &CoupledModel,
    x0: &[f64],
    obs: &Descriptor,
    times: &[f64],
    dt: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<(C64, f64)>> {
    if runs < 2 {
        return invalid("ensemble needs at least two runs");
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let idx: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    let samples: Vec<Vec<C64>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let opts = EmOptions { stream: r, discard: 0.0, x0: Some(x0.to_vec()), ..EmOptions::new(dt, t_end, seed) };
            let mut vals = vec![c(0.0, 0.0); idx.len()];
            let mut err = None;
            em_stream(model, &opts, |i, x| {
                for (k, &want) in idx.iter().enumerate() {
                    if want == i {
                        match obs.eval(&to_state(model.kind, x)) {
                            Ok(v) => vals[k] = v,
                            Err(e) => err = Some(e),
                        }
                    }
                }
            })?;
            match err {
                Some(e) => Err(e),
                None => Ok(vals),
            }
        })
        .collect::<Result<_>>()?;
    let n = runs as f64;
    Ok((0..idx.len())
        .map(|k| {
            let mean: C64 = samples.iter().map(|v| v[k]).sum::<C64>() / n;
            let var = samples.iter().map(|v| (v[k] - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .collect())
}
