//! Frequency sweeps of the combined-field equation, Hermitian-symmetric
//! inversion to the time domain, and the smooth cutoff windows used to split
//! densities in time.
//!
//! Time signals are recovered as
//! `psi(t) = (1/pi) Re sum_i w_i psi^f(omega_i) e^{-i omega_i t} d_omega`,
//! the inverse of `F(omega) = int f(t) e^{i omega t} dt`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SurfaceMesh;
use crate::incident::{cfie_rhs, IncidentPulse};
use crate::operators::{AssemblyPlan, KernelParams, OperatorError};
use crate::resolvent::{solve_with_norms, solve_without_norms, PointSolve, SolveError, SweepResult};

type C64 = Complex64;

/// Largest relative imaginary part tolerated in a synthesized density.
pub const IMAG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("time grid needs a power-of-two sample count >= 2 and t_end > t_start (got n = {n}, [{t_start}, {t_end}])")]
    BadTimeGrid { t_start: f64, t_end: f64, n: usize },
    #[error("frequency grid must be nonempty, ascending and uniformly spaced")]
    NonUniformGrid,
    #[error("frequency grid must start at 0 or at half the spacing (starts at {start}, spacing {spacing})")]
    GridOffset { start: f64, spacing: f64 },
    #[error("frequency grid contains the switch frequency omega0 = {0}")]
    GridHitsSwitch(f64),
    #[error("aliasing guard: periodization length {period:.4} is shorter than the required {required:.4}")]
    Aliasing { period: f64, required: f64 },
    #[error("Nyquist frequency {nyquist:.4} is below the largest sweep frequency {omega_max:.4}")]
    Nyquist { nyquist: f64, omega_max: f64 },
    #[error("synthesized density has relative imaginary part {0:.3e}")]
    NotReal(f64),
    #[error("solve failed at omega = {omega}: {source}")]
    Solve { omega: f64, source: SolveError },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("history layout mismatch: {0}")]
    Layout(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniform sample times `t_start + k dt`, `k = 0..n_samples`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_samples: usize) -> Result<Self, SynthesisError> {
        if n_samples < 2 || !n_samples.is_power_of_two() || !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite()
        {
            return Err(SynthesisError::BadTimeGrid {
                t_start,
                t_end,
                n: n_samples,
            });
        }
        Ok(Self {
            t_start,
            t_end,
            n_samples,
            dt: (t_end - t_start) / (n_samples - 1) as f64,
        })
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|k| self.time(k)).collect()
    }

    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.dt
    }

    /// Sample indices with `t` in `[a, b]`.
    pub fn index_range(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let lo = ((a - self.t_start) / self.dt - 1e-9).ceil().max(0.0) as usize;
        let hi = (((b - self.t_start) / self.dt + 1e-9).floor() + 1.0).max(0.0) as usize;
        lo.min(self.n_samples)..hi.min(self.n_samples)
    }
}

/// Real boundary density sampled on a time grid, stored panel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistory {
    pub grid: TimeGrid,
    /// Panel areas.
    pub weights: Vec<f64>,
    values: Vec<f64>,
    /// Largest relative imaginary residual seen during synthesis.
    pub imag_residual: f64,
}

impl DensityHistory {
    pub fn zeros(weights: Vec<f64>, grid: TimeGrid) -> Self {
        let values = vec![0.0; weights.len() * grid.n_samples];
        Self {
            grid,
            weights,
            values,
            imag_residual: 0.0,
        }
    }

    /// History with `psi(panel j, sample k) = f(j, t_k)`.
    pub fn from_fn(weights: Vec<f64>, grid: TimeGrid, f: impl Fn(usize, f64) -> f64 + Sync) -> Self {
        let m = grid.n_samples;
        let mut values = vec![0.0; weights.len() * m];
        values.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            for (k, v) in row.iter_mut().enumerate() {
                *v = f(j, grid.time(k));
            }
        });
        Self {
            grid,
            weights,
            values,
            imag_residual: 0.0,
        }
    }

    pub fn from_values(weights: Vec<f64>, grid: TimeGrid, values: Vec<f64>) -> Result<Self, SynthesisError> {
        if values.len() != weights.len() * grid.n_samples {
            return Err(SynthesisError::Layout(format!(
                "{} values for {} panels x {} samples",
                values.len(),
                weights.len(),
                grid.n_samples
            )));
        }
        Ok(Self {
            grid,
            weights,
            values,
            imag_residual: 0.0,
        })
    }

    pub fn n_panels(&self) -> usize {
        self.weights.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn series(&self, panel: usize) -> &[f64] {
        let m = self.grid.n_samples;
        &self.values[panel * m..(panel + 1) * m]
    }

    #[inline]
    pub fn sample(&self, panel: usize, k: usize) -> f64 {
        self.values[panel * self.grid.n_samples + k]
    }

    /// `||psi(., t_k)||_{L^2(Gamma)}`.
    pub fn norm_at(&self, k: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.sample(j, k).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.grid.n_samples).map(|k| self.norm_at(k)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Pointwise product with a time window.
    pub fn windowed(&self, w: impl Fn(f64) -> f64) -> Self {
        let m = self.grid.n_samples;
        let ws: Vec<f64> = (0..m).map(|k| w(self.grid.time(k))).collect();
        let mut values = self.values.clone();
        for row in values.chunks_mut(m) {
            for (v, wk) in row.iter_mut().zip(&ws) {
                *v *= wk;
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Self) -> Result<Self, SynthesisError> {
        if self.values.len() != other.values.len() || self.grid != other.grid {
            return Err(SynthesisError::Layout("histories differ in shape".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// `p`-th time derivative by finite differences with accuracy order >= 4.
    pub fn time_derivative(&self, p: usize) -> Result<Self, SynthesisError> {
        if p == 0 {
            return Ok(self.clone());
        }
        let m = self.grid.n_samples;
        let stencil = derivative_stencils(m, p, self.grid.dt)?;
        let mut values = vec![0.0; self.values.len()];
        values.par_chunks_mut(m).enumerate().for_each(|(j, out)| {
            let src = self.series(j);
            for (k, o) in out.iter_mut().enumerate() {
                let (start, ref w) = stencil[k];
                *o = w.iter().enumerate().map(|(i, wi)| wi * src[start + i]).sum();
            }
        });
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Binary layout: magic, panel count, time grid, areas, then the samples
    /// panel by panel, all little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), SynthesisError> {
        w.write_all(b"BDODHIST")?;
        w.write_all(&(self.n_panels() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_samples as u64).to_le_bytes())?;
        for x in [self.grid.t_start, self.grid.t_end, self.imag_residual] {
            w.write_all(&x.to_le_bytes())?;
        }
        for x in self.weights.iter().chain(&self.values) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SynthesisError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"BDODHIST" {
            return Err(SynthesisError::Layout("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        let mut u = |r: &mut dyn Read| -> std::io::Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = u(&mut r)? as usize;
        let m = u(&mut r)? as usize;
        let f = |r: &mut dyn Read| -> std::io::Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let (t0, t1, imag) = (f(&mut r)?, f(&mut r)?, f(&mut r)?);
        let grid = TimeGrid::new(t0, t1, m)?;
        let weights = (0..n).map(|_| f(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let values = (0..n * m).map(|_| f(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let mut h = Self::from_values(weights, grid, values)?;
        h.imag_residual = imag;
        Ok(h)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SynthesisError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthesisError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Finite-difference weights for the `m`-th derivative at `z` from nodes `x`.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Per-sample `(first node, weights)` for the `p`-th derivative on a uniform
/// grid of `m` samples: centred where possible, shifted near the ends.
pub(crate) fn derivative_stencils(m: usize, p: usize, dt: f64) -> Result<Vec<(usize, Vec<f64>)>, SynthesisError> {
    let half = (p + 4).div_ceil(2);
    let width = 2 * half + 1;
    if m < width {
        return Err(SynthesisError::Layout(format!(
            "{m} samples cannot hold a {width}-point stencil"
        )));
    }
    let scale = dt.powi(p as i32);
    let mut cache: std::collections::HashMap<usize, Vec<f64>> = Default::default();
    Ok((0..m)
        .map(|k| {
            let start = k.saturating_sub(half).min(m - width);
            let offset = k - start;
            let w = cache
                .entry(offset)
                .or_insert_with(|| {
                    let nodes: Vec<f64> = (0..width).map(|i| i as f64).collect();
                    fornberg_weights(offset as f64, &nodes, p).iter().map(|w| w / scale).collect()
                })
                .clone();
            (start, w)
        })
        .collect())
}

/// Ramp `v(u) = exp(2 e^{-1/u} / (u - 1))`, falling smoothly from 1 at
/// `u = 0` to 0 at `u = 1`.
pub fn v_ramp(u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        (2.0 * (-1.0 / u).exp() / (u - 1.0)).exp()
    }
}

/// Plateau window: 1 on `(-s0, s0)`, smooth ramps on `s0 <= |s| <= 2 s0`,
/// 0 beyond.
pub fn window_w(s: f64, s0: f64) -> f64 {
    let a = s.abs();
    if a > 2.0 * s0 {
        0.0
    } else if s < -s0 {
        1.0 - v_ramp((s + 2.0 * s0) / s0)
    } else if s < s0 {
        1.0
    } else {
        v_ramp((s - s0) / s0)
    }
}

/// Shifted window `w(s - phi)`.
pub fn window_phi(s: f64, phi: f64, s0: f64) -> f64 {
    window_w(s - phi, s0)
}

/// `(w_minus, w_plus)` at time `t`: `w_plus` rises from 0 at `T - tau` to 1
/// at `T` and `w_minus = 1 - w_plus`.
pub fn window_pm(t: f64, big_t: f64, tau: f64) -> (f64, f64) {
    let w_plus = if t >= big_t { 1.0 } else { 1.0 - v_ramp((t - (big_t - tau)) / tau) };
    (1.0 - w_plus, w_plus)
}

/// Shift, plateau and ramp parameters of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub s0: f64,
    pub tau: f64,
    pub phi: f64,
}

impl WindowSpec {
    pub fn new(s0: f64, tau: f64, phi: f64) -> Option<Self> {
        (s0 > 0.0 && tau > 0.0 && phi.is_finite()).then_some(Self { s0, tau, phi })
    }

    pub fn eval(&self, s: f64) -> f64 {
        window_phi(s, self.phi, self.s0)
    }
}

/// `omega_i = (i + 1/2) d_omega` up to and including the last point `<= omega_max`.
pub fn half_offset_grid(d_omega: f64, omega_max: f64) -> Vec<f64> {
    let n = (omega_max / d_omega - 0.5 + 1e-9).floor().max(-1.0) as i64 + 1;
    (0..n.max(0)).map(|i| (i as f64 + 0.5) * d_omega).collect()
}

/// Spacing whose periodization length is twice the epoch.
pub fn default_d_omega(epoch: f64) -> f64 {
    std::f64::consts::PI / epoch
}

/// Rejects grids that are not ascending, nonnegative or that contain `omega0`.
pub fn check_omega_grid(omegas: &[f64], omega0: f64) -> Result<(), SynthesisError> {
    if omegas.is_empty() || omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || omegas.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(SynthesisError::NonUniformGrid);
    }
    if omegas.contains(&omega0) {
        return Err(SynthesisError::GridHitsSwitch(omega0));
    }
    Ok(())
}

/// Assembles, solves and measures at one frequency.
pub fn solve_frequency(
    plan: &AssemblyPlan<'_>,
    pulse: &IncidentPulse,
    omega: f64,
    omega0: f64,
    norms: SweepNorms,
) -> Result<PointSolve, SynthesisError> {
    let params = KernelParams::new(omega, pulse.c, omega0);
    let a = plan.combined(&params)?;
    let rhs = cfie_rhs(pulse, plan.mesh(), &params);
    match norms {
        SweepNorms::Estimate => solve_with_norms(&a, &rhs),
        SweepNorms::Skip => solve_without_norms(&a, &rhs),
    }
    .map_err(|source| SynthesisError::Solve { omega, source })
}

/// Whether a sweep estimates `||A||` and `||A^{-1}||` at each frequency.
/// Skipped norms are stored as NaN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepNorms {
    #[default]
    Estimate,
    Skip,
}

/// Collects per-frequency results into a sweep.
pub fn sweep_from_points(omegas: Vec<f64>, weights: Vec<f64>, points: Vec<PointSolve>) -> SweepResult {
    let mut s = SweepResult {
        omegas,
        weights,
        densities: Vec::with_capacity(points.len()),
        resolvent_norms: Vec::with_capacity(points.len()),
        operator_norms: Vec::with_capacity(points.len()),
        rhs_norms: Vec::with_capacity(points.len()),
        solve_residuals: Vec::with_capacity(points.len()),
    };
    for p in points {
        s.densities.push(p.density);
        s.resolvent_norms.push(p.resolvent_norm);
        s.operator_norms.push(p.operator_norm);
        s.rhs_norms.push(p.rhs_norm);
        s.solve_residuals.push(p.residual);
    }
    s
}

/// Sweep over `omegas` sharing one assembly plan; `progress` sees each point
/// in ascending order.
pub fn frequency_sweep_with(
    plan: &AssemblyPlan<'_>,
    pulse: &IncidentPulse,
    omegas: &[f64],
    omega0: f64,
    norms: SweepNorms,
    mut progress: impl FnMut(usize, &PointSolve),
) -> Result<SweepResult, SynthesisError> {
    check_omega_grid(omegas, omega0)?;
    let mut points = Vec::with_capacity(omegas.len());
    for (i, &w) in omegas.iter().enumerate() {
        let p = solve_frequency(plan, pulse, w, omega0, norms)?;
        progress(i, &p);
        points.push(p);
    }
    Ok(sweep_from_points(omegas.to_vec(), plan.mesh().areas().to_vec(), points))
}

pub fn frequency_sweep(
    mesh: &SurfaceMesh,
    pulse: &IncidentPulse,
    omegas: &[f64],
    omega0: f64,
) -> Result<SweepResult, SynthesisError> {
    let plan = AssemblyPlan::new(mesh)?;
    frequency_sweep_with(&plan, pulse, omegas, omega0, SweepNorms::Estimate, |_, _| {})
}

/// Spacing and quadrature weights of a uniform grid starting at 0
/// (trapezoid) or at half the spacing (midpoint).
pub fn inversion_weights(omegas: &[f64]) -> Result<(f64, Vec<f64>), SynthesisError> {
    if omegas.is_empty() {
        return Err(SynthesisError::NonUniformGrid);
    }
    if omegas.len() == 1 {
        return Err(SynthesisError::NonUniformGrid);
    }
    let d = (omegas[omegas.len() - 1] - omegas[0]) / (omegas.len() - 1) as f64;
    let tol = 1e-9 * d.max(omegas[omegas.len() - 1]);
    if !(d > 0.0) || omegas.iter().enumerate().any(|(i, w)| (w - (omegas[0] + i as f64 * d)).abs() > tol) {
        return Err(SynthesisError::NonUniformGrid);
    }
    let mut w = vec![1.0; omegas.len()];
    if omegas[0].abs() <= tol {
        w[0] = 0.5;
        *w.last_mut().unwrap() = 0.5;
    } else if (omegas[0] - 0.5 * d).abs() > tol {
        return Err(SynthesisError::GridOffset {
            start: omegas[0],
            spacing: d,
        });
    }
    Ok((d, w))
}

/// [`synthesize_time_density_with`] without extra aliasing margin.
pub fn synthesize_time_density(sweep: &SweepResult, grid: &TimeGrid) -> Result<DensityHistory, SynthesisError> {
    synthesize_time_density_with(sweep, grid, 0.0)
}

/// Inverts a sweep to real time samples. The periodization length
/// `2 pi / d_omega` must cover the time grid plus `signal_duration`.
pub fn synthesize_time_density_with(
    sweep: &SweepResult,
    grid: &TimeGrid,
    signal_duration: f64,
) -> Result<DensityHistory, SynthesisError> {
    let (d, wq) = inversion_weights(&sweep.omegas)?;
    let period = 2.0 * std::f64::consts::PI / d;
    let required = grid.t_end - grid.t_start + signal_duration;
    if period < required {
        return Err(SynthesisError::Aliasing { period, required });
    }
    let omega_max = sweep.omegas[sweep.omegas.len() - 1];
    if grid.nyquist() < omega_max {
        return Err(SynthesisError::Nyquist {
            nyquist: grid.nyquist(),
            omega_max,
        });
    }
    let n = sweep.weights.len();
    if sweep.densities.iter().any(|x| x.len() != n) {
        return Err(SynthesisError::Layout("density length differs from panel count".into()));
    }
    let m = grid.n_samples;
    // phase[k][i] = w_i d e^{-i omega_i t_k} / pi
    let phases: Vec<Vec<C64>> = (0..m)
        .map(|k| {
            let t = grid.time(k);
            sweep
                .omegas
                .iter()
                .zip(&wq)
                .map(|(om, wi)| C64::from_polar(wi * d / std::f64::consts::PI, -om * t))
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * m];
    let imag: Vec<(f64, f64)> = values
        .par_chunks_mut(m)
        .enumerate()
        .map(|(j, row)| {
            let (mut im_max, mut re_max) = (0.0f64, 0.0f64);
            for (k, out) in row.iter_mut().enumerate() {
                // Positive and mirrored negative frequencies, summed as complex
                // numbers; the imaginary part must cancel.
                let mut acc = C64::new(0.0, 0.0);
                for (ph, dens) in phases[k].iter().zip(&sweep.densities) {
                    let z = dens[j] * ph;
                    acc += (z + z.conj()) * 0.5;
                }
                *out = acc.re;
                im_max = im_max.max(acc.im.abs());
                re_max = re_max.max(acc.re.abs());
            }
            (im_max, re_max)
        })
        .collect();
    let re_max = imag.iter().fold(0.0f64, |a, v| a.max(v.1));
    let im_max = imag.iter().fold(0.0f64, |a, v| a.max(v.0));
    let imag_residual = if re_max > 0.0 { im_max / re_max } else { im_max };
    if !(imag_residual <= IMAG_TOL) {
        return Err(SynthesisError::NotReal(imag_residual));
    }
    Ok(DensityHistory {
        grid: *grid,
        weights: sweep.weights.clone(),
        values,
        imag_residual,
    })
}

/// Discrete Parseval pair: `(sum_t dt ||psi(t)||^2, (1/pi) sum_omega w d ||psi^f||^2)`.
pub fn parseval_energies(sweep: &SweepResult, history: &DensityHistory) -> Result<(f64, f64), SynthesisError> {
    let (d, wq) = inversion_weights(&sweep.omegas)?;
    let w = &sweep.weights;
    let freq: f64 = sweep
        .densities
        .iter()
        .zip(&wq)
        .map(|(x, wi)| wi * x.iter().zip(w).map(|(z, a)| a * z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        * d
        / std::f64::consts::PI;
    let time: f64 = history.norms().iter().map(|n| n * n).sum::<f64>() * history.grid.dt;
    Ok((time, freq))
}
