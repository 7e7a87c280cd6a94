//! Frequency-domain kernels, their frequency derivatives, and collocation
//! assembly of the single-layer, adjoint double-layer and combined-field
//! operators.
//!
//! Near and self interactions use the split `G = (G - G_0) + G_0`: the static
//! part is integrated once per mesh (singular and adaptive rules) and stored
//! in an [`AssemblyPlan`], while the smooth remainder is integrated with fixed
//! Gauss nodes at every frequency. Because all frequency-dependent pieces use
//! fixed nodes, the assembled matrices are analytic in `omega` and their
//! exact derivatives are the derivative-kernel assemblies.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SurfaceMesh, Vec3};
use crate::quadrature::{self, AdaptiveOptions, QuadratureError};

type C64 = Complex64;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Frequencies closer than this to `omega0` are rejected by derivative assembly.
pub const SWITCH_GUARD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("coincident source and target points")]
    CoincidentPoints,
    #[error("assembly requires omega >= 0, got {0}")]
    NegativeFrequency(f64),
    #[error("omega = {omega} is within {SWITCH_GUARD:e} of the coupling switch omega0 = {omega0}")]
    NearSwitch { omega: f64, omega0: f64 },
    #[error("derivative order must be positive")]
    ZeroOrder,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quadrature failure: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("matrix cache format error: {0}")]
    Format(String),
    #[error("static single layer has no usable equilibrium density")]
    NoEquilibriumDensity,
}

/// Frequency, wavespeed and combined-field coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub omega: f64,
    pub c: f64,
    pub kappa: f64,
    pub omega0: f64,
    pub eta: f64,
}

impl KernelParams {
    /// Parameters with the coupling `eta = 1` below `omega0` and `eta = omega`
    /// above it. For negative frequencies `eta` is odd in `omega`, which keeps
    /// every operator Hermitian-symmetric in frequency.
    pub fn new(omega: f64, c: f64, omega0: f64) -> Self {
        assert!(c > 0.0, "wavespeed must be positive");
        assert!(omega0 > 0.0, "omega0 must be positive");
        Self {
            omega,
            c,
            kappa: omega / c,
            omega0,
            eta: Self::coupling(omega, omega0),
        }
    }

    pub fn coupling(omega: f64, omega0: f64) -> f64 {
        if omega.abs() < omega0 {
            if omega < 0.0 {
                -1.0
            } else {
                1.0
            }
        } else {
            omega
        }
    }

    /// Same wavespeed and switch, different frequency.
    pub fn at(&self, omega: f64) -> Self {
        Self::new(omega, self.c, self.omega0)
    }

    /// Overrides the coupling parameter (used by oracle comparisons).
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }
}

#[inline]
fn i_pow(m: u32) -> C64 {
    match m % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// `(d/d omega)^m` of the single-layer kernel and of its target normal
/// derivative, for `diff = r - r'`.
#[inline(always)]
fn kernel_pair(diff: Vec3, n: Vec3, kappa: f64, inv_c: f64, m: u32) -> (C64, C64) {
    let r2 = diff.norm_sq();
    let r = r2.sqrt();
    let (s, co) = (kappa * r).sin_cos();
    let mut g = C64::new(co, s) * (1.0 / (FOUR_PI * r));
    if m > 0 {
        g *= i_pow(m) * (r * inv_c).powi(m as i32);
    }
    let k = g * (diff.dot(n) / r2) * C64::new(m as f64 - 1.0, kappa * r);
    (g, k)
}

/// `G_omega - G_0` and its normal derivative; both bounded as `r -> r'`.
#[inline(always)]
fn dynamic_pair(diff: Vec3, n: Vec3, kappa: f64) -> (C64, C64) {
    let r2 = diff.norm_sq();
    let r = r2.sqrt();
    let x = kappa * r;
    if r == 0.0 {
        return (I * (kappa / FOUR_PI), C64::new(0.0, 0.0));
    }
    let (s, co) = x.sin_cos();
    let half = (0.5 * x).sin();
    // e^{ix} - 1 without cancellation
    let em1 = C64::new(-2.0 * half * half, s);
    let g = em1 * (1.0 / (FOUR_PI * r));
    // e^{ix}(ix - 1) + 1 = sum_{n>=2} (ix)^n (n-1)/n!
    let bracket = if x.abs() < 0.1 {
        let mut term = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        let mut fact = 1.0;
        for n in 1..=12u32 {
            term *= I * x;
            fact *= n as f64;
            if n >= 2 {
                acc += term * ((n - 1) as f64 / fact);
            }
        }
        acc
    } else {
        C64::new(co, s) * C64::new(-1.0, x) + 1.0
    };
    let k = bracket * (diff.dot(n) / (FOUR_PI * r2 * r));
    (g, k)
}

fn check_distinct(r: Vec3, rp: Vec3) -> Result<Vec3, OperatorError> {
    let d = r - rp;
    if d.norm_sq() == 0.0 {
        return Err(OperatorError::CoincidentPoints);
    }
    Ok(d)
}

/// Helmholtz Green function `e^{i kappa R} / (4 pi R)`.
pub fn green(r: Vec3, rp: Vec3, params: &KernelParams) -> Result<C64, OperatorError> {
    green_domega(r, rp, params, 0)
}

/// `m`-th frequency derivative of the Green function, `(i R / c)^m G`.
pub fn green_domega(r: Vec3, rp: Vec3, params: &KernelParams, m: u32) -> Result<C64, OperatorError> {
    let d = check_distinct(r, rp)?;
    Ok(kernel_pair(d, Vec3::ZERO, params.kappa, 1.0 / params.c, m).0)
}

/// `m`-th frequency derivative of the target normal derivative of the Green
/// function, `d/dn(r) G(r, r')`.
pub fn dgreen_dn_domega(
    r: Vec3,
    rp: Vec3,
    normal_at_r: Vec3,
    params: &KernelParams,
    m: u32,
) -> Result<C64, OperatorError> {
    let d = check_distinct(r, rp)?;
    Ok(kernel_pair(d, normal_at_r, params.kappa, 1.0 / params.c, m).1)
}

/// Square complex matrix acting on panel values, with the area-weighted
/// discrete `L^2` inner product `<f, g> = sum_j area_j f_j conj(g_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n: usize,
    entries: Vec<C64>,
    weights: Vec<f64>,
}

impl DenseOperator {
    /// Row-major entries and positive weights.
    pub fn new(entries: Vec<C64>, weights: Vec<f64>) -> Result<Self, OperatorError> {
        let n = weights.len();
        if entries.len() != n * n {
            return Err(OperatorError::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        Ok(Self { n, entries, weights })
    }

    pub fn identity(weights: Vec<f64>) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); weights.len()], weights)
    }

    pub fn from_diagonal(diag: &[C64], weights: Vec<f64>) -> Self {
        let n = weights.len();
        assert_eq!(diag.len(), n);
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        for (i, d) in diag.iter().enumerate() {
            entries[i * n + i] = *d;
        }
        Self { n, entries, weights }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        self.entries
            .par_chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Discrete `L^2(Gamma)` norm of a panel vector.
    pub fn weighted_norm(&self, x: &[C64]) -> f64 {
        weighted_norm(&self.weights, x)
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: C64, other: &DenseOperator, beta: C64) -> DenseOperator {
        assert_eq!(self.n, other.n);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        DenseOperator {
            n: self.n,
            entries,
            weights: self.weights.clone(),
        }
    }

    pub fn scale(&self, alpha: C64) -> DenseOperator {
        DenseOperator {
            n: self.n,
            entries: self.entries.iter().map(|a| a * alpha).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn conj(&self) -> DenseOperator {
        DenseOperator {
            n: self.n,
            entries: self.entries.iter().map(|a| a.conj()).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Plain matrix copy.
    pub fn to_mat(&self) -> faer::Mat<C64> {
        faer::Mat::from_fn(self.n, self.n, |i, j| self.entries[i * self.n + j])
    }

    /// `W^{1/2} A W^{-1/2}`, whose spectral norm is the weighted operator norm.
    pub fn weighted_mat(&self) -> faer::Mat<C64> {
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        faer::Mat::from_fn(self.n, self.n, |i, j| {
            self.entries[i * self.n + j] * (s[i] / s[j])
        })
    }
}

/// `sqrt(sum_j w_j |x_j|^2)`.
pub fn weighted_norm(weights: &[f64], x: &[C64]) -> f64 {
    weights
        .iter()
        .zip(x)
        .map(|(w, v)| w * v.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Quadrature choices for assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    /// Pairs with centroid distance below `near_factor * diam(source)` use the
    /// static/dynamic split.
    pub near_factor: f64,
    /// Pairs below `mid_factor * diam(source)` use `mid_degree`.
    pub mid_factor: f64,
    pub near_degree: usize,
    pub mid_degree: usize,
    pub far_degree: usize,
    /// Relative tolerance of the adaptive static integrals.
    pub rtol: f64,
    /// Rule for the self-panel static `K*` entry.
    pub diagonal: StaticDiagonal,
}

/// Relative equilibrium density below which a panel uses the flux rule.
pub const EQUILIBRIUM_MIN_FRACTION: f64 = 0.05;

/// How the self-panel entry of the static adjoint double layer is set.
///
/// The flat-panel value is zero, which drops the curvature contribution of
/// the self panel and leaves a first-order error on curved surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticDiagonal {
    /// Zero diagonal.
    FlatPanel,
    /// Weighted column sums: `sum_j area_j K*_0(j, k) = -area_k / 2`.
    Flux,
    /// Row identity against the discrete equilibrium density
    /// `sigma = S_0^{-1} 1`: `(I/2 + K*_0) sigma = 0`. This keeps the static
    /// combined operator singular on the same vector as the continuum one, so
    /// the zero-frequency limit of the discrete density is real. Panels whose
    /// equilibrium density is below [`EQUILIBRIUM_MIN_FRACTION`] of the mean
    /// fall back to the flux rule.
    Equilibrium,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            near_factor: 2.0,
            mid_factor: 6.0,
            near_degree: 6,
            mid_degree: 4,
            far_degree: 2,
            rtol: 1e-8,
            diagonal: StaticDiagonal::Equilibrium,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct StaticTerm {
    k: usize,
    s0: f64,
    k0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairClass {
    Near,
    Mid,
    Far,
}

/// Frequency-independent data for repeated assembly on one mesh: quadrature
/// nodes per panel and the static near/self integrals.
#[derive(Debug, Clone)]
pub struct AssemblyPlan<'m> {
    mesh: &'m SurfaceMesh,
    options: AssemblyOptions,
    diam: Vec<f64>,
    near_nodes: Vec<(Vec3, f64)>,
    mid_nodes: Vec<(Vec3, f64)>,
    far_nodes: Vec<(Vec3, f64)>,
    n_near: usize,
    n_mid: usize,
    n_far: usize,
    statics: Vec<Vec<StaticTerm>>,
}

fn panel_nodes(mesh: &SurfaceMesh, degree: usize) -> Result<(Vec<(Vec3, f64)>, usize), QuadratureError> {
    let r = quadrature::rule(degree)?;
    let mut out = Vec::with_capacity(mesh.n_panels() * r.len());
    for k in 0..mesh.n_panels() {
        let t = mesh.triangle(k);
        let jac = 2.0 * mesh.areas()[k];
        for (l, w) in r.nodes().iter().zip(r.weights()) {
            out.push((t.point(*l), w * jac));
        }
    }
    Ok((out, r.len()))
}

impl<'m> AssemblyPlan<'m> {
    pub fn new(mesh: &'m SurfaceMesh) -> Result<Self, OperatorError> {
        Self::with_options(mesh, AssemblyOptions::default())
    }

    pub fn with_options(mesh: &'m SurfaceMesh, options: AssemblyOptions) -> Result<Self, OperatorError> {
        let diam: Vec<f64> = (0..mesh.n_panels()).map(|k| mesh.triangle(k).diameter()).collect();
        let (near_nodes, n_near) = panel_nodes(mesh, options.near_degree)?;
        let (mid_nodes, n_mid) = panel_nodes(mesh, options.mid_degree)?;
        let (far_nodes, n_far) = panel_nodes(mesh, options.far_degree)?;
        let mut plan = Self {
            mesh,
            options,
            diam,
            near_nodes,
            mid_nodes,
            far_nodes,
            n_near,
            n_mid,
            n_far,
            statics: Vec::new(),
        };
        let adaptive = AdaptiveOptions {
            rtol: options.rtol,
            max_depth: 16,
            degree: options.near_degree,
        };
        let statics: Result<Vec<Vec<StaticTerm>>, OperatorError> = (0..mesh.n_panels())
            .into_par_iter()
            .map(|j| {
                let x = mesh.centroids()[j];
                let nj = mesh.normals()[j];
                let mut terms = Vec::new();
                for k in 0..mesh.n_panels() {
                    if plan.classify(j, k) != PairClass::Near {
                        continue;
                    }
                    let tri = mesh.triangle(k);
                    let term = if k == j {
                        StaticTerm {
                            k,
                            s0: quadrature::singular_panel_integral(&tri, x)?,
                            k0: 0.0,
                        }
                    } else {
                        // Real parts carry the single-layer kernel, imaginary
                        // parts the double-layer kernel.
                        let v = quadrature::near_singular_integral(
                            &tri,
                            x,
                            |y| {
                                let d = x - y;
                                let r2 = d.norm_sq();
                                let r = r2.sqrt();
                                C64::new(1.0 / (FOUR_PI * r), -d.dot(nj) / (FOUR_PI * r2 * r))
                            },
                            adaptive,
                        )?;
                        StaticTerm { k, s0: v.re, k0: v.im }
                    };
                    terms.push(term);
                }
                Ok(terms)
            })
            .collect();
        plan.statics = statics?;
        match options.diagonal {
            StaticDiagonal::FlatPanel => {}
            StaticDiagonal::Flux => plan.apply_flux_diagonal(),
            StaticDiagonal::Equilibrium => plan.apply_equilibrium_diagonal()?,
        }
        Ok(plan)
    }

    /// Replaces the self-panel static `K*` entries using weighted column sums
    /// of the static adjoint double-layer matrix.
    fn apply_flux_diagonal(&mut self) {
        let n = self.mesh.n_panels();
        let w = self.mesh.areas();
        const BLOCK: usize = 64;
        let n_blocks = n.div_ceil(BLOCK);
        let zero_params = KernelParams::new(0.0, 1.0, 1.0);
        // Fixed blocking keeps the reduction order independent of threading.
        let partials: Vec<Vec<f64>> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![0.0; n];
                let mut s_row = vec![C64::new(0.0, 0.0); n];
                let mut k_row = vec![C64::new(0.0, 0.0); n];
                for j in b * BLOCK..((b + 1) * BLOCK).min(n) {
                    self.fill_row(j, &zero_params, 0, &mut s_row, &mut k_row);
                    for (k, v) in k_row.iter().enumerate() {
                        if k != j {
                            acc[k] += w[j] * v.re;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut col = vec![0.0; n];
        for p in &partials {
            for (c, v) in col.iter_mut().zip(p) {
                *c += v;
            }
        }
        for (k, terms) in self.statics.iter_mut().enumerate() {
            for t in terms.iter_mut() {
                if t.k == k {
                    t.k0 = -0.5 - col[k] / w[k];
                }
            }
        }
    }

    /// Replaces the self-panel static `K*` entries so that the discrete
    /// equilibrium density is a null vector of `I/2 + K*_0`.
    fn apply_equilibrium_diagonal(&mut self) -> Result<(), OperatorError> {
        use faer::linalg::solvers::Solve;
        let n = self.mesh.n_panels();
        let zero_params = KernelParams::new(0.0, 1.0, 1.0);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut s_row = vec![C64::new(0.0, 0.0); n];
                let mut k_row = vec![C64::new(0.0, 0.0); n];
                self.fill_row(j, &zero_params, 0, &mut s_row, &mut k_row);
                (s_row.iter().map(|z| z.re).collect(), k_row.iter().map(|z| z.re).collect())
            })
            .collect();
        let s = faer::Mat::<f64>::from_fn(n, n, |i, j| rows[i].0[j]);
        let lu = s.partial_piv_lu();
        let sigma = lu.solve(faer::Mat::<f64>::from_fn(n, 1, |_, _| 1.0));
        let sigma: Vec<f64> = (0..n).map(|i| sigma[(i, 0)]).collect();
        let mean = sigma.iter().sum::<f64>() / n as f64;
        if sigma.iter().any(|v| !v.is_finite()) || !(mean > 0.0) {
            return Err(OperatorError::NoEquilibriumDensity);
        }
        // Shielded panels (deep inside cavities) carry almost no equilibrium
        // charge, and dividing by it is unstable; they keep the flux value.
        let resolved: Vec<bool> = sigma.iter().map(|v| *v >= EQUILIBRIUM_MIN_FRACTION * mean).collect();
        if resolved.iter().any(|r| !r) {
            self.apply_flux_diagonal();
        }
        for (j, terms) in self.statics.iter_mut().enumerate() {
            if !resolved[j] {
                continue;
            }
            let off: f64 = rows[j]
                .1
                .iter()
                .zip(&sigma)
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, (a, b))| a * b)
                .sum();
            for t in terms.iter_mut() {
                if t.k == j {
                    t.k0 = -0.5 - off / sigma[j];
                }
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> &'m SurfaceMesh {
        self.mesh
    }

    pub fn options(&self) -> &AssemblyOptions {
        &self.options
    }

    #[inline]
    fn classify(&self, j: usize, k: usize) -> PairClass {
        if j == k {
            return PairClass::Near;
        }
        let d = (self.mesh.centroids()[j] - self.mesh.centroids()[k]).norm();
        let dk = self.diam[k];
        if d < self.options.near_factor * dk {
            PairClass::Near
        } else if d < self.options.mid_factor * dk {
            PairClass::Mid
        } else {
            PairClass::Far
        }
    }

    /// Fills `s_row[k]` and `k_row[k]` with the `m`-th frequency derivative of
    /// the single-layer and adjoint double-layer entries of row `j`.
    fn fill_row(&self, j: usize, params: &KernelParams, m: u32, s_row: &mut [C64], k_row: &mut [C64]) {
        let x = self.mesh.centroids()[j];
        let nj = self.mesh.normals()[j];
        let kappa = params.kappa;
        let inv_c = 1.0 / params.c;
        let zero = C64::new(0.0, 0.0);
        for k in 0..self.mesh.n_panels() {
            let (nodes, q) = match self.classify(j, k) {
                PairClass::Near => {
                    let nodes = &self.near_nodes[k * self.n_near..(k + 1) * self.n_near];
                    let (mut s, mut kk) = (zero, zero);
                    if m == 0 {
                        if kappa != 0.0 {
                            for &(y, w) in nodes {
                                let (a, b) = dynamic_pair(x - y, nj, kappa);
                                s += a * w;
                                kk += b * w;
                            }
                        }
                    } else {
                        for &(y, w) in nodes {
                            let (a, b) = kernel_pair(x - y, nj, kappa, inv_c, m);
                            s += a * w;
                            kk += b * w;
                        }
                    }
                    s_row[k] = s;
                    k_row[k] = kk;
                    continue;
                }
                PairClass::Mid => (&self.mid_nodes, self.n_mid),
                PairClass::Far => (&self.far_nodes, self.n_far),
            };
            let (mut s, mut kk) = (zero, zero);
            for &(y, w) in &nodes[k * q..(k + 1) * q] {
                let (a, b) = kernel_pair(x - y, nj, kappa, inv_c, m);
                s += a * w;
                kk += b * w;
            }
            s_row[k] = s;
            k_row[k] = kk;
        }
        if m == 0 {
            for t in &self.statics[j] {
                s_row[t.k] += t.s0;
                k_row[t.k] += t.k0;
            }
        }
    }

    fn build<F>(&self, f: F) -> DenseOperator
    where
        F: Fn(usize, &mut [C64], &mut [C64], &mut [C64]) + Sync,
    {
        let n = self.mesh.n_panels();
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        entries.par_chunks_mut(n).enumerate().for_each_init(
            || (vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]),
            |(s, k), (j, row)| f(j, row, s, k),
        );
        DenseOperator {
            n,
            entries,
            weights: self.mesh.areas().to_vec(),
        }
    }

    /// `d^m/d omega^m S_omega` (`m = 0` gives `S_omega`).
    pub fn single_layer(&self, params: &KernelParams, m: u32) -> DenseOperator {
        self.build(|j, row, s, k| {
            self.fill_row(j, params, m, s, k);
            row.copy_from_slice(s);
        })
    }

    /// `d^m/d omega^m K*_omega` (`m = 0` gives `K*_omega`).
    pub fn adjoint_double_layer(&self, params: &KernelParams, m: u32) -> DenseOperator {
        self.build(|j, row, s, k| {
            self.fill_row(j, params, m, s, k);
            row.copy_from_slice(k);
        })
    }

    /// `A_omega = I/2 + K*_omega - i eta S_omega`.
    pub fn combined(&self, params: &KernelParams) -> Result<DenseOperator, OperatorError> {
        if params.omega < 0.0 {
            return Err(OperatorError::NegativeFrequency(params.omega));
        }
        let ieta = I * params.eta;
        Ok(self.build(|j, row, s, k| {
            self.fill_row(j, params, 0, s, k);
            for ((r, a), b) in row.iter_mut().zip(k.iter()).zip(s.iter()) {
                *r = a - ieta * b;
            }
            row[j] += 0.5;
        }))
    }

    /// `m`-th frequency derivative of `A_omega`, including the derivative of
    /// the coupling `eta(omega)` above the switch.
    pub fn combined_derivative(&self, params: &KernelParams, m: u32) -> Result<DenseOperator, OperatorError> {
        if m == 0 {
            return Err(OperatorError::ZeroOrder);
        }
        if params.omega < 0.0 {
            return Err(OperatorError::NegativeFrequency(params.omega));
        }
        if (params.omega - params.omega0).abs() < SWITCH_GUARD {
            return Err(OperatorError::NearSwitch {
                omega: params.omega,
                omega0: params.omega0,
            });
        }
        let above = params.omega > params.omega0;
        let n = self.mesh.n_panels();
        Ok(self.build(|j, row, s, k| {
            self.fill_row(j, params, m, s, k);
            if above {
                let iw = I * params.omega;
                for ((r, a), b) in row.iter_mut().zip(k.iter()).zip(s.iter()) {
                    *r = a - iw * b;
                }
                let mut s_prev = vec![C64::new(0.0, 0.0); n];
                self.fill_row(j, params, m - 1, &mut s_prev, k);
                let im = I * m as f64;
                for (r, b) in row.iter_mut().zip(&s_prev) {
                    *r -= im * b;
                }
            } else {
                for ((r, a), b) in row.iter_mut().zip(k.iter()).zip(s.iter()) {
                    *r = a - I * b;
                }
            }
        }))
    }
}

/// Single-layer operator `S_omega` on `mesh`.
#[allow(non_snake_case)]
pub fn assemble_S(mesh: &SurfaceMesh, params: &KernelParams) -> Result<DenseOperator, OperatorError> {
    Ok(AssemblyPlan::new(mesh)?.single_layer(params, 0))
}

/// Adjoint double-layer operator `K*_omega` on `mesh`.
#[allow(non_snake_case)]
pub fn assemble_Kstar(mesh: &SurfaceMesh, params: &KernelParams) -> Result<DenseOperator, OperatorError> {
    Ok(AssemblyPlan::new(mesh)?.adjoint_double_layer(params, 0))
}

/// Combined-field operator `A_omega`.
#[allow(non_snake_case)]
pub fn assemble_A(mesh: &SurfaceMesh, params: &KernelParams) -> Result<DenseOperator, OperatorError> {
    AssemblyPlan::new(mesh)?.combined(params)
}

/// `m`-th frequency derivative of `A_omega`.
#[allow(non_snake_case)]
pub fn assemble_A_derivative(
    mesh: &SurfaceMesh,
    params: &KernelParams,
    m: u32,
) -> Result<DenseOperator, OperatorError> {
    AssemblyPlan::new(mesh)?.combined_derivative(params, m)
}

/// Parameters recorded next to a cached matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCacheMeta {
    pub mesh_hash: String,
    pub kind: String,
    pub omega: f64,
    pub c: f64,
    pub omega0: f64,
    pub eta: f64,
    pub m: u32,
    pub quadrature_degree: usize,
    pub n: usize,
    pub weights: Vec<f64>,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Writes little-endian complex-double row-major entries to `path` and the
/// parameters to `path.json`.
pub fn save_matrix(path: impl AsRef<Path>, op: &DenseOperator, meta: &MatrixCacheMeta) -> Result<(), OperatorError> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 * op.entries.len());
    for z in &op.entries {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    let json = serde_json::to_vec_pretty(meta).map_err(|e| OperatorError::Format(e.to_string()))?;
    std::fs::write(sidecar(path), json)?;
    Ok(())
}

/// Reads a matrix written by [`save_matrix`].
pub fn load_matrix(path: impl AsRef<Path>) -> Result<(DenseOperator, MatrixCacheMeta), OperatorError> {
    let path = path.as_ref();
    let meta: MatrixCacheMeta = serde_json::from_slice(&std::fs::read(sidecar(path))?)
        .map_err(|e| OperatorError::Format(e.to_string()))?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != 16 * meta.n * meta.n || meta.weights.len() != meta.n {
        return Err(OperatorError::Format("size does not match sidecar".into()));
    }
    let entries = bytes
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let op = DenseOperator::new(entries, meta.weights.clone())?;
    Ok((op, meta))
}
