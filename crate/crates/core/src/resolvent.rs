//! Dense solves of the combined-field equation, weighted resolvent norms,
//! power-law fits of resolvent growth, and the frequency-derivative
//! (Leibniz) identity for solved densities.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SurfaceMesh;
use crate::operators::{weighted_norm, AssemblyPlan, DenseOperator, KernelParams, OperatorError};

type C64 = Complex64;

/// Largest dimension for which norms come from a full SVD.
pub const SVD_MAX_N: usize = 4096;

/// Relative residual every accepted solve must meet.
pub const SOLVE_RTOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix is singular to working precision (condition estimate {condition_estimate:.3e}, residual {residual:.3e})")]
    Singular { condition_estimate: f64, residual: f64 },
    #[error("dimension mismatch: operator is {n}x{n}, right-hand side has length {got}")]
    DimensionMismatch { n: usize, got: usize },
    #[error("smallest singular value {sigma_min:.3e} is below the machine-epsilon guard (largest {sigma_max:.3e})")]
    NearlySingular { sigma_min: f64, sigma_max: f64 },
    #[error("singular value decomposition failed to converge")]
    Svd,
}

#[derive(Debug, Error)]
pub enum ResolventError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("q fit needs at least {needed} frequencies above omega0 = {omega0}, found {found}")]
    InsufficientCoverage { needed: usize, found: usize, omega0: f64 },
    #[error("finite-difference stencil [{lo}, {hi}] touches the coupling switch omega0 = {omega0}")]
    StencilCrossesSwitch { lo: f64, hi: f64, omega0: f64 },
    #[error("derivative order p = {0} is not supported (use 1 or 2)")]
    UnsupportedOrder(u32),
    #[error("invalid input: {0}")]
    Invalid(String),
}

fn col(x: &[C64]) -> Mat<C64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

fn uncol(m: &Mat<C64>) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// LU factorization of an operator, reusable for solves and norm estimates.
pub struct Factorized<'a> {
    op: &'a DenseOperator,
    lu: PartialPivLu<C64>,
}

impl<'a> Factorized<'a> {
    pub fn new(op: &'a DenseOperator) -> Self {
        let lu = op.to_mat().partial_piv_lu();
        Self { op, lu }
    }

    pub fn operator(&self) -> &DenseOperator {
        self.op
    }

    fn raw_solve(&self, b: &[C64]) -> Vec<C64> {
        let mut m = col(b);
        self.lu.solve_in_place(&mut m);
        uncol(&m)
    }

    fn raw_solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let mut m = col(b);
        self.lu.solve_adjoint_in_place(&mut m);
        uncol(&m)
    }

    /// Solve with one step of iterative refinement and a residual check.
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>, SolveError> {
        let n = self.op.n();
        if rhs.len() != n {
            return Err(SolveError::DimensionMismatch { n, got: rhs.len() });
        }
        let w = self.op.weights();
        let bnorm = weighted_norm(w, rhs);
        if bnorm == 0.0 {
            return Ok(vec![C64::new(0.0, 0.0); n]);
        }
        let mut x = self.raw_solve(rhs);
        let r: Vec<C64> = self.op.apply(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        let dx = self.raw_solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        let res = self.relative_residual(&x, rhs);
        if !(res <= SOLVE_RTOL) {
            return Err(SolveError::Singular {
                condition_estimate: self.condition_estimate(),
                residual: res,
            });
        }
        Ok(x)
    }

    /// `||A x - b|| / ||b||` in the weighted norm.
    pub fn relative_residual(&self, x: &[C64], b: &[C64]) -> f64 {
        relative_residual(self.op, x, b)
    }

    /// Weighted `||A^{-1}||` by inverse iteration on `M^H M`,
    /// `M = W^{1/2} A W^{-1/2}`.
    pub fn inverse_norm_estimate(&self, max_iter: usize, rtol: f64) -> f64 {
        let n = self.op.n();
        let s: Vec<f64> = self.op.weights().iter().map(|w| w.sqrt()).collect();
        // Deterministic, generic start vector.
        let mut v: Vec<C64> = (0..n)
            .map(|i| C64::new(1.0 + 0.37 * ((i as f64) * 0.61).sin(), 0.23 * ((i as f64) * 1.3).cos()))
            .collect();
        normalize(&mut v);
        let mut est = 0.0;
        for _ in 0..max_iter {
            // y = M^{-1} v = W^{1/2} A^{-1} W^{-1/2} v
            let t: Vec<C64> = v.iter().zip(&s).map(|(a, si)| a / si).collect();
            let y: Vec<C64> = self.raw_solve(&t).iter().zip(&s).map(|(a, si)| a * si).collect();
            // z = M^{-H} y = W^{-1/2} A^{-H} W^{1/2} y
            let t: Vec<C64> = y.iter().zip(&s).map(|(a, si)| a * si).collect();
            let mut z: Vec<C64> = self.raw_solve_adjoint(&t).iter().zip(&s).map(|(a, si)| a / si).collect();
            let lambda = l2(&z); // ~ sigma_min^{-2}
            if !lambda.is_finite() {
                return f64::INFINITY;
            }
            let new = lambda.sqrt();
            normalize(&mut z);
            v = z;
            if (new - est).abs() <= rtol * new {
                est = new;
                break;
            }
            est = new;
        }
        est
    }

    /// Rough 2-norm condition estimate `||A|| * ||A^{-1}||` (weighted).
    pub fn condition_estimate(&self) -> f64 {
        operator_norm_power(self.op, 30, 1e-6) * self.inverse_norm_estimate(30, 1e-6)
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [C64]) {
    let n = l2(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

/// `||A x - b||_W / ||b||_W` (0 when both vanish).
pub fn relative_residual(op: &DenseOperator, x: &[C64], b: &[C64]) -> f64 {
    let w = op.weights();
    let r: Vec<C64> = op.apply(x).iter().zip(b).map(|(ax, bi)| ax - bi).collect();
    let rn = weighted_norm(w, &r);
    let bn = weighted_norm(w, b);
    if bn == 0.0 {
        if rn == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        rn / bn
    }
}

/// Weighted spectral norm by power iteration on `M^H M`.
fn operator_norm_power(op: &DenseOperator, max_iter: usize, rtol: f64) -> f64 {
    let n = op.n();
    let s: Vec<f64> = op.weights().iter().map(|w| w.sqrt()).collect();
    let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0, 0.1 * (i as f64).sin())).collect();
    normalize(&mut v);
    let mut est = 0.0;
    let entries = op.entries();
    for _ in 0..max_iter {
        let t: Vec<C64> = v.iter().zip(&s).map(|(a, si)| a / si).collect();
        let y: Vec<C64> = op.apply(&t).iter().zip(&s).map(|(a, si)| a * si).collect();
        // z = M^H y
        let t: Vec<C64> = y.iter().zip(&s).map(|(a, si)| a * si).collect();
        let mut z = vec![C64::new(0.0, 0.0); n];
        for (i, ti) in t.iter().enumerate() {
            let row = &entries[i * n..(i + 1) * n];
            for (zj, a) in z.iter_mut().zip(row) {
                *zj += a.conj() * ti;
            }
        }
        for (zj, sj) in z.iter_mut().zip(&s) {
            *zj /= sj;
        }
        let new = l2(&z).sqrt();
        normalize(&mut z);
        v = z;
        if (new - est).abs() <= rtol * new {
            return new;
        }
        est = new;
    }
    est
}

/// Solves `A x = rhs` by dense LU with one refinement step; the weighted
/// relative residual is at most `1e-10` on success.
pub fn solve_density(a: &DenseOperator, rhs: &[C64]) -> Result<Vec<C64>, SolveError> {
    Factorized::new(a).solve(rhs)
}

/// Largest and smallest weighted singular values.
pub fn singular_extremes(a: &DenseOperator) -> Result<(f64, f64), SolveError> {
    if a.n() <= SVD_MAX_N {
        let sv = a.weighted_mat().singular_values().map_err(|_| SolveError::Svd)?;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok((max, min))
    } else {
        let f = Factorized::new(a);
        Ok((operator_norm_power(a, 200, 1e-8), 1.0 / f.inverse_norm_estimate(200, 1e-8)))
    }
}

fn check_guard(max: f64, min: f64) -> Result<f64, SolveError> {
    if !(min > f64::EPSILON * max) {
        return Err(SolveError::NearlySingular {
            sigma_min: min,
            sigma_max: max,
        });
    }
    Ok(1.0 / min)
}

/// Weighted `||A^{-1}|| = 1 / sigma_min(W^{1/2} A W^{-1/2})`.
pub fn resolvent_norm(a: &DenseOperator) -> Result<f64, SolveError> {
    let (max, min) = singular_extremes(a)?;
    check_guard(max, min)
}

/// Weighted operator norm `||A||`.
pub fn operator_norm(a: &DenseOperator) -> Result<f64, SolveError> {
    Ok(singular_extremes(a)?.0)
}

/// Solution and norms at one frequency, sharing a single factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSolve {
    pub density: Vec<C64>,
    pub resolvent_norm: f64,
    pub operator_norm: f64,
    pub rhs_norm: f64,
    pub residual: f64,
}

/// Solve only; the norm fields of the result are NaN.
pub fn solve_without_norms(a: &DenseOperator, rhs: &[C64]) -> Result<PointSolve, SolveError> {
    let f = Factorized::new(a);
    let density = f.solve(rhs)?;
    Ok(PointSolve {
        rhs_norm: weighted_norm(a.weights(), rhs),
        residual: f.relative_residual(&density, rhs),
        density,
        resolvent_norm: f64::NAN,
        operator_norm: f64::NAN,
    })
}

/// Solve plus norms; small systems use the SVD, large ones reuse the LU.
pub fn solve_with_norms(a: &DenseOperator, rhs: &[C64]) -> Result<PointSolve, SolveError> {
    let f = Factorized::new(a);
    let density = f.solve(rhs)?;
    let residual = f.relative_residual(&density, rhs);
    let (max, min) = if a.n() <= SVD_MAX_N {
        singular_extremes(a)?
    } else {
        (operator_norm_power(a, 200, 1e-8), 1.0 / f.inverse_norm_estimate(200, 1e-8))
    };
    let resolvent_norm = check_guard(max, min)?;
    Ok(PointSolve {
        rhs_norm: weighted_norm(a.weights(), rhs),
        density,
        resolvent_norm,
        operator_norm: max,
        residual,
    })
}

/// Densities and norms over a nonnegative frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub omegas: Vec<f64>,
    /// Panel areas defining the discrete `L^2(Gamma)` norm.
    pub weights: Vec<f64>,
    pub densities: Vec<Vec<C64>>,
    pub resolvent_norms: Vec<f64>,
    pub operator_norms: Vec<f64>,
    pub rhs_norms: Vec<f64>,
    pub solve_residuals: Vec<f64>,
}

impl SweepResult {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Checks the structural invariants.
    pub fn validate(&self, omega0: f64) -> Result<(), ResolventError> {
        let n = self.omegas.len();
        let lens = [
            self.densities.len(),
            self.resolvent_norms.len(),
            self.operator_norms.len(),
            self.rhs_norms.len(),
            self.solve_residuals.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(ResolventError::Invalid("sweep field lengths differ".into()));
        }
        if self.omegas.windows(2).any(|w| !(w[1] > w[0])) || self.omegas.iter().any(|&w| w < 0.0) {
            return Err(ResolventError::Invalid("frequencies must be nonnegative and increasing".into()));
        }
        if self.omegas.contains(&omega0) {
            return Err(ResolventError::Invalid("grid contains omega0".into()));
        }
        // NaN pairs mark points solved without norm estimation.
        let dual = self
            .resolvent_norms
            .iter()
            .zip(&self.operator_norms)
            .all(|(r, a)| (r.is_nan() && a.is_nan()) || (*r > 0.0 && r * a >= 1.0 - 1e-10));
        if !dual {
            return Err(ResolventError::Invalid("resolvent norm below 1/||A||".into()));
        }
        Ok(())
    }
}

/// Least-squares power law `||A^{-1}|| ~ C2 omega^q` above `omega0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGrowthFit {
    pub q_hat: f64,
    /// Maximum resolvent norm on `[0, omega0]`; absent when no grid point lies there.
    pub c1_hat: Option<f64>,
    pub c2_hat: f64,
    pub omega0: f64,
    /// RMS of the log-log residuals.
    pub residual: f64,
    pub n_points: usize,
}

/// Minimum number of frequencies above `omega0` required by [`q_fit`].
pub const Q_FIT_MIN_POINTS: usize = 8;

/// Fits the growth exponent from explicit `(omega, norm)` pairs.
pub fn q_fit_norms(omegas: &[f64], norms: &[f64], omega0: f64) -> Result<QGrowthFit, ResolventError> {
    if omegas.len() != norms.len() {
        return Err(ResolventError::Invalid("omegas and norms differ in length".into()));
    }
    let c1_hat = omegas
        .iter()
        .zip(norms)
        .filter(|(w, _)| **w <= omega0)
        .map(|(_, n)| *n)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let pts: Vec<(f64, f64)> = omegas
        .iter()
        .zip(norms)
        .filter(|(w, _)| **w > omega0)
        .map(|(w, n)| (w.ln(), n.ln()))
        .collect();
    if pts.len() < Q_FIT_MIN_POINTS {
        return Err(ResolventError::InsufficientCoverage {
            needed: Q_FIT_MIN_POINTS,
            found: pts.len(),
            omega0,
        });
    }
    let (slope, intercept, rms) = linear_fit(&pts);
    Ok(QGrowthFit {
        q_hat: slope,
        c1_hat,
        c2_hat: intercept.exp(),
        omega0,
        residual: rms,
        n_points: pts.len(),
    })
}

/// Fits the growth exponent of a sweep's resolvent norms.
pub fn q_fit(sweep: &SweepResult, omega0: f64) -> Result<QGrowthFit, ResolventError> {
    q_fit_norms(&sweep.omegas, &sweep.resolvent_norms, omega0)
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, rms residual)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// A frequency-dependent operator with known frequency derivatives.
pub trait OperatorFamily: Sync {
    fn weights(&self) -> &[f64];
    fn operator(&self, omega: f64) -> Result<DenseOperator, ResolventError>;
    /// `m`-th frequency derivative, `m >= 1`.
    fn derivative(&self, omega: f64, m: u32) -> Result<DenseOperator, ResolventError>;
    /// Frequency at which the family is not differentiable, if any.
    fn switch(&self) -> Option<f64> {
        None
    }
}

/// `A_omega` on a mesh, sharing one assembly plan.
pub struct CombinedFieldFamily<'p, 'm> {
    pub plan: &'p AssemblyPlan<'m>,
    pub c: f64,
    pub omega0: f64,
}

impl OperatorFamily for CombinedFieldFamily<'_, '_> {
    fn weights(&self) -> &[f64] {
        self.plan.mesh().areas()
    }

    fn operator(&self, omega: f64) -> Result<DenseOperator, ResolventError> {
        Ok(self.plan.combined(&KernelParams::new(omega, self.c, self.omega0))?)
    }

    fn derivative(&self, omega: f64, m: u32) -> Result<DenseOperator, ResolventError> {
        Ok(self
            .plan
            .combined_derivative(&KernelParams::new(omega, self.c, self.omega0), m)?)
    }

    fn switch(&self) -> Option<f64> {
        Some(self.omega0)
    }
}

/// An operator that does not depend on frequency.
pub struct FrozenFamily(pub DenseOperator);

impl OperatorFamily for FrozenFamily {
    fn weights(&self) -> &[f64] {
        self.0.weights()
    }

    fn operator(&self, _omega: f64) -> Result<DenseOperator, ResolventError> {
        Ok(self.0.clone())
    }

    fn derivative(&self, _omega: f64, _m: u32) -> Result<DenseOperator, ResolventError> {
        Ok(self.0.scale(C64::new(0.0, 0.0)))
    }
}

/// Outcome of a Leibniz identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeibnizReport {
    pub p: u32,
    pub omega: f64,
    pub step: f64,
    /// Weighted norm of the identity defect divided by the largest term norm,
    /// the undifferentiated right-hand side included.
    pub relative_residual: f64,
    /// Largest weighted norm among the terms.
    pub scale: f64,
}

fn refs(v: &[Vec<C64>; 5]) -> [&[C64]; 5] {
    std::array::from_fn(|i| v[i].as_slice())
}

fn fd_first(v: [&[C64]; 5], h: f64) -> Vec<C64> {
    (0..v[0].len())
        .map(|i| (-v[4][i] + v[3][i] * 8.0 - v[1][i] * 8.0 + v[0][i]) / (12.0 * h))
        .collect()
}

fn fd_second(v: [&[C64]; 5], h: f64) -> Vec<C64> {
    (0..v[0].len())
        .map(|i| (-v[4][i] + v[3][i] * 16.0 - v[2][i] * 30.0 + v[1][i] * 16.0 - v[0][i]) / (12.0 * h * h))
        .collect()
}

/// Checks `A d^p mu = d^p R - sum_{k=1}^p C(p,k) (d^k A)(d^{p-k} mu)` at
/// `omega`, with `mu = A^{-1} R` differentiated by fourth-order five-point
/// central differences of step `step`.
pub fn verify_leibniz_with<F, R>(
    family: &F,
    rhs: R,
    p: u32,
    omega: f64,
    step: f64,
) -> Result<LeibnizReport, ResolventError>
where
    F: OperatorFamily,
    R: Fn(f64) -> Vec<C64>,
{
    if !(1..=2).contains(&p) {
        return Err(ResolventError::UnsupportedOrder(p));
    }
    if !(step > 0.0) {
        return Err(ResolventError::Invalid("step must be positive".into()));
    }
    let (lo, hi) = (omega - 2.0 * step, omega + 2.0 * step);
    if let Some(w0) = family.switch() {
        if lo <= w0 + crate::operators::SWITCH_GUARD && hi >= w0 - crate::operators::SWITCH_GUARD {
            return Err(ResolventError::StencilCrossesSwitch { lo, hi, omega0: w0 });
        }
    }
    let mut mus = Vec::with_capacity(5);
    let mut rs = Vec::with_capacity(5);
    let mut a0 = None;
    for s in -2i32..=2 {
        let w = omega + s as f64 * step;
        let a = family.operator(w)?;
        let r = rhs(w);
        mus.push(solve_density(&a, &r)?);
        rs.push(r);
        if s == 0 {
            a0 = Some(a);
        }
    }
    let a0 = a0.expect("center of stencil");
    let m = |v: &Vec<Vec<C64>>| -> [Vec<C64>; 5] { std::array::from_fn(|i| v[i].clone()) };
    let (mu5, r5) = (m(&mus), m(&rs));
    let dmu1 = fd_first(refs(&mu5), step);
    let w = family.weights();

    let (dpmu, dpr) = if p == 1 {
        (dmu1.clone(), fd_first(refs(&r5), step))
    } else {
        (fd_second(refs(&mu5), step), fd_second(refs(&r5), step))
    };
    let lhs = a0.apply(&dpmu);
    let mut terms = vec![rs[2].clone(), lhs.clone(), dpr.clone()];
    let mut defect: Vec<C64> = lhs.iter().zip(&dpr).map(|(a, b)| a - b).collect();
    for k in 1..=p {
        let binom = if p == 2 && k == 1 { 2.0 } else { 1.0 };
        let dka = family.derivative(omega, k)?;
        let lower = if p - k == 0 { &mus[2] } else { &dmu1 };
        let t: Vec<C64> = dka.apply(lower).iter().map(|z| z * binom).collect();
        for (d, ti) in defect.iter_mut().zip(&t) {
            *d += ti;
        }
        terms.push(t);
    }
    let scale = terms.iter().map(|t| weighted_norm(w, t)).fold(0.0, f64::max);
    let dn = weighted_norm(w, &defect);
    let relative_residual = if scale == 0.0 { dn } else { dn / scale };
    Ok(LeibnizReport {
        p,
        omega,
        step,
        relative_residual,
        scale,
    })
}

/// [`verify_leibniz_with`] for the combined-field operator on `mesh`.
pub fn verify_leibniz_identity<R>(
    mesh: &SurfaceMesh,
    params: &KernelParams,
    rhs: R,
    p: u32,
    omega_probe: f64,
    step: f64,
) -> Result<LeibnizReport, ResolventError>
where
    R: Fn(f64) -> Vec<C64>,
{
    let plan = AssemblyPlan::new(mesh)?;
    let family = CombinedFieldFamily {
        plan: &plan,
        c: params.c,
        omega0: params.omega0,
    };
    verify_leibniz_with(&family, rhs, p, omega_probe, step)
}

/// Leibniz residuals for a sequence of finite-difference steps, sharing one
/// operator family.
pub fn leibniz_step_sequence<F, R>(
    family: &F,
    rhs: R,
    p: u32,
    omega: f64,
    steps: &[f64],
) -> Result<Vec<LeibnizReport>, ResolventError>
where
    F: OperatorFamily,
    R: Fn(f64) -> Vec<C64>,
{
    steps
        .iter()
        .map(|&h| verify_leibniz_with(family, &rhs, p, omega, h))
        .collect()
}

/// Observed convergence orders `log2(r_i / r_{i+1})` for successive halvings.
pub fn observed_orders(reports: &[LeibnizReport]) -> Vec<f64> {
    reports
        .windows(2)
        .map(|w| (w[0].relative_residual / w[1].relative_residual).log2())
        .collect()
}
