//! Triangle quadrature: symmetric Gauss rules, a Duffy-type rule for the
//! weakly singular `1/(4 pi R)` self term, and adaptive subdivision for
//! near-singular panel integrals.

use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{Triangle, Vec3};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported rule degree {0}; supported degrees are 1..=6")]
    UnsupportedDegree(usize),
    #[error("degenerate panel (area {0})")]
    DegeneratePanel(f64),
    #[error("target is not on the panel (distance {0})")]
    TargetOffPanel(f64),
    #[error("target lies on the panel; use the singular rule")]
    TargetOnPanel,
    #[error("subdivision budget exceeded; achieved relative tolerance {achieved:.3e}")]
    BudgetExceeded { achieved: f64 },
}

/// Symmetric rule on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Barycentric node coordinates.
    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    /// Weights summing to 1/2, the reference area.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i f(x_i)` over a physical triangle, scaled by `2 * area`.
    pub fn integrate<F>(&self, tri: &Triangle, mut f: F) -> Complex64
    where
        F: FnMut(Vec3) -> Complex64,
    {
        let jac = 2.0 * tri.area();
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, &w) in self.nodes.iter().zip(&self.weights) {
            acc += f(tri.point(*l)) * w;
        }
        acc * jac
    }

    pub fn integrate_real<F>(&self, tri: &Triangle, mut f: F) -> f64
    where
        F: FnMut(Vec3) -> f64,
    {
        let jac = 2.0 * tri.area();
        let mut acc = 0.0;
        for (l, &w) in self.nodes.iter().zip(&self.weights) {
            acc += f(tri.point(*l)) * w;
        }
        acc * jac
    }

    fn from_orbits(degree: usize, orbits: &[(Orbit, f64)]) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (orbit, w) in orbits {
            let pts: Vec<[f64; 3]> = match *orbit {
                Orbit::Centroid => vec![[1.0 / 3.0; 3]],
                Orbit::Two(a) => {
                    let b = 1.0 - 2.0 * a;
                    vec![[b, a, a], [a, b, a], [a, a, b]]
                }
                Orbit::Three(a, b) => {
                    let c = 1.0 - a - b;
                    vec![[a, b, c], [b, c, a], [c, a, b], [b, a, c], [a, c, b], [c, b, a]]
                }
            };
            for p in pts {
                nodes.push(p);
                weights.push(0.5 * w);
            }
        }
        Self {
            degree,
            nodes,
            weights,
        }
    }
}

#[derive(Clone, Copy)]
enum Orbit {
    Centroid,
    /// Points `(1-2a, a, a)` and permutations.
    Two(f64),
    /// Points `(a, b, 1-a-b)` and permutations.
    Three(f64, f64),
}

fn build_rule(degree: usize) -> QuadratureRule {
    let s15 = 15f64.sqrt();
    match degree {
        1 => QuadratureRule::from_orbits(1, &[(Orbit::Centroid, 1.0)]),
        2 => QuadratureRule::from_orbits(2, &[(Orbit::Two(1.0 / 6.0), 1.0 / 3.0)]),
        // Degree 3 uses the positive-weight six-point degree-4 rule.
        3 | 4 => QuadratureRule::from_orbits(
            degree,
            &[
                (Orbit::Two(0.445_948_490_915_964_9), 0.223_381_589_678_011_47),
                (Orbit::Two(0.091_576_213_509_770_74), 0.109_951_743_655_321_87),
            ],
        ),
        5 => QuadratureRule::from_orbits(
            5,
            &[
                (Orbit::Centroid, 0.225),
                (Orbit::Two((6.0 - s15) / 21.0), (155.0 - s15) / 1200.0),
                (Orbit::Two((6.0 + s15) / 21.0), (155.0 + s15) / 1200.0),
            ],
        ),
        6 => QuadratureRule::from_orbits(
            6,
            &[
                (Orbit::Two(0.249_286_745_170_910_43), 0.116_786_275_726_379_37),
                (Orbit::Two(0.063_089_014_491_502_23), 0.050_844_906_370_206_82),
                (
                    Orbit::Three(0.053_145_049_844_816_945, 0.310_352_451_033_784_4),
                    0.082_851_075_618_373_57,
                ),
            ],
        ),
        _ => unreachable!(),
    }
}

/// Symmetric Gauss rule exact for polynomials of total degree `degree`.
pub fn regular_rule(degree: usize) -> Result<QuadratureRule, QuadratureError> {
    rule(degree).cloned()
}

/// Shared, lazily built instance of [`regular_rule`].
pub fn rule(degree: usize) -> Result<&'static QuadratureRule, QuadratureError> {
    static RULES: [OnceLock<QuadratureRule>; 6] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    if !(1..=6).contains(&degree) {
        return Err(QuadratureError::UnsupportedDegree(degree));
    }
    Ok(RULES[degree - 1].get_or_init(|| build_rule(degree)))
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(16))
}

/// Adaptive Gauss-Legendre integration of a smooth function on `[a, b]`.
fn adaptive_gl<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (x, w) = gl16();
    let panel = |lo: f64, hi: f64| -> f64 {
        let h = hi - lo;
        x.iter().zip(w).map(|(&xi, &wi)| wi * f(lo + h * xi)).sum::<f64>() * h
    };
    let whole = panel(a, b);
    let mid = 0.5 * (a + b);
    let halves = panel(a, mid) + panel(mid, b);
    if (whole - halves).abs() <= tol || depth == 0 {
        return halves;
    }
    adaptive_gl(f, a, mid, 0.5 * tol, depth - 1) + adaptive_gl(f, mid, b, 0.5 * tol, depth - 1)
}

/// `int_panel 1/(4 pi |x0 - r'|) dr'` for a target `x0` on the closed panel.
///
/// The panel is split at the target into three sub-triangles with the
/// singularity at a shared vertex. In polar-like Duffy coordinates each
/// sub-triangle contributes `(2 A_sub / 4 pi) int_0^1 dv / |a - x0 + v (b - a)|`,
/// a smooth one-dimensional integral evaluated adaptively.
pub fn singular_panel_integral(panel: &Triangle, target: Vec3) -> Result<f64, QuadratureError> {
    let area = panel.area();
    let diam = panel.diameter();
    if !(area > 1e-14 * diam * diam) {
        return Err(QuadratureError::DegeneratePanel(area));
    }
    let off = panel.distance_to(target);
    if off > 1e-9 * diam {
        return Err(QuadratureError::TargetOffPanel(off));
    }
    let mut total = 0.0;
    for (a, b) in [(panel.a, panel.b), (panel.b, panel.c), (panel.c, panel.a)] {
        let sub_area = 0.5 * (a - target).cross(b - target).norm();
        if sub_area <= 1e-14 * area {
            continue;
        }
        let p = a - target;
        let q = b - a;
        let f = |v: f64| 1.0 / (p + q * v).norm();
        let scale = 1.0 / p.norm().max((b - target).norm());
        total += 2.0 * sub_area * adaptive_gl(&f, 0.0, 1.0, 1e-14 * scale, 30);
    }
    Ok(total / FOUR_PI)
}

/// Options for [`near_singular_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Relative tolerance between successive refinement estimates.
    pub rtol: f64,
    /// Maximum subdivision depth.
    pub max_depth: u32,
    /// Rule degree applied on every leaf.
    pub degree: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            max_depth: 16,
            degree: 6,
        }
    }
}

/// Adaptive subdivision for a smooth but sharply peaked integrand over a panel.
///
/// Each triangle is accepted once the four-child estimate agrees with the
/// parent estimate within its share of the global tolerance.
pub fn near_singular_integral<F>(
    panel: &Triangle,
    target: Vec3,
    kernel: F,
    opts: AdaptiveOptions,
) -> Result<Complex64, QuadratureError>
where
    F: Fn(Vec3) -> Complex64,
{
    let area = panel.area();
    let diam = panel.diameter();
    if !(area > 1e-14 * diam * diam) {
        return Err(QuadratureError::DegeneratePanel(area));
    }
    if panel.distance_to(target) <= 1e-12 * diam {
        return Err(QuadratureError::TargetOnPanel);
    }
    adaptive_triangle(panel, &kernel, opts)
}

/// Adaptive subdivision of a smooth integrand (no target checks).
pub fn adaptive_integral<F>(
    panel: &Triangle,
    kernel: F,
    opts: AdaptiveOptions,
) -> Result<Complex64, QuadratureError>
where
    F: Fn(Vec3) -> Complex64,
{
    adaptive_triangle(panel, &kernel, opts)
}

fn adaptive_triangle<F>(
    panel: &Triangle,
    kernel: &F,
    opts: AdaptiveOptions,
) -> Result<Complex64, QuadratureError>
where
    F: Fn(Vec3) -> Complex64,
{
    let r = rule(opts.degree)?;
    let coarse = r.integrate(panel, kernel);
    let children = panel.subdivide();
    let child_vals: Vec<Complex64> = children.iter().map(|c| r.integrate(c, kernel)).collect();
    let fine: Complex64 = child_vals.iter().sum();
    let magnitude: f64 = child_vals.iter().map(|v| v.norm()).sum::<f64>().max(fine.norm());
    if magnitude == 0.0 {
        return Ok(fine);
    }
    let tol = opts.rtol * magnitude;
    if (fine - coarse).norm() <= tol {
        return Ok(fine);
    }
    let mut worst = 0.0f64;
    let mut total = Complex64::new(0.0, 0.0);
    for (c, v) in children.iter().zip(child_vals) {
        total += refine(c, v, kernel, r, 0.5 * tol, 1, opts.max_depth, &mut worst);
    }
    if worst > 0.0 {
        return Err(QuadratureError::BudgetExceeded {
            achieved: worst / magnitude,
        });
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    tri: &Triangle,
    estimate: Complex64,
    kernel: &F,
    r: &QuadratureRule,
    tol: f64,
    depth: u32,
    max_depth: u32,
    worst: &mut f64,
) -> Complex64
where
    F: Fn(Vec3) -> Complex64,
{
    let children = tri.subdivide();
    let vals: [Complex64; 4] = std::array::from_fn(|i| r.integrate(&children[i], kernel));
    let fine: Complex64 = vals.iter().sum();
    let err = (fine - estimate).norm();
    if err <= tol {
        return fine;
    }
    if depth >= max_depth {
        *worst = worst.max(err);
        return fine;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (c, v) in children.iter().zip(vals) {
        acc += refine(c, v, kernel, r, 0.5 * tol, depth + 1, max_depth, worst);
    }
    acc
}
