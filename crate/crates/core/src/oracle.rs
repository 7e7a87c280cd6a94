//! Exact spectra of the boundary operators on the unit sphere.
//!
//! Spherical harmonics of degree `n` are eigenfunctions of `S`, `K*` and `A`
//! on the unit sphere. From the addition theorem
//! `e^{ik|x-y|}/(4 pi |x-y|) = ik sum_n j_n(k r<) h_n(k r>) sum_m Y_nm(x) conj(Y_nm(y))`,
//!
//! ```text
//! S_n  = i k j_n(k) h_n(k)
//! K*_n = (i k^2 / 2) [ j_n'(k) h_n(k) + j_n(k) h_n'(k) ]
//! A_n  = 1/2 + K*_n - i eta S_n
//! ```
//!
//! with `h_n = j_n + i y_n`. The `K*` value is the average of the interior and
//! exterior normal-derivative limits, i.e. the principal value. As `k -> 0`,
//! `S_n -> 1/(2n+1)` and `K*_n -> -1/(2(2n+1))`.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("spherical Bessel argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("degree {0} exceeds the supported maximum of 200")]
    DegreeTooLarge(usize),
    #[error("y_{n}({x}) overflows double precision")]
    Overflow { n: usize, x: f64 },
    #[error("modal truncation n_max = {n_max} is too small: the minimum is not separated from the tail")]
    TailNotDominant { n_max: usize },
}

/// Ratios `j_n / j_{n-1}` for `n = 1..=n_max` from the continued fraction.
fn j_ratios(n_max: usize, x: f64) -> Vec<f64> {
    let start = n_max + 40 + (1.5 * x) as usize + (10.0 * (n_max as f64).sqrt()) as usize;
    let mut r = 0.0;
    let mut out = vec![0.0; n_max + 1];
    for k in (1..=start).rev() {
        r = x / ((2 * k + 1) as f64 - x * r);
        if k <= n_max {
            out[k] = r;
        }
    }
    out
}

/// `j_0..=j_{n_max}` by downward recurrence normalized with
/// `sum (2n+1) j_n^2 = 1`, which has no trouble at zeros of `j_0`.
fn j_values(n_max: usize, x: f64) -> Vec<f64> {
    let start = n_max + 40 + (1.5 * x) as usize + (10.0 * (n_max as f64).sqrt()) as usize;
    let mut f = vec![0.0f64; start + 2];
    f[start + 1] = 0.0;
    f[start] = 1e-300;
    for k in (1..=start).rev() {
        f[k - 1] = (2 * k + 1) as f64 / x * f[k] - f[k + 1];
        if f[k - 1].abs() > 1e250 {
            for v in f.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
        }
    }
    let big = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sum: f64 = f
        .iter()
        .enumerate()
        .map(|(k, v)| (2 * k + 1) as f64 * (v / big) * (v / big))
        .sum();
    let mut scale = 1.0 / (big * sum.sqrt());
    // Fix the overall sign from whichever of j_0, j_1 is better conditioned.
    let j0 = x.sin() / x;
    let j1 = x.sin() / (x * x) - x.cos() / x;
    let sign_ref = if j0.abs() > j1.abs() { j0 * f[0] } else { j1 * f[1] };
    if sign_ref < 0.0 {
        scale = -scale;
    }
    f.truncate(n_max + 1);
    f.iter().map(|v| v * scale).collect()
}

fn y_values(n_max: usize, x: f64) -> Vec<f64> {
    let mut y = vec![0.0; n_max + 1];
    y[0] = -x.cos() / x;
    if n_max >= 1 {
        y[1] = -x.cos() / (x * x) - x.sin() / x;
    }
    for n in 2..=n_max {
        y[n] = (2 * n - 1) as f64 / x * y[n - 1] - y[n - 2];
    }
    y
}

/// Spherical Bessel functions `(j_n(x), y_n(x))`.
pub fn sph_bessel(n: usize, x: f64) -> Result<(f64, f64), OracleError> {
    if !(x > 0.0) {
        return Err(OracleError::NonPositiveArgument(x));
    }
    if n > 200 {
        return Err(OracleError::DegreeTooLarge(n));
    }
    let y = y_values(n, x)[n];
    if !y.is_finite() {
        return Err(OracleError::Overflow { n, x });
    }
    Ok((j_values(n, x)[n], y))
}

/// Derivatives `(j_n'(x), y_n'(x))`.
pub fn sph_bessel_derivative(n: usize, x: f64) -> Result<(f64, f64), OracleError> {
    let (j, y) = sph_bessel(n, x)?;
    let (jm, ym) = if n == 0 {
        let (j1, y1) = sph_bessel(1, x)?;
        return Ok((-j1, -y1));
    } else {
        sph_bessel(n - 1, x)?
    };
    let f = (n + 1) as f64 / x;
    Ok((jm - f * j, ym - f * y))
}

/// Per-degree products `j_n^2`, `j_n y_n`, `j_n j_n'` and `j_n' y_n + j_n y_n'`,
/// continued by ratios where `y_n` would overflow.
fn bessel_products(n_max: usize, x: f64) -> Vec<[f64; 4]> {
    let j = j_values(n_max, x);
    let y = y_values(n_max, x);
    let rho = j_ratios(n_max, x);
    let mut out: Vec<[f64; 4]> = Vec::with_capacity(n_max + 1);
    let mut sigma_prev = 0.0;
    for n in 0..=n_max {
        let direct = y[n].abs() < 1e150 && (n == 0 || y[n - 1].abs() < 1e150);
        if direct {
            let (jd, yd) = if n == 0 {
                (-j.get(1).copied().unwrap_or_else(|| j_values(1, x)[1]), -y_values(1, x)[1])
            } else {
                let f = (n + 1) as f64 / x;
                (j[n - 1] - f * j[n], y[n - 1] - f * y[n])
            };
            out.push([j[n] * j[n], j[n] * y[n], j[n] * jd, jd * y[n] + j[n] * yd]);
            if n >= 1 {
                sigma_prev = y[n] / y[n - 1];
            }
        } else {
            // Evanescent tail: n >> x, all ratios positive and well defined.
            let sigma = (2 * n - 1) as f64 / x - 1.0 / sigma_prev;
            sigma_prev = sigma;
            let [jj_prev, jy_prev, _, _] = out[n - 1];
            let r = rho[n];
            let jj = jj_prev * r * r;
            let jy = jy_prev * r * sigma;
            let f = (n + 1) as f64 / x;
            let jjd = jj_prev * r - f * jj;
            let cross = jy_prev * (sigma + r) - 2.0 * f * jy;
            out.push([jj, jy, jjd, cross]);
        }
    }
    out
}

/// Eigenvalues of `S`, `K*` and `A` on the unit sphere, indexed by degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalSpectrum {
    pub n_max: usize,
    pub kappa: f64,
    pub eta: f64,
    pub s_eigs: Vec<C64>,
    pub k_eigs: Vec<C64>,
    pub a_eigs: Vec<C64>,
}

impl ModalSpectrum {
    /// Index and modulus of the smallest `|a_n|`.
    pub fn min_a(&self) -> (usize, f64) {
        self.a_eigs
            .iter()
            .enumerate()
            .map(|(n, a)| (n, a.norm()))
            .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc })
    }
}

/// Modal eigenvalues for degrees `0..=n_max`.
pub fn modal_spectrum(kappa: f64, eta: f64, n_max: usize) -> ModalSpectrum {
    assert!(kappa > 0.0, "kappa must be positive");
    let products = bessel_products(n_max, kappa);
    let i = C64::new(0.0, 1.0);
    let mut s_eigs = Vec::with_capacity(n_max + 1);
    let mut k_eigs = Vec::with_capacity(n_max + 1);
    let mut a_eigs = Vec::with_capacity(n_max + 1);
    for [jj, jy, jjd, cross] in products {
        // j h = jj + i jy ; j'h + j h' = 2 j j' + i (j'y + j y')
        let s = i * kappa * C64::new(jj, jy);
        let k = i * (0.5 * kappa * kappa) * C64::new(2.0 * jjd, cross);
        s_eigs.push(s);
        k_eigs.push(k);
        a_eigs.push(0.5 + k - i * eta * s);
    }
    ModalSpectrum {
        n_max,
        kappa,
        eta,
        s_eigs,
        k_eigs,
        a_eigs,
    }
}

/// Smallest truncation for which the modal minimum is resolved.
///
/// For degrees beyond `kappa`, `|a_n|` approaches 1/2 and its smallest value
/// sits near `n = 2 eta^2`, so the truncation has to reach past that point.
pub fn default_n_max(kappa: f64, eta: f64) -> usize {
    let tail = (2.0 * eta * eta).ceil() as usize + 20;
    tail.max(kappa.ceil() as usize + 30).max(60)
}

/// `1 / min_n |a_n|`, the exact resolvent norm on the unit sphere.
///
/// Requires `|a_n|` to be strictly increasing over the last ten degrees, so
/// that the minimum lies inside the truncation.
pub fn sphere_resolvent_norm(kappa: f64, eta: f64, n_max: usize) -> Result<f64, OracleError> {
    let spec = modal_spectrum(kappa, eta, n_max);
    if n_max < 10 {
        return Err(OracleError::TailNotDominant { n_max });
    }
    let tail = &spec.a_eigs[n_max - 10..=n_max];
    if !tail.windows(2).all(|w| w[1].norm() > w[0].norm()) {
        return Err(OracleError::TailNotDominant { n_max });
    }
    Ok(1.0 / spec.min_a().1)
}

/// Legendre polynomial `P_n(t)`.
pub fn legendre(n: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}
