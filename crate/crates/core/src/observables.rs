//! Scattered-field observables: the retarded single-layer field and its time
//! derivatives, local energy on a volume grid, and power-law decay fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dod::{DodError, RetardedTarget};
use crate::geometry::{SurfaceMesh, Vec3};
use crate::resolvent::linear_fit;
use crate::synthesis::{DensityHistory, SynthesisError};

/// Relative noise floor below which samples are ignored by [`decay_fit`].
pub const NOISE_FLOOR: f64 = 1e-10;
/// Minimum number of usable samples for a decay fit.
pub const MIN_FIT_SAMPLES: usize = 8;

#[derive(Debug, Error)]
pub enum ObservablesError {
    #[error("point ({x}, {y}, {z}) is not outside the obstacle")]
    NotExterior { x: f64, y: f64, z: f64 },
    #[error("time-derivative order must be 1 or 2, got {0}")]
    BadOrder(usize),
    #[error("region radius {radius} does not enclose the obstacle (max radius {max_radius})")]
    RadiusTooSmall { radius: f64, max_radius: f64 },
    #[error("grid spacing must be positive and below the region radius")]
    BadSpacing,
    #[error("region grid is empty")]
    EmptyRegion,
    #[error("only {found} usable samples after the fit start, need {needed}")]
    InsufficientSamples { found: usize, needed: usize },
    #[error("times and norms differ in length ({times} vs {norms})")]
    LengthMismatch { times: usize, norms: usize },
    #[error(transparent)]
    Dod(#[from] DodError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// Uniform grid over `D = exterior of the obstacle intersected with |r| < R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRegion {
    pub radius: f64,
    pub h_vol: f64,
    /// Points closer than this to the surface are masked out.
    pub clearance: f64,
    /// Grid points per axis; axis coordinates are `-half * h + i * h`.
    pub n_axis: usize,
    pub points: Vec<Vec3>,
    /// Point index for each grid cell, `None` where masked.
    index: Vec<Option<u32>>,
    ijk: Vec<[usize; 3]>,
    /// Largest distance from a grid point to a mesh vertex.
    pub r_max: f64,
}

impl VolumeRegion {
    /// Grid with spacing `h_vol` inside the ball of radius `radius`, keeping
    /// points outside the obstacle (by winding number) and at least
    /// `h_vol / 2` away from the surface.
    pub fn new(mesh: &SurfaceMesh, radius: f64, h_vol: f64) -> Result<Self, ObservablesError> {
        Self::with_clearance(mesh, radius, h_vol, 0.5 * h_vol)
    }

    pub fn with_clearance(
        mesh: &SurfaceMesh,
        radius: f64,
        h_vol: f64,
        clearance: f64,
    ) -> Result<Self, ObservablesError> {
        let max_radius = mesh.max_radius();
        if !(radius > max_radius) {
            return Err(ObservablesError::RadiusTooSmall { radius, max_radius });
        }
        if !(h_vol > 0.0 && h_vol < radius) || clearance < 0.0 {
            return Err(ObservablesError::BadSpacing);
        }
        let half = (radius / h_vol).floor() as usize;
        let n_axis = 2 * half + 1;
        let coord = |i: usize| (i as f64 - half as f64) * h_vol;
        let cells: Vec<[usize; 3]> = (0..n_axis)
            .flat_map(|i| (0..n_axis).flat_map(move |j| (0..n_axis).map(move |k| [i, j, k])))
            .collect();
        let keep: Vec<bool> = cells
            .par_iter()
            .map(|&[i, j, k]| {
                let p = Vec3::new(coord(i), coord(j), coord(k));
                p.norm() < radius && !mesh.contains(p) && mesh.distance_to_surface(p) >= clearance.max(f64::MIN_POSITIVE)
            })
            .collect();
        let mut index = vec![None; cells.len()];
        let mut points = Vec::new();
        let mut ijk = Vec::new();
        for (c, (&cell, &k)) in cells.iter().zip(&keep).enumerate() {
            if k {
                index[c] = Some(points.len() as u32);
                points.push(Vec3::new(coord(cell[0]), coord(cell[1]), coord(cell[2])));
                ijk.push(cell);
            }
        }
        if points.is_empty() {
            return Err(ObservablesError::EmptyRegion);
        }
        let r_max = points
            .iter()
            .flat_map(|p| mesh.vertices().iter().map(move |v| (*p - *v).norm()))
            .fold(0.0, f64::max);
        Ok(Self {
            radius,
            h_vol,
            clearance,
            n_axis,
            points,
            index,
            ijk,
            r_max,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn neighbor(&self, point: usize, axis: usize, step: isize) -> Option<usize> {
        let mut c = self.ijk[point];
        let v = c[axis] as isize + step;
        if v < 0 || v >= self.n_axis as isize {
            return None;
        }
        c[axis] = v as usize;
        self.index[(c[0] * self.n_axis + c[1]) * self.n_axis + c[2]].map(|i| i as usize)
    }

    /// Squared gradient of grid values `u` at `point`: central differences
    /// where both neighbours exist, one-sided next to the mask boundary, and
    /// zero along an axis with no neighbour.
    fn grad_sq(&self, u: &[f64], point: usize) -> f64 {
        let h = self.h_vol;
        (0..3)
            .map(|axis| {
                let d = match (self.neighbor(point, axis, -1), self.neighbor(point, axis, 1)) {
                    (Some(a), Some(b)) => (u[b] - u[a]) / (2.0 * h),
                    (None, Some(b)) => (u[b] - u[point]) / h,
                    (Some(a), None) => (u[point] - u[a]) / h,
                    (None, None) => 0.0,
                };
                d * d
            })
            .sum()
    }
}

fn check_exterior(mesh: &SurfaceMesh, r: Vec3) -> Result<(), ObservablesError> {
    if mesh.contains(r) || mesh.distance_to_surface(r) == 0.0 {
        return Err(ObservablesError::NotExterior { x: r.x, y: r.y, z: r.z });
    }
    Ok(())
}

/// Scattered field `u(r, t)`: the retarded single layer of `history`.
pub fn field_u(
    mesh: &SurfaceMesh,
    history: &DensityHistory,
    c: f64,
    r: Vec3,
    t: f64,
) -> Result<f64, ObservablesError> {
    check_exterior(mesh, r)?;
    Ok(crate::dod::retarded_single_layer(mesh, history, c, r, t)?)
}

/// `d^p u / dt^p (r, t)` for `p` in `{1, 2}`, from finite-difference time
/// derivatives of the stored density.
pub fn field_u_time_derivative(
    mesh: &SurfaceMesh,
    history: &DensityHistory,
    c: f64,
    r: Vec3,
    t: f64,
    p: usize,
) -> Result<f64, ObservablesError> {
    if !(1..=2).contains(&p) {
        return Err(ObservablesError::BadOrder(p));
    }
    check_exterior(mesh, r)?;
    let d = history.time_derivative(p)?;
    Ok(crate::dod::retarded_single_layer(mesh, &d, c, r, t)?)
}

/// Field values `[point][time]` of `history` over the region grid.
fn region_values(
    mesh: &SurfaceMesh,
    histories: &[&DensityHistory],
    c: f64,
    region: &VolumeRegion,
    times: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>, ObservablesError> {
    let per_point: Result<Vec<Vec<Vec<f64>>>, DodError> = region
        .points
        .par_iter()
        .map(|&r| {
            let target = RetardedTarget::new(mesh, r, c);
            histories
                .iter()
                .map(|h| times.iter().map(|&t| target.eval(h, t)).collect())
                .collect()
        })
        .collect();
    Ok(per_point?)
}

/// `E(u, D, t) = sum (|grad u|^2 + |u_t|^2) h^3` at each of `times`.
pub fn local_energy_series(
    mesh: &SurfaceMesh,
    history: &DensityHistory,
    c: f64,
    region: &VolumeRegion,
    times: &[f64],
) -> Result<Vec<f64>, ObservablesError> {
    if region.is_empty() {
        return Err(ObservablesError::EmptyRegion);
    }
    let dt = history.time_derivative(1)?;
    let vals = region_values(mesh, &[history, &dt], c, region, times)?;
    let h3 = region.h_vol.powi(3);
    Ok((0..times.len())
        .map(|ti| {
            let u: Vec<f64> = vals.iter().map(|v| v[0][ti]).collect();
            (0..region.len())
                .map(|i| region.grad_sq(&u, i) + vals[i][1][ti].powi(2))
                .sum::<f64>()
                * h3
        })
        .collect())
}

pub fn local_energy(
    mesh: &SurfaceMesh,
    history: &DensityHistory,
    c: f64,
    region: &VolumeRegion,
    t: f64,
) -> Result<f64, ObservablesError> {
    Ok(local_energy_series(mesh, history, c, region, &[t])?[0])
}

/// `||d^p u / dt^p||_{L^2(D)}` at each of `times` (`p = 0` gives `u`).
pub fn field_norm_series(
    mesh: &SurfaceMesh,
    history: &DensityHistory,
    c: f64,
    region: &VolumeRegion,
    times: &[f64],
    p: usize,
) -> Result<Vec<f64>, ObservablesError> {
    if p > 2 {
        return Err(ObservablesError::BadOrder(p));
    }
    let d = history.time_derivative(p)?;
    let vals = region_values(mesh, &[&d], c, region, times)?;
    let h3 = region.h_vol.powi(3);
    Ok((0..times.len())
        .map(|ti| (vals.iter().map(|v| v[0][ti].powi(2)).sum::<f64>() * h3).sqrt())
        .collect())
}

/// Which quantity a decay series measures; fixes the slope-to-exponent map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayQuantity {
    /// Density or field norms: `slope = 1/2 - n`.
    Norm,
    /// Local energy: `slope = 1 - 2n`.
    Energy,
}

impl DecayQuantity {
    pub fn exponent(self, slope: f64) -> f64 {
        match self {
            DecayQuantity::Norm => 0.5 - slope,
            DecayQuantity::Energy => (1.0 - slope) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Samples used by the fit.
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub quantity: DecayQuantity,
    pub t0: f64,
    pub offset: f64,
    pub fitted_n: f64,
    /// Slope of `log(norm)` against `log(t - t0 - offset)`.
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    /// Fit range in absolute time.
    pub window: (f64, f64),
}

/// Default clock offset `r_max / c`.
pub fn default_offset(r_max: f64, c: f64) -> f64 {
    r_max / c
}

/// Log-log decay fit over samples with `t > t0 + offset` and norm above
/// [`NOISE_FLOOR`] times the peak of `norms`.
pub fn decay_fit(
    times: &[f64],
    norms: &[f64],
    t0: f64,
    offset: f64,
    quantity: DecayQuantity,
) -> Result<DecayReport, ObservablesError> {
    decay_fit_window(times, norms, t0, offset, quantity, (f64::NEG_INFINITY, f64::INFINITY), NOISE_FLOOR)
}

/// As [`decay_fit`], restricted to `window` (absolute times, inclusive) and
/// with an explicit relative noise floor.
pub fn decay_fit_window(
    times: &[f64],
    norms: &[f64],
    t0: f64,
    offset: f64,
    quantity: DecayQuantity,
    window: (f64, f64),
    floor: f64,
) -> Result<DecayReport, ObservablesError> {
    if times.len() != norms.len() {
        return Err(ObservablesError::LengthMismatch {
            times: times.len(),
            norms: norms.len(),
        });
    }
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let start = t0 + offset;
    let (ts, ns): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(norms)
        .filter(|(t, n)| **t > start && **t >= window.0 && **t <= window.1 && **n > floor * peak && **n > 0.0)
        .map(|(t, n)| (*t, *n))
        .unzip();
    if ts.len() < MIN_FIT_SAMPLES {
        return Err(ObservablesError::InsufficientSamples {
            found: ts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let pts: Vec<(f64, f64)> = ts.iter().zip(&ns).map(|(t, n)| ((t - start).ln(), n.ln())).collect();
    let (slope, intercept, residual) = linear_fit(&pts);
    Ok(DecayReport {
        window: (ts[0], ts[ts.len() - 1]),
        times: ts,
        norms: ns,
        quantity,
        t0,
        offset,
        fitted_n: quantity.exponent(slope),
        slope,
        intercept,
        residual,
    })
}

/// Fits over windows `[left, right_k]` sharing a left end, in the given order.
pub fn nested_decay_fits(
    times: &[f64],
    norms: &[f64],
    t0: f64,
    offset: f64,
    quantity: DecayQuantity,
    left: f64,
    rights: &[f64],
    floor: f64,
) -> Result<Vec<DecayReport>, ObservablesError> {
    rights
        .iter()
        .map(|&r| decay_fit_window(times, norms, t0, offset, quantity, (left, r), floor))
        .collect()
}

/// Median of the norms over the last `fraction` of the samples, relative to
/// the peak: a measured floor of the synthesis noise.
pub fn tail_floor(norms: &[f64], fraction: f64) -> f64 {
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    let n = ((norms.len() as f64 * fraction).ceil() as usize).clamp(1, norms.len().max(1));
    let mut tail: Vec<f64> = norms[norms.len() - n..].to_vec();
    tail.sort_by(f64::total_cmp);
    if peak > 0.0 {
        tail[tail.len() / 2] / peak
    } else {
        0.0
    }
}
