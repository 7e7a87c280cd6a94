//! Domain-of-dependence tools: observation intervals, windowed splits of a
//! density history, retarded single-layer potentials, the `h_T` field and its
//! compact-support check, and interval Sobolev-Bochner norms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{t_star, SurfaceMesh, Triangle, Vec3};
use crate::incident::{IncidentPulse, EPS_TAIL_MAX};
use crate::quadrature;
use crate::synthesis::{window_pm, DensityHistory, SynthesisError};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Largest time-derivative order accepted by [`bochner_norm`].
pub const MAX_BOCHNER_ORDER: usize = 6;

#[derive(Debug, Error)]
pub enum DodError {
    #[error("interval [{lo}, {hi}] is not inside the time grid [{t_start}, {t_end}]")]
    IntervalOutsideGrid { lo: f64, hi: f64, t_start: f64, t_end: f64 },
    #[error("retarded time {t} is beyond the end of the history ({t_end})")]
    BeyondGrid { t: f64, t_end: f64 },
    #[error("illumination lasts until {illumination_end:.4}, after the interval start {interval_start:.4}")]
    IlluminationOverlap { illumination_end: f64, interval_start: f64 },
    #[error("history has {got} panels, mesh has {expected}")]
    PanelMismatch { expected: usize, got: usize },
    #[error("interval holds {got} samples, the derivative stencil needs {needed}")]
    TooShort { got: usize, needed: usize },
    #[error("derivative order {0} exceeds {MAX_BOCHNER_ORDER}")]
    OrderTooLarge(usize),
    #[error("tau and the diameter time must be positive")]
    BadParameters,
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// `I_T = [T - T_* - 2 tau, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoDInterval {
    pub t_obs: f64,
    pub t_star: f64,
    pub tau: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DoDInterval {
    pub fn new(t_obs: f64, t_star: f64, tau: f64) -> Result<Self, DodError> {
        if !(tau > 0.0 && t_star > 0.0 && t_obs.is_finite()) {
            return Err(DodError::BadParameters);
        }
        Ok(Self {
            t_obs,
            t_star,
            tau,
            lower: t_obs - t_star - 2.0 * tau,
            upper: t_obs,
        })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Open-interval membership.
    pub fn contains_open(&self, t: f64) -> bool {
        t > self.lower && t < self.upper
    }
}

/// `psi = psi_minus + psi_plus`, and `psi_star` supported inside `I_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDensities {
    pub interval: DoDInterval,
    pub psi_minus: DensityHistory,
    pub psi_plus: DensityHistory,
    pub psi_star: DensityHistory,
}

fn check_inside(h: &DensityHistory, lo: f64, hi: f64) -> Result<(), DodError> {
    let g = &h.grid;
    let slack = 1e-9 * g.dt;
    if lo < g.t_start - slack || hi > g.t_end + slack {
        return Err(DodError::IntervalOutsideGrid {
            lo,
            hi,
            t_start: g.t_start,
            t_end: g.t_end,
        });
    }
    Ok(())
}

/// Windowed split of a density history about the observation time `t_obs`.
pub fn split_density(history: &DensityHistory, t_obs: f64, tau: f64, t_star: f64) -> Result<SplitDensities, DodError> {
    let interval = DoDInterval::new(t_obs, t_star, tau)?;
    check_inside(history, interval.lower, interval.upper)?;
    let psi_minus = history.windowed(|t| window_pm(t, t_obs, tau).0);
    let psi_plus = history.windowed(|t| window_pm(t, t_obs, tau).1);
    let psi_star =
        history.windowed(|t| window_pm(t, t_obs - t_star - tau, tau).1 * window_pm(t, t_obs, tau).0);
    Ok(SplitDensities {
        interval,
        psi_minus,
        psi_plus,
        psi_star,
    })
}

/// Split of the `p`-th time derivative of `history`.
pub fn split_density_derivative(
    history: &DensityHistory,
    p: usize,
    t_obs: f64,
    tau: f64,
    t_star: f64,
) -> Result<SplitDensities, DodError> {
    split_density(&history.time_derivative(p)?, t_obs, tau, t_star)
}

/// Cubic Lagrange interpolation of uniform samples at `t`; samples before
/// the grid start count as zero (the density starts at rest).
#[inline]
pub(crate) fn interp_cubic(series: &[f64], t_start: f64, dt: f64, t: f64) -> Result<f64, DodError> {
    let m = series.len();
    let x = (t - t_start) / dt;
    let last = (m - 1) as f64;
    if x > last + 1e-9 {
        return Err(DodError::BeyondGrid {
            t,
            t_end: t_start + last * dt,
        });
    }
    if x < -2.0 {
        return Ok(0.0);
    }
    let i0 = (x.floor() as i64 - 1).min(m as i64 - 4);
    let s = x - i0 as f64;
    let at = |i: i64| if i < 0 { 0.0 } else { series[i as usize] };
    let (f0, f1, f2, f3) = (at(i0), at(i0 + 1), at(i0 + 2), at(i0 + 3));
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    Ok(-f0 * b * c * d / 6.0 + f1 * a * c * d / 2.0 - f2 * a * b * d / 2.0 + f3 * a * b * c / 6.0)
}

/// Retarded single-layer weights for one target: each entry is
/// `(panel, delay, weight)` with `S psi(r, t) = sum weight psi(panel, t - delay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetardedTarget {
    pub point: Vec3,
    terms: Vec<(usize, f64, f64)>,
}

fn near_nodes(tri: &Triangle, r: Vec3, depth: u32, out: &mut Vec<(Vec3, f64)>) {
    let dist = tri.distance_to(r);
    if depth == 0 || tri.diameter() <= 0.5 * dist {
        let rule = quadrature::rule(6).expect("degree-6 rule");
        let jac = 2.0 * tri.area();
        for (l, w) in rule.nodes().iter().zip(rule.weights()) {
            out.push((tri.point(*l), w * jac));
        }
        return;
    }
    for child in tri.subdivide() {
        near_nodes(&child, r, depth - 1, out);
    }
}

impl RetardedTarget {
    /// Centroid rule for panels at least one panel diameter away, adaptive
    /// sub-panel quadrature closer in.
    pub fn new(mesh: &SurfaceMesh, r: Vec3, c: f64) -> Self {
        let mut terms = Vec::with_capacity(mesh.n_panels());
        let mut nodes = Vec::new();
        for k in 0..mesh.n_panels() {
            let tri = mesh.triangle(k);
            let centroid = mesh.centroids()[k];
            let d = (r - centroid).norm();
            if tri.distance_to(r) >= tri.diameter() {
                terms.push((k, d / c, mesh.areas()[k] / (FOUR_PI * d)));
            } else {
                nodes.clear();
                near_nodes(&tri, r, 8, &mut nodes);
                for &(y, w) in &nodes {
                    let dy = (r - y).norm();
                    if dy > 0.0 {
                        terms.push((k, dy / c, w / (FOUR_PI * dy)));
                    }
                }
            }
        }
        Self { point: r, terms }
    }

    pub fn max_delay(&self) -> f64 {
        self.terms.iter().fold(0.0, |a, t| a.max(t.1))
    }

    pub fn min_delay(&self) -> f64 {
        self.terms.iter().fold(f64::INFINITY, |a, t| a.min(t.1))
    }

    pub fn eval(&self, history: &DensityHistory, t: f64) -> Result<f64, DodError> {
        let g = &history.grid;
        let mut acc = 0.0;
        for &(k, delay, w) in &self.terms {
            acc += w * interp_cubic(history.series(k), g.t_start, g.dt, t - delay)?;
        }
        Ok(acc)
    }
}

fn check_panels(mesh: &SurfaceMesh, history: &DensityHistory) -> Result<(), DodError> {
    if history.n_panels() != mesh.n_panels() {
        return Err(DodError::PanelMismatch {
            expected: mesh.n_panels(),
            got: history.n_panels(),
        });
    }
    Ok(())
}

/// Retarded single-layer potential of `history` at `(r, t)` with wavespeed `c`.
pub fn retarded_single_layer(
    mesh: &SurfaceMesh,
    history: &DensityHistory,
    c: f64,
    r: Vec3,
    t: f64,
) -> Result<f64, DodError> {
    check_panels(mesh, history)?;
    RetardedTarget::new(mesh, r, c).eval(history, t)
}

/// Samples of `h_T = b - S psi_minus`, indexed `[target][time]`.
pub fn compute_h_t(
    mesh: &SurfaceMesh,
    pulse: &IncidentPulse,
    split: &SplitDensities,
    targets: &[Vec3],
    times: &[f64],
) -> Result<Vec<Vec<f64>>, DodError> {
    check_panels(mesh, &split.psi_minus)?;
    targets
        .par_iter()
        .map(|&r| {
            let tgt = RetardedTarget::new(mesh, r, pulse.c);
            times
                .iter()
                .map(|&t| Ok(pulse.evaluate_b(r, t) - tgt.eval(&split.psi_minus, t)?))
                .collect()
        })
        .collect()
}

/// Maxima of the three residuals, relative to the peak of `|b|` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DodMaxima {
    /// `max |h_T + u_*|` for `t >= T - tau`.
    pub identity: f64,
    /// `max |h_T|` for `t < T - tau`.
    pub pre_interval: f64,
    /// `max |h_T|` for `t > T + T_*`.
    pub post_support: f64,
}

impl DodMaxima {
    pub fn worst(&self) -> f64 {
        self.identity.max(self.pre_interval).max(self.post_support)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DodVerdict {
    pub maxima: DodMaxima,
    pub tol: f64,
    pub pass: bool,
    /// Normalization: peak of `|b|` on the boundary.
    pub peak_b: f64,
    pub interval: DoDInterval,
    pub illumination_end: f64,
    pub eps_tail: f64,
    pub n_probes: usize,
    pub n_times: usize,
}

/// Checks `h_T = 0` before `T - tau`, `h_T = -u_*` afterwards and
/// `h_T = 0` after `T + T_*` at the probes, over every history sample time.
pub fn verify_h_identity(
    mesh: &SurfaceMesh,
    pulse: &IncidentPulse,
    history: &DensityHistory,
    t_obs: f64,
    tau: f64,
    probes: &[Vec3],
    tol_dod: f64,
) -> Result<DodVerdict, DodError> {
    check_panels(mesh, history)?;
    let ts = t_star(mesh, pulse.c);
    let interval = DoDInterval::new(t_obs, ts, tau)?;
    let illumination_end = pulse.illumination_end(mesh, EPS_TAIL_MAX);
    if pulse.amplitude != 0.0 && illumination_end > interval.lower {
        return Err(DodError::IlluminationOverlap {
            illumination_end,
            interval_start: interval.lower,
        });
    }
    let split = split_density(history, t_obs, tau, ts)?;
    let times = history.grid.times();
    let per_probe: Vec<DodMaxima> = probes
        .par_iter()
        .map(|&r| {
            let tgt = RetardedTarget::new(mesh, r, pulse.c);
            let mut m = DodMaxima {
                identity: 0.0,
                pre_interval: 0.0,
                post_support: 0.0,
            };
            for &t in &times {
                let h = pulse.evaluate_b(r, t) - tgt.eval(&split.psi_minus, t)?;
                if t < t_obs - tau {
                    m.pre_interval = m.pre_interval.max(h.abs());
                } else {
                    let u_star = tgt.eval(&split.psi_star, t)?;
                    m.identity = m.identity.max((h + u_star).abs());
                }
                if t > t_obs + ts {
                    m.post_support = m.post_support.max(h.abs());
                }
            }
            Ok(m)
        })
        .collect::<Result<_, DodError>>()?;
    let peak_b = pulse.amplitude.abs();
    let scale = if peak_b > 0.0 { 1.0 / peak_b } else { 1.0 };
    let mut maxima = DodMaxima {
        identity: 0.0,
        pre_interval: 0.0,
        post_support: 0.0,
    };
    for m in per_probe {
        maxima.identity = maxima.identity.max(m.identity * scale);
        maxima.pre_interval = maxima.pre_interval.max(m.pre_interval * scale);
        maxima.post_support = maxima.post_support.max(m.post_support * scale);
    }
    Ok(DodVerdict {
        pass: maxima.worst() <= tol_dod,
        maxima,
        tol: tol_dod,
        peak_b,
        interval,
        illumination_end,
        eps_tail: pulse.eps_tail(mesh),
        n_probes: probes.len(),
        n_times: times.len(),
    })
}

/// Trapezoid rule for `int ||f(., t)||^2 dt` over grid samples in `range`.
fn trapezoid_sq(h: &DensityHistory, range: std::ops::Range<usize>) -> f64 {
    let norms: Vec<f64> = range.map(|k| h.norm_at(k).powi(2)).collect();
    if norms.len() < 2 {
        return 0.0;
    }
    let inner: f64 = norms.iter().sum::<f64>() - 0.5 * (norms[0] + norms[norms.len() - 1]);
    inner * h.grid.dt
}

/// `[int_I ||psi||^2 dt + int_I ||d^p psi||^2 dt]^{1/2}` over the grid samples
/// in `interval`, with `d^p` by finite differences of order at least four.
pub fn bochner_norm(history: &DensityHistory, interval: (f64, f64), p: usize) -> Result<f64, DodError> {
    if p > MAX_BOCHNER_ORDER {
        return Err(DodError::OrderTooLarge(p));
    }
    let (a, b) = interval;
    check_inside(history, a, b)?;
    let range = history.grid.index_range(a, b);
    let needed = 2 * (p + 4).div_ceil(2) + 1;
    if range.len() < needed {
        return Err(DodError::TooShort {
            got: range.len(),
            needed,
        });
    }
    let base = trapezoid_sq(history, range.clone());
    let deriv = if p == 0 {
        base
    } else {
        trapezoid_sq(&history.time_derivative(p)?, range)
    };
    Ok((base + deriv).sqrt())
}

/// Measured ratios standing in for the constants of the density bounds.
/// `None` marks a ratio whose denominator is below `1e-12` of the peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t0: f64,
    pub p: usize,
    pub q: usize,
    pub interval: DoDInterval,
    /// `||psi||_{H^p([T0, t_end])} / ||psi||_{H^{p+q+1}(I_T0)}`.
    pub hp_ratio: Option<f64>,
    /// `sup_{t > T0} ||psi(., t)|| / ||psi||_{H^{q+2}(I_T0)}`.
    pub sup_ratio: Option<f64>,
    pub hp_numerator: f64,
    pub hp_denominator: f64,
    pub sup_numerator: f64,
    pub sup_denominator: f64,
}

pub fn dod_bound_report(
    history: &DensityHistory,
    t0: f64,
    tau: f64,
    t_star: f64,
    p: usize,
    q: usize,
) -> Result<BoundReport, DodError> {
    let interval = DoDInterval::new(t0, t_star, tau)?;
    let g = history.grid;
    let hp_numerator = bochner_norm(history, (t0, g.t_end), p)?;
    let hp_denominator = bochner_norm(history, (interval.lower, interval.upper), p + q + 1)?;
    let sup_numerator = history
        .grid
        .index_range(t0, g.t_end)
        .filter(|&k| g.time(k) > t0)
        .map(|k| history.norm_at(k))
        .fold(0.0, f64::max);
    let sup_denominator = bochner_norm(history, (interval.lower, interval.upper), q + 2)?;
    let peak = history.norms().into_iter().fold(0.0, f64::max);
    let ratio = |num: f64, den: f64| (den > 1e-12 * peak && den > 0.0).then(|| num / den);
    Ok(BoundReport {
        t0,
        p,
        q,
        interval,
        hp_ratio: ratio(hp_numerator, hp_denominator),
        sup_ratio: ratio(sup_numerator, sup_denominator),
        hp_numerator,
        hp_denominator,
        sup_numerator,
        sup_denominator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_sphere;
    use crate::operators::{assemble_S, KernelParams};
    use crate::synthesis::TimeGrid;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 20.0, 512).unwrap()
    }

    #[test]
    fn interval_shape() {
        let i = DoDInterval::new(10.0, 2.0, 0.5).unwrap();
        assert_eq!((i.lower, i.upper), (7.0, 10.0));
        assert!((i.width() - 3.0).abs() < 1e-15);
        assert!(DoDInterval::new(10.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn split_partitions_and_supports() {
        let g = grid();
        let h = DensityHistory::from_fn(vec![1.0, 0.5, 2.0], g, |j, t| (t * (j as f64 + 1.0)).sin() + 0.3);
        let (t_obs, tau, ts) = (12.0, 0.5, 2.0);
        let s = split_density(&h, t_obs, tau, ts).unwrap();
        for j in 0..3 {
            for k in 0..g.n_samples {
                let t = g.time(k);
                let psi = h.sample(j, k);
                assert!((s.psi_minus.sample(j, k) + s.psi_plus.sample(j, k) - psi).abs() <= 1e-14 * psi.abs().max(1.0));
                if t >= t_obs {
                    assert_eq!(s.psi_plus.sample(j, k), psi);
                    assert_eq!(s.psi_minus.sample(j, k), 0.0);
                }
                if t < t_obs - tau {
                    assert_eq!(s.psi_plus.sample(j, k), 0.0);
                }
                if !s.interval.contains_open(t) {
                    assert_eq!(s.psi_star.sample(j, k), 0.0);
                }
            }
        }
        let z = split_density(&DensityHistory::zeros(vec![1.0], g), t_obs, tau, ts).unwrap();
        assert!(z.psi_star.values().iter().all(|&v| v == 0.0));
        assert!(split_density(&h, 1.0, tau, ts).is_err());
    }

    #[test]
    fn cubic_interpolation() {
        let g = grid();
        let f = |t: f64| 0.5 * t * t * t - t + 2.0;
        let s: Vec<f64> = g.times().iter().map(|&t| f(t)).collect();
        for t in [0.05, 3.3, 19.97, 20.0] {
            assert!((interp_cubic(&s, 0.0, g.dt, t).unwrap() - f(t)).abs() < 1e-9 * f(t).abs());
        }
        assert!(interp_cubic(&s, 0.0, g.dt, 20.1).is_err());
        assert_eq!(interp_cubic(&s, 0.0, g.dt, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_panel_retarded_arithmetic() {
        let mesh = build_sphere(1.0, 0);
        let g = grid();
        let area = mesh.areas()[3];
        let h = DensityHistory::from_fn(mesh.areas().to_vec(), g, |j, t| {
            if j == 3 {
                (-(t - 5.0).powi(2)).exp()
            } else {
                0.0
            }
        });
        let r = mesh.centroids()[3] * 8.0;
        let d = (r - mesh.centroids()[3]).norm();
        let c = 1.3;
        for t in [6.0, 9.0, 11.5] {
            let v = retarded_single_layer(&mesh, &h, c, r, t).unwrap();
            let e = area * (-(t - d / c - 5.0f64).powi(2)).exp() / (FOUR_PI * d);
            assert!((v - e).abs() < 1e-6, "{v} {e}");
        }
        let z = DensityHistory::zeros(mesh.areas().to_vec(), g);
        assert_eq!(retarded_single_layer(&mesh, &z, c, r, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn static_density_matches_laplace_single_layer() {
        let mesh = build_sphere(1.0, 2);
        let g = grid();
        let dens: Vec<f64> = mesh.centroids().iter().map(|r| 1.0 + 0.5 * r.z).collect();
        let h = DensityHistory::from_fn(mesh.areas().to_vec(), g, |j, _| dens[j]);
        let s0 = assemble_S(&mesh, &KernelParams::new(0.0, 1.0, 1.0)).unwrap();
        let x: Vec<_> = dens.iter().map(|&v| crate::Complex64::new(v, 0.0)).collect();
        let y = s0.apply(&x);
        for j in [0, 17, 101] {
            let r = mesh.centroids()[j];
            let v = retarded_single_layer(&mesh, &h, 1.0, r, 15.0).unwrap();
            assert!((v - y[j].re).abs() < 0.01 * y[j].re.abs(), "{v} vs {}", y[j].re);
        }
    }

    #[test]
    fn bochner_norm_closed_forms() {
        let g = TimeGrid::new(0.0, 10.0, 2048).unwrap();
        let a = [0.7, 1.3];
        let w = vec![0.4, 0.9];
        let om = 1.9;
        let h = DensityHistory::from_fn(w.clone(), g, |j, t| a[j] * (om * t).sin());
        let (lo, hi) = (g.time(200), g.time(1600));
        let space: f64 = w.iter().zip(a).map(|(wi, ai)| wi * ai * ai).sum();
        let int_sin2 = |t: f64| t / 2.0 - (2.0 * om * t).sin() / (4.0 * om);
        let int_cos2 = |t: f64| t / 2.0 + (2.0 * om * t).sin() / (4.0 * om);
        let l2 = space * (int_sin2(hi) - int_sin2(lo));
        let d1 = space * om * om * (int_cos2(hi) - int_cos2(lo));
        let exact = (l2 + d1).sqrt();
        let got = bochner_norm(&h, (lo, hi), 1).unwrap();
        assert!((got / exact - 1.0).abs() < 1e-4, "{got} {exact}");
        let p0 = bochner_norm(&h, (lo, hi), 0).unwrap();
        assert!((p0 / (2.0 * l2).sqrt() - 1.0).abs() < 1e-4);
        let z = DensityHistory::zeros(w, g);
        assert_eq!(bochner_norm(&z, (lo, hi), 2).unwrap(), 0.0);
        assert!(matches!(bochner_norm(&h, (lo, lo + 2.0 * g.dt), 2), Err(DodError::TooShort { .. })));
        assert!(bochner_norm(&h, (lo, hi), 7).is_err());
        assert!(bochner_norm(&h, (-1.0, hi), 1).is_err());
    }

    #[test]
    fn zero_history_bound_report_is_undefined() {
        let h = DensityHistory::zeros(vec![1.0; 4], grid());
        let r = dod_bound_report(&h, 10.0, 0.5, 2.0, 1, 1).unwrap();
        assert!(r.hp_ratio.is_none() && r.sup_ratio.is_none());
    }

    #[test]
    fn zero_pulse_passes_and_overlap_is_rejected() {
        let mesh = build_sphere(1.0, 0);
        let g = grid();
        let h = DensityHistory::zeros(mesh.areas().to_vec(), g);
        let zero = IncidentPulse::new(Vec3::new(0.0, 0.0, 1.0), 4.0, 0.5, 4.1, 0.0, 1.0).unwrap();
        let probes = [Vec3::new(0.1, 0.0, 0.2)];
        let v = verify_h_identity(&mesh, &zero, &h, 12.0, 0.5, &probes, 1e-2).unwrap();
        assert!(v.pass && v.maxima.worst() == 0.0);
        let live = IncidentPulse { amplitude: 1.0, ..zero };
        assert!(matches!(
            verify_h_identity(&mesh, &live, &h, 6.0, 0.5, &probes, 1e-2),
            Err(DodError::IlluminationOverlap { .. })
        ));
    }
}
